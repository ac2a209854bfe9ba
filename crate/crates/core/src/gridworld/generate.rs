//! Parameterized generators for the three gridworld families.
//!
//! Size 1 of each family is the reference layout. Larger sizes follow these
//! rules:
//!
//! - **zigzag**: size `k` has `k + 1` pit pairs alternating between the bottom
//!   and top row, three columns apart, so the width is `3k + 5`. The middle
//!   row tiles next to each pair slip towards it.
//! - **slippery_shortcuts**: the 9x6 reference is resampled by nearest
//!   neighbor to `(9 + 3(k-1)) x (6 + 2(k-1))`, which scales the pit blocks
//!   and both slip regions proportionally. Entry stays at the bottom-left
//!   corner, goal on the right border.
//! - **walls**: size `k` stacks `k` wall rows three rows apart, with the gaps
//!   of the additional rows alternating between the right and left border,
//!   each guarded by a pit and a slippery tile. Width grows by 2 per size.
//!
//! Arrow lengths map to [`SlipTiers`]: short arrows use `short`, long
//! arrows `long`.

use std::fmt;
use std::str::FromStr;

use super::{GridworldSpec, MapError, Pos, Tile, TileKind};
use crate::direction::Direction::{self, Down, Left, Right, Up};

pub const MAX_SIZE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Shape {
    Zigzag,
    SlipperyShortcuts,
    Walls,
}

impl Shape {
    pub const ALL: [Shape; 3] = [Self::Zigzag, Self::SlipperyShortcuts, Self::Walls];

    pub fn name(self) -> &'static str {
        match self {
            Self::Zigzag => "zigzag",
            Self::SlipperyShortcuts => "slippery_shortcuts",
            Self::Walls => "walls",
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Shape {
    type Err = MapError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zigzag" => Ok(Self::Zigzag),
            "slippery_shortcuts" | "slippery" => Ok(Self::SlipperyShortcuts),
            "walls" => Ok(Self::Walls),
            other => Err(MapError::UnknownShape(other.to_string())),
        }
    }
}

/// Slip probabilities for short and long arrows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlipTiers {
    pub short: f64,
    pub long: f64,
}

impl Default for SlipTiers {
    fn default() -> Self {
        Self { short: 0.1, long: 0.25 }
    }
}

#[derive(Clone, Copy)]
enum Tier {
    Short,
    Long,
}

impl SlipTiers {
    fn get(self, tier: Tier) -> f64 {
        match tier {
            Tier::Short => self.short,
            Tier::Long => self.long,
        }
    }
}

struct Canvas {
    width: usize,
    height: usize,
    tiles: Vec<Tile>,
    tiers: SlipTiers,
}

impl Canvas {
    fn new(width: usize, height: usize, tiers: SlipTiers) -> Self {
        Self {
            width,
            height,
            tiles: vec![Tile::floor('c'); width * height],
            tiers,
        }
    }

    fn at(&mut self, x: usize, y: usize) -> &mut Tile {
        &mut self.tiles[y * self.width + x]
    }

    fn terrain(&mut self, x: usize, y: usize, terrain: char) {
        self.at(x, y).terrain = terrain;
    }

    fn kind(&mut self, x: usize, y: usize, terrain: char, kind: TileKind) {
        *self.at(x, y) = Tile::new(terrain, kind);
    }

    fn slip(&mut self, x: usize, y: usize, d: Direction, tier: Tier) {
        let p = self.tiers.get(tier);
        let tile = std::mem::replace(self.at(x, y), Tile::floor('c'));
        *self.at(x, y) = tile.with_slip(d, p);
    }

    fn finish(self) -> Result<GridworldSpec, MapError> {
        GridworldSpec::new(self.width, self.height, self.tiles)
    }
}

pub fn generate(shape: Shape, size: usize, tiers: SlipTiers) -> Result<GridworldSpec, MapError> {
    if !(1..=MAX_SIZE).contains(&size) {
        return Err(MapError::SizeOutOfRange(size));
    }
    match shape {
        Shape::Zigzag => zigzag(size, tiers),
        Shape::SlipperyShortcuts => slippery_shortcuts(size, tiers),
        Shape::Walls => walls(size, tiers),
    }
}

fn zigzag(k: usize, tiers: SlipTiers) -> Result<GridworldSpec, MapError> {
    let width = 3 * k + 5;
    let mut c = Canvas::new(width, 3, tiers);
    c.kind(0, 0, 'E', TileKind::Entry);
    for pair in 0..=k {
        let x0 = 2 + 3 * pair;
        let bottom = pair % 2 == 0;
        for x in [x0, x0 + 1] {
            if bottom {
                c.kind(x, 0, 'd', TileKind::Pit);
                c.terrain(x, 1, 'a');
                c.slip(x, 1, Down, Tier::Short);
            } else {
                c.terrain(x, 0, 'e');
                c.terrain(x, 1, 'b');
                c.slip(x, 1, Up, Tier::Short);
                c.kind(x, 2, 'd', TileKind::Pit);
            }
        }
    }
    let last_pair_top = k % 2 == 1;
    c.terrain(width - 1, 0, if last_pair_top { 'e' } else { 'c' });
    c.kind(width - 1, 1, 'G', TileKind::Goal);
    c.finish()
}

/// Terrain of the 9x6 reference layout, top row first.
const SHORTCUT_TERRAIN: [&str; 6] = ["gggceddeg", "ggcceeeeG", "gbcccfffg", "gbccccccg", "gbaaabccc", "Eaddabggg"];
const SHORTCUT_PITS: [(usize, usize); 4] = [(2, 0), (3, 0), (5, 5), (6, 5)];
const SHORTCUT_SLIPS: [(usize, usize, Direction, Tier); 34] = [
    (1, 0, Down, Tier::Long),
    (2, 1, Down, Tier::Long),
    (3, 1, Down, Tier::Long),
    (4, 1, Down, Tier::Long),
    (4, 0, Down, Tier::Long),
    (1, 1, Down, Tier::Short),
    (5, 0, Down, Tier::Short),
    (5, 1, Down, Tier::Short),
    (1, 2, Down, Tier::Short),
    (2, 2, Down, Tier::Short),
    (1, 3, Down, Tier::Short),
    (2, 3, Down, Tier::Short),
    (7, 5, Up, Tier::Long),
    (4, 5, Up, Tier::Long),
    (7, 4, Up, Tier::Long),
    (6, 4, Up, Tier::Long),
    (5, 4, Up, Tier::Long),
    (4, 4, Up, Tier::Long),
    (7, 3, Up, Tier::Short),
    (6, 3, Up, Tier::Short),
    (5, 3, Up, Tier::Short),
    (2, 4, Left, Tier::Short),
    (3, 5, Left, Tier::Short),
    (3, 4, Left, Tier::Short),
    (3, 3, Left, Tier::Short),
    (3, 2, Left, Tier::Short),
    (4, 3, Left, Tier::Short),
    (4, 2, Left, Tier::Short),
    (5, 2, Left, Tier::Short),
    (6, 2, Left, Tier::Short),
    (6, 1, Left, Tier::Short),
    (7, 2, Left, Tier::Short),
    (7, 1, Left, Tier::Short),
    (8, 1, Left, Tier::Short),
];

fn shortcut_template(tiers: SlipTiers) -> Canvas {
    let mut c = Canvas::new(9, 6, tiers);
    for (row, line) in SHORTCUT_TERRAIN.iter().enumerate() {
        let y = 5 - row;
        for (x, t) in line.chars().enumerate() {
            match t {
                'E' => c.kind(x, y, t, TileKind::Entry),
                'G' => c.kind(x, y, t, TileKind::Goal),
                _ => c.terrain(x, y, t),
            }
        }
    }
    for (x, y) in SHORTCUT_PITS {
        c.kind(x, y, 'd', TileKind::Pit);
    }
    for (x, y, d, tier) in SHORTCUT_SLIPS {
        c.slip(x, y, d, tier);
    }
    c
}

fn slippery_shortcuts(k: usize, tiers: SlipTiers) -> Result<GridworldSpec, MapError> {
    let mut template = shortcut_template(tiers);
    if k == 1 {
        return template.finish();
    }
    let (tw, th) = (template.width, template.height);
    let width = tw + 3 * (k - 1);
    let height = th + 2 * (k - 1);
    let mut c = Canvas::new(width, height, tiers);
    for y in 0..height {
        for x in 0..width {
            let src = template.at(x * tw / width, y * th / height).clone();
            *c.at(x, y) = match src.kind {
                TileKind::Entry | TileKind::Goal => Tile::floor('g'),
                _ => src,
            };
        }
    }
    c.kind(0, 0, 'E', TileKind::Entry);
    // Lowest row that samples the reference goal row.
    let goal_y = (4 * height).div_ceil(th);
    c.kind(width - 1, goal_y, 'G', TileKind::Goal);
    c.finish()
}

fn walls(k: usize, tiers: SlipTiers) -> Result<GridworldSpec, MapError> {
    let width = 9 + 2 * (k - 1);
    let height = 5 + 3 * (k - 1);
    let (w, h) = (width, height);
    let mut c = Canvas::new(width, height, tiers);
    for y in 3..height {
        for x in 0..width {
            c.terrain(x, y, 'a');
        }
    }
    c.terrain(0, 2, 'a');

    // Bottom band: pit pair in the lower-left corner.
    c.kind(0, 0, 'd', TileKind::Pit);
    c.kind(1, 0, 'd', TileKind::Pit);
    c.slip(0, 1, Down, Tier::Short);
    c.slip(1, 1, Down, Tier::Long);
    c.slip(2, 1, Down, Tier::Short);
    c.slip(2, 0, Down, Tier::Short);

    // First wall row, goal at its right end.
    for x in [1, 2].into_iter().chain(4..=w - 2) {
        c.kind(x, 2, 'c', TileKind::Wall);
    }
    c.kind(w - 1, 2, 'G', TileKind::Goal);

    for j in 1..k {
        let y = 2 + 3 * j;
        if j % 2 == 1 {
            for x in 0..=w - 3 {
                c.kind(x, y, 'a', TileKind::Wall);
            }
            c.kind(w - 3, y - 1, 'd', TileKind::Pit);
            c.slip(w - 2, y - 1, Left, Tier::Long);
        } else {
            for x in 2..w {
                c.kind(x, y, 'a', TileKind::Wall);
            }
            c.kind(2, y - 1, 'd', TileKind::Pit);
            c.slip(1, y - 1, Right, Tier::Long);
        }
    }

    // Top band: entry in the upper-left, pit in the upper-right corner.
    c.kind(0, h - 1, 'E', TileKind::Entry);
    c.kind(w - 1, h - 1, 'd', TileKind::Pit);
    c.slip(w - 1, h - 2, Up, Tier::Short);
    c.slip(w - 3, h - 2, Up, Tier::Short);
    c.slip(w - 3, h - 1, Up, Tier::Short);
    c.slip(w - 2, h - 1, Up, Tier::Short);
    c.slip(w - 2, h - 2, Up, Tier::Long);
    c.finish()
}

/// Positions reachable from the entry without crossing walls or terminal tiles.
pub fn reachable(spec: &GridworldSpec) -> Vec<Pos> {
    let mut seen = vec![false; spec.width() * spec.height()];
    let mut queue = std::collections::VecDeque::from([spec.entry()]);
    seen[spec.entry().y * spec.width() + spec.entry().x] = true;
    let mut out = Vec::new();
    while let Some(p) = queue.pop_front() {
        out.push(p);
        if spec.tile(p).is_terminal() {
            continue;
        }
        for d in Direction::ALL {
            let n = spec.target(p, d);
            let idx = n.y * spec.width() + n.x;
            if !seen[idx] {
                seen[idx] = true;
                queue.push_back(n);
            }
        }
    }
    out
}
