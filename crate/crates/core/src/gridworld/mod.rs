//! Slippery gridworlds: the concrete environment the agent explores.
//!
//! Coordinates have their origin in the bottom-left corner; `up` increases
//! `y`. Each step costs [`STEP_REWARD`]; entering the goal or a pit adds the
//! terminal reward and ends the episode; entering an intermediate goal adds
//! [`INTERMEDIATE_REWARD`] without ending it.

mod format;
mod generate;

use std::fmt;

use rand::Rng;
use thiserror::Error;

use crate::direction::Direction;
use crate::mdp::{Distribution, Observation, PitFlags, PROB_TOLERANCE};
use crate::text::ParseError;

pub use format::{parse_map, serialize_map};
pub use generate::{generate, reachable, Shape, SlipTiers, MAX_SIZE};

pub const STEP_REWARD: f64 = -0.5;
pub const GOAL_REWARD: f64 = 100.0;
pub const PIT_REWARD: f64 = -100.0;
pub const INTERMEDIATE_REWARD: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("map has no entry tile")]
    MissingEntry,
    #[error("map has no goal tile")]
    MissingGoal,
    #[error("map has more than one {0} tile")]
    Duplicate(&'static str),
    #[error("slip probabilities at {pos} sum to {sum} > 1")]
    InvalidSlipSum { pos: Pos, sum: f64 },
    #[error("slip probability {probability} at {pos} is outside (0, 1]")]
    InvalidSlipProbability { pos: Pos, probability: f64 },
    #[error("wall at {0} has slip entries")]
    SlipOnWall(Pos),
    #[error("terrain `{terrain}` at {pos} is reserved for the {kind} tile")]
    ReservedTerrain { pos: Pos, terrain: char, kind: &'static str },
    #[error("invalid terrain symbol `{terrain}` at {pos}")]
    InvalidTerrain { pos: Pos, terrain: char },
    #[error("grid is {width}x{height} but has {tiles} tiles")]
    Dimensions { width: usize, height: usize, tiles: usize },
    #[error("unknown gridworld shape `{0}`")]
    UnknownShape(String),
    #[error("size {0} is outside 1..={MAX_SIZE}")]
    SizeOutOfRange(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pos {
    pub x: usize,
    pub y: usize,
}

impl Pos {
    pub fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TileKind {
    Floor,
    Pit,
    Wall,
    Goal,
    IntermediateGoal,
    Entry,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub terrain: char,
    pub kind: TileKind,
    /// Slip directions with their probabilities, in [`Direction::ALL`] order.
    pub slip: Vec<(Direction, f64)>,
}

impl Tile {
    pub fn new(terrain: char, kind: TileKind) -> Self {
        Self {
            terrain,
            kind,
            slip: Vec::new(),
        }
    }

    pub fn floor(terrain: char) -> Self {
        Self::new(terrain, TileKind::Floor)
    }

    pub fn with_slip(mut self, d: Direction, p: f64) -> Self {
        self.slip.retain(|(e, _)| *e != d);
        self.slip.push((d, p));
        self.slip.sort_by_key(|(e, _)| *e);
        self
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self.kind, TileKind::Pit | TileKind::Goal)
    }

    /// Distribution over the direction actually executed when `intended` is
    /// attempted: each slip entry fires with its probability, the residual
    /// mass goes to the intended move.
    pub fn executed_direction(&self, intended: Direction) -> Distribution<Direction> {
        if self.slip.is_empty() {
            return Distribution::point(intended);
        }
        let mut weights = [0.0; 4];
        let slipped: f64 = self.slip.iter().map(|(_, p)| p).sum();
        for (d, p) in &self.slip {
            weights[d.index()] += p;
        }
        let residual = 1.0 - slipped;
        if residual > PROB_TOLERANCE {
            weights[intended.index()] += residual;
        }
        let support = Direction::ALL
            .into_iter()
            .filter(|d| weights[d.index()] > 0.0)
            .map(|d| (d, weights[d.index()]))
            .collect();
        Distribution::new(support).expect("slip sums are validated on construction")
    }
}

/// A validated gridworld layout.
#[derive(Debug, Clone, PartialEq)]
pub struct GridworldSpec {
    width: usize,
    height: usize,
    tiles: Vec<Tile>,
    entry: Pos,
    goal: Pos,
}

impl GridworldSpec {
    /// `tiles` is row-major with row 0 at `y = 0` (the bottom row).
    pub fn new(width: usize, height: usize, tiles: Vec<Tile>) -> Result<Self, MapError> {
        if width == 0 || height == 0 || tiles.len() != width * height {
            return Err(MapError::Dimensions {
                width,
                height,
                tiles: tiles.len(),
            });
        }
        let mut entry = None;
        let mut goal = None;
        for (i, tile) in tiles.iter().enumerate() {
            let pos = Pos::new(i % width, i / width);
            validate_tile(pos, tile)?;
            match tile.kind {
                TileKind::Entry if entry.replace(pos).is_some() => return Err(MapError::Duplicate("entry")),
                TileKind::Goal if goal.replace(pos).is_some() => return Err(MapError::Duplicate("goal")),
                _ => {}
            }
        }
        Ok(Self {
            width,
            height,
            tiles,
            entry: entry.ok_or(MapError::MissingEntry)?,
            goal: goal.ok_or(MapError::MissingGoal)?,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn entry(&self) -> Pos {
        self.entry
    }

    pub fn goal(&self) -> Pos {
        self.goal
    }

    pub fn tile(&self, pos: Pos) -> &Tile {
        &self.tiles[pos.y * self.width + pos.x]
    }

    pub fn tiles(&self) -> impl Iterator<Item = (Pos, &Tile)> {
        self.tiles
            .iter()
            .enumerate()
            .map(move |(i, t)| (Pos::new(i % self.width, i / self.width), t))
    }

    pub fn pits(&self) -> impl Iterator<Item = Pos> + '_ {
        self.tiles().filter(|(_, t)| t.kind == TileKind::Pit).map(|(p, _)| p)
    }

    /// Neighbor of `pos` in direction `d`, if it lies on the grid.
    pub fn neighbor(&self, pos: Pos, d: Direction) -> Option<Pos> {
        let (dx, dy) = d.delta();
        let x = pos.x as i64 + dx;
        let y = pos.y as i64 + dy;
        (x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height)
            .then(|| Pos::new(x as usize, y as usize))
    }

    /// Where a move in direction `d` from `pos` ends: walls and the border block it.
    pub fn target(&self, pos: Pos, d: Direction) -> Pos {
        match self.neighbor(pos, d) {
            Some(n) if self.tile(n).kind != TileKind::Wall => n,
            _ => pos,
        }
    }

    pub fn reset(&self) -> EnvState {
        EnvState {
            pos: self.entry,
            steps_taken: 0,
        }
    }

    /// Executes `action` from `state`, sampling a slip from the current tile.
    pub fn step<R: Rng + ?Sized>(&self, state: EnvState, action: Direction, rng: &mut R) -> Result<StepResult, StepError> {
        let tile = self.tile(state.pos);
        if tile.is_terminal() {
            return Err(StepError::SteppedAfterTerminal(state.pos));
        }
        let executed = if tile.slip.is_empty() {
            action
        } else {
            *tile.executed_direction(action).sample(rng)
        };
        let pos = self.target(state.pos, executed);
        let (reward, terminal) = self.reward_on_entering(pos);
        Ok(StepResult {
            reward,
            next: EnvState {
                pos,
                steps_taken: state.steps_taken + 1,
            },
            terminal,
        })
    }

    /// Reward of a step that ends on `pos`, including the step penalty.
    pub fn reward_on_entering(&self, pos: Pos) -> (f64, Option<Terminal>) {
        match self.tile(pos).kind {
            TileKind::Goal => (STEP_REWARD + GOAL_REWARD, Some(Terminal::GoalReached)),
            TileKind::Pit => (STEP_REWARD + PIT_REWARD, Some(Terminal::PitFallen)),
            TileKind::IntermediateGoal => (STEP_REWARD + INTERMEDIATE_REWARD, None),
            _ => (STEP_REWARD, None),
        }
    }

    /// The safety abstraction: terrain plus the set of adjacent pits; pits
    /// themselves are marked as violations.
    pub fn abstract_observation(&self, pos: Pos) -> Observation {
        let tile = self.tile(pos);
        let pits: PitFlags = Direction::ALL
            .into_iter()
            .filter(|d| {
                self.neighbor(pos, *d)
                    .is_some_and(|n| self.tile(n).kind == TileKind::Pit)
            })
            .collect();
        if tile.kind == TileKind::Pit {
            Observation::violation(tile.terrain, pits)
        } else {
            Observation::new(tile.terrain, pits)
        }
    }
}

fn validate_tile(pos: Pos, tile: &Tile) -> Result<(), MapError> {
    if !tile.terrain.is_ascii_alphanumeric() {
        return Err(MapError::InvalidTerrain {
            pos,
            terrain: tile.terrain,
        });
    }
    match (tile.terrain, tile.kind) {
        ('E', k) if k != TileKind::Entry => {
            return Err(MapError::ReservedTerrain {
                pos,
                terrain: 'E',
                kind: "entry",
            })
        }
        ('G', k) if k != TileKind::Goal => {
            return Err(MapError::ReservedTerrain {
                pos,
                terrain: 'G',
                kind: "goal",
            })
        }
        _ => {}
    }
    if tile.kind == TileKind::Wall && !tile.slip.is_empty() {
        return Err(MapError::SlipOnWall(pos));
    }
    for &(_, probability) in &tile.slip {
        if !(probability > 0.0 && probability <= 1.0) {
            return Err(MapError::InvalidSlipProbability { pos, probability });
        }
    }
    let sum: f64 = tile.slip.iter().map(|(_, p)| p).sum();
    if sum > 1.0 + PROB_TOLERANCE {
        return Err(MapError::InvalidSlipSum { pos, sum });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EnvState {
    pub pos: Pos,
    pub steps_taken: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Terminal {
    GoalReached,
    PitFallen,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub reward: f64,
    pub next: EnvState,
    pub terminal: Option<Terminal>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("stepped from terminal tile {0}")]
    SteppedAfterTerminal(Pos),
}
