//! Line-oriented map format.
//!
//! The header is `width height`; then `height` rows of space-separated cell
//! tokens, top row (largest `y`) first so the text reads like the grid. A
//! token is `terrain[:kind][:slip]`:
//!
//! - `terrain` is one alphanumeric character. `E` and `G` are reserved for
//!   the entry and goal tiles and imply that kind.
//! - `kind` is one of `P` (pit), `W` (wall), `E` (entry), `G` (goal),
//!   `I` (intermediate goal); empty means floor.
//! - `slip` is `d=p` entries joined by `|`, with `d` in `L R U D`.
//!
//! Examples: `a:P`, `c::D=0.25`, `E`.

use std::fmt::Write;

use super::{GridworldSpec, MapError, Tile, TileKind};
use crate::direction::Direction;
use crate::text::{content_lines, parse_token, Exact, ParseError};

fn kind_code(kind: TileKind) -> &'static str {
    match kind {
        TileKind::Floor => "",
        TileKind::Pit => "P",
        TileKind::Wall => "W",
        TileKind::Entry => "E",
        TileKind::Goal => "G",
        TileKind::IntermediateGoal => "I",
    }
}

fn implied_kind(terrain: char) -> TileKind {
    match terrain {
        'E' => TileKind::Entry,
        'G' => TileKind::Goal,
        _ => TileKind::Floor,
    }
}

pub fn serialize_map(spec: &GridworldSpec) -> String {
    let mut out = format!("{} {}\n", spec.width(), spec.height());
    for y in (0..spec.height()).rev() {
        for x in 0..spec.width() {
            if x > 0 {
                out.push(' ');
            }
            let tile = spec.tile(super::Pos::new(x, y));
            out.push(tile.terrain);
            let kind = if tile.kind == implied_kind(tile.terrain) {
                ""
            } else {
                kind_code(tile.kind)
            };
            if !tile.slip.is_empty() {
                write!(out, ":{kind}:").unwrap();
                for (i, (d, p)) in tile.slip.iter().enumerate() {
                    if i > 0 {
                        out.push('|');
                    }
                    write!(out, "{}={}", d.letter(), Exact(*p)).unwrap();
                }
            } else if !kind.is_empty() {
                write!(out, ":{kind}").unwrap();
            }
        }
        out.push('\n');
    }
    out
}

fn parse_cell(token: &str, line: usize, column: usize) -> Result<Tile, ParseError> {
    let err = |msg: String| ParseError::new(line, column, msg);
    let mut parts = token.split(':');
    let terrain_part = parts.next().unwrap_or("");
    let mut chars = terrain_part.chars();
    let terrain = match (chars.next(), chars.next()) {
        (Some(c), None) => c,
        _ => return Err(err(format!("terrain must be a single character, found `{terrain_part}`"))),
    };
    let kind = match parts.next().unwrap_or("") {
        "" => implied_kind(terrain),
        "P" => TileKind::Pit,
        "W" => TileKind::Wall,
        "E" => TileKind::Entry,
        "G" => TileKind::Goal,
        "I" => TileKind::IntermediateGoal,
        other => return Err(err(format!("unknown tile kind `{other}`"))),
    };
    let mut tile = Tile::new(terrain, kind);
    if let Some(slip) = parts.next() {
        for entry in slip.split('|') {
            let (d, p) = entry
                .split_once('=')
                .ok_or_else(|| err(format!("slip entry `{entry}` is not `d=p`")))?;
            let mut dc = d.chars();
            let dir = match (dc.next(), dc.next()) {
                (Some(c), None) => Direction::from_letter(c),
                _ => None,
            }
            .ok_or_else(|| err(format!("unknown slip direction `{d}`")))?;
            if tile.slip.iter().any(|(e, _)| *e == dir) {
                return Err(err(format!("slip direction `{d}` given twice")));
            }
            let p: f64 = parse_token(p, line, "slip probability").map_err(|e| err(e.message))?;
            tile = tile.with_slip(dir, p);
        }
    }
    if parts.next().is_some() {
        return Err(err(format!("too many `:` fields in `{token}`")));
    }
    Ok(tile)
}

pub fn parse_map(text: &str) -> Result<GridworldSpec, MapError> {
    let mut lines = content_lines(text);
    let (hl, header) = lines.next().ok_or_else(|| ParseError::at_line(1, "empty map document"))?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(ParseError::at_line(hl, "header must be `width height`").into());
    }
    let width: usize = parse_token(dims[0], hl, "width")?;
    let height: usize = parse_token(dims[1], hl, "height")?;
    if width == 0 || height == 0 {
        return Err(ParseError::at_line(hl, "grid dimensions must be positive").into());
    }

    let mut rows: Vec<Vec<Tile>> = Vec::with_capacity(height);
    for (ln, line) in lines {
        if rows.len() == height {
            return Err(ParseError::at_line(ln, format!("expected {height} rows, found more")).into());
        }
        let mut row = Vec::with_capacity(width);
        let mut column = 1;
        for token in line.split(' ') {
            if !token.is_empty() {
                row.push(parse_cell(token, ln, column)?);
            }
            column += token.len() + 1;
        }
        if row.len() != width {
            return Err(ParseError::at_line(ln, format!("expected {width} cells, found {}", row.len())).into());
        }
        rows.push(row);
    }
    if rows.len() != height {
        return Err(ParseError::at_line(hl, format!("expected {height} rows, found {}", rows.len())).into());
    }
    // Text lists the top row first; storage is bottom row first.
    let tiles = rows.into_iter().rev().flatten().collect();
    GridworldSpec::new(width, height, tiles)
}
