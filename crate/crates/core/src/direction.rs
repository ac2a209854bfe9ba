//! The four cardinal moves, which double as the gridworld action alphabet.

use std::fmt;
use std::str::FromStr;

use crate::mdp::{ActionAlphabet, ActionId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    Left,
    Right,
    Up,
    Down,
}

impl Direction {
    /// Canonical order; also the action-id order of [`Direction::alphabet`].
    pub const ALL: [Direction; 4] = [Self::Left, Self::Right, Self::Up, Self::Down];

    pub fn name(self) -> &'static str {
        match self {
            Self::Left => "left",
            Self::Right => "right",
            Self::Up => "up",
            Self::Down => "down",
        }
    }

    /// Single-letter code used by the map format.
    pub fn letter(self) -> char {
        match self {
            Self::Left => 'L',
            Self::Right => 'R',
            Self::Up => 'U',
            Self::Down => 'D',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.letter() == c)
    }

    /// Coordinate offset with the origin in the bottom-left corner.
    pub fn delta(self) -> (i64, i64) {
        match self {
            Self::Left => (-1, 0),
            Self::Right => (1, 0),
            Self::Up => (0, 1),
            Self::Down => (0, -1),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn action_id(self) -> ActionId {
        ActionId(self as u16)
    }

    pub fn from_action_id(id: ActionId) -> Option<Self> {
        Self::ALL.get(id.0 as usize).copied()
    }

    pub fn alphabet() -> ActionAlphabet {
        ActionAlphabet::new(Self::ALL.iter().map(|d| d.name().to_string()))
            .expect("direction names are distinct")
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| format!("unknown direction `{s}`"))
    }
}
