use std::fmt;
use std::str::FromStr;

use crate::direction::Direction;

/// Directions in which a neighboring tile is a pit, stored as a bit set so
/// that equal flag sets compare equal regardless of insertion order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PitFlags(u8);

impl PitFlags {
    pub const EMPTY: PitFlags = PitFlags(0);

    pub fn with(mut self, d: Direction) -> Self {
        self.insert(d);
        self
    }

    pub fn insert(&mut self, d: Direction) {
        self.0 |= 1 << d.index();
    }

    pub fn contains(self, d: Direction) -> bool {
        self.0 & (1 << d.index()) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = Direction> {
        Direction::ALL.into_iter().filter(move |d| self.contains(*d))
    }
}

impl FromIterator<Direction> for PitFlags {
    fn from_iter<I: IntoIterator<Item = Direction>>(iter: I) -> Self {
        iter.into_iter().fold(Self::EMPTY, Self::with)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Special {
    /// The safety property is violated in this state.
    Violation,
    Goal,
}

/// Safety-relevant abstraction of a concrete state: the terrain letter plus
/// the set of adjacent pits.
///
/// Text form: `c{PR}`, `d{PL,PR}!` (violation), `G{}*` (goal marker).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Observation {
    pub terrain: char,
    pub pits: PitFlags,
    pub special: Option<Special>,
}

impl Observation {
    /// Terrain symbol of the violating sink added by sink completion.
    pub const SINK_TERRAIN: char = '#';

    pub fn new(terrain: char, pits: PitFlags) -> Self {
        Self {
            terrain,
            pits,
            special: None,
        }
    }

    pub fn violation(terrain: char, pits: PitFlags) -> Self {
        Self {
            terrain,
            pits,
            special: Some(Special::Violation),
        }
    }

    pub fn sink() -> Self {
        Self::violation(Self::SINK_TERRAIN, PitFlags::EMPTY)
    }

    pub fn is_violation(&self) -> bool {
        self.special == Some(Special::Violation)
    }
}

fn flag_code(d: Direction) -> &'static str {
    match d {
        Direction::Left => "PL",
        Direction::Right => "PR",
        Direction::Up => "PU",
        Direction::Down => "PD",
    }
}

impl fmt::Display for Observation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{{", self.terrain)?;
        for (i, d) in self.pits.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            f.write_str(flag_code(d))?;
        }
        f.write_str("}")?;
        match self.special {
            Some(Special::Violation) => f.write_str("!"),
            Some(Special::Goal) => f.write_str("*"),
            None => Ok(()),
        }
    }
}

impl FromStr for Observation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.chars();
        let terrain = chars
            .next()
            .filter(|c| c.is_ascii_alphanumeric() || *c == Self::SINK_TERRAIN)
            .ok_or_else(|| format!("observation `{s}` lacks a terrain symbol"))?;
        let rest = chars.as_str();
        let inner_end = rest
            .find('}')
            .filter(|_| rest.starts_with('{'))
            .ok_or_else(|| format!("observation `{s}` lacks a `{{...}}` pit set"))?;
        let mut pits = PitFlags::EMPTY;
        for code in rest[1..inner_end].split(',').filter(|c| !c.is_empty()) {
            let d = Direction::ALL
                .into_iter()
                .find(|d| flag_code(*d) == code.trim())
                .ok_or_else(|| format!("unknown pit flag `{code}` in `{s}`"))?;
            pits.insert(d);
        }
        let special = match &rest[inner_end + 1..] {
            "" => None,
            "!" => Some(Special::Violation),
            "*" => Some(Special::Goal),
            other => return Err(format!("unexpected suffix `{other}` in `{s}`")),
        };
        Ok(Self {
            terrain,
            pits,
            special,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_is_canonical() {
        let o = Observation::new('c', PitFlags::EMPTY.with(Direction::Right).with(Direction::Left));
        assert_eq!(o.to_string(), "c{PL,PR}");
        assert_eq!(Observation::violation('d', PitFlags::EMPTY).to_string(), "d{}!");
    }

    #[test]
    fn flag_order_does_not_matter() {
        let a: Observation = "c{PD,PL}".parse().unwrap();
        let b: Observation = "c{PL,PD}".parse().unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_string(), "c{PL,PD}");
    }

    #[test]
    fn parse_round_trips_specials() {
        for s in ["a{}", "d{PR}!", "G{}*", "#{}!"] {
            assert_eq!(s.parse::<Observation>().unwrap().to_string(), s);
        }
        assert!("c".parse::<Observation>().is_err());
        assert!("c{PX}".parse::<Observation>().is_err());
        assert!("c{}?".parse::<Observation>().is_err());
    }
}
