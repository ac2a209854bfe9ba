//! Text format for deterministic labeled MDPs.
//!
//! ```text
//! actions left right up down
//! initial 0
//! state 0 E{}
//! state 1 c{PR}
//! trans 0 right 1:1.0
//! trans 1 down 1:0.9 2:0.1
//! ```
//!
//! States appear in id order, transitions ordered by state then action id.

use std::collections::BTreeMap;
use std::fmt::Write;

use sha2::{Digest, Sha256};

use super::{ActionAlphabet, DeterministicLabeledMdp, Distribution, Mdp, Observation, StateId};
use crate::text::{content_lines, parse_token, Exact, ParseError};

pub fn serialize_model(m: &DeterministicLabeledMdp) -> String {
    let mut out = String::new();
    let names: Vec<&str> = m.actions().ids().map(|a| m.actions().name(a)).collect();
    writeln!(out, "actions {}", names.join(" ")).unwrap();
    writeln!(out, "initial {}", m.initial()).unwrap();
    for s in m.states() {
        writeln!(out, "state {} {}", s, m.label(s)).unwrap();
    }
    for s in m.states() {
        for (a, dist) in m.mdp().transitions_from(s) {
            write!(out, "trans {} {}", s, m.actions().name(*a)).unwrap();
            for (t, p) in dist.iter() {
                write!(out, " {}:{}", t, Exact(p)).unwrap();
            }
            out.push('\n');
        }
    }
    out
}

/// Short content hash of the serialized model: the first 16 hex digits of
/// its SHA-256.
pub fn model_hash(m: &DeterministicLabeledMdp) -> String {
    let digest = Sha256::digest(serialize_model(m).as_bytes());
    hex::encode(&digest[..8])
}

pub fn parse_model(text: &str) -> Result<DeterministicLabeledMdp, ParseError> {
    let mut alphabet: Option<ActionAlphabet> = None;
    let mut initial: Option<StateId> = None;
    let mut labels: Vec<Observation> = Vec::new();
    let mut rows: Vec<BTreeMap<_, Distribution<StateId>>> = Vec::new();
    let mut last_line = 0;

    for (ln, line) in content_lines(text) {
        last_line = ln;
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("actions") => {
                let a = ActionAlphabet::new(tokens.map(str::to_string))
                    .map_err(|e| ParseError::at_line(ln, e.to_string()))?;
                alphabet = Some(a);
            }
            Some("initial") => {
                let id = tokens.next().ok_or_else(|| ParseError::at_line(ln, "missing initial state"))?;
                initial = Some(StateId(parse_token(id, ln, "state id")?));
            }
            Some("state") => {
                let id: u32 = parse_token(tokens.next().unwrap_or(""), ln, "state id")?;
                if id as usize != labels.len() {
                    return Err(ParseError::at_line(ln, format!("expected state {}, found {id}", labels.len())));
                }
                let label = tokens
                    .next()
                    .ok_or_else(|| ParseError::at_line(ln, "missing state label"))?
                    .parse::<Observation>()
                    .map_err(|e| ParseError::at_line(ln, e))?;
                labels.push(label);
                rows.push(BTreeMap::new());
            }
            Some("trans") => {
                let alphabet = alphabet
                    .as_ref()
                    .ok_or_else(|| ParseError::at_line(ln, "`trans` before `actions`"))?;
                let s: u32 = parse_token(tokens.next().unwrap_or(""), ln, "state id")?;
                let name = tokens.next().unwrap_or("");
                let a = alphabet
                    .id(name)
                    .ok_or_else(|| ParseError::at_line(ln, format!("unknown action `{name}`")))?;
                let mut support = Vec::new();
                for tok in tokens {
                    let (t, p) = tok
                        .split_once(':')
                        .ok_or_else(|| ParseError::at_line(ln, format!("expected `state:prob`, found `{tok}`")))?;
                    support.push((StateId(parse_token(t, ln, "state id")?), parse_token::<f64>(p, ln, "probability")?));
                }
                let dist = Distribution::new(support).map_err(|e| ParseError::at_line(ln, e.to_string()))?;
                let row = rows
                    .get_mut(s as usize)
                    .ok_or_else(|| ParseError::at_line(ln, format!("unknown state {s}")))?;
                if row.insert(a, dist).is_some() {
                    return Err(ParseError::at_line(ln, format!("duplicate transition for state {s}, action {name}")));
                }
            }
            Some(other) => return Err(ParseError::at_line(ln, format!("unknown directive `{other}`"))),
            None => {}
        }
    }
    let alphabet = alphabet.ok_or_else(|| ParseError::at_line(last_line, "missing `actions` line"))?;
    let initial = initial.ok_or_else(|| ParseError::at_line(last_line, "missing `initial` line"))?;
    let base = Mdp::new(alphabet, initial, rows).map_err(|e| ParseError::at_line(last_line, e.to_string()))?;
    DeterministicLabeledMdp::new(base, labels).map_err(|e| ParseError::at_line(last_line, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = "actions left right
initial 0
state 0 c{}
state 1 c{PD}
state 2 d{}!
trans 0 right 1:1.0
trans 1 left 0:0.1 1:0.9
trans 1 right 2:1.0
";

    #[test]
    fn round_trips() {
        let m = parse_model(DOC).unwrap();
        assert_eq!(m.num_states(), 3);
        assert_eq!(serialize_model(&m), DOC);
    }

    #[test]
    fn hash_is_stable_and_content_sensitive() {
        let m = parse_model(DOC).unwrap();
        let h = model_hash(&m);
        assert_eq!(h.len(), 16);
        assert_eq!(h, model_hash(&parse_model(DOC).unwrap()));
        let other = parse_model(&DOC.replace("0:0.1 1:0.9", "0:0.2 1:0.8")).unwrap();
        assert_ne!(h, model_hash(&other));
    }

    #[test]
    fn rejects_bad_probability_sum() {
        let bad = DOC.replace("0:0.1 1:0.9", "0:0.1 1:0.8");
        let err = parse_model(&bad).unwrap_err();
        assert_eq!(err.line, 7);
    }

    #[test]
    fn rejects_unknown_action() {
        let bad = DOC.replace("trans 1 right", "trans 1 jump");
        assert!(parse_model(&bad).unwrap_err().message.contains("jump"));
    }
}
