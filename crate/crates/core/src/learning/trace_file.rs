//! One trace per line: `obs0 ; a1 obs1 ; a2 obs2 ; ...`.

use crate::mdp::{ActionAlphabet, Observation, ObservationTrace};
use crate::text::{content_lines, ParseError};

pub fn serialize_traces(traces: &[ObservationTrace], actions: &ActionAlphabet) -> String {
    let mut out = String::new();
    for t in traces {
        out.push_str(&t.initial.to_string());
        for (a, o) in &t.steps {
            out.push_str(" ; ");
            out.push_str(actions.name(*a));
            out.push(' ');
            out.push_str(&o.to_string());
        }
        out.push('\n');
    }
    out
}

pub fn parse_traces(text: &str, actions: &ActionAlphabet) -> Result<Vec<ObservationTrace>, ParseError> {
    let mut traces = Vec::new();
    for (ln, line) in content_lines(text) {
        let mut column = 1;
        let mut segments = line.split(';');
        let first = segments.next().unwrap_or("");
        let initial = parse_obs(first.trim(), ln, column)?;
        column += first.len() + 1;
        let mut trace = ObservationTrace::new(initial);
        for seg in segments {
            let mut parts = seg.split_whitespace();
            let (name, obs) = match (parts.next(), parts.next(), parts.next()) {
                (Some(n), Some(o), None) => (n, o),
                _ => return Err(ParseError::new(ln, column, format!("expected `action observation`, found `{}`", seg.trim()))),
            };
            let a = actions
                .id(name)
                .ok_or_else(|| ParseError::new(ln, column, format!("unknown action `{name}`")))?;
            trace.steps.push((a, parse_obs(obs, ln, column)?));
            column += seg.len() + 1;
        }
        traces.push(trace);
    }
    Ok(traces)
}

fn parse_obs(s: &str, line: usize, column: usize) -> Result<Observation, ParseError> {
    s.parse().map_err(|e: String| ParseError::new(line, column, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::direction::Direction;

    #[test]
    fn round_trip() {
        let doc = "E{} ; right c{PR} ; down d{}!\nE{}\n";
        let alphabet = Direction::alphabet();
        let traces = parse_traces(doc, &alphabet).unwrap();
        assert_eq!(traces.len(), 2);
        assert_eq!(traces[0].steps.len(), 2);
        assert!(traces[1].steps.is_empty());
        assert_eq!(serialize_traces(&traces, &alphabet), doc);
    }

    #[test]
    fn reports_bad_segment() {
        let err = parse_traces("E{} ; right c{PR}\nE{} ; jump c{}\n", &Direction::alphabet()).unwrap_err();
        assert_eq!(err.line, 2);
        assert!(err.message.contains("jump"));
        assert!(parse_traces("E{} ; right\n", &Direction::alphabet()).is_err());
    }
}
