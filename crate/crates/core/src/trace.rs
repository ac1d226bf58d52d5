//! Access-pattern traces of the primitive layer and their verifier.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceOp {
    Cmp,
    Mux,
    Mul,
    Open,
}

impl TraceOp {
    pub fn name(self) -> &'static str {
        match self {
            TraceOp::Cmp => "cmp",
            TraceOp::Mux => "mux",
            TraceOp::Mul => "mul",
            TraceOp::Open => "open",
        }
    }
}

/// One primitive invocation. `index` is `None` for scalar bookkeeping ops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub round: u32,
    pub op: TraceOp,
    pub index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn push(&mut self, event: TraceEvent) {
        self.events.push(event);
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Highest selection round present.
    pub fn rounds(&self) -> u32 {
        self.events.iter().map(|e| e.round).max().unwrap_or(0)
    }

    pub fn count(&self, op: TraceOp, indexed: bool) -> usize {
        self.events.iter().filter(|e| e.op == op && e.index.is_some() == indexed).count()
    }

    /// One JSON object per line: `{"index":3,"op":"cmp","round":1}`.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            let line = serde_json::json!({ "round": e.round, "op": e.op.name(), "index": e.index });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_json_lines(text: &str) -> Result<Trace, serde_json::Error> {
        let events = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<Vec<TraceEvent>, _>>()?;
        Ok(Trace { events })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceViolation {
    pub round: u32,
    pub detail: String,
}

impl fmt::Display for TraceViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "round {}: {}", self.round, self.detail)
    }
}

impl std::error::Error for TraceViolation {}

/// Checks that every selection round touches each index `0..n` exactly once
/// with an indexed `cmp` and exactly once with an indexed `mux`.
pub fn verify_full_coverage(trace: &Trace, n: usize) -> Result<(), TraceViolation> {
    let rounds = trace.rounds();
    if rounds == 0 {
        return Err(TraceViolation { round: 0, detail: "trace has no selection rounds".into() });
    }
    let mut per_round: BTreeMap<(u32, TraceOp), Vec<u32>> = BTreeMap::new();
    for e in &trace.events {
        let Some(i) = e.index else { continue };
        if i >= n {
            return Err(TraceViolation {
                round: e.round,
                detail: format!("{} touches index {i} outside 0..{n}", e.op.name()),
            });
        }
        per_round.entry((e.round, e.op)).or_insert_with(|| vec![0; n])[i] += 1;
    }
    for round in 1..=rounds {
        for op in [TraceOp::Cmp, TraceOp::Mux] {
            let Some(hits) = per_round.get(&(round, op)) else {
                return Err(TraceViolation { round, detail: format!("no indexed {} operations", op.name()) });
            };
            if let Some((i, &h)) = hits.iter().enumerate().find(|(_, &h)| h != 1) {
                return Err(TraceViolation { round, detail: format!("index {i} touched {h} times by {}", op.name()) });
            }
        }
    }
    Ok(())
}

/// Two runs leak the same access pattern iff their traces are identical.
pub fn same_schedule(a: &Trace, b: &Trace) -> bool {
    a == b
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full(n: usize, rounds: u32) -> Trace {
        let mut t = Trace::default();
        for r in 1..=rounds {
            for op in [TraceOp::Cmp, TraceOp::Mux] {
                for i in 0..n {
                    t.push(TraceEvent { round: r, op, index: Some(i) });
                }
            }
            t.push(TraceEvent { round: r, op: TraceOp::Cmp, index: None });
        }
        t
    }

    #[test]
    fn accepts_full_coverage() {
        let t = full(8, 2);
        verify_full_coverage(&t, 8).unwrap();
        assert_eq!(t.count(TraceOp::Cmp, true), 16);
    }

    #[test]
    fn rejects_skipped_or_repeated_indices() {
        let mut t = full(8, 2);
        t.events.retain(|e| !(e.round == 2 && e.op == TraceOp::Mux && e.index == Some(5)));
        let err = verify_full_coverage(&t, 8).unwrap_err();
        assert_eq!(err.round, 2);

        let mut t = full(4, 1);
        t.push(TraceEvent { round: 1, op: TraceOp::Cmp, index: Some(0) });
        assert!(verify_full_coverage(&t, 4).is_err());
        assert!(verify_full_coverage(&Trace::default(), 4).is_err());
        assert!(verify_full_coverage(&full(4, 1), 3).is_err());
    }

    #[test]
    fn json_lines_round_trip() {
        let t = full(3, 1);
        let text = t.to_json_lines();
        assert!(text.starts_with("{\"index\":0,\"op\":\"cmp\",\"round\":1}\n"));
        assert_eq!(Trace::from_json_lines(&text).unwrap(), t);
        assert!(same_schedule(&t, &Trace::from_json_lines(&text).unwrap()));
    }
}
