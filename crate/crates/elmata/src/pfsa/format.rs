//! The on-disk automaton format: one JSON document per automaton.
//!
//! ```text
//! { "alphabet": ["a","b"], "states": ["q0","q1","q2"],
//!   "initial": {"q0": "1"}, "final": {"q1": "1/10", "q2": "9/10"},
//!   "transitions": [ {"from":"q0","symbol":"a","to":"q1","weight":"2/5"}, … ] }
//! ```
//!
//! Weights are rational strings (`"2/5"`, `"0.4"`, `"1"` — decimals parse to
//! exact base-10 fractions). States omitted from `initial`/`final` default
//! to weight 0. Symbol and state order in the file is the index order used
//! everywhere else.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Pfsa;
use crate::numerics::{Rational, RationalError};

#[derive(Debug, Error)]
pub enum PfsaError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("duplicate {kind} name `{name}`")]
    DuplicateName { kind: String, name: String },
    #[error("duplicate transition ({from}, {symbol}, {to})")]
    DuplicateTransition { from: String, symbol: String, to: String },
    #[error("bad weight `{weight}` for {context}: {source}")]
    BadWeight {
        weight: String,
        context: String,
        #[source]
        source: RationalError,
    },
    #[error("prefix has probability zero")]
    ZeroPrefixMass,
    #[error("perturbation must be nonnegative, got {0}")]
    NegativeDelta(Rational),
    #[error("sampling exceeded {0} steps; the automaton does not look tight")]
    SampleOverflow(usize),
}

#[derive(Serialize, Deserialize)]
struct PfsaDoc {
    alphabet: Vec<String>,
    states: Vec<String>,
    #[serde(default)]
    initial: BTreeMap<String, String>,
    #[serde(default, rename = "final")]
    final_weights: BTreeMap<String, String>,
    #[serde(default)]
    transitions: Vec<TransitionDoc>,
}

#[derive(Serialize, Deserialize)]
struct TransitionDoc {
    from: String,
    symbol: String,
    to: String,
    weight: String,
}

impl Pfsa {
    /// Parses an automaton from its JSON document text.
    pub fn from_json(text: &str) -> Result<Pfsa, PfsaError> {
        let doc: PfsaDoc = serde_json::from_str(text).map_err(|e| PfsaError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let mut builder = Pfsa::builder(&doc.alphabet, &doc.states);
        for (state, weight) in &doc.initial {
            builder = builder.initial(state, weight);
        }
        for (state, weight) in &doc.final_weights {
            builder = builder.final_weight(state, weight);
        }
        for t in &doc.transitions {
            builder = builder.transition(&t.from, &t.symbol, &t.to, &t.weight);
        }
        builder.build()
    }

    /// Reads an automaton from a JSON file.
    pub fn load(path: impl AsRef<Path>) -> Result<Pfsa, PfsaError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| PfsaError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Pfsa::from_json(&text)
    }

    /// The automaton as a JSON document, with weights in canonical `p/q`
    /// form and zero weights omitted. Field order is deterministic.
    pub fn to_json(&self) -> String {
        let doc = PfsaDoc {
            alphabet: self.alphabet.clone(),
            states: self.states.clone(),
            initial: self
                .initial
                .iter()
                .enumerate()
                .filter(|(_, w)| !w.is_zero())
                .map(|(q, w)| (self.states[q].clone(), w.to_string()))
                .collect(),
            final_weights: self
                .final_weights
                .iter()
                .enumerate()
                .filter(|(_, w)| !w.is_zero())
                .map(|(q, w)| (self.states[q].clone(), w.to_string()))
                .collect(),
            transitions: self
                .transitions()
                .map(|(q, y, q2, w)| TransitionDoc {
                    from: self.states[q].clone(),
                    symbol: self.alphabet[y].clone(),
                    to: self.states[q2].clone(),
                    weight: w.to_string(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("automaton serialization cannot fail")
    }

    /// Writes the JSON document to a file.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PfsaError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|source| PfsaError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::fixtures;
    use super::*;

    const FORK_ASYMMETRIC_JSON: &str = r#"{
        "alphabet": ["a", "b"],
        "states": ["q0", "q1", "q2"],
        "initial": { "q0": "1" },
        "final": { "q1": "1/10", "q2": "9/10" },
        "transitions": [
            { "from": "q0", "symbol": "a", "to": "q1", "weight": "2/5" },
            { "from": "q0", "symbol": "a", "to": "q2", "weight": "3/5" },
            { "from": "q1", "symbol": "b", "to": "q1", "weight": "9/10" },
            { "from": "q2", "symbol": "b", "to": "q2", "weight": "1/10" }
        ]
    }"#;

    #[test]
    fn json_round_trip_matches_the_builder() {
        let parsed = Pfsa::from_json(FORK_ASYMMETRIC_JSON).unwrap();
        assert_eq!(parsed, fixtures::fork_asymmetric());
        let reparsed = Pfsa::from_json(&parsed.to_json()).unwrap();
        assert_eq!(reparsed, parsed);
    }

    #[test]
    fn decimal_weights_load_as_exact_fractions() {
        let doc = r#"{
            "alphabet": ["a"], "states": ["q0", "q1"],
            "initial": { "q0": "1" }, "final": { "q1": "1" },
            "transitions": [ { "from": "q0", "symbol": "a", "to": "q1", "weight": "0.4" },
                             { "from": "q0", "symbol": "a", "to": "q0", "weight": "0.6" } ]
        }"#;
        let a = Pfsa::from_json(doc).unwrap();
        assert_eq!(a.weight(0, 0, 1), Rational::ratio(2, 5));
    }

    #[test]
    fn malformed_json_reports_line_and_column() {
        match Pfsa::from_json("{ \"alphabet\": [\n  \"a\",,\n] }") {
            Err(PfsaError::Parse { line, column, .. }) => {
                assert_eq!(line, 2);
                assert!(column > 0);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn zero_denominator_weight_is_rejected() {
        let doc = r#"{
            "alphabet": ["a"], "states": ["q0"],
            "initial": { "q0": "1" }, "final": { "q0": "1/0" },
            "transitions": []
        }"#;
        assert!(matches!(Pfsa::from_json(doc), Err(PfsaError::BadWeight { .. })));
    }

    #[test]
    fn unknown_names_are_rejected() {
        let doc = r#"{
            "alphabet": ["a"], "states": ["q0"],
            "initial": { "q9": "1" }, "final": {}, "transitions": []
        }"#;
        assert!(matches!(Pfsa::from_json(doc), Err(PfsaError::UnknownState(s)) if s == "q9"));
    }
}
