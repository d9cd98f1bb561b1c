//! Compile probabilistic finite-state automata into weakly equivalent Elman
//! recurrent language models, and verify the equivalence mechanically.
//!
//! A probabilistic finite-state automaton (PFSA) defines a distribution over
//! strings: each state owns a distribution over "emit a symbol and move" or
//! "stop". Non-deterministic PFSAs are strictly more expressive than
//! deterministic ones — some of them admit no deterministic equivalent — so
//! simulating one with a neural network cannot lean on tracking a single
//! current state. The construction implemented here instead tracks the full
//! per-state prefix probabilities inside the hidden state of a ReLU Elman
//! network of width |Q|·|Σ|, and reads next-symbol distributions off that
//! state with an output head.
//!
//! Everything runs over exact rational arithmetic (with an optional f64
//! mode), so "weakly equivalent" is checked as literal equality of string
//! probabilities, not closeness:
//!
//! ```
//! use elmata::compiler::{compile, output_matrix};
//! use elmata::equivalence::lm_string_prob;
//! use elmata::heads::{Head, SparsemaxHead};
//! use elmata::numerics::Rational;
//! use elmata::pfsa::Pfsa;
//! use elmata::runtime::Network;
//!
//! # fn main() -> Result<(), Box<dyn std::error::Error>> {
//! let automaton = Pfsa::builder(&["a", "b"], &["q0", "q1", "q2"])
//!     .initial("q0", "1")
//!     .transition("q0", "a", "q1", "0.4")
//!     .transition("q0", "a", "q2", "0.6")
//!     .transition("q1", "b", "q1", "0.9")
//!     .transition("q2", "b", "q2", "0.1")
//!     .final_weight("q1", "0.1")
//!     .final_weight("q2", "0.9")
//!     .build()?;
//!
//! let network = Network::<Rational>::new(&compile(&automaton));
//! let head = Head::Sparsemax(SparsemaxHead::new(output_matrix(&automaton)));
//!
//! let string = automaton.parse_string("abb")?;
//! assert_eq!(
//!     lm_string_prob(&network, &head, &string)?,
//!     automaton.stringsum("abb")?,
//! );
//! # Ok(())
//! # }
//! ```
//!
//! # Modules
//!
//! - [`numerics`]: exact rationals, extended reals, the bit-precision
//!   measure, and the [`numerics::Scalar`] trait for the exact/float split.
//! - [`pfsa`]: the automaton type with validation, trimming, forward and
//!   string probabilities, conditionals, δ-perturbation, tail masses, and
//!   sampling.
//! - [`compiler`]: lowering an automaton to network parameters and the
//!   output matrix.
//! - [`runtime`]: running the recurrence, the hidden-state invariance check,
//!   and precision traces.
//! - [`heads`]: sparsemax, softmax over extended reals, and the three output
//!   heads (exact sparsemax, exact softmax-log, fitted MLP).
//! - [`equivalence`]: string enumeration, restricted total variation
//!   distance, tail bounds, and the verification reports.
//!
//! The `elmata` binary wires these into subcommands (`validate`, `compile`,
//! `run`, `prob`, `verify`, …); see the guide in `book/` for a walkthrough.

pub mod compiler;
pub mod equivalence;
pub mod heads;
pub mod linalg;
pub mod numerics;
pub mod pfsa;
pub mod runtime;
