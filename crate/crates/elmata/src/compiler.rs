//! Compiling an automaton into recurrent-network parameters.
//!
//! The construction gives the network one coordinate per (state, symbol)
//! pair, `D = |Q|·|Σ|` in total. After reading a prefix, the hidden state is
//! zero outside the block of the last symbol read, and inside that block it
//! holds the automaton's per-state prefix probabilities. One step of the
//! recurrence advances all symbols in parallel through the recurrence matrix
//! and then masks every block except the one actually read, using the input
//! matrix, the constant −1 bias, and the ReLU.
//!
//! The recurrence matrix entry at row (q′, y′), column (q, y) is the weight
//! of the transition q →y′→ q′: the *row* symbol labels the transition, and
//! the entry does not depend on the column symbol. Row block y′ of `U·h`
//! therefore holds, for every state, the mass after advancing the prefix by
//! y′ — which is what the masking step selects from.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::numerics::Rational;
use crate::pfsa::{Pfsa, PfsaError};

/// The compiled parameters of the recurrent network: recurrence matrix `U`
/// (D×D), input matrix `V` (D×|Σ|), bias `b` (all −1), and initial hidden
/// state `η`. Coordinates are ordered symbol-major: (q_i, y_j) ↦ j·|Q| + i.
#[derive(Clone, Debug, PartialEq)]
pub struct ElmanParams {
    alphabet: Vec<String>,
    states: Vec<String>,
    u: Matrix<Rational>,
    v: Matrix<Rational>,
    bias: Vec<Rational>,
    eta: Vec<Rational>,
}

/// The |Σ̄|×D output matrix `E`. Row ȳ of column (q, y) holds the probability
/// of emitting ȳ from state q (for ȳ ∈ Σ, the summed weight of all q →ȳ→ q′
/// transitions; for the EOS row, the final weight of q). Columns with the
/// same state are identical, and every column sums to 1: it is the state's
/// next-action distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputMatrix {
    e: Matrix<Rational>,
}

impl ElmanParams {
    pub fn dimension(&self) -> usize {
        self.eta.len()
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet.len()
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn u(&self) -> &Matrix<Rational> {
        &self.u
    }

    pub fn v(&self) -> &Matrix<Rational> {
        &self.v
    }

    pub fn bias(&self) -> &[Rational] {
        &self.bias
    }

    pub fn eta(&self) -> &[Rational] {
        &self.eta
    }

    /// The coordinate of the (state, symbol) pair: j·|Q| + i for state i and
    /// symbol j.
    pub fn index_of_ids(&self, state: usize, symbol: usize) -> usize {
        symbol * self.state_count() + state
    }

    /// Coordinate lookup by name.
    pub fn index_of(&self, state: &str, symbol: &str) -> Result<usize, PfsaError> {
        let q = self
            .states
            .iter()
            .position(|s| s == state)
            .ok_or_else(|| PfsaError::UnknownState(state.to_string()))?;
        let y = self
            .alphabet
            .iter()
            .position(|s| s == symbol)
            .ok_or_else(|| PfsaError::UnknownSymbol(symbol.to_string()))?;
        Ok(self.index_of_ids(q, y))
    }

    /// Inverse of [`ElmanParams::index_of_ids`].
    pub fn coordinate(&self, index: usize) -> (usize, usize) {
        (index % self.state_count(), index / self.state_count())
    }

    /// Human-readable coordinate label, e.g. `(q1, b)`.
    pub fn coordinate_name(&self, index: usize) -> String {
        let (q, y) = self.coordinate(index);
        format!("({}, {})", self.states[q], self.alphabet[y])
    }

    /// Text → symbol indices against the carried alphabet, same rules as
    /// [`Pfsa::parse_string`].
    pub fn parse_string(&self, text: &str) -> Result<Vec<usize>, PfsaError> {
        crate::pfsa::parse_symbols(&self.alphabet, text)
    }

    /// Scales one recurrence entry in place. This exists for fault-injection
    /// tests that check a corrupted network is caught by the invariance
    /// checker; it has no other use.
    pub fn scale_u_entry(&mut self, row: usize, col: usize, factor: &Rational) {
        let scaled = self.u.get(row, col) * factor;
        self.u.set(row, col, scaled);
    }
}

impl OutputMatrix {
    /// Wraps an explicit |Σ̄|×D matrix; mainly for tests that need a
    /// deliberately wrong head.
    pub fn from_matrix(e: Matrix<Rational>) -> Self {
        OutputMatrix { e }
    }

    pub fn matrix(&self) -> &Matrix<Rational> {
        &self.e
    }

    /// Number of rows, |Σ̄| = |Σ| + 1.
    pub fn output_size(&self) -> usize {
        self.e.rows()
    }
}

/// Builds the network parameters simulating the automaton.
///
/// `η` places the initial weights in the block of a dummy symbol (the first
/// symbol in alphabet order — any choice works, because the first step's
/// masking overwrites the block structure). `U` carries transition weights
/// as described in the module docs, `V` is one-hot per block, and `b` is −1
/// everywhere.
pub fn compile(a: &Pfsa) -> ElmanParams {
    let n = a.state_count();
    let m = a.alphabet_size();
    let d = n * m;

    let u = Matrix::from_fn(d, d, |row, col| {
        let (q_to, y_row) = (row % n, row / n);
        let q_from = col % n;
        a.weight(q_from, y_row, q_to)
    });

    let v = Matrix::from_fn(d, m, |row, col| {
        if row / n == col {
            Rational::one()
        } else {
            Rational::zero()
        }
    });

    let bias = vec![-Rational::one(); d];

    let mut eta = vec![Rational::zero(); d];
    for q in 0..n {
        // Dummy symbol block: symbol 0.
        eta[q] = a.initial()[q].clone();
    }

    ElmanParams {
        alphabet: a.alphabet().to_vec(),
        states: a.states().to_vec(),
        u,
        v,
        bias,
        eta,
    }
}

/// Builds the output matrix of the automaton.
pub fn output_matrix(a: &Pfsa) -> OutputMatrix {
    let n = a.state_count();
    let d = n * a.alphabet_size();
    let rows = a.alphabet_size() + 1;
    let e = Matrix::from_fn(rows, d, |row, col| {
        let q = col % n;
        if row < a.alphabet_size() {
            a.emission_weight(q, row)
        } else {
            a.final_weights()[q].clone()
        }
    });
    OutputMatrix { e }
}

#[derive(Serialize, Deserialize)]
struct CompiledDoc {
    dimension: usize,
    alphabet: Vec<String>,
    states: Vec<String>,
    /// Coordinate order, index d → [state, symbol].
    coordinates: Vec<[String; 2]>,
    u: Vec<Vec<Rational>>,
    v: Vec<Vec<Rational>>,
    bias: Vec<Rational>,
    eta: Vec<Rational>,
    output: Vec<Vec<Rational>>,
}

/// Serializes the parameters and output matrix as one JSON document, with
/// every entry a rational string and the coordinate order spelled out.
pub fn compiled_to_json(params: &ElmanParams, output: &OutputMatrix) -> String {
    let doc = CompiledDoc {
        dimension: params.dimension(),
        alphabet: params.alphabet.clone(),
        states: params.states.clone(),
        coordinates: (0..params.dimension())
            .map(|d| {
                let (q, y) = params.coordinate(d);
                [params.states[q].clone(), params.alphabet[y].clone()]
            })
            .collect(),
        u: params.u.to_rows(),
        v: params.v.to_rows(),
        bias: params.bias.clone(),
        eta: params.eta.clone(),
        output: output.e.to_rows(),
    };
    serde_json::to_string_pretty(&doc).expect("compiled parameters serialize")
}

pub fn save_compiled(
    path: impl AsRef<Path>,
    params: &ElmanParams,
    output: &OutputMatrix,
) -> Result<(), PfsaError> {
    let path = path.as_ref();
    std::fs::write(path, compiled_to_json(params, output) + "\n").map_err(|source| {
        PfsaError::Io { path: path.display().to_string(), source }
    })
}

/// Reads back a compiled-parameters file.
pub fn load_compiled(path: impl AsRef<Path>) -> Result<(ElmanParams, OutputMatrix), PfsaError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| PfsaError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let doc: CompiledDoc = serde_json::from_str(&text).map_err(|e| PfsaError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let params = ElmanParams {
        alphabet: doc.alphabet,
        states: doc.states,
        u: Matrix::from_rows(doc.u),
        v: Matrix::from_rows(doc.v),
        bias: doc.bias,
        eta: doc.eta,
    };
    let output = OutputMatrix { e: Matrix::from_rows(doc.output) };
    Ok((params, output))
}
