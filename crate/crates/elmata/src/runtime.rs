//! Executing the compiled recurrence.
//!
//! One step computes `h′ = max(0, U·h + V·r(y) − 1)` elementwise, where
//! `r(y)` is the one-hot vector of the symbol read. On correctly compiled
//! parameters the result is exactly zero outside the block of `y`, and the
//! block of `y` holds the automaton's forward vector for the extended
//! prefix. A zero hidden state is a legal value — it means the consumed
//! prefix has probability zero — and it stays zero from then on; the output
//! heads, not the runtime, treat it as an error condition.
//!
//! [`precision_trace`] and [`bound_constant`] measure how many bits the
//! exact hidden states need over time. The measured trace always sits below
//! `C·(t+1)` for the constant produced by [`bound_constant`], because one
//! step can add at most ψ(D) + max ψ(U) + C′ bits to the worst entry.

use crate::compiler::ElmanParams;
use crate::linalg::{matvec, Matrix};
use crate::numerics::{precision_of, vector_precision, Rational, Scalar};
use crate::pfsa::Pfsa;

/// The hidden state after `t` steps, together with the consumed prefix.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenState<S> {
    pub entries: Vec<S>,
    pub t: usize,
    pub consumed: Vec<usize>,
}

impl<S: Scalar> HiddenState<S> {
    /// Σ_d |h_d| — on valid parameters, the probability mass of the
    /// consumed prefix.
    pub fn l1_mass(&self) -> S {
        crate::linalg::l1_norm(&self.entries)
    }
}

/// Compiled parameters lowered into one scalar mode, ready to run.
#[derive(Clone, Debug)]
pub struct Network<S> {
    u: Matrix<S>,
    v: Matrix<S>,
    bias: Vec<S>,
    eta: Vec<S>,
    alphabet_size: usize,
}

impl<S: Scalar> Network<S> {
    pub fn new(params: &ElmanParams) -> Self {
        Network {
            u: params.u().map(S::from_rational),
            v: params.v().map(S::from_rational),
            bias: params.bias().iter().map(S::from_rational).collect(),
            eta: params.eta().iter().map(S::from_rational).collect(),
            alphabet_size: params.alphabet_size(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.eta.len()
    }

    /// `h_0 = η` at t = 0.
    pub fn init(&self) -> HiddenState<S> {
        HiddenState { entries: self.eta.clone(), t: 0, consumed: Vec::new() }
    }

    /// `h′ = max(0, U·h + V·r(y) + b)` for one symbol.
    pub fn step(&self, h: &HiddenState<S>, symbol: usize) -> HiddenState<S> {
        assert!(symbol < self.alphabet_size, "symbol index out of range");
        let advanced = matvec(&self.u, &h.entries);
        let entries: Vec<S> = advanced
            .iter()
            .enumerate()
            .map(|(d, a)| {
                a.add(self.v.get(d, symbol)).add(&self.bias[d]).relu()
            })
            .collect();
        let mut consumed = h.consumed.clone();
        consumed.push(symbol);
        HiddenState { entries, t: h.t + 1, consumed }
    }

    /// Folds [`Network::step`] over a whole string from [`Network::init`].
    pub fn run(&self, string: &[usize]) -> HiddenState<S> {
        string.iter().fold(self.init(), |h, &y| self.step(&h, y))
    }
}

/// True when the hidden state after every prefix of `string` matches the
/// automaton exactly: the block of the last symbol read holds the forward
/// vector and everything else is zero. The empty string compares `η` against
/// the initial weights in the dummy block.
pub fn check_invariance(a: &Pfsa, params: &ElmanParams, string: &[usize]) -> bool {
    let net = Network::<Rational>::new(params);
    let mut h = net.init();
    for step in 0..=string.len() {
        let prefix = &string[..step];
        if step > 0 {
            h = net.step(&h, prefix[step - 1]);
        }
        let forward = a.forward_in::<Rational>(prefix);
        let active_block = prefix.last().copied().unwrap_or(0);
        for d in 0..params.dimension() {
            let (q, y) = params.coordinate(d);
            let expected = if y == active_block {
                forward[q].clone()
            } else {
                Rational::zero()
            };
            if h.entries[d] != expected {
                return false;
            }
        }
    }
    true
}

/// The per-step bit requirements of the exact hidden states along a string,
/// from `h_0` to `h_T`, next to the growth constant of the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct PrecisionTrace {
    /// `bits[t]` is the precision of `h_t`; the length is the string length
    /// plus one.
    pub bits: Vec<u64>,
    /// The constant `C` of the linear bound `bits[t] ≤ C·(t+1)`.
    pub bound_constant: u64,
}

impl PrecisionTrace {
    /// Whether every step respects `bits[t] ≤ C·(t+1)`.
    pub fn within_bound(&self) -> bool {
        self.bits
            .iter()
            .enumerate()
            .all(|(t, &bits)| bits <= self.bound_constant * (t as u64 + 1))
    }
}

/// Runs the string in exact mode and records [`vector_precision`] at every
/// step.
pub fn precision_trace(params: &ElmanParams, string: &[usize]) -> PrecisionTrace {
    let net = Network::<Rational>::new(params);
    let mut h = net.init();
    let mut bits = vec![vector_precision(&h.entries)];
    for &y in string {
        h = net.step(&h, y);
        bits.push(vector_precision(&h.entries));
    }
    PrecisionTrace { bits, bound_constant: bound_constant(params) }
}

/// The growth constant of the induction: ψ(D) + max ψ(U entries) +
/// max ψ(η entries) + C′, where C′ is the worst ψ over the entries of
/// `V·r(y) + b` across symbols. Those entries are always 0 or −1 for
/// compiled parameters, so C′ contributes nothing, but it is computed
/// literally rather than assumed.
pub fn bound_constant(params: &ElmanParams) -> u64 {
    let d = params.dimension();
    let psi_d = precision_of(&Rational::from_integer(d as i64));
    let psi_u = params.u().iter().map(precision_of).max().unwrap_or(0);
    let psi_eta = vector_precision(params.eta());
    let c_prime = (0..params.alphabet_size())
        .map(|y| {
            (0..d)
                .map(|row| {
                    let entry = params.v().get(row, y) + &params.bias()[row];
                    precision_of(&entry)
                })
                .max()
                .unwrap_or(0)
        })
        .max()
        .unwrap_or(0);
    psi_d + psi_u + psi_eta + c_prime
}
