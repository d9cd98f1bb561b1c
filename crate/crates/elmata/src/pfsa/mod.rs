//! Probabilistic finite-state automata.
//!
//! A [`Pfsa`] carries an alphabet Σ, states Q, weighted transitions, and
//! per-state initial and final weights. Well-formedness means the initial
//! weights sum to 1 and, for every state, the outgoing transition weights
//! plus the final weight sum to 1 — so each state owns a distribution over
//! "emit a symbol and move" or "stop". The induced language model assigns a
//! string the total weight of all accepting paths that spell it.
//!
//! Weights are exact rationals throughout. A transition with weight 0 and an
//! absent transition are the same thing; the representation stores only
//! nonzero weights and treats everything else as 0.

mod format;
mod random;

pub use format::PfsaError;
pub use random::random_trim;

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::{dot, vecmat, Matrix};
use crate::numerics::{Rational, Scalar};

/// Hard ceiling on sampled string length; only reachable on non-tight input.
const SAMPLE_STEP_CAP: usize = 1_000_000;

/// A probabilistic finite-state automaton over exact rational weights.
///
/// Symbols and states are referred to by index in file order; the helpers
/// [`Pfsa::parse_string`] and [`Pfsa::format_string`] translate between
/// indices and text.
#[derive(Clone, Debug, PartialEq)]
pub struct Pfsa {
    alphabet: Vec<String>,
    states: Vec<String>,
    /// (from, symbol, to) → weight; zero weights are never stored.
    transitions: BTreeMap<(usize, usize, usize), Rational>,
    initial: Vec<Rational>,
    final_weights: Vec<Rational>,
}

/// Per-state prefix probabilities after consuming `prefix`: entry q is the
/// total weight of paths from an initial state that spell the prefix and end
/// in q.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardVector {
    pub entries: Vec<Rational>,
    pub prefix: Vec<usize>,
}

impl ForwardVector {
    /// Total prefix mass Σ_q entries_q.
    pub fn mass(&self) -> Rational {
        self.entries
            .iter()
            .fold(Rational::zero(), |acc, x| &acc + x)
    }
}

/// An exact distribution over Σ̄ = Σ ∪ {EOS}. Entries follow alphabet order
/// with EOS last.
#[derive(Clone, Debug, PartialEq)]
pub struct NextSymbolDistribution {
    pub probs: Vec<Rational>,
}

impl NextSymbolDistribution {
    pub fn symbol(&self, y: usize) -> &Rational {
        &self.probs[y]
    }

    pub fn eos(&self) -> &Rational {
        &self.probs[self.probs.len() - 1]
    }
}

/// A well-formedness violation found by [`Pfsa::validate`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    InitialSum { sum: Rational },
    StateSum { state: String, sum: Rational },
    NegativeInitial { state: String, weight: Rational },
    NegativeFinal { state: String, weight: Rational },
    NegativeTransition { from: String, symbol: String, to: String, weight: Rational },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::InitialSum { sum } => write!(f, "initial weights sum to {sum}"),
            Violation::StateSum { state, sum } => {
                write!(f, "state {state}: outgoing weights plus final weight sum to {sum}")
            }
            Violation::NegativeInitial { state, weight } => {
                write!(f, "state {state}: negative initial weight {weight}")
            }
            Violation::NegativeFinal { state, weight } => {
                write!(f, "state {state}: negative final weight {weight}")
            }
            Violation::NegativeTransition { from, symbol, to, weight } => {
                write!(f, "transition {from} --{symbol}--> {to}: negative weight {weight}")
            }
        }
    }
}

/// Emitted by [`Pfsa::trim`] for a surviving state whose outgoing-plus-final
/// mass no longer sums to 1, i.e. the input automaton leaked probability
/// into removed states and was not tight.
#[derive(Clone, Debug, PartialEq)]
pub struct TrimWarning {
    pub state: String,
    pub sum: Rational,
}

impl fmt::Display for TrimWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "state {}: outgoing plus final weight sums to {} after trimming",
            self.state, self.sum
        )
    }
}

/// Chainable constructor for in-code automata; see [`Pfsa::builder`].
pub struct PfsaBuilder {
    alphabet: Vec<String>,
    states: Vec<String>,
    initial: Vec<Rational>,
    final_weights: Vec<Rational>,
    transitions: BTreeMap<(usize, usize, usize), Rational>,
    error: Option<PfsaError>,
}

impl PfsaBuilder {
    fn symbol(&self, name: &str) -> Result<usize, PfsaError> {
        self.alphabet
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| PfsaError::UnknownSymbol(name.to_string()))
    }

    fn state(&self, name: &str) -> Result<usize, PfsaError> {
        self.states
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| PfsaError::UnknownState(name.to_string()))
    }

    fn try_apply(mut self, op: impl FnOnce(&mut Self) -> Result<(), PfsaError>) -> Self {
        if self.error.is_none() {
            if let Err(e) = op(&mut self) {
                self.error = Some(e);
            }
        }
        self
    }

    pub fn initial(self, state: &str, weight: &str) -> Self {
        self.try_apply(|b| {
            let q = b.state(state)?;
            b.initial[q] = parse_weight(weight, &format!("initial weight of {state}"))?;
            Ok(())
        })
    }

    pub fn final_weight(self, state: &str, weight: &str) -> Self {
        self.try_apply(|b| {
            let q = b.state(state)?;
            b.final_weights[q] = parse_weight(weight, &format!("final weight of {state}"))?;
            Ok(())
        })
    }

    pub fn transition(self, from: &str, symbol: &str, to: &str, weight: &str) -> Self {
        self.try_apply(|b| {
            let key = (b.state(from)?, b.symbol(symbol)?, b.state(to)?);
            let w = parse_weight(weight, &format!("transition ({from}, {symbol}, {to})"))?;
            if b.transitions.contains_key(&key) {
                return Err(PfsaError::DuplicateTransition {
                    from: from.to_string(),
                    symbol: symbol.to_string(),
                    to: to.to_string(),
                });
            }
            if !w.is_zero() {
                b.transitions.insert(key, w);
            }
            Ok(())
        })
    }

    pub fn build(self) -> Result<Pfsa, PfsaError> {
        if let Some(e) = self.error {
            return Err(e);
        }
        Ok(Pfsa {
            alphabet: self.alphabet,
            states: self.states,
            transitions: self.transitions,
            initial: self.initial,
            final_weights: self.final_weights,
        })
    }
}

fn parse_weight(text: &str, context: &str) -> Result<Rational, PfsaError> {
    text.parse().map_err(|source| PfsaError::BadWeight {
        weight: text.to_string(),
        context: context.to_string(),
        source,
    })
}

impl Pfsa {
    /// Starts building an automaton over the given alphabet and state names,
    /// both kept in the given order. Unset weights default to 0.
    pub fn builder<S: AsRef<str>>(alphabet: &[S], states: &[S]) -> PfsaBuilder {
        let alphabet: Vec<String> = alphabet.iter().map(|s| s.as_ref().to_string()).collect();
        let states: Vec<String> = states.iter().map(|s| s.as_ref().to_string()).collect();
        let error = duplicate_name(&alphabet, "symbol").or_else(|| duplicate_name(&states, "state"));
        PfsaBuilder {
            initial: vec![Rational::zero(); states.len()],
            final_weights: vec![Rational::zero(); states.len()],
            alphabet,
            states,
            transitions: BTreeMap::new(),
            error,
        }
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

    pub fn initial(&self) -> &[Rational] {
        &self.initial
    }

    pub fn final_weights(&self) -> &[Rational] {
        &self.final_weights
    }

    pub fn symbol_index(&self, name: &str) -> Option<usize> {
        self.alphabet.iter().position(|s| s == name)
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    /// The weight of (from, symbol, to); 0 when the transition is absent.
    pub fn weight(&self, from: usize, symbol: usize, to: usize) -> Rational {
        self.transitions
            .get(&(from, symbol, to))
            .cloned()
            .unwrap_or_else(Rational::zero)
    }

    /// All stored (nonzero) transitions in (from, symbol, to) order.
    pub fn transitions(&self) -> impl Iterator<Item = (usize, usize, usize, &Rational)> {
        self.transitions.iter().map(|(&(q, y, q2), w)| (q, y, q2, w))
    }

    /// Σ_{q'} w(q, y, q'): the probability of emitting `y` from `q`.
    pub fn emission_weight(&self, q: usize, y: usize) -> Rational {
        self.transitions
            .range((q, y, 0)..=(q, y, usize::MAX))
            .fold(Rational::zero(), |acc, (_, w)| &acc + w)
    }

    /// The |Q|×|Q| matrix of weights for one symbol, materialized on demand.
    pub fn transition_matrix<S: Scalar>(&self, symbol: usize) -> Matrix<S> {
        let n = self.state_count();
        let mut m = Matrix::from_fn(n, n, |_, _| S::zero());
        for (&(q, y, q2), w) in &self.transitions {
            if y == symbol {
                m.set(q, q2, S::from_rational(w));
            }
        }
        m
    }

    /// Σ_y T^(y): one step of mass flow ignoring the symbol read.
    fn total_matrix<S: Scalar>(&self) -> Matrix<S> {
        let n = self.state_count();
        let mut m = Matrix::from_fn(n, n, |_, _| S::zero());
        for (&(q, _, q2), w) in &self.transitions {
            let cur = m.get(q, q2).clone();
            m.set(q, q2, cur.add(&S::from_rational(w)));
        }
        m
    }

    /// Splits text into symbol indices. Single-character alphabets read the
    /// text character by character; otherwise symbols are whitespace-separated.
    pub fn parse_string(&self, text: &str) -> Result<Vec<usize>, PfsaError> {
        parse_symbols(&self.alphabet, text)
    }

    /// Renders symbol indices back to text (inverse of [`Pfsa::parse_string`]).
    pub fn format_string(&self, ids: &[usize]) -> String {
        format_symbols(&self.alphabet, ids)
    }

    /// Checks every well-formedness requirement and reports all violations:
    /// initial weights summing to 1, per-state outgoing-plus-final sums of 1,
    /// and nonnegativity everywhere. An empty report means the automaton is a
    /// valid probability model.
    pub fn validate(&self) -> Vec<Violation> {
        let mut violations = Vec::new();
        for (q, w) in self.initial.iter().enumerate() {
            if w.is_negative() {
                violations.push(Violation::NegativeInitial {
                    state: self.states[q].clone(),
                    weight: w.clone(),
                });
            }
        }
        for (q, w) in self.final_weights.iter().enumerate() {
            if w.is_negative() {
                violations.push(Violation::NegativeFinal {
                    state: self.states[q].clone(),
                    weight: w.clone(),
                });
            }
        }
        for (&(q, y, q2), w) in &self.transitions {
            if w.is_negative() {
                violations.push(Violation::NegativeTransition {
                    from: self.states[q].clone(),
                    symbol: self.alphabet[y].clone(),
                    to: self.states[q2].clone(),
                    weight: w.clone(),
                });
            }
        }
        let initial_sum = self
            .initial
            .iter()
            .fold(Rational::zero(), |acc, w| &acc + w);
        if initial_sum != Rational::one() {
            violations.push(Violation::InitialSum { sum: initial_sum });
        }
        for q in 0..self.state_count() {
            let sum = self.outgoing_plus_final(q);
            if sum != Rational::one() {
                violations.push(Violation::StateSum {
                    state: self.states[q].clone(),
                    sum,
                });
            }
        }
        violations
    }

    fn outgoing_plus_final(&self, q: usize) -> Rational {
        let outgoing = self
            .transitions
            .range((q, 0, 0)..=(q, usize::MAX, usize::MAX))
            .fold(Rational::zero(), |acc, (_, w)| &acc + w);
        &outgoing + &self.final_weights[q]
    }

    /// True when exactly one state has positive initial weight and every
    /// (state, symbol) pair has at most one positively weighted successor.
    pub fn is_deterministic(&self) -> bool {
        let initial_states = self.initial.iter().filter(|w| w.is_positive()).count();
        if initial_states != 1 {
            return false;
        }
        let mut seen: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (&(q, y, _), w) in &self.transitions {
            if w.is_positive() {
                let count = seen.entry((q, y)).or_insert(0);
                *count += 1;
                if *count > 1 {
                    return false;
                }
            }
        }
        true
    }

    /// Removes every state that is not on some positive-weight path from an
    /// initial to a final state. Trimming never renormalizes — dropping
    /// reachable mass would silently change the distribution — so a warning
    /// is returned for each surviving state whose outgoing-plus-final sum no
    /// longer equals 1.
    pub fn trim(&self) -> (Pfsa, Vec<TrimWarning>) {
        let n = self.state_count();
        let positive_edges: Vec<(usize, usize)> = self
            .transitions
            .iter()
            .filter(|(_, w)| w.is_positive())
            .map(|(&(q, _, q2), _)| (q, q2))
            .collect();

        let accessible = reach(
            n,
            self.initial
                .iter()
                .enumerate()
                .filter(|(_, w)| w.is_positive())
                .map(|(q, _)| q),
            &positive_edges,
            false,
        );
        let coaccessible = reach(
            n,
            self.final_weights
                .iter()
                .enumerate()
                .filter(|(_, w)| w.is_positive())
                .map(|(q, _)| q),
            &positive_edges,
            true,
        );

        let keep: Vec<usize> = (0..n)
            .filter(|&q| accessible[q] && coaccessible[q])
            .collect();
        let remap: BTreeMap<usize, usize> =
            keep.iter().enumerate().map(|(new, &old)| (old, new)).collect();

        let trimmed = Pfsa {
            alphabet: self.alphabet.clone(),
            states: keep.iter().map(|&q| self.states[q].clone()).collect(),
            transitions: self
                .transitions
                .iter()
                .filter_map(|(&(q, y, q2), w)| {
                    match (remap.get(&q), remap.get(&q2)) {
                        (Some(&a), Some(&b)) => Some(((a, y, b), w.clone())),
                        _ => None,
                    }
                })
                .collect(),
            initial: keep.iter().map(|&q| self.initial[q].clone()).collect(),
            final_weights: keep.iter().map(|&q| self.final_weights[q].clone()).collect(),
        };

        let warnings = (0..trimmed.state_count())
            .filter_map(|q| {
                let sum = trimmed.outgoing_plus_final(q);
                (sum != Rational::one()).then(|| TrimWarning {
                    state: trimmed.states[q].clone(),
                    sum,
                })
            })
            .collect();

        (trimmed, warnings)
    }

    /// Per-state prefix probabilities in any scalar mode: λ⃗ᵀ ∏_s T^(y_s).
    pub fn forward_in<S: Scalar>(&self, prefix: &[usize]) -> Vec<S> {
        let mut v: Vec<S> = self.initial.iter().map(S::from_rational).collect();
        for &y in prefix {
            let t = self.transition_matrix::<S>(y);
            v = vecmat(&v, &t);
        }
        v
    }

    /// Exact forward vector for a prefix given as symbol indices.
    pub fn forward_ids(&self, prefix: &[usize]) -> ForwardVector {
        ForwardVector {
            entries: self.forward_in::<Rational>(prefix),
            prefix: prefix.to_vec(),
        }
    }

    /// Exact forward vector for a prefix given as text.
    pub fn forward(&self, prefix: &str) -> Result<ForwardVector, PfsaError> {
        Ok(self.forward_ids(&self.parse_string(prefix)?))
    }

    /// The probability of the whole string: forward mass times final weights,
    /// λ⃗ᵀ T^(y_1) ⋯ T^(y_T) ρ⃗.
    pub fn stringsum_in<S: Scalar>(&self, string: &[usize]) -> S {
        let v = self.forward_in::<S>(string);
        let rho: Vec<S> = self.final_weights.iter().map(S::from_rational).collect();
        dot(&v, &rho)
    }

    pub fn stringsum_ids(&self, string: &[usize]) -> Rational {
        self.stringsum_in::<Rational>(string)
    }

    pub fn stringsum(&self, string: &str) -> Result<Rational, PfsaError> {
        Ok(self.stringsum_ids(&self.parse_string(string)?))
    }

    /// The exact next-symbol distribution after a prefix: for each ȳ ∈ Σ̄,
    /// Σ_q p(ȳ|q)·p(q, prefix) normalized by the prefix mass. EOS carries the
    /// final weights. Errors when the prefix has probability zero, where no
    /// conditional is defined.
    pub fn conditional_ids(&self, prefix: &[usize]) -> Result<NextSymbolDistribution, PfsaError> {
        let forward = self.forward_in::<Rational>(prefix);
        let mass = forward.iter().fold(Rational::zero(), |acc, x| &acc + x);
        if mass.is_zero() {
            return Err(PfsaError::ZeroPrefixMass);
        }
        let mut probs = Vec::with_capacity(self.alphabet_size() + 1);
        for y in 0..self.alphabet_size() {
            let score = (0..self.state_count()).fold(Rational::zero(), |acc, q| {
                &acc + &(&self.emission_weight(q, y) * &forward[q])
            });
            probs.push(&score / &mass);
        }
        let eos = (0..self.state_count()).fold(Rational::zero(), |acc, q| {
            &acc + &(&self.final_weights[q] * &forward[q])
        });
        probs.push(&eos / &mass);
        Ok(NextSymbolDistribution { probs })
    }

    pub fn conditional(&self, prefix: &str) -> Result<NextSymbolDistribution, PfsaError> {
        self.conditional_ids(&self.parse_string(prefix)?)
    }

    /// The δ-perturbed automaton: every transition weight (including the
    /// implicit zeros, so the result is fully connected) and every final
    /// weight moves to (w + δ)/(1 + (|Σ||Q| + 1)δ). Initial weights are kept.
    /// Per-state sums stay exactly 1, and for δ > 0 the result has full
    /// support.
    pub fn perturb(&self, delta: &Rational) -> Result<Pfsa, PfsaError> {
        if delta.is_negative() {
            return Err(PfsaError::NegativeDelta(delta.clone()));
        }
        let count = Rational::from_integer((self.alphabet_size() * self.state_count() + 1) as i64);
        let denom = &Rational::one() + &(&count * delta);
        let mut transitions = BTreeMap::new();
        for q in 0..self.state_count() {
            for y in 0..self.alphabet_size() {
                for q2 in 0..self.state_count() {
                    let w = &(&self.weight(q, y, q2) + delta) / &denom;
                    if !w.is_zero() {
                        transitions.insert((q, y, q2), w);
                    }
                }
            }
        }
        let final_weights = self
            .final_weights
            .iter()
            .map(|rho| &(rho + delta) / &denom)
            .collect();
        Ok(Pfsa {
            alphabet: self.alphabet.clone(),
            states: self.states.clone(),
            transitions,
            initial: self.initial.clone(),
            final_weights,
        })
    }

    /// Total probability mass of strings of exactly length `t`:
    /// λ⃗ᵀ (Σ_y T^(y))^t ρ⃗.
    pub fn length_mass_in<S: Scalar>(&self, t: usize) -> S {
        let total = self.total_matrix::<S>();
        let mut v: Vec<S> = self.initial.iter().map(S::from_rational).collect();
        for _ in 0..t {
            v = vecmat(&v, &total);
        }
        let rho: Vec<S> = self.final_weights.iter().map(S::from_rational).collect();
        dot(&v, &rho)
    }

    pub fn length_mass(&self, t: usize) -> Rational {
        self.length_mass_in::<Rational>(t)
    }

    /// The smallest M ≤ `max_len` such that the mass of strings longer than
    /// M is below ε, or `None` when no such cutoff exists within the guard —
    /// as happens for automata that are not tight.
    pub fn tail_cutoff(&self, epsilon: &Rational, max_len: usize) -> Option<usize> {
        let total = self.total_matrix::<Rational>();
        let rho = self.final_weights.clone();
        let mut v = self.initial.clone();
        let mut cumulative = Rational::zero();
        for m in 0..=max_len {
            cumulative = &cumulative + &dot(&v, &rho);
            if &(&Rational::one() - &cumulative) < epsilon {
                return Some(m);
            }
            v = vecmat(&v, &total);
        }
        None
    }

    /// Draws one string by ancestral sampling: an initial state from λ, then
    /// repeatedly either a weighted transition or, with the final weight,
    /// EOS. Deterministic for a fixed seed. The automaton should be valid
    /// and trim; on non-tight input the walk may fail to halt, so it is cut
    /// off (with an error) after a million steps.
    pub fn sample(&self, seed: u64) -> Result<String, PfsaError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = pick_weighted(
            &mut rng,
            self.initial
                .iter()
                .enumerate()
                .filter(|(_, w)| w.is_positive())
                .map(|(q, w)| (q, w.to_f64())),
        );
        let mut out = Vec::new();
        for _ in 0..SAMPLE_STEP_CAP {
            // Options from `state`: each positive outgoing transition, then EOS.
            let mut options: Vec<(Option<(usize, usize)>, f64)> = self
                .transitions
                .range((state, 0, 0)..=(state, usize::MAX, usize::MAX))
                .filter(|(_, w)| w.is_positive())
                .map(|(&(_, y, q2), w)| (Some((y, q2)), w.to_f64()))
                .collect();
            options.push((None, self.final_weights[state].to_f64()));
            match pick_weighted(&mut rng, options.into_iter()) {
                Some((y, q2)) => {
                    out.push(y);
                    state = q2;
                }
                None => return Ok(self.format_string(&out)),
            }
        }
        Err(PfsaError::SampleOverflow(SAMPLE_STEP_CAP))
    }
}

/// Weighted choice by cumulative scan of a single uniform draw. Weights must
/// be nonnegative with positive total.
fn pick_weighted<R: Rng, T>(rng: &mut R, options: impl Iterator<Item = (T, f64)>) -> T {
    let mut options: Vec<(T, f64)> = options.collect();
    let total: f64 = options.iter().map(|(_, w)| w).sum();
    assert!(total > 0.0, "no positive-weight option to sample");
    let mut u = rng.random::<f64>() * total;
    // The final option absorbs any rounding slack in the cumulative scan.
    let (last, _) = options.pop().expect("at least one option");
    for (choice, w) in options {
        u -= w;
        if u <= 0.0 {
            return choice;
        }
    }
    last
}

/// Text → symbol indices against an ordered alphabet; character by character
/// when every symbol is a single character, whitespace-separated otherwise.
pub(crate) fn parse_symbols(alphabet: &[String], text: &str) -> Result<Vec<usize>, PfsaError> {
    let lookup = |token: &str| {
        alphabet
            .iter()
            .position(|s| s == token)
            .ok_or_else(|| PfsaError::UnknownSymbol(token.to_string()))
    };
    if alphabet.iter().all(|s| s.chars().count() == 1) {
        text.chars().map(|c| lookup(&c.to_string())).collect()
    } else {
        text.split_whitespace().map(lookup).collect()
    }
}

pub(crate) fn format_symbols(alphabet: &[String], ids: &[usize]) -> String {
    let parts: Vec<&str> = ids.iter().map(|&y| alphabet[y].as_str()).collect();
    if alphabet.iter().all(|s| s.chars().count() == 1) {
        parts.concat()
    } else {
        parts.join(" ")
    }
}

fn reach(
    n: usize,
    seeds: impl Iterator<Item = usize>,
    edges: &[(usize, usize)],
    reversed: bool,
) -> Vec<bool> {
    let mut seen = vec![false; n];
    let mut stack: Vec<usize> = seeds.collect();
    for &q in &stack {
        seen[q] = true;
    }
    while let Some(q) = stack.pop() {
        for &(a, b) in edges {
            let (src, dst) = if reversed { (b, a) } else { (a, b) };
            if src == q && !seen[dst] {
                seen[dst] = true;
                stack.push(dst);
            }
        }
    }
    seen
}

fn duplicate_name(names: &[String], kind: &str) -> Option<PfsaError> {
    let mut seen = BTreeMap::new();
    for name in names {
        if seen.insert(name.clone(), ()).is_some() {
            return Some(PfsaError::DuplicateName {
                kind: kind.to_string(),
                name: name.clone(),
            });
        }
    }
    None
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::Pfsa;

    /// The non-determinizable two-symbol automaton: q0 forks on `a` into two
    /// states with different loop and stopping weights.
    pub fn fork_asymmetric() -> Pfsa {
        Pfsa::builder(&["a", "b"], &["q0", "q1", "q2"])
            .initial("q0", "1")
            .transition("q0", "a", "q1", "2/5")
            .transition("q0", "a", "q2", "3/5")
            .transition("q1", "b", "q1", "9/10")
            .transition("q2", "b", "q2", "1/10")
            .final_weight("q1", "1/10")
            .final_weight("q2", "9/10")
            .build()
            .unwrap()
    }

    /// The determinizable fork: both branches loop on `b` with weight 9/10
    /// and stop with 1/10.
    pub fn fork_symmetric() -> Pfsa {
        Pfsa::builder(&["a", "b"], &["q0", "q1", "q2"])
            .initial("q0", "1")
            .transition("q0", "a", "q1", "2/5")
            .transition("q0", "a", "q2", "3/5")
            .transition("q1", "b", "q1", "9/10")
            .transition("q2", "b", "q2", "9/10")
            .final_weight("q1", "1/10")
            .final_weight("q2", "1/10")
            .build()
            .unwrap()
    }

    /// The deterministic version of [`fork_symmetric`].
    pub fn chain_deterministic() -> Pfsa {
        Pfsa::builder(&["a", "b"], &["q0", "q1"])
            .initial("q0", "1")
            .transition("q0", "a", "q1", "1")
            .transition("q1", "b", "q1", "9/10")
            .final_weight("q1", "1/10")
            .build()
            .unwrap()
    }

    /// A single state looping on `a` with weight 1 and never stopping: all
    /// mass escapes to infinite strings.
    pub fn nontight() -> Pfsa {
        Pfsa::builder(&["a"], &["s0"])
            .initial("s0", "1")
            .transition("s0", "a", "s0", "1")
            .build()
            .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::numerics::Rational;
    use proptest::prelude::*;

    fn rat(s: &str) -> Rational {
        s.parse().unwrap()
    }

    fn rats(xs: &[&str]) -> Vec<Rational> {
        xs.iter().map(|s| rat(s)).collect()
    }

    #[test]
    fn valid_fixtures_produce_empty_reports() {
        for a in [fork_asymmetric(), fork_symmetric(), chain_deterministic(), nontight()] {
            assert!(a.validate().is_empty());
        }
    }

    #[test]
    fn validate_reports_bad_initial_sum() {
        let a = Pfsa::builder(&["a"], &["q0", "q1", "q2"])
            .initial("q0", "1/2")
            .final_weight("q0", "1")
            .final_weight("q1", "1")
            .final_weight("q2", "1")
            .build()
            .unwrap();
        let report = a.validate();
        assert_eq!(report, vec![Violation::InitialSum { sum: rat("1/2") }]);
        assert_eq!(report[0].to_string(), "initial weights sum to 1/2");
    }

    #[test]
    fn validate_names_the_unnormalized_state() {
        let a = Pfsa::builder(&["a"], &["q0", "q1"])
            .initial("q0", "1")
            .transition("q0", "a", "q1", "11/10")
            .final_weight("q1", "1")
            .build()
            .unwrap();
        let report = a.validate();
        assert_eq!(
            report,
            vec![Violation::StateSum { state: "q0".into(), sum: rat("11/10") }]
        );
        assert!(report[0].to_string().contains("q0"));
    }

    #[test]
    fn validate_flags_negative_weights() {
        let a = Pfsa::builder(&["a"], &["q0"])
            .initial("q0", "1")
            .transition("q0", "a", "q0", "-1/2")
            .final_weight("q0", "3/2")
            .build()
            .unwrap();
        assert!(a
            .validate()
            .iter()
            .any(|v| matches!(v, Violation::NegativeTransition { .. })));
    }

    #[test]
    fn determinism_of_the_three_figures() {
        assert!(!fork_symmetric().is_deterministic());
        assert!(chain_deterministic().is_deterministic());
        assert!(!fork_asymmetric().is_deterministic());
    }

    #[test]
    fn trim_keeps_an_already_trim_automaton() {
        let a = fork_asymmetric();
        let (trimmed, warnings) = a.trim();
        assert_eq!(trimmed, a);
        assert!(warnings.is_empty());
    }

    #[test]
    fn trim_drops_unreachable_states_silently() {
        let a = Pfsa::builder(&["a", "b"], &["q0", "q1", "q2", "q3"])
            .initial("q0", "1")
            .transition("q0", "a", "q1", "2/5")
            .transition("q0", "a", "q2", "3/5")
            .transition("q1", "b", "q1", "9/10")
            .transition("q2", "b", "q2", "1/10")
            .transition("q3", "a", "q3", "1")
            .final_weight("q1", "1/10")
            .final_weight("q2", "9/10")
            .build()
            .unwrap();
        let (trimmed, warnings) = a.trim();
        assert_eq!(trimmed, fork_asymmetric());
        assert!(warnings.is_empty());
    }

    #[test]
    fn trim_warns_when_positive_mass_is_dropped() {
        // q1 has no path to a final state, so it is removed and q0 loses
        // probability mass.
        let a = Pfsa::builder(&["a"], &["q0", "q1"])
            .initial("q0", "1")
            .transition("q0", "a", "q0", "1/2")
            .transition("q0", "a", "q1", "1/4")
            .transition("q1", "a", "q1", "1")
            .final_weight("q0", "1/4")
            .build()
            .unwrap();
        let (trimmed, warnings) = a.trim();
        assert_eq!(trimmed.states(), &["q0".to_string()]);
        assert_eq!(warnings.len(), 1);
        assert_eq!(warnings[0].state, "q0");
        assert_eq!(warnings[0].sum, rat("3/4"));
    }

    #[test]
    fn forward_examples() {
        let a = fork_asymmetric();
        assert_eq!(a.forward("").unwrap().entries, rats(&["1", "0", "0"]));
        assert_eq!(a.forward("a").unwrap().entries, rats(&["0", "2/5", "3/5"]));
        assert_eq!(a.forward("ab").unwrap().entries, rats(&["0", "9/25", "3/50"]));
        match a.forward("ax") {
            Err(PfsaError::UnknownSymbol(s)) => assert_eq!(s, "x"),
            other => panic!("expected unknown-symbol error, got {other:?}"),
        }
    }

    #[test]
    fn stringsum_examples() {
        let a = fork_asymmetric();
        assert_eq!(a.stringsum("a").unwrap(), rat("29/50"));
        assert_eq!(a.stringsum("ab").unwrap(), rat("9/100"));
        assert_eq!(a.stringsum("b").unwrap(), rat("0"));
    }

    #[test]
    fn conditional_examples() {
        let a = fork_asymmetric();
        let after_a = a.conditional("a").unwrap();
        assert_eq!(after_a.probs, rats(&["0", "21/50", "29/50"]));
        let at_start = a.conditional("").unwrap();
        assert_eq!(at_start.probs, rats(&["1", "0", "0"]));
        assert!(matches!(a.conditional("b"), Err(PfsaError::ZeroPrefixMass)));
    }

    #[test]
    fn conditionals_sum_to_one_exactly() {
        let a = fork_asymmetric();
        for prefix in ["", "a", "ab", "abbb"] {
            let c = a.conditional(prefix).unwrap();
            let sum = c.probs.iter().fold(Rational::zero(), |acc, p| &acc + p);
            assert_eq!(sum, Rational::one(), "prefix {prefix:?}");
        }
    }

    #[test]
    fn markov_property_on_equal_normalized_forward_vectors() {
        // In the symmetric fork both loop weights are 9/10, so consuming
        // extra `b`s rescales the forward vector without changing its
        // direction; the conditionals must agree exactly.
        let a = fork_symmetric();
        let f1 = a.forward("ab").unwrap();
        let f2 = a.forward("abb").unwrap();
        let m1 = f1.mass();
        let m2 = f2.mass();
        let normalized1: Vec<Rational> = f1.entries.iter().map(|x| x / &m1).collect();
        let normalized2: Vec<Rational> = f2.entries.iter().map(|x| x / &m2).collect();
        assert_eq!(normalized1, normalized2);
        assert_eq!(a.conditional("ab").unwrap(), a.conditional("abb").unwrap());
    }

    #[test]
    fn perturb_with_zero_delta_is_the_identity() {
        let a = fork_asymmetric();
        assert_eq!(a.perturb(&Rational::zero()).unwrap(), a);
    }

    #[test]
    fn perturb_example_weight() {
        // |Σ||Q| + 1 = 7, so (2/5 + 1/100)/(1 + 7/100) = 41/107.
        let a = fork_asymmetric();
        let perturbed = a.perturb(&rat("1/100")).unwrap();
        assert_eq!(perturbed.weight(0, 0, 1), rat("41/107"));
        assert!(perturbed.validate().is_empty());
        // Fully connected with positive final weights everywhere.
        for q in 0..3 {
            assert!(perturbed.final_weights()[q].is_positive());
            for y in 0..2 {
                for q2 in 0..3 {
                    assert!(perturbed.weight(q, y, q2).is_positive());
                }
            }
        }
    }

    #[test]
    fn perturb_rejects_negative_delta() {
        let a = fork_asymmetric();
        assert!(matches!(
            a.perturb(&rat("-1/10")),
            Err(PfsaError::NegativeDelta(_))
        ));
    }

    #[test]
    fn length_mass_examples() {
        let a = fork_asymmetric();
        assert_eq!(a.length_mass(0), rat("0"));
        assert_eq!(a.length_mass(1), rat("29/50"));
        assert_eq!(a.length_mass(2), rat("9/100"));
    }

    #[test]
    fn cumulative_length_mass_is_monotone_and_bounded() {
        let a = fork_asymmetric();
        let mut cumulative = Rational::zero();
        let mut previous = Rational::zero();
        for t in 0..=16 {
            cumulative = &cumulative + &a.length_mass(t);
            assert!(cumulative >= previous);
            assert!(cumulative <= Rational::one());
            previous = cumulative.clone();
        }
    }

    #[test]
    fn tail_cutoff_examples() {
        let a = fork_asymmetric();
        // Mass of length ≤ 1 is 29/50, leaving a tail of 21/50 < 1/2.
        assert_eq!(a.tail_cutoff(&rat("1/2"), 100), Some(1));
        // At M = 0 the tail is exactly 1, which is not < 1; M = 1 is the
        // first cutoff for ε = 1 as well.
        assert_eq!(a.tail_cutoff(&rat("1"), 100), Some(1));
        assert_eq!(nontight().tail_cutoff(&rat("1/2"), 100), None);
    }

    #[test]
    fn restricted_tvd_to_perturbations_shrinks_with_delta() {
        let a = fork_asymmetric();
        let strings = crate::equivalence::enumerate(a.alphabet_size(), 8).unwrap();
        let tvd_at = |delta: &str| {
            let perturbed = a.perturb(&rat(delta)).unwrap();
            let diffs: Rational = strings
                .iter()
                .map(|s| (&a.stringsum_ids(s) - &perturbed.stringsum_ids(s)).abs())
                .fold(Rational::zero(), |acc, d| &acc + &d);
            &diffs / &Rational::from_integer(2)
        };
        let coarse = tvd_at("1/100");
        let medium = tvd_at("1/1000");
        let fine = tvd_at("1/10000");
        assert!(coarse > medium);
        assert!(medium > fine);
    }

    #[test]
    fn samples_respect_the_support() {
        let a = fork_asymmetric();
        for seed in 0..50 {
            let s = a.sample(seed).unwrap();
            assert!(s.starts_with('a'), "sampled {s:?}");
            assert!(s[1..].chars().all(|c| c == 'b'), "sampled {s:?}");
        }
        let d = chain_deterministic();
        for seed in 0..20 {
            let s = d.sample(seed).unwrap();
            assert!(s.starts_with('a') && s[1..].chars().all(|c| c == 'b'));
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let a = fork_asymmetric();
        assert_eq!(a.sample(42).unwrap(), a.sample(42).unwrap());
    }

    #[test]
    fn builder_rejects_bad_input() {
        assert!(matches!(
            Pfsa::builder(&["a"], &["q0"]).initial("qX", "1").build(),
            Err(PfsaError::UnknownState(_))
        ));
        assert!(matches!(
            Pfsa::builder(&["a"], &["q0"])
                .transition("q0", "a", "q0", "1/2")
                .transition("q0", "a", "q0", "1/2")
                .build(),
            Err(PfsaError::DuplicateTransition { .. })
        ));
        assert!(matches!(
            Pfsa::builder(&["a"], &["q0"]).initial("q0", "1/0").build(),
            Err(PfsaError::BadWeight { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn perturbed_automata_always_validate(seed in 0u64..500, num in 0i64..50, den in 1i64..50) {
            let a = random_trim(seed, 4, 3);
            prop_assert!(a.validate().is_empty());
            let delta = Rational::ratio(num, den * 10);
            let perturbed = a.perturb(&delta).unwrap();
            prop_assert!(perturbed.validate().is_empty());
        }

        #[test]
        fn forward_mass_never_exceeds_one(seed in 0u64..200, len in 0usize..6) {
            let a = random_trim(seed, 4, 3);
            let string: Vec<usize> = (0..len).map(|i| (seed as usize + i) % a.alphabet_size()).collect();
            let mass = a.forward_ids(&string).mass();
            prop_assert!(mass <= Rational::one());
            prop_assert!(mass >= Rational::zero());
        }
    }
}
