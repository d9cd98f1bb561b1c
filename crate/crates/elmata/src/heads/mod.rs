//! Output heads: from a hidden state to a next-symbol distribution.
//!
//! Three heads are provided. The sparsemax head ℓ1-normalizes the hidden
//! state, multiplies by the output matrix, and projects with [`sparsemax`] —
//! since the scores already lie on the simplex, the projection is the
//! identity and the result reproduces the automaton's conditionals exactly.
//! The softmax-log head reaches the same distribution through a logarithm
//! into the extended reals followed by a softmax, the route that works when
//! the projection must be a softmax. The MLP head replaces the exact
//! logarithm with a fitted single-hidden-layer ReLU network, which keeps
//! every output finite at the price of an approximation error that is
//! measured, not assumed; see [`mlp`].

pub mod mlp;

pub use mlp::{fit_mlp_log_head, LrSchedule, MlpFitConfig, MlpFitReport, MlpHead};

use thiserror::Error;

use crate::compiler::OutputMatrix;
use crate::linalg::{l1_norm, matvec};
use crate::numerics::{ExtendedReal, Rational, Scalar};

#[derive(Debug, Error)]
pub enum HeadError {
    #[error("zero-probability prefix")]
    ZeroPrefix,
    #[error("empty support: every logit is -inf")]
    EmptySupport,
    #[error("negative entry {0} where a probability was expected")]
    NegativeEntry(f64),
    #[error("the MLP head only evaluates in float mode")]
    ExactUnsupported,
    #[error("exact mode requires temperature 1, got {0}")]
    ExactRequiresUnitTemperature(f64),
    #[error("temperature must be positive, got {0}")]
    BadTemperature(f64),
    #[error("no samples to fit")]
    EmptySamples,
    #[error("sample {index}: E·h has a non-positive entry; the automaton lacks full support")]
    SampleNotPositive { index: usize },
}

/// Euclidean projection onto the probability simplex, computed by the exact
/// sort-and-threshold rule: sort descending, keep the largest support size k
/// with `1 + k·x_(k) > Σ_{j≤k} x_(j)`, subtract the threshold
/// `τ = (Σ_{j≤k} x_(j) − 1)/k`, and clip at zero.
///
/// Identity on inputs already on the simplex, idempotent, and invariant
/// under constant shifts — exactly so in rational arithmetic.
pub fn sparsemax<S: Scalar>(x: &[S]) -> Vec<S> {
    assert!(!x.is_empty(), "sparsemax of an empty vector");
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("sparsemax needs comparable entries"));
    let mut cumulative = S::zero();
    let mut support = 0usize;
    let mut support_sum = S::zero();
    for (k, value) in sorted.iter().enumerate() {
        cumulative = cumulative.add(value);
        let candidates = S::one().add(&S::from_usize(k + 1).mul(value));
        if candidates > cumulative {
            support = k + 1;
            support_sum = cumulative.clone();
        }
    }
    let tau = support_sum.sub(&S::one()).div(&S::from_usize(support));
    x.iter().map(|v| v.sub(&tau).relu()).collect()
}

/// Softmax over extended-real logits with inverse temperature λ:
/// `exp(λx_n)/Σ exp(λx_m)`, where `−∞` entries receive exactly zero mass.
/// Finite logits are shifted by their maximum before exponentiation, which
/// changes nothing mathematically and keeps the floats in range. If any
/// logit is `+∞`, the mass splits evenly over the infinite entries; if every
/// logit is `−∞` there is nothing to normalize and the call fails.
pub fn softmax(x: &[ExtendedReal], temperature: f64) -> Result<Vec<f64>, HeadError> {
    if temperature <= 0.0 {
        return Err(HeadError::BadTemperature(temperature));
    }
    let infinite = x.iter().filter(|e| matches!(e, ExtendedReal::PosInf)).count();
    if infinite > 0 {
        let share = 1.0 / infinite as f64;
        return Ok(x
            .iter()
            .map(|e| if matches!(e, ExtendedReal::PosInf) { share } else { 0.0 })
            .collect());
    }
    let max_finite = x
        .iter()
        .filter_map(|e| match e {
            ExtendedReal::Finite(v) => Some(*v),
            _ => None,
        })
        .fold(f64::NEG_INFINITY, f64::max);
    if max_finite == f64::NEG_INFINITY {
        return Err(HeadError::EmptySupport);
    }
    let weights: Vec<f64> = x
        .iter()
        .map(|e| match e {
            ExtendedReal::NegInf => 0.0,
            ExtendedReal::Finite(v) => (temperature * (v - max_finite)).exp(),
            ExtendedReal::PosInf => unreachable!("handled above"),
        })
        .collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Elementwise logarithm into the extended reals: `log x` for positive
/// entries and `−∞` for zeros, so that a following softmax assigns zero mass
/// exactly where the input had none. Negative entries are a caller bug and
/// are rejected.
pub fn extended_log(x: &[f64]) -> Result<Vec<ExtendedReal>, HeadError> {
    x.iter()
        .map(|&v| {
            if v < 0.0 {
                Err(HeadError::NegativeEntry(v))
            } else if v == 0.0 {
                Ok(ExtendedReal::NegInf)
            } else {
                Ok(ExtendedReal::Finite(v.ln()))
            }
        })
        .collect()
}

/// Lipschitz constant of a length-T string probability as a function of its
/// per-step logit columns, in the ∞-norm: (T + 1)·√dim·λ. The √dim factor is
/// the tight norm-equivalence constant between ‖·‖₂ and ‖·‖∞.
pub fn lipschitz_constant(string_length: usize, temperature: f64, dim: usize) -> f64 {
    (string_length as f64 + 1.0) * (dim as f64).sqrt() * temperature
}

/// The identity-on-the-simplex head: conditionals are
/// `sparsemax(E·h/‖h‖₁)`.
#[derive(Clone, Debug)]
pub struct SparsemaxHead {
    output: OutputMatrix,
}

impl SparsemaxHead {
    pub fn new(output: OutputMatrix) -> Self {
        SparsemaxHead { output }
    }

    pub fn output(&self) -> &OutputMatrix {
        &self.output
    }

    /// Next-symbol distribution over Σ̄ for a hidden state with positive
    /// mass. Exact in rational mode: `E·h/‖h‖₁` is already on the simplex,
    /// and sparsemax fixes it.
    pub fn conditional<S: Scalar>(&self, h: &[S]) -> Result<Vec<S>, HeadError> {
        let mass = l1_norm(h);
        if mass.is_zero() {
            return Err(HeadError::ZeroPrefix);
        }
        let normalized: Vec<S> = h.iter().map(|v| v.div(&mass)).collect();
        let e = self.output.matrix().map(S::from_rational);
        Ok(sparsemax(&matvec(&e, &normalized)))
    }
}

/// The softmax head over logarithmic scores: conditionals are
/// `softmax(loḡ(E·h))` where `loḡ` maps zeros to −∞.
#[derive(Clone, Debug)]
pub struct SoftmaxLogHead {
    output: OutputMatrix,
    temperature: f64,
}

impl SoftmaxLogHead {
    pub fn new(output: OutputMatrix) -> Self {
        SoftmaxLogHead { output, temperature: 1.0 }
    }

    pub fn with_temperature(output: OutputMatrix, temperature: f64) -> Self {
        SoftmaxLogHead { output, temperature }
    }

    pub fn output(&self) -> &OutputMatrix {
        &self.output
    }

    /// Exact-mode conditional. Softmax after a logarithm just normalizes the
    /// positive scores, so in rational arithmetic the distribution is
    /// `(E·h)/Σ(E·h)` computed in closed form — the same function, with
    /// zeros staying exactly zero. Only unit temperature has this closed
    /// form.
    pub fn conditional_exact(&self, h: &[Rational]) -> Result<Vec<Rational>, HeadError> {
        if self.temperature != 1.0 {
            return Err(HeadError::ExactRequiresUnitTemperature(self.temperature));
        }
        let mass = l1_norm(h);
        if mass.is_zero() {
            return Err(HeadError::ZeroPrefix);
        }
        let scores = matvec(self.output.matrix(), h);
        let total = scores.iter().fold(Rational::zero(), |acc, s| &acc + s);
        Ok(scores.iter().map(|s| s / &total).collect())
    }

    /// Float-mode conditional, computed literally as
    /// `softmax(loḡ(E·h), λ)`.
    pub fn conditional_float(&self, h: &[f64]) -> Result<Vec<f64>, HeadError> {
        let mass = l1_norm(h);
        if mass.is_zero() {
            return Err(HeadError::ZeroPrefix);
        }
        let e = self.output.matrix().map(Rational::to_f64);
        let logits = extended_log(&matvec(&e, h))?;
        softmax(&logits, self.temperature)
    }
}

/// Which output head a verification run uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadKind {
    Sparsemax,
    SoftmaxLog,
    Mlp,
}

impl std::fmt::Display for HeadKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HeadKind::Sparsemax => write!(f, "sparsemax"),
            HeadKind::SoftmaxLog => write!(f, "softmax-log"),
            HeadKind::Mlp => write!(f, "mlp"),
        }
    }
}

impl serde::Serialize for HeadKind {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl std::str::FromStr for HeadKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sparsemax" => Ok(HeadKind::Sparsemax),
            "softmax-log" => Ok(HeadKind::SoftmaxLog),
            "mlp" => Ok(HeadKind::Mlp),
            other => Err(format!(
                "unknown head `{other}`, expected `sparsemax`, `softmax-log`, or `mlp`"
            )),
        }
    }
}

/// A constructed output head of any kind.
#[derive(Clone, Debug)]
pub enum Head {
    Sparsemax(SparsemaxHead),
    SoftmaxLog(SoftmaxLogHead),
    Mlp(MlpHead),
}

impl Head {
    pub fn kind(&self) -> HeadKind {
        match self {
            Head::Sparsemax(_) => HeadKind::Sparsemax,
            Head::SoftmaxLog(_) => HeadKind::SoftmaxLog,
            Head::Mlp(_) => HeadKind::Mlp,
        }
    }
}

/// Head evaluation in one scalar mode. The two implementations let the same
/// language-model pipeline run over rationals and floats.
pub trait HeadEval<S: Scalar> {
    fn next_distribution(&self, h: &[S]) -> Result<Vec<S>, HeadError>;
}

impl HeadEval<Rational> for Head {
    fn next_distribution(&self, h: &[Rational]) -> Result<Vec<Rational>, HeadError> {
        match self {
            Head::Sparsemax(head) => head.conditional(h),
            Head::SoftmaxLog(head) => head.conditional_exact(h),
            Head::Mlp(_) => Err(HeadError::ExactUnsupported),
        }
    }
}

impl HeadEval<f64> for Head {
    fn next_distribution(&self, h: &[f64]) -> Result<Vec<f64>, HeadError> {
        match self {
            Head::Sparsemax(head) => head.conditional(h),
            Head::SoftmaxLog(head) => head.conditional_float(h),
            Head::Mlp(head) => Ok(head.conditional(h)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{compile, output_matrix};
    use crate::numerics::ExtendedReal::{Finite, NegInf, PosInf};
    use crate::pfsa::fixtures::*;
    use crate::runtime::Network;
    use proptest::prelude::*;

    fn rat(s: &str) -> Rational {
        s.parse().unwrap()
    }

    fn rats(xs: &[&str]) -> Vec<Rational> {
        xs.iter().map(|s| rat(s)).collect()
    }

    #[test]
    fn sparsemax_is_the_identity_on_the_simplex() {
        let x = rats(&["29/50", "21/50"]);
        assert_eq!(sparsemax(&x), x);
        let y = rats(&["1/3", "1/6", "1/2"]);
        assert_eq!(sparsemax(&y), y);
    }

    #[test]
    fn sparsemax_symmetry_forces_uniform() {
        let x = rats(&["1/2", "1/2", "1/2"]);
        assert_eq!(sparsemax(&x), rats(&["1/3", "1/3", "1/3"]));
    }

    #[test]
    fn sparsemax_saturates_far_coordinates() {
        let x = rats(&["2", "0"]);
        assert_eq!(sparsemax(&x), rats(&["1", "0"]));
        // Brute-force oracle: no grid point of the 1-simplex comes closer to
        // (2, 0) than the projection does.
        let projected = [1.0f64, 0.0];
        let distance =
            |z: &[f64; 2]| ((z[0] - 2.0).powi(2) + (z[1] - 0.0).powi(2)).sqrt();
        let best = distance(&projected);
        for k in 0..=1000 {
            let t = k as f64 / 1000.0;
            assert!(distance(&[t, 1.0 - t]) >= best - 1e-12);
        }
    }

    #[test]
    fn softmax_examples() {
        let thirds = softmax(&[Finite(0.0), Finite(0.0), Finite(0.0)], 1.0).unwrap();
        for p in &thirds {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        let from_logs = softmax(&[Finite((0.2f64).ln()), Finite((0.8f64).ln())], 1.0).unwrap();
        assert!((from_logs[0] - 0.2).abs() < 1e-15);
        assert!((from_logs[1] - 0.8).abs() < 1e-15);
        let with_zero = softmax(&[Finite(0.0), NegInf], 1.0).unwrap();
        assert_eq!(with_zero, vec![1.0, 0.0]);
        assert!(matches!(
            softmax(&[NegInf, NegInf], 1.0),
            Err(HeadError::EmptySupport)
        ));
        let spiked = softmax(&[Finite(3.0), PosInf, NegInf], 1.0).unwrap();
        assert_eq!(spiked, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn softmax_temperature_sharpens() {
        let cool = softmax(&[Finite(0.0), Finite(1.0)], 1.0).unwrap();
        let hot = softmax(&[Finite(0.0), Finite(1.0)], 2.0).unwrap();
        assert!(hot[1] > cool[1]);
        assert!(matches!(
            softmax(&[Finite(0.0)], 0.0),
            Err(HeadError::BadTemperature(_))
        ));
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let x = [Finite(0.3), Finite(-1.2), Finite(2.0)];
        let shifted = [Finite(0.3 + 7.5), Finite(-1.2 + 7.5), Finite(2.0 + 7.5)];
        let a = softmax(&x, 1.0).unwrap();
        let b = softmax(&shifted, 1.0).unwrap();
        for (pa, pb) in a.iter().zip(&b) {
            assert!((pa - pb).abs() < 1e-12);
        }
    }

    #[test]
    fn extended_log_examples() {
        assert_eq!(extended_log(&[1.0]).unwrap(), vec![Finite(0.0)]);
        assert_eq!(extended_log(&[0.0]).unwrap(), vec![NegInf]);
        let mixed = extended_log(&[0.5, 0.0, 2.0]).unwrap();
        assert_eq!(mixed[0], Finite(0.5f64.ln()));
        assert_eq!(mixed[1], NegInf);
        assert_eq!(mixed[2], Finite(2.0f64.ln()));
        assert!(matches!(
            extended_log(&[-0.1]),
            Err(HeadError::NegativeEntry(_))
        ));
    }

    #[test]
    fn sparsemax_head_reproduces_the_conditionals() {
        let a = fork_asymmetric();
        let head = SparsemaxHead::new(output_matrix(&a));
        let net = Network::<Rational>::new(&compile(&a));

        let after_a = head.conditional(&net.run(&[0]).entries).unwrap();
        assert_eq!(after_a, rats(&["0", "21/50", "29/50"]));

        let after_ab = head.conditional(&net.run(&[0, 1]).entries).unwrap();
        assert_eq!(after_ab, rats(&["0", "11/14", "3/14"]));

        assert!(matches!(
            head.conditional(&net.run(&[1]).entries),
            Err(HeadError::ZeroPrefix)
        ));
    }

    #[test]
    fn softmax_log_head_matches_sparsemax_head_exactly() {
        let a = fork_asymmetric();
        let sparse = SparsemaxHead::new(output_matrix(&a));
        let softlog = SoftmaxLogHead::new(output_matrix(&a));
        let net = Network::<Rational>::new(&compile(&a));
        // Every positive-mass prefix of the support, a·b^n.
        for n in 0..6 {
            let mut prefix = vec![0usize];
            prefix.extend(std::iter::repeat_n(1usize, n));
            let h = net.run(&prefix);
            assert_eq!(
                sparse.conditional(&h.entries).unwrap(),
                softlog.conditional_exact(&h.entries).unwrap(),
                "prefix a·b^{n}"
            );
        }
        let h0 = net.init();
        assert_eq!(
            sparse.conditional(&h0.entries).unwrap(),
            softlog.conditional_exact(&h0.entries).unwrap()
        );
    }

    #[test]
    fn softmax_log_head_zero_stays_zero() {
        // A zeroed score must come out as exactly zero probability, because
        // its logit is -inf.
        let a = fork_asymmetric();
        let head = SoftmaxLogHead::new(output_matrix(&a));
        let net = Network::<f64>::new(&compile(&a));
        let probs = head.conditional_float(&net.run(&[0]).entries).unwrap();
        assert_eq!(probs[0], 0.0);
    }

    #[test]
    fn softmax_log_head_float_tracks_exact() {
        let a = fork_asymmetric();
        let head = SoftmaxLogHead::new(output_matrix(&a));
        let params = compile(&a);
        let exact_net = Network::<Rational>::new(&params);
        let float_net = Network::<f64>::new(&params);
        let string = a.parse_string("abbb").unwrap();
        let exact = head.conditional_exact(&exact_net.run(&string).entries).unwrap();
        let float = head.conditional_float(&float_net.run(&string).entries).unwrap();
        for (e, f) in exact.iter().zip(&float) {
            assert!((e.to_f64() - f).abs() <= 1e-9);
        }
    }

    #[test]
    fn exact_mode_rejects_non_unit_temperature() {
        let a = fork_asymmetric();
        let head = SoftmaxLogHead::with_temperature(output_matrix(&a), 2.0);
        let net = Network::<Rational>::new(&compile(&a));
        assert!(matches!(
            head.conditional_exact(&net.run(&[0]).entries),
            Err(HeadError::ExactRequiresUnitTemperature(_))
        ));
    }

    #[test]
    fn lipschitz_constant_examples() {
        assert!((lipschitz_constant(0, 1.0, 3) - 3f64.sqrt()).abs() < 1e-15);
        assert!((lipschitz_constant(4, 1.0, 3) - 5.0 * 3f64.sqrt()).abs() < 1e-15);
        assert!(
            (lipschitz_constant(4, 2.0, 3) - 2.0 * lipschitz_constant(4, 1.0, 3)).abs() < 1e-15
        );
    }

    fn arb_rational_vector() -> impl Strategy<Value = Vec<Rational>> {
        proptest::collection::vec((-50i64..50, 1i64..20), 1..8)
            .prop_map(|pairs| pairs.into_iter().map(|(n, d)| Rational::ratio(n, d)).collect())
    }

    fn arb_simplex_vector() -> impl Strategy<Value = Vec<Rational>> {
        proptest::collection::vec(1u32..20, 1..8).prop_map(|shares| {
            let total: u32 = shares.iter().sum();
            shares
                .into_iter()
                .map(|s| Rational::ratio(s as i64, total as i64))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn sparsemax_lands_on_the_simplex(x in arb_rational_vector()) {
            let p = sparsemax(&x);
            let sum = p.iter().fold(Rational::zero(), |acc, v| &acc + v);
            prop_assert_eq!(sum, Rational::one());
            prop_assert!(p.iter().all(|v| v >= &Rational::zero()));
        }

        #[test]
        fn sparsemax_is_idempotent(x in arb_rational_vector()) {
            let once = sparsemax(&x);
            prop_assert_eq!(sparsemax(&once), once.clone());
        }

        #[test]
        fn sparsemax_ignores_constant_shifts(x in arb_rational_vector(), num in -20i64..20, den in 1i64..10) {
            let c = Rational::ratio(num, den);
            let shifted: Vec<Rational> = x.iter().map(|v| v + &c).collect();
            prop_assert_eq!(sparsemax(&shifted), sparsemax(&x));
        }

        #[test]
        fn sparsemax_fixes_simplex_points(p in arb_simplex_vector()) {
            prop_assert_eq!(sparsemax(&p), p.clone());
        }
    }
}
