//! String enumeration, network language-model probabilities, restricted
//! total variation distance, and end-to-end verification reports.
//!
//! Equality of two language models is checked over the finite set of strings
//! up to a length bound, and what is left out is handled by tail masses: the
//! full total variation distance is at most the restricted distance plus
//! half of each model's tail. The automaton's tail comes exactly from its
//! per-length masses; the network model's tail is bounded through the
//! measured restricted distance, since its mass on the enumerated set can
//! lag the automaton's by at most twice that distance.

use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::compiler::{compile, output_matrix};
use crate::heads::{
    fit_mlp_log_head, Head, HeadError, HeadEval, HeadKind, MlpFitConfig, MlpFitReport,
    SoftmaxLogHead, SparsemaxHead,
};
use crate::numerics::{Mode, Rational, Scalar};
use crate::pfsa::{Pfsa, PfsaError};
use crate::runtime::{HiddenState, Network};

/// Refuses to enumerate past this many strings per length layer.
const ENUMERATION_LIMIT: u64 = 10_000_000;

#[derive(Debug, Error)]
pub enum EquivalenceError {
    #[error("enumeration too large: |Σ|^{max_len} = {alphabet}^{max_len} exceeds {limit} strings")]
    EnumerationTooLarge { alphabet: usize, max_len: usize, limit: u64 },
    #[error("the mlp head is approximate; verify it with a perturbation (--delta) instead")]
    MlpRequiresApprox,
    #[error(transparent)]
    Pfsa(#[from] PfsaError),
    #[error(transparent)]
    Head(#[from] HeadError),
}

/// All strings over an alphabet up to a length bound, in length-lexicographic
/// order: Σ_{t=0}^{M} |Σ|^t strings, deterministically ordered so reports
/// diff cleanly across runs.
#[derive(Clone, Debug)]
pub struct StringSet {
    alphabet_size: usize,
    max_len: usize,
    strings: Vec<Vec<usize>>,
}

impl StringSet {
    pub fn len(&self) -> usize {
        self.strings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strings.is_empty()
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vec<usize>> {
        self.strings.iter()
    }
}

/// Enumerates Σ^{≤ max_len} in length-lex order, guarded against blowup:
/// a layer of more than 10^7 strings is refused.
pub fn enumerate(alphabet_size: usize, max_len: usize) -> Result<StringSet, EquivalenceError> {
    let mut layer_size: u128 = 1;
    for _ in 0..max_len {
        layer_size = layer_size.saturating_mul(alphabet_size as u128);
        if layer_size > ENUMERATION_LIMIT as u128 {
            return Err(EquivalenceError::EnumerationTooLarge {
                alphabet: alphabet_size,
                max_len,
                limit: ENUMERATION_LIMIT,
            });
        }
    }
    let mut strings: Vec<Vec<usize>> = vec![Vec::new()];
    let mut layer: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::with_capacity(layer.len() * alphabet_size);
        for s in &layer {
            for y in 0..alphabet_size {
                let mut extended = s.clone();
                extended.push(y);
                next.push(extended);
            }
        }
        strings.extend(next.iter().cloned());
        layer = next;
    }
    Ok(StringSet { alphabet_size, max_len, strings })
}

/// The probability the network language model assigns to a whole string:
/// the product of head conditionals along the prefixes, times the EOS
/// probability at the end. A prefix the exact heads consider impossible
/// (zero hidden mass) makes the string probability exactly 0 — that is a
/// value, not an error.
pub fn lm_string_prob<S: Scalar>(
    net: &Network<S>,
    head: &Head,
    string: &[usize],
) -> Result<S, HeadError>
where
    Head: HeadEval<S>,
{
    let mut h = net.init();
    let mut prob = S::one();
    for &y in string {
        match head.next_distribution(&h.entries) {
            Ok(cond) => prob = prob.mul(&cond[y]),
            Err(HeadError::ZeroPrefix) => return Ok(S::zero()),
            Err(e) => return Err(e),
        }
        h = net.step(&h, y);
    }
    match head.next_distribution(&h.entries) {
        Ok(cond) => Ok(prob.mul(cond.last().expect("distribution over Σ̄ is nonempty"))),
        Err(HeadError::ZeroPrefix) => Ok(S::zero()),
        Err(e) => Err(e),
    }
}

/// The probability of *generating* `prefix` and not having stopped: the
/// conditional product without the final EOS factor.
pub fn lm_prefix_prob<S: Scalar>(
    net: &Network<S>,
    head: &Head,
    prefix: &[usize],
) -> Result<S, HeadError>
where
    Head: HeadEval<S>,
{
    let mut h = net.init();
    let mut prob = S::one();
    for &y in prefix {
        match head.next_distribution(&h.entries) {
            Ok(cond) => prob = prob.mul(&cond[y]),
            Err(HeadError::ZeroPrefix) => return Ok(S::zero()),
            Err(e) => return Err(e),
        }
        h = net.step(&h, y);
    }
    Ok(prob)
}

/// Restricted total variation distance over aligned per-string
/// probabilities: ½ Σ |p_i − q_i|.
pub fn restricted_tvd<S: Scalar>(p: &[S], q: &[S]) -> S {
    assert_eq!(p.len(), q.len(), "mismatched probability vectors");
    let sum = p
        .iter()
        .zip(q)
        .fold(S::zero(), |acc, (a, b)| acc.add(&a.sub(b).abs()));
    sum.div(&S::from_usize(2))
}

/// The three-term bound: restricted TVD plus half of each tail mass. The
/// full TVD of the two models never exceeds it.
pub fn tvd_upper_bound<S: Scalar>(rtvd: &S, p_tail: &S, q_tail: &S) -> S {
    rtvd.add(&p_tail.add(q_tail).div(&S::from_usize(2)))
}

/// Rendering for report values: rationals print canonically, floats print
/// with 17 significant digits.
pub trait ReportValue: Scalar + Serialize {
    fn render(&self) -> String;
    fn mode() -> Mode;
}

impl ReportValue for Rational {
    fn render(&self) -> String {
        self.to_string()
    }
    fn mode() -> Mode {
        Mode::Exact
    }
}

impl ReportValue for f64 {
    fn render(&self) -> String {
        format!("{self:.16e}")
    }
    fn mode() -> Mode {
        Mode::Float
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ReportRow<S> {
    pub string: String,
    pub p_automaton: S,
    pub p_network: S,
    pub diff: S,
}

/// What surviving a fit is summarized as inside a report.
#[derive(Clone, Debug, Serialize)]
pub struct FitSummary {
    pub tau_achieved: f64,
    pub converged: bool,
    pub train_rmse: f64,
    pub xi1: f64,
    pub xi2: f64,
    pub lipschitz: f64,
}

impl From<&MlpFitReport> for FitSummary {
    fn from(report: &MlpFitReport) -> Self {
        FitSummary {
            tau_achieved: report.tau_achieved,
            converged: report.converged,
            train_rmse: report.train_rmse,
            xi1: report.xi1,
            xi2: report.xi2,
            lipschitz: report.lipschitz,
        }
    }
}

/// The outcome of comparing the automaton LM with a network LM over all
/// strings up to a length bound.
#[derive(Clone, Debug, Serialize)]
pub struct EquivalenceReport<S: ReportValue> {
    pub head: HeadKind,
    pub mode: Mode,
    pub max_len: usize,
    /// Per-string tolerance (exact verification) or restricted-TVD budget
    /// (approximate verification) the verdict was judged against.
    pub tolerance: S,
    /// Perturbation used, if any.
    pub delta: Option<Rational>,
    pub rows: Vec<ReportRow<S>>,
    /// ½ Σ |p_A − p_R| over the enumerated strings.
    pub rtvd: S,
    /// Same sum against the δ-perturbed automaton, for approximate runs.
    pub rtvd_perturbed: Option<S>,
    /// Automaton mass beyond the enumerated lengths, 1 − Σ_{t≤M} mass(t).
    pub automaton_tail: S,
    /// Tail of the perturbed automaton, for approximate runs.
    pub perturbed_tail: Option<S>,
    /// Bound on the network model's tail.
    pub network_tail_bound: S,
    /// rtvd + ½·automaton_tail + ½·network_tail_bound ≥ TVD(p_A, p_R).
    pub tvd_bound: S,
    pub pass: bool,
    pub fit: Option<FitSummary>,
    #[serde(skip)]
    pub wall: Duration,
}

impl<S: ReportValue> EquivalenceReport<S> {
    /// The first enumerated string whose difference exceeds the tolerance.
    pub fn first_failure(&self) -> Option<&ReportRow<S>> {
        self.rows.iter().find(|row| row.diff > self.tolerance)
    }

    /// Tab-separated table: string, automaton probability, network
    /// probability, absolute difference.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("string\tp_automaton\tp_network\tdiff\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                row.string,
                row.p_automaton.render(),
                row.p_network.render(),
                row.diff.render()
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Human-oriented summary, one field per line.
    pub fn summary(&self) -> String {
        let mut lines = vec![
            format!("head: {}", self.head),
            format!("mode: {}", self.mode),
            format!("max_len: {}", self.max_len),
            format!("strings: {}", self.rows.len()),
            format!("rtvd: {}", self.rtvd.render()),
            format!("automaton_tail: {}", self.automaton_tail.render()),
            format!("network_tail_bound: {}", self.network_tail_bound.render()),
            format!("tvd_bound: {}", self.tvd_bound.render()),
        ];
        if let Some(delta) = &self.delta {
            lines.insert(1, format!("delta: {delta}"));
        }
        if let Some(rtvd) = &self.rtvd_perturbed {
            lines.push(format!("rtvd_vs_perturbed: {}", rtvd.render()));
        }
        if let Some(tail) = &self.perturbed_tail {
            lines.push(format!("perturbed_tail: {}", tail.render()));
        }
        if let Some(fit) = &self.fit {
            lines.push(format!(
                "fit: tau_achieved={:.3e} converged={} xi1={:.3e} xi2={:.6} lipschitz={:.6}",
                fit.tau_achieved, fit.converged, fit.xi1, fit.xi2, fit.lipschitz
            ));
        }
        lines.push(format!("verdict: {}", if self.pass { "PASS" } else { "FAIL" }));
        lines.join("\n")
    }
}

fn display_string(a: &Pfsa, ids: &[usize]) -> String {
    if ids.is_empty() {
        "ε".to_string()
    } else {
        a.format_string(ids)
    }
}

fn automaton_tail<S: Scalar>(a: &Pfsa, max_len: usize) -> S {
    let mut covered = S::zero();
    for t in 0..=max_len {
        covered = covered.add(&a.length_mass_in::<S>(t));
    }
    S::one().sub(&covered).relu()
}

/// Compares one head against one automaton over the given strings. The
/// building block behind [`verify_exact`] and [`verify_approx`]; exposed so
/// tests can drive corrupted heads or parameter sets through it.
pub fn verify_strings<S: ReportValue>(
    reference: &Pfsa,
    net: &Network<S>,
    head: &Head,
    strings: &StringSet,
    tolerance: S,
) -> Result<EquivalenceReport<S>, EquivalenceError>
where
    Head: HeadEval<S>,
{
    let started = Instant::now();
    let mut rows = Vec::with_capacity(strings.len());
    for string in strings.iter() {
        let p_automaton = reference.stringsum_in::<S>(string);
        let p_network = lm_string_prob(net, head, string)?;
        let diff = p_automaton.sub(&p_network).abs();
        rows.push(ReportRow {
            string: display_string(reference, string),
            p_automaton,
            p_network,
            diff,
        });
    }
    let diffs: Vec<S> = rows.iter().map(|r| r.diff.clone()).collect();
    let rtvd = diffs
        .iter()
        .fold(S::zero(), |acc, d| acc.add(d))
        .div(&S::from_usize(2));
    let tail = automaton_tail::<S>(reference, strings.max_len());
    let network_tail_bound = tail.add(&rtvd.add(&rtvd));
    let tvd_bound = tvd_upper_bound(&rtvd, &tail, &network_tail_bound);
    let pass = rows.iter().all(|row| row.diff <= tolerance);
    Ok(EquivalenceReport {
        head: head.kind(),
        mode: S::mode(),
        max_len: strings.max_len(),
        tolerance,
        delta: None,
        rows,
        rtvd,
        rtvd_perturbed: None,
        automaton_tail: tail,
        perturbed_tail: None,
        network_tail_bound,
        tvd_bound,
        pass,
        fit: None,
        wall: started.elapsed(),
    })
}

/// Verifies weak equivalence of the compiled network against the source
/// automaton with an exact head: every per-string difference must stay
/// within the tolerance (exactly zero in rational mode). The automaton
/// should be valid and trim.
pub fn verify_exact<S: ReportValue>(
    a: &Pfsa,
    head_kind: HeadKind,
    max_len: usize,
    tolerance: S,
    temperature: f64,
) -> Result<EquivalenceReport<S>, EquivalenceError>
where
    Head: HeadEval<S>,
{
    let params = compile(a);
    let output = output_matrix(a);
    let head = match head_kind {
        HeadKind::Sparsemax => Head::Sparsemax(SparsemaxHead::new(output)),
        HeadKind::SoftmaxLog => {
            Head::SoftmaxLog(SoftmaxLogHead::with_temperature(output, temperature))
        }
        HeadKind::Mlp => return Err(EquivalenceError::MlpRequiresApprox),
    };
    let strings = enumerate(a.alphabet_size(), max_len)?;
    let net = Network::<S>::new(&params);
    verify_strings(a, &net, &head, &strings, tolerance)
}

/// Collects the fitting anchors for an approximate run: the hidden states of
/// the perturbed network after every prefix (up to `max_len`) that the
/// *source* automaton can actually produce. Those are the prefixes whose
/// conditionals carry almost all probability mass; prefixes off the source's
/// support only ever scale probabilities below an already-fitted branch.
pub fn support_prefix_anchors(
    source: &Pfsa,
    perturbed_net: &Network<Rational>,
    max_len: usize,
) -> Result<Vec<HiddenState<Rational>>, EquivalenceError> {
    let strings = enumerate(source.alphabet_size(), max_len)?;
    let mut anchors = Vec::new();
    for prefix in strings.iter() {
        let reachable = source
            .forward_in::<Rational>(prefix)
            .iter()
            .any(Rational::is_positive);
        if reachable {
            anchors.push(perturbed_net.run(prefix));
        }
    }
    Ok(anchors)
}

/// Verifies approximate simulation: perturbs the automaton by δ, compiles
/// the perturbation, evaluates the chosen head (fitting the MLP head first),
/// and reports restricted TVD against both the source and the perturbed
/// model, along with the tail-augmented bound. The verdict passes when the
/// restricted TVD against the source stays within `epsilon`.
pub fn verify_approx<S: ReportValue>(
    a: &Pfsa,
    delta: &Rational,
    head_kind: HeadKind,
    fit_config: &MlpFitConfig,
    sample_prefix_len: usize,
    max_len: usize,
    epsilon: S,
    temperature: f64,
) -> Result<EquivalenceReport<S>, EquivalenceError>
where
    Head: HeadEval<S>,
{
    let started = Instant::now();
    let perturbed = a.perturb(delta)?;
    let params = compile(&perturbed);
    let output = output_matrix(&perturbed);
    let (head, fit) = match head_kind {
        HeadKind::Sparsemax => (Head::Sparsemax(SparsemaxHead::new(output)), None),
        HeadKind::SoftmaxLog => (
            Head::SoftmaxLog(SoftmaxLogHead::with_temperature(output, temperature)),
            None,
        ),
        HeadKind::Mlp => {
            let exact_net = Network::<Rational>::new(&params);
            let anchors = support_prefix_anchors(a, &exact_net, sample_prefix_len)?;
            let (mlp, report) = fit_mlp_log_head(&output, &anchors, fit_config)?;
            (Head::Mlp(mlp), Some(FitSummary::from(&report)))
        }
    };

    let strings = enumerate(a.alphabet_size(), max_len)?;
    let net = Network::<S>::new(&params);
    let mut rows = Vec::with_capacity(strings.len());
    let mut perturbed_diff_sum = S::zero();
    for string in strings.iter() {
        let p_source = a.stringsum_in::<S>(string);
        let p_perturbed = perturbed.stringsum_in::<S>(string);
        let p_network = lm_string_prob(&net, &head, string)?;
        perturbed_diff_sum = perturbed_diff_sum.add(&p_perturbed.sub(&p_network).abs());
        let diff = p_source.sub(&p_network).abs();
        rows.push(ReportRow {
            string: display_string(a, string),
            p_automaton: p_source,
            p_network,
            diff,
        });
    }
    let rtvd = rows
        .iter()
        .fold(S::zero(), |acc, row| acc.add(&row.diff))
        .div(&S::from_usize(2));
    let rtvd_perturbed = perturbed_diff_sum.div(&S::from_usize(2));

    let source_tail = automaton_tail::<S>(a, max_len);
    let perturbed_tail = automaton_tail::<S>(&perturbed, max_len);
    let network_tail_bound = perturbed_tail.add(&rtvd_perturbed.add(&rtvd_perturbed));
    let tvd_bound = tvd_upper_bound(&rtvd, &source_tail, &network_tail_bound);
    let pass = rtvd <= epsilon;

    Ok(EquivalenceReport {
        head: head.kind(),
        mode: S::mode(),
        max_len,
        tolerance: epsilon,
        delta: Some(delta.clone()),
        rows,
        rtvd,
        rtvd_perturbed: Some(rtvd_perturbed),
        automaton_tail: source_tail,
        perturbed_tail: Some(perturbed_tail),
        network_tail_bound,
        tvd_bound,
        pass,
        fit,
        wall: started.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pfsa::fixtures::*;

    fn rat(s: &str) -> Rational {
        s.parse().unwrap()
    }

    #[test]
    fn enumeration_examples() {
        let empty_only = enumerate(2, 0).unwrap();
        assert_eq!(empty_only.len(), 1);
        assert_eq!(empty_only.iter().next().unwrap(), &Vec::<usize>::new());

        let two = enumerate(2, 2).unwrap();
        let got: Vec<Vec<usize>> = two.iter().cloned().collect();
        assert_eq!(
            got,
            vec![
                vec![],
                vec![0],
                vec![1],
                vec![0, 0],
                vec![0, 1],
                vec![1, 0],
                vec![1, 1]
            ]
        );

        assert_eq!(enumerate(1, 3).unwrap().len(), 4);
        assert!(matches!(
            enumerate(2, 40),
            Err(EquivalenceError::EnumerationTooLarge { .. })
        ));
    }

    #[test]
    fn lm_string_prob_matches_stringsum() {
        let a = fork_asymmetric();
        let net = Network::<Rational>::new(&compile(&a));
        let head = Head::Sparsemax(SparsemaxHead::new(output_matrix(&a)));
        assert_eq!(lm_string_prob(&net, &head, &[0]).unwrap(), rat("29/50"));
        assert_eq!(lm_string_prob(&net, &head, &[0, 1]).unwrap(), rat("9/100"));
        assert_eq!(lm_string_prob(&net, &head, &[1, 0]).unwrap(), rat("0"));
    }

    #[test]
    fn restricted_tvd_basics() {
        let p = vec![rat("1/2"), rat("1/2")];
        assert!(restricted_tvd(&p, &p).is_zero());
        let q = vec![rat("0"), rat("0")];
        let disjoint = vec![rat("1"), rat("0")];
        let other = vec![rat("0"), rat("1")];
        assert_eq!(restricted_tvd(&disjoint, &other), Rational::one());
        assert_eq!(restricted_tvd(&p, &q), rat("1/2"));
        // Symmetry.
        assert_eq!(restricted_tvd(&disjoint, &other), restricted_tvd(&other, &disjoint));
    }

    #[test]
    fn tvd_upper_bound_arithmetic() {
        assert_eq!(
            tvd_upper_bound(&rat("1/8"), &rat("0"), &rat("0")),
            rat("1/8")
        );
        let bound = tvd_upper_bound(&0.0f64, &0.1, &0.2);
        assert!((bound - 0.15).abs() < 1e-15);
    }

    #[test]
    fn exact_verification_passes_on_the_figures() {
        for a in [fork_asymmetric(), fork_symmetric(), chain_deterministic()] {
            for head in [HeadKind::Sparsemax, HeadKind::SoftmaxLog] {
                let report =
                    verify_exact::<Rational>(&a, head, 5, Rational::zero(), 1.0).unwrap();
                assert!(report.pass, "head {head}");
                assert!(report.rtvd.is_zero());
                assert!(report.first_failure().is_none());
            }
        }
    }

    #[test]
    fn corrupted_output_matrix_fails_with_a_named_string() {
        let a = fork_asymmetric();
        let params = compile(&a);
        let output = output_matrix(&a);
        // Rescale one output entry: the EOS row of the (q1, ·) columns.
        let mut bad = output.matrix().clone();
        let tweaked = bad.get(2, 1) * &rat("1/2");
        bad.set(2, 1, tweaked);
        let head = Head::Sparsemax(SparsemaxHead::new(
            crate::compiler::OutputMatrix::from_matrix(bad),
        ));
        let net = Network::<Rational>::new(&params);
        let strings = enumerate(a.alphabet_size(), 3).unwrap();
        let report = verify_strings(&a, &net, &head, &strings, Rational::zero()).unwrap();
        assert!(!report.pass);
        let failure = report.first_failure().expect("a counterexample");
        assert_eq!(failure.string, "a");
    }

    #[test]
    fn conditional_products_conserve_probability() {
        // Mass of strings ≤ M plus mass of living prefixes of length M+1
        // equals 1, exactly.
        let a = fork_asymmetric();
        let net = Network::<Rational>::new(&compile(&a));
        let head = Head::Sparsemax(SparsemaxHead::new(output_matrix(&a)));
        let max_len = 4;
        let strings = enumerate(a.alphabet_size(), max_len).unwrap();
        let mut total = Rational::zero();
        for s in strings.iter() {
            total = &total + &lm_string_prob(&net, &head, s).unwrap();
        }
        let long = enumerate(a.alphabet_size(), max_len + 1).unwrap();
        for s in long.iter().filter(|s| s.len() == max_len + 1) {
            total = &total + &lm_prefix_prob(&net, &head, s).unwrap();
        }
        assert_eq!(total, Rational::one());
    }

    #[test]
    fn approx_with_softmax_log_reproduces_the_perturbed_lm() {
        let a = fork_asymmetric();
        let report = verify_approx::<Rational>(
            &a,
            &rat("1/1000"),
            HeadKind::SoftmaxLog,
            &MlpFitConfig::default(),
            4,
            5,
            rat("1/100"),
            1.0,
        )
        .unwrap();
        assert!(report.pass);
        assert!(report.rtvd_perturbed.as_ref().unwrap().is_zero());
        assert!(report.rtvd.is_positive());
        assert!(report.tvd_bound >= report.rtvd);
    }

    #[test]
    fn approx_rtvd_shrinks_with_delta() {
        let a = fork_asymmetric();
        let run = |delta: &str| {
            verify_approx::<Rational>(
                &a,
                &rat(delta),
                HeadKind::SoftmaxLog,
                &MlpFitConfig::default(),
                4,
                5,
                rat("1"),
                1.0,
            )
            .unwrap()
            .rtvd
        };
        let coarse = run("1/100");
        let fine = run("1/10000");
        assert!(coarse > fine);
    }

    #[test]
    fn mlp_requires_the_approx_pipeline() {
        let a = fork_asymmetric();
        assert!(matches!(
            verify_exact::<Rational>(&a, HeadKind::Mlp, 3, Rational::zero(), 1.0),
            Err(EquivalenceError::MlpRequiresApprox)
        ));
    }

    #[test]
    fn tsv_has_one_row_per_string_and_names_epsilon() {
        let a = fork_asymmetric();
        let report = verify_exact::<Rational>(&a, HeadKind::Sparsemax, 2, Rational::zero(), 1.0)
            .unwrap();
        let tsv = report.to_tsv();
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines.len(), 1 + 7);
        assert!(lines[1].starts_with("ε\t"));
    }
}
