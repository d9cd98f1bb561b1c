//! The fitted deep output head.
//!
//! The exact softmax-log head needs `−∞` logits to kill off-support symbols.
//! Keeping every output finite means approximating the map `h ↦ log(E·h)`
//! with a single-hidden-layer ReLU network over the hidden states the
//! network actually reaches. Such an approximation exists on any compact
//! domain bounded away from `E·h = 0`; this module *finds* one by seeded
//! gradient descent and reports the sup error it achieved on a held-out
//! validation set, so downstream checks gate on a measured quantity rather
//! than an existence claim.
//!
//! Training points are the supplied hidden-state anchors plus convex
//! combinations of anchor pairs that share an active symbol block (optionally
//! with small coordinatewise noise). Combinations stay inside the region
//! where `E·h` is positive, because the map is linear and both endpoints
//! qualify. Inputs and targets are standardized during optimization and the
//! standardization is folded back into the stored weights afterwards, so the
//! serialized head is a plain `softmax(W2·ReLU(W1·h + b1) + b2)` network.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{lipschitz_constant, HeadError};
use crate::compiler::OutputMatrix;
use crate::linalg::matvec;
use crate::numerics::{Rational, Scalar};
use crate::pfsa::PfsaError;
use crate::runtime::HiddenState;

/// A single-hidden-layer ReLU network producing next-symbol logits, with an
/// optional coordinatewise clamp floor in front.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MlpHead {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    /// When set, inputs pass through `max(ξ1, ·)` first. Off by default:
    /// reachable hidden states carry exact zeros outside their active block,
    /// and flooring those would corrupt `E·h`.
    pub clamp_floor: Option<f64>,
    /// Hidden weights, `hidden_dim × input_dim`, row-major.
    w1: Vec<f64>,
    b1: Vec<f64>,
    /// Output weights, `output_dim × hidden_dim`, row-major.
    w2: Vec<f64>,
    b2: Vec<f64>,
    /// Sup logit error measured on the held-out validation set at fit time.
    pub tau_achieved: f64,
    /// The configuration (including the seed) that produced this head.
    pub config: MlpFitConfig,
}

impl MlpHead {
    /// An all-zero network: every logit is 0, so every conditional is
    /// uniform.
    pub fn zeros(input_dim: usize, hidden_dim: usize, output_dim: usize) -> Self {
        MlpHead {
            input_dim,
            hidden_dim,
            output_dim,
            clamp_floor: None,
            w1: vec![0.0; hidden_dim * input_dim],
            b1: vec![0.0; hidden_dim],
            w2: vec![0.0; output_dim * hidden_dim],
            b2: vec![0.0; output_dim],
            tau_achieved: 0.0,
            config: MlpFitConfig::default(),
        }
    }

    /// `W2·ReLU(W1·clamp(h) + b1) + b2`.
    pub fn logits(&self, h: &[f64]) -> Vec<f64> {
        assert_eq!(h.len(), self.input_dim, "input dimension mismatch");
        let clamped: Vec<f64> = match self.clamp_floor {
            Some(floor) => h.iter().map(|&v| v.max(floor)).collect(),
            None => h.to_vec(),
        };
        let mut hidden = vec![0.0; self.hidden_dim];
        for (unit, slot) in hidden.iter_mut().enumerate() {
            let row = &self.w1[unit * self.input_dim..(unit + 1) * self.input_dim];
            let z: f64 = self.b1[unit] + row.iter().zip(&clamped).map(|(w, x)| w * x).sum::<f64>();
            *slot = z.max(0.0);
        }
        let mut out = vec![0.0; self.output_dim];
        for (o, slot) in out.iter_mut().enumerate() {
            let row = &self.w2[o * self.hidden_dim..(o + 1) * self.hidden_dim];
            *slot = self.b2[o] + row.iter().zip(&hidden).map(|(w, r)| w * r).sum::<f64>();
        }
        out
    }

    /// Softmax of the logits. Total on every input: the logits are finite, so
    /// the distribution always has full support.
    pub fn conditional(&self, h: &[f64]) -> Vec<f64> {
        let logits = self.logits(h);
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        weights.into_iter().map(|w| w / total).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PfsaError> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("head serializes");
        std::fs::write(path, text + "\n").map_err(|source| PfsaError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PfsaError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| PfsaError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| PfsaError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LrSchedule {
    Constant,
    /// Cosine decay from the base rate down to a thousandth of it.
    Cosine,
}

/// Knobs of the fitting procedure. Everything randomized flows from `seed`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MlpFitConfig {
    /// Hidden width H.
    pub hidden: usize,
    /// Total training points: the anchors plus jittered combinations.
    pub train_size: usize,
    /// Held-out validation points, all jittered combinations.
    pub validation_size: usize,
    pub max_iters: usize,
    pub learning_rate: f64,
    pub schedule: LrSchedule,
    /// Target sup logit error; the fit flags, never fakes, a miss.
    pub tau: f64,
    /// Largest convex-combination step toward a same-block anchor.
    pub convex_jitter: f64,
    /// Relative coordinatewise noise applied after combination.
    pub coordinate_noise: f64,
    /// Deterministic restarts; the best training objective wins.
    pub restarts: usize,
    /// Enables the `max(ξ1, ·)` clamp layer.
    pub use_clamp: bool,
    pub seed: u64,
}

impl Default for MlpFitConfig {
    fn default() -> Self {
        MlpFitConfig {
            hidden: 64,
            train_size: 512,
            validation_size: 128,
            max_iters: 15_000,
            learning_rate: 0.01,
            schedule: LrSchedule::Cosine,
            tau: 1e-3,
            convex_jitter: 0.02,
            coordinate_noise: 0.005,
            restarts: 4,
            use_clamp: false,
            seed: 0,
        }
    }
}

/// What the fit achieved, with the held-out set it was measured on.
#[derive(Clone, Debug)]
pub struct MlpFitReport {
    pub tau_achieved: f64,
    /// Whether `tau_achieved ≤ config.tau`.
    pub converged: bool,
    pub iterations: usize,
    /// Root-mean-square logit error over the training pool, in raw units.
    pub train_rmse: f64,
    /// Smallest positive hidden-state coordinate among the anchors.
    pub xi1: f64,
    /// Smallest target logit among the anchors.
    pub xi2: f64,
    /// Largest per-string Lipschitz constant over the anchors,
    /// (t + 1)·√|Σ̄| at unit temperature.
    pub lipschitz: f64,
    /// Held-out (input, exact-target) pairs; re-evaluating the stored head
    /// on these reproduces `tau_achieved`.
    pub validation: Vec<(Vec<f64>, Vec<f64>)>,
}

/// Fits a [`MlpHead`] approximating `h ↦ log(E·h)` over the anchor states.
///
/// Every anchor must satisfy `E·h > 0` elementwise (exact check) — the map
/// has no finite logarithm otherwise. That holds for any prefix when the
/// automaton behind the anchors is δ-perturbed with δ > 0. Returns the head
/// and the fit report; a fit that misses `config.tau` is reported with
/// `converged: false`, not an error.
pub fn fit_mlp_log_head(
    output: &OutputMatrix,
    anchors: &[HiddenState<Rational>],
    config: &MlpFitConfig,
) -> Result<(MlpHead, MlpFitReport), HeadError> {
    if anchors.is_empty() {
        return Err(HeadError::EmptySamples);
    }
    let e_exact = output.matrix();
    let input_dim = e_exact.cols();
    let output_dim = e_exact.rows();

    // Exact positivity check, and ξ1/ξ2 from the anchors.
    let mut xi1 = f64::INFINITY;
    let mut xi2 = f64::INFINITY;
    for (index, anchor) in anchors.iter().enumerate() {
        let scores = matvec(e_exact, &anchor.entries);
        if scores.iter().any(|s| !s.is_positive()) {
            return Err(HeadError::SampleNotPositive { index });
        }
        for s in &scores {
            xi2 = xi2.min(s.to_f64().ln());
        }
        for v in &anchor.entries {
            if v.is_positive() {
                xi1 = xi1.min(v.to_f64());
            }
        }
    }
    let lipschitz = anchors
        .iter()
        .map(|a| lipschitz_constant(a.t, 1.0, output_dim))
        .fold(0.0, f64::max);

    let e_float = e_exact.map(Rational::to_f64);
    let target_of = |h: &[f64]| -> Vec<f64> {
        matvec(&e_float, &h.to_vec()).iter().map(|s| s.ln()).collect()
    };

    let anchor_inputs: Vec<Vec<f64>> = anchors
        .iter()
        .map(|a| a.entries.iter().map(Rational::to_f64).collect())
        .collect();
    let anchor_targets: Vec<Vec<f64>> = anchor_inputs.iter().map(|h| target_of(h)).collect();

    // Convex partners: anchors in the same active symbol block whose target
    // profiles sit within one nat of each other. A convex step toward such a
    // partner perturbs the logits smoothly; a step toward a log-dissimilar
    // anchor would sweep orders of magnitude of E·h and is not a jitter.
    let block_of = |a: &HiddenState<Rational>| a.consumed.last().copied().unwrap_or(0);
    const LOG_SIMILAR: f64 = 1.0;
    let partners: Vec<Vec<usize>> = (0..anchors.len())
        .map(|i| {
            (0..anchors.len())
                .filter(|&j| {
                    block_of(&anchors[i]) == block_of(&anchors[j])
                        && anchor_targets[i]
                            .iter()
                            .zip(&anchor_targets[j])
                            .all(|(a, b)| (a - b).abs() <= LOG_SIMILAR)
                })
                .collect()
        })
        .collect();

    // The regression target is not just the logit values but also their
    // analytic slope, ∇ log(E·h)_o = E_o/(E·h)_o: matching it is what keeps
    // the sup error over a whole jitter neighborhood near the error at its
    // center. The Sobolev weight balances the two terms at the scale of the
    // neighborhood radius.
    let jacobian_of = |h: &[f64]| -> Vec<f64> {
        let scores = matvec(&e_float, &h.to_vec());
        let mut jac = vec![0.0; output_dim * input_dim];
        for o in 0..output_dim {
            for d in 0..input_dim {
                jac[o * input_dim + d] = e_float.get(o, d) / scores[o];
            }
        }
        jac
    };
    let sobolev_weight = config
        .convex_jitter
        .max(config.coordinate_noise)
        .powi(2)
        .max(1e-8);
    let debug = std::env::var_os("ELMATA_FIT_DEBUG").is_some();

    let run_attempt = |seed: u64| -> FitAttempt {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let jittered = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            let i = rng.random_range(0..anchors.len());
            let peers = &partners[i];
            let j = peers[rng.random_range(0..peers.len())];
            let alpha = rng.random::<f64>() * config.convex_jitter;
            let mut h: Vec<f64> = anchor_inputs[i]
                .iter()
                .zip(&anchor_inputs[j])
                .map(|(a, b)| (1.0 - alpha) * a + alpha * b)
                .collect();
            if config.coordinate_noise > 0.0 {
                for v in &mut h {
                    *v *= 1.0 + config.coordinate_noise * (2.0 * rng.random::<f64>() - 1.0);
                }
            }
            h
        };

        let extra = config.train_size.saturating_sub(anchors.len());
        let mut train: Vec<(Vec<f64>, Vec<f64>)> = anchor_inputs
            .iter()
            .map(|h| (h.clone(), target_of(h)))
            .collect();
        for _ in 0..extra {
            let h = jittered(&mut rng);
            let t = target_of(&h);
            train.push((h, t));
        }
        let validation: Vec<(Vec<f64>, Vec<f64>)> = (0..config.validation_size.max(1))
            .map(|_| {
                let h = jittered(&mut rng);
                let t = target_of(&h);
                (h, t)
            })
            .collect();
        // A separate held-out pool for restart selection, so the validation
        // set that τ is reported on never influences the returned head.
        let selection: Vec<(Vec<f64>, Vec<f64>)> = (0..config.validation_size.max(1))
            .map(|_| {
                let h = jittered(&mut rng);
                let t = target_of(&h);
                (h, t)
            })
            .collect();

        // Standardize inputs by per-coordinate max magnitude and targets by
        // per-output mean/deviation; folded back into the weights below.
        let mut input_scale = vec![0.0f64; input_dim];
        for (h, _) in &train {
            for (d, v) in h.iter().enumerate() {
                input_scale[d] = input_scale[d].max(v.abs());
            }
        }
        for s in &mut input_scale {
            if *s == 0.0 {
                *s = 1.0;
            }
        }
        let mut target_mean = vec![0.0f64; output_dim];
        let mut target_dev = vec![0.0f64; output_dim];
        for (_, t) in &train {
            for (o, v) in t.iter().enumerate() {
                target_mean[o] += v;
            }
        }
        for m in &mut target_mean {
            *m /= train.len() as f64;
        }
        for (_, t) in &train {
            for (o, v) in t.iter().enumerate() {
                target_dev[o] += (v - target_mean[o]).powi(2);
            }
        }
        for v in &mut target_dev {
            *v = (*v / train.len() as f64).sqrt();
            if *v < 1e-9 {
                *v = 1.0;
            }
        }

        // Standardized training points: inputs divided by per-coordinate
        // scale, targets centered and scaled per output, Jacobians
        // transformed to match (∂u_o/∂z_d = (s_d/σ_o)·∂t_o/∂h_d).
        let scaled: Vec<TrainPoint> = train
            .iter()
            .map(|(h, t)| {
                let z: Vec<f64> = h.iter().zip(&input_scale).map(|(v, s)| v / s).collect();
                let u: Vec<f64> = t
                    .iter()
                    .zip(target_mean.iter().zip(&target_dev))
                    .map(|(v, (m, s))| (v - m) / s)
                    .collect();
                let mut jac = jacobian_of(h);
                for o in 0..output_dim {
                    for d in 0..input_dim {
                        jac[o * input_dim + d] *= input_scale[d] / target_dev[o];
                    }
                }
                TrainPoint { z, u, jac }
            })
            .collect();

        let hidden = config.hidden;
        let mut net = RawNet::he_uniform(input_dim, hidden, output_dim, &mut rng);
        let mut adam = Adam::new(net.len());

        let mut best = (net.snapshot(), f64::INFINITY);
        let mut grad = vec![0.0f64; net.len()];
        for iter in 0..config.max_iters {
            let lr = match config.schedule {
                LrSchedule::Constant => config.learning_rate,
                LrSchedule::Cosine => {
                    let progress = iter as f64 / config.max_iters.max(1) as f64;
                    let floor = config.learning_rate * 1e-3;
                    floor
                        + 0.5 * (config.learning_rate - floor)
                            * (1.0 + (std::f64::consts::PI * progress).cos())
                }
            };
            grad.fill(0.0);
            for point in &scaled {
                net.accumulate_grad(point, scaled.len(), sobolev_weight, &mut grad);
            }
            adam.step(net.params_mut(), &grad, lr);
            // The output layer is linear in the hidden features, so its
            // (Sobolev) least-squares optimum is available in closed form;
            // snapping to it mid-run and at the end leaves gradient descent
            // only the feature learning. The Adam moments of the snapped
            // weights are stale afterwards and get cleared.
            if iter + 1 == config.max_iters || 2 * (iter + 1) == config.max_iters {
                net.solve_output_layer(&scaled, sobolev_weight);
                adam.reset_tail(net.w2.len() + net.b2.len());
            }
            // Descent is not monotone; remember the best iterate seen.
            if (iter + 1) % 1000 == 0 || iter + 1 == config.max_iters {
                let objective = net.objective(&scaled, sobolev_weight);
                if objective < best.1 {
                    best = (net.snapshot(), objective);
                }
            }
        }
        net.restore(best.0);
        let mut objective = best.1;
        if debug {
            eprintln!("debug attempt seed {seed}: objective after adam {objective:.6e}");
        }

        // Polish: alternate exact least-squares solves of the two layers.
        // Each half-step is optimal for the piecewise-linear objective with
        // the activation pattern frozen; the hidden step can overshoot the
        // region where its pattern holds, so it moves with a line search and
        // only improvements are kept.
        for round in 0..POLISH_ROUNDS {
            let before = net.snapshot();
            net.solve_hidden_layer(&scaled, sobolev_weight);
            let proposed = net.snapshot();
            let mut accepted = before.clone();
            let mut accepted_objective = objective;
            for beta in [1.0, 0.5, 0.25, 0.1, 0.05] {
                net.w1 = blend(&before.0, &proposed.0, beta);
                net.b1 = blend(&before.1, &proposed.1, beta);
                let candidate = net.objective(&scaled, sobolev_weight);
                if candidate < accepted_objective {
                    accepted_objective = candidate;
                    accepted = net.snapshot();
                }
            }
            net.restore(accepted);

            let before_output = net.snapshot();
            net.solve_output_layer(&scaled, sobolev_weight);
            let after_output = net.objective(&scaled, sobolev_weight);
            if after_output < accepted_objective {
                accepted_objective = after_output;
            } else {
                net.restore(before_output);
            }
            if debug {
                eprintln!("debug polish round {round}: objective {accepted_objective:.6e}");
            }
            let stalled = accepted_objective > objective * 0.99;
            objective = accepted_objective;
            if stalled {
                break;
            }
        }

        // Fold standardization into the weights: W1 ← W1/scale columnwise,
        // W2 ← dev·W2 rowwise, b2 ← dev·b2 + mean.
        for unit in 0..hidden {
            for d in 0..input_dim {
                net.w1[unit * input_dim + d] /= input_scale[d];
            }
        }
        for o in 0..output_dim {
            for k in 0..hidden {
                net.w2[o * hidden + k] *= target_dev[o];
            }
            net.b2[o] = net.b2[o] * target_dev[o] + target_mean[o];
        }

        // Post-fold sup error on the selection pool, in raw units.
        let selection_sup = selection
            .iter()
            .flat_map(|(h, t)| {
                net.raw_logits(h)
                    .into_iter()
                    .zip(t)
                    .map(|(g, want)| (g - want).abs())
                    .collect::<Vec<_>>()
            })
            .fold(0.0, f64::max);
        if debug {
            eprintln!("debug attempt seed {seed}: objective {objective:.3e} selection_sup {selection_sup:.3e}");
        }
        FitAttempt { selection_sup, net, train, validation }
    };

    // Deterministic restarts: the selection pool picks the winner, so the
    // validation set that τ is reported on never influences the returned
    // head.
    let mut winner: Option<FitAttempt> = None;
    for restart in 0..config.restarts.max(1) {
        let seed = config
            .seed
            .wrapping_add((restart as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let attempt = run_attempt(seed);
        if winner.as_ref().is_none_or(|w| attempt.selection_sup < w.selection_sup) {
            winner = Some(attempt);
        }
    }
    let FitAttempt { net, train, validation, .. } = winner.expect("at least one restart");

    let clamp = config.use_clamp.then(|| {
        // Training works on unclamped inputs — the pool lies above the floor
        // anyway — so the clamp only guards evaluation on raw inputs.
        xi1
    });
    let mut head = MlpHead {
        input_dim,
        hidden_dim: config.hidden,
        output_dim,
        clamp_floor: clamp,
        w1: net.w1,
        b1: net.b1,
        w2: net.w2,
        b2: net.b2,
        tau_achieved: 0.0,
        config: config.clone(),
    };

    let sup_error = |pairs: &[(Vec<f64>, Vec<f64>)]| {
        pairs
            .iter()
            .flat_map(|(h, t)| {
                let got = head.logits(h);
                got.into_iter()
                    .zip(t)
                    .map(|(g, want)| (g - want).abs())
                    .collect::<Vec<_>>()
            })
            .fold(0.0, f64::max)
    };
    let tau_achieved = sup_error(&validation);
    head.tau_achieved = tau_achieved;

    if std::env::var_os("ELMATA_FIT_DEBUG").is_some() {
        let mut worst: Vec<(f64, usize)> = validation
            .iter()
            .enumerate()
            .map(|(i, (h, t))| {
                let got = head.logits(h);
                let err = got
                    .iter()
                    .zip(t)
                    .map(|(g, want)| (g - want).abs())
                    .fold(0.0, f64::max);
                (err, i)
            })
            .collect();
        worst.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        for (err, i) in worst.iter().take(5) {
            let (h, t) = &validation[*i];
            eprintln!("debug worst err={err:.3e} target={t:?} input={h:?}");
        }
    }

    let train_sq: f64 = train
        .iter()
        .flat_map(|(h, t)| {
            let got = head.logits(h);
            got.into_iter()
                .zip(t)
                .map(|(g, want)| (g - want).powi(2))
                .collect::<Vec<_>>()
        })
        .sum();
    let train_rmse = (train_sq / (train.len() * output_dim) as f64).sqrt();

    let report = MlpFitReport {
        tau_achieved,
        converged: tau_achieved <= config.tau,
        iterations: config.max_iters,
        train_rmse,
        xi1,
        xi2,
        lipschitz,
        validation,
    };
    Ok((head, report))
}

/// One standardized training point: input, target logits, and the target
/// Jacobian ∂u/∂z (output-major, row-major).
struct TrainPoint {
    z: Vec<f64>,
    u: Vec<f64>,
    jac: Vec<f64>,
}

const POLISH_ROUNDS: usize = 12;

/// One finished fitting attempt; `selection_sup` is the sup error on the
/// selection pool, used only to pick among restarts.
struct FitAttempt {
    selection_sup: f64,
    net: RawNet,
    train: Vec<(Vec<f64>, Vec<f64>)>,
    validation: Vec<(Vec<f64>, Vec<f64>)>,
}

fn blend(from: &[f64], to: &[f64], beta: f64) -> Vec<f64> {
    from.iter().zip(to).map(|(a, b)| a + beta * (b - a)).collect()
}

/// The network during optimization, before standardization is folded in.
struct RawNet {
    input_dim: usize,
    hidden_dim: usize,
    output_dim: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

impl RawNet {
    fn he_uniform(input_dim: usize, hidden_dim: usize, output_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let r1 = (6.0 / input_dim as f64).sqrt();
        let r2 = (6.0 / hidden_dim as f64).sqrt();
        let mut uniform = |r: f64| (2.0 * rng.random::<f64>() - 1.0) * r;
        RawNet {
            input_dim,
            hidden_dim,
            output_dim,
            w1: (0..hidden_dim * input_dim).map(|_| uniform(r1)).collect(),
            b1: vec![0.0; hidden_dim],
            w2: (0..output_dim * hidden_dim).map(|_| uniform(r2)).collect(),
            b2: vec![0.0; output_dim],
        }
    }

    fn len(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// Sobolev mean-squared-error gradient of one sample, accumulated into
    /// `grad` (laid out as w1 | b1 | w2 | b2): value residuals plus
    /// `gamma`-weighted Jacobian residuals, the network Jacobian being
    /// `W2·diag(active)·W1` with the activation pattern held fixed.
    fn accumulate_grad(&self, point: &TrainPoint, batch: usize, gamma: f64, grad: &mut [f64]) {
        let (h, o, n_in) = (self.hidden_dim, self.output_dim, self.input_dim);
        let x = &point.z;
        let mut pre = vec![0.0; h];
        let mut act = vec![0.0; h];
        for unit in 0..h {
            let row = &self.w1[unit * n_in..(unit + 1) * n_in];
            let z: f64 = self.b1[unit] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            pre[unit] = z;
            act[unit] = z.max(0.0);
        }
        let mut d_out = vec![0.0; o];
        for oo in 0..o {
            let row = &self.w2[oo * h..(oo + 1) * h];
            let out: f64 = self.b2[oo] + row.iter().zip(&act).map(|(w, r)| w * r).sum::<f64>();
            d_out[oo] = 2.0 * (out - point.u[oo]) / (batch * o) as f64;
        }

        let (gw1, rest) = grad.split_at_mut(self.w1.len());
        let (gb1, rest) = rest.split_at_mut(self.b1.len());
        let (gw2, gb2) = rest.split_at_mut(self.w2.len());

        let mut d_act = vec![0.0; h];
        for oo in 0..o {
            for k in 0..h {
                gw2[oo * h + k] += d_out[oo] * act[k];
                d_act[k] += self.w2[oo * h + k] * d_out[oo];
            }
            gb2[oo] += d_out[oo];
        }
        for unit in 0..h {
            if pre[unit] > 0.0 {
                for d in 0..n_in {
                    gw1[unit * n_in + d] += d_act[unit] * x[d];
                }
                gb1[unit] += d_act[unit];
            }
        }

        // Jacobian residuals: active units, and only the directions the
        // point actually has support in — the jitter never leaves the
        // support, so slopes off it are not part of the regression target.
        let scale = 2.0 * gamma / (batch * o * n_in) as f64;
        let mut residual = vec![0.0; o * n_in];
        for oo in 0..o {
            for d in 0..n_in {
                if x[d] == 0.0 {
                    continue;
                }
                let mut net_jac = 0.0;
                for unit in 0..h {
                    if pre[unit] > 0.0 {
                        net_jac += self.w2[oo * h + unit] * self.w1[unit * n_in + d];
                    }
                }
                residual[oo * n_in + d] = scale * (net_jac - point.jac[oo * n_in + d]);
            }
        }
        for unit in 0..h {
            if pre[unit] <= 0.0 {
                continue;
            }
            for oo in 0..o {
                let mut acc = 0.0;
                for d in 0..n_in {
                    let r = residual[oo * n_in + d];
                    acc += r * self.w1[unit * n_in + d];
                    gw1[unit * n_in + d] += r * self.w2[oo * h + unit];
                }
                gw2[oo * h + unit] += acc;
            }
        }
    }

    fn params_mut(&mut self) -> [&mut [f64]; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    fn snapshot(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        (self.w1.clone(), self.b1.clone(), self.w2.clone(), self.b2.clone())
    }

    /// Forward pass to logits (no clamp); matches `MlpHead::logits` once the
    /// standardization has been folded in.
    fn raw_logits(&self, x: &[f64]) -> Vec<f64> {
        let mut hidden = vec![0.0; self.hidden_dim];
        for (unit, slot) in hidden.iter_mut().enumerate() {
            let row = &self.w1[unit * self.input_dim..(unit + 1) * self.input_dim];
            let z: f64 = self.b1[unit] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            *slot = z.max(0.0);
        }
        let mut out = vec![0.0; self.output_dim];
        for (o, slot) in out.iter_mut().enumerate() {
            let row = &self.w2[o * self.hidden_dim..(o + 1) * self.hidden_dim];
            *slot = self.b2[o] + row.iter().zip(&hidden).map(|(w, r)| w * r).sum::<f64>();
        }
        out
    }

    fn restore(&mut self, params: (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)) {
        (self.w1, self.b1, self.w2, self.b2) = params;
    }

    /// The true training objective: value MSE plus `gamma`-weighted Jacobian
    /// MSE over supported directions.
    fn objective(&self, samples: &[TrainPoint], gamma: f64) -> f64 {
        let (h, o, n_in) = (self.hidden_dim, self.output_dim, self.input_dim);
        let mut total = 0.0;
        let mut pre = vec![0.0; h];
        let mut act = vec![0.0; h];
        for point in samples {
            for unit in 0..h {
                let row = &self.w1[unit * n_in..(unit + 1) * n_in];
                let z: f64 =
                    self.b1[unit] + row.iter().zip(&point.z).map(|(w, v)| w * v).sum::<f64>();
                pre[unit] = z;
                act[unit] = z.max(0.0);
            }
            for oo in 0..o {
                let row = &self.w2[oo * h..(oo + 1) * h];
                let out: f64 =
                    self.b2[oo] + row.iter().zip(&act).map(|(w, r)| w * r).sum::<f64>();
                total += (out - point.u[oo]).powi(2) / o as f64;
                for d in 0..n_in {
                    if point.z[d] == 0.0 {
                        continue;
                    }
                    let mut net_jac = 0.0;
                    for unit in 0..h {
                        if pre[unit] > 0.0 {
                            net_jac += self.w2[oo * h + unit] * self.w1[unit * n_in + d];
                        }
                    }
                    total += gamma * (net_jac - point.jac[oo * n_in + d]).powi(2)
                        / (o * n_in) as f64;
                }
            }
        }
        total / samples.len() as f64
    }

    /// Sets the hidden layer to its ridge-regularized least-squares optimum
    /// with the output layer and the per-sample activation patterns frozen.
    /// The prediction is linear in (W1, b1) under a frozen pattern, and the
    /// per-sample Gram contribution factorizes as a Kronecker product of an
    /// output-coefficient block and an input block.
    fn solve_hidden_layer(&mut self, samples: &[TrainPoint], gamma: f64) {
        let (h, o, n_in) = (self.hidden_dim, self.output_dim, self.input_dim);
        let cols = n_in + 1; // per-unit unknowns: w1 row plus bias
        let k = h * cols;
        let mut gram = vec![0.0f64; k * k];
        let mut moment = vec![0.0f64; k];
        let mut coeff = vec![0.0f64; o * h]; // c_o[u] = W2[o,u]·active_u
        let mut cmat = vec![0.0f64; h * h]; // Σ_o c_o c_oᵀ
        let jac_weight = gamma / n_in as f64;
        for point in samples {
            let x = &point.z;
            let mut any_active = false;
            for unit in 0..h {
                let row = &self.w1[unit * n_in..(unit + 1) * n_in];
                let z: f64 = self.b1[unit] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
                let active = z > 0.0;
                any_active |= active;
                for oo in 0..o {
                    coeff[oo * h + unit] =
                        if active { self.w2[oo * h + unit] } else { 0.0 };
                }
            }
            if !any_active {
                continue;
            }
            cmat.fill(0.0);
            for oo in 0..o {
                let c = &coeff[oo * h..(oo + 1) * h];
                for i in 0..h {
                    if c[i] == 0.0 {
                        continue;
                    }
                    for j in i..h {
                        cmat[i * h + j] += c[i] * c[j];
                    }
                }
            }
            // Value rows: Gram += C ⊗ vvᵀ with v = [x, 1].
            for i in 0..h {
                for j in i..h {
                    let c = cmat[i * h + j];
                    if c == 0.0 {
                        continue;
                    }
                    for di in 0..cols {
                        let vi = if di < n_in { x[di] } else { 1.0 };
                        if vi == 0.0 {
                            continue;
                        }
                        let row = i * cols + di;
                        for dj in 0..cols {
                            let vj = if dj < n_in { x[dj] } else { 1.0 };
                            let col = j * cols + dj;
                            if col >= row {
                                gram[row * k + col] += c * vi * vj;
                            }
                        }
                    }
                }
            }
            // Jacobian rows add C ⊗ diag over supported input coordinates.
            for i in 0..h {
                for j in i..h {
                    let c = cmat[i * h + j];
                    if c == 0.0 {
                        continue;
                    }
                    for d in 0..n_in {
                        if x[d] == 0.0 {
                            continue;
                        }
                        gram[(i * cols + d) * k + (j * cols + d)] += jac_weight * c;
                    }
                }
            }
            for oo in 0..o {
                let c = &coeff[oo * h..(oo + 1) * h];
                let value_target = point.u[oo] - self.b2[oo];
                for unit in 0..h {
                    if c[unit] == 0.0 {
                        continue;
                    }
                    for d in 0..n_in {
                        if x[d] != 0.0 {
                            moment[unit * cols + d] += c[unit]
                                * (value_target * x[d]
                                    + jac_weight * point.jac[oo * n_in + d]);
                        }
                    }
                    moment[unit * cols + n_in] += c[unit] * value_target;
                }
            }
        }
        for i in 0..k {
            for j in 0..i {
                gram[i * k + j] = gram[j * k + i];
            }
            gram[i * k + i] += 1e-9 * samples.len() as f64;
        }
        let Some(solution) = solve_spd(&mut gram, &mut moment, k, 1) else {
            return;
        };
        for unit in 0..h {
            for d in 0..n_in {
                self.w1[unit * n_in + d] = solution[unit * cols + d];
            }
            self.b1[unit] = solution[unit * cols + n_in];
        }
    }

    /// Sets the output layer to its exact ridge-regularized least-squares
    /// optimum given the current hidden features, fitting both values and
    /// `gamma`-weighted Jacobian rows. For each sample the design rows are
    /// the feature vector (with a bias column) and, per input coordinate,
    /// the active rows of W1 (with a zero bias column).
    fn solve_output_layer(&mut self, samples: &[TrainPoint], gamma: f64) {
        let h = self.hidden_dim;
        let n_in = self.input_dim;
        let k = h + 1; // features plus bias
        let mut gram = vec![0.0f64; k * k];
        let mut moment = vec![0.0f64; k * self.output_dim];
        let mut features = vec![0.0f64; k];
        let mut active = vec![false; h];
        let jac_weight = gamma / n_in as f64;
        for point in samples {
            let x = &point.z;
            for unit in 0..h {
                let row = &self.w1[unit * n_in..(unit + 1) * n_in];
                let z: f64 = self.b1[unit] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
                active[unit] = z > 0.0;
                features[unit] = z.max(0.0);
            }
            features[h] = 1.0;
            for i in 0..k {
                for j in i..k {
                    gram[i * k + j] += features[i] * features[j];
                }
                for o in 0..self.output_dim {
                    moment[i * self.output_dim + o] += features[i] * point.u[o];
                }
            }
            for d in 0..n_in {
                if x[d] == 0.0 {
                    continue;
                }
                // Row ψ_d: unit → active·W1[unit, d], bias column 0.
                for i in 0..h {
                    if !active[i] {
                        continue;
                    }
                    let wi = self.w1[i * n_in + d];
                    for j in i..h {
                        if active[j] {
                            gram[i * k + j] += jac_weight * wi * self.w1[j * n_in + d];
                        }
                    }
                    for o in 0..self.output_dim {
                        moment[i * self.output_dim + o] +=
                            jac_weight * wi * point.jac[o * n_in + d];
                    }
                }
            }
        }
        for i in 0..k {
            for j in 0..i {
                gram[i * k + j] = gram[j * k + i];
            }
            gram[i * k + i] += 1e-10 * samples.len() as f64;
        }
        let Some(solution) = solve_spd(&mut gram, &mut moment, k, self.output_dim) else {
            return; // singular features; keep the gradient solution
        };
        for o in 0..self.output_dim {
            for unit in 0..h {
                self.w2[o * h + unit] = solution[unit * self.output_dim + o];
            }
            self.b2[o] = solution[h * self.output_dim + o];
        }
    }
}

/// Solves `A X = B` for symmetric positive-definite `A` (n×n) with `m`
/// right-hand sides stored row-major in `b`, by Cholesky factorization in
/// place. Returns `None` if the factorization breaks down.
fn solve_spd(a: &mut [f64], b: &mut [f64], n: usize, m: usize) -> Option<Vec<f64>> {
    // Cholesky: A = L Lᵀ, stored in the lower triangle of `a`.
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= a[i * n + k] * a[j * n + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                a[i * n + i] = sum.sqrt();
            } else {
                a[i * n + j] = sum / a[j * n + j];
            }
        }
    }
    // Forward then backward substitution per right-hand side.
    for o in 0..m {
        for i in 0..n {
            let mut sum = b[i * m + o];
            for k in 0..i {
                sum -= a[i * n + k] * b[k * m + o];
            }
            b[i * m + o] = sum / a[i * n + i];
        }
        for i in (0..n).rev() {
            let mut sum = b[i * m + o];
            for k in i + 1..n {
                sum -= a[k * n + i] * b[k * m + o];
            }
            b[i * m + o] = sum / a[i * n + i];
        }
    }
    Some(b.to_vec())
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(len: usize) -> Self {
        Adam { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    /// Clears the moments of the last `count` parameters after an exact
    /// output-layer solve.
    fn reset_tail(&mut self, count: usize) {
        let start = self.m.len() - count;
        self.m[start..].fill(0.0);
        self.v[start..].fill(0.0);
    }

    fn step(&mut self, params: [&mut [f64]; 4], grad: &[f64], lr: f64) {
        self.t += 1;
        let bias1 = 1.0 - Self::BETA1.powi(self.t as i32);
        let bias2 = 1.0 - Self::BETA2.powi(self.t as i32);
        let mut offset = 0;
        for block in params {
            for value in block.iter_mut() {
                let g = grad[offset];
                self.m[offset] = Self::BETA1 * self.m[offset] + (1.0 - Self::BETA1) * g;
                self.v[offset] = Self::BETA2 * self.v[offset] + (1.0 - Self::BETA2) * g * g;
                let m_hat = self.m[offset] / bias1;
                let v_hat = self.v[offset] / bias2;
                *value -= lr * m_hat / (v_hat.sqrt() + Self::EPS);
                offset += 1;
            }
        }
    }
}
