//! Command-line front end: load, inspect, compile, run, and verify automata.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use elmata::compiler::{compile, compiled_to_json, load_compiled, output_matrix, save_compiled};
use elmata::equivalence::{
    verify_approx, verify_exact, EquivalenceError, EquivalenceReport, ReportValue,
    support_prefix_anchors,
};
use elmata::heads::{
    fit_mlp_log_head, HeadError, HeadKind, LrSchedule, MlpFitConfig,
};
use elmata::numerics::{Mode, Rational};
use elmata::pfsa::{Pfsa, PfsaError};
use elmata::runtime::{precision_trace, Network};

#[derive(Parser)]
#[command(
    name = "elmata",
    version,
    about = "Probabilistic finite-state automata as recurrent language models",
    long_about = "Compiles probabilistic finite-state automata into weakly equivalent \
                  Elman recurrent language models and verifies the equivalence with \
                  exact rational arithmetic.\n\nExit codes: 0 pass, 1 fail or violation, \
                  2 usage, parse, or guard error."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check automaton well-formedness; prints one line per violation.
    Validate { path: PathBuf },
    /// Remove states off every positive initial-to-final path.
    Trim {
        path: PathBuf,
        /// Write the trimmed automaton here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compile an automaton to network parameters plus output matrix.
    Compile {
        path: PathBuf,
        /// Write the compiled JSON here instead of stdout.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run a compiled network over a string and print the hidden state.
    Run {
        /// Compiled-parameters file produced by `compile`.
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        string: String,
        /// Also print the per-step precision table.
        #[arg(long)]
        trace_precision: bool,
        #[arg(long, default_value = "exact")]
        mode: Mode,
    },
    /// Print the automaton and network probabilities of one string.
    Prob {
        path: PathBuf,
        string: String,
        #[arg(long, default_value = "sparsemax")]
        head: HeadKind,
        #[arg(long, default_value = "exact")]
        mode: Mode,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
    },
    /// Print the exact next-symbol distribution after a prefix.
    Conditional { path: PathBuf, prefix: String },
    /// Apply a δ-perturbation, producing a fully connected automaton.
    Perturb {
        path: PathBuf,
        #[arg(long)]
        delta: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw one string by ancestral sampling.
    Sample {
        path: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Per-step hidden-state precision against the linear bound.
    Precision { path: PathBuf, string: String },
    /// Fit the MLP output head on a δ-perturbed automaton.
    FitMlp {
        path: PathBuf,
        #[arg(long, default_value = "1/1000")]
        delta: String,
        /// Write the fitted head here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Verify weak equivalence over all strings up to a length bound.
    Verify {
        path: PathBuf,
        #[arg(long, default_value = "sparsemax")]
        head: HeadKind,
        #[arg(long, default_value_t = 8)]
        max_len: usize,
        #[arg(long, default_value = "exact")]
        mode: Mode,
        /// Perturbation; switches to the approximate pipeline.
        #[arg(long)]
        delta: Option<String>,
        /// Restricted-TVD budget for approximate verification.
        #[arg(long, default_value = "1/100")]
        epsilon: String,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        /// Write the full report as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        fit: FitArgs,
    },
}

#[derive(Args)]
struct FitArgs {
    /// Hidden width of the MLP head.
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    /// Length bound for the anchor prefixes.
    #[arg(long, default_value_t = 6)]
    sample_len: usize,
    /// Training-pool size (anchors plus jittered points).
    #[arg(long, default_value_t = 512)]
    train_size: usize,
    /// Held-out validation points.
    #[arg(long, default_value_t = 128)]
    validation_size: usize,
    #[arg(long, default_value_t = 15_000)]
    max_iters: usize,
    #[arg(long, default_value_t = 0.01)]
    learning_rate: f64,
    /// Target sup logit error.
    #[arg(long, default_value_t = 1e-3)]
    tau: f64,
    /// Largest convex step toward a log-similar anchor.
    #[arg(long, default_value_t = 0.02)]
    convex_jitter: f64,
    /// Relative coordinatewise noise on jittered points.
    #[arg(long, default_value_t = 0.005)]
    coordinate_noise: f64,
    /// Deterministic restarts; the best training objective wins.
    #[arg(long, default_value_t = 4)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Enable the max(ξ1, ·) clamp layer in front of the MLP.
    #[arg(long)]
    clamp: bool,
}

impl FitArgs {
    fn config(&self) -> MlpFitConfig {
        MlpFitConfig {
            hidden: self.hidden,
            train_size: self.train_size,
            validation_size: self.validation_size,
            max_iters: self.max_iters,
            learning_rate: self.learning_rate,
            schedule: LrSchedule::Cosine,
            tau: self.tau,
            convex_jitter: self.convex_jitter,
            coordinate_noise: self.coordinate_noise,
            restarts: self.restarts,
            use_clamp: self.clamp,
            seed: self.seed,
        }
    }
}

/// An error carrying its exit code: 2 for usage/parse/guard problems, 1 for
/// domain failures.
struct CliError {
    message: String,
    code: u8,
}

impl CliError {
    fn usage(message: impl fmt::Display) -> Self {
        CliError { message: message.to_string(), code: 2 }
    }

    fn failure(message: impl fmt::Display) -> Self {
        CliError { message: message.to_string(), code: 1 }
    }
}

impl From<PfsaError> for CliError {
    fn from(e: PfsaError) -> Self {
        match e {
            // Domain failures on well-formed input.
            PfsaError::ZeroPrefixMass | PfsaError::SampleOverflow(_) => CliError::failure(e),
            // Everything else is bad input.
            _ => CliError::usage(e),
        }
    }
}

impl From<EquivalenceError> for CliError {
    fn from(e: EquivalenceError) -> Self {
        CliError::usage(e)
    }
}

impl From<HeadError> for CliError {
    fn from(e: HeadError) -> Self {
        CliError::usage(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn load_valid(path: &Path) -> Result<Pfsa, CliError> {
    let automaton = Pfsa::load(path)?;
    let violations = automaton.validate();
    if violations.is_empty() {
        Ok(automaton)
    } else {
        for v in &violations {
            eprintln!("violation: {v}");
        }
        Err(CliError::failure(format!(
            "{} fails validation with {} violation(s)",
            path.display(),
            violations.len()
        )))
    }
}

fn parse_rational(text: &str, what: &str) -> Result<Rational, CliError> {
    text.parse()
        .map_err(|e| CliError::usage(format!("bad {what} `{text}`: {e}")))
}

fn write_or_print(out: Option<&Path>, content: &str) -> Result<(), CliError> {
    match out {
        Some(path) => {
            std::fs::write(path, content)
                .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))?;
            println!("written: {}", path.display());
            Ok(())
        }
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode, CliError> {
    match command {
        Command::Validate { path } => {
            let automaton = Pfsa::load(&path)?;
            let violations = automaton.validate();
            if violations.is_empty() {
                println!("valid: {} states, {} symbols", automaton.state_count(), automaton.alphabet_size());
                Ok(ExitCode::SUCCESS)
            } else {
                for v in &violations {
                    println!("violation: {v}");
                }
                Ok(ExitCode::FAILURE)
            }
        }

        Command::Trim { path, out } => {
            let automaton = load_valid(&path)?;
            let (trimmed, warnings) = automaton.trim();
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            write_or_print(out.as_deref(), &(trimmed.to_json() + "\n"))?;
            Ok(ExitCode::SUCCESS)
        }

        Command::Compile { path, out } => {
            let automaton = load_valid(&path)?;
            let params = compile(&automaton);
            let output = output_matrix(&automaton);
            match out {
                Some(path) => {
                    save_compiled(&path, &params, &output)?;
                    println!("dimension: {}", params.dimension());
                    println!("written: {}", path.display());
                }
                None => print!("{}", compiled_to_json(&params, &output) + "\n"),
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Run { params, string, trace_precision, mode } => {
            let (params, _) = load_compiled(&params)?;
            let ids = params.parse_string(&string)?;
            match mode {
                Mode::Exact => {
                    let net = Network::<Rational>::new(&params);
                    let h = net.run(&ids);
                    println!("t: {}", h.t);
                    println!("mass: {}", h.l1_mass());
                    for (d, value) in h.entries.iter().enumerate() {
                        println!("{}: {}", params.coordinate_name(d), value);
                    }
                }
                Mode::Float => {
                    let net = Network::<f64>::new(&params);
                    let h = net.run(&ids);
                    println!("t: {}", h.t);
                    println!("mass: {}", h.l1_mass().render());
                    for (d, value) in h.entries.iter().enumerate() {
                        println!("{}: {}", params.coordinate_name(d), value.render());
                    }
                }
            }
            if trace_precision {
                let trace = precision_trace(&params, &ids);
                println!();
                print!("{}", precision_table(&trace));
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Prob { path, string, head, mode, temperature } => {
            let automaton = load_valid(&path)?;
            let ids = automaton.parse_string(&string)?;
            match mode {
                Mode::Exact => {
                    let report =
                        verify_one::<Rational>(&automaton, &ids, head, temperature)?;
                    println!("{}  {}  {}", report.0, report.1, report.2);
                }
                Mode::Float => {
                    let report = verify_one::<f64>(&automaton, &ids, head, temperature)?;
                    println!(
                        "{}  {}  {}",
                        report.0.render(),
                        report.1.render(),
                        report.2.render()
                    );
                }
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Conditional { path, prefix } => {
            let automaton = load_valid(&path)?;
            let distribution = automaton.conditional(&prefix)?;
            for (y, symbol) in automaton.alphabet().iter().enumerate() {
                println!("{symbol}: {}", distribution.symbol(y));
            }
            println!("EOS: {}", distribution.eos());
            Ok(ExitCode::SUCCESS)
        }

        Command::Perturb { path, delta, out } => {
            let automaton = load_valid(&path)?;
            let delta = parse_rational(&delta, "delta")?;
            let perturbed = automaton.perturb(&delta)?;
            write_or_print(out.as_deref(), &(perturbed.to_json() + "\n"))?;
            Ok(ExitCode::SUCCESS)
        }

        Command::Sample { path, seed } => {
            let automaton = load_valid(&path)?;
            let (trimmed, _) = automaton.trim();
            if trimmed != automaton {
                return Err(CliError::failure(
                    "automaton is not trim; sampling could fail to halt (run `trim` first)",
                ));
            }
            println!("{}", automaton.sample(seed)?);
            Ok(ExitCode::SUCCESS)
        }

        Command::Precision { path, string } => {
            let automaton = load_valid(&path)?;
            let ids = automaton.parse_string(&string)?;
            let params = compile(&automaton);
            let trace = precision_trace(&params, &ids);
            print!("{}", precision_table(&trace));
            if trace.within_bound() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::FAILURE)
            }
        }

        Command::FitMlp { path, delta, out, fit } => {
            let automaton = load_valid(&path)?;
            let delta = parse_rational(&delta, "delta")?;
            let perturbed = automaton.perturb(&delta)?;
            let params = compile(&perturbed);
            let output = output_matrix(&perturbed);
            let net = Network::<Rational>::new(&params);
            let anchors = support_prefix_anchors(&automaton, &net, fit.sample_len)?;
            let config = fit.config();
            let (head, report) = fit_mlp_log_head(&output, &anchors, &config)?;
            println!("anchors: {}", anchors.len());
            println!("tau_achieved: {:.6e}", report.tau_achieved);
            println!("converged: {}", report.converged);
            println!("train_rmse: {:.6e}", report.train_rmse);
            println!("xi1: {:.6e}", report.xi1);
            println!("xi2: {:.6}", report.xi2);
            println!("lipschitz: {:.6}", report.lipschitz);
            if let Some(path) = out {
                head.save(&path)?;
                println!("written: {}", path.display());
            }
            Ok(if report.converged { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }

        Command::Verify { path, head, max_len, mode, delta, epsilon, temperature, out, fit } => {
            let automaton = load_valid(&path)?;
            let epsilon = parse_rational(&epsilon, "epsilon")?;
            let delta = delta
                .map(|d| parse_rational(&d, "delta"))
                .transpose()?;
            match (mode, head, &delta) {
                (Mode::Exact, HeadKind::Mlp, _) => Err(CliError::usage(
                    "the mlp head evaluates in float mode; pass --mode float",
                )),
                (Mode::Exact, _, None) => finish_verify(
                    verify_exact::<Rational>(&automaton, head, max_len, Rational::zero(), temperature)?,
                    out.as_deref(),
                ),
                (Mode::Float, HeadKind::Mlp, None) => Err(CliError::usage(
                    "the mlp head is approximate; pass --delta to fit it",
                )),
                (Mode::Float, _, None) => finish_verify(
                    verify_exact::<f64>(&automaton, head, max_len, 1e-9, temperature)?,
                    out.as_deref(),
                ),
                (Mode::Exact, _, Some(d)) => finish_verify(
                    verify_approx::<Rational>(
                        &automaton,
                        d,
                        head,
                        &fit.config(),
                        fit.sample_len,
                        max_len,
                        epsilon.clone(),
                        temperature,
                    )?,
                    out.as_deref(),
                ),
                (Mode::Float, _, Some(d)) => finish_verify(
                    verify_approx::<f64>(
                        &automaton,
                        d,
                        head,
                        &fit.config(),
                        fit.sample_len,
                        max_len,
                        epsilon.to_f64(),
                        temperature,
                    )?,
                    out.as_deref(),
                ),
            }
        }
    }
}

/// stringsum, head-based probability, and their absolute difference.
fn verify_one<S: ReportValue>(
    automaton: &Pfsa,
    string: &[usize],
    head_kind: HeadKind,
    temperature: f64,
) -> Result<(S, S, S), CliError>
where
    elmata::heads::Head: elmata::heads::HeadEval<S>,
{
    use elmata::heads::{Head, SoftmaxLogHead, SparsemaxHead};

    let params = compile(automaton);
    let output = output_matrix(automaton);
    let head = match head_kind {
        HeadKind::Sparsemax => Head::Sparsemax(SparsemaxHead::new(output)),
        HeadKind::SoftmaxLog => {
            Head::SoftmaxLog(SoftmaxLogHead::with_temperature(output, temperature))
        }
        HeadKind::Mlp => {
            return Err(CliError::usage(
                "`prob` evaluates exact heads; fit the mlp head with `fit-mlp` and `verify`",
            ))
        }
    };
    let net = Network::<S>::new(&params);
    let p_automaton = automaton.stringsum_in::<S>(string);
    let p_network = elmata::equivalence::lm_string_prob(&net, &head, string)?;
    let diff = p_automaton.sub(&p_network).abs();
    Ok((p_automaton, p_network, diff))
}

fn finish_verify<S: ReportValue>(
    report: EquivalenceReport<S>,
    out: Option<&Path>,
) -> Result<ExitCode, CliError> {
    eprintln!("wall: {:?}", report.wall);
    println!("{}", report.summary());
    println!();
    print!("{}", report.to_tsv());
    if let Some(path) = out {
        std::fs::write(path, report.to_json() + "\n")
            .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))?;
        eprintln!("report written: {}", path.display());
    }
    Ok(if report.pass { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn precision_table(trace: &elmata::runtime::PrecisionTrace) -> String {
    let mut out = String::from("step\tbits\tbound\tverdict\n");
    for (t, &bits) in trace.bits.iter().enumerate() {
        let bound = trace.bound_constant * (t as u64 + 1);
        let verdict = if bits <= bound { "PASS" } else { "FAIL" };
        out.push_str(&format!("{t}\t{bits}\t{bound}\t{verdict}\n"));
    }
    out
}
