//! `gmmlab` command-line front end.
//!
//! Exit codes: 0 success, 2 input error, 3 computation error (JSON on
//! stderr), 4 verification failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::builder::PossibleValuesParser;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use gmmlab::estimators::{averaging, hard_margin_svm, min_norm_ls, ridge, Classifier, SvmOptions};
use gmmlab::experiments::{figure, run_sweep, FigureOverrides, SweepConfig};
use gmmlab::io::{read_dataset, read_model, write_dataset_json, write_dataset_with_sidecar};
use gmmlab::model::{preset_model, EnsembleConstants, FigureId, PresetParams};
use gmmlab::regimes::{check, ConditionReport, CHECK_IDS};
use gmmlab::risk::{
    bound_averaging, bound_balanced, bound_bilevel, bound_isotropic, bound_noisy_isotropic, chernoff_bound,
    exact_risk, margin_bound_classic, monte_carlo_risk, noisy_risk, DEFAULT_RADIUS_CONSTANT,
};
use gmmlab::verify::{run_all, SuiteSizes};
use gmmlab::{sample_dataset, Constants, GmmError, GmmModel, LabelMode};

#[derive(Parser)]
#[command(name = "gmmlab", version, about = "Overparameterized Gaussian-mixture classification toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a training set from a model.
    Sample(SampleArgs),
    /// Fit an estimator to a dataset file.
    Estimate(EstimateArgs),
    /// Exact, Monte Carlo and bound risks of a classifier or model.
    Risk(RiskArgs),
    /// Evaluate a theorem's or corollary's conditions clause by clause.
    Check(CheckArgs),
    /// Run a sweep described by a JSON config.
    Sweep(SweepArgs),
    /// Reproduce a figure's sweep and write its CSV panels.
    Figure(FigureArgs),
    /// Run the randomized property suites.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct ModelSource {
    /// Model JSON file.
    #[arg(long, conflicts_with = "figure")]
    model: Option<PathBuf>,
    /// Use a figure preset's default model instead.
    #[arg(long)]
    figure: Option<FigureId>,
}

impl ModelSource {
    fn load(&self) -> Result<(GmmModel, Option<usize>), GmmError> {
        match (&self.model, self.figure) {
            (Some(path), _) => Ok((read_model(path)?, None)),
            (None, Some(fig)) => {
                let p = preset_model(fig, PresetParams::default())?;
                Ok((p.model, Some(p.n)))
            }
            (None, None) => Err(GmmError::InvalidInput("give --model <file> or --figure <id>".into())),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DataFormat {
    Json,
    Bin,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    source: ModelSource,
    #[arg(long)]
    n: Option<usize>,
    /// Random seed; defaults to 0.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output dataset path (.json).
    #[arg(long)]
    out: PathBuf,
    /// `bin` writes X to a binary sidecar next to the JSON.
    #[arg(long, value_enum, default_value = "json")]
    format: DataFormat,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorKind {
    Ls,
    Ridge,
    Averaging,
    Svm,
}

#[derive(Args)]
struct EstimateArgs {
    /// Dataset JSON file.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    estimator: EstimatorKind,
    /// Ridge parameter (required for ridge).
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, default_value = "corrupted")]
    labels: LabelMode,
    /// Output classifier JSON; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundKind {
    Balanced,
    Isotropic,
    Bilevel,
    Averaging,
    NoisyIsotropic,
    MarginClassic,
}

#[derive(Args)]
struct RiskArgs {
    #[command(flatten)]
    source: ModelSource,
    /// Classifier JSON from `estimate`.
    #[arg(long)]
    classifier: Option<PathBuf>,
    /// Monte Carlo test samples (0 disables).
    #[arg(long, default_value_t = 0)]
    mc: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also evaluate a theorem bound for the model.
    #[arg(long, value_enum)]
    bound: Option<BoundKind>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    tau: f64,
    /// Confidence level for the margin bound.
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Constants as `C1=2,C2=0.5`.
    #[arg(long, default_value = "")]
    constants: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Json,
    Csv,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(value_parser = PossibleValuesParser::new(CHECK_IDS))]
    theorem: String,
    #[command(flatten)]
    source: ModelSource,
    #[arg(long)]
    n: Option<usize>,
    /// With --eta-norm: identity covariance in dimension p.
    #[arg(long)]
    p: Option<usize>,
    /// Identity-covariance model with equal mean entries of this norm.
    #[arg(long, requires = "p")]
    eta_norm: Option<f64>,
    /// Label-flip probability for the --eta-norm model.
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    #[arg(long, default_value_t = 0.0)]
    tau: f64,
    /// Corollary exponent (cor2, cor3_low, cor5).
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value = "")]
    constants: String,
    #[arg(long, value_enum, default_value = "json")]
    format: OutFormat,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep config JSON.
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_enum, default_value = "csv")]
    format: OutFormat,
}

#[derive(Args)]
struct FigureArgs {
    figure: FigureId,
    /// Overrides JSON (trials, grids, fixed parameters).
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Smaller suites for a fast check.
    #[arg(long)]
    quick: bool,
}

enum Failure {
    Error(GmmError),
    Verify,
}

impl From<GmmError> for Failure {
    fn from(e: GmmError) -> Self {
        Failure::Error(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Error(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Error(e.into())
    }
}

type CmdResult = Result<(), Failure>;

fn emit(value: &Value, out: Option<&Path>) -> CmdResult {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => fs::write(path, text + "\n")?,
        None => print_stdout(&text)?,
    }
    Ok(())
}

/// A closed pipe (e.g. `| head`) ends output quietly.
fn print_stdout(text: &str) -> std::io::Result<()> {
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => other,
    }
}

fn need_n(n: Option<usize>, fallback: Option<usize>) -> Result<usize, GmmError> {
    n.or(fallback).ok_or_else(|| GmmError::InvalidInput("--n is required".into()))
}

fn cmd_sample(a: SampleArgs) -> CmdResult {
    let (model, preset_n) = a.source.load()?;
    let ds = sample_dataset(&model, need_n(a.n, preset_n)?, a.seed)?;
    match a.format {
        DataFormat::Json => write_dataset_json(&ds, &a.out)?,
        DataFormat::Bin => write_dataset_with_sidecar(&ds, &a.out)?,
    }
    Ok(())
}

fn cmd_estimate(a: EstimateArgs) -> CmdResult {
    let ds = read_dataset(&a.data)?;
    let value = match a.estimator {
        EstimatorKind::Ls => serde_json::to_value(min_norm_ls(&ds, a.labels)?)?,
        EstimatorKind::Ridge => {
            let tau = a.tau.ok_or_else(|| GmmError::InvalidInput("ridge needs --tau".into()))?;
            serde_json::to_value(ridge(&ds, tau, a.labels)?)?
        }
        EstimatorKind::Averaging => serde_json::to_value(averaging(&ds, a.labels)?)?,
        EstimatorKind::Svm => {
            let sol = hard_margin_svm(&ds, a.labels, SvmOptions::default())?;
            let mut v = serde_json::to_value(&sol.classifier)?;
            v["support_set"] = json!(sol.support_set);
            v["alpha"] = json!(sol.alpha);
            v["duality_gap"] = json!(sol.duality_gap());
            v
        }
    };
    emit(&value, a.out.as_deref())
}

fn cmd_risk(a: RiskArgs) -> CmdResult {
    let (model, preset_n) = a.source.load()?;
    let constants = Constants::parse(&a.constants)?;
    let mut out = json!({});
    if let Some(path) = &a.classifier {
        let c: Classifier = serde_json::from_str(&fs::read_to_string(path)?)?;
        let report = if model.flip_prob() > 0.0 { noisy_risk(&c.w, &model)? } else { exact_risk(&c.w, &model)? };
        out["risk"] = serde_json::to_value(report)?;
        out["chernoff"] = json!(chernoff_bound(&c.w, &model).ok());
        if a.mc > 0 {
            out["monte_carlo"] = serde_json::to_value(monte_carlo_risk(&c.w, &model, a.mc, a.seed)?)?;
        }
    }
    if let Some(kind) = a.bound {
        let n = need_n(a.n, preset_n)?;
        out["bound"] = match kind {
            BoundKind::Balanced => serde_json::to_value(bound_balanced(&model, n, a.tau, &constants)?)?,
            BoundKind::Isotropic => serde_json::to_value(bound_isotropic(&model, n, &constants)?)?,
            BoundKind::Bilevel => serde_json::to_value(bound_bilevel(
                &model,
                n,
                a.tau,
                EnsembleConstants::default(),
                &constants,
            )?)?,
            BoundKind::Averaging => serde_json::to_value(bound_averaging(&model, &constants)?)?,
            BoundKind::NoisyIsotropic => serde_json::to_value(bound_noisy_isotropic(&model, n, &constants)?)?,
            BoundKind::MarginClassic => {
                let rc = if constants.is_empty() {
                    DEFAULT_RADIUS_CONSTANT
                } else {
                    constants.resolve(&["R"])?["R"]
                };
                serde_json::to_value(margin_bound_classic(n, &model, a.delta, rc)?)?
            }
        };
    }
    if a.classifier.is_none() && a.bound.is_none() {
        return Err(GmmError::InvalidInput("give --classifier and/or --bound".into()).into());
    }
    emit(&out, a.out.as_deref())
}

fn cmd_check(a: CheckArgs) -> CmdResult {
    let (model, preset_n) = match a.eta_norm {
        Some(norm) => {
            let p = a.p.expect("clap enforces --p");
            if p == 0 {
                return Err(GmmError::InvalidInput("--p must be positive".into()).into());
            }
            let m = GmmModel::isotropic(vec![norm / (p as f64).sqrt(); p])?.with_flip_prob(a.gamma)?;
            (m, None)
        }
        None => a.source.load()?,
    };
    if let Some(p) = a.p {
        if p != model.dim() {
            return Err(GmmError::InvalidInput(format!("--p {p} does not match the model dimension {}", model.dim())).into());
        }
    }
    let n = need_n(a.n, preset_n)?;
    let c = Constants::parse(&a.constants)?;
    let report = check(&a.theorem, &model, n, &c, a.tau, a.alpha)?;
    match a.format {
        OutFormat::Json => emit(&serde_json::to_value(&report)?, None),
        OutFormat::Csv => {
            let mut w = csv_writer();
            w.write_record(ConditionReport::CSV_HEADER).map_err(GmmError::from)?;
            w.write_record(report.csv_row()).map_err(GmmError::from)?;
            match w.flush() {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                other => Ok(other?),
            }
        }
    }
}

fn csv_writer() -> csv::Writer<std::io::Stdout> {
    csv::Writer::from_writer(std::io::stdout())
}

fn cmd_sweep(a: SweepArgs) -> CmdResult {
    let text = fs::read_to_string(&a.config)?;
    let mut config: SweepConfig = serde_json::from_str(&text)?;
    if let Some(t) = a.run.trials {
        config.trials = t;
    }
    if let Some(s) = a.run.seed {
        config.base_seed = s;
    }
    config.threads = a.run.threads;
    let result = run_sweep(&config)?;
    fs::create_dir_all(&a.run.out)?;
    match a.format {
        OutFormat::Json => {
            let path = a.run.out.join("sweep.json");
            fs::write(&path, serde_json::to_string_pretty(&result)?)?;
        }
        OutFormat::Csv => {
            let mut w = csv::Writer::from_path(a.run.out.join("sweep_aggregates.csv")).map_err(GmmError::from)?;
            w.write_record(["point", "coords", "metric", "mean", "std", "count", "failed_trials"])
                .map_err(GmmError::from)?;
            for agg in &result.aggregates {
                let coords: Vec<String> = agg.coords.iter().map(|(k, v)| format!("{k}={v}")).collect();
                for (k, s) in &agg.stats {
                    w.write_record([
                        agg.point.to_string(),
                        coords.join(";"),
                        k.clone(),
                        format!("{:.16e}", s.mean),
                        format!("{:.16e}", s.std),
                        s.count.to_string(),
                        agg.failed_trials.to_string(),
                    ])
                    .map_err(GmmError::from)?;
                }
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn cmd_figure(a: FigureArgs) -> CmdResult {
    let mut overrides: FigureOverrides = match &a.config {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
        None => FigureOverrides::default(),
    };
    if a.run.trials.is_some() {
        overrides.trials = a.run.trials;
    }
    if a.run.seed.is_some() {
        overrides.base_seed = a.run.seed;
    }
    if a.run.threads.is_some() {
        overrides.threads = a.run.threads;
    }
    let out = figure(a.figure, &overrides)?;
    for path in out.write(&a.run.out)? {
        print_stdout(&path.display().to_string())?;
    }
    Ok(())
}

fn cmd_verify(a: VerifyArgs) -> CmdResult {
    let sizes = if a.quick { SuiteSizes::quick() } else { SuiteSizes::default() };
    let outcomes = run_all(sizes, a.seed);
    for o in &outcomes {
        print_stdout(&o.to_string())?;
        for f in &o.failures {
            print_stdout(&format!("  {f}"))?;
        }
    }
    if outcomes.iter().all(|o| o.ok()) {
        Ok(())
    } else {
        Err(Failure::Verify)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sample(a) => cmd_sample(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Risk(a) => cmd_risk(a),
        Command::Check(a) => cmd_check(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Figure(a) => cmd_figure(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verify) => ExitCode::from(4),
        Err(Failure::Error(e)) => {
            let code = if e.is_input_error() { 2 } else { 3 };
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::from(code)
        }
    }
}
