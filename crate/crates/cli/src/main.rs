use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use lpactive::experiment::{
    calibrate_constants, run_experiment, CalibrationSettings, ExperimentConfig, ExperimentOutput,
};
use lpactive::Constants;

/// Seeded experiments for active l_p regression.
#[derive(Parser)]
#[command(name = "bench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a pipeline over budgets and trials and write a CSV report.
    Run(Box<RunArgs>),
    /// Search the budget multipliers on the planted ReLU family.
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// key=value file loaded before the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// planted-relu, planted-identity, hard-small-p or hard-large-p.
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    d: Option<String>,
    /// single, two-stage or direct.
    #[arg(long)]
    pipeline: Option<String>,
    /// Counts (100,200), multiples of the calibrated budget (x1,x2) or auto.
    #[arg(long)]
    budgets: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Link for planted problems: identity, relu, clip, lb-small, lb-large.
    #[arg(long)]
    f: Option<String>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Constants file replacing the calibrated defaults.
    #[arg(long)]
    constants: Option<PathBuf>,
    #[arg(long)]
    threads: Option<String>,
    /// Fill wall_ms; the CSV is then no longer reproducible.
    #[arg(long)]
    timing: bool,
    /// Fail unless every budget reaches this guarantee pass rate.
    #[arg(long)]
    min_pass_rate: Option<f64>,
    /// Fail unless every budget reaches this distinguisher success rate.
    #[arg(long)]
    min_distinguish_rate: Option<f64>,
    /// Fail if the median ratio grows with the budget.
    #[arg(long)]
    assert_monotone: bool,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    d: usize,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long, default_value_t = 0.25)]
    eps: f64,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.75)]
    target: f64,
    /// First multiplier of the doubling search.
    #[arg(long, default_value_t = 1.0)]
    start: f64,
    /// Constants to start from; the calibrated defaults when absent.
    #[arg(long)]
    constants: Option<PathBuf>,
    /// Pass rate the embedding constant must reach; negative keeps it fixed.
    #[arg(long, default_value_t = 0.95, allow_negative_numbers = true)]
    emb_target: f64,
    /// Where to write the resulting constants file.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn build_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        cfg.apply_text(&text).with_context(|| format!("in {}", path.display()))?;
    }
    let flags = [
        ("problem", &args.problem),
        ("p", &args.p),
        ("eps", &args.eps),
        ("n", &args.n),
        ("d", &args.d),
        ("pipeline", &args.pipeline),
        ("budgets", &args.budgets),
        ("trials", &args.trials),
        ("seed", &args.seed),
        ("f", &args.f),
        ("threads", &args.threads),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v).with_context(|| format!("--{key}"))?;
        }
    }
    if let Some(path) = &args.constants {
        cfg.constants =
            Constants::parse(&fs::read_to_string(path)?).with_context(|| format!("in {}", path.display()))?;
    }
    if let Some(out) = &args.out {
        cfg.out_path = Some(out.clone());
    }
    cfg.timing |= args.timing;
    cfg.validate()?;
    Ok(cfg)
}

fn check(args: &RunArgs, out: &ExperimentOutput) -> Vec<String> {
    let mut failures = Vec::new();
    for s in &out.summary {
        if let Some(min) = args.min_pass_rate {
            if s.pass_rate < min {
                failures.push(format!("budget {}: pass rate {} < {min}", s.budget, s.pass_rate));
            }
        }
        if let Some(min) = args.min_distinguish_rate {
            match s.distinguish_rate {
                Some(r) if r >= min => {}
                Some(r) => failures.push(format!("budget {}: distinguish rate {r} < {min}", s.budget)),
                None => failures.push("distinguish rate requested for a planted problem".into()),
            }
        }
    }
    if args.assert_monotone && !out.median_nonincreasing() {
        failures.push("median ratio increases with the budget".into());
    }
    failures
}

fn run(args: RunArgs) -> Result<bool> {
    let cfg = build_config(&args)?;
    let out = run_experiment(&cfg)?;
    if cfg.out_path.is_none() {
        print!("{}", out.csv()?);
    }
    eprint!("{out}");
    let failures = check(&args, &out);
    for f in &failures {
        eprintln!("assertion failed: {f}");
    }
    Ok(failures.is_empty())
}

fn calibrate(args: CalibrateArgs) -> Result<bool> {
    let base = match &args.constants {
        Some(path) => Constants::parse(&fs::read_to_string(path)?)?,
        None => Constants::calibrated(),
    };
    let settings = CalibrationSettings {
        n: args.n,
        d: args.d,
        p: args.p,
        eps: args.eps,
        trials: args.trials,
        seed: args.seed,
        target_pass: args.target,
        start: args.start,
        base,
        embedding_target: (args.emb_target >= 0.0).then_some(args.emb_target),
        out_path: args.out,
        ..CalibrationSettings::default()
    };
    let outcome = calibrate_constants(&settings)?;
    for (name, c, rate) in &outcome.steps {
        eprintln!("{name:>9} = {c:<10} pass rate {rate:.3}");
    }
    print!("{}", outcome.constants.to_conf(""));
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(*a),
        Command::Calibrate(a) => calibrate(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
