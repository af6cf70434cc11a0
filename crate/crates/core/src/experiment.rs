//! Seeded sweeps over budgets and trials, written as CSV.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::active::{
    run_direct, run_single_stage_with, run_two_stage_with, ActiveReport, OptReference, RegressionProblem, SamplingPlan,
    StageRate,
};
use crate::error::{Error, Result};
use crate::hardinstances::{distinguish, distinguish_threshold, generate, median, HardInstance, HardKind};
use crate::lewis::lewis_weights;
use crate::lipschitz::LipschitzFn;
use crate::planted::{gaussian_matrix, gaussian_vector, planted};
use crate::rates::Constants;
use crate::sampling::{distortion_range, sample_for_embedding};
use crate::seeding::derive_seed;

const LABEL_INSTANCE: u64 = 0x5EED_0101;
/// Noise level of the planted families.
pub const PLANTED_NOISE: f64 = 0.1;
/// Largest multiplier tried by [`calibrate_constants`].
pub const CALIBRATION_LIMIT: f64 = 65536.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemKind {
    PlantedRelu,
    PlantedIdentity,
    HardSmallP,
    HardLargeP,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::PlantedRelu => "planted-relu",
            ProblemKind::PlantedIdentity => "planted-identity",
            ProblemKind::HardSmallP => "hard-small-p",
            ProblemKind::HardLargeP => "hard-large-p",
        }
    }

    pub fn hard_kind(self) -> Option<HardKind> {
        match self {
            ProblemKind::HardSmallP => Some(HardKind::SmallP),
            ProblemKind::HardLargeP => Some(HardKind::LargeP),
            _ => None,
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "planted-relu" | "plantedrelu" => Ok(ProblemKind::PlantedRelu),
            "planted-identity" | "plantedidentity" => Ok(ProblemKind::PlantedIdentity),
            "hard-small-p" | "hardsmallp" => Ok(ProblemKind::HardSmallP),
            "hard-large-p" | "hardlargep" => Ok(ProblemKind::HardLargeP),
            _ => Err(Error::InvalidInput(format!("unknown problem '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PipelineKind {
    Single,
    TwoStage,
    Direct,
}

impl fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PipelineKind::Single => "single",
            PipelineKind::TwoStage => "two-stage",
            PipelineKind::Direct => "direct",
        })
    }
}

impl FromStr for PipelineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(PipelineKind::Single),
            "two-stage" | "two_stage" | "twostage" => Ok(PipelineKind::TwoStage),
            "direct" => Ok(PipelineKind::Direct),
            _ => Err(Error::InvalidInput(format!("unknown pipeline '{s}'"))),
        }
    }
}

/// Query budgets: explicit counts, or multiples of the calibrated budget.
#[derive(Clone, Debug, PartialEq)]
pub enum Budgets {
    Explicit(Vec<usize>),
    Scaled(Vec<f64>),
}

impl Budgets {
    /// `1, 2, 4, 8` times the calibrated budget.
    pub fn calibrated() -> Self {
        Budgets::Scaled(vec![1.0, 2.0, 4.0, 8.0])
    }
}

impl FromStr for Budgets {
    type Err = Error;

    /// `auto`, `x1,x2,...` (multiples) or `100,200,...` (counts).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "auto" || s == "calibrated" {
            return Ok(Budgets::calibrated());
        }
        let parts: Vec<&str> = s.split(',').map(str::trim).filter(|t| !t.is_empty()).collect();
        if parts.is_empty() {
            return Err(Error::InvalidInput("budget list is empty".into()));
        }
        if parts.iter().all(|t| t.starts_with('x')) {
            let v = parts
                .iter()
                .map(|t| t[1..].parse::<f64>().ok().filter(|x| *x > 0.0 && x.is_finite()))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Error::InvalidInput(format!("bad budget multipliers '{s}'")))?;
            return Ok(Budgets::Scaled(v));
        }
        let v = parts
            .iter()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::InvalidInput(format!("bad budget list '{s}'")))?;
        Ok(Budgets::Explicit(v))
    }
}

impl fmt::Display for Budgets {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = match self {
            Budgets::Explicit(v) => v.iter().map(|b| b.to_string()).collect(),
            Budgets::Scaled(v) => v.iter().map(|m| format!("x{m}")).collect(),
        };
        f.write_str(&parts.join(","))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    pub p: f64,
    pub eps: f64,
    /// Rows of planted problems; hard instances fix their own size.
    pub n: usize,
    pub d: usize,
    pub pipeline: PipelineKind,
    pub budgets: Budgets,
    pub trials: usize,
    pub seed: u64,
    pub constants: Constants,
    /// Link of planted problems; `None` uses the problem's own link.
    pub link: Option<LipschitzFn>,
    pub out_path: Option<PathBuf>,
    /// Record wall-clock time; off keeps the CSV reproducible.
    pub timing: bool,
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: ProblemKind::PlantedRelu,
            p: 2.0,
            eps: 0.25,
            n: 2000,
            d: 5,
            pipeline: PipelineKind::Single,
            budgets: Budgets::calibrated(),
            trials: 20,
            seed: 0,
            constants: Constants::calibrated(),
            link: None,
            out_path: None,
            timing: false,
            threads: None,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::InvalidInput(format!("{key}: cannot parse '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::InvalidInput(format!("{key}: expected a boolean, got '{value}'"))),
    }
}

impl ExperimentConfig {
    /// Sets one field by name. Keys match the long command-line flags.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let c = &mut self.constants;
        match key.trim().replace('-', "_").as_str() {
            "problem" => self.problem = value.parse()?,
            "p" => self.p = parse_num(key, value)?,
            "eps" => self.eps = parse_num(key, value)?,
            "n" => self.n = parse_num(key, value)?,
            "d" => self.d = parse_num(key, value)?,
            "pipeline" => self.pipeline = value.parse()?,
            "budgets" => self.budgets = value.parse()?,
            "trials" => self.trials = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "f" => self.link = Some(value.parse()?),
            "out" => self.out_path = Some(PathBuf::from(value)),
            "timing" => self.timing = parse_bool(key, value)?,
            "threads" => self.threads = Some(parse_num(key, value)?),
            "c_single" => c.c_single = parse_num(key, value)?,
            "c_two" => c.c_two = parse_num(key, value)?,
            "c_circ" => c.c_circ = parse_num(key, value)?,
            "c_emb" => c.c_emb = parse_num(key, value)?,
            "polylog_exp" => c.polylog_exp = parse_num(key, value)?,
            "circ_eps_exp" => c.circ_eps_exp = if value == "auto" { None } else { Some(parse_num(key, value)?) },
            "constants" => *c = Constants::parse(&fs::read_to_string(value)?)?,
            other => return Err(Error::InvalidInput(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |e: Error| match e {
                Error::InvalidInput(message) | Error::Config { message, .. } => Error::Config { line: i + 1, message },
                other => Error::Config { line: i + 1, message: other.to_string() },
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config { line: i + 1, message: format!("expected key=value, got '{line}'") })?;
            self.set(key, value).map_err(at)?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if !(self.p >= 1.0) || !self.p.is_finite() {
            return bad(format!("p must be a finite real >= 1, got {}", self.p));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return bad(format!("eps must lie in (0, 1), got {}", self.eps));
        }
        if self.d == 0 || self.trials == 0 {
            return bad("d and trials must be positive".into());
        }
        if self.problem.hard_kind().is_none() && self.n < self.d {
            return bad(format!("need n >= d, got n = {} and d = {}", self.n, self.d));
        }
        if let Some(hard) = self.problem.hard_kind() {
            if self.eps > 0.25 {
                return bad(format!("hard instances need eps <= 1/4, got {}", self.eps));
            }
            if self.link.as_ref().is_some_and(|f| f.kind() != hard.link().kind()) {
                return bad(format!("{} fixes its own link", self.problem));
            }
        }
        match &self.budgets {
            Budgets::Explicit(v) if v.is_empty() => bad("budget list is empty".into()),
            Budgets::Scaled(v) if v.is_empty() => bad("budget list is empty".into()),
            _ => Ok(()),
        }
    }

    /// Rows of each problem instance.
    pub fn instance_rows(&self) -> usize {
        match self.problem.hard_kind() {
            Some(k) => 2 * k.default_m(self.p, self.eps, self.d) * self.d,
            None => self.n,
        }
    }

    /// Expected queries at multiplier 1 for the configured pipeline.
    pub fn base_budget(&self) -> f64 {
        let (p, d, eps, n) = (self.p, self.d, self.eps, self.instance_rows());
        match self.pipeline {
            PipelineKind::Single => self.constants.single_stage_budget(p, d, eps, n),
            PipelineKind::TwoStage => self.constants.nominal_two_stage_budget(p, d, eps, n),
            PipelineKind::Direct => n as f64,
        }
    }

    pub fn resolved_budgets(&self) -> Vec<usize> {
        match &self.budgets {
            Budgets::Explicit(v) => v.clone(),
            Budgets::Scaled(mults) => {
                let base = self.base_budget();
                mults.iter().map(|m| (m * base).ceil() as usize).collect()
            }
        }
    }

    /// Serializes every field as `key = value` lines.
    pub fn to_text(&self) -> String {
        let c = &self.constants;
        let mut s = format!(
            "problem = {}\np = {}\neps = {}\nn = {}\nd = {}\npipeline = {}\nbudgets = {}\ntrials = {}\nseed = {}\n",
            self.problem, self.p, self.eps, self.n, self.d, self.pipeline, self.budgets, self.trials, self.seed
        );
        if let Some(f) = &self.link {
            s.push_str(&format!("f = {f}\n"));
        }
        s.push_str(&format!(
            "c_single = {}\nc_two = {}\nc_circ = {}\nc_emb = {}\npolylog_exp = {}\n",
            c.c_single, c.c_two, c.c_circ, c.c_emb, c.polylog_exp
        ));
        match c.circ_eps_exp {
            Some(e) => s.push_str(&format!("circ_eps_exp = {e}\n")),
            None => s.push_str("circ_eps_exp = auto\n"),
        }
        s
    }
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRow {
    pub budget: usize,
    pub trial: usize,
    pub seed: u64,
    pub queries_used: usize,
    pub objective_full: f64,
    pub opt_estimate: f64,
    pub ax_star_norm: f64,
    pub ratio: f64,
    pub guarantee_pass: bool,
    pub wall_ms: u64,
    pub correct_count: Option<usize>,
    pub distinguish_pass: Option<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BudgetSummary {
    pub budget: usize,
    pub trials: usize,
    pub median_ratio: f64,
    pub pass_rate: f64,
    pub mean_queries: f64,
    pub distinguish_rate: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub rows: Vec<TrialRow>,
    pub summary: Vec<BudgetSummary>,
    pub hard: bool,
}

impl ExperimentOutput {
    pub fn csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        write_csv(&self.rows, self.hard, &mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    /// True when the median ratio never increases from one budget to the next.
    pub fn median_nonincreasing(&self) -> bool {
        self.summary.windows(2).all(|w| w[1].median_ratio <= w[0].median_ratio)
    }
}

impl fmt::Display for ExperimentOutput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:>10} {:>7} {:>13} {:>10} {:>13}",
            "budget", "trials", "median_ratio", "pass_rate", "mean_queries"
        )?;
        if self.hard {
            write!(f, " {:>16}", "distinguish_rate")?;
        }
        writeln!(f)?;
        for s in &self.summary {
            write!(
                f,
                "{:>10} {:>7} {:>13.6} {:>10.3} {:>13.1}",
                s.budget, s.trials, s.median_ratio, s.pass_rate, s.mean_queries
            )?;
            if let Some(r) = s.distinguish_rate {
                write!(f, " {r:>16.3}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

pub const CSV_COLUMNS: [&str; 10] = [
    "budget",
    "trial",
    "seed",
    "queries_used",
    "objective_full",
    "opt_estimate",
    "ax_star_norm",
    "ratio",
    "guarantee_pass",
    "wall_ms",
];
pub const HARD_COLUMNS: [&str; 2] = ["correct_count", "distinguish_pass"];

/// Writes the header and rows with LF line endings.
pub fn write_csv(rows: &[TrialRow], hard: bool, out: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let mut header: Vec<&str> = CSV_COLUMNS.to_vec();
    if hard {
        header.extend(HARD_COLUMNS);
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.budget.to_string(),
            r.trial.to_string(),
            r.seed.to_string(),
            r.queries_used.to_string(),
            r.objective_full.to_string(),
            r.opt_estimate.to_string(),
            r.ax_star_norm.to_string(),
            r.ratio.to_string(),
            r.guarantee_pass.to_string(),
            r.wall_ms.to_string(),
        ];
        if hard {
            rec.push(r.correct_count.map_or(String::new(), |c| c.to_string()));
            rec.push(r.distinguish_pass.map_or(String::new(), |c| c.to_string()));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-trial problem and scoring reference.
struct TrialSetup {
    prob: RegressionProblem,
    reference: OptReference,
    plan: SamplingPlan,
    hard: Option<HardInstance>,
}

fn setup_trial(cfg: &ExperimentConfig, trial: usize) -> Result<TrialSetup> {
    let inst_seed = derive_seed(cfg.seed, &[LABEL_INSTANCE, trial as u64]);
    let (prob, reference, hard) = match cfg.problem.hard_kind() {
        Some(kind) => {
            let inst = generate(kind, cfg.p, cfg.eps, cfg.d, inst_seed)?;
            let prob = inst.to_problem()?;
            let reference = inst.reference(&prob);
            (prob, reference, Some(inst))
        }
        None => {
            let f = cfg.link.clone().unwrap_or_else(|| match cfg.problem {
                ProblemKind::PlantedIdentity => LipschitzFn::identity(),
                _ => LipschitzFn::relu(),
            });
            let inst = planted(f, cfg.n, cfg.d, PLANTED_NOISE, inst_seed);
            let prob = RegressionProblem::from_labels(inst.a, inst.b, inst.f, cfg.p, cfg.eps)?;
            let reference = OptReference::from_full_solve(&prob, inst_seed)?;
            (prob, reference, None)
        }
    };
    let plan = SamplingPlan::new(&prob.a, cfg.p)?;
    Ok(TrialSetup { prob, reference, plan, hard })
}

fn run_one(cfg: &ExperimentConfig, setup: &TrialSetup, budget: usize, seed: u64) -> Result<ActiveReport> {
    let TrialSetup { prob, reference, plan, .. } = setup;
    match cfg.pipeline {
        PipelineKind::Single => run_single_stage_with(prob, plan, plan.rate_for_budget(budget as f64), seed, reference),
        PipelineKind::TwoStage => {
            let alpha_circ = cfg.constants.alpha_circ(cfg.p, cfg.d, cfg.eps, prob.n());
            run_two_stage_with(prob, plan, StageRate::Budget(budget as f64), alpha_circ, seed, reference)
        }
        PipelineKind::Direct => run_direct(prob, seed, reference),
    }
}

fn run_trial(cfg: &ExperimentConfig, budgets: &[usize], trial: usize) -> Result<Vec<TrialRow>> {
    let setup = setup_trial(cfg, trial)?;
    budgets
        .iter()
        .map(|&budget| {
            let seed = derive_seed(cfg.seed, &[budget as u64, trial as u64]);
            let start = Instant::now();
            let rep = run_one(cfg, &setup, budget, seed)?;
            let wall_ms = if cfg.timing { start.elapsed().as_millis() as u64 } else { 0 };
            let (correct_count, distinguish_pass) = match &setup.hard {
                Some(inst) => {
                    let (_, c) = distinguish(inst, &rep.x_hat);
                    (Some(c), Some(c >= distinguish_threshold(inst.d)))
                }
                None => (None, None),
            };
            Ok(TrialRow {
                budget,
                trial,
                seed,
                queries_used: rep.queries_used,
                objective_full: rep.objective_full,
                opt_estimate: rep.opt_estimate,
                ax_star_norm: rep.ax_star_norm,
                ratio: rep.ratio,
                guarantee_pass: rep.guarantee_pass(cfg.eps),
                wall_ms,
                correct_count,
                distinguish_pass,
            })
        })
        .collect()
}

/// `rows` are grouped by budget, `trials` rows per group.
fn summarize(rows: &[TrialRow], budgets: &[usize], trials: usize) -> Vec<BudgetSummary> {
    budgets
        .iter()
        .zip(rows.chunks(trials))
        .map(|(&budget, group)| {
            let n = group.len() as f64;
            let mut ratios: Vec<f64> = group.iter().map(|r| r.ratio).collect();
            let distinguish_rate = group
                .iter()
                .map(|r| r.distinguish_pass)
                .collect::<Option<Vec<bool>>>()
                .map(|v| v.iter().filter(|&&b| b).count() as f64 / n);
            BudgetSummary {
                budget,
                trials: group.len(),
                median_ratio: median(&mut ratios),
                pass_rate: group.iter().filter(|r| r.guarantee_pass).count() as f64 / n,
                mean_queries: group.iter().map(|r| r.queries_used as f64).sum::<f64>() / n,
                distinguish_rate,
            }
        })
        .collect()
}

/// Runs every `(budget, trial)` pair. Trials run in parallel; rows come out
/// ordered by budget, then trial. Writes the CSV when `out_path` is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let budgets = cfg.resolved_budgets();
    let work = || (0..cfg.trials).into_par_iter().map(|t| run_trial(cfg, &budgets, t)).collect::<Result<Vec<_>>>();
    let per_trial = match cfg.threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let mut rows = Vec::with_capacity(budgets.len() * cfg.trials);
    for bi in 0..budgets.len() {
        for trial_rows in &per_trial {
            rows.push(trial_rows[bi].clone());
        }
    }
    let out = ExperimentOutput {
        summary: summarize(&rows, &budgets, cfg.trials),
        rows,
        hard: cfg.problem.hard_kind().is_some(),
    };
    if let Some(path) = &cfg.out_path {
        let mut file = fs::File::create(path)?;
        write_csv(&out.rows, out.hard, &mut file)?;
    }
    Ok(out)
}

/// Problem family and search settings for [`calibrate_constants`].
#[derive(Clone, Debug)]
pub struct CalibrationSettings {
    pub n: usize,
    pub d: usize,
    pub p: f64,
    pub eps: f64,
    pub trials: usize,
    pub seed: u64,
    pub target_pass: f64,
    /// First multiplier tried for both searches.
    pub start: f64,
    /// Constants that are not searched.
    pub base: Constants,
    pub embedding: EmbeddingFamily,
    /// Pass rate `c_emb` must reach; `None` keeps the base value.
    pub embedding_target: Option<f64>,
    pub out_path: Option<PathBuf>,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self {
            n: 2000,
            d: 5,
            p: 2.0,
            eps: 0.25,
            trials: 20,
            seed: 0,
            target_pass: 0.75,
            start: 1.0,
            base: Constants::calibrated(),
            embedding: EmbeddingFamily::default(),
            embedding_target: Some(0.95),
            out_path: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CalibrationOutcome {
    pub constants: Constants,
    pub single_pass_rate: f64,
    pub two_stage_pass_rate: f64,
    pub embedding_pass_rate: f64,
    /// `(constant, value, pass rate)` for every step of the searches.
    pub steps: Vec<(&'static str, f64, f64)>,
}

/// Doubles `c` from `start` until `pass_rate(c) >= target`.
fn doubling(
    name: &'static str,
    start: f64,
    target: f64,
    steps: &mut Vec<(&'static str, f64, f64)>,
    mut pass_rate: impl FnMut(f64) -> Result<f64>,
) -> Result<(f64, f64)> {
    let mut c = start;
    let mut best = 0.0f64;
    while c <= CALIBRATION_LIMIT {
        let rate = if target <= 0.0 { 1.0 } else { pass_rate(c)? };
        steps.push((name, c, rate));
        best = best.max(rate);
        if rate >= target {
            return Ok((c, rate));
        }
        c *= 2.0;
    }
    Err(Error::CalibrationFailed { limit: CALIBRATION_LIMIT, best_pass_rate: best })
}

fn pipeline_pass_rate(settings: &CalibrationSettings, pipeline: PipelineKind, constants: Constants) -> Result<f64> {
    let cfg = ExperimentConfig {
        problem: ProblemKind::PlantedRelu,
        p: settings.p,
        eps: settings.eps,
        n: settings.n,
        d: settings.d,
        pipeline,
        budgets: Budgets::Scaled(vec![1.0]),
        trials: settings.trials,
        seed: settings.seed,
        constants,
        ..ExperimentConfig::default()
    };
    Ok(run_experiment(&cfg)?.summary[0].pass_rate)
}

/// Gaussian family on which `c_emb` is calibrated.
#[derive(Clone, Debug)]
pub struct EmbeddingFamily {
    pub n: usize,
    pub d: usize,
    pub p: f64,
    pub eps: f64,
    pub trials: usize,
    pub directions: usize,
}

impl Default for EmbeddingFamily {
    fn default() -> Self {
        Self { n: 500, d: 4, p: 2.0, eps: 0.5, trials: 100, directions: 50 }
    }
}

/// Fraction of trials in which Lewis-weight sampling with `c_emb` keeps
/// `||S A x||_p / ||A x||_p` within `[1/(1+eps), 1+eps]` on every test direction.
pub fn embedding_pass_rate(fam: &EmbeddingFamily, c_emb: f64, seed: u64) -> Result<f64> {
    let ok = (0..fam.trials)
        .into_par_iter()
        .map(|t| {
            let t = t as u64;
            let a = gaussian_matrix(fam.n, fam.d, derive_seed(seed, &[t, 1]));
            let lw = lewis_weights(&a, fam.p)?;
            let s = sample_for_embedding(&lw, fam.p, fam.eps, c_emb, derive_seed(seed, &[t, 2]))?;
            let dirs: Vec<DVector<f64>> = (0..fam.directions)
                .map(|j| DVector::from_vec(gaussian_vector(fam.d, derive_seed(seed, &[t, 3, j as u64]))))
                .collect();
            let (lo, hi) = distortion_range(&a, &s, fam.p, &dirs);
            Ok(lo >= 1.0 / (1.0 + fam.eps) && hi <= 1.0 + fam.eps)
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(ok.iter().filter(|&&b| b).count() as f64 / fam.trials.max(1) as f64)
}

/// Doubles `c_single`, then `c_two`, until the pass rate on the planted ReLU
/// family reaches `target_pass`. Writes the constants file when asked.
pub fn calibrate_constants(settings: &CalibrationSettings) -> Result<CalibrationOutcome> {
    if !(0.0..=1.0).contains(&settings.target_pass) {
        return Err(Error::InvalidInput(format!("target pass rate must lie in [0, 1], got {}", settings.target_pass)));
    }
    if !(settings.start > 0.0) {
        return Err(Error::InvalidInput("start multiplier must be positive".into()));
    }
    let mut steps = Vec::new();
    let mut constants = settings.base.clone();
    let (c1, r1) = doubling("c_single", settings.start, settings.target_pass, &mut steps, |c| {
        pipeline_pass_rate(settings, PipelineKind::Single, Constants { c_single: c, ..constants.clone() })
    })?;
    constants.c_single = c1;
    let (c2, r2) = doubling("c_two", settings.start, settings.target_pass, &mut steps, |c| {
        pipeline_pass_rate(settings, PipelineKind::TwoStage, Constants { c_two: c, ..constants.clone() })
    })?;
    constants.c_two = c2;
    let (ce, re) = match settings.embedding_target {
        Some(target) => doubling("c_emb", settings.start, target, &mut steps, |c| {
            embedding_pass_rate(&settings.embedding, c, settings.seed)
        })?,
        None => (constants.c_emb, f64::NAN),
    };
    constants.c_emb = ce;
    if let Some(path) = &settings.out_path {
        let provenance = format!(
            "Calibrated by `bench calibrate` on planted-relu n={} d={} p={} eps={}, {} trials, seed {}.\n\
             Doubling search from {} to the first multiplier with pass rate >= {}.\n\
             Pass rates reached: single {r1}, two-stage {r2}.\n\
             c_emb: {} on Gaussian {}x{} p={} eps={}, {} trials of {} directions, pass rate {re}.",
            settings.n,
            settings.d,
            settings.p,
            settings.eps,
            settings.trials,
            settings.seed,
            settings.start,
            settings.target_pass,
            match settings.embedding_target {
                Some(t) => format!("doubling search to pass rate >= {t}"),
                None => "kept from the base constants".to_string(),
            },
            settings.embedding.n,
            settings.embedding.d,
            settings.embedding.p,
            settings.embedding.eps,
            settings.embedding.trials,
            settings.embedding.directions
        );
        fs::write(path, constants.to_conf(&provenance))?;
    }
    Ok(CalibrationOutcome { constants, single_pass_rate: r1, two_stage_pass_rate: r2, embedding_pass_rate: re, steps })
}
