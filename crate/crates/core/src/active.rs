//! End-to-end active regression pipelines with instrumented label access.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lewis::{lewis_weights, LewisWeights};
use crate::linalg::{column_rank, lp_pow};
use crate::lipschitz::LipschitzFn;
use crate::sampling::{gsm, split_counts, SamplingMatrix};
use crate::seeding::{derive_seed, LABEL_GSM_FIRST, LABEL_GSM_SECOND, LABEL_RETRY, LABEL_SOLVE};
use crate::solver::{default_restarts, solve, RegularizedObjective, SolveReport};

/// Restarts of the full-data evaluation oracle.
pub const REFERENCE_RESTARTS: usize = 32;
/// Draws of the first-stage matrix before giving up on a rank-deficient `S A`.
pub const STAGE_ATTEMPTS: usize = 3;
const LABEL_REFERENCE: u64 = 0x5EED_0005;

/// Query access to the hidden label vector.
///
/// Pipeline fetches go through [`LabelOracle::query`] and are counted once
/// per distinct index. Post-hoc evaluation reads go through a separate tally.
/// Labels are returned minus `shift`, which absorbs `f(0)` for links that were
/// re-centered at the origin.
#[derive(Debug)]
pub struct LabelOracle {
    labels: Vec<f64>,
    shift: f64,
    fetched: Mutex<BTreeSet<usize>>,
    evaluation: AtomicUsize,
}

impl LabelOracle {
    pub fn new(labels: Vec<f64>) -> Self {
        Self::with_shift(labels, 0.0)
    }

    pub fn with_shift(labels: Vec<f64>, shift: f64) -> Self {
        Self { labels, shift, fetched: Mutex::new(BTreeSet::new()), evaluation: AtomicUsize::new(0) }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// Fetches `b_i`, recording `i`.
    pub fn query(&self, i: usize) -> f64 {
        self.fetched.lock().expect("oracle lock").insert(i);
        self.labels[i] - self.shift
    }

    /// Distinct indices fetched so far.
    pub fn queries_used(&self) -> usize {
        self.fetched.lock().expect("oracle lock").len()
    }

    pub fn fetched_rows(&self) -> Vec<usize> {
        self.fetched.lock().expect("oracle lock").iter().copied().collect()
    }

    /// Clears the pipeline tally; the evaluation tally is kept.
    pub fn reset(&self) {
        self.fetched.lock().expect("oracle lock").clear();
    }

    /// All labels, for evaluation only. Counted apart from pipeline queries.
    pub fn evaluation_labels(&self) -> Vec<f64> {
        self.evaluation.fetch_add(self.labels.len(), Ordering::Relaxed);
        self.labels.iter().map(|b| b - self.shift).collect()
    }

    pub fn evaluation_label(&self, i: usize) -> f64 {
        self.evaluation.fetch_add(1, Ordering::Relaxed);
        self.labels[i] - self.shift
    }

    pub fn evaluation_fetches(&self) -> usize {
        self.evaluation.load(Ordering::Relaxed)
    }
}

/// `f(Ax) ~ b` with `b` behind an oracle.
#[derive(Debug)]
pub struct RegressionProblem {
    pub a: DMatrix<f64>,
    pub oracle: LabelOracle,
    pub f: LipschitzFn,
    pub p: f64,
    pub eps: f64,
}

impl RegressionProblem {
    pub fn new(a: DMatrix<f64>, oracle: LabelOracle, f: LipschitzFn, p: f64, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidInput(format!("eps must lie in (0, 1), got {eps}")));
        }
        if !(p >= 1.0) || !p.is_finite() {
            return Err(Error::InvalidInput(format!("p must be a finite real >= 1, got {p}")));
        }
        if oracle.len() != a.nrows() {
            return Err(Error::InvalidInput(format!("{} labels for {} rows", oracle.len(), a.nrows())));
        }
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::InvalidInput("empty design matrix".into()));
        }
        Ok(Self { a, oracle, f, p, eps })
    }

    pub fn from_labels(a: DMatrix<f64>, b: Vec<f64>, f: LipschitzFn, p: f64, eps: f64) -> Result<Self> {
        Self::new(a, LabelOracle::new(b), f, p, eps)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn d(&self) -> usize {
        self.a.ncols()
    }

    /// `||f(Ax) - b||_p^p` using evaluation reads.
    pub fn full_objective(&self, x: &[f64]) -> f64 {
        let b = self.oracle.evaluation_labels();
        let ax = &self.a * DVector::from_column_slice(x);
        ax.iter().zip(&b).map(|(&u, &bi)| crate::linalg::abs_pow(self.f.eval(u) - bi, self.p)).sum()
    }

    /// `||Ax||_p^p`.
    pub fn ax_pow(&self, x: &[f64]) -> f64 {
        let ax = &self.a * DVector::from_column_slice(x);
        lp_pow(ax.as_slice(), self.p)
    }
}

/// OPT and `x*` used to score a run.
#[derive(Clone, Debug, PartialEq)]
pub struct OptReference {
    pub opt: f64,
    pub x_star: Vec<f64>,
    /// `||A x*||_p^p`.
    pub ax_star_norm: f64,
}

impl OptReference {
    /// Full-data solve with [`REFERENCE_RESTARTS`] restarts. An evaluation
    /// oracle: labels are read through the evaluation tally.
    pub fn from_full_solve(prob: &RegressionProblem, seed: u64) -> Result<Self> {
        let b = prob.oracle.evaluation_labels();
        let obj = RegularizedObjective::full(&prob.a, &b, prob.f.clone(), prob.p, 0.0)?;
        let rep = solve(&obj, REFERENCE_RESTARTS, derive_seed(seed, &[LABEL_REFERENCE]))?;
        Ok(Self::exact(prob, rep.objective_value, rep.x_hat))
    }

    /// Wraps a known optimum.
    pub fn exact(prob: &RegressionProblem, opt: f64, x_star: Vec<f64>) -> Self {
        let ax_star_norm = prob.ax_pow(&x_star);
        Self { opt, x_star, ax_star_norm }
    }
}

/// Outcome of one pipeline run.
#[derive(Clone, Debug)]
pub struct ActiveReport {
    pub x_hat: Vec<f64>,
    /// Distinct labels fetched by the pipeline.
    pub queries_used: usize,
    /// Nonzero rows of the final sampling matrix.
    pub sampled_rows: Vec<usize>,
    /// `||f(A x_hat) - b||_p^p` on all labels.
    pub objective_full: f64,
    pub opt_estimate: f64,
    /// `||A x*||_p^p`.
    pub ax_star_norm: f64,
    /// `(objective_full - OPT) / (OPT + L^p ||A x*||_p^p)`.
    pub ratio: f64,
    /// Label reads made while scoring, not charged to the pipeline.
    pub evaluation_fetches: usize,
    /// Rate of the final sampling stage.
    pub alpha: f64,
    /// First-stage rate and row count, for the two-stage pipeline.
    pub first_stage: Option<(f64, usize)>,
    pub solve: SolveReport,
}

impl ActiveReport {
    pub fn guarantee_pass(&self, eps: f64) -> bool {
        self.ratio <= eps
    }
}

/// `(obj - opt) / (opt + L^p ax_star)`, with `0/0` read as 0.
pub fn guarantee_ratio(objective: f64, opt: f64, lipschitz: f64, ax_star_norm: f64, p: f64) -> f64 {
    let num = objective - opt;
    let den = opt + lipschitz.powf(p) * ax_star_norm;
    if den > 0.0 {
        num / den
    } else if num <= 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Lewis weights of `A` and the split counts drawn from them.
#[derive(Clone, Debug)]
pub struct SamplingPlan {
    pub lewis: LewisWeights,
    pub k: Vec<usize>,
}

impl SamplingPlan {
    pub fn new(a: &DMatrix<f64>, p: f64) -> Result<Self> {
        let lewis = lewis_weights(a, p)?;
        let k = split_counts(&lewis);
        Ok(Self { lewis, k })
    }

    /// `sum_i k_i`, the expected query count at rate 1.
    pub fn total(&self) -> usize {
        self.k.iter().sum()
    }

    /// The rate whose expected draw count `alpha sum k_i` equals `budget`.
    pub fn rate_for_budget(&self, budget: f64) -> f64 {
        rate_for_budget(budget, self.total())
    }
}

fn rate_for_budget(budget: f64, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    (budget / total as f64).clamp(0.0, 1.0)
}

/// `gsm`, except that rate 0 gives the empty matrix.
fn draw(k: &[usize], alpha: f64, p: f64, seed: u64) -> Result<SamplingMatrix> {
    if alpha == 0.0 {
        SamplingMatrix::from_entries(k.len(), Vec::new(), 0.0)
    } else {
        gsm(k, alpha, p, seed)
    }
}

fn check_rate(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidRate(alpha))
    }
}

fn finish(
    prob: &RegressionProblem,
    reference: &OptReference,
    d_mat: &SamplingMatrix,
    solve: SolveReport,
    alpha: f64,
    first_stage: Option<(f64, usize)>,
) -> ActiveReport {
    let queries_used = prob.oracle.queries_used();
    let eval_before = prob.oracle.evaluation_fetches();
    let objective_full = prob.full_objective(&solve.x_hat);
    let ratio = guarantee_ratio(objective_full, reference.opt, prob.f.lipschitz(), reference.ax_star_norm, prob.p);
    ActiveReport {
        x_hat: solve.x_hat.clone(),
        queries_used,
        sampled_rows: d_mat.rows().collect(),
        objective_full,
        opt_estimate: reference.opt,
        ax_star_norm: reference.ax_star_norm,
        ratio,
        evaluation_fetches: prob.oracle.evaluation_fetches() - eval_before,
        alpha,
        first_stage,
        solve,
    }
}

fn solve_sampled(
    prob: &RegressionProblem,
    data: &SamplingMatrix,
    reg: Option<&SamplingMatrix>,
    seed: u64,
) -> Result<SolveReport> {
    let obj =
        RegularizedObjective::new(&prob.a, prob.f.clone(), prob.p, data, |i| prob.oracle.query(i), reg, prob.eps)?;
    solve(&obj, default_restarts(prob.d()), derive_seed(seed, &[LABEL_SOLVE]))
}

/// Single-stage pipeline at rate `alpha` in `(0, 1]`.
pub fn run_single_stage(
    prob: &RegressionProblem,
    alpha: f64,
    seed: u64,
    reference: &OptReference,
) -> Result<ActiveReport> {
    check_rate(alpha)?;
    let plan = SamplingPlan::new(&prob.a, prob.p)?;
    run_single_stage_with(prob, &plan, alpha, seed, reference)
}

/// Single-stage pipeline with precomputed weights. Rate 0 queries nothing.
///
/// Minimizes `||S (f(Ax) - b)||_p^p + eps ||Ax||_p^p` with `S = GSM(k, alpha)`.
/// The row-split copies of row `i` share one label, so the split problem is
/// solved in its collapsed form with weight `S_ii^p` on row `i`.
pub fn run_single_stage_with(
    prob: &RegressionProblem,
    plan: &SamplingPlan,
    alpha: f64,
    seed: u64,
    reference: &OptReference,
) -> Result<ActiveReport> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidRate(alpha));
    }
    prob.oracle.reset();
    let s = draw(&plan.k, alpha, prob.p, derive_seed(seed, &[LABEL_GSM_FIRST]))?;
    let rep = solve_sampled(prob, &s, None, seed)?;
    Ok(finish(prob, reference, &s, rep, alpha, None))
}

/// How the second-stage rate of the two-stage pipeline is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StageRate {
    Fixed(f64),
    /// Expected queries; the rate is `budget / sum k_i` once `k` is known.
    Budget(f64),
}

/// Two-stage pipeline with rates `alpha <= alpha_circ <= 1`.
pub fn run_two_stage(
    prob: &RegressionProblem,
    alpha: f64,
    alpha_circ: f64,
    seed: u64,
    reference: &OptReference,
) -> Result<ActiveReport> {
    check_rate(alpha)?;
    check_rate(alpha_circ)?;
    if alpha > alpha_circ {
        return Err(Error::InvalidInput(format!("need alpha <= alpha_circ, got {alpha} > {alpha_circ}")));
    }
    let plan = SamplingPlan::new(&prob.a, prob.p)?;
    run_two_stage_with(prob, &plan, StageRate::Fixed(alpha), alpha_circ, seed, reference)
}

/// The first stage: `S_circ` at rate `alpha_circ` and the Lewis weights of
/// `S_circ A`, redrawn while `S_circ A` loses rank.
fn first_stage(
    prob: &RegressionProblem,
    plan: &SamplingPlan,
    alpha_circ: f64,
    seed: u64,
) -> Result<(SamplingMatrix, LewisWeights)> {
    let d = prob.d();
    let full_rank = plan.lewis.rank;
    for attempt in 0..STAGE_ATTEMPTS {
        let stage_seed = match attempt {
            0 => derive_seed(seed, &[LABEL_GSM_FIRST]),
            a => derive_seed(seed, &[LABEL_GSM_FIRST, LABEL_RETRY, a as u64]),
        };
        let s_circ = gsm(&plan.k, alpha_circ, prob.p, stage_seed)?;
        if s_circ.query_count() < d {
            continue;
        }
        let sa = s_circ.apply_rows(&prob.a);
        if column_rank(&sa) < full_rank {
            continue;
        }
        match lewis_weights(&sa, prob.p) {
            Ok(lw) => return Ok((s_circ, lw)),
            Err(Error::RankDeficient { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::DegenerateStage { attempts: STAGE_ATTEMPTS })
}

/// Two-stage pipeline with precomputed weights of `A`.
///
/// Minimizes `||S S_circ (f(Ax) - b)||_p^p + eps ||S_circ A x||_p^p` where
/// `S` is drawn on `k_i = ceil(m w_i(S_circ A) / d)` over the `m` rows kept by
/// `S_circ`.
pub fn run_two_stage_with(
    prob: &RegressionProblem,
    plan: &SamplingPlan,
    rate: StageRate,
    alpha_circ: f64,
    seed: u64,
    reference: &OptReference,
) -> Result<ActiveReport> {
    check_rate(alpha_circ)?;
    prob.oracle.reset();
    let (s_circ, lw) = first_stage(prob, plan, alpha_circ, seed)?;
    let m = s_circ.query_count();
    let scale = m as f64 / lw.rank as f64;
    let mut k2 = vec![0usize; prob.n()];
    for (row, &w) in s_circ.rows().zip(&lw.weights) {
        k2[row] = (scale * w - 1e-9).ceil().max(1.0) as usize;
    }
    let alpha = match rate {
        StageRate::Fixed(a) => a,
        StageRate::Budget(b) => rate_for_budget(b, k2.iter().sum()),
    };
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidRate(alpha));
    }
    let s = draw(&k2, alpha, prob.p, derive_seed(seed, &[LABEL_GSM_SECOND]))?;
    let data = s.compose(&s_circ)?;
    let rep = solve_sampled(prob, &data, Some(&s_circ), seed)?;
    Ok(finish(prob, reference, &data, rep, alpha, Some((alpha_circ, m))))
}

/// Full-data regularized solve; fetches every label.
pub fn run_direct(prob: &RegressionProblem, seed: u64, reference: &OptReference) -> Result<ActiveReport> {
    prob.oracle.reset();
    let all = SamplingMatrix::identity(prob.n());
    let obj = RegularizedObjective::new(&prob.a, prob.f.clone(), prob.p, &all, |i| prob.oracle.query(i), None, 0.0)?;
    let rep = solve(&obj, REFERENCE_RESTARTS, derive_seed(seed, &[LABEL_SOLVE]))?;
    Ok(finish(prob, reference, &all, rep, 1.0, None))
}

/// The proxy point `argmin ||S_circ (f(Ax) - b)||_p^p + eps^2 ||Ax||_p^p`.
///
/// Analysis only: labels are read through the evaluation tally and no
/// pipeline calls this.
pub fn diagnostic_proxy_point(prob: &RegressionProblem, s_circ: &SamplingMatrix, seed: u64) -> Result<Vec<f64>> {
    let eps2 = prob.eps * prob.eps;
    let obj = RegularizedObjective::new(
        &prob.a,
        prob.f.clone(),
        prob.p,
        s_circ,
        |i| prob.oracle.evaluation_label(i),
        None,
        eps2,
    )?;
    Ok(solve(&obj, default_restarts(prob.d()), derive_seed(seed, &[LABEL_SOLVE]))?.x_hat)
}

/// Draws the first-stage matrix the two-stage pipeline would use.
pub fn first_stage_matrix(prob: &RegressionProblem, alpha_circ: f64, seed: u64) -> Result<SamplingMatrix> {
    check_rate(alpha_circ)?;
    let plan = SamplingPlan::new(&prob.a, prob.p)?;
    Ok(first_stage(prob, &plan, alpha_circ, seed)?.0)
}
