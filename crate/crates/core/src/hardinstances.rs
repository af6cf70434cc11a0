//! Lower-bound instances: the pair-majority family for `p <= 2` and the
//! planted-spike family for `p >= 2`, each repeated over `d` diagonal blocks.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;

use crate::active::{
    guarantee_ratio, run_single_stage_with, LabelOracle, OptReference, RegressionProblem, SamplingPlan,
};
use crate::error::{Error, Result};
use crate::linalg::abs_pow;
use crate::lipschitz::LipschitzFn;
use crate::seeding::{derive_seed, rng_for};
use crate::solver::{solve_1d_exact, RegularizedObjective};

pub const PAIR_U: [f64; 2] = [3.0, 2.0];
pub const PAIR_V: [f64; 2] = [2.0, 3.0];
/// `x` at which a SmallP block fits all-`u` (positive) or all-`v` (negative).
pub const SMALL_P_ARGMIN: f64 = 6.0;
pub const GRID_POINTS: usize = 4001;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HardKind {
    SmallP,
    LargeP,
}

impl HardKind {
    pub fn name(self) -> &'static str {
        match self {
            HardKind::SmallP => "small-p",
            HardKind::LargeP => "large-p",
        }
    }

    pub fn link(self) -> LipschitzFn {
        match self {
            HardKind::SmallP => LipschitzFn::lb_small(),
            HardKind::LargeP => LipschitzFn::lb_large(),
        }
    }

    /// Grid range of the local-minimum checks.
    pub fn grid_range(self) -> (f64, f64) {
        match self {
            HardKind::SmallP => (-20.0, 20.0),
            HardKind::LargeP => (-3.0, 3.0),
        }
    }

    /// The two candidate minimizers `(negative, positive)`.
    pub fn candidates(self) -> (f64, f64) {
        match self {
            HardKind::SmallP => (-SMALL_P_ARGMIN, SMALL_P_ARGMIN),
            HardKind::LargeP => (-1.0, 1.0),
        }
    }

    /// Pairs per block (SmallP) or half-block length (LargeP).
    pub fn default_m(self, p: f64, eps: f64, d: usize) -> usize {
        match self {
            HardKind::SmallP => (8.0 * (d.max(2) as f64).ln() / (eps * eps)).ceil() as usize,
            HardKind::LargeP => (eps.powf(-p) - 1e-9).ceil() as usize,
        }
    }
}

impl fmt::Display for HardKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HardKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "small-p" | "smallp" | "SmallP" => Ok(HardKind::SmallP),
            "large-p" | "largep" | "LargeP" => Ok(HardKind::LargeP),
            other => Err(Error::InvalidInput(format!("unknown hard instance kind '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    D0,
    D1,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::D0 => "D0",
            Label::D1 => "D1",
        })
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "D0" => Ok(Label::D0),
            "D1" => Ok(Label::D1),
            other => Err(Error::InvalidInput(format!("unknown label '{other}'"))),
        }
    }
}

/// `d` independent blocks of `2m` rows each; column `c` is nonzero only on
/// block `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct HardInstance {
    pub kind: HardKind,
    pub p: f64,
    pub eps: f64,
    pub d: usize,
    pub m: usize,
    pub a: DMatrix<f64>,
    pub b: Vec<f64>,
    pub truth: Vec<Label>,
    /// SmallP: number of `u` pairs per block. Empty for LargeP.
    pub k_counts: Vec<usize>,
    /// LargeP: spike position within each block. Empty for SmallP.
    pub spikes: Vec<usize>,
}

/// The `2m`-vector `a` shared by all blocks.
pub fn block_vector(kind: HardKind, m: usize) -> Vec<f64> {
    match kind {
        HardKind::SmallP => (0..2 * m).map(|j| if j % 2 == 0 { 1.0 } else { -1.0 }).collect(),
        HardKind::LargeP => (0..2 * m).map(|j| if j < m { 1.0 } else { -1.0 }).collect(),
    }
}

fn block_diagonal(kind: HardKind, m: usize, d: usize) -> DMatrix<f64> {
    let a = block_vector(kind, m);
    let rows = 2 * m;
    let mut out = DMatrix::zeros(rows * d, d);
    for c in 0..d {
        for (j, &v) in a.iter().enumerate() {
            out[(c * rows + j, c)] = v;
        }
    }
    out
}

fn check_params(p: f64, eps: f64, d: usize) -> Result<()> {
    if !(eps > 0.0 && eps <= 0.25) {
        return Err(Error::InvalidInput(format!("hard instances need eps in (0, 1/4], got {eps}")));
    }
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::InvalidInput(format!("p must be a finite real >= 1, got {p}")));
    }
    if d == 0 {
        return Err(Error::InvalidInput("d must be at least 1".into()));
    }
    Ok(())
}

/// Draws an instance with the default block size.
pub fn generate(kind: HardKind, p: f64, eps: f64, d: usize, seed: u64) -> Result<HardInstance> {
    check_params(p, eps, d)?;
    generate_with_m(kind, p, eps, d, kind.default_m(p, eps, d), seed)
}

/// Draws an instance with `m` pairs (SmallP) or half-length `m` (LargeP).
///
/// Each block's label is a fair coin. SmallP pairs are `u` with probability
/// `1/2 + eps` under D0 and `1/2 - eps` under D1. The LargeP spike `1 + 1/eps`
/// sits uniformly in the first half under D0 and the second half under D1.
pub fn generate_with_m(kind: HardKind, p: f64, eps: f64, d: usize, m: usize, seed: u64) -> Result<HardInstance> {
    check_params(p, eps, d)?;
    if m == 0 {
        return Err(Error::InvalidInput("block size must be positive".into()));
    }
    let mut b = Vec::with_capacity(2 * m * d);
    let mut truth = Vec::with_capacity(d);
    let mut k_counts = Vec::new();
    let mut spikes = Vec::new();
    for block in 0..d {
        let mut rng = rng_for(derive_seed(seed, &[block as u64]));
        let label = if rng.random_bool(0.5) { Label::D0 } else { Label::D1 };
        truth.push(label);
        match kind {
            HardKind::SmallP => {
                let pu = if label == Label::D0 { 0.5 + eps } else { 0.5 - eps };
                let mut k = 0;
                for _ in 0..m {
                    let pair = if rng.random_bool(pu) {
                        k += 1;
                        PAIR_U
                    } else {
                        PAIR_V
                    };
                    b.extend_from_slice(&pair);
                }
                k_counts.push(k);
            }
            HardKind::LargeP => {
                let half = rng.random_range(0..m);
                let pos = if label == Label::D0 { half } else { m + half };
                let start = b.len();
                b.resize(start + 2 * m, 1.0);
                b[start + pos] = 1.0 + 1.0 / eps;
                spikes.push(pos);
            }
        }
    }
    Ok(HardInstance { kind, p, eps, d, m, a: block_diagonal(kind, m, d), b, truth, k_counts, spikes })
}

/// `||f(a x) - b_block||_p^p` for one block.
pub fn block_objective(kind: HardKind, p: f64, block_b: &[f64], x: f64) -> f64 {
    let f = kind.link();
    let m = block_b.len() / 2;
    block_vector(kind, m).iter().zip(block_b).map(|(&a, &b)| abs_pow(f.eval(a * x) - b, p)).sum()
}

/// Closed-form `(OPT, argmin)` of one block.
///
/// SmallP: `2 min(k, m - k)`, at `+6` when `u` pairs are the (weak) majority
/// and `-6` otherwise. LargeP: `m + eps^{-p}` (which is `2m` when `eps^{-p}`
/// is an integer), at `+1` when the spike is in the first half.
pub fn exact_block_opt(kind: HardKind, p: f64, eps: f64, block_b: &[f64]) -> (f64, f64) {
    let m = block_b.len() / 2;
    match kind {
        HardKind::SmallP => {
            let k = block_b.chunks(2).filter(|pair| *pair == PAIR_U).count();
            let x = if k >= m - k { SMALL_P_ARGMIN } else { -SMALL_P_ARGMIN };
            (2.0 * k.min(m - k) as f64, x)
        }
        HardKind::LargeP => {
            let first_half = block_b[..m].iter().any(|&v| v != 1.0);
            let x = if first_half { 1.0 } else { -1.0 };
            (m as f64 + eps.powf(-p), x)
        }
    }
}

impl HardInstance {
    pub fn rows_per_block(&self) -> usize {
        2 * self.m
    }

    pub fn n(&self) -> usize {
        self.b.len()
    }

    pub fn block(&self, c: usize) -> &[f64] {
        let r = self.rows_per_block();
        &self.b[c * r..(c + 1) * r]
    }

    pub fn link(&self) -> LipschitzFn {
        self.kind.link()
    }

    /// `||f(Ax) - b||_p^p`.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let f = self.link();
        let ax = &self.a * nalgebra::DVector::from_column_slice(x);
        ax.iter().zip(&self.b).map(|(&u, &b)| abs_pow(f.eval(u) - b, self.p)).sum()
    }

    /// Sum of per-block closed forms.
    pub fn exact_opt(&self) -> (f64, Vec<f64>) {
        let mut opt = 0.0;
        let mut x = Vec::with_capacity(self.d);
        for c in 0..self.d {
            let (v, xc) = exact_block_opt(self.kind, self.p, self.eps, self.block(c));
            opt += v;
            x.push(xc);
        }
        (opt, x)
    }

    /// Per-block `(closed form, grid oracle)` optimum values.
    pub fn oracle_check(&self) -> Result<Vec<(f64, f64)>> {
        let a = DMatrix::from_column_slice(self.rows_per_block(), 1, &block_vector(self.kind, self.m));
        let (lo, hi) = self.kind.grid_range();
        (0..self.d)
            .map(|c| {
                let obj = RegularizedObjective::full(&a, self.block(c), self.link(), self.p, 0.0)?;
                let grid = solve_1d_exact(&obj, lo, hi, GRID_POINTS)?;
                Ok((exact_block_opt(self.kind, self.p, self.eps, self.block(c)).0, grid.objective_value))
            })
            .collect()
    }

    /// The problem seen by the pipelines.
    pub fn to_problem(&self) -> Result<RegressionProblem> {
        RegressionProblem::new(self.a.clone(), LabelOracle::new(self.b.clone()), self.link(), self.p, self.eps)
    }

    /// Exact reference for scoring pipeline runs.
    pub fn reference(&self, prob: &RegressionProblem) -> OptReference {
        let (opt, x) = self.exact_opt();
        OptReference::exact(prob, opt, x)
    }

    /// Columnar text: a `kind,p,eps,d,m` header and its values, then `b`
    /// one entry per line, then `truth` one label per line.
    pub fn to_text(&self) -> String {
        let mut s = format!("kind,p,eps,d,m\n{},{},{},{},{}\nb\n", self.kind, self.p, self.eps, self.d, self.m);
        for v in &self.b {
            s.push_str(&format!("{v}\n"));
        }
        s.push_str("truth\n");
        for l in &self.truth {
            s.push_str(&format!("{l}\n"));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let bad = |line: usize, message: String| Error::Config { line, message };
        let mut next = |what: &str| lines.next().ok_or_else(|| bad(0, format!("missing {what}")));
        let (ln, header) = next("header")?;
        if header != "kind,p,eps,d,m" {
            return Err(bad(ln, format!("unexpected header '{header}'")));
        }
        let (ln, values) = next("header values")?;
        let fields: Vec<&str> = values.split(',').collect();
        if fields.len() != 5 {
            return Err(bad(ln, "expected 5 header fields".into()));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(ln, format!("'{s}' is not a number")));
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad(ln, format!("'{s}' is not an integer")));
        let kind: HardKind = fields[0].parse()?;
        let (p, eps, d, m) = (num(fields[1])?, num(fields[2])?, int(fields[3])?, int(fields[4])?);
        let (ln, tag) = next("b section")?;
        if tag != "b" {
            return Err(bad(ln, "expected 'b'".into()));
        }
        let mut b = Vec::with_capacity(2 * m * d);
        for _ in 0..2 * m * d {
            let (ln, v) = next("label")?;
            b.push(v.parse::<f64>().map_err(|_| bad(ln, format!("'{v}' is not a number")))?);
        }
        let (ln, tag) = next("truth section")?;
        if tag != "truth" {
            return Err(bad(ln, "expected 'truth'".into()));
        }
        let mut truth = Vec::with_capacity(d);
        for _ in 0..d {
            let (ln, v) = next("truth label")?;
            truth.push(v.parse().map_err(|_| bad(ln, format!("'{v}' is not D0 or D1")))?);
        }
        let rows = 2 * m;
        let (k_counts, spikes) = match kind {
            HardKind::SmallP => {
                let k =
                    (0..d).map(|c| b[c * rows..(c + 1) * rows].chunks(2).filter(|pr| *pr == PAIR_U).count()).collect();
                (k, Vec::new())
            }
            HardKind::LargeP => {
                let s =
                    (0..d).map(|c| b[c * rows..(c + 1) * rows].iter().position(|&v| v != 1.0).unwrap_or(0)).collect();
                (Vec::new(), s)
            }
        };
        Ok(Self { kind, p, eps, d, m, a: block_diagonal(kind, m, d), b, truth, k_counts, spikes })
    }
}

/// Checks on a grid that the block objective on `x <= 0` never beats the
/// negative candidate and on `x >= 0` never beats the positive one.
pub fn local_minima_check(kind: HardKind, p: f64, _eps: f64, block_b: &[f64]) -> bool {
    let (neg, pos) = kind.candidates();
    let at_neg = block_objective(kind, p, block_b, neg);
    let at_pos = block_objective(kind, p, block_b, pos);
    let slack = |v: f64| 1e-12 * (1.0 + v.abs());
    let (lo, hi) = kind.grid_range();
    let h = (hi - lo) / (GRID_POINTS - 1) as f64;
    (0..GRID_POINTS).all(|j| {
        let x = lo + h * j as f64;
        let v = block_objective(kind, p, block_b, x);
        (x > 0.0 || v >= at_neg - slack(at_neg)) && (x < 0.0 || v >= at_pos - slack(at_pos))
    })
}

/// Guesses D0 for block `i` iff `x_hat[i] > 0`; `x_hat[i] = 0` guesses D1.
pub fn distinguish(inst: &HardInstance, x_hat: &[f64]) -> (Vec<Label>, usize) {
    let guesses: Vec<Label> = x_hat.iter().map(|&x| if x > 0.0 { Label::D0 } else { Label::D1 }).collect();
    let correct = guesses.iter().zip(&inst.truth).filter(|(g, t)| g == t).count();
    (guesses, correct)
}

/// At least `2d/3` blocks identified.
pub fn distinguish_threshold(d: usize) -> usize {
    (2 * d).div_ceil(3)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub budget: usize,
    pub guarantee_rate: f64,
    pub distinguish_rate: f64,
    pub median_ratio: f64,
    pub mean_queries: f64,
}

/// Runs the single-stage pipeline at each budget on fresh instances and
/// records how often the guarantee and the distinguisher succeed.
pub fn query_complexity_sweep(
    kind: HardKind,
    p: f64,
    eps: f64,
    d: usize,
    budgets: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if budgets.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidInput("budgets must be sorted".into()));
    }
    let mut per_budget: Vec<Vec<(f64, bool, bool, usize)>> = vec![Vec::with_capacity(trials); budgets.len()];
    for t in 0..trials {
        let inst = generate(kind, p, eps, d, derive_seed(seed, &[t as u64]))?;
        let prob = inst.to_problem()?;
        let reference = inst.reference(&prob);
        let plan = SamplingPlan::new(&prob.a, p)?;
        for (bi, &budget) in budgets.iter().enumerate() {
            let alpha = plan.rate_for_budget(budget as f64);
            let rep =
                run_single_stage_with(&prob, &plan, alpha, derive_seed(seed, &[budget as u64, t as u64]), &reference)?;
            let (_, correct) = distinguish(&inst, &rep.x_hat);
            per_budget[bi].push((rep.ratio, rep.ratio <= eps, correct >= distinguish_threshold(d), rep.queries_used));
        }
    }
    Ok(budgets
        .iter()
        .zip(per_budget)
        .map(|(&budget, rows)| {
            let n = rows.len().max(1) as f64;
            let mut ratios: Vec<f64> = rows.iter().map(|r| r.0).collect();
            SweepRow {
                budget,
                guarantee_rate: rows.iter().filter(|r| r.1).count() as f64 / n,
                distinguish_rate: rows.iter().filter(|r| r.2).count() as f64 / n,
                median_ratio: median(&mut ratios),
                mean_queries: rows.iter().map(|r| r.3 as f64).sum::<f64>() / n,
            }
        })
        .collect())
}

/// Median with NaN-free total ordering; mean of the middle pair for even sizes.
pub fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let h = v.len() / 2;
    if v.len() % 2 == 1 {
        v[h]
    } else {
        0.5 * (v[h - 1] + v[h])
    }
}

/// Guarantee ratio of `x` on a hard instance.
pub fn hard_ratio(inst: &HardInstance, x: &[f64]) -> f64 {
    let (opt, x_star) = inst.exact_opt();
    let ax: f64 = x_star.iter().map(|&v| abs_pow(v, inst.p) * inst.rows_per_block() as f64).sum();
    guarantee_ratio(inst.objective(x), opt, 1.0, ax, inst.p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::solve;
    use proptest::prelude::*;

    #[test]
    fn small_p_pairs_are_u_or_v() {
        let inst = generate(HardKind::SmallP, 1.5, 0.2, 1, 3).unwrap();
        assert_eq!(inst.m, (8.0 * 2f64.ln() / 0.04).ceil() as usize);
        assert!(inst.b.chunks(2).all(|pr| pr == PAIR_U || pr == PAIR_V));
        assert_eq!(inst.k_counts[0], inst.b.chunks(2).filter(|pr| *pr == PAIR_U).count());
    }

    #[test]
    fn large_p_has_one_spike_in_the_right_half() {
        for seed in 0..20 {
            let inst = generate(HardKind::LargeP, 2.0, 0.25, 1, seed).unwrap();
            assert_eq!(inst.m, 16);
            let spikes: Vec<usize> = (0..32).filter(|&j| inst.b[j] != 1.0).collect();
            assert_eq!(spikes.len(), 1);
            assert_eq!(inst.b[spikes[0]], 5.0);
            assert_eq!(spikes[0] < 16, inst.truth[0] == Label::D0);
        }
    }

    #[test]
    fn blocks_are_diagonal() {
        let inst = generate(HardKind::SmallP, 2.0, 0.25, 3, 1).unwrap();
        let r = inst.rows_per_block();
        for j in 0..inst.n() {
            for c in 0..3 {
                assert_eq!(inst.a[(j, c)] != 0.0, j / r == c);
            }
        }
    }

    #[test]
    fn small_p_block_closed_form() {
        let mut b = Vec::new();
        for i in 0..10 {
            b.extend_from_slice(if i < 7 { &PAIR_U } else { &PAIR_V });
        }
        assert_eq!(exact_block_opt(HardKind::SmallP, 2.0, 0.2, &b), (6.0, 6.0));
        assert_eq!(block_objective(HardKind::SmallP, 2.0, &b, 6.0), 6.0);
        assert_eq!(block_objective(HardKind::SmallP, 2.0, &b, -6.0), 14.0);
        let half: Vec<f64> = (0..10).flat_map(|i| if i < 5 { PAIR_U } else { PAIR_V }).collect();
        let (opt, x) = exact_block_opt(HardKind::SmallP, 1.0, 0.2, &half);
        assert_eq!((opt, x), (10.0, 6.0));
        assert_eq!(block_objective(HardKind::SmallP, 1.0, &half, -6.0), 10.0);
    }

    #[test]
    fn closed_forms_match_grid_oracle() {
        for (kind, ps) in [(HardKind::SmallP, [1.0, 1.5, 2.0]), (HardKind::LargeP, [2.0, 3.0, 4.0])] {
            for p in ps {
                let inst = generate_with_m(kind, p, 0.25, 4, 12, 7).unwrap();
                for (closed, grid) in inst.oracle_check().unwrap() {
                    assert!((closed - grid).abs() <= 1e-6 * (1.0 + closed), "{kind} p={p}: {closed} vs {grid}");
                }
            }
        }
    }

    #[test]
    fn large_p_opt_is_two_m_at_integer_spike_cost() {
        let inst = generate(HardKind::LargeP, 2.0, 0.25, 2, 5).unwrap();
        let (opt, x) = inst.exact_opt();
        assert_eq!(opt, 2.0 * 2.0 * 16.0);
        assert_eq!(inst.objective(&x), opt);
        let ax: f64 = x.iter().map(|v| v * v * 32.0).sum();
        assert_eq!(ax, 2.0 * 16.0 * 2.0);
    }

    #[test]
    fn exact_argmins_distinguish_most_blocks() {
        let inst = generate(HardKind::SmallP, 2.0, 0.2, 9, 0).unwrap();
        let (_, x) = inst.exact_opt();
        let (_, correct) = distinguish(&inst, &x);
        assert!(correct >= distinguish_threshold(9));
        assert_eq!(distinguish_threshold(9), 6);
    }

    #[test]
    fn zero_solution_guesses_d1_everywhere() {
        let inst = generate(HardKind::SmallP, 2.0, 0.2, 9, 1).unwrap();
        let (g, correct) = distinguish(&inst, &[0.0; 9]);
        assert!(g.iter().all(|&l| l == Label::D1));
        assert_eq!(correct, inst.truth.iter().filter(|&&l| l == Label::D1).count());
    }

    #[test]
    fn corrupted_block_does_not_panic() {
        let b = vec![5.0; 20];
        let _ = local_minima_check(HardKind::SmallP, 2.0, 0.2, &b);
    }

    #[test]
    fn text_round_trip() {
        for kind in [HardKind::SmallP, HardKind::LargeP] {
            let inst = generate_with_m(kind, 2.0, 0.2, 3, 5, 9).unwrap();
            assert_eq!(HardInstance::from_text(&inst.to_text()).unwrap(), inst);
        }
        assert!(matches!(
            HardInstance::from_text("kind,p,eps,d,m\nsmall-p,2,0.2,1,1\nb\n3\nx\n"),
            Err(Error::Config { line: 5, .. })
        ));
    }

    #[test]
    fn rejects_large_eps() {
        assert!(generate(HardKind::SmallP, 2.0, 0.3, 2, 0).is_err());
    }

    #[test]
    fn full_budget_sweep_recovers_blocks() {
        let rows = query_complexity_sweep(HardKind::LargeP, 2.0, 0.25, 3, &[0, 10_000], 4, 1).unwrap();
        assert_eq!(rows[0].mean_queries, 0.0);
        assert_eq!(rows[1].mean_queries, 96.0);
        assert!(rows[1].distinguish_rate >= rows[0].distinguish_rate);
    }

    #[test]
    fn solver_finds_block_optimum() {
        let inst = generate_with_m(HardKind::SmallP, 2.0, 0.2, 1, 20, 4).unwrap();
        let obj = RegularizedObjective::full(&inst.a, &inst.b, inst.link(), 2.0, 0.0).unwrap();
        let rep = solve(&obj, 8, 0).unwrap();
        assert!((rep.objective_value - inst.exact_opt().0).abs() < 1e-3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn blocks_decompose(seed in 0u64..1000, xs in proptest::collection::vec(-8.0f64..8.0, 3)) {
            let inst = generate_with_m(HardKind::SmallP, 1.5, 0.2, 3, 6, seed).unwrap();
            let whole = inst.objective(&xs);
            let parts: f64 = (0..3).map(|c| block_objective(HardKind::SmallP, 1.5, inst.block(c), xs[c])).sum();
            prop_assert!((whole - parts).abs() <= 1e-9 * (1.0 + whole));
        }

        #[test]
        fn local_minima_grids_hold(seed in 0u64..1000, small in proptest::bool::ANY, pi in 0usize..3) {
            let (kind, p) = if small { (HardKind::SmallP, [1.0, 1.5, 2.0][pi]) } else { (HardKind::LargeP, [2.0, 3.0, 4.0][pi]) };
            let inst = generate_with_m(kind, p, 0.25, 1, 16, seed).unwrap();
            prop_assert!(local_minima_check(kind, p, 0.25, inst.block(0)));
        }
    }
}
