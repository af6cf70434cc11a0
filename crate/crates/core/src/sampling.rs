//! Row-sampling matrices.
//!
//! Three constructions live here: the row-splitting reduction that makes all
//! Lewis weights uniformly small, the binomial generator `gsm` that samples the
//! split rows at a common rate without materializing them, and the
//! Lewis-weight sampler used for `l_p` subspace embeddings.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::lewis::LewisWeights;
use crate::linalg;
use crate::lipschitz::LipschitzFn;
use crate::seeding::row_rng;

/// A diagonal `n x n` matrix with few nonzero, positive entries. Each nonzero
/// row costs one label query.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingMatrix {
    n: usize,
    /// Sorted by row index; every scale is > 0.
    entries: Vec<(usize, f64)>,
    alpha: f64,
}

impl SamplingMatrix {
    /// Builds from `(row, scale)` pairs. Zero scales are dropped.
    pub fn from_entries(n: usize, mut entries: Vec<(usize, f64)>, alpha: f64) -> Result<Self> {
        entries.retain(|&(_, s)| s != 0.0);
        entries.sort_by_key(|&(i, _)| i);
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidInput("duplicate row in sampling matrix".into()));
        }
        if let Some(&(i, s)) = entries.iter().find(|&&(i, s)| i >= n || !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidInput(format!("invalid sampling entry ({i}, {s}) for dimension {n}")));
        }
        Ok(Self { n, entries, alpha })
    }

    pub fn identity(n: usize) -> Self {
        Self { n, entries: (0..n).map(|i| (i, 1.0)).collect(), alpha: 1.0 }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// The sampling rate used to draw this matrix; for non-uniform samplers,
    /// the mean inclusion probability.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Number of nonzero diagonal entries.
    pub fn query_count(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn rows(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|&(i, _)| i)
    }

    pub fn get(&self, i: usize) -> f64 {
        match self.entries.binary_search_by_key(&i, |&(j, _)| j) {
            Ok(pos) => self.entries[pos].1,
            Err(_) => 0.0,
        }
    }

    /// The product `self * other`; nonzero only on rows both keep.
    pub fn compose(&self, other: &SamplingMatrix) -> Result<SamplingMatrix> {
        if self.n != other.n {
            return Err(Error::InvalidInput("composing sampling matrices of different sizes".into()));
        }
        let entries = self
            .entries
            .iter()
            .filter_map(|&(i, s)| {
                let t = other.get(i);
                (t != 0.0).then_some((i, s * t))
            })
            .collect();
        Ok(SamplingMatrix { n: self.n, entries, alpha: self.alpha * other.alpha })
    }

    /// `||S v||_p^p`.
    pub fn pow_norm(&self, v: &[f64], p: f64) -> f64 {
        self.entries.iter().map(|&(i, s)| linalg::abs_pow(s * v[i], p)).sum()
    }

    /// The nonzero rows of `S A`, scaled.
    pub fn apply_rows(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        linalg::scaled_rows(a, &self.entries)
    }
}

fn check_rate(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidRate(alpha))
    }
}

/// Generates the binomial sampling matrix: for each row with `k_i > 0`, draws
/// `N_i ~ Bin(k_i, alpha)` and keeps `(N_i / (alpha k_i))^{1/p}` when
/// `N_i > 0`. Row `i` uses its own random stream of `seed`.
pub fn gsm(k: &[usize], alpha: f64, p: f64, seed: u64) -> Result<SamplingMatrix> {
    check_rate(alpha)?;
    let mut entries = Vec::new();
    for (i, &ki) in k.iter().enumerate() {
        if ki == 0 {
            continue;
        }
        let draws = if alpha == 1.0 {
            ki as u64
        } else {
            let bin = Binomial::new(ki as u64, alpha).map_err(|e| Error::InvalidInput(e.to_string()))?;
            bin.sample(&mut row_rng(seed, i))
        };
        if draws > 0 {
            let scale = (draws as f64 / (alpha * ki as f64)).powf(1.0 / p);
            entries.push((i, scale));
        }
    }
    Ok(SamplingMatrix { n: k.len(), entries, alpha })
}

/// Duplication counts `k_i = ceil(n w_i / d)`.
///
/// Rows with zero weight still get one copy so that every objective term is
/// kept. The ceiling forgives `1e-9` of floating-point excess so that exactly
/// uniform weights give `k_i = 1`.
pub fn split_counts(lw: &LewisWeights) -> Vec<usize> {
    let n = lw.len() as f64;
    let d = lw.rank as f64;
    lw.weights.iter().map(|&w| ((n * w / d) - 1e-9).ceil().max(1.0) as usize).collect()
}

/// The row-split problem: row `i` of `A` is repeated `k_i` times and each copy
/// is weighted by `k_i^{-1/p}`, so that `||Lambda (f(A'x) - b')||_p^p` equals
/// `||f(Ax) - b||_p^p` while every Lewis weight of `Lambda A'` is at most `d/n`.
///
/// Labels of the split problem are never stored: `source_row[j]` names the
/// original entry of `b` that copy `j` reads.
#[derive(Clone, Debug)]
pub struct SplitProblem {
    pub a_split: DMatrix<f64>,
    pub source_row: Vec<usize>,
    pub lambda: Vec<f64>,
    pub k: Vec<usize>,
    pub n_prime: usize,
    pub p: f64,
}

impl SplitProblem {
    /// `Lambda A'`.
    pub fn weighted_matrix(&self) -> DMatrix<f64> {
        let mut m = self.a_split.clone();
        for (j, &l) in self.lambda.iter().enumerate() {
            m.row_mut(j).scale_mut(l);
        }
        m
    }

    /// `||Lambda (f(A'x) - b')||_p^p`, reading `b'_j` through `label(source_row[j])`.
    pub fn objective(&self, f: &LipschitzFn, x: &[f64], mut label: impl FnMut(usize) -> f64) -> f64 {
        let x = nalgebra::DVector::from_column_slice(x);
        let ax = &self.a_split * x;
        (0..self.n_prime)
            .map(|j| {
                let r = f.eval(ax[j]) - label(self.source_row[j]);
                linalg::abs_pow(self.lambda[j] * r, self.p)
            })
            .sum()
    }

    /// The distinct original rows read by the given split rows.
    pub fn distinct_sources(&self, split_rows: impl IntoIterator<Item = usize>) -> Vec<usize> {
        let mut rows: Vec<usize> = split_rows.into_iter().map(|j| self.source_row[j]).collect();
        rows.sort_unstable();
        rows.dedup();
        rows
    }
}

pub fn row_split(a: &DMatrix<f64>, lw: &LewisWeights, p: f64) -> Result<SplitProblem> {
    if lw.len() != a.nrows() {
        return Err(Error::InvalidInput("weights do not match the matrix".into()));
    }
    if lw.rank < a.ncols() {
        return Err(Error::RankDeficient { rank: lw.rank, cols: a.ncols() });
    }
    let k = split_counts(lw);
    let n_prime: usize = k.iter().sum();
    let mut source_row = Vec::with_capacity(n_prime);
    let mut lambda = Vec::with_capacity(n_prime);
    for (i, &ki) in k.iter().enumerate() {
        let l = (ki as f64).powf(-1.0 / p);
        for _ in 0..ki {
            source_row.push(i);
            lambda.push(l);
        }
    }
    let a_split = DMatrix::from_fn(n_prime, a.ncols(), |j, c| a[(source_row[j], c)]);
    Ok(SplitProblem { a_split, source_row, lambda, k, n_prime, p })
}

/// Oversampling factor `beta` for Lewis-weight sampling to give an `l_p`
/// subspace embedding with distortion `1 + eps`, times `c_emb`.
///
/// Each logarithmic factor is floored at 1 so the rate stays positive and
/// finite for tiny `d` and `eps` near 1.
pub fn embedding_rate(p: f64, d: usize, eps: f64, c_emb: f64) -> f64 {
    let d = d as f64;
    let log_de = (d / eps).ln().max(1.0);
    let inv_eps2 = 1.0 / (eps * eps);
    let base = if p == 1.0 || p == 2.0 {
        inv_eps2 * log_de
    } else if p < 2.0 {
        inv_eps2 * log_de * log_de.ln().max(1.0).powi(2)
    } else {
        d.powf(p / 2.0 - 1.0) * inv_eps2 * d.ln().max(1.0).powi(2) * log_de
    };
    c_emb * base
}

/// Independent rows with `S_ii = p_i^{-1/p} Ber(p_i)`, `p_i = min(beta w_i, 1)`.
pub fn sample_for_embedding(lw: &LewisWeights, p: f64, eps: f64, c_emb: f64, seed: u64) -> Result<SamplingMatrix> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidInput(format!("eps must lie in (0, 1), got {eps}")));
    }
    let beta = embedding_rate(p, lw.rank, eps, c_emb);
    let mut entries = Vec::new();
    let mut total_prob = 0.0;
    for (i, &w) in lw.weights.iter().enumerate() {
        let pi = (beta * w).min(1.0);
        total_prob += pi;
        if pi <= 0.0 {
            continue;
        }
        let keep = pi >= 1.0 || row_rng(seed, i).random::<f64>() < pi;
        if keep {
            entries.push((i, pi.powf(-1.0 / p)));
        }
    }
    let n = lw.len();
    Ok(SamplingMatrix { n, entries, alpha: total_prob / n.max(1) as f64 })
}

/// Expected query count of [`sample_for_embedding`].
pub fn expected_embedding_queries(lw: &LewisWeights, p: f64, eps: f64, c_emb: f64) -> f64 {
    let beta = embedding_rate(p, lw.rank, eps, c_emb);
    lw.weights.iter().map(|&w| (beta * w).min(1.0)).sum()
}

/// Smallest and largest `||S A x||_p / ||A x||_p` over the given directions.
pub fn distortion_range(a: &DMatrix<f64>, s: &SamplingMatrix, p: f64, directions: &[DVector<f64>]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for x in directions {
        let ax = a * x;
        let full = linalg::lp_pow(ax.as_slice(), p);
        if full == 0.0 {
            continue;
        }
        let r = (s.pow_norm(ax.as_slice(), p) / full).powf(1.0 / p);
        lo = lo.min(r);
        hi = hi.max(r);
    }
    (lo, hi)
}
