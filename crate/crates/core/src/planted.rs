//! Synthetic single-index regression problems with a known planted signal.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::lipschitz::LipschitzFn;
use crate::seeding::{derive_seed, rng_for};

/// `n x d` matrix of i.i.d. standard normals.
pub fn gaussian_matrix(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng_for(seed);
    // Column-major fill keeps the draw order fixed.
    DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng))
}

pub fn gaussian_vector(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_for(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// A planted instance `b = f(A x0) + noise * g` with Gaussian `A`, `x0`, `g`.
#[derive(Clone, Debug)]
pub struct PlantedInstance {
    pub a: DMatrix<f64>,
    pub b: Vec<f64>,
    pub x0: Vec<f64>,
    pub f: LipschitzFn,
}

pub fn planted(f: LipschitzFn, n: usize, d: usize, noise: f64, seed: u64) -> PlantedInstance {
    let a = gaussian_matrix(n, d, derive_seed(seed, &[1]));
    let x0 = gaussian_vector(d, derive_seed(seed, &[2]));
    let g = gaussian_vector(n, derive_seed(seed, &[3]));
    let ax = &a * DVector::from_column_slice(&x0);
    let b = ax.iter().zip(&g).map(|(&t, &e)| f.eval(t) + noise * e).collect();
    PlantedInstance { a, b, x0, f }
}

/// `b = relu(A x0) + 0.1 g`.
pub fn planted_relu(n: usize, d: usize, seed: u64) -> PlantedInstance {
    planted(LipschitzFn::relu(), n, d, 0.1, seed)
}

/// `b = A x0 + 0.1 g`.
pub fn planted_identity(n: usize, d: usize, seed: u64) -> PlantedInstance {
    planted(LipschitzFn::identity(), n, d, 0.1, seed)
}
