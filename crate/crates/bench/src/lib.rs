//! Shared inputs for the kernel benchmarks.

use lpactive::lewis_weights;
use lpactive::planted::{planted_relu, PlantedInstance};
use lpactive::sampling::split_counts;

/// A planted ReLU instance with its split counts at exponent `p`.
pub struct Fixture {
    pub instance: PlantedInstance,
    pub p: f64,
    pub k: Vec<usize>,
}

impl Fixture {
    pub fn new(n: usize, d: usize, p: f64, seed: u64) -> Self {
        let instance = planted_relu(n, d, seed);
        let lw = lewis_weights(&instance.a, p).expect("Gaussian fixtures have full rank");
        let k = split_counts(&lw);
        Self { instance, p, k }
    }

    pub fn n(&self) -> usize {
        self.instance.a.nrows()
    }

    pub fn d(&self) -> usize {
        self.instance.a.ncols()
    }

    /// Sampling rate with `budget` expected rows.
    pub fn rate(&self, budget: f64) -> f64 {
        (budget / self.k.iter().sum::<usize>() as f64).min(1.0)
    }
}
