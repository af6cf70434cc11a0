//! Active `l_p` regression for single-index models `f(Ax) ~ b`.
//!
//! The label vector `b` is hidden behind a query counter. The pipelines in
//! [`active`] compute Lewis weights of `A`, draw a row-sampling matrix with the
//! binomial generator in [`sampling`], query only the sampled labels, and solve
//! a regularized subsampled problem with the multi-start solver in [`solver`].
//! [`hardinstances`] builds the lower-bound constructions together with exact
//! optima, and [`experiment`] drives seeded sweeps that write CSV reports.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod active;
pub mod error;
pub mod experiment;
pub mod hardinstances;
pub mod lewis;
pub mod linalg;
pub mod lipschitz;
pub mod planted;
pub mod rates;
pub mod sampling;
pub mod seeding;
pub mod solver;

pub use active::{ActiveReport, LabelOracle, OptReference, RegressionProblem};
pub use error::{Error, Result};
pub use hardinstances::{HardInstance, HardKind, Label};

pub use lewis::{compute_lewis_weights, lewis_weights, LewisOptions, LewisWeights};
pub use lipschitz::{LinkKind, LipschitzFn, PiecewiseLinear};
pub use rates::Constants;
pub use sampling::{gsm, row_split, SamplingMatrix, SplitProblem};
pub use solver::{solve, solve_1d_exact, RegularizedObjective, SolveReport};
