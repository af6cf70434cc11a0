//! Scalar Lipschitz link functions with `f(0) = 0`, applied entrywise.
//!
//! Every registered link is piecewise linear, so a single evaluator backs all of
//! them: a sorted list of breakpoints and one slope per segment, anchored at
//! the origin.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// A continuous piecewise-linear function on the real line.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseLinear {
    breakpoints: Vec<f64>,
    slopes: Vec<f64>,
    offset: f64,
    knot_values: Vec<f64>,
}

impl PiecewiseLinear {
    /// Builds the function with value `offset` at 0, `slopes[j]` on the segment
    /// left of `breakpoints[j]` and `slopes.last()` to the right of the last one.
    pub fn new(breakpoints: Vec<f64>, slopes: Vec<f64>, offset: f64) -> Result<Self> {
        if slopes.len() != breakpoints.len() + 1 {
            return Err(Error::InvalidInput(format!(
                "{} breakpoints need {} slopes, got {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                slopes.len()
            )));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput("breakpoints must be strictly increasing".into()));
        }
        if breakpoints.iter().chain(&slopes).chain([&offset]).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("breakpoints and slopes must be finite".into()));
        }

        // Knot values relative to f(0) = 0; the offset is added on evaluation so
        // that the zero-anchored part stays exact.
        let nb = breakpoints.len();
        let mut knot_values = vec![0.0; nb];
        let z = breakpoints.partition_point(|&b| b < 0.0);
        if z < nb {
            knot_values[z] = slopes[z] * breakpoints[z];
            for j in z + 1..nb {
                knot_values[j] = knot_values[j - 1] + slopes[j] * (breakpoints[j] - breakpoints[j - 1]);
            }
        }
        if z > 0 {
            knot_values[z - 1] = slopes[z] * breakpoints[z - 1];
            for j in (0..z - 1).rev() {
                knot_values[j] = knot_values[j + 1] - slopes[j + 1] * (breakpoints[j + 1] - breakpoints[j]);
            }
        }
        Ok(Self { breakpoints, slopes, offset, knot_values })
    }

    /// Interpolates the knots `(xs[j], ys[j])`, extended linearly by the given
    /// end slopes.
    pub fn from_knots(xs: &[f64], ys: &[f64], left_slope: f64, right_slope: f64) -> Result<Self> {
        if xs.len() != ys.len() || xs.is_empty() {
            return Err(Error::InvalidInput("need the same nonzero number of knot abscissae and values".into()));
        }
        let mut slopes = Vec::with_capacity(xs.len() + 1);
        slopes.push(left_slope);
        for j in 1..xs.len() {
            let dx = xs[j] - xs[j - 1];
            if !(dx > 0.0) {
                return Err(Error::InvalidInput("knot abscissae must be strictly increasing".into()));
            }
            slopes.push((ys[j] - ys[j - 1]) / dx);
        }
        slopes.push(right_slope);
        // Value at 0 from the knot segment containing it.
        let j = xs.partition_point(|&x| x < 0.0);
        let offset = if j == 0 { ys[0] - left_slope * xs[0] } else { ys[j - 1] - slopes[j] * xs[j - 1] };
        Self::new(xs.to_vec(), slopes, offset)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    /// The value at the origin.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn lipschitz_constant(&self) -> f64 {
        self.slopes.iter().fold(0.0, |acc: f64, s| acc.max(s.abs()))
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let j = self.breakpoints.partition_point(|&b| b < x);
        let zero_anchored = if self.breakpoints.is_empty() {
            self.slopes[0] * x
        } else if j == 0 {
            self.knot_values[0] + self.slopes[0] * (x - self.breakpoints[0])
        } else {
            self.knot_values[j - 1] + self.slopes[j] * (x - self.breakpoints[j - 1])
        };
        zero_anchored + self.offset
    }

    /// Slope at `x`; the mean of the one-sided slopes at a breakpoint.
    #[inline]
    pub fn subgradient(&self, x: f64) -> f64 {
        let j = self.breakpoints.partition_point(|&b| b < x);
        if j < self.breakpoints.len() && self.breakpoints[j] == x {
            0.5 * (self.slopes[j] + self.slopes[j + 1])
        } else {
            self.slopes[j]
        }
    }

    fn without_offset(mut self) -> Self {
        self.offset = 0.0;
        self
    }
}

/// Which registered link a [`LipschitzFn`] is.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LinkKind {
    Identity,
    Relu,
    /// `min(max(x, 0), 1)`.
    Clip01Ramp,
    /// Link of the small-`p` hard instance: 2 for `x <= -6`, `-x - 4` on
    /// `[-6, -4]`, 0 on `[-4, 0]`, `x / 2` for `x >= 0`.
    LbSmall,
    /// Link of the large-`p` hard instance: 0 for `x <= 0`, `x` on `[0, 1]`,
    /// 1 for `x >= 1`.
    LbLarge,
    PiecewiseLinear,
}

impl LinkKind {
    pub fn name(self) -> &'static str {
        match self {
            LinkKind::Identity => "identity",
            LinkKind::Relu => "relu",
            LinkKind::Clip01Ramp => "clip",
            LinkKind::LbSmall => "lb-small",
            LinkKind::LbLarge => "lb-large",
            LinkKind::PiecewiseLinear => "piecewise",
        }
    }
}

/// An `L`-Lipschitz link with `f(0) = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct LipschitzFn {
    kind: LinkKind,
    shape: PiecewiseLinear,
    lipschitz: f64,
}

impl LipschitzFn {
    fn builtin(kind: LinkKind, breakpoints: &[f64], slopes: &[f64]) -> Self {
        let shape = PiecewiseLinear::new(breakpoints.to_vec(), slopes.to_vec(), 0.0)
            .expect("builtin link shapes are well formed");
        let lipschitz = shape.lipschitz_constant();
        Self { kind, shape, lipschitz }
    }

    pub fn identity() -> Self {
        Self::builtin(LinkKind::Identity, &[], &[1.0])
    }

    pub fn relu() -> Self {
        Self::builtin(LinkKind::Relu, &[0.0], &[0.0, 1.0])
    }

    pub fn clip01_ramp() -> Self {
        Self::builtin(LinkKind::Clip01Ramp, &[0.0, 1.0], &[0.0, 1.0, 0.0])
    }

    pub fn lb_small() -> Self {
        Self::builtin(LinkKind::LbSmall, &[-6.0, -4.0, 0.0], &[0.0, -1.0, 0.0, 0.5])
    }

    pub fn lb_large() -> Self {
        Self::builtin(LinkKind::LbLarge, &[0.0, 1.0], &[0.0, 1.0, 0.0])
    }

    /// Registers a user-supplied shape. A nonzero value at the origin is moved
    /// into the returned shift `c = f(0)`; the link becomes `x -> f(x) - c` and
    /// labels must be shifted by the same `c`.
    pub fn piecewise(shape: PiecewiseLinear) -> Result<(Self, f64)> {
        let shift = shape.offset();
        let shape = shape.without_offset();
        let lipschitz = shape.lipschitz_constant();
        if !(lipschitz > 0.0) {
            return Err(Error::InvalidInput("a constant link has no Lipschitz constant > 0".into()));
        }
        Ok((Self { kind: LinkKind::PiecewiseLinear, shape, lipschitz }, shift))
    }

    /// `x -> f(x) - f(0)` for an arbitrary shape, with the removed constant.
    pub fn shifted(shape: PiecewiseLinear) -> Result<(Self, f64)> {
        Self::piecewise(shape)
    }

    pub fn kind(&self) -> LinkKind {
        self.kind
    }

    pub fn shape(&self) -> &PiecewiseLinear {
        &self.shape
    }

    /// The exact Lipschitz constant `L`.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.shape.eval(x)
    }

    pub fn eval_vec(&self, u: &[f64]) -> Vec<f64> {
        u.iter().map(|&x| self.eval(x)).collect()
    }

    #[inline]
    pub fn subgradient(&self, x: f64) -> f64 {
        self.shape.subgradient(x)
    }
}

impl fmt::Display for LipschitzFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind.name())
    }
}

impl FromStr for LipschitzFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Self::identity()),
            "relu" => Ok(Self::relu()),
            "clip" => Ok(Self::clip01_ramp()),
            "lb-small" => Ok(Self::lb_small()),
            "lb-large" => Ok(Self::lb_large()),
            other => Err(Error::InvalidInput(format!(
                "unknown link '{other}' (expected identity|relu|clip|lb-small|lb-large)"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn registered() -> Vec<LipschitzFn> {
        vec![
            LipschitzFn::identity(),
            LipschitzFn::relu(),
            LipschitzFn::clip01_ramp(),
            LipschitzFn::lb_small(),
            LipschitzFn::lb_large(),
        ]
    }

    #[test]
    fn lb_small_table() {
        let f = LipschitzFn::lb_small();
        assert_eq!(f.eval(-6.0), 2.0);
        assert_eq!(f.eval(6.0), 3.0);
        assert_eq!(f.eval(0.0), 0.0);
        assert_eq!(f.eval(-100.0), 2.0);
        assert_eq!(f.eval(-5.0), 1.0);
        assert_eq!(f.eval(-4.0), 0.0);
        assert_eq!(f.eval(-2.0), 0.0);
        assert_eq!(f.lipschitz(), 1.0);
    }

    #[test]
    fn lb_large_table() {
        let f = LipschitzFn::lb_large();
        assert_eq!(f.eval(-1.0), 0.0);
        assert_eq!(f.eval(1.0), 1.0);
        assert_eq!(f.eval(0.5), 0.5);
        assert_eq!(f.eval(7.0), 1.0);
    }

    #[test]
    fn identity_and_relu() {
        let id = LipschitzFn::identity();
        assert_eq!(id.eval(-3.5), -3.5);
        assert_eq!(id.lipschitz(), 1.0);
        let r = LipschitzFn::relu();
        assert_eq!(r.eval_vec(&[-1.0, 0.0, 2.0]), vec![0.0, 0.0, 2.0]);
    }

    #[test]
    fn subgradients() {
        let r = LipschitzFn::relu();
        assert_eq!(r.subgradient(1.0), 1.0);
        assert_eq!(r.subgradient(-1.0), 0.0);
        assert_eq!(r.subgradient(0.0), 0.5);
        let s = LipschitzFn::lb_small();
        assert_eq!(s.subgradient(-5.0), -1.0);
        assert_eq!(s.subgradient(-6.0), -0.5);
        assert_eq!(s.subgradient(3.0), 0.5);
    }

    #[test]
    fn zero_at_origin_exactly() {
        for f in registered() {
            assert_eq!(f.eval(0.0), 0.0, "{f}");
        }
    }

    #[test]
    fn randomized_lipschitz_check() {
        let mut rng = crate::seeding::rng_for(11);
        for f in registered() {
            let l = f.lipschitz();
            for _ in 0..10_000 {
                let x: f64 = rng.random_range(-12.0..12.0);
                let y: f64 = rng.random_range(-12.0..12.0);
                assert!((f.eval(x) - f.eval(y)).abs() <= l * (x - y).abs() + 1e-12);
            }
        }
    }

    #[test]
    fn slopes_match_finite_differences_off_breakpoints() {
        let shape = PiecewiseLinear::new(vec![-2.0, 0.5, 3.0], vec![0.25, -1.5, 2.0, 0.0], 0.0).unwrap();
        let h = 1e-6;
        for (j, &s) in shape.slopes().iter().enumerate() {
            let x = match j {
                0 => -5.0,
                1 => -1.0,
                2 => 1.7,
                _ => 10.0,
            };
            let fd = (shape.eval(x + h) - shape.eval(x - h)) / (2.0 * h);
            assert!((fd - s).abs() < 1e-9, "segment {j}: {fd} vs {s}");
        }
        assert_eq!(shape.eval(0.0), 0.0);
    }

    #[test]
    fn knots_with_offset_are_shifted() {
        let shape = PiecewiseLinear::from_knots(&[-1.0, 1.0], &[2.0, 4.0], 0.0, 0.0).unwrap();
        assert!((shape.eval(0.0) - 3.0).abs() < 1e-15);
        let (f, shift) = LipschitzFn::shifted(shape.clone()).unwrap();
        assert!((shift - 3.0).abs() < 1e-15);
        assert_eq!(f.eval(0.0), 0.0);
        for x in [-3.0, -0.5, 0.2, 5.0] {
            assert!((f.eval(x) + shift - shape.eval(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_malformed_shapes() {
        assert!(PiecewiseLinear::new(vec![1.0, 0.0], vec![0.0, 1.0, 0.0], 0.0).is_err());
        assert!(PiecewiseLinear::new(vec![0.0], vec![1.0], 0.0).is_err());
        assert!("softplus".parse::<LipschitzFn>().is_err());
        assert_eq!("lb-large".parse::<LipschitzFn>().unwrap().kind(), LinkKind::LbLarge);
    }
}
