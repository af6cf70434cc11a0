//! Sampling-rate constants and the budget formulas built from them.
//!
//! The asymptotic rates only fix query budgets up to constants and
//! polylogarithmic factors. Those unknowns are collected in [`Constants`],
//! calibrated once by `bench calibrate`, and frozen in `calibrated.conf`.

use std::fmt::Write as _;

use crate::error::{Error, Result};

const CALIBRATED: &str = include_str!("../calibrated.conf");

#[derive(Clone, Debug, PartialEq)]
pub struct Constants {
    /// Multiplier of the single-stage budget.
    pub c_single: f64,
    /// Multiplier of the second-stage budget of the two-stage pipeline.
    pub c_two: f64,
    /// Multiplier of the first-stage target row count.
    pub c_circ: f64,
    /// Multiplier of the subspace-embedding oversampling factor.
    pub c_emb: f64,
    /// Power of the logarithm in both budgets.
    pub polylog_exp: f64,
    /// Exponent of `1/eps` in the first-stage target; `None` means `4p + 8`.
    pub circ_eps_exp: Option<f64>,
}

impl Default for Constants {
    /// Unit constants with the unoptimized first-stage exponent `4p + 8`.
    fn default() -> Self {
        Self { c_single: 1.0, c_two: 1.0, c_circ: 1.0, c_emb: 1.0, polylog_exp: 3.0, circ_eps_exp: None }
    }
}

fn dim_power(p: f64, d: usize) -> f64 {
    (d as f64).powf((p / 2.0).max(1.0))
}

fn eps_power(p: f64, eps: f64) -> f64 {
    eps.powf(-p.max(2.0))
}

impl Constants {
    /// The checked-in calibrated constants.
    pub fn calibrated() -> Self {
        Self::parse(CALIBRATED).expect("calibrated.conf is well formed")
    }

    /// Expected queries of the single-stage pipeline:
    /// `c_single d^{max(p/2,1)} eps^{-max(p,2)} (ln n)^polylog_exp`.
    pub fn single_stage_budget(&self, p: f64, d: usize, eps: f64, n: usize) -> f64 {
        self.c_single * dim_power(p, d) * eps_power(p, eps) * (n.max(3) as f64).ln().powf(self.polylog_exp)
    }

    /// Target row count of the first stage:
    /// `c_circ d^{max(p/2,1)+1} eps^{-e} ln(1/eps)`.
    pub fn circ_target(&self, p: f64, d: usize, eps: f64) -> f64 {
        let e = self.circ_eps_exp.unwrap_or(4.0 * p + 8.0);
        self.c_circ * dim_power(p, d) * d as f64 * eps.powf(-e) * (1.0 / eps).ln()
    }

    /// First-stage rate, capped at 1.
    pub fn alpha_circ(&self, p: f64, d: usize, eps: f64, n: usize) -> f64 {
        (self.circ_target(p, d, eps) / n as f64).min(1.0)
    }

    /// Expected queries of the second stage for a first stage of `m` rows:
    /// `c_two d^{max(p/2,1)} eps^{-max(p,2)} (ln m)^polylog_exp`.
    pub fn two_stage_budget(&self, p: f64, d: usize, eps: f64, m: f64) -> f64 {
        self.c_two * dim_power(p, d) * eps_power(p, eps) * m.max(3.0).ln().powf(self.polylog_exp)
    }

    /// Two-stage budget at the nominal first-stage size `min(circ_target, n)`.
    pub fn nominal_two_stage_budget(&self, p: f64, d: usize, eps: f64, n: usize) -> f64 {
        self.two_stage_budget(p, d, eps, self.circ_target(p, d, eps).min(n as f64))
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Config { line: lineno + 1, message };
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected key=value, got '{line}'")))?;
            let (key, value) = (key.trim(), value.trim());
            let number = || -> Result<f64> {
                let v: f64 = value.parse().map_err(|_| err(format!("'{value}' is not a number")))?;
                if v.is_finite() && v >= 0.0 {
                    Ok(v)
                } else {
                    Err(err(format!("{key} must be finite and nonnegative")))
                }
            };
            match key {
                "c_single" => c.c_single = number()?,
                "c_two" => c.c_two = number()?,
                "c_circ" => c.c_circ = number()?,
                "c_emb" => c.c_emb = number()?,
                "polylog_exp" => c.polylog_exp = number()?,
                "circ_eps_exp" => c.circ_eps_exp = if value == "auto" { None } else { Some(number()?) },
                other => return Err(err(format!("unknown constant '{other}'"))),
            }
        }
        Ok(c)
    }

    /// Serializes with a leading comment block.
    pub fn to_conf(&self, provenance: &str) -> String {
        let mut out = String::new();
        for line in provenance.lines() {
            let _ = writeln!(out, "# {line}");
        }
        let _ = writeln!(out, "c_single = {}", self.c_single);
        let _ = writeln!(out, "c_two = {}", self.c_two);
        let _ = writeln!(out, "c_circ = {}", self.c_circ);
        let _ = writeln!(out, "c_emb = {}", self.c_emb);
        let _ = writeln!(out, "polylog_exp = {}", self.polylog_exp);
        match self.circ_eps_exp {
            Some(e) => writeln!(out, "circ_eps_exp = {e}"),
            None => writeln!(out, "circ_eps_exp = auto"),
        }
        .expect("writing to a String");
        out
    }
}
