//! Rational filter `f(σ) = Σ_j w_j / (g(t_j) − σ²)` induced by a contour rule.
//!
//! `|f|` is the per-mode gain the moment blocks apply to `V_in`; its decay
//! outside the interval sets the convergence ratio `|f(σ_ref)/f(σ)|^ℓ`.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::contour::ContourRule;
use crate::error::{Result, SsError};

pub const RATIO_GUARD: f64 = 1e-30;

/// Full-rule evaluation.
pub fn eval_filter(rule: &ContourRule, sigma: f64) -> Complex64 {
    let x = sigma * sigma;
    (0..rule.len()).map(|j| rule.weights()[j] / (rule.shift(j) - x)).sum()
}

/// Half-rule evaluation with conjugate doubling; real by construction.
pub fn eval_filter_half(rule: &ContourRule, sigma: f64) -> f64 {
    let x = sigma * sigma;
    let (_, w) = rule.half_rule();
    2.0 * (0..w.len()).map(|j| (w[j] / (rule.shift(j) - x)).re).sum::<f64>()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterProfile {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub rule: ContourRule,
}

pub fn filter_profile(
    rule: &ContourRule,
    sigma_min: f64,
    sigma_max: f64,
    points: usize,
    log_spacing: bool,
) -> Result<FilterProfile> {
    if points == 0 {
        return Err(SsError::InvalidArgument(
            "filter profile needs at least one point".into(),
        ));
    }
    if !(sigma_min > 0.0 && sigma_min.is_finite()) {
        return Err(SsError::InvalidArgument(format!(
            "sigma_min must be positive, got {sigma_min}"
        )));
    }
    if points > 1 && !(sigma_max > sigma_min && sigma_max.is_finite()) {
        return Err(SsError::InvalidArgument(format!(
            "profile range must satisfy 0 < sigma_min < sigma_max, got [{sigma_min}, {sigma_max}]"
        )));
    }
    let grid: Vec<f64> = if points == 1 {
        vec![sigma_min]
    } else if log_spacing {
        let (l0, l1) = (sigma_min.ln(), sigma_max.ln());
        (0..points)
            .map(|i| (l0 + (l1 - l0) * i as f64 / (points - 1) as f64).exp())
            .collect()
    } else {
        (0..points)
            .map(|i| sigma_min + (sigma_max - sigma_min) * i as f64 / (points - 1) as f64)
            .collect()
    };
    let values = grid.iter().map(|&s| eval_filter(rule, s).norm()).collect();
    Ok(FilterProfile {
        grid,
        values,
        rule: rule.clone(),
    })
}

impl FilterProfile {
    /// Two-column CSV with a `#` header line recording the rule.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let r = &self.rule;
        writeln!(
            out,
            "# transform={} a={:.16e} b={:.16e} N={} alpha={:.16e} gamma={:.16e} rho={:.16e}",
            r.transform.name(),
            r.interval.0,
            r.interval.1,
            r.len(),
            r.aspect,
            r.center,
            r.radius
        )?;
        writeln!(out, "sigma,abs_f")?;
        for (s, v) in self.grid.iter().zip(&self.values) {
            writeln!(out, "{s:.16e},{v:.16e}")?;
        }
        Ok(())
    }
}

/// `|f(σ_reference) / f(σ_target)|^ℓ`.
pub fn convergence_ratio(rule: &ContourRule, sigma_target: f64, sigma_reference: f64, ell: u32) -> Result<f64> {
    let target = eval_filter(rule, sigma_target).norm();
    if target <= RATIO_GUARD {
        return Err(SsError::Degenerate(format!(
            "|f({sigma_target})| = {target:e} is too small to divide by"
        )));
    }
    let r = eval_filter(rule, sigma_reference).norm() / target;
    Ok(r.powi(ell as i32))
}
