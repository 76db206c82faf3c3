//! Trapezoidal quadrature on an ellipse enclosing the squared target interval.
//!
//! The contour lives in the transformed variable `t`: the shifted systems are
//! `(g(t_j) I - AᵀA)`, with `g` either the identity or `exp`. Nodes are stored
//! in *paired order*: slot `j + N/2` holds the exact complex conjugate of slot
//! `j`, so the lower half never has to be solved for.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SsError};

/// Default ellipse aspect ratio.
pub const DEFAULT_ASPECT: f64 = 0.1;
/// Default node count. Heuristic; wider intervals may want more.
pub const DEFAULT_NODES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    Identity,
    Exp,
}

impl Transform {
    pub fn forward(self, t: f64) -> f64 {
        match self {
            Transform::Identity => t,
            Transform::Exp => t.exp(),
        }
    }

    pub fn inverse(self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::Exp => x.ln(),
        }
    }

    pub fn derivative(self, t: f64) -> f64 {
        match self {
            Transform::Identity => 1.0,
            Transform::Exp => t.exp(),
        }
    }

    pub fn forward_complex(self, t: Complex64) -> Complex64 {
        match self {
            Transform::Identity => t,
            Transform::Exp => t.exp(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Transform::Identity => "identity",
            Transform::Exp => "exp",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContourRule {
    pub center: f64,
    pub radius: f64,
    pub aspect: f64,
    pub transform: Transform,
    pub interval: (f64, f64),
    nodes: Vec<Complex64>,
    weights: Vec<Complex64>,
}

impl ContourRule {
    /// Builds the `count`-point rule for singular values in `[a, b]`.
    pub fn build(a: f64, b: f64, count: usize, aspect: f64, transform: Transform) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || a < 0.0 || a >= b {
            return Err(SsError::InvalidArgument(format!(
                "interval must satisfy 0 <= a < b, got [{a}, {b}]"
            )));
        }
        if count < 4 || !count.is_multiple_of(2) {
            return Err(SsError::InvalidArgument(format!(
                "node count must be even and at least 4, got {count}"
            )));
        }
        if !(aspect > 0.0 && aspect <= 1.0) {
            return Err(SsError::InvalidArgument(format!(
                "aspect ratio must lie in (0, 1], got {aspect}"
            )));
        }
        let (center, radius) = match transform {
            Transform::Identity => ((a * a + b * b) / 2.0, (b * b - a * a) / 2.0),
            Transform::Exp => {
                if a == 0.0 {
                    return Err(SsError::Domain("the exp transform needs a > 0 (log of zero)".into()));
                }
                (a.ln() + b.ln(), b.ln() - a.ln())
            }
        };

        let half = count / 2;
        let scale = radius / count as f64;
        let mut nodes = vec![Complex64::new(0.0, 0.0); count];
        let mut weights = vec![Complex64::new(0.0, 0.0); count];
        for j in 0..half {
            let theta = node_angle(j, count);
            let (s, c) = theta.sin_cos();
            let t = Complex64::new(center + radius * c, radius * aspect * s);
            let mut w = Complex64::new(scale * aspect * c, scale * s);
            if transform == Transform::Exp {
                w *= t.exp();
            }
            nodes[j] = t;
            weights[j] = w;
            nodes[j + half] = t.conj();
            weights[j + half] = w.conj();
        }

        Ok(Self {
            center,
            radius,
            aspect,
            transform,
            interval: (a, b),
            nodes,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Complex64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[Complex64] {
        &self.weights
    }

    /// Upper-half nodes and weights (`Im t_j > 0`). Sums over the full rule
    /// applied to real data equal twice the real part of sums over this half.
    pub fn half_rule(&self) -> (&[Complex64], &[Complex64]) {
        let h = self.nodes.len() / 2;
        (&self.nodes[..h], &self.weights[..h])
    }

    /// Shift `g(t_j)` of the resolvent sampled at slot `j`.
    pub fn shift(&self, j: usize) -> Complex64 {
        self.transform.forward_complex(self.nodes[j])
    }

    /// Real-axis extent `[γ - ρ, γ + ρ]` of the ellipse in the `t` variable.
    pub fn real_extent(&self) -> (f64, f64) {
        (self.center - self.radius, self.center + self.radius)
    }

    /// Target interval mapped into the `t` variable: `[g⁻¹(a²), g⁻¹(b²)]`.
    pub fn transformed_interval(&self) -> (f64, f64) {
        let (a, b) = self.interval;
        (self.transform.inverse(a * a), self.transform.inverse(b * b))
    }

    /// `|Σ_j w_j t_j^k|` for `k = 0..=kmax`.
    pub fn moment_condition_check(&self, kmax: usize) -> Result<Vec<f64>> {
        if self.transform != Transform::Identity {
            return Err(SsError::InvalidArgument(
                "moment conditions are defined for the identity transform".into(),
            ));
        }
        let (t, w) = self.half_rule();
        let mut powers: Vec<Complex64> = w.to_vec();
        let mut out = Vec::with_capacity(kmax + 1);
        for _ in 0..=kmax {
            let sum: f64 = powers.iter().map(|p| p.re).sum();
            out.push((2.0 * sum).abs());
            for (p, tj) in powers.iter_mut().zip(t) {
                *p *= tj;
            }
        }
        Ok(out)
    }

    /// `Σ_j w_j / (t_j - γ)`, the discrete Cauchy integral of `1/(t - γ)`;
    /// exactly 1 for the continuous contour.
    pub fn cauchy_sum(&self) -> Complex64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(t, w)| w / (t - self.center))
            .sum()
    }
}

/// `θ_j = 2π/N (j - 1/2)` for the 1-based upper-half index `j = idx + 1`.
pub fn node_angle(idx: usize, count: usize) -> f64 {
    2.0 * PI / count as f64 * (idx as f64 + 0.5)
}
