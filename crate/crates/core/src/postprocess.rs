//! Residual norms (exact and moment-based estimates) and spurious detection.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::contour::Transform;
use crate::error::{Result, SsError};
use crate::extract::TripletSet;
use crate::matrix::ProblemMatrix;
use crate::moments::{MomentBlocks, ReducedBasis};

/// Estimates for `σ̂` at or below this are reported as `+∞`.
pub const SIGMA_GUARD: f64 = 1e-30;
/// Default relative spurious threshold.
pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualReport {
    pub exact: Option<Vec<f64>>,
    pub estimated: Vec<f64>,
    /// Uncalibrated `‖r̃_i‖`; equal to `estimated` for the identity transform.
    pub raw: Vec<f64>,
    pub calibration_index: Option<usize>,
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpuriousVerdict {
    pub tau: Vec<f64>,
    pub epsilon: f64,
    /// `ε · max Σ_S1`.
    pub threshold: f64,
    pub spurious: Vec<bool>,
}

/// `‖Aᵀû_i − σ̂_i v̂_i‖₂`.
pub fn exact_residual(a: &ProblemMatrix, triplets: &TripletSet) -> Result<Vec<f64>> {
    let atu = a.tr_mul(&triplets.left)?;
    Ok((0..triplets.len())
        .map(|i| (atu.column(i) - triplets.right.column(i) * triplets.sigma[i]).norm())
        .collect())
}

/// `‖A v̂_i − σ̂_i û_i‖₂`, zero up to rounding for Galerkin-extracted triplets.
pub fn galerkin_defect(a: &ProblemMatrix, triplets: &TripletSet) -> Result<Vec<f64>> {
    let av = a.mul(&triplets.right)?;
    Ok((0..triplets.len())
        .map(|i| (av.column(i) - triplets.left.column(i) * triplets.sigma[i]).norm())
        .collect())
}

/// `(1/σ̂_i) ‖Ŝ₊ W_S1 Σ_S1⁻¹ q_i − h(σ̂_i²) U_S1 q_i‖₂` with `h = g⁻¹`.
fn moment_residuals(
    blocks: &MomentBlocks,
    basis: &ReducedBasis,
    triplets: &TripletSet,
    transform: Transform,
) -> Vec<f64> {
    let scaled_w = {
        let mut w = basis.w.clone();
        for (c, s) in basis.sigma.iter().enumerate() {
            w.column_mut(c).scale_mut(1.0 / s);
        }
        w
    };
    let lifted: DMatrix<f64> = blocks.stacked_plus() * scaled_w;
    let y = &lifted * &triplets.coeffs;
    let v = &basis.u * &triplets.coeffs;
    (0..triplets.len())
        .map(|i| {
            let s = triplets.sigma[i];
            if s <= SIGMA_GUARD {
                return f64::INFINITY;
            }
            let h = transform.inverse(s * s);
            (y.column(i) - v.column(i) * h).norm() / s
        })
        .collect()
}

/// Residual estimate for identity-transform moments. Never touches `A`.
pub fn estimate_residual_linear(blocks: &MomentBlocks, basis: &ReducedBasis, triplets: &TripletSet) -> Vec<f64> {
    moment_residuals(blocks, basis, triplets, Transform::Identity)
}

/// Picks the calibration index: the non-spurious triplet with largest `τ`,
/// preferring in-interval ones, whose raw estimate is finite and positive.
pub fn calibration_index(triplets: &TripletSet, verdict: &SpuriousVerdict, raw: &[f64]) -> Option<usize> {
    let usable = |i: &usize| !verdict.spurious[*i] && raw[*i].is_finite() && raw[*i] > 0.0;
    let best = |pred: &dyn Fn(&usize) -> bool| {
        (0..triplets.len())
            .filter(|i| usable(i) && pred(i))
            .max_by(|&i, &j| verdict.tau[i].total_cmp(&verdict.tau[j]))
    };
    best(&|i| triplets.in_interval[*i]).or_else(|| best(&|_| true))
}

/// Moment-based estimate for transformed moments, calibrated with a single
/// exact residual: `‖r_i‖ ≈ μ ‖r̃_i‖`, `μ = ‖r_i'‖ / ‖r̃_i'‖`.
pub fn estimate_residual_nonlinear(
    blocks: &MomentBlocks,
    basis: &ReducedBasis,
    triplets: &TripletSet,
    transform: Transform,
    a: &ProblemMatrix,
    verdict: &SpuriousVerdict,
) -> Result<ResidualReport> {
    let raw = moment_residuals(blocks, basis, triplets, transform);
    let idx = calibration_index(triplets, verdict, &raw)
        .ok_or_else(|| SsError::Calibration("no non-spurious triplet with a usable estimate".into()))?;
    let single = TripletSet {
        sigma: vec![triplets.sigma[idx]],
        left: triplets.left.columns(idx, 1).into_owned(),
        right: triplets.right.columns(idx, 1).into_owned(),
        coeffs: triplets.coeffs.columns(idx, 1).into_owned(),
        in_interval: vec![true],
        degenerate: vec![false],
    };
    let anchor = exact_residual(a, &single)?[0];
    let mu = anchor / raw[idx];
    let mut estimated: Vec<f64> = raw.iter().map(|r| mu * r).collect();
    estimated[idx] = anchor;
    Ok(ResidualReport {
        exact: None,
        estimated,
        raw,
        calibration_index: Some(idx),
        mu: Some(mu),
    })
}

/// `τ_i = q_iᵀq_i / (q_iᵀ Σ_S1⁻¹ q_i)`; spurious when `τ_i < ε max Σ_S1`.
pub fn detect_spurious(triplets: &TripletSet, sigma_s1: &[f64], epsilon: f64) -> SpuriousVerdict {
    let top = sigma_s1.iter().copied().fold(0.0, f64::max);
    let threshold = epsilon * top;
    let tau: Vec<f64> = (0..triplets.len())
        .map(|i| {
            let q = triplets.coeffs.column(i);
            let num: f64 = q.iter().map(|v| v * v).sum();
            let den: f64 = q.iter().zip(sigma_s1).map(|(v, s)| v * v / s).sum();
            if den > 0.0 {
                num / den
            } else {
                0.0
            }
        })
        .collect();
    let spurious = tau
        .iter()
        .zip(&triplets.degenerate)
        .map(|(&t, &d)| d || t < threshold)
        .collect();
    SpuriousVerdict {
        tau,
        epsilon,
        threshold,
        spurious,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn set_with_coeffs(coeffs: DMatrix<f64>) -> TripletSet {
        let t = coeffs.ncols();
        TripletSet {
            sigma: vec![1.0; t],
            left: DMatrix::zeros(1, t),
            right: DMatrix::zeros(1, t),
            coeffs,
            in_interval: vec![true; t],
            degenerate: vec![false; t],
        }
    }

    #[test]
    fn tau_on_basis_directions() {
        let sigma = [4.0, 2.0, 0.5];
        let set = set_with_coeffs(DMatrix::identity(3, 3));
        let v = detect_spurious(&set, &sigma, 0.2);
        assert!((v.tau[0] - 4.0).abs() < 1e-15);
        assert!((v.tau[2] - 0.5).abs() < 1e-15);
        assert_eq!(v.spurious, vec![false, false, true]);
    }

    #[test]
    fn tau_bounded_by_sigma_range() {
        let sigma = [3.0, 1.0, 0.01];
        let q = crate::testutil::random_matrix(3, 6, 4);
        let v = detect_spurious(&set_with_coeffs(q), &sigma, 1e-8);
        for t in v.tau {
            assert!((0.01..=3.0).contains(&t));
        }
    }

    #[test]
    fn exact_residual_of_true_triplet() {
        let a = ProblemMatrix::Dense(DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0])));
        let set = TripletSet {
            sigma: vec![2.0],
            left: DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
            right: DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
            coeffs: DMatrix::from_column_slice(1, 1, &[1.0]),
            in_interval: vec![true],
            degenerate: vec![false],
        };
        assert!(exact_residual(&a, &set).unwrap()[0] <= 1e-12 * 2.0);
        assert_eq!(galerkin_defect(&a, &set).unwrap()[0], 0.0);
    }

    #[test]
    fn basis_aligned_linear_estimate() {
        // U_S1 = I, W = I, Σ = diag(2, 1); Ŝ₊ chosen freely.
        let basis = ReducedBasis {
            u: DMatrix::identity(2, 2),
            sigma: vec![2.0, 1.0],
            w: DMatrix::identity(2, 2),
            discarded: vec![],
        };
        let plus = DMatrix::from_row_slice(2, 2, &[3.0, 0.5, -1.0, 2.0]);
        let blocks = MomentBlocks {
            blocks: vec![DMatrix::zeros(2, 2), plus.clone()],
        };
        let mut set = set_with_coeffs(DMatrix::from_column_slice(2, 1, &[1.0, 0.0]));
        set.sigma = vec![1.5];
        let est = estimate_residual_linear(&blocks, &basis, &set)[0];
        let expect = (plus.column(0) / 2.0 - DVector::from_vec(vec![1.0, 0.0]) * 2.25).norm() / 1.5;
        assert!((est - expect).abs() < 1e-15);
    }

    #[test]
    fn guard_on_tiny_sigma() {
        let basis = ReducedBasis {
            u: DMatrix::identity(1, 1),
            sigma: vec![1.0],
            w: DMatrix::identity(1, 1),
            discarded: vec![],
        };
        let blocks = MomentBlocks {
            blocks: vec![DMatrix::zeros(1, 1), DMatrix::identity(1, 1)],
        };
        let mut set = set_with_coeffs(DMatrix::identity(1, 1));
        set.sigma = vec![0.0];
        assert!(estimate_residual_linear(&blocks, &basis, &set)[0].is_infinite());
    }

    #[test]
    fn all_spurious_cannot_calibrate() {
        let set = set_with_coeffs(DMatrix::identity(2, 2));
        let verdict = SpuriousVerdict {
            tau: vec![1.0, 1.0],
            epsilon: 1.0,
            threshold: 2.0,
            spurious: vec![true, true],
        };
        assert!(calibration_index(&set, &verdict, &[1.0, 1.0]).is_none());
    }
}
