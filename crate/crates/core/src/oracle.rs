//! Ground truth for tests and diagnostics.
//!
//! Everything here is deliberately self-contained: its own Householder QR and
//! a one-sided Jacobi SVD, so checks against the solver path do not share
//! factorization code with it.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::contour::{ContourRule, Transform};
use crate::error::{Result, SsError};
use crate::filter::eval_filter;

pub const DEFAULT_ORACLE_CAP: usize = 2000;
pub const DEFAULT_MAX_SWEEPS: usize = 60;

#[derive(Debug, Clone)]
pub struct OracleSvd {
    /// m × k, k = min(m, n).
    pub u: DMatrix<f64>,
    /// Nonincreasing.
    pub sigma: Vec<f64>,
    /// n × k.
    pub v: DMatrix<f64>,
    pub sweeps: usize,
}

impl OracleSvd {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (c, s) in self.sigma.iter().enumerate() {
            us.column_mut(c).scale_mut(*s);
        }
        us * self.v.transpose()
    }
}

pub fn jacobi_svd(a: &DMatrix<f64>) -> Result<OracleSvd> {
    jacobi_svd_with(a, DEFAULT_ORACLE_CAP, DEFAULT_MAX_SWEEPS)
}

pub fn jacobi_svd_with(a: &DMatrix<f64>, cap: usize, max_sweeps: usize) -> Result<OracleSvd> {
    let (m, n) = a.shape();
    if m.min(n) > cap {
        return Err(SsError::InvalidArgument(format!(
            "oracle SVD capped at order {cap}, matrix is {m}x{n}"
        )));
    }
    if m < n {
        let t = jacobi_svd_with(&a.transpose(), cap, max_sweeps)?;
        return Ok(OracleSvd {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
            sweeps: t.sweeps,
        });
    }
    if m == n {
        let cols = columns_of(a);
        let (w, v, sigma, sweeps) = hestenes(cols, max_sweeps)?;
        return Ok(assemble(w, v, sigma, m, sweeps));
    }
    // Tall: A = Q R, Jacobi on R, U = Q [U_R; 0].
    let hh = Householder::factor(a);
    let r = hh.r();
    let (w, v, sigma, sweeps) = hestenes(columns_of(&r), max_sweeps)?;
    let small = assemble(w, v, sigma, n, sweeps);
    let mut padded = DMatrix::zeros(m, n);
    padded.rows_mut(0, n).copy_from(&small.u);
    Ok(OracleSvd {
        u: hh.apply_q(padded),
        sigma: small.sigma,
        v: small.v,
        sweeps: small.sweeps,
    })
}

fn columns_of(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..a.ncols()).map(|j| a.column(j).iter().copied().collect()).collect()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

type Hestenes = (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>, usize);

/// One-sided Jacobi on the columns of `w`; returns rotated columns, the
/// accumulated right factor (as columns) and column norms.
fn hestenes(mut w: Vec<Vec<f64>>, max_sweeps: usize) -> Result<Hestenes> {
    let n = w.len();
    let rows = w.first().map_or(0, Vec::len);
    let tol = ((rows.max(1) as f64).sqrt() * f64::EPSILON).min(1e-14);
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    let mut sweeps = 0;
    loop {
        if sweeps >= max_sweeps {
            return Err(SsError::NonConvergence("one-sided Jacobi SVD", max_sweeps));
        }
        sweeps += 1;
        let mut norms: Vec<f64> = w.iter().map(|c| dot(c, c)).collect();
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma = dot(&w[p], &w[q]);
                if gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
                norms[p] = alpha - t * gamma;
                norms[q] = beta + t * gamma;
            }
        }
        if !rotated {
            break;
        }
    }
    let sigma = w.iter().map(|c| dot(c, c).sqrt()).collect();
    Ok((w, v, sigma, sweeps))
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let (x, y) = (&mut lo[p], &mut hi[0]);
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let (ap, bq) = (*a, *b);
        *a = c * ap - s * bq;
        *b = s * ap + c * bq;
    }
}

fn assemble(w: Vec<Vec<f64>>, v: Vec<Vec<f64>>, sigma: Vec<f64>, rows: usize, sweeps: usize) -> OracleSvd {
    let n = sigma.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]));
    let mut u = DMatrix::zeros(rows, n);
    let mut vm = DMatrix::zeros(v.first().map_or(0, Vec::len), n);
    for (c, &i) in order.iter().enumerate() {
        let s = sigma[i];
        for r in 0..rows {
            u[(r, c)] = if s > 0.0 { w[i][r] / s } else { 0.0 };
        }
        for r in 0..vm.nrows() {
            vm[(r, c)] = v[i][r];
        }
    }
    OracleSvd {
        u,
        sigma: order.iter().map(|&i| sigma[i]).collect(),
        v: vm,
        sweeps,
    }
}

/// Householder QR kept apart from the solver path's QR.
struct Householder {
    /// Reflected matrix; below-diagonal part holds reflector tails.
    work: DMatrix<f64>,
    /// Reflector vectors, stored explicitly.
    vectors: Vec<Vec<f64>>,
}

impl Householder {
    fn factor(a: &DMatrix<f64>) -> Self {
        let (m, n) = a.shape();
        let mut work = a.clone();
        let mut vectors = Vec::with_capacity(n);
        for k in 0..n.min(m) {
            let x: Vec<f64> = (k..m).map(|i| work[(i, k)]).collect();
            let norm = dot(&x, &x).sqrt();
            let mut v = x;
            if norm == 0.0 {
                vectors.push(vec![0.0; m - k]);
                continue;
            }
            let alpha = if v[0] >= 0.0 { -norm } else { norm };
            v[0] -= alpha;
            let vn = dot(&v, &v).sqrt();
            v.iter_mut().for_each(|e| *e /= vn);
            for j in k..n {
                let s: f64 = (k..m).map(|i| v[i - k] * work[(i, j)]).sum();
                for i in k..m {
                    work[(i, j)] -= 2.0 * s * v[i - k];
                }
            }
            vectors.push(v);
        }
        Self { work, vectors }
    }

    fn r(&self) -> DMatrix<f64> {
        let n = self.work.ncols();
        DMatrix::from_fn(n, n, |i, j| if i <= j { self.work[(i, j)] } else { 0.0 })
    }

    /// `Q X` for an m-row `X`.
    fn apply_q(&self, mut x: DMatrix<f64>) -> DMatrix<f64> {
        let m = x.nrows();
        for (k, v) in self.vectors.iter().enumerate().rev() {
            for j in 0..x.ncols() {
                let s: f64 = (k..m).map(|i| v[i - k] * x[(i, j)]).sum();
                for i in k..m {
                    x[(i, j)] -= 2.0 * s * v[i - k];
                }
            }
        }
        x
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundEntry {
    /// Position in decreasing-`|f|` order (0-based).
    pub rank: usize,
    pub sigma: f64,
    pub abs_f: f64,
    pub in_interval: bool,
    pub lhs_v: f64,
    pub lhs_u: f64,
    pub ratio: f64,
    pub alpha: f64,
    pub beta: f64,
    pub bound_v: f64,
    pub bound_u: f64,
    pub holds_v: bool,
    pub holds_u: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub conclusive: bool,
    pub note: Option<String>,
    /// `σ_{LM+1}` in decreasing-`|f|` order.
    pub reference_sigma: f64,
    /// `σ_{LM+1}` in decreasing-`σ` order, for comparison.
    pub reference_sigma_by_value: f64,
    pub ell: usize,
    pub entries: Vec<BoundEntry>,
}

impl BoundReport {
    pub fn holds(&self) -> bool {
        !self.conclusive || self.entries.iter().all(|e| e.holds_v && e.holds_u)
    }
}

/// Inputs of the subspace-error bound check.
pub struct BoundInputs<'a> {
    pub a: &'a DMatrix<f64>,
    pub rule: &'a ContourRule,
    pub block_size: usize,
    pub moments: usize,
    pub ell: usize,
    pub oracle: &'a OracleSvd,
    pub v_in: &'a DMatrix<f64>,
    /// Orthonormal basis of the right search space (`U_S1`).
    pub right_basis: &'a DMatrix<f64>,
    /// Orthonormal basis of the left search space (`Ũ`).
    pub left_basis: &'a DMatrix<f64>,
}

const BOUND_REL_SLACK: f64 = 1e-6;
const BOUND_ABS_SLACK: f64 = 1e-12;
const KRYLOV_RANK_TOL: f64 = 1e-13;

/// Checks `‖(I−P_V)v_i‖ ≤ β_i |f(σ_{LM+1})/f(σ_i)|^ℓ` and the left analogue
/// with the extra `α_i` factor, for the `LM` leading-`|f|` oracle triplets.
pub fn error_bound_report(inp: &BoundInputs<'_>) -> Result<BoundReport> {
    let n = inp.a.ncols();
    let lm = inp.block_size * inp.moments;
    if lm >= n {
        return Err(SsError::InvalidArgument(format!("LM = {lm} must be < n = {n}")));
    }
    let sig = &inp.oracle.sigma;
    let fabs: Vec<f64> = sig.iter().map(|&s| eval_filter(inp.rule, s).norm()).collect();
    let mut order: Vec<usize> = (0..sig.len()).collect();
    order.sort_by(|&i, &j| fabs[j].total_cmp(&fabs[i]));
    let lead = &order[..lm];
    let reference = order[lm];
    let reference_sigma = sig[reference];
    let f_ref = fabs[reference];
    let tail_max = order[lm..].iter().map(|&j| sig[j]).fold(0.0, f64::max);

    // K = [V_in, h(G) V_in, …, h(G)^{M-1} V_in].
    let l = inp.block_size;
    let mut k = DMatrix::zeros(n, lm);
    let mut block = inp.v_in.clone();
    for deg in 0..inp.moments {
        k.columns_mut(deg * l, l).copy_from(&block);
        block = match inp.rule.transform {
            Transform::Identity => inp.a.tr_mul(&(inp.a * &block)),
            Transform::Exp => {
                if sig.iter().any(|&s| s <= 0.0) {
                    return Ok(inconclusive(
                        reference_sigma,
                        sig,
                        lm,
                        inp.ell,
                        "zero singular value under log",
                    ));
                }
                let v = &inp.oracle.v;
                let logs = DMatrix::from_diagonal(&sig.iter().map(|s| (s * s).ln()).collect::<Vec<_>>().into());
                v * (logs * v.tr_mul(&block))
            }
        };
    }

    let v_lead = DMatrix::from_fn(n, lm, |r, c| inp.oracle.v[(r, lead[c])]);
    let coords = v_lead.tr_mul(&k);
    let c_svd = jacobi_svd_with(&coords, usize::MAX, DEFAULT_MAX_SWEEPS)?;
    let smax = c_svd.sigma[0];
    let smin = *c_svd.sigma.last().unwrap();
    if !(smin > KRYLOV_RANK_TOL * smax) {
        return Ok(inconclusive(
            reference_sigma,
            sig,
            lm,
            inp.ell,
            "projected Krylov block is rank deficient",
        ));
    }
    // coords⁻¹ through the oracle factors.
    let mut vinv = c_svd.v.clone();
    for (c, s) in c_svd.sigma.iter().enumerate() {
        vinv.column_mut(c).scale_mut(1.0 / s);
    }
    let coeff = vinv * c_svd.u.transpose();
    let s_all = &k * coeff;

    let (pv, pu) = (inp.right_basis, inp.left_basis);
    let (a_int, b_int) = inp.rule.interval;
    let entries = lead
        .iter()
        .enumerate()
        .map(|(rank, &i)| {
            let vi = inp.oracle.v.column(i);
            let ui = inp.oracle.u.column(i);
            let lhs_v = (vi - pv * pv.tr_mul(&vi)).norm();
            let lhs_u = (ui - pu * pu.tr_mul(&ui)).norm();
            let beta = (vi - s_all.column(rank)).norm();
            let ratio = (f_ref / fabs[i]).powi(inp.ell as i32);
            let alpha = tail_max / sig[i];
            let bound_v = beta * ratio;
            let bound_u = alpha * beta * ratio;
            BoundEntry {
                rank,
                sigma: sig[i],
                abs_f: fabs[i],
                in_interval: sig[i] >= a_int && sig[i] <= b_int,
                lhs_v,
                lhs_u,
                ratio,
                alpha,
                beta,
                bound_v,
                bound_u,
                holds_v: lhs_v <= bound_v * (1.0 + BOUND_REL_SLACK) + BOUND_ABS_SLACK,
                holds_u: lhs_u <= bound_u * (1.0 + BOUND_REL_SLACK) + BOUND_ABS_SLACK,
            }
        })
        .collect();

    Ok(BoundReport {
        conclusive: true,
        note: None,
        reference_sigma,
        reference_sigma_by_value: sig[lm],
        ell: inp.ell,
        entries,
    })
}

fn inconclusive(reference_sigma: f64, sig: &[f64], lm: usize, ell: usize, why: &str) -> BoundReport {
    BoundReport {
        conclusive: false,
        note: Some(why.to_string()),
        reference_sigma,
        reference_sigma_by_value: sig[lm],
        ell,
        entries: Vec::new(),
    }
}
