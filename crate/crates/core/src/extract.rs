//! Triplet extraction from the reduced basis: the two-sided Galerkin route
//! (`A U_S1 = Ũ B`, `B = P Φ Qᵀ`) and a Rayleigh–Ritz route on `AᵀA` kept as
//! an accuracy baseline.

use nalgebra::linalg::{SymmetricEigen, QR, SVD};
use nalgebra::DMatrix;

use crate::error::Result;
use crate::matrix::ProblemMatrix;
use crate::moments::ReducedBasis;

/// `|B_ii| ≤ RANK_WARN |B_11|` flags a basis direction in the null space of `A`.
pub const RANK_WARN: f64 = 1e-14;

/// Approximate singular triplets stored column-wise, sorted by ascending `σ̂`.
#[derive(Debug, Clone)]
pub struct TripletSet {
    pub sigma: Vec<f64>,
    /// `û_i` as columns (m × t).
    pub left: DMatrix<f64>,
    /// `v̂_i` as columns (n × t).
    pub right: DMatrix<f64>,
    /// `q_i`, coordinates of `v̂_i` in `U_S1` (r × t).
    pub coeffs: DMatrix<f64>,
    pub in_interval: Vec<bool>,
    /// Set when the extraction itself produced no usable triplet
    /// (nonpositive Ritz value on the eigen route).
    pub degenerate: Vec<bool>,
}

impl TripletSet {
    pub fn empty(m: usize, n: usize, r: usize) -> Self {
        Self {
            sigma: Vec::new(),
            left: DMatrix::zeros(m, 0),
            right: DMatrix::zeros(n, 0),
            coeffs: DMatrix::zeros(r, 0),
            in_interval: Vec::new(),
            degenerate: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    /// Reorders every per-triplet field by `order` (new position -> old index).
    pub fn permute(&mut self, order: &[usize]) {
        let pick = |m: &DMatrix<f64>| {
            let mut out = DMatrix::zeros(m.nrows(), order.len());
            for (c, &i) in order.iter().enumerate() {
                out.set_column(c, &m.column(i));
            }
            out
        };
        self.left = pick(&self.left);
        self.right = pick(&self.right);
        self.coeffs = pick(&self.coeffs);
        self.sigma = order.iter().map(|&i| self.sigma[i]).collect();
        self.in_interval = order.iter().map(|&i| self.in_interval[i]).collect();
        self.degenerate = order.iter().map(|&i| self.degenerate[i]).collect();
    }

    /// Ascending order in `σ̂`, ties broken by `tiebreak` (ascending).
    pub fn ascending_order(&self, tiebreak: Option<&[f64]>) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&i, &j| {
            self.sigma[i].total_cmp(&self.sigma[j]).then_with(|| match tiebreak {
                Some(t) => t[i].total_cmp(&t[j]),
                None => std::cmp::Ordering::Equal,
            })
        });
        order
    }

    /// Swaps left and right vectors (used after solving the transposed problem).
    pub fn swap_sides(&mut self) {
        std::mem::swap(&mut self.left, &mut self.right);
    }
}

#[derive(Debug, Clone)]
pub struct ProjectedBasis {
    /// `Ũ`, m × r with orthonormal columns.
    pub left: DMatrix<f64>,
    /// Upper-triangular `B` with `A U_S1 = Ũ B`.
    pub coupling: DMatrix<f64>,
    pub rank_deficient: bool,
}

pub fn project_qr(a: &ProblemMatrix, basis: &ReducedBasis) -> Result<ProjectedBasis> {
    let au = a.mul(&basis.u)?;
    let qr = QR::new(au);
    let left = qr.q();
    let coupling = qr.r();
    let r = coupling.nrows();
    let head = if r > 0 { coupling[(0, 0)].abs() } else { 0.0 };
    let rank_deficient = (0..r).any(|i| coupling[(i, i)].abs() <= RANK_WARN * head);
    Ok(ProjectedBasis {
        left,
        coupling,
        rank_deficient,
    })
}

#[derive(Debug, Clone)]
pub struct SmallSvd {
    /// `P`, left singular vectors of `B` as columns.
    pub p: DMatrix<f64>,
    /// `Φ`, nonincreasing.
    pub phi: Vec<f64>,
    /// `Q`, right singular vectors as columns, so `B = P diag(Φ) Qᵀ`.
    pub q: DMatrix<f64>,
}

pub fn svd_small(b: &DMatrix<f64>) -> SmallSvd {
    let svd = SVD::new(b.clone(), true, true);
    let u = svd.u.expect("requested U");
    let v = svd.v_t.expect("requested Vᵀ").transpose();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let k = order.len();
    let mut p = DMatrix::zeros(u.nrows(), k);
    let mut q = DMatrix::zeros(v.nrows(), k);
    for (c, &i) in order.iter().enumerate() {
        p.set_column(c, &u.column(i));
        q.set_column(c, &v.column(i));
    }
    SmallSvd {
        p,
        phi: order.iter().map(|&i| svd.singular_values[i]).collect(),
        q,
    }
}

/// `(σ̂_i, û_i, v̂_i) = (φ_i, Ũ p_i, U_S1 q_i)` for every candidate.
pub fn assemble_triplets(
    projected: &ProjectedBasis,
    basis: &ReducedBasis,
    small: &SmallSvd,
    interval: (f64, f64),
) -> TripletSet {
    let left = &projected.left * &small.p;
    let right = &basis.u * &small.q;
    let sigma = small.phi.clone();
    let in_interval = sigma.iter().map(|&s| s >= interval.0 && s <= interval.1).collect();
    let degenerate = vec![false; sigma.len()];
    let mut set = TripletSet {
        sigma,
        left,
        right,
        coeffs: small.q.clone(),
        in_interval,
        degenerate,
    };
    let order = set.ascending_order(None);
    set.permute(&order);
    set
}

/// Rayleigh–Ritz on `G = AᵀA` over `U_S1`: `σ̂ = √θ`, `v̂ = U_S1 y`,
/// `û = A v̂ / σ̂`. Nonpositive Ritz values are marked degenerate.
pub fn naive_eigen_route(
    a: &ProblemMatrix,
    gram: &DMatrix<f64>,
    basis: &ReducedBasis,
    interval: (f64, f64),
) -> Result<TripletSet> {
    let gu = gram * &basis.u;
    let mut h = basis.u.tr_mul(&gu);
    let h_t = h.transpose();
    h = (h + h_t) * 0.5;
    let eig = SymmetricEigen::new(h);
    let right = &basis.u * &eig.eigenvectors;
    let av = a.mul(&right)?;

    let t = eig.eigenvalues.len();
    let mut sigma = Vec::with_capacity(t);
    let mut degenerate = Vec::with_capacity(t);
    let mut left = DMatrix::zeros(a.nrows(), t);
    for (i, &theta) in eig.eigenvalues.iter().enumerate() {
        if theta > 0.0 {
            let s = theta.sqrt();
            left.set_column(i, &(av.column(i) / s));
            sigma.push(s);
            degenerate.push(false);
        } else {
            sigma.push(0.0);
            degenerate.push(true);
        }
    }
    let in_interval = sigma
        .iter()
        .zip(&degenerate)
        .map(|(&s, &d)| !d && s >= interval.0 && s <= interval.1)
        .collect();
    let mut set = TripletSet {
        sigma,
        left,
        right,
        coeffs: eig.eigenvectors,
        in_interval,
        degenerate,
    };
    let order = set.ascending_order(None);
    set.permute(&order);
    Ok(set)
}
