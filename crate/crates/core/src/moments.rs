//! Complex-moment blocks `Ŝ_k = 2 Σ_{j≤N/2} Re(w_j t_j^k (g(t_j) I - G)⁻¹ Ŝ₀)`
//! and the thresholded basis extracted from them.

use nalgebra::{DMatrix, SVD};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contour::ContourRule;
use crate::error::{Result, SsError};
use crate::shifted_solver::{ShiftedFactorization, ShiftedSolver};

/// Cached factorizations are dropped above this many bytes.
const FACTOR_CACHE_BYTES: usize = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsParams {
    /// Block size `L`.
    pub block_size: usize,
    /// Moment degree `M`.
    pub moments: usize,
    /// Quadrature count `N`.
    pub nodes: usize,
    /// Refinement iterations `ℓ`.
    pub iterations: usize,
    /// Relative low-rank threshold `δ`.
    pub delta: f64,
    /// Relative spurious threshold `ε`.
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for SsParams {
    fn default() -> Self {
        Self {
            block_size: 20,
            moments: 4,
            nodes: 32,
            iterations: 1,
            delta: 1e-20,
            epsilon: 1e-8,
            seed: 0x5eed,
        }
    }
}

impl SsParams {
    pub fn subspace_dim(&self) -> usize {
        self.block_size * self.moments
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |msg: String| Err(SsError::InvalidArgument(msg));
        if self.block_size == 0 || self.moments == 0 || self.iterations == 0 {
            return bad("L, M and ell must be positive".into());
        }
        if self.nodes < 4 || !self.nodes.is_multiple_of(2) {
            return bad(format!("N must be even and >= 4, got {}", self.nodes));
        }
        if self.subspace_dim() > n {
            return bad(format!(
                "L*M = {} exceeds the column dimension n = {n}",
                self.subspace_dim()
            ));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad(format!("eps must be a nonnegative number, got {}", self.epsilon));
        }
        Ok(())
    }
}

/// Seeded starting block with i.i.d. uniform(-1, 1) entries.
pub fn random_start(n: usize, block_size: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..n * block_size).map(|_| rng.gen_range(-1.0..1.0)).collect();
    DMatrix::from_vec(n, block_size, data)
}

#[derive(Debug, Clone)]
pub struct MomentBlocks {
    /// `Ŝ_0 ..= Ŝ_M`; the last block only feeds residual estimation.
    pub blocks: Vec<DMatrix<f64>>,
}

impl MomentBlocks {
    pub fn degree(&self) -> usize {
        self.blocks.len() - 1
    }

    fn hstack(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
        let n = blocks[0].nrows();
        let l = blocks[0].ncols();
        let mut out = DMatrix::zeros(n, l * blocks.len());
        for (k, b) in blocks.iter().enumerate() {
            out.columns_mut(k * l, l).copy_from(b);
        }
        out
    }

    /// `Ŝ = [Ŝ_0, …, Ŝ_{M-1}]`.
    pub fn stacked(&self) -> DMatrix<f64> {
        Self::hstack(&self.blocks[..self.degree()])
    }

    /// `Ŝ₊ = [Ŝ_1, …, Ŝ_M]`.
    pub fn stacked_plus(&self) -> DMatrix<f64> {
        Self::hstack(&self.blocks[1..])
    }
}

/// Samples the resolvent at the upper-half quadrature shifts, optionally
/// holding on to the factorizations so refinement sweeps reuse them.
pub struct ResolventSampler<'a, S: ShiftedSolver> {
    solver: &'a S,
    rule: &'a ContourRule,
    factors: Option<Vec<S::Factor>>,
}

impl<'a, S: ShiftedSolver> ResolventSampler<'a, S> {
    /// Without caching, every [`Self::solve_all`] refactors each shift.
    pub fn new(solver: &'a S, rule: &'a ContourRule, cache: bool) -> Result<Self> {
        let (nodes, _) = rule.half_rule();
        let n = solver.dim();
        let bytes = nodes.len() * n * n * std::mem::size_of::<Complex64>();
        let factors = if cache && bytes <= FACTOR_CACHE_BYTES {
            let f = (0..nodes.len())
                .into_par_iter()
                .map(|j| solver.factor(rule.shift(j)))
                .collect::<Result<Vec<_>>>()?;
            Some(f)
        } else {
            None
        };
        Ok(Self { solver, rule, factors })
    }

    pub fn is_cached(&self) -> bool {
        self.factors.is_some()
    }

    /// `(g(t_j) I - G)⁻¹ rhs` for each upper-half node, in node order.
    pub fn solve_all(&self, rhs: &DMatrix<f64>) -> Result<Vec<DMatrix<Complex64>>> {
        if rhs.nrows() != self.solver.dim() {
            return Err(SsError::DimensionMismatch {
                expected: format!("{} rows", self.solver.dim()),
                found: format!("{} rows", rhs.nrows()),
            });
        }
        let h = self.rule.len() / 2;
        match &self.factors {
            Some(f) => f.par_iter().map(|f| f.solve_real_block(rhs)).collect(),
            None => (0..h)
                .into_par_iter()
                .map(|j| self.solver.factor(self.rule.shift(j))?.solve_real_block(rhs))
                .collect(),
        }
    }

    /// One filter application: `2 Σ Re(w_j X_j)`.
    pub fn refine(&self, s0: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let solves = self.solve_all(s0)?;
        let (_, w) = self.rule.half_rule();
        Ok(accumulate(&solves, w, s0.nrows(), s0.ncols()))
    }

    /// Blocks `k = 0..=M` from one pass over the shifts.
    pub fn moments(&self, s0: &DMatrix<f64>, degree: usize) -> Result<MomentBlocks> {
        if degree == 0 {
            return Err(SsError::InvalidArgument("moment degree M must be positive".into()));
        }
        let solves = self.solve_all(s0)?;
        let (t, w) = self.rule.half_rule();
        let mut coeff: Vec<Complex64> = w.to_vec();
        let mut blocks = Vec::with_capacity(degree + 1);
        for _ in 0..=degree {
            blocks.push(accumulate(&solves, &coeff, s0.nrows(), s0.ncols()));
            for (c, tj) in coeff.iter_mut().zip(t) {
                *c *= tj;
            }
        }
        Ok(MomentBlocks { blocks })
    }
}

/// `2 Σ_j Re(c_j X_j)`, summed in ascending `j`.
fn accumulate(solves: &[DMatrix<Complex64>], coeff: &[Complex64], n: usize, l: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(n, l);
    for (x, c) in solves.iter().zip(coeff) {
        out.zip_apply(x, |o, v| *o += 2.0 * (c.re * v.re - c.im * v.im));
    }
    out
}

/// `2 Σ_{j≤N/2} Re(w_j (g(t_j) I - G)⁻¹ S0)`.
pub fn refine_s0<S: ShiftedSolver>(solver: &S, rule: &ContourRule, s0: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ResolventSampler::new(solver, rule, false)?.refine(s0)
}

pub fn build_moments<S: ShiftedSolver>(
    solver: &S,
    rule: &ContourRule,
    s0: &DMatrix<f64>,
    degree: usize,
) -> Result<MomentBlocks> {
    ResolventSampler::new(solver, rule, false)?.moments(s0, degree)
}

#[derive(Debug, Clone)]
pub struct ReducedBasis {
    /// `U_S1`, orthonormal columns spanning the search space.
    pub u: DMatrix<f64>,
    /// `Σ_S1`, nonincreasing.
    pub sigma: Vec<f64>,
    /// `W_S1`.
    pub w: DMatrix<f64>,
    /// Singular values below the threshold.
    pub discarded: Vec<f64>,
}

impl ReducedBasis {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }
}

/// Keeps the singular triplets of `Ŝ` with `σ ≥ δ σ_max`.
pub fn low_rank(s: &DMatrix<f64>, delta: f64) -> Result<ReducedBasis> {
    if s.iter().any(|v| !v.is_finite()) {
        return Err(SsError::Degenerate("moment matrix has non-finite entries".into()));
    }
    let svd = SVD::new(s.clone(), true, true);
    let u_all = svd.u.expect("requested U");
    let vt_all = svd.v_t.expect("requested Vᵀ");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));

    let top = order.first().map(|&i| svd.singular_values[i]).unwrap_or(0.0);
    if !(top > 0.0) {
        return Err(SsError::Degenerate(
            "moment matrix is zero; the filter annihilated the starting block".into(),
        ));
    }
    let cut = delta * top;
    let keep: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| svd.singular_values[i] >= cut)
        .collect();
    let discarded = order
        .iter()
        .filter(|&&i| svd.singular_values[i] < cut)
        .map(|&i| svd.singular_values[i])
        .collect();

    let r = keep.len();
    let mut u = DMatrix::zeros(s.nrows(), r);
    let mut w = DMatrix::zeros(s.ncols(), r);
    for (c, &i) in keep.iter().enumerate() {
        u.set_column(c, &u_all.column(i));
        w.set_column(c, &vt_all.row(i).transpose());
    }
    Ok(ReducedBasis {
        u,
        sigma: keep.iter().map(|&i| svd.singular_values[i]).collect(),
        w,
        discarded,
    })
}
