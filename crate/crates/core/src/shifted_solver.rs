//! Complex-shifted Gram systems `(z I - AᵀA) X = B`.
//!
//! [`ShiftedSolver`] is the seam between the quadrature driver and whatever
//! solves the shifted systems. The shipped backend forms `G = AᵀA` once and
//! LU-factors each shift densely.

use nalgebra::{DMatrix, Dyn, LU};
use num_complex::Complex64;

use crate::error::{Result, SsError};
use crate::matrix::ProblemMatrix;

/// Default upper bound on the order of an explicitly formed Gram matrix.
pub const DEFAULT_GRAM_CAP: usize = 8192;

/// Pivots below this fraction of `‖G‖_F` mark the shift as on the spectrum.
const PIVOT_FLOOR: f64 = 1e-30;

/// `G = AᵀA`, symmetrized after the product.
pub fn form_gram(a: &ProblemMatrix, cap: usize) -> Result<DMatrix<f64>> {
    let n = a.ncols();
    if n > cap {
        return Err(SsError::GramTooLarge { n, cap });
    }
    let mut g = match a {
        ProblemMatrix::Dense(d) => d.tr_mul(d),
        ProblemMatrix::Sparse(s) => {
            let mut g = DMatrix::zeros(n, n);
            for i in 0..s.nrows() {
                let (cols, vals) = s.row(i);
                for (&p, &vp) in cols.iter().zip(vals) {
                    for (&q, &vq) in cols.iter().zip(vals) {
                        g[(p, q)] += vp * vq;
                    }
                }
            }
            g
        }
    };
    for j in 0..n {
        for i in 0..j {
            let s = 0.5 * (g[(i, j)] + g[(j, i)]);
            g[(i, j)] = s;
            g[(j, i)] = s;
        }
    }
    Ok(g)
}

/// A factorization of `z I - G` reusable across right-hand sides.
pub trait ShiftedFactorization: Send + Sync {
    fn shift(&self) -> Complex64;

    fn dim(&self) -> usize;

    fn solve_block(&self, rhs: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>>;

    fn solve_real_block(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<Complex64>> {
        self.solve_block(&rhs.map(|v| Complex64::new(v, 0.0)))
    }
}

/// Produces shifted factorizations of a fixed symmetric operator.
pub trait ShiftedSolver: Sync {
    type Factor: ShiftedFactorization;

    fn dim(&self) -> usize;

    fn factor(&self, z: Complex64) -> Result<Self::Factor>;
}

#[derive(Debug, Clone)]
pub struct DenseGramSolver {
    gram: DMatrix<f64>,
    norm: f64,
}

impl DenseGramSolver {
    pub fn new(a: &ProblemMatrix, cap: usize) -> Result<Self> {
        Ok(Self::from_gram(form_gram(a, cap)?))
    }

    pub fn from_gram(gram: DMatrix<f64>) -> Self {
        let norm = gram.norm();
        Self { gram, norm }
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }
}

pub struct DenseShiftFactor {
    shift: Complex64,
    n: usize,
    lu: LU<Complex64, Dyn, Dyn>,
}

impl ShiftedSolver for DenseGramSolver {
    type Factor = DenseShiftFactor;

    fn dim(&self) -> usize {
        self.gram.nrows()
    }

    fn factor(&self, z: Complex64) -> Result<DenseShiftFactor> {
        factor_shift(&self.gram, self.norm, z)
    }
}

/// LU factorization of `z I - G` with partial pivoting.
pub fn factor_shift(gram: &DMatrix<f64>, gram_norm: f64, z: Complex64) -> Result<DenseShiftFactor> {
    let n = gram.nrows();
    let mut m = gram.map(|v| Complex64::new(-v, 0.0));
    for i in 0..n {
        m[(i, i)] += z;
    }
    let lu = LU::new(m);
    let u = lu.u();
    let floor = PIVOT_FLOOR * gram_norm;
    let pivot = (0..n).map(|i| u[(i, i)].norm()).fold(f64::INFINITY, f64::min);
    if !(pivot > floor) {
        return Err(SsError::SingularShift {
            re: z.re,
            im: z.im,
            pivot,
        });
    }
    Ok(DenseShiftFactor { shift: z, n, lu })
}

impl ShiftedFactorization for DenseShiftFactor {
    fn shift(&self) -> Complex64 {
        self.shift
    }

    fn dim(&self) -> usize {
        self.n
    }

    fn solve_block(&self, rhs: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
        let n = self.n;
        if rhs.nrows() != n || rhs.ncols() == 0 {
            return Err(SsError::DimensionMismatch {
                expected: format!("{n} x L (L >= 1)"),
                found: format!("{} x {}", rhs.nrows(), rhs.ncols()),
            });
        }
        let mut x = rhs.clone();
        if !self.lu.solve_mut(&mut x) {
            return Err(SsError::SingularShift {
                re: self.shift.re,
                im: self.shift.im,
                pivot: 0.0,
            });
        }
        Ok(x)
    }
}
