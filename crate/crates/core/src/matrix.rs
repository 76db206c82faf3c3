//! The operator `A`, dense or compressed-sparse-row.

use nalgebra::DMatrix;

use crate::error::{Result, SsError};

/// Compressed sparse row storage with sorted, de-duplicated column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from coordinate triplets (0-based). Duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for &(i, j, v) in entries {
            if i >= nrows || j >= ncols {
                return Err(SsError::InvalidArgument(format!(
                    "entry ({i}, {j}) outside a {nrows}x{ncols} matrix"
                )));
            }
            sorted.push((i, j, v));
        }
        sorted.sort_by_key(|&(i, j, _)| (i, j));

        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in sorted {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            indices.push(j);
            values.push(v);
            indptr[i + 1] += 1;
            last = Some((i, j));
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        Ok(Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[r.clone()], &self.values[r])
    }

    pub fn transpose(&self) -> Self {
        let mut entries = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                entries.push((j, i, v));
            }
        }
        // Entries are in range and unique, so this cannot fail.
        Self::from_triplets(self.ncols, self.nrows, &entries).expect("transpose of valid CSR")
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                d[(i, j)] = v;
            }
        }
        d
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemMatrix {
    Dense(DMatrix<f64>),
    Sparse(CsrMatrix),
}

impl From<DMatrix<f64>> for ProblemMatrix {
    fn from(m: DMatrix<f64>) -> Self {
        ProblemMatrix::Dense(m)
    }
}

impl From<CsrMatrix> for ProblemMatrix {
    fn from(m: CsrMatrix) -> Self {
        ProblemMatrix::Sparse(m)
    }
}

impl ProblemMatrix {
    pub fn nrows(&self) -> usize {
        match self {
            ProblemMatrix::Dense(d) => d.nrows(),
            ProblemMatrix::Sparse(s) => s.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            ProblemMatrix::Dense(d) => d.ncols(),
            ProblemMatrix::Sparse(s) => s.ncols(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = match self {
            ProblemMatrix::Dense(d) => d.iter().all(|v| v.is_finite()),
            ProblemMatrix::Sparse(s) => s.values().iter().all(|v| v.is_finite()),
        };
        if !finite {
            return Err(SsError::InvalidArgument("matrix has NaN or Inf entries".into()));
        }
        if self.nrows() == 0 || self.ncols() == 0 {
            return Err(SsError::InvalidArgument("matrix is empty".into()));
        }
        Ok(())
    }

    pub fn transpose(&self) -> Self {
        match self {
            ProblemMatrix::Dense(d) => ProblemMatrix::Dense(d.transpose()),
            ProblemMatrix::Sparse(s) => ProblemMatrix::Sparse(s.transpose()),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            ProblemMatrix::Dense(d) => d.clone(),
            ProblemMatrix::Sparse(s) => s.to_dense(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        match self {
            ProblemMatrix::Dense(d) => ProblemMatrix::Dense(d * c),
            ProblemMatrix::Sparse(s) => {
                let mut s = s.clone();
                s.values.iter_mut().for_each(|v| *v *= c);
                ProblemMatrix::Sparse(s)
            }
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        match self {
            ProblemMatrix::Dense(d) => d.norm(),
            ProblemMatrix::Sparse(s) => s.values.iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }

    /// `A X`.
    pub fn mul(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_rows_of_rhs(self.ncols(), x)?;
        Ok(match self {
            ProblemMatrix::Dense(d) => d * x,
            ProblemMatrix::Sparse(s) => {
                let mut y = DMatrix::zeros(s.nrows, x.ncols());
                for c in 0..x.ncols() {
                    let xc = x.column(c);
                    for i in 0..s.nrows {
                        let (cols, vals) = s.row(i);
                        y[(i, c)] = cols.iter().zip(vals).map(|(&j, &v)| v * xc[j]).sum();
                    }
                }
                y
            }
        })
    }

    /// `Aᵀ X`.
    pub fn tr_mul(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_rows_of_rhs(self.nrows(), x)?;
        Ok(match self {
            ProblemMatrix::Dense(d) => d.tr_mul(x),
            ProblemMatrix::Sparse(s) => {
                let mut y = DMatrix::zeros(s.ncols, x.ncols());
                for c in 0..x.ncols() {
                    for i in 0..s.nrows {
                        let xi = x[(i, c)];
                        if xi == 0.0 {
                            continue;
                        }
                        let (cols, vals) = s.row(i);
                        for (&j, &v) in cols.iter().zip(vals) {
                            y[(j, c)] += v * xi;
                        }
                    }
                }
                y
            }
        })
    }

    fn check_rows_of_rhs(&self, expected: usize, x: &DMatrix<f64>) -> Result<()> {
        if x.nrows() != expected {
            return Err(SsError::DimensionMismatch {
                expected: format!("{expected} rows"),
                found: format!("{} rows", x.nrows()),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csr_sums_duplicates_and_matches_dense_products() {
        let s = CsrMatrix::from_triplets(3, 2, &[(0, 0, 0.5), (2, 1, 3.0), (0, 0, 0.5), (1, 1, -2.0)]).unwrap();
        assert_eq!(s.nnz(), 3);
        let d = s.to_dense();
        assert_eq!(d[(0, 0)], 1.0);
        let a = ProblemMatrix::Sparse(s);
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(a.mul(&x).unwrap(), &d * &x);
        let y = DMatrix::from_row_slice(3, 1, &[1.0, -1.0, 2.0]);
        assert_eq!(a.tr_mul(&y).unwrap(), d.tr_mul(&y));
        assert_eq!(a.transpose().to_dense(), d.transpose());
    }

    #[test]
    fn rejects_non_finite() {
        let a = ProblemMatrix::Dense(DMatrix::from_element(2, 2, f64::NAN));
        assert!(a.validate().is_err());
    }

    #[test]
    fn product_dimension_mismatch() {
        let a = ProblemMatrix::Dense(DMatrix::zeros(3, 2));
        assert!(matches!(
            a.mul(&DMatrix::zeros(3, 1)),
            Err(SsError::DimensionMismatch { .. })
        ));
    }
}
