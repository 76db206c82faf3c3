//! Synthetic test matrices with known spectra, Matrix Market I/O and
//! spectral normalization.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::linalg::QR;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SsError};
use crate::matrix::{CsrMatrix, ProblemMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    /// Uniformly spaced: `σ_i = 0.005 + 0.01 (i − 1)`.
    Model1,
    /// Log-uniform: `σ_i = 10^(−10 + 0.05 (i − 1))`.
    Model2,
}

impl ModelKind {
    pub fn from_index(i: u32) -> Result<Self> {
        match i {
            1 => Ok(ModelKind::Model1),
            2 => Ok(ModelKind::Model2),
            _ => Err(SsError::InvalidArgument(format!("unknown model problem {i}"))),
        }
    }

    pub fn index(self) -> u32 {
        match self {
            ModelKind::Model1 => 1,
            ModelKind::Model2 => 2,
        }
    }

    /// Singular values in construction (ascending) order.
    pub fn spectrum(self, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| match self {
                ModelKind::Model1 => 0.005 + 0.01 * i as f64,
                ModelKind::Model2 => 10f64.powf(-10.0 + 0.05 * i as f64),
            })
            .collect()
    }
}

pub const DEFAULT_MODEL_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub which: ModelKind,
    pub m: usize,
    pub n: usize,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(which: ModelKind, seed: u64) -> Self {
        Self {
            which,
            m: 1000,
            n: 200,
            seed,
        }
    }
}

/// `A = U Σ Vᵀ` together with its exact factors.
#[derive(Debug, Clone)]
pub struct ModelProblem {
    pub spec: ModelSpec,
    pub matrix: ProblemMatrix,
    pub u: DMatrix<f64>,
    /// Ascending, as constructed.
    pub sigma: Vec<f64>,
    pub v: DMatrix<f64>,
}

impl ModelProblem {
    /// Exact singular values inside `[a, b]`.
    pub fn count_in(&self, a: f64, b: f64) -> usize {
        self.sigma.iter().filter(|&&s| s >= a && s <= b).count()
    }
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let data: Vec<f64> = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    DMatrix::from_vec(rows, cols, data)
}

pub fn build_model(spec: ModelSpec) -> Result<ModelProblem> {
    if spec.n == 0 || spec.m < spec.n {
        return Err(SsError::InvalidArgument(format!(
            "model problems need m >= n >= 1, got {}x{}",
            spec.m, spec.n
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let u = QR::new(gaussian(spec.m, spec.n, &mut rng)).q();
    let v = QR::new(gaussian(spec.n, spec.n, &mut rng)).q();
    let sigma = spec.which.spectrum(spec.n);
    let mut us = u.clone();
    for (c, s) in sigma.iter().enumerate() {
        us.column_mut(c).scale_mut(*s);
    }
    let a = us * v.transpose();
    Ok(ModelProblem {
        spec,
        matrix: ProblemMatrix::Dense(a),
        u,
        sigma,
        v,
    })
}

fn parse_err(line: usize, msg: impl Into<String>) -> SsError {
    SsError::Parse { line, msg: msg.into() }
}

/// Reads a real `array` or `coordinate` Matrix Market file. Coordinate files
/// become sparse (duplicates summed); `symmetric` and `skew-symmetric`
/// storage is expanded.
pub fn read_matrix_market(path: &Path) -> Result<ProblemMatrix> {
    let reader = BufReader::new(File::open(path)?);
    parse_matrix_market(reader)
}

pub fn parse_matrix_market<R: BufRead>(reader: R) -> Result<ProblemMatrix> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (hline, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let header = header?;
    let tokens: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(
            hline,
            "expected '%%MatrixMarket matrix <format> <field> <symmetry>'",
        ));
    }
    let format = tokens[2].as_str();
    match tokens[3].as_str() {
        "real" | "integer" | "double" => {}
        other => return Err(SsError::UnsupportedField(other.to_string())),
    }
    let symmetry = tokens[4].clone();
    let mirror = match symmetry.as_str() {
        "general" => None,
        "symmetric" => Some(1.0),
        "skew-symmetric" => Some(-1.0),
        other => return Err(parse_err(hline, format!("unsupported symmetry '{other}'"))),
    };

    let mut body = lines.filter(|(_, l)| match l {
        Ok(s) => {
            let t = s.trim();
            !t.is_empty() && !t.starts_with('%')
        }
        Err(_) => true,
    });
    let (sline, size) = body.next().ok_or_else(|| parse_err(hline + 1, "missing size line"))?;
    let size = size?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| {
            t.parse::<usize>()
                .map_err(|e| parse_err(sline, format!("bad size '{t}': {e}")))
        })
        .collect::<Result<_>>()?;

    let num = |line: usize, t: &str| -> Result<f64> {
        t.parse::<f64>()
            .map_err(|e| parse_err(line, format!("bad value '{t}': {e}")))
    };

    match format {
        "array" => {
            if dims.len() != 2 {
                return Err(parse_err(sline, "array size line needs 'rows cols'"));
            }
            let (m, n) = (dims[0], dims[1]);
            let mut d = DMatrix::zeros(m, n);
            // Column-major; symmetric variants list the lower triangle only.
            let mut slots = (0..n).flat_map(|j| {
                let start = if mirror.is_some() { j } else { 0 };
                (start..m).map(move |i| (i, j))
            });
            for (line, text) in body {
                let text = text?;
                for tok in text.split_whitespace() {
                    let (i, j) = slots
                        .next()
                        .ok_or_else(|| parse_err(line, "more values than the size line declares"))?;
                    let v = num(line, tok)?;
                    d[(i, j)] = v;
                    if let Some(sgn) = mirror {
                        if i != j {
                            d[(j, i)] = sgn * v;
                        }
                    }
                }
            }
            if slots.next().is_some() {
                return Err(parse_err(sline, "fewer values than the size line declares"));
            }
            Ok(ProblemMatrix::Dense(d))
        }
        "coordinate" => {
            if dims.len() != 3 {
                return Err(parse_err(sline, "coordinate size line needs 'rows cols nnz'"));
            }
            let (m, n, nnz) = (dims[0], dims[1], dims[2]);
            let mut entries = Vec::with_capacity(nnz);
            let mut seen = 0usize;
            for (line, text) in body {
                let text = text?;
                let t: Vec<&str> = text.split_whitespace().collect();
                if t.len() != 3 {
                    return Err(parse_err(
                        line,
                        format!("expected 'row col value', got '{}'", text.trim()),
                    ));
                }
                let idx = |s: &str| -> Result<usize> {
                    let k = s
                        .parse::<usize>()
                        .map_err(|e| parse_err(line, format!("bad index '{s}': {e}")))?;
                    if k == 0 {
                        return Err(parse_err(line, "indices are 1-based"));
                    }
                    Ok(k - 1)
                };
                let (i, j, v) = (idx(t[0])?, idx(t[1])?, num(line, t[2])?);
                if i >= m || j >= n {
                    return Err(parse_err(line, format!("entry ({}, {}) out of bounds", i + 1, j + 1)));
                }
                entries.push((i, j, v));
                if let Some(sgn) = mirror {
                    if i != j {
                        entries.push((j, i, sgn * v));
                    }
                }
                seen += 1;
            }
            if seen != nnz {
                return Err(parse_err(sline, format!("declared {nnz} entries, found {seen}")));
            }
            Ok(ProblemMatrix::Sparse(CsrMatrix::from_triplets(m, n, &entries)?))
        }
        other => Err(parse_err(hline, format!("unknown format '{other}'"))),
    }
}

/// Writes dense matrices in `array` format and sparse ones in `coordinate`
/// format, 17 significant digits.
pub fn write_matrix_market(path: &Path, a: &ProblemMatrix) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_matrix_market_to(&mut out, a)?;
    out.flush()?;
    Ok(())
}

pub fn write_matrix_market_to<W: Write>(out: &mut W, a: &ProblemMatrix) -> Result<()> {
    match a {
        ProblemMatrix::Dense(d) => {
            writeln!(out, "%%MatrixMarket matrix array real general")?;
            writeln!(out, "{} {}", d.nrows(), d.ncols())?;
            for j in 0..d.ncols() {
                for i in 0..d.nrows() {
                    writeln!(out, "{:.16e}", d[(i, j)])?;
                }
            }
        }
        ProblemMatrix::Sparse(s) => {
            writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
            writeln!(out, "{} {} {}", s.nrows(), s.ncols(), s.nnz())?;
            for i in 0..s.nrows() {
                let (cols, vals) = s.row(i);
                for (&j, &v) in cols.iter().zip(vals) {
                    writeln!(out, "{} {} {:.16e}", i + 1, j + 1, v)?;
                }
            }
        }
    }
    Ok(())
}

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 100_000;

/// Power iteration on `AᵀA` for `σ_max`.
pub fn estimate_sigma_max(a: &ProblemMatrix) -> Result<f64> {
    let n = a.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e37_79b9);
    let mut x = gaussian(n, 1, &mut rng);
    x /= x.norm();
    let mut lambda = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let y = a.tr_mul(&a.mul(&x)?)?;
        let next = x.dot(&y);
        let ny = y.norm();
        if ny == 0.0 {
            return Err(SsError::Degenerate("matrix is zero".into()));
        }
        x = y / ny;
        if (next - lambda).abs() <= POWER_TOL * next {
            return Ok(next.sqrt());
        }
        lambda = next;
    }
    Ok(lambda.sqrt())
}

/// `A / σ_max(A)` and the scale used.
pub fn normalize_spectrum(a: &ProblemMatrix) -> Result<(ProblemMatrix, f64)> {
    let s = estimate_sigma_max(a)?;
    Ok((a.scaled(1.0 / s), s))
}
