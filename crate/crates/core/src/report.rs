//! Serializable run reports, the triplet table and accuracy against known
//! singular values.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::matrix::ProblemMatrix;
use crate::moments::SsParams;
use crate::pipeline::{Solution, Timings};
use crate::postprocess::{exact_residual, galerkin_defect};

pub const SCHEMA_VERSION: u32 = 1;

/// Non-spurious candidates this close (relatively) to an endpoint but outside
/// the interval are listed as boundary cases.
pub const BOUNDARY_REL_TOL: f64 = 1e-10;

/// JSON has no NaN or infinity and serde_json writes them as `null`; this
/// reads `null` back as NaN.
pub fn float_or_null<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TripletRow {
    pub sigma: f64,
    pub in_interval: bool,
    pub spurious: bool,
    #[serde(deserialize_with = "float_or_null")]
    pub tau: f64,
    pub residual_exact: Option<f64>,
    #[serde(deserialize_with = "float_or_null")]
    pub residual_estimated: f64,
    #[serde(deserialize_with = "float_or_null")]
    pub residual_raw: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Accuracy {
    /// Exact singular values in the closed interval.
    pub truth_in_interval: usize,
    /// Accepted (in-interval, non-spurious) triplets.
    pub reported: usize,
    /// Over accepted triplets, each against its nearest exact value.
    #[serde(deserialize_with = "float_or_null")]
    pub max_rel_error: f64,
    #[serde(deserialize_with = "float_or_null")]
    pub median_rel_error: f64,
    #[serde(deserialize_with = "float_or_null")]
    pub max_residual: f64,
    /// Over exact values in the interval, each against its nearest candidate.
    #[serde(deserialize_with = "float_or_null")]
    pub per_target_max_rel_error: f64,
    #[serde(deserialize_with = "float_or_null")]
    pub per_target_median_rel_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub input: String,
    pub mode: String,
    pub transform: String,
    pub interval: [f64; 2],
    pub m: usize,
    pub n: usize,
    pub params: SsParams,
    pub aspect: f64,
    pub transposed: bool,
    pub retained_rank: usize,
    pub rank_deficient: bool,
    pub candidates: usize,
    pub found: usize,
    pub boundary: Vec<f64>,
    #[serde(deserialize_with = "float_or_null")]
    pub spurious_threshold: f64,
    pub calibration_index: Option<usize>,
    pub mu: Option<f64>,
    /// `max_i ‖A v̂_i − σ̂_i û_i‖₂`, reported once.
    #[serde(deserialize_with = "float_or_null")]
    pub galerkin_defect_max: f64,
    pub timings: Timings,
    pub accuracy: Option<Accuracy>,
    pub triplets: Vec<TripletRow>,
    pub notes: Vec<String>,
}

fn nearest_rel(x: f64, pool: impl Iterator<Item = f64>) -> f64 {
    pool.map(|p| (x - p).abs() / x.abs().max(p.abs()).max(f64::MIN_POSITIVE))
        .fold(f64::INFINITY, f64::min)
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len();
    if k % 2 == 1 {
        s[k / 2]
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2])
    }
}

/// `|σ̂ − σ*| / σ*` for each accepted triplet against its nearest exact value.
pub fn reported_rel_errors(sol: &Solution, truth: &[f64]) -> Vec<f64> {
    sol.accepted()
        .into_iter()
        .map(|i| {
            let s = sol.triplets.sigma[i];
            truth.iter().map(|&t| (s - t).abs() / t).fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// For each exact `σ*` in the closed interval, `|σ̂ − σ*| / σ*` with `σ̂` the
/// nearest non-degenerate candidate.
pub fn per_target_rel_errors(sol: &Solution, truth: &[f64]) -> Vec<f64> {
    let (a, b) = sol.config.interval;
    let cands: Vec<f64> = (0..sol.triplets.len())
        .filter(|&i| !sol.triplets.degenerate[i])
        .map(|i| sol.triplets.sigma[i])
        .collect();
    truth
        .iter()
        .filter(|&&t| t >= a && t <= b)
        .map(|&t| cands.iter().map(|&s| (s - t).abs() / t).fold(f64::INFINITY, f64::min))
        .collect()
}

pub fn accuracy(sol: &Solution, truth: &[f64]) -> Accuracy {
    let (a, b) = sol.config.interval;
    let rep = reported_rel_errors(sol, truth);
    let tgt = per_target_rel_errors(sol, truth);
    let exact = sol.residuals.exact.as_deref().unwrap_or(&[]);
    let max_residual = sol
        .accepted()
        .into_iter()
        .filter_map(|i| exact.get(i).copied())
        .fold(0.0, f64::max);
    Accuracy {
        truth_in_interval: truth.iter().filter(|&&t| t >= a && t <= b).count(),
        reported: rep.len(),
        max_rel_error: rep.iter().copied().fold(0.0, f64::max),
        median_rel_error: median(&rep),
        max_residual,
        per_target_max_rel_error: tgt.iter().copied().fold(0.0, f64::max),
        per_target_median_rel_error: median(&tgt),
    }
}

/// Non-spurious candidates just outside `[a, b]`.
pub fn boundary_candidates(sol: &Solution) -> Vec<f64> {
    let (a, b) = sol.config.interval;
    (0..sol.triplets.len())
        .filter(|&i| !sol.triplets.in_interval[i] && !sol.verdict.spurious[i])
        .map(|i| sol.triplets.sigma[i])
        .filter(|&s| nearest_rel(s, [a, b].into_iter().filter(|&e| e > 0.0)) <= BOUNDARY_REL_TOL)
        .collect()
}

impl RunReport {
    /// `a` must be the matrix the solution was computed for.
    pub fn build(input: &str, a: &ProblemMatrix, sol: &Solution, truth: Option<&[f64]>) -> Result<Self> {
        // On wide input the Galerkin identity holds for Aᵀ, i.e. Aᵀû = σ̂v̂.
        let defect = if sol.transposed {
            exact_residual(a, &sol.triplets)?
        } else {
            galerkin_defect(a, &sol.triplets)?
        };
        let t = &sol.triplets;
        let exact = sol.residuals.exact.as_ref();
        let triplets = (0..t.len())
            .map(|i| TripletRow {
                sigma: t.sigma[i],
                in_interval: t.in_interval[i],
                spurious: sol.verdict.spurious[i],
                tau: sol.verdict.tau[i],
                residual_exact: exact.map(|e| e[i]),
                residual_estimated: sol.residuals.estimated[i],
                residual_raw: sol.residuals.raw[i],
            })
            .collect();
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            input: input.to_string(),
            mode: sol.config.mode.name().to_string(),
            transform: sol.rule.transform.name().to_string(),
            interval: [sol.config.interval.0, sol.config.interval.1],
            m: a.nrows(),
            n: a.ncols(),
            params: sol.config.params,
            aspect: sol.config.aspect,
            transposed: sol.transposed,
            retained_rank: sol.basis.as_ref().map_or(0, |b| b.rank()),
            rank_deficient: sol.rank_deficient,
            candidates: t.len(),
            found: sol.accepted().len(),
            boundary: boundary_candidates(sol),
            spurious_threshold: sol.verdict.threshold,
            calibration_index: sol.residuals.calibration_index,
            mu: sol.residuals.mu,
            galerkin_defect_max: defect.into_iter().fold(0.0, f64::max),
            timings: sol.timings,
            accuracy: truth.map(|tr| accuracy(sol, tr)),
            triplets,
            notes: sol.notes.clone(),
        })
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self).map_err(std::io::Error::other)?;
        Ok(())
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.16e}"))
}

/// One row per candidate, ascending in `σ̂`.
pub fn write_triplets_csv<W: Write>(report: &RunReport, mut out: W) -> Result<()> {
    writeln!(
        out,
        "index,sigma,in_interval,spurious,tau,residual_exact,residual_estimated"
    )?;
    for (i, r) in report.triplets.iter().enumerate() {
        writeln!(
            out,
            "{},{:.16e},{},{},{:.16e},{},{:.16e}",
            i,
            r.sigma,
            r.in_interval,
            r.spurious,
            r.tau,
            opt(r.residual_exact),
            r.residual_estimated
        )?;
    }
    Ok(())
}
