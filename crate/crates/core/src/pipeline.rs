//! End-to-end driver: moments → low-rank basis → extraction → postprocessing.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::contour::{ContourRule, Transform, DEFAULT_ASPECT};
use crate::error::{Result, SsError};
use crate::extract::{assemble_triplets, naive_eigen_route, project_qr, svd_small, TripletSet};
use crate::matrix::ProblemMatrix;
use crate::moments::{low_rank, random_start, MomentBlocks, ReducedBasis, ResolventSampler, SsParams};
use crate::postprocess::{
    detect_spurious, estimate_residual_linear, estimate_residual_nonlinear, exact_residual, ResidualReport,
    SpuriousVerdict,
};
use crate::shifted_solver::{DenseGramSolver, DEFAULT_GRAM_CAP};

/// Environment variable overriding [`RunConfig::threads`].
pub const THREADS_ENV: &str = "SSSVD_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Galerkin extraction, identity transform.
    SsSvd,
    /// Galerkin extraction, exponential transform.
    SsSvdNt,
    /// Rayleigh–Ritz on `AᵀA`, identity transform.
    Naive,
    /// Rayleigh–Ritz on `AᵀA`, exponential transform.
    NaiveNt,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::SsSvd, Mode::SsSvdNt, Mode::Naive, Mode::NaiveNt];

    pub fn transform(self) -> Transform {
        match self {
            Mode::SsSvd | Mode::Naive => Transform::Identity,
            Mode::SsSvdNt | Mode::NaiveNt => Transform::Exp,
        }
    }

    pub fn galerkin(self) -> bool {
        matches!(self, Mode::SsSvd | Mode::SsSvdNt)
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::SsSvd => "ss-svd",
            Mode::SsSvdNt => "ss-svd-nt",
            Mode::Naive => "naive",
            Mode::NaiveNt => "naive-nt",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = SsError;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| SsError::InvalidArgument(format!("unknown mode '{s}'")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub params: SsParams,
    pub interval: (f64, f64),
    pub aspect: f64,
    pub mode: Mode,
    /// Worker threads; `None` uses rayon's default. `SSSVD_THREADS` overrides.
    pub threads: Option<usize>,
    pub gram_cap: usize,
    /// Keep shift factorizations across refinement sweeps.
    pub cache_factors: bool,
}

impl RunConfig {
    pub fn new(interval: (f64, f64), mode: Mode) -> Self {
        Self {
            params: SsParams::default(),
            interval,
            aspect: DEFAULT_ASPECT,
            mode,
            threads: None,
            gram_cap: DEFAULT_GRAM_CAP,
            cache_factors: true,
        }
    }

    pub fn with_params(mut self, params: SsParams) -> Self {
        self.params = params;
        self
    }

    pub fn rule(&self) -> Result<ContourRule> {
        ContourRule::build(
            self.interval.0,
            self.interval.1,
            self.params.nodes,
            self.aspect,
            self.mode.transform(),
        )
    }
}

/// Wall-clock seconds per algorithm step.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Timings {
    /// Gram formation, shifted solves and moment accumulation.
    pub steps_1_2: f64,
    /// Low-rank SVD of `Ŝ`.
    pub step_3: f64,
    /// `A U_S1` and its QR (or the Rayleigh quotient on the naive route).
    pub step_4: f64,
    /// Small SVD and assembly.
    pub step_5: f64,
    pub total: f64,
    /// Residuals and spurious detection; not part of `total`.
    pub postprocess: f64,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub config: RunConfig,
    pub rule: ContourRule,
    /// All candidates, ascending in `σ̂`.
    pub triplets: TripletSet,
    pub basis: Option<ReducedBasis>,
    /// `Ũ` from the QR of `A U_S1` (Galerkin modes only).
    pub left_basis: Option<DMatrix<f64>>,
    pub blocks: Option<MomentBlocks>,
    pub residuals: ResidualReport,
    pub verdict: SpuriousVerdict,
    pub timings: Timings,
    /// The unfiltered starting block.
    pub v_in: DMatrix<f64>,
    /// `A` was wide and the problem was solved on `Aᵀ`.
    pub transposed: bool,
    pub rank_deficient: bool,
    pub notes: Vec<String>,
}

impl Solution {
    /// Indices of in-interval, non-spurious triplets.
    pub fn accepted(&self) -> Vec<usize> {
        (0..self.triplets.len())
            .filter(|&i| self.triplets.in_interval[i] && !self.verdict.spurious[i])
            .collect()
    }

    pub fn accepted_sigma(&self) -> Vec<f64> {
        self.accepted().into_iter().map(|i| self.triplets.sigma[i]).collect()
    }
}

/// `SSSVD_THREADS` wins over an explicit request.
pub(crate) fn resolve_threads(requested: Option<usize>) -> Result<Option<usize>> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        return v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&t| t > 0)
            .map(Some)
            .ok_or_else(|| SsError::InvalidArgument(format!("{THREADS_ENV}='{v}' is not a positive integer")));
    }
    match requested {
        Some(0) => Err(SsError::InvalidArgument("thread count must be positive".into())),
        other => Ok(other),
    }
}

/// Runs `f` inside a pool with the configured thread count.
pub fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match resolve_threads(threads)? {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| SsError::InvalidArgument(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

fn check_interval(a: f64, b: f64, transform: Transform) -> Result<()> {
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(SsError::InvalidArgument(format!(
            "interval must satisfy a < b, got [{a}, {b}]"
        )));
    }
    if a < 0.0 || (transform == Transform::Exp && a <= 0.0) {
        return Err(SsError::Domain(format!(
            "interval lower end {a} is outside the domain of the {} transform",
            transform.name()
        )));
    }
    Ok(())
}

pub fn solve(a: &ProblemMatrix, config: &RunConfig) -> Result<Solution> {
    with_pool(config.threads, || solve_inner(a, config))?
}

fn solve_inner(a_in: &ProblemMatrix, config: &RunConfig) -> Result<Solution> {
    a_in.validate()?;
    let (lo, hi) = config.interval;
    check_interval(lo, hi, config.mode.transform())?;
    let transposed = a_in.nrows() < a_in.ncols();
    let owned;
    let a = if transposed {
        owned = a_in.transpose();
        &owned
    } else {
        a_in
    };
    let (m, n) = (a.nrows(), a.ncols());
    let p = config.params;
    p.validate(n)?;
    let rule = config.rule()?;
    let mut notes = Vec::new();
    if transposed {
        notes.push("A is wide; solved on A^T and swapped the singular vectors".to_string());
    }

    let start = Instant::now();
    let mut timings = Timings::default();

    // Steps 1–2.
    let solver = DenseGramSolver::new(a, config.gram_cap).map_err(SsError::at("gram"))?;
    let sampler = ResolventSampler::new(&solver, &rule, config.cache_factors && p.iterations > 1)
        .map_err(SsError::at("factor"))?;
    let v_in = random_start(n, p.block_size, p.seed);
    let mut s0 = v_in.clone();
    for _ in 1..p.iterations {
        s0 = sampler.refine(&s0).map_err(SsError::at("refine"))?;
    }
    let blocks = sampler.moments(&s0, p.moments).map_err(SsError::at("moments"))?;
    drop(sampler);
    timings.steps_1_2 = start.elapsed().as_secs_f64();

    // Step 3.
    let t3 = Instant::now();
    let basis = match low_rank(&blocks.stacked(), p.delta) {
        Ok(b) => Some(b),
        Err(SsError::Degenerate(msg)) => {
            notes.push(format!("annihilated subspace: {msg}"));
            None
        }
        Err(e) => return Err(SsError::at("low-rank")(e)),
    };
    timings.step_3 = t3.elapsed().as_secs_f64();

    let mut rank_deficient = false;
    let mut left_basis = None;
    let mut triplets = match &basis {
        None => TripletSet::empty(m, n, 0),
        Some(basis) if config.mode.galerkin() => {
            let t4 = Instant::now();
            let projected = project_qr(a, basis).map_err(SsError::at("projection"))?;
            timings.step_4 = t4.elapsed().as_secs_f64();
            rank_deficient = projected.rank_deficient;
            if rank_deficient {
                notes.push("A U_S1 is numerically rank deficient".to_string());
            }
            let t5 = Instant::now();
            let small = svd_small(&projected.coupling);
            let set = assemble_triplets(&projected, basis, &small, config.interval);
            timings.step_5 = t5.elapsed().as_secs_f64();
            left_basis = Some(projected.left);
            set
        }
        Some(basis) => {
            let t4 = Instant::now();
            let set =
                naive_eigen_route(a, solver.gram(), basis, config.interval).map_err(SsError::at("rayleigh-ritz"))?;
            timings.step_4 = t4.elapsed().as_secs_f64();
            set
        }
    };
    timings.total = start.elapsed().as_secs_f64();

    let tp = Instant::now();
    let empty_basis;
    let basis_ref = match &basis {
        Some(b) => b,
        None => {
            empty_basis = ReducedBasis {
                u: DMatrix::zeros(n, 0),
                sigma: Vec::new(),
                w: DMatrix::zeros(blocks.stacked().ncols(), 0),
                discarded: Vec::new(),
            };
            &empty_basis
        }
    };
    let verdict = detect_spurious(&triplets, &basis_ref.sigma, p.epsilon);
    let exact = exact_residual(a, &triplets)?;
    let residuals = if triplets.is_empty() {
        ResidualReport {
            exact: Some(exact),
            estimated: Vec::new(),
            raw: Vec::new(),
            calibration_index: None,
            mu: None,
        }
    } else {
        match rule.transform {
            Transform::Identity => {
                let est = estimate_residual_linear(&blocks, basis_ref, &triplets);
                ResidualReport {
                    exact: Some(exact),
                    raw: est.clone(),
                    estimated: est,
                    calibration_index: None,
                    mu: None,
                }
            }
            Transform::Exp => {
                match estimate_residual_nonlinear(&blocks, basis_ref, &triplets, rule.transform, a, &verdict) {
                    Ok(mut r) => {
                        r.exact = Some(exact);
                        r
                    }
                    Err(SsError::Calibration(msg)) => {
                        notes.push(format!("residual estimate unavailable: {msg}"));
                        ResidualReport {
                            exact: Some(exact),
                            estimated: vec![f64::NAN; triplets.len()],
                            raw: vec![f64::NAN; triplets.len()],
                            calibration_index: None,
                            mu: None,
                        }
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    };
    timings.postprocess = tp.elapsed().as_secs_f64();

    if transposed {
        triplets.swap_sides();
    }
    if !triplets.in_interval.iter().any(|&x| x) {
        notes.push("no singular values found in the interval".to_string());
    }

    Ok(Solution {
        config: config.clone(),
        rule,
        triplets,
        basis,
        left_basis,
        blocks: Some(blocks),
        residuals,
        verdict,
        timings,
        v_in,
        transposed,
        rank_deficient,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn diag_problem() -> ProblemMatrix {
        let s: Vec<f64> = (1..=40).map(|i| i as f64 * 0.05).collect();
        let mut d = DMatrix::zeros(60, 40);
        d.view_mut((0, 0), (40, 40))
            .copy_from(&DMatrix::from_diagonal(&DVector::from_vec(s)));
        ProblemMatrix::Dense(d)
    }

    fn small_params() -> SsParams {
        SsParams {
            block_size: 4,
            moments: 3,
            ..SsParams::default()
        }
    }

    #[test]
    fn diagonal_interval() {
        for mode in Mode::ALL {
            let cfg = RunConfig::new((0.52, 0.78), mode).with_params(small_params());
            let sol = solve(&diag_problem(), &cfg).unwrap();
            let got = sol.accepted_sigma();
            let want: Vec<f64> = (11..=15).map(|i| i as f64 * 0.05).collect();
            assert_eq!(got.len(), want.len(), "{mode}: {got:?}");
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-10, "{mode}");
            }
        }
    }

    #[test]
    fn wide_input_swaps_vectors() {
        let a = diag_problem().transpose();
        let cfg = RunConfig::new((0.52, 0.78), Mode::SsSvd).with_params(small_params());
        let sol = solve(&a, &cfg).unwrap();
        assert!(sol.transposed);
        assert_eq!(sol.triplets.left.nrows(), 40);
        assert_eq!(sol.triplets.right.nrows(), 60);
        let d = a.to_dense();
        for i in sol.accepted() {
            let r = d.tr_mul(&sol.triplets.left.column(i)) - sol.triplets.right.column(i) * sol.triplets.sigma[i];
            assert!(r.norm() < 1e-10);
        }
    }

    #[test]
    fn rejects_bad_configuration() {
        let a = diag_problem();
        let bad_interval = RunConfig::new((0.5, 0.4), Mode::SsSvd).with_params(small_params());
        assert!(solve(&a, &bad_interval).unwrap_err().is_config_error());
        let bad_domain = RunConfig::new((0.0, 0.4), Mode::SsSvdNt).with_params(small_params());
        assert!(matches!(solve(&a, &bad_domain).unwrap_err().root(), SsError::Domain(_)));
        let too_big = RunConfig::new((0.2, 0.4), Mode::SsSvd).with_params(SsParams {
            block_size: 20,
            moments: 3,
            ..SsParams::default()
        });
        assert!(solve(&a, &too_big).unwrap_err().is_config_error());
    }

    #[test]
    fn empty_interval_is_not_an_error() {
        let cfg = RunConfig::new((0.101, 0.149), Mode::SsSvd).with_params(small_params());
        let sol = solve(&diag_problem(), &cfg).unwrap();
        assert!(sol.accepted().is_empty());
    }

    #[test]
    fn mode_round_trip() {
        for m in Mode::ALL {
            assert_eq!(m.name().parse::<Mode>().unwrap(), m);
        }
        assert!("svd".parse::<Mode>().is_err());
    }
}
