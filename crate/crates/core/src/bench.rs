//! Step-wise timing harness with accuracy columns.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::moments::SsParams;
use crate::pipeline::{solve, Mode, RunConfig, Timings};
use crate::problems::{build_model, ModelKind, ModelProblem, ModelSpec};
use crate::report::{accuracy, float_or_null};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchCase {
    pub label: String,
    pub model: ModelSpec,
    pub interval: (f64, f64),
    pub mode: Mode,
    pub params: SsParams,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRow {
    pub label: String,
    pub model: u32,
    pub m: usize,
    pub n: usize,
    pub mode: String,
    pub a: f64,
    pub b: f64,
    #[serde(rename = "L")]
    pub block_size: usize,
    #[serde(rename = "M")]
    pub moments: usize,
    #[serde(rename = "N")]
    pub nodes: usize,
    /// Accepted triplets.
    pub found: usize,
    /// Per-column minimum over repeats.
    pub timings: Timings,
    #[serde(deserialize_with = "float_or_null")]
    pub max_rel_error: f64,
    #[serde(deserialize_with = "float_or_null")]
    pub max_residual: f64,
    pub error: Option<String>,
}

/// Both model problems under all four modes with the default parameters.
pub fn model_suite(seed: u64) -> Vec<BenchCase> {
    let mut out = Vec::new();
    for (kind, iv) in [(ModelKind::Model1, (0.8, 1.2)), (ModelKind::Model2, (1e-3, 1e-1))] {
        for mode in Mode::ALL {
            out.push(BenchCase {
                label: format!("model{}-{}", kind.index(), mode),
                model: ModelSpec::new(kind, seed),
                interval: iv,
                mode,
                params: SsParams::default(),
            });
        }
    }
    out
}

/// `L = 15, 30, 60, 120` at `M = 4` on a 1200×480 instance of model 1, so
/// that `LM` stays within `n`.
pub fn block_sweep_suite(seed: u64) -> Vec<BenchCase> {
    [15, 30, 60, 120]
        .into_iter()
        .map(|l| BenchCase {
            label: format!("sweep-L{l}"),
            model: ModelSpec {
                which: ModelKind::Model1,
                m: 1200,
                n: 480,
                seed,
            },
            interval: (0.8, 1.2),
            mode: Mode::SsSvd,
            params: SsParams {
                block_size: l,
                moments: 4,
                ..SsParams::default()
            },
        })
        .collect()
}

fn min_timings(a: Timings, b: Timings) -> Timings {
    Timings {
        steps_1_2: a.steps_1_2.min(b.steps_1_2),
        step_3: a.step_3.min(b.step_3),
        step_4: a.step_4.min(b.step_4),
        step_5: a.step_5.min(b.step_5),
        total: a.total.min(b.total),
        postprocess: a.postprocess.min(b.postprocess),
    }
}

fn run_case(case: &BenchCase, problem: &ModelProblem, repeats: usize, threads: Option<usize>) -> Result<BenchRow> {
    let mut cfg = RunConfig::new(case.interval, case.mode).with_params(case.params);
    cfg.threads = threads;
    let first = solve(&problem.matrix, &cfg)?;
    let mut timings = first.timings;
    for _ in 1..repeats {
        timings = min_timings(timings, solve(&problem.matrix, &cfg)?.timings);
    }
    let acc = accuracy(&first, &problem.sigma);
    Ok(BenchRow {
        found: acc.reported,
        timings,
        max_rel_error: acc.max_rel_error,
        max_residual: acc.max_residual,
        error: None,
        ..empty_row(case)
    })
}

fn empty_row(case: &BenchCase) -> BenchRow {
    BenchRow {
        label: case.label.clone(),
        model: case.model.which.index(),
        m: case.model.m,
        n: case.model.n,
        mode: case.mode.name().to_string(),
        a: case.interval.0,
        b: case.interval.1,
        block_size: case.params.block_size,
        moments: case.params.moments,
        nodes: case.params.nodes,
        found: 0,
        timings: Timings::default(),
        max_rel_error: f64::NAN,
        max_residual: f64::NAN,
        error: None,
    }
}

/// Runs every case `repeats` times; a failing case yields a row with `error`
/// set and the rest still run.
pub fn run_bench(cases: &[BenchCase], repeats: usize, threads: Option<usize>) -> Vec<BenchRow> {
    let mut built: Vec<ModelProblem> = Vec::new();
    cases
        .iter()
        .map(|case| {
            let problem = match built.iter().position(|p| p.spec == case.model) {
                Some(i) => &built[i],
                None => match build_model(case.model) {
                    Ok(p) => {
                        built.push(p);
                        built.last().unwrap()
                    }
                    Err(e) => {
                        return BenchRow {
                            error: Some(e.to_string()),
                            ..empty_row(case)
                        }
                    }
                },
            };
            run_case(case, problem, repeats.max(1), threads).unwrap_or_else(|e| BenchRow {
                error: Some(e.to_string()),
                ..empty_row(case)
            })
        })
        .collect()
}

pub fn write_bench_csv<W: Write>(rows: &[BenchRow], mut out: W) -> Result<()> {
    writeln!(
        out,
        "label,model,m,n,mode,a,b,L,M,N,found,steps_1_2,step_3,step_4,step_5,total,max_rel_error,max_residual,error"
    )?;
    for r in rows {
        let t = &r.timings;
        writeln!(
            out,
            "{},{},{},{},{},{:.16e},{:.16e},{},{},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            r.label,
            r.model,
            r.m,
            r.n,
            r.mode,
            r.a,
            r.b,
            r.block_size,
            r.moments,
            r.nodes,
            r.found,
            t.steps_1_2,
            t.step_3,
            t.step_4,
            t.step_5,
            t.total,
            r.max_rel_error,
            r.max_residual,
            r.error.as_deref().unwrap_or("").replace(',', ";")
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_have_expected_shape() {
        let t = model_suite(1);
        assert_eq!(t.len(), 8);
        let s = block_sweep_suite(1);
        assert!(s.iter().all(|c| c.params.subspace_dim() <= c.model.n));
    }

    #[test]
    fn failing_case_is_recorded() {
        let mut c = model_suite(1).remove(0);
        c.model.m = 50;
        c.model.n = 40;
        let rows = run_bench(&[c], 1, None);
        assert!(rows[0].error.is_some());
    }
}
