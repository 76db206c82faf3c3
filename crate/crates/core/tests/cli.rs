use std::path::Path;
use std::process::{Command, Output};

use sssvd::report::RunReport;

fn sssvd(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sssvd"))
        .current_dir(dir)
        .env_remove("SSSVD_THREADS")
        .args(args)
        .output()
        .unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn model_then_solve_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = sssvd(
        d,
        &["model", "--model", "1", "--m", "300", "--n", "100", "--prefix", "m1"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sigma = read(d, "m1.sigma.csv");
    assert_eq!(sigma.lines().count(), 101);
    assert!(sigma.starts_with("index,sigma\n"));

    let out = sssvd(
        d,
        &[
            "solve",
            "--input",
            "m1.mtx",
            "--interval",
            "0.4",
            "0.6",
            "--L",
            "8",
            "--M",
            "4",
            "--prefix",
            "run",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: RunReport = serde_json::from_str(&read(d, "run.report.json")).unwrap();
    // Singular values 0.405, 0.415, ..., 0.595.
    assert_eq!(report.found, 20);
    assert_eq!((report.m, report.n), (300, 100));
    assert!(report.accuracy.is_none());
    let csv = read(d, "run.triplets.csv");
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "index,sigma,in_interval,spurious,tau,residual_exact,residual_estimated"
    );
    assert_eq!(lines.count(), report.candidates);
}

#[test]
fn solve_model_reports_accuracy_and_honours_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = sssvd(
        d,
        &[
            "solve",
            "--model",
            "2",
            "--m",
            "200",
            "--n",
            "80",
            "--interval",
            "1e-3",
            "1e-1",
            "--mode",
            "ss-svd-nt",
            "--auto-L",
            "10",
            "--N",
            "24",
            "--ell",
            "2",
            "--alpha",
            "0.2",
            "--eps",
            "1e-9",
            "--delta",
            "1e-18",
            "--seed",
            "5",
            "--threads",
            "1",
            "--prefix",
            "r",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: RunReport = serde_json::from_str(&read(d, "r.report.json")).unwrap();
    assert_eq!(report.mode, "ss-svd-nt");
    assert_eq!(report.transform, "exp");
    assert_eq!(report.params.block_size, 8); // ceil(3·10 / 4)
    assert_eq!(report.params.nodes, 24);
    assert_eq!(report.params.iterations, 2);
    assert_eq!(report.params.seed, 5);
    assert_eq!(report.aspect, 0.2);
    let acc = report.accuracy.unwrap();
    // The model-2 spectrum on n = 80 stops at 10^{-6.05}: nothing in [a, b].
    assert_eq!(acc.truth_in_interval, 0);
    assert_eq!(report.found, 0);
}

#[test]
fn filter_plot_writes_both_transforms() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = sssvd(
        d,
        &[
            "filter-plot",
            "--interval",
            "1e-3",
            "1e-1",
            "--points",
            "50",
            "--prefix",
            "f",
        ],
    );
    assert!(out.status.success());
    for name in ["f.identity.filter.csv", "f.exp.filter.csv"] {
        let text = read(d, name);
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# transform="));
        assert_eq!(lines.next().unwrap(), "sigma,abs_f");
        assert_eq!(lines.count(), 50);
    }
    let out = sssvd(
        d,
        &[
            "filter-plot",
            "--interval",
            "0.8",
            "1.2",
            "--transform",
            "exp",
            "--prefix",
            "g",
        ],
    );
    assert!(out.status.success());
    assert!(d.join("g.filter.csv").exists());
}

#[test]
fn verify_passes_on_a_clean_run_and_fails_with_noise() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let base = [
        "verify",
        "--model",
        "1",
        "--m",
        "240",
        "--n",
        "120",
        "--interval",
        "0.8",
        "1.2",
        "--L",
        "16",
        "--M",
        "4",
    ];
    let out = sssvd(d, &[&base[..], &["--prefix", "ok"]].concat());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let json: serde_json::Value = serde_json::from_str(&read(d, "ok.verify.json")).unwrap();
    assert!(json["checks"].as_array().unwrap().len() > 5);
    let out = sssvd(d, &[&base[..], &["--inject-noise", "1e-3", "--prefix", "bad"]].concat());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn exit_codes_distinguish_configuration_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // Reversed interval.
    let out = sssvd(d, &["solve", "--model", "1", "--interval", "1.2", "0.8"]);
    assert_eq!(out.status.code(), Some(2));
    // Exp transform with a = 0.
    let out = sssvd(
        d,
        &["solve", "--model", "1", "--interval", "0", "0.5", "--mode", "ss-svd-nt"],
    );
    assert_eq!(out.status.code(), Some(2));
    // Missing file.
    let out = sssvd(d, &["solve", "--input", "missing.mtx", "--interval", "0.1", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
    // Malformed file.
    std::fs::write(
        d.join("bad.mtx"),
        "%%MatrixMarket matrix coordinate real general\n2 2 1\n9 9 1\n",
    )
    .unwrap();
    let out = sssvd(d, &["solve", "--input", "bad.mtx", "--interval", "0.1", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    // LM larger than n.
    let out = sssvd(
        d,
        &[
            "solve",
            "--model",
            "1",
            "--m",
            "60",
            "--n",
            "30",
            "--interval",
            "0.1",
            "0.2",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn empty_interval_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = sssvd(
        dir.path(),
        &[
            "solve",
            "--model",
            "1",
            "--m",
            "200",
            "--n",
            "100",
            "--interval",
            "5",
            "6",
            "--L",
            "4",
            "--prefix",
            "e",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: RunReport = serde_json::from_str(&read(dir.path(), "e.report.json")).unwrap();
    assert_eq!(report.found, 0);
}

#[test]
fn thread_variable_overrides_flag() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_sssvd"))
        .current_dir(dir.path())
        .env("SSSVD_THREADS", "0")
        .args([
            "solve",
            "--model",
            "1",
            "--m",
            "100",
            "--n",
            "50",
            "--interval",
            "0.1",
            "0.2",
            "--L",
            "4",
            "--threads",
            "1",
        ])
        .output()
        .unwrap();
    // The environment value wins, and zero threads is rejected.
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bench_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = sssvd(
        d,
        &[
            "bench",
            "--suite",
            "models",
            "--repeats",
            "1",
            "--threads",
            "1",
            "--prefix",
            "b",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(d, "b.bench.csv");
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "label,model,m,n,mode,a,b,L,M,N,found,steps_1_2,step_3,step_4,step_5,total,max_rel_error,max_residual,error"
    );
    assert_eq!(lines.count(), 8);
    let rows: Vec<sssvd::bench::BenchRow> = serde_json::from_str(&read(d, "b.bench.json")).unwrap();
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| r.error.is_none()));
    assert_eq!(rows[0].found, 40);
}
