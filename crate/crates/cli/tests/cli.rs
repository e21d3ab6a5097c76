use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ncs(args: &[&str], config: Option<&str>, out: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ncs"));
    cmd.args(args).arg("--out").arg(out);
    if let Some(text) = config {
        let path = out.join("config.toml");
        fs::create_dir_all(out).unwrap();
        fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap()
}

const SMALL: &str = r#"
[certify]
max_generations = 15

[regpso]
max_iterations = 2

[ga]
max_generations = 2

[sim]
realizations = 4
report_realizations = 8
"#;

#[test]
fn discretize_writes_the_sampled_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = ncs(&["discretize"], None, dir.path());
    assert_eq!(out.status.code(), Some(0));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("discrete.json")).unwrap())
            .unwrap();
    let g = json["g"]["data"].as_array().unwrap();
    assert!((g[1].as_f64().unwrap() - 0.29554466).abs() < 1e-7);
    assert_eq!(json["sample_time"].as_f64(), Some(0.3));
}

#[test]
fn lqr_reports_the_gain() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[design]\nq = [0.29495, 1.37137]\nr = 0.25781\n";
    let out = ncs(&["lqr"], Some(cfg), dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("lqr.json")).unwrap()).unwrap();
    let k = json["k"]["data"].as_array().unwrap();
    assert!((k[0].as_f64().unwrap() - 1.003356).abs() < 1e-5);
}

#[test]
fn certify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = ncs(
        &["certify", "--seed", "3"],
        Some("[design]\nk = [1.00337, 4.09011]\n"),
        dir.path(),
    );
    assert_eq!(
        ok.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&ok.stdout)
    );
    assert!(dir.path().join("certificate.json").exists());

    let dir = tempfile::tempdir().unwrap();
    let cfg = "[certify]\nmax_generations = 2\n\n[design]\nk = [0.0, 0.0]\n";
    let bad = ncs(&["certify"], Some(cfg), dir.path());
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn configuration_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        ncs(&["discretize"], Some("p_tx = \"high\""), dir.path())
            .status
            .code(),
        Some(1)
    );
    assert_eq!(ncs(&["lqr"], Some(""), dir.path()).status.code(), Some(1));
    assert_eq!(
        ncs(&["certify"], Some("[design]\nk = [1.0]\n"), dir.path())
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        ncs(&["synthesize"], Some("p_tx = 1.5"), dir.path())
            .status
            .code(),
        Some(1)
    );
    let missing = Command::new(env!("CARGO_BIN_EXE_ncs"))
        .args(["discretize", "--config", "/nonexistent/ncs.toml"])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn simulate_writes_traces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{SMALL}\n[design]\nk = [0.99994, 3.73058]\n");
    let out = ncs(&["simulate", "--runs", "3"], Some(&cfg), dir.path());
    assert_eq!(out.status.code(), Some(0));
    for i in 0..3 {
        let text = fs::read_to_string(dir.path().join(format!("trace_{i}.csv"))).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("k,t,x1,x2,xbar1,xbar2,u,y,dropped"));
        assert_eq!(lines.count(), 101);
    }
    assert!(!dir.path().join("trace_3.csv").exists());
}

#[test]
fn synthesize_writes_result_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = ncs(
        &["synthesize", "--arm", "ga", "--seed", "1"],
        Some(SMALL),
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let result: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("result.json")).unwrap()).unwrap();
    assert_eq!(result["arm"], "ga");
    assert!(result["certificate"]["p"]["data"].as_array().unwrap().len() == 16);
    let conv = fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    assert!(conv.starts_with("iteration,best_cost"));
    assert_eq!(conv.lines().count(), 1 + 3);
    assert!(dir.path().join("trace_0.csv").exists());
}

#[test]
fn compare_writes_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let out = ncs(&["compare", "--runs", "2"], Some(SMALL), dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(dir.path().join("stats.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "arm,mean,std,best,worst");
    assert!(lines[1].starts_with("regpso,"));
    assert!(lines[2].starts_with("ga,"));
}
