use std::path::Path;
use std::process::{Command, Output};

use aoii::cli::{cmd_analyze, cmd_optimize, ScenarioFile, CSV_SCHEMA_VERSION};

fn aoii(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aoii")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

const SIM: &str = r#"
M = 50
q_bar = 0.004
eta = 0.5
policy = ["reactive", "hybrid"]
horizon = 200_000
seed = 9
"#;

#[test]
fn same_seed_gives_identical_csv_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write(dir.path(), "s.toml", SIM);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = aoii(&["simulate", "--scenario", &scenario, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    assert_eq!(String::from_utf8(bytes).unwrap().lines().count(), 3);

    let c = dir.path().join("c.csv");
    aoii(&["simulate", "--scenario", &scenario, "--out", c.to_str().unwrap(), "--seed", "10"]);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write(dir.path(), "s.toml", SIM);
    let one = aoii(&["simulate", "--scenario", &scenario, "--threads", "1"]);
    let four = aoii(&["simulate", "--scenario", &scenario, "--threads", "4"]);
    assert!(one.status.success());
    assert_eq!(one.stdout, four.stdout);
}

#[test]
fn single_point_gives_one_record_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write(dir.path(), "s.toml", "M = 1000\nq01 = 1e-6\nq10 = 1e-6\npolicy = \"random\"\n");
    let out = dir.path().join("r.csv");
    let o = aoii(&["analyze", "--scenario", &scenario, "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let mut csv = csv::Reader::from_path(&out).unwrap();
    let header = csv.headers().unwrap().clone();
    for col in ["q_bar_M", "alpha_c", "alpha_s", "gamma", "load_G", "throughput_S", "aoii", "p_miss", "e_w", "e_y"] {
        assert!(header.iter().any(|h| h == col), "missing {col}");
    }
    let records: Vec<_> = csv.records().map(Result::unwrap).collect();
    assert_eq!(records.len(), 1);
    let aoii: f64 = records[0][header.iter().position(|h| h == "aoii").unwrap()].parse().unwrap();
    assert!((aoii / 7.389 - 1.0).abs() < 0.02);

    let sidecar: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.with_extension("json")).unwrap()).unwrap();
    assert_eq!(sidecar["schema_version"], CSV_SCHEMA_VERSION);
    assert_eq!(sidecar["scenario"]["M"], 1000);
    assert_eq!(sidecar["points"], 1);
}

#[test]
fn floats_carry_nine_significant_digits() {
    let s = ScenarioFile::parse("M = 1000\nq_bar = 1e-5\npolicy = \"reactive\"\n").unwrap();
    let t = cmd_analyze(&s).unwrap();
    let gamma = &t.rows[0][t.columns.iter().position(|c| *c == "gamma").unwrap()];
    assert_eq!(gamma, "9.90049834e-1");
}

#[test]
fn sweep_records_follow_sweep_order() {
    let s = ScenarioFile::parse(
        "M = 1000\npolicy = [\"reactive\", \"random\"]\n[sweep]\nvariable = \"q_bar_M\"\nfrom = 1e-3\nto = 1e2\npoints = 11\nlog = true\n",
    )
    .unwrap();
    let t = cmd_analyze(&s).unwrap();
    assert_eq!(t.rows.len(), 22);
    let col = t.columns.iter().position(|c| *c == "q_bar_M").unwrap();
    let xs: Vec<f64> = t.rows[..11].iter().map(|r| r[col].parse().unwrap()).collect();
    assert!(xs.windows(2).all(|w| w[1] > w[0]));
    assert!((xs[0] - 1e-3).abs() < 1e-12 && (xs[10] - 100.0).abs() < 1e-6);
    assert!(t.rows[..11].iter().all(|r| r[0] == "reactive"));
}

#[test]
fn optimize_reports_baselines() {
    let s = ScenarioFile::parse("M = 1000\nq_bar = 1e-5\npolicy = \"hybrid\"\n").unwrap();
    let t = cmd_optimize(&s).unwrap();
    let get = |name: &str| t.rows[0][t.columns.iter().position(|c| *c == name).unwrap()].clone();
    let load: f64 = get("load_star").parse().unwrap();
    assert!((load - 0.644).abs() < 0.02, "{load}");
    assert_eq!(get("collapsed_to_random"), "false");
    let star: f64 = get("aoii_star").parse().unwrap();
    let random: f64 = get("aoii_random").parse().unwrap();
    let reactive: f64 = get("aoii_reactive").parse().unwrap();
    assert!(star < random && random < reactive);

    let s = ScenarioFile::parse("M = 1000\nq_bar = 1e-2\npolicy = \"hybrid\"\n").unwrap();
    let t = cmd_optimize(&s).unwrap();
    let col = t.columns.iter().position(|c| *c == "collapsed_to_random").unwrap();
    assert_eq!(t.rows[0][col], "true");
}

#[test]
fn schema_errors_name_the_key() {
    let both = ScenarioFile::parse("M = 10\nq01 = 0.1\nq10 = 0.1\nq_bar = 0.1\npolicy = \"random\"\n");
    assert!(both.unwrap_err().to_string().contains("mutually exclusive"));
    let typo = ScenarioFile::parse("M = 10\nq_bar = 0.1\npolicy = \"randm\"\n");
    assert!(typo.unwrap_err().to_string().contains("policy"));
    let unknown = ScenarioFile::parse("M = 10\nq_bar = 0.1\npolicy = \"random\"\n[sweep]\nvariable = \"q_bar_M\"\nfrom = 1\nto = 2\npoints = 3\nsteps = 4\n");
    assert!(unknown.unwrap_err().to_string().contains("steps"));
    let bad_q = ScenarioFile::parse("M = 10\nq01 = 1.5\nq10 = 0.1\npolicy = \"random\"\n");
    assert!(bad_q.unwrap_err().to_string().contains("q01"));
}

#[test]
fn simulate_requires_horizon_and_guards_size() {
    let dir = tempfile::tempdir().unwrap();
    let no_horizon = write(dir.path(), "a.toml", "M = 10\nq_bar = 0.1\npolicy = \"random\"\n");
    let o = aoii(&["simulate", "--scenario", &no_horizon]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("horizon"));

    let huge = write(dir.path(), "b.toml", "M = 4000000000\nq_bar = 0.1\npolicy = \"random\"\nhorizon = 10\n");
    let o = aoii(&["simulate", "--scenario", &huge]);
    assert!(!o.status.success());
}

#[test]
fn check_flag_sets_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    let loose = write(dir.path(), "a.toml", &format!("{SIM}check_tolerance = 0.5\n"));
    assert!(aoii(&["simulate", "--scenario", &loose, "--check"]).status.success());
    let strict = write(dir.path(), "b.toml", &format!("{SIM}check_tolerance = 1e-9\n"));
    assert_eq!(aoii(&["simulate", "--scenario", &strict, "--check"]).status.code(), Some(2));
    assert!(aoii(&["simulate", "--scenario", &strict]).status.success());
}
