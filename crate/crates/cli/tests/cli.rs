//! End-to-end behaviour of the `coflow` binary: exit codes, report layout and
//! file round trips.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn coflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coflow")).args(args).env_remove("COFLOW_THREADS").output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const SMALL_RUN: &str = r#"
name = "small"
seed = 5

[web]
t_steps = 3
columns = 6

[flows]
drifts = [{ kind = "zero" }, { kind = "sine", amplitude = 1.0, wavenumber = 1.0 }]
realizations_per_drift = 2
x_min = -1.0
x_max = 1.0
dx = 0.05
dt = 0.01
steps = 20
duality_samples = 400
evolution_samples = 400
shift_samples = 100
shift = 0.05

[reproducibility]
threads = [1, 2]
"#;

#[test]
fn bad_drift_kind_exits_2_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", &SMALL_RUN.replace(r#"kind = "zero""#, r#"kind = "brownian""#));
    let o = coflow(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("flows.drifts[0].kind"), "{}", stderr(&o));
}

#[test]
fn unknown_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", &SMALL_RUN.replace("t_steps = 3", "t_steps = 3\nrows = 4"));
    let o = coflow(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("rows"), "{}", stderr(&o));
}

#[test]
fn invalid_value_exits_2_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", &SMALL_RUN.replace("dx = 0.05", "dx = -0.05"));
    let o = coflow(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("flows.dx"), "{}", stderr(&o));
}

#[test]
fn invalid_thread_override_exits_2() {
    let o = Command::new(env!("CARGO_BIN_EXE_coflow"))
        .args(["bounds", "--op", "xstar"])
        .env("COFLOW_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("COFLOW_THREADS"), "{}", stderr(&o));
}

#[test]
fn run_reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL_RUN);
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for (out, threads) in [(&a, "1"), (&b, "2")] {
        let o = Command::new(env!("CARGO_BIN_EXE_coflow"))
            .args(["run", &cfg, "--out", out.to_str().unwrap(), "--tables", dir.path().join("t").to_str().unwrap()])
            .env("COFLOW_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert!(stderr(&o).contains("[PASS]  5 "), "{}", stderr(&o));
    }
    let (a, b) = (json(&a), json(&b));
    assert_eq!(a["format"], "coflow-report");
    assert_eq!(a["body"], b["body"]);
    assert_eq!(a["content_hash"], b["content_hash"]);
    assert!(a["timestamp"].as_u64().unwrap() > 1_600_000_000);
    assert!(a["timing"].is_array());
    let ids: Vec<u64> = a["body"]["criteria"].as_array().unwrap().iter().map(|c| c["id"].as_u64().unwrap()).collect();
    assert_eq!(ids, [1, 2, 3, 4, 5, 12]);
}

#[test]
fn bounds_table_has_twelve_significant_digits() {
    let o = coflow(&["bounds", "--op", "g", "--x", "1,2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("x,"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "1.00000000000e0");
    assert!(row[1].starts_with("3.17310507863e-1"), "{row:?}");
}

#[test]
fn estimate_writes_the_standard_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("e.csv");
    let o = coflow(&[
        "estimate",
        "--start",
        "0",
        "--box",
        "(-inf,0]",
        "--N",
        "2000",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(out).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(rdr.headers().unwrap(), vec!["event", "p_hat", "se", "N", "seed"]);
    let row = rdr.records().next().unwrap().unwrap();
    let p: f64 = row[1].parse().unwrap();
    let se: f64 = row[2].parse().unwrap();
    assert!((p - 0.5).abs() <= 3.0 * se);
    assert_eq!(&row[3], "2000");
}

#[test]
fn bad_flag_value_exits_2() {
    let o = coflow(&["estimate", "--start", "0", "--drift", "cubic:1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn web_enumeration_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("w.json");
    let o = coflow(&["web", "--T", "3", "--Z", "6", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = json(&out);
    assert_eq!(r["command"], "web");
    assert_eq!(r["body"]["all_pass"], true);
}

#[test]
fn simulated_flow_round_trips_through_dual_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "sim.toml",
        r#"
seed = 9
drift = { kind = "constant", c = 0.5 }

[lattice]
t0 = 0.0
n_steps = 30
dt = 0.01
x_min = -1.0
x_max = 1.0
dx = 0.05
"#,
    );
    let dump = dir.path().join("flow.json");
    let o = coflow(&["simulate", "--config", &cfg, "--out", dump.to_str().unwrap(), "--check"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let queries = write(dir.path(), "q.json", r#"[{"t": 0.3, "s": 0.0, "y": 0.123}, {"t": 0.1, "s": 0.1, "y": 0.5}]"#);
    let out = dir.path().join("dual.json");
    let o = coflow(&["dual", "--flow", dump.to_str().unwrap(), "--queries", &queries, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let body = &json(&out)["body"];
    let records = body.as_array().or_else(|| body["records"].as_array()).expect("records");
    assert_eq!(records.len(), 2);
    assert_eq!(records[1]["value"].as_f64(), Some(0.5));

    for suite in ["duality", "sandwich", "evolution", "equivariance", "axioms"] {
        let o =
            coflow(&["verify", "--flow", dump.to_str().unwrap(), "--suite", suite, "--samples", "500", "--generic"]);
        assert!(o.status.success(), "{suite}: {}", stderr(&o));
    }
}

#[test]
fn config_section_without_required_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "name = \"x\"\nseed = 1\n[web]\ncolumns = 6\n");
    let o = coflow(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("t_steps"), "{}", stderr(&o));
}

#[test]
fn failed_check_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "fail.toml",
        r#"
name = "impossible slopes"
seed = 2

[exponents]
drift = { kind = "zero" }
spreads = [0.2, 0.4]
centre = 0.0
a = -4.0
b = 4.0
t = 0.1
dt = 0.01
replicas = 1000
two = { target = 5.0, tolerance = 0.01 }
three = { target = 5.0, tolerance = 0.01 }
"#,
    );
    let out = dir.path().join("r.json");
    let o = coflow(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("[FAIL] 10"), "{}", stderr(&o));
    assert_eq!(json(&out)["body"]["pass"], false);
}
