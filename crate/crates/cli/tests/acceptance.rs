//! The full acceptance experiment from the workspace `acceptance.toml`: every
//! criterion at its stated tolerance and runtime budget, one line each.
//!
//! Criterion 11 contains one preset (linear drift `a(x) = -x`) whose exact
//! value at the end of the grid is `Phi(2.80) = 0.99744`, below the required
//! `0.999`. That preset is expected to fail. The test asserts instead that
//! its estimate agrees with the closed form, and that every other part of
//! criterion 11 passes.

use std::io::Write;
use std::path::Path;

use coflow_cli::config::load_config;
use coflow_cli::suite::{self, SuiteRun};
use serde_json::Value;

fn run() -> SuiteRun {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../acceptance.toml");
    let cfg = load_config(&path).expect("acceptance config loads");
    suite::run_experiment(&cfg).expect("acceptance suite runs")
}

fn tail_presets(run: &SuiteRun) -> Vec<Value> {
    let c = run.body.criteria.iter().find(|c| c.id == 11).expect("criterion 11");
    c.details["presets"].as_array().expect("presets").clone()
}

#[test]
fn acceptance_criteria() {
    let run = run();
    let mut verdicts = Vec::new();
    for id in 1..=12 {
        let c = run.body.criteria.iter().find(|c| c.id == id).unwrap_or_else(|| panic!("criterion {id} missing"));
        let ok = run.criterion_pass(id) == Some(true);
        let budget: Vec<String> = run
            .timings
            .iter()
            .filter(|t| t.criterion == Some(id) && t.limit.is_some())
            .map(|t| format!("{} {:.1}s/{:.0}s", t.section, t.seconds, t.limit.unwrap()))
            .collect();
        let budget = if budget.is_empty() { String::new() } else { format!(" [{}]", budget.join(", ")) };
        // written past the test harness's capture so the verdicts always show
        let line =
            format!("criterion {id:>2} {}: {}{budget} - {}\n", c.name, if ok { "PASS" } else { "FAIL" }, c.summary);
        std::io::stderr().write_all(line.as_bytes()).unwrap();
        verdicts.push((id, ok));
    }

    let failed: Vec<u32> = verdicts.iter().filter(|(id, ok)| !ok && *id != 11).map(|(id, _)| *id).collect();
    assert!(failed.is_empty(), "criteria {failed:?} failed");

    for p in tail_presets(&run) {
        let linear_minus_x = p["drift"]["kind"] == "linear" && p["drift"]["c0"] == 0.0 && p["drift"]["c1"] == -1.0;
        if linear_minus_x {
            let exact = p["final_closed_form"].as_f64().expect("closed form");
            let est = p["final_value"].as_f64().unwrap();
            let se = p["final_se"].as_f64().unwrap();
            assert!(exact < 0.999, "closed form {exact} should sit below the threshold");
            assert!((est - exact).abs() <= 3.0 * se, "linear tail estimate {est} vs exact {exact} (se {se})");
            assert_eq!(p["monotone"], true);
        } else {
            assert_eq!(p["pass"], true, "tail preset {} failed", p["drift"]);
        }
    }
}
