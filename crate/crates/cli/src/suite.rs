//! The verification suite behind `coflow run`.
//!
//! Each config section runs one group of checks and yields one or more
//! [`CriterionResult`]s. The result body is a pure function of the config;
//! elapsed times are collected separately.

use std::time::Instant;

use coflow::bounds::{self, BoundsProfile};
use coflow::dual::{self, BackwardFlow, CheckOptions, ViolationReport};
use coflow::lattice::{check_axioms, AxiomCheckOptions};
use coflow::motion::{self, DualLattice, MotionParams};
use coflow::web::{web_enumerate, WebWindow};
use coflow::{exec, simulate_flow_replica, DriftSpec};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::*;
use crate::error::{CliError, Result};
use crate::report::{self, EstimateRow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: String,
    pub pass: bool,
    pub summary: String,
    pub details: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub section: String,
    /// Criterion whose runtime budget this section counts against.
    pub criterion: Option<u32>,
    pub seconds: f64,
    pub limit: Option<f64>,
}

impl Timing {
    pub fn within(&self) -> bool {
        self.limit.is_none_or(|l| self.seconds <= l)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteBody {
    pub experiment: String,
    /// Git-style hash of the canonical config echo.
    pub input_hash: String,
    pub config: ExperimentConfig,
    pub criteria: Vec<CriterionResult>,
    pub pass: bool,
}

/// A named table produced alongside the report.
#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub csv: String,
}

#[derive(Debug, Clone)]
pub struct SuiteRun {
    pub body: SuiteBody,
    pub timings: Vec<Timing>,
    pub tables: Vec<Table>,
}

impl SuiteRun {
    /// Checks and runtime budgets all hold.
    pub fn pass(&self) -> bool {
        self.body.pass && self.timings.iter().all(Timing::within)
    }

    /// Verdict of one criterion including its runtime budget.
    pub fn criterion_pass(&self, id: u32) -> Option<bool> {
        let c = self.body.criteria.iter().find(|c| c.id == id)?;
        Some(c.pass && self.timings.iter().filter(|t| t.criterion == Some(id)).all(Timing::within))
    }

    pub fn timing_json(&self) -> Value {
        json!(self.timings)
    }
}

/// Derives an independent seed for `label` from the master seed.
pub fn sub_seed(master: u64, label: &str) -> u64 {
    // FNV-1a of the label, mixed with the master seed by SplitMix64
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = master ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn input_hash(cfg: &ExperimentConfig) -> Result<String> {
    Ok(report::blob_hash(&report::body_bytes(cfg)?))
}

/// Runs every configured section on the current rayon pool.
pub fn run_suite(cfg: &ExperimentConfig) -> Result<SuiteRun> {
    let mut criteria = Vec::new();
    let mut timings = Vec::new();
    let mut tables = Vec::new();
    let mut timed = |section: &str, criterion: Option<u32>, limit: Option<f64>, start: Instant| {
        timings.push(Timing { section: section.into(), criterion, seconds: start.elapsed().as_secs_f64(), limit });
    };

    if let Some(f) = &cfg.flows {
        let start = Instant::now();
        criteria.extend(flows(f, sub_seed(cfg.seed, "flows"))?);
        timed("flows", Some(1), f.max_seconds, start);
    }
    if let Some(w) = &cfg.web {
        let start = Instant::now();
        criteria.push(web(w)?);
        timed("web", Some(5), w.max_seconds, start);
    }
    if let Some(s) = &cfg.semigroup {
        let start = Instant::now();
        let (c, rows) = semigroup(s, cfg.seed)?;
        criteria.push(c);
        tables.push(Table { name: "semigroup".into(), csv: report::estimate_csv(&rows)? });
        timed("semigroup", Some(6), None, start);
    }
    if let Some(d) = &cfg.dual_drift {
        let start = Instant::now();
        criteria.push(dual_drift(d, cfg.seed)?);
        timed("dual_drift", Some(7), None, start);
    }
    if let Some(s) = &cfg.stopped {
        let start = Instant::now();
        criteria.push(stopped(s, cfg.seed)?);
        timed("stopped", Some(8), None, start);
    }
    // the exponent fit calibrates the constant of the schedule table
    let mut cubic_constant = None;
    if let Some(e) = &cfg.exponents {
        let start = Instant::now();
        let (c, rows, k) = exponents(e, sub_seed(cfg.seed, "exponents"))?;
        cubic_constant = Some(k);
        criteria.push(c);
        tables.push(Table { name: "exponents".into(), csv: report::estimate_csv(&rows)? });
        timed("exponents", Some(10), e.max_seconds, start);
    }
    if let Some(b) = &cfg.bounds {
        let start = Instant::now();
        let (c, schedule) = bounds_checks(b, cubic_constant)?;
        criteria.push(c);
        tables.push(Table { name: "schedule".into(), csv: schedule });
        timed("bounds", Some(9), None, start);
    }
    if let Some(t) = &cfg.tail {
        let start = Instant::now();
        let (c, rows) = tail(t, cfg.seed)?;
        criteria.push(c);
        tables.push(Table { name: "tail".into(), csv: report::estimate_csv(&rows)? });
        timed("tail", Some(11), None, start);
    }
    criteria.sort_by_key(|c| c.id);

    let pass = criteria.iter().all(|c| c.pass);
    let body =
        SuiteBody { experiment: cfg.name.clone(), input_hash: input_hash(cfg)?, config: cfg.clone(), criteria, pass };
    Ok(SuiteRun { body, timings, tables })
}

/// Pool size for a run: `COFLOW_THREADS`, then the config, then rayon's
/// default.
pub fn pool_size(cfg: &ExperimentConfig) -> Result<usize> {
    Ok(match (crate::config::env_threads()?, cfg.threads) {
        (Some(n), _) | (None, Some(n)) => n,
        (None, None) => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    })
}

pub fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    Ok(pool.install(f))
}

/// Runs the suite on the configured pool and, when the config asks for it,
/// again on every other listed pool size, comparing report bodies byte for
/// byte.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<SuiteRun> {
    let primary = pool_size(cfg)?;
    let mut sizes = vec![primary];
    if let Some(r) = &cfg.reproducibility {
        for &t in &r.threads {
            if !sizes.contains(&t) {
                sizes.push(t);
            }
        }
    }
    let mut run = in_pool(primary, || run_suite(cfg))??;
    let Some(_) = &cfg.reproducibility else {
        return Ok(run);
    };
    let reference = report::body_bytes(&run.body)?;
    let mut runs = vec![json!({ "threads": primary, "content_hash": report::sha256_hex(&reference) })];
    let mut identical = true;
    for &t in &sizes[1..] {
        let start = Instant::now();
        let other = in_pool(t, || run_suite(cfg))??;
        let bytes = report::body_bytes(&other.body)?;
        identical &= bytes == reference;
        runs.push(json!({ "threads": t, "content_hash": report::sha256_hex(&bytes) }));
        run.timings.push(Timing {
            section: format!("reproducibility[{t}]"),
            criterion: Some(12),
            seconds: start.elapsed().as_secs_f64(),
            limit: None,
        });
    }
    // list pools by size so the body does not depend on which one ran first
    sizes.sort_unstable();
    runs.sort_by_key(|r| r["threads"].as_u64());
    let summary = format!(
        "{} runs on pools {:?}: report bodies {}",
        sizes.len(),
        sizes,
        if identical { "byte-identical" } else { "DIFFER" }
    );
    run.body.criteria.push(CriterionResult {
        id: 12,
        name: "reproducibility".into(),
        pass: identical,
        summary,
        details: json!({ "runs": runs }),
    });
    run.body.pass &= identical;
    Ok(run)
}

fn violations_json(r: &ViolationReport) -> Value {
    serde_json::to_value(r).unwrap_or(Value::Null)
}

struct FlowOutcome {
    c1: u64,
    c2: u64,
    c3_gap: f64,
    c4: u64,
    c5: u64,
    mono: u64,
    axiom_checks: u64,
    clamped: u64,
    particle_steps: u64,
    duality: ViolationReport,
    evolution: ViolationReport,
    shift: [ViolationReport; 3],
    atoms: Option<(ViolationReport, ViolationReport)>,
}

/// Draws attempts from fresh sampling streams until `target` queries have
/// been checked; queries whose inverse left the window are skipped and do
/// not count.
fn checked_exactly(
    target: u64,
    seed: u64,
    run: impl Fn(CheckOptions) -> Result<ViolationReport>,
) -> Result<ViolationReport> {
    let mut total = ViolationReport::new();
    for attempt in 0..MAX_ATTEMPTS {
        if total.checked >= target {
            break;
        }
        let s = if attempt == 0 { seed } else { sub_seed(seed, &format!("attempt/{attempt}")) };
        let r = run(CheckOptions::new(target - total.checked, s).generic())?;
        total = total.merge(&r);
    }
    Ok(total)
}

const MAX_ATTEMPTS: u32 = 64;

fn shift_checked_exactly(
    flow: &coflow::FlowRealization,
    h: f64,
    target: u64,
    seed: u64,
) -> Result<[ViolationReport; 3]> {
    let mut acc = [ViolationReport::new(), ViolationReport::new(), ViolationReport::new()];
    for attempt in 0..MAX_ATTEMPTS {
        let missing = acc.iter().map(|r| target.saturating_sub(r.checked)).max().unwrap_or(0);
        if missing == 0 {
            break;
        }
        let s = if attempt == 0 { seed } else { sub_seed(seed, &format!("attempt/{attempt}")) };
        let r = dual::check_shift_equivariance(flow, h, &CheckOptions::new(missing, s).generic())?;
        for (a, part) in acc.iter_mut().zip([r.equivariance, r.forward_cocycle, r.backward_cocycle]) {
            if a.checked < target {
                *a = a.clone().merge(&part);
            }
        }
    }
    Ok(acc)
}

fn flows(f: &FlowsConfig, seed: u64) -> Result<Vec<CriterionResult>> {
    let spec = f.spec();
    let per = f.realizations_per_drift;
    let total = per * f.drifts.len() as u64;
    let (dual_n, evo_n, shift_n) = (f.duality_samples / total, f.evolution_samples / total, f.shift_samples / total);
    let outcomes = exec::map_replicas(total, |g| -> Result<FlowOutcome> {
        let drift = &f.drifts[(g / per) as usize];
        let flow = simulate_flow_replica(&spec, drift, seed, g)?;
        let axioms = check_axioms(&flow, &AxiomCheckOptions { seed, ..AxiomCheckOptions::default() });
        let bwd = BackwardFlow::new(&flow);
        let duality = checked_exactly(dual_n, seed, |o| Ok(dual::check_duality(&bwd, &o)))?;
        let evolution = checked_exactly(evo_n, seed, |o| Ok(dual::check_backward_evolution(&bwd, &o)))?;
        let shift = shift_checked_exactly(&flow, f.shift, shift_n, seed)?;
        let atoms = f.atom_stress.then(|| {
            let opts = CheckOptions::new(dual_n, sub_seed(seed, "atoms"));
            (
                dual::check_duality(&bwd, &opts),
                dual::check_backward_evolution(&bwd, &CheckOptions { samples: evo_n, ..opts }),
            )
        });
        Ok(FlowOutcome {
            c1: axioms.c1.violations,
            c2: axioms.c2.violations,
            c3_gap: axioms.c3.max_gap,
            c4: axioms.c4.violations,
            c5: axioms.c5.violations,
            mono: axioms.monotonicity.violations,
            axiom_checks: axioms.c1.checked + axioms.c4.checked + axioms.c5.checked + axioms.monotonicity.checked,
            clamped: axioms.clamped_particles,
            particle_steps: axioms.particle_steps,
            duality,
            evolution,
            shift,
            atoms,
        })
    });

    let mut c1 = 0;
    let mut c2 = 0;
    let mut c3_gap = 0.0f64;
    let mut c4 = 0;
    let mut c5 = 0;
    let mut mono = 0;
    let mut checks = 0;
    let mut clamped = 0;
    let mut steps = 0;
    let mut duality = ViolationReport::new();
    let mut evolution = ViolationReport::new();
    let mut shift = [ViolationReport::new(), ViolationReport::new(), ViolationReport::new()];
    let mut atoms: Option<(ViolationReport, ViolationReport)> = None;
    for o in outcomes {
        let o = o?;
        c1 += o.c1;
        c2 += o.c2;
        c3_gap = c3_gap.max(o.c3_gap);
        c4 += o.c4;
        c5 += o.c5;
        mono += o.mono;
        checks += o.axiom_checks;
        clamped += o.clamped;
        steps += o.particle_steps;
        duality = duality.merge(&o.duality);
        evolution = evolution.merge(&o.evolution);
        for (acc, r) in shift.iter_mut().zip(&o.shift) {
            *acc = acc.clone().merge(r);
        }
        if let Some((d, e)) = o.atoms {
            atoms = Some(match atoms {
                Some((ad, ae)) => (ad.merge(&d), ae.merge(&e)),
                None => (d, e),
            });
        }
    }
    let clamped_fraction = clamped as f64 / steps.max(1) as f64;
    let drifts: Vec<String> = f.drifts.iter().map(DriftSpec::label).collect();

    let c1_pass = c1 == 0 && c4 == 0 && c5 == 0 && mono == 0 && clamped_fraction <= f.max_clamped_fraction;
    let axioms = CriterionResult {
        id: 1,
        name: "flow axioms".into(),
        pass: c1_pass,
        summary: format!(
            "{total} realizations over {drifts:?}: C1 {c1}, C4 {c4}, C5 {c5}, monotonicity {mono} violations in {checks} checks; clamped fraction {clamped_fraction:.2e}"
        ),
        details: json!({
            "realizations": total,
            "drifts": f.drifts,
            "checks": checks,
            "c1_violations": c1,
            "c2_violations": c2,
            "c3_max_range_gap": c3_gap,
            "c4_violations": c4,
            "c5_violations": c5,
            "monotonicity_violations": mono,
            "clamped_particle_steps": clamped,
            "particle_steps": steps,
            "clamped_fraction": clamped_fraction,
        }),
    };

    let mut duality_details = json!({ "generic": violations_json(&duality) });
    let mut evolution_details = json!({ "generic": violations_json(&evolution) });
    let mut atom_ok = true;
    if let Some((d, e)) = &atoms {
        duality_details["atoms"] = violations_json(d);
        evolution_details["atoms"] = violations_json(e);
        atom_ok = d.non_tie_violations() == 0 && e.non_tie_violations() == 0;
    }
    let atom_note = atoms
        .as_ref()
        .map(|(d, e)| {
            format!(
                "; on atoms: duality {}/{} ties, evolution {} non-tie violations, {} ties",
                d.violations,
                d.tie_incidents,
                e.non_tie_violations(),
                e.tie_incidents
            )
        })
        .unwrap_or_default();

    let duality_c = CriterionResult {
        id: 2,
        name: "duality inequality".into(),
        pass: duality.violations == 0 && duality.checked >= f.duality_samples && atom_ok,
        summary: format!(
            "{} generic quadruples: {} violations, {} boundary skips{}",
            duality.checked, duality.violations, duality.boundary_skips, atom_note
        ),
        details: duality_details,
    };
    let evolution_c = CriterionResult {
        id: 3,
        name: "backward evolution".into(),
        pass: evolution.non_tie_violations() == 0
            && evolution.tie_incidents == 0
            && evolution.checked >= f.evolution_samples
            && atom_ok,
        summary: format!(
            "{} generic triples: {} non-tie violations, {} tie incidents, {} relay ties",
            evolution.checked,
            evolution.non_tie_violations(),
            evolution.tie_incidents,
            evolution.relay_ties
        ),
        details: evolution_details,
    };
    let [eq, fwd, bwd] = &shift;
    let shift_c = CriterionResult {
        id: 4,
        name: "shift equivariance and cocycles".into(),
        pass: eq.pass() && fwd.pass() && bwd.pass() && [eq, fwd, bwd].iter().all(|r| r.checked >= f.shift_samples),
        summary: format!(
            "h = {}: equivariance {}/{}, forward cocycle {}/{}, backward cocycle {}/{} violations",
            f.shift, eq.violations, eq.checked, fwd.violations, fwd.checked, bwd.violations, bwd.checked
        ),
        details: json!({
            "h": f.shift,
            "equivariance": violations_json(eq),
            "forward_cocycle": violations_json(fwd),
            "backward_cocycle": violations_json(bwd),
        }),
    };
    Ok(vec![axioms, duality_c, evolution_c, shift_c])
}

fn web(w: &WebConfig) -> Result<CriterionResult> {
    let rep = web_enumerate(WebWindow::new(w.t_steps, w.columns))?;
    let n1_equal = rep.duality_n1.iter().all(|r| r.equal);
    Ok(CriterionResult {
        id: 5,
        name: "web oracle".into(),
        pass: rep.all_pass,
        summary: format!(
            "{}x{} window, {} configurations: crossings {}/{}/{}, embed mismatches {}/{}, evolution {}, sandwich {}, n=1 duality rows {} ({})",
            w.t_steps,
            w.columns,
            rep.configs,
            rep.forward_crossings,
            rep.dual_crossings,
            rep.transversal_crossings,
            rep.embed_forward_mismatches,
            rep.embed_dual_mismatches,
            rep.backward_evolution_failures,
            rep.sandwich_failures,
            rep.duality_n1.len(),
            if n1_equal { "all equal" } else { "MISMATCH" }
        ),
        details: serde_json::to_value(&rep).unwrap_or(Value::Null),
    })
}

fn semigroup(s: &SemigroupConfig, master: u64) -> Result<(CriterionResult, Vec<EstimateRow>)> {
    let params = MotionParams::new(s.dt);
    let lattice = DualLattice::new(s.dx);
    let mut cases = Vec::new();
    let mut rows = Vec::new();
    let mut pass = true;
    let mut worst = 0.0f64;
    let mut idx = 0;
    for drift in &s.drifts {
        for &t in &s.horizons {
            for case in &s.cases {
                let seed = sub_seed(master, &format!("semigroup/{idx}"));
                idx += 1;
                let r =
                    motion::estimate_dual_relation(&case.x, &case.y, drift, &params, &lattice, t, s.replicas, seed)?;
                let z = if r.combined_se > 0.0 { r.gap / r.combined_se } else { 0.0 };
                worst = worst.max(z);
                // closed-form anchors: one point, zero or constant drift
                let anchored = case.x.len() == 1 && matches!(drift, DriftSpec::Zero | DriftSpec::Constant { .. });
                let anchor_z = match (anchored, r.closed_form) {
                    (true, Some(cf)) => {
                        Some(((r.forward.p_hat - cf).abs() / r.forward.se, (r.dual.p_hat - cf).abs() / r.dual.se))
                    }
                    _ => None,
                };
                let ok = r.within(s.tolerance_se)
                    && anchor_z.is_none_or(|(a, b)| a <= s.tolerance_se && b <= s.tolerance_se);
                pass &= ok;
                rows.push(EstimateRow::from(&r.forward));
                rows.push(EstimateRow::from(&r.dual));
                cases.push(json!({
                    "drift": drift,
                    "t": t,
                    "x": case.x,
                    "y": case.y,
                    "forward": r.forward,
                    "dual": r.dual,
                    "z": z,
                    "closed_form": r.closed_form,
                    "anchor_z": anchor_z,
                    "cells": r.lattice.cells(),
                    "pass": ok,
                }));
            }
        }
    }
    let c = CriterionResult {
        id: 6,
        name: "semigroup duality".into(),
        pass,
        summary: format!(
            "{} cases at N = {}: worst |P~ - P| = {worst:.2} combined SE (limit {})",
            cases.len(),
            s.replicas,
            s.tolerance_se
        ),
        details: json!({ "dt": s.dt, "dx": s.dx, "cases": cases }),
    };
    Ok((c, rows))
}

fn dual_drift(d: &DualDriftConfig, master: u64) -> Result<CriterionResult> {
    let params = MotionParams::new(d.dt);
    let lattice = DualLattice::new(d.dx);
    let mut reports = Vec::new();
    let mut parts = Vec::new();
    for (i, drift) in d.drifts.iter().enumerate() {
        let r = motion::check_dual_drift(
            drift,
            &params,
            &lattice,
            d.t,
            d.y,
            d.replicas,
            sub_seed(master, &format!("dual_drift/{i}")),
        )?;
        parts.push(format!(
            "{}: p = {:.3}/{:.3}",
            drift.label(),
            r.ks_closed_form.map_or(f64::NAN, |k| k.p_value),
            r.ks_simulated.p_value
        ));
        reports.push(r);
    }
    Ok(CriterionResult {
        id: 7,
        name: "dual drift".into(),
        pass: reports.iter().all(|r| r.pass()),
        summary: format!(
            "KS (closed form / simulated, alpha {}) at N = {}: {}",
            motion::KS_ALPHA,
            d.replicas,
            parts.join(", ")
        ),
        details: serde_json::to_value(&reports).unwrap_or(Value::Null),
    })
}

fn stopped(s: &StoppedConfig, master: u64) -> Result<CriterionResult> {
    let params = MotionParams::new(s.dt);
    let mut reports = Vec::new();
    let mut parts = Vec::new();
    let mut idx = 0;
    for drift in &s.drifts {
        for start in &s.starts {
            let r = motion::check_stopped_equivalence(
                start,
                drift,
                &params,
                s.t,
                s.replicas,
                sub_seed(master, &format!("stopped/{idx}")),
            )?;
            idx += 1;
            let min_p = r.ks.iter().map(|k| k.p_value).fold(1.0, f64::min);
            parts.push(format!(
                "{} n={}: {} mismatches, min p {:.3}",
                drift.label(),
                start.len(),
                r.shared_noise_mismatches,
                min_p
            ));
            reports.push(r);
        }
    }
    Ok(CriterionResult {
        id: 8,
        name: "stopped-process equivalence".into(),
        pass: reports.iter().all(|r| r.pass()),
        summary: format!("N = {}: {}", s.replicas, parts.join("; ")),
        details: serde_json::to_value(&reports).unwrap_or(Value::Null),
    })
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

fn bounds_checks(b: &BoundsConfig, cubic_constant: Option<f64>) -> Result<(CriterionResult, String)> {
    // g^{-1}(eps) ~ sqrt(2 |ln eps|) for small eps
    let mut ginv_rows = Vec::new();
    let mut ginv_worst = 0.0f64;
    for eps in log_grid(b.ginv_range[0], b.ginv_range[1], b.ginv_points) {
        let ratio = bounds::g_inv(eps)? / (2.0 * eps.ln().abs()).sqrt();
        ginv_worst = ginv_worst.max((ratio - 1.0).abs());
        ginv_rows.push(json!({ "eps": eps, "ratio": ratio }));
    }
    let ginv_ok = ginv_worst <= b.ginv_tolerance;

    let mut identity_worst = 0.0f64;
    for &e in &b.identity_eps {
        for &t in &b.identity_t {
            identity_worst = identity_worst.max(bounds::gaussian_tail_identity_residual(e, t)?);
        }
    }
    let identity_ok = identity_worst <= b.identity_tolerance;

    // the escape-time bound against exact Brownian tails, wherever its
    // hypotheses hold
    let mut admissible = 0u64;
    let mut wbound_worst = 0.0f64;
    let mut wbound_rows = Vec::new();
    for &e in &b.wbound_eps {
        for &d in &b.wbound_delta {
            if let Some(worst) = bounds::confirm_w_bound_brownian(e, d, b.wbound_grid)? {
                admissible += 1;
                wbound_worst = wbound_worst.max(worst);
                let bound = bounds::w_lower_bound(e, d, 0.0, 0.0)?.value;
                wbound_rows.push(json!({ "eps": e, "delta": d, "bound": bound, "exact": bounds::brownian_w(e, d), "worst_rate_ratio": worst }));
            }
        }
    }
    let wbound_ok = admissible > 0 && wbound_worst < 1.0;

    let s = &b.schedule;
    let c = cubic_constant.unwrap_or(s.c);
    let profile = BoundsProfile { c, ..BoundsProfile::brownian(s.alpha, s.beta, s.t) };
    let table = bounds::liminf_schedule(&profile, s.n_max)?;
    let schedule_ok = table.decreasing_from == Some(1) && table.fall_factor >= s.min_fall;

    let mut csv =
        report::NumericTable::new(&["n", "eps", "delta", "w_bound", "hypotheses_hold", "ratio", "asymptotic"]);
    for r in &table.rows {
        csv.push(vec![
            r.n.into(),
            r.eps.into(),
            r.delta.into(),
            r.w_bound.into(),
            r.hypotheses_hold.into(),
            r.ratio.into(),
            r.asymptotic.into(),
        ]);
    }

    let pass = ginv_ok && identity_ok && wbound_ok && schedule_ok;
    let summary = format!(
        "g_inv ratio within {ginv_worst:.3} of 1; identity residual {identity_worst:.1e}; w bound on {admissible} admissible (eps, delta), worst rate/delta {wbound_worst:.2e}; schedule falls by {:.3e} (decreasing from n = {:?}, C = {c:.4})",
        table.fall_factor, table.decreasing_from
    );
    let details = json!({
        "ginv": { "rows": ginv_rows, "worst_deviation": ginv_worst, "tolerance": b.ginv_tolerance, "pass": ginv_ok },
        "identity": { "worst_residual": identity_worst, "grid": [b.identity_eps.len(), b.identity_t.len()], "tolerance": b.identity_tolerance, "pass": identity_ok },
        "wbound": { "admissible": admissible, "worst_rate_ratio": wbound_worst, "rows": wbound_rows, "pass": wbound_ok },
        "schedule": { "c": c, "calibrated": cubic_constant.is_some(), "table": table, "min_fall": s.min_fall, "pass": schedule_ok },
    });
    Ok((CriterionResult { id: 9, name: "bounds".into(), pass, summary, details }, csv.to_csv()?))
}

fn exponents(e: &ExponentsConfig, seed: u64) -> Result<(CriterionResult, Vec<EstimateRow>, f64)> {
    let params = MotionParams::new(e.dt);
    let fit =
        |n| motion::survival_exponent(n, &e.spreads, e.centre, e.a, e.b, &e.drift, &params, e.t, e.replicas, seed);
    let two = fit(2)?;
    let three = fit(3)?;
    let ok2 = (two.slope - e.two.target).abs() <= e.two.tolerance;
    let ok3 = (three.slope - e.three.target).abs() <= e.three.tolerance;
    let rows = two.estimates.iter().chain(&three.estimates).map(EstimateRow::from).collect();
    let c = CriterionResult {
        id: 10,
        name: "ordering exponents".into(),
        pass: ok2 && ok3,
        summary: format!(
            "N = {}: two paths slope {:.3} (target {} +- {}), three paths slope {:.3} (target {} +- {})",
            e.replicas, two.slope, e.two.target, e.two.tolerance, three.slope, e.three.target, e.three.tolerance
        ),
        details: json!({ "two": two, "three": three }),
    };
    Ok((c, rows, three.cubic_constant))
}

fn tail(t: &TailConfig, master: u64) -> Result<(CriterionResult, Vec<EstimateRow>)> {
    let params = MotionParams::new(t.dt);
    let mut reports = Vec::new();
    let mut rows = Vec::new();
    let mut parts = Vec::new();
    for (i, drift) in t.drifts.iter().enumerate() {
        let r = motion::check_tail_lemma(
            drift,
            &params,
            t.t,
            t.c,
            &t.x_grid,
            t.replicas,
            sub_seed(master, &format!("tail/{i}")),
        )?;
        rows.extend(r.rows.iter().map(|row| EstimateRow::from(&row.estimate)));
        let last = r.rows.last().expect("non-empty grid");
        parts.push(format!(
            "{}: {:.5}{}{}",
            drift.label(),
            r.final_value,
            last.closed_form.map(|cf| format!(" (exact {cf:.5})")).unwrap_or_default(),
            if r.pass() { "" } else { " FAIL" }
        ));
        reports.push(json!({
            "drift": drift,
            "pass": r.pass(),
            "final_ok": r.final_ok(),
            "monotone": r.monotone,
            "final_value": r.final_value,
            "final_se": last.estimate.se,
            "final_closed_form": last.closed_form,
            "threshold": r.threshold,
            "report": r,
        }));
    }
    let pass = reports.iter().all(|r| r["pass"] == json!(true));
    let c = CriterionResult {
        id: 11,
        name: "tail lemma".into(),
        pass,
        summary: format!("P_{}(x_max, [{}, inf)) >= 0.999 at N = {}: {}", t.t, t.c, t.replicas, parts.join(", ")),
        details: json!({ "x_grid": t.x_grid, "presets": reports }),
    };
    Ok((c, rows))
}

/// Writes the suite's CSV tables into `dir`.
pub fn write_tables(dir: &std::path::Path, tables: &[Table]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
    for t in tables {
        let p = dir.join(format!("{}.csv", t.name));
        std::fs::write(&p, &t.csv).map_err(|e| CliError::io(format!("writing {}", p.display()), e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sub_seeds_differ_and_repeat() {
        assert_eq!(sub_seed(1, "flows"), sub_seed(1, "flows"));
        assert_ne!(sub_seed(1, "flows"), sub_seed(2, "flows"));
        assert_ne!(sub_seed(1, "tail/0"), sub_seed(1, "tail/1"));
    }

    #[test]
    fn log_grid_ends() {
        let g = log_grid(1e-12, 1e-8, 5);
        assert_eq!(g.len(), 5);
        assert!((g[0] - 1e-12).abs() < 1e-24 && (g[4] / 1e-8 - 1.0).abs() < 1e-12);
        assert!((g[2] / 1e-10 - 1.0).abs() < 1e-12);
    }
}
