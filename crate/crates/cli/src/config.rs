//! Experiment configuration files.
//!
//! A config is a TOML document with one master seed and one optional section
//! per experiment. Unknown keys are rejected everywhere, and every parameter
//! is validated before any simulation starts. Errors carry the dotted path of
//! the offending key.

use std::path::{Path, PathBuf};

use coflow::DriftSpec;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Master seed; every random stream of the run derives from it.
    pub seed: u64,
    /// Worker pool size; `COFLOW_THREADS` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flows: Option<FlowsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub web: Option<WebConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semigroup: Option<SemigroupConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dual_drift: Option<DualDriftConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopped: Option<StoppedConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponents: Option<ExponentsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail: Option<TailConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reproducibility: Option<ReproducibilityConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// JSON report path; stdout when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    /// Directory for CSV tables.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tables: Option<PathBuf>,
}

/// Lattice realizations checked for the flow axioms, duality, backward
/// evolution and shift identities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowsConfig {
    pub drifts: Vec<DriftSpec>,
    pub realizations_per_drift: u64,
    pub x_min: f64,
    pub x_max: f64,
    pub dx: f64,
    pub dt: f64,
    pub steps: usize,
    /// Totals over all realizations.
    pub duality_samples: u64,
    pub evolution_samples: u64,
    pub shift_samples: u64,
    /// Time shift used by the equivariance and cocycle checks.
    pub shift: f64,
    /// Largest admissible fraction of particle steps frozen at the margin.
    #[serde(default = "default_clamp_fraction")]
    pub max_clamped_fraction: f64,
    /// Repeat duality and evolution with spatial points drawn on realized
    /// atoms, where ties live.
    #[serde(default)]
    pub atom_stress: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_seconds: Option<f64>,
}

fn default_clamp_fraction() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WebConfig {
    pub t_steps: u32,
    pub columns: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualCase {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemigroupConfig {
    pub drifts: Vec<DriftSpec>,
    pub horizons: Vec<f64>,
    pub cases: Vec<DualCase>,
    pub dt: f64,
    pub dx: f64,
    pub replicas: u64,
    #[serde(default = "default_se")]
    pub tolerance_se: f64,
}

fn default_se() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualDriftConfig {
    pub drifts: Vec<DriftSpec>,
    pub t: f64,
    pub y: f64,
    pub dt: f64,
    pub dx: f64,
    pub replicas: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoppedConfig {
    pub drifts: Vec<DriftSpec>,
    pub starts: Vec<Vec<f64>>,
    pub t: f64,
    pub dt: f64,
    pub replicas: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    /// `[lo, hi]` for the asymptotic check of `g^{-1}`.
    pub ginv_range: [f64; 2],
    pub ginv_points: usize,
    pub ginv_tolerance: f64,
    pub identity_eps: Vec<f64>,
    pub identity_t: Vec<f64>,
    pub identity_tolerance: f64,
    pub wbound_eps: Vec<f64>,
    pub wbound_delta: Vec<f64>,
    /// Times per `(eps, delta)` probed below the bound.
    pub wbound_grid: usize,
    pub schedule: ScheduleConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub alpha: f64,
    pub beta: f64,
    pub t: f64,
    pub n_max: u32,
    pub min_fall: f64,
    /// Constant of the cubic ordering bound, used when no exponent fit is
    /// available to calibrate it.
    #[serde(default = "default_c")]
    pub c: f64,
}

fn default_c() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlopeTarget {
    pub target: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentsConfig {
    pub drift: DriftSpec,
    pub spreads: Vec<f64>,
    pub centre: f64,
    pub a: f64,
    pub b: f64,
    pub t: f64,
    pub dt: f64,
    pub replicas: u64,
    pub two: SlopeTarget,
    pub three: SlopeTarget,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailConfig {
    pub drifts: Vec<DriftSpec>,
    pub t: f64,
    pub c: f64,
    pub x_grid: Vec<f64>,
    pub dt: f64,
    pub replicas: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReproducibilityConfig {
    /// Pool sizes the whole run is repeated with; report bodies must match
    /// byte for byte.
    pub threads: Vec<usize>,
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = from_toml(text)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    parse_config(&text)
}

/// Deserializes any TOML document, reporting the dotted path of the first
/// offending key.
pub fn from_toml<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let de = toml::Deserializer::parse(text).map_err(|e| CliError::config("<document>", e.message()))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let mut key = e.path().to_string();
        let inner = e.into_inner();
        let message = inner.message().to_string();
        // tagged enums fail on their tag without the path recording it
        if message.starts_with("unknown variant") && !key.ends_with(".kind") {
            key.push_str(".kind");
        }
        CliError::config(if key == "." { "<document>".to_string() } else { key }, message)
    })
}

fn check(ok: bool, key: impl Into<String>, message: impl ToString) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(CliError::config(key, message))
    }
}

fn positive(v: f64, key: &str) -> Result<()> {
    check(v.is_finite() && v > 0.0, key, format!("must be positive and finite, got {v}"))
}

fn multiple(t: f64, dt: f64, key: &str) -> Result<()> {
    let k = (t / dt).round();
    check(k >= 1.0 && (k * dt - t).abs() <= 1e-9 * t, key, format!("{t} is not a positive multiple of dt = {dt}"))
}

fn drifts(list: &[DriftSpec], key: &str) -> Result<()> {
    check(!list.is_empty(), key, "needs at least one drift")?;
    for (i, d) in list.iter().enumerate() {
        d.validate().map_err(|e| CliError::config(format!("{key}[{i}]"), e))?;
    }
    Ok(())
}

fn replicas(n: u64, key: &str) -> Result<()> {
    check(
        n >= coflow::motion::MIN_REPLICAS,
        key,
        format!("need at least {} replicas, got {n}", coflow::motion::MIN_REPLICAS),
    )
}

fn max_seconds(v: Option<f64>, key: &str) -> Result<()> {
    v.map_or(Ok(()), |s| positive(s, key))
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        check(!self.name.trim().is_empty(), "name", "must not be empty")?;
        if let Some(t) = self.threads {
            check(t > 0, "threads", "must be at least 1")?;
        }
        if let Some(f) = &self.flows {
            f.validate()?;
        }
        if let Some(w) = &self.web {
            coflow::web::WebWindow::new(w.t_steps, w.columns).validate().map_err(|e| CliError::config("web", e))?;
            max_seconds(w.max_seconds, "web.max_seconds")?;
        }
        if let Some(s) = &self.semigroup {
            s.validate()?;
        }
        if let Some(d) = &self.dual_drift {
            drifts(&d.drifts, "dual_drift.drifts")?;
            positive(d.dt, "dual_drift.dt")?;
            positive(d.dx, "dual_drift.dx")?;
            multiple(d.t, d.dt, "dual_drift.t")?;
            check(d.y.is_finite(), "dual_drift.y", "must be finite")?;
            replicas(d.replicas, "dual_drift.replicas")?;
        }
        if let Some(s) = &self.stopped {
            drifts(&s.drifts, "stopped.drifts")?;
            positive(s.dt, "stopped.dt")?;
            multiple(s.t, s.dt, "stopped.t")?;
            replicas(s.replicas, "stopped.replicas")?;
            check(!s.starts.is_empty(), "stopped.starts", "needs at least one start")?;
            for (i, x) in s.starts.iter().enumerate() {
                let ok =
                    (2..=3).contains(&x.len()) && x.iter().all(|v| v.is_finite()) && x.windows(2).all(|w| w[0] < w[1]);
                check(ok, format!("stopped.starts[{i}]"), "needs 2 or 3 strictly increasing points")?;
            }
        }
        if let Some(b) = &self.bounds {
            b.validate()?;
        }
        if let Some(e) = &self.exponents {
            e.validate()?;
        }
        if let Some(t) = &self.tail {
            drifts(&t.drifts, "tail.drifts")?;
            positive(t.dt, "tail.dt")?;
            multiple(t.t, t.dt, "tail.t")?;
            check(t.c.is_finite(), "tail.c", "must be finite")?;
            let ok = !t.x_grid.is_empty()
                && t.x_grid.iter().all(|v| v.is_finite())
                && t.x_grid.windows(2).all(|w| w[0] < w[1]);
            check(ok, "tail.x_grid", "must be a non-empty increasing list")?;
            replicas(t.replicas, "tail.replicas")?;
        }
        if let Some(r) = &self.reproducibility {
            check(!r.threads.is_empty(), "reproducibility.threads", "needs at least one pool size")?;
            check(r.threads.iter().all(|&t| t > 0), "reproducibility.threads", "pool sizes must be at least 1")?;
        }
        Ok(())
    }
}

impl FlowsConfig {
    pub fn spec(&self) -> coflow::LatticeSpec {
        coflow::LatticeSpec::new(0.0, self.steps, self.dt, self.x_min, self.x_max, self.dx)
    }

    fn validate(&self) -> Result<()> {
        drifts(&self.drifts, "flows.drifts")?;
        check(self.realizations_per_drift > 0, "flows.realizations_per_drift", "must be at least 1")?;
        positive(self.dt, "flows.dt")?;
        positive(self.dx, "flows.dx")?;
        check(self.steps > 0, "flows.steps", "must be at least 1")?;
        check(
            self.x_min.is_finite() && self.x_max.is_finite() && self.x_min < self.x_max,
            "flows.x_max",
            "must be finite and above flows.x_min",
        )?;
        self.spec().validate().map_err(|e| CliError::config("flows", e))?;
        let total = self.realizations_per_drift * self.drifts.len() as u64;
        for (key, n) in [
            ("flows.duality_samples", self.duality_samples),
            ("flows.evolution_samples", self.evolution_samples),
            ("flows.shift_samples", self.shift_samples),
        ] {
            check(n > 0 && n % total == 0, key, format!("must be a positive multiple of the {total} realizations"))?;
        }
        positive(self.shift, "flows.shift")?;
        multiple(self.shift, self.dt, "flows.shift")?;
        check((0.0..1.0).contains(&self.max_clamped_fraction), "flows.max_clamped_fraction", "must lie in [0, 1)")?;
        max_seconds(self.max_seconds, "flows.max_seconds")
    }
}

impl SemigroupConfig {
    fn validate(&self) -> Result<()> {
        drifts(&self.drifts, "semigroup.drifts")?;
        positive(self.dt, "semigroup.dt")?;
        positive(self.dx, "semigroup.dx")?;
        positive(self.tolerance_se, "semigroup.tolerance_se")?;
        check(!self.horizons.is_empty(), "semigroup.horizons", "needs at least one horizon")?;
        for (i, &t) in self.horizons.iter().enumerate() {
            multiple(t, self.dt, &format!("semigroup.horizons[{i}]"))?;
        }
        check(!self.cases.is_empty(), "semigroup.cases", "needs at least one case")?;
        for (i, c) in self.cases.iter().enumerate() {
            let n = c.x.len();
            let mut ok = n > 0 && c.y.len() == n && c.x.iter().chain(&c.y).all(|v| v.is_finite());
            for j in 0..n.min(c.y.len()) {
                ok &= c.x[j] <= c.y[j] && (j + 1 >= n || c.y[j] < c.x[j + 1]);
            }
            check(ok, format!("semigroup.cases[{i}]"), "x and y must interlace: x1 <= y1 < x2 <= y2 < ...")?;
            for &xj in &c.x[1..] {
                let cells = (xj - c.x[0]) / self.dx;
                check(
                    (cells - cells.round()).abs() <= 1e-9 * cells.abs().max(1.0),
                    format!("semigroup.cases[{i}].x"),
                    format!("points must lie on one grid of pitch dx = {}", self.dx),
                )?;
            }
        }
        replicas(self.replicas, "semigroup.replicas")
    }
}

impl BoundsConfig {
    fn validate(&self) -> Result<()> {
        let [lo, hi] = self.ginv_range;
        check(lo > 0.0 && lo < hi && hi <= coflow::bounds::g_max(), "bounds.ginv_range", "need 0 < lo < hi <= g(x*)")?;
        check(self.ginv_points >= 2, "bounds.ginv_points", "must be at least 2")?;
        positive(self.ginv_tolerance, "bounds.ginv_tolerance")?;
        positive(self.identity_tolerance, "bounds.identity_tolerance")?;
        for (key, list) in [
            ("bounds.identity_eps", &self.identity_eps),
            ("bounds.identity_t", &self.identity_t),
            ("bounds.wbound_eps", &self.wbound_eps),
            ("bounds.wbound_delta", &self.wbound_delta),
        ] {
            check(
                !list.is_empty() && list.iter().all(|v| v.is_finite() && *v > 0.0),
                key,
                "must be a non-empty list of positive values",
            )?;
        }
        check(self.wbound_grid > 0, "bounds.wbound_grid", "must be at least 1")?;
        let s = &self.schedule;
        coflow::bounds::BoundsProfile { c: s.c, ..coflow::bounds::BoundsProfile::brownian(s.alpha, s.beta, s.t) }
            .validate()
            .map_err(|e| CliError::config("bounds.schedule", e))?;
        check(s.n_max >= 2, "bounds.schedule.n_max", "must be at least 2")?;
        positive(s.min_fall, "bounds.schedule.min_fall")
    }
}

impl ExponentsConfig {
    fn validate(&self) -> Result<()> {
        self.drift.validate().map_err(|e| CliError::config("exponents.drift", e))?;
        let ok = self.spreads.len() >= 2 && self.spreads.iter().all(|d| d.is_finite() && *d > 0.0);
        check(ok, "exponents.spreads", "needs two or more positive spreads")?;
        check(self.a < self.b, "exponents.a", "must be below exponents.b")?;
        let widest = self.spreads.iter().cloned().fold(0.0, f64::max);
        check(
            self.centre - widest / 2.0 > self.a && self.centre + widest / 2.0 < self.b,
            "exponents.spreads",
            "the widest start must fit strictly inside [a, b]",
        )?;
        positive(self.dt, "exponents.dt")?;
        multiple(self.t, self.dt, "exponents.t")?;
        replicas(self.replicas, "exponents.replicas")?;
        positive(self.two.tolerance, "exponents.two.tolerance")?;
        positive(self.three.tolerance, "exponents.three.tolerance")?;
        max_seconds(self.max_seconds, "exponents.max_seconds")
    }
}

/// Parses `COFLOW_THREADS`, if set.
pub fn env_threads() -> Result<Option<usize>> {
    match std::env::var("COFLOW_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::config("COFLOW_THREADS", format!("expected a positive integer, got {v:?}"))),
        },
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(CliError::config("COFLOW_THREADS", e)),
    }
}
