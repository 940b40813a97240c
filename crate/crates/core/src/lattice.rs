//! Coalescing flows at lattice resolution.
//!
//! A [`FlowRealization`] is a finite sequence of one-step maps
//! `psi_{t_k, t_{k+1}}`, each a [`MonotoneStepFn`]. Maps between lattice
//! times are compositions of consecutive step maps, so the evolutionary
//! property holds exactly.
//!
//! One step moves every particle of the step's domain by an Euler–Maruyama
//! increment and then coalesces particles whose paths met during the step.
//! The domain of step `k` is the set of live particles (the image of step
//! `k-1`), together with the spatial grid when fresh starting points are
//! seeded at that step. Each domain point `x_j` owns the cell
//! `[x_j, x_{j+1})`, which the step map sends to the image of `x_j`.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::drift::DriftSpec;
use crate::error::{CoflowError, Result};
use crate::rng::{Domain, RngStreams};
use crate::step_fn::{compose, ExtendedReal, MonotoneStepFn};

pub const DUMP_VERSION: u32 = 1;

/// How meetings inside one time step are detected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeetingRule {
    /// Merge only when the proposed endpoints cross or touch.
    Endpoint,
    /// Also merge when the Brownian bridge between the endpoints of the
    /// difference process hits zero, which happens with probability
    /// `exp(-g0 * g1 / dt)` for start gap `g0` and end gap `g1`.
    #[default]
    Bridge,
}

/// Where fresh starting points enter the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Seeding {
    /// Grid points start at every lattice time.
    #[default]
    EveryStep,
    /// Grid points start only at the first lattice time; later steps move
    /// the surviving particles.
    Initial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub t0: f64,
    pub n_steps: usize,
    pub dt: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub dx: f64,
    /// Particles are frozen at `[x_min - margin, x_max + margin]`. Defaults to
    /// `max(1, 10 sqrt(dt))`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    #[serde(default)]
    pub seeding: Seeding,
    #[serde(default)]
    pub meeting: MeetingRule,
}

impl LatticeSpec {
    pub fn new(t0: f64, n_steps: usize, dt: f64, x_min: f64, x_max: f64, dx: f64) -> Self {
        Self {
            t0,
            n_steps,
            dt,
            x_min,
            x_max,
            dx,
            margin: None,
            seeding: Seeding::EveryStep,
            meeting: MeetingRule::Bridge,
        }
    }

    pub fn with_seeding(mut self, seeding: Seeding) -> Self {
        self.seeding = seeding;
        self
    }

    pub fn with_meeting(mut self, meeting: MeetingRule) -> Self {
        self.meeting = meeting;
        self
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        self.margin = Some(margin);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CoflowError::InvalidLattice(msg));
        for (name, v) in
            [("t0", self.t0), ("dt", self.dt), ("x_min", self.x_min), ("x_max", self.x_max), ("dx", self.dx)]
        {
            if !v.is_finite() {
                return bad(format!("{name} must be finite, got {v}"));
            }
        }
        if self.dt <= 0.0 {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.dx <= 0.0 {
            return bad(format!("dx must be positive, got {}", self.dx));
        }
        if self.x_min >= self.x_max {
            return bad(format!("x_min {} must be below x_max {}", self.x_min, self.x_max));
        }
        let cells = (self.x_max - self.x_min) / self.dx;
        if (cells - cells.round()).abs() > 1e-9 * cells.max(1.0) || cells.round() < 1.0 {
            return bad(format!("(x_max - x_min) / dx = {cells} is not a positive integer"));
        }
        if let Some(m) = self.margin {
            if !(m.is_finite() && m >= 0.0) {
                return bad(format!("margin must be finite and non-negative, got {m}"));
            }
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        ((self.x_max - self.x_min) / self.dx).round() as usize
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..=self.cells()).map(|j| self.x_min + j as f64 * self.dx).collect()
    }

    pub fn effective_margin(&self) -> f64 {
        self.margin.unwrap_or_else(|| (10.0 * self.dt.sqrt()).max(1.0))
    }

    pub fn horizon(&self) -> f64 {
        self.t0 + self.n_steps as f64 * self.dt
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowSource {
    Simulated,
    /// Built from explicit step maps; cannot be extended by simulation.
    Embedded,
}

/// A realization of the flow on a window of lattice times
/// `t0, t0 + dt, ..., t0 + len * dt`.
#[derive(Debug, Clone)]
pub struct FlowRealization {
    spec: LatticeSpec,
    drift: DriftSpec,
    seed: u64,
    replica: u64,
    source: FlowSource,
    /// Absolute step index of `steps[0]`.
    first_step: i64,
    steps: Arc<Vec<MonotoneStepFn>>,
    clamped: Arc<Vec<u32>>,
    particles: Arc<Vec<u32>>,
    offset: usize,
    len: usize,
}

impl PartialEq for FlowRealization {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
            && self.drift == other.drift
            && self.seed == other.seed
            && self.replica == other.replica
            && self.source == other.source
            && self.origin() == other.origin()
            && self.step_maps() == other.step_maps()
    }
}

/// Outcome of one simulated step.
struct StepOutcome {
    map: MonotoneStepFn,
    clamped: u32,
    particles: u32,
}

fn merge_sorted_dedup(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let v = if j == b.len() || (i < a.len() && a[i] <= b[j]) {
            i += 1;
            a[i - 1]
        } else {
            j += 1;
            b[j - 1]
        };
        if out.last() != Some(&v) {
            out.push(v);
        }
    }
    out
}

fn simulate_step(
    spec: &LatticeSpec,
    drift: &DriftSpec,
    streams: RngStreams,
    replica: u64,
    abs_step: i64,
    live: &[f64],
    grid: Option<&[f64]>,
) -> StepOutcome {
    let domain = match grid {
        Some(g) => merge_sorted_dedup(g, live),
        None => live.to_vec(),
    };
    let n = domain.len();
    let dt = spec.dt;
    let sqrt_dt = dt.sqrt();
    let margin = spec.effective_margin();
    let (lo, hi) = (spec.x_min - margin, spec.x_max + margin);
    let mut rng = streams.stream(Domain::Flow, replica, RngStreams::step_stream(abs_step));

    let mut images = Vec::with_capacity(n);
    let mut clamped = 0u32;
    let mut prev: Option<(f64, f64)> = None; // (start, image) of the previous particle
    for &x in &domain {
        let z: f64 = rng.sample(StandardNormal);
        let u: f64 = rng.random();
        let mut p = x + drift.eval(x) * dt + sqrt_dt * z;
        if !(lo..=hi).contains(&p) {
            p = p.clamp(lo, hi);
            clamped += 1;
        }
        let img = match prev {
            None => p,
            Some((_, prev_img)) if p <= prev_img => prev_img,
            Some((prev_x, prev_img)) => match spec.meeting {
                MeetingRule::Endpoint => p,
                MeetingRule::Bridge => {
                    let hit = (-(x - prev_x) * (p - prev_img) / dt).exp();
                    if u < hit {
                        prev_img
                    } else {
                        p
                    }
                }
            },
        };
        images.push(img);
        prev = Some((x, img));
    }
    let bp = domain[1..].to_vec();
    StepOutcome { map: MonotoneStepFn::canonical(bp, images), clamped, particles: n as u32 }
}

/// Simulates replica 0 of the flow for `(spec, drift, seed)`.
pub fn simulate_flow(spec: &LatticeSpec, drift: &DriftSpec, seed: u64) -> Result<FlowRealization> {
    simulate_flow_replica(spec, drift, seed, 0)
}

/// Simulates one replica. Output depends only on `(spec, drift, seed,
/// replica)`.
pub fn simulate_flow_replica(
    spec: &LatticeSpec,
    drift: &DriftSpec,
    seed: u64,
    replica: u64,
) -> Result<FlowRealization> {
    spec.validate()?;
    drift.validate()?;
    drift.verify_lipschitz(spec.x_min, spec.x_max, 256)?;
    let grid = spec.grid();
    let streams = RngStreams::new(seed);
    let mut steps = Vec::with_capacity(spec.n_steps);
    let mut clamped = Vec::with_capacity(spec.n_steps);
    let mut particles = Vec::with_capacity(spec.n_steps);
    let mut live: Vec<f64> = Vec::new();
    for k in 0..spec.n_steps {
        let seed_grid = k == 0 || spec.seeding == Seeding::EveryStep;
        let out = simulate_step(spec, drift, streams, replica, k as i64, &live, seed_grid.then_some(grid.as_slice()));
        live = out.map.values().to_vec();
        steps.push(out.map);
        clamped.push(out.clamped);
        particles.push(out.particles);
    }
    let len = steps.len();
    Ok(FlowRealization {
        spec: spec.clone(),
        drift: *drift,
        seed,
        replica,
        source: FlowSource::Simulated,
        first_step: 0,
        steps: Arc::new(steps),
        clamped: Arc::new(clamped),
        particles: Arc::new(particles),
        offset: 0,
        len,
    })
}

impl FlowRealization {
    /// Wraps explicit step maps; `spec.n_steps` is overwritten with their
    /// count.
    pub fn from_step_maps(mut spec: LatticeSpec, steps: Vec<MonotoneStepFn>) -> Result<Self> {
        spec.n_steps = steps.len();
        spec.validate()?;
        let len = steps.len();
        Ok(Self {
            spec,
            drift: DriftSpec::Zero,
            seed: 0,
            replica: 0,
            source: FlowSource::Embedded,
            first_step: 0,
            clamped: Arc::new(vec![0; len]),
            particles: Arc::new(steps.iter().map(|s| s.breakpoints().len() as u32 + 1).collect()),
            steps: Arc::new(steps),
            offset: 0,
            len,
        })
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn drift(&self) -> &DriftSpec {
        &self.drift
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn replica(&self) -> u64 {
        self.replica
    }

    pub fn source(&self) -> FlowSource {
        self.source
    }

    /// Number of visible steps.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Absolute step index of the first visible step.
    pub fn origin(&self) -> i64 {
        self.first_step + self.offset as i64
    }

    pub fn step_maps(&self) -> &[MonotoneStepFn] {
        &self.steps[self.offset..self.offset + self.len]
    }

    pub fn step_map(&self, k: usize) -> &MonotoneStepFn {
        &self.steps[self.offset + k]
    }

    /// Particles frozen at the spatial margin over the visible steps.
    pub fn clamped_count(&self) -> u64 {
        self.clamped[self.offset..self.offset + self.len].iter().map(|&c| c as u64).sum()
    }

    /// Particle moves over the visible steps.
    pub fn particle_steps(&self) -> u64 {
        self.particles[self.offset..self.offset + self.len].iter().map(|&c| c as u64).sum()
    }

    pub fn start_time(&self) -> f64 {
        self.spec.t0
    }

    pub fn end_time(&self) -> f64 {
        self.time_of(self.len)
    }

    pub fn time_of(&self, k: usize) -> f64 {
        self.spec.t0 + k as f64 * self.spec.dt
    }

    /// Local index of a lattice time in the visible window.
    pub fn index_of(&self, time: f64) -> Result<usize> {
        let k = (time - self.spec.t0) / self.spec.dt;
        let r = k.round();
        let tol = 1e-9 * r.abs().max(1.0);
        if !time.is_finite() || (k - r).abs() > tol || r < 0.0 || r > self.len as f64 {
            return Err(CoflowError::NotLatticeTime {
                time,
                start: self.start_time(),
                end: self.end_time(),
                dt: self.spec.dt,
            });
        }
        Ok(r as usize)
    }

    fn pair(&self, s: f64, t: f64) -> Result<(usize, usize)> {
        let i = self.index_of(s)?;
        let j = self.index_of(t)?;
        if i > j {
            return Err(CoflowError::TimeOrder { s, t });
        }
        Ok((i, j))
    }

    /// `psi_{s,t}(x)`; `s == t` returns `x` unchanged.
    pub fn evaluate(&self, s: f64, t: f64, x: f64) -> Result<f64> {
        let (i, j) = self.pair(s, t)?;
        Ok(self.evaluate_local(i, j, x))
    }

    pub fn evaluate_local(&self, i: usize, j: usize, x: f64) -> f64 {
        self.step_maps()[i..j].iter().fold(x, |acc, f| f.evaluate(acc))
    }

    /// `psi_{s,t}` as a step function, or `None` for the identity (`s == t`).
    pub fn composed(&self, s: f64, t: f64) -> Result<Option<MonotoneStepFn>> {
        let (i, j) = self.pair(s, t)?;
        Ok(self.composed_local(i, j))
    }

    pub fn composed_local(&self, i: usize, j: usize) -> Option<MonotoneStepFn> {
        let maps = &self.step_maps()[i..j];
        let (first, rest) = maps.split_first()?;
        Some(rest.iter().fold(first.clone(), |acc, g| compose(g, &acc)))
    }

    /// `inf { x : psi_{i,j}(x) > y }`, computed step by step backwards
    /// without materializing the composition.
    pub fn v_plus_local(&self, i: usize, j: usize, y: f64) -> ExtendedReal {
        self.inverse_local(i, j, y, true).0
    }

    /// `inf { x : psi_{i,j}(x) >= y }`.
    pub fn v_minus_local(&self, i: usize, j: usize, y: f64) -> ExtendedReal {
        self.inverse_local(i, j, y, false).0
    }

    /// Backward recursion for the generalized inverses. The level set
    /// `{w : f(w) > y}` of a right-continuous step map is `[v_plus(f, y), inf)`
    /// and `{w : f(w) >= y}` is `[v_minus(f, y), inf)`, so after the last map
    /// only `v_minus` queries remain. Also reports whether the last map
    /// attains `y`, which every value attained by the composition does.
    pub(crate) fn inverse_local(&self, i: usize, j: usize, y: f64, strict: bool) -> (ExtendedReal, bool) {
        if i == j {
            return (ExtendedReal::Finite(y), false);
        }
        let maps = &self.step_maps()[i..j];
        let last = &maps[maps.len() - 1];
        let attained = last.attains(y);
        let mut z = if strict { last.v_plus(y) } else { last.v_minus(y) };
        for f in maps[..maps.len() - 1].iter().rev() {
            match z {
                ExtendedReal::Finite(v) => z = f.v_minus(v),
                _ => break,
            }
        }
        (z, attained)
    }

    /// `theta_h`: `(theta_h w)_{s,t} = w_{s+h,t+h}`. When the shifted window
    /// runs past the stored steps, `extend` continues the simulation with
    /// the same streams; shifting before the first stored step is an error.
    pub fn shift(&self, h: f64, extend: bool) -> Result<FlowRealization> {
        let m = h / self.spec.dt;
        let mr = m.round();
        if !h.is_finite() || (m - mr).abs() > 1e-9 * mr.abs().max(1.0) {
            return Err(CoflowError::ShiftNotLattice(h));
        }
        let m = mr as i64;
        let new_offset = self.offset as i64 + m;
        if new_offset < 0 {
            return Err(CoflowError::ShiftOutOfData(format!(
                "shift by {h} starts {} steps before the first simulated step",
                -new_offset
            )));
        }
        let new_offset = new_offset as usize;
        let needed = new_offset + self.len;
        let mut out = self.clone();
        out.offset = new_offset;
        if needed <= self.steps.len() {
            return Ok(out);
        }
        if !extend {
            return Err(CoflowError::ShiftOutOfData(format!(
                "shift by {h} needs {} steps beyond the simulated data",
                needed - self.steps.len()
            )));
        }
        if self.source != FlowSource::Simulated || self.steps.is_empty() {
            return Err(CoflowError::ShiftOutOfData("only simulated flows can be extended".into()));
        }
        let grid = self.spec.grid();
        let streams = RngStreams::new(self.seed);
        let mut steps = (*self.steps).clone();
        let mut clamped = (*self.clamped).clone();
        let mut particles = (*self.particles).clone();
        while steps.len() < needed {
            let abs = self.first_step + steps.len() as i64;
            let live = steps.last().unwrap().values().to_vec();
            let seed_grid = self.spec.seeding == Seeding::EveryStep;
            let st = simulate_step(
                &self.spec,
                &self.drift,
                streams,
                self.replica,
                abs,
                &live,
                seed_grid.then_some(grid.as_slice()),
            );
            steps.push(st.map);
            clamped.push(st.clamped);
            particles.push(st.particles);
        }
        out.steps = Arc::new(steps);
        out.clamped = Arc::new(clamped);
        out.particles = Arc::new(particles);
        Ok(out)
    }

    /// Forward cocycle `phi(tau, w, x) = w_{t0, t0 + tau}(x)`.
    pub fn cocycle(&self, tau: f64, x: f64) -> Result<f64> {
        self.evaluate(self.spec.t0, self.spec.t0 + tau, x)
    }

    pub fn to_dump(&self) -> FlowDump {
        FlowDump {
            version: DUMP_VERSION,
            spec: LatticeSpec { n_steps: self.len, ..self.spec.clone() },
            drift: self.drift,
            seed: self.seed,
            replica: self.replica,
            source: self.source,
            origin: self.origin(),
            step_maps: self.step_maps().to_vec(),
        }
    }

    pub fn from_dump(dump: FlowDump) -> Result<Self> {
        if dump.version != DUMP_VERSION {
            return Err(CoflowError::InvalidArgument(format!(
                "unsupported flow dump version {} (expected {DUMP_VERSION})",
                dump.version
            )));
        }
        if dump.step_maps.len() != dump.spec.n_steps {
            return Err(CoflowError::InvalidArgument(format!(
                "dump declares {} steps but carries {}",
                dump.spec.n_steps,
                dump.step_maps.len()
            )));
        }
        dump.spec.validate()?;
        dump.drift.validate()?;
        let len = dump.step_maps.len();
        Ok(Self {
            spec: dump.spec,
            drift: dump.drift,
            seed: dump.seed,
            replica: dump.replica,
            source: dump.source,
            first_step: dump.origin,
            clamped: Arc::new(vec![0; len]),
            particles: Arc::new(dump.step_maps.iter().map(|s| s.breakpoints().len() as u32 + 1).collect()),
            steps: Arc::new(dump.step_maps),
            offset: 0,
            len,
        })
    }
}

/// Versioned on-disk form of a realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowDump {
    pub version: u32,
    pub spec: LatticeSpec,
    pub drift: DriftSpec,
    pub seed: u64,
    #[serde(default)]
    pub replica: u64,
    #[serde(default = "default_source")]
    pub source: FlowSource,
    #[serde(default)]
    pub origin: i64,
    pub step_maps: Vec<MonotoneStepFn>,
}

fn default_source() -> FlowSource {
    FlowSource::Simulated
}

// ---------------------------------------------------------------------------
// Axiom checks

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AxiomCheckOptions {
    /// Number of evenly spaced lattice times on which every triple is
    /// checked as an identity of step functions.
    pub coarse_times: usize,
    /// Random lattice triples checked pointwise.
    pub triple_samples: usize,
    /// Random `(s, t)` pairs for the one-sided continuity checks.
    pub pair_samples: usize,
    /// Random spatial points per pair or triple.
    pub x_samples: usize,
    /// Largest admissible gap of the range set inside the core window.
    /// Defaults to `10 sqrt(dt)`.
    pub range_pitch_threshold: Option<f64>,
    pub seed: u64,
}

impl Default for AxiomCheckOptions {
    fn default() -> Self {
        Self {
            coarse_times: 11,
            triple_samples: 2000,
            pair_samples: 20,
            x_samples: 16,
            range_pitch_threshold: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomVerdict {
    pub checked: u64,
    pub violations: u64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl AxiomVerdict {
    fn new(checked: u64, violations: u64) -> Self {
        Self { checked, violations, pass: violations == 0, note: None }
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangePitch {
    pub max_gap: f64,
    pub threshold: f64,
    pub times_checked: u64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub c1: AxiomVerdict,
    pub c2: AxiomVerdict,
    pub c3: RangePitch,
    pub c4: AxiomVerdict,
    pub c5: AxiomVerdict,
    pub monotonicity: AxiomVerdict,
    pub clamped_particles: u64,
    pub particle_steps: u64,
}

impl AxiomReport {
    pub fn all_pass(&self) -> bool {
        self.c1.pass && self.c2.pass && self.c3.pass && self.c4.pass && self.c5.pass && self.monotonicity.pass
    }
}

pub fn check_axioms(flow: &FlowRealization, opts: &AxiomCheckOptions) -> AxiomReport {
    let n = flow.len();
    let spec = flow.spec();
    let mut rng = RngStreams::new(opts.seed).stream(Domain::Sampling, flow.replica(), 0);
    let width = spec.x_max - spec.x_min;
    let rand_x = |rng: &mut rand_chacha::ChaCha8Rng| spec.x_min + width * rng.random::<f64>();

    // C1: all triples on a coarse sub-lattice as step-function identities,
    // then random full-lattice triples pointwise.
    let mut c1_checked = 0u64;
    let mut c1_viol = 0u64;
    if n > 0 {
        let k = opts.coarse_times.clamp(2, n + 1);
        let mut idx: Vec<usize> = (0..k).map(|i| i * n / (k - 1)).collect();
        idx.dedup();
        let seg: Vec<Option<MonotoneStepFn>> = idx.windows(2).map(|w| flow.composed_local(w[0], w[1])).collect();
        // table[a][b] = psi_{idx[a], idx[b]}
        let m = idx.len();
        let mut table: Vec<Vec<Option<MonotoneStepFn>>> = vec![vec![None; m]; m];
        for (a, row) in table.iter_mut().enumerate() {
            for b in a + 1..m {
                row[b] = match &row[b - 1] {
                    None => seg[b - 1].clone(),
                    Some(prev) => seg[b - 1].as_ref().map(|g| compose(g, prev)),
                };
            }
        }
        for a in 0..m {
            for b in a + 1..m {
                for c in b + 1..m {
                    c1_checked += 1;
                    let lhs = match (&table[b][c], &table[a][b]) {
                        (Some(g), Some(f)) => Some(compose(g, f)),
                        _ => None,
                    };
                    if lhs != table[a][c] {
                        c1_viol += 1;
                    }
                }
            }
        }
        for _ in 0..opts.triple_samples {
            let mut tri = [rng.random_range(0..=n), rng.random_range(0..=n), rng.random_range(0..=n)];
            tri.sort_unstable();
            let [r, s, t] = tri;
            let x = rand_x(&mut rng);
            c1_checked += 1;
            let direct = flow.evaluate_local(r, t, x);
            let two_leg = flow.evaluate_local(s, t, flow.evaluate_local(r, s, x));
            if direct.to_bits() != two_leg.to_bits() {
                c1_viol += 1;
            }
        }
    }

    // C2: every map with s < t has a finite image; unboundedness of the
    // image is waived at the window boundary.
    let c2 = if n == 0 {
        AxiomVerdict::new(1, 1).with_note("no maps with s < t: the identity image is all of R")
    } else {
        let mut viol = 0u64;
        for f in flow.step_maps() {
            let inside = f.values().iter().filter(|v| (spec.x_min..=spec.x_max).contains(*v)).count();
            if inside == 0 || f.values().iter().any(|v| !v.is_finite()) {
                viol += 1;
            }
        }
        AxiomVerdict::new(n as u64, viol).with_note("image unboundedness waived at the spatial boundary")
    };

    // C3 proxy: the range set at time s is the image of the last step map
    // before s; report its largest gap inside the core window.
    let threshold = opts.range_pitch_threshold.unwrap_or(10.0 * spec.dt.sqrt());
    let core_lo = spec.x_min + 0.1 * width;
    let core_hi = spec.x_max - 0.1 * width;
    let mut max_gap = 0.0f64;
    for f in flow.step_maps() {
        let mut last = core_lo;
        for &v in f.values().iter().filter(|v| (core_lo..=core_hi).contains(*v)) {
            max_gap = max_gap.max(v - last);
            last = v;
        }
        max_gap = max_gap.max(core_hi - last);
    }
    let c3 = RangePitch { max_gap, threshold, times_checked: n as u64, pass: n > 0 && max_gap <= threshold };

    // C4, C5 and monotonicity on sampled (s, t) pairs. Values come from
    // step-by-step evaluation, one-sided limits from the composed map.
    let mut c4 = (0u64, 0u64);
    let mut c5 = (0u64, 0u64);
    let mut mono = (0u64, 0u64);
    for f in flow.step_maps() {
        mono.0 += 1;
        if f.values().windows(2).any(|w| w[0] > w[1]) {
            mono.1 += 1;
        }
    }
    if n > 0 {
        for _ in 0..opts.pair_samples {
            let mut pr = [rng.random_range(0..n), rng.random_range(0..=n)];
            pr.sort_unstable();
            let [i, j] = pr;
            let j = j.max(i + 1);
            let g = flow.composed_local(i, j).expect("i < j");
            let range_before = if i == 0 { None } else { Some(flow.step_map(i - 1)) };
            let mut xs: Vec<f64> = (0..opts.x_samples).map(|_| rand_x(&mut rng)).collect();
            let bps = g.breakpoints();
            for _ in 0..opts.x_samples.min(bps.len()) {
                xs.push(bps[rng.random_range(0..bps.len())]);
            }
            if let Some(r) = range_before {
                let vals = r.values();
                for _ in 0..opts.x_samples.min(vals.len()) {
                    xs.push(vals[rng.random_range(0..vals.len())]);
                }
            }
            for &x in &xs {
                let value = flow.evaluate_local(i, j, x);
                let (l, r) = (g.left_limit(x), g.right_limit(x));
                c4.0 += 1;
                if value != l && value != r {
                    c4.1 += 1;
                }
                let in_range = range_before.is_some_and(|f| f.attains(x));
                if !in_range {
                    c5.0 += 1;
                    if value != r {
                        c5.1 += 1;
                    }
                }
            }
            xs.sort_by(f64::total_cmp);
            let vals: Vec<f64> = xs.iter().map(|&x| flow.evaluate_local(i, j, x)).collect();
            mono.0 += 1;
            if vals.windows(2).any(|w| w[0] > w[1]) {
                mono.1 += 1;
            }
        }
    }

    AxiomReport {
        c1: AxiomVerdict::new(c1_checked, c1_viol),
        c2,
        c3,
        c4: AxiomVerdict::new(c4.0, c4.1),
        c5: AxiomVerdict::new(c5.0, c5.1),
        monotonicity: AxiomVerdict::new(mono.0, mono.1),
        clamped_particles: flow.clamped_count(),
        particle_steps: flow.particle_steps(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> LatticeSpec {
        LatticeSpec::new(0.0, 20, 0.01, -2.0, 2.0, 0.05)
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = small_spec();
        s.dt = 0.0;
        assert!(simulate_flow(&s, &DriftSpec::Zero, 1).is_err());
        let mut s = small_spec();
        s.dx = -0.1;
        assert!(simulate_flow(&s, &DriftSpec::Zero, 1).is_err());
        let mut s = small_spec();
        s.dx = 0.3;
        assert!(matches!(s.validate(), Err(CoflowError::InvalidLattice(_))));
        assert!(simulate_flow(&small_spec(), &DriftSpec::Constant { c: f64::INFINITY }, 1).is_err());
    }

    #[test]
    fn deterministic() {
        let a = simulate_flow(&small_spec(), &DriftSpec::Zero, 42).unwrap();
        let b = simulate_flow(&small_spec(), &DriftSpec::Zero, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(serde_json::to_string(&a.to_dump()).unwrap(), serde_json::to_string(&b.to_dump()).unwrap());
        let c = simulate_flow(&small_spec(), &DriftSpec::Zero, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn identity_and_evolution() {
        let f = simulate_flow(&small_spec(), &DriftSpec::Sine { amplitude: 1.0, wavenumber: 1.0 }, 5).unwrap();
        assert_eq!(f.evaluate(0.1, 0.1, 0.123).unwrap(), 0.123);
        for &x in &[-1.0, -0.03, 0.0, 0.51, 1.7] {
            for r in 0..=20 {
                for s in r..=20 {
                    for t in s..=20 {
                        let direct = f.evaluate_local(r, t, x);
                        let legs = f.evaluate_local(s, t, f.evaluate_local(r, s, x));
                        assert_eq!(direct.to_bits(), legs.to_bits());
                    }
                }
            }
        }
        assert!(f.evaluate(0.2, 0.1, 0.0).is_err());
        assert!(f.evaluate(0.0, 0.205, 0.0).is_err());
        assert!(f.evaluate(0.0, 0.3, 0.0).is_err());
    }

    #[test]
    fn single_step_is_a_lookup() {
        let spec = LatticeSpec::new(0.0, 1, 0.01, -1.0, 1.0, 0.1);
        let f = simulate_flow(&spec, &DriftSpec::Zero, 9).unwrap();
        let map = f.step_map(0);
        for (j, g) in spec.grid().iter().enumerate() {
            // interior of the cell [g, g + dx) maps like g itself
            let inside = g + 0.5 * spec.dx;
            assert_eq!(f.evaluate(0.0, 0.01, *g).unwrap(), map.evaluate(*g), "cell {j}");
            if j < spec.cells() {
                assert_eq!(f.evaluate(0.0, 0.01, inside).unwrap(), map.evaluate(*g));
            }
        }
    }

    #[test]
    fn distinct_images_stay_distinct_and_ordered() {
        let spec = LatticeSpec::new(0.0, 1, 0.01, -1.0, 1.0, 0.1);
        for seed in 0..20 {
            let f = simulate_flow(&spec, &DriftSpec::Zero, seed).unwrap();
            let imgs: Vec<f64> = spec.grid().iter().map(|&g| f.evaluate_local(0, 1, g)).collect();
            assert!(imgs.windows(2).all(|w| w[0] <= w[1]));
            let mut d = imgs.clone();
            d.dedup();
            assert_eq!(d.as_slice(), f.step_map(0).values());
        }
    }

    #[test]
    fn shift_group_law_and_cocycle() {
        let spec = LatticeSpec::new(0.0, 30, 0.01, -2.0, 2.0, 0.05);
        let f = simulate_flow(&spec, &DriftSpec::Zero, 3).unwrap();
        assert_eq!(f.shift(0.0, false).unwrap(), f);
        let a = f.shift(0.03, true).unwrap().shift(0.05, true).unwrap();
        let b = f.shift(0.08, true).unwrap();
        assert_eq!(a, b);
        assert!(f.shift(0.015, true).is_err());
        assert!(f.shift(-0.01, true).is_err());
        assert!(f.shift(0.05, false).is_err());
        // theta_h flow equals the original on overlapping data
        let g = f.shift(0.05, false).unwrap_err();
        assert!(matches!(g, CoflowError::ShiftOutOfData(_)));
        let shifted = f.shift(0.1, true).unwrap();
        for s in 0..=20usize {
            for t in s..=20 {
                let x = -0.37 + 0.01 * s as f64;
                assert_eq!(shifted.evaluate_local(s, t, x).to_bits(), f.evaluate_local(s + 10, t + 10, x).to_bits());
                // phi(t - s, theta_s w, x) == psi_{s,t}(w, x)
                let th = f.shift(s as f64 * 0.01, true).unwrap();
                let phi = th.cocycle((t - s) as f64 * 0.01, x).unwrap();
                assert_eq!(phi.to_bits(), f.evaluate_local(s, t, x).to_bits());
            }
        }
    }

    #[test]
    fn extension_matches_longer_simulation() {
        let spec = LatticeSpec::new(0.0, 10, 0.01, -2.0, 2.0, 0.05);
        let long = simulate_flow(&LatticeSpec { n_steps: 15, ..spec.clone() }, &DriftSpec::Zero, 11).unwrap();
        let short = simulate_flow(&spec, &DriftSpec::Zero, 11).unwrap();
        let ext = short.shift(0.05, true).unwrap();
        assert_eq!(ext.step_maps(), &long.step_maps()[5..15]);
    }

    #[test]
    fn dump_round_trip() {
        let f = simulate_flow(&small_spec(), &DriftSpec::Linear { c0: 0.0, c1: -1.0 }, 8).unwrap();
        let text = serde_json::to_string(&f.to_dump()).unwrap();
        let back = FlowRealization::from_dump(serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, f);
        let mut bad: FlowDump = serde_json::from_str(&text).unwrap();
        bad.version = 99;
        assert!(FlowRealization::from_dump(bad).is_err());
    }

    #[test]
    fn inverse_recursion_matches_composition() {
        let f = simulate_flow(&small_spec(), &DriftSpec::Zero, 21).unwrap();
        let mut rng = RngStreams::new(1).stream(Domain::Sampling, 0, 0);
        for _ in 0..500 {
            let i = rng.random_range(0..20);
            let j = rng.random_range(i + 1..=20);
            let g = f.composed_local(i, j).unwrap();
            let y = if rng.random::<bool>() {
                -1.0 + 2.0 * rng.random::<f64>()
            } else {
                g.values()[rng.random_range(0..g.values().len())]
            };
            assert_eq!(f.v_plus_local(i, j, y), g.v_plus(y));
            assert_eq!(f.v_minus_local(i, j, y), g.v_minus(y));
        }
    }

    #[test]
    fn axioms_hold_on_simulated_flow() {
        let spec = LatticeSpec::new(0.0, 100, 0.01, -3.0, 3.0, 0.01);
        let f = simulate_flow(&spec, &DriftSpec::Zero, 17).unwrap();
        let rep = check_axioms(&f, &AxiomCheckOptions::default());
        assert_eq!(rep.c1.violations, 0);
        assert_eq!(rep.c4.violations, 0);
        assert_eq!(rep.c5.violations, 0);
        assert_eq!(rep.monotonicity.violations, 0);
        assert!(rep.c2.pass);
        assert!(rep.c3.pass, "range pitch {} > {}", rep.c3.max_gap, rep.c3.threshold);
    }

    #[test]
    fn zero_step_flow_fails_c2() {
        let spec = LatticeSpec::new(0.0, 0, 0.01, -1.0, 1.0, 0.1);
        let f = simulate_flow(&spec, &DriftSpec::Zero, 1).unwrap();
        let rep = check_axioms(&f, &AxiomCheckOptions::default());
        assert!(!rep.c2.pass);
        assert_eq!(rep.c1.violations, 0);
    }
}
