//! Direct Euler–Maruyama simulation of coalescing n-point motions, and the
//! Monte Carlo estimators built on it.
//!
//! The simulator here never touches the flow lattice; where an estimator
//! needs the backward flow (the duality relation, the dual drift) it draws
//! fresh lattice realizations and evaluates their duals.
//!
//! Coordinate `i` of replica `r` reads its Gaussian increments from stream
//! `(Motion, r, i)` and its bridge uniforms from `(MotionAux, r, i)`. Every
//! coordinate draws once per step whether or not it still leads its class,
//! so a coalescing and an independent system fed the same seed see the same
//! increments.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::drift::DriftSpec;
use crate::dual::{dual_evaluate_local, DualRule};
use crate::error::{CoflowError, Result};
use crate::exec::{fold_replicas, map_replicas};
use crate::lattice::{simulate_flow_replica, LatticeSpec, MeetingRule, Seeding};
use crate::rng::{Domain, RngStreams};
use crate::stats::{binomial_se, ks_one_sample, ks_two_sample, normal_cdf, KsResult};

/// Minimum replica count accepted by the estimators.
pub const MIN_REPLICAS: u64 = 1000;

/// Significance level of every distributional test in this module.
pub const KS_ALPHA: f64 = 0.01;

/// Time discretization of the direct simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionParams {
    pub dt: f64,
    #[serde(default)]
    pub meeting: MeetingRule,
}

impl MotionParams {
    pub fn new(dt: f64) -> Self {
        Self { dt, meeting: MeetingRule::Bridge }
    }

    pub fn with_meeting(mut self, meeting: MeetingRule) -> Self {
        self.meeting = meeting;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(CoflowError::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        Ok(())
    }

    /// Number of steps covering `[0, t]`; `t` must be a multiple of `dt`.
    pub fn steps(&self, t: f64) -> Result<usize> {
        self.validate()?;
        if !(t.is_finite() && t > 0.0) {
            return Err(CoflowError::InvalidArgument(format!("horizon must be positive, got {t}")));
        }
        let k = (t / self.dt).round();
        if k < 1.0 || (k * self.dt - t).abs() > 1e-9 * t {
            return Err(CoflowError::InvalidArgument(format!("horizon {t} is not a multiple of dt {}", self.dt)));
        }
        Ok(k as usize)
    }
}

fn validate_start(start: &[f64]) -> Result<()> {
    if start.is_empty() {
        return Err(CoflowError::InvalidArgument("start must have at least one coordinate".into()));
    }
    if start.iter().any(|x| !x.is_finite()) {
        return Err(CoflowError::InvalidArgument(format!("start must be finite, got {start:?}")));
    }
    if start.windows(2).any(|w| w[0] > w[1]) {
        return Err(CoflowError::InvalidArgument(format!("start must be ordered, got {start:?}")));
    }
    Ok(())
}

/// Per-coordinate noise of one replica.
struct Noise {
    normal: Vec<ChaCha8Rng>,
    uniform: Vec<ChaCha8Rng>,
    z: Vec<f64>,
    u: Vec<f64>,
}

impl Noise {
    fn new(seed: u64, replica: u64, n: usize) -> Self {
        let streams = RngStreams::new(seed);
        Self {
            normal: (0..n).map(|i| streams.stream(Domain::Motion, replica, i as u64)).collect(),
            uniform: (0..n).map(|i| streams.stream(Domain::MotionAux, replica, i as u64)).collect(),
            z: vec![0.0; n],
            u: vec![0.0; n],
        }
    }

    fn draw(&mut self) {
        for i in 0..self.z.len() {
            self.z[i] = self.normal[i].sample(StandardNormal);
            self.u[i] = self.uniform[i].random();
        }
    }
}

/// Coalescing state: positions plus, per coordinate, the first index of its
/// class.
#[derive(Debug, Clone, PartialEq)]
struct Coalescing {
    x: Vec<f64>,
    leader: Vec<usize>,
}

impl Coalescing {
    fn new(start: &[f64]) -> Self {
        let mut leader = vec![0; start.len()];
        for i in 1..start.len() {
            leader[i] = if start[i] == start[i - 1] { leader[i - 1] } else { i };
        }
        Self { x: start.to_vec(), leader }
    }

    /// One step; classes are scanned left to right exactly as on the flow
    /// lattice. Returns whether two classes merged.
    fn step(&mut self, drift: &DriftSpec, params: &MotionParams, noise: &Noise) -> bool {
        let dt = params.dt;
        let sqrt_dt = dt.sqrt();
        let n = self.x.len();
        let mut merged = false;
        let mut prev: Option<(f64, f64, usize)> = None; // (start, image, leader)
        let mut i = 0;
        while i < n {
            let li = self.leader[i];
            let mut j = i + 1;
            while j < n && self.leader[j] == li {
                j += 1;
            }
            let xi = self.x[i];
            let p = xi + drift.eval(xi) * dt + sqrt_dt * noise.z[li];
            let (img, lead) = match prev {
                None => (p, li),
                Some((_, pimg, pl)) if p <= pimg => {
                    merged = true;
                    (pimg, pl)
                }
                Some((px, pimg, pl)) => {
                    let hit =
                        params.meeting == MeetingRule::Bridge && noise.u[li] < (-(xi - px) * (p - pimg) / dt).exp();
                    if hit {
                        merged = true;
                        (pimg, pl)
                    } else {
                        (p, li)
                    }
                }
            };
            for k in i..j {
                self.x[k] = img;
                self.leader[k] = lead;
            }
            prev = Some((xi, img, lead));
            i = j;
        }
        merged
    }

    /// Class label of each coordinate, numbered 0, 1, … from the left.
    fn classes(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.x.len());
        let mut c = 0;
        for i in 0..self.x.len() {
            if i > 0 && self.leader[i] != self.leader[i - 1] {
                c += 1;
            }
            out.push(c);
        }
        out
    }
}

/// Independent (non-coalescing) motions. Returns whether some adjacent pair
/// met during the step; positions are left at the proposals either way.
fn independent_step(x: &mut [f64], drift: &DriftSpec, params: &MotionParams, noise: &Noise) -> bool {
    let dt = params.dt;
    let sqrt_dt = dt.sqrt();
    let old = x.to_vec();
    for i in 0..x.len() {
        x[i] = old[i] + drift.eval(old[i]) * dt + sqrt_dt * noise.z[i];
    }
    (1..x.len()).any(|i| {
        x[i] <= x[i - 1]
            || (params.meeting == MeetingRule::Bridge
                && noise.u[i] < (-(old[i] - old[i - 1]) * (x[i] - x[i - 1]) / dt).exp())
    })
}

/// A sampled n-point path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NPointPath {
    pub start: Vec<f64>,
    pub drift: DriftSpec,
    pub params: MotionParams,
    pub seed: u64,
    pub replica: u64,
    /// `times[k] = k * dt`.
    pub times: Vec<f64>,
    /// `positions[k]` is the state at `times[k]`.
    pub positions: Vec<Vec<f64>>,
    /// Coalescence classes at each recorded time.
    pub classes: Vec<Vec<usize>>,
}

impl NPointPath {
    pub fn final_position(&self) -> &[f64] {
        self.positions.last().expect("a path has at least its start")
    }
}

/// Simulates replica `replica` of the coalescing motion from `start` up to
/// time `t`, recording every step.
pub fn simulate_npoint(
    start: &[f64],
    drift: &DriftSpec,
    params: &MotionParams,
    t: f64,
    seed: u64,
    replica: u64,
) -> Result<NPointPath> {
    validate_start(start)?;
    drift.validate()?;
    let k = params.steps(t)?;
    let mut noise = Noise::new(seed, replica, start.len());
    let mut state = Coalescing::new(start);
    let mut positions = vec![state.x.clone()];
    let mut classes = vec![state.classes()];
    for _ in 0..k {
        noise.draw();
        state.step(drift, params, &noise);
        positions.push(state.x.clone());
        classes.push(state.classes());
    }
    Ok(NPointPath {
        start: start.to_vec(),
        drift: *drift,
        params: *params,
        seed,
        replica,
        times: (0..=k).map(|i| i as f64 * params.dt).collect(),
        positions,
        classes,
    })
}

/// Final state of one replica without recording the path.
fn npoint_endpoint(
    start: &[f64],
    drift: &DriftSpec,
    params: &MotionParams,
    k: usize,
    seed: u64,
    replica: u64,
) -> Vec<f64> {
    let mut noise = Noise::new(seed, replica, start.len());
    let mut state = Coalescing::new(start);
    for _ in 0..k {
        noise.draw();
        state.step(drift, params, &noise);
    }
    state.x
}

/// An interval of the real line with optional ends; `None` is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interval {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    #[serde(default)]
    pub lo_closed: bool,
    #[serde(default)]
    pub hi_closed: bool,
}

impl Interval {
    pub fn open(lo: f64, hi: f64) -> Self {
        Self { lo: Some(lo), hi: Some(hi), lo_closed: false, hi_closed: false }
    }

    pub fn closed(lo: f64, hi: f64) -> Self {
        Self { lo: Some(lo), hi: Some(hi), lo_closed: true, hi_closed: true }
    }

    /// `(-inf, hi)`, or `(-inf, hi]` when `closed`.
    pub fn below(hi: f64, closed: bool) -> Self {
        Self { lo: None, hi: Some(hi), lo_closed: false, hi_closed: closed }
    }

    /// `(lo, inf)`, or `[lo, inf)` when `closed`.
    pub fn above(lo: f64, closed: bool) -> Self {
        Self { lo: Some(lo), hi: None, lo_closed: closed, hi_closed: false }
    }

    pub fn whole() -> Self {
        Self { lo: None, hi: None, lo_closed: false, hi_closed: false }
    }

    pub fn validate(&self) -> Result<()> {
        for v in [self.lo, self.hi].into_iter().flatten() {
            if !v.is_finite() {
                return Err(CoflowError::InvalidArgument(format!("interval ends must be finite or absent, got {v}")));
            }
        }
        if let (Some(a), Some(b)) = (self.lo, self.hi) {
            let empty = if self.lo_closed && self.hi_closed { a > b } else { a >= b };
            if empty {
                return Err(CoflowError::InvalidArgument(format!("empty interval {self}")));
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: f64) -> bool {
        let lo_ok = match self.lo {
            None => true,
            Some(a) => x > a || (self.lo_closed && x == a),
        };
        let hi_ok = match self.hi {
            None => true,
            Some(b) => x < b || (self.hi_closed && x == b),
        };
        lo_ok && hi_ok
    }
}

impl std::fmt::Display for Interval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (l, lo) = match self.lo {
            None => ('(', "-inf".to_string()),
            Some(a) => (if self.lo_closed { '[' } else { '(' }, a.to_string()),
        };
        let (r, hi) = match self.hi {
            None => (')', "inf".to_string()),
            Some(b) => (if self.hi_closed { ']' } else { ')' }, b.to_string()),
        };
        write!(f, "{l}{lo},{hi}{r}")
    }
}

/// An event for the state of an n-point motion at a fixed time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Event {
    /// Coordinate `i` lies in interval `i`.
    Box { intervals: Vec<Interval> },
    /// All coordinates lie within `tol` of each other.
    Diagonal { tol: f64 },
}

impl Event {
    pub fn product(intervals: Vec<Interval>) -> Self {
        Event::Box { intervals }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            Event::Box { intervals } => {
                if intervals.len() != n {
                    return Err(CoflowError::InvalidArgument(format!(
                        "box has {} intervals for {n} coordinates",
                        intervals.len()
                    )));
                }
                intervals.iter().try_for_each(Interval::validate)
            }
            Event::Diagonal { tol } => {
                if !(tol.is_finite() && *tol >= 0.0) {
                    return Err(CoflowError::InvalidArgument(format!("diagonal tolerance must be >= 0, got {tol}")));
                }
                Ok(())
            }
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Event::Box { intervals } => intervals.iter().zip(x).all(|(iv, &v)| iv.contains(v)),
            Event::Diagonal { tol } => {
                let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                hi - lo <= *tol
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Event::Box { intervals } => intervals.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("x"),
            Event::Diagonal { tol } => format!("diag({tol})"),
        }
    }
}

/// A Monte Carlo probability with its binomial standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionEstimate {
    pub event: String,
    pub p_hat: f64,
    pub se: f64,
    pub n: u64,
    pub seed: u64,
}

impl TransitionEstimate {
    fn from_mean(event: String, p_hat: f64, n: u64, seed: u64) -> Self {
        let p_hat = p_hat.clamp(0.0, 1.0);
        Self { event, p_hat, se: binomial_se(p_hat, n), n, seed }
    }

    fn from_count(event: String, hits: u64, n: u64, seed: u64) -> Self {
        Self::from_mean(event, hits as f64 / n as f64, n, seed)
    }

    /// `|self - other|` in units of the combined standard error; infinite if
    /// the two differ while both errors vanish.
    pub fn z_gap(&self, other: &TransitionEstimate) -> f64 {
        let gap = (self.p_hat - other.p_hat).abs();
        let se = self.se.hypot(other.se);
        if gap == 0.0 {
            0.0
        } else {
            gap / se
        }
    }
}

fn check_replicas(n: u64) -> Result<()> {
    if n < MIN_REPLICAS {
        return Err(CoflowError::InvalidArgument(format!("need at least {MIN_REPLICAS} replicas, got {n}")));
    }
    Ok(())
}

fn count_replicas(n: u64, hit: impl Fn(u64) -> bool + Sync + Send) -> u64 {
    fold_replicas(n, || 0u64, |acc, r| *acc += u64::from(hit(r)), |a, b| a + b)
}

/// `P^(n)_t(start, event)` by direct simulation.
pub fn estimate_transition(
    start: &[f64],
    drift: &DriftSpec,
    params: &MotionParams,
    t: f64,
    event: &Event,
    n_replicas: u64,
    seed: u64,
) -> Result<TransitionEstimate> {
    validate_start(start)?;
    drift.validate()?;
    event.validate(start.len())?;
    check_replicas(n_replicas)?;
    let k = params.steps(t)?;
    let hits = count_replicas(n_replicas, |r| event.contains(&npoint_endpoint(start, drift, params, k, seed, r)));
    Ok(TransitionEstimate::from_count(event.describe(), hits, n_replicas, seed))
}

/// Outcome of comparing stopped independent and coalescing motions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppedReport {
    pub n: usize,
    pub replicas: u64,
    pub seed: u64,
    /// Replicas (out of `replicas`) where the shared-noise runs differed in
    /// any bit before the first meeting, or met at different steps.
    pub shared_noise_mismatches: u64,
    /// Replicas in which a meeting happened before the horizon.
    pub meetings: u64,
    /// Per-coordinate two-sample tests between independently seeded runs.
    pub ks: Vec<KsResult>,
    pub alpha: f64,
}

impl StoppedReport {
    pub fn shared_noise_identical(&self) -> bool {
        self.shared_noise_mismatches == 0
    }

    pub fn ks_pass(&self) -> bool {
        self.ks.iter().all(|k| k.passes(self.alpha))
    }

    pub fn pass(&self) -> bool {
        self.shared_noise_identical() && self.ks_pass()
    }
}

/// The state of a system stopped at the last lattice time before its first
/// meeting, with the step of that meeting.
struct Stopped {
    state: Vec<f64>,
    meeting: Option<usize>,
}

fn run_independent_stopped(
    start: &[f64],
    drift: &DriftSpec,
    params: &MotionParams,
    k: usize,
    noise: &mut Noise,
    trace: &mut Vec<Vec<f64>>,
) -> Stopped {
    let mut x = start.to_vec();
    for step in 0..k {
        noise.draw();
        let before = x.clone();
        if independent_step(&mut x, drift, params, noise) {
            return Stopped { state: before, meeting: Some(step) };
        }
        trace.push(x.clone());
    }
    Stopped { state: x, meeting: None }
}

fn run_coalescing_stopped(
    start: &[f64],
    drift: &DriftSpec,
    params: &MotionParams,
    k: usize,
    noise: &mut Noise,
    trace: &mut Vec<Vec<f64>>,
) -> Stopped {
    let mut state = Coalescing::new(start);
    for step in 0..k {
        noise.draw();
        let before = state.x.clone();
        if state.step(drift, params, noise) {
            return Stopped { state: before, meeting: Some(step) };
        }
        trace.push(state.x.clone());
    }
    Stopped { state: state.x, meeting: None }
}

/// Compares `(i)` independent motions and `(ii)` coalescing motions, both
/// stopped at their first meeting.
///
/// The stopped value is the state at the last lattice time before the step
/// in which the meeting is detected. With shared noise the two systems must
/// agree bit for bit; with independent seeds the stopped coordinates are
/// compared by two-sample Kolmogorov–Smirnov tests.
pub fn check_stopped_equivalence(
    start: &[f64],
    drift: &DriftSpec,
    params: &MotionParams,
    t: f64,
    n_replicas: u64,
    seed: u64,
) -> Result<StoppedReport> {
    validate_start(start)?;
    if !(2..=3).contains(&start.len()) || start.windows(2).any(|w| w[0] == w[1]) {
        return Err(CoflowError::InvalidArgument(format!(
            "stopped equivalence needs 2 or 3 distinct starting points, got {start:?}"
        )));
    }
    drift.validate()?;
    check_replicas(n_replicas)?;
    let k = params.steps(t)?;
    let n = start.len();

    let shared = map_replicas(n_replicas, |r| {
        let (mut ta, mut tb) = (Vec::new(), Vec::new());
        let a = run_independent_stopped(start, drift, params, k, &mut Noise::new(seed, r, n), &mut ta);
        let b = run_coalescing_stopped(start, drift, params, k, &mut Noise::new(seed, r, n), &mut tb);
        let same_trace = ta.len() == tb.len()
            && ta.iter().flatten().zip(tb.iter().flatten()).all(|(p, q)| p.to_bits() == q.to_bits());
        let same_state = a.state.iter().zip(&b.state).all(|(p, q)| p.to_bits() == q.to_bits());
        (same_trace && same_state && a.meeting == b.meeting, a.meeting.is_some())
    });
    let shared_noise_mismatches = shared.iter().filter(|s| !s.0).count() as u64;
    let meetings = shared.iter().filter(|s| s.1).count() as u64;

    let other_seed = RngStreams::new(seed).stream(Domain::Sampling, 0, 0).random::<u64>();
    let ind = map_replicas(n_replicas, |r| {
        run_independent_stopped(start, drift, params, k, &mut Noise::new(seed, r, n), &mut Vec::new()).state
    });
    let coal = map_replicas(n_replicas, |r| {
        run_coalescing_stopped(start, drift, params, k, &mut Noise::new(other_seed, r, n), &mut Vec::new()).state
    });
    let ks = (0..n)
        .map(|i| {
            let a: Vec<f64> = ind.iter().map(|s| s[i]).collect();
            let b: Vec<f64> = coal.iter().map(|s| s[i]).collect();
            ks_two_sample(&a, &b)
        })
        .collect();
    Ok(StoppedReport { n, replicas: n_replicas, seed, shared_noise_mismatches, meetings, ks, alpha: KS_ALPHA })
}

/// Resolution of the survival estimator: near a gap `g` the time step is
/// cut to `(g / SURVIVAL_REFINE)^2`.
pub const SURVIVAL_REFINE: f64 = 4.0;

/// Weight of one path of independent motions for staying strictly ordered
/// inside `[a, b]` up to `t`.
///
/// Between steps each gap and each distance to a barrier is a Brownian
/// bridge; the path's weight is multiplied by the bridge's probability of not
/// hitting zero. Steps shrink near small gaps so that the pairwise bridge
/// factors stay accurate for three paths, and the path stops once its weight
/// is negligible.
fn survival_weight(
    start: &[f64],
    a: f64,
    b: f64,
    drift: &DriftSpec,
    params: &MotionParams,
    t: f64,
    noise: &mut Noise,
) -> f64 {
    const NEGLIGIBLE: f64 = 1e-12;
    let n = start.len();
    let mut x = start.to_vec();
    let mut p = vec![0.0; n];
    let mut w = 1.0f64;
    if x[0] <= a || x[n - 1] >= b {
        return 0.0;
    }
    let mut s = 0.0;
    while t - s > 1e-12 * t {
        let mut g = (x[0] - a).min(b - x[n - 1]);
        for i in 1..n {
            g = g.min(x[i] - x[i - 1]);
        }
        let h = params.dt.min((g / SURVIVAL_REFINE).powi(2)).min(t - s);
        if h < 1e-15 * t {
            return 0.0;
        }
        let sqrt_h = h.sqrt();
        noise.draw();
        for i in 0..n {
            p[i] = x[i] + drift.eval(x[i]) * h + sqrt_h * noise.z[i];
        }
        if p[0] <= a || p[n - 1] >= b || (1..n).any(|i| p[i] <= p[i - 1]) {
            return 0.0;
        }
        // a gap of two unit-variance paths has variance 2 per unit time
        for i in 1..n {
            w *= 1.0 - (-(x[i] - x[i - 1]) * (p[i] - p[i - 1]) / h).exp();
        }
        w *= 1.0 - (-2.0 * (x[0] - a) * (p[0] - a) / h).exp();
        w *= 1.0 - (-2.0 * (b - x[n - 1]) * (b - p[n - 1]) / h).exp();
        if w < NEGLIGIBLE {
            return 0.0;
        }
        std::mem::swap(&mut x, &mut p);
        s += h;
    }
    w
}

/// `P(for all s <= t: a < X_1(s) < ... < X_n(s) < b)` for independent
/// motions, equivalently for the coalescing motion not to coalesce or leave
/// `[a, b]`.
///
/// Each replica contributes its bridge-corrected survival weight rather than
/// a 0/1 outcome. The weights lie in `[0, 1]`, so the reported binomial
/// standard error bounds their actual standard error.
#[allow(clippy::too_many_arguments)]
pub fn estimate_ordered_survival(
    start: &[f64],
    a: f64,
    b: f64,
    drift: &DriftSpec,
    params: &MotionParams,
    t: f64,
    n_replicas: u64,
    seed: u64,
) -> Result<TransitionEstimate> {
    validate_start(start)?;
    if !(2..=3).contains(&start.len()) {
        return Err(CoflowError::InvalidArgument(format!("ordered survival needs n = 2 or 3, got {}", start.len())));
    }
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(CoflowError::InvalidArgument(format!("invalid interval [{a}, {b}]")));
    }
    if start[0] < a || start[start.len() - 1] > b {
        return Err(CoflowError::InvalidArgument(format!("start {start:?} outside [{a}, {b}]")));
    }
    if start.windows(2).any(|w| w[0] == w[1]) {
        return Err(CoflowError::InvalidArgument(format!("start {start:?} must be strictly ordered")));
    }
    drift.validate()?;
    check_replicas(n_replicas)?;
    params.steps(t)?;
    let n = start.len();
    let sum = fold_replicas(
        n_replicas,
        || 0.0f64,
        |acc, r| *acc += survival_weight(start, a, b, drift, params, t, &mut Noise::new(seed, r, n)),
        |x, y| x + y,
    );
    let event = format!("ordered in [{a},{b}] up to {t}");
    Ok(TransitionEstimate::from_mean(event, sum / n_replicas as f64, n_replicas, seed))
}

/// Log–log regression of ordered-survival probabilities against the spread
/// of the starting points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub n: usize,
    pub spreads: Vec<f64>,
    pub estimates: Vec<TransitionEstimate>,
    pub slope: f64,
    /// `max estimate / spread^3`, the empirical constant of the cubic law.
    pub cubic_constant: f64,
}

/// Survival estimates for equally spaced starts of total spread `d`
/// centred at `centre`, one per entry of `spreads`, and the fitted slope of
/// `ln p` against `ln d`.
#[allow(clippy::too_many_arguments)]
pub fn survival_exponent(
    n: usize,
    spreads: &[f64],
    centre: f64,
    a: f64,
    b: f64,
    drift: &DriftSpec,
    params: &MotionParams,
    t: f64,
    n_replicas: u64,
    seed: u64,
) -> Result<ExponentFit> {
    if spreads.len() < 2 || spreads.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(CoflowError::InvalidArgument(format!("need two or more positive spreads, got {spreads:?}")));
    }
    let mut estimates = Vec::with_capacity(spreads.len());
    for &d in spreads {
        let start: Vec<f64> = (0..n).map(|i| centre - d / 2.0 + d * i as f64 / (n - 1).max(1) as f64).collect();
        estimates.push(estimate_ordered_survival(&start, a, b, drift, params, t, n_replicas, seed)?);
    }
    if let Some(e) = estimates.iter().find(|e| e.p_hat <= 0.0) {
        return Err(CoflowError::InvalidArgument(format!("zero survival estimate for {}; widen the spreads", e.event)));
    }
    let lx: Vec<f64> = spreads.iter().map(|d| d.ln()).collect();
    let ly: Vec<f64> = estimates.iter().map(|e| e.p_hat.ln()).collect();
    let cubic_constant = spreads.iter().zip(&estimates).map(|(d, e)| e.p_hat / d.powi(3)).fold(0.0, f64::max);
    Ok(ExponentFit {
        n,
        spreads: spreads.to_vec(),
        estimates,
        slope: crate::stats::ols_slope(&lx, &ly),
        cubic_constant,
    })
}

/// Mean and variance of `X(t)` for the one-point motion from `x`, when the
/// law is Gaussian (affine drift).
pub fn gaussian_law(drift: &DriftSpec, x: f64, t: f64) -> Option<(f64, f64)> {
    match *drift {
        DriftSpec::Zero => Some((x, t)),
        DriftSpec::Constant { c } => Some((x + c * t, t)),
        DriftSpec::Linear { c0, c1 } => {
            if c1 == 0.0 {
                return Some((x + c0 * t, t));
            }
            let e = (c1 * t).exp();
            Some((x * e + c0 / c1 * (e - 1.0), (e * e - 1.0) / (2.0 * c1)))
        }
        DriftSpec::Sine { .. } => None,
    }
}

/// Spatial resolution of the lattice flows drawn by the dual estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualLattice {
    pub dx: f64,
    /// Half-width of the lattice window around the dual's law, in standard
    /// deviations.
    #[serde(default = "DualLattice::default_reach")]
    pub reach: f64,
}

impl DualLattice {
    fn default_reach() -> f64 {
        6.0
    }

    pub fn new(dx: f64) -> Self {
        Self { dx, reach: Self::default_reach() }
    }

    /// An interval holding `[lo, hi]` and, up to `reach` standard deviations,
    /// the time-0 positions of duals started in `[lo, hi]` at time `t`.
    fn dual_support(&self, drift: &DriftSpec, lo: f64, hi: f64, t: f64) -> (f64, f64) {
        let back = drift.negated();
        if let (Some((m_lo, v_lo)), Some((m_hi, v_hi))) = (gaussian_law(&back, lo, t), gaussian_law(&back, hi, t)) {
            let r = self.reach * v_lo.max(v_hi).sqrt();
            return (lo.min(m_lo.min(m_hi) - r), hi.max(m_lo.max(m_hi) + r));
        }
        // Lipschitz drifts spread trajectories by at most exp(L t)
        let spread = self.reach * t.sqrt() * (drift.lipschitz() * t).exp();
        let push = t * drift.sup_abs(lo - spread, hi + spread);
        (lo - spread - push, hi + spread + push)
    }

    /// A window on the `dx` grid through `anchor` covering the dual support
    /// of `[lo, hi]`.
    #[allow(clippy::too_many_arguments)]
    fn window(
        &self,
        anchor: f64,
        lo: f64,
        hi: f64,
        drift: &DriftSpec,
        params: &MotionParams,
        t: f64,
        k: usize,
    ) -> Result<LatticeSpec> {
        if !(self.dx.is_finite() && self.dx > 0.0 && self.reach.is_finite() && self.reach > 0.0) {
            return Err(CoflowError::InvalidArgument(format!("invalid dual lattice {self:?}")));
        }
        let (lo, hi) = self.dual_support(drift, lo, hi, t);
        let below = ((anchor - lo) / self.dx).ceil().max(1.0);
        let above = ((hi - anchor) / self.dx).ceil().max(1.0);
        let x_min = anchor - below * self.dx;
        let x_max = anchor + above * self.dx;
        Ok(LatticeSpec::new(0.0, k, params.dt, x_min, x_max, self.dx)
            .with_seeding(Seeding::Initial)
            .with_meeting(params.meeting))
    }
}

/// Both sides of the semigroup duality relation for one `(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualRelationReport {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub t: f64,
    pub drift: DriftSpec,
    /// `P~(y, (x1,x2) x ... x (xn,inf))` from lattice duals.
    pub dual: TransitionEstimate,
    /// `P(x, (-inf,y1) x (y1,y2) x ... x (y_{n-1},yn))` by direct simulation.
    pub forward: TransitionEstimate,
    pub gap: f64,
    pub combined_se: f64,
    /// Closed-form value of both sides when known (one point, affine drift).
    pub closed_form: Option<f64>,
    pub lattice: LatticeSpec,
}

impl DualRelationReport {
    pub fn within(&self, k_se: f64) -> bool {
        self.gap <= k_se * self.combined_se
    }
}

fn check_interlacing(x: &[f64], y: &[f64]) -> Result<()> {
    let bad = || Err(CoflowError::InvalidArgument(format!("x {x:?} and y {y:?} do not interlace")));
    if x.is_empty() || x.len() != y.len() || x.iter().chain(y).any(|v| !v.is_finite()) {
        return bad();
    }
    for i in 0..x.len() {
        if x[i] > y[i] || (i + 1 < x.len() && y[i] >= x[i + 1]) {
            return bad();
        }
    }
    Ok(())
}

/// Estimates both sides of
/// `P~(y, (x1,x2) x ... x (xn,inf)) = P(x, (-inf,y1) x (y1,y2) x ... x (y_{n-1},yn))`.
///
/// The forward side runs the direct simulator from `x`. The dual side draws
/// fresh lattice flows seeded at time 0 on a grid through the points of `x`
/// and evaluates the dual from `(t, y_i)` back to time 0. Equality `x_i = y_i`
/// is allowed; the boundary has probability zero.
#[allow(clippy::too_many_arguments)]
pub fn estimate_dual_relation(
    x: &[f64],
    y: &[f64],
    drift: &DriftSpec,
    params: &MotionParams,
    lattice: &DualLattice,
    t: f64,
    n_replicas: u64,
    seed: u64,
) -> Result<DualRelationReport> {
    check_interlacing(x, y)?;
    drift.validate()?;
    check_replicas(n_replicas)?;
    let k = params.steps(t)?;
    let n = x.len();
    for &xi in &x[1..] {
        let cells = (xi - x[0]) / lattice.dx;
        if (cells - cells.round()).abs() > 1e-9 * cells.abs().max(1.0) {
            return Err(CoflowError::InvalidArgument(format!("x {x:?} must lie on one grid of pitch {}", lattice.dx)));
        }
    }
    let spec = lattice.window(x[0], x[0].min(y[0]), x[n - 1].max(y[n - 1]), drift, params, t, k)?;
    spec.validate()?;

    let mut fwd_box = Vec::with_capacity(n);
    let mut dual_box = Vec::with_capacity(n);
    for i in 0..n {
        fwd_box.push(if i == 0 { Interval::below(y[0], false) } else { Interval::open(y[i - 1], y[i]) });
        dual_box.push(if i + 1 < n { Interval::open(x[i], x[i + 1]) } else { Interval::above(x[i], false) });
    }
    let fwd_event = Event::product(fwd_box);
    let dual_event = Event::product(dual_box);
    let forward = estimate_transition(x, drift, params, t, &fwd_event, n_replicas, seed)?;

    let outcomes = map_replicas(n_replicas, |r| -> Result<bool> {
        let flow = simulate_flow_replica(&spec, drift, seed, r)?;
        let mut z = Vec::with_capacity(n);
        for &yi in y {
            z.push(dual_evaluate_local(&flow, DualRule::LeftRegularity, k, 0, yi)?.value);
        }
        Ok(dual_event.contains(&z))
    });
    let mut hits = 0u64;
    for o in outcomes {
        hits += u64::from(o?);
    }
    let dual = TransitionEstimate::from_count(format!("dual {}", dual_event.describe()), hits, n_replicas, seed);

    let closed_form = match n {
        1 => gaussian_law(drift, x[0], t).map(|(m, v)| normal_cdf((y[0] - m) / v.sqrt())),
        _ => None,
    };
    Ok(DualRelationReport {
        x: x.to_vec(),
        y: y.to_vec(),
        t,
        drift: *drift,
        gap: (dual.p_hat - forward.p_hat).abs(),
        combined_se: dual.se.hypot(forward.se),
        dual,
        forward,
        closed_form,
        lattice: spec,
    })
}

/// Law of the one-point dual compared with the motion driven by the negated
/// drift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualDriftReport {
    pub drift: DriftSpec,
    pub t: f64,
    pub y: f64,
    pub replicas: u64,
    pub seed: u64,
    pub dual_mean: f64,
    pub dual_var: f64,
    /// Mean and variance of the Gaussian law with drift `-a`, if closed form.
    pub expected: Option<(f64, f64)>,
    /// One-sample test against the closed-form law.
    pub ks_closed_form: Option<KsResult>,
    /// Two-sample test against direct simulation with drift `-a`.
    pub ks_simulated: KsResult,
    pub alpha: f64,
}

impl DualDriftReport {
    pub fn pass(&self) -> bool {
        self.ks_simulated.passes(self.alpha) && self.ks_closed_form.is_none_or(|k| k.passes(self.alpha))
    }
}

/// Samples `psi~_{t,0}(y)` from fresh lattice flows with drift `a` and
/// compares it with the one-point motion with drift `-a` started at `y`.
#[allow(clippy::too_many_arguments)]
pub fn check_dual_drift(
    drift: &DriftSpec,
    params: &MotionParams,
    lattice: &DualLattice,
    t: f64,
    y: f64,
    n_replicas: u64,
    seed: u64,
) -> Result<DualDriftReport> {
    drift.validate()?;
    if !y.is_finite() {
        return Err(CoflowError::InvalidArgument(format!("y must be finite, got {y}")));
    }
    check_replicas(n_replicas)?;
    let k = params.steps(t)?;
    let back = drift.negated();
    let expected = gaussian_law(&back, y, t);
    let (lo, hi) = match expected {
        Some((m, v)) => (y.min(m - 2.0 * v.sqrt()), y.max(m + 2.0 * v.sqrt())),
        None => (y, y),
    };
    let spec = lattice.window(y, lo, hi, drift, params, t, k)?;
    spec.validate()?;

    let dual: Vec<f64> = map_replicas(n_replicas, |r| -> Result<f64> {
        let flow = simulate_flow_replica(&spec, drift, seed, r)?;
        Ok(dual_evaluate_local(&flow, DualRule::LeftRegularity, k, 0, y)?.value)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let direct = map_replicas(n_replicas, |r| npoint_endpoint(&[y], &back, params, k, seed, r)[0]);

    let mut mv = crate::stats::MeanVar::new();
    dual.iter().for_each(|&v| mv.push(v));
    let ks_closed_form = expected.map(|(m, v)| {
        let sd = v.sqrt();
        ks_one_sample(&dual, |z| normal_cdf((z - m) / sd))
    });
    Ok(DualDriftReport {
        drift: *drift,
        t,
        y,
        replicas: n_replicas,
        seed,
        dual_mean: mv.mean,
        dual_var: mv.variance(),
        expected,
        ks_closed_form,
        ks_simulated: ks_two_sample(&dual, &direct),
        alpha: KS_ALPHA,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub x: f64,
    pub estimate: TransitionEstimate,
    pub closed_form: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub drift: DriftSpec,
    pub t: f64,
    pub c: f64,
    pub rows: Vec<TailRow>,
    /// No estimate falls below an earlier one by more than three combined
    /// standard errors.
    pub monotone: bool,
    pub final_value: f64,
    pub threshold: f64,
}

impl TailReport {
    pub fn final_ok(&self) -> bool {
        self.final_value >= self.threshold
    }

    pub fn pass(&self) -> bool {
        self.monotone && self.final_ok()
    }
}

/// `P_t(x, [c, inf))` along an increasing grid of starting points.
#[allow(clippy::too_many_arguments)]
pub fn check_tail_lemma(
    drift: &DriftSpec,
    params: &MotionParams,
    t: f64,
    c: f64,
    x_grid: &[f64],
    n_replicas: u64,
    seed: u64,
) -> Result<TailReport> {
    if x_grid.is_empty() || x_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CoflowError::InvalidArgument(format!("x grid must be increasing, got {x_grid:?}")));
    }
    let event = Event::product(vec![Interval::above(c, true)]);
    let mut rows = Vec::with_capacity(x_grid.len());
    for &x in x_grid {
        let estimate = estimate_transition(&[x], drift, params, t, &event, n_replicas, seed)?;
        let closed_form = gaussian_law(drift, x, t).map(|(m, v)| 1.0 - normal_cdf((c - m) / v.sqrt()));
        rows.push(TailRow { x, estimate, closed_form });
    }
    let monotone = rows.iter().enumerate().all(|(j, r)| {
        rows[..j].iter().all(|q| q.estimate.p_hat - r.estimate.p_hat <= 3.0 * q.estimate.se.hypot(r.estimate.se))
    });
    let final_value = rows.last().map(|r| r.estimate.p_hat).unwrap_or(f64::NAN);
    Ok(TailReport { drift: *drift, t, c, rows, monotone, final_value, threshold: 1.0 - 1e-3 })
}

/// Empirical checks of the transition-probability conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpReport {
    /// Marginal of the two-point motion against the one-point motion.
    pub compatibility: (TransitionEstimate, TransitionEstimate),
    /// Two-point motion started on the diagonal.
    pub diagonal: TransitionEstimate,
    /// Replicas whose one-point state sits exactly on a fixed point after
    /// time `t`.
    pub singleton_hits: u64,
    /// `(t, (1/t) sup_x P_t(x, (x-eps, x+eps)^c))` for decreasing `t`.
    pub escape_rates: Vec<(f64, f64)>,
    pub eps: f64,
}

impl TpReport {
    pub fn compatibility_ok(&self) -> bool {
        self.compatibility.0.z_gap(&self.compatibility.1) <= 3.0
    }

    pub fn diagonal_ok(&self) -> bool {
        self.diagonal.p_hat == 1.0
    }

    pub fn escape_decreasing(&self) -> bool {
        self.escape_rates.windows(2).all(|w| w[1].1 < w[0].1)
    }

    pub fn pass(&self) -> bool {
        self.compatibility_ok() && self.diagonal_ok() && self.singleton_hits == 0 && self.escape_decreasing()
    }
}

/// Runs the compatibility, diagonal, no-atom and small-time checks for the
/// motion with `drift`.
///
/// The small-time rates are computed on the start grid `x_grid` at the
/// horizons `small_t`, each simulated with ten steps.
#[allow(clippy::too_many_arguments)]
pub fn tp_checks(
    drift: &DriftSpec,
    params: &MotionParams,
    t: f64,
    x: (f64, f64),
    x_grid: &[f64],
    small_t: &[f64],
    eps: f64,
    n_replicas: u64,
    seed: u64,
) -> Result<TpReport> {
    if x.0 >= x.1 {
        return Err(CoflowError::InvalidArgument(format!("need x.0 < x.1, got {x:?}")));
    }
    let marginal = Interval::below(x.0 + 0.25 * t.sqrt(), true);
    let two = estimate_transition(
        &[x.0, x.1],
        drift,
        params,
        t,
        &Event::product(vec![marginal, Interval::whole()]),
        n_replicas,
        seed,
    )?;
    let other_seed = seed.wrapping_add(1);
    let one = estimate_transition(&[x.0], drift, params, t, &Event::product(vec![marginal]), n_replicas, other_seed)?;
    let diagonal = estimate_transition(&[x.0, x.0], drift, params, t, &Event::Diagonal { tol: 0.0 }, n_replicas, seed)?;
    let k = params.steps(t)?;
    let singleton_hits = count_replicas(n_replicas, |r| npoint_endpoint(&[x.0], drift, params, k, seed, r)[0] == x.0);

    let mut escape_rates = Vec::with_capacity(small_t.len());
    for &s in small_t {
        let p = MotionParams { dt: s / 10.0, ..*params };
        let mut worst = 0.0f64;
        for &x0 in x_grid {
            let ev = Event::product(vec![Interval::open(x0 - eps, x0 + eps)]);
            let inside = estimate_transition(&[x0], drift, &p, s, &ev, n_replicas, seed)?;
            worst = worst.max(1.0 - inside.p_hat);
        }
        escape_rates.push((s, worst / s));
    }
    Ok(TpReport { compatibility: (two, one), diagonal, singleton_hits, escape_rates, eps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{normal_sf, MeanVar};

    fn moments(values: impl Iterator<Item = f64>) -> MeanVar {
        let mut mv = MeanVar::new();
        values.for_each(|v| mv.push(v));
        mv
    }

    #[test]
    fn rejects_bad_input() {
        let p = MotionParams::new(0.01);
        assert!(simulate_npoint(&[0.0], &DriftSpec::Zero, &MotionParams::new(0.0), 1.0, 1, 0).is_err());
        assert!(simulate_npoint(&[1.0, 0.0], &DriftSpec::Zero, &p, 1.0, 1, 0).is_err());
        assert!(simulate_npoint(&[0.0], &DriftSpec::Zero, &p, 0.015, 1, 0).is_err());
        let empty = Event::product(vec![Interval::open(1.0, 1.0)]);
        assert!(estimate_transition(&[0.0], &DriftSpec::Zero, &p, 1.0, &empty, 1000, 1).is_err());
        let ok = Event::product(vec![Interval::whole()]);
        assert!(estimate_transition(&[0.0], &DriftSpec::Zero, &p, 1.0, &ok, 999, 1).is_err());
        assert!(estimate_ordered_survival(&[-2.0, 0.5], -1.0, 1.0, &DriftSpec::Zero, &p, 1.0, 1000, 1).is_err());
        assert!(estimate_dual_relation(
            &[0.0, 0.5],
            &[0.6, 1.0],
            &DriftSpec::Zero,
            &p,
            &DualLattice::new(0.05),
            1.0,
            1000,
            1
        )
        .is_err());
    }

    #[test]
    fn order_and_absorption_on_paths() {
        let p = MotionParams::new(0.01);
        let drift = DriftSpec::Sine { amplitude: 1.0, wavenumber: 1.0 };
        for r in 0..50 {
            let path = simulate_npoint(&[-0.3, -0.1, -0.1, 0.05, 0.4], &drift, &p, 1.0, 9, r).unwrap();
            for (k, x) in path.positions.iter().enumerate() {
                assert!(x.windows(2).all(|w| w[0] <= w[1]), "order broken at step {k}");
                let cl = &path.classes[k];
                for i in 1..x.len() {
                    if cl[i] == cl[i - 1] {
                        assert_eq!(x[i].to_bits(), x[i - 1].to_bits());
                    }
                    // once together, always together
                    if k > 0 && path.classes[k - 1][i] == path.classes[k - 1][i - 1] {
                        assert_eq!(cl[i], cl[i - 1]);
                    }
                }
            }
            assert_eq!(path.classes[0][1], path.classes[0][2]);
        }
    }

    #[test]
    fn brownian_marginal() {
        let p = MotionParams::new(0.05);
        let k = p.steps(1.0).unwrap();
        let n = 20_000;
        let mv = moments((0..n).map(|r| npoint_endpoint(&[0.3], &DriftSpec::Zero, &p, k, 4, r)[0]));
        assert!((mv.mean - 0.3).abs() < 3.0 * mv.mean_se());
        assert!((mv.variance() - 1.0).abs() < 3.0 * mv.variance_se_gaussian());
    }

    #[test]
    fn ornstein_uhlenbeck_marginal() {
        let drift = DriftSpec::Linear { c0: 0.0, c1: -1.0 };
        let p = MotionParams::new(0.001);
        let k = p.steps(1.0).unwrap();
        let n = 20_000;
        let mv = moments((0..n).map(|r| npoint_endpoint(&[2.0], &drift, &p, k, 5, r)[0]));
        let e = (-1.0f64).exp();
        let (m, v) = (2.0 * e, (1.0 - e * e) / 2.0);
        assert_eq!(gaussian_law(&drift, 2.0, 1.0), Some((m, v)));
        assert!((mv.mean - m).abs() < 3.0 * mv.mean_se(), "{} vs {m}", mv.mean);
        assert!((mv.variance() - v).abs() < 3.0 * mv.variance_se_gaussian(), "{} vs {v}", mv.variance());
    }

    #[test]
    fn two_point_coalescence_probability() {
        // the gap is a Brownian motion with variance 2t started at d
        let (d, t) = (0.5, 1.0);
        let p = MotionParams::new(0.01);
        let k = p.steps(t).unwrap();
        let n = 20_000;
        let hits = count_replicas(n, |r| {
            let x = npoint_endpoint(&[0.0, d], &DriftSpec::Zero, &p, k, 6, r);
            x[0] == x[1]
        });
        let p_hat = hits as f64 / n as f64;
        let exact = 2.0 * normal_sf(d / (2.0 * t).sqrt());
        assert!((p_hat - exact).abs() < 3.0 * binomial_se(exact, n), "{p_hat} vs {exact}");
    }

    #[test]
    fn symmetric_half_line() {
        let p = MotionParams::new(0.1);
        let e = estimate_transition(
            &[0.0],
            &DriftSpec::Zero,
            &p,
            1.0,
            &Event::product(vec![Interval::below(0.0, true)]),
            10_000,
            3,
        )
        .unwrap();
        assert!((e.p_hat - 0.5).abs() < 3.0 * e.se);
        assert_eq!(e.se, binomial_se(e.p_hat, 10_000));
        assert_eq!(e.event, "(-inf,0]");
    }

    #[test]
    fn tp_conditions() {
        let p = MotionParams::new(0.01);
        let grid: Vec<f64> = (-4..=4).map(|i| i as f64 * 0.5).collect();
        let rep = tp_checks(&DriftSpec::Zero, &p, 0.5, (0.0, 0.3), &grid, &[1e-2, 1e-3, 1e-4], 0.1, 4000, 8).unwrap();
        assert!(rep.compatibility_ok(), "{:?}", rep.compatibility);
        assert!(rep.diagonal_ok());
        assert_eq!(rep.singleton_hits, 0);
        assert!(rep.escape_decreasing(), "{:?}", rep.escape_rates);
        // the Brownian rate at t = 0.01 is P(|N| >= 1) / 0.01
        let exact = 2.0 * normal_sf(1.0) / 0.01;
        assert!((rep.escape_rates[0].1 - exact).abs() < 0.15 * exact);
    }

    #[test]
    fn stopped_systems_agree() {
        let p = MotionParams::new(0.01);
        let rep = check_stopped_equivalence(&[0.0, 0.4], &DriftSpec::Zero, &p, 1.0, 4000, 12).unwrap();
        assert!(rep.shared_noise_identical());
        assert!(rep.meetings > 0 && rep.meetings < rep.replicas);
        assert!(rep.ks_pass(), "{:?}", rep.ks);
        let sine = DriftSpec::Sine { amplitude: 1.0, wavenumber: 1.0 };
        let rep = check_stopped_equivalence(&[-0.5, 0.0, 0.3], &sine, &p, 1.0, 4000, 13).unwrap();
        assert!(rep.pass(), "{rep:?}");
    }

    #[test]
    fn survival_vanishes_with_spread() {
        let p = MotionParams::new(0.01);
        let far = estimate_ordered_survival(&[-0.5, 0.5], -3.0, 3.0, &DriftSpec::Zero, &p, 1.0, 4000, 2).unwrap();
        let near = estimate_ordered_survival(&[-0.01, 0.01], -3.0, 3.0, &DriftSpec::Zero, &p, 1.0, 4000, 2).unwrap();
        assert!(near.p_hat < 0.1 * far.p_hat);
        // two paths on the whole line: P(no meeting) = 1 - 2 P(N > d / sqrt(2t))
        let wide = estimate_ordered_survival(&[-0.5, 0.5], -50.0, 50.0, &DriftSpec::Zero, &p, 1.0, 20_000, 2).unwrap();
        let exact = 1.0 - 2.0 * normal_sf(1.0 / 2f64.sqrt());
        assert!((wide.p_hat - exact).abs() < 3.0 * wide.se, "{} vs {exact}", wide.p_hat);
    }

    #[test]
    fn dual_relation_one_point() {
        let p = MotionParams::new(0.02);
        let c = DriftSpec::Constant { c: 1.0 };
        let rep = estimate_dual_relation(&[0.0], &[0.2], &c, &p, &DualLattice::new(0.05), 1.0, 4000, 21).unwrap();
        let exact = normal_cdf(0.2 - 1.0);
        assert_eq!(rep.closed_form, Some(exact));
        assert!(rep.within(3.0), "{rep:?}");
        assert!((rep.forward.p_hat - exact).abs() < 3.0 * rep.forward.se);
        assert!((rep.dual.p_hat - exact).abs() < 3.0 * rep.dual.se);
    }

    #[test]
    fn dual_drift_zero() {
        let p = MotionParams::new(0.02);
        let rep = check_dual_drift(&DriftSpec::Zero, &p, &DualLattice::new(0.01), 1.0, 0.3, 2000, 4).unwrap();
        assert!(rep.pass(), "{rep:?}");
    }

    #[test]
    fn tail_table() {
        let p = MotionParams::new(0.05);
        let rep = check_tail_lemma(&DriftSpec::Zero, &p, 1.0, 0.0, &[0.0, 1.0, 3.0, 5.0], 4000, 1).unwrap();
        assert!(rep.pass(), "{rep:?}");
        assert!((rep.rows[0].estimate.p_hat - 0.5).abs() < 3.0 * rep.rows[0].estimate.se);
    }
}
