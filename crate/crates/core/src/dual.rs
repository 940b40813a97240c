//! The dual backward flow of a lattice flow.
//!
//! `psi~_{t,s}(y)` is the right-continuous inverse `v+` of `psi_{s,t}` at `y`
//! when `(t, y)` is left regular, and the left-continuous inverse `v-`
//! otherwise. Regularity is read off the first step map after `t`:
//! coalescence is absorbing, so a point whose left neighbourhood merges with
//! it in that step stays merged at every later time.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoflowError, Result};
use crate::lattice::FlowRealization;
use crate::rng::{Domain, RngStreams};
use crate::step_fn::ExtendedReal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularity {
    LeftRegular,
    LeftIrregular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularityTag {
    pub t: f64,
    pub y: f64,
    pub tag: Regularity,
    /// Lattice time `u > t` whose map `psi_{t,u}` decided the tag.
    pub witness: f64,
}

/// Which inverse is used at regular points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualRule {
    /// `v+` at left-regular points, `v-` at left-irregular ones.
    #[default]
    LeftRegularity,
    /// The reverse assignment; only useful as a negative control.
    Swapped,
}

fn regularity_local(flow: &FlowRealization, j: usize, y: f64) -> Result<Regularity> {
    if j >= flow.len() {
        return Err(CoflowError::NoForwardData(flow.time_of(j)));
    }
    let f = flow.step_map(j);
    Ok(if f.left_limit(y) == f.evaluate(y) { Regularity::LeftRegular } else { Regularity::LeftIrregular })
}

pub fn is_left_regular(flow: &FlowRealization, t: f64, y: f64) -> Result<RegularityTag> {
    let j = flow.index_of(t)?;
    let tag = regularity_local(flow, j, y)?;
    Ok(RegularityTag { t, y, tag, witness: flow.time_of(j + 1) })
}

/// One evaluation of the dual, with the information needed for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualValue {
    pub value: f64,
    /// `None` at the end of the window, where no step map decides the tag
    /// and the two inverses coincide.
    pub tag: Option<Regularity>,
    /// `y` is attained by `psi_{s,t}`, so `v+` and `v-` differ and the
    /// regularity tag decided between them.
    pub tie: bool,
}

fn finite_or_boundary(z: ExtendedReal, y: f64) -> Result<f64> {
    match z {
        ExtendedReal::Finite(v) => Ok(v),
        ExtendedReal::NegInf => Err(CoflowError::Boundary { y, side: "-inf" }),
        ExtendedReal::PosInf => Err(CoflowError::Boundary { y, side: "+inf" }),
    }
}

/// `psi~_{t_j, t_i}(y)` on local lattice indices `i <= j`.
///
/// At the last lattice time there is no step map to classify `(t, y)`; the
/// value is still defined when `v+` and `v-` agree, which is the case unless
/// `y` is an attained value.
pub fn dual_evaluate_local(flow: &FlowRealization, rule: DualRule, j: usize, i: usize, y: f64) -> Result<DualValue> {
    if j >= flow.len() {
        if j > flow.len() {
            return Err(CoflowError::NoForwardData(flow.time_of(j)));
        }
        if i == j {
            return Ok(DualValue { value: y, tag: None, tie: false });
        }
        let (plus, _) = flow.inverse_local(i, j, y, true);
        let (minus, _) = flow.inverse_local(i, j, y, false);
        if plus != minus {
            return Err(CoflowError::NoForwardData(flow.time_of(j)));
        }
        return Ok(DualValue { value: finite_or_boundary(plus, y)?, tag: None, tie: false });
    }
    let tag = regularity_local(flow, j, y)?;
    if i == j {
        return Ok(DualValue { value: y, tag: Some(tag), tie: false });
    }
    let use_plus = match (rule, tag) {
        (DualRule::LeftRegularity, Regularity::LeftRegular) => true,
        (DualRule::LeftRegularity, Regularity::LeftIrregular) => false,
        (DualRule::Swapped, Regularity::LeftRegular) => false,
        (DualRule::Swapped, Regularity::LeftIrregular) => true,
    };
    let (z, maybe_tie) = flow.inverse_local(i, j, y, use_plus);
    // y is attained by psi_{s,t} exactly when the two inverses differ
    let tie = maybe_tie && flow.inverse_local(i, j, y, !use_plus).0 != z;
    Ok(DualValue { value: finite_or_boundary(z, y)?, tag: Some(tag), tie })
}

/// `psi~_{t,s}(y)` for lattice times `s <= t`.
pub fn dual_evaluate(flow: &FlowRealization, t: f64, s: f64, y: f64) -> Result<f64> {
    let j = flow.index_of(t)?;
    let i = flow.index_of(s)?;
    if i > j {
        return Err(CoflowError::TimeOrder { s, t });
    }
    Ok(dual_evaluate_local(flow, DualRule::LeftRegularity, j, i, y)?.value)
}

/// The dual of a realization, evaluated lazily and memoized.
#[derive(Debug)]
pub struct BackwardFlow<'a> {
    base: &'a FlowRealization,
    rule: DualRule,
    cache: Mutex<HashMap<(usize, usize, u64), DualValue>>,
}

impl<'a> BackwardFlow<'a> {
    pub fn new(base: &'a FlowRealization) -> Self {
        Self::with_rule(base, DualRule::LeftRegularity)
    }

    pub fn with_rule(base: &'a FlowRealization, rule: DualRule) -> Self {
        Self { base, rule, cache: Mutex::new(HashMap::new()) }
    }

    pub fn base(&self) -> &FlowRealization {
        self.base
    }

    pub fn rule(&self) -> DualRule {
        self.rule
    }

    pub fn evaluate_local(&self, j: usize, i: usize, y: f64) -> Result<DualValue> {
        let key = (j, i, y.to_bits());
        if let Some(v) = self.cache.lock().unwrap().get(&key) {
            return Ok(*v);
        }
        let v = dual_evaluate_local(self.base, self.rule, j, i, y)?;
        self.cache.lock().unwrap().insert(key, v);
        Ok(v)
    }

    pub fn evaluate(&self, t: f64, s: f64, y: f64) -> Result<f64> {
        let j = self.base.index_of(t)?;
        let i = self.base.index_of(s)?;
        if i > j {
            return Err(CoflowError::TimeOrder { s, t });
        }
        Ok(self.evaluate_local(j, i, y)?.value)
    }

    /// Backward cocycle `phi~(tau, w, y) = psi~_{t0 + tau, t0}(w, y)`.
    pub fn cocycle(&self, tau: f64, y: f64) -> Result<f64> {
        let t0 = self.base.start_time();
        self.evaluate(t0 + tau, t0, y)
    }

    pub fn cache_len(&self) -> usize {
        self.cache.lock().unwrap().len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub checked: u64,
    pub violations: u64,
    /// Violations where an inverse was queried at an attained value.
    pub tie_violations: u64,
    /// Queries that involved a tie, violated or not.
    pub tie_incidents: u64,
    /// Queries skipped because an inverse was infinite.
    pub boundary_skips: u64,
    /// Composite queries whose intermediate dual value was itself attained
    /// by the earlier flow map. On the lattice this happens when a dual
    /// value lands on a surviving particle; such queries are still checked.
    #[serde(default)]
    pub relay_ties: u64,
    pub worst: f64,
}

impl Default for ViolationReport {
    fn default() -> Self {
        Self::new()
    }
}

impl ViolationReport {
    pub fn new() -> Self {
        Self {
            checked: 0,
            violations: 0,
            tie_violations: 0,
            tie_incidents: 0,
            boundary_skips: 0,
            relay_ties: 0,
            worst: 0.0,
        }
    }

    pub fn non_tie_violations(&self) -> u64 {
        self.violations - self.tie_violations
    }

    pub fn pass(&self) -> bool {
        self.violations == 0
    }

    pub fn merge(mut self, o: &ViolationReport) -> Self {
        self.checked += o.checked;
        self.violations += o.violations;
        self.tie_violations += o.tie_violations;
        self.tie_incidents += o.tie_incidents;
        self.boundary_skips += o.boundary_skips;
        self.relay_ties += o.relay_ties;
        self.worst = self.worst.max(o.worst);
        self
    }

    fn record(&mut self, violated: bool, tie: bool, magnitude: f64) {
        self.checked += 1;
        self.tie_incidents += tie as u64;
        if violated {
            self.violations += 1;
            self.tie_violations += tie as u64;
            self.worst = self.worst.max(magnitude);
        }
    }
}

/// Sampling controls shared by the checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckOptions {
    pub samples: u64,
    pub seed: u64,
    /// Fraction of the window width trimmed from each side when drawing
    /// spatial points.
    pub core_trim: f64,
    /// Probability of drawing a spatial point among the images and
    /// breakpoints of the step maps instead of uniformly. Those points have
    /// probability zero under any continuous law but are where ties and
    /// jumps live.
    #[serde(default = "default_atom_fraction")]
    pub atom_fraction: f64,
}

fn default_atom_fraction() -> f64 {
    0.5
}

impl CheckOptions {
    pub fn new(samples: u64, seed: u64) -> Self {
        Self { samples, seed, core_trim: 0.2, atom_fraction: default_atom_fraction() }
    }

    /// Only uniformly drawn spatial points.
    pub fn generic(mut self) -> Self {
        self.atom_fraction = 0.0;
        self
    }
}

struct Sampler<'f> {
    flow: &'f FlowRealization,
    rng: rand_chacha::ChaCha8Rng,
    lo: f64,
    hi: f64,
    atoms: f64,
}

impl<'f> Sampler<'f> {
    fn new(flow: &'f FlowRealization, opts: &CheckOptions, salt: u64) -> Self {
        let spec = flow.spec();
        let w = spec.x_max - spec.x_min;
        Self {
            flow,
            rng: RngStreams::new(opts.seed).stream(Domain::Sampling, flow.replica(), salt),
            lo: spec.x_min + opts.core_trim * w,
            hi: spec.x_max - opts.core_trim * w,
            atoms: opts.atom_fraction,
        }
    }

    /// A spatial point: uniform in the core, or a realized image or
    /// breakpoint of a step map (points where ties and jumps live).
    fn point(&mut self) -> f64 {
        let u: f64 = self.rng.random();
        if u >= self.atoms || self.flow.is_empty() {
            return self.lo + (self.hi - self.lo) * self.rng.random::<f64>();
        }
        let k = self.rng.random_range(0..self.flow.len());
        let f = self.flow.step_map(k);
        let pool = if u < 0.5 * self.atoms { f.values() } else { f.breakpoints() };
        if pool.is_empty() {
            return self.lo + (self.hi - self.lo) * self.rng.random::<f64>();
        }
        let v = pool[self.rng.random_range(0..pool.len())];
        v.clamp(self.lo, self.hi)
    }

    /// Sorted local indices in `0..upper` (inclusive bound `upper - 1`).
    fn indices<const K: usize>(&mut self, upper: usize) -> [usize; K] {
        let mut out = [0usize; K];
        for v in out.iter_mut() {
            *v = self.rng.random_range(0..upper);
        }
        out.sort_unstable();
        out
    }
}

/// Duality inequality `(psi_{s,t}(x) - y)(x - psi~_{t,s}(y)) >= 0` on random
/// quadruples with `s <= t` strictly before the window end.
pub fn check_duality(dual: &BackwardFlow<'_>, opts: &CheckOptions) -> ViolationReport {
    let flow = dual.base();
    let mut rep = ViolationReport::new();
    if flow.is_empty() {
        return rep;
    }
    let mut sm = Sampler::new(flow, opts, 1);
    for _ in 0..opts.samples {
        let [i, j] = sm.indices::<2>(flow.len());
        let (x, y) = (sm.point(), sm.point());
        let fwd = flow.evaluate_local(i, j, x);
        match dual.evaluate_local(j, i, y) {
            Ok(d) => {
                let prod = (fwd - y) * (x - d.value);
                rep.record(prod < 0.0, d.tie, -prod);
            }
            Err(_) => rep.boundary_skips += 1,
        }
    }
    rep
}

/// `v-(psi_{s,t}, y) <= psi~_{t,s}(y) <= v+(psi_{s,t}, y)` with the inverses
/// taken from the materialized composition (an independent route), plus
/// monotonicity of `psi~_{t,s}` in `y`.
pub fn check_sandwich(dual: &BackwardFlow<'_>, opts: &CheckOptions) -> ViolationReport {
    let flow = dual.base();
    let mut rep = ViolationReport::new();
    if flow.is_empty() {
        return rep;
    }
    let mut sm = Sampler::new(flow, opts, 2);
    let pairs = (opts.samples / 16).max(1);
    for _ in 0..pairs {
        let [i, j] = sm.indices::<2>(flow.len());
        let Some(g) = flow.composed_local(i, j) else {
            continue;
        };
        let mut ys: Vec<f64> = (0..16).map(|_| sm.point()).collect();
        ys.sort_by(f64::total_cmp);
        let mut prev: Option<f64> = None;
        for &y in &ys {
            let Ok(d) = dual.evaluate_local(j, i, y) else {
                rep.boundary_skips += 1;
                continue;
            };
            let lo = g.v_minus(y);
            let hi = g.v_plus(y);
            let v = ExtendedReal::Finite(d.value);
            let bad_sandwich = v < lo || v > hi;
            let bad_mono = prev.is_some_and(|p| p > d.value);
            rep.record(bad_sandwich || bad_mono, d.tie, 0.0);
            prev = Some(d.value);
        }
    }
    rep
}

/// Exact check of `psi~_{s,r}(psi~_{t,s}(y)) = psi~_{t,r}(y)` on random
/// lattice triples `r <= s <= t`.
pub fn check_backward_evolution(dual: &BackwardFlow<'_>, opts: &CheckOptions) -> ViolationReport {
    let flow = dual.base();
    let mut rep = ViolationReport::new();
    if flow.is_empty() {
        return rep;
    }
    let mut sm = Sampler::new(flow, opts, 3);
    for _ in 0..opts.samples {
        let [r, s, t] = sm.indices::<3>(flow.len());
        let y = sm.point();
        let direct = dual.evaluate_local(t, r, y);
        let first = dual.evaluate_local(t, s, y);
        let (Ok(direct), Ok(first)) = (direct, first) else {
            rep.boundary_skips += 1;
            continue;
        };
        let Ok(second) = dual.evaluate_local(s, r, first.value) else {
            rep.boundary_skips += 1;
            continue;
        };
        let tie = direct.tie || first.tie;
        rep.relay_ties += second.tie as u64;
        let diff = (direct.value - second.value).abs();
        rep.record(direct.value.to_bits() != second.value.to_bits(), tie, diff);
    }
    rep
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub h: f64,
    /// `psi~_{t,s}(theta_h w, y) = psi~_{t+h,s+h}(w, y)`.
    pub equivariance: ViolationReport,
    /// `phi(t+s, w, x) = phi(s, theta_t w, phi(t, w, x))`.
    pub forward_cocycle: ViolationReport,
    /// `phi~(t+s, w, y) = phi~(t, w, phi~(s, theta_t w, y))`.
    pub backward_cocycle: ViolationReport,
}

impl ShiftReport {
    pub fn pass(&self) -> bool {
        self.equivariance.pass() && self.forward_cocycle.pass() && self.backward_cocycle.pass()
    }
}

/// Shift equivariance of the dual and the forward/backward cocycle
/// identities. Shifted realizations are extended by simulation when needed.
pub fn check_shift_equivariance(flow: &FlowRealization, h: f64, opts: &CheckOptions) -> Result<ShiftReport> {
    let n = flow.len();
    if n == 0 {
        return Err(CoflowError::InvalidArgument("empty flow".into()));
    }
    let dt = flow.spec().dt;
    let shifted = flow.shift(h, true)?;
    let m = (h / dt).round() as usize;
    if m >= n {
        return Err(CoflowError::InvalidArgument(format!("shift {h} spans the whole window of {n} steps")));
    }
    let original = BackwardFlow::new(flow);
    let moved = BackwardFlow::new(&shifted);
    let mut sm = Sampler::new(flow, opts, 4);

    let mut eq = ViolationReport::new();
    for _ in 0..opts.samples {
        let [i, j] = sm.indices::<2>(n - m);
        let y = sm.point();
        match (moved.evaluate_local(j, i, y), original.evaluate_local(j + m, i + m, y)) {
            (Ok(a), Ok(b)) => {
                eq.record(a.value.to_bits() != b.value.to_bits(), a.tie || b.tie, (a.value - b.value).abs())
            }
            _ => eq.boundary_skips += 1,
        }
    }

    // Cocycles: split a lattice duration tau = a + b with a, b >= 0.
    let mut fwd = ViolationReport::new();
    let mut bwd = ViolationReport::new();
    let mut shifts: HashMap<usize, FlowRealization> = HashMap::new();
    for _ in 0..opts.samples {
        let [a, total] = sm.indices::<2>(n);
        let b = total - a;
        let x = sm.point();
        let theta = shifts.entry(a).or_insert_with(|| flow.shift(a as f64 * dt, true).expect("lattice shift"));

        let lhs = flow.evaluate_local(0, a + b, x);
        let rhs = theta.evaluate_local(0, b, flow.evaluate_local(0, a, x));
        fwd.record(lhs.to_bits() != rhs.to_bits(), false, (lhs - rhs).abs());

        let theta_dual = BackwardFlow::new(theta);
        let lhs = original.evaluate_local(a + b, 0, x);
        let inner = theta_dual.evaluate_local(b, 0, x);
        match (lhs, inner) {
            (Ok(l), Ok(inner)) => match original.evaluate_local(a, 0, inner.value) {
                Ok(r) => {
                    bwd.relay_ties += r.tie as u64;
                    bwd.record(l.value.to_bits() != r.value.to_bits(), l.tie || inner.tie, (l.value - r.value).abs())
                }
                Err(_) => bwd.boundary_skips += 1,
            },
            _ => bwd.boundary_skips += 1,
        }
    }
    Ok(ShiftReport { h, equivariance: eq, forward_cocycle: fwd, backward_cocycle: bwd })
}

/// Largest one-step change `|psi~_{t,s}(y) - psi~_{t,s+dt}(y)|` over sampled
/// queries, in units of `sqrt(dt log(1/dt))`. Diagnostic only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuityDiagnostic {
    pub max_increment: f64,
    pub scale: f64,
    pub ratio: f64,
    pub samples: u64,
}

pub fn continuity_diagnostic(dual: &BackwardFlow<'_>, opts: &CheckOptions) -> ContinuityDiagnostic {
    let flow = dual.base();
    let dt = flow.spec().dt;
    let scale = (dt * (1.0 / dt).ln().max(1.0)).sqrt();
    let mut max_inc = 0.0f64;
    let mut count = 0;
    if flow.len() >= 2 {
        let mut sm = Sampler::new(flow, opts, 5);
        for _ in 0..opts.samples {
            let [i, j] = sm.indices::<2>(flow.len());
            if i == j {
                continue;
            }
            let y = sm.point();
            if let (Ok(a), Ok(b)) = (dual.evaluate_local(j, i, y), dual.evaluate_local(j, i + 1, y)) {
                max_inc = max_inc.max((a.value - b.value).abs());
                count += 1;
            }
        }
    }
    ContinuityDiagnostic { max_increment: max_inc, scale, ratio: max_inc / scale, samples: count }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::DriftSpec;
    use crate::lattice::{simulate_flow, LatticeSpec};
    use crate::step_fn::MonotoneStepFn;

    fn flow(seed: u64) -> FlowRealization {
        let spec = LatticeSpec::new(0.0, 60, 0.01, -3.0, 3.0, 0.02);
        simulate_flow(&spec, &DriftSpec::Sine { amplitude: 1.0, wavenumber: 1.0 }, seed).unwrap()
    }

    #[test]
    fn regularity_classification() {
        let spec = LatticeSpec::new(0.0, 1, 1.0, 0.0, 2.0, 1.0);
        let step = MonotoneStepFn::new(vec![1.0, 2.0], vec![0.5, 0.5, 3.0]).unwrap();
        let f = FlowRealization::from_step_maps(spec, vec![step]).unwrap();
        // inside a piece
        assert_eq!(is_left_regular(&f, 0.0, 0.3).unwrap().tag, Regularity::LeftRegular);
        // breakpoint with a jump
        assert_eq!(is_left_regular(&f, 0.0, 2.0).unwrap().tag, Regularity::LeftIrregular);
        // grid point whose left neighbour merged with it
        assert_eq!(is_left_regular(&f, 0.0, 1.0).unwrap().tag, Regularity::LeftRegular);
        assert!(matches!(is_left_regular(&f, 1.0, 0.3), Err(CoflowError::NoForwardData(_))));
        assert_eq!(is_left_regular(&f, 0.0, 2.0).unwrap().witness, 1.0);
    }

    #[test]
    fn identity_and_boundary() {
        let f = flow(1);
        assert_eq!(dual_evaluate(&f, 0.3, 0.3, 0.123).unwrap(), 0.123);
        assert!(dual_evaluate(&f, 0.6, 0.0, 0.0).is_ok());
        let full = f.composed_local(0, 60).unwrap();
        let atom = full.values()[full.values().len() / 2];
        assert!(matches!(dual_evaluate(&f, 0.6, 0.0, atom), Err(CoflowError::NoForwardData(_))));
        assert!(dual_evaluate(&f, 0.61, 0.0, 0.0).is_err());
        assert!(dual_evaluate(&f, 0.2, 0.3, 0.0).is_err());
        // far outside the images: infinite inverse
        assert!(matches!(dual_evaluate(&f, 0.5, 0.0, 100.0), Err(CoflowError::Boundary { .. })));
    }

    #[test]
    fn duality_sandwich_evolution() {
        for seed in 0..3 {
            let f = flow(seed);
            let d = BackwardFlow::new(&f);
            let o = CheckOptions::new(3000, seed);
            let rep = check_duality(&d, &o);
            assert_eq!(rep.violations, 0, "{rep:?}");
            let rep = check_sandwich(&d, &o);
            assert_eq!(rep.violations, 0, "{rep:?}");
            let rep = check_backward_evolution(&d, &o);
            assert_eq!(rep.non_tie_violations(), 0, "{rep:?}");
        }
    }

    #[test]
    fn swapped_rule_breaks_evolution() {
        let mut total = 0;
        for seed in 0..3 {
            let f = flow(seed);
            let d = BackwardFlow::with_rule(&f, DualRule::Swapped);
            total += check_backward_evolution(&d, &CheckOptions::new(3000, seed)).violations;
        }
        assert!(total > 0);
    }

    #[test]
    fn shift_and_cocycles() {
        let f = flow(7);
        for h in [0.0, 0.01, 0.05] {
            let rep = check_shift_equivariance(&f, h, &CheckOptions::new(300, 1)).unwrap();
            assert!(rep.pass(), "{rep:?}");
            assert!(rep.equivariance.checked > 0);
        }
        assert!(check_shift_equivariance(&f, 0.015, &CheckOptions::new(10, 1)).is_err());
    }

    #[test]
    fn cache_is_used() {
        let f = flow(2);
        let d = BackwardFlow::new(&f);
        let a = d.evaluate(0.4, 0.1, 0.25).unwrap();
        let b = d.evaluate(0.4, 0.1, 0.25).unwrap();
        assert_eq!(a, b);
        assert_eq!(d.cache_len(), 1);
        assert_eq!(d.cocycle(0.4, 0.25).unwrap(), dual_evaluate(&f, 0.4, 0.0, 0.25).unwrap());
    }
}
