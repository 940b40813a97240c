//! The Gaussian-tail function `g(x) = x^2 P(|N| >= x)`, its maximizer and
//! inverse branch, and the lower bound on the escape-time function
//! `w(eps, delta) = inf { t > 0 : sup_x P_t(x, (x - eps, x + eps)^c) >= delta t }`
//! that drives the liminf condition for coalescing flows with drift.

use std::f64::consts::{LN_2, SQRT_2};

use libm::erfc;
use serde::{Deserialize, Serialize};

use crate::error::{CoflowError, Result};
use crate::stats::normal_sf;

/// `g(x) = sqrt(2/pi) x^2 int_x^inf exp(-z^2/2) dz = x^2 erfc(x / sqrt 2)`.
pub fn g(x: f64) -> Result<f64> {
    if !x.is_finite() || x < 0.0 {
        return Err(CoflowError::InvalidArgument(format!("g needs a finite x >= 0, got {x}")));
    }
    Ok(g_unchecked(x))
}

fn g_unchecked(x: f64) -> f64 {
    x * x * erfc(x / SQRT_2)
}

/// A quantity whose sign is that of `g'(x)` for `x > 0`:
/// `2 int_x^inf e^{-z^2/2} dz - x e^{-x^2/2}`, rescaled by `1/sqrt(2 pi)`.
pub fn g_prime_sign(x: f64) -> f64 {
    let phi = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    erfc(x / SQRT_2) - x * phi
}

/// `g'(x) = 2x erfc(x/sqrt 2) - 2 x^2 phi(x)`.
pub fn g_prime(x: f64) -> f64 {
    2.0 * x * g_prime_sign(x)
}

/// Bisection on `[lo, hi]` for a sign change of `f`, to width `tol`.
fn bisect(mut lo: f64, mut hi: f64, tol: f64, f: impl Fn(f64) -> f64) -> f64 {
    let flo = f(lo);
    if flo == 0.0 {
        return lo;
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid <= lo || mid >= hi {
            return mid;
        }
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

pub const X_STAR_BRACKET: (f64, f64) = (1.1, 1.25);

/// The maximizer `x*` of `g`, by bisection of `g'` on `[1.1, 1.25]`.
pub fn find_x_star() -> f64 {
    let (lo, hi) = X_STAR_BRACKET;
    debug_assert!(g_prime_sign(lo) > 0.0 && g_prime_sign(hi) < 0.0);
    bisect(lo, hi, 1e-10, g_prime_sign)
}

/// `g(x*)`, the largest admissible argument of [`g_inv`].
pub fn g_max() -> f64 {
    g_unchecked(find_x_star())
}

/// Inverse of `g` on its decreasing branch `[x*, inf)`.
pub fn g_inv(eps: f64) -> Result<f64> {
    let x_star = find_x_star();
    let top = g_unchecked(x_star);
    if !(eps > 0.0 && eps <= top) {
        return Err(CoflowError::InvalidArgument(format!("g_inv needs eps in (0, g(x*)] = (0, {top}], got {eps}")));
    }
    let mut hi = 2.0 * x_star;
    while g_unchecked(hi) > eps {
        hi *= 2.0;
    }
    // g is decreasing here; bisect to machine resolution
    Ok(bisect(x_star, hi, 0.0, |x| g_unchecked(x) - eps))
}

/// `|2 P(|W(t)| >= eps/4) - (32 t / eps^2) g(eps / (4 sqrt t))|`.
pub fn gaussian_tail_identity_residual(eps: f64, t: f64) -> Result<f64> {
    if !(eps > 0.0 && t > 0.0) {
        return Err(CoflowError::InvalidArgument(format!("need eps, t > 0, got {eps}, {t}")));
    }
    let z = eps / (4.0 * t.sqrt());
    let lhs = 4.0 * normal_sf(z);
    let rhs = 32.0 * t / (eps * eps) * g_unchecked(z);
    Ok((lhs - rhs).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WBoundHypotheses {
    /// `eps^2 delta < 32 g(x*)`
    pub small_product: bool,
    /// `eps < 4 (1 + M) log 2 / L`, vacuous when `L = 0`
    pub lipschitz_scale: bool,
    /// `(eps / (4 g^{-1}(eps^2 delta / 32)))^2 < eps / (4 (1 + M))`
    pub short_time: bool,
}

impl WBoundHypotheses {
    pub fn all(&self) -> bool {
        self.small_product && self.lipschitz_scale && self.short_time
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WBound {
    pub eps: f64,
    pub delta: f64,
    /// `(eps / (4 g^{-1}(eps^2 delta / 32)))^2`, when `g^{-1}` is defined there.
    pub value: Option<f64>,
    pub hypotheses: WBoundHypotheses,
}

impl WBound {
    /// The bound, only when every hypothesis holds.
    pub fn asserted(&self) -> Option<f64> {
        self.value.filter(|_| self.hypotheses.all())
    }
}

/// Lower bound on `w(eps, delta)` for a drift with Lipschitz constant `L`
/// and sup bound `M` on the interval.
pub fn w_lower_bound(eps: f64, delta: f64, lipschitz: f64, sup: f64) -> Result<WBound> {
    if !(eps > 0.0 && delta > 0.0 && lipschitz >= 0.0 && sup >= 0.0) {
        return Err(CoflowError::InvalidArgument(format!(
            "need eps, delta > 0 and L, M >= 0, got {eps}, {delta}, {lipschitz}, {sup}"
        )));
    }
    let arg = eps * eps * delta / 32.0;
    let small_product = arg < g_max();
    let lipschitz_scale = lipschitz == 0.0 || eps < 4.0 * (1.0 + sup) * LN_2 / lipschitz;
    let value = if small_product {
        let gi = g_inv(arg)?;
        Some((eps / (4.0 * gi)).powi(2))
    } else {
        None
    };
    let short_time = value.is_some_and(|v| v < eps / (4.0 * (1.0 + sup)));
    Ok(WBound { eps, delta, value, hypotheses: WBoundHypotheses { small_product, lipschitz_scale, short_time } })
}

/// `(1/t) P(|W(t)| >= eps)`: the escape rate of a Brownian particle, which
/// does not depend on the starting point.
pub fn brownian_escape_rate(eps: f64, t: f64) -> f64 {
    erfc(eps / (2.0 * t).sqrt()) / t
}

/// `w(eps, delta)` for Brownian motion, found by scanning `t` upwards on a
/// geometric grid and bisecting the first crossing of `rate = delta`.
pub fn brownian_w(eps: f64, delta: f64) -> Option<f64> {
    let f = |t: f64| brownian_escape_rate(eps, t) - delta;
    let mut lo = 1e-6 * eps * eps;
    if f(lo) >= 0.0 {
        return Some(0.0);
    }
    let limit = 1e6 * eps * eps;
    while lo < limit {
        let hi = lo * 1.05;
        if f(hi) >= 0.0 {
            return Some(bisect(lo, hi, 0.0, f));
        }
        lo = hi;
    }
    None
}

/// Checks the bound against exact Brownian tails: every `t` in a grid below
/// the bound must have escape rate `< delta`. Returns the worst ratio
/// `rate / delta` seen.
pub fn confirm_w_bound_brownian(eps: f64, delta: f64, grid: usize) -> Result<Option<f64>> {
    let b = w_lower_bound(eps, delta, 0.0, 0.0)?;
    let Some(bound) = b.asserted() else {
        return Ok(None);
    };
    let mut worst = 0.0f64;
    for k in 1..=grid {
        let t = bound * k as f64 / (grid as f64 + 1.0);
        worst = worst.max(brownian_escape_rate(eps, t) / delta);
    }
    worst = worst.max(brownian_escape_rate(eps, bound * (1.0 - 1e-12)) / delta);
    Ok(Some(worst))
}

/// Parameters of the liminf schedule `eps_n = 2^{-n}`, `delta_n = 1/n` with
/// `f(eps) = C eps^3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsProfile {
    pub alpha: f64,
    pub beta: f64,
    pub t: f64,
    pub lipschitz: f64,
    pub sup: f64,
    #[serde(default = "default_p")]
    pub p: f64,
    /// The constant of the three-point ordering bound. It is not computable
    /// in closed form; callers calibrate it from simulation.
    #[serde(default = "default_c")]
    pub c: f64,
}

fn default_p() -> f64 {
    1.25
}

fn default_c() -> f64 {
    1.0
}

impl BoundsProfile {
    pub fn brownian(alpha: f64, beta: f64, t: f64) -> Self {
        Self { alpha, beta, t, lipschitz: 0.0, sup: 0.0, p: default_p(), c: default_c() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.beta.is_finite()) || self.alpha >= self.beta {
            return Err(CoflowError::InvalidArgument("alpha must be below beta".into()));
        }
        if !(self.p > 1.0 && self.p < 1.5) {
            return Err(CoflowError::InvalidArgument(format!("p must lie in (1, 3/2), got {}", self.p)));
        }
        if !(self.c > 0.0 && self.t > 0.0 && self.lipschitz >= 0.0 && self.sup >= 0.0) {
            return Err(CoflowError::InvalidArgument("C, t must be positive and L, M non-negative".into()));
        }
        Ok(())
    }

    pub fn f(&self, eps: f64) -> f64 {
        self.c * eps.powi(3)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRow {
    pub n: u32,
    pub eps: f64,
    pub delta: f64,
    pub w_bound: f64,
    pub hypotheses_hold: bool,
    /// `f(8 eps_n) / w_bound(eps_n, delta_n)`
    pub ratio: f64,
    /// The same ratio with `g^{-1}(u)^2` replaced by `2 |ln u|`:
    /// `8192 C (2 n log 4 + 2 log(32 n)) 2^{-n}`.
    pub asymptotic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleTable {
    pub rows: Vec<ScheduleRow>,
    /// First `n` from which the ratio decreases strictly to the end.
    pub decreasing_from: Option<u32>,
    pub fall_factor: f64,
    pub pass: bool,
}

pub fn liminf_schedule(profile: &BoundsProfile, n_max: u32) -> Result<ScheduleTable> {
    profile.validate()?;
    if n_max < 2 {
        return Err(CoflowError::InvalidArgument("n_max must be at least 2".into()));
    }
    let mut rows = Vec::with_capacity(n_max as usize);
    for n in 1..=n_max {
        let eps = 0.5f64.powi(n as i32);
        let delta = 1.0 / n as f64;
        let b = w_lower_bound(eps, delta, profile.lipschitz, profile.sup)?;
        let w = b.value.ok_or_else(|| CoflowError::InvalidArgument(format!("g^-1 undefined at n = {n}")))?;
        let nf = n as f64;
        let asymptotic = 8192.0 * profile.c * (2.0 * nf * 4f64.ln() + 2.0 * (32.0 * nf).ln()) * eps;
        rows.push(ScheduleRow {
            n,
            eps,
            delta,
            w_bound: w,
            hypotheses_hold: b.hypotheses.all(),
            ratio: profile.f(8.0 * eps) / w,
            asymptotic,
        });
    }
    let mut decreasing_from = None;
    for k in (0..rows.len()).rev() {
        if k + 1 < rows.len() && rows[k + 1].ratio >= rows[k].ratio {
            break;
        }
        decreasing_from = Some(rows[k].n);
    }
    let fall_factor = rows[0].ratio / rows[rows.len() - 1].ratio;
    let pass = decreasing_from.is_some_and(|n0| n0 < n_max) && fall_factor >= 1e3;
    Ok(ScheduleTable { rows, decreasing_from, fall_factor, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn g_values() {
        assert_eq!(g(0.0).unwrap(), 0.0);
        // P(|N| >= 1) and 4 P(|N| >= 2) to 14 digits
        assert_abs_diff_eq!(g(1.0).unwrap(), 0.31731050786291415, epsilon = 1e-14);
        assert_abs_diff_eq!(g(2.0).unwrap(), 4.0 * 0.04550026389635842, epsilon = 1e-14);
        assert!(g(-0.1).is_err());
    }

    #[test]
    fn x_star_is_maximum() {
        let x = find_x_star();
        assert!((1.1..=1.25).contains(&x));
        let gx = g(x).unwrap();
        assert!(gx >= g(x - 1e-3).unwrap() && gx >= g(x + 1e-3).unwrap());
        assert!(g_prime(x - 1e-6) > 0.0 && g_prime(x + 1e-6) < 0.0);
    }

    #[test]
    fn g_inv_round_trip() {
        assert_abs_diff_eq!(g_inv(g(2.0).unwrap()).unwrap(), 2.0, epsilon = 1e-9);
        for eps in [1e-3, 1e-6, 1e-10] {
            assert_abs_diff_eq!(g(g_inv(eps).unwrap()).unwrap(), eps, epsilon = 1e-9);
        }
        assert!(g_inv(0.0).is_err());
        assert!(g_inv(1.0).is_err());
        assert_abs_diff_eq!(g_inv(g_max()).unwrap(), find_x_star(), epsilon = 1e-6);
    }

    #[test]
    fn identity_residual() {
        for (e, t) in [(0.4, 1.0), (1.0, 0.01)] {
            assert!(gaussian_tail_identity_residual(e, t).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn hypothesis_gate() {
        let b = w_lower_bound(100.0, 1.0, 1.0, 0.0).unwrap();
        assert!(b.asserted().is_none());
        let b = w_lower_bound(0.1, 0.01, 0.0, 0.0).unwrap();
        assert!(b.hypotheses.all());
        let expect = (0.1 / (4.0 * g_inv(3.125e-6).unwrap())).powi(2);
        assert_eq!(b.value.unwrap(), expect);
    }

    #[test]
    fn brownian_w_closed_form() {
        // rate(t) = g(eps / sqrt t) / eps^2, so w = (eps / g^{-1}(eps^2 delta))^2
        let (eps, delta) = (0.1, 0.01);
        let exact = (eps / g_inv(eps * eps * delta).unwrap()).powi(2);
        assert_abs_diff_eq!(brownian_w(eps, delta).unwrap(), exact, epsilon = 1e-12);
        assert!(brownian_w(eps, delta).unwrap() >= w_lower_bound(eps, delta, 0.0, 0.0).unwrap().value.unwrap());
    }
}
