//! Right-continuous nondecreasing step functions of the real line.
//!
//! A [`MonotoneStepFn`] with breakpoints `b_1 < ... < b_k` and values
//! `v_0 <= ... <= v_k` takes the value `v_0` on `(-inf, b_1)`, `v_j` on
//! `[b_j, b_{j+1})` and `v_k` on `[b_k, inf)`. Adjacent equal values are
//! always merged, so two functions are equal as maps iff they are equal as
//! values of this type.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{CoflowError, Result};

/// A real number or one of the two infinite sentinels.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtendedReal {
    NegInf,
    Finite(f64),
    PosInf,
}

impl ExtendedReal {
    pub fn finite(self) -> Option<f64> {
        match self {
            ExtendedReal::Finite(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtendedReal::Finite(_))
    }

    /// Maps the sentinels to the IEEE infinities.
    pub fn to_f64(self) -> f64 {
        match self {
            ExtendedReal::NegInf => f64::NEG_INFINITY,
            ExtendedReal::Finite(v) => v,
            ExtendedReal::PosInf => f64::INFINITY,
        }
    }
}

impl fmt::Display for ExtendedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedReal::NegInf => write!(f, "-inf"),
            ExtendedReal::Finite(v) => write!(f, "{v}"),
            ExtendedReal::PosInf => write!(f, "+inf"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawStepFn", into = "RawStepFn")]
pub struct MonotoneStepFn {
    bp: Vec<f64>,
    vals: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawStepFn {
    bp: Vec<f64>,
    vals: Vec<f64>,
}

impl TryFrom<RawStepFn> for MonotoneStepFn {
    type Error = CoflowError;

    fn try_from(raw: RawStepFn) -> Result<Self> {
        MonotoneStepFn::new(raw.bp, raw.vals)
    }
}

impl From<MonotoneStepFn> for RawStepFn {
    fn from(f: MonotoneStepFn) -> Self {
        RawStepFn { bp: f.bp, vals: f.vals }
    }
}

impl MonotoneStepFn {
    /// Validates and canonicalizes. Breakpoints must be finite and strictly
    /// increasing, values finite and nondecreasing, and
    /// `vals.len() == bp.len() + 1`.
    pub fn new(bp: Vec<f64>, vals: Vec<f64>) -> Result<Self> {
        if vals.len() != bp.len() + 1 {
            return Err(CoflowError::InvalidStepFn(format!(
                "{} breakpoints need {} values, got {}",
                bp.len(),
                bp.len() + 1,
                vals.len()
            )));
        }
        if let Some(b) = bp.iter().find(|b| !b.is_finite()) {
            return Err(CoflowError::InvalidStepFn(format!("non-finite breakpoint {b}")));
        }
        if let Some(v) = vals.iter().find(|v| !v.is_finite()) {
            return Err(CoflowError::InvalidStepFn(format!("non-finite value {v}")));
        }
        if let Some(w) = bp.windows(2).find(|w| w[0] >= w[1]) {
            return Err(CoflowError::InvalidStepFn(format!(
                "breakpoints not strictly increasing: {} then {}",
                w[0], w[1]
            )));
        }
        if let Some(w) = vals.windows(2).find(|w| w[0] > w[1]) {
            return Err(CoflowError::InvalidStepFn(format!("values decrease: {} then {}", w[0], w[1])));
        }
        Ok(Self::canonical(bp, vals))
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::new(Vec::new(), vec![c])
    }

    /// Builds from already validated pieces and merges equal neighbours.
    pub(crate) fn canonical(bp: Vec<f64>, vals: Vec<f64>) -> Self {
        debug_assert_eq!(vals.len(), bp.len() + 1);
        let mut out_bp = Vec::with_capacity(bp.len());
        let mut out_vals = Vec::with_capacity(vals.len());
        out_vals.push(vals[0]);
        for (b, v) in bp.into_iter().zip(vals.into_iter().skip(1)) {
            if v != *out_vals.last().unwrap() {
                out_bp.push(b);
                out_vals.push(v);
            }
        }
        Self { bp: out_bp, vals: out_vals }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.bp
    }

    /// Distinct values, increasing. This is the image of the map.
    pub fn values(&self) -> &[f64] {
        &self.vals
    }

    pub fn is_constant(&self) -> bool {
        self.bp.is_empty()
    }

    fn piece(&self, x: f64) -> usize {
        self.bp.partition_point(|&b| b <= x)
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        self.vals[self.piece(x)]
    }

    /// `lim_{z -> x-} f(z)`.
    pub fn left_limit(&self, x: f64) -> f64 {
        self.vals[self.bp.partition_point(|&b| b < x)]
    }

    /// `lim_{z -> x+} f(z)`; equal to [`evaluate`](Self::evaluate) for a
    /// right-continuous function, computed from the breakpoint table.
    pub fn right_limit(&self, x: f64) -> f64 {
        self.vals[self.bp.partition_point(|&b| b <= x)]
    }

    /// `x -> self(inner(x))`.
    pub fn after(&self, inner: &MonotoneStepFn) -> MonotoneStepFn {
        compose(self, inner)
    }

    /// `inf { x : f(x) > y }`.
    pub fn v_plus(&self, y: f64) -> ExtendedReal {
        let i = self.vals.partition_point(|&v| v <= y);
        self.inverse_at(i)
    }

    /// `inf { x : f(x) >= y }`.
    pub fn v_minus(&self, y: f64) -> ExtendedReal {
        let i = self.vals.partition_point(|&v| v < y);
        self.inverse_at(i)
    }

    fn inverse_at(&self, piece: usize) -> ExtendedReal {
        if piece == self.vals.len() {
            ExtendedReal::PosInf
        } else if piece == 0 {
            ExtendedReal::NegInf
        } else {
            ExtendedReal::Finite(self.bp[piece - 1])
        }
    }

    /// True when `y` is exactly one of the values, i.e. an inverse query at
    /// `y` hits a tie `f(x) == y`.
    pub fn attains(&self, y: f64) -> bool {
        self.vals.binary_search_by(|v| v.partial_cmp(&y).unwrap_or(Ordering::Less)).is_ok()
    }
}

/// `h = g ∘ f`. The breakpoints of `h` are a subset of those of `f`.
pub fn compose(g: &MonotoneStepFn, f: &MonotoneStepFn) -> MonotoneStepFn {
    let vals = f.vals.iter().map(|&v| g.evaluate(v)).collect();
    MonotoneStepFn::canonical(f.bp.clone(), vals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sf(bp: &[f64], vals: &[f64]) -> MonotoneStepFn {
        MonotoneStepFn::new(bp.to_vec(), vals.to_vec()).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        let f = sf(&[0.0], &[-1.0, 1.0]);
        assert_eq!(f.evaluate(0.0), 1.0);
        assert_eq!(f.evaluate(-0.5), -1.0);
        let g = sf(&[-1.0, 2.0], &[0.0, 3.0, 5.0]);
        assert_eq!(g.evaluate(2.5), 5.0);
    }

    #[test]
    fn left_limit_examples() {
        let f = sf(&[0.0], &[-1.0, 1.0]);
        assert_eq!(f.left_limit(0.0), -1.0);
        assert_eq!(f.left_limit(0.5), 1.0);
        let g = sf(&[-1.0, 2.0], &[0.0, 3.0, 5.0]);
        assert_eq!(g.left_limit(2.0), 3.0);
    }

    #[test]
    fn compose_examples() {
        let g = sf(&[-1.0, 2.0], &[0.0, 3.0, 5.0]);
        let c = MonotoneStepFn::constant(0.5).unwrap();
        assert_eq!(compose(&g, &c), MonotoneStepFn::constant(3.0).unwrap());

        let f = sf(&[0.0], &[-1.0, 1.0]);
        let g = sf(&[0.0], &[-2.0, 2.0]);
        let h = compose(&g, &f);
        assert_eq!(h, sf(&[0.0], &[-2.0, 2.0]));
        for k in -40..=40 {
            let x = k as f64 * 0.05;
            assert_eq!(h.evaluate(x), g.evaluate(f.evaluate(x)));
        }

        let f = sf(&[0.0], &[-1.0, 0.5]);
        let g = sf(&[1.0], &[0.0, 3.0]);
        let h = compose(&g, &f);
        assert!(h.is_constant());
        assert_eq!(h.evaluate(-7.0), 0.0);
        assert_eq!(h.evaluate(7.0), 0.0);
    }

    #[test]
    fn inverse_examples() {
        let f = sf(&[0.0], &[-1.0, 1.0]);
        assert_eq!(f.v_plus(0.0), ExtendedReal::Finite(0.0));
        assert_eq!(f.v_plus(1.0), ExtendedReal::PosInf);
        assert_eq!(f.v_plus(-1.0), ExtendedReal::Finite(0.0));
        assert_eq!(f.v_minus(1.0), ExtendedReal::Finite(0.0));
        assert_eq!(f.v_minus(-1.0), ExtendedReal::NegInf);
        assert_eq!(f.v_minus(0.0), ExtendedReal::Finite(0.0));
    }

    #[test]
    fn rejects_malformed() {
        assert!(MonotoneStepFn::new(vec![1.0, 1.0], vec![0.0, 1.0, 2.0]).is_err());
        assert!(MonotoneStepFn::new(vec![0.0], vec![1.0, 0.0]).is_err());
        assert!(MonotoneStepFn::new(vec![0.0], vec![1.0]).is_err());
        assert!(MonotoneStepFn::new(vec![f64::NAN], vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn canonical_form_merges_equal_pieces() {
        let f = sf(&[0.0, 1.0, 2.0], &[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(f.breakpoints(), &[1.0]);
        assert_eq!(f.values(), &[0.0, 1.0]);
    }

    #[test]
    fn json_shape() {
        let f = sf(&[0.1, 2.0], &[-1.0, 0.3, 7.0]);
        let s = serde_json::to_string(&f).unwrap();
        assert_eq!(s, r#"{"bp":[0.1,2.0],"vals":[-1.0,0.3,7.0]}"#);
        let back: MonotoneStepFn = serde_json::from_str(&s).unwrap();
        assert_eq!(back, f);
        assert!(serde_json::from_str::<MonotoneStepFn>(r#"{"bp":[0.0],"vals":[2.0,1.0]}"#).is_err());
    }

    /// Brute-force infimum: scan every breakpoint and the points between and
    /// beyond them; the set `{x : pred(f(x))}` is an up-set so its infimum is
    /// a breakpoint or infinite.
    fn brute_inf(f: &MonotoneStepFn, pred: impl Fn(f64) -> bool) -> ExtendedReal {
        let bp = f.breakpoints();
        let far_left = bp.first().copied().unwrap_or(0.0) - 1.0e6;
        if pred(f.evaluate(far_left)) {
            return ExtendedReal::NegInf;
        }
        for &b in bp {
            if pred(f.evaluate(b)) {
                return ExtendedReal::Finite(b);
            }
        }
        ExtendedReal::PosInf
    }

    fn arb_step_fn() -> impl Strategy<Value = MonotoneStepFn> {
        (1usize..8)
            .prop_flat_map(|k| {
                (prop::collection::vec(0.01f64..2.0, k), prop::collection::vec(0u8..3, k + 1), -5.0f64..5.0)
            })
            .prop_map(|(gaps, jumps, start)| {
                let mut bp = Vec::new();
                let mut x = start;
                for g in gaps {
                    x += g;
                    bp.push(x);
                }
                let mut vals = Vec::new();
                let mut v = -3.0;
                for j in jumps {
                    v += j as f64 * 0.5;
                    vals.push(v);
                }
                MonotoneStepFn::new(bp, vals).unwrap()
            })
    }

    proptest! {
        #[test]
        fn inverses_match_brute_force(f in arb_step_fn(), y in -4.0f64..4.0) {
            prop_assert_eq!(f.v_plus(y), brute_inf(&f, |v| v > y));
            prop_assert_eq!(f.v_minus(y), brute_inf(&f, |v| v >= y));
            // ties: query exactly at attained values
            for &v in f.values() {
                prop_assert_eq!(f.v_plus(v), brute_inf(&f, |w| w > v));
                prop_assert_eq!(f.v_minus(v), brute_inf(&f, |w| w >= v));
            }
        }

        #[test]
        fn inverse_order_and_monotonicity(f in arb_step_fn(), y1 in -4.0f64..4.0, dy in 0.0f64..3.0) {
            let y2 = y1 + dy;
            prop_assert!(f.v_minus(y1) <= f.v_plus(y1));
            prop_assert!(f.v_plus(y1) <= f.v_plus(y2));
            prop_assert!(f.v_minus(y1) <= f.v_minus(y2));
        }

        #[test]
        fn galois_property(f in arb_step_fn(), y in -4.0f64..4.0, probe in prop::collection::vec(-12.0f64..12.0, 20)) {
            if let ExtendedReal::Finite(vp) = f.v_plus(y) {
                for &x in &probe {
                    if x > vp { prop_assert!(f.evaluate(x) > y); }
                }
            }
            if let ExtendedReal::Finite(vm) = f.v_minus(y) {
                for &x in &probe {
                    if x < vm { prop_assert!(f.evaluate(x) < y); }
                }
            }
        }

        #[test]
        fn compose_is_pointwise_and_associative(f in arb_step_fn(), g in arb_step_fn(), h in arb_step_fn(),
                                                 grid in prop::collection::vec(-12.0f64..12.0, 30)) {
            let gf = compose(&g, &f);
            prop_assert!(gf.breakpoints().len() <= f.breakpoints().len());
            let mut xs = grid.clone();
            xs.extend_from_slice(f.breakpoints());
            for &x in &xs {
                prop_assert_eq!(gf.evaluate(x), g.evaluate(f.evaluate(x)));
            }
            prop_assert_eq!(compose(&h, &gf), compose(&compose(&h, &g), &f));
        }

        #[test]
        fn evaluate_is_monotone(f in arb_step_fn(), a in -12.0f64..12.0, d in 0.0f64..5.0) {
            prop_assert!(f.evaluate(a) <= f.evaluate(a + d));
            prop_assert!(f.left_limit(a) <= f.evaluate(a));
            prop_assert_eq!(f.right_limit(a), f.evaluate(a));
        }
    }
}
