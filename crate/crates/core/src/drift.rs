//! Lipschitz drift coefficients.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{CoflowError, Result};

/// Drift `a(x)` of the one-point motion `dX = a(X) dt + dW`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftSpec {
    #[default]
    Zero,
    Constant {
        c: f64,
    },
    /// `a(x) = c0 + c1 x`
    Linear {
        c0: f64,
        c1: f64,
    },
    /// `a(x) = amplitude * sin(wavenumber * x)`
    Sine {
        amplitude: f64,
        wavenumber: f64,
    },
}

impl DriftSpec {
    pub fn validate(&self) -> Result<()> {
        let params: &[f64] = match self {
            DriftSpec::Zero => &[],
            DriftSpec::Constant { c } => &[*c][..],
            DriftSpec::Linear { c0, c1 } => &[*c0, *c1][..],
            DriftSpec::Sine { amplitude, wavenumber } => &[*amplitude, *wavenumber][..],
        };
        if let Some(p) = params.iter().find(|p| !p.is_finite()) {
            return Err(CoflowError::InvalidDrift(format!("non-finite parameter {p}")));
        }
        Ok(())
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            DriftSpec::Zero => 0.0,
            DriftSpec::Constant { c } => c,
            DriftSpec::Linear { c0, c1 } => c0 + c1 * x,
            DriftSpec::Sine { amplitude, wavenumber } => amplitude * (wavenumber * x).sin(),
        }
    }

    /// Smallest `L` with `|a(x) - a(y)| <= L |x - y|`.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            DriftSpec::Zero | DriftSpec::Constant { .. } => 0.0,
            DriftSpec::Linear { c1, .. } => c1.abs(),
            DriftSpec::Sine { amplitude, wavenumber } => (amplitude * wavenumber).abs(),
        }
    }

    /// `sup_{x in [a, b]} |a(x)|`.
    pub fn sup_abs(&self, a: f64, b: f64) -> f64 {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        match *self {
            DriftSpec::Zero => 0.0,
            DriftSpec::Constant { c } => c.abs(),
            DriftSpec::Linear { .. } => self.eval(a).abs().max(self.eval(b).abs()),
            DriftSpec::Sine { amplitude, wavenumber } => {
                if wavenumber == 0.0 {
                    return 0.0;
                }
                // |sin| peaks where wavenumber * x = pi/2 + m pi
                let (lo, hi) = {
                    let (u, v) = (wavenumber * a, wavenumber * b);
                    if u <= v {
                        (u, v)
                    } else {
                        (v, u)
                    }
                };
                let m = ((lo - FRAC_PI_2) / PI).ceil();
                if FRAC_PI_2 + m * PI <= hi {
                    amplitude.abs()
                } else {
                    self.eval(a).abs().max(self.eval(b).abs())
                }
            }
        }
    }

    /// The drift of the dual flow, `-a`.
    pub fn negated(&self) -> DriftSpec {
        match *self {
            DriftSpec::Zero => DriftSpec::Zero,
            DriftSpec::Constant { c } => DriftSpec::Constant { c: -c },
            DriftSpec::Linear { c0, c1 } => DriftSpec::Linear { c0: -c0, c1: -c1 },
            DriftSpec::Sine { amplitude, wavenumber } => DriftSpec::Sine { amplitude: -amplitude, wavenumber },
        }
    }

    /// Checks the Lipschitz bound on `samples` deterministic pairs in `[a, b]`.
    /// Returns the worst observed ratio `|a(x)-a(y)|/|x-y|`.
    pub fn verify_lipschitz(&self, a: f64, b: f64, samples: usize) -> Result<f64> {
        self.validate()?;
        let lip = self.lipschitz();
        let mut worst = 0.0f64;
        let n = samples.max(2);
        for i in 0..n {
            // low-discrepancy pairs, no RNG needed
            let u = (i as f64 * 0.618_033_988_749_894_9).fract();
            let v = (i as f64 * 0.414_213_562_373_095_1 + 0.5).fract();
            let x = a + (b - a) * u;
            let y = a + (b - a) * v;
            if x == y {
                continue;
            }
            let ratio = (self.eval(x) - self.eval(y)).abs() / (x - y).abs();
            worst = worst.max(ratio);
        }
        if worst > lip * (1.0 + 1e-9) + 1e-12 {
            return Err(CoflowError::InvalidDrift(format!(
                "sampled Lipschitz ratio {worst} exceeds declared constant {lip}"
            )));
        }
        Ok(worst)
    }

    pub fn label(&self) -> String {
        match *self {
            DriftSpec::Zero => "zero".into(),
            DriftSpec::Constant { c } => format!("constant({c})"),
            DriftSpec::Linear { c0, c1 } => format!("linear({c0}+{c1}x)"),
            DriftSpec::Sine { amplitude, wavenumber } => format!("sine({amplitude}*sin({wavenumber}x))"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_and_constants() {
        let lin = DriftSpec::Linear { c0: 0.0, c1: -1.0 };
        assert_eq!(lin.eval(2.0), -2.0);
        assert_eq!(lin.lipschitz(), 1.0);
        assert_eq!(lin.sup_abs(-3.0, 1.0), 3.0);
        let s = DriftSpec::Sine { amplitude: 2.0, wavenumber: 1.0 };
        assert_eq!(s.lipschitz(), 2.0);
        assert_eq!(s.sup_abs(0.0, 4.0), 2.0);
        let small = s.sup_abs(0.0, 0.5);
        assert!((small - 2.0 * 0.5f64.sin()).abs() < 1e-15);
        assert_eq!(DriftSpec::Constant { c: -1.5 }.sup_abs(0.0, 1.0), 1.5);
    }

    #[test]
    fn negation() {
        let s = DriftSpec::Sine { amplitude: 1.0, wavenumber: 3.0 };
        for x in [-1.0, 0.2, 2.0] {
            assert_eq!(s.negated().eval(x), -s.eval(x));
        }
        assert_eq!(DriftSpec::Zero.negated(), DriftSpec::Zero);
    }

    #[test]
    fn lipschitz_by_sampling() {
        for d in [
            DriftSpec::Zero,
            DriftSpec::Constant { c: 1.0 },
            DriftSpec::Linear { c0: 0.3, c1: -1.0 },
            DriftSpec::Sine { amplitude: 1.0, wavenumber: 1.0 },
        ] {
            let worst = d.verify_lipschitz(-10.0, 10.0, 2000).unwrap();
            assert!(worst <= d.lipschitz() + 1e-12);
        }
        assert!(DriftSpec::Constant { c: f64::NAN }.validate().is_err());
    }

    #[test]
    fn json_tags() {
        let d: DriftSpec = serde_json::from_str(r#"{"kind":"linear","c0":0.0,"c1":-1.0}"#).unwrap();
        assert_eq!(d, DriftSpec::Linear { c0: 0.0, c1: -1.0 });
        assert!(serde_json::from_str::<DriftSpec>(r#"{"kind":"cubic"}"#).is_err());
        assert!(serde_json::from_str::<DriftSpec>(r#"{"kind":"constant","c":1,"extra":2}"#).is_err());
    }
}
