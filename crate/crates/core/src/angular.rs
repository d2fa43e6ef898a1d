//! Angular functions `Y(theta) = sum_l b_l P_l(cos theta)` that carry the
//! initial state and dipole operator into the closed-orbit amplitudes.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

/// Legendre-coefficient representation of an angular function.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularFunction {
    pub label: String,
    /// `coeffs[l]` multiplies `P_l(cos theta)`.
    pub coeffs: Vec<f64>,
}

/// `(2 pi)^(-1/2)`, the default s-wave constant.
pub fn swave_default() -> f64 {
    TAU.sqrt().recip()
}

impl AngularFunction {
    pub fn new(label: impl Into<String>, coeffs: Vec<f64>) -> Result<Self> {
        let label = label.into();
        if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(format!("bad coefficients for {label}")));
        }
        if label.is_empty() || label.contains([':', ',', ';']) || label.contains(char::is_whitespace) {
            return Err(Error::InvalidInput(format!("bad angular function label {label:?}")));
        }
        Ok(AngularFunction { label, coeffs })
    }

    /// Channel for a `2p0` initial state and light polarized along the field.
    pub fn build_2p0_parallel() -> Self {
        // 4 cos^2 - 1 = (8/3) P_2 + (1/3) P_0
        let k = 128.0 * (-4.0f64).exp() / TAU.sqrt();
        AngularFunction {
            label: "2p0-parallel".into(),
            coeffs: vec![k / 3.0, 0.0, 8.0 * k / 3.0],
        }
    }

    /// Isotropic channel with constant value `c`.
    pub fn build_swave(c: f64) -> Result<Self> {
        if c == 0.0 || !c.is_finite() {
            return Err(Error::InvalidInput(format!("s-wave constant must be finite and nonzero, got {c}")));
        }
        Ok(AngularFunction {
            label: "s-wave".into(),
            coeffs: vec![c],
        })
    }

    pub fn evaluate(&self, theta: f64) -> Result<f64> {
        if !(0.0..=PI).contains(&theta) {
            return Err(Error::Domain(format!("angle {theta} outside [0, pi]")));
        }
        Ok(self.eval_cos(theta.cos()))
    }

    /// Sum over `l` with the three-term recurrence
    /// `(l+1) P_{l+1} = (2l+1) x P_l - l P_{l-1}`.
    pub fn eval_cos(&self, x: f64) -> f64 {
        let mut p_prev = 1.0;
        let mut p = x;
        let mut acc = self.coeffs[0];
        for (l, c) in self.coeffs.iter().enumerate().skip(1) {
            if l > 1 {
                let lf = (l - 1) as f64;
                let next = ((2.0 * lf + 1.0) * x * p - lf * p_prev) / (lf + 1.0);
                p_prev = p;
                p = next;
            }
            acc += c * p;
        }
        acc
    }

    pub fn is_even(&self) -> bool {
        self.coeffs.iter().skip(1).step_by(2).all(|c| *c == 0.0)
    }
}

/// `label:c0,c1,...` with 17 significant digits.
impl fmt::Display for AngularFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cs: Vec<String> = self.coeffs.iter().map(|c| crate::hash::fmt_f64(*c)).collect();
        write!(f, "{}:{}", self.label, cs.join(","))
    }
}

impl FromStr for AngularFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("bad angular function spec {s:?}"));
        let (label, rest) = s.split_once(':').ok_or_else(bad)?;
        let coeffs = rest
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        AngularFunction::new(label, coeffs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn two_p_zero_values() {
        let y = AngularFunction::build_2p0_parallel();
        assert!(y.eval_cos(0.5).abs() < 1e-15);
        assert_relative_eq!(y.evaluate(0.0).unwrap(), 2.805_842_974_187_818, max_relative = 1e-14);
        assert_relative_eq!(y.evaluate(FRAC_PI_2).unwrap(), -0.935_280_991_395_939_3, max_relative = 1e-14);
        assert_relative_eq!(y.coeffs[2], 2.494_082_643_722_505, max_relative = 1e-14);
        assert_relative_eq!(y.coeffs[0], 0.311_760_330_465_313_1, max_relative = 1e-14);
        assert_eq!(y.coeffs[1], 0.0);
    }

    #[test]
    fn swave_is_constant_and_nonzero() {
        let y = AngularFunction::build_swave(1.0).unwrap();
        for k in 0..=10 {
            assert_eq!(y.evaluate(PI * k as f64 / 10.0).unwrap(), 1.0);
        }
        assert_eq!(y.coeffs, vec![1.0]);
        assert!(AngularFunction::build_swave(0.0).is_err());
        assert_relative_eq!(swave_default(), 0.398_942_280_401_432_7, max_relative = 1e-15);
    }

    #[test]
    fn domain_checked() {
        let y = AngularFunction::build_2p0_parallel();
        assert!(matches!(y.evaluate(-0.1), Err(Error::Domain(_))));
        assert!(matches!(y.evaluate(3.2), Err(Error::Domain(_))));
    }

    #[test]
    fn recurrence_matches_explicit_polynomials() {
        let explicit = [
            |_: f64| 1.0,
            |x: f64| x,
            |x: f64| 0.5 * (3.0 * x * x - 1.0),
            |x: f64| 0.5 * (5.0 * x * x * x - 3.0 * x),
            |x: f64| (35.0 * x.powi(4) - 30.0 * x * x + 3.0) / 8.0,
        ];
        for (l, p) in explicit.iter().enumerate() {
            let mut c = vec![0.0; l + 1];
            c[l] = 1.0;
            let y = AngularFunction::new("p", c).unwrap();
            for i in 0..1000 {
                let th = PI * i as f64 / 999.0;
                assert!((y.evaluate(th).unwrap() - p(th.cos())).abs() <= 1e-14, "l={l} theta={th}");
            }
        }
    }

    #[test]
    fn even_functions_are_reflection_symmetric() {
        let y = AngularFunction::new("even", vec![0.3, 0.0, -1.2, 0.0, 0.7]).unwrap();
        assert!(y.is_even());
        for i in 0..=200 {
            let th = PI * i as f64 / 200.0;
            let (a, b) = (y.evaluate(th).unwrap(), y.evaluate(PI - th).unwrap());
            assert!((a - b).abs() <= 4.0 * f64::EPSILON * a.abs().max(1.0));
        }
    }

    #[test]
    fn text_round_trip() {
        let y = AngularFunction::build_2p0_parallel();
        let back: AngularFunction = y.to_string().parse().unwrap();
        assert_eq!(back, y);
        assert!("nolabel".parse::<AngularFunction>().is_err());
    }
}
