//! Scaled, regularized classical dynamics of hydrogen in a magnetic field.
//!
//! Semiparabolic coordinates `mu = sqrt(r + z)`, `nu = sqrt(r - z)` turn the
//! Coulomb problem at fixed scaled energy into a smooth pseudo-Hamiltonian
//!
//! ```text
//! h = (p_mu^2 + p_nu^2)/2 - E (mu^2 + nu^2) + mu^2 nu^2 (mu^2 + nu^2)/8 = 2
//! ```
//!
//! in which trajectories pass through the nucleus without singularity. The
//! independent variable is the regularized time `tau`; the scaled action
//! accumulates as `ds/dtau = p_mu^2 + p_nu^2`.

pub mod dop853;
mod trajectory;

pub use dop853::Tolerances;
pub use trajectory::{integrate, EventSpec, NUCLEUS_RADIUS, IntegrateOptions, Pass, StopReason, TrajectoryRecord};

use crate::{Error, Result};
use std::f64::consts::PI;

/// Value of the pseudo-Hamiltonian on every physical trajectory.
pub const PSEUDO_ENERGY: f64 = 2.0;

/// Scaled energy `E gamma^(-2/3)`; only the bound regime is accepted.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ScaledEnergy(f64);

impl ScaledEnergy {
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || value >= 0.0 {
            return Err(Error::Domain(format!(
                "scaled energy must be finite and negative, got {value}"
            )));
        }
        Ok(ScaledEnergy(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for ScaledEnergy {
    fn default() -> Self {
        ScaledEnergy(-0.7)
    }
}

impl TryFrom<f64> for ScaledEnergy {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        ScaledEnergy::new(v)
    }
}

impl From<ScaledEnergy> for f64 {
    fn from(e: ScaledEnergy) -> f64 {
        e.0
    }
}

/// Point in regularized phase space plus accumulated action and time.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhaseState {
    pub mu: f64,
    pub nu: f64,
    pub p_mu: f64,
    pub p_nu: f64,
    /// Accumulated scaled action.
    pub s: f64,
    /// Accumulated regularized time.
    pub t: f64,
}

impl PhaseState {
    pub fn at(mu: f64, nu: f64, p_mu: f64, p_nu: f64) -> Self {
        PhaseState {
            mu,
            nu,
            p_mu,
            p_nu,
            s: 0.0,
            t: 0.0,
        }
    }

    /// Distance from the nucleus in semiparabolic coordinates.
    pub fn radius(&self) -> f64 {
        self.mu.hypot(self.nu)
    }

    /// Signed miss function `mu p_nu - nu p_mu`.
    pub fn miss(&self) -> f64 {
        self.mu * self.p_nu - self.nu * self.p_mu
    }

    /// Half the rate of change of `mu^2 + nu^2`; vanishes at closest approach.
    pub fn radial_rate(&self) -> f64 {
        self.mu * self.p_mu + self.nu * self.p_nu
    }

    /// Physical angle to the field axis of the momentum direction, folded into
    /// `[0, pi]`.
    pub fn momentum_angle(&self) -> f64 {
        2.0 * self.p_nu.abs().atan2(self.p_mu.abs())
    }

    /// Same state with reversed momenta.
    pub fn reversed(&self) -> Self {
        PhaseState {
            p_mu: -self.p_mu,
            p_nu: -self.p_nu,
            ..*self
        }
    }
}

/// Phase-space derivative with respect to regularized time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseDerivative {
    pub d_mu: f64,
    pub d_nu: f64,
    pub d_p_mu: f64,
    pub d_p_nu: f64,
    pub d_s: f64,
}

/// 2x2 transverse stability matrix in the (deviation across the flow,
/// conjugate momentum) chart; `m12` is the element that sets the
/// semiclassical amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Monodromy {
    pub m: [[f64; 2]; 2],
}

impl Monodromy {
    pub fn identity() -> Self {
        Monodromy {
            m: [[1.0, 0.0], [0.0, 1.0]],
        }
    }

    pub fn m12(&self) -> f64 {
        self.m[0][1]
    }

    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn trace(&self) -> f64 {
        self.m[0][0] + self.m[1][1]
    }

    /// `self * rhs`.
    pub fn compose(&self, rhs: &Monodromy) -> Monodromy {
        let a = &self.m;
        let b = &rhs.m;
        let mut m = [[0.0; 2]; 2];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Monodromy { m }
    }

    pub fn pow(&self, k: u32) -> Monodromy {
        (0..k).fold(Monodromy::identity(), |acc, _| acc.compose(self))
    }
}

#[inline]
pub(crate) fn potential_gradient(mu: f64, nu: f64, e: f64) -> (f64, f64) {
    let mu2 = mu * mu;
    let nu2 = nu * nu;
    let g_mu = -2.0 * e * mu + 0.5 * mu2 * mu * nu2 + 0.25 * mu * nu2 * nu2;
    let g_nu = -2.0 * e * nu + 0.5 * nu2 * nu * mu2 + 0.25 * nu * mu2 * mu2;
    (g_mu, g_nu)
}

/// Second derivatives `(V_mumu, V_munu, V_nunu)` of the potential part.
#[inline]
pub(crate) fn potential_hessian(mu: f64, nu: f64, e: f64) -> (f64, f64, f64) {
    let mu2 = mu * mu;
    let nu2 = nu * nu;
    let cross = 1.5 * mu2 * nu2;
    let v_mm = -2.0 * e + cross + 0.25 * nu2 * nu2;
    let v_nn = -2.0 * e + cross + 0.25 * mu2 * mu2;
    let v_mn = mu * nu * (mu2 + nu2);
    (v_mm, v_mn, v_nn)
}

/// Pseudo-Hamiltonian; equals 2 on physical trajectories.
pub fn hamiltonian(state: &PhaseState, e: ScaledEnergy) -> f64 {
    let mu2 = state.mu * state.mu;
    let nu2 = state.nu * state.nu;
    0.5 * (state.p_mu * state.p_mu + state.p_nu * state.p_nu) - e.0 * (mu2 + nu2)
        + 0.125 * mu2 * nu2 * (mu2 + nu2)
}

/// Hamilton's equations plus the action rate.
pub fn eom_rhs(state: &PhaseState, e: ScaledEnergy) -> PhaseDerivative {
    let (g_mu, g_nu) = potential_gradient(state.mu, state.nu, e.0);
    PhaseDerivative {
        d_mu: state.p_mu,
        d_nu: state.p_nu,
        d_p_mu: -g_mu,
        d_p_nu: -g_nu,
        d_s: state.p_mu * state.p_mu + state.p_nu * state.p_nu,
    }
}

/// State leaving the nucleus at physical angle `theta_i` to the field axis.
pub fn launch_from_nucleus(theta_i: f64, _e: ScaledEnergy) -> Result<PhaseState> {
    if !(0.0..=PI).contains(&theta_i) {
        return Err(Error::Domain(format!(
            "launch angle {theta_i} outside [0, pi]"
        )));
    }
    let half = 0.5 * theta_i;
    Ok(PhaseState::at(0.0, 0.0, 2.0 * half.cos(), 2.0 * half.sin()))
}

/// Right-hand side for the bare flow: `(mu, nu, p_mu, p_nu, s)`.
pub(crate) struct Flow {
    pub e: f64,
}

impl dop853::Autonomous<5> for Flow {
    #[inline]
    fn rhs(&self, y: &[f64; 5], dy: &mut [f64; 5]) {
        let (g_mu, g_nu) = potential_gradient(y[0], y[1], self.e);
        dy[0] = y[2];
        dy[1] = y[3];
        dy[2] = -g_mu;
        dy[3] = -g_nu;
        dy[4] = y[2] * y[2] + y[3] * y[3];
    }
}

/// Flow plus two tangent vectors `(dq_mu, dq_nu, dp_mu, dp_nu)` at indices
/// 5..9 and 9..13.
pub(crate) struct TangentFlow {
    pub e: f64,
}

impl dop853::Autonomous<13> for TangentFlow {
    #[inline]
    fn rhs(&self, y: &[f64; 13], dy: &mut [f64; 13]) {
        let (g_mu, g_nu) = potential_gradient(y[0], y[1], self.e);
        let (v_mm, v_mn, v_nn) = potential_hessian(y[0], y[1], self.e);
        dy[0] = y[2];
        dy[1] = y[3];
        dy[2] = -g_mu;
        dy[3] = -g_nu;
        dy[4] = y[2] * y[2] + y[3] * y[3];
        for base in [5, 9] {
            dy[base] = y[base + 2];
            dy[base + 1] = y[base + 3];
            dy[base + 2] = -(v_mm * y[base] + v_mn * y[base + 1]);
            dy[base + 3] = -(v_mn * y[base] + v_nn * y[base + 1]);
        }
    }
}

/// On-shell tangent vectors spanning the transverse chart at `state`:
/// a unit displacement across the flow and a unit momentum kick across it.
pub(crate) fn transverse_basis(state: &PhaseState, e: f64) -> [[f64; 4]; 2] {
    let p = state.p_mu.hypot(state.p_nu);
    let perp = [-state.p_nu / p, state.p_mu / p];
    let (g_mu, g_nu) = potential_gradient(state.mu, state.nu, e);
    // Longitudinal momentum correction keeps dh = 0 for the displacement.
    let k = -(g_mu * perp[0] + g_nu * perp[1]) / (p * p);
    [
        [perp[0], perp[1], k * state.p_mu, k * state.p_nu],
        [0.0, 0.0, perp[0], perp[1]],
    ]
}

/// Projects two propagated tangent vectors onto the transverse chart at
/// `state`, removing the component along the flow.
pub(crate) fn transverse_chart(state: &PhaseState, e: f64, d1: &[f64; 4], d2: &[f64; 4]) -> Monodromy {
    let p = state.p_mu.hypot(state.p_nu);
    let along = [state.p_mu / p, state.p_nu / p];
    let perp = [-along[1], along[0]];
    let (g_mu, g_nu) = potential_gradient(state.mu, state.nu, e);
    let p_dot = [-g_mu, -g_nu];
    let project = |d: &[f64; 4]| -> (f64, f64) {
        let shift = (along[0] * d[0] + along[1] * d[1]) / p;
        let q = perp[0] * d[0] + perp[1] * d[1];
        let pp = perp[0] * (d[2] - shift * p_dot[0]) + perp[1] * (d[3] - shift * p_dot[1]);
        (q, pp)
    };
    let (q1, p1) = project(d1);
    let (q2, p2) = project(d2);
    Monodromy {
        m: [[q1, q2], [p1, p2]],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn e07() -> ScaledEnergy {
        ScaledEnergy::new(-0.7).unwrap()
    }

    #[test]
    fn hamiltonian_examples() {
        let e = e07();
        assert_abs_diff_eq!(hamiltonian(&PhaseState::at(0.0, 0.0, 2.0, 0.0), e), 2.0, epsilon = 1e-15);
        let mu = (2.0f64 / 0.7).sqrt();
        assert_abs_diff_eq!(hamiltonian(&PhaseState::at(mu, 0.0, 0.0, 0.0), e), 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(hamiltonian(&PhaseState::at(1.0, 1.0, 0.0, 0.0), e), 1.65, epsilon = 1e-14);
    }

    #[test]
    fn rhs_at_nucleus() {
        let d = eom_rhs(&PhaseState::at(0.0, 0.0, 2.0, 0.0), e07());
        assert_eq!((d.d_mu, d.d_nu, d.d_p_mu, d.d_p_nu), (2.0, 0.0, 0.0, 0.0));
        assert_eq!(d.d_s, 4.0);
    }

    #[test]
    fn launch_examples() {
        let e = e07();
        let s = launch_from_nucleus(0.0, e).unwrap();
        assert_eq!((s.p_mu, s.p_nu), (2.0, 0.0));
        let s = launch_from_nucleus(PI, e).unwrap();
        assert_abs_diff_eq!(s.p_mu, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.p_nu, 2.0, epsilon = 1e-15);
        let s = launch_from_nucleus(PI / 2.0, e).unwrap();
        assert_abs_diff_eq!(s.p_mu, 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(s.p_nu, 2f64.sqrt(), epsilon = 1e-15);
        assert!(launch_from_nucleus(-0.1, e).is_err());
        assert!(launch_from_nucleus(3.2, e).is_err());
    }

    #[test]
    fn scaled_energy_rejects_nonnegative() {
        assert!(ScaledEnergy::new(0.0).is_err());
        assert!(ScaledEnergy::new(0.3).is_err());
        assert!(ScaledEnergy::new(f64::NAN).is_err());
    }

    #[test]
    fn transverse_basis_is_identity_at_nucleus() {
        let e = e07();
        let s = launch_from_nucleus(0.83, e).unwrap();
        let [d1, d2] = transverse_basis(&s, e.value());
        let m = transverse_chart(&s, e.value(), &d1, &d2);
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(m.m[i][j], if i == j { 1.0 } else { 0.0 }, epsilon = 1e-15);
            }
        }
    }

    proptest! {
        #[test]
        fn force_is_minus_gradient_of_hamiltonian(
            mu in -2.0f64..2.0, nu in -2.0f64..2.0,
            pm in -2.0f64..2.0, pn in -2.0f64..2.0,
        ) {
            let e = e07();
            let st = PhaseState::at(mu, nu, pm, pn);
            let d = eom_rhs(&st, e);
            let h = 1e-6;
            let fd = |f: &dyn Fn(f64) -> PhaseState| {
                (hamiltonian(&f(h), e) - hamiltonian(&f(-h), e)) / (2.0 * h)
            };
            let dh_dmu = fd(&|x| PhaseState::at(mu + x, nu, pm, pn));
            let dh_dnu = fd(&|x| PhaseState::at(mu, nu + x, pm, pn));
            let dh_dpm = fd(&|x| PhaseState::at(mu, nu, pm + x, pn));
            let check = |a: f64, b: f64| (a - b).abs() <= 1e-6 * (1.0 + b.abs());
            prop_assert!(check(d.d_p_mu, -dh_dmu));
            prop_assert!(check(d.d_p_nu, -dh_dnu));
            prop_assert!(check(d.d_mu, dh_dpm));
        }
    }
}
