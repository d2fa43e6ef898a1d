use super::dop853::{Autonomous, Dop853, Interpolant, Tolerances};
use super::{hamiltonian, potential_gradient, transverse_basis, transverse_chart, Flow, Monodromy, PhaseState, ScaledEnergy, TangentFlow, PSEUDO_ENERGY};
use crate::roots::brent;
use crate::{Error, Result};

/// Interior sample points per step when tracking zeros of `m12`.
const ZERO_SAMPLES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateOptions {
    pub tol: Tolerances,
    /// Propagate the transverse stability matrix and track zeros of `m12`.
    pub monodromy: bool,
    pub max_steps: usize,
    /// Largest tolerated `|h - 2|`; exceeding it is an error.
    pub max_energy_drift: f64,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            tol: Tolerances::default(),
            monodromy: false,
            max_steps: 20_000_000,
            max_energy_drift: 1e-9,
        }
    }
}

impl IntegrateOptions {
    pub fn with_monodromy(mut self) -> Self {
        self.monodromy = true;
        self
    }
}

/// Which events to record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventSpec {
    /// Record closest-approach passes (local minima of `mu^2 + nu^2`).
    pub closest_approach: bool,
    /// Passes farther than this from the nucleus are counted but not stored.
    pub max_pass_radius: f64,
    /// Stop once this many passes have been stored.
    pub stop_after: Option<usize>,
}

impl Default for EventSpec {
    fn default() -> Self {
        EventSpec {
            closest_approach: true,
            max_pass_radius: f64::INFINITY,
            stop_after: None,
        }
    }
}

impl EventSpec {
    pub fn none() -> Self {
        EventSpec {
            closest_approach: false,
            ..Default::default()
        }
    }
}

/// A closest-approach pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pass {
    /// Ordinal among all closest-approach passes of the trajectory.
    pub index: usize,
    pub state: PhaseState,
    pub monodromy: Option<Monodromy>,
    /// Zeros of `m12` strictly before this pass.
    pub m12_zeros: usize,
    /// Crossings of the `mu = 0` or `nu = 0` lines away from the nucleus
    /// strictly before this pass.
    pub axis_crossings: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    ActionLimit,
    PassLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub passes: Vec<Pass>,
    pub final_state: PhaseState,
    pub final_monodromy: Option<Monodromy>,
    /// Regularized times of the zeros of `m12`.
    pub m12_zeros: Vec<f64>,
    /// Zeros that landed within 1e-12 of a step boundary.
    pub flagged_zeros: usize,
    /// Regularized times at which `mu` or `nu` changes sign away from the
    /// nucleus (tracked with the monodromy only).
    pub axis_crossings: Vec<f64>,
    pub max_energy_drift: f64,
    pub steps: usize,
    pub stop: StopReason,
}

/// Integrates from `state0` until the accumulated action reaches `s_limit`
/// or the pass limit in `events` is hit.
pub fn integrate(
    state0: &PhaseState,
    e: ScaledEnergy,
    s_limit: f64,
    events: &EventSpec,
    opts: &IntegrateOptions,
) -> Result<TrajectoryRecord> {
    let h0 = hamiltonian(state0, e);
    if (h0 - PSEUDO_ENERGY).abs() > 1e-8 {
        return Err(Error::Domain(format!(
            "initial state has h = {h0}, expected {PSEUDO_ENERGY}"
        )));
    }
    if opts.monodromy {
        let [d1, d2] = transverse_basis(state0, e.value());
        let mut y0 = [0.0; 13];
        y0[..5].copy_from_slice(&[state0.mu, state0.nu, state0.p_mu, state0.p_nu, state0.s]);
        y0[5..9].copy_from_slice(&d1);
        y0[9..13].copy_from_slice(&d2);
        drive(&TangentFlow { e: e.value() }, y0, state0.t, e, s_limit, events, opts, true)
    } else {
        let y0 = [state0.mu, state0.nu, state0.p_mu, state0.p_nu, state0.s];
        drive(&Flow { e: e.value() }, y0, state0.t, e, s_limit, events, opts, false)
    }
}

fn phase<const N: usize>(y: &[f64; N], t: f64) -> PhaseState {
    PhaseState {
        mu: y[0],
        nu: y[1],
        p_mu: y[2],
        p_nu: y[3],
        s: y[4],
        t,
    }
}

fn chart<const N: usize>(y: &[f64; N], e: f64) -> Monodromy {
    let st = phase(y, 0.0);
    let d1 = [y[5], y[6], y[7], y[8]];
    let d2 = [y[9], y[10], y[11], y[12]];
    transverse_chart(&st, e, &d1, &d2)
}

/// `p x dq` for the momentum-kick tangent vector; `m12 |p|`.
fn focal<const N: usize>(y: &[f64; N]) -> f64 {
    y[2] * y[10] - y[3] * y[9]
}

#[allow(clippy::too_many_arguments)]
fn drive<const N: usize, S: Autonomous<N>>(
    sys: &S,
    y0: [f64; N],
    t0: f64,
    e: ScaledEnergy,
    s_limit: f64,
    events: &EventSpec,
    opts: &IntegrateOptions,
    tangent: bool,
) -> Result<TrajectoryRecord> {
    let ev = e.value();
    // Step control sees only the base trajectory, so runs with and without
    // tangent vectors follow bit-identical step sequences.
    let mut mask = [false; N];
    mask[..5].fill(true);
    let mut stepper = Dop853::with_error_mask(sys, t0, y0, opts.tol, mask);

    let mut passes = Vec::new();
    let mut pass_count = 0usize;
    let mut zeros = Vec::new();
    let mut crossings = Vec::new();
    let mut flagged = 0usize;
    let mut focal_sign = 1.0f64;
    let mut max_drift = (hamiltonian(&phase(&y0, t0), e) - PSEUDO_ENERGY).abs();
    let mut steps = 0usize;

    let finish = |y: &[f64; N], t: f64, passes: Vec<Pass>, zeros: Vec<f64>, crossings: Vec<f64>, flagged, drift, steps, stop| {
        Ok(TrajectoryRecord {
            passes,
            final_state: phase(y, t),
            final_monodromy: tangent.then(|| chart(y, ev)),
            m12_zeros: zeros,
            flagged_zeros: flagged,
            axis_crossings: crossings,
            max_energy_drift: drift,
            steps,
            stop,
        })
    };

    if y0[4] >= s_limit {
        return finish(&y0, t0, passes, zeros, crossings, flagged, max_drift, 0, StopReason::ActionLimit);
    }

    loop {
        if steps >= opts.max_steps {
            return Err(Error::IntegrationFailure {
                last: phase(stepper.y(), stepper.t()),
                reason: format!("step budget of {} exhausted", opts.max_steps),
            });
        }
        let mut step = stepper.step(sys).map_err(|u| Error::IntegrationFailure {
            last: phase(stepper.y(), u.t),
            reason: "step size underflow".into(),
        })?;
        steps += 1;

        let drift = (hamiltonian(&phase(&step.y, step.t), e) - PSEUDO_ENERGY).abs();
        max_drift = max_drift.max(drift);
        if drift > opts.max_energy_drift {
            return Err(Error::ToleranceViolation {
                drift,
                at: phase(&step.y, step.t),
            });
        }

        let hits_limit = step.y[4] >= s_limit;
        let g_old = phase(&step.y_old, 0.0).radial_rate();
        let g_new = phase(&step.y, 0.0).radial_rate();
        let has_pass = events.closest_approach && g_old < 0.0 && g_new >= 0.0;
        if !(hits_limit || has_pass || tangent) {
            continue;
        }
        let interp = step.interpolant(sys);
        let t_end = if hits_limit {
            let (t, _, _) = brent(
                |t| interp.eval(t)[4] - s_limit,
                step.t_old,
                step.t,
                step.y_old[4] - s_limit,
                step.y[4] - s_limit,
                1e-15,
                200,
            );
            t
        } else {
            step.t
        };

        if tangent {
            track_focal_zeros(&interp, ev, step.t_old, t_end, &mut focal_sign, &mut zeros, &mut flagged);
            track_axis_crossings(&interp, step.t_old, t_end, &mut crossings);
        }

        if has_pass {
            let (tp, _, _) = brent(
                |t| phase(&interp.eval(t), 0.0).radial_rate(),
                step.t_old,
                step.t,
                g_old,
                g_new,
                1e-15,
                200,
            );
            if tp <= t_end {
                let index = pass_count;
                pass_count += 1;
                let y = interp.eval(tp);
                let state = phase(&y, tp);
                if state.radius() <= events.max_pass_radius {
                    let m12_zeros = zeros.iter().filter(|&&z| z < tp).count();
                    let axis_crossings = crossings.iter().filter(|&&z| z < tp).count();
                    passes.push(Pass {
                        index,
                        state,
                        monodromy: tangent.then(|| chart(&y, ev)),
                        m12_zeros,
                        axis_crossings,
                    });
                    if events.stop_after.is_some_and(|n| passes.len() >= n) {
                        zeros.retain(|&z| z < tp);
                        crossings.retain(|&z| z < tp);
                        return finish(&y, tp, passes, zeros, crossings, flagged, max_drift, steps, StopReason::PassLimit);
                    }
                }
            }
        }

        if hits_limit {
            let y = interp.eval(t_end);
            return finish(&y, t_end, passes, zeros, crossings, flagged, max_drift, steps, StopReason::ActionLimit);
        }
    }
}

/// Crossings closer than this to the nucleus are passages through it.
pub const NUCLEUS_RADIUS: f64 = 1e-4;

/// Records sign changes of `mu` and of `nu` on `[t0, t1]` that happen away
/// from the nucleus.
fn track_axis_crossings<const N: usize>(interp: &Interpolant<N>, t0: f64, t1: f64, out: &mut Vec<f64>) {
    let (ya, yb) = (interp.eval(t0), interp.eval(t1));
    for c in 0..2 {
        if ya[c] != 0.0 && yb[c] != 0.0 && ya[c].signum() != yb[c].signum() {
            let (tz, _, _) = brent(|t| interp.eval(t)[c], t0, t1, ya[c], yb[c], 1e-15, 200);
            let y = interp.eval(tz);
            if y[0].hypot(y[1]) > NUCLEUS_RADIUS {
                out.push(tz);
            }
        }
    }
}

fn focal_rate<const N: usize>(y: &[f64; N], e: f64) -> f64 {
    let (g_mu, g_nu) = potential_gradient(y[0], y[1], e);
    y[2] * y[12] - y[3] * y[11] - g_mu * y[10] + g_nu * y[9]
}

/// Records sign changes of `focal` on `[t0, t1]`. Each sample interval is
/// split at an interior extremum, so a pair of nearby zeros is not lost.
fn track_focal_zeros<const N: usize>(
    interp: &Interpolant<N>,
    e: f64,
    t0: f64,
    t1: f64,
    sign: &mut f64,
    zeros: &mut Vec<f64>,
    flagged: &mut usize,
) {
    let f = |t: f64| focal(&interp.eval(t));
    let df = |t: f64| focal_rate(&interp.eval(t), e);
    let mut ta = t0;
    let mut da = df(t0);
    for k in 1..=ZERO_SAMPLES {
        let tb = t0 + (t1 - t0) * k as f64 / ZERO_SAMPLES as f64;
        let db = df(tb);
        let mut pts = vec![ta];
        if da != 0.0 && db != 0.0 && da.signum() != db.signum() {
            pts.push(brent(df, ta, tb, da, db, 1e-15, 200).0);
        }
        pts.push(tb);
        for w in pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let fb = f(b);
            if fb == 0.0 || fb.signum() == *sign {
                continue;
            }
            let fa = f(a);
            let tz = if fa == 0.0 || fa.signum() == fb.signum() {
                a
            } else {
                brent(f, a, b, fa, fb, 1e-15, 200).0
            };
            if (tz - t0).abs() <= 1e-12 || (tz - t1).abs() <= 1e-12 {
                *flagged += 1;
            }
            zeros.push(tz);
            *sign = fb.signum();
        }
        ta = tb;
        da = db;
    }
}
