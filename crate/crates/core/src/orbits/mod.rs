//! Search for orbits that leave the nucleus and return to it.
//!
//! A dense scan over launch angles records the signed miss function at every
//! close pass. Passes are matched between neighbouring seeds by action, and a
//! sign change marks a bracket that [`refine_closed_orbit`] polishes into a
//! [`ClosedOrbit`]. Repetitions are then built by integrating over several
//! periods.

mod table;

pub use table::{read_table, render_table, write_table, OrbitTable, TableMeta};

use std::f64::consts::{FRAC_PI_2, PI};

use crate::dynamics::{
    integrate, launch_from_nucleus, EventSpec, IntegrateOptions, Pass, ScaledEnergy, TrajectoryRecord, NUCLEUS_RADIUS,
};
use crate::par::Execution;
use crate::{Error, Result};

/// Largest miss function accepted as converged.
pub const MISS_TOL: f64 = 1e-12;
/// Largest return distance from the nucleus accepted for a closed orbit.
pub const CLOSURE_TOL: f64 = 1e-10;
/// Earlier passes closer than this mark the orbit as a repetition.
const REPEAT_RADIUS: f64 = 1e-6;

/// A closed orbit, or a repetition of one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedOrbit {
    pub id: usize,
    pub primitive_id: usize,
    /// 1 for primitive orbits.
    pub repetition: u32,
    pub theta_i: f64,
    pub theta_f: f64,
    pub s: f64,
    pub m12: f64,
    pub maslov: u32,
    pub closure_residual: f64,
}

impl ClosedOrbit {
    /// Orbit that retraces itself, so it is its own time-reversed partner.
    pub fn is_self_retracing(&self) -> bool {
        (self.theta_i - self.theta_f).abs() < 1e-8
    }

    /// Orbit along the field axis; its weight in the closed-orbit sum vanishes.
    pub fn is_axial(&self) -> bool {
        self.theta_i.sin().abs() < 1e-12 || self.theta_f.sin().abs() < 1e-12
    }
}

/// How the Maslov index of a closed orbit is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaslovRule {
    /// Zeros of `m12`, crossings of the semiparabolic axes away from the
    /// nucleus, and two per arrival at the nucleus.
    #[default]
    Regularized,
    /// Zeros of `m12` only.
    FocalZeros,
}

impl MaslovRule {
    pub fn name(self) -> &'static str {
        match self {
            MaslovRule::Regularized => "regularized",
            MaslovRule::FocalZeros => "focal-zeros",
        }
    }
}

impl std::str::FromStr for MaslovRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regularized" => Ok(MaslovRule::Regularized),
            "focal-zeros" => Ok(MaslovRule::FocalZeros),
            _ => Err(Error::InvalidInput(format!("unknown Maslov rule '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    pub n_seeds: usize,
    /// Launch angles are seeded in the open interval `(lo, hi)`.
    pub theta_range: (f64, f64),
    /// Only passes closer than this to the nucleus are tracked.
    pub pass_radius: f64,
    /// Largest action difference for matching passes of neighbouring seeds.
    pub match_window: f64,
    /// Unmatched passes closer than this trigger bisection of the seed
    /// interval.
    pub orphan_radius: f64,
    pub max_subdivision: usize,
    pub max_iter: usize,
    pub maslov: MaslovRule,
    pub integrate: IntegrateOptions,
    pub exec: Execution,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            n_seeds: 20_000,
            theta_range: (0.0, PI),
            pass_radius: 1.0,
            match_window: 0.5,
            orphan_radius: 0.2,
            max_subdivision: 6,
            max_iter: 80,
            maslov: MaslovRule::default(),
            integrate: IntegrateOptions::default(),
            exec: Execution::default(),
        }
    }
}

impl SearchOptions {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.theta_range;
        if self.n_seeds < 2 {
            return Err(Error::InvalidInput(format!("n_seeds = {} < 2", self.n_seeds)));
        }
        if !(0.0 <= lo && lo < hi && hi <= PI) {
            return Err(Error::InvalidInput(format!("empty or invalid angle range [{lo}, {hi}]")));
        }
        Ok(())
    }

    fn seed(&self, j: usize) -> f64 {
        let (lo, hi) = self.theta_range;
        lo + (hi - lo) * (j as f64 + 0.5) / self.n_seeds as f64
    }
}

/// Launch-angle bracket around a sign change of the miss function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub lo: f64,
    pub hi: f64,
    pub miss_lo: f64,
    pub miss_hi: f64,
    /// Action of the matched pass.
    pub s_guess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub candidate: Candidate,
    pub reason: String,
}

/// Outcome of a full search.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Census {
    /// Sorted by `s`, ties within `1e-9` by `theta_i`; `id` is the row index.
    pub orbits: Vec<ClosedOrbit>,
    pub candidates: usize,
    pub rejected: Vec<Rejection>,
    /// Maslov counts with a zero of `m12` on a step boundary.
    pub flagged_maslov: usize,
}

impl Census {
    pub fn primitive_count(&self) -> usize {
        self.orbits.iter().filter(|o| o.repetition == 1).count()
    }

    pub fn total(&self) -> usize {
        self.orbits.len()
    }
}

#[derive(Debug, Clone, Copy)]
struct PassSample {
    s: f64,
    miss: f64,
    radius: f64,
}

fn close_passes(theta: f64, e: ScaledEnergy, s_limit: f64, opts: &SearchOptions) -> Result<Vec<PassSample>> {
    let st = launch_from_nucleus(theta, e)?;
    let ev = EventSpec {
        max_pass_radius: opts.pass_radius,
        ..Default::default()
    };
    let rec = integrate(&st, e, s_limit, &ev, &opts.integrate)?;
    Ok(rec
        .passes
        .iter()
        .map(|p| PassSample {
            s: p.state.s,
            miss: p.state.miss(),
            radius: p.state.radius(),
        })
        .collect())
}

/// Matches passes of two neighbouring seeds by mutual nearest action.
fn match_passes(a: &[PassSample], b: &[PassSample], window: f64) -> Vec<(usize, usize)> {
    let nearest = |x: f64, list: &[PassSample]| -> Option<usize> {
        let k = list.partition_point(|p| p.s < x);
        let mut best: Option<usize> = None;
        for j in [k.wrapping_sub(1), k] {
            if j < list.len() && best.is_none_or(|bj| (list[j].s - x).abs() < (list[bj].s - x).abs()) {
                best = Some(j);
            }
        }
        best.filter(|&j| (list[j].s - x).abs() <= window)
    };
    let mut out = Vec::new();
    for (i, pa) in a.iter().enumerate() {
        if let Some(j) = nearest(pa.s, b) {
            if nearest(b[j].s, a) == Some(i) {
                out.push((i, j));
            }
        }
    }
    out
}

/// Sign changes between two scanned seeds.
fn brackets(
    (ta, a): (f64, &[PassSample]),
    (tb, b): (f64, &[PassSample]),
    s_max: f64,
    window: f64,
) -> Vec<Candidate> {
    match_passes(a, b, window)
        .into_iter()
        .map(|(ia, ib)| (a[ia], b[ib]))
        .filter(|(pa, pb)| pa.miss.signum() != pb.miss.signum() || pa.miss == 0.0 || pb.miss == 0.0)
        .map(|(pa, pb)| Candidate {
            lo: ta,
            hi: tb,
            miss_lo: pa.miss,
            miss_hi: pb.miss,
            s_guess: 0.5 * (pa.s + pb.s),
        })
        .filter(|c| c.s_guess <= s_max + 0.5 * window)
        .collect()
}

/// A close pass on one side without a partner on the other, which happens
/// when the pass folds away between the seeds.
fn has_orphan(a: &[PassSample], b: &[PassSample], s_max: f64, opts: &SearchOptions) -> bool {
    let m = match_passes(a, b, opts.match_window);
    let orphan = |list: &[PassSample], matched: &mut dyn Iterator<Item = usize>| {
        let mut used = vec![false; list.len()];
        matched.for_each(|i| used[i] = true);
        list.iter()
            .zip(used)
            .any(|(p, u)| !u && p.radius < opts.orphan_radius && p.s <= s_max)
    };
    orphan(a, &mut m.iter().map(|x| x.0)) || orphan(b, &mut m.iter().map(|x| x.1))
}

#[allow(clippy::too_many_arguments)]
fn scan_interval(
    ta: f64,
    a: &[PassSample],
    tb: f64,
    b: &[PassSample],
    depth: usize,
    e: ScaledEnergy,
    s_max: f64,
    opts: &SearchOptions,
) -> Result<Vec<Candidate>> {
    if depth < opts.max_subdivision && has_orphan(a, b, s_max, opts) {
        let tm = 0.5 * (ta + tb);
        let m = close_passes(tm, e, s_max + opts.match_window, opts)?;
        let mut out = scan_interval(ta, a, tm, &m, depth + 1, e, s_max, opts)?;
        out.extend(scan_interval(tm, &m, tb, b, depth + 1, e, s_max, opts)?);
        return Ok(out);
    }
    Ok(brackets((ta, a), (tb, b), s_max, opts.match_window))
}

/// Scans `n_seeds` launch angles and returns brackets where the miss
/// function of a matched pass changes sign. Seed intervals with unmatched
/// close passes are bisected up to `max_subdivision` times.
pub fn scan_launch_angles(e: ScaledEnergy, s_max: f64, opts: &SearchOptions) -> Result<Vec<Candidate>> {
    opts.validate()?;
    let s_limit = s_max + opts.match_window;
    let seeds: Vec<f64> = (0..opts.n_seeds).map(|j| opts.seed(j)).collect();
    let scans = opts.exec.map(&seeds, |&th| close_passes(th, e, s_limit, opts));
    let scans: Vec<Vec<PassSample>> = scans.into_iter().collect::<Result<_>>()?;
    let per = opts.exec.map_range(opts.n_seeds - 1, |j| {
        scan_interval(seeds[j], &scans[j], seeds[j + 1], &scans[j + 1], 0, e, s_max, opts)
    });
    let mut out = Vec::new();
    for c in per {
        out.extend(c?);
    }
    Ok(out)
}

/// Pass closest in action to `s_target`, and its position in `passes`.
fn pass_near(passes: &[Pass], s_target: f64, window: f64) -> Option<usize> {
    passes
        .iter()
        .enumerate()
        .filter(|(_, p)| (p.state.s - s_target).abs() <= window)
        .min_by(|a, b| {
            (a.1.state.s - s_target)
                .abs()
                .total_cmp(&(b.1.state.s - s_target).abs())
        })
        .map(|(k, _)| k)
}

fn miss_at(theta: f64, e: ScaledEnergy, s_target: f64, opts: &SearchOptions) -> Result<Option<(f64, f64)>> {
    let st = launch_from_nucleus(theta, e)?;
    let ev = EventSpec {
        max_pass_radius: opts.pass_radius,
        ..Default::default()
    };
    let rec = integrate(&st, e, s_target + opts.match_window, &ev, &opts.integrate)?;
    Ok(pass_near(&rec.passes, s_target, opts.match_window).map(|k| {
        let p = rec.passes[k].state;
        (p.miss(), p.s)
    }))
}

/// Maslov index of the closed orbit ending at `pass`, and whether any `m12`
/// zero sat on a step boundary.
///
/// Counts the zeros of `m12`, the sign changes of `mu` and of `nu` away from
/// the nucleus, and two for every arrival at the nucleus up to and including
/// this one. With [`MaslovRule::FocalZeros`] only the `m12` zeros count.
pub fn maslov_index(rec: &TrajectoryRecord, pass: &Pass, rule: MaslovRule) -> (u32, bool) {
    let zeros = pass.m12_zeros as u32;
    let count = match rule {
        MaslovRule::FocalZeros => zeros,
        MaslovRule::Regularized => {
            let arrivals = rec
                .passes
                .iter()
                .filter(|p| p.index < pass.index && p.state.radius() < NUCLEUS_RADIUS)
                .count()
                + 1;
            zeros + pass.axis_crossings as u32 + 2 * arrivals as u32
        }
    };
    (count, rec.flagged_zeros > 0)
}

/// Closed orbit launched at exactly `theta`, returning near action
/// `s_target`. Also returns whether the Maslov count was flagged.
fn orbit_at(theta: f64, e: ScaledEnergy, s_target: f64, opts: &SearchOptions) -> Result<(ClosedOrbit, bool)> {
    let st = launch_from_nucleus(theta, e)?;
    let ev = EventSpec {
        max_pass_radius: opts.pass_radius,
        ..Default::default()
    };
    let iopts = opts.integrate.with_monodromy();
    let rec = integrate(&st, e, s_target + opts.match_window, &ev, &iopts)?;
    let k = pass_near(&rec.passes, s_target, opts.match_window)
        .ok_or_else(|| Error::NoConvergence(format!("no return pass near s = {s_target} at theta = {theta}")))?;
    let pass = &rec.passes[k];
    let closure = pass.state.radius();
    if closure > CLOSURE_TOL {
        return Err(Error::NoConvergence(format!(
            "return distance {closure:e} at theta = {theta}"
        )));
    }
    let earlier = rec.passes[..k]
        .iter()
        .filter(|p| p.state.radius() < REPEAT_RADIUS)
        .count();
    let (maslov, flagged) = maslov_index(&rec, pass, opts.maslov);
    let m = pass.monodromy.expect("monodromy was requested");
    Ok((
        ClosedOrbit {
            id: 0,
            primitive_id: 0,
            repetition: 1 + earlier as u32,
            theta_i: theta,
            theta_f: pass.state.momentum_angle(),
            s: pass.state.s,
            m12: m.m12(),
            maslov,
            closure_residual: closure,
        },
        flagged,
    ))
}

/// Bracketed Illinois iteration on the launch angle, falling back to
/// bisection when the secant step stalls.
fn polish(c: &Candidate, e: ScaledEnergy, opts: &SearchOptions) -> Result<(f64, f64)> {
    let (mut a, mut fa, mut b, mut fb) = (c.lo, c.miss_lo, c.hi, c.miss_hi);
    let mut s_target = c.s_guess;
    if fa == 0.0 {
        return Ok((a, s_target));
    }
    if fb == 0.0 {
        return Ok((b, s_target));
    }
    let mut side = 0i8;
    let mut width = b - a;
    for it in 0..opts.max_iter {
        let mut x = (a * fb - b * fa) / (fb - fa);
        if it % 4 == 3 && (b - a) > 0.5 * width || !(x > a && x < b) {
            x = 0.5 * (a + b);
        }
        if it % 4 == 3 {
            width = b - a;
        }
        if !(x > a && x < b) {
            // Adjacent floats; nothing left to split.
            return Ok((if fa.abs() < fb.abs() { a } else { b }, s_target));
        }
        let (fx, sx) = miss_at(x, e, s_target, opts)?
            .ok_or_else(|| Error::NoConvergence(format!("return pass lost at theta = {x}")))?;
        s_target = sx;
        if fx.abs() <= MISS_TOL {
            return Ok((x, s_target));
        }
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = x;
            fb = fx;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    Err(Error::NoConvergence(format!(
        "no convergence in {} iterations on [{a}, {b}]",
        opts.max_iter
    )))
}

/// Refines a bracket into a closed orbit.
pub fn refine_closed_orbit(c: &Candidate, e: ScaledEnergy, opts: &SearchOptions) -> Result<ClosedOrbit> {
    refine_flagged(c, e, opts).map(|(o, _)| o)
}

fn refine_flagged(c: &Candidate, e: ScaledEnergy, opts: &SearchOptions) -> Result<(ClosedOrbit, bool)> {
    if c.miss_lo.signum() == c.miss_hi.signum() && c.miss_lo != 0.0 && c.miss_hi != 0.0 {
        return Err(Error::InvalidInput("bracket has no sign change".into()));
    }
    let (theta, s_target) = polish(c, e, opts)?;
    orbit_at(theta, e, s_target, opts)
}

/// Orbits lying on the symmetry lines, which never show up as sign changes.
fn symmetry_orbits(e: ScaledEnergy, s_max: f64, opts: &SearchOptions) -> Vec<(ClosedOrbit, bool)> {
    let (lo, hi) = opts.theta_range;
    [0.0, FRAC_PI_2, PI]
        .into_iter()
        .filter(|&th| lo <= th && th <= hi)
        .filter_map(|th| {
            let st = launch_from_nucleus(th, e).ok()?;
            let ev = EventSpec {
                max_pass_radius: CLOSURE_TOL,
                stop_after: Some(1),
                ..Default::default()
            };
            let rec = integrate(&st, e, s_max, &ev, &opts.integrate).ok()?;
            let s = rec.passes.first()?.state.s;
            orbit_at(th, e, s, opts).ok()
        })
        .collect()
}

fn on_symmetry_line(theta: f64) -> bool {
    [0.0, FRAC_PI_2, PI].contains(&theta)
}

fn same_orbit(a: &ClosedOrbit, b: &ClosedOrbit) -> bool {
    (a.theta_i - b.theta_i).abs() < 1e-8 && (a.s - b.s).abs() < 1e-6
}

/// Sorts by action and drops duplicates.
fn dedupe(mut orbits: Vec<ClosedOrbit>) -> Vec<ClosedOrbit> {
    orbits.sort_by(|a, b| a.s.total_cmp(&b.s));
    let mut out: Vec<ClosedOrbit> = Vec::with_capacity(orbits.len());
    for o in orbits {
        let n = out.len();
        let dup = out
            .iter()
            .rev()
            .take_while(|p| o.s - p.s < 1e-6)
            .position(|p| same_orbit(p, &o));
        match dup {
            // Exact symmetry-line orbits win over their bisected copies.
            Some(back) if on_symmetry_line(o.theta_i) => out[n - 1 - back] = o,
            Some(_) => {}
            None => out.push(o),
        }
    }
    out
}

fn order(orbits: &mut [ClosedOrbit]) {
    order_by(orbits, |o| o);
}

/// Sorts by action, with runs of actions equal to `1e-9` relative (mirror
/// images, time-reversed partners) ordered by launch angle so the table does
/// not depend on rounding in the last digits of `s`.
fn order_by<T>(items: &mut [T], orbit: impl Fn(&T) -> &ClosedOrbit) {
    items.sort_by(|a, b| orbit(a).s.total_cmp(&orbit(b).s));
    let mut start = 0;
    for i in 1..=items.len() {
        let split = i == items.len() || {
            let (p, q) = (orbit(&items[i - 1]).s, orbit(&items[i]).s);
            q - p > 1e-9 * q.abs()
        };
        if split {
            items[start..i].sort_by(|a, b| {
                let (a, b) = (orbit(a), orbit(b));
                a.theta_i.total_cmp(&b.theta_i).then(a.s.total_cmp(&b.s))
            });
            start = i;
        }
    }
}

/// Launch angle near `th0` whose return near `s_target` closes. Tries
/// `th0` itself, then brackets grown from +-1e-13 up to +-1e-6.
fn polish_near(th0: f64, s_target: f64, e: ScaledEnergy, opts: &SearchOptions) -> Result<f64> {
    let miss = |th: f64| -> Result<(f64, f64)> {
        miss_at(th, e, s_target, opts)?
            .ok_or_else(|| Error::NoConvergence(format!("no pass near s = {s_target} at theta = {th}")))
    };
    let (f0, _) = miss(th0)?;
    if f0.abs() <= MISS_TOL {
        return Ok(th0);
    }
    let mut d = 1e-13;
    while d <= 1e-6 {
        let (lo, hi) = ((th0 - d).max(0.0), (th0 + d).min(PI));
        let (flo, slo) = miss(lo)?;
        let (fhi, _) = miss(hi)?;
        if flo.signum() != fhi.signum() {
            let c = Candidate {
                lo,
                hi,
                miss_lo: flo,
                miss_hi: fhi,
                s_guess: slo,
            };
            return Ok(polish(&c, e, opts)?.0);
        }
        d *= 10.0;
    }
    Err(Error::NoConvergence(format!("no bracket near theta = {th0}")))
}

/// Finds the `k`-th repetition of `prim` by direct integration over `k`
/// periods, re-polishing the launch angle so the `k`-th return closes.
pub fn repetition(prim: &ClosedOrbit, k: u32, e: ScaledEnergy, opts: &SearchOptions) -> Result<ClosedOrbit> {
    let s_target = k as f64 * prim.s;
    let theta = if on_symmetry_line(prim.theta_i) {
        prim.theta_i
    } else {
        polish_near(prim.theta_i, s_target, e, opts)?
    };
    let (mut o, _) = orbit_at(theta, e, s_target, opts)?;
    if o.repetition != k {
        return Err(Error::NoConvergence(format!(
            "repetition {k} of orbit at theta = {} closed {} times",
            prim.theta_i, o.repetition
        )));
    }
    o.primitive_id = prim.id;
    Ok(o)
}

fn has_orbit(orbits: &[ClosedOrbit], theta_i: f64, s: f64) -> bool {
    orbits
        .iter()
        .any(|p| (p.theta_i - theta_i).abs() < 1e-7 && (p.s - s).abs() <= 1e-8 * s)
}

/// Adds z-reflected and time-reversed partners the scan missed, searching
/// at the launch angle symmetry predicts. Returns the number added.
fn complete_partners(
    prims: &mut Vec<ClosedOrbit>,
    flags: &mut usize,
    e: ScaledEnergy,
    opts: &SearchOptions,
) -> usize {
    let mut added = 0;
    let mut tried: Vec<(f64, f64)> = Vec::new();
    let listed = |v: &[(f64, f64)], th: f64, s: f64| v.iter().any(|w| (w.0 - th).abs() < 1e-7 && (w.1 - s).abs() <= 1e-8 * s);
    for _ in 0..2 {
        let mut wanted: Vec<(f64, f64)> = Vec::new();
        for o in prims.iter() {
            for th in [PI - o.theta_i, o.theta_f, PI - o.theta_f] {
                let th = th.clamp(0.0, PI);
                if !has_orbit(prims, th, o.s) && !listed(&wanted, th, o.s) && !listed(&tried, th, o.s) {
                    wanted.push((th, o.s));
                }
            }
        }
        if wanted.is_empty() {
            break;
        }
        tried.extend_from_slice(&wanted);
        let found = opts.exec.map(&wanted, |&(th, s)| {
            let theta = polish_near(th, s, e, opts)?;
            orbit_at(theta, e, s, opts)
        });
        for ((th, s), r) in wanted.iter().zip(found) {
            match r {
                Ok((o, f)) if o.repetition == 1 && (o.s - s).abs() <= 1e-8 * s && !has_orbit(prims, o.theta_i, o.s) => {
                    prims.push(o);
                    *flags += f as usize;
                    added += 1;
                }
                Ok(_) => log::warn!("partner at theta = {th}, s = {s} did not match"),
                Err(err) => log::warn!("partner at theta = {th}, s = {s} not found: {err}"),
            }
        }
    }
    added
}

/// Adds every repetition `k >= 2` with `k s <= s_max` to the primitive list.
/// Failed repetitions are logged and left out.
pub fn extend_repetitions(
    primitives: &[ClosedOrbit],
    e: ScaledEnergy,
    s_max: f64,
    opts: &SearchOptions,
) -> Vec<ClosedOrbit> {
    let mut prims: Vec<ClosedOrbit> = primitives.to_vec();
    order(&mut prims);
    for (i, p) in prims.iter_mut().enumerate() {
        p.id = i;
        p.primitive_id = i;
    }
    let jobs: Vec<(usize, u32)> = prims
        .iter()
        .enumerate()
        .flat_map(|(i, p)| (2..).take_while(move |&k| k as f64 * p.s <= s_max).map(move |k| (i, k)))
        .collect();
    let reps = opts.exec.map(&jobs, |&(i, k)| repetition(&prims[i], k, e, opts));
    let mut all = prims.clone();
    for ((i, k), r) in jobs.iter().zip(reps) {
        match r {
            Ok(o) => all.push(o),
            Err(err) => log::warn!("repetition {k} of primitive {i} dropped: {err}"),
        }
    }
    // Primitive ids refer to the primitive-only ordering; remap to rows.
    order(&mut all);
    let mut row_of = vec![0; prims.len()];
    for (row, o) in all.iter().enumerate() {
        if o.repetition == 1 {
            row_of[o.primitive_id] = row;
        }
    }
    for (row, o) in all.iter_mut().enumerate() {
        o.id = row;
        o.primitive_id = row_of[o.primitive_id];
    }
    all
}

/// The z-reflected, time-reversed and doubly mapped copies of `o`. All three
/// share its action, `m12` and Maslov index.
fn symmetry_images(o: &ClosedOrbit) -> [ClosedOrbit; 3] {
    let image = |theta_i: f64, theta_f: f64| ClosedOrbit {
        theta_i: theta_i.clamp(0.0, PI),
        theta_f: theta_f.clamp(0.0, PI),
        ..*o
    };
    [
        image(PI - o.theta_i, PI - o.theta_f),
        image(o.theta_f, o.theta_i),
        image(PI - o.theta_f, PI - o.theta_i),
    ]
}

fn has_image(orbits: &[ClosedOrbit], o: &ClosedOrbit) -> bool {
    orbits.iter().any(|p| {
        (p.theta_i - o.theta_i).abs() < 1e-7 && (p.theta_f - o.theta_f).abs() < 1e-7 && (p.s - o.s).abs() <= 1e-8 * o.s
    })
}

/// Adds the symmetry images of orbits whose partners could not be converged
/// numerically (return distances at the rounding floor for `|m12| >~ 1e5`),
/// then restores the row order and primitive links. Returns the number added.
fn close_under_symmetry(orbits: &mut Vec<ClosedOrbit>) -> usize {
    let mut added: Vec<ClosedOrbit> = Vec::new();
    for o in orbits.iter() {
        for img in symmetry_images(o) {
            if !has_image(orbits, &img) && !has_image(&added, &img) {
                added.push(img);
            }
        }
    }
    if added.is_empty() {
        return 0;
    }
    // Links as (primitive theta_i, primitive s) keys, stable under sorting.
    let key = |o: &ClosedOrbit, all: &[ClosedOrbit]| (all[o.primitive_id].theta_i, all[o.primitive_id].s);
    let mut keyed: Vec<(ClosedOrbit, Option<(f64, f64)>)> =
        orbits.iter().map(|o| (*o, Some(key(o, orbits)))).collect();
    keyed.extend(added.iter().map(|o| (*o, None)));
    let firsts: Vec<(f64, f64)> = keyed
        .iter()
        .filter(|(o, _)| o.repetition == 1)
        .map(|(o, _)| (o.theta_i, o.s))
        .collect();
    let mut dropped = 0;
    keyed.retain_mut(|(o, k)| {
        if k.is_none() {
            let s1 = o.s / o.repetition as f64;
            *k = firsts
                .iter()
                .find(|(th, s)| (th - o.theta_i).abs() < 1e-6 && (s - s1).abs() <= 1e-8 * s1)
                .copied();
            if k.is_none() {
                dropped += 1;
                log::warn!("image repetition {} at theta = {} has no primitive; dropped", o.repetition, o.theta_i);
            }
        }
        k.is_some()
    });
    order_by(&mut keyed, |(o, _)| o);
    let rows: Vec<(f64, f64, usize)> = keyed
        .iter()
        .enumerate()
        .filter(|(_, (o, _))| o.repetition == 1)
        .map(|(row, (o, _))| (o.theta_i, o.s, row))
        .collect();
    *orbits = keyed
        .iter()
        .enumerate()
        .map(|(row, (o, k))| {
            let (th, s) = k.expect("retained rows are linked");
            let prim = rows
                .iter()
                .find(|r| r.0 == th && r.1 == s)
                .map_or(row, |r| r.2);
            ClosedOrbit {
                id: row,
                primitive_id: prim,
                ..*o
            }
        })
        .collect();
    added.len() - dropped
}

/// Full search: scan, refine, deduplicate, add repetitions.
pub fn census(e: ScaledEnergy, s_max: f64, opts: &SearchOptions) -> Result<Census> {
    let cands = scan_launch_angles(e, s_max, opts)?;
    log::info!("{} candidate brackets from {} seeds", cands.len(), opts.n_seeds);
    let refined = opts.exec.map(&cands, |c| refine_flagged(c, e, opts));

    let mut found = symmetry_orbits(e, s_max, opts);
    let mut rejected = Vec::new();
    for (c, r) in cands.iter().zip(refined) {
        match r {
            Ok(o) => found.push(o),
            Err(err) => {
                log::debug!("candidate {c:?} rejected: {err}");
                rejected.push(Rejection {
                    candidate: *c,
                    reason: err.to_string(),
                });
            }
        }
    }
    let mut flagged_maslov = found.iter().filter(|(_, f)| *f).count();
    let prims: Vec<ClosedOrbit> = found
        .into_iter()
        .map(|(o, _)| o)
        .filter(|o| o.repetition == 1 && o.s <= s_max)
        .collect();
    let mut prims = dedupe(prims);
    let added = complete_partners(&mut prims, &mut flagged_maslov, e, opts);
    if added > 0 {
        log::info!("{added} symmetry partners recovered by targeted search");
    }
    let mut orbits = extend_repetitions(&prims, e, s_max, opts);
    let imaged = close_under_symmetry(&mut orbits);
    if imaged > 0 {
        log::info!("{imaged} symmetry images added without a converged search");
    }
    log::info!(
        "{} primitive orbits, {} with repetitions, {} rejected candidates",
        orbits.iter().filter(|o| o.repetition == 1).count(),
        orbits.len(),
        rejected.len()
    );
    Ok(Census {
        orbits,
        candidates: cands.len(),
        rejected,
        flagged_maslov,
    })
}

/// Orbits with `theta_i != theta_f` whose time-reversed partner is missing.
pub fn unpaired(orbits: &[ClosedOrbit]) -> Vec<usize> {
    orbits
        .iter()
        .filter(|o| !o.is_self_retracing())
        .filter(|o| {
            !orbits.iter().any(|p| {
                (p.theta_i - o.theta_f).abs() < 1e-7
                    && (p.theta_f - o.theta_i).abs() < 1e-7
                    && (p.s - o.s).abs() <= 1e-8 * o.s
            })
        })
        .map(|o| o.id)
        .collect()
}

/// Orbits whose z-reflection partner (`theta -> pi - theta`) is missing.
pub fn unreflected(orbits: &[ClosedOrbit]) -> Vec<usize> {
    orbits
        .iter()
        .filter(|o| {
            !orbits.iter().any(|p| {
                (p.theta_i - (PI - o.theta_i)).abs() < 1e-7
                    && (p.theta_f - (PI - o.theta_f)).abs() < 1e-7
                    && (p.s - o.s).abs() <= 1e-8 * o.s
            })
        })
        .map(|o| o.id)
        .collect()
}
