//! Acceptance criteria 1 to 7, one PASS/FAIL line each.
//!
//! Criterion 4's orbit count is a documented known failure: it is printed as
//! FAIL with the measured counts, and only an unexpected failure makes the
//! run exit nonzero.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::path::Path;
use std::time::{Duration, Instant};

use cohi::dynamics::{hamiltonian, integrate, launch_from_nucleus, EventSpec, IntegrateOptions, PhaseState, ScaledEnergy};
use cohi::inversion::{invert, invert_validated, random_lines, read_lines, InversionConfig, SpectralLine};
use cohi::orbits::{self, read_table, unpaired, unreflected, ClosedOrbit, SearchOptions};
use cohi::par::Execution;
use cohi::pipeline::{self, PipelineConfig};
use cohi::selftest::{pair_lines, pair_resolved, recovery_errors};
use cohi::signal::{read_signal, synth_quantum_signal};
use cohi::spectrum::{assemble_stick_spectrum, field_of_w, read_sticks};
use rand::{Rng, SeedableRng};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

struct Report {
    unexpected: usize,
}

impl Report {
    fn record(&mut self, id: u32, name: &str, known_failure: bool, limit: Option<Duration>, f: impl FnOnce() -> Outcome) {
        let t0 = Instant::now();
        let mut o = f();
        let dt = t0.elapsed();
        if let Some(l) = limit {
            if dt > l {
                o.passed = false;
                o.detail.push_str(&format!("; over the {}s budget", l.as_secs()));
            }
        }
        let tag = if o.passed { "PASS" } else { "FAIL" };
        let note = if !o.passed && known_failure { " [known failure]" } else { "" };
        println!("criterion {id} {tag}{note}: {name}: {} ({:.1}s)", o.detail, dt.as_secs_f64());
        if !o.passed && !known_failure {
            self.unexpected += 1;
        }
    }
}

fn e07() -> ScaledEnergy {
    ScaledEnergy::new(-0.7).unwrap()
}

fn criterion_1() -> Outcome {
    let mut worst = (0.0f64, 0.0f64);
    for seed in [20240611, 1, 2, 3, 4, 5, 6, 7] {
        let truth = random_lines(seed, 50, (16.0, 21.0), (0.1, 2.0), 2, 0.03);
        let sig = synth_quantum_signal(&truth, 0.05, (TAU * 30.0 / 0.05) as usize + 1).unwrap();
        let found = invert(&sig, &InversionConfig::for_signal(&sig, (15.7, 21.3)), Execution::default()).unwrap();
        let (dw, dp) = recovery_errors(&truth, &found);
        worst = (worst.0.max(dw), worst.1.max(dp));
    }
    outcome(
        worst.0 <= 1e-8 && worst.1 <= 1e-6,
        format!("8 seeds x 50 lines, max |dw| {:.1e}, max product error {:.1e}", worst.0, worst.1),
    )
}

fn criterion_2() -> Outcome {
    let sig = synth_quantum_signal(&pair_lines(1), 0.05, (TAU * 100.0 / 0.05) as usize + 1).unwrap();
    let run = |s: &cohi::signal::SampledSignal| {
        let cfg = InversionConfig {
            accept_err: 1e-6,
            ..InversionConfig::for_signal(s, (36.7, 37.25))
        };
        invert_validated(s, &cfg, Execution::default()).unwrap()
    };
    let two = run(&sig);
    let one = run(&sig.diagonal(0));
    let strengths: Vec<String> = [36.969, 36.982]
        .iter()
        .filter_map(|w| two.lines.iter().find(|x| (x.w.re - w).abs() < 1e-4))
        .map(|x| format!("{:.6}:{:.6}", x.w.re, x.product(0, 0).re))
        .collect();
    let (r2, r1) = (pair_resolved(&two), pair_resolved(&one));
    outcome(
        r2 && !r1,
        format!(
            "2x2 resolves the pair: {r2} [{}]; 1x1 of C11 resolves it: {r1} ({} confirmed lines)",
            strengths.join(" "),
            one.len()
        ),
    )
}

/// `4 int_0^u_max sqrt(2 - 1.4 u^2 - u^6 / 4) du` with `u = u_max (1 - t^2)`
/// and composite Simpson in `t`.
fn perpendicular_action_quadrature() -> f64 {
    let f = |u: f64| 2.0 - 1.4 * u * u - u.powi(6) / 4.0;
    let (mut lo, mut hi) = (0.0f64, 2.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let umax = lo;
    let g = |t: f64| {
        let u = umax * (1.0 - t * t);
        f(u).max(0.0).sqrt() * 2.0 * umax * t
    };
    let n = 20_000;
    let h = 1.0 / n as f64;
    let mut acc = g(0.0) + g(1.0);
    for k in 1..n {
        acc += g(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    4.0 * acc * h / 3.0
}

fn criterion_3() -> Outcome {
    let opts = SearchOptions {
        n_seeds: 64,
        ..Default::default()
    };
    let c = orbits::census(e07(), TAU * 1.2, &opts).unwrap();
    let axial = c.orbits.iter().find(|o| o.theta_i == 0.0 && o.repetition == 1);
    let perp = c.orbits.iter().find(|o| o.theta_i == FRAC_PI_2 && o.repetition == 1);
    let (Some(a), Some(p)) = (axial, perp) else {
        return outcome(false, "axial or perpendicular orbit missing");
    };
    let want_axial = (2.0f64 * 0.7).sqrt().recip();
    let want_perp = perpendicular_action_quadrature();
    let (da, dp) = ((a.s / TAU - want_axial).abs(), (p.s - want_perp).abs());
    outcome(
        da <= 1e-9 && dp <= 1e-8,
        format!(
            "axial s/2pi {:.12} (|d| {da:.1e}), perpendicular s {:.12} vs quadrature {want_perp:.12} (|d| {dp:.1e})",
            a.s / TAU,
            p.s
        ),
    )
}

/// One representative per pair of z-reflected orbits.
fn reflection_reduced(orbits: &[ClosedOrbit]) -> (usize, usize) {
    let keep: Vec<&ClosedOrbit> = orbits
        .iter()
        .filter(|o| {
            let ti = PI - o.theta_i;
            o.theta_i < ti - 1e-9 || ((o.theta_i - ti).abs() <= 1e-9 && o.theta_f <= PI - o.theta_f + 1e-9)
        })
        .collect();
    (keep.iter().filter(|o| o.repetition == 1).count(), keep.len())
}

fn criterion_4_count(dir: &Path) -> Outcome {
    let t = read_table(&dir.join(pipeline::ORBITS_FILE)).unwrap();
    let prim = t.orbits.iter().filter(|o| o.repetition == 1).count();
    let total = t.orbits.len();
    let within = |x: usize, want: f64| (x as f64 - want).abs() <= 0.02 * want;
    let (rp, rt) = reflection_reduced(&t.orbits);
    outcome(
        within(prim, 1395.0) && within(total, 2397.0),
        format!("{prim} primitive, {total} total (target 1395 / 2397 +-2%); modulo z-reflection {rp} / {rt}"),
    )
}

fn same_orbits(a: &[ClosedOrbit], b: &[ClosedOrbit]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.repetition == y.repetition
                && x.maslov == y.maslov
                && (x.s - y.s).abs() <= 1e-8 * x.s
                && (x.theta_i - y.theta_i).abs() <= 1e-7
                && (x.theta_f - y.theta_f).abs() <= 1e-7
        })
}

fn criterion_4_doubling() -> Outcome {
    let run = |n| {
        let opts = SearchOptions {
            n_seeds: n,
            ..Default::default()
        };
        orbits::census(e07(), TAU * 20.0, &opts).unwrap().orbits
    };
    let (a, b) = (run(20_000), run(40_000));
    outcome(
        same_orbits(&a, &b),
        format!("{} orbits at 20000 seeds, {} at 40000", a.len(), b.len()),
    )
}

fn criterion_5(dir: &Path) -> Outcome {
    let mut lines = Vec::new();
    for w in ["16-21", "34-40"] {
        let (s, _) = read_sticks(&dir.join(format!("sticks_{w}_c0.txt"))).unwrap();
        lines.push(s);
    }
    let hi = &lines[1];
    let near = |w: f64| {
        hi.sticks
            .iter()
            .filter(|s| (s.w - w).abs() <= 3e-3)
            .min_by(|a, b| (a.w - w).abs().total_cmp(&(b.w - w).abs()))
    };
    let pair = (near(36.969), near(36.982));
    let pair_ok = matches!(pair, (Some(a), Some(b)) if a.w != b.w);
    let weak = near(38.894);
    let weak_ok = weak.is_some_and(|s| (s.strength - 0.028).abs() <= 0.5 * 0.028);
    let fmt = |s: Option<&cohi::spectrum::Stick>| s.map_or("none".into(), |s| format!("{:.5} ({:.4})", s.w, s.strength));
    outcome(
        pair_ok && weak_ok,
        format!(
            "{} + {} sticks; pair {} / {}; weak line {} (target 0.028 +-50%)",
            lines[0].sticks.len(),
            hi.sticks.len(),
            fmt(pair.0),
            fmt(pair.1),
            fmt(weak)
        ),
    )
}

fn criterion_6(dir: &Path) -> Outcome {
    let (sig, _) = read_signal(&dir.join(pipeline::SIGNAL_FILE)).unwrap();
    let symmetric = (0..sig.len()).all(|n| sig.get(n, 0, 1) == sig.get(n, 1, 0));
    let (b34, b40) = (field_of_w(34.0), field_of_w(40.0));
    let ok = symmetric && (5.9..=6.1).contains(&b34) && (3.6..=3.75).contains(&b40);
    outcome(
        ok,
        format!("C12 == C21 bit for bit over {} samples: {symmetric}; B(34) = {b34:.4} T, B(40) = {b40:.4} T", sig.len()),
    )
}

fn criterion_7(dir: &Path) -> Outcome {
    let e = e07();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let mut failures = Vec::new();

    let loose = IntegrateOptions {
        max_energy_drift: f64::INFINITY,
        ..Default::default()
    };
    let mut drift = 0.0f64;
    for _ in 0..1000 {
        let s0 = launch_from_nucleus(rng.gen_range(0.0..PI), e).unwrap();
        let rec = integrate(&s0, e, 100.0, &EventSpec::none(), &loose).unwrap();
        drift = drift.max(rec.max_energy_drift).max((hamiltonian(&rec.final_state, e) - 2.0).abs());
    }
    if drift > 1e-9 {
        failures.push(format!("energy drift {drift:.1e}"));
    }

    let mut det = 0.0f64;
    let mut retrace = 0.0f64;
    for _ in 0..40 {
        let s0 = launch_from_nucleus(rng.gen_range(0.0..PI), e).unwrap();
        let rec = integrate(&s0, e, 100.0, &EventSpec::default(), &IntegrateOptions::default().with_monodromy()).unwrap();
        for p in &rec.passes {
            det = det.max((p.monodromy.unwrap().det() - 1.0).abs());
        }
        let out = integrate(&s0, e, 30.0, &EventSpec::none(), &IntegrateOptions::default()).unwrap().final_state;
        let start = PhaseState { s: 0.0, t: 0.0, ..out.reversed() };
        let back = integrate(&start, e, 30.0, &EventSpec::none(), &IntegrateOptions::default())
            .unwrap()
            .final_state
            .reversed();
        retrace = retrace
            .max((back.mu - s0.mu).abs())
            .max((back.nu - s0.nu).abs())
            .max((back.p_mu - s0.p_mu).abs())
            .max((back.p_nu - s0.p_nu).abs());
    }
    if det > 1e-8 {
        failures.push(format!("|det m - 1| {det:.1e}"));
    }
    if retrace > 1e-8 {
        failures.push(format!("time reversal error {retrace:.1e}"));
    }

    let table = read_table(&dir.join(pipeline::ORBITS_FILE)).unwrap();
    let (unp, unr) = (unpaired(&table.orbits).len(), unreflected(&table.orbits).len());
    if unp + unr > 0 {
        failures.push(format!("{unp} orbits without time-reversed partner, {unr} without mirror image"));
    }

    let (set, _) = read_lines(&dir.join("lines_34-40.txt")).unwrap();
    let flipped: Vec<SpectralLine> = set
        .lines
        .iter()
        .map(|x| {
            let sign = if rng.gen_bool(0.5) { -1.0 } else { 1.0 };
            SpectralLine {
                b: x.b.iter().map(|b| b * sign).collect(),
                ..x.clone()
            }
        })
        .collect();
    let gauge_ok = assemble_stick_spectrum(&set.lines, 0).unwrap() == assemble_stick_spectrum(&flipped, 0).unwrap();
    if !gauge_ok {
        failures.push("stick strengths depend on amplitude signs".into());
    }

    let mut deconv = (0.0f64, 0.0f64);
    for sigma in [0.05, 0.1] {
        let truth = random_lines(5, 12, (10.0, 19.0), (0.1, 2.0), 2, 0.1);
        let smeared: Vec<SpectralLine> = truth
            .iter()
            .map(|t| {
                let f = (-(sigma * t.w.re).powi(2) / 4.0).exp();
                SpectralLine {
                    b: t.b.iter().map(|b| b * f).collect(),
                    ..t.clone()
                }
            })
            .collect();
        let mut sig = synth_quantum_signal(&smeared, 0.05, 3001).unwrap();
        sig.meta.sigma = sigma;
        let found = invert(&sig, &InversionConfig::for_signal(&sig, (9.7, 19.3)), Execution::default()).unwrap();
        let (dw, dp) = recovery_errors(&truth, &found);
        deconv = (deconv.0.max(dw), deconv.1.max(dp));
    }
    if deconv.0 > 1e-8 || deconv.1 > 1e-6 {
        failures.push(format!("deconvolution errors {:.1e} / {:.1e}", deconv.0, deconv.1));
    }

    let summary = format!(
        "drift {drift:.1e}, |det-1| {det:.1e}, retrace {retrace:.1e}, unpaired {unp}, unreflected {unr}, gauge {gauge_ok}, deconvolution {:.1e} / {:.1e}",
        deconv.0, deconv.1
    );
    if failures.is_empty() {
        outcome(true, summary)
    } else {
        outcome(false, format!("{}; {summary}", failures.join(", ")))
    }
}

fn main() {
    // `cargo test` passes harness flags such as `--list`; nothing to list.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig {
        s_max: TAU * 100.0,
        n_seeds: 20_000,
        output_dir: dir.path().to_path_buf(),
        ..PipelineConfig::default()
    };
    let mut r = Report { unexpected: 0 };
    let min = |m: u64| Some(Duration::from_secs(60 * m));

    r.record(1, "synthetic 2x2 inversion", false, min(1), criterion_1);
    r.record(2, "near-degenerate pair", false, min(10), criterion_2);
    r.record(3, "symmetry-line orbit actions", false, min(1), criterion_3);

    let t0 = Instant::now();
    let census = pipeline::run_orbits(&cfg);
    let census_time = t0.elapsed();
    let ok = census.is_ok();
    match census {
        Ok(rep) => println!(
            "full census: {} primitive, {} total, {} rejected candidates ({:.0}s)",
            rep.primitive,
            rep.total,
            rep.rejected,
            census_time.as_secs_f64()
        ),
        Err(e) => println!("full census failed: {e}"),
    }
    if ok {
        r.record(4, "orbit census count, s/2pi < 100", true, None, || criterion_4_count(dir.path()));
    } else {
        r.record(4, "orbit census count, s/2pi < 100", false, None, || outcome(false, "census failed"));
    }
    r.record(4, "census invariant under seed doubling, s/2pi < 20", false, None, criterion_4_doubling);

    let stages = ok
        .then(|| {
            pipeline::run_signal(&cfg, None)?;
            pipeline::run_invert(&cfg, None)?;
            pipeline::run_spectrum(&cfg, &[])
        })
        .map(|r| r.map_err(|e| e.to_string()));
    match stages {
        Some(Ok(_)) => {
            r.record(5, "end-to-end spectrum", false, None, || criterion_5(dir.path()));
            r.record(6, "signal symmetry and field conversion", false, min(1), || criterion_6(dir.path()));
            r.record(7, "invariant suite", false, min(5), || criterion_7(dir.path()));
        }
        other => {
            let why = match other {
                Some(Err(e)) => e,
                _ => "no orbit table".into(),
            };
            for (id, name) in [(5, "end-to-end spectrum"), (6, "signal symmetry"), (7, "invariant suite")] {
                r.record(id, name, false, None, || outcome(false, why.clone()));
            }
        }
    }

    if r.unexpected > 0 {
        println!("{} unexpected failures", r.unexpected);
        std::process::exit(1);
    }
}
