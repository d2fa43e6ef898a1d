use super::*;
use crate::signal::synth_quantum_signal;
use rand::{Rng, SeedableRng};

const TAU_S: f64 = 0.05;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Nearest found line to `w`.
fn nearest(set: &SpectralLineSet, w: f64) -> &SpectralLine {
    set.lines
        .iter()
        .min_by(|a, b| (a.w.re - w).abs().total_cmp(&(b.w.re - w).abs()))
        .expect("nonempty line set")
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm()
}

fn assert_recovers(truth: &[SpectralLine], found: &SpectralLineSet, tol_w: f64, tol_d: f64) {
    let l = truth[0].b.len();
    for t in truth {
        let f = nearest(found, t.w.re);
        assert!((f.w - t.w).norm() <= tol_w, "w {} found {}", t.w, f.w);
        for a in 0..l {
            for b in 0..l {
                let e = rel(f.product(a, b), t.product(a, b));
                assert!(e <= tol_d, "w {} d{a}{b}: rel err {e:e}", t.w.re);
            }
        }
    }
}

#[test]
fn closed_form_matches_direct_sums() {
    let lines = [SpectralLine::real(10.2, &[0.7, -0.3]), SpectralLine::real(11.05, &[0.2, 1.1])];
    let mut sig = synth_quantum_signal(&lines, TAU_S, 90).unwrap();
    // A little asymmetric noise so every matrix entry is exercised.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    for z in &mut sig.data {
        *z += Complex64::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1));
    }
    let cfg = InversionConfig {
        window: (9.0, 12.0),
        j: 5,
        m: 40,
        svd_cutoff: 1e-10,
        accept_im: 1e-3,
        accept_err: 1e-6,
    };
    let (f0, f1) = u_matrix_fast(&sig, &cfg);
    for (p, fast) in [(0, f0), (1, f1)] {
        let direct = u_matrix_direct(&sig, &cfg, p);
        let scale = direct.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max);
        for (r1, r2) in fast.iter().zip(&direct) {
            for (a, b) in r1.iter().zip(r2) {
                assert!((a - b).norm() <= 1e-12 * scale, "p={p}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn single_line_two_channels() {
    let truth = SpectralLine::real(18.3, &[0.7, -0.2]);
    let sig = synth_quantum_signal(std::slice::from_ref(&truth), TAU_S, 4002).unwrap();
    let cfg = InversionConfig {
        j: 20,
        ..InversionConfig::for_signal(&sig, (17.5, 19.0))
    };
    assert_eq!(cfg.m, 2000);
    let found = invert(&sig, &cfg, Execution::default()).unwrap();
    assert_eq!(found.len(), 1, "{:?}", found.lines);
    let f = &found.lines[0];
    assert!((f.w - truth.w).norm() <= 1e-10, "{}", f.w);
    for (x, y) in f.b.iter().zip(&truth.b) {
        assert!((x - y).norm() <= 1e-8, "{x} vs {y}");
    }
}

#[test]
fn many_lines_recovered() {
    let truth = random_lines(20240611, 50, (16.0, 21.0), (0.1, 2.0), 2, 0.03);
    let sig = synth_quantum_signal(&truth, TAU_S, (TAU * 30.0 / TAU_S) as usize + 1).unwrap();
    let cfg = InversionConfig::for_signal(&sig, (15.7, 21.3));
    let found = invert(&sig, &cfg, Execution::default()).unwrap();
    assert_recovers(&truth, &found, 1e-8, 1e-6);
    assert_eq!(found.len(), truth.len());
}

#[test]
fn nyquist_violation_rejected() {
    let sig = synth_quantum_signal(&[SpectralLine::real(55.0, &[1.0])], TAU_S, 200).unwrap();
    let cfg = InversionConfig::for_signal(&sig, (50.0, 80.0));
    assert!(matches!(invert(&sig, &cfg, Execution::Sequential), Err(Error::Nyquist { .. })));
}

#[test]
fn too_short_signal_rejected() {
    let sig = synth_quantum_signal(&[SpectralLine::real(5.0, &[1.0])], TAU_S, 100).unwrap();
    let cfg = InversionConfig { m: 60, ..InversionConfig::for_signal(&sig, (4.0, 6.0)) };
    assert!(matches!(invert(&sig, &cfg, Execution::Sequential), Err(Error::InvalidInput(_))));
}

#[test]
fn dead_signal_gives_no_lines() {
    let mut sig = synth_quantum_signal(&[SpectralLine::real(5.0, &[1.0])], TAU_S, 400).unwrap();
    sig.data.iter_mut().for_each(|z| *z = c(0.0));
    let found = invert(&sig, &InversionConfig::for_signal(&sig, (4.0, 6.0)), Execution::Sequential).unwrap();
    assert!(found.is_empty());
}

#[test]
fn products_are_symmetric() {
    let truth = random_lines(3, 8, (10.0, 12.0), (0.1, 2.0), 3, 0.05);
    let sig = synth_quantum_signal(&truth, TAU_S, 2001).unwrap();
    let found = invert(&sig, &InversionConfig::for_signal(&sig, (9.8, 12.2)), Execution::default()).unwrap();
    for f in &found.lines {
        for a in 0..3 {
            for b in 0..3 {
                assert!((f.product(a, b) - f.product(b, a)).norm() <= 1e-10 * f.product(a, a).norm().max(1e-300));
            }
        }
    }
    assert_recovers(&truth, &found, 1e-8, 1e-6);
}

#[test]
fn larger_basis_changes_little() {
    let truth = random_lines(11, 20, (16.0, 18.0), (0.1, 2.0), 2, 0.03);
    let sig = synth_quantum_signal(&truth, TAU_S, 3001).unwrap();
    let cfg = InversionConfig::for_signal(&sig, (15.8, 18.2));
    let a = invert(&sig, &cfg, Execution::default()).unwrap();
    let b = invert(&sig, &InversionConfig { j: cfg.j * 3 / 2, ..cfg.clone() }, Execution::default()).unwrap();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.lines.iter().zip(&b.lines) {
        assert!((x.w - y.w).norm() < cfg.accept_err);
    }
}

#[test]
fn smoothing_is_undone() {
    for sigma in [0.05, 0.1] {
        // sigma w stays below 2 for every line.
        let truth = random_lines(5, 12, (10.0, 19.0), (0.1, 2.0), 2, 0.1);
        let smoothed: Vec<SpectralLine> = truth
            .iter()
            .map(|t| {
                let f = (-sigma * sigma * t.w.re * t.w.re / 4.0).exp();
                SpectralLine::new(t.w.re, t.b.iter().map(|x| x * f).collect())
            })
            .collect();
        let mut sig = synth_quantum_signal(&smoothed, TAU_S, 3001).unwrap();
        sig.meta.sigma = sigma;
        let found = invert(&sig, &InversionConfig::for_signal(&sig, (9.7, 19.3)), Execution::default()).unwrap();
        assert_recovers(&truth, &found, 1e-8, 1e-6);
    }
}

#[test]
fn noise_moves_lines_little() {
    let truth = random_lines(17, 10, (16.0, 18.0), (0.3, 2.0), 2, 0.05);
    let mut sig = synth_quantum_signal(&truth, TAU_S, 3001).unwrap();
    let peak = sig.data.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    for z in &mut sig.data {
        *z += Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * 1e-6 * peak;
    }
    sig.data.chunks_mut(4).for_each(|s| s[2] = s[1]);
    let found = invert(&sig, &InversionConfig::for_signal(&sig, (15.8, 18.2)), Execution::default()).unwrap();
    for t in &truth {
        assert!((nearest(&found, t.w.re).w.re - t.w.re).abs() <= 1e-4);
    }
}

#[test]
fn cross_validation_trivial_cases() {
    let truth = random_lines(1, 5, (10.0, 12.0), (0.5, 1.0), 2, 0.1);
    let set = SpectralLineSet {
        meta: LineSetMeta {
            version: "t".into(),
            window: (10.0, 12.0),
            j: 1,
            m: 1,
            tau: TAU_S,
            sigma: 0.0,
            l: 2,
            signal_hash: None,
        },
        lines: truth.clone(),
    };
    let same = cross_validate(&set, &set, 1e-8, 1e-8);
    assert_eq!(same.len(), 5);
    for (x, t) in same.lines.iter().zip(&truth) {
        assert_eq!((x.w, &x.b, x.err_w, x.err_b), (t.w, &t.b, 0.0, 0.0));
    }
    let shifted = SpectralLineSet {
        lines: truth.iter().map(|t| SpectralLine { w: t.w + 5.0, ..t.clone() }).collect(),
        ..set.clone()
    };
    assert!(cross_validate(&set, &shifted, 1e-3, 1.0).is_empty());
}

#[test]
fn cross_validation_removes_spurious_lines() {
    let truth = random_lines(23, 6, (12.0, 13.0), (0.3, 2.0), 2, 0.05);
    let sig = synth_quantum_signal(&truth, TAU_S, 4001).unwrap();
    let base = InversionConfig::for_signal(&sig, (11.8, 13.2));
    let cfg = InversionConfig { j: 3 * truth.len(), accept_im: 1.0, ..base };
    let full = invert(&sig, &cfg, Execution::default()).unwrap();
    let half = invert(&sig, &InversionConfig { m: cfg.m / 2, ..cfg.clone() }, Execution::default()).unwrap();
    let kept = cross_validate(&full, &half, 1e-6, 1e-4);
    assert_eq!(kept.len(), truth.len(), "full {} half {}", full.len(), half.len());
    assert_recovers(&truth, &kept, 1e-8, 1e-6);
}

#[test]
fn windowed_inversion_merges_overlaps() {
    let truth = random_lines(31, 40, (16.0, 22.0), (0.2, 2.0), 2, 0.04);
    let sig = synth_quantum_signal(&truth, TAU_S, 3001).unwrap();
    let tmpl = InversionConfig::for_signal(&sig, (16.0, 22.0));
    let found = invert_range(&sig, (15.8, 22.2), 1.6, &tmpl, true, Execution::default()).unwrap();
    assert_eq!(found.len(), truth.len());
    assert_recovers(&truth, &found, 1e-8, 1e-6);
    assert!(found.lines.iter().all(|x| x.err_w <= 1e-6));
}

#[test]
fn signal_length_advice() {
    let lines: Vec<SpectralLine> = (0..10).map(|k| SpectralLine::real(20.0 + 0.5 * k as f64, &[1.0])).collect();
    let set = SpectralLineSet {
        meta: LineSetMeta {
            version: "t".into(),
            window: (20.0, 25.0),
            j: 1,
            m: 1,
            tau: TAU_S,
            sigma: 0.0,
            l: 1,
            signal_hash: None,
        },
        lines,
    };
    let s = recommend_signal_length(&set, (20.0, 25.0)).unwrap();
    assert!((s - 4.0 * PI * 2.0).abs() < 1e-12);
    let empty = SpectralLineSet { lines: vec![], ..set };
    assert_eq!(recommend_signal_length(&empty, (20.0, 25.0)), None);
}

#[test]
fn line_file_round_trips() {
    let mut lines = random_lines(2, 4, (3.0, 4.0), (0.1, 1.0), 2, 0.01);
    lines[0].w.im = -1.234e-7;
    lines[1].err_w = 3.5e-11;
    lines[1].err_b = 0.25;
    let set = SpectralLineSet {
        meta: LineSetMeta {
            version: crate::VERSION.into(),
            window: (3.0, 4.0),
            j: 17,
            m: 900,
            tau: TAU_S,
            sigma: 0.1,
            l: 2,
            signal_hash: Some("ab".repeat(32)),
        },
        lines,
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lines.txt");
    let hash = write_lines(&path, &set).unwrap();
    let (back, h) = read_lines(&path).unwrap();
    assert_eq!(h, hash);
    assert_eq!(back.meta, set.meta);
    for (x, y) in back.lines.iter().zip(&set.lines) {
        assert_eq!((x.w, &x.b), (y.w, &y.b));
        assert_eq!(x.err_w.to_bits(), y.err_w.to_bits());
        assert_eq!(x.err_b.to_bits(), y.err_b.to_bits());
    }
}

#[test]
fn gauge_makes_largest_channel_positive() {
    let mut x = SpectralLine::new(1.0, vec![c(0.1), c(-2.0)]);
    x.fix_gauge();
    assert_eq!(x.b, vec![c(-0.1), c(2.0)]);
}
