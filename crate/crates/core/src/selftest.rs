//! Quick checks of the signal and inversion stages against signals with a
//! known line list.

use std::f64::consts::TAU;

use crate::inversion::{invert, invert_validated, random_lines, InversionConfig, SpectralLine, SpectralLineSet};
use crate::par::Execution;
use crate::signal::{self, synth_quantum_signal};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn nearest<'a>(set: &'a SpectralLineSet, w: f64) -> Option<&'a SpectralLine> {
    set.lines
        .iter()
        .min_by(|a, b| (a.w.re - w).abs().total_cmp(&(b.w.re - w).abs()))
}

/// Largest `|dw|` and largest relative error of `b_a b_b` over `truth`.
pub fn recovery_errors(truth: &[SpectralLine], found: &SpectralLineSet) -> (f64, f64) {
    let mut dw = 0.0f64;
    let mut dprod = 0.0f64;
    for t in truth {
        let Some(f) = nearest(found, t.w.re) else {
            return (f64::INFINITY, f64::INFINITY);
        };
        dw = dw.max((f.w - t.w).norm());
        let l = t.b.len();
        for a in 0..l {
            for b in 0..l {
                let want = t.product(a, b);
                dprod = dprod.max((f.product(a, b) - want).norm() / want.norm().max(1e-300));
            }
        }
    }
    (dw, dprod)
}

/// 50 lines in `[16, 21]`, `2 x 2`, `tau = 0.05`, `s_max = 2 pi 30`.
pub fn many_lines(exec: Execution) -> Result<Check> {
    let truth = random_lines(20240611, 50, (16.0, 21.0), (0.1, 2.0), 2, 0.03);
    let sig = synth_quantum_signal(&truth, 0.05, (TAU * 30.0 / 0.05) as usize + 1)?;
    let found = invert(&sig, &InversionConfig::for_signal(&sig, (15.7, 21.3)), exec)?;
    let (dw, dp) = recovery_errors(&truth, &found);
    Ok(Check {
        name: "50 lines, 2x2",
        passed: dw <= 1e-8 && dp <= 1e-6,
        detail: format!("max |dw| {dw:.2e}, max product error {dp:.2e}"),
    })
}

/// The pair `36.969`, `36.982` inside about 60 background lines per unit of
/// `w`, where a single channel at `s_max = 2 pi 100` is too short.
pub fn pair_lines(seed: u64) -> Vec<SpectralLine> {
    let mut lines = random_lines(seed, 72, (36.4, 37.6), (0.3, 1.0), 2, 0.0);
    lines.retain(|l| (l.w.re - 36.975).abs() > 0.03);
    lines.push(SpectralLine::real(36.969, &[1.0, 0.4]));
    lines.push(SpectralLine::real(36.982, &[0.45, -0.9]));
    lines.sort_by(|a, b| a.w.re.total_cmp(&b.w.re));
    lines
}

/// Whether both members of the pair come out of a cross-validated
/// inversion within `1e-4` in `w` and 1% in strength.
pub fn pair_resolved(found: &SpectralLineSet) -> bool {
    [(36.969, 1.0), (36.982, 0.2025)].iter().all(|&(w, s)| {
        found.lines.iter().any(|x| {
            (x.w.re - w).abs() <= 1e-4 && ((x.product(0, 0).re - s) / s).abs() <= 0.01
        })
    })
}

pub fn pair(exec: Execution) -> Result<Check> {
    let sig = synth_quantum_signal(&pair_lines(1), 0.05, (TAU * 100.0 / 0.05) as usize + 1)?;
    let window = (36.7, 37.25);
    let run = |s: &signal::SampledSignal| {
        let cfg = InversionConfig {
            accept_err: 1e-6,
            ..InversionConfig::for_signal(s, window)
        };
        invert_validated(s, &cfg, exec)
    };
    let two = pair_resolved(&run(&sig)?);
    let one = pair_resolved(&run(&sig.diagonal(0))?);
    Ok(Check {
        name: "near-degenerate pair",
        passed: two && !one,
        detail: format!("2x2 resolves: {two}, 1x1 resolves: {one}"),
    })
}

/// Lines smeared by `exp(-(sigma w)^2 / 2)` come back at full strength.
pub fn deconvolution(exec: Execution) -> Result<Check> {
    let sigma = 0.1;
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
    let mut sig = synth_quantum_signal(&smeared, 0.05, 3001)?;
    sig.meta.sigma = sigma;
    let found = invert(&sig, &InversionConfig::for_signal(&sig, (9.7, 19.3)), exec)?;
    let (dw, dp) = recovery_errors(&truth, &found);
    Ok(Check {
        name: "smoothing deconvolution",
        passed: dw <= 1e-8 && dp <= 1e-6,
        detail: format!("max |dw| {dw:.2e}, max product error {dp:.2e}"),
    })
}

/// Signal text round trip is bit-exact.
pub fn round_trip() -> Result<Check> {
    let lines = random_lines(9, 5, (3.0, 9.0), (0.1, 2.0), 2, 0.1);
    let sig = synth_quantum_signal(&lines, 0.05, 500)?;
    let (text, _) = signal::render_signal(&sig);
    let dir = std::env::temp_dir().join(format!("cohi-selftest-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("signal.txt");
    std::fs::write(&path, &text)?;
    let back = signal::read_signal(&path);
    let _ = std::fs::remove_dir_all(&dir);
    let same = back?.0 == sig;
    Ok(Check {
        name: "signal file round trip",
        passed: same,
        detail: format!("{} samples", sig.len()),
    })
}

pub fn run_all(exec: Execution) -> Result<Vec<Check>> {
    Ok(vec![many_lines(exec)?, pair(exec)?, deconvolution(exec)?, round_trip()?])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_check_passes() {
        for c in run_all(Execution::default()).unwrap() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
