//! Observables from extracted lines: dipole matrix elements, stick
//! spectra, oscillator strengths and laboratory field strengths.

use std::path::Path;

use num_complex::Complex64;

use crate::hash::fmt_f64;
use crate::inversion::SpectralLine;
use crate::textfile::{self, field};
use crate::{Error, Result};

/// Field strength in Tesla that corresponds to `gamma = 1`.
pub const TESLA_PER_GAMMA: f64 = 2.35e5;
/// Field-free energy of the `2p0` state.
pub const E_2P0: f64 = -0.125;
/// Lines closer than this in `w` are merged.
pub const MERGE_TOL: f64 = 1e-6;

/// `<phi_a|D|psi_k> = b_ak (Re w_k)^(-1/4)`.
pub fn matrix_element(line: &SpectralLine, alpha: usize) -> Result<Complex64> {
    check_line(line, alpha)?;
    Ok(line.b[alpha] * line.w.re.powf(-0.25))
}

/// `<phi_a|D|psi_k>^2` from the sign-free product `d_aa = b_a^2`; the
/// imaginary part is returned separately as a consistency measure.
pub fn strength(line: &SpectralLine, alpha: usize) -> Result<(f64, f64)> {
    check_line(line, alpha)?;
    let d = line.product(alpha, alpha) / line.w.re.sqrt();
    Ok((d.re, d.im))
}

fn check_line(line: &SpectralLine, alpha: usize) -> Result<()> {
    if !(line.w.re > 0.0) {
        return Err(Error::Domain(format!("line at w = {} has nonpositive real part", line.w)));
    }
    if alpha >= line.b.len() {
        return Err(Error::InvalidInput(format!("channel {alpha} out of {}", line.b.len())));
    }
    Ok(())
}

/// `gamma = w^-3`.
pub fn gamma_of_w(w: f64) -> f64 {
    w.powi(-3)
}

pub fn w_of_gamma(gamma: f64) -> f64 {
    gamma.cbrt().recip()
}

/// Laboratory field in Tesla at which `w` is an eigenvalue.
pub fn field_of_w(w: f64) -> f64 {
    TESLA_PER_GAMMA * gamma_of_w(w)
}

/// `E = E~ gamma^(2/3)`.
pub fn energy(scaled_energy: f64, gamma: f64) -> f64 {
    scaled_energy * gamma.powf(2.0 / 3.0)
}

/// `f = 2 (E_k - E_i) <phi_i|D|psi_k>^2`, with `E_k` taken at the field that
/// line `k` itself fixes.
pub fn oscillator_strength(line: &SpectralLine, alpha: usize, scaled_energy: f64, e_initial: f64) -> Result<f64> {
    let (s, _) = strength(line, alpha)?;
    let e_k = energy(scaled_energy, gamma_of_w(line.w.re));
    Ok(2.0 * (e_k - e_initial) * s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stick {
    pub w: f64,
    pub strength: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StickSpectrum {
    pub channel: usize,
    pub sticks: Vec<Stick>,
}

/// Sorted stick spectrum of channel `alpha`. Strengths come from `d_aa`;
/// each error is `|Im d_aa|` plus the propagated line errors when known.
/// Lines within [`MERGE_TOL`] are merged, summing strengths.
pub fn assemble_stick_spectrum(lines: &[SpectralLine], alpha: usize) -> Result<StickSpectrum> {
    let mut sticks = Vec::with_capacity(lines.len());
    for x in lines {
        let (s, im) = strength(x, alpha)?;
        let mut error = im.abs();
        if x.err_b.is_finite() {
            let b = x.b[alpha].norm();
            error += 2.0 * b * x.err_b / x.w.re.sqrt();
        }
        sticks.push(Stick { w: x.w.re, strength: s, error });
    }
    Ok(StickSpectrum { channel: alpha, sticks: merge(sticks) })
}

fn merge(mut sticks: Vec<Stick>) -> Vec<Stick> {
    sticks.sort_by(|a, b| a.w.total_cmp(&b.w));
    let mut out: Vec<Stick> = Vec::with_capacity(sticks.len());
    for s in sticks {
        match out.last_mut() {
            Some(p) if s.w - p.w <= MERGE_TOL => {
                let total = p.strength + s.strength;
                if total != 0.0 {
                    p.w = (p.w * p.strength + s.w * s.strength) / total;
                }
                p.strength = total;
                p.error += s.error;
            }
            _ => out.push(s),
        }
    }
    out
}

impl StickSpectrum {
    /// Re-sorts and re-merges; idempotent.
    pub fn normalized(&self) -> StickSpectrum {
        StickSpectrum {
            channel: self.channel,
            sticks: merge(self.sticks.clone()),
        }
    }

    /// The stick nearest to `w`.
    pub fn nearest(&self, w: f64) -> Option<&Stick> {
        self.sticks
            .iter()
            .min_by(|a, b| (a.w - w).abs().total_cmp(&(b.w - w).abs()))
    }
}

pub const KIND: &str = "sticks";

pub fn render_sticks(spec: &StickSpectrum, lines_hash: Option<&str>) -> (String, String) {
    let header = [
        ("version", crate::VERSION.to_string()),
        ("channel", spec.channel.to_string()),
        ("lines_sha256", lines_hash.unwrap_or("none").to_string()),
        ("columns", "w strength error".into()),
    ];
    let rows: Vec<String> = spec
        .sticks
        .iter()
        .map(|s| format!("{} {} {}", fmt_f64(s.w), fmt_f64(s.strength), fmt_f64(s.error)))
        .collect();
    textfile::render(KIND, &header, &rows)
}

pub fn write_sticks(path: &Path, spec: &StickSpectrum, lines_hash: Option<&str>) -> Result<String> {
    let (text, hash) = render_sticks(spec, lines_hash);
    std::fs::write(path, text)?;
    Ok(hash)
}

pub fn read_sticks(path: &Path) -> Result<(StickSpectrum, String)> {
    let doc = textfile::read(path, KIND)?;
    let channel = textfile::header_value(&doc, path, "channel")?;
    let mut sticks = Vec::with_capacity(doc.rows.len());
    for (line, text) in &doc.rows {
        let mut t = text.split_whitespace();
        sticks.push(Stick {
            w: field(path, *line, "w", t.next())?,
            strength: field(path, *line, "strength", t.next())?,
            error: field(path, *line, "error", t.next())?,
        });
    }
    Ok((StickSpectrum { channel, sticks }, doc.hash))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn line(w: f64, b: f64) -> SpectralLine {
        SpectralLine::real(w, &[b, 0.3])
    }

    #[test]
    fn matrix_element_examples() {
        assert_relative_eq!(matrix_element(&line(16.0, 1.0), 0).unwrap().re, 0.5, max_relative = 1e-15);
        assert_eq!(matrix_element(&line(16.0, 0.0), 0).unwrap().norm(), 0.0);
        let b = 0.028f64.sqrt() * 38.894f64.powf(0.25);
        assert_relative_eq!(b, 0.417_878_154_595_864_2, max_relative = 1e-14);
        assert_relative_eq!(strength(&line(38.894, b), 0).unwrap().0, 0.028, max_relative = 1e-14);
        assert!(matrix_element(&line(-1.0, 1.0), 0).is_err());
        assert!(matrix_element(&line(1.0, 1.0), 5).is_err());
    }

    #[test]
    fn field_conversions() {
        assert_relative_eq!(field_of_w(34.0), 5.979_035_212_700_997, max_relative = 1e-12);
        assert_relative_eq!(field_of_w(40.0), 3.671_875, max_relative = 1e-14);
        assert_relative_eq!(field_of_w(340.0), field_of_w(34.0) * 1e-3, max_relative = 1e-14);
        for w in [1.0, 16.0, 36.969, 40.0, 123.4] {
            assert!((w_of_gamma(gamma_of_w(w)) - w).abs() <= 1e-14 * w);
        }
    }

    #[test]
    fn oscillator_strength_cases() {
        let l = line(20.0, 0.8);
        let g = gamma_of_w(20.0);
        let e_k = energy(-0.7, g);
        assert_relative_eq!(e_k / g.powf(2.0 / 3.0), -0.7, max_relative = 1e-15);
        assert_eq!(oscillator_strength(&l, 0, -0.7, e_k).unwrap(), 0.0);
        assert_eq!(oscillator_strength(&line(20.0, 0.0), 0, -0.7, E_2P0).unwrap(), 0.0);
        let (s, _) = strength(&l, 0).unwrap();
        assert_relative_eq!(oscillator_strength(&l, 0, -0.7, E_2P0).unwrap(), 2.0 * (e_k - E_2P0) * s);
    }

    #[test]
    fn sticks_are_gauge_invariant_sorted_and_merged() {
        let lines = vec![line(20.0, 0.5), line(18.0, -0.7), line(19.0, 0.2)];
        let flipped: Vec<SpectralLine> = lines
            .iter()
            .map(|x| SpectralLine { b: x.b.iter().map(|b| -b).collect(), ..x.clone() })
            .collect();
        let a = assemble_stick_spectrum(&lines, 0).unwrap();
        assert_eq!(a, assemble_stick_spectrum(&flipped, 0).unwrap());
        assert!(a.sticks.windows(2).all(|p| p[0].w < p[1].w));
        assert!(a.sticks.iter().all(|s| s.strength >= 0.0));
        assert_eq!(a.normalized(), a);

        let twin = vec![line(20.0, 0.5), line(20.0 + 1e-7, 0.5), line(20.013, 0.1)];
        let m = assemble_stick_spectrum(&twin, 0).unwrap();
        assert_eq!(m.sticks.len(), 2);
        assert_relative_eq!(m.sticks[0].strength, 0.25 / 20f64.sqrt() + 0.25 / (20.0 + 1e-7f64).sqrt(), max_relative = 1e-14);
        assert!(assemble_stick_spectrum(&[], 0).unwrap().sticks.is_empty());
    }

    #[test]
    fn single_stick_is_matrix_element_squared() {
        let l = line(25.0, 0.9);
        let s = assemble_stick_spectrum(std::slice::from_ref(&l), 0).unwrap();
        assert_relative_eq!(s.sticks[0].strength, matrix_element(&l, 0).unwrap().norm_sqr(), max_relative = 1e-14);
    }

    #[test]
    fn stick_file_round_trips() {
        let s = assemble_stick_spectrum(&[line(20.0, 0.5), line(21.0, 0.1)], 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sticks.txt");
        let h = write_sticks(&p, &s, Some("abc")).unwrap();
        let (back, h2) = read_sticks(&p).unwrap();
        assert_eq!((back, h2), (s, h));
    }
}
