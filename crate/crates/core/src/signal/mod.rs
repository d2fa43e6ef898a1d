//! Cross-correlated recurrence signals: the smoothed closed-orbit spike
//! train, its quantum-model counterpart, and Fourier views of both.

mod file;

pub use file::{read_signal, render_signal, write_signal};

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::angular::AngularFunction;
use crate::inversion::SpectralLine;
use crate::orbits::ClosedOrbit;
use crate::par::Execution;
use crate::{Error, Result};

/// Orbits closer than this to a bifurcation are left out of the signal.
pub const FOCAL_TOL: f64 = 1e-12;
/// Largest tolerated `|C_ab - C_ba|` before symmetrization, relative to the
/// largest sample.
pub const ASYMMETRY_TOL: f64 = 1e-8;
/// Gaussians are truncated at this many widths.
const GAUSS_REACH: f64 = 10.0;
/// Fixed number of accumulation chunks, so sums do not depend on the
/// thread count.
const CHUNKS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalSource {
    Semiclassical,
    Synthetic,
}

impl SignalSource {
    pub fn as_str(self) -> &'static str {
        match self {
            SignalSource::Semiclassical => "semiclassical",
            SignalSource::Synthetic => "synthetic",
        }
    }
}

impl std::str::FromStr for SignalSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "semiclassical" => Ok(SignalSource::Semiclassical),
            "synthetic" => Ok(SignalSource::Synthetic),
            _ => Err(Error::InvalidInput(format!("unknown signal source {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalMeta {
    pub version: String,
    pub source: SignalSource,
    pub scaled_energy: Option<f64>,
    /// Width of the Gaussian each spike was smeared with; 0 if unsmoothed.
    pub sigma: f64,
    /// One per channel; empty for synthetic signals.
    pub channels: Vec<AngularFunction>,
    /// Hash of the orbit table the signal was built from.
    pub orbit_table_hash: Option<String>,
}

impl SignalMeta {
    fn synthetic() -> Self {
        SignalMeta {
            version: crate::VERSION.into(),
            source: SignalSource::Synthetic,
            scaled_energy: None,
            sigma: 0.0,
            channels: Vec::new(),
            orbit_table_hash: None,
        }
    }
}

/// `L x L` complex samples `C(n tau)`, `n = 0..len`, row-major per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    pub tau: f64,
    pub l: usize,
    pub data: Vec<Complex64>,
    pub meta: SignalMeta,
}

impl SampledSignal {
    pub fn len(&self) -> usize {
        self.data.len() / (self.l * self.l)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn sample(&self, n: usize) -> &[Complex64] {
        let ll = self.l * self.l;
        &self.data[n * ll..(n + 1) * ll]
    }

    pub fn get(&self, n: usize, a: usize, b: usize) -> Complex64 {
        self.data[(n * self.l + a) * self.l + b]
    }

    /// Action of the last sample.
    pub fn s_max(&self) -> f64 {
        (self.len().saturating_sub(1)) as f64 * self.tau
    }

    /// The `(a, b)` element as a scalar signal.
    pub fn channel(&self, a: usize, b: usize) -> Vec<Complex64> {
        (0..self.len()).map(|n| self.get(n, a, b)).collect()
    }

    /// First `n` samples.
    pub fn truncated(&self, n: usize) -> SampledSignal {
        let ll = self.l * self.l;
        SampledSignal {
            data: self.data[..n.min(self.len()) * ll].to_vec(),
            ..self.clone()
        }
    }

    /// `1 x 1` signal of the `(a, a)` element.
    pub fn diagonal(&self, a: usize) -> SampledSignal {
        SampledSignal {
            tau: self.tau,
            l: 1,
            data: self.channel(a, a),
            meta: SignalMeta {
                channels: self.meta.channels.get(a).cloned().into_iter().collect(),
                ..self.meta.clone()
            },
        }
    }

    /// Largest `|C_ab - C_ba|` over all samples.
    pub fn max_asymmetry(&self) -> f64 {
        let mut m = 0.0f64;
        for n in 0..self.len() {
            for a in 0..self.l {
                for b in a + 1..self.l {
                    m = m.max((self.get(n, a, b) - self.get(n, b, a)).norm());
                }
            }
        }
        m
    }
}

/// Unit-area Gaussian of width `sigma`.
pub fn gaussian(x: f64, sigma: f64) -> f64 {
    (-0.5 * (x / sigma).powi(2)).exp() / (sigma * TAU.sqrt())
}

/// Recurrence amplitude of one orbit for channels `fa` (launch) and `fb`
/// (return).
pub fn spike_amplitude(o: &ClosedOrbit, fa: &AngularFunction, fb: &AngularFunction) -> Result<Complex64> {
    if o.m12.abs() < FOCAL_TOL {
        return Err(Error::FocalSingularity { m12: o.m12 });
    }
    let sines = (o.theta_i.sin() * o.theta_f.sin()).max(0.0).sqrt();
    let y = fa.evaluate(o.theta_i.clamp(0.0, PI))? * fb.evaluate(o.theta_f.clamp(0.0, PI))?;
    let modulus = -TAU.powf(2.5) / o.m12.abs().sqrt() * sines * y;
    let phase = -FRAC_PI_2 * o.maslov as f64 + FRAC_PI_4;
    Ok(Complex64::from_polar(1.0, phase) * modulus)
}

/// `L x L` amplitude matrix of one orbit, or `None` if it carries no weight.
fn spike(o: &ClosedOrbit, channels: &[AngularFunction]) -> Result<Option<Vec<Complex64>>> {
    let l = channels.len();
    let mut m = vec![Complex64::new(0.0, 0.0); l * l];
    for a in 0..l {
        for b in 0..l {
            m[a * l + b] = spike_amplitude(o, &channels[a], &channels[b])?;
        }
    }
    Ok(m.iter().any(|z| *z != Complex64::new(0.0, 0.0)).then_some(m))
}

/// Smoothed spike train `sum_co A_co g_sigma(n tau - s_co)` on
/// `n = 0 ..= floor(s_max / tau)`, symmetrized in the channel indices.
pub fn build_signal(
    orbits: &[ClosedOrbit],
    channels: &[AngularFunction],
    sigma: f64,
    tau: f64,
    s_max: f64,
    exec: Execution,
) -> Result<SampledSignal> {
    if !(tau > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidInput(format!("bad sampling tau = {tau}, sigma = {sigma}")));
    }
    if sigma < tau {
        return Err(Error::InvalidInput(format!(
            "sigma = {sigma} is below the sample step tau = {tau}; spikes would be undersampled"
        )));
    }
    if channels.is_empty() {
        return Err(Error::InvalidInput("no angular channels".into()));
    }
    let used: Vec<&ClosedOrbit> = orbits.iter().filter(|o| o.s <= s_max).collect();
    if used.is_empty() {
        return Err(Error::InvalidInput(format!("no orbits with s <= {s_max}")));
    }
    let l = channels.len();
    let ll = l * l;
    let n = (s_max / tau).floor() as usize + 1;

    let chunk = used.len().div_ceil(CHUNKS);
    let parts = exec.map_range(used.len().div_ceil(chunk), |c| {
        let mut grid = vec![Complex64::new(0.0, 0.0); n * ll];
        let mut skipped = 0usize;
        for o in &used[c * chunk..((c + 1) * chunk).min(used.len())] {
            let amp = match spike(o, channels) {
                Ok(Some(m)) => m,
                Ok(None) => {
                    log::debug!("orbit {} has zero weight", o.id);
                    continue;
                }
                Err(err) => {
                    log::warn!("orbit {} left out: {err}", o.id);
                    skipped += 1;
                    continue;
                }
            };
            let lo = ((o.s - GAUSS_REACH * sigma) / tau).ceil().max(0.0) as usize;
            let hi = (((o.s + GAUSS_REACH * sigma) / tau).floor() as usize).min(n - 1);
            for k in lo..=hi {
                let g = gaussian(k as f64 * tau - o.s, sigma);
                for (d, a) in grid[k * ll..(k + 1) * ll].iter_mut().zip(&amp) {
                    *d += a * g;
                }
            }
        }
        (grid, skipped)
    });
    let mut data = vec![Complex64::new(0.0, 0.0); n * ll];
    let mut skipped = 0;
    for (grid, s) in parts {
        skipped += s;
        for (d, g) in data.iter_mut().zip(grid) {
            *d += g;
        }
    }
    if skipped > 0 {
        log::warn!("{skipped} orbits near bifurcations left out of the signal");
    }

    let mut sig = SampledSignal {
        tau,
        l,
        data,
        meta: SignalMeta {
            version: crate::VERSION.into(),
            source: SignalSource::Semiclassical,
            scaled_energy: None,
            sigma,
            channels: channels.to_vec(),
            orbit_table_hash: None,
        },
    };
    let scale = sig.data.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let asym = sig.max_asymmetry();
    if asym > ASYMMETRY_TOL * scale {
        return Err(Error::InvalidInput(format!(
            "signal asymmetry {asym:e} exceeds {ASYMMETRY_TOL:e} of the peak {scale:e}; time-reversed partners missing from the orbit table"
        )));
    }
    symmetrize(&mut sig);
    Ok(sig)
}

fn symmetrize(sig: &mut SampledSignal) {
    let l = sig.l;
    for k in 0..sig.len() {
        let base = k * l * l;
        for a in 0..l {
            for b in a + 1..l {
                let m = (sig.data[base + a * l + b] + sig.data[base + b * l + a]) * 0.5;
                sig.data[base + a * l + b] = m;
                sig.data[base + b * l + a] = m;
            }
        }
    }
}

/// `C_ab(s) = -i sum_k b_ak b_bk exp(-i w_k s)` at `s = n tau`.
pub fn synth_quantum_signal(lines: &[SpectralLine], tau: f64, n: usize) -> Result<SampledSignal> {
    if n == 0 {
        return Err(Error::InvalidInput("empty signal".into()));
    }
    let l = lines.first().map_or(1, |x| x.b.len());
    if lines.iter().any(|x| x.b.len() != l) {
        return Err(Error::InvalidInput("lines have different channel counts".into()));
    }
    let ll = l * l;
    let mut data = vec![Complex64::new(0.0, 0.0); n * ll];
    let mi = Complex64::new(0.0, -1.0);
    for line in lines {
        let step = (mi * line.w * tau).exp();
        let mut z = Complex64::new(1.0, 0.0);
        for k in 0..n {
            // Recompute periodically so the running product does not drift.
            if k % 256 == 0 {
                z = (mi * line.w * (k as f64 * tau)).exp();
            }
            for a in 0..l {
                for b in 0..l {
                    data[k * ll + a * l + b] += mi * line.b[a] * line.b[b] * z;
                }
            }
            z *= step;
        }
    }
    Ok(SampledSignal {
        tau,
        l,
        data,
        meta: SignalMeta::synthetic(),
    })
}

/// Closed-orbit sum `w^(-1/2) sum_co A_co exp(i s_co w) exp(-damping s_co^2)`
/// over orbits with `s <= s_cutoff`; one `L x L` matrix per grid point.
pub fn evaluate_gsc_smoothed(
    orbits: &[ClosedOrbit],
    channels: &[AngularFunction],
    w_grid: &[f64],
    s_cutoff: f64,
    damping: f64,
) -> Result<Vec<Vec<Complex64>>> {
    if w_grid.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::InvalidInput("w grid must be positive".into()));
    }
    let l = channels.len();
    let mut spikes = Vec::new();
    for o in orbits.iter().filter(|o| o.s <= s_cutoff) {
        match spike(o, channels) {
            Ok(Some(m)) => spikes.push((o.s, m, (-damping * o.s * o.s).exp())),
            Ok(None) => {}
            Err(err) => log::warn!("orbit {} left out: {err}", o.id),
        }
    }
    Ok(w_grid
        .iter()
        .map(|&w| {
            let mut g = vec![Complex64::new(0.0, 0.0); l * l];
            for (s, m, d) in &spikes {
                let ph = Complex64::from_polar(d / w.sqrt(), s * w);
                for (gi, mi) in g.iter_mut().zip(m) {
                    *gi += mi * ph;
                }
            }
            g
        })
        .collect())
}

/// Sign of the oscillations a Fourier view looks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Oscillation {
    /// Components `exp(+i k x)`, as in the closed-orbit sum over `w`.
    Plus,
    /// Components `exp(-i k x)`, as in recurrence signals over `s`.
    Minus,
}

/// Magnitude of the Hann-windowed discrete Fourier transform of a uniform
/// series with step `dx`, zero-padded to at least `pad` points. Returns the
/// conjugate coordinates `k` in `[0, pi / dx)` and the magnitudes,
/// normalized so a unit oscillation at `k0` peaks near 1 at `k0`.
pub fn fourier_recurrence(series: &[Complex64], dx: f64, pad: usize, osc: Oscillation) -> (Vec<f64>, Vec<f64>) {
    let n = series.len();
    let m = pad.max(n).next_power_of_two();
    let win = |j: usize| {
        if n < 2 {
            1.0
        } else {
            0.5 - 0.5 * (TAU * j as f64 / (n - 1) as f64).cos()
        }
    };
    let norm: f64 = (0..n).map(win).sum();
    let mut buf: Vec<Complex64> = (0..m)
        .map(|j| {
            if j >= n {
                return Complex64::new(0.0, 0.0);
            }
            let z = series[j] * win(j);
            match osc {
                Oscillation::Plus => z,
                Oscillation::Minus => z.conj(),
            }
        })
        .collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let half = m / 2;
    let ks = (0..half).map(|k| TAU * k as f64 / (m as f64 * dx)).collect();
    let mags = buf[..half].iter().map(|z| z.norm() / norm).collect();
    (ks, mags)
}
