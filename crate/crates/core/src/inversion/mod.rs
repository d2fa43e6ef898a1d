//! Harmonic inversion of `L x L` signals by filter diagonalization: fits
//! `C_ab(n tau) = -i sum_k b_ak b_bk exp(-i w_k n tau)` inside a frequency
//! window through a small generalized eigenproblem.

mod file;

pub use file::{read_lines, render_lines, write_lines};

use std::f64::consts::{PI, TAU};

use faer::Mat;
use num_complex::Complex64;

use crate::par::Execution;
use crate::signal::SampledSignal;
use crate::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// One extracted line. `err_w` and `err_b` are NaN until a cross-validation
/// has estimated them.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralLine {
    pub w: Complex64,
    /// Amplitude per channel, up to one global sign.
    pub b: Vec<Complex64>,
    pub err_w: f64,
    pub err_b: f64,
}

impl SpectralLine {
    pub fn new(w: f64, b: Vec<Complex64>) -> Self {
        SpectralLine {
            w: Complex64::new(w, 0.0),
            b,
            err_w: f64::NAN,
            err_b: f64::NAN,
        }
    }

    /// Real-amplitude shorthand.
    pub fn real(w: f64, b: &[f64]) -> Self {
        Self::new(w, b.iter().map(|x| Complex64::new(*x, 0.0)).collect())
    }

    /// `b_a b_b`, which unlike `b` is free of the sign ambiguity.
    pub fn product(&self, a: usize, b: usize) -> Complex64 {
        self.b[a] * self.b[b]
    }

    /// Flips the overall sign so the largest-magnitude channel has a
    /// nonnegative real part.
    pub fn fix_gauge(&mut self) {
        let Some(big) = self
            .b
            .iter()
            .copied()
            .max_by(|x, y| x.norm().total_cmp(&y.norm()))
        else {
            return;
        };
        if big.re < 0.0 || (big.re == 0.0 && big.im < 0.0) {
            for x in &mut self.b {
                *x = -*x;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSetMeta {
    pub version: String,
    pub window: (f64, f64),
    pub j: usize,
    pub m: usize,
    pub tau: f64,
    pub sigma: f64,
    pub l: usize,
    pub signal_hash: Option<String>,
}

/// Lines sorted by `Re w`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralLineSet {
    pub meta: LineSetMeta,
    pub lines: Vec<SpectralLine>,
}

impl SpectralLineSet {
    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InversionConfig {
    pub window: (f64, f64),
    /// Basis frequencies per channel.
    pub j: usize,
    /// Uses samples `0 ..= 2M + 1`.
    pub m: usize,
    pub svd_cutoff: f64,
    pub accept_im: f64,
    pub accept_err: f64,
}

impl InversionConfig {
    /// Uses the whole signal, and one basis frequency per Fourier cell of
    /// the half-length `M tau`, padded by 20%.
    pub fn for_signal(sig: &SampledSignal, window: (f64, f64)) -> Self {
        let m = sig.len().saturating_sub(2) / 2;
        InversionConfig {
            window,
            j: default_basis_size(window, m, sig.tau),
            m,
            svd_cutoff: 1e-10,
            accept_im: 1e-3,
            accept_err: 1e-6,
        }
    }

    pub fn with_m(mut self, m: usize, tau: f64) -> Self {
        self.m = m;
        self.j = default_basis_size(self.window, m, tau);
        self
    }
}

pub fn default_basis_size(window: (f64, f64), m: usize, tau: f64) -> usize {
    let cells = (window.1 - window.0) * m as f64 * tau / TAU;
    ((1.2 * cells).ceil() as usize).max(8)
}

/// Rejects windows the sampling step cannot resolve.
pub fn check_nyquist(tau: f64, window: (f64, f64)) -> Result<()> {
    if !(window.1 * tau < PI && window.0.abs() * tau < PI) {
        return Err(Error::Nyquist { tau, w_max: window.1.max(window.0.abs()) });
    }
    Ok(())
}

fn validate(sig: &SampledSignal, cfg: &InversionConfig) -> Result<()> {
    let (lo, hi) = cfg.window;
    if !(lo > 0.0 && lo < hi && hi.is_finite()) {
        return Err(Error::InvalidInput(format!("bad window [{lo}, {hi}]")));
    }
    check_nyquist(sig.tau, cfg.window)?;
    if cfg.j == 0 || cfg.m == 0 {
        return Err(Error::InvalidInput("J and M must be positive".into()));
    }
    if sig.len() < 2 * cfg.m + 2 {
        return Err(Error::InvalidInput(format!(
            "signal has {} samples, M = {} needs {}",
            sig.len(),
            cfg.m,
            2 * cfg.m + 2
        )));
    }
    if !(cfg.svd_cutoff > 0.0 && cfg.svd_cutoff < 1.0) {
        return Err(Error::InvalidInput(format!("svd_cutoff {} outside (0, 1)", cfg.svd_cutoff)));
    }
    Ok(())
}

/// `x^0 .. x^(n-1)` for `|x| = 1`, refreshed from the exact phase every 64
/// steps so rounding does not accumulate.
fn unit_powers(phase: f64, n: usize) -> Vec<Complex64> {
    let step = Complex64::from_polar(1.0, phase);
    let mut out = Vec::with_capacity(n);
    let mut z = Complex64::new(1.0, 0.0);
    for k in 0..n {
        if k % 64 == 0 {
            z = Complex64::from_polar(1.0, phase * k as f64);
        }
        out.push(z);
        z *= step;
    }
    out
}

/// Signal times `i`, so that `c_ab(n) = sum_k d_abk u_k^n`.
fn model_samples(sig: &SampledSignal, n: usize) -> Vec<Vec<Complex64>> {
    let l = sig.l;
    (0..l * l)
        .map(|ab| (0..n).map(|k| I * sig.get(k, ab / l, ab % l)).collect())
        .collect()
}

/// Basis phases: `x_j = 1 / z_j = exp(i tau phi_j)` with `phi_j` spread
/// evenly over the window.
fn basis(cfg: &InversionConfig) -> Vec<f64> {
    let (lo, hi) = cfg.window;
    (0..cfg.j)
        .map(|j| lo + (j as f64 + 0.5) * (hi - lo) / cfg.j as f64)
        .collect()
}

/// Per basis frequency and channel pair: `F(x) = sum_0^M c(m+p) x^m`,
/// `H(x) = sum_(M+1)^(2M) c(m+p) x^(m-M)` and the diagonal sum
/// `D(x) = sum_0^(2M) (M + 1 - |M - m|) c(m+p) x^m`.
struct Sums {
    f: Vec<Complex64>,
    h: Vec<Complex64>,
    d: Vec<Complex64>,
}

fn sums(c: &[Vec<Complex64>], powers: &[Complex64], m: usize, p: usize) -> Sums {
    let mut out = Sums {
        f: vec![ZERO; c.len()],
        h: vec![ZERO; c.len()],
        d: vec![ZERO; c.len()],
    };
    for (ab, c) in c.iter().enumerate() {
        let (mut f, mut h, mut d) = (ZERO, ZERO, ZERO);
        for k in 0..=2 * m {
            let t = c[k + p] * powers[k];
            if k <= m {
                f += t;
            } else {
                h += c[k + p] * powers[k - m];
            }
            d += t * (m + 1 - m.abs_diff(k)) as f64;
        }
        out.f[ab] = f;
        out.h[ab] = h;
        out.d[ab] = d;
    }
    out
}

/// Builds `U^(0)` and `U^(1)` from the closed-form geometric sums. Index
/// `(j, a)` maps to `j L + a`.
fn u_matrices(
    c: &[Vec<Complex64>],
    l: usize,
    phases: &[f64],
    m: usize,
    exec: Execution,
) -> (Mat<Complex64>, Mat<Complex64>) {
    let xs: Vec<Complex64> = phases.iter().map(|ph| Complex64::from_polar(1.0, *ph)).collect();
    let per_j = exec.map(phases, |ph| {
        let pw = unit_powers(*ph, 2 * m + 1);
        let xm1 = Complex64::from_polar(1.0, ph * (m + 1) as f64);
        (sums(c, &pw, m, 0), sums(c, &pw, m, 1), xm1)
    });
    let j = phases.len();
    let k = j * l;
    let mut u = [Mat::<Complex64>::zeros(k, k), Mat::<Complex64>::zeros(k, k)];
    for (p, u) in u.iter_mut().enumerate() {
        let pick = |q: usize| if p == 0 { &per_j[q].0 } else { &per_j[q].1 };
        for j1 in 0..j {
            for j2 in 0..j {
                let (s1, s2) = (pick(j1), pick(j2));
                for a in 0..l {
                    for b in 0..l {
                        let ab = a * l + b;
                        let v = if j1 == j2 {
                            s1.d[ab]
                        } else {
                            let (x, y) = (xs[j1], xs[j2]);
                            let (xm1, ym1) = (per_j[j1].2, per_j[j2].2);
                            (x * s1.f[ab] - y * s2.f[ab] + xm1 * s2.h[ab] - ym1 * s1.h[ab]) / (x - y)
                        };
                        u[(j1 * l + a, j2 * l + b)] = v;
                    }
                }
            }
        }
    }
    let [u0, u1] = u;
    (u0, u1)
}

/// `U^(p)` by the defining double sum over `G_jj'(m)`. Slow; kept as the
/// reference for the closed form.
pub fn u_matrix_direct(sig: &SampledSignal, cfg: &InversionConfig, p: usize) -> Vec<Vec<Complex64>> {
    let l = sig.l;
    let m = cfg.m;
    let c = model_samples(sig, 2 * m + 2);
    let zinv: Vec<Complex64> = basis(cfg)
        .iter()
        .map(|w| Complex64::from_polar(1.0, sig.tau * w))
        .collect();
    let k = cfg.j * l;
    let mut u = vec![vec![ZERO; k]; k];
    for j1 in 0..cfg.j {
        for j2 in 0..cfg.j {
            let g: Vec<Complex64> = (0..=2 * m)
                .map(|mm| {
                    (mm.saturating_sub(m)..=m.min(mm))
                        .map(|n| zinv[j1].powu(n as u32) * zinv[j2].powu((mm - n) as u32))
                        .sum()
                })
                .collect();
            for a in 0..l {
                for b in 0..l {
                    u[j1 * l + a][j2 * l + b] = (0..=2 * m).map(|mm| c[a * l + b][mm + p] * g[mm]).sum();
                }
            }
        }
    }
    u
}

/// The closed-form `U^(p)` matrices, for comparison with
/// [`u_matrix_direct`].
pub fn u_matrix_fast(sig: &SampledSignal, cfg: &InversionConfig) -> (Vec<Vec<Complex64>>, Vec<Vec<Complex64>>) {
    let c = model_samples(sig, 2 * cfg.m + 2);
    let phases: Vec<f64> = basis(cfg).iter().map(|w| sig.tau * w).collect();
    let (u0, u1) = u_matrices(&c, sig.l, &phases, cfg.m, Execution::Sequential);
    let rows = |u: &Mat<Complex64>| (0..u.nrows()).map(|i| (0..u.ncols()).map(|j| u[(i, j)]).collect()).collect();
    (rows(&u0), rows(&u1))
}

fn empty_set(sig: &SampledSignal, cfg: &InversionConfig) -> SpectralLineSet {
    SpectralLineSet {
        meta: LineSetMeta {
            version: crate::VERSION.into(),
            window: cfg.window,
            j: cfg.j,
            m: cfg.m,
            tau: sig.tau,
            sigma: sig.meta.sigma,
            l: sig.l,
            signal_hash: None,
        },
        lines: Vec::new(),
    }
}

/// Filter-diagonalization fit of `sig` inside `cfg.window`.
pub fn invert(sig: &SampledSignal, cfg: &InversionConfig, exec: Execution) -> Result<SpectralLineSet> {
    validate(sig, cfg)?;
    let l = sig.l;
    let m = cfg.m;
    let tau = sig.tau;
    let c = model_samples(sig, 2 * m + 2);
    let ws = basis(cfg);
    let phases: Vec<f64> = ws.iter().map(|w| tau * w).collect();
    let (u0, u1) = u_matrices(&c, l, &phases, m, exec);
    let k = u0.nrows();
    let mut out = empty_set(sig, cfg);

    let svd = u0
        .svd()
        .map_err(|e| Error::Eigen(format!("SVD of U0 ({k}x{k}) failed: {e:?}")))?;
    let s = svd.S().column_vector();
    let s_max = (0..k).map(|i| s[i].re).fold(0.0, f64::max);
    let scale = c.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max);
    if !(s_max > 0.0) || s_max <= 1e-300 || scale == 0.0 {
        log::info!("U0 vanishes in window {:?}; no lines", cfg.window);
        return Ok(out);
    }
    let keep: Vec<usize> = (0..k).filter(|&i| s[i].re > cfg.svd_cutoff * s_max).collect();
    let r = keep.len();
    let s_min = keep.iter().map(|&i| s[i].re).fold(f64::INFINITY, f64::min);
    log::debug!("window {:?}: K = {k}, kept {r} singular values, condition {:e}", cfg.window, s_max / s_min);

    // Restricted problem: (S_r^-1 W_r^H U1 V_r) y = u y, eigenvector B = V_r y.
    let (wm, vm) = (svd.U(), svd.V());
    let vr = Mat::<Complex64>::from_fn(k, r, |i, q| vm[(i, keep[q])]);
    let wr_h = Mat::<Complex64>::from_fn(r, k, |q, i| wm[(i, keep[q])].conj() / s[keep[q]].re);
    let a = &wr_h * (&u1 * &vr);
    let eig = a.eigen().map_err(|e| {
        Error::Eigen(format!(
            "eigensolver failed on the {r}x{r} restricted problem (K = {k}, condition {:e}): {e:?}",
            s_max / s_min
        ))
    })?;
    let (vals, vecs) = (eig.S().column_vector(), eig.U());

    // Amplitude vectors (Phi_a, Psi_(j'a')) = sum_n x_j'^n c_a'a(n).
    let proj: Vec<Vec<Complex64>> = exec.map(&phases, |ph| {
        let pw = unit_powers(*ph, m + 1);
        (0..l * l)
            .map(|ab| (0..=m).map(|n| pw[n] * c[ab][n]).sum())
            .collect()
    });
    let sigma = sig.meta.sigma;
    for q in 0..r {
        let u = vals[q];
        if u.norm() == 0.0 {
            continue;
        }
        let w = I * u.ln() / tau;
        if !(w.re >= cfg.window.0 && w.re <= cfg.window.1 && w.im.abs() <= cfg.accept_im) {
            continue;
        }
        let bvec: Vec<Complex64> = (0..k).map(|i| (0..r).map(|t| vr[(i, t)] * vecs[(t, q)]).sum()).collect();
        let mut norm = ZERO;
        for i in 0..k {
            let row: Complex64 = (0..k).map(|t| u0[(i, t)] * bvec[t]).sum();
            norm += bvec[i] * row;
        }
        if norm.norm() == 0.0 {
            continue;
        }
        let inv = norm.sqrt().inv();
        let deconv = (sigma * sigma * w * w / 4.0).exp();
        let b: Vec<Complex64> = (0..l)
            .map(|a| {
                let mut acc = ZERO;
                for jj in 0..cfg.j {
                    for a2 in 0..l {
                        acc += bvec[jj * l + a2] * proj[jj][a2 * l + a];
                    }
                }
                acc * inv * deconv
            })
            .collect();
        let mut line = SpectralLine {
            w,
            b,
            err_w: f64::NAN,
            err_b: f64::NAN,
        };
        line.fix_gauge();
        out.lines.push(line);
    }
    out.lines.sort_by(|x, y| x.w.re.total_cmp(&y.w.re));
    Ok(out)
}

/// Largest channel difference of two amplitude vectors after aligning
/// their signs.
fn amplitude_gap(a: &[Complex64], b: &[Complex64]) -> f64 {
    let gap = |sign: f64| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y * sign).norm())
            .fold(0.0, f64::max)
    };
    gap(1.0).min(gap(-1.0))
}

/// Keeps the lines of `a` that have a counterpart in `b` within `tol_w` in
/// `w` and `tol_b` in amplitude, recording those differences as errors.
pub fn cross_validate(a: &SpectralLineSet, b: &SpectralLineSet, tol_w: f64, tol_b: f64) -> SpectralLineSet {
    let lines = a
        .lines
        .iter()
        .filter_map(|x| {
            let y = b
                .lines
                .iter()
                .min_by(|p, q| (p.w - x.w).norm().total_cmp(&(q.w - x.w).norm()))?;
            let dw = (y.w - x.w).norm();
            let db = amplitude_gap(&x.b, &y.b);
            (dw <= tol_w && db <= tol_b).then(|| SpectralLine {
                err_w: dw,
                err_b: db,
                ..x.clone()
            })
        })
        .collect();
    SpectralLineSet {
        meta: a.meta.clone(),
        lines,
    }
}

/// Inverts at `M` and at `3M/4` and keeps the lines both agree on to
/// `accept_err` in `w`.
pub fn invert_validated(sig: &SampledSignal, cfg: &InversionConfig, exec: Execution) -> Result<SpectralLineSet> {
    let full = invert(sig, cfg, exec)?;
    let short_cfg = InversionConfig {
        m: cfg.m * 3 / 4,
        ..cfg.clone()
    };
    let short = invert(sig, &short_cfg, exec)?;
    Ok(cross_validate(&full, &short, cfg.accept_err, f64::INFINITY))
}

/// Splits `range` into windows of width at most `width` overlapping by 10%,
/// inverts them concurrently and merges the results. Each line is taken from
/// the window whose core (the window minus half of each overlap) contains
/// it.
pub fn invert_range(
    sig: &SampledSignal,
    range: (f64, f64),
    width: f64,
    template: &InversionConfig,
    validated: bool,
    exec: Execution,
) -> Result<SpectralLineSet> {
    let (lo, hi) = range;
    if !(lo > 0.0 && lo < hi && width > 0.0) {
        return Err(Error::InvalidInput(format!("bad range [{lo}, {hi}] or width {width}")));
    }
    check_nyquist(sig.tau, range)?;
    let n = ((hi - lo) / width).ceil().max(1.0) as usize;
    let step = (hi - lo) / n as f64;
    let pad = 0.05 * step;
    let windows: Vec<(f64, f64, f64, f64)> = (0..n)
        .map(|i| {
            let (a, b) = (lo + i as f64 * step, lo + (i + 1) as f64 * step);
            let core = (a, if i + 1 == n { hi } else { b });
            ((a - pad).max(f64::MIN_POSITIVE), b + pad, core.0, core.1)
        })
        .collect();
    let run = |&(a, b, _, _): &(f64, f64, f64, f64)| {
        let cfg = InversionConfig {
            window: (a, b),
            j: default_basis_size((a, b), template.m, sig.tau),
            ..template.clone()
        };
        // Windows run concurrently, so each inversion stays sequential.
        if validated {
            invert_validated(sig, &cfg, Execution::Sequential)
        } else {
            invert(sig, &cfg, Execution::Sequential)
        }
    };
    let results = exec.map(&windows, run);
    let mut out = empty_set(
        sig,
        &InversionConfig {
            window: range,
            j: default_basis_size(range, template.m, sig.tau),
            ..template.clone()
        },
    );
    for ((_, _, c0, c1), r) in windows.iter().zip(results) {
        let set = r?;
        out.lines.extend(
            set.lines
                .into_iter()
                .filter(|x| x.w.re >= *c0 && (x.w.re < *c1 || (*c1 == hi && x.w.re <= hi))),
        );
    }
    out.lines.sort_by(|x, y| x.w.re.total_cmp(&y.w.re));
    Ok(out)
}

/// `4 pi rho`, with `rho` the line density of a trial inversion, as a
/// suggestion for the signal length. `None` with fewer than two lines.
pub fn recommend_signal_length(lines: &SpectralLineSet, window: (f64, f64)) -> Option<f64> {
    let count = lines
        .lines
        .iter()
        .filter(|x| x.w.re >= window.0 && x.w.re <= window.1)
        .count();
    let width = window.1 - window.0;
    (count >= 2 && width > 0.0).then(|| 2.0 * TAU * count as f64 / width)
}

/// `n` lines with `Re w` uniform in `range`, pairwise at least `min_gap`
/// apart, and `L` real amplitudes with magnitude uniform in `mag` and random
/// sign. Deterministic in `seed`.
pub fn random_lines(seed: u64, n: usize, range: (f64, f64), mag: (f64, f64), l: usize, min_gap: f64) -> Vec<SpectralLine> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut ws: Vec<f64> = Vec::with_capacity(n);
    let mut tries = 0;
    while ws.len() < n {
        tries += 1;
        assert!(tries < 1000 * n.max(1), "cannot place {n} lines {min_gap} apart in {range:?}");
        let w = rng.gen_range(range.0..range.1);
        if ws.iter().all(|x| (x - w).abs() >= min_gap) {
            ws.push(w);
        }
    }
    ws.sort_by(f64::total_cmp);
    ws.into_iter()
        .map(|w| {
            let b: Vec<f64> = (0..l)
                .map(|_| {
                    let x = rng.gen_range(mag.0..mag.1);
                    if rng.gen_bool(0.5) {
                        -x
                    } else {
                        x
                    }
                })
                .collect();
            let mut line = SpectralLine::real(w, &b);
            line.fix_gauge();
            line
        })
        .collect()
}

#[cfg(test)]
mod tests;
