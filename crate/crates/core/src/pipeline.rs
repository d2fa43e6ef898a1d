//! Configuration and stage runners for the full pipeline.
//!
//! Every stage reads its input artifact from disk and writes its output into
//! `output_dir`:
//!
//! | stage    | reads                  | writes                                              |
//! |----------|------------------------|-----------------------------------------------------|
//! | orbits   | config                 | `orbits.txt`                                        |
//! | signal   | `orbits.txt`           | `signal.txt`, `recurrence.txt`, `recurrence.svg`    |
//! | invert   | `signal.txt`           | `lines_<lo>-<hi>.txt` per window                    |
//! | spectrum | `lines_<lo>-<hi>.txt`  | `sticks_<lo>-<hi>_c<a>.txt` and `.svg` per channel  |
//!
//! With a `[synthetic]` section the signal stage writes a test signal built
//! from random lines instead (and `generator.txt` with those lines), so the
//! later stages can be checked against a known answer.
//!
//! Auto sampling: `tau = min(0.05, pi / (1.2 w_max))` with `w_max` the
//! largest window edge, and `sigma = 2 tau`.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::angular::{swave_default, AngularFunction};
use crate::dynamics::{IntegrateOptions, ScaledEnergy};
use crate::inversion::{self, random_lines, InversionConfig, SpectralLine, SpectralLineSet};
use crate::orbits::{self, MaslovRule, SearchOptions, TableMeta};
use crate::par::Execution;
use crate::plot::{self, Series};
use crate::signal::{self, SampledSignal, SignalSource};
use crate::spectrum::{self, StickSpectrum};
use crate::{Error, Result};

pub const ORBITS_FILE: &str = "orbits.txt";
pub const SIGNAL_FILE: &str = "signal.txt";
pub const GENERATOR_FILE: &str = "generator.txt";

/// A real setting or `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Setting {
    Value(f64),
    Auto(AutoKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoKeyword {
    Auto,
}

impl Default for Setting {
    fn default() -> Self {
        Setting::Auto(AutoKeyword::Auto)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceOverrides {
    pub rtol: f64,
    pub atol: f64,
    pub max_energy_drift: f64,
    pub svd_cutoff: f64,
    pub accept_im: f64,
    /// Largest `|dw|` between the full and the shortened inversion. Defaults
    /// to 1e-6 for synthetic signals and 1e-3 for closed-orbit signals.
    pub accept_err: Option<f64>,
    /// Windows are split into pieces at most this wide.
    pub window_width: f64,
    /// Keep only lines confirmed by a second inversion at `3M/4`.
    pub cross_validate: bool,
}

impl Default for ToleranceOverrides {
    fn default() -> Self {
        let t = crate::dynamics::Tolerances::default();
        ToleranceOverrides {
            rtol: t.rtol,
            atol: t.atol,
            max_energy_drift: IntegrateOptions::default().max_energy_drift,
            svd_cutoff: 1e-10,
            accept_im: 1e-3,
            accept_err: None,
            window_width: 2.0,
            cross_validate: true,
        }
    }
}

/// Random lines for a test signal, `n_lines` per window.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_lines: usize,
    pub amplitude: [f64; 2],
    pub min_gap: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_lines: 50,
            amplitude: [0.1, 2.0],
            min_gap: 0.03,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub scaled_energy: f64,
    /// Largest scaled action of the orbit search and the signal.
    pub s_max: f64,
    pub n_seeds: usize,
    pub theta_range: [f64; 2],
    pub tau: Setting,
    pub sigma: Setting,
    pub windows: Vec<[f64; 2]>,
    /// `2p0-parallel`, `s-wave`, or `label:c0,c1,...` in Legendre
    /// coefficients.
    pub channels: Vec<String>,
    pub output_dir: PathBuf,
    /// Seed for synthetic test signals.
    pub rng_seed: u64,
    /// Worker threads; 0 lets the runtime decide, 1 runs sequentially.
    pub threads: usize,
    /// `regularized` or `focal-zeros`.
    pub maslov_rule: String,
    pub tolerances: ToleranceOverrides,
    pub synthetic: Option<SyntheticConfig>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            scaled_energy: -0.7,
            s_max: TAU * 20.0,
            n_seeds: 20_000,
            theta_range: [0.0, PI],
            tau: Setting::default(),
            sigma: Setting::default(),
            windows: vec![[16.0, 21.0], [34.0, 40.0]],
            channels: vec!["2p0-parallel".into(), "s-wave".into()],
            output_dir: PathBuf::from("out"),
            rng_seed: 0,
            threads: 0,
            maslov_rule: MaslovRule::default().name().into(),
            tolerances: ToleranceOverrides::default(),
            synthetic: None,
        }
    }
}

pub fn parse_channel(spec: &str) -> Result<AngularFunction> {
    match spec {
        "2p0-parallel" => Ok(AngularFunction::build_2p0_parallel()),
        "s-wave" => AngularFunction::build_swave(swave_default()),
        _ => spec.parse(),
    }
}

/// `16-21` for the window `[16, 21]`.
pub fn window_tag(w: (f64, f64)) -> String {
    format!("{}-{}", w.0, w.1)
}

impl PipelineConfig {
    pub fn exec(&self) -> Execution {
        Execution::with_threads(self.threads)
    }

    pub fn energy(&self) -> Result<ScaledEnergy> {
        ScaledEnergy::new(self.scaled_energy)
    }

    pub fn windows(&self) -> Vec<(f64, f64)> {
        self.windows.iter().map(|w| (w[0], w[1])).collect()
    }

    pub fn channel_functions(&self) -> Result<Vec<AngularFunction>> {
        if self.channels.is_empty() {
            return Err(Error::InvalidInput("no channels configured".into()));
        }
        self.channels.iter().map(|c| parse_channel(c)).collect()
    }

    pub fn search_options(&self) -> Result<SearchOptions> {
        let defaults = SearchOptions::default();
        let t = &self.tolerances;
        let opts = SearchOptions {
            n_seeds: self.n_seeds,
            theta_range: (self.theta_range[0], self.theta_range[1]),
            maslov: self.maslov_rule.parse()?,
            integrate: IntegrateOptions {
                tol: crate::dynamics::Tolerances { rtol: t.rtol, atol: t.atol },
                max_energy_drift: t.max_energy_drift,
                ..defaults.integrate
            },
            exec: self.exec(),
            ..defaults
        };
        opts.validate()?;
        Ok(opts)
    }

    /// Resolved `(tau, sigma)`.
    pub fn sampling(&self) -> Result<(f64, f64)> {
        let w_max = self.windows.iter().map(|w| w[1]).fold(0.0, f64::max);
        let tau = match self.tau {
            Setting::Value(t) => t,
            Setting::Auto(_) if w_max > 0.0 => (PI / (1.2 * w_max)).min(0.05),
            Setting::Auto(_) => 0.05,
        };
        let sigma = match self.sigma {
            Setting::Value(s) => s,
            Setting::Auto(_) => 2.0 * tau,
        };
        if !(tau > 0.0 && tau.is_finite() && sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidInput(format!("bad sampling tau = {tau}, sigma = {sigma}")));
        }
        Ok((tau, sigma))
    }

    pub fn accept_err(&self, source: SignalSource) -> f64 {
        self.tolerances.accept_err.unwrap_or(match source {
            SignalSource::Synthetic => 1e-6,
            SignalSource::Semiclassical => 1e-3,
        })
    }

    /// Checks everything that does not need the filesystem.
    pub fn validate(&self) -> Result<()> {
        self.energy()?;
        if !(self.s_max > 0.0 && self.s_max.is_finite()) {
            return Err(Error::InvalidInput(format!("s_max = {} must be positive", self.s_max)));
        }
        if self.windows.is_empty() {
            return Err(Error::InvalidInput("no frequency windows configured".into()));
        }
        for w in &self.windows {
            if !(w[0] > 0.0 && w[0] < w[1] && w[1].is_finite()) {
                return Err(Error::InvalidInput(format!("bad window [{}, {}]", w[0], w[1])));
            }
        }
        if !(self.tolerances.window_width > 0.0) {
            return Err(Error::InvalidInput("window_width must be positive".into()));
        }
        self.channel_functions()?;
        self.search_options()?;
        let (tau, _) = self.sampling()?;
        for w in self.windows() {
            inversion::check_nyquist(tau, w)?;
        }
        Ok(())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }

    pub fn lines_path(&self, w: (f64, f64)) -> PathBuf {
        self.path(&format!("lines_{}.txt", window_tag(w)))
    }

    fn ensure_dir(&self) -> Result<()> {
        std::fs::create_dir_all(&self.output_dir)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrbitsReport {
    pub path: PathBuf,
    pub hash: String,
    pub primitive: usize,
    pub total: usize,
    pub by_repetition: BTreeMap<u32, usize>,
    pub s_range: (f64, f64),
    pub candidates: usize,
    pub rejected: usize,
}

impl fmt::Display for OrbitsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "orbit table {}", self.path.display())?;
        writeln!(f, "  primitive orbits   {}", self.primitive)?;
        writeln!(f, "  with repetitions   {}", self.total)?;
        let reps: Vec<String> = self.by_repetition.iter().map(|(k, n)| format!("{k}:{n}")).collect();
        writeln!(f, "  by repetition      {}", reps.join(" "))?;
        writeln!(
            f,
            "  action range       {:.6} .. {:.6} (s/2pi {:.6} .. {:.6})",
            self.s_range.0,
            self.s_range.1,
            self.s_range.0 / TAU,
            self.s_range.1 / TAU
        )?;
        write!(f, "  candidates         {} ({} rejected)", self.candidates, self.rejected)
    }
}

pub fn run_orbits(cfg: &PipelineConfig) -> Result<OrbitsReport> {
    cfg.validate()?;
    cfg.ensure_dir()?;
    let opts = cfg.search_options()?;
    let census = orbits::census(cfg.energy()?, cfg.s_max, &opts)?;
    for r in &census.rejected {
        log::debug!(
            "rejected bracket [{:.12}, {:.12}] near s = {:.6}: {}",
            r.candidate.lo,
            r.candidate.hi,
            r.candidate.s_guess,
            r.reason
        );
    }
    let meta = TableMeta {
        version: crate::VERSION.into(),
        scaled_energy: cfg.scaled_energy,
        s_max: cfg.s_max,
        n_seeds: cfg.n_seeds,
        maslov_rule: opts.maslov,
    };
    let path = cfg.path(ORBITS_FILE);
    let hash = orbits::write_table(&path, &meta, &census.orbits)?;
    let mut by_repetition = BTreeMap::new();
    for o in &census.orbits {
        *by_repetition.entry(o.repetition).or_insert(0) += 1;
    }
    let s_range = census
        .orbits
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), o| (a.min(o.s), b.max(o.s)));
    Ok(OrbitsReport {
        path,
        hash,
        primitive: census.primitive_count(),
        total: census.total(),
        by_repetition,
        s_range,
        candidates: census.candidates,
        rejected: census.rejected.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalReport {
    pub path: PathBuf,
    pub hash: String,
    pub source: SignalSource,
    pub samples: usize,
    pub channels: usize,
    pub tau: f64,
    pub sigma: f64,
}

impl fmt::Display for SignalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} signal {}: {} samples of {}x{}, tau {}, sigma {}",
            self.source.as_str(),
            self.path.display(),
            self.samples,
            self.channels,
            self.channels,
            self.tau,
            self.sigma
        )
    }
}

/// Builds the recurrence signal from `table` (default `output_dir/orbits.txt`),
/// or the synthetic test signal when configured.
pub fn run_signal(cfg: &PipelineConfig, table: Option<&Path>) -> Result<SignalReport> {
    cfg.validate()?;
    cfg.ensure_dir()?;
    let (tau, sigma) = cfg.sampling()?;
    let sig = match &cfg.synthetic {
        Some(syn) => synthetic_signal(cfg, syn, tau)?,
        None => {
            let path = table.map_or_else(|| cfg.path(ORBITS_FILE), Path::to_path_buf);
            let t = orbits::read_table(&path)?;
            if (t.meta.scaled_energy - cfg.scaled_energy).abs() > 0.0 {
                log::warn!(
                    "orbit table is for scaled energy {} but the config says {}",
                    t.meta.scaled_energy,
                    cfg.scaled_energy
                );
            }
            let s_max = cfg.s_max.min(t.meta.s_max);
            let mut sig = signal::build_signal(&t.orbits, &cfg.channel_functions()?, sigma, tau, s_max, cfg.exec())?;
            sig.meta.scaled_energy = Some(t.meta.scaled_energy);
            sig.meta.orbit_table_hash = Some(t.hash);
            sig
        }
    };
    let path = cfg.path(SIGNAL_FILE);
    let hash = signal::write_signal(&path, &sig)?;
    write_recurrence_plot(cfg, &sig)?;
    Ok(SignalReport {
        path,
        hash,
        source: sig.meta.source,
        samples: sig.len(),
        channels: sig.l,
        tau,
        sigma: sig.meta.sigma,
    })
}

/// Generator lines of the synthetic signal, window by window.
pub fn synthetic_lines(cfg: &PipelineConfig, syn: &SyntheticConfig) -> Vec<SpectralLine> {
    let l = cfg.channels.len().max(1);
    let mut lines: Vec<SpectralLine> = cfg
        .windows()
        .into_iter()
        .enumerate()
        .flat_map(|(i, w)| {
            let amp = (syn.amplitude[0], syn.amplitude[1]);
            random_lines(cfg.rng_seed.wrapping_add(i as u64), syn.n_lines, w, amp, l, syn.min_gap)
        })
        .collect();
    lines.sort_by(|a, b| a.w.re.total_cmp(&b.w.re));
    lines
}

fn synthetic_signal(cfg: &PipelineConfig, syn: &SyntheticConfig, tau: f64) -> Result<SampledSignal> {
    let lines = synthetic_lines(cfg, syn);
    let n = (cfg.s_max / tau).floor() as usize + 1;
    let sig = signal::synth_quantum_signal(&lines, tau, n)?;
    let gen = SpectralLineSet {
        meta: inversion::LineSetMeta {
            version: crate::VERSION.into(),
            window: (
                cfg.windows.iter().map(|w| w[0]).fold(f64::INFINITY, f64::min),
                cfg.windows.iter().map(|w| w[1]).fold(0.0, f64::max),
            ),
            j: 0,
            m: 0,
            tau,
            sigma: 0.0,
            l: sig.l,
            signal_hash: None,
        },
        lines,
    };
    inversion::write_lines(&cfg.path(GENERATOR_FILE), &gen)?;
    Ok(sig)
}

fn write_recurrence_plot(cfg: &PipelineConfig, sig: &SampledSignal) -> Result<()> {
    let l = sig.l;
    let pairs: Vec<(usize, usize)> = (0..l).flat_map(|a| (a..l).map(move |b| (a, b))).collect();
    let mut columns = vec!["s".to_string()];
    columns.extend(pairs.iter().map(|(a, b)| format!("abs_C{}{}", a + 1, b + 1)));
    let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
    let rows = (0..sig.len()).map(|n| {
        let mut r = vec![n as f64 * sig.tau];
        r.extend(pairs.iter().map(|&(a, b)| sig.get(n, a, b).norm()));
        r
    });
    std::fs::write(cfg.path("recurrence.txt"), plot::table(&cols, rows))?;
    let series: Vec<Series> = pairs
        .iter()
        .map(|&(a, b)| Series {
            label: format!("|C{}{}|", a + 1, b + 1),
            points: (0..sig.len()).map(|n| (n as f64 * sig.tau, sig.get(n, a, b).norm())).collect(),
        })
        .collect();
    let svg = plot::line_chart("recurrence signal", "scaled action s", "|C(s)|", &series);
    std::fs::write(cfg.path("recurrence.svg"), svg)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertReport {
    pub window: (f64, f64),
    pub path: PathBuf,
    pub hash: String,
    pub lines: usize,
    /// Against the generator of a synthetic signal: lines matched within
    /// `1e-6` and the largest `|dw|` among them.
    pub generator: Option<GeneratorMatch>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorMatch {
    pub expected: usize,
    pub matched: usize,
    pub max_dw: f64,
}

impl fmt::Display for InvertReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "window [{}, {}]: {} lines -> {}",
            self.window.0,
            self.window.1,
            self.lines,
            self.path.display()
        )?;
        if let Some(g) = &self.generator {
            write!(
                f,
                "; generator lines recovered {}/{} (max |dw| {:.2e})",
                g.matched, g.expected, g.max_dw
            )?;
        }
        Ok(())
    }
}

/// Each generator line in `window` against its nearest extracted line.
pub fn match_generator(found: &[SpectralLine], truth: &[SpectralLine], window: (f64, f64)) -> GeneratorMatch {
    let inside: Vec<&SpectralLine> = truth
        .iter()
        .filter(|t| t.w.re >= window.0 && t.w.re <= window.1)
        .collect();
    let mut matched = 0;
    let mut max_dw = 0.0f64;
    for t in &inside {
        let dw = found
            .iter()
            .map(|x| (x.w - t.w).norm())
            .fold(f64::INFINITY, f64::min);
        if dw <= 1e-6 {
            matched += 1;
            max_dw = max_dw.max(dw);
        }
    }
    GeneratorMatch {
        expected: inside.len(),
        matched,
        max_dw,
    }
}

/// Inverts every configured window of `signal` (default
/// `output_dir/signal.txt`).
pub fn run_invert(cfg: &PipelineConfig, signal_path: Option<&Path>) -> Result<Vec<InvertReport>> {
    cfg.validate()?;
    cfg.ensure_dir()?;
    let path = signal_path.map_or_else(|| cfg.path(SIGNAL_FILE), Path::to_path_buf);
    let (sig, sig_hash) = signal::read_signal(&path)?;
    let generator = match sig.meta.source {
        SignalSource::Synthetic => {
            let g = path.with_file_name(GENERATOR_FILE);
            g.exists().then(|| inversion::read_lines(&g)).transpose()?.map(|(s, _)| s.lines)
        }
        SignalSource::Semiclassical => None,
    };
    let t = &cfg.tolerances;
    let mut reports = Vec::new();
    for w in cfg.windows() {
        inversion::check_nyquist(sig.tau, w)?;
        let template = InversionConfig {
            svd_cutoff: t.svd_cutoff,
            accept_im: t.accept_im,
            accept_err: cfg.accept_err(sig.meta.source),
            ..InversionConfig::for_signal(&sig, w)
        };
        let mut set = inversion::invert_range(&sig, w, t.window_width, &template, t.cross_validate, cfg.exec())?;
        set.meta.signal_hash = Some(sig_hash.clone());
        let out = cfg.lines_path(w);
        let hash = inversion::write_lines(&out, &set)?;
        log::info!("window [{}, {}]: {} lines", w.0, w.1, set.len());
        reports.push(InvertReport {
            window: w,
            path: out,
            hash,
            lines: set.len(),
            generator: generator.as_ref().map(|g| match_generator(&set.lines, g, w)),
        });
    }
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub source: PathBuf,
    pub window: (f64, f64),
    pub channel: usize,
    pub path: PathBuf,
    pub spectrum: StickSpectrum,
}

impl fmt::Display for SpectrumReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (lo, hi) = self.window;
        write!(
            f,
            "channel {} window [{lo}, {hi}] ({:.3} T .. {:.3} T): {} sticks -> {}",
            self.channel,
            spectrum::field_of_w(lo),
            spectrum::field_of_w(hi),
            self.spectrum.sticks.len(),
            self.path.display()
        )?;
        if let Some(s) = self
            .spectrum
            .sticks
            .iter()
            .max_by(|a, b| a.strength.total_cmp(&b.strength))
        {
            write!(f, "; strongest at w = {:.6} ({:.4})", s.w, s.strength)?;
        }
        Ok(())
    }
}

/// Stick spectra of every channel of every line set. With no paths, the
/// configured windows' line sets in `output_dir` are used.
pub fn run_spectrum(cfg: &PipelineConfig, line_sets: &[PathBuf]) -> Result<Vec<SpectrumReport>> {
    cfg.ensure_dir()?;
    let paths: Vec<PathBuf> = if line_sets.is_empty() {
        cfg.windows().into_iter().map(|w| cfg.lines_path(w)).collect()
    } else {
        line_sets.to_vec()
    };
    let mut reports = Vec::new();
    for p in paths {
        let (set, hash) = inversion::read_lines(&p)?;
        let tag = window_tag(set.meta.window);
        for a in 0..set.meta.l {
            let spec = spectrum::assemble_stick_spectrum(&set.lines, a)?;
            let out = cfg.path(&format!("sticks_{tag}_c{a}.txt"));
            spectrum::write_sticks(&out, &spec, Some(&hash))?;
            let sticks: Vec<(f64, f64)> = spec.sticks.iter().map(|s| (s.w, s.strength)).collect();
            let svg = plot::stick_chart(
                &format!("channel {a}, w in [{}, {}]", set.meta.window.0, set.meta.window.1),
                "scaling parameter w",
                "strength",
                &sticks,
            );
            std::fs::write(out.with_extension("svg"), svg)?;
            reports.push(SpectrumReport {
                source: p.clone(),
                window: set.meta.window,
                channel: a,
                path: out,
                spectrum: spec,
            });
        }
    }
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub orbits: Option<OrbitsReport>,
    pub signal: SignalReport,
    pub inversions: Vec<InvertReport>,
    pub spectra: Vec<SpectrumReport>,
}

impl PipelineReport {
    pub fn rejected(&self) -> usize {
        self.orbits.as_ref().map_or(0, |o| o.rejected)
    }
}

impl fmt::Display for PipelineReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(o) = &self.orbits {
            writeln!(f, "{o}")?;
        }
        writeln!(f, "{}", self.signal)?;
        for r in &self.inversions {
            writeln!(f, "{r}")?;
        }
        for r in &self.spectra {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}

/// All stages in order. The orbit search is skipped for synthetic signals.
pub fn run_all(cfg: &PipelineConfig) -> Result<PipelineReport> {
    cfg.validate()?;
    let orbits = match cfg.synthetic {
        Some(_) => None,
        None => Some(run_orbits(cfg)?),
    };
    let signal = run_signal(cfg, None)?;
    let inversions = run_invert(cfg, None)?;
    let spectra = run_spectrum(cfg, &[])?;
    Ok(PipelineReport {
        orbits,
        signal,
        inversions,
        spectra,
    })
}

/// One checked link of the artifact chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainLink {
    pub file: PathBuf,
    pub parent: Option<PathBuf>,
}

/// Re-reads every artifact in `dir` (which checks each file's own hash) and
/// checks that the input hash recorded in each matches the file it names.
pub fn verify_chain(dir: &Path) -> Result<Vec<ChainLink>> {
    let mut links = Vec::new();
    let orbits_path = dir.join(ORBITS_FILE);
    let table_hash = if orbits_path.exists() {
        let t = orbits::read_table(&orbits_path)?;
        links.push(ChainLink {
            file: orbits_path.clone(),
            parent: None,
        });
        Some(t.hash)
    } else {
        None
    };
    let signal_path = dir.join(SIGNAL_FILE);
    let signal_hash = if signal_path.exists() {
        let (sig, hash) = signal::read_signal(&signal_path)?;
        let parent = match (&sig.meta.orbit_table_hash, &table_hash) {
            (Some(want), Some(have)) => {
                expect_hash(&signal_path, "orbit table", want, have)?;
                Some(orbits_path.clone())
            }
            (Some(want), None) => {
                return Err(Error::HashMismatch {
                    what: format!("orbit table of {}", signal_path.display()),
                    expected: want.clone(),
                    found: "missing file".into(),
                })
            }
            (None, _) => None,
        };
        links.push(ChainLink {
            file: signal_path.clone(),
            parent,
        });
        Some(hash)
    } else {
        None
    };

    let mut names: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    names.sort();
    let stem = |p: &Path, prefix: &str| {
        p.file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with(prefix))
    };
    let mut line_hashes = BTreeMap::new();
    for p in names.iter().filter(|p| stem(p, "lines_")) {
        let (set, hash) = inversion::read_lines(p)?;
        if let Some(want) = &set.meta.signal_hash {
            let have = signal_hash.as_ref().ok_or_else(|| Error::HashMismatch {
                what: format!("signal of {}", p.display()),
                expected: want.clone(),
                found: "missing file".into(),
            })?;
            expect_hash(p, "signal", want, have)?;
        }
        links.push(ChainLink {
            file: p.clone(),
            parent: set.meta.signal_hash.as_ref().map(|_| signal_path.clone()),
        });
        line_hashes.insert(hash, p.clone());
    }
    for p in names.iter().filter(|p| stem(p, "sticks_")) {
        let doc = crate::textfile::read(p, spectrum::KIND)?;
        let parent = match doc.get("lines_sha256") {
            Some("none") | None => None,
            Some(want) => Some(line_hashes.get(want).cloned().ok_or_else(|| Error::HashMismatch {
                what: format!("line set of {}", p.display()),
                expected: want.to_string(),
                found: "no matching file".into(),
            })?),
        };
        links.push(ChainLink { file: p.clone(), parent });
    }
    Ok(links)
}

fn expect_hash(file: &Path, what: &str, want: &str, have: &str) -> Result<()> {
    if want != have {
        return Err(Error::HashMismatch {
            what: format!("{what} of {}", file.display()),
            expected: want.to_string(),
            found: have.to_string(),
        });
    }
    Ok(())
}
