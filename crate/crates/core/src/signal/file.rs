use std::path::Path;

use num_complex::Complex64;

use super::{SampledSignal, SignalMeta, SignalSource};
use crate::angular::AngularFunction;
use crate::hash::fmt_f64;
use crate::textfile::{self, field, header_value};
use crate::{Error, Result};

pub const KIND: &str = "signal";

fn opt_f64(x: Option<f64>) -> String {
    x.map_or_else(|| "none".into(), fmt_f64)
}

pub fn render_signal(sig: &SampledSignal) -> (String, String) {
    let m = &sig.meta;
    let channels: Vec<String> = m.channels.iter().map(|c| c.to_string()).collect();
    let header = [
        ("version", m.version.clone()),
        ("source", m.source.as_str().to_string()),
        ("tau", fmt_f64(sig.tau)),
        ("n", sig.len().to_string()),
        ("L", sig.l.to_string()),
        ("sigma", fmt_f64(m.sigma)),
        ("scaled_energy", opt_f64(m.scaled_energy)),
        ("channels", if channels.is_empty() { "none".into() } else { channels.join(" ") }),
        ("orbit_table_sha256", m.orbit_table_hash.clone().unwrap_or_else(|| "none".into())),
        ("layout", "re im per (a, b) in row-major order".into()),
    ];
    let rows: Vec<String> = (0..sig.len())
        .map(|n| {
            sig.sample(n)
                .iter()
                .map(|z| format!("{} {}", fmt_f64(z.re), fmt_f64(z.im)))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    textfile::render(KIND, &header, &rows)
}

/// Writes the signal and returns its content hash.
pub fn write_signal(path: &Path, sig: &SampledSignal) -> Result<String> {
    let (text, hash) = render_signal(sig);
    std::fs::write(path, text)?;
    Ok(hash)
}

/// Reads a signal and returns it with its content hash.
pub fn read_signal(path: &Path) -> Result<(SampledSignal, String)> {
    let doc = textfile::read(path, KIND)?;
    let tau: f64 = header_value(&doc, path, "tau")?;
    let n: usize = header_value(&doc, path, "n")?;
    let l: usize = header_value(&doc, path, "L")?;
    let none_or = |key: &str| doc.get(key).filter(|v| *v != "none");
    let scaled_energy = none_or("scaled_energy")
        .map(|v| field::<f64>(path, 1, "scaled_energy", Some(v)))
        .transpose()?;
    let channels = none_or("channels")
        .map(|v| v.split_whitespace().map(str::parse).collect::<Result<Vec<AngularFunction>>>())
        .transpose()?
        .unwrap_or_default();
    let meta = SignalMeta {
        version: header_value(&doc, path, "version")?,
        source: header_value::<String>(&doc, path, "source")?.parse::<SignalSource>()?,
        scaled_energy,
        sigma: header_value(&doc, path, "sigma")?,
        channels,
        orbit_table_hash: none_or("orbit_table_sha256").map(str::to_string),
    };
    if doc.rows.len() != n {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: doc.rows.last().map_or(1, |r| r.0),
            msg: format!("expected {n} samples, found {}", doc.rows.len()),
        });
    }
    let mut data = Vec::with_capacity(n * l * l);
    for (line, text) in &doc.rows {
        let mut t = text.split_whitespace();
        for _ in 0..l * l {
            let re: f64 = field(path, *line, "re", t.next())?;
            let im: f64 = field(path, *line, "im", t.next())?;
            data.push(Complex64::new(re, im));
        }
        if t.next().is_some() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: *line,
                msg: "trailing fields".into(),
            });
        }
    }
    Ok((SampledSignal { tau, l, data, meta }, doc.hash))
}
