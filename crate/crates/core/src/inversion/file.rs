use std::path::Path;

use num_complex::Complex64;

use super::{LineSetMeta, SpectralLine, SpectralLineSet};
use crate::hash::fmt_f64;
use crate::textfile::{self, field, header_value};
use crate::{Error, Result};

pub const KIND: &str = "lines";

pub fn render_lines(set: &SpectralLineSet) -> (String, String) {
    let m = &set.meta;
    let header = [
        ("version", m.version.clone()),
        ("window", format!("{} {}", fmt_f64(m.window.0), fmt_f64(m.window.1))),
        ("J", m.j.to_string()),
        ("M", m.m.to_string()),
        ("tau", fmt_f64(m.tau)),
        ("sigma", fmt_f64(m.sigma)),
        ("L", m.l.to_string()),
        ("signal_sha256", m.signal_hash.clone().unwrap_or_else(|| "none".into())),
        ("columns", "re_w im_w (re_b im_b) per channel err_w err_b".into()),
    ];
    let rows: Vec<String> = set
        .lines
        .iter()
        .map(|x| {
            let mut f = vec![fmt_f64(x.w.re), fmt_f64(x.w.im)];
            for b in &x.b {
                f.push(fmt_f64(b.re));
                f.push(fmt_f64(b.im));
            }
            f.push(fmt_f64(x.err_w));
            f.push(fmt_f64(x.err_b));
            f.join(" ")
        })
        .collect();
    textfile::render(KIND, &header, &rows)
}

pub fn write_lines(path: &Path, set: &SpectralLineSet) -> Result<String> {
    let (text, hash) = render_lines(set);
    std::fs::write(path, text)?;
    Ok(hash)
}

pub fn read_lines(path: &Path) -> Result<(SpectralLineSet, String)> {
    let doc = textfile::read(path, KIND)?;
    let window: String = header_value(&doc, path, "window")?;
    let mut ws = window.split_whitespace();
    let window = (
        field::<f64>(path, 1, "window", ws.next())?,
        field::<f64>(path, 1, "window", ws.next())?,
    );
    let l: usize = header_value(&doc, path, "L")?;
    let meta = LineSetMeta {
        version: header_value(&doc, path, "version")?,
        window,
        j: header_value(&doc, path, "J")?,
        m: header_value(&doc, path, "M")?,
        tau: header_value(&doc, path, "tau")?,
        sigma: header_value(&doc, path, "sigma")?,
        l,
        signal_hash: doc.get("signal_sha256").filter(|v| *v != "none").map(str::to_string),
    };
    let mut lines = Vec::with_capacity(doc.rows.len());
    for (line, text) in &doc.rows {
        let mut t = text.split_whitespace();
        let mut next = |name: &str| field::<f64>(path, *line, name, t.next());
        let w = Complex64::new(next("re_w")?, next("im_w")?);
        let b = (0..l)
            .map(|_| Ok(Complex64::new(next("re_b")?, next("im_b")?)))
            .collect::<Result<Vec<_>>>()?;
        let (err_w, err_b) = (next("err_w")?, next("err_b")?);
        if t.next().is_some() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: *line,
                msg: "trailing fields".into(),
            });
        }
        lines.push(SpectralLine { w, b, err_w, err_b });
    }
    Ok((SpectralLineSet { meta, lines }, doc.hash))
}
