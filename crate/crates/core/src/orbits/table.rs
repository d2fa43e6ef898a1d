use std::path::Path;

use super::{ClosedOrbit, MaslovRule};
use crate::hash::fmt_f64;
use crate::textfile::{self, field, header_value};
use crate::Result;

pub const KIND: &str = "orbit-table";
const COLUMNS: &str = "id primitive_id repetition theta_i theta_f s m12 maslov closure_residual";

#[derive(Debug, Clone, PartialEq)]
pub struct TableMeta {
    pub version: String,
    pub scaled_energy: f64,
    pub s_max: f64,
    pub n_seeds: usize,
    pub maslov_rule: MaslovRule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrbitTable {
    pub meta: TableMeta,
    pub orbits: Vec<ClosedOrbit>,
    /// Content hash of the file the table was read from or written to.
    pub hash: String,
}

fn row(o: &ClosedOrbit) -> String {
    format!(
        "{} {} {} {} {} {} {} {} {}",
        o.id,
        o.primitive_id,
        o.repetition,
        fmt_f64(o.theta_i),
        fmt_f64(o.theta_f),
        fmt_f64(o.s),
        fmt_f64(o.m12),
        o.maslov,
        fmt_f64(o.closure_residual)
    )
}

pub fn render_table(meta: &TableMeta, orbits: &[ClosedOrbit]) -> (String, String) {
    let header = [
        ("version", meta.version.clone()),
        ("scaled_energy", fmt_f64(meta.scaled_energy)),
        ("s_max", fmt_f64(meta.s_max)),
        ("n_seeds", meta.n_seeds.to_string()),
        ("maslov_rule", meta.maslov_rule.name().to_string()),
        ("columns", COLUMNS.to_string()),
    ];
    let rows: Vec<String> = orbits.iter().map(row).collect();
    textfile::render(KIND, &header, &rows)
}

/// Writes the table and returns its content hash.
pub fn write_table(path: &Path, meta: &TableMeta, orbits: &[ClosedOrbit]) -> Result<String> {
    let (text, hash) = render_table(meta, orbits);
    std::fs::write(path, text)?;
    Ok(hash)
}

pub fn read_table(path: &Path) -> Result<OrbitTable> {
    let doc = textfile::read(path, KIND)?;
    let meta = TableMeta {
        version: header_value(&doc, path, "version")?,
        scaled_energy: header_value(&doc, path, "scaled_energy")?,
        s_max: header_value(&doc, path, "s_max")?,
        n_seeds: header_value(&doc, path, "n_seeds")?,
        maslov_rule: header_value(&doc, path, "maslov_rule")?,
    };
    let mut orbits = Vec::with_capacity(doc.rows.len());
    for (line, text) in &doc.rows {
        let mut t = text.split_whitespace();
        macro_rules! f {
            ($name:literal) => {
                field(path, *line, $name, t.next())?
            };
        }
        orbits.push(ClosedOrbit {
            id: f!("id"),
            primitive_id: f!("primitive_id"),
            repetition: f!("repetition"),
            theta_i: f!("theta_i"),
            theta_f: f!("theta_f"),
            s: f!("s"),
            m12: f!("m12"),
            maslov: f!("maslov"),
            closure_residual: f!("closure_residual"),
        });
    }
    Ok(OrbitTable {
        meta,
        orbits,
        hash: doc.hash,
    })
}
