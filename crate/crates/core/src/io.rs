//! Tabular output: CSV (LF endings, header row) and an equivalent JSON form.
//!
//! Every table can carry a provenance line, written to CSV as a leading
//! `# config_sha256=<hex>,seed=<n>` comment.

use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::eigen::EigRow;
use crate::error::{Error, Result};
use crate::evolution::{EvolutionResult, SteadyRow};
use crate::trajectories::TrajectoryEnsemble;

pub const EIGS_HEADER: [&str; 5] = ["delta", "J", "re_dlam", "im_dlam", "overlap"];
pub const EVOLUTION_HEADER: [&str; 10] = ["t", "rho_ff", "rho_ee", "re_rho_ef", "im_rho_ef", "x", "y", "z", "pfn", "weight"];
pub const ENSEMBLE_HEADER: [&str; 10] = ["t", "n_surviving", "x", "y", "z", "pfn", "se_x", "se_y", "se_z", "se_pfn"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn comment(&self) -> String {
        match self.seed {
            Some(s) => format!("# config_sha256={},seed={s}", self.config_sha256),
            None => format!("# config_sha256={}", self.config_sha256),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Bool(bool),
    Text(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(x) if *x != 0.0 && x.is_finite() && !(1e-5..1e16).contains(&x.abs()) => format!("{x:e}"),
            Cell::Num(x) => format!("{x}"),
            Cell::Int(n) => n.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => {
                if s.contains([',', '"', '\n']) {
                    format!("\"{}\"", s.replace('"', "\"\""))
                } else {
                    s.clone()
                }
            }
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(x) if x.is_finite() => json!(x),
            Cell::Num(_) => Value::Null,
            Cell::Int(n) => json!(n),
            Cell::Bool(b) => json!(b),
            Cell::Text(s) => json!(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(n: usize) -> Self {
        Cell::Int(n as i64)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Bool(b)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut w: W, provenance: Option<&Provenance>) -> std::io::Result<()> {
        if let Some(p) = provenance {
            writeln!(w, "{}", p.comment())?;
        }
        writeln!(w, "{}", self.header.join(","))?;
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(Cell::csv).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self, provenance: Option<&Provenance>) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, provenance).expect("writing to memory");
        String::from_utf8(buf).expect("CSV output is UTF-8")
    }

    /// JSON document `{provenance, columns, rows}`; non-finite numbers become `null`.
    pub fn to_json(&self, provenance: Option<&Provenance>) -> Value {
        let rows: Vec<Value> = self.rows.iter().map(|r| Value::Array(r.iter().map(Cell::json).collect())).collect();
        json!({ "provenance": provenance, "columns": self.header, "rows": rows })
    }
}

pub fn eigs_table(rows: &[EigRow]) -> Table {
    let mut t = Table::new(&EIGS_HEADER);
    for r in rows {
        t.push(vec![r.delta.into(), r.j.into(), r.re_dlam.into(), r.im_dlam.into(), r.overlap.into()]);
    }
    t
}

pub fn evolution_table(r: &EvolutionResult) -> Table {
    let mut t = Table::new(&EVOLUTION_HEADER);
    for i in 0..r.len() {
        let b = &r.blocks[i];
        let v = &r.bloch[i];
        t.push(vec![
            r.times[i].into(),
            b.rho_ff.into(),
            b.rho_ee.into(),
            b.rho_ef.re.into(),
            b.rho_ef.im.into(),
            v.x.into(),
            v.y.into(),
            v.z.into(),
            r.pfn[i].into(),
            r.weight[i].into(),
        ]);
    }
    t
}

/// Post-selected ensemble summary; times without survivors get `NaN` statistics.
pub fn ensemble_table(e: &TrajectoryEnsemble) -> Table {
    let mut t = Table::new(&ENSEMBLE_HEADER);
    for i in 0..e.times.len() {
        let Some(c) = e.conditional[i] else {
            let mut row = vec![e.times[i].into(), e.n_surviving[i].into()];
            row.extend((0..8).map(|_| Cell::Num(f64::NAN)));
            t.push(row);
            continue;
        };
        t.push(vec![
            e.times[i].into(),
            e.n_surviving[i].into(),
            c.bloch.x.into(),
            c.bloch.y.into(),
            c.bloch.z.into(),
            c.pfn.into(),
            c.se.x.into(),
            c.se.y.into(),
            c.se.z.into(),
            c.se_pfn.into(),
        ]);
    }
    t
}

pub fn steady_table(rows: &[SteadyRow]) -> Table {
    let mut t = Table::new(&["delta", "J", "x", "y", "z", "weight", "insufficient"]);
    for r in rows {
        t.push(vec![r.delta.into(), r.j.into(), r.x.into(), r.y.into(), r.z.into(), r.weight.into(), r.insufficient.into()]);
    }
    t
}

/// Line-delimited JSON, one object per trajectory that jumped.
pub fn write_jump_log<W: Write>(mut w: W, e: &TrajectoryEnsemble) -> Result<()> {
    let log = e.jump_log.as_ref().ok_or_else(|| Error::Precondition("ensemble was run without a jump log".into()))?;
    for entry in log {
        let line = serde_json::to_string(entry).map_err(|err| Error::Precondition(err.to_string()))?;
        writeln!(w, "{line}").map_err(|err| Error::Precondition(err.to_string()))?;
    }
    Ok(())
}
