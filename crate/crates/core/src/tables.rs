//! Size and expansion tables with table, CSV and JSON renderings.

use std::fmt::Write as _;
use std::str::FromStr;

use serde_json::{Map, Value};

use crate::config::Catalog;
use crate::error::{Error, Result};
use crate::params::{
    ciphertext_size_bytes, expansion_factor, fragment_count, payload_bytes, HeScheme, ParamSetName,
    BSM_PLAINTEXT_BYTES, DEFAULT_SLOT_BITS,
};
use crate::scalar::round_reported;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Table,
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(OutputFormat::Table),
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Config(format!("unknown output format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(u64),
    /// Value with the number of decimals to display.
    Fixed(f64, u32),
}

impl Cell {
    fn display(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(v) => v.to_string(),
            Cell::Fixed(v, d) => format!("{v:.prec$}", prec = *d as usize),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Int(v) => Value::from(*v),
            Cell::Fixed(v, 0) => Value::from(*v as i64),
            Cell::Fixed(v, _) => Value::from(*v),
        }
    }
}

/// Rows of cells under named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn render(&self, fmt: OutputFormat) -> String {
        match fmt {
            OutputFormat::Table => self.render_text(),
            OutputFormat::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(&self.columns).expect("in-memory write");
                for row in &self.rows {
                    w.write_record(row.iter().map(Cell::display)).expect("in-memory write");
                }
                String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
            }
            OutputFormat::Json => {
                let rows: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|row| {
                        let obj: Map<String, Value> =
                            self.columns.iter().zip(row).map(|(c, v)| (c.to_string(), v.json())).collect();
                        Value::Object(obj)
                    })
                    .collect();
                serde_json::to_string_pretty(&rows).expect("json") + "\n"
            }
        }
    }

    fn render_text(&self) -> String {
        let cells: Vec<Vec<String>> = self.rows.iter().map(|r| r.iter().map(Cell::display).collect()).collect();
        let widths: Vec<usize> = self
            .columns
            .iter()
            .enumerate()
            .map(|(i, c)| cells.iter().map(|r| r[i].len()).chain([c.len()]).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        let line = |out: &mut String, items: Vec<&str>| {
            let parts: Vec<String> = items
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (s, w))| if i == 0 { format!("{s:<w$}") } else { format!("{s:>w$}") })
                .collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        line(&mut out, self.columns.clone());
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        line(&mut out, rule.iter().map(String::as_str).collect());
        for r in &cells {
            line(&mut out, r.iter().map(String::as_str).collect());
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SizeRow {
    pub param_set: ParamSetName,
    pub lambda: u32,
    pub ell: usize,
    pub payload_bytes: usize,
    pub ciphertext_bytes: usize,
}

pub fn size_rows(cat: &Catalog) -> Vec<SizeRow> {
    cat.params()
        .map(|p| SizeRow {
            param_set: p.name,
            lambda: p.lambda,
            ell: p.ell,
            payload_bytes: payload_bytes(p.ell, DEFAULT_SLOT_BITS),
            ciphertext_bytes: ciphertext_size_bytes(p),
        })
        .collect()
}

pub fn sizes_table(rows: &[SizeRow]) -> Table {
    Table {
        columns: vec!["param_set", "lambda", "ell", "payload_bytes", "ciphertext_bytes"],
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    Cell::Text(r.param_set.to_string()),
                    Cell::Int(r.lambda.into()),
                    Cell::Int(r.ell as u64),
                    Cell::Int(r.payload_bytes as u64),
                    Cell::Int(r.ciphertext_bytes as u64),
                ]
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionRow {
    pub scheme: String,
    pub plaintext_bytes: u64,
    pub ciphertext_bytes: u64,
    pub expansion_exact: f64,
    /// Decimals shown: whole numbers for pure HE, one place for the cipher.
    pub decimals: u32,
    pub fragments: u64,
}

impl ExpansionRow {
    pub fn expansion(&self) -> f64 {
        round_reported(self.expansion_exact, self.decimals)
    }
}

const EXPANSION_SYMMETRIC_ROWS: [ParamSetName; 3] = [ParamSetName::Par80S, ParamSetName::Par80M, ParamSetName::Par80L];

/// Pure-HE rows for one 200-byte BSM, then the 80-bit symmetric rows.
pub fn expansion_rows(cat: &Catalog, mtu: u64, overhead: u64) -> Result<Vec<ExpansionRow>> {
    let mut rows = Vec::new();
    for scheme in HeScheme::PURE_HE {
        let ct = cat.profile(scheme).ciphertext_bytes;
        rows.push(ExpansionRow {
            scheme: scheme.label().to_string(),
            plaintext_bytes: BSM_PLAINTEXT_BYTES,
            ciphertext_bytes: ct,
            expansion_exact: expansion_factor(ct, BSM_PLAINTEXT_BYTES)?,
            decimals: 0,
            fragments: fragment_count(ct, mtu, overhead)?,
        });
    }
    for name in EXPANSION_SYMMETRIC_ROWS {
        let p = cat.param(name);
        let pt = payload_bytes(p.ell, DEFAULT_SLOT_BITS) as u64;
        let ct = ciphertext_size_bytes(&p) as u64;
        rows.push(ExpansionRow {
            scheme: format!("Rubato {name}"),
            plaintext_bytes: pt,
            ciphertext_bytes: ct,
            expansion_exact: expansion_factor(ct, pt)?,
            decimals: 1,
            fragments: fragment_count(ct, mtu, overhead)?,
        });
    }
    Ok(rows)
}

pub fn expansion_table(rows: &[ExpansionRow]) -> Table {
    Table {
        columns: vec!["scheme", "plaintext_bytes", "ciphertext_bytes", "expansion", "fragments"],
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    Cell::Text(r.scheme.clone()),
                    Cell::Int(r.plaintext_bytes),
                    Cell::Int(r.ciphertext_bytes),
                    Cell::Fixed(r.expansion(), r.decimals),
                    Cell::Int(r.fragments),
                ]
            })
            .collect(),
    }
}
