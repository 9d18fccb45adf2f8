//! Result-file ingestion (CSV and JSON) into [`BenchmarkRow`]s.
//!
//! Recognized columns, all optional except `scheme`:
//!
//! | column | meaning |
//! |---|---|
//! | `scheme` | scheme id, unique per file |
//! | `gsm8k`, `hellaswag`, `ifeval`, `mmlu`, `truthfulqa_mc2` | headline scores, percent |
//! | `ifeval_inst_loose`, `ifeval_inst_strict`, `ifeval_prompt_loose`, `ifeval_prompt_strict` | IFEval sub-scores, all four or none |
//! | `avg` | reported mean of the headline scores; checked, not stored |
//! | `ppl` | perplexity |
//! | `size_mib` | model size |
//! | `pp512`, `pp512_std`, `tg128`, `tg128_std` | throughput, tokens/s |
//! | `quant_seconds` | conversion time |
//!
//! Any other column must be numeric and is kept as an extra (for example
//! `gsm8k_strict` or `mmlu_stem`). Empty cells and JSON `null` mean absent.
//! Malformed rows are rejected individually and reported with their line
//! (CSV) or entry index (JSON); the remaining rows are kept.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use kquant_core::metrics::{avg_score, BenchmarkRow, Throughput};

pub const PUBLISHED_RESULTS_CSV: &str = include_str!("../data/published_results.csv");

/// Allowed gap between a reported `avg` and the recomputed mean of scores
/// that were themselves rounded to two decimals.
const AVG_SLACK: f64 = 0.006;

const IFEVAL_SUB: [&str; 4] = [
    "ifeval_inst_loose",
    "ifeval_inst_strict",
    "ifeval_prompt_loose",
    "ifeval_prompt_strict",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Line(usize),
    Entry(usize),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Line(n) => write!(f, "line {n}"),
            Location::Entry(n) => write!(f, "entry {n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    pub at: Location,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.at, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ingested {
    pub rows: Vec<BenchmarkRow>,
    pub rejected: Vec<RowError>,
}

#[derive(Debug, thiserror::Error)]
pub enum ResultsError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("CSV header: {0}")]
    Header(String),
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("JSON results must be an array of objects")]
    JsonShape,
    #[error("unsupported results extension `{0}` (use .csv or .json)")]
    Extension(String),
}

/// Builds one row from `(column, cell)` pairs; `None` cells are absent.
fn build_row<'a>(cells: impl Iterator<Item = (&'a str, Option<f64>)>, scheme: &str) -> Result<BenchmarkRow, String> {
    if scheme.trim().is_empty() {
        return Err("empty scheme".into());
    }
    let mut r = BenchmarkRow::new(scheme.trim());
    let mut sub: [Option<f64>; 4] = [None; 4];
    let (mut pp, mut pp_std, mut tg, mut tg_std) = (None, None, None, None);
    let mut reported_avg = None;
    let mut extra = BTreeMap::new();
    for (col, v) in cells {
        match col {
            "gsm8k" => r.gsm8k = v,
            "hellaswag" => r.hellaswag = v,
            "ifeval" => r.ifeval = v,
            "mmlu" => r.mmlu = v,
            "truthfulqa_mc2" => r.truthfulqa_mc2 = v,
            "ppl" => r.ppl = v,
            "size_mib" => r.size_mib = v,
            "quant_seconds" => r.quant_seconds = v,
            "avg" => reported_avg = v,
            "pp512" => pp = v,
            "pp512_std" => pp_std = v,
            "tg128" => tg = v,
            "tg128_std" => tg_std = v,
            c => {
                if let Some(i) = IFEVAL_SUB.iter().position(|s| *s == c) {
                    sub[i] = v;
                } else if let Some(v) = v {
                    extra.insert(c.to_string(), v);
                }
            }
        }
    }
    r.extra = extra;
    match sub.iter().filter(|s| s.is_some()).count() {
        0 => {}
        4 => r.ifeval_sub = Some(sub.map(Option::unwrap)),
        n => return Err(format!("{n} of 4 IFEval sub-scores given")),
    }
    let throughput = |name: &str, mean: Option<f64>, std: Option<f64>| match (mean, std) {
        (Some(mean), std) => Ok(Some(Throughput {
            mean,
            std: std.unwrap_or(0.0),
        })),
        (None, Some(_)) => Err(format!("{name}_std given without {name}")),
        (None, None) => Ok(None),
    };
    r.pp512 = throughput("pp512", pp, pp_std)?;
    r.tg128 = throughput("tg128", tg, tg_std)?;
    r.validate().map_err(|e| e.to_string())?;
    if let Some(reported) = reported_avg {
        let avg = avg_score(&r).map_err(|e| format!("avg given but {e}"))?;
        if (avg - reported).abs() > AVG_SLACK {
            return Err(format!("reported avg {reported} disagrees with recomputed {avg:.4}"));
        }
    }
    Ok(r)
}

fn push_unique(out: &mut Ingested, at: Location, row: Result<BenchmarkRow, String>) {
    match row {
        Ok(r) if out.rows.iter().any(|x| x.scheme == r.scheme) => out.rejected.push(RowError {
            at,
            message: format!("scheme `{}` appears more than once", r.scheme),
        }),
        Ok(r) => out.rows.push(r),
        Err(message) => out.rejected.push(RowError { at, message }),
    }
}

pub fn read_results_csv(text: &str) -> Result<Ingested, ResultsError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| ResultsError::Header(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let scheme_col = header
        .iter()
        .position(|h| h == "scheme")
        .ok_or_else(|| ResultsError::Header("no `scheme` column".into()))?;
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = header.iter().find(|h| !seen.insert(h.as_str())) {
        return Err(ResultsError::Header(format!("column `{dup}` appears twice")));
    }

    let mut out = Ingested::default();
    for rec in rdr.records() {
        let rec = match rec {
            Ok(rec) => rec,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line() as usize);
                out.rejected.push(RowError {
                    at: Location::Line(line),
                    message: e.to_string(),
                });
                continue;
            }
        };
        let at = Location::Line(rec.position().map_or(0, |p| p.line() as usize));
        let mut cells = Vec::with_capacity(header.len());
        let mut bad = None;
        for (i, (col, cell)) in header.iter().zip(rec.iter()).enumerate() {
            if i == scheme_col {
                continue;
            }
            if cell.is_empty() {
                cells.push((col.as_str(), None));
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => cells.push((col.as_str(), Some(v))),
                _ => {
                    bad = Some(format!("column `{col}`: `{cell}` is not a finite number"));
                    break;
                }
            }
        }
        let row = match bad {
            Some(msg) => Err(msg),
            None => build_row(cells.into_iter(), &rec[scheme_col]),
        };
        push_unique(&mut out, at, row);
    }
    Ok(out)
}

pub fn read_results_json(text: &str) -> Result<Ingested, ResultsError> {
    let doc: serde_json::Value = serde_json::from_str(text)?;
    let entries = doc.as_array().ok_or(ResultsError::JsonShape)?;
    let mut out = Ingested::default();
    for (i, entry) in entries.iter().enumerate() {
        let at = Location::Entry(i);
        let row = (|| {
            let obj = entry.as_object().ok_or("entry is not an object")?;
            let scheme = obj
                .get("scheme")
                .and_then(|s| s.as_str())
                .ok_or("missing string `scheme`")?;
            let mut cells = Vec::new();
            for (k, v) in obj.iter().filter(|(k, _)| *k != "scheme") {
                let v = match v {
                    serde_json::Value::Null => None,
                    v => Some(
                        v.as_f64()
                            .filter(|x| x.is_finite())
                            .ok_or_else(|| format!("field `{k}` is not a finite number"))?,
                    ),
                };
                cells.push((k.as_str(), v));
            }
            build_row(cells.into_iter(), scheme)
        })();
        push_unique(&mut out, at, row);
    }
    Ok(out)
}

/// Reads a `.csv` or `.json` results file.
pub fn load_results(path: &Path) -> Result<Ingested, ResultsError> {
    let text = std::fs::read_to_string(path).map_err(|source| ResultsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("csv") => read_results_csv(&text),
        Some("json") => read_results_json(&text),
        other => Err(ResultsError::Extension(other.unwrap_or("").into())),
    }
}

/// The shipped fixture of published results.
pub fn published_results() -> Vec<BenchmarkRow> {
    let ing = read_results_csv(PUBLISHED_RESULTS_CSV).expect("fixture parses");
    assert!(ing.rejected.is_empty(), "fixture rows rejected: {:?}", ing.rejected);
    ing.rows
}
