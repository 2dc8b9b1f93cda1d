//! Summary tables computed from a finished run directory.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Deserialize)]
struct ObjectiveRow {
    case: usize,
    #[serde(rename = "O1")]
    o1: Option<f64>,
    #[serde(rename = "O2")]
    o2: Option<f64>,
    #[serde(rename = "O3")]
    o3: Option<f64>,
    #[serde(rename = "O4")]
    o4: Option<f64>,
    status: String,
}

#[derive(Debug, Clone, Deserialize)]
struct OptimumRow {
    objective: String,
    value: f64,
}

#[derive(Debug, Clone, Deserialize)]
struct MiRow {
    case: usize,
    channel: String,
    scope: String,
    mi_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseSummary {
    pub case: usize,
    pub status: String,
    pub objectives: [Option<f64>; 4],
    pub cost_increase_pct: Option<f64>,
    pub discomfort_increase_pct: Option<f64>,
    pub mi_total: Option<f64>,
    /// MI relative to the unshaped case.
    pub mi_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub optima: BTreeMap<String, f64>,
    pub cases: Vec<CaseSummary>,
}

/// `100 (value - optimum) / optimum`; `None` for a zero optimum.
pub fn percent_increase(value: f64, optimum: f64) -> Option<f64> {
    if optimum.abs() < f64::EPSILON {
        None
    } else {
        Some(100.0 * (value - optimum) / optimum)
    }
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut reader =
        csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    reader
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .with_context(|| format!("malformed {}", path.display()))
}

pub fn summarize(dir: &Path) -> Result<Summary> {
    if !dir.join("manifest.json").is_file() {
        bail!(
            "{} holds no manifest.json; is it a finished run?",
            dir.display()
        );
    }
    let objectives: Vec<ObjectiveRow> = read_rows(&dir.join("objectives.csv"))?;
    let optima: BTreeMap<String, f64> = read_rows::<OptimumRow>(&dir.join("optima.csv"))?
        .into_iter()
        .map(|r| (r.objective, r.value))
        .collect();
    let mi: BTreeMap<usize, f64> = read_rows::<MiRow>(&dir.join("mi.csv"))?
        .into_iter()
        .filter(|r| r.channel == "total" && r.scope == "aggregate")
        .map(|r| (r.case, r.mi_bits))
        .collect();
    let reference = mi.get(&0).copied();

    let cases = objectives
        .into_iter()
        .map(|r| {
            let rise = |v: Option<f64>, key: &str| match (v, optima.get(key)) {
                (Some(v), Some(&star)) => percent_increase(v, star),
                _ => None,
            };
            let mi_total = mi.get(&r.case).copied();
            CaseSummary {
                case: r.case,
                cost_increase_pct: rise(r.o3, "O3"),
                discomfort_increase_pct: rise(r.o4, "O4"),
                objectives: [r.o1, r.o2, r.o3, r.o4],
                mi_ratio: match (mi_total, reference) {
                    (Some(m), Some(base)) if base > 0.0 => Some(m / base),
                    _ => None,
                },
                mi_total,
                status: r.status,
            }
        })
        .collect();
    Ok(Summary { optima, cases })
}

fn cell(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}"))
        .unwrap_or_else(|| "-".into())
}

/// Plain-text table of a summary.
pub fn render(summary: &Summary) -> String {
    let mut out = String::new();
    out.push_str("stand-alone optima:");
    for (k, v) in &summary.optima {
        out.push_str(&format!(" {k}*={v:.6}"));
    }
    out.push('\n');
    out.push_str(&format!(
        "{:>4}  {:>12} {:>9}  {:>12} {:>9}  {:>9} {:>8}  {}\n",
        "case", "O3", "dO3 %", "O4", "dO4 %", "MI bits", "MI/MI0", "status"
    ));
    for c in &summary.cases {
        out.push_str(&format!(
            "{:>4}  {:>12} {:>9}  {:>12} {:>9}  {:>9} {:>8}  {}\n",
            c.case,
            cell(c.objectives[2], 4),
            cell(c.cost_increase_pct, 1),
            cell(c.objectives[3], 4),
            cell(c.discomfort_increase_pct, 1),
            cell(c.mi_total, 3),
            cell(c.mi_ratio, 3),
            c.status
        ));
    }
    out
}
