//! Plain-text plot tables derived from a results file: two or three
//! columns, a comment header, rows sorted by the abscissa. The tables are
//! meant to be fed straight into gnuplot or pandas.

use crate::error::{Error, Result};
use crate::harness::records::fmt_float;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    GammaVsR,
    GammaVsK,
    VarianceVsR,
    EpsConvergence,
}

impl PlotKind {
    pub const NAMES: [(&'static str, PlotKind); 4] = [
        ("gamma_vs_R", PlotKind::GammaVsR),
        ("gamma_vs_K", PlotKind::GammaVsK),
        ("variance_vs_R", PlotKind::VarianceVsR),
        ("eps_convergence", PlotKind::EpsConvergence),
    ];

    pub fn parse(name: &str) -> Option<PlotKind> {
        Self::NAMES
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, k)| *k)
    }

    pub fn name(self) -> &'static str {
        Self::NAMES
            .iter()
            .find(|(_, k)| *k == self)
            .map(|(n, _)| *n)
            .expect("every kind is named")
    }
}

struct Parsed {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Parsed {
    fn col(&self, name: &str) -> Result<usize> {
        self.header.iter().position(|h| h == name).ok_or_else(|| {
            Error::InsufficientData(format!(
                "results file has no column {name:?} (found: {})",
                self.header.join(", ")
            ))
        })
    }

    fn num(&self, row: &[String], col: usize) -> Result<f64> {
        row[col].parse().map_err(|_| {
            Error::InsufficientData(format!(
                "column {:?} holds non-numeric value {:?}",
                self.header[col], row[col]
            ))
        })
    }
}

fn parse_csv(text: &str) -> Result<Parsed> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::InsufficientData("results file is empty".into()))?
        .split(',')
        .map(str::to_string)
        .collect();
    let rows: Vec<Vec<String>> = lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    if rows.is_empty() {
        return Err(Error::InsufficientData("results file has no rows".into()));
    }
    Ok(Parsed { header, rows })
}

/// Total order on f64 keys that have already been parsed (no NaN inputs
/// survive parsing of our own output).
fn key(v: f64) -> i64 {
    let bits = v.to_bits() as i64;
    bits ^ ((bits >> 63) & 0x7fff_ffff_ffff_ffff)
}

struct Groups {
    by_key: BTreeMap<i64, (f64, Vec<f64>)>,
}

impl Groups {
    fn new() -> Groups {
        Groups {
            by_key: BTreeMap::new(),
        }
    }

    fn add(&mut self, at: f64, value: f64) {
        self.by_key
            .entry(key(at))
            .or_insert_with(|| (at, Vec::new()))
            .1
            .push(value);
    }
}

fn render(title: &str, columns: &[&str], rows: Vec<Vec<f64>>) -> String {
    let mut out = String::new();
    out.push_str(&format!("# {title}\n"));
    out.push_str(&format!("# columns: {}\n", columns.join(" ")));
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| fmt_float(*v)).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}

/// Group cell-campaign rows for the first direction at the extreme of the
/// other coordinate, keyed by `x_col`.
fn campaign_groups(parsed: &Parsed, x_col: &str, fix_col: &str) -> Result<Groups> {
    let zc = parsed.col("z")?;
    let xc = parsed.col(x_col)?;
    let fc = parsed.col(fix_col)?;
    let vc = parsed.col("value")?;
    let z0 = parsed.rows[0][zc].clone();
    let mut fix_max = f64::NEG_INFINITY;
    for row in &parsed.rows {
        if row[zc] == z0 {
            fix_max = fix_max.max(parsed.num(row, fc)?);
        }
    }
    let mut groups = Groups::new();
    for row in &parsed.rows {
        if row[zc] != z0 || parsed.num(row, fc)? != fix_max {
            continue;
        }
        groups.add(parsed.num(row, xc)?, parsed.num(row, vc)?);
    }
    Ok(groups)
}

fn mean_and_ci(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 2.0 * (var / n).sqrt())
}

pub fn emit_plot_data(results_csv: &str, kind: PlotKind) -> Result<String> {
    let parsed = parse_csv(results_csv)?;
    match kind {
        PlotKind::GammaVsR => {
            let groups = campaign_groups(&parsed, "R", "K")?;
            let rows = groups
                .by_key
                .values()
                .map(|(r, vals)| {
                    let (mean, ci) = mean_and_ci(vals);
                    vec![*r, mean, ci]
                })
                .collect();
            Ok(render(
                "estimate vs box size at the largest truncation",
                &["R", "mean_value", "ci_halfwidth"],
                rows,
            ))
        }
        PlotKind::GammaVsK => {
            let groups = campaign_groups(&parsed, "K", "R")?;
            let rows = groups
                .by_key
                .values()
                .map(|(k, vals)| {
                    let (mean, ci) = mean_and_ci(vals);
                    vec![*k, mean, ci]
                })
                .collect();
            Ok(render(
                "estimate vs truncation at the largest box",
                &["K", "mean_value", "ci_halfwidth"],
                rows,
            ))
        }
        PlotKind::VarianceVsR => {
            let groups = campaign_groups(&parsed, "R", "K")?;
            let mut rows = Vec::new();
            for (r, vals) in groups.by_key.values() {
                if vals.len() < 2 {
                    return Err(Error::InsufficientData(format!(
                        "variance at R={r} needs at least two seeds, found {}",
                        vals.len()
                    )));
                }
                let (mean, _) = mean_and_ci(vals);
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                    / (vals.len() as f64 - 1.0);
                rows.push(vec![*r, var]);
            }
            Ok(render(
                "sample variance of the estimate vs box size",
                &["R", "variance"],
                rows,
            ))
        }
        PlotKind::EpsConvergence => {
            let ec = parsed.col("eps")?;
            let vc = parsed.col("value")?;
            let gc = parsed.col("rel_gap")?;
            let mut values = Groups::new();
            let mut gaps = Groups::new();
            for row in &parsed.rows {
                let eps = parsed.num(row, ec)?;
                values.add(eps, parsed.num(row, vc)?);
                gaps.add(eps, parsed.num(row, gc)?);
            }
            let rows = values
                .by_key
                .iter()
                .map(|(k, (eps, vals))| {
                    let (mean, _) = mean_and_ci(vals);
                    let (gap_mean, _) = mean_and_ci(&gaps.by_key[k].1);
                    vec![*eps, mean, gap_mean]
                })
                .collect();
            Ok(render(
                "finite-scale minimum vs homogenized reference",
                &["eps", "mean_value", "mean_rel_gap"],
                rows,
            ))
        }
    }
}
