//! Inequality suite: run the discrete functional inequalities over a corpus
//! of seeded random fields and aggregate pass/fail statistics.
//!
//! The corpus is generated per seed with the counter-based field generator,
//! so reruns of the same config reproduce every witness bit for bit.

use crate::env::{EnvKind, Realization};
use crate::error::Result;
use crate::field::GridField;
use crate::geometry::{cell_center, IntBox};
use crate::harness::campaign::{draw_realization, kernel_summary, KernelSummary};
use crate::harness::config::RunConfig;
use crate::harness::records::{fmt_float, RunLog, Table};
use crate::inequalities::{
    verify_local_average_bounds, verify_multistep, verify_poincare, verify_tail_bound,
    InequalityReport, PoincareMode,
};
use serde::Serialize;
use std::collections::BTreeMap;
use std::time::Instant;

/// Multistep comparison exponents `(j, k)` exercised per witness.
const MULTISTEP_PAIRS: [(usize, usize); 3] = [(2, 1), (3, 2), (4, 2)];

#[derive(Debug, Clone, Serialize)]
pub struct CheckSummary {
    pub check: String,
    pub n: usize,
    pub passes: usize,
    pub all_pass: bool,
    /// Worst `lhs / (constant · rhs)` over the corpus; 0 when every right
    /// side vanished together with its left side.
    pub max_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TailSummarySection {
    pub threshold: f64,
    /// Fitted slope per witness; null when fewer than two truncations had
    /// nonzero tails.
    pub slopes: Vec<Option<f64>>,
    pub all_pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteSummary {
    pub schema_version: u32,
    pub experiment: String,
    pub label: String,
    pub code_version: String,
    pub config_sha256: String,
    pub kernel: KernelSummary,
    pub environment: EnvKind,
    pub seeds: Vec<u64>,
    pub domain_lo: Vec<f64>,
    pub domain_hi: Vec<f64>,
    pub eps: f64,
    pub zero_boundary_constant: f64,
    pub checks: Vec<CheckSummary>,
    pub tail: TailSummarySection,
    pub all_pass: bool,
}

pub struct SuiteOutput {
    pub results: Table,
    pub summary: SuiteSummary,
}

struct Accumulator {
    rows: Table,
    stats: BTreeMap<String, (usize, usize, f64)>,
}

impl Accumulator {
    fn new() -> Accumulator {
        Accumulator {
            rows: Table::new(vec![
                "check",
                "witness",
                "lhs",
                "rhs",
                "constant_used",
                "pass",
            ]),
            stats: BTreeMap::new(),
        }
    }

    fn push(&mut self, check: &str, rep: &InequalityReport) {
        self.rows.push(vec![
            check.to_string(),
            rep.witness.clone(),
            fmt_float(rep.lhs),
            fmt_float(rep.rhs),
            fmt_float(rep.constant_used),
            if rep.pass { "1" } else { "0" }.to_string(),
        ]);
        let entry = self.stats.entry(check.to_string()).or_insert((0, 0, 0.0));
        entry.0 += 1;
        if rep.pass {
            entry.1 += 1;
        }
        let denom = rep.constant_used * rep.rhs;
        let ratio = if denom > 0.0 {
            rep.lhs / denom
        } else if rep.lhs > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        entry.2 = entry.2.max(ratio);
    }
}

fn suite_domain(cfg: &RunConfig) -> Result<IntBox> {
    let d = cfg.grid.d;
    let h = cfg.grid.h;
    let (lo, hi) = match &cfg.grid.domain {
        Some(dom) => (dom.lo.clone(), dom.hi.clone()),
        None => (vec![0.0; d], vec![1.0; d]),
    };
    let mut lo_cells = Vec::with_capacity(d);
    let mut hi_cells = Vec::with_capacity(d);
    for i in 0..d {
        for (v, out) in [(lo[i], &mut lo_cells), (hi[i], &mut hi_cells)] {
            let c = v / h;
            if (c - c.round()).abs() > 1e-9 {
                return Err(crate::error::Error::ConfigInvalid {
                    path: "grid.domain".into(),
                    reason: format!("edge {v} is not a multiple of the spacing {h}"),
                });
            }
            out.push(c.round() as i64);
        }
    }
    Ok(IntBox::new(lo_cells, hi_cells))
}

/// Zero a field outside the interior `{x ∈ D : dist(x, ∂D) ≥ 2ε}` so it is
/// admissible for the zero-boundary Poincaré check.
fn clip_to_interior(u: &GridField, domain: &IntBox, eps: f64) -> GridField {
    let h = u.h;
    let mut clipped = u.clone();
    for c in u.bbox.clone().cells() {
        let inside = domain.contains_cell(&c);
        let pos = cell_center(&c, h);
        if !inside || domain.dist_to_boundary(&pos, h) < 2.0 * eps {
            clipped.set(&c, 0.0);
        }
    }
    clipped
}

pub fn run_inequality_suite(
    cfg: &RunConfig,
    config_text: &str,
    log: &mut RunLog,
) -> Result<SuiteOutput> {
    let d = cfg.grid.d;
    let h = cfg.grid.h;
    let kernel = cfg.kernel.build(d)?;
    let seeds = cfg.seeds.seeds(None);
    let domain = suite_domain(cfg)?;
    let eps = cfg
        .grid
        .epsilon_schedule
        .first()
        .copied()
        .unwrap_or(2.0 * h);
    let k_schedule = &cfg.grid.k_schedule;

    // Field and realization boxes: the domain padded by the largest stencil
    // any check reads through.
    let sigma_max = eps * MULTISTEP_PAIRS.iter().map(|(j, k)| j + k).max().unwrap() as f64;
    let pad = ((kernel.cutoff.max(2.0 * sigma_max) / h).ceil() as i64) + 2;
    let bbox = domain.dilate(pad);
    let env_lo = bbox.phys_lo(h);
    let env_hi = bbox.phys_hi(h);

    let mut acc = Accumulator::new();
    let mut slopes: Vec<Option<f64>> = Vec::new();
    let mut tail_all_pass = true;
    let threshold = -kernel.kappa + 0.5;
    let zero_boundary_constant = 2.0 * domain.volume(h);

    for &seed in &seeds {
        let witness = format!("seed={seed}");
        let start = Instant::now();
        let u = GridField::random(bbox.clone(), h, seed);
        let real: Realization = draw_realization(cfg, seed, &env_lo, &env_hi, log)?;

        let (approx, sup) = verify_local_average_bounds(&u, &domain, eps, 2.0 * eps, &witness)?;
        acc.push("local-average-approx", &approx);
        acc.push("local-average-sup", &sup);

        for (j, k) in MULTISTEP_PAIRS {
            let rep = verify_multistep(&u, &domain, eps, j, k, &witness)?;
            acc.push(&format!("multistep-j{j}k{k}"), &rep);
        }

        let rep = verify_poincare(
            &u,
            &domain,
            PoincareMode::Wirtinger,
            eps,
            kernel.r0,
            &witness,
        )?;
        acc.push("poincare-wirtinger", &rep);

        let clipped = clip_to_interior(&u, &domain, eps);
        let rep = verify_poincare(
            &clipped,
            &domain,
            PoincareMode::ZeroBoundary,
            eps,
            kernel.r0,
            &witness,
        )?;
        acc.push("poincare-zero-boundary", &rep);

        let tail = verify_tail_bound(&u, &domain, &real, &kernel, k_schedule, &witness)?;
        for (i, rep) in tail.reports.iter().enumerate() {
            acc.push(&format!("tail-K{}", k_schedule[i]), rep);
        }
        acc.rows.push(vec![
            "tail-slope".into(),
            witness.clone(),
            match tail.slope {
                Some(s) => fmt_float(s),
                None => "".into(),
            },
            fmt_float(threshold),
            fmt_float(1.0),
            if tail.pass { "1" } else { "0" }.to_string(),
        ]);
        slopes.push(tail.slope);
        tail_all_pass &= tail.pass;

        log.timing(
            &format!("suite witness seed={seed}"),
            start.elapsed().as_secs_f64() * 1e3,
        );
    }

    let checks: Vec<CheckSummary> = acc
        .stats
        .iter()
        .map(|(name, &(n, passes, max_ratio))| CheckSummary {
            check: name.clone(),
            n,
            passes,
            all_pass: passes == n,
            max_ratio,
        })
        .collect();
    let all_pass = checks.iter().all(|c| c.all_pass) && tail_all_pass;

    let summary = SuiteSummary {
        schema_version: cfg.schema_version,
        experiment: "inequality-suite".into(),
        label: cfg.label.clone(),
        code_version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: super::records::config_hash(config_text),
        kernel: kernel_summary(&kernel),
        environment: cfg.environment.clone(),
        seeds,
        domain_lo: domain.phys_lo(h),
        domain_hi: domain.phys_hi(h),
        eps,
        zero_boundary_constant,
        checks,
        tail: TailSummarySection {
            threshold,
            slopes,
            all_pass: tail_all_pass,
        },
        all_pass,
    };
    Ok(SuiteOutput {
        results: acc.rows,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::RunConfig;

    const BASE: &str = r#"
schema_version = 1
experiment = "inequality-suite"
label = "unit"

[kernel]
family = "truncated-power"
kappa = 1.0
cutoff = 8.0

[environment]
kind = "constant"

[grid]
d = 1
h = 1.0
k_schedule = [2.0, 4.0]
epsilon_schedule = [2.0]
domain = { lo = [-8.0], hi = [8.0] }

[seeds]
base = 3
count = 4

[output]
directory = "unused"
"#;

    #[test]
    fn suite_runs_and_every_proved_check_passes() {
        let cfg = RunConfig::from_str_validated(BASE).unwrap();
        let mut log = RunLog::default();
        let out = run_inequality_suite(&cfg, "cfg", &mut log).unwrap();
        assert_eq!(out.summary.zero_boundary_constant, 32.0);
        for check in &out.summary.checks {
            assert!(check.all_pass, "{check:?}");
        }
        assert!(out.summary.tail.all_pass);
        assert!(out.summary.all_pass);
        // 4 seeds x (2 local-average + 3 multistep + 2 poincare + 2 tail-K
        // + 1 tail-slope) rows.
        assert_eq!(out.results.rows.len(), 4 * 10);
    }

    #[test]
    fn suite_rows_are_reproducible() {
        let cfg = RunConfig::from_str_validated(BASE).unwrap();
        let mut log_a = RunLog::default();
        let mut log_b = RunLog::default();
        let a = run_inequality_suite(&cfg, "cfg", &mut log_a).unwrap();
        let b = run_inequality_suite(&cfg, "cfg", &mut log_b).unwrap();
        assert_eq!(a.results.to_csv(), b.results.to_csv());
    }
}
