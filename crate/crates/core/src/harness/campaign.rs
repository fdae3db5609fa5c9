//! The cell campaign: solve truncated cell problems over a grid of
//! (direction, truncation, box size, seed) coordinates, aggregate the
//! estimates, and run the configured invariant probes.

use crate::cell::{
    cell_minimum, sandwich_check, stats, subadditivity_check, z_basis, CellEstimate,
    DirectionEstimate, GammaKEstimate,
};
use crate::env::{sample_environment, verify_perforation_geometry, EnvKind, Realization};
use crate::error::{Error, Result};
use crate::geometry::IntBox;
use crate::harness::config::RunConfig;
use crate::harness::records::{fmt_float, RunLog, Table};
use crate::kernel::{verify_kernel_assumptions, EffectiveTensor, Kernel};
use crate::lattice::{build_problem, KernelQuadrature, Variant};
use crate::solver::SolveOptions;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::time::Instant;

/// Derivation constant for probe and resample streams, so they never
/// collide with the realization seeds themselves.
const SUB_SEED_STEP: u64 = 0x9E37_79B9_7F4A_7C15;
const PROBE_STREAM: u64 = 0x00C0_FFEE_5EED_0001;

/// How many times a disconnected perforation is redrawn before giving up.
const MAX_RESAMPLE: u64 = 32;

fn z_label(z: &[f64]) -> String {
    let mut parts = Vec::new();
    let mut simple = true;
    for (i, &v) in z.iter().enumerate() {
        if v == 0.0 {
            continue;
        } else if v == 1.0 {
            parts.push(format!("e{}", i + 1));
        } else {
            simple = false;
            break;
        }
    }
    if simple && !parts.is_empty() {
        parts.join("+")
    } else {
        let body: Vec<String> = z.iter().map(|v| format!("{v}")).collect();
        format!("z[{}]", body.join(";"))
    }
}

/// Draw one realization, redrawing perforated environments whose
/// complement is disconnected at the lattice spacing.
pub fn draw_realization(
    cfg: &RunConfig,
    seed: u64,
    lo: &[f64],
    hi: &[f64],
    log: &mut RunLog,
) -> Result<Realization> {
    let spec = cfg.environment_spec();
    let perforated = matches!(cfg.environment, EnvKind::Perforation { .. });
    for attempt in 0..MAX_RESAMPLE {
        let sub = seed.wrapping_add(SUB_SEED_STEP.wrapping_mul(attempt));
        let real = sample_environment(&spec, sub, lo, hi)?;
        if !perforated {
            return Ok(real);
        }
        let report = verify_perforation_geometry(&real, cfg.grid.h);
        if report.connected_ok && report.min_gap_ok && report.all_inside_ok {
            if attempt > 0 {
                log.note(format!(
                    "seed {seed}: accepted perforation after {attempt} redraw(s)"
                ));
            }
            return Ok(real);
        }
        log.note(format!(
            "seed {seed}: perforation rejected (attempt {attempt}, connected={}, gap={}, inside={})",
            report.connected_ok, report.min_gap_ok, report.all_inside_ok
        ));
    }
    Err(Error::PerforationRejected {
        seed,
        attempts: MAX_RESAMPLE as usize,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelSummary {
    pub family: String,
    pub r0: f64,
    pub c: f64,
    pub decay_c: f64,
    pub kappa: f64,
    pub cutoff: f64,
    pub assumptions_ok: bool,
}

pub fn kernel_summary(kernel: &Kernel) -> KernelSummary {
    let report = verify_kernel_assumptions(kernel, 2000);
    KernelSummary {
        family: format!("{:?}", kernel.family),
        r0: kernel.r0,
        c: kernel.c,
        decay_c: kernel.decay_c,
        kappa: kernel.kappa,
        cutoff: kernel.cutoff,
        assumptions_ok: report.even_ok && report.lower_ok && report.decay_ok,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RLevelSummary {
    pub r: f64,
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GammaKSummary {
    pub k: f64,
    pub per_r: Vec<RLevelSummary>,
    pub value: f64,
    pub ci_halfwidth: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DirectionSummary {
    pub z: Vec<f64>,
    pub label: String,
    pub per_k: Vec<GammaKSummary>,
    pub gamma: f64,
    pub k_band: f64,
    pub monotone_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TensorSummary {
    pub d: usize,
    /// Row-major entries.
    pub entries: Vec<f64>,
    pub symmetric_ok: bool,
    pub positive_definite: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SandwichSummary {
    pub r: f64,
    pub k: f64,
    pub ambient_minimum: f64,
    pub restricted_full_minimum: f64,
    pub restricted_truncated_minimum: f64,
    pub gap: f64,
    pub gap_identity_dev: f64,
    pub gap_per_area: f64,
    pub ordering_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SubadditivitySummary {
    pub pairs: usize,
    pub min_slack: f64,
    pub all_nonnegative: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub k: f64,
    pub r: f64,
    pub constant_value: f64,
    pub env_mean: f64,
    pub env_min: f64,
    pub env_max: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareSummary {
    /// Per-instance factor bounds implied by the environment law.
    pub lower_factor: f64,
    pub upper_factor: f64,
    pub rows: Vec<CompareRow>,
    pub all_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeSummary {
    pub sandwich: Option<Vec<SandwichSummary>>,
    pub subadditivity: Option<SubadditivitySummary>,
    pub compare_constant: Option<CompareSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CampaignSummary {
    pub schema_version: u32,
    pub experiment: String,
    pub label: String,
    pub code_version: String,
    pub config_sha256: String,
    pub kernel: KernelSummary,
    pub environment: EnvKind,
    pub seeds: Vec<u64>,
    pub directions: Vec<DirectionSummary>,
    pub tensor: Option<TensorSummary>,
    pub probes: ProbeSummary,
}

pub struct CampaignOutput {
    pub results: Table,
    pub summary: CampaignSummary,
}

struct Task {
    zi: usize,
    ki: usize,
    ri: usize,
    si: usize,
}

fn direction_summary(
    z: Vec<f64>,
    k_schedule: &[f64],
    r_schedule: &[f64],
    values: impl Fn(usize, usize) -> Vec<f64>,
) -> DirectionSummary {
    let mut per_k = Vec::new();
    for (ki, &k) in k_schedule.iter().enumerate() {
        let mut per_r = Vec::new();
        for (ri, &r) in r_schedule.iter().enumerate() {
            per_r.push(stats(r, values(ki, ri)));
        }
        let last = per_r.last().expect("nonempty R schedule");
        let n = last.values.len() as f64;
        per_k.push(GammaKEstimate {
            k,
            value: last.mean,
            ci_halfwidth: 2.0 * (last.variance / n).sqrt(),
            per_r,
        });
    }
    let gamma = per_k.last().expect("nonempty K schedule").value;
    let k_band = if per_k.len() > 1 {
        (per_k[per_k.len() - 1].value - per_k[per_k.len() - 2].value).abs()
    } else {
        0.0
    };
    let monotone_ok = per_k
        .windows(2)
        .all(|w| w[1].value >= w[0].value - (w[0].ci_halfwidth + w[1].ci_halfwidth));
    let label = z_label(&z);
    let dir = DirectionEstimate {
        z,
        per_k,
        gamma,
        k_band,
        monotone_ok,
    };
    summarize_direction(&dir, label)
}

fn summarize_direction(dir: &DirectionEstimate, label: String) -> DirectionSummary {
    DirectionSummary {
        z: dir.z.clone(),
        label,
        per_k: dir
            .per_k
            .iter()
            .map(|g: &GammaKEstimate| GammaKSummary {
                k: g.k,
                per_r: g
                    .per_r
                    .iter()
                    .map(|s| RLevelSummary {
                        r: s.r,
                        n: s.values.len(),
                        mean: s.mean,
                        variance: s.variance,
                    })
                    .collect(),
                value: g.value,
                ci_halfwidth: g.ci_halfwidth,
            })
            .collect(),
        gamma: dir.gamma,
        k_band: dir.k_band,
        monotone_ok: dir.monotone_ok,
    }
}

/// Environment-law factor bounds for the constant-comparison probe:
/// per instance, `lower·Φ_const ≤ Φ ≤ upper·Φ_const`.
pub fn compare_factors(kind: &EnvKind) -> (f64, f64) {
    match kind {
        EnvKind::Constant => (1.0, 1.0),
        EnvKind::Checkerboard {
            lambda1, lambda2, ..
        } => {
            let lo = lambda1.min(*lambda2);
            let hi = lambda1.max(*lambda2);
            (lo * lo, hi * hi)
        }
        EnvKind::Perforation { .. } => (0.0, 1.0),
    }
}

pub fn run_cell_campaign(
    cfg: &RunConfig,
    config_text: &str,
    log: &mut RunLog,
) -> Result<CampaignOutput> {
    let d = cfg.grid.d;
    let h = cfg.grid.h;
    let kernel = cfg.kernel.build(d)?;
    let quadrature = cfg.kernel.quadrature.to_lattice();
    let opts = cfg.solver.options();
    let seeds = cfg.seeds.seeds(None);
    let k_schedule = &cfg.grid.k_schedule;
    let r_schedule = &cfg.grid.r_schedule;
    let zs: Vec<Vec<f64>> = match &cfg.grid.z {
        Some(z) => vec![z.clone()],
        None => z_basis(d),
    };

    // One realization per seed, sampled once on a box covering the largest
    // margin box of the schedule (plus quadrature smear).
    let r_max = *r_schedule.last().expect("validated nonempty");
    let k_max = *k_schedule.last().expect("validated nonempty");
    let half = r_max / 2.0 + k_max + 2.0 * h * (d as f64).sqrt() + h;
    let lo = vec![-half; d];
    let hi = vec![half; d];
    let mut reals = Vec::with_capacity(seeds.len());
    for &seed in &seeds {
        reals.push(draw_realization(cfg, seed, &lo, &hi, log)?);
    }

    // Solve the full coordinate grid in parallel; rows are collected in
    // construction order, which is the lexicographic coordinate order.
    let mut tasks = Vec::new();
    for zi in 0..zs.len() {
        for ki in 0..k_schedule.len() {
            for ri in 0..r_schedule.len() {
                for si in 0..seeds.len() {
                    tasks.push(Task { zi, ki, ri, si });
                }
            }
        }
    }
    let solved: Vec<(CellEstimate, f64)> = tasks
        .par_iter()
        .map(|t| {
            let problem = build_problem(d, r_schedule[t.ri], h, k_schedule[t.ki])?;
            let start = Instant::now();
            let est = cell_minimum(
                &problem,
                &reals[t.si],
                &kernel,
                &zs[t.zi],
                Variant::TruncatedAmbient,
                quadrature,
                &opts,
            )?;
            Ok((est, start.elapsed().as_secs_f64() * 1e3))
        })
        .collect::<Result<_>>()?;

    let mut results = Table::new(vec![
        "z",
        "K",
        "R",
        "seed",
        "value",
        "minimum",
        "affine_value",
        "free_sites",
        "floating_sites",
        "iterations",
        "relative_residual",
    ]);
    for (t, (est, millis)) in tasks.iter().zip(&solved) {
        let label = z_label(&zs[t.zi]);
        log.timing(
            &format!(
                "solve z={label} K={} R={} seed={}",
                k_schedule[t.ki], r_schedule[t.ri], seeds[t.si]
            ),
            *millis,
        );
        results.push(vec![
            label,
            fmt_float(k_schedule[t.ki]),
            fmt_float(r_schedule[t.ri]),
            seeds[t.si].to_string(),
            fmt_float(est.value),
            fmt_float(est.minimum),
            fmt_float(est.affine_value),
            est.free_sites.to_string(),
            est.floating_sites.to_string(),
            est.iterations.to_string(),
            fmt_float(est.relative_residual),
        ]);
    }

    // Aggregate into per-direction estimates from the solved grid.
    let value_at = |zi: usize, ki: usize, ri: usize| -> Vec<f64> {
        let base = ((zi * k_schedule.len() + ki) * r_schedule.len() + ri) * seeds.len();
        (0..seeds.len())
            .map(|si| solved[base + si].0.value)
            .collect()
    };
    let directions: Vec<DirectionSummary> = zs
        .iter()
        .enumerate()
        .map(|(zi, z)| {
            direction_summary(z.clone(), k_schedule, r_schedule, |ki, ri| {
                value_at(zi, ki, ri)
            })
        })
        .collect();

    // Polarize into a tensor whenever the full basis was run.
    let tensor = if cfg.grid.z.is_none() {
        let gamma_of = |target: &[f64]| -> f64 {
            directions
                .iter()
                .find(|dir| dir.z == target)
                .map(|dir| dir.gamma)
                .expect("direction missing from basis")
        };
        let mut entries = vec![0.0; d * d];
        for i in 0..d {
            let mut ei = vec![0.0; d];
            ei[i] = 1.0;
            entries[i * d + i] = gamma_of(&ei);
        }
        for i in 0..d {
            for j in (i + 1)..d {
                let mut eij = vec![0.0; d];
                eij[i] = 1.0;
                eij[j] = 1.0;
                let mut ei = vec![0.0; d];
                ei[i] = 1.0;
                let mut ej = vec![0.0; d];
                ej[j] = 1.0;
                let off = 0.5 * (gamma_of(&eij) - gamma_of(&ei) - gamma_of(&ej));
                entries[i * d + j] = off;
                entries[j * d + i] = off;
            }
        }
        let t = EffectiveTensor::new(d, entries)?;
        Some(TensorSummary {
            d,
            symmetric_ok: t.is_symmetric(1e-12),
            positive_definite: t.is_positive_definite(),
            entries: t.entries.clone(),
        })
    } else {
        None
    };

    let probes = run_probes(cfg, &kernel, quadrature, &opts, &reals, &zs, log)?;

    let summary = CampaignSummary {
        schema_version: cfg.schema_version,
        experiment: "cell-campaign".into(),
        label: cfg.label.clone(),
        code_version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: super::records::config_hash(config_text),
        kernel: kernel_summary(&kernel),
        environment: cfg.environment.clone(),
        seeds,
        directions,
        tensor,
        probes,
    };
    Ok(CampaignOutput { results, summary })
}

fn run_probes(
    cfg: &RunConfig,
    kernel: &Kernel,
    quadrature: KernelQuadrature,
    opts: &SolveOptions,
    reals: &[Realization],
    zs: &[Vec<f64>],
    log: &mut RunLog,
) -> Result<ProbeSummary> {
    let d = cfg.grid.d;
    let h = cfg.grid.h;
    let k_max = *cfg.grid.k_schedule.last().expect("validated nonempty");
    let z0 = &zs[0];

    let sandwich = if cfg.probes.sandwich {
        let mut rows = Vec::new();
        for &r in &cfg.grid.r_schedule {
            let problem = build_problem(d, r, h, k_max)?;
            let start = Instant::now();
            let rep = sandwich_check(&problem, &reals[0], kernel, z0, quadrature, opts)?;
            log.timing(
                &format!("sandwich R={r} K={k_max}"),
                start.elapsed().as_secs_f64() * 1e3,
            );
            let scale = rep.ambient.minimum.abs().max(1.0);
            let tol = 4.0 * opts.tol * scale + 1e-12;
            rows.push(SandwichSummary {
                r,
                k: k_max,
                ambient_minimum: rep.ambient.minimum,
                restricted_full_minimum: rep.restricted_full.minimum,
                restricted_truncated_minimum: rep.restricted_truncated.minimum,
                gap: rep.gap,
                gap_identity_dev: rep.gap_identity_dev,
                gap_per_area: rep.gap_per_area,
                ordering_ok: rep.restricted_truncated.minimum <= rep.restricted_full.minimum + tol
                    && rep.restricted_truncated.minimum <= rep.ambient.minimum + tol,
            });
        }
        Some(rows)
    } else {
        None
    };

    let subadditivity = if cfg.probes.subadditivity > 0 {
        let r_max = *cfg.grid.r_schedule.last().expect("validated nonempty");
        let n_cells = (r_max / h).round() as i64;
        let lo_cell = -n_cells / 2;
        let hi_cell = n_cells / 2;
        // Boxes must be wide enough to keep a free site inside the collar.
        let k_cells = (k_max / h).round() as i64;
        let min_side = 2 * k_cells + 1;
        let max_side = (n_cells / 2).max(min_side);
        if min_side > hi_cell - lo_cell {
            return Err(Error::ConfigInvalid {
                path: "probes.subadditivity".into(),
                reason: format!("boxes of side {min_side} cells do not fit in the largest cube"),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seeds.seeds(None)[0] ^ PROBE_STREAM);
        let mut min_slack = f64::INFINITY;
        let mut all_ok = true;
        let mut drawn = 0;
        let mut guard = 0;
        while drawn < cfg.probes.subadditivity {
            guard += 1;
            if guard > 10_000 {
                return Err(Error::ConfigInvalid {
                    path: "probes.subadditivity".into(),
                    reason: "could not place disjoint boxes in the largest cube".into(),
                });
            }
            let draw_box = |rng: &mut ChaCha8Rng| -> IntBox {
                let mut lo = Vec::with_capacity(d);
                let mut hi = Vec::with_capacity(d);
                for _ in 0..d {
                    let side = rng.random_range(min_side..=max_side);
                    let a = rng.random_range(lo_cell..=(hi_cell - side));
                    lo.push(a);
                    hi.push(a + side);
                }
                IntBox::new(lo, hi)
            };
            let a = draw_box(&mut rng);
            let b = draw_box(&mut rng);
            let disjoint = (0..d).any(|i| a.hi[i] <= b.lo[i] || b.hi[i] <= a.lo[i]);
            if !disjoint {
                continue;
            }
            let real = &reals[drawn % reals.len()];
            let start = Instant::now();
            let rep = subadditivity_check(d, h, k_max, kernel, real, z0, a, b, quadrature, opts)?;
            log.timing("subadditivity pair", start.elapsed().as_secs_f64() * 1e3);
            let scale = rep.minimum_a.abs() + rep.minimum_b.abs() + 1.0;
            min_slack = min_slack.min(rep.slack);
            if rep.slack < -2.0 * opts.tol * scale {
                all_ok = false;
            }
            drawn += 1;
        }
        Some(SubadditivitySummary {
            pairs: drawn,
            min_slack,
            all_nonnegative: all_ok,
        })
    } else {
        None
    };

    let compare_constant = if cfg.probes.compare_constant {
        let (lf, uf) = compare_factors(&cfg.environment);
        let spec = crate::env::EnvironmentSpec {
            d,
            kind: EnvKind::Constant,
        };
        let r_max = *cfg.grid.r_schedule.last().expect("validated nonempty");
        let half = r_max / 2.0 + k_max + 2.0 * h * (d as f64).sqrt() + h;
        let const_real = sample_environment(&spec, 0, &vec![-half; d], &vec![half; d])?;
        let strict_lower = matches!(cfg.environment, EnvKind::Perforation { .. });
        let mut rows = Vec::new();
        let mut all_ok = true;
        for &k in &cfg.grid.k_schedule {
            for &r in &cfg.grid.r_schedule {
                let problem = build_problem(d, r, h, k)?;
                let constant_value = cell_minimum(
                    &problem,
                    &const_real,
                    kernel,
                    z0,
                    Variant::TruncatedAmbient,
                    quadrature,
                    opts,
                )?
                .value;
                let values: Vec<f64> = reals
                    .par_iter()
                    .map(|real| {
                        cell_minimum(
                            &problem,
                            real,
                            kernel,
                            z0,
                            Variant::TruncatedAmbient,
                            quadrature,
                            opts,
                        )
                        .map(|e| e.value)
                    })
                    .collect::<Result<_>>()?;
                let env_min = values.iter().cloned().fold(f64::INFINITY, f64::min);
                let env_max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let env_mean = values.iter().sum::<f64>() / values.len() as f64;
                let tol = 4.0 * opts.tol * constant_value.abs().max(1.0) + 1e-12;
                let lower_ok = if strict_lower {
                    env_min > 0.0
                } else {
                    env_min >= lf * constant_value - tol
                };
                let upper_ok = env_max <= uf * constant_value + tol;
                all_ok &= lower_ok && upper_ok;
                rows.push(CompareRow {
                    k,
                    r,
                    constant_value,
                    env_mean,
                    env_min,
                    env_max,
                    lower_ok,
                    upper_ok,
                });
            }
        }
        Some(CompareSummary {
            lower_factor: lf,
            upper_factor: uf,
            rows,
            all_ok,
        })
    } else {
        None
    };

    Ok(ProbeSummary {
        sandwich,
        subadditivity,
        compare_constant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::RunConfig;

    fn config(extra_probes: &str) -> RunConfig {
        let text = format!(
            r#"
schema_version = 1
experiment = "cell-campaign"
label = "unit"

[kernel]
family = "ball"
r0 = 1.0
quadrature = "pointwise"

[environment]
kind = "checkerboard"
lambda1 = 1.0
lambda2 = 2.0
p = 0.5
cell_size = 1.0

[grid]
d = 1
h = 1.0
k_schedule = [2.0, 4.0]
r_schedule = [16.0, 32.0]

[seeds]
base = 11
count = 3

[probes]
{extra_probes}

[output]
directory = "unused"
"#
        );
        RunConfig::from_str_validated(&text).unwrap()
    }

    #[test]
    fn campaign_rows_follow_coordinate_order() {
        let cfg = config("");
        let mut log = RunLog::default();
        let out = run_cell_campaign(&cfg, "cfg", &mut log).unwrap();
        // 1 direction x 2 K x 2 R x 3 seeds.
        assert_eq!(out.results.rows.len(), 12);
        let ks: Vec<&str> = out.results.rows.iter().map(|r| r[1].as_str()).collect();
        assert!(ks[..6].iter().all(|k| k.starts_with("2.")));
        assert!(ks[6..].iter().all(|k| k.starts_with("4.")));
        let seeds: Vec<&str> = out.results.rows[..3]
            .iter()
            .map(|r| r[3].as_str())
            .collect();
        assert_eq!(seeds, vec!["11", "12", "13"]);
        assert_eq!(out.summary.directions.len(), 1);
        assert!(out.summary.tensor.is_some());
    }

    #[test]
    fn campaign_is_deterministic() {
        let cfg = config("subadditivity = 3\nsandwich = true\ncompare_constant = true");
        let mut log_a = RunLog::default();
        let mut log_b = RunLog::default();
        let a = run_cell_campaign(&cfg, "cfg", &mut log_a).unwrap();
        let b = run_cell_campaign(&cfg, "cfg", &mut log_b).unwrap();
        assert_eq!(a.results.to_csv(), b.results.to_csv());
        assert_eq!(
            crate::harness::records::to_json(&a.summary).unwrap(),
            crate::harness::records::to_json(&b.summary).unwrap()
        );
    }

    #[test]
    fn checkerboard_stays_inside_constant_envelope() {
        let cfg = config("compare_constant = true");
        let mut log = RunLog::default();
        let out = run_cell_campaign(&cfg, "cfg", &mut log).unwrap();
        let cmp = out.summary.probes.compare_constant.unwrap();
        assert_eq!(cmp.lower_factor, 1.0);
        assert_eq!(cmp.upper_factor, 4.0);
        assert!(cmp.all_ok, "{:#?}", cmp.rows);
    }

    #[test]
    fn subadditivity_probe_reports_nonnegative_slack() {
        let cfg = config("subadditivity = 5");
        let mut log = RunLog::default();
        let out = run_cell_campaign(&cfg, "cfg", &mut log).unwrap();
        let sub = out.summary.probes.subadditivity.unwrap();
        assert_eq!(sub.pairs, 5);
        assert!(sub.all_nonnegative, "min slack {}", sub.min_slack);
    }
}
