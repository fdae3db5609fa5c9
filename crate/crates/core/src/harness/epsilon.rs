//! Finite-scale Dirichlet experiment: minimize the rescaled energy
//!
//! ```text
//!   F_ε(u) = ε^{-(d+2)} ∬_{D×D} B(x/ε) B(y/ε) a((y-x)/ε) (u(y)-u(x))^2 dy dx
//! ```
//!
//! over fields pinned to the affine datum `⟨z, x⟩` on the `2ε`-collar of a
//! fixed physical box `D`, and compare the minimum against the homogenized
//! energy `⟨A z, z⟩ |D|` along a decreasing schedule of scales.

use crate::env::{EnvKind, Realization};
use crate::error::{Error, Result};
use crate::geometry::{norm, IntBox};
use crate::harness::campaign::{compare_factors, draw_realization, kernel_summary, KernelSummary};
use crate::harness::config::{QuadratureChoice, RunConfig};
use crate::harness::records::{fmt_float, RunLog, Table};
use crate::kernel::{analytic_tensor, EffectiveTensor, Kernel};
use crate::lattice::{
    build_pinned_domain, cell_moment_weight_with, LatticeProblem, Pair, QuadraticForm, Variant,
};
use crate::solver::{minimize_quadratic, Minimizer, SolveOptions};
use rayon::prelude::*;
use serde::Serialize;
use std::time::Instant;

/// Resolution of the radial quadrature behind the reference tensor.
const REFERENCE_RESOLUTION: usize = 4096;

/// Exact homogenized Dirichlet energy of the affine datum: `⟨A z, z⟩ |D|`.
/// The tensor must be symmetric positive definite.
pub fn solve_homogenized_reference(
    tensor: &EffectiveTensor,
    domain_volume: f64,
    z: &[f64],
) -> Result<f64> {
    if !tensor.is_symmetric(1e-10) {
        return Err(Error::InvalidTensor("tensor is not symmetric".into()));
    }
    if !tensor.is_positive_definite() {
        return Err(Error::InvalidTensor(
            "tensor is not positive definite".into(),
        ));
    }
    if !(domain_volume > 0.0) {
        return Err(Error::InvalidTensor(
            "domain volume must be positive".into(),
        ));
    }
    Ok(tensor.quad(z) * domain_volume)
}

/// Scaled coefficient evaluation `a(ξ/ε)` with optional cell averaging.
fn scaled_offset_coefficient(
    kernel: &Kernel,
    eps: f64,
    eta: &[f64],
    h: f64,
    quadrature: QuadratureChoice,
) -> f64 {
    // Ball and Gaussian kernels rescale within their family, so the cell
    // average sees the jump (if any) exactly where it lives. The power
    // kernel is smooth away from zero and is evaluated through the same
    // quadrature via a direct closure.
    match quadrature {
        QuadratureChoice::Pointwise => {
            let scaled: Vec<f64> = eta.iter().map(|v| v / eps).collect();
            kernel.eval(&scaled)
        }
        QuadratureChoice::CellMoment => cell_moment_weight_with(
            &|xi: &[f64]| {
                let scaled: Vec<f64> = xi.iter().map(|v| v / eps).collect();
                kernel.eval(&scaled)
            },
            eta,
            h,
        ),
    }
}

/// Assemble the rescaled restricted form on the pinned domain problem.
/// Every site of the problem lies in `D`; pairs carry the ordered-sum
/// factor 2 and the `ε^{-(d+2)}` blowup.
fn assemble_scaled_form(
    problem: &LatticeProblem,
    real: &Realization,
    kernel: &Kernel,
    eps: f64,
    quadrature: QuadratureChoice,
) -> Result<QuadraticForm> {
    let d = problem.d;
    let h = problem.h;
    let smear = match quadrature {
        QuadratureChoice::Pointwise => 0.0,
        QuadratureChoice::CellMoment => h * (d as f64).sqrt(),
    };
    let reach = eps * kernel.cutoff + smear;
    let max_cells = (reach / h).ceil() as i64;
    let mut offsets: Vec<(Vec<i64>, f64)> = Vec::new();
    let scan = IntBox::new(vec![-max_cells; d], vec![max_cells + 1; d]);
    for o in scan.cells() {
        if o.iter().all(|c| *c == 0) {
            continue;
        }
        let first = o.iter().find(|c| **c != 0).unwrap();
        if *first < 0 {
            continue;
        }
        let eta: Vec<f64> = o.iter().map(|c| *c as f64 * h).collect();
        if norm(&eta) > reach {
            continue;
        }
        let a = scaled_offset_coefficient(kernel, eps, &eta, h, quadrature);
        if a > 0.0 {
            offsets.push((o, a));
        }
    }

    let n = problem.n_sites();
    let mut site_b = vec![0.0; n];
    for f in 0..n {
        let x = problem.site_pos(f);
        let scaled: Vec<f64> = x.iter().map(|v| v / eps).collect();
        site_b[f] = real.site_factor(&scaled)?;
    }

    let blowup = eps.powi(-(d as i32 + 2));
    let meas = h.powi(2 * d as i32);
    let mut pairs: Vec<Pair> = Vec::new();
    let mut incident: Vec<(usize, f64)> = Vec::new();
    for f in 0..n {
        if site_b[f] == 0.0 {
            continue;
        }
        let cell = problem.site_cell(f);
        incident.clear();
        for (o, a) in &offsets {
            let ncell: Vec<i64> = cell.iter().zip(o).map(|(c, s)| c + s).collect();
            let Some(g) = problem.flat_of(&ncell) else {
                continue;
            };
            if site_b[g] == 0.0 {
                continue;
            }
            let w = 2.0 * blowup * site_b[f] * site_b[g] * a * meas;
            incident.push((g, w));
        }
        incident.sort_unstable_by_key(|(g, _)| *g);
        for (g, w) in &incident {
            pairs.push(Pair {
                i: f as u32,
                j: *g as u32,
                w: *w,
            });
        }
    }
    Ok(QuadraticForm {
        n_sites: n,
        variant: Variant::RestrictedFull,
        pairs,
    })
}

/// One scale of the Dirichlet experiment on an already-built problem.
pub fn minimize_scaled_dirichlet(
    problem: &LatticeProblem,
    real: &Realization,
    kernel: &Kernel,
    eps: f64,
    z: &[f64],
    quadrature: QuadratureChoice,
    opts: &SolveOptions,
) -> Result<Minimizer> {
    let form = assemble_scaled_form(problem, real, kernel, eps, quadrature)?;
    let datum = problem.affine_field(z);
    minimize_quadratic(&form, problem, &datum, opts)
}

#[derive(Debug, Clone, Serialize)]
pub struct EpsLevelSummary {
    pub eps: f64,
    pub mean_value: f64,
    pub mean_rel_gap: f64,
    pub max_rel_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReferenceSummary {
    /// Tensor of the kernel alone (environment factor 1).
    pub tensor_entries: Vec<f64>,
    pub energy: f64,
    /// Per-instance envelope implied by the environment law.
    pub energy_lower: f64,
    pub energy_upper: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpsilonSummary {
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
    pub domain_volume: f64,
    pub z: Vec<f64>,
    pub reference: ReferenceSummary,
    pub per_eps: Vec<EpsLevelSummary>,
    /// Mean relative gap is non-increasing along the schedule.
    pub gaps_non_increasing: bool,
    pub final_rel_gap: f64,
}

pub struct EpsilonOutput {
    pub results: Table,
    pub summary: EpsilonSummary,
}

fn domain_cells(cfg: &RunConfig) -> Result<(IntBox, Vec<f64>, Vec<f64>)> {
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
                return Err(Error::ConfigInvalid {
                    path: "grid.domain".into(),
                    reason: format!("edge {v} is not a multiple of the spacing {h}"),
                });
            }
            out.push(c.round() as i64);
        }
    }
    Ok((IntBox::new(lo_cells, hi_cells), lo, hi))
}

pub fn run_epsilon_sequence(
    cfg: &RunConfig,
    config_text: &str,
    log: &mut RunLog,
) -> Result<EpsilonOutput> {
    let d = cfg.grid.d;
    let h = cfg.grid.h;
    let kernel = cfg.kernel.build(d)?;
    let opts = cfg.solver.options();
    let seeds = cfg.seeds.seeds(None);
    let schedule = &cfg.grid.epsilon_schedule;
    let z: Vec<f64> = match &cfg.grid.z {
        Some(z) => z.clone(),
        None => {
            let mut e = vec![0.0; d];
            e[0] = 1.0;
            e
        }
    };
    let (cells, lo_phys, hi_phys) = domain_cells(cfg)?;
    let volume = cells.volume(h);

    for &eps in schedule {
        if eps * kernel.r0 < h || 2.0 * eps < h {
            return Err(Error::EpsilonUnderresolved { eps, h });
        }
    }

    // The realization lives on the blown-up coordinates; one sample per
    // seed covers every scale of the schedule.
    let eps_min = *schedule.last().expect("validated nonempty");
    let mut lo_env = vec![0.0; d];
    let mut hi_env = vec![0.0; d];
    for i in 0..d {
        let candidates = [lo_phys[i] / eps_min, lo_phys[i] / schedule[0]];
        lo_env[i] = candidates.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
        let candidates = [hi_phys[i] / eps_min, hi_phys[i] / schedule[0]];
        hi_env[i] = candidates.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    }
    let mut reals = Vec::with_capacity(seeds.len());
    for &seed in &seeds {
        reals.push(draw_realization(cfg, seed, &lo_env, &hi_env, log)?);
    }

    let bare = analytic_tensor(&kernel, REFERENCE_RESOLUTION)?;
    let reference = solve_homogenized_reference(&bare, volume, &z)?;
    let (lf, uf) = compare_factors(&cfg.environment);
    let ref_lower = lf * reference;
    let ref_upper = uf * reference;
    let rel_gap_of = |value: f64| -> f64 {
        let dist = if value < ref_lower {
            ref_lower - value
        } else if value > ref_upper {
            value - ref_upper
        } else {
            0.0
        };
        dist / reference
    };

    let mut tasks = Vec::new();
    for ei in 0..schedule.len() {
        for si in 0..seeds.len() {
            tasks.push((ei, si));
        }
    }
    let solved: Vec<(Minimizer, usize, f64)> = tasks
        .par_iter()
        .map(|&(ei, si)| {
            let eps = schedule[ei];
            let problem = build_pinned_domain(
                crate::geometry::CellDomain::single(cells.clone()),
                d,
                h,
                2.0 * eps,
            )?;
            let start = Instant::now();
            let sol = minimize_scaled_dirichlet(
                &problem,
                &reals[si],
                &kernel,
                eps,
                &z,
                cfg.kernel.quadrature,
                &opts,
            )?;
            Ok((sol, problem.n_free(), start.elapsed().as_secs_f64() * 1e3))
        })
        .collect::<Result<_>>()?;

    let mut results = Table::new(vec![
        "eps",
        "seed",
        "value",
        "reference_lower",
        "reference_upper",
        "rel_gap",
        "free_sites",
        "floating_sites",
        "iterations",
        "relative_residual",
    ]);
    let mut per_eps = Vec::new();
    for (ei, &eps) in schedule.iter().enumerate() {
        let mut values = Vec::new();
        for (si, &seed) in seeds.iter().enumerate() {
            let (sol, free, millis) = &solved[ei * seeds.len() + si];
            log.timing(&format!("dirichlet eps={eps} seed={seed}"), *millis);
            results.push(vec![
                fmt_float(eps),
                seed.to_string(),
                fmt_float(sol.value),
                fmt_float(ref_lower),
                fmt_float(ref_upper),
                fmt_float(rel_gap_of(sol.value)),
                free.to_string(),
                sol.floating_sites.to_string(),
                sol.iterations.to_string(),
                fmt_float(sol.relative_residual),
            ]);
            values.push(sol.value);
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let gaps: Vec<f64> = values.iter().map(|&v| rel_gap_of(v)).collect();
        per_eps.push(EpsLevelSummary {
            eps,
            mean_value: mean,
            mean_rel_gap: gaps.iter().sum::<f64>() / gaps.len() as f64,
            max_rel_gap: gaps.iter().cloned().fold(0.0, f64::max),
        });
    }

    let gaps_non_increasing = per_eps
        .windows(2)
        .all(|w| w[1].mean_rel_gap <= w[0].mean_rel_gap + 1e-12);
    let final_rel_gap = per_eps.last().expect("nonempty").mean_rel_gap;

    let summary = EpsilonSummary {
        schema_version: cfg.schema_version,
        experiment: "gamma-limit".into(),
        label: cfg.label.clone(),
        code_version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: super::records::config_hash(config_text),
        kernel: kernel_summary(&kernel),
        environment: cfg.environment.clone(),
        seeds,
        domain_lo: lo_phys,
        domain_hi: hi_phys,
        domain_volume: volume,
        z,
        reference: ReferenceSummary {
            tensor_entries: bare.entries.clone(),
            energy: reference,
            energy_lower: ref_lower,
            energy_upper: ref_upper,
        },
        per_eps,
        gaps_non_increasing,
        final_rel_gap,
    };
    Ok(EpsilonOutput { results, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::RunConfig;
    use crate::kernel::KernelFamily;

    fn config(body: &str) -> RunConfig {
        RunConfig::from_str_validated(body).unwrap()
    }

    const BASE: &str = r#"
schema_version = 1
experiment = "gamma-limit"
label = "unit"

[kernel]
family = "ball"
r0 = 1.0

[environment]
kind = "constant"

[grid]
d = 1
h = 0.03125
epsilon_schedule = [0.25, 0.125]

[seeds]
base = 1
count = 1

[output]
directory = "unused"
"#;

    #[test]
    fn reference_energy_is_quadratic_form_times_volume() {
        let t = EffectiveTensor::new(2, vec![2.0, 0.5, 0.5, 1.0]).unwrap();
        let e = solve_homogenized_reference(&t, 3.0, &[1.0, 1.0]).unwrap();
        assert!((e - 12.0).abs() < 1e-12, "{e}");
    }

    #[test]
    fn asymmetric_or_indefinite_tensors_are_rejected() {
        let t = EffectiveTensor::new(2, vec![1.0, 0.2, -0.2, 1.0]).unwrap();
        assert!(matches!(
            solve_homogenized_reference(&t, 1.0, &[1.0, 0.0]),
            Err(Error::InvalidTensor(_))
        ));
        let t = EffectiveTensor::new(1, vec![-1.0]).unwrap();
        assert!(matches!(
            solve_homogenized_reference(&t, 1.0, &[1.0]),
            Err(Error::InvalidTensor(_))
        ));
    }

    #[test]
    fn underresolved_scale_is_refused() {
        let text = BASE.replace("[0.25, 0.125]", "[0.25, 0.015]");
        let cfg = config(&text);
        let mut log = RunLog::default();
        assert!(matches!(
            run_epsilon_sequence(&cfg, "cfg", &mut log),
            Err(Error::EpsilonUnderresolved { .. })
        ));
    }

    #[test]
    fn constant_environment_gap_shrinks_with_scale() {
        let cfg = config(BASE);
        let mut log = RunLog::default();
        let out = run_epsilon_sequence(&cfg, "cfg", &mut log).unwrap();
        assert_eq!(out.summary.per_eps.len(), 2);
        // Reference for the unit ball in 1-d is 2/3.
        assert!((out.summary.reference.energy - 2.0 / 3.0).abs() < 1e-6);
        assert!(
            out.summary.gaps_non_increasing,
            "{:#?}",
            out.summary.per_eps
        );
        assert!(
            out.summary.final_rel_gap < out.summary.per_eps[0].mean_rel_gap,
            "{:#?}",
            out.summary.per_eps
        );
    }

    #[test]
    fn scaled_ball_matches_family_rescaling() {
        // For the ball, evaluating at η/ε equals the ε-scaled family member.
        let kernel = Kernel::ball(1, 1.0);
        let eps = 0.25;
        let scaled = Kernel::new(
            KernelFamily::Ball,
            1,
            eps * kernel.r0,
            kernel.c,
            kernel.decay_c,
            kernel.kappa,
            eps * kernel.cutoff,
        )
        .unwrap();
        let h = 1.0 / 64.0;
        for m in 1..=20 {
            let eta = [m as f64 * h];
            let via_closure =
                scaled_offset_coefficient(&kernel, eps, &eta, h, QuadratureChoice::CellMoment);
            let via_family =
                crate::lattice::cell_moment_weight_with(&|xi: &[f64]| scaled.eval(xi), &eta, h);
            assert!(
                (via_closure - via_family).abs() <= 1e-12 * via_family.abs().max(1.0),
                "m={m}: {via_closure} vs {via_family}"
            );
        }
    }
}
