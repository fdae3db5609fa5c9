//! Cell-formula estimation of the effective quadratic form.
//!
//! For a direction `z`, the specific truncated minimum
//!
//! ```text
//!   m_K(z, Q_R) = (1/R^d) min { E_K(u) : u = ⟨z,·⟩ off the free sites }
//! ```
//!
//! converges as `R → ∞` and then `K → ∞` to `γ(z) = ⟨A z, z⟩`. This module
//! runs the solves over schedules of `R` and `K` and independent environment
//! draws, aggregates means, variances and confidence bands, and assembles
//! the effective tensor from directional values by polarization:
//! `A_ij = (γ(e_i+e_j) - γ(e_i) - γ(e_j)) / 2` for `i ≠ j`.
//!
//! Two structural identities of the discrete setup are exposed as checks:
//!
//! * sandwich: the ambient minimum exceeds the restricted truncated one by
//!   exactly the affine energy of the boundary-crossing pairs (those pairs
//!   connect pinned sites only, so both problems share one minimizer), and
//!   the restricted full minimum sits above the restricted truncated one;
//! * subadditivity: for disjoint domains, `Φ(A ∪ B) ≤ Φ(A) + Φ(B)` up to
//!   solver tolerance, because gluing the two minimizers is admissible for
//!   the union and no pair couples `A` to a free site of `B`.

use crate::env::Realization;
use crate::error::Result;
use crate::geometry::{CellDomain, IntBox};
use crate::kernel::{EffectiveTensor, Kernel};
use crate::lattice::{
    assemble_form, build_problem, build_problem_on, cross_affine_term, energy, KernelQuadrature,
    LatticeProblem, Variant,
};
use crate::solver::{minimize_quadratic, Minimizer, SolveOptions};
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct CellEstimate {
    /// Raw minimum of the energy.
    pub minimum: f64,
    /// Minimum per unit volume of the domain.
    pub value: f64,
    /// Energy of the affine datum per unit volume (an upper bound).
    pub affine_value: f64,
    pub free_sites: usize,
    pub floating_sites: usize,
    pub iterations: usize,
    pub relative_residual: f64,
}

fn estimate_from(problem: &LatticeProblem, sol: &Minimizer, affine_energy: f64) -> CellEstimate {
    let vol = problem.domain.volume(problem.h);
    CellEstimate {
        minimum: sol.value,
        value: sol.value / vol,
        affine_value: affine_energy / vol,
        free_sites: problem.n_free(),
        floating_sites: sol.floating_sites,
        iterations: sol.iterations,
        relative_residual: sol.relative_residual,
    }
}

/// One truncated cell solve on a prebuilt problem.
pub fn cell_minimum(
    problem: &LatticeProblem,
    real: &Realization,
    kernel: &Kernel,
    z: &[f64],
    variant: Variant,
    quadrature: KernelQuadrature,
    opts: &SolveOptions,
) -> Result<CellEstimate> {
    let form = assemble_form(problem, real, kernel, variant, quadrature)?;
    let datum = problem.affine_field(z);
    let affine_energy = energy(&form, &datum)?;
    let sol = minimize_quadratic(&form, problem, &datum, opts)?;
    Ok(estimate_from(problem, &sol, affine_energy))
}

#[derive(Debug, Clone)]
pub struct SandwichReport {
    pub ambient: CellEstimate,
    pub restricted_full: CellEstimate,
    pub restricted_truncated: CellEstimate,
    /// Raw minimum gap `ambient − restricted_truncated`.
    pub gap: f64,
    /// Deviation of the gap from the crossing-pair affine sum.
    pub gap_identity_dev: f64,
    /// Gap divided by the surface area of the domain's bounding cube.
    pub gap_per_area: f64,
}

/// Solve all three variants on one problem and check the gap identity.
pub fn sandwich_check(
    problem: &LatticeProblem,
    real: &Realization,
    kernel: &Kernel,
    z: &[f64],
    quadrature: KernelQuadrature,
    opts: &SolveOptions,
) -> Result<SandwichReport> {
    let datum = problem.affine_field(z);
    let mut runs = Vec::new();
    let mut cross = 0.0;
    for variant in [
        Variant::TruncatedAmbient,
        Variant::RestrictedFull,
        Variant::RestrictedTruncated,
    ] {
        let form = assemble_form(problem, real, kernel, variant, quadrature)?;
        if variant == Variant::TruncatedAmbient {
            cross = cross_affine_term(&form, problem, z);
        }
        let affine_energy = energy(&form, &datum)?;
        let sol = minimize_quadratic(&form, problem, &datum, opts)?;
        runs.push(estimate_from(problem, &sol, affine_energy));
    }
    let restricted_truncated = runs.pop().unwrap();
    let restricted_full = runs.pop().unwrap();
    let ambient = runs.pop().unwrap();
    let gap = ambient.minimum - restricted_truncated.minimum;
    let d = problem.d as f64;
    let bounding = problem.domain.bounding();
    let side = (0..problem.d)
        .map(|i| (bounding.hi[i] - bounding.lo[i]) as f64 * problem.h)
        .fold(0.0, f64::max);
    let area = 2.0 * d * side.powi(problem.d as i32 - 1);
    Ok(SandwichReport {
        ambient,
        restricted_full,
        restricted_truncated,
        gap,
        gap_identity_dev: (gap - cross).abs(),
        gap_per_area: gap / area,
    })
}

#[derive(Debug, Clone)]
pub struct RLevelStats {
    pub r: f64,
    pub values: Vec<f64>,
    pub mean: f64,
    /// Unbiased sample variance across realizations.
    pub variance: f64,
}

pub(crate) fn stats(r: f64, values: Vec<f64>) -> RLevelStats {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    RLevelStats {
        r,
        values,
        mean,
        variance,
    }
}

#[derive(Debug, Clone)]
pub struct GammaKEstimate {
    pub k: f64,
    pub per_r: Vec<RLevelStats>,
    /// Mean at the largest box size.
    pub value: f64,
    /// Two standard errors at the largest box size.
    pub ci_halfwidth: f64,
}

/// Estimate `γ_K(z)` over a schedule of box sizes and a panel of
/// realizations (one per seed, all covering the largest margin box).
pub fn estimate_gamma_k(
    d: usize,
    h: f64,
    k: f64,
    r_schedule: &[f64],
    z: &[f64],
    kernel: &Kernel,
    reals: &[Realization],
    variant: Variant,
    quadrature: KernelQuadrature,
    opts: &SolveOptions,
) -> Result<GammaKEstimate> {
    let mut per_r = Vec::with_capacity(r_schedule.len());
    for &r in r_schedule {
        let problem = build_problem(d, r, h, k)?;
        let values: Vec<f64> = reals
            .par_iter()
            .map(|real| {
                cell_minimum(&problem, real, kernel, z, variant, quadrature, opts).map(|e| e.value)
            })
            .collect::<Result<_>>()?;
        per_r.push(stats(r, values));
    }
    let last = per_r.last().expect("empty R schedule");
    let n = last.values.len() as f64;
    Ok(GammaKEstimate {
        k,
        value: last.mean,
        ci_halfwidth: 2.0 * (last.variance / n).sqrt(),
        per_r,
    })
}

#[derive(Debug, Clone)]
pub struct DirectionEstimate {
    pub z: Vec<f64>,
    pub per_k: Vec<GammaKEstimate>,
    /// Value at the largest truncation.
    pub gamma: f64,
    /// Last increment of the K-schedule, a convergence indicator.
    pub k_band: f64,
    /// Whether the K-schedule was non-decreasing within joint confidence.
    pub monotone_ok: bool,
}

#[derive(Debug, Clone)]
pub struct TensorEstimate {
    pub d: usize,
    pub directions: Vec<DirectionEstimate>,
    pub tensor: EffectiveTensor,
}

/// Probe directions: the coordinate vectors, then the pair sums needed for
/// polarization of the off-diagonal entries.
pub fn z_basis(d: usize) -> Vec<Vec<f64>> {
    let mut zs = Vec::new();
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        zs.push(e);
    }
    for i in 0..d {
        for j in (i + 1)..d {
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            e[j] = 1.0;
            zs.push(e);
        }
    }
    zs
}

/// Run the full K- and R-schedule for every probe direction and polarize
/// into an effective tensor.
#[allow(clippy::too_many_arguments)]
pub fn estimate_tensor(
    d: usize,
    h: f64,
    k_schedule: &[f64],
    r_schedule: &[f64],
    kernel: &Kernel,
    reals: &[Realization],
    variant: Variant,
    quadrature: KernelQuadrature,
    opts: &SolveOptions,
) -> Result<TensorEstimate> {
    let mut directions = Vec::new();
    for z in z_basis(d) {
        let mut per_k = Vec::new();
        for &k in k_schedule {
            per_k.push(estimate_gamma_k(
                d, h, k, r_schedule, &z, kernel, reals, variant, quadrature, opts,
            )?);
        }
        let gamma = per_k.last().expect("empty K schedule").value;
        let k_band = if per_k.len() > 1 {
            (per_k[per_k.len() - 1].value - per_k[per_k.len() - 2].value).abs()
        } else {
            0.0
        };
        let monotone_ok = per_k
            .windows(2)
            .all(|w| w[1].value >= w[0].value - (w[0].ci_halfwidth + w[1].ci_halfwidth));
        directions.push(DirectionEstimate {
            z,
            per_k,
            gamma,
            k_band,
            monotone_ok,
        });
    }
    let gamma_of = |z: &[f64]| -> f64 {
        directions
            .iter()
            .find(|dir| dir.z == z)
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
    let tensor = EffectiveTensor::new(d, entries)?;
    Ok(TensorEstimate {
        d,
        directions,
        tensor,
    })
}

#[derive(Debug, Clone)]
pub struct SubadditivityReport {
    pub minimum_a: f64,
    pub minimum_b: f64,
    pub minimum_union: f64,
    /// `Φ(A) + Φ(B) - Φ(A ∪ B)`, nonnegative up to solver tolerance.
    pub slack: f64,
}

/// Check `Φ(A ∪ B) ≤ Φ(A) + Φ(B)` on two disjoint cell boxes.
#[allow(clippy::too_many_arguments)]
pub fn subadditivity_check(
    d: usize,
    h: f64,
    k: f64,
    kernel: &Kernel,
    real: &Realization,
    z: &[f64],
    box_a: IntBox,
    box_b: IntBox,
    quadrature: KernelQuadrature,
    opts: &SolveOptions,
) -> Result<SubadditivityReport> {
    let union = CellDomain::union(vec![box_a.clone(), box_b.clone()])?;
    let solve = |domain: CellDomain| -> Result<f64> {
        let problem = build_problem_on(domain, d, h, k)?;
        Ok(cell_minimum(
            &problem,
            real,
            kernel,
            z,
            Variant::TruncatedAmbient,
            quadrature,
            opts,
        )?
        .minimum)
    };
    let minimum_a = solve(CellDomain::single(box_a))?;
    let minimum_b = solve(CellDomain::single(box_b))?;
    let minimum_union = solve(union)?;
    Ok(SubadditivityReport {
        minimum_a,
        minimum_b,
        minimum_union,
        slack: minimum_a + minimum_b - minimum_union,
    })
}
