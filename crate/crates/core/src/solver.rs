//! Minimization of the pair energy over the free sites.
//!
//! The energy `E(u) = Σ w_ij (u_i - u_j)^2` is quadratic, so the minimizer
//! with pinned boundary values solves a sparse SPD system. Two solvers are
//! provided: Jacobi-preconditioned conjugate gradients (the workhorse) and a
//! dense Cholesky factorization used as an independent cross-check on small
//! problems.
//!
//! Free sites that have no path of positive-weight pairs to any pinned site
//! ("floating" components, e.g. sites walled off by a perforation) have no
//! unique minimizer; they are set to the mean of the boundary datum over the
//! component, reported in `floating_sites`, and excluded from the solve.
//!
//! CG starts from the datum restricted to the free sites. For constant
//! coefficients the affine datum is already the exact minimizer, so the
//! solver returns after zero iterations, and because the whole trajectory is
//! linear in the data, scaling the datum scales the minimizer exactly.

use crate::error::{Error, Result};
use crate::lattice::{energy, LatticeProblem, QuadraticForm, SiteMask};

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Relative residual target.
    pub tol: f64,
    /// Iteration cap; `None` picks `50 sqrt(n) + 1000`.
    pub max_iter: Option<usize>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-10,
            max_iter: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimizer {
    /// Full field: datum on pinned sites, solution on free sites.
    pub field: Vec<f64>,
    /// Energy of the full field.
    pub value: f64,
    pub iterations: usize,
    pub relative_residual: f64,
    pub floating_sites: usize,
}

/// Sparse SPD system on the anchored free sites: `A u = b` with
/// `A_ii = Σ w`, `A_ij = -w`, `b_i = Σ_{pinned j} w v_j`.
struct FreeSystem {
    sites: Vec<usize>,
    diag: Vec<f64>,
    /// Off-diagonal CSR: per-row (column, weight) lists.
    rows: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
    floating: Vec<usize>,
    /// Union-find root per floating site, for grouping.
    float_root: Vec<usize>,
}

fn uf_find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn build_free_system(
    form: &QuadraticForm,
    problem: &LatticeProblem,
    datum: &[f64],
) -> Result<FreeSystem> {
    let n = problem.n_sites();
    if datum.len() != n {
        return Err(Error::FieldIncomplete {
            got: datum.len(),
            want: n,
        });
    }
    let free: Vec<usize> = (0..n)
        .filter(|f| problem.mask[*f] == SiteMask::Free)
        .collect();
    let mut free_of = vec![usize::MAX; n];
    for (k, f) in free.iter().enumerate() {
        free_of[*f] = k;
    }

    // Anchoring: union free sites over free-free pairs, then flag roots that
    // touch a pinned site.
    let mut parent: Vec<usize> = (0..free.len()).collect();
    let mut touches_pinned = vec![false; free.len()];
    for p in form.pairs.iter().filter(|p| p.w > 0.0) {
        let (fi, fj) = (free_of[p.i as usize], free_of[p.j as usize]);
        match (fi != usize::MAX, fj != usize::MAX) {
            (true, true) => {
                let (a, b) = (uf_find(&mut parent, fi), uf_find(&mut parent, fj));
                if a != b {
                    parent[a] = b;
                }
            }
            (true, false) => touches_pinned[fi] = true,
            (false, true) => touches_pinned[fj] = true,
            (false, false) => {}
        }
    }
    let mut anchored_root = vec![false; free.len()];
    for k in 0..free.len() {
        if touches_pinned[k] {
            let r = uf_find(&mut parent, k);
            anchored_root[r] = true;
        }
    }

    let mut solve_of = vec![None; n];
    let mut sites = Vec::new();
    let mut floating = Vec::new();
    let mut float_root = Vec::new();
    for (k, f) in free.iter().enumerate() {
        let r = uf_find(&mut parent, k);
        if anchored_root[r] {
            solve_of[*f] = Some(sites.len());
            sites.push(*f);
        } else {
            floating.push(*f);
            float_root.push(r);
        }
    }

    let m = sites.len();
    let mut diag = vec![0.0; m];
    let mut rows = vec![Vec::new(); m];
    let mut rhs = vec![0.0; m];
    for p in form.pairs.iter().filter(|p| p.w > 0.0) {
        let (i, j) = (p.i as usize, p.j as usize);
        match (solve_of[i], solve_of[j]) {
            (Some(a), Some(b)) => {
                diag[a] += p.w;
                diag[b] += p.w;
                rows[a].push((b, p.w));
                rows[b].push((a, p.w));
            }
            (Some(a), None) => {
                diag[a] += p.w;
                rhs[a] += p.w * datum[j];
            }
            (None, Some(b)) => {
                diag[b] += p.w;
                rhs[b] += p.w * datum[i];
            }
            (None, None) => {}
        }
    }
    Ok(FreeSystem {
        sites,
        diag,
        rows,
        rhs,
        floating,
        float_root,
    })
}

fn apply(sys: &FreeSystem, x: &[f64], out: &mut [f64]) {
    for i in 0..x.len() {
        let mut v = sys.diag[i] * x[i];
        for (j, w) in &sys.rows[i] {
            v -= w * x[*j];
        }
        out[i] = v;
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Fill in floating components with the component mean of the datum and
/// return the floating site count.
fn settle_floating(sys: &FreeSystem, datum: &[f64], field: &mut [f64]) -> usize {
    use std::collections::HashMap;
    let mut groups: HashMap<usize, (f64, usize)> = HashMap::new();
    for (site, root) in sys.floating.iter().zip(&sys.float_root) {
        let e = groups.entry(*root).or_insert((0.0, 0));
        e.0 += datum[*site];
        e.1 += 1;
    }
    for (site, root) in sys.floating.iter().zip(&sys.float_root) {
        let (sum, count) = groups[root];
        field[*site] = sum / count as f64;
    }
    sys.floating.len()
}

/// Minimize the form over the free sites with the given boundary datum
/// (also the CG warm start) using Jacobi-preconditioned CG.
pub fn minimize_quadratic(
    form: &QuadraticForm,
    problem: &LatticeProblem,
    datum: &[f64],
    opts: &SolveOptions,
) -> Result<Minimizer> {
    let sys = build_free_system(form, problem, datum)?;
    let m = sys.sites.len();
    let max_iter = opts
        .max_iter
        .unwrap_or(50 * (m as f64).sqrt() as usize + 1000);

    let mut field = datum.to_vec();
    let floating_sites = settle_floating(&sys, datum, &mut field);

    let bnorm = norm2(&sys.rhs);
    let mut x: Vec<f64> = sys.sites.iter().map(|f| datum[*f]).collect();
    let mut iterations = 0usize;
    let mut rel = 0.0;
    if m > 0 && bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
    } else if m > 0 {
        let mut r = vec![0.0; m];
        apply(&sys, &x, &mut r);
        for i in 0..m {
            r[i] = sys.rhs[i] - r[i];
        }
        let inv_diag: Vec<f64> = sys.diag.iter().map(|d| 1.0 / d).collect();
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let mut ap = vec![0.0; m];
        rel = norm2(&r) / bnorm;
        let mut best = (rel, x.clone());
        while rel > opts.tol {
            if iterations >= max_iter {
                return Err(Error::NoConvergence {
                    residual: best.0,
                    iterations,
                    best: best.1,
                });
            }
            apply(&sys, &p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            let alpha = rz / pap;
            for i in 0..m {
                x[i] += alpha * p[i];
            }
            iterations += 1;
            if iterations % 250 == 0 {
                // periodic exact residual refresh
                apply(&sys, &x, &mut r);
                for i in 0..m {
                    r[i] = sys.rhs[i] - r[i];
                }
            } else {
                for i in 0..m {
                    r[i] -= alpha * ap[i];
                }
            }
            for i in 0..m {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..m {
                p[i] = z[i] + beta * p[i];
            }
            rel = norm2(&r) / bnorm;
            if rel < best.0 {
                best = (rel, x.clone());
            }
        }
    }
    for (k, f) in sys.sites.iter().enumerate() {
        field[*f] = x[k];
    }
    let value = energy(form, &field)?;
    Ok(Minimizer {
        field,
        value,
        iterations,
        relative_residual: rel,
        floating_sites,
    })
}

/// Dense Cholesky solve of the same system, as an independent oracle.
pub fn dense_oracle_solve(
    form: &QuadraticForm,
    problem: &LatticeProblem,
    datum: &[f64],
) -> Result<Minimizer> {
    const LIMIT: usize = 4096;
    let sys = build_free_system(form, problem, datum)?;
    let m = sys.sites.len();
    if m > LIMIT {
        return Err(Error::OracleTooLarge {
            free: m,
            limit: LIMIT,
        });
    }
    let mut field = datum.to_vec();
    let floating_sites = settle_floating(&sys, datum, &mut field);
    if m > 0 {
        let mut a = nalgebra::DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            a[(i, i)] = sys.diag[i];
            for (j, w) in &sys.rows[i] {
                a[(i, *j)] -= w;
            }
        }
        let b = nalgebra::DVector::from_column_slice(&sys.rhs);
        let chol = a.cholesky().ok_or(Error::NoConvergence {
            residual: f64::INFINITY,
            iterations: 0,
            best: Vec::new(),
        })?;
        let x = chol.solve(&b);
        for (k, f) in sys.sites.iter().enumerate() {
            field[*f] = x[k];
        }
    }
    let value = energy(form, &field)?;
    Ok(Minimizer {
        field,
        value,
        iterations: 0,
        relative_residual: 0.0,
        floating_sites,
    })
}

/// Convenience: both solvers on the same data, with the maximum field
/// discrepancy. Used by the self-check probes.
pub fn solver_cross_check(
    form: &QuadraticForm,
    problem: &LatticeProblem,
    datum: &[f64],
    opts: &SolveOptions,
) -> Result<(Minimizer, Minimizer, f64)> {
    let cg = minimize_quadratic(form, problem, datum, opts)?;
    let dense = dense_oracle_solve(form, problem, datum)?;
    let dev = cg
        .field
        .iter()
        .zip(&dense.field)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok((cg, dense, dev))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{sample_environment, EnvKind, EnvironmentSpec};
    use crate::kernel::Kernel;
    use crate::lattice::{assemble_form, build_problem, KernelQuadrature, Pair, Variant};
    use approx::assert_relative_eq;

    fn checkerboard_setup(r: f64) -> (crate::lattice::LatticeProblem, QuadraticForm) {
        let spec = EnvironmentSpec {
            d: 1,
            kind: EnvKind::Checkerboard {
                lambda1: 1.0,
                lambda2: 4.0,
                p: 0.5,
                cell_size: 1.0,
            },
        };
        let half = r / 2.0 + 4.0;
        let real = sample_environment(&spec, 42, &[-half], &[half]).unwrap();
        let p = build_problem(1, r, 0.5, 2.0).unwrap();
        let k = Kernel::ball(1, 1.0);
        let form = assemble_form(
            &p,
            &real,
            &k,
            Variant::TruncatedAmbient,
            KernelQuadrature::Pointwise,
        )
        .unwrap();
        (p, form)
    }

    #[test]
    fn constant_coefficients_converge_instantly() {
        // The affine warm start is already the minimizer.
        let p = build_problem(1, 8.0, 1.0, 2.0).unwrap();
        let real = sample_environment(&EnvironmentSpec::constant(1), 0, &[-6.0], &[6.0]).unwrap();
        let k = Kernel::ball(1, 1.0);
        let form = assemble_form(
            &p,
            &real,
            &k,
            Variant::TruncatedAmbient,
            KernelQuadrature::Pointwise,
        )
        .unwrap();
        let datum = p.affine_field(&[1.0]);
        let sol = minimize_quadratic(&form, &p, &datum, &SolveOptions::default()).unwrap();
        assert_eq!(sol.iterations, 0);
        assert_eq!(sol.field, datum);
        assert_eq!(sol.floating_sites, 0);
    }

    #[test]
    fn zero_datum_gives_zero_field() {
        let (p, form) = checkerboard_setup(16.0);
        let sol = minimize_quadratic(&form, &p, &vec![0.0; p.n_sites()], &SolveOptions::default())
            .unwrap();
        assert_eq!(sol.iterations, 0);
        assert_eq!(sol.value, 0.0);
        assert!(sol.field.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn cg_matches_dense_oracle() {
        let (p, form) = checkerboard_setup(32.0);
        let datum = p.affine_field(&[1.0]);
        let (cg, dense, dev) =
            solver_cross_check(&form, &p, &datum, &SolveOptions::default()).unwrap();
        assert!(dev <= 1e-8, "field deviation {dev}");
        assert_relative_eq!(cg.value, dense.value, max_relative = 1e-10);
        assert!(cg.value <= crate::lattice::energy(&form, &datum).unwrap() + 1e-12);
    }

    #[test]
    fn minimizer_scales_quadratically() {
        let (p, form) = checkerboard_setup(32.0);
        let datum = p.affine_field(&[1.0]);
        let doubled: Vec<f64> = datum.iter().map(|v| 2.0 * v).collect();
        let a = minimize_quadratic(&form, &p, &datum, &SolveOptions::default()).unwrap();
        let b = minimize_quadratic(&form, &p, &doubled, &SolveOptions::default()).unwrap();
        assert_relative_eq!(b.value, 4.0 * a.value, max_relative = 1e-12);
    }

    #[test]
    fn floating_component_takes_datum_mean() {
        // Hand-built form on the 12-site line: free sites are 4..=7; site 5
        // is left with no pairs at all, sites 6 and 7 hang off pinned site 8.
        let p = build_problem(1, 8.0, 1.0, 2.0).unwrap();
        let form = QuadraticForm {
            n_sites: p.n_sites(),
            variant: Variant::RestrictedFull,
            pairs: vec![
                Pair { i: 3, j: 4, w: 1.0 },
                Pair { i: 6, j: 7, w: 1.0 },
                Pair { i: 7, j: 8, w: 1.0 },
            ],
        };
        let datum: Vec<f64> = (0..p.n_sites()).map(|f| f as f64).collect();
        let sol = minimize_quadratic(&form, &p, &datum, &SolveOptions::default()).unwrap();
        assert_eq!(sol.floating_sites, 1);
        assert_eq!(sol.field[5], 5.0);
        // Anchored chains equalize with their pinned neighbour.
        assert_relative_eq!(sol.field[4], 3.0, max_relative = 1e-12);
        assert_relative_eq!(sol.field[6], 8.0, max_relative = 1e-10);
        assert_relative_eq!(sol.field[7], 8.0, max_relative = 1e-10);
    }

    #[test]
    fn iteration_cap_reports_best_iterate() {
        let (p, form) = checkerboard_setup(64.0);
        let datum: Vec<f64> = (0..p.n_sites()).map(|f| (f as f64).cos()).collect();
        let opts = SolveOptions {
            tol: 1e-14,
            max_iter: Some(2),
        };
        match minimize_quadratic(&form, &p, &datum, &opts) {
            Err(crate::error::Error::NoConvergence {
                residual,
                iterations,
                best,
            }) => {
                assert_eq!(iterations, 2);
                assert!(residual.is_finite());
                assert!(!best.is_empty());
            }
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }

    #[test]
    fn oracle_rejects_large_systems() {
        let p = build_problem(2, 40.0, 0.5, 2.0).unwrap();
        let real =
            sample_environment(&EnvironmentSpec::constant(2), 0, &[-24.0; 2], &[24.0; 2]).unwrap();
        let k = Kernel::ball(2, 1.0);
        let form = assemble_form(
            &p,
            &real,
            &k,
            Variant::RestrictedFull,
            KernelQuadrature::Pointwise,
        )
        .unwrap();
        let datum = p.affine_field(&[1.0, 0.0]);
        assert!(matches!(
            dense_oracle_solve(&form, &p, &datum),
            Err(crate::error::Error::OracleTooLarge { .. })
        ));
    }
}
