//! Lattice discretization of the double-integral energy.
//!
//! A problem instance fixes a domain `U` (a union of cells), a pinning
//! collar of width `K` inside `U`, and a margin of ambient sites around `U`.
//! Sites are the cell centers of the margin box; each site carries one of
//! three masks:
//!
//! * `Exterior`: outside `U`, always pinned,
//! * `Collar`: inside `U` with `dist(x, ∂U) < K`, pinned,
//! * `Free`: inside `U` with `dist(x, ∂U) ≥ K`, an unknown.
//!
//! The energy is a weighted sum over site pairs,
//! `E(u) = Σ w_ij (u_i - u_j)^2`, approximating
//! `∬ b(x,y) (u(y)-u(x))^2 dy dx` with one `h^d` factor per integral. The
//! double integral runs over ordered pairs with `x ∈ U`, so a stored
//! unordered pair carries factor 2 when both endpoints lie in `U` and factor
//! 1 when exactly one does (those cross pairs connect two pinned sites and
//! only shift the minimum by a constant).
//!
//! The radial factor of a pair weight comes in two quadrature flavours.
//! `Pointwise` evaluates `a` at the center offset, which matches the obvious
//! hand computation but misbehaves for indicator kernels whose support
//! radius is a lattice multiple: offsets sitting exactly on the
//! discontinuity sphere carry a full cell of weight and the discrete energy
//! overshoots the integral by O(h) with a large constant. `CellMoment`
//! instead integrates `a` against the exact cell-pair (triangular) overlap
//! profile, normalized to preserve the second moment `a(ξ)|ξ|^2` that the
//! energy of affine fields actually sees; for smooth kernels the two agree
//! to O(h^2), for indicators only `CellMoment` converges at a useful rate.

use crate::env::Realization;
use crate::error::{Error, Result};
use crate::geometry::{cell_center, CellDomain, IntBox};
use crate::kernel::Kernel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteMask {
    Exterior,
    Collar,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// `x ∈ U`, `y` anywhere in the margin, `|x-y| < K`.
    TruncatedAmbient,
    /// `x, y ∈ U`, full kernel up to its cutoff.
    RestrictedFull,
    /// `x, y ∈ U`, `|x-y| < K`.
    RestrictedTruncated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelQuadrature {
    Pointwise,
    CellMoment,
}

#[derive(Debug, Clone)]
pub struct LatticeProblem {
    pub d: usize,
    pub h: f64,
    /// Collar width and truncation radius, a multiple of `h`.
    pub k: f64,
    pub domain: CellDomain,
    /// Site box: bounding box of the domain dilated by the margin.
    pub margin: IntBox,
    pub mask: Vec<SiteMask>,
    dims: Vec<usize>,
    strides: Vec<usize>,
}

impl LatticeProblem {
    pub fn n_sites(&self) -> usize {
        self.mask.len()
    }

    pub fn n_free(&self) -> usize {
        self.mask.iter().filter(|m| **m == SiteMask::Free).count()
    }

    pub fn site_cell(&self, flat: usize) -> Vec<i64> {
        let mut rem = flat;
        let d = self.d;
        let mut c = vec![0i64; d];
        for i in (0..d).rev() {
            c[i] = self.margin.lo[i] + (rem % self.dims[i]) as i64;
            rem /= self.dims[i];
        }
        c
    }

    pub fn site_pos(&self, flat: usize) -> Vec<f64> {
        cell_center(&self.site_cell(flat), self.h)
    }

    pub fn flat_of(&self, cell: &[i64]) -> Option<usize> {
        let mut f = 0usize;
        for i in 0..self.d {
            let off = cell[i] - self.margin.lo[i];
            if off < 0 || off >= self.dims[i] as i64 {
                return None;
            }
            f += off as usize * self.strides[i];
        }
        Some(f)
    }

    /// Affine field `u(x) = ⟨z, x⟩` on all sites.
    pub fn affine_field(&self, z: &[f64]) -> Vec<f64> {
        (0..self.n_sites())
            .map(|f| {
                let x = self.site_pos(f);
                crate::geometry::dot(z, &x)
            })
            .collect()
    }

    pub fn in_domain(&self, flat: usize) -> bool {
        self.mask[flat] != SiteMask::Exterior
    }
}

/// Centered-cube problem: domain `Q_R`, margin `Q_{R+2K}`.
pub fn build_problem(d: usize, r: f64, h: f64, k: f64) -> Result<LatticeProblem> {
    let steps = r / h;
    if (steps - steps.round()).abs() > 1e-9 {
        return Err(Error::Incommensurate(format!(
            "R={r} is not a multiple of the spacing h={h}"
        )));
    }
    let cube = IntBox::centered_cube(d, r, h)?;
    build_problem_on(CellDomain::single(cube), d, h, k)
}

/// Problem on an arbitrary cell domain with pinning collar `K` and an
/// ambient margin of the same width.
pub fn build_problem_on(domain: CellDomain, d: usize, h: f64, k: f64) -> Result<LatticeProblem> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Incommensurate("spacing must be positive".into()));
    }
    if k < h {
        return Err(Error::Incommensurate(format!(
            "K={k} must be at least the spacing h={h}"
        )));
    }
    let k_cells = (k / h).round().max(1.0);
    let k_eff = k_cells * h;
    let margin = domain.bounding().dilate(k_cells as i64);
    let prob = build_with_margin(domain, d, h, k_eff, margin)?;
    if prob.n_free() == 0 {
        let r = prob
            .domain
            .bounding()
            .hi
            .iter()
            .zip(&prob.domain.bounding().lo)
            .map(|(b, a)| (b - a) as f64 * h)
            .fold(f64::INFINITY, f64::min);
        return Err(Error::NoFreeSites { r, k: k_eff });
    }
    Ok(prob)
}

/// Like [`build_problem_on`] but with an explicit collar width (used by the
/// finite-scale Dirichlet experiments, where the collar is `2ε` and no
/// ambient margin is needed). A collar wide enough to pin every site is
/// allowed: the minimization then degenerates to evaluating the datum.
pub fn build_pinned_domain(
    domain: CellDomain,
    d: usize,
    h: f64,
    collar: f64,
) -> Result<LatticeProblem> {
    let margin = domain.bounding();
    build_with_margin(domain, d, h, collar, margin)
}

fn build_with_margin(
    domain: CellDomain,
    d: usize,
    h: f64,
    collar: f64,
    margin: IntBox,
) -> Result<LatticeProblem> {
    let dims: Vec<usize> = margin
        .lo
        .iter()
        .zip(&margin.hi)
        .map(|(a, b)| (b - a) as usize)
        .collect();
    let mut strides = vec![1usize; d];
    for i in (0..d.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    let n: usize = dims.iter().product();
    let mut mask = vec![SiteMask::Exterior; n];
    let mut prob = LatticeProblem {
        d,
        h,
        k: collar,
        domain,
        margin,
        mask: Vec::new(),
        dims,
        strides,
    };
    for f in 0..n {
        let cell = prob.site_cell(f);
        if prob.domain.contains_cell(&cell) {
            let x = cell_center(&cell, h);
            if prob.domain.complement_dist_at_least(&x, h, collar) {
                mask[f] = SiteMask::Free;
            } else {
                mask[f] = SiteMask::Collar;
            }
        }
    }
    prob.mask = mask;
    Ok(prob)
}

#[derive(Debug, Clone, Copy)]
pub struct Pair {
    pub i: u32,
    pub j: u32,
    pub w: f64,
}

#[derive(Debug, Clone)]
pub struct QuadraticForm {
    pub n_sites: usize,
    pub variant: Variant,
    /// Unordered pairs, sorted by `(i, j)`, weights with the h^{2d} measure
    /// and the in-domain counting factor folded in.
    pub pairs: Vec<Pair>,
}

/// Second-moment cell average of the radial factor at center offset `η`:
///
/// ```text
///   a_eff(η) = ∫ T_h(e) a(η+e) |η+e|^2 de / |η|^2
/// ```
///
/// with `T_h` the tensor tent profile of the cell-pair overlap. The integral
/// uses per-axis two-point Gauss nodes on `2m` panels of `[-h, h]`, which is
/// exact wherever `a` is polynomial on each panel (in particular for
/// indicator kernels in 1-d whose jump sits on a panel edge).
fn cell_moment_weight(kernel: &Kernel, eta: &[f64], h: f64) -> f64 {
    cell_moment_weight_with(&|xi| kernel.eval(xi), eta, h)
}

/// Same quadrature for an arbitrary even coefficient profile, used by the
/// finite-scale experiments where the kernel argument carries a `1/ε`.
pub(crate) fn cell_moment_weight_with(eval: &dyn Fn(&[f64]) -> f64, eta: &[f64], h: f64) -> f64 {
    const M: usize = 8;
    let d = eta.len();
    let panels = 2 * M;
    let pw = h / M as f64;
    let gauss = pw / (2.0 * 3.0f64.sqrt());
    // per-axis nodes and tent-weighted quadrature weights
    let mut nodes = Vec::with_capacity(panels * 2);
    for p in 0..panels {
        let mid = -h + (p as f64 + 0.5) * pw;
        for node in [mid - gauss, mid + gauss] {
            let tent = (h - node.abs()) / (h * h);
            nodes.push((node, tent * pw / 2.0));
        }
    }
    let per_axis = nodes.len();
    let mut idx = vec![0usize; d];
    let mut total = 0.0;
    let mut shifted = vec![0.0; d];
    loop {
        let mut w = 1.0;
        for k in 0..d {
            let (e, wk) = nodes[idx[k]];
            shifted[k] = eta[k] + e;
            w *= wk;
        }
        let a = eval(&shifted);
        if a != 0.0 {
            let r2: f64 = shifted.iter().map(|v| v * v).sum();
            total += w * a * r2;
        }
        let mut k = d;
        loop {
            if k == 0 {
                let eta2: f64 = eta.iter().map(|v| v * v).sum();
                return total / eta2;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < per_axis {
                break;
            }
            idx[k] = 0;
        }
    }
}

pub fn assemble_form(
    problem: &LatticeProblem,
    real: &Realization,
    kernel: &Kernel,
    variant: Variant,
    quadrature: KernelQuadrature,
) -> Result<QuadraticForm> {
    let d = problem.d;
    let h = problem.h;
    // Interaction reach in physical units for offset enumeration.
    let smear = match quadrature {
        KernelQuadrature::Pointwise => 0.0,
        KernelQuadrature::CellMoment => h * (d as f64).sqrt(),
    };
    let reach = match variant {
        Variant::TruncatedAmbient | Variant::RestrictedTruncated => {
            problem.k.min(kernel.cutoff + smear)
        }
        Variant::RestrictedFull => kernel.cutoff + smear,
    };
    if variant == Variant::TruncatedAmbient {
        let margin_width = (0..d)
            .map(|i| {
                let b = problem.domain.bounding();
                ((b.lo[i] - problem.margin.lo[i]).min(problem.margin.hi[i] - b.hi[i])) as f64 * h
            })
            .fold(f64::INFINITY, f64::min);
        if margin_width + 1e-12 < problem.k.min(kernel.cutoff) - h {
            return Err(Error::MarginUnderflow {
                margin: margin_width,
                reach: problem.k,
            });
        }
    }

    // Offsets: lexicographically positive integer vectors within reach.
    let max_cells = (reach / h).ceil() as i64;
    let offsets = {
        let scan = IntBox::new(vec![-max_cells; d], vec![max_cells + 1; d]);
        let mut v: Vec<(Vec<i64>, f64)> = Vec::new();
        for o in scan.cells() {
            if o.iter().all(|c| *c == 0) {
                continue;
            }
            let first = o.iter().find(|c| **c != 0).unwrap();
            if *first < 0 {
                continue;
            }
            let eta: Vec<f64> = o.iter().map(|c| *c as f64 * h).collect();
            let dist = crate::geometry::norm(&eta);
            // Truncation is a sharp predicate on the center offset.
            match variant {
                Variant::TruncatedAmbient | Variant::RestrictedTruncated => {
                    if dist >= problem.k {
                        continue;
                    }
                }
                Variant::RestrictedFull => {}
            }
            if dist > kernel.cutoff + smear {
                continue;
            }
            let a = match quadrature {
                KernelQuadrature::Pointwise => kernel.eval(&eta),
                KernelQuadrature::CellMoment => cell_moment_weight(kernel, &eta, h),
            };
            if a > 0.0 {
                v.push((o, a));
            }
        }
        v
    };

    // Environment factor per site.
    let n = problem.n_sites();
    let mut site_b = vec![0.0; n];
    for f in 0..n {
        site_b[f] = real.site_factor(&problem.site_pos(f))?;
    }

    let meas = h.powi(2 * d as i32);
    let mut pairs: Vec<Pair> = Vec::new();
    let mut incident: Vec<(usize, f64)> = Vec::new();
    for f in 0..n {
        if site_b[f] == 0.0 {
            continue;
        }
        let cell = problem.site_cell(f);
        let in_f = problem.in_domain(f);
        incident.clear();
        for (o, a) in &offsets {
            let ncell: Vec<i64> = cell.iter().zip(o).map(|(c, s)| c + s).collect();
            let Some(g) = problem.flat_of(&ncell) else {
                continue;
            };
            if site_b[g] == 0.0 {
                continue;
            }
            let in_g = problem.in_domain(g);
            let factor = match variant {
                Variant::TruncatedAmbient => match (in_f, in_g) {
                    (true, true) => 2.0,
                    (true, false) | (false, true) => 1.0,
                    (false, false) => continue,
                },
                Variant::RestrictedFull | Variant::RestrictedTruncated => {
                    if in_f && in_g {
                        2.0
                    } else {
                        continue;
                    }
                }
            };
            let w = factor * site_b[f] * site_b[g] * a * meas;
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
        variant,
        pairs,
    })
}

/// `E(u) = Σ w_ij (u_i - u_j)^2` over the stored pairs.
pub fn energy(form: &QuadraticForm, u: &[f64]) -> Result<f64> {
    if u.len() != form.n_sites {
        return Err(Error::FieldIncomplete {
            got: u.len(),
            want: form.n_sites,
        });
    }
    let mut e = 0.0;
    for p in &form.pairs {
        let diff = u[p.i as usize] - u[p.j as usize];
        e += p.w * diff * diff;
    }
    Ok(e)
}

/// Sum of `w ⟨z, x_i - x_j⟩^2` over pairs with exactly one endpoint in the
/// domain: the constant by which the ambient minimum exceeds the restricted
/// truncated one.
pub fn cross_affine_term(form: &QuadraticForm, problem: &LatticeProblem, z: &[f64]) -> f64 {
    let mut s = 0.0;
    for p in &form.pairs {
        let fi = problem.in_domain(p.i as usize);
        let fj = problem.in_domain(p.j as usize);
        if fi != fj {
            let xi = problem.site_pos(p.i as usize);
            let xj = problem.site_pos(p.j as usize);
            let diff: Vec<f64> = xi.iter().zip(&xj).map(|(a, b)| a - b).collect();
            let v = crate::geometry::dot(z, &diff);
            s += p.w * v * v;
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{sample_environment, EnvKind, EnvironmentSpec};
    use approx::assert_relative_eq;

    fn const_real(d: usize, half: f64) -> Realization {
        sample_environment(
            &EnvironmentSpec::constant(d),
            0,
            &vec![-half; d],
            &vec![half; d],
        )
        .unwrap()
    }

    #[test]
    fn masks_match_hand_enumeration() {
        // d=1, R=8, h=1, K=2: 12 sites, margin/collar/free = 4/4/4.
        let p = build_problem(1, 8.0, 1.0, 2.0).unwrap();
        assert_eq!(p.n_sites(), 12);
        let counts = |m: SiteMask| p.mask.iter().filter(|x| **x == m).count();
        assert_eq!(counts(SiteMask::Exterior), 4);
        assert_eq!(counts(SiteMask::Collar), 4);
        assert_eq!(counts(SiteMask::Free), 4);
        // The free sites are the centers within distance >= 2 of the boundary.
        for f in 0..p.n_sites() {
            let x = p.site_pos(f)[0];
            match p.mask[f] {
                SiteMask::Free => assert!(4.0 - x.abs() >= 2.0),
                SiteMask::Collar => assert!(x.abs() < 4.0 && 4.0 - x.abs() < 2.0),
                SiteMask::Exterior => assert!(x.abs() > 4.0),
            }
        }
    }

    #[test]
    fn free_count_formula() {
        let p = build_problem(2, 16.0, 0.5, 2.0).unwrap();
        let per_axis = ((16.0 - 4.0) / 0.5) as usize;
        assert_eq!(p.n_free(), per_axis * per_axis);
    }

    #[test]
    fn no_free_sites_error() {
        assert!(matches!(
            build_problem(1, 4.0, 1.0, 2.0),
            Err(Error::NoFreeSites { .. })
        ));
    }

    #[test]
    fn incommensurate_error() {
        assert!(matches!(
            build_problem(1, 8.3, 1.0, 2.0),
            Err(Error::Incommensurate(_))
        ));
    }

    #[test]
    fn ambient_pairs_match_hand_enumeration() {
        // d=1, R=8, h=1, K=2, ball r0=1: interior sites pair with their two
        // neighbours at distance 1 (a = 1). 7 interior pairs with factor 2,
        // 2 cross pairs with factor 1.
        let p = build_problem(1, 8.0, 1.0, 2.0).unwrap();
        let real = const_real(1, 6.0);
        let k = Kernel::ball(1, 1.0);
        let form = assemble_form(
            &p,
            &real,
            &k,
            Variant::TruncatedAmbient,
            KernelQuadrature::Pointwise,
        )
        .unwrap();
        assert_eq!(form.pairs.len(), 9);
        let total: f64 = form.pairs.iter().map(|p| p.w).sum();
        assert_relative_eq!(total, 7.0 * 2.0 + 2.0 * 1.0, max_relative = 1e-15);
        // Energy of the affine field: every pair contributes w * 1^2.
        let u = p.affine_field(&[1.0]);
        assert_relative_eq!(energy(&form, &u).unwrap(), 16.0, max_relative = 1e-15);
        // Pairs are sorted.
        for w in form.pairs.windows(2) {
            assert!((w[0].i, w[0].j) < (w[1].i, w[1].j));
        }
    }

    #[test]
    fn restricted_variants_drop_cross_pairs() {
        let p = build_problem(1, 8.0, 1.0, 2.0).unwrap();
        let real = const_real(1, 6.0);
        let k = Kernel::ball(1, 1.0);
        let full = assemble_form(
            &p,
            &real,
            &k,
            Variant::RestrictedFull,
            KernelQuadrature::Pointwise,
        )
        .unwrap();
        let trunc = assemble_form(
            &p,
            &real,
            &k,
            Variant::RestrictedTruncated,
            KernelQuadrature::Pointwise,
        )
        .unwrap();
        assert_eq!(full.pairs.len(), 7);
        assert_eq!(trunc.pairs.len(), 7);
        let u = p.affine_field(&[1.0]);
        assert_relative_eq!(energy(&full, &u).unwrap(), 14.0, max_relative = 1e-15);
        assert_relative_eq!(energy(&trunc, &u).unwrap(), 14.0, max_relative = 1e-15);
    }

    #[test]
    fn cell_moment_affine_energy_is_exact_in_1d() {
        // For the 1-d ball indicator the second-moment average has a closed
        // form: per unit volume the affine energy is 2/3 - h^3/6 (the full
        // second moment minus the same-cell contribution).
        for h in [1.0, 0.5, 0.25] {
            let p = build_problem(1, 16.0, h, 4.0).unwrap();
            let real = const_real(1, 16.0);
            let k = Kernel::ball(1, 1.0);
            let form = assemble_form(
                &p,
                &real,
                &k,
                Variant::TruncatedAmbient,
                KernelQuadrature::CellMoment,
            )
            .unwrap();
            let u = p.affine_field(&[1.0]);
            let value = energy(&form, &u).unwrap() / 16.0;
            assert_relative_eq!(value, 2.0 / 3.0 - h * h * h / 6.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn cell_moment_matches_pointwise_for_smooth_kernels() {
        let k = Kernel::gaussian(2, 1.0, 0.5);
        let eta = [0.75, -0.5];
        let w = cell_moment_weight(&k, &eta, 0.25);
        assert_relative_eq!(w, k.eval(&eta), max_relative = 2e-2);
    }

    #[test]
    fn energy_translation_invariant() {
        let p = build_problem(1, 8.0, 1.0, 2.0).unwrap();
        let real = const_real(1, 6.0);
        let k = Kernel::ball(1, 1.0);
        let form = assemble_form(
            &p,
            &real,
            &k,
            Variant::TruncatedAmbient,
            KernelQuadrature::Pointwise,
        )
        .unwrap();
        let u: Vec<f64> = (0..p.n_sites()).map(|i| (i as f64 * 0.37).sin()).collect();
        let shifted: Vec<f64> = u.iter().map(|v| v + 17.25).collect();
        assert_relative_eq!(
            energy(&form, &u).unwrap(),
            energy(&form, &shifted).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn tiny_kernel_support_gives_empty_form() {
        let p = build_problem(1, 8.0, 1.0, 2.0).unwrap();
        let real = const_real(1, 6.0);
        let k = Kernel::ball(1, 0.3);
        let form = assemble_form(
            &p,
            &real,
            &k,
            Variant::RestrictedFull,
            KernelQuadrature::Pointwise,
        )
        .unwrap();
        assert!(form.pairs.is_empty());
    }

    #[test]
    fn checkerboard_weights_are_sandwiched() {
        let spec = EnvironmentSpec {
            d: 1,
            kind: EnvKind::Checkerboard {
                lambda1: 1.0,
                lambda2: 4.0,
                p: 0.5,
                cell_size: 1.0,
            },
        };
        let real = sample_environment(&spec, 7, &[-12.0], &[12.0]).unwrap();
        let p = build_problem(1, 16.0, 1.0, 2.0).unwrap();
        let k = Kernel::ball(1, 1.0);
        let form = assemble_form(
            &p,
            &real,
            &k,
            Variant::RestrictedFull,
            KernelQuadrature::Pointwise,
        )
        .unwrap();
        for pair in &form.pairs {
            // w = 2 B B a h^2 with B in {1, 4} and a = 1.
            assert!(pair.w >= 2.0 * 1.0 - 1e-12 && pair.w <= 2.0 * 16.0 + 1e-12);
        }
    }

    #[test]
    fn field_length_checked() {
        let p = build_problem(1, 8.0, 1.0, 2.0).unwrap();
        let real = const_real(1, 6.0);
        let k = Kernel::ball(1, 1.0);
        let form = assemble_form(
            &p,
            &real,
            &k,
            Variant::RestrictedFull,
            KernelQuadrature::Pointwise,
        )
        .unwrap();
        assert!(matches!(
            energy(&form, &[0.0; 3]),
            Err(Error::FieldIncomplete { .. })
        ));
    }

    #[test]
    fn refinement_change_shrinks_for_smooth_data() {
        // Smooth field, smooth kernel: the h -> h/2 energy change is smaller
        // than the 2h -> h change.
        let k = Kernel::gaussian(1, 1.0, 0.5);
        let val = |h: f64| {
            let p = build_problem(1, 16.0, h, 2.0).unwrap();
            let real = const_real(1, 16.0);
            let form = assemble_form(
                &p,
                &real,
                &k,
                Variant::RestrictedFull,
                KernelQuadrature::Pointwise,
            )
            .unwrap();
            let u: Vec<f64> = (0..p.n_sites())
                .map(|f| (0.4 * p.site_pos(f)[0]).sin())
                .collect();
            energy(&form, &u).unwrap()
        };
        let (e1, e2, e4) = (val(1.0), val(0.5), val(0.25));
        assert!((e2 - e4).abs() < (e1 - e2).abs());
    }

    #[test]
    fn cross_term_matches_direct_sum() {
        let p = build_problem(1, 8.0, 1.0, 2.0).unwrap();
        let real = const_real(1, 6.0);
        let k = Kernel::ball(1, 1.0);
        let amb = assemble_form(
            &p,
            &real,
            &k,
            Variant::TruncatedAmbient,
            KernelQuadrature::Pointwise,
        )
        .unwrap();
        // Two cross pairs at distance 1 with factor 1: sum = 2 z^2.
        assert_relative_eq!(
            cross_affine_term(&amb, &p, &[3.0]),
            18.0,
            max_relative = 1e-14
        );
    }
}
