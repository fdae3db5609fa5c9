//! Empirical checks of the functional inequalities behind the convergence
//! analysis: local-averaging bounds, the multi-step energy comparison,
//! Poincaré inequalities, and the long-range tail estimate.
//!
//! All functionals act on [`GridField`] samples. The basic object is the
//! normalized step energy at scale `δ` with reach `r` and collar `σ`:
//!
//! ```text
//!   F_δ^{σ,r}(u) = Σ_{x ∈ D(σ)} Σ_{0<|η|≤rδ} ((u(x+η)-u(x))/δ)^2 (h/δ)^d h^d
//! ```
//!
//! where `D(σ)` keeps the cells of `D` at distance more than `σ` from the
//! boundary. This is the Riemann sum of `δ^{-(d+2)} ∬ (u(y)-u(x))^2`.
//!
//! Every check returns an [`InequalityReport`] storing both sides, the
//! constant in use and a witness string, so a failure is reproducible from
//! the record alone. Checks with a provable constant assert it; checks whose
//! constant is only known to exist report the measured quotient instead.

use crate::env::Realization;
use crate::error::{Error, Result};
use crate::field::GridField;
use crate::geometry::{cell_center, norm, IntBox};
use crate::kernel::Kernel;

#[derive(Debug, Clone, serde::Serialize)]
pub struct InequalityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub constant_used: f64,
    pub pass: bool,
    pub witness: String,
}

impl InequalityReport {
    fn checked(lhs: f64, rhs: f64, constant_used: f64, witness: String) -> Self {
        InequalityReport {
            lhs,
            rhs,
            constant_used,
            pass: lhs <= constant_used * rhs * (1.0 + 1e-12) + f64::MIN_POSITIVE,
            witness,
        }
    }
}

/// `F_δ^{σ,r}(u)` on domain `D`; the inner site `x + η` may leave `D` but
/// must stay inside the field box.
pub fn step_energy(u: &GridField, domain: &IntBox, sigma: f64, delta: f64, r: f64) -> Result<f64> {
    let d = u.d();
    let h = u.h;
    let reach = r * delta;
    let m = (reach / h + 1e-9).floor() as i64;
    let scan = IntBox::new(vec![-m; d], vec![m + 1; d]);
    let offsets: Vec<Vec<i64>> = scan
        .cells()
        .filter(|o| {
            let eta: Vec<f64> = o.iter().map(|c| *c as f64 * h).collect();
            let len = norm(&eta);
            len > 0.0 && len <= reach * (1.0 + 1e-12)
        })
        .collect();
    let weight = (h / delta).powi(d as i32) * h.powi(d as i32) / (delta * delta);
    let mut total = 0.0;
    for x in domain.cells() {
        let pos = cell_center(&x, h);
        if domain.dist_to_boundary(&pos, h) <= sigma {
            continue;
        }
        let ux = u.get(&x).ok_or_else(|| {
            Error::StencilOverflow(format!("base cell {x:?} outside the field box"))
        })?;
        for o in &offsets {
            let y: Vec<i64> = x.iter().zip(o).map(|(a, b)| a + b).collect();
            let uy = u.get(&y).ok_or_else(|| {
                Error::StencilOverflow(format!("offset cell {y:?} outside the field box"))
            })?;
            let diff = uy - ux;
            total += weight * diff * diff;
        }
    }
    Ok(total)
}

/// Like [`step_energy`] with `σ = 0` but both endpoints restricted to `D`.
pub fn pair_energy_within(u: &GridField, domain: &IntBox, delta: f64, r: f64) -> f64 {
    let d = u.d();
    let h = u.h;
    let reach = r * delta;
    let m = (reach / h + 1e-9).floor() as i64;
    let weight = (h / delta).powi(d as i32) * h.powi(d as i32) / (delta * delta);
    let mut total = 0.0;
    for x in domain.cells() {
        let ux = u.get(&x).unwrap_or(0.0);
        let scan = IntBox::new(vec![-m; d], vec![m + 1; d]);
        for o in scan.cells() {
            let eta: Vec<f64> = o.iter().map(|c| *c as f64 * h).collect();
            let len = norm(&eta);
            if len == 0.0 || len > reach * (1.0 + 1e-12) {
                continue;
            }
            let y: Vec<i64> = x.iter().zip(&o).map(|(a, b)| a + b).collect();
            if !domain.contains_cell(&y) {
                continue;
            }
            let diff = u.get(&y).unwrap_or(0.0) - ux;
            total += weight * diff * diff;
        }
    }
    total
}

/// Normalized bump stencil `φ(ξ) = (1-|ξ|^2)^2` at averaging radius `delta`.
pub struct Mollifier {
    pub delta: f64,
    pub h: f64,
    /// Lattice offsets with normalized weights (summing to one).
    offsets: Vec<(Vec<i64>, f64)>,
}

impl Mollifier {
    pub fn new(d: usize, delta: f64, h: f64) -> Self {
        let m = (delta / h + 1e-9).floor() as i64;
        let scan = IntBox::new(vec![-m; d], vec![m + 1; d]);
        let mut offsets: Vec<(Vec<i64>, f64)> = scan
            .cells()
            .filter_map(|o| {
                let xi: Vec<f64> = o.iter().map(|c| *c as f64 * h / delta).collect();
                let r2: f64 = xi.iter().map(|v| v * v).sum();
                if r2 <= 1.0 {
                    Some((o, (1.0 - r2) * (1.0 - r2)))
                } else {
                    None
                }
            })
            .collect();
        let total: f64 = offsets.iter().map(|(_, w)| w).sum();
        for (_, w) in &mut offsets {
            *w /= total;
        }
        Mollifier { delta, h, offsets }
    }

    /// Stencil radius in cells.
    pub fn radius_cells(&self) -> i64 {
        (self.delta / self.h + 1e-9).floor() as i64
    }

    /// Jensen constant `(δ/h)^d max_η W_η`: the sharp factor relating the
    /// weighted square mean to the flat pair sum.
    pub fn jensen_constant(&self, d: usize) -> f64 {
        let max_w = self.offsets.iter().map(|(_, w)| *w).fold(0.0, f64::max);
        (self.delta / self.h).powi(d as i32) * max_w
    }

    /// Cauchy-Schwarz constant `sqrt((δ/h)^d Σ W²)`, the discrete analogue
    /// of `sqrt(∫φ²)/∫φ`.
    pub fn cs_constant(&self, d: usize) -> f64 {
        let sq: f64 = self.offsets.iter().map(|(_, w)| w * w).sum();
        ((self.delta / self.h).powi(d as i32) * sq).sqrt()
    }

    /// `ů_δ(x) = Σ W_η u(x+η)`, or `None` when the stencil leaves the box.
    pub fn average_at(&self, u: &GridField, x: &[i64]) -> Option<f64> {
        let mut s = 0.0;
        for (o, w) in &self.offsets {
            let y: Vec<i64> = x.iter().zip(o).map(|(a, b)| a + b).collect();
            s += w * u.get(&y)?;
        }
        Some(s)
    }
}

/// Local average of `u`, defined on the cells whose full stencil fits in the
/// field box (the box shrunk by the stencil radius).
pub fn local_average(u: &GridField, mol: &Mollifier) -> GridField {
    let m = mol.radius_cells();
    let inner = IntBox::new(
        u.bbox.lo.iter().map(|v| v + m).collect(),
        u.bbox.hi.iter().map(|v| v - m).collect(),
    );
    let values = inner
        .cells()
        .map(|c| mol.average_at(u, &c).expect("stencil fits by construction"))
        .collect();
    GridField {
        bbox: inner,
        h: u.h,
        values,
    }
}

/// The two averaging bounds on `D(σ)`:
///
/// 1. `Σ_{D(σ)} (ů_δ - u)^2 h^d ≤ C_J δ^2 F_δ^{σ,1}(u)` with the Jensen
///    constant `C_J = (δ/h)^d max W`;
/// 2. `max_{D(σ)} |ů_δ| ≤ C_{CS} δ^{-d/2} ‖u‖_{L²}` with the Cauchy-Schwarz
///    constant of the stencil.
pub fn verify_local_average_bounds(
    u: &GridField,
    domain: &IntBox,
    delta: f64,
    sigma: f64,
    witness: &str,
) -> Result<(InequalityReport, InequalityReport)> {
    if delta >= sigma {
        return Err(Error::StencilOverflow(format!(
            "averaging radius {delta} must be below the collar {sigma}"
        )));
    }
    let d = u.d();
    let h = u.h;
    let mol = Mollifier::new(d, delta, h);
    let meas = h.powi(d as i32);
    let mut l2_diff = 0.0;
    let mut sup: f64 = 0.0;
    let mut probed = 0usize;
    for x in domain.cells() {
        let pos = cell_center(&x, h);
        if domain.dist_to_boundary(&pos, h) <= sigma {
            continue;
        }
        probed += 1;
        let ue = mol.average_at(u, &x).ok_or_else(|| {
            Error::StencilOverflow(format!("averaging stencil leaves the box at {x:?}"))
        })?;
        let ux = u.get(&x).unwrap();
        l2_diff += (ue - ux) * (ue - ux) * meas;
        sup = sup.max(ue.abs());
    }
    if probed == 0 {
        return Err(Error::StencilOverflow(
            "collar leaves no probe cells in the domain".into(),
        ));
    }
    let f = step_energy(u, domain, sigma, delta, 1.0)?;
    let approx = InequalityReport::checked(
        l2_diff,
        delta * delta * f,
        mol.jensen_constant(d),
        format!("{witness}; L2 averaging defect vs step energy"),
    );
    let l2_all = u.l2_sq(&u.bbox.clone()).sqrt();
    let sup_bound = InequalityReport::checked(
        sup,
        delta.powf(-(d as f64) / 2.0) * l2_all,
        mol.cs_constant(d),
        format!("{witness}; sup of the average vs global L2 norm"),
    );
    Ok((approx, sup_bound))
}

/// Coarse steps against fine steps: `F_{jε}^{(j+k)ε,1}(u) ≤ F_ε^{kε,1}(u)`.
pub fn verify_multistep(
    u: &GridField,
    domain: &IntBox,
    eps: f64,
    j: usize,
    k: usize,
    witness: &str,
) -> Result<InequalityReport> {
    let lhs = step_energy(u, domain, (j + k) as f64 * eps, j as f64 * eps, 1.0)?;
    let rhs = step_energy(u, domain, k as f64 * eps, eps, 1.0)?;
    Ok(InequalityReport::checked(
        lhs,
        rhs,
        1.0,
        format!("{witness}; steps {j}ε vs ε at ε={eps}"),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoincareMode {
    Wirtinger,
    ZeroBoundary,
}

/// Poincaré checks.
///
/// * `Wirtinger`: `Σ_D (u-ū)^2 h^d` against the pair energy at reach
///   `r0·ε`; the constant is not known a priori, so the measured quotient is
///   reported and the check is informational (`pass` true by construction).
/// * `ZeroBoundary`: for `u` vanishing outside `D` and on the `2ε`-collar,
///   `Σ_D u^2 h^d ≤ 2|D| ε^{-(d+2)} Σ_x Σ_{0<|η|≤2ε} (u(x+η)-u(x))^2 h^{2d}`
///   with the explicit constant twice the domain volume.
pub fn verify_poincare(
    u: &GridField,
    domain: &IntBox,
    mode: PoincareMode,
    eps: f64,
    r0: f64,
    witness: &str,
) -> Result<InequalityReport> {
    let d = u.d();
    let h = u.h;
    match mode {
        PoincareMode::Wirtinger => {
            let mean = u.mean(domain);
            let meas = h.powi(d as i32);
            let lhs: f64 = domain
                .cells()
                .map(|c| (u.get(&c).unwrap_or(0.0) - mean).powi(2))
                .sum::<f64>()
                * meas;
            let rhs = pair_energy_within(u, domain, eps * r0, 1.0);
            let measured = if rhs > 0.0 { lhs / rhs } else { 0.0 };
            Ok(InequalityReport::checked(
                lhs,
                rhs,
                measured,
                format!("{witness}; mean-zero form, measured constant {measured:.6e}"),
            ))
        }
        PoincareMode::ZeroBoundary => {
            for c in u.bbox.cells() {
                let pos = cell_center(&c, h);
                let inside = domain.contains_cell(&c);
                let collar = inside && domain.dist_to_boundary(&pos, h) < 2.0 * eps;
                if (!inside || collar) && u.get(&c).unwrap_or(0.0) != 0.0 {
                    return Err(Error::BadBoundaryData(format!(
                        "field does not vanish at cell {c:?} in the 2ε-collar"
                    )));
                }
            }
            let lhs = u.l2_sq(domain);
            let constant = 2.0 * domain.volume(h);
            let m = (2.0 * eps / h + 1e-9).floor() as i64;
            let meas = h.powi(2 * d as i32);
            let mut pair_sum = 0.0;
            for x in u.bbox.cells() {
                let ux = u.get(&x).unwrap_or(0.0);
                let scan = IntBox::new(vec![-m; d], vec![m + 1; d]);
                for o in scan.cells() {
                    let eta: Vec<f64> = o.iter().map(|c| *c as f64 * h).collect();
                    let len = norm(&eta);
                    if len == 0.0 || len > 2.0 * eps * (1.0 + 1e-12) {
                        continue;
                    }
                    let y: Vec<i64> = x.iter().zip(&o).map(|(a, b)| a + b).collect();
                    let diff = u.get(&y).unwrap_or(0.0) - ux;
                    pair_sum += meas * diff * diff;
                }
            }
            let rhs = eps.powi(-(d as i32 + 2)) * pair_sum;
            Ok(InequalityReport::checked(
                lhs,
                rhs,
                constant,
                format!("{witness}; zero-boundary form, C = 2|D| = {constant}"),
            ))
        }
    }
}

#[derive(Debug, Clone)]
pub struct TailReport {
    /// One report per truncation radius, with `rhs = K^{-κ} ·` short-range
    /// sum and the measured constant as `constant_used`.
    pub reports: Vec<InequalityReport>,
    pub short_range: f64,
    /// Least-squares slope of `log(long/short)` against `log K`, when at
    /// least two truncations give nonzero tails.
    pub slope: Option<f64>,
    pub pass: bool,
}

/// Weighted pair sums beyond radius `K` against the unweighted unit-range
/// sum, over a schedule of truncations. The decay exponent of the ratio
/// should reflect the kernel envelope: fitted slope ≤ −κ + 1/2.
pub fn verify_tail_bound(
    u: &GridField,
    core: &IntBox,
    real: &Realization,
    kernel: &Kernel,
    k_schedule: &[f64],
    witness: &str,
) -> Result<TailReport> {
    let d = u.d();
    let h = u.h;
    let meas = h.powi(2 * d as i32);
    let m = (kernel.cutoff / h).ceil() as i64;
    let scan = IntBox::new(vec![-m; d], vec![m + 1; d]);
    let offsets: Vec<(Vec<i64>, Vec<f64>, f64)> = scan
        .cells()
        .filter_map(|o| {
            let eta: Vec<f64> = o.iter().map(|c| *c as f64 * h).collect();
            let len = norm(&eta);
            if len == 0.0 || len > kernel.cutoff {
                None
            } else {
                Some((o, eta.clone(), len))
            }
        })
        .collect();
    let mut short_range = 0.0;
    let mut long: Vec<f64> = vec![0.0; k_schedule.len()];
    for x in core.cells() {
        let pos = cell_center(&x, h);
        let ux = u
            .get(&x)
            .ok_or_else(|| Error::StencilOverflow("core cell outside the field box".into()))?;
        let bx = real.site_factor(&pos)?;
        for (o, eta, len) in &offsets {
            let y: Vec<i64> = x.iter().zip(o).map(|(a, b)| a + b).collect();
            let uy = u.get(&y).ok_or_else(|| {
                Error::StencilOverflow("tail stencil leaves the field box".into())
            })?;
            let diff = uy - ux;
            if *len <= 1.0 + 1e-12 {
                short_range += meas * diff * diff;
            }
            let b = bx * real.site_factor(&cell_center(&y, h))? * kernel.eval(eta);
            if b == 0.0 {
                continue;
            }
            for (idx, k) in k_schedule.iter().enumerate() {
                if *len > *k {
                    long[idx] += meas * b * diff * diff;
                }
            }
        }
    }
    let reports: Vec<InequalityReport> = k_schedule
        .iter()
        .zip(&long)
        .map(|(k, l)| {
            let rhs = k.powf(-kernel.kappa) * short_range;
            let measured = if rhs > 0.0 { l / rhs } else { 0.0 };
            InequalityReport::checked(
                *l,
                rhs,
                measured.max(1.0),
                format!("{witness}; tail beyond K={k}, measured C={measured:.6e}"),
            )
        })
        .collect();
    let pts: Vec<(f64, f64)> = k_schedule
        .iter()
        .zip(&long)
        .filter(|(_, l)| **l > 0.0)
        .map(|(k, l)| (k.ln(), (l / short_range).ln()))
        .collect();
    let slope = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
        let (mx, my) = (sx / n, sy / n);
        let num: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
        let den: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
        Some(num / den)
    } else {
        None
    };
    let all_trivial = long.iter().all(|l| *l == 0.0);
    let pass = all_trivial || slope.map(|s| s <= -kernel.kappa + 0.5).unwrap_or(false);
    Ok(TailReport {
        reports,
        short_range,
        slope,
        pass,
    })
}
