//! Interaction kernels `a(ξ)` and the constant-coefficient tensor.
//!
//! All shipped families are radial, hence even; evenness is a hard
//! requirement everywhere downstream (it makes affine functions stationary
//! for constant coefficients). A kernel carries its structural bounds with
//! it: a core radius `r0` with level `c > 0` inside, and a polynomial decay
//! envelope `decay_c (1+|ξ|)^{-(d+2+κ)}`. `verify_kernel_assumptions`
//! re-checks those bounds by dense deterministic sampling, and
//! `analytic_tensor` integrates
//!
//! ```text
//!   A_ij = ∫ a(ξ) ξ_i ξ_j dξ
//! ```
//!
//! by midpoint quadrature, which is the reference value for every
//! constant-coefficient experiment.

use crate::error::{Error, Result};
use crate::geometry::norm;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    /// Indicator of the closed ball of radius `r0`.
    Ball,
    /// `decay_c (1+|ξ|)^{-(d+2+κ)}` up to the cutoff.
    TruncatedPower,
    /// `c e^{1-(|ξ|/r0)^2}` up to the cutoff; equals `c` at `|ξ| = r0`.
    GaussianTruncated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub family: KernelFamily,
    pub d: usize,
    /// Core radius: `a ≥ c` on `|ξ| ≤ r0`.
    pub r0: f64,
    /// Core lower-bound level.
    pub c: f64,
    /// Decay envelope constant.
    pub decay_c: f64,
    /// Decay exponent offset κ in `(1+|ξ|)^{-(d+2+κ)}`.
    pub kappa: f64,
    /// Hard support cutoff; `a ≡ 0` beyond it.
    pub cutoff: f64,
}

impl Kernel {
    pub fn new(
        family: KernelFamily,
        d: usize,
        r0: f64,
        c: f64,
        decay_c: f64,
        kappa: f64,
        cutoff: f64,
    ) -> Result<Kernel> {
        if d == 0 || d > 3 {
            return Err(Error::KernelInvalid(format!("dimension {d} unsupported")));
        }
        if !(r0 > 0.0) || !r0.is_finite() {
            return Err(Error::KernelInvalid("r0 must be positive".into()));
        }
        if !(c > 0.0) {
            return Err(Error::KernelInvalid("core level c must be positive".into()));
        }
        if !(decay_c > 0.0) || !(kappa > 0.0) {
            return Err(Error::KernelInvalid(
                "decay constant and kappa must be positive".into(),
            ));
        }
        if !(cutoff >= r0) || !cutoff.is_finite() {
            return Err(Error::KernelInvalid(
                "cutoff must be finite and at least r0".into(),
            ));
        }
        if family == KernelFamily::Ball && c > 1.0 {
            return Err(Error::KernelInvalid(
                "ball indicator has height 1, so c must be at most 1".into(),
            ));
        }
        Ok(Kernel {
            family,
            d,
            r0,
            c,
            decay_c,
            kappa,
            cutoff,
        })
    }

    /// Ball indicator with the default cutoff `8 r0`.
    pub fn ball(d: usize, r0: f64) -> Kernel {
        let k = 1.0;
        let decay_c = (1.0 + r0).powf(d as f64 + 2.0 + k);
        Kernel::new(KernelFamily::Ball, d, r0, 1.0, decay_c, k, 8.0 * r0).unwrap()
    }

    /// Truncated power kernel saturating its own decay envelope.
    pub fn truncated_power(d: usize, kappa: f64, cutoff: f64) -> Kernel {
        let r0 = 1.0f64;
        let c = (1.0 + r0).powf(-(d as f64 + 2.0 + kappa));
        Kernel::new(KernelFamily::TruncatedPower, d, r0, c, 1.0, kappa, cutoff).unwrap()
    }

    pub fn gaussian(d: usize, r0: f64, c: f64) -> Kernel {
        let k = 1.0;
        // e^{1-(t/r0)^2} decays faster than any power; a generous envelope.
        let decay_c = c * std::f64::consts::E * (1.0 + r0).powf(d as f64 + 2.0 + k);
        Kernel::new(
            KernelFamily::GaussianTruncated,
            d,
            r0,
            c,
            decay_c,
            k,
            8.0 * r0,
        )
        .unwrap()
    }

    /// Pointwise kernel value.
    pub fn eval(&self, xi: &[f64]) -> f64 {
        debug_assert_eq!(xi.len(), self.d);
        let r = norm(xi);
        if r > self.cutoff {
            return 0.0;
        }
        match self.family {
            KernelFamily::Ball => {
                if r <= self.r0 {
                    1.0
                } else {
                    0.0
                }
            }
            KernelFamily::TruncatedPower => {
                let p = self.d as f64 + 2.0 + self.kappa;
                self.decay_c * (1.0 + r).powf(-p)
            }
            KernelFamily::GaussianTruncated => {
                let t = r / self.r0;
                self.c * (1.0 - t * t).exp()
            }
        }
    }

    /// Radial profile; all families are functions of `|ξ|` only.
    pub fn eval_radial(&self, r: f64) -> f64 {
        if r > self.cutoff {
            return 0.0;
        }
        match self.family {
            KernelFamily::Ball => {
                if r <= self.r0 {
                    1.0
                } else {
                    0.0
                }
            }
            KernelFamily::TruncatedPower => {
                let p = self.d as f64 + 2.0 + self.kappa;
                self.decay_c * (1.0 + r).powf(-p)
            }
            KernelFamily::GaussianTruncated => {
                let t = r / self.r0;
                self.c * (1.0 - t * t).exp()
            }
        }
    }
}

/// Outcome of re-checking the structural kernel bounds by sampling.
#[derive(Debug, Clone)]
pub struct KernelReport {
    pub even_ok: bool,
    /// `a ≥ c` held on every sample in the core ball.
    pub lower_ok: bool,
    /// `a(ξ) (1+|ξ|)^{d+2+κ} ≤ decay_c` held on every sample.
    pub decay_ok: bool,
    /// max over samples of `a(ξ) (1+|ξ|)^{d+2+κ} / decay_c`.
    pub worst_decay_ratio: f64,
    /// min of `a` over core-ball samples.
    pub min_core_value: f64,
    pub samples: usize,
}

/// Radical-inverse (van der Corput) value of `i` in the given base.
fn radical_inverse(mut i: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

fn halton(i: usize, d: usize) -> Vec<f64> {
    const BASES: [usize; 4] = [2, 3, 5, 7];
    (0..d).map(|k| radical_inverse(i + 1, BASES[k])).collect()
}

/// Re-checks evenness, the core lower bound and the decay envelope on a
/// deterministic sample: a Halton set on the cutoff box, the same set scaled
/// into the core ball, and exact radial probes along the axes and the main
/// diagonal (these hit `|ξ| = r0`, where the envelope is tightest for
/// compactly supported kernels).
pub fn verify_kernel_assumptions(kernel: &Kernel, samples: usize) -> KernelReport {
    let d = kernel.d;
    let p = d as f64 + 2.0 + kernel.kappa;
    let mut pts: Vec<Vec<f64>> = Vec::new();
    for i in 0..samples {
        let u = halton(i, d);
        // Box sample over [-cutoff, cutoff]^d.
        pts.push(u.iter().map(|v| (2.0 * v - 1.0) * kernel.cutoff).collect());
        // Core sample: same point scaled into the r0 ball.
        let box_pt: Vec<f64> = u.iter().map(|v| 2.0 * v - 1.0).collect();
        let n = norm(&box_pt).max(1e-12);
        let scale = kernel.r0 * radical_inverse(i + 1, 11).max(1e-6) / n;
        pts.push(box_pt.iter().map(|v| v * scale).collect());
    }
    // Radial probes, including the core radius itself.
    let m = 64;
    for k in 1..=m {
        let r = kernel.r0 * k as f64 / m as f64;
        for axis in 0..d {
            let mut x = vec![0.0; d];
            x[axis] = r;
            pts.push(x);
        }
        let diag = r / (d as f64).sqrt();
        pts.push(vec![diag; d]);
    }
    for k in 1..=m {
        let r = kernel.r0 + (kernel.cutoff - kernel.r0) * k as f64 / m as f64;
        let mut x = vec![0.0; d];
        x[0] = r;
        pts.push(x);
    }

    let mut even_ok = true;
    let mut worst_ratio = 0.0f64;
    let mut min_core = f64::INFINITY;
    for x in &pts {
        let a = kernel.eval(x);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        if (a - kernel.eval(&neg)).abs() > 0.0 {
            even_ok = false;
        }
        let ratio = a * (1.0 + norm(x)).powf(p) / kernel.decay_c;
        worst_ratio = worst_ratio.max(ratio);
        if norm(x) <= kernel.r0 {
            min_core = min_core.min(a);
        }
    }
    KernelReport {
        even_ok,
        lower_ok: min_core >= kernel.c - 1e-12,
        decay_ok: worst_ratio <= 1.0 + 1e-12,
        worst_decay_ratio: worst_ratio,
        min_core_value: min_core,
        samples: pts.len(),
    }
}

/// Symmetric `d×d` effective tensor, row-major entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveTensor {
    pub d: usize,
    pub entries: Vec<f64>,
}

impl EffectiveTensor {
    pub fn new(d: usize, entries: Vec<f64>) -> Result<EffectiveTensor> {
        if entries.len() != d * d {
            return Err(Error::InvalidTensor(format!(
                "expected {} entries, got {}",
                d * d,
                entries.len()
            )));
        }
        Ok(EffectiveTensor { d, entries })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.d + j]
    }

    /// `⟨A z, z⟩`.
    pub fn quad(&self, z: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.d {
            for j in 0..self.d {
                s += self.get(i, j) * z[i] * z[j];
            }
        }
        s
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        for i in 0..self.d {
            for j in 0..i {
                if (self.get(i, j) - self.get(j, i)).abs() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// Positive definiteness via Cholesky.
    pub fn is_positive_definite(&self) -> bool {
        let m = nalgebra::DMatrix::from_fn(self.d, self.d, |i, j| {
            0.5 * (self.get(i, j) + self.get(j, i))
        });
        nalgebra::Cholesky::new(m).is_some()
    }
}

/// Quadrature of `A_ij = ∫ a(ξ) ξ_i ξ_j dξ` for a radial kernel:
///
/// ```text
///   A = (ω_{d-1} / d) ∫_0^∞ a(r) r^{d+1} dr · I
/// ```
///
/// with the radial integral taken by composite midpoint, split at the
/// structural radii `r0` and `cutoff` so the pieces are smooth (this matters
/// for the indicator family, whose jump would otherwise cost a full order
/// of accuracy). `resolution` is the panel count per piece.
pub fn analytic_tensor(kernel: &Kernel, resolution: usize) -> Result<EffectiveTensor> {
    let d = kernel.d;
    let n = resolution;
    if n < 16 {
        return Err(Error::QuadratureUnderresolved {
            resolution: n,
            r0: kernel.r0,
            cutoff: kernel.cutoff,
        });
    }
    let sphere_area = match d {
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        _ => 4.0 * std::f64::consts::PI,
    };
    let mut breaks = vec![0.0, kernel.r0.min(kernel.cutoff), kernel.cutoff];
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let mut radial = 0.0;
    for piece in breaks.windows(2) {
        let (lo, hi) = (piece[0], piece[1]);
        let w = (hi - lo) / n as f64;
        for i in 0..n {
            let r = lo + (i as f64 + 0.5) * w;
            radial += kernel.eval_radial(r) * r.powi(d as i32 + 1) * w;
        }
    }
    let diag = sphere_area / d as f64 * radial;
    let mut entries = vec![0.0; d * d];
    for i in 0..d {
        entries[i * d + i] = diag;
    }
    EffectiveTensor::new(d, entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Independent 1-d oracle: adaptive-free dense Simpson quadrature of
    /// `∫ a(ξ) ξ² dξ` on a grid unrelated to the midpoint rule above.
    fn simpson_second_moment_1d(kernel: &Kernel, n: usize) -> f64 {
        let a = -kernel.cutoff;
        let b = kernel.cutoff;
        let h = (b - a) / n as f64;
        let f = |x: f64| kernel.eval(&[x]) * x * x;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            s += if i % 2 == 0 { 2.0 } else { 4.0 } * f(x);
        }
        s * h / 3.0
    }

    #[test]
    fn ball_pointwise_values() {
        let k = Kernel::ball(2, 1.0);
        assert_eq!(k.eval(&[0.5, 0.0]), 1.0);
        assert_eq!(k.eval(&[2.0, 0.0]), 0.0);
        assert_eq!(k.eval(&[1.0, 0.0]), 1.0); // closed ball
    }

    #[test]
    fn truncated_power_matches_envelope() {
        let k = Kernel::truncated_power(1, 1.0, 8.0);
        // (1+1)^-(1+2+1) = 1/16
        assert_relative_eq!(k.eval(&[1.0]), 0.0625, max_relative = 1e-15);
        assert_eq!(k.eval(&[9.0]), 0.0);
    }

    #[test]
    fn gaussian_hits_core_level_at_r0() {
        let k = Kernel::gaussian(2, 1.5, 0.7);
        assert_relative_eq!(k.eval(&[1.5, 0.0]), 0.7, max_relative = 1e-14);
        assert!(k.eval(&[0.0, 0.0]) > 0.7);
    }

    #[test]
    fn kernels_are_even() {
        for k in [
            Kernel::ball(2, 1.0),
            Kernel::truncated_power(2, 0.5, 6.0),
            Kernel::gaussian(2, 1.0, 0.3),
        ] {
            for xi in [[0.3, -0.7], [1.2, 0.1], [-2.5, 2.5]] {
                assert_eq!(k.eval(&xi), k.eval(&[-xi[0], -xi[1]]));
            }
        }
    }

    #[test]
    fn validator_accepts_saturating_envelope() {
        // Ball with decay_c = 2^{d+2+κ} sits exactly on its envelope at |ξ|=r0.
        let k = Kernel::ball(1, 1.0);
        let rep = verify_kernel_assumptions(&k, 2000);
        assert!(rep.even_ok);
        assert!(rep.lower_ok);
        assert!(rep.decay_ok, "worst ratio {}", rep.worst_decay_ratio);
        assert_relative_eq!(rep.worst_decay_ratio, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn validator_flags_too_small_envelope() {
        // Same ball but claiming decay_c = 1: the true ratio is 2^{d+3} = 16
        // at |ξ| = 1 (κ = 1).
        let k = Kernel::new(KernelFamily::Ball, 1, 1.0, 1.0, 1.0, 1.0, 8.0).unwrap();
        let rep = verify_kernel_assumptions(&k, 2000);
        assert!(!rep.decay_ok);
        assert_relative_eq!(rep.worst_decay_ratio, 16.0, max_relative = 1e-12);
    }

    #[test]
    fn tensor_1d_ball_is_two_thirds() {
        let k = Kernel::ball(1, 1.0);
        let a = analytic_tensor(&k, 4096).unwrap();
        // Oracle: Simpson over the full line on an unrelated grid. It only
        // converges at first order across the indicator jump, hence the
        // looser tolerance.
        let oracle = simpson_second_moment_1d(&k, 100_000);
        assert_relative_eq!(oracle, 2.0 / 3.0, max_relative = 5e-4);
        assert_relative_eq!(a.get(0, 0), 2.0 / 3.0, max_relative = 1e-6);
    }

    #[test]
    fn tensor_2d_ball_is_quarter_pi_identity() {
        let k = Kernel::ball(2, 1.0);
        let a = analytic_tensor(&k, 1024).unwrap();
        // ∫_{|ξ|≤1} ξ_1² dξ = π/4 in closed form.
        let target = std::f64::consts::PI / 4.0;
        assert_relative_eq!(a.get(0, 0), target, max_relative = 1e-6);
        assert_relative_eq!(a.get(1, 1), target, max_relative = 1e-6);
        assert!(a.get(0, 1).abs() < 1e-12 * target);
        assert!(a.is_symmetric(1e-12));
        assert!(a.is_positive_definite());
    }

    #[test]
    fn tensor_quadrature_refines() {
        // Smooth kernel: halving the panel width shrinks the change by the
        // midpoint rule's second order.
        let k = Kernel::gaussian(2, 1.0, 0.5);
        let a1 = analytic_tensor(&k, 64).unwrap().get(0, 0);
        let a2 = analytic_tensor(&k, 128).unwrap().get(0, 0);
        let a4 = analytic_tensor(&k, 256).unwrap().get(0, 0);
        assert!((a2 - a4).abs() * 3.5 < (a1 - a2).abs() + 1e-14);
    }

    #[test]
    fn tensor_rejects_coarse_quadrature() {
        let k = Kernel::ball(2, 1.0);
        assert!(matches!(
            analytic_tensor(&k, 8),
            Err(Error::QuadratureUnderresolved { .. })
        ));
    }

    #[test]
    fn constructor_rejects_bad_parameters() {
        assert!(Kernel::new(KernelFamily::Ball, 1, -1.0, 1.0, 1.0, 1.0, 8.0).is_err());
        assert!(Kernel::new(KernelFamily::Ball, 1, 1.0, 1.0, 1.0, 1.0, 0.5).is_err());
        assert!(Kernel::new(KernelFamily::Ball, 1, 1.0, 2.0, 16.0, 1.0, 8.0).is_err());
        assert!(Kernel::new(KernelFamily::TruncatedPower, 1, 1.0, 0.1, 1.0, -1.0, 8.0).is_err());
    }
}
