//! Random coefficient environments `B(x)`.
//!
//! A realization is materialized once on a stated box and then queried
//! pointwise; queries outside the box are an error rather than silently
//! extending the randomness. Checkerboard cell values are a pure function of
//! `(seed, absolute cell index)`, so enlarging the box extends a realization
//! instead of resampling it, so campaigns at growing R reuse the same
//! environment. Perforations are a Matérn type-II hard-core process: Poisson
//! proposals with uniform birth marks, a proposal survives when no other
//! proposal with a smaller mark lies within `2r + gap`.

use crate::error::{Error, Result};
use crate::geometry::{norm, MAX_DIM};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum EnvKind {
    /// `B ≡ 1`.
    Constant,
    /// Iid two-level field, constant on unit cells of edge `cell_size`:
    /// value `lambda2` with probability `p`, else `lambda1`.
    Checkerboard {
        lambda1: f64,
        lambda2: f64,
        p: f64,
        cell_size: f64,
    },
    /// `B = χ_E` with `E` the complement of a union of closed balls of
    /// radius `hole_radius` around Matérn-II centers of the given intensity.
    Perforation {
        hole_radius: f64,
        hole_min_gap: f64,
        intensity: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub d: usize,
    pub kind: EnvKind,
}

impl EnvironmentSpec {
    pub fn constant(d: usize) -> Self {
        EnvironmentSpec {
            d,
            kind: EnvKind::Constant,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d > 3 {
            return Err(Error::EnvironmentInvalid(format!(
                "dimension {} unsupported",
                self.d
            )));
        }
        match &self.kind {
            EnvKind::Constant => Ok(()),
            EnvKind::Checkerboard {
                lambda1,
                lambda2,
                p,
                cell_size,
            } => {
                if !(*lambda1 > 0.0 && *lambda2 >= *lambda1) {
                    return Err(Error::EnvironmentInvalid(
                        "need 0 < lambda1 <= lambda2".into(),
                    ));
                }
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::EnvironmentInvalid("p must be in [0,1]".into()));
                }
                if !(*cell_size > 0.0) {
                    return Err(Error::EnvironmentInvalid(
                        "cell_size must be positive".into(),
                    ));
                }
                Ok(())
            }
            EnvKind::Perforation {
                hole_radius,
                hole_min_gap,
                intensity,
            } => {
                if !(*hole_radius > 0.0 && *hole_min_gap >= 0.0 && *intensity >= 0.0) {
                    return Err(Error::EnvironmentInvalid(
                        "perforation parameters must be nonnegative, radius positive".into(),
                    ));
                }
                if self.d == 1 && *intensity > 0.0 {
                    return Err(Error::PerforationDisconnects);
                }
                Ok(())
            }
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform in [0,1) as a pure function of `(seed, cell)`.
pub fn cell_uniform(seed: u64, cell: &[i64]) -> f64 {
    let mut state = splitmix64(seed);
    for &c in cell {
        state = splitmix64(state ^ c as u64);
    }
    (state >> 11) as f64 / 9_007_199_254_740_992.0
}

#[derive(Debug, Clone)]
enum RealizationData {
    Constant,
    Checkerboard,
    Perforation {
        centers: Vec<Vec<f64>>,
        radius: f64,
        /// Uniform hash grid over centers, bucket edge `2 r`.
        grid: HashMap<[i64; MAX_DIM], Vec<u32>>,
    },
}

/// A coefficient field materialized on a box.
#[derive(Debug, Clone)]
pub struct Realization {
    pub spec: EnvironmentSpec,
    pub seed: u64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    data: RealizationData,
}

fn grid_key(x: &[f64], edge: f64) -> [i64; MAX_DIM] {
    let mut k = [0i64; MAX_DIM];
    for (i, v) in x.iter().enumerate() {
        k[i] = (v / edge).floor() as i64;
    }
    k
}

pub fn sample_environment(
    spec: &EnvironmentSpec,
    seed: u64,
    lo: &[f64],
    hi: &[f64],
) -> Result<Realization> {
    spec.validate()?;
    if lo.len() != spec.d || hi.len() != spec.d || lo.iter().zip(hi).any(|(a, b)| a >= b) {
        return Err(Error::EnvironmentInvalid(
            "degenerate realization box".into(),
        ));
    }
    let data = match &spec.kind {
        EnvKind::Constant => RealizationData::Constant,
        EnvKind::Checkerboard { .. } => RealizationData::Checkerboard,
        EnvKind::Perforation {
            hole_radius,
            hole_min_gap,
            intensity,
        } => {
            let r = *hole_radius;
            let excl = 2.0 * r + hole_min_gap;
            // Propose on the padded box so acceptance near the edge sees its
            // competitors; keep holes whose ball lies inside the stated box.
            let pad = excl;
            let vol: f64 = lo
                .iter()
                .zip(hi)
                .map(|(a, b)| (b - a) + 2.0 * pad)
                .product();
            let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ HOLE_STREAM));
            let n = if *intensity > 0.0 {
                Poisson::new(intensity * vol)
                    .map_err(|e| Error::EnvironmentInvalid(format!("poisson: {e}")))?
                    .sample(&mut rng) as usize
            } else {
                0
            };
            let mut proposals: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n);
            for _ in 0..n {
                let p: Vec<f64> = lo
                    .iter()
                    .zip(hi)
                    .map(|(a, b)| rng.random_range(*a - pad..*b + pad))
                    .collect();
                let mark: f64 = rng.random();
                proposals.push((p, mark));
            }
            let mut centers = Vec::new();
            'outer: for (i, (p, mark)) in proposals.iter().enumerate() {
                for (j, (q, other)) in proposals.iter().enumerate() {
                    if i == j {
                        continue;
                    }
                    let dist = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                    if dist < excl * excl && (*other, j) < (*mark, i) {
                        continue 'outer;
                    }
                }
                // Hard-core thinning done; keep only balls inside the box.
                if p.iter()
                    .zip(lo.iter().zip(hi))
                    .all(|(v, (a, b))| *v - r >= *a && *v + r <= *b)
                {
                    centers.push(p.clone());
                }
            }
            let mut grid: HashMap<[i64; MAX_DIM], Vec<u32>> = HashMap::new();
            for (i, c) in centers.iter().enumerate() {
                grid.entry(grid_key(c, 2.0 * r)).or_default().push(i as u32);
            }
            RealizationData::Perforation {
                centers,
                radius: r,
                grid,
            }
        }
    };
    Ok(Realization {
        spec: spec.clone(),
        seed,
        lo: lo.to_vec(),
        hi: hi.to_vec(),
        data,
    })
}

/// Domain-separation constant so hole sampling never collides with the
/// checkerboard stream of the same seed.
const HOLE_STREAM: u64 = 0x5EED_0FA1_1B0C_E55A;

impl Realization {
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *a <= *v && *v <= *b)
    }

    /// The scalar factor `B(x)`.
    pub fn site_factor(&self, x: &[f64]) -> Result<f64> {
        if !self.contains(x) {
            return Err(Error::OutsideRealization { point: x.to_vec() });
        }
        Ok(match (&self.data, &self.spec.kind) {
            (RealizationData::Constant, _) => 1.0,
            (
                RealizationData::Checkerboard,
                EnvKind::Checkerboard {
                    lambda1,
                    lambda2,
                    p,
                    cell_size,
                },
            ) => {
                let cell: Vec<i64> = x.iter().map(|v| (v / cell_size).floor() as i64).collect();
                if cell_uniform(self.seed, &cell) < *p {
                    *lambda2
                } else {
                    *lambda1
                }
            }
            (
                RealizationData::Perforation {
                    centers,
                    radius,
                    grid,
                },
                _,
            ) => {
                let key = grid_key(x, 2.0 * radius);
                let d = self.spec.d;
                let mut inside = false;
                let mut probe = key;
                let steps = 3usize.pow(d as u32);
                'probe: for s in 0..steps {
                    let mut t = s;
                    for i in 0..d {
                        probe[i] = key[i] + (t % 3) as i64 - 1;
                        t /= 3;
                    }
                    if let Some(bucket) = grid.get(&probe) {
                        for &ci in bucket {
                            let c = &centers[ci as usize];
                            let dist2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
                            if dist2 <= radius * radius {
                                inside = true;
                                break 'probe;
                            }
                        }
                    }
                }
                if inside {
                    0.0
                } else {
                    1.0
                }
            }
            _ => unreachable!("realization data inconsistent with spec"),
        })
    }

    pub fn hole_centers(&self) -> &[Vec<f64>] {
        match &self.data {
            RealizationData::Perforation { centers, .. } => centers,
            _ => &[],
        }
    }

    /// Plain-text dump for diagnostics: checkerboard cells with values, or
    /// hole centers.
    pub fn dump_text(&self) -> String {
        let mut out = String::new();
        match (&self.data, &self.spec.kind) {
            (RealizationData::Checkerboard, EnvKind::Checkerboard { cell_size, .. }) => {
                let lo_c: Vec<i64> = self
                    .lo
                    .iter()
                    .map(|v| (v / cell_size).floor() as i64)
                    .collect();
                let hi_c: Vec<i64> = self
                    .hi
                    .iter()
                    .map(|v| (v / cell_size).ceil() as i64)
                    .collect();
                let b = crate::geometry::IntBox::new(lo_c, hi_c);
                for cell in b.cells() {
                    let center = crate::geometry::cell_center(&cell, *cell_size);
                    let v = self.site_factor(&center).unwrap_or(f64::NAN);
                    let idx: Vec<String> = cell.iter().map(|c| c.to_string()).collect();
                    out.push_str(&format!("{} {:.17e}\n", idx.join(" "), v));
                }
            }
            (RealizationData::Perforation { centers, .. }, _) => {
                for c in centers {
                    let row: Vec<String> = c.iter().map(|v| format!("{v:.17e}")).collect();
                    out.push_str(&row.join(" "));
                    out.push('\n');
                }
            }
            _ => out.push_str("constant 1.0\n"),
        }
        out
    }
}

/// The full coefficient `b(x, y) = B(x) B(y) a(x - y)`.
pub fn coefficient_at(
    real: &Realization,
    kernel: &crate::kernel::Kernel,
    x: &[f64],
    y: &[f64],
) -> Result<f64> {
    let bx = real.site_factor(x)?;
    let by = real.site_factor(y)?;
    let xi: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    Ok(bx * by * kernel.eval(&xi))
}

#[derive(Debug, Clone)]
pub struct PerforationReport {
    pub hole_count: usize,
    pub min_gap_ok: bool,
    pub all_inside_ok: bool,
    /// Complement of the holes is connected on the sampling lattice.
    pub connected_ok: bool,
}

/// Post-hoc geometry check of a perforated realization at the lattice
/// spacing used downstream: pairwise center distances, ball containment, and
/// flood-fill connectivity of the complement.
pub fn verify_perforation_geometry(real: &Realization, spacing: f64) -> PerforationReport {
    let (centers, radius, gap) = match (&real.data, &real.spec.kind) {
        (
            RealizationData::Perforation {
                centers, radius, ..
            },
            EnvKind::Perforation { hole_min_gap, .. },
        ) => (centers.clone(), *radius, *hole_min_gap),
        _ => {
            return PerforationReport {
                hole_count: 0,
                min_gap_ok: true,
                all_inside_ok: true,
                connected_ok: true,
            }
        }
    };
    let excl = 2.0 * radius + gap;
    let mut min_gap_ok = true;
    for i in 0..centers.len() {
        for j in i + 1..centers.len() {
            let diff: Vec<f64> = centers[i]
                .iter()
                .zip(&centers[j])
                .map(|(a, b)| a - b)
                .collect();
            if norm(&diff) < excl - 1e-12 {
                min_gap_ok = false;
            }
        }
    }
    let all_inside_ok = centers.iter().all(|c| {
        c.iter()
            .zip(real.lo.iter().zip(&real.hi))
            .all(|(v, (a, b))| *v - radius >= *a - 1e-12 && *v + radius <= *b + 1e-12)
    });

    // Flood fill over lattice sites of the realization box.
    let d = real.spec.d;
    let dims: Vec<usize> = real
        .lo
        .iter()
        .zip(&real.hi)
        .map(|(a, b)| ((b - a) / spacing).round().max(1.0) as usize)
        .collect();
    let total: usize = dims.iter().product();
    let site = |flat: usize| -> Vec<f64> {
        let mut rem = flat;
        let mut x = vec![0.0; d];
        for i in (0..d).rev() {
            x[i] = real.lo[i] + (rem % dims[i]) as f64 * spacing + 0.5 * spacing;
            rem /= dims[i];
        }
        x
    };
    let mut open = vec![false; total];
    let mut n_open = 0usize;
    for f in 0..total {
        if real.site_factor(&site(f)).unwrap_or(0.0) > 0.0 {
            open[f] = true;
            n_open += 1;
        }
    }
    let connected_ok = if n_open == 0 {
        false
    } else {
        let root = (0..total).find(|f| open[*f]).unwrap();
        let mut seen = vec![false; total];
        let mut stack = vec![root];
        seen[root] = true;
        let mut visited = 0usize;
        let strides: Vec<usize> = {
            let mut s = vec![1usize; d];
            for i in (0..d.saturating_sub(1)).rev() {
                s[i] = s[i + 1] * dims[i + 1];
            }
            s
        };
        while let Some(f) = stack.pop() {
            visited += 1;
            let mut rem = f;
            let mut idx = vec![0usize; d];
            for i in (0..d).rev() {
                idx[i] = rem % dims[i];
                rem /= dims[i];
            }
            for i in 0..d {
                for step in [-1i64, 1] {
                    let ni = idx[i] as i64 + step;
                    if ni < 0 || ni >= dims[i] as i64 {
                        continue;
                    }
                    let nf = (f as i64 + step * strides[i] as i64) as usize;
                    if open[nf] && !seen[nf] {
                        seen[nf] = true;
                        stack.push(nf);
                    }
                }
            }
        }
        visited == n_open
    };
    PerforationReport {
        hole_count: centers.len(),
        min_gap_ok,
        all_inside_ok,
        connected_ok,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Kernel;

    fn checkerboard(d: usize, p: f64) -> EnvironmentSpec {
        EnvironmentSpec {
            d,
            kind: EnvKind::Checkerboard {
                lambda1: 1.0,
                lambda2: 4.0,
                p,
                cell_size: 1.0,
            },
        }
    }

    #[test]
    fn checkerboard_values_are_two_level() {
        let spec = checkerboard(2, 0.5);
        let r = sample_environment(&spec, 7, &[-8.0, -8.0], &[8.0, 8.0]).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for i in -7..7 {
            for j in -7..7 {
                let v = r.site_factor(&[i as f64 + 0.5, j as f64 + 0.5]).unwrap();
                assert!(v == 1.0 || v == 4.0);
                seen.insert(v.to_bits());
            }
        }
        assert_eq!(seen.len(), 2, "both levels should occur at p=1/2");
    }

    #[test]
    fn checkerboard_p_one_is_all_high() {
        let spec = checkerboard(1, 1.0);
        let r = sample_environment(&spec, 3, &[-4.0], &[4.0]).unwrap();
        for i in -4..4 {
            assert_eq!(r.site_factor(&[i as f64 + 0.5]).unwrap(), 4.0);
        }
    }

    #[test]
    fn checkerboard_extension_is_consistent() {
        // Enlarging the box must not change previously covered cells.
        let spec = checkerboard(2, 0.4);
        let small = sample_environment(&spec, 11, &[-4.0, -4.0], &[4.0, 4.0]).unwrap();
        let large = sample_environment(&spec, 11, &[-16.0, -16.0], &[16.0, 16.0]).unwrap();
        for i in -4..4 {
            for j in -4..4 {
                let x = [i as f64 + 0.5, j as f64 + 0.5];
                assert_eq!(
                    small.site_factor(&x).unwrap(),
                    large.site_factor(&x).unwrap()
                );
            }
        }
    }

    #[test]
    fn checkerboard_mean_concentrates() {
        // Binomial oracle: fraction of high cells ≈ p within 4 sigma.
        let spec = checkerboard(2, 0.3);
        let n = 64;
        let r = sample_environment(&spec, 123, &[0.0, 0.0], &[n as f64, n as f64]).unwrap();
        let mut high = 0usize;
        for i in 0..n {
            for j in 0..n {
                if r.site_factor(&[i as f64 + 0.5, j as f64 + 0.5]).unwrap() == 4.0 {
                    high += 1;
                }
            }
        }
        let total = (n * n) as f64;
        let p = 0.3;
        let sigma = (p * (1.0 - p) / total).sqrt();
        assert!(
            ((high as f64 / total) - p).abs() < 4.0 * sigma,
            "fraction {} vs p {}",
            high as f64 / total,
            p
        );
    }

    #[test]
    fn queries_outside_box_fail() {
        let spec = checkerboard(1, 0.5);
        let r = sample_environment(&spec, 1, &[0.0], &[8.0]).unwrap();
        assert!(matches!(
            r.site_factor(&[9.0]),
            Err(Error::OutsideRealization { .. })
        ));
    }

    #[test]
    fn coefficient_is_product_form() {
        let spec = checkerboard(1, 0.5);
        let r = sample_environment(&spec, 5, &[-8.0], &[8.0]).unwrap();
        let k = Kernel::ball(1, 1.0);
        let x = [0.5];
        let y = [1.5];
        let b = coefficient_at(&r, &k, &x, &y).unwrap();
        let expect = r.site_factor(&x).unwrap() * r.site_factor(&y).unwrap() * k.eval(&[-1.0]);
        assert_eq!(b, expect);
        // Symmetric in its arguments because the kernel is even.
        assert_eq!(b, coefficient_at(&r, &k, &y, &x).unwrap());
    }

    #[test]
    fn perforation_rejected_in_1d() {
        let spec = EnvironmentSpec {
            d: 1,
            kind: EnvKind::Perforation {
                hole_radius: 0.5,
                hole_min_gap: 0.5,
                intensity: 0.1,
            },
        };
        assert!(matches!(
            sample_environment(&spec, 1, &[0.0], &[8.0]),
            Err(Error::PerforationDisconnects)
        ));
    }

    #[test]
    fn perforation_geometry_holds() {
        let spec = EnvironmentSpec {
            d: 2,
            kind: EnvKind::Perforation {
                hole_radius: 1.0,
                hole_min_gap: 0.5,
                intensity: 0.04,
            },
        };
        let r = sample_environment(&spec, 42, &[-16.0, -16.0], &[16.0, 16.0]).unwrap();
        let rep = verify_perforation_geometry(&r, 0.25);
        assert!(rep.hole_count > 0, "intensity should produce holes");
        assert!(rep.min_gap_ok);
        assert!(rep.all_inside_ok);
        assert!(rep.connected_ok, "sparse holes should not disconnect");
        // Inside a hole the factor vanishes.
        let c = &r.hole_centers()[0];
        assert_eq!(r.site_factor(c).unwrap(), 0.0);
    }

    #[test]
    fn perforation_is_deterministic() {
        let spec = EnvironmentSpec {
            d: 2,
            kind: EnvKind::Perforation {
                hole_radius: 1.0,
                hole_min_gap: 0.5,
                intensity: 0.03,
            },
        };
        let a = sample_environment(&spec, 9, &[-8.0, -8.0], &[8.0, 8.0]).unwrap();
        let b = sample_environment(&spec, 9, &[-8.0, -8.0], &[8.0, 8.0]).unwrap();
        assert_eq!(a.hole_centers(), b.hole_centers());
        let c = sample_environment(&spec, 10, &[-8.0, -8.0], &[8.0, 8.0]).unwrap();
        assert_ne!(a.hole_centers(), c.hole_centers());
    }
}
