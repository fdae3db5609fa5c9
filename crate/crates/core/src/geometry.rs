//! Cell-aligned boxes and unions of boxes.
//!
//! Everything downstream lives on a single global lattice: space is tiled by
//! cells `Π [c_i h, (c_i+1) h)` indexed by integer vectors, and every site is
//! a cell center `(c + 1/2) h`. Domains (the `U` of a constrained minimum
//! problem) are unions of whole cells, so that two problems sharing a
//! realization see identical geometry and identical coefficients.

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 4;

/// Integer cell box, `lo` inclusive, `hi` exclusive, in cell indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntBox {
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
}

impl IntBox {
    pub fn new(lo: Vec<i64>, hi: Vec<i64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        assert!(lo.iter().zip(&hi).all(|(a, b)| a < b), "empty box");
        IntBox { lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Centered cube of edge `r` on the lattice of spacing `h`.
    ///
    /// Requires `r/(2h)` integral so the cube is a union of whole cells.
    pub fn centered_cube(d: usize, r: f64, h: f64) -> Result<Self> {
        let half = r / (2.0 * h);
        let n = half.round();
        if (half - n).abs() > 1e-9 || n < 1.0 {
            return Err(Error::Incommensurate(format!(
                "cube edge {r} is not an even multiple of the spacing {h}"
            )));
        }
        let n = n as i64;
        Ok(IntBox::new(vec![-n; d], vec![n; d]))
    }

    /// Box enlarged by `m` cells on every face.
    pub fn dilate(&self, m: i64) -> Self {
        IntBox::new(
            self.lo.iter().map(|a| a - m).collect(),
            self.hi.iter().map(|b| b + m).collect(),
        )
    }

    pub fn contains_cell(&self, c: &[i64]) -> bool {
        c.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(x, (a, b))| a <= x && x < b)
    }

    pub fn cell_count(&self) -> usize {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| (b - a) as usize)
            .product()
    }

    pub fn intersects(&self, other: &IntBox) -> bool {
        self.lo
            .iter()
            .zip(&self.hi)
            .zip(other.lo.iter().zip(&other.hi))
            .all(|((a1, b1), (a2, b2))| a1 < b2 && a2 < b1)
    }

    /// Physical corner coordinates.
    pub fn phys_lo(&self, h: f64) -> Vec<f64> {
        self.lo.iter().map(|a| *a as f64 * h).collect()
    }

    pub fn phys_hi(&self, h: f64) -> Vec<f64> {
        self.hi.iter().map(|b| *b as f64 * h).collect()
    }

    pub fn volume(&self, h: f64) -> f64 {
        self.cell_count() as f64 * h.powi(self.dim() as i32)
    }

    /// Distance from an interior point to the box boundary; negative means
    /// the point is outside.
    pub fn dist_to_boundary(&self, x: &[f64], h: f64) -> f64 {
        let mut m = f64::INFINITY;
        for i in 0..self.dim() {
            m = m
                .min(x[i] - self.lo[i] as f64 * h)
                .min(self.hi[i] as f64 * h - x[i]);
        }
        m
    }

    /// Euclidean distance from a point to the closed box (0 inside).
    pub fn dist_to_point(&self, x: &[f64], h: f64) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim() {
            let lo = self.lo[i] as f64 * h;
            let hi = self.hi[i] as f64 * h;
            let d = if x[i] < lo {
                lo - x[i]
            } else if x[i] > hi {
                x[i] - hi
            } else {
                0.0
            };
            s += d * d;
        }
        s.sqrt()
    }

    /// Iterate all cell index vectors in row-major (lexicographic) order.
    pub fn cells(&self) -> CellIter {
        CellIter {
            lo: self.lo.clone(),
            hi: self.hi.clone(),
            cur: Some(self.lo.clone()),
        }
    }
}

pub struct CellIter {
    lo: Vec<i64>,
    hi: Vec<i64>,
    cur: Option<Vec<i64>>,
}

impl Iterator for CellIter {
    type Item = Vec<i64>;

    fn next(&mut self) -> Option<Vec<i64>> {
        let cur = self.cur.clone()?;
        let mut next = cur.clone();
        let d = self.lo.len();
        let mut i = d;
        loop {
            if i == 0 {
                self.cur = None;
                break;
            }
            i -= 1;
            next[i] += 1;
            if next[i] < self.hi[i] {
                self.cur = Some(next);
                break;
            }
            next[i] = self.lo[i];
        }
        Some(cur)
    }
}

/// Union of pairwise disjoint cell boxes.
#[derive(Debug, Clone)]
pub struct CellDomain {
    boxes: Vec<IntBox>,
}

impl CellDomain {
    pub fn single(b: IntBox) -> Self {
        CellDomain { boxes: vec![b] }
    }

    /// Union of disjoint boxes; errors if any pair of boxes overlaps.
    pub fn union(boxes: Vec<IntBox>) -> Result<Self> {
        for i in 0..boxes.len() {
            for j in i + 1..boxes.len() {
                if boxes[i].intersects(&boxes[j]) {
                    return Err(Error::BoxesOverlap);
                }
            }
        }
        Ok(CellDomain { boxes })
    }

    pub fn dim(&self) -> usize {
        self.boxes[0].dim()
    }

    pub fn boxes(&self) -> &[IntBox] {
        &self.boxes
    }

    pub fn contains_cell(&self, c: &[i64]) -> bool {
        self.boxes.iter().any(|b| b.contains_cell(c))
    }

    pub fn is_disjoint(&self, other: &CellDomain) -> bool {
        self.boxes
            .iter()
            .all(|a| other.boxes.iter().all(|b| !a.intersects(b)))
    }

    pub fn merged(&self, other: &CellDomain) -> Result<Self> {
        let mut boxes = self.boxes.clone();
        boxes.extend(other.boxes.iter().cloned());
        CellDomain::union(boxes)
    }

    pub fn cell_count(&self) -> usize {
        self.boxes.iter().map(|b| b.cell_count()).sum()
    }

    pub fn volume(&self, h: f64) -> f64 {
        self.boxes.iter().map(|b| b.volume(h)).sum()
    }

    /// Smallest box containing the whole union.
    pub fn bounding(&self) -> IntBox {
        let d = self.dim();
        let mut lo = vec![i64::MAX; d];
        let mut hi = vec![i64::MIN; d];
        for b in &self.boxes {
            for i in 0..d {
                lo[i] = lo[i].min(b.lo[i]);
                hi[i] = hi[i].max(b.hi[i]);
            }
        }
        IntBox::new(lo, hi)
    }

    /// Whether the point `x` (inside the domain) keeps distance at least
    /// `thresh` from the complement of the union.
    ///
    /// For a single box this is the closed-form face distance. For a true
    /// union the complement is scanned cell by cell inside a window of
    /// radius `thresh` around `x`; everything further away cannot matter.
    pub fn complement_dist_at_least(&self, x: &[f64], h: f64, thresh: f64) -> bool {
        if self.boxes.len() == 1 {
            return self.boxes[0].dist_to_boundary(x, h) >= thresh;
        }
        let d = self.dim();
        let bound = self.bounding();
        // Leaving the bounding box certainly leaves the union.
        if bound.dist_to_boundary(x, h) < thresh {
            return false;
        }
        let w = (thresh / h).ceil() as i64 + 1;
        let cx: Vec<i64> = x.iter().map(|v| (v / h).floor() as i64).collect();
        let scan = IntBox::new(
            (0..d).map(|i| cx[i] - w).collect(),
            (0..d).map(|i| cx[i] + w + 1).collect(),
        );
        for c in scan.cells() {
            if !self.contains_cell(&c) {
                let cell = IntBox::new(c.clone(), c.iter().map(|v| v + 1).collect());
                if cell.dist_to_point(x, h) < thresh {
                    return false;
                }
            }
        }
        true
    }
}

/// Center of cell `c` at spacing `h`.
pub fn cell_center(c: &[i64], h: f64) -> Vec<f64> {
    c.iter().map(|v| (*v as f64 + 0.5) * h).collect()
}

/// Cell index of the point `x` at spacing `h`.
pub fn cell_of(x: &[f64], h: f64) -> Vec<i64> {
    x.iter().map(|v| (v / h).floor() as i64).collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centered_cube_cells() {
        let b = IntBox::centered_cube(1, 8.0, 1.0).unwrap();
        assert_eq!(b.lo, vec![-4]);
        assert_eq!(b.hi, vec![4]);
        assert_eq!(b.cell_count(), 8);
        // Q_8 with margin 2K = 4 has 12 cells.
        assert_eq!(b.dilate(2).cell_count(), 12);
    }

    #[test]
    fn odd_cube_is_incommensurate() {
        assert!(matches!(
            IntBox::centered_cube(1, 5.0, 1.0),
            Err(Error::Incommensurate(_))
        ));
    }

    #[test]
    fn cell_iter_is_lexicographic() {
        let b = IntBox::new(vec![0, 0], vec![2, 2]);
        let cells: Vec<_> = b.cells().collect();
        assert_eq!(cells, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
    }

    #[test]
    fn union_rejects_overlap() {
        let a = IntBox::new(vec![0], vec![4]);
        let b = IntBox::new(vec![3], vec![6]);
        assert!(matches!(
            CellDomain::union(vec![a, b]),
            Err(Error::BoxesOverlap)
        ));
    }

    #[test]
    fn union_complement_distance_matches_merged_box() {
        // Two touching segments form one box; distances must agree with the
        // closed-form single-box answer.
        let a = IntBox::new(vec![0], vec![4]);
        let b = IntBox::new(vec![4], vec![8]);
        let u = CellDomain::union(vec![a, b]).unwrap();
        let merged = IntBox::new(vec![0], vec![8]);
        for c in merged.cells() {
            let x = cell_center(&c, 1.0);
            for t in [0.5, 1.0, 2.0, 3.4] {
                assert_eq!(
                    u.complement_dist_at_least(&x, 1.0, t),
                    merged.dist_to_boundary(&x, 1.0) >= t,
                    "x={x:?} t={t}"
                );
            }
        }
    }
}
