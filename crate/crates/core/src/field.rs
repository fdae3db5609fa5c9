//! Scalar fields sampled on the cell centers of a box.

use crate::env::cell_uniform;
use crate::geometry::{cell_center, IntBox};

#[derive(Debug, Clone)]
pub struct GridField {
    pub bbox: IntBox,
    pub h: f64,
    /// Row-major over the cells of `bbox`.
    pub values: Vec<f64>,
}

impl GridField {
    pub fn from_fn(bbox: IntBox, h: f64, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = bbox.cells().map(|c| f(&cell_center(&c, h))).collect();
        GridField { bbox, h, values }
    }

    /// Independent uniform values in `[-1, 1]`, one per cell, derived from
    /// the seed and the absolute cell index (consistent across boxes).
    pub fn random(bbox: IntBox, h: f64, seed: u64) -> Self {
        let values = bbox
            .cells()
            .map(|c| 2.0 * cell_uniform(seed, &c) - 1.0)
            .collect();
        GridField { bbox, h, values }
    }

    pub fn d(&self) -> usize {
        self.bbox.dim()
    }

    fn flat_of(&self, cell: &[i64]) -> Option<usize> {
        let d = self.d();
        let mut f = 0usize;
        for i in 0..d {
            let off = cell[i] - self.bbox.lo[i];
            if off < 0 || off >= self.bbox.hi[i] - self.bbox.lo[i] {
                return None;
            }
            let extent = (self.bbox.hi[i] - self.bbox.lo[i]) as usize;
            f = f * extent + off as usize;
        }
        Some(f)
    }

    pub fn get(&self, cell: &[i64]) -> Option<f64> {
        self.flat_of(cell).map(|f| self.values[f])
    }

    pub fn set(&mut self, cell: &[i64], v: f64) {
        let f = self.flat_of(cell).expect("cell outside field box");
        self.values[f] = v;
    }

    /// `Σ u(x)^2 h^d` over the cells of `sub`.
    pub fn l2_sq(&self, sub: &IntBox) -> f64 {
        let meas = self.h.powi(self.d() as i32);
        sub.cells()
            .map(|c| self.get(&c).unwrap_or(0.0).powi(2))
            .sum::<f64>()
            * meas
    }

    /// Mean over the cells of `sub`.
    pub fn mean(&self, sub: &IntBox) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for c in sub.cells() {
            if let Some(v) = self.get(&c) {
                sum += v;
                n += 1;
            }
        }
        sum / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_field_is_box_consistent() {
        let small = GridField::random(IntBox::new(vec![-2], vec![2]), 0.5, 9);
        let large = GridField::random(IntBox::new(vec![-8], vec![8]), 0.5, 9);
        for c in [-2i64, -1, 0, 1] {
            assert_eq!(small.get(&[c]), large.get(&[c]));
        }
        assert!(small.values.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn l2_and_mean_on_subbox() {
        let f = GridField::from_fn(IntBox::new(vec![0, 0], vec![4, 4]), 1.0, |x| x[0]);
        let sub = IntBox::new(vec![0, 0], vec![2, 4]);
        // values 0.5 and 1.5 on two columns of four cells each
        assert_eq!(f.l2_sq(&sub), 4.0 * (0.25 + 2.25));
        assert_eq!(f.mean(&sub), 1.0);
    }

    #[test]
    fn out_of_box_reads_are_none() {
        let f = GridField::random(IntBox::new(vec![0], vec![4]), 1.0, 1);
        assert!(f.get(&[4]).is_none());
        assert!(f.get(&[-1]).is_none());
    }
}
