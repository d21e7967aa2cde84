use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Uniform box partition, row-major cell indices. Points outside the box are
/// assigned to the nearest boundary cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateCells {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub counts: Vec<usize>,
}

impl StateCells {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, counts: Vec<usize>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() || lo.len() != counts.len() {
            return Err(invalid("cell box and counts must share a positive dimension"));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) || counts.contains(&0) {
            return Err(invalid(
                "cell box must be nonempty with at least one cell per dimension",
            ));
        }
        Ok(Self { lo, hi, counts })
    }

    pub fn uniform_1d(lo: f64, hi: f64, count: usize) -> Result<Self> {
        Self::new(vec![lo], vec![hi], vec![count])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn count(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn width(&self, d: usize) -> f64 {
        (self.hi[d] - self.lo[d]) / self.counts[d] as f64
    }

    /// Cell index and whether `x` lay outside the box.
    pub fn locate(&self, x: &[f64]) -> (usize, bool) {
        let mut idx = 0;
        let mut clamped = false;
        for d in 0..self.dim() {
            let n = self.counts[d];
            let t = ((x[d] - self.lo[d]) / self.width(d)).floor();
            let c = if !(t >= 0.0) {
                clamped |= x[d] < self.lo[d] || x[d].is_nan();
                0
            } else if t as usize >= n {
                clamped |= x[d] > self.hi[d];
                n - 1
            } else {
                t as usize
            };
            idx = idx * n + c;
        }
        (idx, clamped)
    }

    fn coords(&self, mut cell: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for d in (0..self.dim()).rev() {
            out[d] = cell % self.counts[d];
            cell /= self.counts[d];
        }
        out
    }

    pub fn center(&self, cell: usize) -> Vec<f64> {
        self.coords(cell)
            .iter()
            .enumerate()
            .map(|(d, &c)| self.lo[d] + (c as f64 + 0.5) * self.width(d))
            .collect()
    }

    /// Point of the cell at relative position `frac ∈ [0,1)^dim`.
    pub fn point_in(&self, cell: usize, frac: &[f64]) -> Vec<f64> {
        self.coords(cell)
            .iter()
            .enumerate()
            .map(|(d, &c)| self.lo[d] + (c as f64 + frac[d]) * self.width(d))
            .collect()
    }
}

/// Per-coordinate quantizer for observation samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationQuantizer {
    pub cells: StateCells,
}

impl ObservationQuantizer {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, levels: Vec<usize>) -> Result<Self> {
        Ok(Self {
            cells: StateCells::new(lo, hi, levels)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.cells.dim()
    }

    /// Number of codes for a single sample.
    pub fn base(&self) -> u64 {
        self.cells.count() as u64
    }

    pub fn quantize(&self, y: &[f64]) -> u64 {
        self.cells.locate(y).0 as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn locate_and_clamp() {
        let c = StateCells::uniform_1d(-1.0, 1.0, 4).unwrap();
        assert_eq!(c.locate(&[-0.9]), (0, false));
        assert_eq!(c.locate(&[0.1]), (2, false));
        assert_eq!(c.locate(&[1.0]), (3, false));
        assert_eq!(c.locate(&[5.0]), (3, true));
        assert_eq!(c.locate(&[-5.0]), (0, true));
        assert_eq!(c.center(1), vec![-0.25]);
    }

    #[test]
    fn two_dimensional_cells() {
        let c = StateCells::new(vec![0.0, 0.0], vec![1.0, 2.0], vec![2, 4]).unwrap();
        assert_eq!(c.count(), 8);
        let (i, _) = c.locate(&[0.7, 0.6]);
        assert_eq!(i, 4 + 1);
        assert_eq!(c.center(5), vec![0.75, 0.75]);
    }

    #[test]
    fn sign_quantizer() {
        let q = ObservationQuantizer::new(vec![-1.0], vec![1.0], vec![2]).unwrap();
        assert_eq!(q.quantize(&[-0.3]), 0);
        assert_eq!(q.quantize(&[0.0]), 1);
        assert_eq!(q.quantize(&[7.0]), 1);
    }
}
