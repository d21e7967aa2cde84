use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Finite action set on a box, enumerated row-major (last coordinate fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionGrid {
    lo: Vec<f64>,
    hi: Vec<f64>,
    values: Vec<Vec<f64>>,
    points: Vec<f64>,
}

impl ActionGrid {
    /// Explicit per-dimension value lists. Each list must be strictly
    /// increasing and lie inside `[lo, hi]`.
    pub fn from_values(lo: Vec<f64>, hi: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() || values.len() != lo.len() {
            return Err(invalid("action box and value lists must share a positive dimension"));
        }
        for d in 0..lo.len() {
            if !(lo[d] <= hi[d]) {
                return Err(invalid(format!("empty action box in dimension {d}")));
            }
            let v = &values[d];
            if v.is_empty() || v.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(invalid(format!(
                    "action values in dimension {d} must be strictly increasing"
                )));
            }
            if v.iter().any(|x| *x < lo[d] || *x > hi[d]) {
                return Err(invalid(format!("action value outside the box in dimension {d}")));
            }
        }
        let count: usize = values.iter().map(Vec::len).product();
        let dim = lo.len();
        let mut points = Vec::with_capacity(count * dim);
        for i in 0..count {
            let mut rem = i;
            let mut coords = vec![0.0; dim];
            for d in (0..dim).rev() {
                let l = values[d].len();
                coords[d] = values[d][rem % l];
                rem /= l;
            }
            points.extend(coords);
        }
        Ok(Self { lo, hi, values, points })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, index: usize) -> &[f64] {
        let d = self.dim();
        &self.points[index * d..(index + 1) * d]
    }

    pub fn values(&self, dim: usize) -> &[f64] {
        &self.values[dim]
    }

    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.lo, &self.hi)
    }

    /// Flat index of a per-dimension level tuple.
    pub fn index_of(&self, levels: &[usize]) -> Option<usize> {
        if levels.len() != self.dim() {
            return None;
        }
        let mut idx = 0;
        for (d, &l) in levels.iter().enumerate() {
            if l >= self.values[d].len() {
                return None;
            }
            idx = idx * self.values[d].len() + l;
        }
        Some(idx)
    }

    pub fn levels_of(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for d in (0..self.dim()).rev() {
            let l = self.values[d].len();
            out[d] = index % l;
            index /= l;
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let rebuilt = Self::from_values(self.lo.clone(), self.hi.clone(), self.values.clone())?;
        if rebuilt.points != self.points {
            return Err(invalid("action grid points are inconsistent with its value lists"));
        }
        Ok(())
    }
}

/// Uniform grid over `[lo, hi]` per dimension, endpoints included for
/// `levels ≥ 2`, the midpoint for `levels = 1`.
pub fn quantize_actions(lo: &[f64], hi: &[f64], levels: &[usize]) -> Result<ActionGrid> {
    if lo.len() != hi.len() || lo.len() != levels.len() || lo.is_empty() {
        return Err(invalid("action box and level counts must share a positive dimension"));
    }
    let mut values = Vec::with_capacity(lo.len());
    for d in 0..lo.len() {
        if !(lo[d] <= hi[d]) {
            return Err(invalid(format!("empty action box in dimension {d}")));
        }
        let n = levels[d];
        if n == 0 {
            return Err(invalid("levels must be at least 1"));
        }
        if n > 1 && lo[d] == hi[d] {
            return Err(invalid(format!(
                "degenerate box in dimension {d} admits a single level"
            )));
        }
        let v: Vec<f64> = if n == 1 {
            vec![0.5 * (lo[d] + hi[d])]
        } else {
            (0..n)
                .map(|i| {
                    if i == n - 1 {
                        hi[d]
                    } else {
                        lo[d] + (hi[d] - lo[d]) * i as f64 / (n - 1) as f64
                    }
                })
                .collect()
        };
        values.push(v);
    }
    ActionGrid::from_values(lo.to_vec(), hi.to_vec(), values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_levels_on_symmetric_box() {
        let g = quantize_actions(&[-1.0], &[1.0], &[3]).unwrap();
        assert_eq!(g.values(0), &[-1.0, 0.0, 1.0]);
        assert_eq!(g.len(), 3);
    }

    #[test]
    fn single_level_is_midpoint() {
        let g = quantize_actions(&[0.0], &[2.0], &[1]).unwrap();
        assert_eq!(g.values(0), &[1.0]);
    }

    #[test]
    fn two_dimensional_row_major() {
        let g = quantize_actions(&[0.0, 0.0], &[1.0, 1.0], &[2, 2]).unwrap();
        let pts: Vec<Vec<f64>> = (0..g.len()).map(|i| g.point(i).to_vec()).collect();
        assert_eq!(
            pts,
            vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]
        );
        assert_eq!(g.index_of(&[1, 0]), Some(2));
        assert_eq!(g.levels_of(3), vec![1, 1]);
    }

    #[test]
    fn empty_box_rejected() {
        assert!(quantize_actions(&[1.0], &[0.0], &[2]).is_err());
        assert!(quantize_actions(&[0.0], &[1.0], &[0]).is_err());
    }
}
