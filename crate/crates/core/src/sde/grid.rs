use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Two-level time grid: `macro_steps` control intervals of length `h`, each
/// split into `inner_refine` integration steps of length `δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    macro_steps: usize,
    inner_refine: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, macro_steps: usize, inner_refine: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(invalid(format!("horizon must be positive, got {horizon}")));
        }
        if macro_steps == 0 || inner_refine == 0 {
            return Err(invalid("macro_steps and inner_refine must be at least 1"));
        }
        Ok(Self {
            horizon,
            macro_steps,
            inner_refine,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn macro_steps(&self) -> usize {
        self.macro_steps
    }

    pub fn inner_refine(&self) -> usize {
        self.inner_refine
    }

    pub fn h(&self) -> f64 {
        self.horizon / self.macro_steps as f64
    }

    pub fn delta(&self) -> f64 {
        self.h() / self.inner_refine as f64
    }

    pub fn inner_steps(&self) -> usize {
        self.macro_steps * self.inner_refine
    }

    /// Same macro grid, `inner_refine` multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            inner_refine: self.inner_refine * factor.max(1),
            ..*self
        }
    }

    pub fn with_inner_refine(&self, inner_refine: usize) -> Result<Self> {
        Self::new(self.horizon, self.macro_steps, inner_refine)
    }

    /// Grid covering a single macro step `[0, h)`.
    pub fn one_step(&self) -> Self {
        Self {
            horizon: self.h(),
            macro_steps: 1,
            inner_refine: self.inner_refine,
        }
    }

    /// Macro step containing time `t`; the right endpoint belongs to the last step.
    pub fn step_of(&self, t: f64) -> usize {
        let k = (t / self.h()).floor();
        if k < 0.0 {
            0
        } else {
            (k as usize).min(self.macro_steps - 1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_steps() {
        let g = TimeGrid::new(1.0, 8, 16).unwrap();
        assert_eq!(g.h() * 8.0, 1.0);
        assert_eq!(g.delta(), 1.0 / 128.0);
        assert_eq!(g.inner_steps(), 128);
        assert_eq!(g.step_of(1.5 * g.h()), 1);
        assert_eq!(g.step_of(1.0), 7);
    }

    #[test]
    fn rejects_degenerate() {
        assert!(TimeGrid::new(0.0, 1, 1).is_err());
        assert!(TimeGrid::new(1.0, 0, 1).is_err());
        assert!(TimeGrid::new(1.0, 1, 0).is_err());
    }
}
