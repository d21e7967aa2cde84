//! Probe-based checks of the boundedness and nondegeneracy assumptions.
//! These report what the probes saw; they cannot certify a global bound.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DiffusionModel;
use crate::error::{invalid, Result};
use crate::linalg::{norm_sq, solve_in_place};

const PROBE_SEED: u64 = 0x5EED_0F_AB;
/// Singular values at or below this are treated as non-invertible.
pub const SINGULAR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeBox {
    pub state_lo: Vec<f64>,
    pub state_hi: Vec<f64>,
    pub action_lo: Vec<f64>,
    pub action_hi: Vec<f64>,
}

impl ProbeBox {
    pub fn cube(state_dim: usize, state_half: f64, action_dim: usize, action_half: f64) -> Self {
        Self {
            state_lo: vec![-state_half; state_dim],
            state_hi: vec![state_half; state_dim],
            action_lo: vec![-action_half; action_dim],
            action_hi: vec![action_half; action_dim],
        }
    }

    fn check(&self, model: &DiffusionModel) -> Result<()> {
        let ok = self.state_lo.len() == model.state_dim
            && self.state_hi.len() == model.state_dim
            && self.action_lo.len() == model.action_dim
            && self.action_hi.len() == model.action_dim
            && self.state_lo.iter().zip(&self.state_hi).all(|(a, b)| a <= b)
            && self.action_lo.iter().zip(&self.action_hi).all(|(a, b)| a <= b);
        if ok {
            Ok(())
        } else {
            Err(invalid("probe box is empty or has the wrong dimension"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub probes: usize,
    pub max_drift: f64,
    pub max_diffusion_norm: f64,
    /// Smallest eigenvalue of `½σσᵀ` seen.
    pub min_eigenvalue: f64,
    pub min_singular_value: f64,
    /// Largest `|σ⁻¹ b|` seen over invertible probes.
    pub max_girsanov_integrand: f64,
    pub drift_bound: f64,
    pub ellipticity: f64,
    pub bound_ok: bool,
    pub ellipticity_ok: bool,
    pub invertible: bool,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.bound_ok && self.ellipticity_ok && self.invertible
    }
}

fn uniform_in(rng: &mut ChaCha8Rng, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    lo.iter()
        .zip(hi)
        .map(|(a, b)| a + (b - a) * rng.random::<f64>())
        .collect()
}

pub fn validate_assumptions(
    model: &DiffusionModel,
    probe_count: usize,
    probe_box: &ProbeBox,
) -> Result<AssumptionReport> {
    if probe_count == 0 {
        return Err(invalid("probe_count must be at least 1"));
    }
    probe_box.check(model)?;
    let n = model.state_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    let mut drift = vec![0.0; n];
    let mut sigma = vec![0.0; n * n];
    let mut report = AssumptionReport {
        probes: probe_count,
        max_drift: 0.0,
        max_diffusion_norm: 0.0,
        min_eigenvalue: f64::INFINITY,
        min_singular_value: f64::INFINITY,
        max_girsanov_integrand: 0.0,
        drift_bound: model.drift_bound,
        ellipticity: model.ellipticity,
        bound_ok: true,
        ellipticity_ok: true,
        invertible: true,
    };
    for p in 0..probe_count {
        // first probe sits at the box centre
        let (x, u) = if p == 0 {
            let mid = |lo: &[f64], hi: &[f64]| lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect::<Vec<_>>();
            (
                mid(&probe_box.state_lo, &probe_box.state_hi),
                mid(&probe_box.action_lo, &probe_box.action_hi),
            )
        } else {
            (
                uniform_in(&mut rng, &probe_box.state_lo, &probe_box.state_hi),
                uniform_in(&mut rng, &probe_box.action_lo, &probe_box.action_hi),
            )
        };
        model.drift(&x, &u, &mut drift);
        model.diffusion(&x, &mut sigma);
        let b = norm_sq(&drift).sqrt();
        let s = DMatrix::from_row_slice(n, n, &sigma);
        let a = (&s * s.transpose()) * 0.5;
        let eig = SymmetricEigen::new(a).eigenvalues;
        let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let norm = (2.0 * hi).max(0.0).sqrt();
        let smin = (2.0 * lo).max(0.0).sqrt();
        report.max_drift = report.max_drift.max(b);
        report.max_diffusion_norm = report.max_diffusion_norm.max(norm);
        report.min_eigenvalue = report.min_eigenvalue.min(lo);
        report.min_singular_value = report.min_singular_value.min(smin);
        let mut m = sigma.clone();
        let mut rhs = drift.clone();
        if smin > SINGULAR_TOL && solve_in_place(&mut m, &mut rhs, n, 0.0) {
            report.max_girsanov_integrand = report.max_girsanov_integrand.max(norm_sq(&rhs).sqrt());
        }
    }
    report.bound_ok = report.max_drift <= model.drift_bound && report.max_diffusion_norm <= model.drift_bound;
    report.ellipticity_ok = report.min_eigenvalue >= model.ellipticity;
    report.invertible = report.min_singular_value > SINGULAR_TOL;
    Ok(report)
}

/// `sup |σ⁻¹ b|²`: the model's analytic bound when declared, else probed.
pub fn girsanov_constant(model: &DiffusionModel, probe_box: &ProbeBox) -> Result<f64> {
    match model.girsanov_bound {
        Some(b) => Ok(b * b),
        None => Ok(validate_assumptions(model, 4096, probe_box)?
            .max_girsanov_integrand
            .powi(2)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn identity_diffusion_passes() {
        let mut m = fixtures::identity_diffusion(2);
        m.ellipticity = 0.25;
        let r = validate_assumptions(&m, 50, &ProbeBox::cube(2, 3.0, 2, 1.0)).unwrap();
        assert!((r.min_eigenvalue - 0.5).abs() < 1e-12);
        assert!(r.passed());
    }

    #[test]
    fn tanh_drift_is_bounded() {
        let m = fixtures::tanh_drift();
        let r = validate_assumptions(&m, 500, &ProbeBox::cube(1, 10.0, 1, 1.0)).unwrap();
        assert!(r.max_drift <= 1.0);
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn degenerate_diffusion_fails_with_half_eps_squared() {
        let eps = 1e-6;
        let m = fixtures::degenerate_diffusion(eps);
        let r = validate_assumptions(&m, 10, &ProbeBox::cube(2, 1.0, 1, 1.0)).unwrap();
        assert!(!r.ellipticity_ok);
        assert!(!r.passed());
        let expected = 0.5 * eps * eps;
        assert!(
            (r.min_eigenvalue - expected).abs() <= 1e-6 * expected,
            "{}",
            r.min_eigenvalue
        );
    }

    #[test]
    fn rejects_empty_box_and_zero_probes() {
        let m = fixtures::tanh_drift();
        assert!(validate_assumptions(&m, 0, &ProbeBox::cube(1, 1.0, 1, 1.0)).is_err());
        let mut b = ProbeBox::cube(1, 1.0, 1, 1.0);
        b.state_lo[0] = 2.0;
        assert!(validate_assumptions(&m, 3, &b).is_err());
    }
}
