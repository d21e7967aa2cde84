//! Monte Carlo defect of `E[f(X_T) − f(X_0) − ∫ 𝒜^u f(X_s) ds]` with the
//! generator `𝒜^u f = b·∇f + tr(a ∇²f)`, `a = ½σσᵀ`.

use super::{simulate_path, DiffusionModel, McConfig, STATE_STREAM};
use crate::error::Result;
use crate::estimate::{map_paths, EstimateWithError};
use crate::linalg::dot;
use crate::policy::InterpolatedPolicy;

pub trait TestFunction: Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);
    /// Row-major `n×n`.
    fn hessian(&self, x: &[f64], out: &mut [f64]);
}

pub struct Constant(pub f64);

impl TestFunction for Constant {
    fn value(&self, _x: &[f64]) -> f64 {
        self.0
    }
    fn gradient(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn hessian(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

#[derive(Debug, Clone, Copy)]
pub enum BumpWeight {
    One,
    /// `|x|²`
    SquaredNorm,
    /// `x_i`
    Coordinate(usize),
}

/// `w(x)·(1 − |x|²/R²)³` on `|x| < R`, zero outside. Twice continuously
/// differentiable with compact support.
#[derive(Debug, Clone, Copy)]
pub struct Bump {
    pub radius: f64,
    pub weight: BumpWeight,
}

impl Bump {
    pub fn new(radius: f64, weight: BumpWeight) -> Self {
        Self { radius, weight }
    }

    fn s(&self, x: &[f64]) -> f64 {
        dot(x, x) / (self.radius * self.radius)
    }

    fn weight_parts(&self, x: &[f64], grad: &mut [f64], hess: &mut [f64]) -> f64 {
        let n = x.len();
        grad.fill(0.0);
        hess.fill(0.0);
        match self.weight {
            BumpWeight::One => 1.0,
            BumpWeight::SquaredNorm => {
                for i in 0..n {
                    grad[i] = 2.0 * x[i];
                    hess[i * n + i] = 2.0;
                }
                dot(x, x)
            }
            BumpWeight::Coordinate(c) => {
                grad[c] = 1.0;
                x[c]
            }
        }
    }
}

impl TestFunction for Bump {
    fn value(&self, x: &[f64]) -> f64 {
        let s = self.s(x);
        if s >= 1.0 {
            return 0.0;
        }
        let w = match self.weight {
            BumpWeight::One => 1.0,
            BumpWeight::SquaredNorm => dot(x, x),
            BumpWeight::Coordinate(c) => x[c],
        };
        w * (1.0 - s).powi(3)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let n = x.len();
        let s = self.s(x);
        if s >= 1.0 {
            out.fill(0.0);
            return;
        }
        let r2 = self.radius * self.radius;
        let phi = (1.0 - s).powi(3);
        let mut gw = vec![0.0; n];
        let mut hw = vec![0.0; n * n];
        let w = self.weight_parts(x, &mut gw, &mut hw);
        for i in 0..n {
            let gphi = -6.0 / r2 * (1.0 - s).powi(2) * x[i];
            out[i] = phi * gw[i] + w * gphi;
        }
    }

    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        let n = x.len();
        let s = self.s(x);
        if s >= 1.0 {
            out.fill(0.0);
            return;
        }
        let r2 = self.radius * self.radius;
        let phi = (1.0 - s).powi(3);
        let gphi: Vec<f64> = x.iter().map(|xi| -6.0 / r2 * (1.0 - s).powi(2) * xi).collect();
        let mut gw = vec![0.0; n];
        let mut hw = vec![0.0; n * n];
        let w = self.weight_parts(x, &mut gw, &mut hw);
        for i in 0..n {
            for j in 0..n {
                let kron = if i == j { 1.0 } else { 0.0 };
                let hphi = -6.0 / r2 * (1.0 - s).powi(2) * kron + 24.0 / (r2 * r2) * (1.0 - s) * x[i] * x[j];
                out[i * n + j] = phi * hw[i * n + j] + gw[i] * gphi[j] + gphi[i] * gw[j] + w * hphi;
            }
        }
    }
}

/// `b(x,u)·∇f(x) + ½ Σ (σσᵀ)_{ij} ∂²f/∂x_i∂x_j`.
pub fn generator(model: &DiffusionModel, f: &dyn TestFunction, x: &[f64], u: &[f64]) -> f64 {
    let n = x.len();
    let mut b = vec![0.0; n];
    let mut s = vec![0.0; n * n];
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n * n];
    model.drift(x, u, &mut b);
    model.diffusion(x, &mut s);
    f.gradient(x, &mut g);
    f.hessian(x, &mut h);
    let mut tr = 0.0;
    for i in 0..n {
        for j in 0..n {
            let a_ij: f64 = (0..n).map(|k| s[i * n + k] * s[j * n + k]).sum();
            tr += a_ij * h[i * n + j];
        }
    }
    dot(&b, &g) + 0.5 * tr
}

pub fn dynkin_residual(
    model: &DiffusionModel,
    policy: &InterpolatedPolicy,
    f: &dyn TestFunction,
    mc: &McConfig,
    x0: &[f64],
) -> Result<EstimateWithError> {
    let grid = *policy.grid();
    let delta = grid.delta();
    let samples = map_paths(mc.paths, |i| {
        let noise = mc.plan(&grid, model.state_dim, i, STATE_STREAM)?;
        let path = simulate_path(model, policy, &noise, x0)?;
        let integral: f64 = (0..grid.inner_steps())
            .map(|j| generator(model, f, path.states.point(j), path.action_at_inner(j)))
            .sum::<f64>()
            * delta;
        Ok(f.value(path.terminal()) - f.value(path.states.point(0)) - integral)
    })?;
    Ok(EstimateWithError::from_samples(&samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::policy::{interpolate, Policy};
    use crate::sde::TimeGrid;

    fn finite_difference_check(f: &dyn TestFunction, x: &[f64]) {
        let n = x.len();
        let eps = 1e-5;
        let mut g = vec![0.0; n];
        let mut h = vec![0.0; n * n];
        f.gradient(x, &mut g);
        f.hessian(x, &mut h);
        for i in 0..n {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += eps;
            xm[i] -= eps;
            let fd = (f.value(&xp) - f.value(&xm)) / (2.0 * eps);
            assert!((fd - g[i]).abs() < 1e-6, "grad {i}: {fd} vs {}", g[i]);
            let mut gp = vec![0.0; n];
            let mut gm = vec![0.0; n];
            f.gradient(&xp, &mut gp);
            f.gradient(&xm, &mut gm);
            for j in 0..n {
                let fd = (gp[j] - gm[j]) / (2.0 * eps);
                assert!(
                    (fd - h[j * n + i]).abs() < 1e-5,
                    "hess {i}{j}: {fd} vs {}",
                    h[j * n + i]
                );
            }
        }
    }

    #[test]
    fn bump_derivatives_match_finite_differences() {
        for w in [BumpWeight::One, BumpWeight::SquaredNorm, BumpWeight::Coordinate(1)] {
            let f = Bump::new(2.5, w);
            finite_difference_check(&f, &[0.3, -0.7]);
            finite_difference_check(&f, &[1.1, 1.4]);
        }
    }

    #[test]
    fn constant_function_has_zero_residual() {
        let grid = TimeGrid::new(1.0, 2, 8).unwrap();
        let model = fixtures::tanh_drift();
        let p = interpolate(fixtures::sign_feedback_policy(2), grid).unwrap();
        let r = dynkin_residual(&model, &p, &Constant(3.0), &McConfig::new(200, 1), &[0.1]).unwrap();
        assert_eq!(r.mean, 0.0);
        assert_eq!(r.standard_error, 0.0);
    }

    #[test]
    fn ito_identity_for_quadratic_bump() {
        let grid = TimeGrid::new(1.0, 4, 32).unwrap();
        let model = fixtures::identity_diffusion(1);
        let p = interpolate(Policy::constant_open_loop_at(1, 0.0, 4), grid).unwrap();
        let f = Bump::new(8.0, BumpWeight::SquaredNorm);
        let r = dynkin_residual(&model, &p, &f, &McConfig::new(20_000, 4), &[0.0]).unwrap();
        let k = 5.0;
        assert!(r.mean.abs() <= 3.0 * r.standard_error + k * grid.delta(), "{r:?}");
    }
}
