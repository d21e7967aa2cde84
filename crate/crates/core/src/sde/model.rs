use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Result};

/// `b(x, u)` written into the output slice.
pub type DriftFn = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;
/// `σ(x)` written row-major into an `N×N` output slice.
pub type DiffusionFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Controlled diffusion `dX = b(X, U) dt + σ(X) dB` with declared bound
/// `C` (on `|b|` and `‖σ‖`) and ellipticity `Ĉ₁` (on the eigenvalues of
/// `½σσᵀ`). The Brownian motion has as many channels as the state.
#[derive(Clone)]
pub struct DiffusionModel {
    pub name: String,
    pub state_dim: usize,
    pub action_dim: usize,
    drift: DriftFn,
    diffusion: DiffusionFn,
    pub drift_bound: f64,
    pub ellipticity: f64,
    /// Analytic `sup |σ⁻¹ b|` when known; otherwise probed.
    pub girsanov_bound: Option<f64>,
    /// Optional `(radius, constant)` local Lipschitz diagnostics.
    pub lipschitz: Vec<(f64, f64)>,
}

impl fmt::Debug for DiffusionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionModel")
            .field("name", &self.name)
            .field("state_dim", &self.state_dim)
            .field("action_dim", &self.action_dim)
            .field("drift_bound", &self.drift_bound)
            .field("ellipticity", &self.ellipticity)
            .finish_non_exhaustive()
    }
}

impl DiffusionModel {
    pub fn new(
        name: impl Into<String>,
        state_dim: usize,
        action_dim: usize,
        drift: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        diffusion: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        drift_bound: f64,
        ellipticity: f64,
    ) -> Result<Self> {
        if state_dim == 0 || action_dim == 0 {
            return Err(invalid("state and action dimensions must be positive"));
        }
        if !(drift_bound > 0.0 && ellipticity > 0.0) {
            return Err(invalid("drift bound and ellipticity must be positive"));
        }
        Ok(Self {
            name: name.into(),
            state_dim,
            action_dim,
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
            drift_bound,
            ellipticity,
            girsanov_bound: None,
            lipschitz: Vec::new(),
        })
    }

    pub fn with_girsanov_bound(mut self, bound: f64) -> Self {
        self.girsanov_bound = Some(bound);
        self
    }

    pub fn with_lipschitz(mut self, radius: f64, constant: f64) -> Self {
        self.lipschitz.push((radius, constant));
        self
    }

    #[inline]
    pub fn drift(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        (self.drift)(x, u, out)
    }

    #[inline]
    pub fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        (self.diffusion)(x, out)
    }

    pub fn drift_fn(&self) -> DriftFn {
        self.drift.clone()
    }

    pub fn diffusion_fn(&self) -> DiffusionFn {
        self.diffusion.clone()
    }

    /// Same diffusion, drift replaced.
    pub fn with_drift(&self, drift: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        Self {
            drift: Arc::new(drift),
            ..self.clone()
        }
    }
}
