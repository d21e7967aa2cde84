use serde::{Deserialize, Serialize};

use super::{DiffusionModel, NoiseId, NoisePlan, TimeGrid};
use crate::error::{invalid, Error, Result};
use crate::linalg::mat_vec;
use crate::policy::{Information, InterpolatedPolicy};

/// States at the inner grid points, flattened `len × dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePath {
    pub dim: usize,
    pub values: Vec<f64>,
}

impl StatePath {
    pub fn with_capacity(dim: usize, points: usize) -> Self {
        Self {
            dim,
            values: Vec::with_capacity(dim * points),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.values[j * self.dim..(j + 1) * self.dim]
    }

    pub fn last(&self) -> &[f64] {
        self.point(self.len() - 1)
    }

    pub fn push(&mut self, x: &[f64]) {
        self.values.extend_from_slice(x);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub grid: TimeGrid,
    pub states: StatePath,
    /// Action index applied on each macro step.
    pub action_indices: Vec<usize>,
    /// Action coordinates per macro step, `macro_steps × action_dim`.
    pub actions: Vec<f64>,
    pub action_dim: usize,
    pub noise: NoiseId,
    /// Macro steps at which the policy lookup clamped an out-of-box state.
    pub out_of_box: usize,
}

impl SamplePath {
    pub fn action(&self, k: usize) -> &[f64] {
        &self.actions[k * self.action_dim..(k + 1) * self.action_dim]
    }

    /// Action in force at inner step `j`.
    pub fn action_at_inner(&self, j: usize) -> &[f64] {
        self.action(j / self.grid.inner_refine())
    }

    pub fn action_at_time(&self, t: f64) -> &[f64] {
        self.action(self.grid.step_of(t))
    }

    pub fn terminal(&self) -> &[f64] {
        self.states.last()
    }
}

/// Scratch buffers for one Euler–Maruyama step.
pub(crate) struct Stepper {
    pub drift: Vec<f64>,
    pub sigma: Vec<f64>,
    pub noise: Vec<f64>,
}

impl Stepper {
    pub fn new(dim: usize) -> Self {
        Self {
            drift: vec![0.0; dim],
            sigma: vec![0.0; dim * dim],
            noise: vec![0.0; dim],
        }
    }

    /// `x += drift·δ + σ ΔB` with `drift` and `sigma` already filled.
    pub fn advance(&mut self, x: &mut [f64], db: &[f64], delta: f64, with_drift: bool) {
        mat_vec(&self.sigma, db, &mut self.noise);
        for i in 0..x.len() {
            let d = if with_drift { self.drift[i] * delta } else { 0.0 };
            x[i] += d + self.noise[i];
        }
    }
}

pub(crate) fn check_finite(x: &[f64], step: usize, path_index: u64) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::IntegrationFailure { step, path_index })
    }
}

fn integrate(
    model: &DiffusionModel,
    policy: &InterpolatedPolicy,
    noise: &NoisePlan,
    x0: &[f64],
    with_drift: bool,
) -> Result<SamplePath> {
    let grid = *policy.grid();
    let n = model.state_dim;
    if x0.len() != n {
        return Err(invalid(format!("x0 has dimension {}, model expects {n}", x0.len())));
    }
    if noise.channels != n || noise.inner_steps() != grid.inner_steps() {
        return Err(invalid("noise plan does not match model dimension and grid"));
    }
    if policy.policy().actions.dim() != model.action_dim {
        return Err(invalid("policy action dimension does not match model"));
    }
    let m = grid.inner_refine();
    let delta = grid.delta();
    let mut states = StatePath::with_capacity(n, grid.inner_steps() + 1);
    let mut x = x0.to_vec();
    states.push(&x);
    let mut st = Stepper::new(n);
    let mut action_indices = Vec::with_capacity(grid.macro_steps());
    let mut actions = Vec::with_capacity(grid.macro_steps() * model.action_dim);
    let mut out_of_box = 0;
    for k in 0..grid.macro_steps() {
        let decision = policy.decide(k, Information::State(&x), noise.uniforms[k])?;
        out_of_box += decision.clamped as usize;
        let u = policy.policy().actions.point(decision.index);
        action_indices.push(decision.index);
        actions.extend_from_slice(u);
        for i in 0..m {
            let j = k * m + i;
            if with_drift {
                model.drift(&x, u, &mut st.drift);
            }
            model.diffusion(&x, &mut st.sigma);
            st.advance(&mut x, noise.step(j), delta, with_drift);
            check_finite(&x, j + 1, noise.id.path_index)?;
            states.push(&x);
        }
    }
    Ok(SamplePath {
        grid,
        states,
        action_indices,
        actions,
        action_dim: model.action_dim,
        noise: noise.id,
        out_of_box,
    })
}

/// Euler–Maruyama path of the controlled diffusion with the action drawn once
/// per macro step from the state at its left endpoint and held across it.
pub fn simulate_path(
    model: &DiffusionModel,
    policy: &InterpolatedPolicy,
    noise: &NoisePlan,
    x0: &[f64],
) -> Result<SamplePath> {
    integrate(model, policy, noise, x0, true)
}

/// Path of the driftless reference dynamics `dX = σ(X) dB`. Actions are still
/// drawn from the policy so the drift weight can be evaluated afterwards.
pub fn simulate_reference_path(
    model: &DiffusionModel,
    policy: &InterpolatedPolicy,
    noise: &NoisePlan,
    x0: &[f64],
) -> Result<SamplePath> {
    integrate(model, policy, noise, x0, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::policy::{interpolate, Policy};
    use crate::sde::McConfig;
    use crate::EstimateWithError;

    fn constant_policy(grid: TimeGrid, value: f64) -> InterpolatedPolicy {
        let p = Policy::constant_open_loop_at(1, value, grid.macro_steps());
        interpolate(p, grid).unwrap()
    }

    #[test]
    fn no_dynamics_keeps_initial_state() {
        let grid = TimeGrid::new(1.0, 4, 4).unwrap();
        let model = fixtures::identity_diffusion(2);
        let p = interpolate(Policy::constant_open_loop_at(2, 0.0, 4), grid).unwrap();
        let path = simulate_path(&model, &p, &NoisePlan::zeros(&grid, 2), &[0.3, -1.0]).unwrap();
        assert_eq!(path.states.len(), grid.inner_steps() + 1);
        for j in 0..path.states.len() {
            assert_eq!(path.states.point(j), &[0.3, -1.0]);
        }
    }

    #[test]
    fn constant_drift_is_deterministic_ode() {
        let grid = TimeGrid::new(1.0, 4, 8).unwrap();
        let model = fixtures::constant_drift(0.75);
        let p = constant_policy(grid, 0.0);
        let path = simulate_path(&model, &p, &NoisePlan::zeros(&grid, 1), &[0.5]).unwrap();
        assert!((path.terminal()[0] - 1.25).abs() < 1e-14);
    }

    #[test]
    fn actions_are_piecewise_constant() {
        let grid = TimeGrid::new(1.0, 4, 8).unwrap();
        let model = fixtures::tanh_drift();
        let p = interpolate(fixtures::sign_feedback_policy(grid.macro_steps()), grid).unwrap();
        let noise = crate::sde::sample_brownian(&grid, 1, 3, 0);
        let path = simulate_path(&model, &p, &noise, &[0.4]).unwrap();
        for k in 0..grid.macro_steps() {
            for i in 0..grid.inner_refine() {
                assert_eq!(path.action_at_inner(k * grid.inner_refine() + i), path.action(k));
            }
        }
        let again = simulate_path(&model, &p, &noise, &[0.4]).unwrap();
        assert_eq!(path, again);
    }

    #[test]
    fn blow_up_is_reported_with_step() {
        let grid = TimeGrid::new(1.0, 1, 4).unwrap();
        let model = DiffusionModel::new(
            "nan",
            1,
            1,
            |x, _u, out| out[0] = if x[0] > 0.5 { f64::NAN } else { 1.0 },
            |_x, s| s[0] = 1.0,
            1.0,
            0.5,
        )
        .unwrap();
        let p = constant_policy(grid, 0.0);
        let err = simulate_path(&model, &p, &NoisePlan::zeros(&grid, 1), &[0.0]).unwrap_err();
        assert!(matches!(err, Error::IntegrationFailure { step: 4, .. }), "{err}");
    }

    #[test]
    fn terminal_mean_matches_fine_grid() {
        let grid = TimeGrid::new(1.0, 4, 4).unwrap();
        let fine = grid.refined(16);
        let model = fixtures::tanh_drift();
        let p = constant_policy(grid, 1.0);
        let pf = constant_policy(fine, 1.0);
        let mc = McConfig::new(10_000, 21).with_refinement(fine.inner_refine());
        let run = |pol: &InterpolatedPolicy, g: &TimeGrid| {
            let xs: Vec<f64> = (0..mc.paths as u64)
                .map(|i| {
                    let noise = mc.plan(g, 1, i, crate::sde::STATE_STREAM).unwrap();
                    simulate_path(&model, pol, &noise, &[0.2]).unwrap().terminal()[0]
                })
                .collect();
            EstimateWithError::from_samples(&xs)
        };
        let coarse = run(&p, &grid);
        let reference = run(&pf, &fine);
        assert!(coarse.agrees_with(&reference, 3.0), "{coarse:?} vs {reference:?}");
    }

    #[test]
    fn second_moment_respects_growth_bound() {
        let grid = TimeGrid::new(1.0, 4, 8).unwrap();
        let model = fixtures::tanh_drift();
        let p = constant_policy(grid, 1.0);
        let x0 = 0.5f64;
        let n = 4000;
        let mut sums = vec![0.0; grid.inner_steps() + 1];
        for i in 0..n {
            let noise = crate::sde::sample_brownian(&grid, 1, 8, i);
            let path = simulate_path(&model, &p, &noise, &[x0]).unwrap();
            for (j, s) in sums.iter_mut().enumerate() {
                *s += path.states.point(j)[0].powi(2);
            }
        }
        let c = model.drift_bound;
        let t = grid.horizon();
        let cap = (x0.abs() + c * t + c * t.sqrt()).powi(2);
        let worst = sums.iter().map(|s| s / n as f64).fold(0.0, f64::max);
        assert!(worst <= cap, "{worst} > {cap}");
    }
}
