//! Finite-horizon costs and their Monte Carlo estimators: direct simulation
//! and reweighting of reference-measure paths.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::estimate::{map_paths, pairwise_sum, EstimateWithError};
use crate::girsanov::{log_coupling_weight, log_drift_weight, log_team_observation_weight};
use crate::info::{
    simulate_team_coupled_direct, simulate_team_decoupled, simulate_team_local_meas_direct,
    simulate_team_local_meas_reference, CoupledLocalStateTeamModel, LocalMeasurementTeamModel, ObservedPath,
    PartiallyObservedModel,
};
use crate::policy::{InterpolatedPolicy, InterpolatedTeamPolicy};
use crate::sde::{
    check_finite, observation_stream, simulate_path, simulate_reference_path, DiffusionModel, McConfig, NoisePlan,
    SamplePath, StatePath, Stepper, TimeGrid, STATE_STREAM,
};

pub type RunningCostFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
pub type TerminalCostFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Running cost `c(x, u)` and terminal cost `c_T(x)`, both nonnegative and
/// bounded by the declared caps.
#[derive(Clone)]
pub struct CostSpec {
    running: RunningCostFn,
    terminal: TerminalCostFn,
    pub running_cap: f64,
    pub terminal_cap: f64,
}

impl fmt::Debug for CostSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CostSpec")
            .field("running_cap", &self.running_cap)
            .field("terminal_cap", &self.terminal_cap)
            .finish_non_exhaustive()
    }
}

impl CostSpec {
    pub fn new(
        running: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        terminal: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        running_cap: f64,
        terminal_cap: f64,
    ) -> Self {
        Self {
            running: Arc::new(running),
            terminal: Arc::new(terminal),
            running_cap,
            terminal_cap,
        }
    }

    #[inline]
    pub fn running(&self, x: &[f64], u: &[f64]) -> f64 {
        (self.running)(x, u)
    }

    #[inline]
    pub fn terminal(&self, x: &[f64]) -> f64 {
        (self.terminal)(x)
    }

    /// Upper bound on any path cost over a horizon `t`.
    pub fn path_cap(&self, t: f64) -> f64 {
        self.running_cap * t + self.terminal_cap
    }
}

/// `δ Σ_j c(X_j, U_{⌊j/M⌋}) + c_T(X_T)` with `action(j)` the action in force on inner step `j`.
pub fn path_cost<'a>(states: &StatePath, delta: f64, action: impl Fn(usize) -> &'a [f64], cost: &CostSpec) -> f64 {
    let steps = states.len() - 1;
    let running: f64 = (0..steps).map(|j| cost.running(states.point(j), action(j))).sum();
    running * delta + cost.terminal(states.last())
}

pub fn sample_path_cost(path: &SamplePath, cost: &CostSpec) -> f64 {
    path_cost(&path.states, path.grid.delta(), |j| path.action_at_inner(j), cost)
}

pub fn observed_path_cost(path: &ObservedPath, cost: &CostSpec) -> f64 {
    path_cost(&path.states, path.grid.delta(), |j| path.action_at_inner(j), cost)
}

/// Team cost on per-agent paths: the state and action arguments are the
/// agents' coordinates concatenated.
pub fn team_path_cost(paths: &[SamplePath], cost: &CostSpec) -> f64 {
    let grid = paths[0].grid;
    let steps = grid.inner_steps();
    let mut x = Vec::new();
    let mut u = Vec::new();
    let mut running = 0.0;
    for j in 0..steps {
        x.clear();
        u.clear();
        for p in paths {
            x.extend_from_slice(p.states.point(j));
            u.extend_from_slice(p.action_at_inner(j));
        }
        running += cost.running(&x, &u);
    }
    x.clear();
    for p in paths {
        x.extend_from_slice(p.terminal());
    }
    running * grid.delta() + cost.terminal(&x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Mean of `Z·cost`.
    #[default]
    Plain,
    /// `Σ Z·cost / Σ Z`, standard error by the delta method.
    SelfNormalized,
}

/// Estimate from per-path `(log weight, cost)` pairs.
pub fn weighted_estimate(samples: &[(f64, f64)], normalization: Normalization) -> EstimateWithError {
    let wc: Vec<f64> = samples.iter().map(|(l, c)| l.exp() * c).collect();
    match normalization {
        Normalization::Plain => EstimateWithError::from_samples(&wc),
        Normalization::SelfNormalized => {
            let n = samples.len();
            let w: Vec<f64> = samples.iter().map(|(l, _)| l.exp()).collect();
            let sw = pairwise_sum(&w);
            let ratio = pairwise_sum(&wc) / sw;
            if n == 1 {
                return EstimateWithError {
                    mean: ratio,
                    standard_error: 0.0,
                    n,
                };
            }
            let r: Vec<f64> = samples
                .iter()
                .zip(&w)
                .map(|((_, c), w)| (w * (c - ratio)).powi(2))
                .collect();
            let mean_w = sw / n as f64;
            let se = (pairwise_sum(&r) / (n as f64 * (n - 1) as f64)).sqrt() / mean_w;
            EstimateWithError {
                mean: ratio,
                standard_error: se,
                n,
            }
        }
    }
}

pub fn direct_cost_samples(
    model: &DiffusionModel,
    policy: &InterpolatedPolicy,
    cost: &CostSpec,
    mc: &McConfig,
    x0: &[f64],
) -> Result<Vec<f64>> {
    let grid = *policy.grid();
    map_paths(mc.paths, |i| {
        let noise = mc.plan(&grid, model.state_dim, i, STATE_STREAM)?;
        Ok(sample_path_cost(&simulate_path(model, policy, &noise, x0)?, cost))
    })
}

/// Plain average of path costs under the controlled dynamics.
pub fn mc_cost_direct(
    model: &DiffusionModel,
    policy: &InterpolatedPolicy,
    cost: &CostSpec,
    mc: &McConfig,
    x0: &[f64],
) -> Result<EstimateWithError> {
    Ok(EstimateWithError::from_samples(&direct_cost_samples(
        model, policy, cost, mc, x0,
    )?))
}

/// `(log Z_T, cost)` on driftless reference paths.
pub fn reweighted_cost_samples(
    model: &DiffusionModel,
    policy: &InterpolatedPolicy,
    cost: &CostSpec,
    mc: &McConfig,
    x0: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let grid = *policy.grid();
    map_paths(mc.paths, |i| {
        let noise = mc.plan(&grid, model.state_dim, i, STATE_STREAM)?;
        let path = simulate_reference_path(model, policy, &noise, x0)?;
        let lw = log_drift_weight(&path, &noise, model)?;
        Ok((lw.log_weight, sample_path_cost(&path, cost)))
    })
}

pub fn mc_cost_reweighted(
    model: &DiffusionModel,
    policy: &InterpolatedPolicy,
    cost: &CostSpec,
    mc: &McConfig,
    x0: &[f64],
    normalization: Normalization,
) -> Result<EstimateWithError> {
    Ok(weighted_estimate(
        &reweighted_cost_samples(model, policy, cost, mc, x0)?,
        normalization,
    ))
}

fn observation_plans(
    model: &LocalMeasurementTeamModel,
    grid: &TimeGrid,
    mc: &McConfig,
    i: u64,
) -> Result<(NoisePlan, Vec<NoisePlan>)> {
    let w = mc.plan(grid, model.state_dim, i, STATE_STREAM)?;
    let obs = (0..model.agents())
        .map(|a| mc.plan(grid, model.observations[a].dim, i, observation_stream(a)))
        .collect::<Result<Vec<_>>>()?;
    Ok((w, obs))
}

/// `(log Π G^i, cost)` on reference paths of a local-measurement team.
pub fn team_local_meas_cost_samples(
    model: &LocalMeasurementTeamModel,
    team: &InterpolatedTeamPolicy,
    cost: &CostSpec,
    mc: &McConfig,
    x0: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let grid = *team.grid();
    map_paths(mc.paths, |i| {
        let (w, obs) = observation_plans(model, &grid, mc, i)?;
        let path = simulate_team_local_meas_reference(model, team, &w, &obs, x0)?;
        let lw = log_team_observation_weight(
            &path.states,
            &path.observation_increments,
            &model.observations,
            grid.delta(),
        )?;
        Ok((lw.log_weight, observed_path_cost(&path, cost)))
    })
}

pub fn mc_cost_team_local_meas(
    model: &LocalMeasurementTeamModel,
    team: &InterpolatedTeamPolicy,
    cost: &CostSpec,
    mc: &McConfig,
    x0: &[f64],
) -> Result<EstimateWithError> {
    Ok(weighted_estimate(
        &team_local_meas_cost_samples(model, team, cost, mc, x0)?,
        Normalization::Plain,
    ))
}

/// Direct simulation of the original observation model, for checking the
/// reweighted estimator.
pub fn mc_cost_team_local_meas_direct(
    model: &LocalMeasurementTeamModel,
    team: &InterpolatedTeamPolicy,
    cost: &CostSpec,
    mc: &McConfig,
    x0: &[f64],
) -> Result<EstimateWithError> {
    let grid = *team.grid();
    let c = map_paths(mc.paths, |i| {
        let (w, obs) = observation_plans(model, &grid, mc, i)?;
        Ok(observed_path_cost(
            &simulate_team_local_meas_direct(model, team, &w, &obs, x0)?,
            cost,
        ))
    })?;
    Ok(EstimateWithError::from_samples(&c))
}

fn single(policy: &InterpolatedPolicy) -> InterpolatedTeamPolicy {
    InterpolatedTeamPolicy {
        agents: vec![policy.clone()],
    }
}

pub fn mc_cost_pomdp(
    model: &PartiallyObservedModel,
    policy: &InterpolatedPolicy,
    cost: &CostSpec,
    mc: &McConfig,
    x0: &[f64],
) -> Result<EstimateWithError> {
    mc_cost_team_local_meas(model.as_team(), &single(policy), cost, mc, x0)
}

pub fn mc_cost_pomdp_direct(
    model: &PartiallyObservedModel,
    policy: &InterpolatedPolicy,
    cost: &CostSpec,
    mc: &McConfig,
    x0: &[f64],
) -> Result<EstimateWithError> {
    mc_cost_team_local_meas_direct(model.as_team(), &single(policy), cost, mc, x0)
}

fn agent_plans(model: &CoupledLocalStateTeamModel, grid: &TimeGrid, mc: &McConfig, i: u64) -> Result<Vec<NoisePlan>> {
    model
        .agents
        .iter()
        .map(|a| mc.plan(grid, a.model.state_dim, i, a.stream))
        .collect()
}

/// `(log coupling weight, cost)` on decoupled team paths.
pub fn team_coupled_cost_samples(
    model: &CoupledLocalStateTeamModel,
    team: &InterpolatedTeamPolicy,
    cost: &CostSpec,
    mc: &McConfig,
    x0: &[Vec<f64>],
) -> Result<Vec<(f64, f64)>> {
    let grid = *team.grid();
    map_paths(mc.paths, |i| {
        let plans = agent_plans(model, &grid, mc, i)?;
        let paths = simulate_team_decoupled(model, team, &plans, x0)?;
        let lw = log_coupling_weight(&paths, &plans, model)?;
        Ok((lw.log_weight, team_path_cost(&paths, cost)))
    })
}

pub fn mc_cost_team_coupled(
    model: &CoupledLocalStateTeamModel,
    team: &InterpolatedTeamPolicy,
    cost: &CostSpec,
    mc: &McConfig,
    x0: &[Vec<f64>],
) -> Result<EstimateWithError> {
    Ok(weighted_estimate(
        &team_coupled_cost_samples(model, team, cost, mc, x0)?,
        Normalization::Plain,
    ))
}

pub fn mc_cost_team_coupled_direct(
    model: &CoupledLocalStateTeamModel,
    team: &InterpolatedTeamPolicy,
    cost: &CostSpec,
    mc: &McConfig,
    x0: &[Vec<f64>],
) -> Result<EstimateWithError> {
    let grid = *team.grid();
    let c = map_paths(mc.paths, |i| {
        let plans = agent_plans(model, &grid, mc, i)?;
        Ok(team_path_cost(
            &simulate_team_coupled_direct(model, team, &plans, x0)?,
            cost,
        ))
    })?;
    Ok(EstimateWithError::from_samples(&c))
}

/// Integrated cost `∫₀ʰ c(X_s, u) ds` over one macro step from `x` with the
/// action frozen, plus the end state. `noise` covers one macro step.
pub fn one_step(
    model: &DiffusionModel,
    x: &[f64],
    u: &[f64],
    cost: &CostSpec,
    noise: &NoisePlan,
) -> Result<(f64, Vec<f64>)> {
    let n = model.state_dim;
    let mut st = Stepper::new(n);
    let mut y = x.to_vec();
    let mut running = 0.0;
    for j in 0..noise.inner_steps() {
        running += cost.running(&y, u);
        model.drift(&y, u, &mut st.drift);
        model.diffusion(&y, &mut st.sigma);
        st.advance(&mut y, noise.step(j), noise.delta, true);
        check_finite(&y, j + 1, noise.id.path_index)?;
    }
    Ok((running * noise.delta, y))
}

/// Monte Carlo estimate of the one-step cost `ĉ_h(x, u)` from `mc.paths`
/// single-step paths on `grid.one_step()`.
pub fn stage_cost_hat(
    model: &DiffusionModel,
    x: &[f64],
    u: &[f64],
    cost: &CostSpec,
    grid: &TimeGrid,
    mc: &McConfig,
) -> Result<EstimateWithError> {
    if x.len() != model.state_dim || u.len() != model.action_dim {
        return Err(invalid("state or action dimension does not match the model"));
    }
    let one = grid.one_step();
    let c = map_paths(mc.paths, |i| {
        let noise = mc.plan(&one, model.state_dim, i, STATE_STREAM)?;
        Ok(one_step(model, x, u, cost, &noise)?.0)
    })?;
    Ok(EstimateWithError::from_samples(&c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::policy::{interpolate, Policy};

    #[test]
    fn zero_noise_path_cost_is_a_riemann_sum() {
        let grid = TimeGrid::new(1.0, 2, 4).unwrap();
        let model = fixtures::constant_drift(1.0);
        let cost = CostSpec::new(|x, _u| x[0], |x| 2.0 * x[0], 10.0, 10.0);
        let p = interpolate(Policy::constant_open_loop_at(1, 0.0, 2), grid).unwrap();
        let path = simulate_path(&model, &p, &NoisePlan::zeros(&grid, 1), &[0.0]).unwrap();
        // X_j = jδ, so δ Σ_{j<8} jδ = δ² · 28.
        let expected = 28.0 / 64.0 + 2.0;
        assert!((sample_path_cost(&path, &cost) - expected).abs() < 1e-12);
    }

    #[test]
    fn self_normalized_with_equal_weights_is_the_mean() {
        let s: Vec<(f64, f64)> = (0..10).map(|i| (0.0, i as f64)).collect();
        let a = weighted_estimate(&s, Normalization::Plain);
        let b = weighted_estimate(&s, Normalization::SelfNormalized);
        assert!((a.mean - b.mean).abs() < 1e-12);
        assert!((a.standard_error - b.standard_error).abs() < 1e-12);
    }

    #[test]
    fn stage_cost_of_still_state_is_exact() {
        let grid = TimeGrid::new(1.0, 4, 8).unwrap();
        let model = fixtures::identity_diffusion(1);
        let cost = CostSpec::new(|_x, u| u[0] * u[0], |_x| 0.0, 1.0, 0.0);
        let e = stage_cost_hat(&model, &[0.0], &[0.5], &cost, &grid, &McConfig::new(20, 1)).unwrap();
        assert!((e.mean - 0.25 * grid.h()).abs() < 1e-12);
        assert!(e.standard_error < 1e-15);
    }
}
