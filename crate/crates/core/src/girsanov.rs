//! Likelihood ratios between controlled dynamics and their reference
//! measures, evaluated with left-endpoint Itô sums on the inner grid.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimate::{map_paths, EstimateWithError};
use crate::info::{
    simulate_team_decoupled, simulate_team_local_meas_reference, CoupledLocalStateTeamModel, LocalMeasurementTeamModel,
    ObservationChannel,
};
use crate::linalg::{dot, norm_sq, solve_in_place};
use crate::policy::{InterpolatedPolicy, InterpolatedTeamPolicy};
use crate::sde::{
    observation_stream, simulate_reference_path, DiffusionModel, McConfig, NoisePlan, SamplePath, StatePath,
    SINGULAR_TOL, STATE_STREAM,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    Drift,
    Observation,
    TeamObservation,
    TeamCoupling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodWeight {
    pub log_weight: f64,
    pub kind: WeightKind,
    /// Per-agent log factors for team weights; empty otherwise.
    pub components: Vec<f64>,
}

impl LikelihoodWeight {
    pub fn weight(&self) -> f64 {
        self.log_weight.exp()
    }
}

/// Accumulates `⟨θ, ΔB⟩ − ½|θ|²δ` where `σ θ = b`.
struct ExpMartingale {
    sigma: Vec<f64>,
    theta: Vec<f64>,
    sum: f64,
}

impl ExpMartingale {
    fn new(dim: usize) -> Self {
        Self {
            sigma: vec![0.0; dim * dim],
            theta: vec![0.0; dim],
            sum: 0.0,
        }
    }

    /// `self.sigma` holds σ(x) and `self.theta` holds b on entry.
    fn step(&mut self, x: &[f64], db: &[f64], delta: f64) -> Result<()> {
        let n = self.theta.len();
        if !solve_in_place(&mut self.sigma, &mut self.theta, n, SINGULAR_TOL) {
            return Err(Error::SingularDiffusion { point: x.to_vec() });
        }
        self.sum += dot(&self.theta, db) - 0.5 * norm_sq(&self.theta) * delta;
        Ok(())
    }
}

/// `log Z_T` for a path simulated under the driftless reference dynamics
/// with the increments in `noise`.
pub fn log_drift_weight(path: &SamplePath, noise: &NoisePlan, model: &DiffusionModel) -> Result<LikelihoodWeight> {
    let steps = path.grid.inner_steps();
    if path.states.len() != steps + 1 || noise.inner_steps() != steps || noise.channels != model.state_dim {
        return Err(invalid("path, noise and model do not line up"));
    }
    let mut em = ExpMartingale::new(model.state_dim);
    for j in 0..steps {
        let x = path.states.point(j);
        model.drift(x, path.action_at_inner(j), &mut em.theta);
        model.diffusion(x, &mut em.sigma);
        em.step(x, noise.step(j), noise.delta)?;
    }
    Ok(LikelihoodWeight {
        log_weight: em.sum,
        kind: WeightKind::Drift,
        components: Vec::new(),
    })
}

/// `log G_T = Σ ⟨g(X_j), ΔY_j⟩ − ½|g(X_j)|²δ`.
pub fn log_observation_weight(
    states: &StatePath,
    y_increments: &[f64],
    channel: &ObservationChannel,
    delta: f64,
) -> Result<LikelihoodWeight> {
    let d = channel.dim;
    if y_increments.len() % d != 0 || states.len() != y_increments.len() / d + 1 {
        return Err(invalid(format!(
            "{} states do not match {} observation increments of dimension {d}",
            states.len(),
            y_increments.len()
        )));
    }
    let mut g = vec![0.0; d];
    let mut sum = 0.0;
    for j in 0..y_increments.len() / d {
        channel.eval(states.point(j), &mut g);
        sum += dot(&g, &y_increments[j * d..(j + 1) * d]) - 0.5 * norm_sq(&g) * delta;
    }
    Ok(LikelihoodWeight {
        log_weight: sum,
        kind: WeightKind::Observation,
        components: Vec::new(),
    })
}

/// Product of the per-agent observation weights on one hidden-state path.
pub fn log_team_observation_weight(
    states: &StatePath,
    y_increments: &[Vec<f64>],
    channels: &[ObservationChannel],
    delta: f64,
) -> Result<LikelihoodWeight> {
    if y_increments.len() != channels.len() {
        return Err(invalid("need one increment record per channel"));
    }
    let components = channels
        .iter()
        .zip(y_increments)
        .map(|(c, y)| Ok(log_observation_weight(states, y, c, delta)?.log_weight))
        .collect::<Result<Vec<f64>>>()?;
    Ok(LikelihoodWeight {
        log_weight: components.iter().sum(),
        kind: WeightKind::TeamObservation,
        components,
    })
}

/// Weight turning independent local dynamics into the coupled team:
/// `Π_i exp(∫ (σ^i)⁻¹ b^i_0 · dB^i − ½∫ |(σ^i)⁻¹ b^i_0|² dt)` on paths
/// simulated with the coupling removed.
pub fn log_coupling_weight(
    paths: &[SamplePath],
    noise: &[NoisePlan],
    model: &CoupledLocalStateTeamModel,
) -> Result<LikelihoodWeight> {
    let agents = model.len();
    if paths.len() != agents || noise.len() != agents {
        return Err(invalid("need one path and one noise plan per agent"));
    }
    let steps = paths[0].grid.inner_steps();
    if paths
        .iter()
        .zip(noise)
        .any(|(p, n)| p.states.len() != steps + 1 || n.inner_steps() != steps)
    {
        return Err(invalid("agent paths do not share a grid"));
    }
    let s_off = model.state_offsets();
    let mut full_x = vec![0.0; model.total_state_dim()];
    let mut full_u = Vec::with_capacity(model.total_action_dim());
    let mut ems: Vec<ExpMartingale> = model
        .agents
        .iter()
        .map(|a| ExpMartingale::new(a.model.state_dim))
        .collect();
    for j in 0..steps {
        full_u.clear();
        for (i, p) in paths.iter().enumerate() {
            full_x[s_off[i]..s_off[i + 1]].copy_from_slice(p.states.point(j));
            full_u.extend_from_slice(p.action_at_inner(j));
        }
        for i in 0..agents {
            let xi = &full_x[s_off[i]..s_off[i + 1]];
            let em = &mut ems[i];
            model.coupling(i, &full_x, &full_u, &mut em.theta);
            model.agents[i].model.diffusion(xi, &mut em.sigma);
            em.step(xi, noise[i].step(j), noise[i].delta)?;
        }
    }
    let components: Vec<f64> = ems.iter().map(|e| e.sum).collect();
    Ok(LikelihoodWeight {
        log_weight: components.iter().sum(),
        kind: WeightKind::TeamCoupling,
        components,
    })
}

/// Log drift weights of `mc.paths` reference paths under `policy`.
pub fn drift_log_weights(
    model: &DiffusionModel,
    policy: &InterpolatedPolicy,
    mc: &McConfig,
    x0: &[f64],
) -> Result<Vec<f64>> {
    let grid = *policy.grid();
    map_paths(mc.paths, |i| {
        let noise = mc.plan(&grid, model.state_dim, i, STATE_STREAM)?;
        let path = simulate_reference_path(model, policy, &noise, x0)?;
        Ok(log_drift_weight(&path, &noise, model)?.log_weight)
    })
}

/// Log observation weights of reference paths of a local-measurement team.
pub fn team_observation_log_weights(
    model: &LocalMeasurementTeamModel,
    team: &InterpolatedTeamPolicy,
    mc: &McConfig,
    x0: &[f64],
) -> Result<Vec<f64>> {
    let grid = *team.grid();
    map_paths(mc.paths, |i| {
        let w = mc.plan(&grid, model.state_dim, i, STATE_STREAM)?;
        let obs = (0..model.agents())
            .map(|a| mc.plan(&grid, model.observations[a].dim, i, observation_stream(a)))
            .collect::<Result<Vec<_>>>()?;
        let path = simulate_team_local_meas_reference(model, team, &w, &obs, x0)?;
        let lw = log_team_observation_weight(
            &path.states,
            &path.observation_increments,
            &model.observations,
            grid.delta(),
        )?;
        Ok(lw.log_weight)
    })
}

/// Log coupling weights of decoupled team paths.
pub fn coupling_log_weights(
    model: &CoupledLocalStateTeamModel,
    team: &InterpolatedTeamPolicy,
    mc: &McConfig,
    x0: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let grid = *team.grid();
    map_paths(mc.paths, |i| {
        let plans = model
            .agents
            .iter()
            .map(|a| mc.plan(&grid, a.model.state_dim, i, a.stream))
            .collect::<Result<Vec<_>>>()?;
        let paths = simulate_team_decoupled(model, team, &plans, x0)?;
        Ok(log_coupling_weight(&paths, &plans, model)?.log_weight)
    })
}

/// Second moment of a weight against its cap `e^{M T}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondMomentCheck {
    pub second_moment: EstimateWithError,
    pub cap: f64,
    /// Set when the estimate exceeds the cap by more than three standard errors.
    pub violation: bool,
}

pub fn second_moment_bound_check(log_weights: &[f64], sup_integrand_sq: f64, horizon: f64) -> SecondMomentCheck {
    let sq: Vec<f64> = log_weights.iter().map(|l| (2.0 * l).exp()).collect();
    let e = EstimateWithError::from_samples(&sq);
    let cap = (sup_integrand_sq * horizon).exp();
    SecondMomentCheck {
        second_moment: e,
        cap,
        violation: e.mean > cap + 3.0 * e.standard_error,
    }
}

pub fn weight_mean(log_weights: &[f64]) -> EstimateWithError {
    let w: Vec<f64> = log_weights.iter().map(|l| l.exp()).collect();
    EstimateWithError::from_samples(&w)
}

/// `E|Z^a − Z^b|` on shared reference paths: both policies read the same
/// state noise and the same policy uniforms.
pub fn weight_l1_distance(
    model: &DiffusionModel,
    a: &InterpolatedPolicy,
    b: &InterpolatedPolicy,
    mc: &McConfig,
    x0: &[f64],
) -> Result<EstimateWithError> {
    if a.grid() != b.grid() {
        return Err(invalid("policies live on different grids"));
    }
    let grid = *a.grid();
    let d = map_paths(mc.paths, |i| {
        let noise = mc.plan(&grid, model.state_dim, i, STATE_STREAM)?;
        let pa = simulate_reference_path(model, a, &noise, x0)?;
        let pb = simulate_reference_path(model, b, &noise, x0)?;
        let za = log_drift_weight(&pa, &noise, model)?.weight();
        let zb = log_drift_weight(&pb, &noise, model)?.weight();
        Ok((za - zb).abs())
    })?;
    Ok(EstimateWithError::from_samples(&d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::policy::{interpolate, Policy};
    use crate::sde::TimeGrid;

    #[test]
    fn zero_drift_gives_unit_weight() {
        let grid = TimeGrid::new(1.0, 4, 8).unwrap();
        let model = fixtures::identity_diffusion(1);
        let p = interpolate(Policy::constant_open_loop_at(1, 0.3, 4), grid).unwrap();
        let lw = drift_log_weights(&model, &p, &McConfig::new(50, 2), &[0.0]).unwrap();
        assert!(lw.iter().all(|l| *l == 0.0));
    }

    #[test]
    fn constant_drift_weight_matches_closed_form() {
        // With b ≡ μ and σ = 1 the weight is exp(μ B_T − μ²T/2) exactly.
        let mu = 0.7;
        let grid = TimeGrid::new(1.0, 2, 8).unwrap();
        let model = fixtures::constant_drift(mu);
        let p = interpolate(Policy::constant_open_loop_at(1, 0.0, 2), grid).unwrap();
        let noise = NoisePlan::generate(&grid, 1, 9, 0, STATE_STREAM);
        let path = simulate_reference_path(&model, &p, &noise, &[0.0]).unwrap();
        let lw = log_drift_weight(&path, &noise, &model).unwrap().log_weight;
        let bt: f64 = noise.increments.iter().sum();
        assert!((lw - (mu * bt - 0.5 * mu * mu)).abs() < 1e-12);
    }

    #[test]
    fn singular_diffusion_is_reported() {
        let grid = TimeGrid::new(1.0, 1, 2).unwrap();
        let model = fixtures::degenerate_diffusion(0.0).with_drift(|_x, _u, out| out.fill(1.0));
        let p = interpolate(Policy::constant_open_loop_at(1, 0.0, 1), grid).unwrap();
        let noise = NoisePlan::generate(&grid, 2, 1, 0, STATE_STREAM);
        let path = simulate_reference_path(&model, &p, &noise, &[0.0, 0.0]).unwrap();
        assert!(matches!(
            log_drift_weight(&path, &noise, &model),
            Err(Error::SingularDiffusion { .. })
        ));
    }

    #[test]
    fn observation_weight_rejects_length_mismatch() {
        let ch = ObservationChannel::new(1, 1.0, |x, out| out[0] = x[0].tanh());
        let states = StatePath {
            dim: 1,
            values: vec![0.0; 5],
        };
        assert!(log_observation_weight(&states, &[0.1; 3], &ch, 0.25).is_err());
        assert!(log_observation_weight(&states, &[0.1; 4], &ch, 0.25).is_ok());
    }

    #[test]
    fn identical_policies_are_at_distance_zero() {
        let grid = TimeGrid::new(1.0, 4, 4).unwrap();
        let model = fixtures::tanh_drift();
        let p = interpolate(fixtures::sign_feedback_policy(4), grid).unwrap();
        let d = weight_l1_distance(&model, &p, &p, &McConfig::new(100, 5), &[0.5]).unwrap();
        assert_eq!(d.mean, 0.0);
    }
}
