use super::{CoupledLocalStateTeamModel, LocalMeasurementTeamModel, ObservationCoupling, PartiallyObservedModel};
use crate::error::{invalid, Result};
use crate::policy::{Information, InterpolatedPolicy, InterpolatedTeamPolicy};
use crate::sde::{check_finite, simulate_path, NoisePlan, SamplePath, StatePath, Stepper, TimeGrid};

/// Hidden-state path together with every agent's observation record.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedPath {
    pub grid: TimeGrid,
    pub states: StatePath,
    /// Per agent, `dY` on each inner step, `inner_steps × dim`.
    pub observation_increments: Vec<Vec<f64>>,
    /// Per agent, `Y_0, Y_h, …, Y_T`, `(macro_steps + 1) × dim`.
    pub observation_samples: Vec<Vec<f64>>,
    /// Per agent, action index on each macro step.
    pub action_indices: Vec<Vec<usize>>,
    /// Concatenated team action on each macro step.
    pub actions: Vec<f64>,
    pub action_dim: usize,
}

impl ObservedPath {
    pub fn action(&self, k: usize) -> &[f64] {
        &self.actions[k * self.action_dim..(k + 1) * self.action_dim]
    }

    pub fn action_at_inner(&self, j: usize) -> &[f64] {
        self.action(j / self.grid.inner_refine())
    }

    pub fn terminal(&self) -> &[f64] {
        self.states.last()
    }
}

fn run_local_measurement(
    model: &LocalMeasurementTeamModel,
    team: &InterpolatedTeamPolicy,
    state_noise: &NoisePlan,
    observation_noise: &[NoisePlan],
    x0: &[f64],
    direct: bool,
) -> Result<ObservedPath> {
    let grid = *team.grid();
    let n = model.state_dim;
    let agents = model.agents();
    if team.len() != agents || observation_noise.len() != agents {
        return Err(invalid("need one policy and one observation noise plan per agent"));
    }
    if x0.len() != n || state_noise.channels != n || state_noise.inner_steps() != grid.inner_steps() {
        return Err(invalid("state noise or initial state does not match the model"));
    }
    for (i, (ch, plan)) in model.observations.iter().zip(observation_noise).enumerate() {
        if plan.channels != ch.dim || plan.inner_steps() != grid.inner_steps() {
            return Err(invalid(format!(
                "observation noise of agent {i} does not match its channel"
            )));
        }
        if team.agents[i].policy().actions.dim() != model.action_dims[i] {
            return Err(invalid(format!("policy of agent {i} has the wrong action dimension")));
        }
    }
    let dims: Vec<usize> = model.observations.iter().map(|c| c.dim).collect();
    let obs_dim: usize = dims.iter().sum();
    let action_dim = model.action_dim();
    let m = grid.inner_refine();
    let delta = grid.delta();

    let mut states = StatePath::with_capacity(n, grid.inner_steps() + 1);
    let mut x = x0.to_vec();
    states.push(&x);
    let mut y: Vec<Vec<f64>> = dims.iter().map(|&d| vec![0.0; d]).collect();
    let mut samples: Vec<Vec<f64>> = dims.iter().map(|&d| vec![0.0; d]).collect();
    let mut increments: Vec<Vec<f64>> = dims
        .iter()
        .map(|&d| Vec::with_capacity(d * grid.inner_steps()))
        .collect();
    let mut action_indices = vec![Vec::with_capacity(grid.macro_steps()); agents];
    let mut actions = Vec::with_capacity(grid.macro_steps() * action_dim);
    let mut st = Stepper::new(n);
    let mut y_now = vec![0.0; obs_dim];
    let mut g = vec![Vec::new(); agents];
    for (gi, &d) in g.iter_mut().zip(&dims) {
        gi.resize(d, 0.0);
    }

    let concat = |y: &[Vec<f64>], out: &mut [f64]| {
        let mut o = 0;
        for yi in y {
            out[o..o + yi.len()].copy_from_slice(yi);
            o += yi.len();
        }
    };

    for k in 0..grid.macro_steps() {
        let mut u = Vec::with_capacity(action_dim);
        for i in 0..agents {
            let info = Information::History {
                samples: &samples[i],
                dim: dims[i],
            };
            let d = team.agents[i].decide(k, info, observation_noise[i].uniforms[k])?;
            action_indices[i].push(d.index);
            u.extend_from_slice(team.agents[i].policy().actions.point(d.index));
        }
        actions.extend_from_slice(&u);
        concat(&y, &mut y_now);
        for s in 0..m {
            let j = k * m + s;
            if model.coupling == ObservationCoupling::InnerStep && s > 0 {
                concat(&y, &mut y_now);
            }
            model.drift(&x, &y_now, &u, &mut st.drift);
            model.diffusion(&x, &y_now, &mut st.sigma);
            for i in 0..agents {
                let db = observation_noise[i].step(j);
                if direct {
                    model.observations[i].eval(&x, &mut g[i]);
                    for c in 0..dims[i] {
                        let dy = g[i][c] * delta + db[c];
                        y[i][c] += dy;
                        increments[i].push(dy);
                    }
                } else {
                    for c in 0..dims[i] {
                        y[i][c] += db[c];
                        increments[i].push(db[c]);
                    }
                }
            }
            st.advance(&mut x, state_noise.step(j), delta, true);
            check_finite(&x, j + 1, state_noise.id.path_index)?;
            states.push(&x);
        }
        for i in 0..agents {
            samples[i].extend_from_slice(&y[i]);
        }
    }
    Ok(ObservedPath {
        grid,
        states,
        observation_increments: increments,
        observation_samples: samples,
        action_indices,
        actions,
        action_dim,
    })
}

/// Path under the reference measure: the hidden state keeps its controlled
/// dynamics, each observation is the Brownian motion of its own channel.
pub fn simulate_team_local_meas_reference(
    model: &LocalMeasurementTeamModel,
    team: &InterpolatedTeamPolicy,
    state_noise: &NoisePlan,
    observation_noise: &[NoisePlan],
    x0: &[f64],
) -> Result<ObservedPath> {
    run_local_measurement(model, team, state_noise, observation_noise, x0, false)
}

/// Path of the original model, `dY^i = g^i(X) dt + dB^i`.
pub fn simulate_team_local_meas_direct(
    model: &LocalMeasurementTeamModel,
    team: &InterpolatedTeamPolicy,
    state_noise: &NoisePlan,
    observation_noise: &[NoisePlan],
    x0: &[f64],
) -> Result<ObservedPath> {
    run_local_measurement(model, team, state_noise, observation_noise, x0, true)
}

fn single(policy: &InterpolatedPolicy) -> InterpolatedTeamPolicy {
    InterpolatedTeamPolicy {
        agents: vec![policy.clone()],
    }
}

pub fn simulate_pomdp_reference(
    model: &PartiallyObservedModel,
    policy: &InterpolatedPolicy,
    state_noise: &NoisePlan,
    observation_noise: &NoisePlan,
    x0: &[f64],
) -> Result<ObservedPath> {
    let obs = std::slice::from_ref(observation_noise);
    run_local_measurement(model.as_team(), &single(policy), state_noise, obs, x0, false)
}

pub fn simulate_pomdp_direct(
    model: &PartiallyObservedModel,
    policy: &InterpolatedPolicy,
    state_noise: &NoisePlan,
    observation_noise: &NoisePlan,
    x0: &[f64],
) -> Result<ObservedPath> {
    let obs = std::slice::from_ref(observation_noise);
    run_local_measurement(model.as_team(), &single(policy), state_noise, obs, x0, true)
}

fn check_team(
    model: &CoupledLocalStateTeamModel,
    team: &InterpolatedTeamPolicy,
    noise: &[NoisePlan],
    x0: &[Vec<f64>],
) -> Result<()> {
    if team.len() != model.len() || noise.len() != model.len() || x0.len() != model.len() {
        return Err(invalid("need one policy, noise plan and initial state per agent"));
    }
    Ok(())
}

/// Each agent follows its local dynamics alone, driven by its own noise and
/// deciding from its own state. Agents are independent given the policies.
pub fn simulate_team_decoupled(
    model: &CoupledLocalStateTeamModel,
    team: &InterpolatedTeamPolicy,
    noise: &[NoisePlan],
    x0: &[Vec<f64>],
) -> Result<Vec<SamplePath>> {
    check_team(model, team, noise, x0)?;
    (0..model.len())
        .map(|i| simulate_path(&model.agents[i].model, &team.agents[i], &noise[i], &x0[i]))
        .collect()
}

/// Joint Euler–Maruyama path of the coupled team.
pub fn simulate_team_coupled_direct(
    model: &CoupledLocalStateTeamModel,
    team: &InterpolatedTeamPolicy,
    noise: &[NoisePlan],
    x0: &[Vec<f64>],
) -> Result<Vec<SamplePath>> {
    check_team(model, team, noise, x0)?;
    let grid = *team.grid();
    let agents = model.len();
    let s_off = model.state_offsets();
    let a_off = model.action_offsets();
    for i in 0..agents {
        let a = &model.agents[i].model;
        if x0[i].len() != a.state_dim
            || noise[i].channels != a.state_dim
            || noise[i].inner_steps() != grid.inner_steps()
        {
            return Err(invalid(format!(
                "initial state or noise of agent {i} does not match its model"
            )));
        }
        if team.agents[i].policy().actions.dim() != a.action_dim {
            return Err(invalid(format!("policy of agent {i} has the wrong action dimension")));
        }
    }
    let m = grid.inner_refine();
    let delta = grid.delta();
    let mut full_x: Vec<f64> = x0.concat();
    let mut full_u = vec![0.0; model.total_action_dim()];
    let mut paths: Vec<SamplePath> = (0..agents)
        .map(|i| {
            let a = &model.agents[i].model;
            let mut states = StatePath::with_capacity(a.state_dim, grid.inner_steps() + 1);
            states.push(&x0[i]);
            SamplePath {
                grid,
                states,
                action_indices: Vec::new(),
                actions: Vec::new(),
                action_dim: a.action_dim,
                noise: noise[i].id,
                out_of_box: 0,
            }
        })
        .collect();
    let mut steppers: Vec<Stepper> = model.agents.iter().map(|a| Stepper::new(a.model.state_dim)).collect();
    let mut coupling: Vec<Vec<f64>> = model.agents.iter().map(|a| vec![0.0; a.model.state_dim]).collect();

    for k in 0..grid.macro_steps() {
        for i in 0..agents {
            let xi = &full_x[s_off[i]..s_off[i + 1]];
            let d = team.agents[i].decide(k, Information::State(xi), noise[i].uniforms[k])?;
            let ui = team.agents[i].policy().actions.point(d.index);
            full_u[a_off[i]..a_off[i + 1]].copy_from_slice(ui);
            paths[i].action_indices.push(d.index);
            paths[i].actions.extend_from_slice(ui);
            paths[i].out_of_box += d.clamped as usize;
        }
        for s in 0..m {
            let j = k * m + s;
            for i in 0..agents {
                let a = &model.agents[i].model;
                let xi = &full_x[s_off[i]..s_off[i + 1]];
                let st = &mut steppers[i];
                a.drift(xi, &full_u[a_off[i]..a_off[i + 1]], &mut st.drift);
                a.diffusion(xi, &mut st.sigma);
                model.coupling(i, &full_x, &full_u, &mut coupling[i]);
                for (d, c) in st.drift.iter_mut().zip(&coupling[i]) {
                    *d += c;
                }
            }
            for i in 0..agents {
                let xi = &mut full_x[s_off[i]..s_off[i + 1]];
                steppers[i].advance(xi, noise[i].step(j), delta, true);
                check_finite(xi, j + 1, noise[i].id.path_index)?;
                paths[i].states.push(xi);
            }
        }
    }
    Ok(paths)
}
