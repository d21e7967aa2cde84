use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::sde::{agent_state_stream, DiffusionModel};

pub type ObservationFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// `b(x, y, u)`.
pub type ObservedDriftFn = Arc<dyn Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync>;
/// `σ(x, y)`, row-major.
pub type ObservedDiffusionFn = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;
/// `b^i_0(x, u)` for agent `i`, on the concatenated team state and action.
pub type CouplingFn = Arc<dyn Fn(usize, &[f64], &[f64], &mut [f64]) + Send + Sync>;

/// Observation channel `dY = g(X) dt + dB` with `|g| ≤ bound`.
#[derive(Clone)]
pub struct ObservationChannel {
    pub dim: usize,
    g: ObservationFn,
    pub bound: f64,
}

impl fmt::Debug for ObservationChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ObservationChannel")
            .field("dim", &self.dim)
            .field("bound", &self.bound)
            .finish()
    }
}

impl ObservationChannel {
    pub fn new(dim: usize, bound: f64, g: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        Self {
            dim,
            g: Arc::new(g),
            bound,
        }
    }

    /// `g ≡ 0`.
    pub fn silent(dim: usize) -> Self {
        Self::new(dim, 0.0, |_x, out| out.fill(0.0))
    }

    #[inline]
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        (self.g)(x, out)
    }
}

/// How observations enter `b(x, y, u)` and `σ(x, y)` inside a macro step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationCoupling {
    /// `y` frozen at `Y_{kh}` for the whole step.
    #[default]
    FrozenAtStep,
    /// `y = Y_t` at the left endpoint of every inner step.
    InnerStep,
}

/// Hidden state driven by `b(X, Y, U)` and `σ(X, Y)`, observed by `N`
/// agents through channels `g^i`. A POMDP is the single-agent case.
#[derive(Clone)]
pub struct LocalMeasurementTeamModel {
    pub name: String,
    pub state_dim: usize,
    /// Action dimension of each agent; the drift reads their concatenation.
    pub action_dims: Vec<usize>,
    drift: ObservedDriftFn,
    diffusion: ObservedDiffusionFn,
    pub observations: Vec<ObservationChannel>,
    pub drift_bound: f64,
    pub ellipticity: f64,
    pub coupling: ObservationCoupling,
}

impl fmt::Debug for LocalMeasurementTeamModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LocalMeasurementTeamModel")
            .field("name", &self.name)
            .field("state_dim", &self.state_dim)
            .field("action_dims", &self.action_dims)
            .field("observations", &self.observations)
            .finish_non_exhaustive()
    }
}

impl LocalMeasurementTeamModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        state_dim: usize,
        action_dims: Vec<usize>,
        drift: impl Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        diffusion: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        observations: Vec<ObservationChannel>,
        drift_bound: f64,
        ellipticity: f64,
    ) -> Result<Self> {
        if observations.is_empty() || observations.len() != action_dims.len() {
            return Err(invalid(
                "need one observation channel and one action dimension per agent",
            ));
        }
        if state_dim == 0 || action_dims.contains(&0) {
            return Err(invalid("dimensions must be positive"));
        }
        Ok(Self {
            name: name.into(),
            state_dim,
            action_dims,
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
            observations,
            drift_bound,
            ellipticity,
            coupling: ObservationCoupling::default(),
        })
    }

    pub fn agents(&self) -> usize {
        self.observations.len()
    }

    pub fn observation_dim(&self) -> usize {
        self.observations.iter().map(|c| c.dim).sum()
    }

    pub fn action_dim(&self) -> usize {
        self.action_dims.iter().sum()
    }

    #[inline]
    pub fn drift(&self, x: &[f64], y: &[f64], u: &[f64], out: &mut [f64]) {
        (self.drift)(x, y, u, out)
    }

    #[inline]
    pub fn diffusion(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        (self.diffusion)(x, y, out)
    }

    /// Same dynamics with every channel replaced by `g ≡ 0`.
    pub fn silenced(&self) -> Self {
        let mut m = self.clone();
        m.observations = self
            .observations
            .iter()
            .map(|c| ObservationChannel::silent(c.dim))
            .collect();
        m
    }

    /// Fully observed view at a fixed observation value `y`.
    pub fn at_observation(&self, y: Vec<f64>) -> Result<DiffusionModel> {
        let d = self.drift.clone();
        let s = self.diffusion.clone();
        let y2 = y.clone();
        DiffusionModel::new(
            format!("{}@y", self.name),
            self.state_dim,
            self.action_dim(),
            move |x, u, out| d(x, &y, u, out),
            move |x, out| s(x, &y2, out),
            self.drift_bound,
            self.ellipticity,
        )
    }
}

/// Partially observed model: one decision maker, one observation channel.
#[derive(Clone, Debug)]
pub struct PartiallyObservedModel {
    pub inner: LocalMeasurementTeamModel,
}

impl PartiallyObservedModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        state_dim: usize,
        action_dim: usize,
        drift: impl Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        diffusion: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        observation: ObservationChannel,
        drift_bound: f64,
        ellipticity: f64,
    ) -> Result<Self> {
        Ok(Self {
            inner: LocalMeasurementTeamModel::new(
                name,
                state_dim,
                vec![action_dim],
                drift,
                diffusion,
                vec![observation],
                drift_bound,
                ellipticity,
            )?,
        })
    }

    pub fn observation(&self) -> &ObservationChannel {
        &self.inner.observations[0]
    }

    pub fn state_dim(&self) -> usize {
        self.inner.state_dim
    }

    pub fn silenced(&self) -> Self {
        Self {
            inner: self.inner.silenced(),
        }
    }

    pub fn as_team(&self) -> &LocalMeasurementTeamModel {
        &self.inner
    }
}

/// One agent of a coupled local-state team: local dynamics
/// `dX^i = b^i(X^i, U^i) dt + σ^i(X^i) dB^i` and its noise stream.
#[derive(Clone, Debug)]
pub struct AgentDynamics {
    pub model: DiffusionModel,
    pub stream: u32,
}

/// `dX^i = b^i(X^i,U^i) dt + b^i_0(X, U) dt + σ^i(X^i) dB^i`.
#[derive(Clone)]
pub struct CoupledLocalStateTeamModel {
    pub name: String,
    pub agents: Vec<AgentDynamics>,
    coupling: CouplingFn,
    /// `sup |(σ^i)⁻¹ b^i_0|` per agent.
    pub coupling_bounds: Vec<f64>,
}

impl fmt::Debug for CoupledLocalStateTeamModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoupledLocalStateTeamModel")
            .field("name", &self.name)
            .field("agents", &self.agents)
            .field("coupling_bounds", &self.coupling_bounds)
            .finish_non_exhaustive()
    }
}

impl CoupledLocalStateTeamModel {
    pub fn new(
        name: impl Into<String>,
        locals: Vec<DiffusionModel>,
        coupling: impl Fn(usize, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        coupling_bounds: Vec<f64>,
    ) -> Result<Self> {
        if locals.is_empty() || coupling_bounds.len() != locals.len() {
            return Err(invalid("need at least one agent and one coupling bound per agent"));
        }
        let agents = locals
            .into_iter()
            .enumerate()
            .map(|(i, model)| AgentDynamics {
                model,
                stream: agent_state_stream(i),
            })
            .collect();
        Ok(Self {
            name: name.into(),
            agents,
            coupling: Arc::new(coupling),
            coupling_bounds,
        })
    }

    /// `b^i_0 ≡ 0`.
    pub fn decoupled(name: impl Into<String>, locals: Vec<DiffusionModel>) -> Result<Self> {
        let n = locals.len();
        Self::new(name, locals, |_i, _x, _u, out| out.fill(0.0), vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn state_offsets(&self) -> Vec<usize> {
        offsets(self.agents.iter().map(|a| a.model.state_dim))
    }

    pub fn action_offsets(&self) -> Vec<usize> {
        offsets(self.agents.iter().map(|a| a.model.action_dim))
    }

    pub fn total_state_dim(&self) -> usize {
        self.agents.iter().map(|a| a.model.state_dim).sum()
    }

    pub fn total_action_dim(&self) -> usize {
        self.agents.iter().map(|a| a.model.action_dim).sum()
    }

    #[inline]
    pub fn coupling(&self, agent: usize, x: &[f64], u: &[f64], out: &mut [f64]) {
        (self.coupling)(agent, x, u, out)
    }

    /// Agent `i` alone, coupling removed, noise stream preserved.
    pub fn solo(&self, agent: usize) -> Result<Self> {
        let a = self
            .agents
            .get(agent)
            .ok_or_else(|| invalid(format!("no agent {agent}")))?
            .clone();
        let mut m = Self::decoupled(format!("{}#{agent}", self.name), vec![a.model.clone()])?;
        m.agents[0].stream = a.stream;
        Ok(m)
    }

    /// Same agents with `b^i_0 ≡ 0`.
    pub fn without_coupling(&self) -> Self {
        let mut m = self.clone();
        m.coupling = Arc::new(|_i, _x, _u, out: &mut [f64]| out.fill(0.0));
        m.coupling_bounds = vec![0.0; self.len()];
        m
    }
}

fn offsets(dims: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut out = vec![0];
    for d in dims {
        out.push(out.last().unwrap() + d);
    }
    out
}
