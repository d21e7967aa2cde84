use serde::{Deserialize, Serialize};

use super::enumerate::{candidate_count, digits, reachable_keys, WideSenseClass, MAX_CANDIDATES};
use crate::cost::{mc_cost_team_coupled, mc_cost_team_local_meas, CostSpec};
use crate::error::{invalid, Error, Result};
use crate::estimate::EstimateWithError;
use crate::info::{CoupledLocalStateTeamModel, LocalMeasurementTeamModel};
use crate::policy::{interpolate_team, ActionGrid, InterpolatedTeamPolicy, Policy, StateCells, TeamPolicyTuple};
use crate::sde::{uniform_vector, McConfig, TimeGrid};

/// Stream tag for randomized challenger rows.
const CHALLENGER_STREAM: u32 = 1 << 21;

/// Decision rules agent `i` may use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentClass {
    /// Reads its own observation history.
    WideSense(WideSenseClass),
    /// Reads its own local state.
    Markov { actions: ActionGrid, cells: StateCells },
}

impl AgentClass {
    fn actions(&self) -> &ActionGrid {
        match self {
            AgentClass::WideSense(c) => &c.actions,
            AgentClass::Markov { actions, .. } => actions,
        }
    }

    /// Keys a deterministic candidate must fill; the rest default to action 0.
    fn slots(&self, steps: usize, x0: Option<&[f64]>) -> Result<Vec<(usize, u64)>> {
        match self {
            AgentClass::WideSense(c) => reachable_keys(c, steps),
            AgentClass::Markov { cells, .. } => {
                let x0 = x0.ok_or_else(|| invalid("Markov agents need a local initial state"))?;
                let mut out = vec![(0, cells.locate(x0).0 as u64)];
                for k in 1..steps {
                    out.extend((0..cells.count() as u64).map(|c| (k, c)));
                }
                Ok(out)
            }
        }
    }

    fn keys_at(&self, k: usize) -> Result<usize> {
        match self {
            AgentClass::WideSense(c) => Ok(c.keys_at(k)? as usize),
            AgentClass::Markov { cells, .. } => Ok(cells.count()),
        }
    }

    fn policy(&self, steps: usize, slots: &[(usize, u64)], choices: &[usize]) -> Result<Policy> {
        match self {
            AgentClass::WideSense(c) => c.policy(steps, slots, choices),
            AgentClass::Markov { actions, cells } => {
                let mut table = vec![vec![0; cells.count()]; steps];
                for (&(k, cell), &a) in slots.iter().zip(choices) {
                    table[k][cell as usize] = a;
                }
                Policy::deterministic_markov(actions.clone(), cells.clone(), &table)
            }
        }
    }

    /// Every row drawn from a flat Dirichlet distribution.
    fn random_policy(&self, steps: usize, seed: u64, index: u64) -> Result<Policy> {
        let n = self.actions().len();
        let mut template = self.policy(steps, &[], &[])?;
        let mut counter = 0u64;
        template = template.map_rows(|_, _, _| {
            let u = uniform_vector(seed, CHALLENGER_STREAM, index * (1 << 32) + counter, n);
            counter += 1;
            let e: Vec<f64> = u.iter().map(|v| -(1.0 - v).ln()).collect();
            let s: f64 = e.iter().sum();
            e.iter().map(|v| v / s).collect()
        });
        template.validate()?;
        Ok(template)
    }
}

/// A team model with its cost and initial condition.
#[derive(Debug, Clone, Copy)]
pub enum TeamProblem<'a> {
    LocalMeasurement {
        model: &'a LocalMeasurementTeamModel,
        cost: &'a CostSpec,
        x0: &'a [f64],
    },
    Coupled {
        model: &'a CoupledLocalStateTeamModel,
        cost: &'a CostSpec,
        x0: &'a [Vec<f64>],
    },
}

impl TeamProblem<'_> {
    pub fn agents(&self) -> usize {
        match self {
            TeamProblem::LocalMeasurement { model, .. } => model.agents(),
            TeamProblem::Coupled { model, .. } => model.len(),
        }
    }

    fn local_x0(&self, agent: usize) -> Option<&[f64]> {
        match self {
            TeamProblem::LocalMeasurement { .. } => None,
            TeamProblem::Coupled { x0, .. } => x0.get(agent).map(Vec::as_slice),
        }
    }

    /// Reweighted cost estimate of a policy tuple.
    pub fn evaluate(&self, team: &InterpolatedTeamPolicy, mc: &McConfig) -> Result<EstimateWithError> {
        match self {
            TeamProblem::LocalMeasurement { model, cost, x0 } => mc_cost_team_local_meas(model, team, cost, mc, x0),
            TeamProblem::Coupled { model, cost, x0 } => mc_cost_team_coupled(model, team, cost, mc, x0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeamEnumerationResult {
    pub team: TeamPolicyTuple,
    pub value: EstimateWithError,
    pub candidates: usize,
}

/// Evaluates every tuple of deterministic per-agent policies with common
/// random numbers and keeps the best; agent 0's choice is the most
/// significant in the enumeration order used for ties.
pub fn team_brute_force(
    problem: &TeamProblem<'_>,
    classes: &[AgentClass],
    grid: &TimeGrid,
    mc: &McConfig,
) -> Result<TeamEnumerationResult> {
    let steps = grid.macro_steps();
    if classes.len() != problem.agents() {
        return Err(invalid("need one policy class per agent"));
    }
    let mut per_agent = Vec::with_capacity(classes.len());
    let mut total: u128 = 1;
    for (i, class) in classes.iter().enumerate() {
        if let AgentClass::WideSense(c) = class {
            c.check_guards(steps)?;
        }
        let slots = class.slots(steps, problem.local_x0(i))?;
        let count = candidate_count(class.actions().len(), slots.len())?;
        total = total.saturating_mul(count);
        if total > MAX_CANDIDATES {
            return Err(Error::GuardExceeded {
                what: "team candidate tuples",
                size: total,
                limit: MAX_CANDIDATES,
            });
        }
        per_agent.push((slots, count));
    }
    let candidates: Vec<Vec<Policy>> = classes
        .iter()
        .zip(&per_agent)
        .map(|(class, (slots, count))| {
            (0..*count)
                .map(|c| class.policy(steps, slots, &digits(c, class.actions().len(), slots.len())))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut best: Option<(TeamPolicyTuple, EstimateWithError)> = None;
    for t in 0..total {
        let mut rest = t;
        let mut agents = vec![None; classes.len()];
        for i in (0..classes.len()).rev() {
            let count = per_agent[i].1;
            agents[i] = Some(candidates[i][(rest % count) as usize].clone());
            rest /= count;
        }
        let tuple = TeamPolicyTuple {
            agents: agents.into_iter().map(Option::unwrap).collect(),
        };
        let v = problem.evaluate(&interpolate_team(tuple.clone(), *grid)?, mc)?;
        if best.as_ref().is_none_or(|b| v.mean < b.1.mean) {
            best = Some((tuple, v));
        }
    }
    let (team, value) = best.expect("at least one tuple");
    Ok(TeamEnumerationResult {
        team,
        value,
        candidates: total as usize,
    })
}

/// Randomized policy tuple from the same classes, rows drawn from a flat
/// Dirichlet distribution keyed by `(seed, index)`.
pub fn random_challenger(classes: &[AgentClass], grid: &TimeGrid, seed: u64, index: u64) -> Result<TeamPolicyTuple> {
    let steps = grid.macro_steps();
    let agents = classes
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let _ = c.keys_at(0)?;
            c.random_policy(steps, seed, index * classes.len() as u64 + i as u64)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TeamPolicyTuple { agents })
}
