use super::{Decision, Information, Policy};
use crate::error::{invalid, Result};
use crate::sde::TimeGrid;

/// A discrete policy lifted to continuous time: the step-`k` action is drawn
/// once at `kh` and held on `[kh, (k+1)h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolatedPolicy {
    policy: Policy,
    grid: TimeGrid,
}

pub fn interpolate(policy: Policy, grid: TimeGrid) -> Result<InterpolatedPolicy> {
    if policy.steps() != grid.macro_steps() {
        return Err(invalid(format!(
            "policy defines {} steps, grid has {}",
            policy.steps(),
            grid.macro_steps()
        )));
    }
    policy.validate()?;
    Ok(InterpolatedPolicy { policy, grid })
}

impl InterpolatedPolicy {
    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn into_policy(self) -> Policy {
        self.policy
    }

    pub fn decide(&self, k: usize, info: Information<'_>, uniform: f64) -> Result<Decision> {
        self.policy.decide(k, info, uniform)
    }

    /// Action in force at time `t`, given the information and uniform drawn
    /// at the left endpoint of its macro step.
    pub fn action_at_time(&self, t: f64, info: Information<'_>, uniform: f64) -> Result<&[f64]> {
        let k = self.grid.step_of(t);
        let d = self.decide(k, info, uniform)?;
        Ok(self.policy.actions.point(d.index))
    }
}

/// One policy per agent; agent `i` is only ever handed agent-`i` information.
#[derive(Debug, Clone, PartialEq)]
pub struct TeamPolicyTuple {
    pub agents: Vec<Policy>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterpolatedTeamPolicy {
    pub agents: Vec<InterpolatedPolicy>,
}

pub fn interpolate_team(team: TeamPolicyTuple, grid: TimeGrid) -> Result<InterpolatedTeamPolicy> {
    if team.agents.is_empty() {
        return Err(invalid("team needs at least one agent"));
    }
    Ok(InterpolatedTeamPolicy {
        agents: team
            .agents
            .into_iter()
            .map(|p| interpolate(p, grid))
            .collect::<Result<_>>()?,
    })
}

impl InterpolatedTeamPolicy {
    pub fn grid(&self) -> &TimeGrid {
        self.agents[0].grid()
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    /// Concatenated action dimension.
    pub fn action_dim(&self) -> usize {
        self.agents.iter().map(|a| a.policy().actions.dim()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::quantize_actions;

    #[test]
    fn constant_policy_everywhere() {
        let grid = TimeGrid::new(1.0, 4, 2).unwrap();
        let p = interpolate(Policy::constant_open_loop_at(1, 0.7, 4), grid).unwrap();
        for t in [0.0, 0.3, 0.99, 1.0] {
            assert_eq!(p.action_at_time(t, Information::None, 0.1).unwrap(), &[0.7]);
        }
    }

    #[test]
    fn two_step_policy_interval_membership() {
        let grid = TimeGrid::new(1.0, 2, 2).unwrap();
        let g = quantize_actions(&[0.0], &[1.0], &[2]).unwrap();
        let p = interpolate(Policy::deterministic_open_loop(g, &[0, 1]).unwrap(), grid).unwrap();
        assert_eq!(
            p.action_at_time(1.5 * grid.h() / 2.0, Information::None, 0.0).unwrap(),
            &[0.0]
        );
        assert_eq!(
            p.action_at_time(1.5 * grid.h(), Information::None, 0.0).unwrap(),
            &[1.0]
        );
    }

    #[test]
    fn step_count_mismatch_rejected() {
        let grid = TimeGrid::new(1.0, 3, 2).unwrap();
        assert!(interpolate(Policy::constant_open_loop_at(1, 0.0, 2), grid).is_err());
    }
}
