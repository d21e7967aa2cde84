//! Quantized action grids, decision rules (open-loop, Markov table,
//! wide-sense history) and their piecewise-constant continuous-time lifts.

mod actions;
mod cells;
mod interpolate;
mod rules;

pub use actions::{quantize_actions, ActionGrid};
pub use cells::{ObservationQuantizer, StateCells};
pub use interpolate::{interpolate, interpolate_team, InterpolatedPolicy, InterpolatedTeamPolicy, TeamPolicyTuple};
pub use rules::{
    default_history_len, perturb_policy, sample_action, Decision, DecisionRule, Information, MarkovTablePolicy, Policy,
    RelaxedControl, WideSensePolicy, ROW_TOLERANCE,
};
