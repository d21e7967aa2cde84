//! Discrete-time approximations: kernel estimation, backward induction,
//! lifting, and brute-force search over wide-sense and team policy classes.

mod backward;
mod enumerate;
mod mdp;
mod team;

pub use backward::{
    backward_induction, evaluate_markov_table, exhaustive_optimum, solve_and_lift, LiftedSolution, ValueTable,
    EXHAUSTIVE_LIMIT,
};
pub use enumerate::{enumerate_wide_sense, reachable_keys, EnumerationResult, WideSenseClass, MAX_CANDIDATES};
pub use mdp::{build_discrete_mdp, DiscreteControlProblem, KernelOptions, KernelStart};
pub use team::{random_challenger, team_brute_force, AgentClass, TeamEnumerationResult, TeamProblem};
