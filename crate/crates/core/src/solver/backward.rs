use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_discrete_mdp, DiscreteControlProblem, KernelOptions};
use crate::cost::CostSpec;
use crate::error::{Error, Result};
use crate::policy::{interpolate, ActionGrid, InterpolatedPolicy, Policy, StateCells};
use crate::sde::{DiffusionModel, TimeGrid};

/// `values[k][cell]` for `k = 0..=N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    pub values: Vec<Vec<f64>>,
}

impl ValueTable {
    pub fn initial(&self, cell: usize) -> f64 {
        self.values[0][cell]
    }
}

/// `ĉ(s, a) + Σ_{s'} P(s' | s, a) v(s')`, summed in cell order.
#[inline]
fn q_value(p: &DiscreteControlProblem, cell: usize, action: usize, next: &[f64]) -> f64 {
    let r = p.row(cell, action);
    let future: f64 = p.kernel[r].iter().zip(next).map(|(a, b)| a * b).sum();
    p.stage_cost[r] + future
}

/// Exact dynamic programming. Ties go to the lowest action index.
pub fn backward_induction(problem: &DiscreteControlProblem) -> Result<(ValueTable, Policy)> {
    problem.validate()?;
    let n = problem.horizon_steps;
    let mut values = vec![Vec::new(); n + 1];
    values[n] = problem.terminal.clone();
    let mut table = vec![Vec::new(); n];
    for k in (0..n).rev() {
        let next = &values[k + 1];
        let best: Vec<(f64, usize)> = (0..problem.states())
            .into_par_iter()
            .map(|s| {
                let mut best = (f64::INFINITY, 0);
                for a in 0..problem.action_count() {
                    let q = q_value(problem, s, a, next);
                    if q < best.0 {
                        best = (q, a);
                    }
                }
                best
            })
            .collect();
        values[k] = best.iter().map(|b| b.0).collect();
        table[k] = best.iter().map(|b| b.1).collect();
    }
    let policy = Policy::deterministic_markov(problem.actions.clone(), problem.cells.clone(), &table)?;
    Ok((ValueTable { values }, policy))
}

/// Value of a deterministic Markov table `table[k][cell]` by policy evaluation.
pub fn evaluate_markov_table(problem: &DiscreteControlProblem, table: &[Vec<usize>]) -> ValueTable {
    let n = problem.horizon_steps;
    let mut values = vec![Vec::new(); n + 1];
    values[n] = problem.terminal.clone();
    for k in (0..n).rev() {
        let next = &values[k + 1];
        values[k] = (0..problem.states())
            .map(|s| q_value(problem, s, table[k][s], next))
            .collect();
    }
    ValueTable { values }
}

/// Largest number of deterministic tables [`exhaustive_optimum`] will visit.
pub const EXHAUSTIVE_LIMIT: u128 = 1 << 22;

/// Minimum over every deterministic Markov table of the value from each
/// initial cell, by enumeration. Reference answer for small problems.
pub fn exhaustive_optimum(problem: &DiscreteControlProblem) -> Result<Vec<f64>> {
    let (n, s, a) = (problem.horizon_steps, problem.states(), problem.action_count());
    let slots = (n * s) as u32;
    let total = (a as u128)
        .checked_pow(slots)
        .filter(|t| *t <= EXHAUSTIVE_LIMIT)
        .ok_or(Error::GuardExceeded {
            what: "exhaustive policy enumeration",
            size: (a as u128).saturating_pow(slots),
            limit: EXHAUSTIVE_LIMIT,
        })?;
    let mut best = vec![f64::INFINITY; s];
    let mut digits = vec![0usize; n * s];
    let mut table = vec![vec![0usize; s]; n];
    for _ in 0..total {
        for k in 0..n {
            table[k].copy_from_slice(&digits[k * s..(k + 1) * s]);
        }
        let v = evaluate_markov_table(problem, &table);
        for (b, x) in best.iter_mut().zip(&v.values[0]) {
            *b = b.min(*x);
        }
        for d in digits.iter_mut() {
            *d += 1;
            if *d < a {
                break;
            }
            *d = 0;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone)]
pub struct LiftedSolution {
    pub problem: DiscreteControlProblem,
    pub values: ValueTable,
    pub policy: InterpolatedPolicy,
    /// Discrete optimal value from the cell containing `x0`.
    pub j_star: f64,
}

/// Builds the discrete problem, solves it and lifts the optimal table to a
/// piecewise-constant continuous-time policy.
#[allow(clippy::too_many_arguments)]
pub fn solve_and_lift(
    model: &DiffusionModel,
    cost: &CostSpec,
    cells: &StateCells,
    actions: &ActionGrid,
    grid: &TimeGrid,
    opts: &KernelOptions,
    x0: &[f64],
) -> Result<LiftedSolution> {
    let problem = build_discrete_mdp(model, cost, cells, actions, grid, opts)?;
    let (values, policy) = backward_induction(&problem)?;
    let j_star = values.initial(cells.locate(x0).0);
    Ok(LiftedSolution {
        policy: interpolate(policy, *grid)?,
        problem,
        values,
        j_star,
    })
}
