use serde::{Deserialize, Serialize};

use crate::cost::{one_step, CostSpec};
use crate::error::{invalid, Error, Result};
use crate::estimate::map_paths;
use crate::policy::{ActionGrid, StateCells};
use crate::sde::{uniform_vector, DiffusionModel, NoisePlan, TimeGrid};

/// Stream tags for kernel estimation, disjoint from the simulator streams.
const KERNEL_STREAM: u32 = 1 << 20;
const KERNEL_START_STREAM: u32 = KERNEL_STREAM + 1;
const TERMINAL_STREAM: u32 = KERNEL_STREAM + 2;

/// Where one-step samples of a kernel row start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelStart {
    /// Every sample starts at the cell center.
    #[default]
    CellCenter,
    /// Samples start uniformly inside the cell; the terminal cost is the
    /// cell average.
    CellUniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelOptions {
    /// One-step samples per `(cell, action)` row.
    pub samples: usize,
    /// Rows with fewer samples are rejected.
    pub min_samples: usize,
    pub start: KernelStart,
    pub seed: u64,
}

impl KernelOptions {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self {
            samples,
            min_samples: 200,
            start: KernelStart::default(),
            seed,
        }
    }

    pub fn with_start(mut self, start: KernelStart) -> Self {
        self.start = start;
        self
    }
}

/// Finite-state, finite-action, finite-horizon control problem estimated
/// from one-step simulation. Rows are indexed `cell * actions + action`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteControlProblem {
    pub horizon_steps: usize,
    pub h: f64,
    pub cells: StateCells,
    pub actions: ActionGrid,
    pub kernel: Vec<Vec<f64>>,
    pub stage_cost: Vec<f64>,
    pub terminal: Vec<f64>,
    pub samples_per_row: usize,
    /// One-step samples that left the box and were clamped to a border cell.
    pub out_of_box: usize,
}

impl DiscreteControlProblem {
    pub fn states(&self) -> usize {
        self.cells.count()
    }

    pub fn action_count(&self) -> usize {
        self.actions.len()
    }

    pub fn row(&self, cell: usize, action: usize) -> usize {
        cell * self.action_count() + action
    }

    pub fn validate(&self) -> Result<()> {
        let (s, a) = (self.states(), self.action_count());
        if self.kernel.len() != s * a || self.stage_cost.len() != s * a || self.terminal.len() != s {
            return Err(invalid("kernel, cost or terminal table has the wrong size"));
        }
        for (r, row) in self.kernel.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.len() != s || row.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(invalid(format!(
                    "kernel row (cell {}, action {}) is not a distribution",
                    r / a,
                    r % a
                )));
            }
        }
        if self
            .stage_cost
            .iter()
            .chain(&self.terminal)
            .any(|c| !c.is_finite() || *c < 0.0)
        {
            return Err(invalid("costs must be finite and nonnegative"));
        }
        Ok(())
    }
}

fn start_point(cells: &StateCells, cell: usize, start: KernelStart, seed: u64, stream: u32, index: u64) -> Vec<f64> {
    match start {
        KernelStart::CellCenter => cells.center(cell),
        KernelStart::CellUniform => cells.point_in(cell, &uniform_vector(seed, stream, index, cells.dim())),
    }
}

/// Estimates transition rows and one-step costs on the macro grid `grid.h()`
/// by simulating one macro step, action frozen, from each `(cell, action)`.
pub fn build_discrete_mdp(
    model: &DiffusionModel,
    cost: &CostSpec,
    cells: &StateCells,
    actions: &ActionGrid,
    grid: &TimeGrid,
    opts: &KernelOptions,
) -> Result<DiscreteControlProblem> {
    if cells.dim() != model.state_dim || actions.dim() != model.action_dim {
        return Err(invalid("cells or actions do not match the model dimensions"));
    }
    if opts.samples < opts.min_samples {
        return Err(Error::UndersampledRow {
            cell: 0,
            action: 0,
            samples: opts.samples,
            min: opts.min_samples,
        });
    }
    let (s, a, n) = (cells.count(), actions.len(), opts.samples);
    let one = grid.one_step();
    let rows = map_paths(s * a, |r| {
        let (cell, act) = (r as usize / a, r as usize % a);
        let u = actions.point(act);
        let mut counts = vec![0usize; s];
        let mut costs = Vec::with_capacity(n);
        let mut out = 0;
        for i in 0..n {
            let index = r * n as u64 + i as u64;
            let x0 = start_point(cells, cell, opts.start, opts.seed, KERNEL_START_STREAM, index);
            let noise = NoisePlan::generate(&one, model.state_dim, opts.seed, index, KERNEL_STREAM);
            let (c, x1) = one_step(model, &x0, u, cost, &noise)?;
            let (next, clamped) = cells.locate(&x1);
            counts[next] += 1;
            out += clamped as usize;
            costs.push(c);
        }
        let row: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
        Ok((row, crate::pairwise_sum(&costs) / n as f64, out))
    })?;
    let terminal = (0..s)
        .map(|cell| match opts.start {
            KernelStart::CellCenter => cost.terminal(&cells.center(cell)),
            KernelStart::CellUniform => {
                let v: Vec<f64> = (0..n)
                    .map(|i| {
                        let index = (cell * n + i) as u64;
                        cost.terminal(&start_point(cells, cell, opts.start, opts.seed, TERMINAL_STREAM, index))
                    })
                    .collect();
                crate::pairwise_sum(&v) / n as f64
            }
        })
        .collect();
    let mut kernel = Vec::with_capacity(s * a);
    let mut stage_cost = Vec::with_capacity(s * a);
    let mut out_of_box = 0;
    for (row, c, o) in rows {
        kernel.push(row);
        stage_cost.push(c);
        out_of_box += o;
    }
    let p = DiscreteControlProblem {
        horizon_steps: grid.macro_steps(),
        h: grid.h(),
        cells: cells.clone(),
        actions: actions.clone(),
        kernel,
        stage_cost,
        terminal,
        samples_per_row: n,
        out_of_box,
    };
    p.validate()?;
    Ok(p)
}
