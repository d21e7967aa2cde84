use serde::{Deserialize, Serialize};

use super::{
    simulate_team_decoupled, simulate_team_local_meas_reference, CoupledLocalStateTeamModel, LocalMeasurementTeamModel,
};
use crate::error::{invalid, Result};
use crate::estimate::{map_paths, pairwise_sum};
use crate::policy::{InterpolatedPolicy, InterpolatedTeamPolicy};
use crate::sde::{observation_stream, simulate_path, DiffusionModel, McConfig, NoisePlan, TimeGrid, STATE_STREAM};

/// Per-path decisions and the Brownian increments of every noise channel,
/// aggregated per macro step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AuditBatch {
    pub macro_steps: usize,
    pub decision_makers: usize,
    pub channels: usize,
    /// Per path, `macro_steps × decision_makers` action indices.
    pub actions: Vec<Vec<f64>>,
    /// Per path, `macro_steps × channels` increments over `[mh, (m+1)h)`.
    pub future: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditFlag {
    pub step: usize,
    pub agent: usize,
    pub interval: usize,
    pub channel: usize,
    pub correlation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub paths: usize,
    pub threshold: f64,
    pub pairs_tested: usize,
    pub max_abs_correlation: f64,
    pub flags: Vec<AuditFlag>,
}

impl AuditReport {
    pub fn clean(&self) -> bool {
        self.flags.is_empty()
    }
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = pairwise_sum(a) / n;
    let mb = pairwise_sum(b) / n;
    let da: Vec<f64> = a.iter().map(|x| x - ma).collect();
    let db: Vec<f64> = b.iter().map(|x| x - mb).collect();
    let saa = pairwise_sum(&da.iter().map(|x| x * x).collect::<Vec<_>>());
    let sbb = pairwise_sum(&db.iter().map(|x| x * x).collect::<Vec<_>>());
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    let sab = pairwise_sum(&da.iter().zip(&db).map(|(x, y)| x * y).collect::<Vec<_>>());
    sab / (saa * sbb).sqrt()
}

/// Correlates every decision at step `k` with every increment on intervals
/// `m ≥ k`, flagging `|corr| > 3/√n`. Decisions that never vary are skipped.
pub fn independence_audit(batch: &AuditBatch) -> Result<AuditReport> {
    let n = batch.actions.len();
    if n < 2 || batch.future.len() != n {
        return Err(invalid("audit needs at least two paths with matching records"));
    }
    let (steps, dms, chs) = (batch.macro_steps, batch.decision_makers, batch.channels);
    if batch.actions.iter().any(|a| a.len() != steps * dms) || batch.future.iter().any(|f| f.len() != steps * chs) {
        return Err(invalid("audit records have inconsistent lengths"));
    }
    let threshold = 3.0 / (n as f64).sqrt();
    let mut flags = Vec::new();
    let mut pairs = 0;
    let mut max_abs: f64 = 0.0;
    for k in 0..steps {
        for a in 0..dms {
            let act: Vec<f64> = batch.actions.iter().map(|r| r[k * dms + a]).collect();
            if act.iter().all(|v| *v == act[0]) {
                continue;
            }
            for m in k..steps {
                for c in 0..chs {
                    let inc: Vec<f64> = batch.future.iter().map(|r| r[m * chs + c]).collect();
                    let corr = correlation(&act, &inc);
                    pairs += 1;
                    max_abs = max_abs.max(corr.abs());
                    if corr.abs() > threshold {
                        flags.push(AuditFlag {
                            step: k,
                            agent: a,
                            interval: m,
                            channel: c,
                            correlation: corr,
                        });
                    }
                }
            }
        }
    }
    Ok(AuditReport {
        paths: n,
        threshold,
        pairs_tested: pairs,
        max_abs_correlation: max_abs,
        flags,
    })
}

fn macro_sums(plan: &NoisePlan, grid: &TimeGrid) -> Vec<f64> {
    let b = plan.macro_partial_sums(grid.inner_refine());
    let c = plan.channels;
    (0..grid.macro_steps() * c).map(|i| b[i + c] - b[i]).collect()
}

fn assemble(rows: Vec<(Vec<f64>, Vec<f64>)>, steps: usize, dms: usize, chs: usize) -> AuditBatch {
    let (actions, future) = rows.into_iter().unzip();
    AuditBatch {
        macro_steps: steps,
        decision_makers: dms,
        channels: chs,
        actions,
        future,
    }
}

pub fn audit_batch_full(
    model: &DiffusionModel,
    policy: &InterpolatedPolicy,
    mc: &McConfig,
    x0: &[f64],
) -> Result<AuditBatch> {
    let grid = *policy.grid();
    let rows = map_paths(mc.paths, |i| {
        let noise = mc.plan(&grid, model.state_dim, i, STATE_STREAM)?;
        let path = simulate_path(model, policy, &noise, x0)?;
        let acts = path.action_indices.iter().map(|&a| a as f64).collect();
        Ok((acts, macro_sums(&noise, &grid)))
    })?;
    Ok(assemble(rows, grid.macro_steps(), 1, model.state_dim))
}

/// Channels are the state noise followed by each agent's observation noise.
pub fn audit_batch_local_meas(
    model: &LocalMeasurementTeamModel,
    team: &InterpolatedTeamPolicy,
    mc: &McConfig,
    x0: &[f64],
) -> Result<AuditBatch> {
    let grid = *team.grid();
    let agents = model.agents();
    let steps = grid.macro_steps();
    let rows = map_paths(mc.paths, |i| {
        let w = mc.plan(&grid, model.state_dim, i, STATE_STREAM)?;
        let obs = (0..agents)
            .map(|a| mc.plan(&grid, model.observations[a].dim, i, observation_stream(a)))
            .collect::<Result<Vec<_>>>()?;
        let path = simulate_team_local_meas_reference(model, team, &w, &obs, x0)?;
        let mut acts = vec![0.0; steps * agents];
        for a in 0..agents {
            for k in 0..steps {
                acts[k * agents + a] = path.action_indices[a][k] as f64;
            }
        }
        let mut parts = vec![macro_sums(&w, &grid)];
        parts.extend(obs.iter().map(|p| macro_sums(p, &grid)));
        Ok((acts, interleave(&parts, steps)))
    })?;
    let chs = model.state_dim + model.observation_dim();
    Ok(assemble(rows, steps, agents, chs))
}

pub fn audit_batch_coupled(
    model: &CoupledLocalStateTeamModel,
    team: &InterpolatedTeamPolicy,
    mc: &McConfig,
    x0: &[Vec<f64>],
) -> Result<AuditBatch> {
    let grid = *team.grid();
    let agents = model.len();
    let steps = grid.macro_steps();
    let rows = map_paths(mc.paths, |i| {
        let plans = model
            .agents
            .iter()
            .map(|a| mc.plan(&grid, a.model.state_dim, i, a.stream))
            .collect::<Result<Vec<_>>>()?;
        let paths = simulate_team_decoupled(model, team, &plans, x0)?;
        let mut acts = vec![0.0; steps * agents];
        for (a, p) in paths.iter().enumerate() {
            for k in 0..steps {
                acts[k * agents + a] = p.action_indices[k] as f64;
            }
        }
        let parts: Vec<Vec<f64>> = plans.iter().map(|p| macro_sums(p, &grid)).collect();
        Ok((acts, interleave(&parts, steps)))
    })?;
    Ok(assemble(rows, steps, agents, model.total_state_dim()))
}

/// Negative control: a decision at step `k` that reads the sign of the
/// observation noise at `(k+1)h`, which a non-anticipative policy cannot see.
pub fn anticipative_probe_batch(grid: &TimeGrid, mc: &McConfig) -> Result<AuditBatch> {
    let steps = grid.macro_steps();
    let rows = map_paths(mc.paths, |i| {
        let b = mc.plan(grid, 1, i, observation_stream(0))?;
        let sums = b.macro_partial_sums(grid.inner_refine());
        let acts = (0..steps).map(|k| if sums[k + 1] > 0.0 { 1.0 } else { 0.0 }).collect();
        Ok((acts, macro_sums(&b, grid)))
    })?;
    Ok(assemble(rows, steps, 1, 1))
}

/// Joins per-source `steps × c_s` blocks into `steps × Σ c_s`.
fn interleave(parts: &[Vec<f64>], steps: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(parts.iter().map(Vec::len).sum());
    for m in 0..steps {
        for p in parts {
            let c = p.len() / steps;
            out.extend_from_slice(&p[m * c..(m + 1) * c]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn correlation_of_identical_series_is_one() {
        let a = [1.0, 2.0, 0.5, 3.0];
        assert!((correlation(&a, &a) - 1.0).abs() < 1e-12);
        assert_eq!(correlation(&a, &[1.0; 4]), 0.0);
    }

    #[test]
    fn constant_decisions_raise_nothing() {
        let batch = AuditBatch {
            macro_steps: 2,
            decision_makers: 1,
            channels: 1,
            actions: vec![vec![1.0, 1.0]; 5],
            future: (0..5).map(|i| vec![i as f64, -(i as f64)]).collect(),
        };
        let r = independence_audit(&batch).unwrap();
        assert!(r.clean());
        assert_eq!(r.pairs_tested, 0);
    }

    #[test]
    fn anticipative_probe_is_flagged() {
        let grid = TimeGrid::new(1.0, 2, 8).unwrap();
        let r = independence_audit(&anticipative_probe_batch(&grid, &McConfig::new(2000, 3)).unwrap()).unwrap();
        assert!(!r.clean());
        assert!(r.flags.iter().any(|f| f.interval == f.step));
    }
}
