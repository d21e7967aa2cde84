use serde::{Deserialize, Serialize};

use super::{quantize_actions, ActionGrid, ObservationQuantizer, StateCells};
use crate::error::{invalid, Error, Result};

/// Row sums must be within this of 1.
pub const ROW_TOLERANCE: f64 = 1e-12;
/// Codes per step above this are rejected at construction.
const MAX_KEYS_PER_STEP: u64 = 1 << 24;

/// Data a decision rule may read at macro step `k`.
#[derive(Debug, Clone, Copy)]
pub enum Information<'a> {
    None,
    /// State at `kh`.
    State(&'a [f64]),
    /// Observation samples `Y_0, Y_h, …, Y_{kh}`, flattened.
    History {
        samples: &'a [f64],
        dim: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub index: usize,
    pub clamped: bool,
}

/// Open-loop relaxed control: one weight row per macro step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxedControl {
    pub rows: Vec<Vec<f64>>,
}

/// Rows keyed by `(k, state cell at kh)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovTablePolicy {
    pub cells: StateCells,
    pub rows: Vec<Vec<Vec<f64>>>,
}

/// Rows keyed by `(k, code of the last L quantized observation samples)`.
/// `history_len = 0` reads nothing, which makes it an open-loop policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WideSensePolicy {
    pub quantizer: ObservationQuantizer,
    pub history_len: usize,
    pub rows: Vec<Vec<Vec<f64>>>,
}

impl WideSensePolicy {
    /// First sample index in the window read at step `k`.
    pub fn window_start(&self, k: usize) -> usize {
        (k + 1).saturating_sub(self.history_len)
    }

    pub fn keys_at(quantizer: &ObservationQuantizer, history_len: usize, k: usize) -> Result<u64> {
        let len = (k + 1).min(history_len) as u32;
        quantizer
            .base()
            .checked_pow(len)
            .filter(|c| *c <= MAX_KEYS_PER_STEP)
            .ok_or_else(|| invalid(format!("history code space at step {k} is too large")))
    }

    pub fn code(&self, k: usize, samples: &[f64], dim: usize) -> u64 {
        let base = self.quantizer.base();
        let mut code = 0u64;
        for i in (self.window_start(k)..=k).rev() {
            code = code * base + self.quantizer.quantize(&samples[i * dim..(i + 1) * dim]);
        }
        code
    }
}

/// Default truncation: full history up to 8 macro steps, last 4 samples beyond.
pub fn default_history_len(macro_steps: usize) -> usize {
    if macro_steps <= 8 {
        macro_steps
    } else {
        4
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecisionRule {
    OpenLoop(RelaxedControl),
    Markov(MarkovTablePolicy),
    WideSense(WideSensePolicy),
}

/// A discrete-time policy: a decision rule over an action grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub actions: ActionGrid,
    pub rule: DecisionRule,
}

fn point_mass(n: usize, index: usize) -> Vec<f64> {
    let mut r = vec![0.0; n];
    r[index] = 1.0;
    r
}

fn inverse_cdf(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in row.iter().enumerate() {
        if w > 0.0 {
            last = i;
        }
        acc += w;
        if u < acc {
            return i;
        }
    }
    last
}

impl Policy {
    pub fn open_loop(actions: ActionGrid, rows: Vec<Vec<f64>>) -> Result<Self> {
        let p = Self {
            actions,
            rule: DecisionRule::OpenLoop(RelaxedControl { rows }),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn constant_open_loop(actions: ActionGrid, index: usize, steps: usize) -> Self {
        let n = actions.len();
        Self {
            actions,
            rule: DecisionRule::OpenLoop(RelaxedControl {
                rows: vec![point_mass(n, index); steps],
            }),
        }
    }

    /// Single-point action grid at `value` in every coordinate.
    pub fn constant_open_loop_at(action_dim: usize, value: f64, steps: usize) -> Self {
        let g = quantize_actions(&vec![value; action_dim], &vec![value; action_dim], &vec![1; action_dim])
            .expect("degenerate single-level grid");
        Self::constant_open_loop(g, 0, steps)
    }

    pub fn deterministic_open_loop(actions: ActionGrid, indices: &[usize]) -> Result<Self> {
        let n = actions.len();
        let rows = indices.iter().map(|&i| point_mass(n, i)).collect();
        Self::open_loop(actions, rows)
    }

    /// `table[k][cell]` is the action index.
    pub fn deterministic_markov(actions: ActionGrid, cells: StateCells, table: &[Vec<usize>]) -> Result<Self> {
        let n = actions.len();
        let rows = table
            .iter()
            .map(|row| row.iter().map(|&i| point_mass(n, i)).collect())
            .collect();
        let p = Self {
            actions,
            rule: DecisionRule::Markov(MarkovTablePolicy { cells, rows }),
        };
        p.validate()?;
        Ok(p)
    }

    /// `table[k][code]` is the action index.
    pub fn deterministic_wide_sense(
        actions: ActionGrid,
        quantizer: ObservationQuantizer,
        history_len: usize,
        table: &[Vec<usize>],
    ) -> Result<Self> {
        let n = actions.len();
        let rows = table
            .iter()
            .map(|row| row.iter().map(|&i| point_mass(n, i)).collect())
            .collect();
        let p = Self {
            actions,
            rule: DecisionRule::WideSense(WideSensePolicy {
                quantizer,
                history_len,
                rows,
            }),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn steps(&self) -> usize {
        match &self.rule {
            DecisionRule::OpenLoop(r) => r.rows.len(),
            DecisionRule::Markov(m) => m.rows.len(),
            DecisionRule::WideSense(w) => w.rows.len(),
        }
    }

    /// Rows available at step `k`, indexed by key.
    pub fn rows_at(&self, k: usize) -> &[Vec<f64>] {
        match &self.rule {
            DecisionRule::OpenLoop(r) => std::slice::from_ref(&r.rows[k]),
            DecisionRule::Markov(m) => &m.rows[k],
            DecisionRule::WideSense(w) => &w.rows[k],
        }
    }

    fn expected_keys(&self, k: usize) -> Result<u64> {
        match &self.rule {
            DecisionRule::OpenLoop(_) => Ok(1),
            DecisionRule::Markov(m) => Ok(m.cells.count() as u64),
            DecisionRule::WideSense(w) => WideSensePolicy::keys_at(&w.quantizer, w.history_len, k),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.actions.len();
        for k in 0..self.steps() {
            let rows = self.rows_at(k);
            if rows.len() as u64 != self.expected_keys(k)? {
                return Err(invalid(format!(
                    "step {k} has {} rows, expected {}",
                    rows.len(),
                    self.expected_keys(k)?
                )));
            }
            for (key, row) in rows.iter().enumerate() {
                if row.len() != n {
                    return Err(invalid(format!(
                        "row ({k}, {key}) has {} weights for {n} actions",
                        row.len()
                    )));
                }
                if row.iter().any(|w| !(*w >= 0.0)) {
                    return Err(invalid(format!("row ({k}, {key}) has a negative or NaN weight")));
                }
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > ROW_TOLERANCE {
                    return Err(invalid(format!("row ({k}, {key}) sums to {s}")));
                }
            }
        }
        Ok(())
    }

    /// Information key at step `k`. Only data with time index `≤ k` is read.
    pub fn key(&self, k: usize, info: Information<'_>) -> Result<(u64, bool)> {
        match (&self.rule, info) {
            (DecisionRule::OpenLoop(_), _) => Ok((0, false)),
            (DecisionRule::Markov(m), Information::State(x)) => {
                if x.len() != m.cells.dim() {
                    return Err(invalid("state dimension does not match the cell partition"));
                }
                let (c, clamped) = m.cells.locate(x);
                Ok((c as u64, clamped))
            }
            (DecisionRule::WideSense(w), Information::History { samples, dim }) => {
                if dim != w.quantizer.dim() || samples.len() != (k + 1) * dim {
                    return Err(invalid(format!(
                        "step {k} needs exactly {} observation samples of dimension {}",
                        k + 1,
                        w.quantizer.dim()
                    )));
                }
                Ok((w.code(k, samples, dim), false))
            }
            (DecisionRule::WideSense(w), Information::None) if w.history_len == 0 => Ok((0, false)),
            _ => Err(invalid("information does not match the policy's information pattern")),
        }
    }

    pub fn row(&self, k: usize, key: u64) -> Result<&[f64]> {
        if k >= self.steps() {
            return Err(Error::MissingKey { step: k, key });
        }
        self.rows_at(k)
            .get(key as usize)
            .map(Vec::as_slice)
            .ok_or(Error::MissingKey { step: k, key })
    }

    pub fn decide(&self, k: usize, info: Information<'_>, uniform: f64) -> Result<Decision> {
        let (key, clamped) = self.key(k, info)?;
        let row = self.row(k, key)?;
        Ok(Decision {
            index: inverse_cdf(row, uniform),
            clamped,
        })
    }

    /// Rebuilds every row through `f(k, key, row)`.
    pub fn map_rows(&self, mut f: impl FnMut(usize, usize, &[f64]) -> Vec<f64>) -> Self {
        let mut out = self.clone();
        match &mut out.rule {
            DecisionRule::OpenLoop(r) => {
                for (k, row) in r.rows.iter_mut().enumerate() {
                    *row = f(k, 0, row);
                }
            }
            DecisionRule::Markov(MarkovTablePolicy { rows, .. })
            | DecisionRule::WideSense(WideSensePolicy { rows, .. }) => {
                for (k, step) in rows.iter_mut().enumerate() {
                    for (key, row) in step.iter_mut().enumerate() {
                        *row = f(k, key, row);
                    }
                }
            }
        }
        out
    }

    pub fn is_deterministic(&self) -> bool {
        (0..self.steps()).all(|k| self.rows_at(k).iter().all(|r| r.iter().all(|w| *w == 0.0 || *w == 1.0)))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(s)?;
        p.actions.validate()?;
        p.validate()?;
        Ok(p)
    }
}

/// Index drawn from the policy's row at `(k, key(info))` by inverse CDF.
pub fn sample_action(policy: &Policy, info: Information<'_>, k: usize, uniform: f64) -> Result<usize> {
    Ok(policy.decide(k, info, uniform)?.index)
}

/// Mixes every row with the uniform distribution: `(1−ε)·row + ε/|A|`.
pub fn perturb_policy(policy: &Policy, eps: f64) -> Result<Policy> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(invalid(format!("perturbation must lie in [0, 1], got {eps}")));
    }
    if eps == 0.0 {
        return Ok(policy.clone());
    }
    let n = policy.actions.len() as f64;
    Ok(policy.map_rows(|_, _, row| row.iter().map(|w| (1.0 - eps) * w + eps / n).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid3() -> ActionGrid {
        quantize_actions(&[-1.0], &[1.0], &[3]).unwrap()
    }

    fn grid2() -> ActionGrid {
        quantize_actions(&[-1.0], &[1.0], &[2]).unwrap()
    }

    #[test]
    fn point_mass_rows_sample_deterministically() {
        let p = Policy::open_loop(grid2(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        for u in [0.0, 0.3, 0.999_999] {
            assert_eq!(sample_action(&p, Information::None, 0, u).unwrap(), 0);
            assert_eq!(sample_action(&p, Information::None, 1, u).unwrap(), 1);
        }
    }

    #[test]
    fn sampling_frequency_matches_row() {
        use rand::{Rng, SeedableRng};
        let p = Policy::open_loop(grid2(), vec![vec![0.3, 0.7]]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let n = 100_000;
        let hits: Vec<f64> = (0..n)
            .map(|_| (sample_action(&p, Information::None, 0, rng.random()).unwrap() == 0) as u8 as f64)
            .collect();
        let e = crate::EstimateWithError::from_samples(&hits);
        assert!(e.within(0.3, 3.0), "{e:?}");
    }

    #[test]
    fn missing_key_is_named() {
        let p = Policy::constant_open_loop(grid2(), 0, 2);
        let err = p.row(5, 0).unwrap_err();
        assert!(matches!(err, Error::MissingKey { step: 5, key: 0 }));
    }

    #[test]
    fn perturbation_arithmetic() {
        let p = Policy::open_loop(grid2(), vec![vec![1.0, 0.0]]).unwrap();
        assert_eq!(perturb_policy(&p, 0.0).unwrap(), p);
        let half = perturb_policy(&p, 0.5).unwrap();
        assert_eq!(half.rows_at(0)[0], vec![0.75, 0.25]);
        let full = perturb_policy(&p, 1.0).unwrap();
        assert_eq!(full.rows_at(0)[0], vec![0.5, 0.5]);
        assert!(perturb_policy(&p, 1.5).is_err());
    }

    #[test]
    fn markov_policy_reads_cell() {
        let cells = StateCells::uniform_1d(-1.0, 1.0, 2).unwrap();
        let p = Policy::deterministic_markov(grid3(), cells, &[vec![2, 0]]).unwrap();
        assert_eq!(sample_action(&p, Information::State(&[-0.5]), 0, 0.5).unwrap(), 2);
        assert_eq!(sample_action(&p, Information::State(&[0.5]), 0, 0.5).unwrap(), 0);
        let d = p.decide(0, Information::State(&[9.0]), 0.5).unwrap();
        assert!(d.clamped);
        assert!(p.decide(0, Information::None, 0.5).is_err());
    }

    #[test]
    fn wide_sense_code_ignores_samples_outside_window() {
        let q = ObservationQuantizer::new(vec![-1.0], vec![1.0], vec![2]).unwrap();
        let table = vec![vec![0; 2], vec![0, 1, 2, 0], vec![0, 1, 2, 0]];
        let p = Policy::deterministic_wide_sense(grid3(), q, 2, &table).unwrap();
        let a = [0.5, -0.5, 0.5];
        let b = [-0.5, -0.5, 0.5];
        // window at k=2 covers samples 1 and 2 only
        assert_eq!(
            p.key(2, Information::History { samples: &a, dim: 1 }).unwrap(),
            p.key(2, Information::History { samples: &b, dim: 1 }).unwrap()
        );
        assert!(p.key(1, Information::History { samples: &a, dim: 1 }).is_err());
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(Policy::open_loop(grid2(), vec![vec![0.6, 0.6]]).is_err());
        assert!(Policy::open_loop(grid2(), vec![vec![-0.1, 1.1]]).is_err());
        assert!(Policy::open_loop(grid2(), vec![vec![1.0]]).is_err());
    }

    fn arb_row(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, n).prop_map(|mut r| {
            r[0] += 1e-3;
            let s: f64 = r.iter().sum();
            r.iter_mut().for_each(|w| *w /= s);
            r
        })
    }

    proptest! {
        #[test]
        fn json_round_trip_is_bit_exact(rows in prop::collection::vec(prop::collection::vec(arb_row(3), 4), 1..4)) {
            let cells = StateCells::uniform_1d(-2.0, 2.0, 4).unwrap();
            let p = Policy { actions: grid3(), rule: DecisionRule::Markov(MarkovTablePolicy { cells, rows }) };
            prop_assume!(p.validate().is_ok());
            let back = Policy::from_json(&p.to_json().unwrap()).unwrap();
            prop_assert_eq!(back, p);
        }

        #[test]
        fn perturbed_rows_stay_normalized(row in arb_row(3), eps in 0.0f64..=1.0) {
            let p = Policy { actions: grid3(), rule: DecisionRule::OpenLoop(RelaxedControl { rows: vec![row] }) };
            prop_assume!(p.validate().is_ok());
            let q = perturb_policy(&p, eps).unwrap();
            prop_assert!(q.validate().is_ok());
        }
    }
}
