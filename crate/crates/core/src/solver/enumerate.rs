use serde::{Deserialize, Serialize};

use crate::cost::{mc_cost_pomdp, CostSpec};
use crate::error::{invalid, Error, Result};
use crate::estimate::EstimateWithError;
use crate::info::PartiallyObservedModel;
use crate::policy::{interpolate, ActionGrid, ObservationQuantizer, Policy, WideSensePolicy};
use crate::sde::{McConfig, TimeGrid};

/// Largest candidate set any brute-force search will evaluate.
pub const MAX_CANDIDATES: u128 = 10_000;
const MAX_STEPS: usize = 3;
const MAX_LEVELS: usize = 3;
const MAX_ACTIONS: usize = 3;

/// Deterministic policies reading the last `history_len` quantized
/// observation samples. `history_len = 0` is the open-loop class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WideSenseClass {
    pub actions: ActionGrid,
    pub quantizer: ObservationQuantizer,
    pub history_len: usize,
}

impl WideSenseClass {
    pub fn check_guards(&self, steps: usize) -> Result<()> {
        let guard = |what, size: usize, limit: usize| {
            if size > limit {
                Err(Error::GuardExceeded {
                    what,
                    size: size as u128,
                    limit: limit as u128,
                })
            } else {
                Ok(())
            }
        };
        guard("macro steps", steps, MAX_STEPS)?;
        guard("actions", self.actions.len(), MAX_ACTIONS)?;
        for &c in &self.quantizer.cells.counts {
            guard("observation levels", c, MAX_LEVELS)?;
        }
        Ok(())
    }

    fn window_start(&self, k: usize) -> usize {
        (k + 1).saturating_sub(self.history_len)
    }

    pub fn keys_at(&self, k: usize) -> Result<u64> {
        WideSensePolicy::keys_at(&self.quantizer, self.history_len, k)
    }

    /// Deterministic policy with `slots[i]` (from [`reachable_keys`]) set to
    /// `choices[i]` and every other key set to action 0.
    pub fn policy(&self, steps: usize, slots: &[(usize, u64)], choices: &[usize]) -> Result<Policy> {
        let mut table: Vec<Vec<usize>> = (0..steps)
            .map(|k| Ok(vec![0; self.keys_at(k)? as usize]))
            .collect::<Result<_>>()?;
        for (&(k, code), &c) in slots.iter().zip(choices) {
            table[k][code as usize] = c;
        }
        Policy::deterministic_wide_sense(self.actions.clone(), self.quantizer.clone(), self.history_len, &table)
    }
}

/// `(k, code)` pairs that can occur: a window that starts at sample 0 sees
/// `Y_0 = 0` in its lowest digit.
pub fn reachable_keys(class: &WideSenseClass, steps: usize) -> Result<Vec<(usize, u64)>> {
    let base = class.quantizer.base();
    let q0 = class.quantizer.quantize(&vec![0.0; class.quantizer.dim()]);
    let mut out = Vec::new();
    for k in 0..steps {
        let keys = class.keys_at(k)?;
        let pinned = class.history_len > 0 && class.window_start(k) == 0;
        for code in 0..keys {
            if !pinned || code % base == q0 {
                out.push((k, code));
            }
        }
    }
    Ok(out)
}

pub(crate) fn candidate_count(actions: usize, slots: usize) -> Result<u128> {
    (actions as u128)
        .checked_pow(slots as u32)
        .filter(|c| *c <= MAX_CANDIDATES)
        .ok_or(Error::GuardExceeded {
            what: "candidate policies",
            size: (actions as u128).saturating_pow(slots as u32),
            limit: MAX_CANDIDATES,
        })
}

/// Mixed-radix digits of `index`, most significant first.
pub(crate) fn digits(mut index: u128, radix: usize, len: usize) -> Vec<usize> {
    let mut d = vec![0; len];
    for slot in d.iter_mut().rev() {
        *slot = (index % radix as u128) as usize;
        index /= radix as u128;
    }
    d
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumerationResult {
    pub policy: Policy,
    pub value: EstimateWithError,
    pub candidates: usize,
    /// Estimated cost of every candidate in enumeration order.
    pub values: Vec<EstimateWithError>,
}

/// Evaluates every deterministic policy of the class with common random
/// numbers and returns the best. Ties keep the first candidate in
/// lexicographic order of the reachable-key assignments.
pub fn enumerate_wide_sense(
    model: &PartiallyObservedModel,
    cost: &CostSpec,
    class: &WideSenseClass,
    grid: &TimeGrid,
    mc: &McConfig,
    x0: &[f64],
) -> Result<EnumerationResult> {
    let steps = grid.macro_steps();
    class.check_guards(steps)?;
    if class.quantizer.dim() != model.observation().dim {
        return Err(invalid("quantizer dimension does not match the observation channel"));
    }
    let slots = reachable_keys(class, steps)?;
    let total = candidate_count(class.actions.len(), slots.len())?;
    let mut values = Vec::with_capacity(total as usize);
    let mut best: Option<(Policy, EstimateWithError)> = None;
    for c in 0..total {
        let choices = digits(c, class.actions.len(), slots.len());
        let policy = class.policy(steps, &slots, &choices)?;
        let v = mc_cost_pomdp(model, &interpolate(policy.clone(), *grid)?, cost, mc, x0)?;
        values.push(v);
        if best.as_ref().is_none_or(|b| v.mean < b.1.mean) {
            best = Some((policy, v));
        }
    }
    let (policy, value) = best.expect("at least one candidate");
    Ok(EnumerationResult {
        policy,
        value,
        candidates: total as usize,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn reachable_keys_pin_the_first_sample() {
        let class = WideSenseClass {
            actions: fixtures::two_actions(),
            quantizer: fixtures::sign_quantizer(),
            history_len: 3,
        };
        let keys = reachable_keys(&class, 2).unwrap();
        // Y_0 = 0 lands in the upper sign cell.
        assert_eq!(keys, vec![(0, 1), (1, 1), (1, 3)]);
        let open = WideSenseClass {
            history_len: 0,
            ..class
        };
        assert_eq!(reachable_keys(&open, 2).unwrap(), vec![(0, 0), (1, 0)]);
    }

    #[test]
    fn digits_are_lexicographic() {
        assert_eq!(digits(0, 3, 2), vec![0, 0]);
        assert_eq!(digits(1, 3, 2), vec![0, 1]);
        assert_eq!(digits(5, 3, 2), vec![1, 2]);
    }

    #[test]
    fn guards_reject_large_problems() {
        let class = WideSenseClass {
            actions: fixtures::two_actions(),
            quantizer: fixtures::sign_quantizer(),
            history_len: 4,
        };
        assert!(matches!(class.check_guards(4), Err(Error::GuardExceeded { .. })));
        let many = crate::policy::quantize_actions(&[-1.0], &[1.0], &[4]).unwrap();
        let c = WideSenseClass { actions: many, ..class };
        assert!(c.check_guards(2).is_err());
        assert!(candidate_count(3, 9).is_err());
        assert!(candidate_count(3, 8).is_ok());
    }
}
