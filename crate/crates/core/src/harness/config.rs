//! Experiment configuration: a TOML document merged over per-kind defaults.
//! Every field is materialized before a run so records echo all inputs.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixtures;
use crate::info::ObservationCoupling;
use crate::solver::KernelStart;

/// Paths below this are rejected for Monte Carlo experiments.
pub const MIN_PATHS: usize = 100;
/// The independence audit needs this many paths for its threshold to mean anything.
pub const MIN_AUDIT_PATHS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Validate,
    Martingale,
    SecondMoment,
    L1Continuity,
    EstimatorEquivalence,
    Dynkin,
    HSweep,
    LiftConsistency,
    DpExact,
    PomdpEnum,
    TeamEnum,
    IndependenceAudit,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 12] = [
        ExperimentKind::Validate,
        ExperimentKind::Martingale,
        ExperimentKind::SecondMoment,
        ExperimentKind::L1Continuity,
        ExperimentKind::EstimatorEquivalence,
        ExperimentKind::Dynkin,
        ExperimentKind::HSweep,
        ExperimentKind::LiftConsistency,
        ExperimentKind::DpExact,
        ExperimentKind::PomdpEnum,
        ExperimentKind::TeamEnum,
        ExperimentKind::IndependenceAudit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Validate => "validate",
            ExperimentKind::Martingale => "martingale",
            ExperimentKind::SecondMoment => "second_moment",
            ExperimentKind::L1Continuity => "l1_continuity",
            ExperimentKind::EstimatorEquivalence => "estimator_equivalence",
            ExperimentKind::Dynkin => "dynkin",
            ExperimentKind::HSweep => "h_sweep",
            ExperimentKind::LiftConsistency => "lift_consistency",
            ExperimentKind::DpExact => "dp_exact",
            ExperimentKind::PomdpEnum => "pomdp_enum",
            ExperimentKind::TeamEnum => "team_enum",
            ExperimentKind::IndependenceAudit => "independence_audit",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown experiment kind '{name}'")))
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub horizon: f64,
    pub macro_steps: usize,
    /// Inner Euler steps per macro step.
    pub inner_refine: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub paths: usize,
    /// One-step samples per `(cell, action)` row of an estimated kernel.
    pub kernel_samples: usize,
    pub kernel_min_samples: usize,
    /// Independent kernel builds used for the standard error of `J*`.
    pub replicates: usize,
    /// Points probed by the assumption check.
    pub probes: usize,
}

/// State box and cell counts. Also the probe box of `validate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub cells: Vec<usize>,
    pub kernel_start: KernelStart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub levels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub levels: Vec<usize>,
    /// Quantized samples a wide-sense rule reads.
    pub history: usize,
    pub coupling: ObservationCoupling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub macro_steps: Vec<usize>,
    /// Cell count per entry of `macro_steps`.
    pub cells: Vec<usize>,
    /// Inner steps over the whole horizon, shared by every entry.
    pub total_inner_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuityConfig {
    pub eps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentConfig {
    /// Drift of the constant-drift fixture whose second moment is known exactly.
    pub exact_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynkinConfig {
    pub radius: f64,
    /// Inner refinements relative to `grid.inner_refine`, all sharing one Brownian path.
    pub refinements: Vec<usize>,
    /// Slope of the allowed discretization bias, `K` in `K·δ`.
    pub bias_slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnumerationConfig {
    /// Random tabular problems for `dp_exact`.
    pub problems: usize,
    pub max_cells: usize,
    pub max_actions: usize,
    pub max_steps: usize,
    /// Randomized policy tuples the team optimum is compared against.
    pub challengers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    /// Width of statistical bands in standard errors.
    pub se_multiplier: f64,
    /// Exactness threshold for deterministic comparisons.
    pub exact: f64,
    /// Allowed deviation of kernel row sums from 1.
    pub row_sum: f64,
    /// Relative band of the lift comparison, `r·max(|J*|, floor)`.
    pub lift_relative: f64,
    pub lift_floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    /// Fully observed fixture; the partially observed and team fixtures are fixed per kind.
    pub fixture: String,
    pub x0: Vec<f64>,
    pub grid: GridConfig,
    pub sampling: SamplingConfig,
    pub state: StateConfig,
    pub actions: ActionConfig,
    pub observation: ObservationConfig,
    pub sweep: SweepConfig,
    pub continuity: ContinuityConfig,
    pub moments: MomentConfig,
    pub dynkin: DynkinConfig,
    pub enumeration: EnumerationConfig,
    pub tolerance: ToleranceConfig,
}

impl ExperimentConfig {
    /// Defaults for `kind`, seeded with `seed`.
    pub fn defaults(kind: ExperimentKind, seed: u64) -> Self {
        let mut c = Self {
            kind,
            seed,
            fixture: "tanh_drift".into(),
            x0: vec![0.5],
            grid: GridConfig {
                horizon: 1.0,
                macro_steps: 4,
                inner_refine: 8,
            },
            sampling: SamplingConfig {
                paths: 10_000,
                kernel_samples: 4000,
                kernel_min_samples: 200,
                replicates: 8,
                probes: 1000,
            },
            state: StateConfig {
                lo: vec![-1.0],
                hi: vec![1.0],
                cells: vec![2],
                kernel_start: KernelStart::CellCenter,
            },
            actions: ActionConfig {
                lo: vec![-1.0],
                hi: vec![1.0],
                levels: vec![3],
            },
            observation: ObservationConfig {
                lo: vec![-1.0],
                hi: vec![1.0],
                levels: vec![2],
                history: 4,
                coupling: ObservationCoupling::FrozenAtStep,
            },
            sweep: SweepConfig {
                macro_steps: vec![2, 4, 8, 16],
                cells: vec![5, 7, 9, 13],
                total_inner_steps: 256,
            },
            continuity: ContinuityConfig {
                eps: vec![0.2, 0.1, 0.05],
            },
            moments: MomentConfig { exact_drift: 0.8 },
            dynkin: DynkinConfig {
                radius: 3.0,
                refinements: vec![1, 2, 4],
                bias_slope: 1.0,
            },
            enumeration: EnumerationConfig {
                problems: 50,
                max_cells: 4,
                max_actions: 3,
                max_steps: 3,
                challengers: 100,
            },
            tolerance: ToleranceConfig {
                se_multiplier: 3.0,
                exact: 1e-12,
                row_sum: 1e-9,
                lift_relative: 0.05,
                lift_floor: 0.1,
            },
        };
        match kind {
            ExperimentKind::Validate => {
                c.fixture = "identity_diffusion".into();
                c.state = StateConfig {
                    lo: vec![-3.0],
                    hi: vec![3.0],
                    cells: vec![1],
                    kernel_start: KernelStart::CellCenter,
                };
            }
            ExperimentKind::Martingale | ExperimentKind::SecondMoment => {
                c.sampling.paths = 100_000;
            }
            ExperimentKind::L1Continuity => {
                c.sampling.paths = 100_000;
            }
            ExperimentKind::Dynkin => {
                c.grid.inner_refine = 4;
            }
            ExperimentKind::HSweep | ExperimentKind::LiftConsistency => {
                c.grid = GridConfig {
                    horizon: 2.0,
                    macro_steps: 8,
                    inner_refine: 32,
                };
                c.x0 = vec![fixtures::TANH_TARGET];
                c.state.lo = vec![-1.25];
                c.state.hi = vec![3.25];
                c.state.cells = vec![9];
            }
            ExperimentKind::PomdpEnum => {
                c.grid = GridConfig {
                    horizon: 1.0,
                    macro_steps: 2,
                    inner_refine: 16,
                };
                c.x0 = vec![fixtures::POMDP_X0];
                c.actions.levels = vec![2];
                c.observation.history = 2;
                c.sampling.paths = 100_000;
            }
            ExperimentKind::TeamEnum => {
                c.grid = GridConfig {
                    horizon: 1.0,
                    macro_steps: 2,
                    inner_refine: 8,
                };
                c.x0 = vec![fixtures::POMDP_X0];
                c.actions.levels = vec![2];
                c.observation.history = 2;
            }
            ExperimentKind::IndependenceAudit => {
                c.grid = GridConfig {
                    horizon: 1.0,
                    macro_steps: 2,
                    inner_refine: 8,
                };
                c.observation.history = 2;
            }
            ExperimentKind::EstimatorEquivalence | ExperimentKind::DpExact => {}
        }
        c
    }

    /// Merges a TOML document over the defaults of `kind`. The seed comes from
    /// `seed_override` when given, else from the document; one of them must
    /// provide it.
    pub fn from_toml(kind: ExperimentKind, text: Option<&str>, seed_override: Option<u64>) -> Result<Self> {
        let user: toml::Table = match text {
            Some(t) => t.parse()?,
            None => toml::Table::new(),
        };
        if let Some(k) = user.get("kind") {
            let named = k
                .as_str()
                .ok_or_else(|| Error::Config("kind must be a string".into()))?;
            if ExperimentKind::parse(named)? != kind {
                return Err(Error::Config(format!("config is for '{named}', not '{kind}'")));
            }
        }
        let seed = match (seed_override, user.get("seed")) {
            (Some(s), _) => s,
            (None, Some(v)) => v
                .as_integer()
                .and_then(|i| u64::try_from(i).ok())
                .ok_or_else(|| Error::Config("seed must be a non-negative integer".into()))?,
            (None, None) => {
                return Err(Error::Config(
                    "no seed given: pass --seed or set `seed` in the config".into(),
                ))
            }
        };
        let defaults = Self::defaults(kind, 0);
        let mut base = match toml::Value::try_from(&defaults) {
            Ok(toml::Value::Table(t)) => t,
            Ok(_) => unreachable!("config serializes to a table"),
            Err(e) => return Err(Error::Config(e.to_string())),
        };
        let mut user = user;
        user.remove("seed");
        merge(&mut base, user);
        let mut config: Self = toml::Value::Table(base).try_into()?;
        config.seed = seed;
        config.check()?;
        Ok(config)
    }

    pub fn from_file(kind: ExperimentKind, path: &Path, seed_override: Option<u64>) -> Result<Self> {
        Self::from_toml(kind, Some(&std::fs::read_to_string(path)?), seed_override)
    }

    /// Structural checks that do not need a run.
    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if fixtures::fully_observed(&self.fixture).is_none() {
            return bad(format!(
                "unknown fixture '{}', known: {:?}",
                self.fixture,
                fixtures::FULLY_OBSERVED
            ));
        }
        let min_paths = match self.kind {
            ExperimentKind::Validate | ExperimentKind::DpExact => 0,
            ExperimentKind::IndependenceAudit => MIN_AUDIT_PATHS,
            _ => MIN_PATHS,
        };
        if self.sampling.paths < min_paths {
            return bad(format!(
                "{} needs at least {min_paths} paths, got {}",
                self.kind, self.sampling.paths
            ));
        }
        if self.sampling.kernel_samples < self.sampling.kernel_min_samples {
            return bad(format!(
                "kernel_samples {} is below kernel_min_samples {}",
                self.sampling.kernel_samples, self.sampling.kernel_min_samples
            ));
        }
        if self.sampling.replicates < 2 && matches!(self.kind, ExperimentKind::HSweep) {
            return bad("h_sweep needs at least 2 replicates for a standard error".into());
        }
        if self.sweep.macro_steps.len() != self.sweep.cells.len() {
            return bad("sweep.macro_steps and sweep.cells differ in length".into());
        }
        if let Some(&n) = self
            .sweep
            .macro_steps
            .iter()
            .find(|&&n| n == 0 || self.sweep.total_inner_steps % n != 0)
        {
            return bad(format!(
                "sweep entry {n} does not divide {} inner steps",
                self.sweep.total_inner_steps
            ));
        }
        if self.dynkin.refinements.is_empty() || self.dynkin.refinements.contains(&0) {
            return bad("dynkin.refinements must be non-empty and positive".into());
        }
        if self.tolerance.se_multiplier <= 0.0 || self.tolerance.exact < 0.0 {
            return bad("tolerances must be positive".into());
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Recursive table merge; `over` wins on every leaf it sets.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        for kind in ExperimentKind::ALL {
            let c = ExperimentConfig::defaults(kind, 11);
            c.check().unwrap();
            let text = c.to_toml().unwrap();
            assert_eq!(ExperimentConfig::from_toml(kind, Some(&text), None).unwrap(), c);
        }
    }

    #[test]
    fn user_values_override_nested_defaults() {
        let text = "seed = 3\n[grid]\nmacro_steps = 2\n[tolerance]\nse_multiplier = 2.5\n";
        let c = ExperimentConfig::from_toml(ExperimentKind::Martingale, Some(text), None).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.grid.macro_steps, 2);
        assert_eq!(c.grid.horizon, 1.0);
        assert_eq!(c.tolerance.se_multiplier, 2.5);
        assert_eq!(c.tolerance.exact, 1e-12);
    }

    #[test]
    fn seed_is_required() {
        assert!(matches!(
            ExperimentConfig::from_toml(ExperimentKind::Validate, None, None),
            Err(Error::Config(_))
        ));
        let c = ExperimentConfig::from_toml(ExperimentKind::Validate, Some("seed = 1"), Some(u64::MAX)).unwrap();
        assert_eq!(c.seed, u64::MAX);
    }

    #[test]
    fn rejects_unknown_fields_fixtures_and_kinds() {
        let k = ExperimentKind::Validate;
        assert!(ExperimentConfig::from_toml(k, Some("seed = 1\nbogus = 2"), None).is_err());
        assert!(ExperimentConfig::from_toml(k, Some("seed = 1\nfixture = \"nope\""), None).is_err());
        assert!(ExperimentConfig::from_toml(k, Some("seed = 1\nkind = \"dynkin\""), None).is_err());
        assert!(ExperimentKind::parse("nope").is_err());
    }

    #[test]
    fn audit_needs_enough_paths() {
        let text = "seed = 1\n[sampling]\npaths = 500";
        assert!(ExperimentConfig::from_toml(ExperimentKind::IndependenceAudit, Some(text), None).is_err());
    }
}
