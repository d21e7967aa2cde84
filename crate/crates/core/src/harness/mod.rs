//! Experiment orchestration: configs in, append-only records out. Each run
//! gets its own worker pool; every estimator reduces in path-index order, so
//! a record does not depend on the worker count.

mod config;
mod experiments;
mod record;

use std::path::Path;
use std::time::Instant;

pub use config::{
    ActionConfig, ContinuityConfig, DynkinConfig, EnumerationConfig, ExperimentConfig, ExperimentKind, GridConfig,
    MomentConfig, ObservationConfig, SamplingConfig, StateConfig, SweepConfig, ToleranceConfig, MIN_AUDIT_PATHS,
    MIN_PATHS,
};
pub use record::{read_records, Check, NamedEstimate, NamedValue, Outcome, ReplayInfo, ResultRecord, VERSION};

use crate::error::{Error, Result};

/// Runs one experiment on a pool of `workers` threads.
pub fn run_experiment(config: &ExperimentConfig, workers: usize) -> Result<ResultRecord> {
    let wrap = |e: Error| Error::Experiment {
        kind: config.kind.name().into(),
        source: Box::new(e),
    };
    config.check().map_err(wrap)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let start = Instant::now();
    let outcome = pool.install(|| experiments::run(config)).map_err(wrap)?;
    Ok(ResultRecord {
        kind: config.kind,
        version: VERSION.into(),
        workers: workers.max(1),
        config: config.clone(),
        passed: outcome.passed(),
        outcome,
        duration_secs: start.elapsed().as_secs_f64(),
        replay: None,
    })
}

/// Re-runs a record from its echoed config and compares bit for bit. With
/// a different `seed` the run is marked as a comparison and not checked.
pub fn replay(source: &ResultRecord, source_name: &str, workers: usize, seed: Option<u64>) -> Result<ResultRecord> {
    let mut config = source.config.clone();
    let comparison_only = seed.is_some_and(|s| s != config.seed);
    if let Some(s) = seed {
        config.seed = s;
    }
    let mut fresh = run_experiment(&config, workers)?;
    let differences = if comparison_only {
        Vec::new()
    } else {
        source.outcome.differences(&fresh.outcome)
    };
    let bit_identical = !comparison_only && differences.is_empty();
    if source.version != VERSION {
        fresh.outcome.warn(format!(
            "record written by version {}, replayed with {VERSION}",
            source.version
        ));
    }
    if comparison_only {
        fresh.outcome.warn(format!(
            "seed changed from {} to {}: comparison run, not a replay",
            source.config.seed, config.seed
        ));
    }
    fresh.passed = fresh.outcome.passed() && (comparison_only || bit_identical);
    fresh.replay = Some(ReplayInfo {
        source: source_name.into(),
        source_seed: source.config.seed,
        source_version: source.version.clone(),
        source_workers: source.workers,
        comparison_only,
        bit_identical,
        differences,
    });
    Ok(fresh)
}

/// Replays the last record of a JSON-lines file.
pub fn replay_file(path: &Path, workers: usize, seed: Option<u64>) -> Result<ResultRecord> {
    let records = read_records(path)?;
    let last = records.last().expect("read_records rejects empty files");
    replay(last, &path.display().to_string(), workers, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_identity_fixture_passes() {
        let c = ExperimentConfig::defaults(ExperimentKind::Validate, 1);
        let r = run_experiment(&c, 1).unwrap();
        assert!(r.passed, "{:?}", r.outcome.checks);
    }

    #[test]
    fn zero_drift_martingale_is_exactly_one() {
        let mut c = ExperimentConfig::defaults(ExperimentKind::Martingale, 2);
        c.fixture = "identity_diffusion".into();
        c.sampling.paths = 200;
        let r = run_experiment(&c, 2).unwrap();
        let e = r
            .outcome
            .estimates
            .iter()
            .find(|e| e.name == "identity_diffusion.weight_mean")
            .unwrap();
        assert_eq!((e.mean, e.standard_error), (1.0, 0.0));
    }

    #[test]
    fn replay_is_bit_identical_and_seed_change_is_flagged() {
        let mut c = ExperimentConfig::defaults(ExperimentKind::EstimatorEquivalence, 5);
        c.sampling.paths = 200;
        let r = run_experiment(&c, 3).unwrap();
        let again = replay(&r, "memory", 1, None).unwrap();
        let info = again.replay.as_ref().unwrap();
        assert!(info.bit_identical, "{:?}", info.differences);
        let other = replay(&r, "memory", 1, Some(6)).unwrap();
        let info = other.replay.as_ref().unwrap();
        assert!(info.comparison_only && !info.bit_identical);
        assert!(!other.outcome.warnings.is_empty());
    }

    #[test]
    fn records_append_and_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let c = ExperimentConfig::defaults(ExperimentKind::Validate, 9);
        let r = run_experiment(&c, 1).unwrap();
        r.append_to(dir.path()).unwrap();
        let (json, csv) = r.append_to(dir.path()).unwrap();
        let back = read_records(&json).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1], r);
        let text = std::fs::read_to_string(csv).unwrap();
        assert!(text.starts_with("kind,seed,workers,section,name,mean,standard_error,n,passed\n"));
        assert_eq!(text.lines().filter(|l| l.starts_with("kind,")).count(), 1);
    }
}
