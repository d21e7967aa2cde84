//! Acceptance run: every experiment at its default configuration, one
//! PASS/FAIL line per criterion, then a replay of every record on a
//! different worker count. Exits non-zero if any criterion fails.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use diffctl::harness::{replay_file, run_experiment, ExperimentConfig, ExperimentKind, ResultRecord};

const SEED: u64 = 1;
const WORKERS: usize = 8;
const REPLAY_WORKERS: usize = 1;

const CRITERIA: [(&str, ExperimentKind, &str); 11] = [
    ("A1", ExperimentKind::Martingale, "likelihood weights have mean 1"),
    (
        "A2",
        ExperimentKind::EstimatorEquivalence,
        "direct and reweighted costs agree",
    ),
    (
        "A3",
        ExperimentKind::LiftConsistency,
        "lifted policy cost matches the discrete value",
    ),
    ("A4", ExperimentKind::HSweep, "value gaps shrink under h-refinement"),
    (
        "A5",
        ExperimentKind::DpExact,
        "backward induction equals exhaustive search",
    ),
    (
        "A6",
        ExperimentKind::L1Continuity,
        "weights are continuous in the policy",
    ),
    (
        "A7",
        ExperimentKind::SecondMoment,
        "weight second moments stay under the cap",
    ),
    (
        "A8",
        ExperimentKind::Dynkin,
        "Dynkin residual is small and does not grow",
    ),
    (
        "A9",
        ExperimentKind::PomdpEnum,
        "informative channel beats open loop, silent channel does not",
    ),
    (
        "A10",
        ExperimentKind::TeamEnum,
        "team optimum beats challengers and splits when decoupled",
    ),
    (
        "A11",
        ExperimentKind::IndependenceAudit,
        "no anticipation on shipped fixtures, probe flagged",
    ),
];

fn line(id: &str, passed: bool, what: &str, detail: &str) {
    println!("{id:<4} {} {what} ({detail})", if passed { "PASS" } else { "FAIL" });
}

fn run(kind: ExperimentKind, out: &Path) -> Result<ResultRecord, String> {
    let config = ExperimentConfig::defaults(kind, SEED);
    let record = run_experiment(&config, WORKERS).map_err(|e| e.to_string())?;
    record.append_to(out).map_err(|e| e.to_string())?;
    Ok(record)
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("temporary directory");
    let mut all = true;

    let mut kinds = vec![ExperimentKind::Validate];
    kinds.extend(CRITERIA.iter().map(|c| c.1));
    for (id, kind, what) in std::iter::once((
        "--",
        ExperimentKind::Validate,
        "identity fixture satisfies the assumptions",
    ))
    .chain(CRITERIA)
    {
        match run(kind, dir.path()) {
            Ok(r) => {
                for c in r.outcome.checks.iter().filter(|c| !c.passed) {
                    println!("     failed check {}: {}", c.name, c.detail);
                }
                let detail = format!("{} checks, {:.1}s", r.outcome.checks.len(), r.duration_secs);
                line(id, r.passed, what, &detail);
                all &= r.passed;
            }
            Err(e) => {
                line(id, false, what, &e);
                all = false;
            }
        }
    }

    let start = Instant::now();
    let mut identical = true;
    let mut notes = Vec::new();
    for kind in kinds {
        let path = dir.path().join(format!("{kind}.jsonl"));
        match replay_file(&path, REPLAY_WORKERS, None) {
            Ok(r) => {
                let info = r.replay.expect("replay info");
                if !info.bit_identical {
                    identical = false;
                    notes.push(format!("{kind}: {:?}", info.differences));
                }
            }
            Err(e) => {
                identical = false;
                notes.push(format!("{kind}: {e}"));
            }
        }
    }
    for n in &notes {
        println!("     {n}");
    }
    let detail = format!(
        "{WORKERS} vs {REPLAY_WORKERS} workers, {:.1}s",
        start.elapsed().as_secs_f64()
    );
    line("A12", identical, "every record replays bit-identically", &detail);
    all &= identical;

    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
