use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use diffctl::harness::{replay_file, run_experiment, ExperimentConfig, ExperimentKind, ResultRecord};

#[derive(Parser)]
#[command(
    name = "diffctl",
    version,
    about = "Run and replay controlled-diffusion approximation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML file merged over the defaults of the experiment.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Directory receiving `<kind>.jsonl` and `<kind>.csv`.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Fail when the record carries any warning.
    #[arg(long)]
    strict: bool,
    /// Print the merged config and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Subcommand)]
enum Command {
    Validate(Common),
    Martingale(Common),
    SecondMoment(Common),
    L1Continuity(Common),
    EstimatorEquivalence(Common),
    Dynkin(Common),
    HSweep(Common),
    LiftConsistency(Common),
    DpExact(Common),
    PomdpEnum(Common),
    TeamEnum(Common),
    IndependenceAudit(Common),
    /// Re-run the last record of a `.jsonl` file and compare bit for bit.
    Replay {
        record: PathBuf,
        /// Run with a different seed; the result is a comparison, not a replay.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long)]
        strict: bool,
    },
}

fn report(record: &ResultRecord, out: &std::path::Path, strict: bool) -> diffctl::Result<ExitCode> {
    let (json, csv) = record.append_to(out)?;
    for c in &record.outcome.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    for w in &record.outcome.warnings {
        println!("WARN {w}");
    }
    if let Some(r) = &record.replay {
        if !r.comparison_only {
            println!(
                "{} replay of {}",
                if r.bit_identical { "PASS" } else { "FAIL" },
                r.source
            );
            for d in &r.differences {
                println!("  differs: {d}");
            }
        }
    }
    println!(
        "{} in {:.2}s -> {} {}",
        record.kind,
        record.duration_secs,
        json.display(),
        csv.display()
    );
    let failed = !record.passed || (strict && !record.outcome.warnings.is_empty());
    Ok(if failed { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

fn run(kind: ExperimentKind, c: Common) -> diffctl::Result<ExitCode> {
    let config = match &c.config {
        Some(p) => ExperimentConfig::from_file(kind, p, c.seed)?,
        None => ExperimentConfig::from_toml(kind, None, c.seed)?,
    };
    eprintln!("{}", config.to_toml()?);
    if c.print_config {
        return Ok(ExitCode::SUCCESS);
    }
    let record = run_experiment(&config, c.workers)?;
    report(&record, &c.out, c.strict)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate(c) => run(ExperimentKind::Validate, c),
        Command::Martingale(c) => run(ExperimentKind::Martingale, c),
        Command::SecondMoment(c) => run(ExperimentKind::SecondMoment, c),
        Command::L1Continuity(c) => run(ExperimentKind::L1Continuity, c),
        Command::EstimatorEquivalence(c) => run(ExperimentKind::EstimatorEquivalence, c),
        Command::Dynkin(c) => run(ExperimentKind::Dynkin, c),
        Command::HSweep(c) => run(ExperimentKind::HSweep, c),
        Command::LiftConsistency(c) => run(ExperimentKind::LiftConsistency, c),
        Command::DpExact(c) => run(ExperimentKind::DpExact, c),
        Command::PomdpEnum(c) => run(ExperimentKind::PomdpEnum, c),
        Command::TeamEnum(c) => run(ExperimentKind::TeamEnum, c),
        Command::IndependenceAudit(c) => run(ExperimentKind::IndependenceAudit, c),
        Command::Replay {
            record,
            seed,
            workers,
            out,
            strict,
        } => replay_file(&record, workers, seed).and_then(|r| report(&r, &out, strict)),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(2)
    })
}
