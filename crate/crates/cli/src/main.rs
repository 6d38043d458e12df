use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stoch_consensus_cli::scenario::GainSpec;
use stoch_consensus_cli::{
    execute_with_workers, load_scenario, write_artifacts, CliError, Overrides, Stage,
};

#[derive(Parser)]
#[command(
    name = "stoch-consensus",
    version,
    about = "Certify and simulate consensus under multiplicative measurement noise"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute gain bounds and the certificate without simulating.
    Certify(Opts),
    /// Certify and simulate; writes sample paths but runs no checks.
    Simulate(Opts),
    /// Full pipeline: certify, simulate, analyze, check.
    Run(Opts),
    /// Validate the scenario file only.
    Validate { scenario: PathBuf },
}

#[derive(Args)]
struct Opts {
    scenario: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    /// A number or "auto".
    #[arg(long)]
    gain: Option<GainSpec>,
    /// Simulation threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Also write every sample path to paths.csv.
    #[arg(long)]
    dump_paths: bool,
}

fn run(stage: Stage, o: Opts) -> Result<i32, CliError> {
    let overrides = Overrides {
        seed: o.seed,
        paths: o.paths,
        dt: o.dt,
        gain: o.gain,
    };
    let scenario = load_scenario(&o.scenario)?.with_overrides(&overrides)?;
    let outcome = execute_with_workers(&scenario, stage, o.workers)?;
    write_artifacts(
        &outcome,
        &o.out_dir,
        o.dump_paths || stage == Stage::Simulate,
    )?;

    let cert = &outcome.certificate;
    if let Some(msg) = &cert.refusal {
        eprintln!("refused: {msg}");
    } else if let Some(a) = cert.gain {
        println!("gain a = {a}");
    }
    if let Some(r) = &outcome.report {
        if let Some(e) = &r.error {
            eprintln!("error: {e}");
        }
        for c in &r.checks {
            println!(
                "{} {}{}",
                if c.pass { "PASS" } else { "FAIL" },
                c.kind,
                if c.expect { "" } else { " (expected to fail)" }
            );
        }
    }
    println!("artifacts in {}", o.out_dir.display());
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("STOCH_CONSENSUS_LOG", "warn"))
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Certify(o) => run(Stage::Certify, o),
        Command::Simulate(o) => run(Stage::Simulate, o),
        Command::Run(o) => run(Stage::Run, o),
        Command::Validate { scenario } => load_scenario(&scenario).map(|s| {
            println!(
                "{}: valid ({} nodes, {})",
                s.spec.name,
                s.n_nodes(),
                if s.is_switching() {
                    "switching"
                } else {
                    "fixed"
                }
            );
            0
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
