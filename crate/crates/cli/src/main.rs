use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use grw_cli::{load_scenario, report_dir, run_scenario, write_artifacts, CliError, Overrides, Verb, EXIT_INPUT};

#[derive(Parser)]
#[command(name = "grw", version, about = "Mean curvature identities and constant-H_k experiments for spacelike graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the identity suites and side-condition checks of a scenario.
    Verify(RunArgs),
    /// Run the solver and uniqueness operations of a scenario.
    Solve(RunArgs),
    /// Evaluate only the warping conditions on the scenario slab.
    Check(RunArgs),
    /// Summarize an output directory written by another verb.
    Report { dir: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    scenario: PathBuf,
    /// Comma-separated grid sizes, overriding the scenario.
    #[arg(long, value_delimiter = ',')]
    grids: Option<Vec<usize>>,
    /// Output directory (default: the scenario `out`, else `out/<name>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// First perturbation seed; later seeds follow consecutively.
    #[arg(long)]
    seed: Option<u64>,
    /// Treat warnings as failures.
    #[arg(long)]
    strict: bool,
}

fn run(verb: Verb, args: &RunArgs) -> Result<i32, CliError> {
    let sc = load_scenario(&args.scenario)?;
    let ov = Overrides { grids: args.grids.clone(), seed: args.seed, strict: args.strict };
    let artifacts = run_scenario(&sc, verb, &ov)?;
    let dir = args
        .out
        .clone()
        .or_else(|| sc.out.clone())
        .unwrap_or_else(|| Path::new("out").join(&sc.name));
    write_artifacts(&artifacts, &dir)?;
    for line in &artifacts.log {
        println!("{line}");
    }
    for w in &artifacts.warnings {
        eprintln!("warning: {w}");
    }
    let code = artifacts.exit_code(ov.strict);
    println!("{} files written to {}; exit {code}", artifacts.files.len(), dir.display());
    Ok(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Verify(a) => run(Verb::Verify, a),
        Command::Solve(a) => run(Verb::Solve, a),
        Command::Check(a) => run(Verb::Check, a),
        Command::Report { dir } => report_dir(dir).map(|(code, lines)| {
            for l in lines {
                println!("{l}");
            }
            code
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            let code = if e.is_input_error() { EXIT_INPUT } else { grw_cli::EXIT_FAIL };
            ExitCode::from(code as u8)
        }
    }
}
