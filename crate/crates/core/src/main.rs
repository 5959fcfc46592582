use clap::Parser;
use hhlab::config::parse_config;
use hhlab::pipelines::{run_experiment, write_outputs, Pipeline};
use std::error::Error;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Numerical laboratory for a boundary-deformed coupled Hitchin system on
/// the cylinder. Runs one named pipeline, prints its report, and writes the
/// CSV table, config snapshot, and artifacts to the output directory.
///
/// Exit status: 0 when every check row passes, 1 when any row fails,
/// 2 when the run itself errors out.
#[derive(Parser)]
#[command(name = "hhlab", version)]
struct Cli {
    /// Pipeline to run: solve-abelian, continue, constants, lax-check,
    /// invariants, parity, embed-check, or full-suite.
    pipeline: String,

    /// Run configuration file (key=value lines; empty file = defaults).
    #[arg(long)]
    config: PathBuf,

    /// Output directory; overrides output.dir from the config.
    #[arg(long)]
    out: Option<PathBuf>,

    /// RNG seed; overrides run.seed from the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("hhlab: error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Result<bool, Box<dyn Error>> {
    let pipeline: Pipeline = cli.pipeline.parse()?;
    let text = fs::read_to_string(&cli.config)
        .map_err(|e| format!("cannot read {}: {e}", cli.config.display()))?;
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.display().to_string();
    }

    let output = run_experiment(&cfg, pipeline)?;
    let written = write_outputs(&output, &cfg, Path::new(&cfg.out_dir))?;

    print!("{}", output.report);
    for path in &written {
        eprintln!("wrote {}", path.display());
    }
    Ok(output.all_pass())
}
