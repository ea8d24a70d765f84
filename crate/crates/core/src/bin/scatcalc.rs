use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use scatcalc::report::Format;
use scatcalc::runner::{exit, load_config, run_experiment, ConfigError, Experiment};

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

/// Run one numerical experiment and write a JSON summary plus tables.
#[derive(Parser)]
#[command(name = "scatcalc", version)]
struct Cli {
    /// flow, radial, quantize-check, commutant, helmholtz, threshold, pairing, scatter1d, radon, var-order
    experiment: String,
    /// Strict JSON configuration; `{}` takes every default.
    #[arg(long)]
    config: PathBuf,
    /// Output directory [default: output_dir from the config, else out/<experiment>]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "csv")]
    format: OutputFormat,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() { exit::CONFIG } else { exit::PASS };
            return ExitCode::from(code as u8);
        }
    };
    ExitCode::from(run(cli) as u8)
}

fn run(cli: Cli) -> i32 {
    let experiment: Experiment = match cli.experiment.parse() {
        Ok(e) => e,
        Err(msg) => {
            eprintln!("error: {msg}");
            return exit::CONFIG;
        }
    };
    let mut cfg = match load_config(&cli.config, experiment) {
        Ok(c) => c,
        Err(ConfigError::Io(msg)) => {
            eprintln!("error: {msg}");
            return exit::IO;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return exit::CONFIG;
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let dir = cli.out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out").join(experiment.name()));
    let format = match cli.format {
        OutputFormat::Json => Format::Json,
        OutputFormat::Csv => Format::Csv,
    };

    let report = match run_experiment(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {experiment} failed: {e}");
            return exit::CRITERION_FAILED;
        }
    };
    if let Err(e) = report.emit(&dir, format) {
        eprintln!("error: cannot write to {}: {e}", dir.display());
        return exit::IO;
    }
    for c in &report.checks {
        eprintln!("[{}] criterion {} {}: {}", c.status.as_str(), c.criterion, c.name, c.detail);
    }
    eprintln!("{experiment}: wrote {} in {:.2}s", dir.display(), report.wall_time);
    if report.all_pass() {
        exit::PASS
    } else {
        exit::CRITERION_FAILED
    }
}
