//! Experiment dispatch for the command-line driver.

pub mod config;
mod experiments;

use std::time::Instant;

pub use config::{load_config, parse_config, ConfigError, Experiment, ExperimentConfig, Params};

use crate::report::RunReport;
use crate::Result;

/// Process exit codes.
pub mod exit {
    pub const PASS: i32 = 0;
    pub const CRITERION_FAILED: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const IO: i32 = 3;
}

/// Runs one experiment. Library errors propagate; failed checks are recorded in the report.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    let start = Instant::now();
    let mut rep = RunReport::new(cfg.experiment.name(), cfg.seed, cfg.echo());
    let seed = cfg.seed;
    match &cfg.params {
        Params::Flow(p) => experiments::flow(p, seed, &mut rep)?,
        Params::Radial(p) => experiments::radial(p, &mut rep)?,
        Params::QuantizeCheck(p) => experiments::quantize_check(p, &mut rep)?,
        Params::Commutant(p) => experiments::commutant(p, seed, &mut rep)?,
        Params::Helmholtz(p) => experiments::helmholtz(p, &mut rep)?,
        Params::Threshold(p) => experiments::threshold(p, &mut rep)?,
        Params::Pairing(p) => experiments::pairing(p, seed, &mut rep)?,
        Params::Scatter1d(p) => experiments::scatter1d(p, &mut rep)?,
        Params::Radon(p) => experiments::radon(p, seed, &mut rep)?,
        Params::VarOrder(p) => experiments::var_order(p, &mut rep)?,
    }
    rep.wall_time = start.elapsed().as_secs_f64();
    Ok(rep)
}
