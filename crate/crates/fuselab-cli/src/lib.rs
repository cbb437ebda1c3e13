//! Library surface of the `fuselab` command-line tool, exposed so the
//! integration suite can drive the command implementations directly.

pub mod bench;
pub mod commands;
pub mod csv_out;
pub mod pipeline;

use std::path::Path;

use fuselab_core::{Error, Result, Scenario};

/// Bundled default scenario for `simulate`/`bench` when no path is given.
pub const OSCILLATOR_SCENARIO: &str = include_str!("../scenarios/oscillator.toml");
/// Bundled scalar two-sensor scenario.
pub const SCALAR_TWO_SENSOR_SCENARIO: &str = include_str!("../scenarios/scalar_two_sensor.toml");

/// Scenario-level command-line overrides.
#[derive(Debug, Default, Clone, Copy)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mc_runs: Option<usize>,
    pub dt: Option<f64>,
}

/// Load a scenario file (or the bundled oscillator), apply overrides, and
/// re-validate.
pub fn load_scenario_or_default(path: Option<&Path>, overrides: Overrides) -> Result<Scenario> {
    let mut scenario = match path {
        Some(p) => fuselab_core::load_scenario(p)?,
        None => fuselab_core::parse_scenario(OSCILLATOR_SCENARIO)?,
    };
    if let Some(seed) = overrides.seed {
        scenario.seed = seed;
    }
    if let Some(mc_runs) = overrides.mc_runs {
        scenario.mc_runs = mc_runs;
    }
    if let Some(dt) = overrides.dt {
        scenario.dt = dt;
    }
    let violations = fuselab_core::validate_scenario(&scenario);
    if violations.is_empty() {
        Ok(scenario)
    } else {
        Err(Error::InvalidScenario(violations))
    }
}

/// Stable exit-code contract: 0 success, 1 validation/domain error,
/// 2 io/parse error, 3 numerical failure.
pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::InvalidScenario(_) | Error::Domain(_) => 1,
        Error::Io(_) | Error::Parse(_) => 2,
        Error::NumericOverflow { .. }
        | Error::SingularInnovation { .. }
        | Error::NotPositiveDefinite { .. }
        | Error::FusionSingular(_) => 3,
    }
}

/// Cap the Monte Carlo worker pool from the `FUSELAB_THREADS` environment
/// variable. Results are bitwise identical for any worker count; the cap
/// only bounds resource usage.
pub fn init_thread_pool() {
    if let Ok(value) = std::env::var("FUSELAB_THREADS") {
        match value.parse::<usize>() {
            Ok(threads) if threads > 0 => {
                // fails harmlessly if a pool already exists
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
            _ => eprintln!("warning: ignoring invalid FUSELAB_THREADS='{value}'"),
        }
    }
}
