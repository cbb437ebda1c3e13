use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fuselab_cli::commands::{cmd_bench, cmd_simulate, cmd_steady_state, parse_counts, parse_methods};
use fuselab_cli::{exit_code, init_thread_pool, load_scenario_or_default, Overrides};
use fuselab_core::Result;

/// Multisensor fusion-filtering benchmark harness.
#[derive(Parser)]
#[command(name = "fuselab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form steady-state fusion report for the scalar two-sensor system.
    SteadyState {
        /// Process noise intensity (> 0).
        #[arg(long)]
        q: f64,
        /// First sensor noise variance (> 0).
        #[arg(long)]
        r1: f64,
        /// Second sensor noise variance (> 0).
        #[arg(long)]
        r2: f64,
        /// Verify the known fused variances for (q, r1, r2) = (1, 5, 2).
        #[arg(long)]
        check: bool,
        /// Directory for steady_state.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo MSE study; writes mse_<method>.csv and weights_<method>.csv.
    Simulate {
        /// Scenario file (defaults to the bundled oscillator).
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scenario run count.
        #[arg(long = "mc-runs")]
        mc_runs: Option<usize>,
        /// Override the integration step.
        #[arg(long)]
        dt: Option<f64>,
        /// Comma-separated estimators: ff, ci, local, local_<k>.
        #[arg(long, default_value = "ff,ci,local")]
        methods: String,
    },
    /// Fusion timing sweep over sensor counts; writes timing.csv.
    Bench {
        /// Scenario file (defaults to the bundled oscillator).
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the integration step.
        #[arg(long)]
        dt: Option<f64>,
        /// Comma-separated sensor counts to expand the scenario to.
        #[arg(long = "sensor-counts", default_value = "3,6")]
        sensor_counts: String,
        /// Timing repetitions per sensor count (median is reported).
        #[arg(long, default_value_t = 5)]
        repeats: usize,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SteadyState { q, r1, r2, check, out } => {
            cmd_steady_state(q, r1, r2, check, out.as_deref())
        }
        Command::Simulate {
            scenario,
            out,
            seed,
            mc_runs,
            dt,
            methods,
        } => {
            let scenario = load_scenario_or_default(
                scenario.as_deref(),
                Overrides { seed, mc_runs, dt },
            )?;
            let methods = parse_methods(&methods, scenario.n_sensors())?;
            cmd_simulate(&scenario, &methods, &out)
        }
        Command::Bench {
            scenario,
            out,
            seed,
            dt,
            sensor_counts,
            repeats,
        } => {
            let scenario = load_scenario_or_default(
                scenario.as_deref(),
                Overrides {
                    seed,
                    mc_runs: None,
                    dt,
                },
            )?;
            let counts = parse_counts(&sensor_counts)?;
            cmd_bench(&scenario, &counts, repeats, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_thread_pool();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(exit_code(&error) as u8)
        }
    }
}
