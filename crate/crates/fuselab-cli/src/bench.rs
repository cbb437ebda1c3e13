//! Wall-time comparison of the two fusion rules.
//!
//! The local-filter pass is common to both rules, so the comparand is the
//! fusion-specific work: cross-covariance bank plus per-epoch weight solve
//! and weighted sum for the optimal rule, per-epoch weight computation and
//! weighted sum for covariance intersection. Total pipeline time (local pass
//! included) is reported alongside. Timing runs are strictly serial so the
//! medians stay comparable.

use std::time::Instant;

use fuselab_core::cross_covariance::run_cross_bank;
use fuselab_core::fusion::{ci_weights, ff_weights, fuse};
use fuselab_core::local_filter::{run_local_filter, LocalFilterRun};
use fuselab_core::model::Scenario;
use fuselab_core::simulator::{generate_measurements, simulate_truth};
use fuselab_core::Result;
use nalgebra::{DMatrix, DVector};

use crate::pipeline::replicate_sensors;

#[derive(Debug, Clone)]
pub struct TimingReport {
    /// "ff" or "ci".
    pub method: &'static str,
    pub n_sensors: usize,
    pub epochs: usize,
    /// Median wall time of the fusion-specific work, seconds.
    pub median_fusion_seconds: f64,
    /// Median wall time of the full pass (local filters included), seconds.
    pub median_total_seconds: f64,
    /// Lyapunov interval propagations spent on fusion-specific work
    /// (cross-covariance bank; zero for covariance intersection).
    pub ode_propagations: u64,
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

struct PassTimes {
    locals_seconds: f64,
    ff_seconds: f64,
    ci_seconds: f64,
    ff_ode_propagations: u64,
}

fn timed_pass(scenario: &Scenario, measurements: &[Vec<DVector<f64>>]) -> Result<PassTimes> {
    let n_sensors = scenario.n_sensors();
    let n_epochs = scenario.epochs.len();
    let dim = scenario.dim();

    let start = Instant::now();
    let locals: Vec<LocalFilterRun> = (0..n_sensors)
        .map(|s| run_local_filter(scenario, s, &measurements[s]))
        .collect::<Result<_>>()?;
    let locals_seconds = start.elapsed().as_secs_f64();

    let means: Vec<Vec<DVector<f64>>> = (0..n_epochs)
        .map(|k| locals.iter().map(|r| r.steps[k].posterior.mean.clone()).collect())
        .collect();
    let covs: Vec<Vec<DMatrix<f64>>> = (0..n_epochs)
        .map(|k| locals.iter().map(|r| r.steps[k].posterior.cov.clone()).collect())
        .collect();

    let start = Instant::now();
    let gains: Vec<Vec<DMatrix<f64>>> = (0..n_epochs)
        .map(|k| locals.iter().map(|r| r.steps[k].gain.clone()).collect())
        .collect();
    let bank = run_cross_bank(scenario, &gains)?;
    for k in 0..n_epochs {
        let joint = bank.banks[k].assemble_joint(&covs[k]);
        let ws = ff_weights(&joint, dim, n_sensors)?;
        std::hint::black_box(fuse(&ws, &means[k]));
    }
    let ff_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    for k in 0..n_epochs {
        let ws = ci_weights(&covs[k])?;
        std::hint::black_box(fuse(&ws, &means[k]));
    }
    let ci_seconds = start.elapsed().as_secs_f64();

    Ok(PassTimes {
        locals_seconds,
        ff_seconds,
        ci_seconds,
        ff_ode_propagations: bank.ode_propagations,
    })
}

/// Median fusion timings over `repeats` passes for every requested sensor
/// count. One measurement realization (run 0) is shared by all passes.
pub fn bench_fusion(
    scenario: &Scenario,
    sensor_counts: &[usize],
    repeats: usize,
) -> Result<Vec<TimingReport>> {
    let repeats = repeats.max(1);
    let mut reports = Vec::new();
    for &count in sensor_counts {
        let expanded = replicate_sensors(scenario, count);
        let truth = simulate_truth(&expanded, 0)?;
        let measurements = generate_measurements(&truth, &expanded.sensors, 0);

        let mut locals_s = Vec::with_capacity(repeats);
        let mut ff_s = Vec::with_capacity(repeats);
        let mut ci_s = Vec::with_capacity(repeats);
        let mut ff_props = 0;
        for _ in 0..repeats {
            let pass = timed_pass(&expanded, &measurements)?;
            locals_s.push(pass.locals_seconds);
            ff_s.push(pass.ff_seconds);
            ci_s.push(pass.ci_seconds);
            ff_props = pass.ff_ode_propagations;
        }

        let locals_median = median(locals_s);
        reports.push(TimingReport {
            method: "ff",
            n_sensors: count,
            epochs: expanded.epochs.len(),
            median_fusion_seconds: median(ff_s.clone()),
            median_total_seconds: locals_median + median(ff_s),
            ode_propagations: ff_props,
        });
        reports.push(TimingReport {
            method: "ci",
            n_sensors: count,
            epochs: expanded.epochs.len(),
            median_fusion_seconds: median(ci_s.clone()),
            median_total_seconds: locals_median + median(ci_s),
            ode_propagations: 0,
        });
    }
    Ok(reports)
}
