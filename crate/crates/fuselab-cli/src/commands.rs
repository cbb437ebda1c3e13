//! Subcommand implementations.

use std::path::Path;

use fuselab_core::simulator::{monte_carlo_mse, Method};
use fuselab_core::steady_state::{ci_relative_excess, steady_state};
use fuselab_core::{Error, Result, Scenario};

use crate::bench::bench_fusion;
use crate::csv_out;
use crate::pipeline::CovariancePipeline;

/// Reference values the `--check` flag pins for (q, r1, r2) = (1, 5, 2).
const CHECK_P_FF: f64 = 0.3896;
const CHECK_P_CI: f64 = 0.3925;
const CHECK_TOL: f64 = 5e-5;

pub fn cmd_steady_state(
    q: f64,
    r1: f64,
    r2: f64,
    check: bool,
    out: Option<&Path>,
) -> Result<()> {
    let report = steady_state(q, r1, r2)?;
    let excess = ci_relative_excess(&report);

    println!("steady-state report (q = {q}, r1 = {r1}, r2 = {r2})");
    println!(
        "  local variances   P11 = {:.6}  P22 = {:.6}  P12 = {:.6}",
        report.p11, report.p22, report.p12
    );
    println!(
        "  optimal weights   C1  = {:.6}  C2  = {:.6}",
        report.c1, report.c2
    );
    println!(
        "  intersection      W1  = {:.6}  W2  = {:.6}",
        report.w1, report.w2
    );
    println!(
        "  fused variance    FF  = {:.6}  CI  = {:.6}",
        report.p_ff, report.p_ci
    );
    println!("  CI excess         {:.4}%", 100.0 * excess);

    if let Some(dir) = out {
        let path = csv_out::write_steady_state_csv(dir, &report, excess)?;
        println!("wrote {}", path.display());
    }

    if check {
        if (q, r1, r2) != (1.0, 5.0, 2.0) {
            return Err(Error::Domain(
                "--check requires --q 1 --r1 5 --r2 2".into(),
            ));
        }
        let ff_err = (report.p_ff - CHECK_P_FF).abs();
        let ci_err = (report.p_ci - CHECK_P_CI).abs();
        if ff_err > CHECK_TOL || ci_err > CHECK_TOL {
            return Err(Error::Domain(format!(
                "check failed: P_FF off by {ff_err:.2e}, P_CI off by {ci_err:.2e} (tolerance {CHECK_TOL:.0e})"
            )));
        }
        println!("check passed: P_FF = {CHECK_P_FF}, P_CI = {CHECK_P_CI} to 4 decimals");
    }
    Ok(())
}

pub fn cmd_simulate(scenario: &Scenario, methods: &[Method], out: &Path) -> Result<()> {
    let series = monte_carlo_mse(scenario, methods)?;
    let written = csv_out::write_mse_csv(out, &series)?;
    for path in &written {
        println!("wrote {}", path.display());
    }

    let wants = |m: Method| methods.contains(&m);
    if wants(Method::Ff) || wants(Method::Ci) {
        let pipeline = CovariancePipeline::run(scenario)?;
        if wants(Method::Ff) {
            let ws = pipeline.ff_weightsets(scenario)?;
            let path = csv_out::write_weights_csv(out, "ff", &scenario.epochs, &ws)?;
            println!("wrote {}", path.display());
        }
        if wants(Method::Ci) {
            let ws = pipeline.ci_weightsets(scenario)?;
            let path = csv_out::write_weights_csv(out, "ci", &scenario.epochs, &ws)?;
            println!("wrote {}", path.display());
        }
    }

    let last = scenario.epochs.len() - 1;
    println!(
        "final-epoch MSE over {} runs at t = {}:",
        series.runs, scenario.epochs[last]
    );
    for track in &series.tracks {
        let cols: Vec<String> = track.mse[last].iter().map(|v| format!("{v:.6}")).collect();
        println!("  {:<10} {}", track.method.to_string(), cols.join("  "));
    }
    Ok(())
}

pub fn cmd_bench(
    scenario: &Scenario,
    sensor_counts: &[usize],
    repeats: usize,
    out: &Path,
) -> Result<()> {
    if sensor_counts.is_empty() {
        return Err(Error::Domain("at least one sensor count is required".into()));
    }
    if sensor_counts.contains(&0) {
        return Err(Error::Domain("sensor counts must be positive".into()));
    }
    let reports = bench_fusion(scenario, sensor_counts, repeats)?;
    let path = csv_out::write_timing_csv(out, &reports)?;
    println!("wrote {}", path.display());

    println!(
        "{:>4} {:>6} {:>16} {:>16} {:>10}",
        "N", "method", "fusion_seconds", "total_seconds", "ode_props"
    );
    for r in &reports {
        println!(
            "{:>4} {:>6} {:>16.6} {:>16.6} {:>10}",
            r.n_sensors, r.method, r.median_fusion_seconds, r.median_total_seconds, r.ode_propagations
        );
    }
    Ok(())
}

/// Parse a `--methods` list: `ff`, `ci`, `local` (all sensors), or
/// `local_<k>` for one sensor, comma separated, deduplicated in order.
pub fn parse_methods(list: &str, n_sensors: usize) -> Result<Vec<Method>> {
    let mut out: Vec<Method> = Vec::new();
    let push = |m: Method, out: &mut Vec<Method>| {
        if !out.contains(&m) {
            out.push(m);
        }
    };
    for token in list.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        match token.to_ascii_lowercase().as_str() {
            "ff" => push(Method::Ff, &mut out),
            "ci" => push(Method::Ci, &mut out),
            "local" => {
                for label in 1..=n_sensors {
                    push(Method::Local(label), &mut out);
                }
            }
            other => {
                if let Some(num) = other.strip_prefix("local_") {
                    let label: usize = num
                        .parse()
                        .map_err(|_| Error::Domain(format!("unknown method '{token}'")))?;
                    if label == 0 || label > n_sensors {
                        return Err(Error::Domain(format!(
                            "local_{label} does not exist in a {n_sensors}-sensor scenario"
                        )));
                    }
                    push(Method::Local(label), &mut out);
                } else {
                    return Err(Error::Domain(format!("unknown method '{token}'")));
                }
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Domain("no methods requested".into()));
    }
    Ok(out)
}

/// Parse a comma-separated list of sensor counts.
pub fn parse_counts(list: &str) -> Result<Vec<usize>> {
    list.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| Error::Domain(format!("invalid sensor count '{t}'")))
        })
        .collect()
}
