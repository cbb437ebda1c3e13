//! CSV emission. All floats are written with 17 significant digits so the
//! files round-trip to the exact binary values; separators are '.' and '\n'.

use std::fs;
use std::io::Write;
use std::path::Path;

use fuselab_core::fusion::WeightSet;
use fuselab_core::simulator::MseSeries;
use fuselab_core::Result;

use crate::bench::TimingReport;
use fuselab_core::steady_state::SteadyStateReport;

/// 17-significant-digit scientific notation, round-trippable to f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn create(path: &Path) -> Result<fs::File> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    Ok(fs::File::create(path)?)
}

/// `mse_<method>.csv`: one row per epoch, columns `t` then one MSE column per
/// state component.
pub fn write_mse_csv(dir: &Path, series: &MseSeries) -> Result<Vec<std::path::PathBuf>> {
    let mut written = Vec::new();
    for track in &series.tracks {
        let path = dir.join(format!("mse_{}.csv", track.method));
        let mut file = create(&path)?;
        let dim = track.mse.first().map_or(0, |row| row.len());
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((0..dim).map(|c| format!("mse_{c}")))
            .collect();
        writeln!(file, "{}", header.join(","))?;
        for (t, row) in series.times.iter().zip(&track.mse) {
            let mut cols = vec![fmt_f64(*t)];
            cols.extend(row.iter().map(|v| fmt_f64(*v)));
            writeln!(file, "{}", cols.join(","))?;
        }
        written.push(path);
    }
    Ok(written)
}

/// `weights_<method>.csv`: one row per epoch, columns `t` then the row-major
/// entries of every sensor's weight matrix (`w<sensor>_<row><col>`).
pub fn write_weights_csv(
    dir: &Path,
    method: &str,
    times: &[f64],
    weightsets: &[WeightSet],
) -> Result<std::path::PathBuf> {
    let path = dir.join(format!("weights_{method}.csv"));
    let mut file = create(&path)?;
    let first = weightsets.first().expect("at least one epoch");
    let dim = first.dim();
    let mut header = vec!["t".to_string()];
    for s in 1..=first.n_sensors() {
        for r in 0..dim {
            for c in 0..dim {
                header.push(format!("w{s}_{r}{c}"));
            }
        }
    }
    writeln!(file, "{}", header.join(","))?;
    for (t, ws) in times.iter().zip(weightsets) {
        let mut cols = vec![fmt_f64(*t)];
        for w in &ws.weights {
            for r in 0..dim {
                for c in 0..dim {
                    cols.push(fmt_f64(w[(r, c)]));
                }
            }
        }
        writeln!(file, "{}", cols.join(","))?;
    }
    Ok(path)
}

/// `timing.csv`: the pinned columns `N,method,median_seconds,ode_props`,
/// where `median_seconds` is the fusion-specific time.
pub fn write_timing_csv(dir: &Path, reports: &[TimingReport]) -> Result<std::path::PathBuf> {
    let path = dir.join("timing.csv");
    let mut file = create(&path)?;
    writeln!(file, "N,method,median_seconds,ode_props")?;
    for r in reports {
        writeln!(
            file,
            "{},{},{},{}",
            r.n_sensors,
            r.method,
            fmt_f64(r.median_fusion_seconds),
            r.ode_propagations
        )?;
    }
    Ok(path)
}

/// `steady_state.csv`: a single data row with every report field.
pub fn write_steady_state_csv(dir: &Path, report: &SteadyStateReport, excess: f64) -> Result<std::path::PathBuf> {
    let path = dir.join("steady_state.csv");
    let mut file = create(&path)?;
    writeln!(file, "q,r1,r2,P11,P22,P12,C1,C2,W1,W2,P_FF,P_CI,ci_relative_excess")?;
    let row = [
        report.q, report.r1, report.r2, report.p11, report.p22, report.p12, report.c1,
        report.c2, report.w1, report.w2, report.p_ff, report.p_ci, excess,
    ];
    let cols: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
    writeln!(file, "{}", cols.join(","))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formatted_floats_round_trip() {
        for x in [0.1, -3.25e-17, 0.38961038961038963, 1e300, 7.0] {
            let parsed: f64 = fmt_f64(x).parse().unwrap();
            assert_eq!(parsed.to_bits(), x.to_bits(), "{x} -> {}", fmt_f64(x));
        }
    }
}
