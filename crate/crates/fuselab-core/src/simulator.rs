//! Ground-truth trajectory generation, measurement synthesis, and Monte
//! Carlo mean-square-error estimation.
//!
//! Reproducibility contract: one root seed lives in the scenario; every
//! (run, purpose) pair derives its own counter-seeded ChaCha stream, so runs
//! and sensors are mutually independent and results never depend on thread
//! scheduling or execution order.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::cross_covariance::run_cross_bank;
use crate::error::{Error, Result};
use crate::fusion::{ci_weights, ff_weights, fuse};
use crate::integrator::step_grid;
use crate::local_filter::{run_local_filter, LocalFilterRun};
use crate::model::{Scenario, SensorModel};
use crate::numeric::{matrix_sqrt_psd, van_loan_discretize};

/// Stream channel for the process noise and initial-state draw.
const CHANNEL_PROCESS: u64 = 0;
/// Stream channels for sensor noise start here (sensor s uses `1 + s`).
const CHANNEL_SENSOR_BASE: u64 = 1;

/// Independent random stream for `(root seed, run, channel)`, derived by
/// packing the three words into a ChaCha key.
fn substream(root: u64, run: u64, channel: u64) -> ChaCha12Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&root.to_le_bytes());
    key[8..16].copy_from_slice(&run.to_le_bytes());
    key[16..24].copy_from_slice(&channel.to_le_bytes());
    key[24..32].copy_from_slice(&0x9e37_79b9_7f4a_7c15u64.to_le_bytes());
    ChaCha12Rng::from_seed(key)
}

fn standard_normal_vector(rng: &mut ChaCha12Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

/// How the ground truth is advanced between epochs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TruthScheme {
    /// Euler-Maruyama substeps on the shared integration grid. Works for any
    /// drift, weak order one in the step size.
    #[default]
    EulerMaruyama,
    /// Exact transition plus integrated process noise per epoch gap
    /// (time-invariant drift only). Draws one noise vector per gap, so the
    /// realization is independent of the integration step; used to validate
    /// the Euler-Maruyama path and for step-size sensitivity studies.
    ExactLti,
}

/// One realized state trajectory sampled at the epochs.
#[derive(Debug, Clone)]
pub struct TruthTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// Root seed the streams were derived from.
    pub seed: u64,
    /// Run index within the Monte Carlo ensemble.
    pub run: u64,
}

/// Sample one ground-truth trajectory with Euler-Maruyama substeps.
pub fn simulate_truth(scenario: &Scenario, run: u64) -> Result<TruthTrajectory> {
    simulate_truth_with(scenario, run, TruthScheme::EulerMaruyama)
}

pub fn simulate_truth_with(
    scenario: &Scenario,
    run: u64,
    scheme: TruthScheme,
) -> Result<TruthTrajectory> {
    let mut rng = substream(scenario.seed, run, CHANNEL_PROCESS);
    let n = scenario.dim();
    let sqrt_p0 = matrix_sqrt_psd(&scenario.init.cov);
    let mut x = &scenario.init.mean + &sqrt_p0 * standard_normal_vector(&mut rng, n);

    let mut states = Vec::with_capacity(scenario.epochs.len());
    states.push(x.clone());

    match scheme {
        TruthScheme::EulerMaruyama => {
            let p = scenario.state.noise_intensity.nrows();
            let sqrt_q = matrix_sqrt_psd(&scenario.state.noise_intensity);
            for gap in scenario.epochs.windows(2) {
                for (t, h) in step_grid(gap[0], gap[1], scenario.dt) {
                    let drift = scenario.state.drift.at(t);
                    let kick = &scenario.state.noise_gain
                        * (&sqrt_q * standard_normal_vector(&mut rng, p))
                        * h.sqrt();
                    x = &x + (&*drift * &x) * h + kick;
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NumericOverflow {
                        t: gap[1],
                        h: scenario.dt,
                    });
                }
                states.push(x.clone());
            }
        }
        TruthScheme::ExactLti => {
            let diffusion = scenario.state.diffusion();
            // gap lengths repeat; cache the discretization per distinct length
            let mut cache: Vec<(u64, DMatrix<f64>, DMatrix<f64>)> = Vec::new();
            for gap in scenario.epochs.windows(2) {
                let span = gap[1] - gap[0];
                let key = span.to_bits();
                let pos = match cache.iter().position(|(k, _, _)| *k == key) {
                    Some(pos) => pos,
                    None => {
                        let drift = scenario.state.drift.at(gap[0]).into_owned();
                        let (ad, qd) = van_loan_discretize(&drift, &diffusion, span);
                        cache.push((key, ad, matrix_sqrt_psd(&qd)));
                        cache.len() - 1
                    }
                };
                let (_, ad, sqrt_qd) = &cache[pos];
                x = ad * &x + sqrt_qd * standard_normal_vector(&mut rng, n);
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NumericOverflow {
                        t: gap[1],
                        h: span,
                    });
                }
                states.push(x.clone());
            }
        }
    }

    Ok(TruthTrajectory {
        times: scenario.epochs.clone(),
        states,
        seed: scenario.seed,
        run,
    })
}

/// Synthesize `y = H x + v` for every sensor at every epoch. Noise draws are
/// independent across sensors (one stream per sensor) and epochs; returns
/// `measurements[sensor][epoch]`.
pub fn generate_measurements(
    truth: &TruthTrajectory,
    sensors: &[SensorModel],
    run: u64,
) -> Vec<Vec<DVector<f64>>> {
    sensors
        .iter()
        .enumerate()
        .map(|(s, sensor)| {
            let mut rng = substream(truth.seed, run, CHANNEL_SENSOR_BASE + s as u64);
            let m = sensor.obs_dim();
            let sqrt_r = matrix_sqrt_psd(&sensor.noise_cov);
            truth
                .states
                .iter()
                .map(|x| &sensor.observation * x + &sqrt_r * standard_normal_vector(&mut rng, m))
                .collect()
        })
        .collect()
}

/// Estimator identity inside a Monte Carlo study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// A single local filter, by 1-based sensor label.
    Local(usize),
    Ff,
    Ci,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Local(label) => write!(f, "local_{label}"),
            Method::Ff => write!(f, "ff"),
            Method::Ci => write!(f, "ci"),
        }
    }
}

/// Per-epoch, per-component mean square errors for a set of estimators.
#[derive(Debug, Clone)]
pub struct MseSeries {
    pub times: Vec<f64>,
    pub runs: usize,
    pub tracks: Vec<MseTrack>,
}

#[derive(Debug, Clone)]
pub struct MseTrack {
    pub method: Method,
    /// `mse[epoch][component]`.
    pub mse: Vec<Vec<f64>>,
}

impl MseSeries {
    pub fn track(&self, method: Method) -> Option<&MseTrack> {
        self.tracks.iter().find(|t| t.method == method)
    }
}

/// Accumulate squared errors into a running sum, epoch by epoch.
fn add_squared_error(sums: &mut [Vec<f64>], epoch: usize, truth: &DVector<f64>, estimate: &DVector<f64>) {
    for (c, slot) in sums[epoch].iter_mut().enumerate() {
        let e = truth[c] - estimate[c];
        *slot += e * e;
    }
}

/// Estimate per-epoch MSE over `scenario.mc_runs` independent runs.
///
/// Every run simulates a truth trajectory, synthesizes all measurements, runs
/// every local filter, propagates the cross-covariance bank when the optimal
/// fusion is requested, and fuses at each epoch. Runs fan out across worker
/// threads; the reduction is a fixed-order serial sum over run indices, so
/// parallel and serial execution agree bitwise.
pub fn monte_carlo_mse(scenario: &Scenario, methods: &[Method]) -> Result<MseSeries> {
    monte_carlo_mse_with(scenario, methods, TruthScheme::EulerMaruyama)
}

pub fn monte_carlo_mse_with(
    scenario: &Scenario,
    methods: &[Method],
    scheme: TruthScheme,
) -> Result<MseSeries> {
    if scenario.mc_runs < 2 {
        return Err(Error::Domain("Monte Carlo needs at least 2 runs".into()));
    }
    if methods.is_empty() {
        return Err(Error::Domain("no estimation methods requested".into()));
    }
    let n_sensors = scenario.n_sensors();
    for method in methods {
        if let Method::Local(label) = method {
            if *label == 0 || *label > n_sensors {
                return Err(Error::Domain(format!(
                    "local_{label} does not exist in a {n_sensors}-sensor scenario"
                )));
            }
        }
    }

    let n_epochs = scenario.epochs.len();
    let dim = scenario.dim();
    let want_ff = methods.contains(&Method::Ff);
    let want_ci = methods.contains(&Method::Ci);

    // per run: per method, per epoch, per component squared errors
    let per_run: Result<Vec<Vec<Vec<Vec<f64>>>>> = (0..scenario.mc_runs as u64)
        .into_par_iter()
        .map(|run| {
            let truth = simulate_truth_with(scenario, run, scheme)?;
            let measurements = generate_measurements(&truth, &scenario.sensors, run);
            let locals: Vec<LocalFilterRun> = (0..n_sensors)
                .map(|s| run_local_filter(scenario, s, &measurements[s]))
                .collect::<Result<_>>()?;

            let bank_run = if want_ff {
                let gains: Vec<Vec<DMatrix<f64>>> = (0..n_epochs)
                    .map(|k| locals.iter().map(|r| r.steps[k].gain.clone()).collect())
                    .collect();
                Some(run_cross_bank(scenario, &gains)?)
            } else {
                None
            };

            let mut sums: Vec<Vec<Vec<f64>>> =
                vec![vec![vec![0.0; dim]; n_epochs]; methods.len()];

            for k in 0..n_epochs {
                let means: Vec<DVector<f64>> =
                    locals.iter().map(|r| r.steps[k].posterior.mean.clone()).collect();
                let covs: Vec<DMatrix<f64>> =
                    locals.iter().map(|r| r.steps[k].posterior.cov.clone()).collect();

                let ff_mean = if want_ff {
                    let joint = bank_run.as_ref().unwrap().banks[k].assemble_joint(&covs);
                    let ws = ff_weights(&joint, dim, n_sensors)?;
                    Some(fuse(&ws, &means))
                } else {
                    None
                };
                let ci_mean = if want_ci {
                    let ws = ci_weights(&covs)?;
                    Some(fuse(&ws, &means))
                } else {
                    None
                };

                for (m, method) in methods.iter().enumerate() {
                    let estimate = match method {
                        Method::Local(label) => &means[label - 1],
                        Method::Ff => ff_mean.as_ref().unwrap(),
                        Method::Ci => ci_mean.as_ref().unwrap(),
                    };
                    add_squared_error(&mut sums[m], k, &truth.states[k], estimate);
                }
            }
            Ok(sums)
        })
        .collect();

    // fixed-order reduction over run indices
    let per_run = per_run?;
    let mut totals: Vec<Vec<Vec<f64>>> = vec![vec![vec![0.0; dim]; n_epochs]; methods.len()];
    for run_sums in &per_run {
        for (m, method_sums) in run_sums.iter().enumerate() {
            for (k, epoch_sums) in method_sums.iter().enumerate() {
                for (c, v) in epoch_sums.iter().enumerate() {
                    totals[m][k][c] += v;
                }
            }
        }
    }
    let scale = 1.0 / scenario.mc_runs as f64;
    let tracks = methods
        .iter()
        .zip(totals)
        .map(|(&method, sums)| MseTrack {
            method,
            mse: sums
                .into_iter()
                .map(|row| row.into_iter().map(|v| v * scale).collect())
                .collect(),
        })
        .collect();

    Ok(MseSeries {
        times: scenario.epochs.clone(),
        runs: scenario.mc_runs,
        tracks,
    })
}
