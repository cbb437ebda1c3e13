//! Per-sensor continuous-discrete Kalman filter: discrete measurement updates
//! at the epochs, ODE time updates between them.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::integrator::{Moment, MomentOde};
use crate::model::{GaussianBelief, Scenario, SensorModel};
use crate::numeric::{spd_cholesky, symmetrize_in_place};

/// Covariance form of the measurement update. `Standard` is `(I - KH) P`;
/// `Joseph` adds the `K R Kᵀ` completion for extra numerical robustness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovarianceUpdate {
    #[default]
    Standard,
    Joseph,
}

/// Filter state at one epoch: belief before and after the measurement, plus
/// the gain that linked them.
#[derive(Debug, Clone)]
pub struct LocalFilterState {
    /// 1-based sensor label.
    pub sensor: usize,
    pub prior: GaussianBelief,
    pub posterior: GaussianBelief,
    pub gain: DMatrix<f64>,
}

/// Output of a full filtering pass over all epochs.
#[derive(Debug, Clone)]
pub struct LocalFilterRun {
    pub steps: Vec<LocalFilterState>,
    /// Number of covariance (Lyapunov) interval propagations performed.
    pub ode_propagations: u64,
}

impl LocalFilterRun {
    pub fn gains(&self) -> Vec<DMatrix<f64>> {
        self.steps.iter().map(|s| s.gain.clone()).collect()
    }

    pub fn posterior_covs(&self) -> Vec<DMatrix<f64>> {
        self.steps.iter().map(|s| s.posterior.cov.clone()).collect()
    }
}

/// Kalman gain `K = P Hᵀ (H P Hᵀ + R)⁻¹`, computed by solving the symmetric
/// positive-definite innovation system rather than forming an inverse.
pub fn kalman_gain(
    p_pred: &DMatrix<f64>,
    observation: &DMatrix<f64>,
    noise_cov: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let hp = observation * p_pred;
    let innovation_cov = &hp * observation.transpose() + noise_cov;
    let chol = spd_cholesky(&innovation_cov)
        .ok_or(Error::SingularInnovation { sensor: None })?;
    // K = P Hᵀ S⁻¹  ⇔  Kᵀ = S⁻¹ H Pᵀ; P is symmetric up to rounding, so H P
    // serves as the right-hand side.
    Ok(chol.solve(&hp).transpose())
}

/// Measurement update at the prior's time: mean correction by the innovation,
/// covariance contraction by `(I - KH)` (or its Joseph completion).
pub fn measurement_update_with(
    prior: &GaussianBelief,
    measurement: &DVector<f64>,
    sensor: &SensorModel,
    form: CovarianceUpdate,
) -> Result<(GaussianBelief, DMatrix<f64>)> {
    let gain = kalman_gain(&prior.cov, &sensor.observation, &sensor.noise_cov).map_err(|e| {
        match e {
            Error::SingularInnovation { .. } => Error::SingularInnovation {
                sensor: Some(sensor.index),
            },
            other => other,
        }
    })?;

    let innovation = measurement - &sensor.observation * &prior.mean;
    let mean = &prior.mean + &gain * innovation;

    let n = prior.cov.nrows();
    let i_kh = DMatrix::identity(n, n) - &gain * &sensor.observation;
    let mut cov = match form {
        CovarianceUpdate::Standard => &i_kh * &prior.cov,
        CovarianceUpdate::Joseph => {
            &i_kh * &prior.cov * i_kh.transpose() + &gain * &sensor.noise_cov * gain.transpose()
        }
    };
    symmetrize_in_place(&mut cov);

    Ok((
        GaussianBelief {
            t: prior.t,
            mean,
            cov,
        },
        gain,
    ))
}

pub fn measurement_update(
    prior: &GaussianBelief,
    measurement: &DVector<f64>,
    sensor: &SensorModel,
) -> Result<(GaussianBelief, DMatrix<f64>)> {
    measurement_update_with(prior, measurement, sensor, CovarianceUpdate::Standard)
}

/// Run the full continuous-discrete Kalman filter for one sensor.
///
/// The initial belief serves as the prior at the first epoch, which receives
/// a measurement update like every later epoch. `measurements` must hold one
/// vector per epoch. `sensor_pos` is the 0-based position in
/// `scenario.sensors`.
pub fn run_local_filter(
    scenario: &Scenario,
    sensor_pos: usize,
    measurements: &[DVector<f64>],
) -> Result<LocalFilterRun> {
    run_local_filter_with(scenario, sensor_pos, measurements, CovarianceUpdate::Standard)
}

pub fn run_local_filter_with(
    scenario: &Scenario,
    sensor_pos: usize,
    measurements: &[DVector<f64>],
    form: CovarianceUpdate,
) -> Result<LocalFilterRun> {
    let sensor = scenario
        .sensors
        .get(sensor_pos)
        .ok_or_else(|| Error::Domain(format!("no sensor at position {sensor_pos}")))?;
    if measurements.len() != scenario.epochs.len() {
        return Err(Error::Domain(format!(
            "expected {} measurements (one per epoch), got {}",
            scenario.epochs.len(),
            measurements.len()
        )));
    }

    let mean_ode = MomentOde::mean(&scenario.state);
    let cov_ode = MomentOde::lyapunov(&scenario.state);

    let mut steps = Vec::with_capacity(scenario.epochs.len());
    let mut ode_propagations = 0u64;
    let mut prior = GaussianBelief {
        t: scenario.epochs[0],
        mean: scenario.init.mean.clone(),
        cov: scenario.init.cov.clone(),
    };

    for (k, (&t_k, y_k)) in scenario.epochs.iter().zip(measurements).enumerate() {
        if k > 0 {
            let t_prev = scenario.epochs[k - 1];
            let mean = mean_ode
                .propagate_interval(&Moment::Mean(prior.mean), t_prev, t_k, scenario.dt)?
                .into_mean();
            let cov = cov_ode
                .propagate_interval(&Moment::Cov(prior.cov), t_prev, t_k, scenario.dt)?
                .into_cov();
            ode_propagations += 1;
            prior = GaussianBelief { t: t_k, mean, cov };
        }

        let (posterior, gain) = measurement_update_with(&prior, y_k, sensor, form)?;
        steps.push(LocalFilterState {
            sensor: sensor.index,
            prior: prior.clone(),
            posterior: posterior.clone(),
            gain,
        });
        prior = posterior;
    }

    Ok(LocalFilterRun {
        steps,
        ode_propagations,
    })
}
