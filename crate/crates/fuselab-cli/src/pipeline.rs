//! Deterministic covariance pipeline shared by the CSV writers and the
//! timing harness.
//!
//! Gains, covariances, and fusion weights never depend on the realized
//! measurements, so one pass with zero measurements yields the exact weight
//! and covariance series for a scenario.

use fuselab_core::cross_covariance::{run_cross_bank, CrossBankRun};
use fuselab_core::fusion::{ci_weights, ff_weights, WeightSet};
use fuselab_core::local_filter::{run_local_filter, LocalFilterRun};
use fuselab_core::model::{Scenario, SensorModel};
use fuselab_core::Result;
use nalgebra::{DMatrix, DVector};

pub struct CovariancePipeline {
    pub locals: Vec<LocalFilterRun>,
    pub bank: CrossBankRun,
}

impl CovariancePipeline {
    pub fn run(scenario: &Scenario) -> Result<Self> {
        let locals: Vec<LocalFilterRun> = (0..scenario.n_sensors())
            .map(|s| {
                let zeros = vec![DVector::zeros(scenario.sensors[s].obs_dim()); scenario.epochs.len()];
                run_local_filter(scenario, s, &zeros)
            })
            .collect::<Result<_>>()?;
        let gains: Vec<Vec<DMatrix<f64>>> = (0..scenario.epochs.len())
            .map(|k| locals.iter().map(|r| r.steps[k].gain.clone()).collect())
            .collect();
        let bank = run_cross_bank(scenario, &gains)?;
        Ok(CovariancePipeline { locals, bank })
    }

    pub fn posterior_covs(&self, epoch: usize) -> Vec<DMatrix<f64>> {
        self.locals
            .iter()
            .map(|r| r.steps[epoch].posterior.cov.clone())
            .collect()
    }

    pub fn joint_cov(&self, epoch: usize) -> DMatrix<f64> {
        self.bank.banks[epoch].assemble_joint(&self.posterior_covs(epoch))
    }

    /// Optimal fusion weights at every epoch.
    pub fn ff_weightsets(&self, scenario: &Scenario) -> Result<Vec<WeightSet>> {
        (0..scenario.epochs.len())
            .map(|k| ff_weights(&self.joint_cov(k), scenario.dim(), scenario.n_sensors()))
            .collect()
    }

    /// Covariance-intersection weights at every epoch.
    pub fn ci_weightsets(&self, scenario: &Scenario) -> Result<Vec<WeightSet>> {
        (0..scenario.epochs.len())
            .map(|k| ci_weights(&self.posterior_covs(k)))
            .collect()
    }
}

/// Expand or truncate a scenario to `count` sensors by cycling the base
/// sensor list (labels are renumbered). Noise streams derive from sensor
/// position, so replicas see independent draws.
pub fn replicate_sensors(scenario: &Scenario, count: usize) -> Scenario {
    let base = &scenario.sensors;
    let sensors: Vec<SensorModel> = (0..count)
        .map(|k| {
            let template = &base[k % base.len()];
            SensorModel::new(k + 1, template.observation.clone(), template.noise_cov.clone())
        })
        .collect();
    Scenario {
        sensors,
        ..scenario.clone()
    }
}
