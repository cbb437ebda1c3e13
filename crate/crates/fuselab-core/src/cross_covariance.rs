//! Exact propagation of the pairwise cross-covariances between local
//! estimation errors.
//!
//! Between epochs every cross block follows the same Lyapunov ODE as the
//! local covariances (common process noise couples the errors); at an epoch
//! the block contracts by the two sensors' `(I - KH)` factors. The blocks are
//! genuinely non-symmetric, so no symmetrization is applied to them; symmetry
//! is enforced only on the assembled joint matrix.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::integrator::{Moment, MomentOde};
use crate::model::{Scenario, StateModel};
use crate::numeric::symmetrize_in_place;

/// All pairwise cross-covariance blocks at one epoch. Only `i < j` is stored;
/// the transposed blocks are materialized on demand.
#[derive(Debug, Clone)]
pub struct CrossCovBank {
    pub t: f64,
    pub n_sensors: usize,
    blocks: Vec<DMatrix<f64>>,
}

fn pair_position(i: usize, j: usize, n: usize) -> usize {
    debug_assert!(i < j && j < n);
    // lexicographic position of (i, j) among the n(n-1)/2 ordered pairs
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

impl CrossCovBank {
    pub fn n_pairs(&self) -> usize {
        self.blocks.len()
    }

    /// Cross-covariance between local errors `i` and `j` (0-based, `i != j`).
    pub fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        assert!(i != j, "diagonal blocks live with the local filters");
        if i < j {
            self.blocks[pair_position(i, j, self.n_sensors)].clone()
        } else {
            self.blocks[pair_position(j, i, self.n_sensors)].transpose()
        }
    }

    /// Ordered iteration over the stored `i < j` pairs.
    pub fn pairs(&self) -> impl Iterator<Item = ((usize, usize), &DMatrix<f64>)> {
        let n = self.n_sensors;
        (0..n)
            .flat_map(move |i| ((i + 1)..n).map(move |j| (i, j)))
            .zip(self.blocks.iter())
    }

    /// Assemble the full joint covariance of the stacked local errors, with
    /// the given diagonal blocks, symmetrized.
    pub fn assemble_joint(&self, local_covs: &[DMatrix<f64>]) -> DMatrix<f64> {
        let n_sensors = self.n_sensors;
        assert_eq!(local_covs.len(), n_sensors);
        let dim = local_covs[0].nrows();
        let mut joint = DMatrix::zeros(dim * n_sensors, dim * n_sensors);
        for (i, cov) in local_covs.iter().enumerate() {
            joint.view_mut((i * dim, i * dim), (dim, dim)).copy_from(cov);
        }
        for ((i, j), block) in self.pairs() {
            joint.view_mut((i * dim, j * dim), (dim, dim)).copy_from(block);
            joint
                .view_mut((j * dim, i * dim), (dim, dim))
                .copy_from(&block.transpose());
        }
        symmetrize_in_place(&mut joint);
        joint
    }
}

/// Measurement update of one cross block:
/// `(I - K_i H_i) P (I - K_j H_j)ᵀ`. Valid for sensors with mutually
/// independent measurement noise; no symmetrization.
pub fn cross_measurement_update(
    p_pred: &DMatrix<f64>,
    gain_i: &DMatrix<f64>,
    obs_i: &DMatrix<f64>,
    gain_j: &DMatrix<f64>,
    obs_j: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = p_pred.nrows();
    let left = DMatrix::identity(n, n) - gain_i * obs_i;
    let right = DMatrix::identity(n, n) - gain_j * obs_j;
    &left * p_pred * right.transpose()
}

/// Time update of one cross block: the Lyapunov ODE over `[t0, t1]`,
/// integrated on the shared fixed grid, without symmetrization.
pub fn cross_time_update(
    model: &StateModel,
    p: &DMatrix<f64>,
    t0: f64,
    t1: f64,
    dt: f64,
) -> Result<DMatrix<f64>> {
    let ode = MomentOde::cross_covariance(model);
    Ok(ode
        .propagate_interval(&Moment::Cov(p.clone()), t0, t1, dt)?
        .into_cov())
}

/// Output of a full cross-covariance pass over all epochs.
#[derive(Debug, Clone)]
pub struct CrossBankRun {
    /// Post-measurement-update bank at every epoch.
    pub banks: Vec<CrossCovBank>,
    /// Number of Lyapunov interval propagations performed (pairs x gaps).
    pub ode_propagations: u64,
}

/// Propagate every `i < j` cross block through all epochs, aligned with the
/// local filters: blocks start at the shared initial covariance, receive a
/// measurement update at the first epoch, then alternate time and measurement
/// updates. `gains[k][s]` is sensor `s`'s gain at epoch `k`, exactly as
/// computed by the local filters.
pub fn run_cross_bank(scenario: &Scenario, gains: &[Vec<DMatrix<f64>>]) -> Result<CrossBankRun> {
    let n_sensors = scenario.n_sensors();
    let epochs = &scenario.epochs;
    if gains.len() != epochs.len() || gains.iter().any(|g| g.len() != n_sensors) {
        return Err(Error::Domain(
            "gains must be supplied for every sensor at every epoch".into(),
        ));
    }

    let pair_list: Vec<(usize, usize)> = (0..n_sensors)
        .flat_map(|i| ((i + 1)..n_sensors).map(move |j| (i, j)))
        .collect();
    let ode = MomentOde::cross_covariance(&scenario.state);

    let mut blocks: Vec<DMatrix<f64>> = vec![scenario.init.cov.clone(); pair_list.len()];
    let mut banks = Vec::with_capacity(epochs.len());
    let mut ode_propagations = 0u64;

    for (k, &t_k) in epochs.iter().enumerate() {
        if k > 0 {
            let t_prev = epochs[k - 1];
            for block in blocks.iter_mut() {
                *block = ode
                    .propagate_interval(&Moment::Cov(block.clone()), t_prev, t_k, scenario.dt)?
                    .into_cov();
                ode_propagations += 1;
            }
        }
        for (pos, &(i, j)) in pair_list.iter().enumerate() {
            blocks[pos] = cross_measurement_update(
                &blocks[pos],
                &gains[k][i],
                &scenario.sensors[i].observation,
                &gains[k][j],
                &scenario.sensors[j].observation,
            );
        }
        banks.push(CrossCovBank {
            t: t_k,
            n_sensors,
            blocks: blocks.clone(),
        });
    }

    Ok(CrossBankRun {
        banks,
        ode_propagations,
    })
}
