//! Combining N local estimates into one fused estimate.
//!
//! Two rules are provided. The optimal matrix-weight rule solves a
//! mean-square criterion over all unbiased linear combinations and needs the
//! full joint covariance of the local errors, cross blocks included. The
//! covariance-intersection rule only needs the local covariances: its
//! determinant-ratio weights trade accuracy for a large complexity saving,
//! and its reported matrix is a consistent upper bound on the true fused
//! error covariance.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numeric::{log_determinant, spd_cholesky, symmetrize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionMethod {
    /// Optimal unbiased matrix weights from the joint covariance.
    Ff,
    /// Covariance intersection with determinant-ratio scalar weights.
    Ci,
}

/// One set of fusion weights plus the covariance the method reports for the
/// fused estimate. Weights always sum to the identity (unbiasedness).
#[derive(Debug, Clone)]
pub struct WeightSet {
    pub method: FusionMethod,
    /// One n x n weight per sensor, in sensor order.
    pub weights: Vec<DMatrix<f64>>,
    /// What the method claims for the fused error covariance.
    pub reported_cov: DMatrix<f64>,
}

impl WeightSet {
    pub fn n_sensors(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.reported_cov.nrows()
    }

    /// Weights concatenated into one n x nN matrix.
    fn concatenated(&self) -> DMatrix<f64> {
        let n = self.dim();
        let count = self.n_sensors();
        let mut cat = DMatrix::zeros(n, n * count);
        for (i, w) in self.weights.iter().enumerate() {
            cat.view_mut((0, i * n), (n, n)).copy_from(w);
        }
        cat
    }

    fn weight_sum_defect(&self) -> f64 {
        let n = self.dim();
        let mut sum = DMatrix::<f64>::zeros(n, n);
        for w in &self.weights {
            sum += w;
        }
        (sum - DMatrix::identity(n, n)).abs().max()
    }
}

/// A fused estimate with both the reported and the actually realized error
/// covariance (the latter evaluated against the full joint covariance,
/// whichever method produced the weights).
#[derive(Debug, Clone)]
pub struct FusionResult {
    pub t: f64,
    pub mean: DVector<f64>,
    pub weightset: WeightSet,
    pub actual_cov: DMatrix<f64>,
}

impl FusionResult {
    pub fn evaluate(
        t: f64,
        weightset: WeightSet,
        estimates: &[DVector<f64>],
        joint_cov: &DMatrix<f64>,
    ) -> Self {
        let mean = fuse(&weightset, estimates);
        let actual_cov = actual_fused_covariance(&weightset, joint_cov);
        FusionResult {
            t,
            mean,
            weightset,
            actual_cov,
        }
    }
}

const WEIGHT_SUM_TOL: f64 = 1e-8;

/// Optimal unbiased matrix weights from the joint covariance of the stacked
/// local errors (nN x nN, diagonal blocks = local covariances).
///
/// Solves the two symmetric linear systems of the explicit weight formula;
/// no inverse is ever formed. A singular or numerically indefinite joint
/// matrix gets one retry with trace-scaled Tikhonov jitter, after which the
/// caller may fall back to covariance intersection.
pub fn ff_weights(joint_cov: &DMatrix<f64>, dim: usize, n_sensors: usize) -> Result<WeightSet> {
    let total = dim * n_sensors;
    if joint_cov.nrows() != total || joint_cov.ncols() != total {
        return Err(Error::Domain(format!(
            "joint covariance is {}x{}, expected {total}x{total}",
            joint_cov.nrows(),
            joint_cov.ncols()
        )));
    }

    // D = [I ... I]ᵀ, the unbiasedness stacking matrix.
    let mut stacked = DMatrix::<f64>::zeros(total, dim);
    for i in 0..n_sensors {
        stacked
            .view_mut((i * dim, 0), (dim, dim))
            .copy_from(&DMatrix::identity(dim, dim));
    }

    let chol = match spd_cholesky(joint_cov) {
        Some(c) => c,
        None => {
            let jitter = 1e-9 * (1.0 + joint_cov.trace() / total as f64);
            let damped = joint_cov + DMatrix::identity(total, total) * jitter;
            spd_cholesky(&damped).ok_or_else(|| {
                Error::FusionSingular(format!(
                    "joint covariance not positive definite even with jitter {jitter:.3e}"
                ))
            })?
        }
    };

    // X = P̂⁻¹ D, A = Dᵀ P̂⁻¹ D, C = A⁻¹ Xᵀ.
    let x = chol.solve(&stacked);
    let info = symmetrize(&(stacked.transpose() * &x));
    let info_chol = spd_cholesky(&info).ok_or_else(|| {
        Error::FusionSingular("fused information matrix not positive definite".into())
    })?;
    let weights_cat = info_chol.solve(&x.transpose());

    let weights: Vec<DMatrix<f64>> = (0..n_sensors)
        .map(|i| weights_cat.view((0, i * dim), (dim, dim)).into_owned())
        .collect();
    let reported_cov = symmetrize(&(&weights_cat * joint_cov * weights_cat.transpose()));

    let ws = WeightSet {
        method: FusionMethod::Ff,
        weights,
        reported_cov,
    };
    let defect = ws.weight_sum_defect();
    if defect > WEIGHT_SUM_TOL {
        return Err(Error::FusionSingular(format!(
            "weights sum to identity only within {defect:.3e}"
        )));
    }
    Ok(ws)
}

/// Covariance-intersection weights from the local covariances alone.
///
/// The scalar mixing weights are determinant ratios of the local information
/// matrices, computed through log-determinants so extreme scales cannot
/// overflow. The reported covariance is the intersection matrix `M`.
pub fn ci_weights(local_covs: &[DMatrix<f64>]) -> Result<WeightSet> {
    if local_covs.is_empty() {
        return Err(Error::Domain("covariance intersection needs at least one sensor".into()));
    }
    let dim = local_covs[0].nrows();

    let mut infos = Vec::with_capacity(local_covs.len());
    let mut neg_logdets = Vec::with_capacity(local_covs.len());
    for (i, cov) in local_covs.iter().enumerate() {
        if cov.nrows() != dim || cov.ncols() != dim {
            return Err(Error::Domain("local covariances must share one dimension".into()));
        }
        let chol = spd_cholesky(cov).ok_or(Error::NotPositiveDefinite { sensor: i + 1 })?;
        neg_logdets.push(-log_determinant(&chol));
        infos.push(chol.inverse());
    }

    // omega_i = det(P_ii⁻¹) / sum_j det(P_jj⁻¹), evaluated in log space.
    let peak = neg_logdets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let unnormalized: Vec<f64> = neg_logdets.iter().map(|ld| (ld - peak).exp()).collect();
    let total: f64 = unnormalized.iter().sum();
    let omegas: Vec<f64> = unnormalized.iter().map(|w| w / total).collect();

    let mut info_mix = DMatrix::<f64>::zeros(dim, dim);
    for (omega, info) in omegas.iter().zip(&infos) {
        info_mix += info * *omega;
    }
    let mix_chol = spd_cholesky(&info_mix).ok_or_else(|| {
        Error::FusionSingular("covariance-intersection information mix not positive definite".into())
    })?;
    let intersection = symmetrize(&mix_chol.inverse());

    let weights: Vec<DMatrix<f64>> = omegas
        .iter()
        .zip(&infos)
        .map(|(omega, info)| &intersection * info * *omega)
        .collect();

    let ws = WeightSet {
        method: FusionMethod::Ci,
        weights,
        reported_cov: intersection,
    };
    let defect = ws.weight_sum_defect();
    if defect > WEIGHT_SUM_TOL {
        return Err(Error::FusionSingular(format!(
            "weights sum to identity only within {defect:.3e}"
        )));
    }
    Ok(ws)
}

/// The fused estimate: the weighted sum of the local estimates.
pub fn fuse(weightset: &WeightSet, estimates: &[DVector<f64>]) -> DVector<f64> {
    assert_eq!(weightset.n_sensors(), estimates.len(), "one estimate per weight");
    let mut fused = DVector::zeros(weightset.dim());
    for (w, x) in weightset.weights.iter().zip(estimates) {
        fused += w * x;
    }
    fused
}

/// The error covariance any weighted fusion actually achieves against the
/// full joint covariance: `sum_ij W_i P_ij W_jᵀ`, symmetrized. Applied to the
/// intersection weights this exposes the conservatism of the reported bound.
pub fn actual_fused_covariance(weightset: &WeightSet, joint_cov: &DMatrix<f64>) -> DMatrix<f64> {
    let cat = weightset.concatenated();
    assert_eq!(joint_cov.nrows(), cat.ncols(), "joint covariance size mismatch");
    symmetrize(&(&cat * joint_cov * cat.transpose()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{min_symmetric_eigenvalue, sym_tolerance};
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    // Steady-state covariance triple of the scalar two-sensor testbed
    // (q = 1, r = 5 and 2): P11 = 5/11, P22 = 2/5, P12 = 4/11.
    const P11: f64 = 5.0 / 11.0;
    const P22: f64 = 0.4;
    const P12: f64 = 4.0 / 11.0;

    fn scalar_joint() -> DMatrix<f64> {
        dmatrix![P11, P12; P12, P22]
    }

    #[test]
    fn symmetric_uncorrelated_pair_splits_evenly() {
        let mut joint = DMatrix::<f64>::identity(4, 4);
        joint.view_mut((0, 2), (2, 2)).fill(0.0);
        let ws = ff_weights(&joint, 2, 2).unwrap();
        let half = DMatrix::identity(2, 2) * 0.5;
        assert_relative_eq!(ws.weights[0], half, epsilon = 1e-12);
        assert_relative_eq!(ws.weights[1], half, epsilon = 1e-12);
        assert_relative_eq!(ws.reported_cov, half, epsilon = 1e-12);
    }

    #[test]
    fn scalar_pair_weights_match_closed_form() {
        let ws = ff_weights(&scalar_joint(), 1, 2).unwrap();
        assert!((ws.weights[0][(0, 0)] - 0.285714).abs() < 1e-6);
        assert!((ws.weights[1][(0, 0)] - 0.714286).abs() < 1e-6);
    }

    #[test]
    fn scalar_pair_reported_variance_to_four_decimals() {
        let ws = ff_weights(&scalar_joint(), 1, 2).unwrap();
        assert!((ws.reported_cov[(0, 0)] - 0.3896).abs() < 5e-5);
    }

    #[test]
    fn intersection_single_sensor_is_identity_weight() {
        let p = dmatrix![1.3, 0.2; 0.2, 0.9];
        let ws = ci_weights(std::slice::from_ref(&p)).unwrap();
        assert_relative_eq!(ws.weights[0], DMatrix::identity(2, 2), epsilon = 1e-12);
        assert_relative_eq!(ws.reported_cov, p, epsilon = 1e-12);
    }

    #[test]
    fn intersection_identical_sensors_split_evenly() {
        let p = dmatrix![2.0, 0.5; 0.5, 1.0];
        let ws = ci_weights(&[p.clone(), p.clone(), p.clone()]).unwrap();
        let third = DMatrix::identity(2, 2) / 3.0;
        for w in &ws.weights {
            assert_relative_eq!(*w, third, epsilon = 1e-12);
        }
        assert_relative_eq!(ws.reported_cov, p, epsilon = 1e-12);
    }

    #[test]
    fn intersection_scalar_weights_match_closed_form() {
        let ws = ci_weights(&[dmatrix![P11], dmatrix![P22]]).unwrap();
        assert!((ws.weights[0][(0, 0)] - 0.436430).abs() < 1e-6);
        assert!((ws.weights[1][(0, 0)] - 0.563570).abs() < 1e-6);
    }

    #[test]
    fn intersection_names_the_offending_sensor() {
        let res = ci_weights(&[dmatrix![1.0], dmatrix![-2.0]]);
        match res {
            Err(Error::NotPositiveDefinite { sensor: 2 }) => {}
            other => panic!("expected sensor 2 failure, got {other:?}"),
        }
    }

    #[test]
    fn unbiased_weights_preserve_agreement() {
        let v = dvector![3.0, -1.0];
        let joint = DMatrix::<f64>::identity(4, 4);
        for ws in [
            ff_weights(&joint, 2, 2).unwrap(),
            ci_weights(&[DMatrix::identity(2, 2), DMatrix::identity(2, 2) * 2.0]).unwrap(),
        ] {
            let fused = fuse(&ws, &[v.clone(), v.clone()]);
            assert_relative_eq!(fused, v, epsilon = 1e-12);
        }
    }

    #[test]
    fn scalar_fusion_arithmetic() {
        let ws = ff_weights(&scalar_joint(), 1, 2).unwrap();
        let fused = fuse(&ws, &[dvector![1.0], dvector![2.0]]);
        assert!((fused[0] - 1.714286).abs() < 1e-6);
    }

    #[test]
    fn degenerate_weight_passes_through_first_estimate() {
        let ws = WeightSet {
            method: FusionMethod::Ff,
            weights: vec![DMatrix::identity(2, 2), DMatrix::zeros(2, 2)],
            reported_cov: DMatrix::identity(2, 2),
        };
        let a = dvector![1.0, 2.0];
        let b = dvector![-5.0, 9.0];
        assert_eq!(fuse(&ws, &[a.clone(), b]), a);
    }

    #[test]
    fn intersection_actual_variance_to_four_decimals() {
        let ws = ci_weights(&[dmatrix![P11], dmatrix![P22]]).unwrap();
        let actual = actual_fused_covariance(&ws, &scalar_joint());
        assert!((actual[(0, 0)] - 0.3925).abs() < 5e-5);
    }

    #[test]
    fn reported_equals_actual_for_optimal_weights() {
        let joint = dmatrix![
            1.0, 0.2, 0.1, 0.0;
            0.2, 1.5, 0.0, 0.3;
            0.1, 0.0, 0.8, 0.1;
            0.0, 0.3, 0.1, 1.2
        ];
        let ws = ff_weights(&joint, 2, 2).unwrap();
        let actual = actual_fused_covariance(&ws, &joint);
        assert!((actual - &ws.reported_cov).abs().max() < 1e-10);
    }

    #[test]
    fn half_half_weights_hand_arithmetic() {
        let ws = WeightSet {
            method: FusionMethod::Ci,
            weights: vec![dmatrix![0.5], dmatrix![0.5]],
            reported_cov: dmatrix![1.0],
        };
        let actual = actual_fused_covariance(&ws, &scalar_joint());
        assert!((actual[(0, 0)] - 0.395455).abs() < 1e-6);
    }

    #[test]
    fn evaluated_result_carries_mean_and_both_covariances() {
        let joint = scalar_joint();
        let ws = ci_weights(&[dmatrix![P11], dmatrix![P22]]).unwrap();
        let estimates = [dvector![1.0], dvector![2.0]];
        let result = FusionResult::evaluate(0.7, ws.clone(), &estimates, &joint);
        assert_eq!(result.t, 0.7);
        assert_eq!(result.mean, fuse(&ws, &estimates));
        assert_eq!(result.actual_cov, actual_fused_covariance(&ws, &joint));
        // the intersection's reported bound exceeds what it actually achieves
        assert!(result.weightset.reported_cov[(0, 0)] > result.actual_cov[(0, 0)]);
    }

    #[test]
    fn exactly_singular_joint_recovers_via_jitter() {
        // duplicated sensors make the joint exactly singular
        let joint = dmatrix![1.0, 1.0; 1.0, 1.0];
        let ws = ff_weights(&joint, 1, 2).unwrap();
        assert!((ws.weights[0][(0, 0)] - 0.5).abs() < 1e-4);
        assert!((ws.weights[1][(0, 0)] - 0.5).abs() < 1e-4);
        assert!((ws.reported_cov[(0, 0)] - 1.0).abs() < 1e-6);
        assert!(ws.weight_sum_defect() < 1e-10);
    }

    #[test]
    fn hopeless_joint_reports_fusion_singularity() {
        let joint = dmatrix![f64::NAN, 0.0; 0.0, 1.0];
        assert!(matches!(
            ff_weights(&joint, 1, 2),
            Err(Error::FusionSingular(_))
        ));
    }

    // -- randomized properties ------------------------------------------

    fn random_pd_joint(rng: &mut StdRng, total: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(total, total, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(total, total) * 0.1
    }

    fn diagonal_blocks(joint: &DMatrix<f64>, dim: usize, count: usize) -> Vec<DMatrix<f64>> {
        (0..count)
            .map(|i| joint.view((i * dim, i * dim), (dim, dim)).into_owned())
            .collect()
    }

    fn random_unbiased_weights(rng: &mut StdRng, dim: usize, count: usize) -> WeightSet {
        let mut weights: Vec<DMatrix<f64>> = (0..count - 1)
            .map(|_| DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-0.5..0.5)))
            .collect();
        let mut last = DMatrix::identity(dim, dim);
        for w in &weights {
            last -= w;
        }
        weights.push(last);
        WeightSet {
            method: FusionMethod::Ci,
            weights,
            reported_cov: DMatrix::identity(dim, dim),
        }
    }

    #[test]
    fn optimal_weights_beat_every_tested_alternative() {
        let mut rng = StdRng::seed_from_u64(0x5eed);
        for case in 0..100 {
            let dim = if case % 2 == 0 { 1 } else { 2 };
            let count = if case % 3 == 0 { 3 } else { 2 };
            let joint = random_pd_joint(&mut rng, dim * count);
            let locals = diagonal_blocks(&joint, dim, count);

            let ff = ff_weights(&joint, dim, count).unwrap();
            let ff_trace = actual_fused_covariance(&ff, &joint).trace();

            let ci = ci_weights(&locals).unwrap();
            let ci_trace = actual_fused_covariance(&ci, &joint).trace();
            assert!(ff_trace <= ci_trace + 1e-9, "case {case}: ff {ff_trace} vs ci {ci_trace}");

            let min_local = locals.iter().map(|p| p.trace()).fold(f64::INFINITY, f64::min);
            assert!(ff_trace <= min_local + 1e-9, "case {case}: ff {ff_trace} vs local {min_local}");

            for _ in 0..3 {
                let other = random_unbiased_weights(&mut rng, dim, count);
                let other_trace = actual_fused_covariance(&other, &joint).trace();
                assert!(ff_trace <= other_trace + 1e-9, "case {case}: ff beaten");
            }
        }
    }

    #[test]
    fn intersection_bound_holds_on_consistent_joints() {
        let mut rng = StdRng::seed_from_u64(0xc1);
        for case in 0..100 {
            let dim = if case % 2 == 0 { 1 } else { 2 };
            let count = if case % 3 == 0 { 3 } else { 2 };
            let joint = random_pd_joint(&mut rng, dim * count);
            let locals = diagonal_blocks(&joint, dim, count);
            let ci = ci_weights(&locals).unwrap();
            let actual = actual_fused_covariance(&ci, &joint);
            let slack = &ci.reported_cov - &actual;
            let tol = sym_tolerance(&ci.reported_cov);
            assert!(
                min_symmetric_eigenvalue(&slack) >= -tol,
                "case {case}: bound violated by {}",
                min_symmetric_eigenvalue(&slack)
            );
        }
    }

    #[test]
    fn permuting_sensors_permutes_weights() {
        let mut rng = StdRng::seed_from_u64(7);
        let dim = 2;
        let count = 3;
        let joint = random_pd_joint(&mut rng, dim * count);
        let locals = diagonal_blocks(&joint, dim, count);
        let perm = [2usize, 0, 1];

        let mut permuted_joint = DMatrix::zeros(dim * count, dim * count);
        for a in 0..count {
            for b in 0..count {
                permuted_joint
                    .view_mut((a * dim, b * dim), (dim, dim))
                    .copy_from(&joint.view((perm[a] * dim, perm[b] * dim), (dim, dim)));
            }
        }
        let permuted_locals: Vec<_> = perm.iter().map(|&p| locals[p].clone()).collect();

        let ff = ff_weights(&joint, dim, count).unwrap();
        let ff_perm = ff_weights(&permuted_joint, dim, count).unwrap();
        let ci = ci_weights(&locals).unwrap();
        let ci_perm = ci_weights(&permuted_locals).unwrap();
        for (a, &p) in perm.iter().enumerate() {
            assert_relative_eq!(ff_perm.weights[a], ff.weights[p], epsilon = 1e-9);
            assert_relative_eq!(ci_perm.weights[a], ci.weights[p], epsilon = 1e-9);
        }
        assert_relative_eq!(ff_perm.reported_cov, ff.reported_cov, epsilon = 1e-9);
        assert_relative_eq!(ci_perm.reported_cov, ci.reported_cov, epsilon = 1e-9);
    }

    proptest! {
        // Scaling every local covariance by the same factor leaves the
        // intersection weights untouched and scales the bound linearly.
        #[test]
        fn intersection_is_scale_equivariant(
            scale in 1e-3f64..1e3,
            a in 0.5f64..3.0, b in -0.8f64..0.8, c in 0.5f64..3.0,
            d in 0.5f64..3.0, e in -0.8f64..0.8, f in 0.5f64..3.0,
        ) {
            let p1 = dmatrix![a, b * (a * c).sqrt(); b * (a * c).sqrt(), c];
            let p2 = dmatrix![d, e * (d * f).sqrt(); e * (d * f).sqrt(), f];
            let base = ci_weights(&[p1.clone(), p2.clone()]).unwrap();
            let scaled = ci_weights(&[&p1 * scale, &p2 * scale]).unwrap();
            for (w0, w1) in base.weights.iter().zip(&scaled.weights) {
                prop_assert!((w0 - w1).abs().max() < 1e-10 * (1.0 + w0.abs().max()));
            }
            let expected = &base.reported_cov * scale;
            prop_assert!(
                (&scaled.reported_cov - &expected).abs().max()
                    < 1e-10 * (1.0 + expected.abs().max())
            );
        }
    }
}
