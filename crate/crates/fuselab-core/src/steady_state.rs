//! Closed-form steady-state values for the scalar two-sensor system
//! `dx = -x dt + dw` with noise intensity `q`, observed by two direct sensors
//! with variances `r1`, `r2`.
//!
//! These formulas are evaluated exactly as written, independently of the
//! dynamic filter code path, so the two routes cross-check each other: the
//! local variances are the fusion of the stationary state variance `q/2` with
//! a single measurement, the cross term carries the shared process noise, and
//! the fused variances follow from the weighted-sum error covariance.

use crate::error::{Error, Result};

/// Every steady-state quantity for one `(q, r1, r2)` triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStateReport {
    pub q: f64,
    pub r1: f64,
    pub r2: f64,
    /// Local error variances.
    pub p11: f64,
    pub p22: f64,
    /// Cross-covariance of the two local errors.
    pub p12: f64,
    /// Optimal fusion weights.
    pub c1: f64,
    pub c2: f64,
    /// Covariance-intersection weights.
    pub w1: f64,
    pub w2: f64,
    /// Fused error variance with the optimal weights.
    pub p_ff: f64,
    /// Actual fused error variance realized by the intersection weights.
    pub p_ci: f64,
}

/// Evaluate the closed forms. All three arguments must be strictly positive.
pub fn steady_state(q: f64, r1: f64, r2: f64) -> Result<SteadyStateReport> {
    for (name, value) in [("q", q), ("r1", r1), ("r2", r2)] {
        if value <= 0.0 || !value.is_finite() {
            return Err(Error::Domain(format!("{name} must be positive, got {value}")));
        }
    }

    let p11 = q * r1 / (q + 2.0 * r1);
    let p22 = q * r2 / (q + 2.0 * r2);
    let p12 = 2.0 * r1 * r2 * q / ((q + 2.0 * r1) * (q + 2.0 * r2));

    let denom = p11 + p22 - 2.0 * p12;
    let c1 = (p22 - p12) / denom;
    let c2 = (p11 - p12) / denom;

    let sq = p11 * p11 + p22 * p22;
    let w1 = p22 * p22 / sq;
    let w2 = p11 * p11 / sq;

    let fused = |a: f64, b: f64| a * a * p11 + 2.0 * a * b * p12 + b * b * p22;
    let p_ff = fused(c1, c2);
    let p_ci = fused(w1, w2);

    Ok(SteadyStateReport {
        q,
        r1,
        r2,
        p11,
        p22,
        p12,
        c1,
        c2,
        w1,
        w2,
        p_ff,
        p_ci,
    })
}

/// Relative accuracy loss of covariance intersection: `(P_CI - P_FF) / P_FF`.
pub fn ci_relative_excess(report: &SteadyStateReport) -> f64 {
    (report.p_ci - report.p_ff) / report.p_ff
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn known_values_to_four_decimals() {
        let report = steady_state(1.0, 5.0, 2.0).unwrap();
        assert!((report.p_ff - 0.3896).abs() < 5e-5, "p_ff = {}", report.p_ff);
        assert!((report.p_ci - 0.3925).abs() < 5e-5, "p_ci = {}", report.p_ci);
    }

    #[test]
    fn covariance_triple_as_exact_rationals() {
        let report = steady_state(1.0, 5.0, 2.0).unwrap();
        assert_relative_eq!(report.p11, 5.0 / 11.0, epsilon = 1e-12);
        assert_relative_eq!(report.p22, 0.4, epsilon = 1e-12);
        assert_relative_eq!(report.p12, 4.0 / 11.0, epsilon = 1e-12);
    }

    #[test]
    fn identical_sensors_collapse_to_even_split() {
        let report = steady_state(1.0, 3.0, 3.0).unwrap();
        assert_relative_eq!(report.c1, 0.5, epsilon = 1e-14);
        assert_relative_eq!(report.c2, 0.5, epsilon = 1e-14);
        assert_relative_eq!(report.w1, 0.5, epsilon = 1e-14);
        assert_relative_eq!(report.w2, 0.5, epsilon = 1e-14);
        assert_relative_eq!(report.p_ff, report.p_ci, epsilon = 1e-15);
        assert_eq!(ci_relative_excess(&report), 0.0);
    }

    #[test]
    fn intersection_loss_is_about_seven_tenths_of_a_percent() {
        let report = steady_state(1.0, 5.0, 2.0).unwrap();
        let excess = ci_relative_excess(&report);
        assert!((0.006..=0.008).contains(&excess), "excess = {excess}");
    }

    #[test]
    fn lopsided_sensors_still_pay_a_positive_price() {
        let report = steady_state(1.0, 100.0, 1.0).unwrap();
        assert!(ci_relative_excess(&report) > 0.0);
    }

    #[test]
    fn weights_sum_to_one() {
        for (q, r1, r2) in [(1.0, 5.0, 2.0), (2.0, 1.0, 3.0), (0.3, 7.0, 0.1)] {
            let report = steady_state(q, r1, r2).unwrap();
            assert!((report.c1 + report.c2 - 1.0).abs() <= 1e-15);
            assert!((report.w1 + report.w2 - 1.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn non_positive_arguments_are_domain_errors() {
        for (q, r1, r2) in [(0.0, 1.0, 1.0), (1.0, -2.0, 1.0), (1.0, 1.0, f64::NAN)] {
            assert!(matches!(steady_state(q, r1, r2), Err(Error::Domain(_))));
        }
    }

    // Grid sweep of the structural inequalities: the intersection never beats
    // the optimal weights, the cross term obeys Cauchy-Schwarz, and fusion
    // never loses to the better sensor.
    #[test]
    fn closed_form_inequalities_hold_on_a_grid() {
        let grid = [0.1, 0.5, 1.0, 2.0, 10.0, 50.0];
        for &q in &grid {
            for &r1 in &grid {
                for &r2 in &grid {
                    let report = steady_state(q, r1, r2).unwrap();
                    let excess = ci_relative_excess(&report);
                    assert!(excess >= -1e-12, "q={q} r1={r1} r2={r2}: excess {excess}");
                    assert!(
                        report.p12 * report.p12 <= report.p11 * report.p22 * (1.0 + 1e-12),
                        "q={q} r1={r1} r2={r2}: cauchy-schwarz"
                    );
                    assert!(
                        report.p_ff <= report.p11.min(report.p22) + 1e-12,
                        "q={q} r1={r1} r2={r2}: fusion worse than best local"
                    );
                }
            }
        }
    }
}
