//! Fixed-step fourth-order Runge-Kutta propagation of the estimate mean and
//! covariance between measurement epochs.
//!
//! Two right-hand sides are supported: the mean ODE `dx/dt = F(t) x` and the
//! Lyapunov ODE `dP/dt = F(t) P + P F(t)ᵀ + G Q Gᵀ`. Cross-covariance blocks
//! satisfy the same Lyapunov equation but are genuinely non-symmetric, so the
//! per-step symmetrization applied to covariance propagation can be switched
//! off for them.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::StateModel;
use crate::numeric::symmetrize_in_place;

/// State carried through the moment ODEs: a mean vector or a covariance
/// matrix, depending on the ODE kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Moment {
    Mean(DVector<f64>),
    Cov(DMatrix<f64>),
}

impl Moment {
    pub fn into_mean(self) -> DVector<f64> {
        match self {
            Moment::Mean(v) => v,
            Moment::Cov(_) => panic!("expected a mean state"),
        }
    }

    pub fn into_cov(self) -> DMatrix<f64> {
        match self {
            Moment::Cov(m) => m,
            Moment::Mean(_) => panic!("expected a covariance state"),
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            Moment::Mean(v) => v.iter().all(|x| x.is_finite()),
            Moment::Cov(m) => m.iter().all(|x| x.is_finite()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentKind {
    Mean,
    Lyapunov,
}

/// One moment ODE bound to a state model.
pub struct MomentOde<'a> {
    model: &'a StateModel,
    kind: MomentKind,
    /// Cached `G Q Gᵀ` for the Lyapunov right-hand side.
    diffusion: DMatrix<f64>,
    /// Symmetrize after every step in `propagate_interval`. On for local
    /// covariances, off for cross-covariance blocks.
    symmetrize: bool,
}

impl<'a> MomentOde<'a> {
    pub fn mean(model: &'a StateModel) -> Self {
        MomentOde {
            model,
            kind: MomentKind::Mean,
            diffusion: DMatrix::zeros(0, 0),
            symmetrize: false,
        }
    }

    pub fn lyapunov(model: &'a StateModel) -> Self {
        MomentOde {
            model,
            kind: MomentKind::Lyapunov,
            diffusion: model.diffusion(),
            symmetrize: true,
        }
    }

    /// Lyapunov ODE for cross-covariance blocks: same right-hand side, no
    /// symmetrization (the blocks are not symmetric).
    pub fn cross_covariance(model: &'a StateModel) -> Self {
        MomentOde {
            symmetrize: false,
            ..Self::lyapunov(model)
        }
    }

    pub fn kind(&self) -> MomentKind {
        self.kind
    }

    fn rhs(&self, t: f64, state: &Moment) -> Moment {
        let drift = self.model.drift.at(t);
        match (self.kind, state) {
            (MomentKind::Mean, Moment::Mean(x)) => Moment::Mean(&*drift * x),
            (MomentKind::Lyapunov, Moment::Cov(p)) => {
                Moment::Cov(&*drift * p + p * drift.transpose() + &self.diffusion)
            }
            _ => panic!("moment state does not match ODE kind"),
        }
    }

    /// One classical RK4 step of size `h` from time `t`.
    pub fn rk4_step(&self, state: &Moment, t: f64, h: f64) -> Result<Moment> {
        debug_assert!(h > 0.0);
        let overflow = || Error::NumericOverflow { t, h };

        let k1 = self.rhs(t, state);
        let k2 = self.rhs(t + 0.5 * h, &axpy(state, 0.5 * h, &k1));
        let k3 = self.rhs(t + 0.5 * h, &axpy(state, 0.5 * h, &k2));
        let k4 = self.rhs(t + h, &axpy(state, h, &k3));
        for k in [&k1, &k2, &k3, &k4] {
            if !k.is_finite() {
                return Err(overflow());
            }
        }

        let next = match (state, k1, k2, k3, k4) {
            (Moment::Mean(y), Moment::Mean(k1), Moment::Mean(k2), Moment::Mean(k3), Moment::Mean(k4)) => {
                Moment::Mean(y + (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (h / 6.0))
            }
            (Moment::Cov(y), Moment::Cov(k1), Moment::Cov(k2), Moment::Cov(k3), Moment::Cov(k4)) => {
                Moment::Cov(y + (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (h / 6.0))
            }
            _ => unreachable!(),
        };
        if !next.is_finite() {
            return Err(overflow());
        }
        Ok(next)
    }

    /// Propagate from `t0` to `t1` on a fixed grid: full steps of `dt`, then
    /// one shortened step landing exactly on `t1`. Covariance states are
    /// symmetrized after every step when the ODE calls for it.
    pub fn propagate_interval(&self, state: &Moment, t0: f64, t1: f64, dt: f64) -> Result<Moment> {
        assert!(t1 > t0, "propagate_interval requires t1 > t0");
        assert!(dt > 0.0, "propagate_interval requires dt > 0");
        let mut current = state.clone();
        for (t, h) in step_grid(t0, t1, dt) {
            current = self.rk4_step(&current, t, h)?;
            if self.symmetrize {
                if let Moment::Cov(ref mut p) = current {
                    symmetrize_in_place(p);
                }
            }
        }
        Ok(current)
    }
}

/// `state + scale * delta`, elementwise over either moment representation.
fn axpy(state: &Moment, scale: f64, delta: &Moment) -> Moment {
    match (state, delta) {
        (Moment::Mean(y), Moment::Mean(d)) => Moment::Mean(y + d * scale),
        (Moment::Cov(y), Moment::Cov(d)) => Moment::Cov(y + d * scale),
        _ => unreachable!(),
    }
}

/// The `(start_time, step)` grid covering `[t0, t1]`: `floor((t1-t0)/dt)`
/// full steps, then one shortened step landing exactly on `t1`. When the span
/// is an exact multiple of `dt` the last full step is the landing step.
pub fn step_grid(t0: f64, t1: f64, dt: f64) -> Vec<(f64, f64)> {
    debug_assert!(t1 > t0 && dt > 0.0);
    let span = t1 - t0;
    let eps = span * 1e-12;
    let mut steps = Vec::with_capacity((span / dt) as usize + 1);
    let mut t = t0;
    loop {
        let remaining = t1 - t;
        if remaining <= eps {
            break;
        }
        if remaining > dt * (1.0 + 1e-9) {
            steps.push((t, dt));
            t += dt;
        } else {
            steps.push((t, remaining));
            break;
        }
    }
    steps
}
