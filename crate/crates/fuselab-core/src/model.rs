//! System model, scenario configuration, and validation.
//!
//! A scenario couples one continuous-time linear state model with N discrete
//! sensors that all observe the same state at a shared set of measurement
//! epochs. Everything here is immutable after construction and safe to share
//! across worker threads.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{is_psd_within, spd_cholesky, sym_tolerance};

/// Drift matrix of the state ODE, either a constant matrix or a callable of
/// time. Scenario files only carry constants; callables are for library users
/// with genuinely time-varying dynamics.
#[derive(Clone)]
pub enum Drift {
    Constant(DMatrix<f64>),
    TimeVarying(Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>),
}

impl Drift {
    /// Evaluate at time `t`. Constant drift is borrowed, not copied.
    pub fn at(&self, t: f64) -> std::borrow::Cow<'_, DMatrix<f64>> {
        match self {
            Drift::Constant(m) => std::borrow::Cow::Borrowed(m),
            Drift::TimeVarying(f) => std::borrow::Cow::Owned(f(t)),
        }
    }

    pub fn constant(&self) -> Option<&DMatrix<f64>> {
        match self {
            Drift::Constant(m) => Some(m),
            Drift::TimeVarying(_) => None,
        }
    }
}

impl fmt::Debug for Drift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Drift::Constant(m) => f.debug_tuple("Constant").field(m).finish(),
            Drift::TimeVarying(_) => f.write_str("TimeVarying(<fn>)"),
        }
    }
}

impl PartialEq for Drift {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Drift::Constant(a), Drift::Constant(b)) => a == b,
            (Drift::TimeVarying(a), Drift::TimeVarying(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

/// Continuous-time linear dynamics `dx = F(t) x dt + G dw`, where `w` is
/// white noise with intensity `Q` (units of state² per unit time).
#[derive(Debug, Clone, PartialEq)]
pub struct StateModel {
    /// State dimension n.
    pub dim: usize,
    /// Drift matrix F(t), n x n.
    pub drift: Drift,
    /// Noise gain G, n x p.
    pub noise_gain: DMatrix<f64>,
    /// White-noise intensity Q, p x p, symmetric PSD.
    pub noise_intensity: DMatrix<f64>,
}

impl StateModel {
    /// Time-invariant model from constant matrices.
    pub fn lti(drift: DMatrix<f64>, noise_gain: DMatrix<f64>, noise_intensity: DMatrix<f64>) -> Self {
        StateModel {
            dim: drift.nrows(),
            drift: Drift::Constant(drift),
            noise_gain,
            noise_intensity,
        }
    }

    /// The diffusion matrix `G Q Gᵀ` entering the covariance ODE.
    pub fn diffusion(&self) -> DMatrix<f64> {
        &self.noise_gain * &self.noise_intensity * self.noise_gain.transpose()
    }
}

/// One discrete-time sensor: `y = H x + v`, `v ~ N(0, R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorModel {
    /// 1-based sensor label, used in diagnostics.
    pub index: usize,
    /// Observation matrix H, m x n.
    pub observation: DMatrix<f64>,
    /// Measurement noise covariance R, m x m, symmetric positive definite.
    pub noise_cov: DMatrix<f64>,
}

impl SensorModel {
    pub fn new(index: usize, observation: DMatrix<f64>, noise_cov: DMatrix<f64>) -> Self {
        SensorModel {
            index,
            observation,
            noise_cov,
        }
    }

    /// Measurement dimension m.
    pub fn obs_dim(&self) -> usize {
        self.observation.nrows()
    }
}

/// Gaussian prior on the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// A state estimate (mean and error covariance) at one time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub t: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Complete simulation/filtering configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub state: StateModel,
    pub init: InitialBelief,
    pub sensors: Vec<SensorModel>,
    /// Measurement epochs, strictly increasing.
    pub epochs: Vec<f64>,
    /// Integration step between epochs.
    pub dt: f64,
    pub mc_runs: usize,
    pub seed: u64,
}

impl Scenario {
    pub fn n_sensors(&self) -> usize {
        self.sensors.len()
    }

    pub fn dim(&self) -> usize {
        self.state.dim
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// One scenario invariant violation: a machine-readable code plus a human
/// message. Violations are data, not errors; `validate_scenario` never fails.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    DimZero,
    DriftShape,
    NoiseGainShape,
    NoiseIntensityShape,
    QNotPsd,
    InitMeanLen,
    InitCovShape,
    P0NotPsd,
    NoSensors,
    ObservationShape { sensor: usize },
    NoiseCovShape { sensor: usize },
    RNotPositiveDefinite { sensor: usize },
    EpochsEmpty,
    EpochsNotStrictlyIncreasing { index: usize },
    DtNotPositive,
    DtExceedsEpochGap,
    McRunsZero,
    NonFinite { field: &'static str },
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ViolationKind::*;
        match self {
            DimZero => write!(f, "n_zero"),
            DriftShape => write!(f, "F_shape_mismatch"),
            NoiseGainShape => write!(f, "G_shape_mismatch"),
            NoiseIntensityShape => write!(f, "Q_shape_mismatch"),
            QNotPsd => write!(f, "Q_not_psd"),
            InitMeanLen => write!(f, "x0_len_mismatch"),
            InitCovShape => write!(f, "P0_shape_mismatch"),
            P0NotPsd => write!(f, "P0_not_psd"),
            NoSensors => write!(f, "no_sensors"),
            ObservationShape { sensor } => write!(f, "H_shape_mismatch(sensor={sensor})"),
            NoiseCovShape { sensor } => write!(f, "R_shape_mismatch(sensor={sensor})"),
            RNotPositiveDefinite { sensor } => {
                write!(f, "R_not_positive_definite(sensor={sensor})")
            }
            EpochsEmpty => write!(f, "epochs_empty"),
            EpochsNotStrictlyIncreasing { index } => {
                write!(f, "epochs_not_strictly_increasing(index={index})")
            }
            DtNotPositive => write!(f, "dt_not_positive"),
            DtExceedsEpochGap => write!(f, "dt_exceeds_epoch_gap"),
            McRunsZero => write!(f, "mc_runs_zero"),
            NonFinite { field } => write!(f, "non_finite(field={field})"),
        }
    }
}

impl Violation {
    fn new(kind: ViolationKind, message: impl Into<String>) -> Self {
        Violation {
            kind,
            message: message.into(),
        }
    }

    /// Machine-readable code, e.g. `R_not_positive_definite(sensor=2)`.
    pub fn code(&self) -> String {
        self.kind.to_string()
    }
}

fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
}

/// Check every scenario invariant; returns the full list of violations in a
/// deterministic order (empty means valid). Pure: identical inputs give
/// identical lists.
pub fn validate_scenario(s: &Scenario) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = s.state.dim;

    if n == 0 {
        out.push(Violation::new(ViolationKind::DimZero, "state dimension must be positive"));
        return out; // nothing else is checkable
    }

    // Drift shape, evaluated at the horizon ends for time-varying models.
    let probe_times: Vec<f64> = match s.epochs.as_slice() {
        [] => vec![0.0],
        [first, .., last] => vec![*first, *last],
        [only] => vec![*only],
    };
    for t in probe_times {
        let f = s.state.drift.at(t);
        if f.nrows() != n || f.ncols() != n {
            out.push(Violation::new(
                ViolationKind::DriftShape,
                format!("F at t={t} is {}x{}, expected {n}x{n}", f.nrows(), f.ncols()),
            ));
            break;
        }
        if !all_finite(&f) {
            out.push(Violation::new(
                ViolationKind::NonFinite { field: "F" },
                format!("F at t={t} contains non-finite entries"),
            ));
            break;
        }
    }

    let p = s.state.noise_intensity.nrows();
    if s.state.noise_gain.nrows() != n || s.state.noise_gain.ncols() != p {
        out.push(Violation::new(
            ViolationKind::NoiseGainShape,
            format!(
                "G is {}x{}, expected {n}x{p}",
                s.state.noise_gain.nrows(),
                s.state.noise_gain.ncols()
            ),
        ));
    } else if !all_finite(&s.state.noise_gain) {
        out.push(Violation::new(
            ViolationKind::NonFinite { field: "G" },
            "G contains non-finite entries",
        ));
    }

    let q = &s.state.noise_intensity;
    if q.ncols() != p {
        out.push(Violation::new(
            ViolationKind::NoiseIntensityShape,
            format!("Q is {}x{}, expected square", q.nrows(), q.ncols()),
        ));
    } else if !all_finite(q) {
        out.push(Violation::new(
            ViolationKind::NonFinite { field: "Q" },
            "Q contains non-finite entries",
        ));
    } else if !is_psd_within(q, sym_tolerance(q)) {
        out.push(Violation::new(
            ViolationKind::QNotPsd,
            "Q must be symmetric positive semidefinite",
        ));
    }

    if s.init.mean.len() != n {
        out.push(Violation::new(
            ViolationKind::InitMeanLen,
            format!("x0 has length {}, expected {n}", s.init.mean.len()),
        ));
    }
    let p0 = &s.init.cov;
    if p0.nrows() != n || p0.ncols() != n {
        out.push(Violation::new(
            ViolationKind::InitCovShape,
            format!("P0 is {}x{}, expected {n}x{n}", p0.nrows(), p0.ncols()),
        ));
    } else if !all_finite(p0) {
        out.push(Violation::new(
            ViolationKind::NonFinite { field: "P0" },
            "P0 contains non-finite entries",
        ));
    } else if !is_psd_within(p0, sym_tolerance(p0)) {
        out.push(Violation::new(
            ViolationKind::P0NotPsd,
            "P0 must be symmetric positive semidefinite",
        ));
    }

    if s.sensors.is_empty() {
        out.push(Violation::new(ViolationKind::NoSensors, "at least one sensor is required"));
    }
    for (pos, sensor) in s.sensors.iter().enumerate() {
        let label = pos + 1;
        let m = sensor.observation.nrows();
        if m == 0 || sensor.observation.ncols() != n {
            out.push(Violation::new(
                ViolationKind::ObservationShape { sensor: label },
                format!(
                    "sensor {label}: H is {}x{}, expected m x {n} with m >= 1",
                    m,
                    sensor.observation.ncols()
                ),
            ));
            continue;
        }
        if !all_finite(&sensor.observation) {
            out.push(Violation::new(
                ViolationKind::NonFinite { field: "H" },
                format!("sensor {label}: H contains non-finite entries"),
            ));
            continue;
        }
        let r = &sensor.noise_cov;
        if r.nrows() != m || r.ncols() != m {
            out.push(Violation::new(
                ViolationKind::NoiseCovShape { sensor: label },
                format!("sensor {label}: R is {}x{}, expected {m}x{m}", r.nrows(), r.ncols()),
            ));
        } else if !all_finite(r) {
            out.push(Violation::new(
                ViolationKind::NonFinite { field: "R" },
                format!("sensor {label}: R contains non-finite entries"),
            ));
        } else if spd_cholesky(r).is_none() {
            out.push(Violation::new(
                ViolationKind::RNotPositiveDefinite { sensor: label },
                format!("sensor {label}: R must be symmetric positive definite"),
            ));
        }
    }

    if s.epochs.is_empty() {
        out.push(Violation::new(ViolationKind::EpochsEmpty, "at least one epoch is required"));
    }
    for (i, pair) in s.epochs.windows(2).enumerate() {
        if pair[1] <= pair[0] {
            out.push(Violation::new(
                ViolationKind::EpochsNotStrictlyIncreasing { index: i + 1 },
                format!("epoch {} ({}) does not exceed epoch {} ({})", i + 1, pair[1], i, pair[0]),
            ));
        }
    }

    if s.dt <= 0.0 || s.dt.is_nan() {
        out.push(Violation::new(ViolationKind::DtNotPositive, format!("dt = {} must be > 0", s.dt)));
    } else if let Some(min_gap) = s
        .epochs
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|g| *g > 0.0)
        .min_by(|a, b| a.total_cmp(b))
    {
        if s.dt > min_gap * (1.0 + 1e-12) {
            out.push(Violation::new(
                ViolationKind::DtExceedsEpochGap,
                format!("dt = {} exceeds the smallest epoch gap {min_gap}", s.dt),
            ));
        }
    }

    if s.mc_runs == 0 {
        out.push(Violation::new(ViolationKind::McRunsZero, "mc_runs must be positive"));
    }

    out
}

// ---------------------------------------------------------------------------
// Scenario file format
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    n: usize,
    #[serde(rename = "F")]
    f: Vec<Vec<f64>>,
    #[serde(rename = "G")]
    g: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    q: Vec<Vec<f64>>,
    x0: Vec<f64>,
    #[serde(rename = "P0")]
    p0: Vec<Vec<f64>>,
    dt: f64,
    seed: u64,
    mc_runs: usize,
    epochs: EpochSpec,
    sensors: Vec<SensorFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum EpochSpec {
    Explicit(Vec<f64>),
    Uniform { t0: f64, step: f64, count: usize },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SensorFile {
    #[serde(rename = "H")]
    h: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    r: Vec<Vec<f64>>,
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(Error::Parse(format!("{what} has no rows")));
    }
    let ncols = rows[0].len();
    if ncols == 0 {
        return Err(Error::Parse(format!("{what} has empty rows")));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(Error::Parse(format!(
                "{what} row {i} has {} entries, expected {ncols}",
                row.len()
            )));
        }
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

impl EpochSpec {
    fn expand(&self) -> Vec<f64> {
        match self {
            EpochSpec::Explicit(v) => v.clone(),
            EpochSpec::Uniform { t0, step, count } => {
                (0..*count).map(|k| t0 + (k as f64) * step).collect()
            }
        }
    }
}

fn scenario_from_file(file: ScenarioFile) -> Result<Scenario> {
    let drift = rows_to_matrix(&file.f, "F")?;
    let noise_gain = rows_to_matrix(&file.g, "G")?;
    let noise_intensity = rows_to_matrix(&file.q, "Q")?;
    let p0 = rows_to_matrix(&file.p0, "P0")?;
    let sensors = file
        .sensors
        .iter()
        .enumerate()
        .map(|(i, sf)| {
            Ok(SensorModel::new(
                i + 1,
                rows_to_matrix(&sf.h, &format!("sensor {} H", i + 1))?,
                rows_to_matrix(&sf.r, &format!("sensor {} R", i + 1))?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Scenario {
        state: StateModel {
            dim: file.n,
            drift: Drift::Constant(drift),
            noise_gain,
            noise_intensity,
        },
        init: InitialBelief {
            mean: DVector::from_vec(file.x0),
            cov: p0,
        },
        sensors,
        epochs: file.epochs.expand(),
        dt: file.dt,
        mc_runs: file.mc_runs,
        seed: file.seed,
    })
}

/// Parse a scenario from TOML text and validate it.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let scenario = scenario_from_file(file)?;
    let violations = validate_scenario(&scenario);
    if violations.is_empty() {
        Ok(scenario)
    } else {
        Err(Error::InvalidScenario(violations))
    }
}

/// Load and validate a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let text = std::fs::read_to_string(path.as_ref())?;
    parse_scenario(&text)
}

/// Serialize a scenario back to the file format. Fails for time-varying
/// drift, which has no file representation.
pub fn scenario_to_toml(s: &Scenario) -> Result<String> {
    let drift = s
        .state
        .drift
        .constant()
        .ok_or_else(|| Error::Domain("time-varying drift cannot be serialized".into()))?;
    let file = ScenarioFile {
        n: s.state.dim,
        f: matrix_to_rows(drift),
        g: matrix_to_rows(&s.state.noise_gain),
        q: matrix_to_rows(&s.state.noise_intensity),
        x0: s.init.mean.iter().copied().collect(),
        p0: matrix_to_rows(&s.init.cov),
        dt: s.dt,
        seed: s.seed,
        mc_runs: s.mc_runs,
        epochs: EpochSpec::Explicit(s.epochs.clone()),
        sensors: s
            .sensors
            .iter()
            .map(|sm| SensorFile {
                h: matrix_to_rows(&sm.observation),
                r: matrix_to_rows(&sm.noise_cov),
            })
            .collect(),
    };
    toml::to_string(&file).map_err(|e| Error::Parse(e.to_string()))
}
