use thiserror::Error;

use crate::model::Violation;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid scenario: {}", summarize(.0))]
    InvalidScenario(Vec<Violation>),

    #[error("{0}")]
    Domain(String),

    #[error("non-finite value during integration at t = {t}, step h = {h}")]
    NumericOverflow { t: f64, h: f64 },

    #[error("singular innovation covariance{}", sensor_tag(.sensor))]
    SingularInnovation { sensor: Option<usize> },

    #[error("covariance for sensor {sensor} is not positive definite")]
    NotPositiveDefinite { sensor: usize },

    #[error("fusion weight solve failed: {0}")]
    FusionSingular(String),
}

pub type Result<T> = std::result::Result<T, Error>;

fn summarize(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.code())
        .collect::<Vec<_>>()
        .join(", ")
}

fn sensor_tag(sensor: &Option<usize>) -> String {
    match sensor {
        Some(i) => format!(" (sensor {i})"),
        None => String::new(),
    }
}
