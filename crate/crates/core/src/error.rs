use thiserror::Error;

/// Errors raised when a model is asked to evaluate outside its domain.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("`{name}` = {value} is out of range: expected {expected}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("`{name}` = {value} is invalid: expected {expected}")]
    InvalidCount {
        name: &'static str,
        value: u64,
        expected: &'static str,
    },

    #[error("vector has {got} entries, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("linear solve failed: {0}")]
    Solver(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::OutOfRange {
            name,
            value,
            expected: "a probability in [0, 1]",
        })
    }
}

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::OutOfRange {
            name,
            value,
            expected: "a finite value > 0",
        })
    }
}

pub(crate) fn check_non_negative(name: &'static str, value: f64) -> Result<f64> {
    if value >= 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::OutOfRange {
            name,
            value,
            expected: "a finite value >= 0",
        })
    }
}
