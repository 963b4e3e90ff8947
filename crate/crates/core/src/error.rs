use std::fmt;

use thiserror::Error;

/// Errors raised by the contact dynamics engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContactError {
    #[error("dimension mismatch: model has n = {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("non-finite {what} at {at}")]
    NonFinite { what: &'static str, at: StateLabel },

    #[error("singular invariant measure: |H| = {value:e} is below the threshold {threshold:e}")]
    SingularMeasure { value: f64, threshold: f64 },

    #[error("step budget of {max_steps} exhausted at t = {t}")]
    MaxStepsExceeded { max_steps: usize, t: f64 },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("{what} collapsed at t = {t}")]
    Collapse { what: &'static str, t: f64 },

    #[error("Riccati solution escapes to infinity near t = {t} (pole)")]
    RiccatiPole { t: f64 },

    #[error("singular chart: {0}")]
    SingularChart(String),

    #[error("t = {t} lies outside the solved interval [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("branch error: {0}")]
    Branch(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("not a contact transformation: {0}")]
    NotContact(String),

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
}

/// Compact rendering of an extended state for error messages.
#[derive(Debug, Clone, PartialEq)]
pub struct StateLabel {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub s: f64,
    pub t: f64,
}

impl fmt::Display for StateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(q = {:?}, p = {:?}, S = {}, t = {})", self.q, self.p, self.s, self.t)
    }
}

pub type Result<T> = std::result::Result<T, ContactError>;
