use thiserror::Error;

use crate::scalar::Mode;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("operation `{op}` is not available in {mode:?} mode")]
    Mode { op: &'static str, mode: Mode },

    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    Shape {
        context: &'static str,
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("a sequence needs at least 2 tokens, got {0}")]
    SequenceTooShort(usize),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid activation: {0}")]
    InvalidActivation(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("layer budget exceeded: construction needs {needed} sublayers, cap is {cap}")]
    BudgetExceeded { needed: usize, cap: usize },

    #[error("enumeration budget exceeded: {needed} points, cap is {cap}")]
    EnumerationBudget { needed: u128, cap: u128 },

    #[error("value-mapping windows collide: ids {first} and {second} are closer than one grid step")]
    WindowCollision { first: String, second: String },

    #[error("value-mapping output column with id {id} falls into the later window around {window}")]
    OutputCollision { id: String, window: String },

    #[error("target function is not permutation equivariant at grid point {0}")]
    NotEquivariant(String),

    #[error("non-finite value produced by target function")]
    NonFinite,

    #[error("sublayer kind `{0}` cannot be converted")]
    UnsupportedSublayer(&'static str),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
