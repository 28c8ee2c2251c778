use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for key `{key}`")]
    BadValue { key: String, value: String },
    #[error("line {line}: expected `key = value`, found `{text}`")]
    Syntax { line: usize, text: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrderError {
    #[error("order quantity must be positive")]
    ZeroQuantity,
    #[error("order price must be positive and finite (got {0})")]
    BadPrice(f64),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("policy tables differ in shape: {left:?} vs {right:?}")]
pub struct ShapeMismatch {
    pub left: (usize, usize),
    pub right: (usize, usize),
}
