use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid value {0}: expected a finite number")]
    InvalidValue(f64),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("label {label} out of range for {outputs} output neurons")]
    LabelOutOfRange { label: usize, outputs: usize },

    #[error("unbound variable `{0}` in plasticity rule")]
    UnboundVariable(&'static str),

    #[error("rule syntax error on line {line}: {msg}")]
    RuleSyntax { line: usize, msg: String },
}

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { context, expected, got })
    }
}
