use alloc::string::String;

pub type Result<T, E = GsnError> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GsnError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("invalid parameter `{name}` = {value}")]
    Param { name: &'static str, value: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unsupported: {0}")]
    Unsupported(&'static str),
    #[error("corrupted state {state} is unreachable (zero marginal probability)")]
    DegenerateSupport { state: usize },
    #[error("chain is not ergodic: {0}")]
    Ergodicity(String),
    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    IterationLimit { iterations: usize, residual: f64 },
    #[error("matrix is singular or numerically degenerate")]
    Singular,
    #[error("tape does not match model: {0}")]
    Consistency(String),
    #[error("non-finite loss at example {example} (lr {lr})")]
    NonFinite { example: usize, lr: f64 },
    #[error("value {value} out of range {lo}..={hi}")]
    OutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("index {index} out of range for dimension {dim}")]
    Index { index: usize, dim: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
}
