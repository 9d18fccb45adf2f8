use alloc::string::String;

use crate::format::Format;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("unknown quantization scheme `{0}` (valid: {valid})", valid = crate::scheme::valid_scheme_list())]
    UnknownScheme(String),
    #[error("unknown tensor format `{0}`")]
    UnknownFormat(String),
    #[error("cannot derive a tensor role from `{0}`")]
    UnknownRole(String),
    #[error("unknown layer selector `{0}`")]
    UnknownSelector(String),
    #[error("tensor `{name}`: dimension {dim} is not a multiple of the {format} block size {block}")]
    NotBlockAligned {
        name: String,
        format: Format,
        dim: usize,
        block: usize,
    },
    #[error("tensor `{name}`: {len} values do not match shape product {expected}")]
    ShapeMismatch {
        name: String,
        len: usize,
        expected: usize,
    },
    #[error("tensor `{name}`: invalid shape (empty or zero-sized dimension)")]
    InvalidShape { name: String },
    #[error("non-finite input value at index {index}")]
    NonFinite { index: usize },
    #[error("{format} payload has {actual} bytes, expected {expected}")]
    PayloadLength {
        format: Format,
        actual: usize,
        expected: usize,
    },
    #[error("expected {expected} values, got {actual}")]
    Length { expected: usize, actual: usize },
    #[error("tensor inventory is empty")]
    EmptyInventory,
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("{field} = {value} is outside [0, 100]")]
    PercentRange { field: &'static str, value: f64 },
    #[error("perplexity = {0} must be >= 1")]
    PerplexityRange(f64),
    #[error("missing benchmark score `{0}`")]
    MissingScore(&'static str),
    #[error("log-probability stream is empty")]
    EmptyStream,
    #[error("log-probability at position {0} is not finite or is positive")]
    InvalidLogProb(usize),
    #[error("no quantized kernel for {0}")]
    UnsupportedKernel(Format),
    #[error("activations prepared for the wrong weight format {0}")]
    ActivationKind(Format),
    #[error("recommendation needs at least one constraint or an objective")]
    NoConstraints,
    #[error("IFEval aggregate needs exactly 4 accuracies, got {0}")]
    IfevalCount(usize),
    #[error("IFEval score {reported} disagrees with the mean of its sub-scores ({mean})")]
    IfevalMismatch { reported: f64, mean: f64 },
    #[error("no row for baseline scheme `{0}`")]
    MissingBaseline(String),
    #[error("scheme `{0}` appears more than once")]
    DuplicateScheme(String),
    #[error("`{field}` of `{scheme}` is required here")]
    MissingField { scheme: String, field: &'static str },
    #[error("{0} must be a finite number")]
    NonFiniteField(&'static str),
}
