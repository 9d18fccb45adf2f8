//! Block quantization formats, size accounting, matrix-vector kernels and
//! evaluation metrics for GGUF-style quantized language models.
//!
//! Everything here works without `std`; enabling the `std` feature only adds
//! runtime CPU feature detection for the kernels.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is used on purpose so NaN fails range checks
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod accounting;
pub mod codecs;
pub mod error;
pub mod format;
pub mod kernels;
pub mod metrics;
pub mod mix;
pub mod scheme;
pub mod tensor;

pub use accounting::{bits_per_weight, predict_model_size, size_reduction, Inventory, SizeEstimate, TensorSpec};
pub use codecs::{
    dequantize_block, dequantize_tensor, error_stats, quantize_block, quantize_tensor, quantize_tensor_for_scheme,
    ErrorStats,
};
pub use error::{Error, Result};
pub use kernels::{matvec_quantized, quantize_activations_q8, ActivationBlockQ8, Isa};
pub use format::{Format, FormatLayout, QK, QK_K};
pub use metrics::{
    avg_loss, avg_score, emit_report, ifeval_aggregate, pareto_frontier, perplexity, recommend, BenchmarkRow,
};
pub use mix::{resolve_layout, LayerSelector, MixRule, MixTable, SchemeMix, TensorRole};
pub use scheme::QuantScheme;
pub use tensor::{QuantizedTensor, TensorF32};
