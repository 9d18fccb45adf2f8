//! Storage formats and their exact block layouts.
//!
//! Every format stores weights in fixed-size blocks. Legacy formats use
//! 32-weight blocks carrying an f16 scale (and an f16 offset for the `_1`
//! variants). K-quant formats use 256-weight super-blocks whose sub-block
//! scales are themselves quantized against f16 super-scales.
//!
//! | Format | Weights/block | Bytes/block | bpw     |
//! |--------|---------------|-------------|---------|
//! | F32    | 1             | 4           | 32      |
//! | F16    | 1             | 2           | 16      |
//! | Q4_0   | 32            | 18          | 4.5     |
//! | Q4_1   | 32            | 20          | 5.0     |
//! | Q5_0   | 32            | 22          | 5.5     |
//! | Q5_1   | 32            | 24          | 6.0     |
//! | Q8_0   | 32            | 34          | 8.5     |
//! | Q3_K   | 256           | 110         | 3.4375  |
//! | Q4_K   | 256           | 144         | 4.5     |
//! | Q5_K   | 256           | 176         | 5.5     |
//! | Q6_K   | 256           | 210         | 6.5625  |

use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};

/// Weights per legacy block.
pub const QK: usize = 32;
/// Weights per K-quant super-block.
pub const QK_K: usize = 256;

#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Format {
    F32,
    F16,
    Q4_0,
    Q4_1,
    Q5_0,
    Q5_1,
    Q8_0,
    Q3_K,
    Q4_K,
    Q5_K,
    Q6_K,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantKind {
    /// Stored as real numbers.
    Float,
    /// Scale only, zero-point fixed at 0.
    Symmetric,
    /// Scale plus offset/minimum.
    Affine,
    /// Two-level: quantized sub-block scales under an f16 super-scale.
    SuperBlock,
}

/// Byte-level description of one block of a format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FormatLayout {
    pub format: Format,
    pub block_weights: usize,
    pub block_bytes: usize,
    pub code_bits: u32,
    pub has_offset: bool,
    pub sub_blocks: usize,
    /// Bits of each quantized sub-block scale (K-quants only, else 0).
    pub scale_bits: u32,
    /// Bits of each quantized sub-block minimum (K-quants only, else 0).
    pub min_bits: u32,
    pub kind: QuantKind,
}

impl FormatLayout {
    pub fn bits_per_weight(&self) -> f64 {
        8.0 * self.block_bytes as f64 / self.block_weights as f64
    }

    pub fn sub_block_weights(&self) -> usize {
        self.block_weights / self.sub_blocks
    }

    /// Number of code levels, `2^code_bits`.
    pub fn levels(&self) -> u32 {
        if self.code_bits >= 32 {
            u32::MAX
        } else {
            1 << self.code_bits
        }
    }

    pub fn is_quantized(&self) -> bool {
        self.kind != QuantKind::Float
    }

    /// Payload bytes for `elements` weights. `None` if not block aligned.
    pub fn payload_bytes(&self, elements: usize) -> Option<usize> {
        elements.is_multiple_of(self.block_weights)
            .then(|| elements / self.block_weights * self.block_bytes)
    }
}

#[allow(clippy::too_many_arguments)]
const fn layout(
    format: Format,
    block_weights: usize,
    block_bytes: usize,
    code_bits: u32,
    has_offset: bool,
    sub_blocks: usize,
    scale_bits: u32,
    min_bits: u32,
    kind: QuantKind,
) -> FormatLayout {
    FormatLayout {
        format,
        block_weights,
        block_bytes,
        code_bits,
        has_offset,
        sub_blocks,
        scale_bits,
        min_bits,
        kind,
    }
}

impl Format {
    pub const ALL: [Format; 11] = [
        Format::F32,
        Format::F16,
        Format::Q4_0,
        Format::Q4_1,
        Format::Q5_0,
        Format::Q5_1,
        Format::Q8_0,
        Format::Q3_K,
        Format::Q4_K,
        Format::Q5_K,
        Format::Q6_K,
    ];

    pub const fn layout(self) -> FormatLayout {
        use QuantKind::*;
        match self {
            Format::F32 => layout(self, 1, 4, 32, false, 1, 0, 0, Float),
            Format::F16 => layout(self, 1, 2, 16, false, 1, 0, 0, Float),
            Format::Q4_0 => layout(self, QK, 18, 4, false, 1, 0, 0, Symmetric),
            Format::Q4_1 => layout(self, QK, 20, 4, true, 1, 0, 0, Affine),
            Format::Q5_0 => layout(self, QK, 22, 5, false, 1, 0, 0, Symmetric),
            Format::Q5_1 => layout(self, QK, 24, 5, true, 1, 0, 0, Affine),
            Format::Q8_0 => layout(self, QK, 34, 8, false, 1, 0, 0, Symmetric),
            Format::Q3_K => layout(self, QK_K, 110, 3, false, 16, 6, 0, SuperBlock),
            Format::Q4_K => layout(self, QK_K, 144, 4, true, 8, 6, 6, SuperBlock),
            Format::Q5_K => layout(self, QK_K, 176, 5, true, 8, 6, 6, SuperBlock),
            Format::Q6_K => layout(self, QK_K, 210, 6, false, 16, 8, 0, SuperBlock),
        }
    }

    pub const fn block_weights(self) -> usize {
        self.layout().block_weights
    }

    pub const fn block_bytes(self) -> usize {
        self.layout().block_bytes
    }

    /// GGML tensor type id as stored in GGUF tensor infos.
    pub const fn ggml_type(self) -> u32 {
        match self {
            Format::F32 => 0,
            Format::F16 => 1,
            Format::Q4_0 => 2,
            Format::Q4_1 => 3,
            Format::Q5_0 => 6,
            Format::Q5_1 => 7,
            Format::Q8_0 => 8,
            Format::Q3_K => 11,
            Format::Q4_K => 12,
            Format::Q5_K => 13,
            Format::Q6_K => 14,
        }
    }

    pub fn from_ggml_type(id: u32) -> Option<Format> {
        Format::ALL.into_iter().find(|f| f.ggml_type() == id)
    }

    pub const fn name(self) -> &'static str {
        match self {
            Format::F32 => "F32",
            Format::F16 => "F16",
            Format::Q4_0 => "Q4_0",
            Format::Q4_1 => "Q4_1",
            Format::Q5_0 => "Q5_0",
            Format::Q5_1 => "Q5_1",
            Format::Q8_0 => "Q8_0",
            Format::Q3_K => "Q3_K",
            Format::Q4_K => "Q4_K",
            Format::Q5_K => "Q5_K",
            Format::Q6_K => "Q6_K",
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Format::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownFormat(s.into()))
    }
}
