//! Named quantization schemes, as passed to a quantizer on the command line.

use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::format::{Format, QuantKind};

#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum QuantScheme {
    F16,
    Q3_K_S,
    Q3_K_M,
    Q3_K_L,
    Q4_0,
    Q4_1,
    Q4_K_S,
    Q4_K_M,
    Q5_0,
    Q5_1,
    Q5_K_S,
    Q5_K_M,
    Q6_K,
    Q8_0,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    None,
    Legacy,
    KQuant,
}

impl QuantScheme {
    pub const ALL: [QuantScheme; 14] = [
        QuantScheme::F16,
        QuantScheme::Q3_K_S,
        QuantScheme::Q3_K_M,
        QuantScheme::Q3_K_L,
        QuantScheme::Q4_0,
        QuantScheme::Q4_1,
        QuantScheme::Q4_K_S,
        QuantScheme::Q4_K_M,
        QuantScheme::Q5_0,
        QuantScheme::Q5_1,
        QuantScheme::Q5_K_S,
        QuantScheme::Q5_K_M,
        QuantScheme::Q6_K,
        QuantScheme::Q8_0,
    ];

    /// Every scheme except the F16 baseline.
    pub const QUANTIZED: [QuantScheme; 13] = [
        QuantScheme::Q3_K_S,
        QuantScheme::Q3_K_M,
        QuantScheme::Q3_K_L,
        QuantScheme::Q4_0,
        QuantScheme::Q4_1,
        QuantScheme::Q4_K_S,
        QuantScheme::Q4_K_M,
        QuantScheme::Q5_0,
        QuantScheme::Q5_1,
        QuantScheme::Q5_K_S,
        QuantScheme::Q5_K_M,
        QuantScheme::Q6_K,
        QuantScheme::Q8_0,
    ];

    pub const fn name(self) -> &'static str {
        use QuantScheme::*;
        match self {
            F16 => "F16",
            Q3_K_S => "Q3_K_S",
            Q3_K_M => "Q3_K_M",
            Q3_K_L => "Q3_K_L",
            Q4_0 => "Q4_0",
            Q4_1 => "Q4_1",
            Q4_K_S => "Q4_K_S",
            Q4_K_M => "Q4_K_M",
            Q5_0 => "Q5_0",
            Q5_1 => "Q5_1",
            Q5_K_S => "Q5_K_S",
            Q5_K_M => "Q5_K_M",
            Q6_K => "Q6_K",
            Q8_0 => "Q8_0",
        }
    }

    /// Format used for every quantizable tensor the mix rule does not upgrade.
    pub const fn base_format(self) -> Format {
        use QuantScheme::*;
        match self {
            F16 => Format::F16,
            Q3_K_S | Q3_K_M | Q3_K_L => Format::Q3_K,
            Q4_0 => Format::Q4_0,
            Q4_1 => Format::Q4_1,
            Q4_K_S | Q4_K_M => Format::Q4_K,
            Q5_0 => Format::Q5_0,
            Q5_1 => Format::Q5_1,
            Q5_K_S | Q5_K_M => Format::Q5_K,
            Q6_K => Format::Q6_K,
            Q8_0 => Format::Q8_0,
        }
    }

    pub const fn family(self) -> Family {
        match self.base_format().layout().kind {
            QuantKind::Float => Family::None,
            QuantKind::SuperBlock => Family::KQuant,
            _ => Family::Legacy,
        }
    }

    pub const fn kind(self) -> QuantKind {
        self.base_format().layout().kind
    }

    /// Nominal bit-width `b` of the scheme's codes.
    pub const fn nominal_bits(self) -> u32 {
        self.base_format().layout().code_bits
    }

    /// Bits per weight of the base format alone (a uniform payload).
    pub fn nominal_bpw(self) -> f64 {
        self.base_format().layout().bits_per_weight()
    }

    /// `general.file_type` value written into converted GGUF files.
    pub const fn file_type(self) -> u32 {
        use QuantScheme::*;
        match self {
            F16 => 1,
            Q4_0 => 2,
            Q4_1 => 3,
            Q8_0 => 7,
            Q5_0 => 8,
            Q5_1 => 9,
            Q3_K_S => 11,
            Q3_K_M => 12,
            Q3_K_L => 13,
            Q4_K_S => 14,
            Q4_K_M => 15,
            Q5_K_S => 16,
            Q5_K_M => 17,
            Q6_K => 18,
        }
    }

    pub fn from_file_type(v: u32) -> Option<QuantScheme> {
        QuantScheme::ALL.into_iter().find(|s| s.file_type() == v)
    }

    /// One-line description of the scheme's intent.
    pub const fn description(self) -> &'static str {
        use QuantScheme::*;
        match self {
            F16 => "half-precision baseline",
            Q3_K_S => "K-block 3-bit, small variant, emphasizes compression",
            Q3_K_M => "K-block 3-bit, medium trade-off",
            Q3_K_L => "K-block 3-bit, large / quality-oriented",
            Q4_0 => "older 4-bit symmetric scheme, simple, widely available",
            Q4_1 => "4-bit with per-block offset",
            Q4_K_S => "K-block 4-bit, tuned for speed",
            Q4_K_M => "K-block 4-bit, tuned for quality",
            Q5_0 => "5-bit symmetric",
            Q5_1 => "5-bit with per-block offset",
            Q5_K_S => "K-block 5-bit, small variant",
            Q5_K_M => "K-block 5-bit, medium variant",
            Q6_K => "high-quality K-block 6-bit",
            Q8_0 => "8-bit symmetric, close to F16",
        }
    }
}

pub(crate) fn valid_scheme_list() -> String {
    let mut s = String::new();
    for (i, scheme) in QuantScheme::ALL.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        s.push_str(scheme.name());
    }
    s
}

impl fmt::Display for QuantScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for QuantScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        QuantScheme::ALL
            .into_iter()
            .find(|q| q.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownScheme(s.into()))
    }
}
