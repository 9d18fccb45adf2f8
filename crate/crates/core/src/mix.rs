//! Per-tensor format selection inside a named scheme.
//!
//! A scheme's `_S`/`_M`/`_L` variants differ only in which tensors are
//! upgraded to a higher-precision format. Rules are matched in order and the
//! first match wins; tensors without a matching rule use the scheme's base
//! format. Norm vectors are always stored as F32.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::format::{Format, FormatLayout};
use crate::scheme::QuantScheme;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TensorRole {
    #[cfg_attr(feature = "serde", serde(rename = "token_embd"))]
    TokenEmbedding,
    #[cfg_attr(feature = "serde", serde(rename = "output"))]
    OutputHead,
    AttnQ,
    AttnK,
    AttnV,
    AttnOutput,
    FfnGate,
    FfnUp,
    FfnDown,
    /// Normalization weights and other per-channel vectors.
    Norm,
}

impl TensorRole {
    pub const ALL: [TensorRole; 10] = [
        TensorRole::TokenEmbedding,
        TensorRole::OutputHead,
        TensorRole::AttnQ,
        TensorRole::AttnK,
        TensorRole::AttnV,
        TensorRole::AttnOutput,
        TensorRole::FfnGate,
        TensorRole::FfnUp,
        TensorRole::FfnDown,
        TensorRole::Norm,
    ];

    pub const fn key(self) -> &'static str {
        match self {
            TensorRole::TokenEmbedding => "token_embd",
            TensorRole::OutputHead => "output",
            TensorRole::AttnQ => "attn_q",
            TensorRole::AttnK => "attn_k",
            TensorRole::AttnV => "attn_v",
            TensorRole::AttnOutput => "attn_output",
            TensorRole::FfnGate => "ffn_gate",
            TensorRole::FfnUp => "ffn_up",
            TensorRole::FfnDown => "ffn_down",
            TensorRole::Norm => "norm",
        }
    }

    pub fn is_quantizable(self) -> bool {
        self != TensorRole::Norm
    }

    /// Derives role and layer index from a Llama-style GGUF tensor name,
    /// e.g. `blk.7.ffn_down.weight` or `output_norm.weight`.
    pub fn from_tensor_name(name: &str) -> Result<(TensorRole, Option<u32>)> {
        let unknown = || Error::UnknownRole(name.to_string());
        let stem = name.strip_suffix(".weight").ok_or_else(unknown)?;
        if let Some(rest) = stem.strip_prefix("blk.") {
            let (idx, part) = rest.split_once('.').ok_or_else(unknown)?;
            let layer: u32 = idx.parse().map_err(|_| unknown())?;
            let role = match part {
                "attn_norm" | "ffn_norm" => TensorRole::Norm,
                other => other.parse().map_err(|_| unknown())?,
            };
            return Ok((role, Some(layer)));
        }
        let role = match stem {
            "token_embd" => TensorRole::TokenEmbedding,
            "output" => TensorRole::OutputHead,
            "output_norm" | "rope_freqs" => TensorRole::Norm,
            _ => return Err(unknown()),
        };
        Ok((role, None))
    }
}

impl fmt::Display for TensorRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for TensorRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TensorRole::ALL
            .into_iter()
            .find(|r| r.key() == s)
            .ok_or_else(|| Error::UnknownRole(s.to_string()))
    }
}

/// Which layers of a role a rule applies to.
///
/// Text forms: `all`, `first:N` (layer < N), `first-frac:D` (layer < n/D),
/// `more-bits` (first and last eighth plus every third layer in between).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "String", into = "String"))]
pub enum LayerSelector {
    #[default]
    All,
    First(u32),
    FirstFraction(u32),
    MoreBits,
}

impl LayerSelector {
    /// `layer` is `None` for tensors outside the repeated block stack; only
    /// `All` matches those.
    pub fn matches(self, layer: Option<u32>, n_layers: u32) -> bool {
        match (self, layer) {
            (LayerSelector::All, _) => true,
            (_, None) => false,
            (LayerSelector::First(k), Some(i)) => i < k,
            (LayerSelector::FirstFraction(d), Some(i)) => d > 0 && i < n_layers / d,
            (LayerSelector::MoreBits, Some(i)) => use_more_bits(i, n_layers),
        }
    }
}

fn use_more_bits(i: u32, n: u32) -> bool {
    let (i, n) = (i as i64, n as i64);
    i < n / 8 || i >= 7 * n / 8 || (i - n / 8) % 3 == 2
}

impl fmt::Display for LayerSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSelector::All => f.write_str("all"),
            LayerSelector::First(k) => write!(f, "first:{k}"),
            LayerSelector::FirstFraction(d) => write!(f, "first-frac:{d}"),
            LayerSelector::MoreBits => f.write_str("more-bits"),
        }
    }
}

impl FromStr for LayerSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::UnknownSelector(s.to_string());
        let s = s.trim();
        match s {
            "all" => return Ok(LayerSelector::All),
            "more-bits" => return Ok(LayerSelector::MoreBits),
            _ => {}
        }
        if let Some(n) = s.strip_prefix("first:") {
            return n.parse().map(LayerSelector::First).map_err(|_| bad());
        }
        if let Some(d) = s.strip_prefix("first-frac:") {
            return match d.parse() {
                Ok(0) | Err(_) => Err(bad()),
                Ok(d) => Ok(LayerSelector::FirstFraction(d)),
            };
        }
        Err(bad())
    }
}

impl TryFrom<String> for LayerSelector {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<LayerSelector> for String {
    fn from(s: LayerSelector) -> String {
        s.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MixRule {
    pub role: TensorRole,
    #[cfg_attr(feature = "serde", serde(default, rename = "select"))]
    pub selector: LayerSelector,
    pub format: Format,
}

impl MixRule {
    pub const fn new(role: TensorRole, selector: LayerSelector, format: Format) -> Self {
        MixRule {
            role,
            selector,
            format,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SchemeMix {
    pub base: Format,
    #[cfg_attr(feature = "serde", serde(default))]
    pub rules: Vec<MixRule>,
}

impl SchemeMix {
    pub fn uniform(base: Format) -> Self {
        SchemeMix {
            base,
            rules: Vec::new(),
        }
    }

    pub fn resolve(&self, role: TensorRole, layer: Option<u32>, n_layers: u32) -> Format {
        if !role.is_quantizable() {
            return Format::F32;
        }
        self.rules
            .iter()
            .find(|r| r.role == role && r.selector.matches(layer, n_layers))
            .map_or(self.base, |r| r.format)
    }
}

/// Mix rules for every scheme.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct MixTable {
    schemes: BTreeMap<QuantScheme, SchemeMix>,
}

impl Default for MixTable {
    fn default() -> Self {
        use LayerSelector::*;
        use TensorRole::*;

        let mut schemes = BTreeMap::new();
        let head = |f: Format| MixRule::new(OutputHead, All, f);
        for scheme in QuantScheme::ALL {
            let base = scheme.base_format();
            let mut rules = match scheme {
                QuantScheme::F16 | QuantScheme::Q8_0 => Vec::new(),
                _ => vec![head(Format::Q6_K)],
            };
            rules.extend(match scheme {
                QuantScheme::Q3_K_M => vec![
                    MixRule::new(AttnV, First(2), Format::Q5_K),
                    MixRule::new(AttnV, All, Format::Q4_K),
                    MixRule::new(FfnDown, FirstFraction(16), Format::Q5_K),
                    MixRule::new(FfnDown, All, Format::Q4_K),
                    MixRule::new(AttnOutput, All, Format::Q4_K),
                ],
                QuantScheme::Q3_K_L => vec![
                    MixRule::new(AttnV, All, Format::Q5_K),
                    MixRule::new(FfnDown, All, Format::Q5_K),
                    MixRule::new(AttnOutput, All, Format::Q5_K),
                ],
                QuantScheme::Q4_K_S => vec![
                    MixRule::new(AttnV, First(4), Format::Q5_K),
                    MixRule::new(FfnDown, FirstFraction(8), Format::Q5_K),
                ],
                QuantScheme::Q4_K_M | QuantScheme::Q5_K_M => vec![
                    MixRule::new(AttnV, MoreBits, Format::Q6_K),
                    MixRule::new(FfnDown, MoreBits, Format::Q6_K),
                ],
                _ => Vec::new(),
            });
            schemes.insert(scheme, SchemeMix { base, rules });
        }
        MixTable { schemes }
    }
}

impl MixTable {
    /// Every scheme stores every quantizable tensor in its base format.
    pub fn uniform() -> Self {
        MixTable {
            schemes: QuantScheme::ALL
                .into_iter()
                .map(|s| (s, SchemeMix::uniform(s.base_format())))
                .collect(),
        }
    }

    pub fn get(&self, scheme: QuantScheme) -> Option<&SchemeMix> {
        self.schemes.get(&scheme)
    }

    /// Replaces one scheme's mix, e.g. from a user override file.
    pub fn set(&mut self, scheme: QuantScheme, mix: SchemeMix) {
        self.schemes.insert(scheme, mix);
    }

    pub fn iter(&self) -> impl Iterator<Item = (QuantScheme, &SchemeMix)> {
        self.schemes.iter().map(|(s, m)| (*s, m))
    }

    pub fn resolve(
        &self,
        scheme: QuantScheme,
        role: TensorRole,
        layer: Option<u32>,
        n_layers: u32,
    ) -> Format {
        match self.schemes.get(&scheme) {
            Some(mix) => mix.resolve(role, layer, n_layers),
            None if role.is_quantizable() => scheme.base_format(),
            None => Format::F32,
        }
    }

    /// Layout for a role ignoring layer-specific rules.
    pub fn resolve_layout(&self, scheme: QuantScheme, role: TensorRole) -> FormatLayout {
        self.resolve(scheme, role, None, 0).layout()
    }

    /// Role given by key, as in `resolve_layout(scheme, "ffn_down")`.
    pub fn resolve_layout_named(&self, scheme: QuantScheme, role: &str) -> Result<FormatLayout> {
        Ok(self.resolve_layout(scheme, role.parse()?))
    }
}

/// [`MixTable::resolve_layout`] over the default table.
pub fn resolve_layout(scheme: QuantScheme, role: TensorRole) -> FormatLayout {
    MixTable::default().resolve_layout(scheme, role)
}
