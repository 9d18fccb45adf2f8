//! Encode and decode every storage format.
//!
//! Conventions shared by all formats:
//! - codes are `clamp(round(v / s))` with round-half-away-from-zero, computed
//!   against the scale *as stored* (after f16 rounding), so each code is the
//!   nearest representable one for the stored metadata;
//! - scales and offsets are stored as little-endian f16, rounded to nearest
//!   even and saturated to the largest finite half;
//! - an all-zero block gets scale 0 and reconstructs to exact zeros.

mod kquants;
mod legacy;
mod stats;

use alloc::vec;
use alloc::vec::Vec;

use half::f16;

pub use kquants::{BlockQ3_K, BlockQ4_K, BlockQ5_K, BlockQ6_K, K_SCALE_SIZE};
pub use legacy::{BlockQ4_0, BlockQ4_1, BlockQ5_0, BlockQ5_1, BlockQ8_0};
pub use stats::{error_stats, predicted_step, ErrorStats};

use crate::error::{Error, Result};
use crate::format::Format;
use crate::mix::{MixTable, TensorRole};
use crate::scheme::QuantScheme;
use crate::tensor::{QuantizedTensor, TensorF32};

/// One packed block of a quantized format.
pub trait Block: bytemuck::Pod {
    const FORMAT: Format;

    /// `values.len()` equals the format's block size and every value is finite.
    fn quantize(values: &[f32]) -> Self;

    fn dequantize(&self, out: &mut [f32]);

    /// [`Block::quantize`], then refit the reconstruction until the bytes stop
    /// changing. A single fit is not always a fixed point: f16 rounding of
    /// scales, sign ties between mirrored groups and clamped extremes can
    /// make a refit choose a different but equivalent encoding. The settled
    /// block decodes and re-encodes to itself.
    fn encode(values: &[f32]) -> Self {
        let mut b = Self::quantize(values);
        let mut buf = [0f32; crate::format::QK_K];
        let buf = &mut buf[..values.len()];
        for _ in 0..SETTLE_ROUNDS {
            b.dequantize(buf);
            let next = Self::quantize(buf);
            if bytemuck::bytes_of(&next) == bytemuck::bytes_of(&b) {
                break;
            }
            b = next;
        }
        b
    }
}

/// Refits allowed per block; every input seen in testing settles within two.
const SETTLE_ROUNDS: usize = 8;

#[inline]
pub(crate) fn f16_from(x: f32) -> [u8; 2] {
    f16::from_f32(x.clamp(-65504.0, 65504.0)).to_le_bytes()
}

/// Largest half no greater than `x` (saturated to the finite range).
pub(crate) fn f16_floor(x: f32) -> [u8; 2] {
    let x = x.clamp(-65504.0, 65504.0);
    let h = f16::from_f32(x);
    if h.to_f32() <= x {
        return h.to_le_bytes();
    }
    let bits = h.to_bits();
    let down = match bits {
        0x0000 => 0x8001,
        b if b & 0x8000 == 0 => b - 1,
        b => b + 1,
    };
    f16::from_bits(down).to_le_bytes()
}

/// Smallest half no less than `x`.
pub(crate) fn f16_ceil(x: f32) -> [u8; 2] {
    let [a, b] = f16_floor(-x);
    [a, b ^ 0x80]
}

/// Non-negative scale stored as the nearest half, stepped one unit down if
/// rounding up would keep `range` off the top code.
pub(crate) fn f16_step_for(range: f32, top: f32) -> [u8; 2] {
    let d = f16::from_f32((range / top).min(65504.0));
    if d.to_bits() > 0 && range / d.to_f32() < top - 0.5 {
        return f16::from_bits(d.to_bits() - 1).to_le_bytes();
    }
    d.to_le_bytes()
}

#[inline(always)]
pub(crate) fn f16_to(b: [u8; 2]) -> f32 {
    f16::from_le_bytes(b).to_f32()
}

/// Nearest integer code to `v / scale` within `[lo, hi]`; 0 (clamped) when
/// the scale is zero.
#[inline]
pub(crate) fn nearest_code(v: f32, scale: f32, lo: i32, hi: i32) -> i32 {
    if scale == 0.0 {
        return 0.clamp(lo, hi);
    }
    let x = (v as f64 / scale as f64).clamp(lo as f64 - 1.0, hi as f64 + 1.0);
    // half away from zero; the fraction is exact at these magnitudes
    let t = x as i32;
    let frac = x - t as f64;
    let q = t + (frac >= 0.5) as i32 - (frac <= -0.5) as i32;
    q.clamp(lo, hi)
}

/// Signed value of the first element with the largest magnitude.
#[inline]
pub(crate) fn signed_absmax(values: &[f32]) -> f32 {
    let mut best = 0.0f32;
    for &v in values {
        if v.abs() > best.abs() {
            best = v;
        }
    }
    best
}

macro_rules! with_block {
    ($format:expr, $B:ident => $quant:expr, float => $float:expr) => {
        match $format {
            Format::Q4_0 => {
                type $B = BlockQ4_0;
                $quant
            }
            Format::Q4_1 => {
                type $B = BlockQ4_1;
                $quant
            }
            Format::Q5_0 => {
                type $B = BlockQ5_0;
                $quant
            }
            Format::Q5_1 => {
                type $B = BlockQ5_1;
                $quant
            }
            Format::Q8_0 => {
                type $B = BlockQ8_0;
                $quant
            }
            Format::Q3_K => {
                type $B = BlockQ3_K;
                $quant
            }
            Format::Q4_K => {
                type $B = BlockQ4_K;
                $quant
            }
            Format::Q5_K => {
                type $B = BlockQ5_K;
                $quant
            }
            Format::Q6_K => {
                type $B = BlockQ6_K;
                $quant
            }
            Format::F32 | Format::F16 => $float,
        }
    };
}

fn check_finite(values: &[f32], base: usize) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite { index: base + i }),
        None => Ok(()),
    }
}

fn check_row(format: Format, values: usize, bytes: usize) -> Result<()> {
    let l = format.layout();
    if !values.is_multiple_of(l.block_weights) {
        return Err(Error::Length {
            expected: (values / l.block_weights + 1) * l.block_weights,
            actual: values,
        });
    }
    let expected = values / l.block_weights * l.block_bytes;
    if bytes != expected {
        return Err(Error::PayloadLength {
            format,
            actual: bytes,
            expected,
        });
    }
    Ok(())
}

fn quantize_blocks<B: Block>(values: &[f32], out: &mut [u8]) {
    let blocks: &mut [B] = bytemuck::cast_slice_mut(out);
    let k = B::FORMAT.block_weights();
    for (b, v) in blocks.iter_mut().zip(values.chunks_exact(k)) {
        *b = B::encode(v);
    }
}

fn dequantize_blocks<B: Block>(bytes: &[u8], out: &mut [f32]) {
    let blocks: &[B] = bytemuck::cast_slice(bytes);
    let k = B::FORMAT.block_weights();
    for (b, o) in blocks.iter().zip(out.chunks_exact_mut(k)) {
        b.dequantize(o);
    }
}

/// Quantizes a whole number of blocks into `out`.
pub fn quantize_row(format: Format, values: &[f32], out: &mut [u8]) -> Result<()> {
    check_row(format, values.len(), out.len())?;
    check_finite(values, 0)?;
    with_block!(format, B => quantize_blocks::<B>(values, out), float => match format {
        Format::F16 => {
            for (o, &v) in out.chunks_exact_mut(2).zip(values) {
                o.copy_from_slice(&f16_from(v));
            }
        }
        _ => {
            for (o, &v) in out.chunks_exact_mut(4).zip(values) {
                o.copy_from_slice(&v.to_le_bytes());
            }
        }
    });
    Ok(())
}

/// Decodes a whole number of blocks into `out`.
pub fn dequantize_row(format: Format, bytes: &[u8], out: &mut [f32]) -> Result<()> {
    check_row(format, out.len(), bytes.len())?;
    with_block!(format, B => dequantize_blocks::<B>(bytes, out), float => match format {
        Format::F16 => {
            for (o, b) in out.iter_mut().zip(bytes.chunks_exact(2)) {
                *o = f16_to([b[0], b[1]]);
            }
        }
        _ => {
            for (o, b) in out.iter_mut().zip(bytes.chunks_exact(4)) {
                *o = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
            }
        }
    });
    Ok(())
}

/// Packs exactly one block.
pub fn quantize_block(format: Format, values: &[f32]) -> Result<Vec<u8>> {
    let l = format.layout();
    if values.len() != l.block_weights {
        return Err(Error::Length {
            expected: l.block_weights,
            actual: values.len(),
        });
    }
    let mut out = vec![0u8; l.block_bytes];
    quantize_row(format, values, &mut out)?;
    Ok(out)
}

/// Decodes exactly one block; rejects a payload of the wrong length.
pub fn dequantize_block(format: Format, bytes: &[u8]) -> Result<Vec<f32>> {
    let l = format.layout();
    if bytes.len() != l.block_bytes {
        return Err(Error::PayloadLength {
            format,
            actual: bytes.len(),
            expected: l.block_bytes,
        });
    }
    let mut out = vec![0f32; l.block_weights];
    dequantize_row(format, bytes, &mut out)?;
    Ok(out)
}

/// Byte ranges of the f16 metadata fields inside one block.
fn half_fields(format: Format) -> &'static [usize] {
    match format {
        Format::Q4_0 | Format::Q5_0 | Format::Q8_0 => &[0],
        Format::Q4_1 | Format::Q5_1 | Format::Q4_K | Format::Q5_K => &[0, 2],
        Format::Q3_K => &[108],
        Format::Q6_K => &[208],
        Format::F16 => &[0],
        Format::F32 => &[],
    }
}

/// Checks that every stored real (f16 scale/offset, f16 or f32 value) is
/// finite. Payloads that pass decode to finite values.
pub fn validate_payload(format: Format, bytes: &[u8]) -> Result<()> {
    let l = format.layout();
    if !bytes.len().is_multiple_of(l.block_bytes) {
        return Err(Error::PayloadLength {
            format,
            actual: bytes.len(),
            expected: (bytes.len() / l.block_bytes + 1) * l.block_bytes,
        });
    }
    for (i, block) in bytes.chunks_exact(l.block_bytes).enumerate() {
        let finite = match format {
            Format::F32 => f32::from_le_bytes([block[0], block[1], block[2], block[3]]).is_finite(),
            _ => half_fields(format)
                .iter()
                .all(|&o| f16::from_le_bytes([block[o], block[o + 1]]).is_finite()),
        };
        if !finite {
            return Err(Error::NonFinite {
                index: i * l.block_weights,
            });
        }
    }
    Ok(())
}

/// Quantizes a tensor to one format. The contiguous dimension must divide
/// into whole blocks.
pub fn quantize_tensor(tensor: &TensorF32, format: Format) -> Result<QuantizedTensor> {
    let l = format.layout();
    let row = tensor.row_len();
    if !row.is_multiple_of(l.block_weights) {
        return Err(Error::NotBlockAligned {
            name: tensor.name().into(),
            format,
            dim: row,
            block: l.block_weights,
        });
    }
    let mut payload = vec![0u8; tensor.len() / l.block_weights * l.block_bytes];
    quantize_row(format, tensor.data(), &mut payload)?;
    QuantizedTensor::new(tensor.name(), format, tensor.shape().into(), payload)
}

/// Quantizes a tensor under a scheme: the format comes from the mix table,
/// keyed by the role and layer derived from the tensor name.
pub fn quantize_tensor_for_scheme(
    tensor: &TensorF32,
    scheme: QuantScheme,
    mix: &MixTable,
    n_layers: u32,
) -> Result<QuantizedTensor> {
    let (role, layer) = TensorRole::from_tensor_name(tensor.name())?;
    quantize_tensor(tensor, mix.resolve(scheme, role, layer, n_layers))
}

pub fn dequantize_tensor(q: &QuantizedTensor) -> Result<TensorF32> {
    let mut data = vec![0f32; q.elements()];
    dequantize_row(q.format(), q.payload(), &mut data)?;
    TensorF32::new(q.name(), q.shape().into(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_is_half_away_from_zero() {
        assert_eq!(nearest_code(2.5, 1.0, -8, 7), 3);
        assert_eq!(nearest_code(-2.5, 1.0, -8, 7), -3);
        assert_eq!(nearest_code(100.0, 1.0, -8, 7), 7);
        assert_eq!(nearest_code(1.0, 0.0, -8, 7), 0);
        assert_eq!(nearest_code(1.0, 0.0, 1, 7), 1);
    }

    #[test]
    fn f16_saturates() {
        assert_eq!(f16_to(f16_from(1e9)), 65504.0);
        assert_eq!(f16_to(f16_from(-1e9)), -65504.0);
    }

    #[test]
    fn block_length_errors() {
        assert!(matches!(
            quantize_block(Format::Q4_0, &[0.0; 31]),
            Err(Error::Length { expected: 32, actual: 31 })
        ));
        assert!(matches!(
            dequantize_block(Format::Q4_0, &[0; 17]),
            Err(Error::PayloadLength { expected: 18, actual: 17, .. })
        ));
        let mut v = [0.0f32; 32];
        v[4] = f32::NAN;
        assert_eq!(quantize_block(Format::Q8_0, &v), Err(Error::NonFinite { index: 4 }));
    }

    #[test]
    fn tensor_misaligned() {
        let t = TensorF32::new("blk.0.ffn_up.weight", vec![2, 48], vec![0.0; 96]).unwrap();
        match quantize_tensor(&t, Format::Q4_0) {
            Err(Error::NotBlockAligned { name, dim: 48, block: 32, .. }) => {
                assert_eq!(name, "blk.0.ffn_up.weight")
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn norm_stays_f32_and_f16_passes_through() {
        let mix = MixTable::default();
        let norm = TensorF32::new("blk.0.attn_norm.weight", vec![64], (0..64).map(|i| i as f32 * 0.3).collect()).unwrap();
        for s in QuantScheme::ALL {
            let q = quantize_tensor_for_scheme(&norm, s, &mix, 1).unwrap();
            assert_eq!(q.format(), Format::F32);
            assert_eq!(dequantize_tensor(&q).unwrap(), norm);
        }
        let w = TensorF32::new("blk.0.ffn_up.weight", vec![2, 32], (0..64).map(|i| i as f32 * 0.25).collect()).unwrap();
        let q = quantize_tensor_for_scheme(&w, QuantScheme::F16, &mix, 1).unwrap();
        assert_eq!(q.format(), Format::F16);
        assert_eq!(q.payload().len(), 128);
        // quarter steps are exact in f16
        assert_eq!(dequantize_tensor(&q).unwrap(), w);
    }

    #[test]
    fn validate_rejects_non_finite_scale() {
        let mut b = quantize_block(Format::Q4_0, &[1.0; 32]).unwrap();
        assert!(validate_payload(Format::Q4_0, &b).is_ok());
        b[..2].copy_from_slice(&f16::INFINITY.to_le_bytes());
        assert_eq!(validate_payload(Format::Q4_0, &b), Err(Error::NonFinite { index: 0 }));
    }
}
