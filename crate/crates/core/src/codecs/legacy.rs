//! 32-weight blocks with an f16 scale and, for the `_1` variants, an f16
//! offset.
//!
//! Symmetric formats pick the signed element of largest magnitude `v*` and
//! set `s = v* / -2^(b-1)`, so `v*` lands exactly on the negative extreme
//! code. Q8_0 instead uses `s = max|v| / 127` over the symmetric range
//! `[-127, 127]`. Affine formats use `s = (max - min) / (2^b - 1)`, `m = min`.
//!
//! Packing follows GGML: element `j` of a 4/5-bit block sits in the low
//! nibble of `qs[j]`, element `j + 16` in the high nibble, and the fifth bit
//! of element `j` is bit `j` of the little-endian `qh` word.

use bytemuck::{Pod, Zeroable};

use super::{f16_floor, f16_from, f16_step_for, f16_to, nearest_code, signed_absmax, Block};
use crate::format::{Format, QK};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Pod, Zeroable)]
pub struct BlockQ4_0 {
    pub d: [u8; 2],
    pub qs: [u8; QK / 2],
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Pod, Zeroable)]
pub struct BlockQ4_1 {
    pub d: [u8; 2],
    pub m: [u8; 2],
    pub qs: [u8; QK / 2],
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Pod, Zeroable)]
pub struct BlockQ5_0 {
    pub d: [u8; 2],
    pub qh: [u8; 4],
    pub qs: [u8; QK / 2],
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Pod, Zeroable)]
pub struct BlockQ5_1 {
    pub d: [u8; 2],
    pub m: [u8; 2],
    pub qh: [u8; 4],
    pub qs: [u8; QK / 2],
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Pod, Zeroable)]
pub struct BlockQ8_0 {
    pub d: [u8; 2],
    pub qs: [i8; QK],
}

const _: () = assert!(core::mem::size_of::<BlockQ4_0>() == 18);
const _: () = assert!(core::mem::size_of::<BlockQ4_1>() == 20);
const _: () = assert!(core::mem::size_of::<BlockQ5_0>() == 22);
const _: () = assert!(core::mem::size_of::<BlockQ5_1>() == 24);
const _: () = assert!(core::mem::size_of::<BlockQ8_0>() == 34);

/// Symmetric scale: `v*` maps to `-2^(b-1)`.
fn symmetric_scale(values: &[f32], bits: u32) -> f32 {
    signed_absmax(values) / -((1u32 << (bits - 1)) as f32)
}

fn symmetric_codes(values: &[f32], d: f32, bits: u32) -> [i8; QK] {
    let half = 1i32 << (bits - 1);
    let mut q = [0i8; QK];
    for (q, &v) in q.iter_mut().zip(values) {
        *q = nearest_code(v, d, -half, half - 1) as i8;
    }
    q
}

/// Stored scale and minimum. The minimum is rounded down so the smallest
/// value lands on code 0, and the scale keeps the largest on the top code;
/// with both ends pinned, refitting a reconstruction gives back the block.
fn affine_params(values: &[f32], bits: u32) -> ([u8; 2], [u8; 2]) {
    let (lo, hi) = values
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let m = f16_floor(lo);
    (f16_step_for(hi - f16_to(m), ((1u32 << bits) - 1) as f32), m)
}

fn affine_codes(values: &[f32], d: f32, m: f32, bits: u32) -> [u8; QK] {
    let top = (1i32 << bits) - 1;
    let mut q = [0u8; QK];
    for (q, &v) in q.iter_mut().zip(values) {
        *q = nearest_code(v - m, d, 0, top) as u8;
    }
    q
}

fn pack_nibbles(q: &[u8; QK]) -> [u8; QK / 2] {
    let mut qs = [0u8; QK / 2];
    for (j, b) in qs.iter_mut().enumerate() {
        *b = (q[j] & 0x0f) | ((q[j + QK / 2] & 0x0f) << 4);
    }
    qs
}

fn pack_high_bits(q: &[u8; QK]) -> [u8; 4] {
    let mut qh = 0u32;
    for (j, &c) in q.iter().enumerate() {
        qh |= (((c >> 4) & 1) as u32) << j;
    }
    qh.to_le_bytes()
}

#[inline(always)]
fn unpack_nibbles(qs: &[u8; QK / 2], out: &mut [u8; QK]) {
    for j in 0..QK / 2 {
        out[j] = qs[j] & 0x0f;
        out[j + QK / 2] = qs[j] >> 4;
    }
}

#[inline(always)]
fn unpack_5bit(qs: &[u8; QK / 2], qh: &[u8; 4], out: &mut [u8; QK]) {
    let qh = u32::from_le_bytes(*qh);
    unpack_nibbles(qs, out);
    for (j, q) in out.iter_mut().enumerate() {
        *q |= (((qh >> j) & 1) as u8) << 4;
    }
}

impl BlockQ4_0 {
    /// Builds a block from a scale and signed codes in `[-8, 7]`.
    pub fn from_parts(scale: f32, codes: &[i8; QK]) -> Self {
        let mut u = [0u8; QK];
        for (u, &c) in u.iter_mut().zip(codes) {
            *u = (c.clamp(-8, 7) + 8) as u8;
        }
        BlockQ4_0 {
            d: f16_from(scale),
            qs: pack_nibbles(&u),
        }
    }

    pub fn scale(&self) -> f32 {
        f16_to(self.d)
    }

    /// Signed codes in `[-8, 7]`.
    #[inline(always)]
    pub fn codes(&self, out: &mut [i8; QK]) {
        let mut u = [0u8; QK];
        unpack_nibbles(&self.qs, &mut u);
        for (o, &u) in out.iter_mut().zip(&u) {
            *o = u as i8 - 8;
        }
    }
}

impl Block for BlockQ4_0 {
    const FORMAT: Format = Format::Q4_0;

    fn quantize(values: &[f32]) -> Self {
        let d = f16_from(symmetric_scale(values, 4));
        let codes = symmetric_codes(values, f16_to(d), 4);
        let mut b = BlockQ4_0::from_parts(0.0, &codes);
        b.d = d;
        b
    }

    fn dequantize(&self, out: &mut [f32]) {
        let d = self.scale();
        let mut q = [0i8; QK];
        self.codes(&mut q);
        for (o, &q) in out.iter_mut().zip(&q) {
            *o = d * q as f32;
        }
    }
}

impl BlockQ4_1 {
    /// Builds a block from scale, offset and unsigned codes in `[0, 15]`.
    pub fn from_parts(scale: f32, offset: f32, codes: &[u8; QK]) -> Self {
        let mut u = *codes;
        u.iter_mut().for_each(|c| *c = (*c).min(15));
        BlockQ4_1 {
            d: f16_from(scale),
            m: f16_from(offset),
            qs: pack_nibbles(&u),
        }
    }

    pub fn scale(&self) -> f32 {
        f16_to(self.d)
    }

    pub fn offset(&self) -> f32 {
        f16_to(self.m)
    }

    #[inline(always)]
    pub fn codes(&self, out: &mut [u8; QK]) {
        unpack_nibbles(&self.qs, out);
    }
}

impl Block for BlockQ4_1 {
    const FORMAT: Format = Format::Q4_1;

    fn quantize(values: &[f32]) -> Self {
        let (d, m) = affine_params(values, 4);
        let codes = affine_codes(values, f16_to(d), f16_to(m), 4);
        BlockQ4_1 {
            d,
            m,
            qs: pack_nibbles(&codes),
        }
    }

    fn dequantize(&self, out: &mut [f32]) {
        let (d, m) = (self.scale(), self.offset());
        let mut q = [0u8; QK];
        self.codes(&mut q);
        for (o, &q) in out.iter_mut().zip(&q) {
            *o = d * q as f32 + m;
        }
    }
}

impl BlockQ5_0 {
    /// Builds a block from a scale and signed codes in `[-16, 15]`.
    pub fn from_parts(scale: f32, codes: &[i8; QK]) -> Self {
        let mut u = [0u8; QK];
        for (u, &c) in u.iter_mut().zip(codes) {
            *u = (c.clamp(-16, 15) + 16) as u8;
        }
        BlockQ5_0 {
            d: f16_from(scale),
            qh: pack_high_bits(&u),
            qs: pack_nibbles(&u),
        }
    }

    pub fn scale(&self) -> f32 {
        f16_to(self.d)
    }

    #[inline(always)]
    pub fn codes(&self, out: &mut [i8; QK]) {
        let mut u = [0u8; QK];
        unpack_5bit(&self.qs, &self.qh, &mut u);
        for (o, &u) in out.iter_mut().zip(&u) {
            *o = u as i8 - 16;
        }
    }
}

impl Block for BlockQ5_0 {
    const FORMAT: Format = Format::Q5_0;

    fn quantize(values: &[f32]) -> Self {
        let d = f16_from(symmetric_scale(values, 5));
        let codes = symmetric_codes(values, f16_to(d), 5);
        let mut b = BlockQ5_0::from_parts(0.0, &codes);
        b.d = d;
        b
    }

    fn dequantize(&self, out: &mut [f32]) {
        let d = self.scale();
        let mut q = [0i8; QK];
        self.codes(&mut q);
        for (o, &q) in out.iter_mut().zip(&q) {
            *o = d * q as f32;
        }
    }
}

impl BlockQ5_1 {
    /// Builds a block from scale, offset and unsigned codes in `[0, 31]`.
    pub fn from_parts(scale: f32, offset: f32, codes: &[u8; QK]) -> Self {
        let mut u = *codes;
        u.iter_mut().for_each(|c| *c = (*c).min(31));
        BlockQ5_1 {
            d: f16_from(scale),
            m: f16_from(offset),
            qh: pack_high_bits(&u),
            qs: pack_nibbles(&u),
        }
    }

    pub fn scale(&self) -> f32 {
        f16_to(self.d)
    }

    pub fn offset(&self) -> f32 {
        f16_to(self.m)
    }

    #[inline(always)]
    pub fn codes(&self, out: &mut [u8; QK]) {
        unpack_5bit(&self.qs, &self.qh, out);
    }
}

impl Block for BlockQ5_1 {
    const FORMAT: Format = Format::Q5_1;

    fn quantize(values: &[f32]) -> Self {
        let (d, m) = affine_params(values, 5);
        let codes = affine_codes(values, f16_to(d), f16_to(m), 5);
        BlockQ5_1 {
            d,
            m,
            qh: pack_high_bits(&codes),
            qs: pack_nibbles(&codes),
        }
    }

    fn dequantize(&self, out: &mut [f32]) {
        let (d, m) = (self.scale(), self.offset());
        let mut q = [0u8; QK];
        self.codes(&mut q);
        for (o, &q) in out.iter_mut().zip(&q) {
            *o = d * q as f32 + m;
        }
    }
}

impl BlockQ8_0 {
    pub fn from_parts(scale: f32, codes: &[i8; QK]) -> Self {
        let mut qs = *codes;
        qs.iter_mut().for_each(|c| *c = (*c).max(-127));
        BlockQ8_0 {
            d: f16_from(scale),
            qs,
        }
    }

    pub fn scale(&self) -> f32 {
        f16_to(self.d)
    }
}

impl Block for BlockQ8_0 {
    const FORMAT: Format = Format::Q8_0;

    fn quantize(values: &[f32]) -> Self {
        let amax = values.iter().fold(0.0f32, |m, v| m.max(v.abs()));
        let d = f16_from(amax / 127.0);
        let dv = f16_to(d);
        let mut qs = [0i8; QK];
        for (q, &v) in qs.iter_mut().zip(values) {
            *q = nearest_code(v, dv, -127, 127) as i8;
        }
        BlockQ8_0 { d, qs }
    }

    fn dequantize(&self, out: &mut [f32]) {
        let d = self.scale();
        for (o, &q) in out.iter_mut().zip(&self.qs) {
            *o = d * q as f32;
        }
    }
}
