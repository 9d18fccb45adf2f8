//! 256-weight super-blocks with quantized sub-block scales.
//!
//! Fitting is a single deterministic pass:
//! 1. fit each sub-block on its own (min/max for affine, signed absmax for
//!    symmetric),
//! 2. quantize the sub-block scales (and mins) against f16 super-scales,
//! 3. assign codes against the quantized effective scales.
//!
//! | Format | Sub-blocks | Codes        | Sub-block metadata          |
//! |--------|------------|--------------|-----------------------------|
//! | Q3_K   | 16 x 16    | [-4, 3]      | 6-bit signed scales         |
//! | Q4_K   | 8 x 32     | [0, 15]      | 6-bit scales + 6-bit mins   |
//! | Q5_K   | 8 x 32     | [0, 31]      | 6-bit scales + 6-bit mins   |
//! | Q6_K   | 16 x 16    | [-32, 31]    | 8-bit signed scales         |
//!
//! Reconstruction is `d * sc_j * q` for the symmetric formats and
//! `d * sc_j * q - dmin * m_j` for the affine ones. Byte layouts match GGML.

use bytemuck::{Pod, Zeroable};

use super::{f16_ceil, f16_from, f16_step_for, f16_to, nearest_code, signed_absmax, Block};
use crate::format::{Format, QK_K};

pub const K_SCALE_SIZE: usize = 12;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Pod, Zeroable)]
pub struct BlockQ3_K {
    /// High bit of each code: element `j` is bit `j / 32` of `hmask[j % 32]`.
    pub hmask: [u8; QK_K / 8],
    /// Low two bits, four codes per byte.
    pub qs: [u8; QK_K / 4],
    /// Sixteen 6-bit scales stored with a +32 bias.
    pub scales: [u8; K_SCALE_SIZE],
    pub d: [u8; 2],
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Pod, Zeroable)]
pub struct BlockQ4_K {
    pub d: [u8; 2],
    pub dmin: [u8; 2],
    pub scales: [u8; K_SCALE_SIZE],
    pub qs: [u8; QK_K / 2],
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Pod, Zeroable)]
pub struct BlockQ5_K {
    pub d: [u8; 2],
    pub dmin: [u8; 2],
    pub scales: [u8; K_SCALE_SIZE],
    pub qh: [u8; QK_K / 8],
    pub qs: [u8; QK_K / 2],
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Pod, Zeroable)]
pub struct BlockQ6_K {
    pub ql: [u8; QK_K / 2],
    pub qh: [u8; QK_K / 4],
    pub scales: [i8; QK_K / 16],
    pub d: [u8; 2],
}

const _: () = assert!(core::mem::size_of::<BlockQ3_K>() == 110);
const _: () = assert!(core::mem::size_of::<BlockQ4_K>() == 144);
const _: () = assert!(core::mem::size_of::<BlockQ5_K>() == 176);
const _: () = assert!(core::mem::size_of::<BlockQ6_K>() == 210);

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

struct AffineFit {
    d: [u8; 2],
    dmin: [u8; 2],
    scales: [u8; 8],
    mins: [u8; 8],
    codes: [u8; QK_K],
}

fn fit_affine(values: &[f32], bits: u32) -> AffineFit {
    const SUB: usize = 32;
    let top = (1i32 << bits) - 1;
    let mut hi = [0f32; 8];
    let mut negmin = [0f32; 8];
    for (j, sub) in values.chunks_exact(SUB).enumerate() {
        let (l, h) = sub
            .iter()
            .fold((0.0f32, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        hi[j] = h;
        negmin[j] = -l;
    }
    // Mins round up so every sub-block minimum sits at or above code 0, then
    // the scales are fitted to what remains of each range.
    let max_min = negmin.iter().fold(0.0f32, |m, &s| m.max(s));
    let dmin = f16_ceil(max_min / 63.0);
    let dminv = f16_to(dmin);
    let mut mins = [0u8; 8];
    let mut scale = [0f32; 8];
    for j in 0..8 {
        mins[j] = if dminv > 0.0 { libm::ceil(negmin[j] as f64 / dminv as f64).clamp(0.0, 63.0) as u8 } else { 0 };
        scale[j] = ((hi[j] + dminv * mins[j] as f32) / top as f32).max(0.0);
    }
    let max_scale = scale.iter().fold(0.0f32, |m, &s| m.max(s));
    let d = f16_step_for(max_scale * 63.0, 63.0);
    let dv = f16_to(d);

    let mut fit = AffineFit {
        d,
        dmin,
        scales: [0; 8],
        mins,
        codes: [0; QK_K],
    };
    for (j, &sc) in scale.iter().enumerate() {
        fit.scales[j] = nearest_code(sc, dv, 0, 63) as u8;
        let eff = dv * fit.scales[j] as f32;
        let off = dminv * fit.mins[j] as f32;
        for l in 0..SUB {
            let i = SUB * j + l;
            fit.codes[i] = nearest_code(values[i] + off, eff, 0, top) as u8;
        }
    }
    fit
}

struct SymmetricFit {
    d: [u8; 2],
    scales: [i8; 16],
    codes: [i8; QK_K],
}

/// `code_half` is `2^(b-1)` of the codes, `scale_half` of the sub-block scales.
fn fit_symmetric(values: &[f32], code_half: i32, scale_half: i32) -> SymmetricFit {
    const SUB: usize = 16;
    let mut scale = [0f32; 16];
    for (j, sub) in values.chunks_exact(SUB).enumerate() {
        scale[j] = signed_absmax(sub) / -(code_half as f32);
    }
    let d = f16_from(signed_absmax(&scale) / -(scale_half as f32));
    let dv = f16_to(d);
    let mut fit = SymmetricFit {
        d,
        scales: [0; 16],
        codes: [0; QK_K],
    };
    for (j, &s) in scale.iter().enumerate() {
        fit.scales[j] = nearest_code(s, dv, -scale_half, scale_half - 1) as i8;
        let eff = dv * fit.scales[j] as f32;
        for l in 0..SUB {
            let i = SUB * j + l;
            fit.codes[i] = nearest_code(values[i], eff, -code_half, code_half - 1) as i8;
        }
    }
    fit
}

// ---------------------------------------------------------------------------
// 6-bit scale packing shared by Q4_K and Q5_K
// ---------------------------------------------------------------------------

fn pack_scale_min_k4(scales: &[u8; 8], mins: &[u8; 8]) -> [u8; K_SCALE_SIZE] {
    let mut q = [0u8; K_SCALE_SIZE];
    for j in 0..8 {
        let (ls, lm) = (scales[j] & 63, mins[j] & 63);
        if j < 4 {
            q[j] = ls;
            q[j + 4] = lm;
        } else {
            q[j + 4] = (ls & 0x0f) | ((lm & 0x0f) << 4);
            q[j - 4] |= (ls >> 4) << 6;
            q[j] |= (lm >> 4) << 6;
        }
    }
    q
}

#[inline(always)]
fn scale_min_k4(j: usize, q: &[u8; K_SCALE_SIZE]) -> (u8, u8) {
    if j < 4 {
        (q[j] & 63, q[j + 4] & 63)
    } else {
        (
            (q[j + 4] & 0x0f) | ((q[j - 4] >> 6) << 4),
            (q[j + 4] >> 4) | ((q[j] >> 6) << 4),
        )
    }
}

// ---------------------------------------------------------------------------
// Q3_K
// ---------------------------------------------------------------------------

impl BlockQ3_K {
    pub fn d(&self) -> f32 {
        f16_to(self.d)
    }

    /// Signed sub-block scales in `[-32, 31]`.
    #[inline(always)]
    pub fn sub_scales(&self) -> [i8; 16] {
        let s = &self.scales;
        let mut out = [0i8; 16];
        for (j, o) in out.iter_mut().enumerate() {
            let low = if j < 8 { s[j] & 0x0f } else { s[j - 8] >> 4 };
            let high = (s[8 + j % 4] >> (2 * (j / 4))) & 3;
            *o = (low | (high << 4)) as i8 - 32;
        }
        out
    }

    /// Signed codes in `[-4, 3]`.
    #[inline(always)]
    pub fn codes(&self, out: &mut [i8; QK_K]) {
        for chunk in 0..2 {
            let qs = &self.qs[32 * chunk..32 * chunk + 32];
            for shift in 0..4 {
                let bit = 4 * chunk + shift;
                let base = 128 * chunk + 32 * shift;
                for l in 0..32 {
                    let low = ((qs[l] >> (2 * shift)) & 3) as i8;
                    let high = (self.hmask[l] >> bit) & 1;
                    out[base + l] = low - if high != 0 { 0 } else { 4 };
                }
            }
        }
    }

    pub fn from_parts(d: f32, scales: &[i8; 16], codes: &[i8; QK_K]) -> Self {
        let mut b = BlockQ3_K::zeroed();
        b.d = f16_from(d);
        for (j, &sc) in scales.iter().enumerate() {
            let l = (sc.clamp(-32, 31) + 32) as u8;
            if j < 8 {
                b.scales[j] = l & 0x0f;
            } else {
                b.scales[j - 8] |= (l & 0x0f) << 4;
            }
            b.scales[8 + j % 4] |= (l >> 4) << (2 * (j / 4));
        }
        for (j, &c) in codes.iter().enumerate() {
            let l = (c.clamp(-4, 3) + 4) as u8;
            if l > 3 {
                b.hmask[j % 32] |= 1 << (j / 32);
            }
            let chunk = j / 128;
            let within = j % 128;
            b.qs[32 * chunk + within % 32] |= (l & 3) << (2 * (within / 32));
        }
        b
    }
}

impl Block for BlockQ3_K {
    const FORMAT: Format = Format::Q3_K;

    fn quantize(values: &[f32]) -> Self {
        let fit = fit_symmetric(values, 4, 32);
        let mut b = BlockQ3_K::from_parts(0.0, &fit.scales, &fit.codes);
        b.d = fit.d;
        b
    }

    fn dequantize(&self, out: &mut [f32]) {
        let d = self.d();
        let sc = self.sub_scales();
        let mut q = [0i8; QK_K];
        self.codes(&mut q);
        for (j, (o, q)) in out.chunks_exact_mut(16).zip(q.chunks_exact(16)).enumerate() {
            let dl = d * sc[j] as f32;
            for (o, &q) in o.iter_mut().zip(q) {
                *o = dl * q as f32;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Q4_K / Q5_K
// ---------------------------------------------------------------------------

macro_rules! affine_accessors {
    ($t:ty) => {
        impl $t {
            pub fn d(&self) -> f32 {
                f16_to(self.d)
            }

            pub fn dmin(&self) -> f32 {
                f16_to(self.dmin)
            }

            /// Unsigned 6-bit sub-block scales and mins.
            #[inline(always)]
            pub fn scales_mins(&self) -> ([u8; 8], [u8; 8]) {
                let mut sc = [0u8; 8];
                let mut m = [0u8; 8];
                for j in 0..8 {
                    (sc[j], m[j]) = scale_min_k4(j, &self.scales);
                }
                (sc, m)
            }
        }

        impl Block for $t {
            const FORMAT: Format = <$t>::FORMAT_ID;

            fn quantize(values: &[f32]) -> Self {
                let fit = fit_affine(values, <$t>::BITS);
                let mut b = <$t>::from_parts(0.0, 0.0, &fit.scales, &fit.mins, &fit.codes);
                b.d = fit.d;
                b.dmin = fit.dmin;
                b
            }

            fn dequantize(&self, out: &mut [f32]) {
                let (d, dmin) = (self.d(), self.dmin());
                let (sc, m) = self.scales_mins();
                let mut q = [0u8; QK_K];
                self.codes(&mut q);
                for (j, (o, q)) in out.chunks_exact_mut(32).zip(q.chunks_exact(32)).enumerate() {
                    let dl = d * sc[j] as f32;
                    let ml = dmin * m[j] as f32;
                    for (o, &q) in o.iter_mut().zip(q) {
                        *o = dl * q as f32 - ml;
                    }
                }
            }
        }
    };
}

impl BlockQ4_K {
    const FORMAT_ID: Format = Format::Q4_K;
    const BITS: u32 = 4;

    /// Unsigned codes in `[0, 15]`.
    #[inline(always)]
    pub fn codes(&self, out: &mut [u8; QK_K]) {
        for c in 0..4 {
            let qs = &self.qs[32 * c..32 * c + 32];
            for l in 0..32 {
                out[64 * c + l] = qs[l] & 0x0f;
                out[64 * c + 32 + l] = qs[l] >> 4;
            }
        }
    }

    pub fn from_parts(d: f32, dmin: f32, scales: &[u8; 8], mins: &[u8; 8], codes: &[u8; QK_K]) -> Self {
        let mut b = BlockQ4_K {
            d: f16_from(d),
            dmin: f16_from(dmin),
            scales: pack_scale_min_k4(scales, mins),
            qs: [0; QK_K / 2],
        };
        for c in 0..4 {
            for l in 0..32 {
                let lo = codes[64 * c + l].min(15);
                let hi = codes[64 * c + 32 + l].min(15);
                b.qs[32 * c + l] = lo | (hi << 4);
            }
        }
        b
    }
}

affine_accessors!(BlockQ4_K);

impl BlockQ5_K {
    const FORMAT_ID: Format = Format::Q5_K;
    const BITS: u32 = 5;

    /// Unsigned codes in `[0, 31]`.
    #[inline(always)]
    pub fn codes(&self, out: &mut [u8; QK_K]) {
        for c in 0..4 {
            let qs = &self.qs[32 * c..32 * c + 32];
            let (m1, m2) = (1u8 << (2 * c), 2u8 << (2 * c));
            for l in 0..32 {
                let h1 = if self.qh[l] & m1 != 0 { 16 } else { 0 };
                let h2 = if self.qh[l] & m2 != 0 { 16 } else { 0 };
                out[64 * c + l] = (qs[l] & 0x0f) + h1;
                out[64 * c + 32 + l] = (qs[l] >> 4) + h2;
            }
        }
    }

    pub fn from_parts(d: f32, dmin: f32, scales: &[u8; 8], mins: &[u8; 8], codes: &[u8; QK_K]) -> Self {
        let mut b = BlockQ5_K {
            d: f16_from(d),
            dmin: f16_from(dmin),
            scales: pack_scale_min_k4(scales, mins),
            qh: [0; QK_K / 8],
            qs: [0; QK_K / 2],
        };
        for c in 0..4 {
            let (m1, m2) = (1u8 << (2 * c), 2u8 << (2 * c));
            for l in 0..32 {
                let lo = codes[64 * c + l].min(31);
                let hi = codes[64 * c + 32 + l].min(31);
                if lo > 15 {
                    b.qh[l] |= m1;
                }
                if hi > 15 {
                    b.qh[l] |= m2;
                }
                b.qs[32 * c + l] = (lo & 0x0f) | ((hi & 0x0f) << 4);
            }
        }
        b
    }
}

affine_accessors!(BlockQ5_K);

// ---------------------------------------------------------------------------
// Q6_K
// ---------------------------------------------------------------------------

impl BlockQ6_K {
    pub fn d(&self) -> f32 {
        f16_to(self.d)
    }

    /// Signed codes in `[-32, 31]`.
    #[inline(always)]
    pub fn codes(&self, out: &mut [i8; QK_K]) {
        for n in 0..2 {
            let ql = &self.ql[64 * n..64 * n + 64];
            let qh = &self.qh[32 * n..32 * n + 32];
            let y = &mut out[128 * n..128 * n + 128];
            for l in 0..32 {
                y[l] = ((ql[l] & 0x0f) | ((qh[l] & 3) << 4)) as i8 - 32;
                y[l + 32] = ((ql[l + 32] & 0x0f) | (((qh[l] >> 2) & 3) << 4)) as i8 - 32;
                y[l + 64] = ((ql[l] >> 4) | (((qh[l] >> 4) & 3) << 4)) as i8 - 32;
                y[l + 96] = ((ql[l + 32] >> 4) | (((qh[l] >> 6) & 3) << 4)) as i8 - 32;
            }
        }
    }

    pub fn from_parts(d: f32, scales: &[i8; 16], codes: &[i8; QK_K]) -> Self {
        let mut b = BlockQ6_K {
            ql: [0; QK_K / 2],
            qh: [0; QK_K / 4],
            scales: *scales,
            d: f16_from(d),
        };
        let l = |i: usize| (codes[i].clamp(-32, 31) + 32) as u8;
        for n in 0..2 {
            let j = 128 * n;
            for i in 0..32 {
                let (q1, q2, q3, q4) = (l(j + i), l(j + i + 32), l(j + i + 64), l(j + i + 96));
                b.ql[64 * n + i] = (q1 & 0x0f) | ((q3 & 0x0f) << 4);
                b.ql[64 * n + i + 32] = (q2 & 0x0f) | ((q4 & 0x0f) << 4);
                b.qh[32 * n + i] = (q1 >> 4) | ((q2 >> 4) << 2) | ((q3 >> 4) << 4) | ((q4 >> 4) << 6);
            }
        }
        b
    }
}

impl Block for BlockQ6_K {
    const FORMAT: Format = Format::Q6_K;

    fn quantize(values: &[f32]) -> Self {
        let fit = fit_symmetric(values, 32, 128);
        let mut b = BlockQ6_K::from_parts(0.0, &fit.scales, &fit.codes);
        b.d = fit.d;
        b
    }

    fn dequantize(&self, out: &mut [f32]) {
        let d = self.d();
        let mut q = [0i8; QK_K];
        self.codes(&mut q);
        for (j, (o, q)) in out.chunks_exact_mut(16).zip(q.chunks_exact(16)).enumerate() {
            let dl = d * self.scales[j] as f32;
            for (o, &q) in o.iter_mut().zip(q) {
                *o = dl * q as f32;
            }
        }
    }
}
