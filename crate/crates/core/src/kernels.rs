//! Matrix-vector products computed directly on packed payloads.
//!
//! Activations are quantized to 8-bit blocks of 32 first; each weight block
//! is then reduced with an integer dot product and scaled once. Offsets of
//! the affine formats are folded in through the activation block sums. F16
//! weights are multiplied against the real activations. Each row is reduced
//! in a fixed order over its blocks, in f32, so its result depends only on
//! the row, the input and the [`Isa`], never on how rows are split across
//! workers.

use alloc::vec;
use alloc::vec::Vec;

use crate::codecs::{
    dequantize_row, nearest_code, signed_absmax, BlockQ3_K, BlockQ4_0, BlockQ4_1, BlockQ4_K, BlockQ5_0,
    BlockQ5_1, BlockQ5_K, BlockQ6_K, BlockQ8_0,
};
use crate::error::{Error, Result};
use crate::format::{Format, QK, QK_K};
use crate::tensor::QuantizedTensor;

/// 32 activations quantized symmetrically with an f32 scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationBlockQ8 {
    pub d: f32,
    pub qs: [i8; QK],
    /// Sum of `qs`.
    pub isum: i32,
}

impl ActivationBlockQ8 {
    pub fn quantize(values: &[f32]) -> Self {
        let amax = signed_absmax(values).abs();
        let d = amax / 127.0;
        let mut qs = [0i8; QK];
        for (q, &v) in qs.iter_mut().zip(values) {
            *q = nearest_code(v, d, -127, 127) as i8;
        }
        ActivationBlockQ8 {
            d,
            qs,
            isum: qs.iter().map(|&q| q as i32).sum(),
        }
    }

    pub fn dequantize(&self, out: &mut [f32]) {
        for (o, &q) in out.iter_mut().zip(&self.qs) {
            *o = self.d * q as f32;
        }
    }
}

/// Quantizes a row whose length is a multiple of 32.
pub fn quantize_activations_q8(row: &[f32]) -> Result<Vec<ActivationBlockQ8>> {
    if !row.len().is_multiple_of(QK) {
        return Err(Error::Length {
            expected: (row.len() / QK + 1) * QK,
            actual: row.len(),
        });
    }
    if let Some(i) = row.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index: i });
    }
    Ok(row.chunks_exact(QK).map(ActivationBlockQ8::quantize).collect())
}

/// Instruction-set level used by the kernels. Only obtainable through
/// [`Isa::portable`] or [`Isa::detect`], so an AVX2 token implies the CPU
/// supports it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Isa {
    avx2: bool,
}

impl Isa {
    pub const fn portable() -> Self {
        Isa { avx2: false }
    }

    /// Best level available: probed at runtime with `std`, otherwise taken
    /// from the compile-time target features.
    pub fn detect() -> Self {
        #[cfg(all(feature = "std", any(target_arch = "x86_64", target_arch = "x86")))]
        {
            Isa {
                avx2: std::is_x86_feature_detected!("avx2")
                    && std::is_x86_feature_detected!("fma")
                    && std::is_x86_feature_detected!("f16c"),
            }
        }
        #[cfg(not(all(feature = "std", any(target_arch = "x86_64", target_arch = "x86"))))]
        {
            Isa {
                avx2: cfg!(all(target_feature = "avx2", target_feature = "fma", target_feature = "f16c")),
            }
        }
    }

    pub fn avx2(&self) -> bool {
        self.avx2
    }
}

impl Default for Isa {
    fn default() -> Self {
        Isa::detect()
    }
}

/// Input vector in the form a weight format consumes.
#[derive(Debug, Clone, PartialEq)]
pub enum Activations {
    Real(Vec<f32>),
    Q8(Vec<ActivationBlockQ8>),
}

impl Activations {
    /// Prepares `x` for rows stored in `format`.
    pub fn prepare(format: Format, x: &[f32]) -> Result<Self> {
        match format {
            Format::F32 | Format::F16 => {
                if let Some(i) = x.iter().position(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { index: i });
                }
                Ok(Activations::Real(x.into()))
            }
            _ => quantize_activations_q8(x).map(Activations::Q8),
        }
    }

    /// Number of input elements.
    pub fn len(&self) -> usize {
        match self {
            Activations::Real(x) => x.len(),
            Activations::Q8(a) => a.len() * QK,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[inline(always)]
fn idot<const N: usize>(w: &[i8; N], a: &[i8]) -> i32 {
    let mut s = 0i32;
    for i in 0..N {
        s += w[i] as i32 * a[i] as i32;
    }
    s
}

#[inline(always)]
fn udot<const N: usize>(w: &[u8; N], a: &[i8]) -> i32 {
    let mut s = 0i32;
    for i in 0..N {
        s += w[i] as i32 * a[i] as i32;
    }
    s
}

/// Block-level dot product against prepared Q8 activations.
trait QDot: bytemuck::Pod {
    /// Activation blocks consumed per weight block.
    const SPAN: usize;

    fn dot(&self, a: &[ActivationBlockQ8]) -> f32;
}

impl QDot for BlockQ4_0 {
    const SPAN: usize = 1;

    #[inline(always)]
    fn dot(&self, a: &[ActivationBlockQ8]) -> f32 {
        let a = &a[0];
        let mut w = [0u8; QK];
        for j in 0..QK / 2 {
            w[j] = self.qs[j] & 0x0f;
            w[j + QK / 2] = self.qs[j] >> 4;
        }
        let s = udot(&w, &a.qs) - 8 * a.isum;
        self.scale() * a.d * s as f32
    }
}

impl QDot for BlockQ4_1 {
    const SPAN: usize = 1;

    #[inline(always)]
    fn dot(&self, a: &[ActivationBlockQ8]) -> f32 {
        let a = &a[0];
        let mut w = [0u8; QK];
        self.codes(&mut w);
        let s = udot(&w, &a.qs);
        a.d * (self.scale() * s as f32 + self.offset() * a.isum as f32)
    }
}

impl QDot for BlockQ5_0 {
    const SPAN: usize = 1;

    #[inline(always)]
    fn dot(&self, a: &[ActivationBlockQ8]) -> f32 {
        let a = &a[0];
        let mut w = [0i8; QK];
        self.codes(&mut w);
        self.scale() * a.d * idot(&w, &a.qs) as f32
    }
}

impl QDot for BlockQ5_1 {
    const SPAN: usize = 1;

    #[inline(always)]
    fn dot(&self, a: &[ActivationBlockQ8]) -> f32 {
        let a = &a[0];
        let mut w = [0u8; QK];
        self.codes(&mut w);
        let s = udot(&w, &a.qs);
        a.d * (self.scale() * s as f32 + self.offset() * a.isum as f32)
    }
}

impl QDot for BlockQ8_0 {
    const SPAN: usize = 1;

    #[inline(always)]
    fn dot(&self, a: &[ActivationBlockQ8]) -> f32 {
        let a = &a[0];
        self.scale() * a.d * idot(&self.qs, &a.qs) as f32
    }
}

impl QDot for BlockQ3_K {
    const SPAN: usize = QK_K / QK;

    #[inline(always)]
    fn dot(&self, a: &[ActivationBlockQ8]) -> f32 {
        let mut q = [0i8; QK_K];
        self.codes(&mut q);
        let sc = self.sub_scales();
        let mut acc = 0f32;
        for (b, a) in a.iter().enumerate().take(Self::SPAN) {
            let lo: &[i8; 16] = q[QK * b..QK * b + 16].try_into().unwrap();
            let hi: &[i8; 16] = q[QK * b + 16..QK * b + QK].try_into().unwrap();
            let s = sc[2 * b] as i32 * idot(lo, &a.qs[..16]) + sc[2 * b + 1] as i32 * idot(hi, &a.qs[16..]);
            acc += a.d * s as f32;
        }
        self.d() * acc
    }
}

impl QDot for BlockQ6_K {
    const SPAN: usize = QK_K / QK;

    #[inline(always)]
    fn dot(&self, a: &[ActivationBlockQ8]) -> f32 {
        let mut q = [0i8; QK_K];
        self.codes(&mut q);
        let sc = &self.scales;
        let mut acc = 0f32;
        for (b, a) in a.iter().enumerate().take(Self::SPAN) {
            let lo: &[i8; 16] = q[QK * b..QK * b + 16].try_into().unwrap();
            let hi: &[i8; 16] = q[QK * b + 16..QK * b + QK].try_into().unwrap();
            let s = sc[2 * b] as i32 * idot(lo, &a.qs[..16]) + sc[2 * b + 1] as i32 * idot(hi, &a.qs[16..]);
            acc += a.d * s as f32;
        }
        self.d() * acc
    }
}

macro_rules! affine_k_dot {
    ($t:ty) => {
        impl QDot for $t {
            const SPAN: usize = QK_K / QK;

            #[inline(always)]
            fn dot(&self, a: &[ActivationBlockQ8]) -> f32 {
                let mut q = [0u8; QK_K];
                self.codes(&mut q);
                let (sc, m) = self.scales_mins();
                let (mut sum, mut off) = (0f32, 0f32);
                for (b, a) in a.iter().enumerate().take(Self::SPAN) {
                    let w: &[u8; QK] = q[QK * b..QK * b + QK].try_into().unwrap();
                    sum += a.d * (sc[b] as i32 * udot(w, &a.qs)) as f32;
                    off += a.d * (m[b] as i32 * a.isum) as f32;
                }
                self.d() * sum - self.dmin() * off
            }
        }
    };
}

affine_k_dot!(BlockQ4_K);
affine_k_dot!(BlockQ5_K);

#[inline(always)]
fn rows_q<B: QDot>(rows: &[u8], row_bytes: usize, a: &[ActivationBlockQ8], y: &mut [f32]) {
    for (row, y) in rows.chunks_exact(row_bytes).zip(y.iter_mut()) {
        let blocks: &[B] = bytemuck::cast_slice(row);
        let mut acc = 0f32;
        for (b, a) in blocks.iter().zip(a.chunks_exact(B::SPAN)) {
            acc += b.dot(a);
        }
        *y = acc;
    }
}

#[inline(always)]
fn dot_f16(row: &[u8], x: &[f32]) -> f32 {
    // eight interleaved partial sums, folded pairwise at the end
    let mut acc = [0f32; 8];
    let mut w = row.chunks_exact(16);
    let mut xs = x.chunks_exact(8);
    for (w, x) in (&mut w).zip(&mut xs) {
        for k in 0..8 {
            acc[k] += half::f16::from_le_bytes([w[2 * k], w[2 * k + 1]]).to_f32() * x[k];
        }
    }
    let mut tail = 0f32;
    for (w, &x) in w.remainder().chunks_exact(2).zip(xs.remainder()) {
        tail += half::f16::from_le_bytes([w[0], w[1]]).to_f32() * x;
    }
    fold8(acc) + tail
}

#[inline(always)]
fn fold8(a: [f32; 8]) -> f32 {
    ((a[0] + a[4]) + (a[2] + a[6])) + ((a[1] + a[5]) + (a[3] + a[7]))
}

#[inline(always)]
fn dot_f32(row: &[u8], x: &[f32]) -> f32 {
    let mut acc = [0f32; 8];
    let mut w = row.chunks_exact(32);
    let mut xs = x.chunks_exact(8);
    for (w, x) in (&mut w).zip(&mut xs) {
        for k in 0..8 {
            acc[k] += f32::from_le_bytes(w[4 * k..4 * k + 4].try_into().unwrap()) * x[k];
        }
    }
    let mut tail = 0f32;
    for (w, &x) in w.remainder().chunks_exact(4).zip(xs.remainder()) {
        tail += f32::from_le_bytes(w.try_into().unwrap()) * x;
    }
    fold8(acc) + tail
}

#[inline(always)]
fn rows_real(format: Format, rows: &[u8], row_bytes: usize, x: &[f32], y: &mut [f32]) {
    for (row, y) in rows.chunks_exact(row_bytes).zip(y.iter_mut()) {
        *y = match format {
            Format::F16 => dot_f16(row, x),
            _ => dot_f32(row, x),
        };
    }
}

#[cfg(any(target_arch = "x86_64", target_arch = "x86"))]
mod x86 {
    #[cfg(target_arch = "x86")]
    use core::arch::x86::*;
    #[cfg(target_arch = "x86_64")]
    use core::arch::x86_64::*;

    use super::{fold8, ActivationBlockQ8};
    use crate::codecs::{
        BlockQ3_K, BlockQ4_0, BlockQ4_1, BlockQ4_K, BlockQ5_0, BlockQ5_1, BlockQ5_K, BlockQ6_K, BlockQ8_0,
    };
    use crate::format::{QK, QK_K};

    pub(super) trait Avx2Dot: bytemuck::Pod {
        const SPAN: usize;

        /// Adds the vector part of this block's dot product to `acc` and
        /// returns the scalar part.
        unsafe fn accumulate(&self, a: &[ActivationBlockQ8], acc: &mut __m256) -> f32;
    }

    #[inline]
    #[target_feature(enable = "avx2,fma,f16c")]
    unsafe fn half(b: [u8; 2]) -> f32 {
        _mm_cvtss_f32(_mm_cvtph_ps(_mm_cvtsi32_si128(u16::from_le_bytes(b) as i32)))
    }

    #[inline]
    #[target_feature(enable = "avx2,fma,f16c")]
    unsafe fn load(p: &[i8; QK]) -> __m256i {
        _mm256_loadu_si256(p.as_ptr() as *const __m256i)
    }

    /// Low nibbles of 16 bytes in the low lane, high nibbles in the high lane.
    #[inline]
    #[target_feature(enable = "avx2,fma,f16c")]
    unsafe fn nibbles(qs: &[u8; QK / 2]) -> __m256i {
        let t = _mm_loadu_si128(qs.as_ptr() as *const __m128i);
        let b = _mm256_set_m128i(_mm_srli_epi16(t, 4), t);
        _mm256_and_si256(b, _mm256_set1_epi8(0x0f))
    }

    /// 0xff in byte `j` where bit `j` of `x` is set.
    #[inline]
    #[target_feature(enable = "avx2,fma,f16c")]
    unsafe fn bits(x: u32) -> __m256i {
        let shuf = _mm256_set_epi64x(
            0x0303030303030303,
            0x0202020202020202,
            0x0101010101010101,
            0x0000000000000000,
        );
        let b = _mm256_shuffle_epi8(_mm256_set1_epi32(x as i32), shuf);
        let b = _mm256_or_si256(b, _mm256_set1_epi64x(0x7fbfdfeff7fbfdfe));
        _mm256_cmpeq_epi8(b, _mm256_set1_epi64x(-1))
    }

    /// Pairwise i16 products of signed `w` and `a`.
    #[inline]
    #[target_feature(enable = "avx2,fma,f16c")]
    unsafe fn pairs_signed(w: __m256i, a: __m256i) -> __m256i {
        _mm256_maddubs_epi16(_mm256_sign_epi8(w, w), _mm256_sign_epi8(a, w))
    }

    #[inline]
    #[target_feature(enable = "avx2,fma,f16c")]
    unsafe fn sum_pairs(p: __m256i) -> __m256i {
        _mm256_madd_epi16(p, _mm256_set1_epi16(1))
    }

    #[inline]
    #[target_feature(enable = "avx2,fma,f16c")]
    unsafe fn fma(scale: f32, s: __m256i, acc: &mut __m256) {
        *acc = _mm256_fmadd_ps(_mm256_set1_ps(scale), _mm256_cvtepi32_ps(s), *acc);
    }

    impl Avx2Dot for BlockQ4_0 {
        const SPAN: usize = 1;

        #[inline]
        #[target_feature(enable = "avx2,fma,f16c")]
        unsafe fn accumulate(&self, a: &[ActivationBlockQ8], acc: &mut __m256) -> f32 {
            let w = _mm256_sub_epi8(nibbles(&self.qs), _mm256_set1_epi8(8));
            let a = &a[0];
            fma(half(self.d) * a.d, sum_pairs(pairs_signed(w, load(&a.qs))), acc);
            0.0
        }
    }

    impl Avx2Dot for BlockQ4_1 {
        const SPAN: usize = 1;

        #[inline]
        #[target_feature(enable = "avx2,fma,f16c")]
        unsafe fn accumulate(&self, a: &[ActivationBlockQ8], acc: &mut __m256) -> f32 {
            let a = &a[0];
            fma(half(self.d) * a.d, sum_pairs(_mm256_maddubs_epi16(nibbles(&self.qs), load(&a.qs))), acc);
            half(self.m) * a.d * a.isum as f32
        }
    }

    impl Avx2Dot for BlockQ5_0 {
        const SPAN: usize = 1;

        #[inline]
        #[target_feature(enable = "avx2,fma,f16c")]
        unsafe fn accumulate(&self, a: &[ActivationBlockQ8], acc: &mut __m256) -> f32 {
            // a clear fifth bit means the code is the nibble minus 16
            let hi = _mm256_andnot_si256(bits(u32::from_le_bytes(self.qh)), _mm256_set1_epi8(0xf0u8 as i8));
            let w = _mm256_or_si256(nibbles(&self.qs), hi);
            let a = &a[0];
            fma(half(self.d) * a.d, sum_pairs(pairs_signed(w, load(&a.qs))), acc);
            0.0
        }
    }

    impl Avx2Dot for BlockQ5_1 {
        const SPAN: usize = 1;

        #[inline]
        #[target_feature(enable = "avx2,fma,f16c")]
        unsafe fn accumulate(&self, a: &[ActivationBlockQ8], acc: &mut __m256) -> f32 {
            let hi = _mm256_and_si256(bits(u32::from_le_bytes(self.qh)), _mm256_set1_epi8(0x10));
            let w = _mm256_or_si256(nibbles(&self.qs), hi);
            let a = &a[0];
            fma(half(self.d) * a.d, sum_pairs(_mm256_maddubs_epi16(w, load(&a.qs))), acc);
            half(self.m) * a.d * a.isum as f32
        }
    }

    impl Avx2Dot for BlockQ8_0 {
        const SPAN: usize = 1;

        #[inline]
        #[target_feature(enable = "avx2,fma,f16c")]
        unsafe fn accumulate(&self, a: &[ActivationBlockQ8], acc: &mut __m256) -> f32 {
            let a = &a[0];
            fma(half(self.d) * a.d, sum_pairs(pairs_signed(load(&self.qs), load(&a.qs))), acc);
            0.0
        }
    }

    /// Signed 16-weight sub-blocks: scales `lo` for the first half of each
    /// 32-block, `hi` for the second.
    #[inline]
    #[target_feature(enable = "avx2,fma,f16c")]
    unsafe fn sub16(w: __m256i, a: &ActivationBlockQ8, lo: i8, hi: i8) -> __m256i {
        let sc = _mm256_set_m128i(_mm_set1_epi16(hi as i16), _mm_set1_epi16(lo as i16));
        _mm256_madd_epi16(pairs_signed(w, load(&a.qs)), sc)
    }

    impl Avx2Dot for BlockQ3_K {
        const SPAN: usize = QK_K / QK;

        #[inline]
        #[target_feature(enable = "avx2,fma,f16c")]
        unsafe fn accumulate(&self, a: &[ActivationBlockQ8], acc: &mut __m256) -> f32 {
            let mut q = [0i8; QK_K];
            self.codes(&mut q);
            let sc = self.sub_scales();
            let d = half(self.d);
            for (b, a) in a.iter().enumerate().take(Self::SPAN) {
                let w = _mm256_loadu_si256(q.as_ptr().add(QK * b) as *const __m256i);
                fma(d * a.d, sub16(w, a, sc[2 * b], sc[2 * b + 1]), acc);
            }
            0.0
        }
    }

    impl Avx2Dot for BlockQ6_K {
        const SPAN: usize = QK_K / QK;

        #[inline]
        #[target_feature(enable = "avx2,fma,f16c")]
        unsafe fn accumulate(&self, a: &[ActivationBlockQ8], acc: &mut __m256) -> f32 {
            let mut q = [0i8; QK_K];
            self.codes(&mut q);
            let d = half(self.d);
            for (b, a) in a.iter().enumerate().take(Self::SPAN) {
                let w = _mm256_loadu_si256(q.as_ptr().add(QK * b) as *const __m256i);
                fma(d * a.d, sub16(w, a, self.scales[2 * b], self.scales[2 * b + 1]), acc);
            }
            0.0
        }
    }

    macro_rules! affine_k {
        ($t:ty) => {
            impl Avx2Dot for $t {
                const SPAN: usize = QK_K / QK;

                #[inline]
                #[target_feature(enable = "avx2,fma,f16c")]
                unsafe fn accumulate(&self, a: &[ActivationBlockQ8], acc: &mut __m256) -> f32 {
                    let mut q = [0u8; QK_K];
                    self.codes(&mut q);
                    let (sc, m) = self.scales_mins();
                    let d = half(self.d);
                    let mut off = 0f32;
                    for (b, a) in a.iter().enumerate().take(Self::SPAN) {
                        let w = _mm256_loadu_si256(q.as_ptr().add(QK * b) as *const __m256i);
                        let p = _mm256_maddubs_epi16(w, load(&a.qs));
                        fma(d * a.d, _mm256_madd_epi16(p, _mm256_set1_epi16(sc[b] as i16)), acc);
                        off += a.d * (m[b] as i32 * a.isum) as f32;
                    }
                    -half(self.dmin) * off
                }
            }
        };
    }

    affine_k!(BlockQ4_K);
    affine_k!(BlockQ5_K);

    #[target_feature(enable = "avx2,fma,f16c")]
    pub(super) unsafe fn rows_q_avx2<B: Avx2Dot>(rows: &[u8], row_bytes: usize, a: &[ActivationBlockQ8], y: &mut [f32]) {
        for (row, y) in rows.chunks_exact(row_bytes).zip(y.iter_mut()) {
            let blocks: &[B] = bytemuck::cast_slice(row);
            let mut acc = _mm256_setzero_ps();
            let mut scalar = 0f32;
            for (b, a) in blocks.iter().zip(a.chunks_exact(B::SPAN)) {
                scalar += b.accumulate(a, &mut acc);
            }
            let mut lanes = [0f32; 8];
            _mm256_storeu_ps(lanes.as_mut_ptr(), acc);
            *y = fold8(lanes) + scalar;
        }
    }

    #[target_feature(enable = "avx2,fma,f16c")]
    unsafe fn dot_f16(row: &[u8], x: &[f32]) -> f32 {
        let n = x.len().min(row.len() / 2);
        let (w, xp) = (row.as_ptr(), x.as_ptr());
        let mut acc = [_mm256_setzero_ps(); 4];
        let mut i = 0;
        while i + 32 <= n {
            for (k, acc) in acc.iter_mut().enumerate() {
                let j = i + 8 * k;
                let h = _mm_loadu_si128(w.add(2 * j) as *const __m128i);
                *acc = _mm256_fmadd_ps(_mm256_cvtph_ps(h), _mm256_loadu_ps(xp.add(j)), *acc);
            }
            i += 32;
        }
        let s = _mm256_add_ps(_mm256_add_ps(acc[0], acc[1]), _mm256_add_ps(acc[2], acc[3]));
        let mut lanes = [0f32; 8];
        _mm256_storeu_ps(lanes.as_mut_ptr(), s);
        let mut tail = 0f32;
        while i < n {
            tail += half::f16::from_le_bytes([row[2 * i], row[2 * i + 1]]).to_f32() * x[i];
            i += 1;
        }
        fold8(lanes) + tail
    }

    #[target_feature(enable = "avx2,fma,f16c")]
    pub(super) unsafe fn rows_f16_avx2(rows: &[u8], row_bytes: usize, x: &[f32], y: &mut [f32]) {
        for (row, y) in rows.chunks_exact(row_bytes).zip(y.iter_mut()) {
            *y = dot_f16(row, x);
        }
    }
}

#[cfg(any(target_arch = "x86_64", target_arch = "x86"))]
trait Kernel: QDot + x86::Avx2Dot {}
#[cfg(any(target_arch = "x86_64", target_arch = "x86"))]
impl<B: QDot + x86::Avx2Dot> Kernel for B {}
#[cfg(not(any(target_arch = "x86_64", target_arch = "x86")))]
trait Kernel: QDot {}
#[cfg(not(any(target_arch = "x86_64", target_arch = "x86")))]
impl<B: QDot> Kernel for B {}

fn rows_q_dispatch<B: Kernel>(isa: Isa, rows: &[u8], row_bytes: usize, a: &[ActivationBlockQ8], y: &mut [f32]) {
    #[cfg(any(target_arch = "x86_64", target_arch = "x86"))]
    if isa.avx2 {
        // SAFETY: an AVX2 `Isa` is only constructed after the features were
        // detected at runtime or enabled at compile time.
        unsafe { x86::rows_q_avx2::<B>(rows, row_bytes, a, y) };
        return;
    }
    let _ = isa;
    rows_q::<B>(rows, row_bytes, a, y)
}

/// Computes `y[i] = row_i · x` for a run of consecutive rows of `format`,
/// each `row_bytes` long. F32 weights are not a kernel format and are
/// rejected with [`Error::UnsupportedKernel`].
pub fn matvec_rows(isa: Isa, format: Format, rows: &[u8], row_bytes: usize, x: &Activations, y: &mut [f32]) -> Result<()> {
    let l = format.layout();
    let expected = x.len() / l.block_weights * l.block_bytes;
    if !x.len().is_multiple_of(l.block_weights) || row_bytes != expected {
        return Err(Error::Length {
            expected: row_bytes / l.block_bytes * l.block_weights,
            actual: x.len(),
        });
    }
    if rows.len() != row_bytes * y.len() {
        return Err(Error::PayloadLength {
            format,
            actual: rows.len(),
            expected: row_bytes * y.len(),
        });
    }
    if row_bytes == 0 {
        y.fill(0.0);
        return Ok(());
    }
    match (format, x) {
        (Format::F32, _) => return Err(Error::UnsupportedKernel(format)),
        (Format::F16, Activations::Real(x)) => {
            #[cfg(any(target_arch = "x86_64", target_arch = "x86"))]
            if isa.avx2 {
                // SAFETY: see `rows_q_dispatch`.
                unsafe { x86::rows_f16_avx2(rows, row_bytes, x, y) };
                return Ok(());
            }
            rows_real(format, rows, row_bytes, x, y)
        }
        (Format::Q4_0, Activations::Q8(a)) => rows_q_dispatch::<BlockQ4_0>(isa, rows, row_bytes, a, y),
        (Format::Q4_1, Activations::Q8(a)) => rows_q_dispatch::<BlockQ4_1>(isa, rows, row_bytes, a, y),
        (Format::Q5_0, Activations::Q8(a)) => rows_q_dispatch::<BlockQ5_0>(isa, rows, row_bytes, a, y),
        (Format::Q5_1, Activations::Q8(a)) => rows_q_dispatch::<BlockQ5_1>(isa, rows, row_bytes, a, y),
        (Format::Q8_0, Activations::Q8(a)) => rows_q_dispatch::<BlockQ8_0>(isa, rows, row_bytes, a, y),
        (Format::Q3_K, Activations::Q8(a)) => rows_q_dispatch::<BlockQ3_K>(isa, rows, row_bytes, a, y),
        (Format::Q4_K, Activations::Q8(a)) => rows_q_dispatch::<BlockQ4_K>(isa, rows, row_bytes, a, y),
        (Format::Q5_K, Activations::Q8(a)) => rows_q_dispatch::<BlockQ5_K>(isa, rows, row_bytes, a, y),
        (Format::Q6_K, Activations::Q8(a)) => rows_q_dispatch::<BlockQ6_K>(isa, rows, row_bytes, a, y),
        _ => return Err(Error::ActivationKind(format)),
    }
    Ok(())
}

/// Kernel selection for [`matvec_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[derive(Default)]
pub struct KernelOptions {
    pub isa: Isa,
    /// Formats without a direct kernel are dequantized row by row instead of
    /// failing.
    pub allow_fallback: bool,
}


pub fn has_kernel(format: Format) -> bool {
    format != Format::F32
}

fn check_input(w: &QuantizedTensor, x: &[f32]) -> Result<()> {
    if x.len() != w.row_len() {
        return Err(Error::Length {
            expected: w.row_len(),
            actual: x.len(),
        });
    }
    Ok(())
}

fn matvec_fallback(w: &QuantizedTensor, x: &[f32]) -> Result<Vec<f32>> {
    let mut row = vec![0f32; w.row_len()];
    let mut y = Vec::with_capacity(w.rows());
    for bytes in w.payload().chunks_exact(w.row_bytes()) {
        dequantize_row(w.format(), bytes, &mut row)?;
        y.push(row.iter().zip(x).map(|(a, b)| a * b).sum());
    }
    Ok(y)
}

/// `W · x` for a 2-D (or higher, flattened to rows) weight tensor.
pub fn matvec_with(w: &QuantizedTensor, x: &[f32], opts: KernelOptions) -> Result<Vec<f32>> {
    check_input(w, x)?;
    if !has_kernel(w.format()) {
        if opts.allow_fallback {
            return matvec_fallback(w, x);
        }
        return Err(Error::UnsupportedKernel(w.format()));
    }
    let a = Activations::prepare(w.format(), x)?;
    let mut y = vec![0f32; w.rows()];
    matvec_rows(opts.isa, w.format(), w.payload(), w.row_bytes(), &a, &mut y)?;
    Ok(y)
}

pub fn matvec_quantized(w: &QuantizedTensor, x: &[f32]) -> Result<Vec<f32>> {
    matvec_with(w, x, KernelOptions::default())
}

/// Batched product: `xs` holds `n` input rows back to back; the result holds
/// `n` output rows. Each weight row is read once and applied to every input.
pub fn matmul(isa: Isa, w: &QuantizedTensor, xs: &[f32], n: usize) -> Result<Vec<f32>> {
    if !has_kernel(w.format()) {
        return Err(Error::UnsupportedKernel(w.format()));
    }
    let k = w.row_len();
    if xs.len() != n * k {
        return Err(Error::Length {
            expected: n * k,
            actual: xs.len(),
        });
    }
    let acts = xs
        .chunks_exact(k.max(1))
        .map(|x| Activations::prepare(w.format(), x))
        .collect::<Result<Vec<_>>>()?;
    let rows = w.rows();
    let mut y = vec![0f32; n * rows];
    let mut one = [0f32; 1];
    for (r, row) in w.payload().chunks_exact(w.row_bytes()).enumerate() {
        for (t, a) in acts.iter().enumerate() {
            matvec_rows(isa, w.format(), row, w.row_bytes(), a, &mut one)?;
            y[t * rows + r] = one[0];
        }
    }
    Ok(y)
}
