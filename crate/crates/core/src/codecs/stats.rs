use crate::error::{Error, Result};
use crate::format::{Format, QuantKind};

/// Reconstruction error summary.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ErrorStats {
    pub rmse: f64,
    pub max_abs_err: f64,
    pub mean_err: f64,
    pub empirical_var: f64,
    /// Mean of `step^2 / 12` over the format's scaling groups, where the step
    /// is what the nominal uniform quantizer would use on the original data.
    pub predicted_var: f64,
}

impl ErrorStats {
    /// `empirical_var / predicted_var`; NaN when nothing is predicted.
    pub fn variance_ratio(&self) -> f64 {
        if self.predicted_var > 0.0 {
            self.empirical_var / self.predicted_var
        } else {
            f64::NAN
        }
    }
}

/// Nominal quantization step for one scaling group.
pub fn predicted_step(format: Format, group: &[f32]) -> f64 {
    let l = format.layout();
    let levels = ((1u64 << l.code_bits) - 1) as f64;
    let (mut lo, mut hi, mut amax) = (f64::INFINITY, f64::NEG_INFINITY, 0f64);
    for &v in group {
        let v = v as f64;
        lo = lo.min(v);
        hi = hi.max(v);
        amax = amax.max(v.abs());
    }
    match l.kind {
        QuantKind::Float => 0.0,
        QuantKind::Affine => (hi - lo) / levels,
        QuantKind::Symmetric => 2.0 * amax / levels,
        QuantKind::SuperBlock if l.has_offset => (hi - lo.min(0.0)) / levels,
        QuantKind::SuperBlock => 2.0 * amax / levels,
    }
}

/// Compares `reconstructed` against `original`, both in the same row-major
/// order, for data stored in `format`.
pub fn error_stats(original: &[f32], reconstructed: &[f32], format: Format) -> Result<ErrorStats> {
    if original.len() != reconstructed.len() {
        return Err(Error::Length {
            expected: original.len(),
            actual: reconstructed.len(),
        });
    }
    if original.is_empty() {
        return Err(Error::Length { expected: 1, actual: 0 });
    }
    let n = original.len() as f64;
    let (mut sum, mut sq, mut max) = (0f64, 0f64, 0f64);
    for (&a, &b) in original.iter().zip(reconstructed) {
        let e = b as f64 - a as f64;
        sum += e;
        sq += e * e;
        max = max.max(e.abs());
    }
    let mean = sum / n;
    let l = format.layout();
    let group = l.sub_block_weights();
    let predicted_var = if l.is_quantized() && original.len().is_multiple_of(group) {
        let steps = original.chunks_exact(group).map(|g| {
            let s = predicted_step(format, g);
            s * s / 12.0
        });
        steps.sum::<f64>() / (original.len() / group) as f64
    } else {
        0.0
    };
    Ok(ErrorStats {
        rmse: libm::sqrt(sq / n),
        max_abs_err: max,
        mean_err: mean,
        empirical_var: (sq / n - mean * mean).max(0.0),
        predicted_var,
    })
}
