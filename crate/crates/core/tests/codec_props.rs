use kquant_core::codecs::{dequantize_row, quantize_row};
use kquant_core::{dequantize_block, quantize_block, Format};
use proptest::prelude::*;

const QUANTIZED: [Format; 9] = [
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

fn block_values(n: usize) -> impl Strategy<Value = Vec<f32>> {
    (prop::collection::vec(-1.0f32..1.0, n), -6i32..6).prop_map(|(v, e)| {
        let s = 2f32.powi(e);
        v.into_iter().map(|x| x * s).collect()
    })
}

/// Sixteen groups of sixteen with unrelated magnitudes (down to subnormal
/// halves), some all-zero and some riding on an offset.
fn mixed_magnitudes() -> impl Strategy<Value = Vec<f32>> {
    (
        prop::collection::vec(-1.0f32..1.0, 256),
        prop::collection::vec((-30i32..8, 0u8..4), 16),
        -1.0f32..1.0,
    )
        .prop_map(|(v, groups, off)| {
            v.iter()
                .enumerate()
                .map(|(i, x)| match groups[i / 16] {
                    (_, 0) => 0.0,
                    (e, 3) => x * 2f32.powi(e) + off,
                    (e, _) => x * 2f32.powi(e),
                })
                .collect()
        })
}

fn requantize(f: Format, v: &[f32]) -> (Vec<u8>, Vec<u8>) {
    let mut p1 = vec![0u8; v.len() / f.block_weights() * f.block_bytes()];
    quantize_row(f, v, &mut p1).unwrap();
    let mut back = vec![0f32; v.len()];
    dequantize_row(f, &p1, &mut back).unwrap();
    let mut p2 = vec![0u8; p1.len()];
    quantize_row(f, &back, &mut p2).unwrap();
    (p1, p2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn requantizing_is_idempotent(fi in 0usize..QUANTIZED.len(), seed in block_values(256)) {
        let f = QUANTIZED[fi];
        let k = f.block_weights();
        let n = 256 / k * k;
        let (p1, p2) = requantize(f, &seed[..n]);
        prop_assert_eq!(p1, p2, "format {}", f);
    }

    #[test]
    fn requantizing_mixed_magnitudes_is_idempotent(v in mixed_magnitudes()) {
        for f in QUANTIZED {
            let (p1, p2) = requantize(f, &v);
            prop_assert_eq!(p1, p2, "format {}", f);
        }
    }

    #[test]
    fn block_round_trip_is_finite(fi in 0usize..QUANTIZED.len(), seed in block_values(256)) {
        let f = QUANTIZED[fi];
        let v = &seed[..f.block_weights()];
        let b = quantize_block(f, v).unwrap();
        prop_assert_eq!(b.len(), f.block_bytes());
        let out = dequantize_block(f, &b).unwrap();
        prop_assert!(out.iter().all(|x| x.is_finite()));
    }
}
