//! Throughput harness: worker-count invariance and result shape.

use kquant::bench::{bench_throughput, BenchConfig, Dims, Mode, Stack, Stats};
use kquant::parallel;
use kquant_core::{quantize_tensor, Format, Isa, QuantScheme, TensorF32};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small(scheme: QuantScheme, mode: Mode, threads: usize) -> BenchConfig {
    BenchConfig {
        dims: Dims::llama(2, 512),
        pp: 8,
        tg: 4,
        threads,
        ..BenchConfig::new(scheme, mode)
    }
}

#[test]
fn matvec_is_bitwise_identical_across_thread_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for f in Format::ALL.into_iter().filter(|&f| f != Format::F32) {
        let (rows, cols) = (37, 512);
        let w = TensorF32::new("w", vec![rows, cols], (0..rows * cols).map(|_| rng.gen_range(-0.05..0.05)).collect())
            .unwrap();
        let q = quantize_tensor(&w, f).unwrap();
        let x: Vec<f32> = (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let one = parallel::matvec(Isa::detect(), &q, &x, 1).unwrap();
        for t in [2, 3, 4, 8, 64] {
            let many = parallel::matvec(Isa::detect(), &q, &x, t).unwrap();
            assert!(one.iter().zip(&many).all(|(a, b)| a.to_bits() == b.to_bits()), "{f} threads {t}");
        }
    }
}

#[test]
fn stack_forward_is_thread_invariant() {
    for mode in [Mode::Decode, Mode::Prefill] {
        let cfg = small(QuantScheme::Q4_K_M, mode, 1);
        let stack = Stack::build(&cfg).unwrap();
        let n = 3;
        let seed: Vec<f32> = (0..n * stack.dims().width).map(|i| ((i * 37) % 101) as f32 / 101.0 - 0.5).collect();
        let mut a = seed.clone();
        stack.forward(Isa::detect(), &mut a, n, 1).unwrap();
        let mut b = seed.clone();
        stack.forward(Isa::detect(), &mut b, n, 3).unwrap();
        assert_eq!(a, b, "{mode}");
    }
}

#[test]
fn result_shape_does_not_depend_on_threads() {
    let r1 = bench_throughput(&small(QuantScheme::Q5_0, Mode::Decode, 1)).unwrap();
    let r2 = bench_throughput(&small(QuantScheme::Q5_0, Mode::Decode, 2)).unwrap();
    assert_eq!((r1.dims, r1.tokens, r1.stack_bytes), (r2.dims, r2.tokens, r2.stack_bytes));
    assert_eq!(r1.samples.len(), r2.samples.len());
    assert_eq!(r2.threads, 2);
    let prefill = bench_throughput(&small(QuantScheme::Q5_0, Mode::Prefill, 1)).unwrap();
    assert_eq!(prefill.tokens, 8);
    assert_eq!(r1.tokens, 4);
}

#[test]
fn stack_bytes_follow_formats() {
    let f16 = Stack::build(&small(QuantScheme::F16, Mode::Decode, 1)).unwrap();
    let q8 = Stack::build(&small(QuantScheme::Q8_0, Mode::Decode, 1)).unwrap();
    let weights = 2 * f16.dims().weights_per_layer();
    assert_eq!(f16.bytes(), 2 * weights);
    assert_eq!(q8.bytes(), weights / 32 * 34);
}

#[test]
fn stats_use_sample_deviation() {
    let s = Stats::of(&[1.0, 2.0, 3.0, 4.0, 5.0]);
    assert_eq!(s.mean, 3.0);
    assert!((s.std - 2.5f64.sqrt()).abs() < 1e-12);
    assert!((s.cv() - 2.5f64.sqrt() / 3.0).abs() < 1e-12);
    assert_eq!(Stats::of(&[7.0]).std, 0.0);
}
