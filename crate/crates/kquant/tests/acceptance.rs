//! Acceptance run: one PASS/FAIL line per criterion, every tolerance and
//! time budget pinned below. Run with `--nocapture` to see the lines.

use std::collections::BTreeSet;
use std::io::Cursor;
use std::time::{Duration, Instant};

use kquant::bench::{bench_throughput, last_level_cache_bytes, BenchConfig, Mode};
use kquant::convert::{self, MemorySource};
use kquant::gguf::{self, GgufError};
use kquant::inventory::llama_3_1_8b;
use kquant::results::{read_results_csv, PUBLISHED_RESULTS_CSV};
use kquant_core::codecs::{dequantize_row, error_stats, quantize_row};
use kquant_core::kernels::{matvec_with, KernelOptions};
use kquant_core::metrics::{avg_score, pareto_frontier, pareto_points, perplexity};
use kquant_core::{
    dequantize_tensor, predict_model_size, quantize_tensor_for_scheme, size_reduction, Format, Isa, MixTable,
    QuantScheme, TensorF32,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LEGACY_SIZE_RTOL: f64 = 0.02;
const KQUANT_SIZE_RTOL: f64 = 0.05;
const AVG_TOL: f64 = 0.01;
const AVG_LOSS_TOL: f64 = 0.02;
const VARIANCE_RTOL: f64 = 0.25;
const MAX_RMSE_INVERSIONS: usize = 1;
const MATVEC_RTOL: f64 = 1e-2;
const MATVEC_ATOL_PER_NORM: f64 = 1e-3;
const MATVEC_SHAPES: usize = 20;
const ORACLE_SETS: usize = 1000;
const ORACLE_MAX_N: usize = 64;
const CODEC_BLOCKS: usize = 10_000;
const DECODE_TOKENS: usize = 32;

const BUDGET_SIZES: Duration = Duration::from_secs(1);
const BUDGET_PARETO: Duration = Duration::from_secs(10);
const BUDGET_CODECS: Duration = Duration::from_secs(60);
const BUDGET_MATVEC: Duration = Duration::from_secs(60);
const BUDGET_DECODE: Duration = Duration::from_secs(300);
const BUDGET_GGUF: Duration = Duration::from_secs(10);

const SIZES: [(QuantScheme, f64, f64); 13] = [
    (QuantScheme::Q4_0, 4437.80, 71.03),
    (QuantScheme::Q4_1, 4885.12, 68.11),
    (QuantScheme::Q5_0, 5332.43, 65.19),
    (QuantScheme::Q5_1, 5779.74, 62.27),
    (QuantScheme::Q8_0, 8137.64, 46.87),
    (QuantScheme::Q3_K_S, 3487.27, 77.23),
    (QuantScheme::Q3_K_M, 3825.27, 75.03),
    (QuantScheme::Q3_K_L, 4114.27, 73.14),
    (QuantScheme::Q4_K_S, 4467.80, 70.83),
    (QuantScheme::Q4_K_M, 4685.30, 69.41),
    (QuantScheme::Q5_K_S, 5332.43, 65.19),
    (QuantScheme::Q5_K_M, 5459.93, 64.35),
    (QuantScheme::Q6_K, 6282.97, 58.98),
];

const AVG: [(&str, f64); 14] = [
    ("F16", 69.47),
    ("Q3_K_S", 65.49),
    ("Q3_K_M", 68.07),
    ("Q3_K_L", 68.78),
    ("Q4_0", 67.98),
    ("Q4_1", 68.79),
    ("Q4_K_S", 69.17),
    ("Q4_K_M", 69.15),
    ("Q5_0", 69.92),
    ("Q5_1", 69.73),
    ("Q5_K_S", 69.02),
    ("Q5_K_M", 69.36),
    ("Q6_K", 69.23),
    ("Q8_0", 69.41),
];

const FRONTIER: [(&str, f64); 5] = [
    ("Q5_0", -0.65),
    ("Q4_K_S", 0.43),
    ("Q3_K_L", 0.99),
    ("Q3_K_M", 2.02),
    ("Q3_K_S", 5.73),
];

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sizes() -> Outcome {
    let inv = llama_3_1_8b();
    let mut worst = (0.0f64, QuantScheme::F16);
    for (s, mib, _) in SIZES {
        let got = predict_model_size(&inv, s).map_err(|e| e.to_string())?.mib();
        let rel = (got / mib - 1.0).abs();
        let tol = if s.name().contains("_K") { KQUANT_SIZE_RTOL } else { LEGACY_SIZE_RTOL };
        if rel > tol {
            return Err(format!("{s}: {got:.2} MiB vs {mib}"));
        }
        if rel > worst.0 {
            worst = (rel, s);
        }
    }
    Ok(format!("13 schemes, worst relative error {:.2e} ({})", worst.0, worst.1))
}

fn reductions() -> Outcome {
    let inv = llama_3_1_8b();
    let f16 = predict_model_size(&inv, QuantScheme::F16).unwrap().mib();
    for (s, _, pct) in SIZES {
        let got = size_reduction(predict_model_size(&inv, s).unwrap().mib(), f16).unwrap();
        if format!("{got:.2}") != format!("{pct:.2}") {
            return Err(format!("{s}: {got:.4} vs {pct}"));
        }
    }
    Ok("13 schemes equal at 2 decimals".into())
}

fn fixture() -> Vec<kquant_core::BenchmarkRow> {
    read_results_csv(PUBLISHED_RESULTS_CSV).unwrap().rows
}

fn averages() -> Outcome {
    let rows = fixture();
    if rows.len() != AVG.len() {
        return Err(format!("{} rows", rows.len()));
    }
    let mut worst = 0.0f64;
    for (r, (name, avg)) in rows.iter().zip(AVG) {
        let got = avg_score(r).map_err(|e| e.to_string())?;
        let d = (got - avg).abs();
        if r.scheme != name || d > AVG_TOL {
            return Err(format!("{}: {got:.4} vs {avg}", r.scheme));
        }
        worst = worst.max(d);
    }
    Ok(format!("14 rows, max |diff| {worst:.4}"))
}

fn brute_frontier(points: &[(f64, f64)]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            let p = points[i];
            !points.iter().any(|&q| q.0 >= p.0 && q.1 <= p.1 && (q.0 > p.0 || q.1 < p.1))
        })
        .collect()
}

fn pareto() -> Outcome {
    let points = pareto_points(&fixture(), "F16").map_err(|e| e.to_string())?;
    let on: BTreeSet<&str> = points.iter().filter(|p| p.on_frontier).map(|p| p.scheme.as_str()).collect();
    let want: BTreeSet<&str> = FRONTIER.iter().map(|f| f.0).collect();
    if on != want {
        return Err(format!("frontier {on:?}"));
    }
    let mut losses = Vec::new();
    for (name, loss) in FRONTIER {
        let p = points.iter().find(|p| p.scheme == name).unwrap();
        if (p.avg_loss - loss).abs() > AVG_LOSS_TOL {
            return Err(format!("{name} AvgLoss {:.4} vs {loss}", p.avg_loss));
        }
        losses.push(format!("{:.2}", p.avg_loss));
    }
    for s in ["Q5_1", "Q5_K_S", "Q5_K_M"] {
        let p = points.iter().find(|p| p.scheme == s).unwrap();
        if !p.dominated_by.iter().any(|d| d == "Q5_0") {
            return Err(format!("{s} not dominated by Q5_0"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..ORACLE_SETS {
        let n = rng.gen_range(0..=ORACLE_MAX_N);
        let grid: f64 = [0.0, 0.5, 1.0][case % 3];
        let pts: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                let (r, l): (f64, f64) = (rng.gen_range(0.0..100.0), rng.gen_range(-5.0..10.0));
                if grid > 0.0 {
                    ((r / 10.0 / grid).round() * grid, (l / grid).round() * grid)
                } else {
                    (r, l)
                }
            })
            .collect();
        if pareto_frontier(&pts) != brute_frontier(&pts) {
            return Err(format!("oracle mismatch on set {case}"));
        }
    }
    Ok(format!(
        "frontier Q5_0 Q4_K_S Q3_K_L Q3_K_M Q3_K_S, AvgLoss {}, {ORACLE_SETS} oracle sets agree",
        losses.join(" ")
    ))
}

fn half_to_f32(b: [u8; 2]) -> f32 {
    let h = u16::from_le_bytes(b) as u32;
    let (sign, exp, man) = (h >> 15, (h >> 10) & 0x1f, h & 0x3ff);
    let mag = match exp {
        0 => man as f32 * 2f32.powi(-24),
        31 => f32::INFINITY,
        e => (1.0 + man as f32 / 1024.0) * 2f32.powi(e as i32 - 15),
    };
    if sign == 1 {
        -mag
    } else {
        mag
    }
}

/// Q8_0 blocks are a scale followed by 32 signed bytes.
fn nearest_codes() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let mut b = [0u8; 34];
    for i in 0..CODEC_BLOCKS {
        let scale = 2f32.powi(rng.gen_range(-8..4));
        let v: Vec<f32> = (0..32).map(|_| rng.gen_range(-1.0f32..1.0) * scale).collect();
        quantize_row(Format::Q8_0, &v, &mut b).unwrap();
        let d = half_to_f32([b[0], b[1]]) as f64;
        for (j, &x) in v.iter().enumerate() {
            let q = b[2 + j] as i8 as f64;
            let err = (x as f64 - d * q).abs();
            let best = (-127..=127).map(|c| (x as f64 - d * c as f64).abs()).fold(f64::INFINITY, f64::min);
            if err > best + 1e-12 * scale as f64 {
                return Err(format!("block {i} element {j}: code {q} is not nearest"));
            }
        }
    }
    Ok(())
}

fn codecs() -> Outcome {
    nearest_codes()?;
    let quantized: Vec<Format> = Format::ALL.into_iter().filter(|f| f.layout().is_quantized()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(52);
    let mut ratios = Vec::new();
    for &f in &quantized {
        let v: Vec<f32> = (0..256 * 256).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let mut p = vec![0u8; v.len() / f.block_weights() * f.block_bytes()];
        quantize_row(f, &v, &mut p).unwrap();
        let mut back = vec![0f32; v.len()];
        dequantize_row(f, &p, &mut back).unwrap();
        let ratio = error_stats(&v, &back, f).unwrap().variance_ratio();
        if (ratio - 1.0).abs() > VARIANCE_RTOL {
            return Err(format!("{f}: error variance ratio {ratio:.3}"));
        }
        ratios.push(ratio);
        let mut again = vec![0u8; p.len()];
        quantize_row(f, &back, &mut again).unwrap();
        if again != p {
            return Err(format!("{f}: requantizing changed bytes"));
        }
    }
    let order = [
        QuantScheme::Q8_0,
        QuantScheme::Q6_K,
        QuantScheme::Q5_K_M,
        QuantScheme::Q4_K_M,
        QuantScheme::Q3_K_M,
    ];
    let roles = ["attn_q", "attn_k", "attn_v", "attn_output", "ffn_gate", "ffn_up", "ffn_down"];
    let mix = MixTable::default();
    let mut inversions = 0;
    for t in 0..20 {
        let sigma = rng.gen_range(0.005f32..0.1);
        let data = (0..64 * 1024)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0f32..1.0)).sum::<f32>() * sigma * 0.866)
            .collect();
        let name = format!("blk.{}.{}.weight", (t * 5) % 32, roles[t % roles.len()]);
        let tensor = TensorF32::new(name, vec![64, 1024], data).unwrap();
        let rmse: Vec<f64> = order
            .iter()
            .map(|&s| {
                let q = quantize_tensor_for_scheme(&tensor, s, &mix, 32).unwrap();
                error_stats(tensor.data(), dequantize_tensor(&q).unwrap().data(), q.format()).unwrap().rmse
            })
            .collect();
        inversions += rmse.windows(2).filter(|w| w[0] > w[1]).count();
    }
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    check(
        inversions <= MAX_RMSE_INVERSIONS,
        format!(
            "nearest codes on {CODEC_BLOCKS} blocks, variance ratio {lo:.3}..{hi:.3}, {inversions} rmse inversions, requantize idempotent"
        ),
    )
}

fn matvec() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let mix = MixTable::default();
    let mut checked = 0;
    for s in 0..MATVEC_SHAPES {
        let rows = rng.gen_range(1..=96);
        let cols = 256 * rng.gen_range(1..=12);
        let a = 0.02 * 3f32.sqrt();
        let w = TensorF32::new(
            format!("blk.{}.ffn_up.weight", s),
            vec![rows, cols],
            (0..rows * cols).map(|_| rng.gen_range(-a..a)).collect(),
        )
        .unwrap();
        let x: Vec<f32> = (0..cols).map(|_| rng.gen_range(-3f32.sqrt()..3f32.sqrt())).collect();
        let norm = x.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
        for scheme in QuantScheme::ALL {
            let q = quantize_tensor_for_scheme(&w, scheme, &mix, 32).unwrap();
            let deq = dequantize_tensor(&q).unwrap();
            let want: Vec<f64> = deq
                .data()
                .chunks_exact(cols)
                .map(|r| r.iter().zip(&x).map(|(&a, &b)| a as f64 * b as f64).sum())
                .collect();
            let got = matvec_with(&q, &x, KernelOptions { isa: Isa::detect(), allow_fallback: false })
                .map_err(|e| format!("{scheme}: {e}"))?;
            for (i, (&g, &r)) in got.iter().zip(&want).enumerate() {
                if (g as f64 - r).abs() > MATVEC_RTOL * r.abs() + MATVEC_ATOL_PER_NORM * norm {
                    return Err(format!("{scheme} {rows}x{cols} row {i}: {g} vs {r}"));
                }
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} scheme/shape pairs over {MATVEC_SHAPES} shapes"))
}

fn decode() -> Outcome {
    let run = |s: QuantScheme| {
        let cfg = BenchConfig {
            tg: DECODE_TOKENS,
            ..BenchConfig::new(s, Mode::Decode)
        };
        bench_throughput(&cfg).map_err(|e| format!("{s}: {e}"))
    };
    let f16 = run(QuantScheme::F16)?;
    let llc = last_level_cache_bytes();
    if let Some(llc) = llc {
        if f16.stack_bytes <= llc {
            return Err(format!("F16 stack {} B fits in the {llc} B cache", f16.stack_bytes));
        }
    }
    let base = f16.tokens_per_second.mean;
    let mut slowest = (f64::INFINITY, String::new());
    for s in QuantScheme::ALL.into_iter().filter(|s| *s != QuantScheme::F16 && s.nominal_bits() <= 5) {
        let r = run(s)?;
        let speedup = r.tokens_per_second.mean / base;
        if speedup <= 1.0 {
            return Err(format!("{s}: {:.2} tok/s vs F16 {base:.2}", r.tokens_per_second.mean));
        }
        if speedup < slowest.0 {
            slowest = (speedup, s.to_string());
        }
    }
    Ok(format!(
        "F16 {base:.2} tok/s on a {:.0} MiB stack (cache {}), smallest speedup {:.2}x ({})",
        f16.stack_bytes as f64 / (1 << 20) as f64,
        llc.map_or("unknown".into(), |b| format!("{:.0} MiB", b as f64 / (1 << 20) as f64)),
        slowest.0,
        slowest.1
    ))
}

fn gguf_round_trip() -> Outcome {
    let tiny = convert::tiny_llama(2, 256, 768, 128, 9);
    let mut checked = 0;
    for s in QuantScheme::ALL {
        let mut first = Vec::new();
        convert::convert(&mut MemorySource::new(&tiny), s, &MixTable::default(), &mut first).unwrap();
        let back = gguf::read_gguf(&first).map_err(|e| format!("{s}: {e}"))?;
        if gguf::to_bytes(&back).unwrap() != first {
            return Err(format!("{s}: rewrite differs"));
        }
        checked += 1;
    }
    let good = gguf::to_bytes(&tiny).unwrap();
    let mut corrupt: Vec<Vec<u8>> = Vec::new();
    let mut magic = good.clone();
    magic[0] ^= 0xff;
    corrupt.push(magic);
    let mut version = good.clone();
    version[4] = 99;
    corrupt.push(version);
    corrupt.push(good[..good.len() / 2].to_vec());
    let mut unknown = b"GGUF".to_vec();
    unknown.extend(3u32.to_le_bytes());
    unknown.extend(0u64.to_le_bytes());
    unknown.extend(1u64.to_le_bytes());
    unknown.extend(1u64.to_le_bytes());
    unknown.push(b'k');
    unknown.extend(77u32.to_le_bytes());
    corrupt.push(unknown);
    let kinds: Vec<String> = corrupt
        .iter()
        .map(|b| match gguf::GgufReader::new(Cursor::new(b)).and_then(|r| r.into_model()) {
            Ok(_) => "parsed".to_string(),
            Err(e) => format!("{:?}", std::mem::discriminant::<GgufError>(&e)),
        })
        .collect();
    let distinct: BTreeSet<&String> = kinds.iter().collect();
    check(
        !kinds.iter().any(|k| k == "parsed") && distinct.len() == kinds.len(),
        format!("{checked} schemes rewrite byte-identically, {} corruptions give {} distinct errors", kinds.len(), distinct.len()),
    )
}

fn ppl() -> Outcome {
    let uniform = perplexity(&vec![-(256f64.ln()); 4096]).map_err(|e| e.to_string())?;
    if uniform != 256.0 {
        return Err(format!("uniform-256 gives {uniform}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(54);
    for _ in 0..200 {
        let n = rng.gen_range(1..500);
        let lp: Vec<f64> = (0..n).map(|_| rng.gen_range(-15.0..-1e-6)).collect();
        let mut shuffled = lp.clone();
        shuffled.shuffle(&mut rng);
        if perplexity(&lp).unwrap().to_bits() != perplexity(&shuffled).unwrap().to_bits() {
            return Err("permutation changed perplexity".into());
        }
    }
    Ok("uniform-256 gives exactly 256, 200 permutations bitwise equal".into())
}

fn fixtures_only() -> Outcome {
    let ing = read_results_csv(PUBLISHED_RESULTS_CSV).map_err(|e| e.to_string())?;
    if !ing.rejected.is_empty() {
        return Err(format!("{} fixture rows rejected", ing.rejected.len()));
    }
    // every stored number is a cell of the shipped file
    let cells: BTreeSet<String> = PUBLISHED_RESULTS_CSV
        .lines()
        .skip(1)
        .flat_map(|l| l.split(',').map(String::from).collect::<Vec<_>>())
        .collect();
    for r in &ing.rows {
        let mut vals = vec![r.gsm8k, r.hellaswag, r.ifeval, r.mmlu, r.truthfulqa_mc2, r.ppl, r.size_mib, r.quant_seconds];
        for t in [r.pp512, r.tg128].into_iter().flatten() {
            vals.extend([Some(t.mean), Some(t.std)]);
        }
        for v in vals.into_iter().flatten() {
            if !cells.contains(&format!("{v:.2}")) {
                return Err(format!("{}: {v} is not a fixture cell", r.scheme));
            }
        }
    }
    Ok(format!("{} rows, all scores and timings from the shipped fixture", ing.rows.len()))
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 10] = [
        ("1 predicted sizes", sizes, Some(BUDGET_SIZES)),
        ("2 size reduction", reductions, None),
        ("3 recomputed averages", averages, None),
        ("4 pareto frontier", pareto, Some(BUDGET_PARETO)),
        ("5 codec properties", codecs, Some(BUDGET_CODECS)),
        ("6 kernel oracle", matvec, Some(BUDGET_MATVEC)),
        ("7 decode throughput", decode, Some(BUDGET_DECODE)),
        ("8 gguf round trip", gguf_round_trip, Some(BUDGET_GGUF)),
        ("9 perplexity", ppl, None),
        ("10 fixture-only results", fixtures_only, None),
    ];
    let mut failed = Vec::new();
    for (name, f, budget) in criteria {
        let start = Instant::now();
        let mut outcome = f();
        let took = start.elapsed();
        if let (Ok(detail), Some(b)) = (&outcome, budget) {
            if took > b {
                outcome = Err(format!("{detail}; took {took:.2?}, budget {b:?}"));
            }
        }
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{took:.2?}]"),
            Err(detail) => {
                println!("FAIL {name}: {detail} [{took:.2?}]");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
