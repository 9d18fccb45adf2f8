//! Throughput harness over a synthetic stack of Llama-shaped layers.
//!
//! Each layer holds attention projections (q, k, v, output) and a gated
//! feed-forward block (gate, up, down), with formats picked by the scheme's
//! mix. Decode mode pushes tokens through the stack one at a time; prefill
//! mode pushes a whole batch through each layer at once.

use std::fmt;
use std::time::Instant;

use kquant_core::kernels::Activations;
use kquant_core::{quantize_tensor, Format, Isa, MixTable, QuantScheme, QuantizedTensor, TensorF32, TensorRole};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::parallel;

pub const MIN_REPEATS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Prefill,
    Decode,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Prefill => "prefill",
            Mode::Decode => "decode",
        })
    }
}

/// Stack geometry. `width` and `ffn` are row lengths and must be multiples
/// of 256 so every format can store every matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub depth: usize,
    pub width: usize,
    pub ffn: usize,
    pub kv: usize,
}

impl Dims {
    /// Llama proportions: feed-forward 3.5× width (rounded up to a multiple
    /// of 256) and KV projections ¼ of width.
    pub fn llama(depth: usize, width: usize) -> Self {
        Dims {
            depth,
            width,
            ffn: (width * 7 / 2).div_ceil(256) * 256,
            kv: (width / 4).max(1),
        }
    }

    pub fn weights_per_layer(&self) -> u64 {
        let (w, f, k) = (self.width as u64, self.ffn as u64, self.kv as u64);
        2 * w * w + 2 * k * w + 3 * f * w
    }

    fn validate(&self) -> Result<(), BenchError> {
        let ok = self.depth > 0
            && self.kv > 0
            && [self.width, self.ffn].iter().all(|&d| d > 0 && d % 256 == 0);
        if ok {
            Ok(())
        } else {
            Err(BenchError::Dims(*self))
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub scheme: QuantScheme,
    pub mode: Mode,
    pub dims: Dims,
    /// Prefill batch rows.
    pub pp: usize,
    /// Decode tokens per repeat.
    pub tg: usize,
    pub threads: usize,
    pub repeats: usize,
    pub seed: u64,
    /// Bytes the stack may occupy; defaults to the memory the OS reports as
    /// available.
    pub memory_limit: Option<u64>,
    pub mix: MixTable,
    pub isa: Isa,
}

impl BenchConfig {
    pub fn new(scheme: QuantScheme, mode: Mode) -> Self {
        BenchConfig {
            scheme,
            mode,
            dims: Dims::llama(2, 2048),
            pp: 512,
            tg: 128,
            threads: 1,
            repeats: MIN_REPEATS,
            seed: 0,
            memory_limit: None,
            mix: MixTable::default(),
            isa: Isa::detect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
}

impl Stats {
    /// Mean and sample standard deviation.
    pub fn of(xs: &[f64]) -> Stats {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Stats { mean, std: var.sqrt() }
    }

    pub fn cv(&self) -> f64 {
        self.std / self.mean
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub scheme_id: String,
    pub mode: Mode,
    pub tokens_per_second: Stats,
    pub samples: Vec<f64>,
    pub threads: usize,
    pub dims: Dims,
    /// Tokens per repeat.
    pub tokens: usize,
    pub stack_bytes: u64,
}

/// What was done before a run had to stop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartialReport {
    pub scheme_id: String,
    pub mode: Mode,
    pub dims: Dims,
    pub layers_built: usize,
    pub completed_samples: Vec<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("at least {MIN_REPEATS} repeats are required, got {0}")]
    TooFewRepeats(usize),
    #[error("stack dimensions {0:?}: width and ffn must be positive multiples of 256")]
    Dims(Dims),
    #[error("insufficient memory: layer needs {needed} bytes, {available} available")]
    InsufficientMemory {
        needed: u64,
        available: u64,
        partial: PartialReport,
    },
    #[error(transparent)]
    Core(#[from] kquant_core::Error),
}

/// Bytes the OS reports as available, if known.
pub fn available_memory() -> Option<u64> {
    let info = std::fs::read_to_string("/proc/meminfo").ok()?;
    let line = info.lines().find(|l| l.starts_with("MemAvailable:"))?;
    let kib: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kib * 1024)
}

/// Size of the largest CPU cache, if the OS exposes it.
pub fn last_level_cache_bytes() -> Option<u64> {
    let dir = std::fs::read_dir("/sys/devices/system/cpu/cpu0/cache").ok()?;
    dir.filter_map(|e| {
        let size = std::fs::read_to_string(e.ok()?.path().join("size")).ok()?;
        let size = size.trim();
        let (num, mult) = match size.as_bytes().last()? {
            b'K' => (&size[..size.len() - 1], 1 << 10),
            b'M' => (&size[..size.len() - 1], 1 << 20),
            b'G' => (&size[..size.len() - 1], 1 << 30),
            _ => (size, 1),
        };
        num.parse::<u64>().ok().map(|n| n * mult)
    })
    .max()
}

struct Layer {
    q: QuantizedTensor,
    k: QuantizedTensor,
    v: QuantizedTensor,
    o: QuantizedTensor,
    gate: QuantizedTensor,
    up: QuantizedTensor,
    down: QuantizedTensor,
}

impl Layer {
    fn bytes(&self) -> u64 {
        [&self.q, &self.k, &self.v, &self.o, &self.gate, &self.up, &self.down]
            .iter()
            .map(|t| t.payload().len() as u64)
            .sum()
    }
}

/// A built layer stack.
pub struct Stack {
    layers: Vec<Layer>,
    dims: Dims,
}

fn layer_bytes(dims: &Dims, scheme: QuantScheme, mix: &MixTable, layer: u32) -> u64 {
    let (w, f, k) = (dims.width as u64, dims.ffn as u64, dims.kv as u64);
    let n = dims.depth as u32;
    let size = |role, elems: u64| {
        let l = mix.resolve(scheme, role, Some(layer), n).layout();
        elems / l.block_weights as u64 * l.block_bytes as u64
    };
    size(TensorRole::AttnQ, w * w)
        + size(TensorRole::AttnK, k * w)
        + size(TensorRole::AttnV, k * w)
        + size(TensorRole::AttnOutput, w * w)
        + size(TensorRole::FfnGate, f * w)
        + size(TensorRole::FfnUp, f * w)
        + size(TensorRole::FfnDown, w * f)
}

impl Stack {
    /// Quantizes random weights layer by layer, stopping with a partial report
    /// when the next layer would not fit in `memory_limit`.
    pub fn build(cfg: &BenchConfig) -> Result<Stack, BenchError> {
        cfg.dims.validate()?;
        let d = cfg.dims;
        let n = d.depth as u32;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut layers = Vec::with_capacity(d.depth);
        let mut used = 0u64;
        for i in 0..n {
            // the largest f32 staging matrix lives alongside the new layer
            let needed = layer_bytes(&d, cfg.scheme, &cfg.mix, i) + 4 * (d.ffn * d.width) as u64;
            let available = cfg
                .memory_limit
                .map(|m| m.saturating_sub(used))
                .or_else(available_memory)
                .unwrap_or(u64::MAX);
            if needed > available {
                return Err(BenchError::InsufficientMemory {
                    needed,
                    available,
                    partial: PartialReport {
                        scheme_id: cfg.scheme.to_string(),
                        mode: cfg.mode,
                        dims: d,
                        layers_built: layers.len(),
                        completed_samples: Vec::new(),
                    },
                });
            }
            let mut make = |role: TensorRole, rows: usize, cols: usize| -> Result<QuantizedTensor, BenchError> {
                let bound = 1.0 / (cols as f32).sqrt();
                let data: Vec<f32> = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
                let name = format!("blk.{i}.{}.weight", role.key());
                let t = TensorF32::new(name, vec![rows, cols], data)?;
                Ok(quantize_tensor(&t, cfg.mix.resolve(cfg.scheme, role, Some(i), n))?)
            };
            let layer = Layer {
                q: make(TensorRole::AttnQ, d.width, d.width)?,
                k: make(TensorRole::AttnK, d.kv, d.width)?,
                v: make(TensorRole::AttnV, d.kv, d.width)?,
                o: make(TensorRole::AttnOutput, d.width, d.width)?,
                gate: make(TensorRole::FfnGate, d.ffn, d.width)?,
                up: make(TensorRole::FfnUp, d.ffn, d.width)?,
                down: make(TensorRole::FfnDown, d.width, d.ffn)?,
            };
            used += layer.bytes();
            layers.push(layer);
        }
        Ok(Stack { layers, dims: d })
    }

    pub fn bytes(&self) -> u64 {
        self.layers.iter().map(Layer::bytes).sum()
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Formats used by the first layer, in q, k, v, o, gate, up, down order.
    pub fn formats(&self) -> Vec<Format> {
        self.layers
            .first()
            .map(|l| [&l.q, &l.k, &l.v, &l.o, &l.gate, &l.up, &l.down].map(|t| t.format()).to_vec())
            .unwrap_or_default()
    }

    /// Runs `xs` (`n` rows of `width`) through every layer in place.
    pub fn forward(&self, isa: Isa, xs: &mut [f32], n: usize, threads: usize) -> Result<(), BenchError> {
        let d = self.dims;
        for l in &self.layers {
            let normed = rms_norm_rows(xs, d.width);
            let q = apply(isa, &l.q, &normed, n, threads)?;
            let k = apply(isa, &l.k, &normed, n, threads)?;
            let v = apply(isa, &l.v, &normed, n, threads)?;
            // stand-in for attention: mix q with the kv projections
            let mut attn = q;
            for (r, a) in attn.chunks_exact_mut(d.width).enumerate() {
                let kv = &k[r * d.kv..(r + 1) * d.kv];
                let vv = &v[r * d.kv..(r + 1) * d.kv];
                for (j, x) in a.iter_mut().enumerate() {
                    *x += kv[j % d.kv] * vv[j % d.kv];
                }
            }
            let o = apply(isa, &l.o, &attn, n, threads)?;
            for (x, o) in xs.iter_mut().zip(&o) {
                *x += o;
            }
            let normed = rms_norm_rows(xs, d.width);
            let g = apply(isa, &l.gate, &normed, n, threads)?;
            let u = apply(isa, &l.up, &normed, n, threads)?;
            let h: Vec<f32> = g.iter().zip(&u).map(|(&g, &u)| g / (1.0 + (-g).exp()) * u).collect();
            let down = apply(isa, &l.down, &h, n, threads)?;
            for (x, d) in xs.iter_mut().zip(&down) {
                *x += d;
            }
        }
        Ok(())
    }
}

fn rms_norm_rows(xs: &[f32], width: usize) -> Vec<f32> {
    let mut out = xs.to_vec();
    for row in out.chunks_exact_mut(width) {
        let ms = row.iter().map(|v| v * v).sum::<f32>() / width as f32;
        let s = 1.0 / (ms + 1e-6).sqrt();
        row.iter_mut().for_each(|v| *v *= s);
    }
    out
}

fn apply(isa: Isa, w: &QuantizedTensor, xs: &[f32], n: usize, threads: usize) -> Result<Vec<f32>, BenchError> {
    let k = w.row_len();
    let mut y = vec![0f32; n * w.rows()];
    if n == 1 {
        let a = Activations::prepare(w.format(), xs)?;
        parallel::matvec_prepared(isa, w, &a, &mut y, threads)?;
    } else {
        let acts = xs
            .chunks_exact(k)
            .map(|x| Activations::prepare(w.format(), x))
            .collect::<Result<Vec<_>, _>>()?;
        parallel::matmul_prepared(isa, w, &acts, &mut y, threads)?;
    }
    Ok(y)
}

fn token_rows(rng: &mut ChaCha8Rng, n: usize, width: usize) -> Vec<f32> {
    (0..n * width).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
}

/// Times one repeat and returns tokens per second.
fn run_once(stack: &Stack, cfg: &BenchConfig, rng: &mut ChaCha8Rng, tokens: usize) -> Result<f64, BenchError> {
    let w = stack.dims.width;
    let mut sink = 0f32;
    let start = Instant::now();
    match cfg.mode {
        Mode::Decode => {
            for _ in 0..tokens {
                let mut x = token_rows(rng, 1, w);
                stack.forward(cfg.isa, &mut x, 1, cfg.threads)?;
                sink += x[0];
            }
        }
        Mode::Prefill => {
            let mut xs = token_rows(rng, tokens, w);
            stack.forward(cfg.isa, &mut xs, tokens, cfg.threads)?;
            sink += xs[0];
        }
    }
    let secs = start.elapsed().as_secs_f64();
    std::hint::black_box(sink);
    Ok(tokens as f64 / secs)
}

/// Measures throughput on a prebuilt stack: one short warm-up, then
/// `cfg.repeats` timed repeats.
pub fn bench_stack(stack: &Stack, cfg: &BenchConfig) -> Result<BenchResult, BenchError> {
    if cfg.repeats < MIN_REPEATS {
        return Err(BenchError::TooFewRepeats(cfg.repeats));
    }
    let tokens = match cfg.mode {
        Mode::Decode => cfg.tg,
        Mode::Prefill => cfg.pp,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    run_once(stack, cfg, &mut rng, tokens.clamp(1, 8))?;
    let samples = (0..cfg.repeats)
        .map(|_| run_once(stack, cfg, &mut rng, tokens))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BenchResult {
        scheme_id: cfg.scheme.to_string(),
        mode: cfg.mode,
        tokens_per_second: Stats::of(&samples),
        samples,
        threads: cfg.threads,
        dims: stack.dims,
        tokens,
        stack_bytes: stack.bytes(),
    })
}

/// Builds the stack for `cfg` and measures it.
pub fn bench_throughput(cfg: &BenchConfig) -> Result<BenchResult, BenchError> {
    if cfg.repeats < MIN_REPEATS {
        return Err(BenchError::TooFewRepeats(cfg.repeats));
    }
    let stack = Stack::build(cfg)?;
    bench_stack(&stack, cfg)
}
