//! The `kquant` command line.
//!
//! Machine-readable output goes to stdout, diagnostics to stderr. Exit codes:
//!
//! | Code | Meaning |
//! |------|---------|
//! | 0 | success |
//! | 2 | usage error (bad flag, unknown scheme, invalid option value) |
//! | 3 | input error (unreadable or malformed file, missing data) |
//! | 4 | internal error |
//! | 5 | bench stopped for lack of memory; a partial report was printed |

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use kquant_core::accounting::{predict_model_size_with, ContainerOverhead, MIB};
use kquant_core::metrics::{emit_report, fmt_2dp, pareto_points, recommend, Constraints, Objective};
use kquant_core::{Format, MixTable, QuantScheme};
use serde_json::json;

use crate::bench::{self, BenchConfig, BenchError, Dims, Mode};
use crate::config::{RunConfig, THREADS_ENV};
use crate::convert::{self, ConvertError, ConvertReport, GgufSource, SyntheticSource, TensorSource};
use crate::gguf::{self, GgufError};
use crate::inventory;
use crate::mixfile;
use crate::results::{self, Ingested};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;
pub const EXIT_MEMORY: i32 = 5;

/// Name accepted by `quantize --synthetic` for the built-in inventory.
pub const BUILTIN_INVENTORY: &str = "llama-3.1-8b";

#[derive(Debug, Parser)]
#[command(name = "kquant", version, about = "Block quantization of GGUF models")]
struct Cli {
    /// Emit JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert a float model to a quantization scheme.
    Quantize(QuantizeArgs),
    /// Decode every tensor of a model to F32.
    Dequantize { input: PathBuf, output: PathBuf },
    /// Show metadata and per-tensor storage of a GGUF file.
    Inspect { file: PathBuf },
    /// Measure throughput on a synthetic layer stack.
    Bench(BenchArgs),
    /// Place result rows on the size/quality Pareto frontier.
    Analyze(AnalyzeArgs),
    /// Render the results table and the trade-off figure.
    Report(ReportArgs),
    /// Print block layouts, the scheme registry and the default mix.
    LayoutDoc,
}

#[derive(Debug, Args)]
struct QuantizeArgs {
    input: PathBuf,
    output: PathBuf,
    #[arg(value_parser = parse_scheme)]
    scheme: QuantScheme,
    /// Mix override file.
    #[arg(long, value_name = "PATH")]
    mix: Option<PathBuf>,
    /// Treat INPUT as a tensor inventory (or `llama-3.1-8b`) and fill it
    /// with seeded random weights.
    #[arg(long)]
    synthetic: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Decode,
    Prefill,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Schemes to measure, repeatable or comma-separated.
    #[arg(long, required = true, value_delimiter = ',', value_parser = parse_scheme)]
    scheme: Vec<QuantScheme>,
    #[arg(long, value_enum, default_value = "decode")]
    mode: ModeArg,
    /// Prefill batch size.
    #[arg(long)]
    pp: Option<usize>,
    /// Decode tokens per repeat.
    #[arg(long)]
    tg: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "PATH")]
    mix: Option<PathBuf>,
    /// Cap on the stack's memory, MiB.
    #[arg(long, value_name = "MIB")]
    memory_limit: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    MinSize,
    MaxAvg,
    MaxTg,
    MinPpl,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::MinSize => Objective::MinSize,
            ObjectiveArg::MaxAvg => Objective::MaxAvg,
            ObjectiveArg::MaxTg => Objective::MaxTg,
            ObjectiveArg::MinPpl => Objective::MinPpl,
        }
    }
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Results file (.csv or .json).
    #[arg(long, value_name = "PATH")]
    results: PathBuf,
    #[arg(long)]
    baseline: Option<String>,
    #[arg(long, value_name = "MIB")]
    max_size: Option<f64>,
    /// Percent.
    #[arg(long)]
    min_reduction: Option<f64>,
    #[arg(long)]
    min_avg: Option<f64>,
    #[arg(long)]
    max_ppl: Option<f64>,
    #[arg(long, value_enum)]
    objective: Option<ObjectiveArg>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long, value_name = "PATH")]
    results: PathBuf,
    #[arg(long)]
    baseline: Option<String>,
    /// Directory for report.txt and pareto.svg; stdout when absent.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn parse_scheme(s: &str) -> Result<QuantScheme, String> {
    s.parse().map_err(|e: kquant_core::Error| e.to_string())
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Input(String),
    Internal(String),
    /// Partial report text already printed.
    Memory(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Input(_) => EXIT_INPUT,
            Failure::Internal(_) => EXIT_INTERNAL,
            Failure::Memory(_) => EXIT_MEMORY,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Input(m) | Failure::Internal(m) | Failure::Memory(m) => m,
        }
    }
}

fn input(e: impl std::fmt::Display) -> Failure {
    Failure::Input(e.to_string())
}

fn io_out(e: std::io::Error) -> Failure {
    Failure::Internal(format!("writing output: {e}"))
}

impl From<ConvertError> for Failure {
    fn from(e: ConvertError) -> Self {
        match e {
            ConvertError::Codec { .. } => Failure::Internal(e.to_string()),
            ConvertError::Gguf(_) | ConvertError::NotFloatInput { .. } => Failure::Input(e.to_string()),
        }
    }
}

struct Ctx<'a> {
    json: bool,
    config: RunConfig,
    env: &'a dyn Fn(&str) -> Option<String>,
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

/// Runs the tool on `args` (including the program name) and returns the
/// process exit code. `env` looks up environment variables.
pub fn run<I, T>(args: I, env: &dyn Fn(&str) -> Option<String>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    let config = match &cli.config {
        Some(p) => match RunConfig::load(p) {
            Ok(c) => c,
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                return EXIT_INPUT;
            }
        },
        None => RunConfig::default(),
    };
    let mut ctx = Ctx {
        json: cli.json || config.json.unwrap_or(false),
        config,
        env,
        out,
        err,
    };
    let result = match cli.command {
        Command::Quantize(a) => quantize(&mut ctx, a),
        Command::Dequantize { input, output } => dequantize(&mut ctx, &input, &output),
        Command::Inspect { file } => inspect(&mut ctx, &file),
        Command::Bench(a) => bench_cmd(&mut ctx, a),
        Command::Analyze(a) => analyze(&mut ctx, a),
        Command::Report(a) => report(&mut ctx, a),
        Command::LayoutDoc => layout_doc(&mut ctx),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(ctx.err, "error: {}", f.message());
            f.code()
        }
    }
}

fn mix_table(flag: Option<&Path>, config: &RunConfig) -> Result<MixTable, Failure> {
    match flag.or(config.mix.as_deref()) {
        Some(p) => mixfile::load_mix_table(p).map_err(input),
        None => Ok(MixTable::default()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Input(format!("creating {}: {e}", path.display())))
}

fn print_convert(ctx: &mut Ctx, output: &Path, r: &ConvertReport) -> Result<(), Failure> {
    if ctx.json {
        let v = json!({
            "output": output.display().to_string(),
            "target": r.target,
            "size_bytes": r.output_bytes,
            "size_mib": r.output_bytes as f64 / MIB,
            "input_bytes": r.input_bytes,
            "reduction_percent": r.reduction(),
            "seconds": r.seconds,
            "tensors": r.tensors,
        });
        writeln!(ctx.out, "{v}").map_err(io_out)
    } else {
        writeln!(
            ctx.out,
            "{}: {} {} MiB, size reduction {}% against input, {} s",
            output.display(),
            r.target,
            fmt_2dp(r.output_bytes as f64 / MIB),
            fmt_2dp(r.reduction()),
            fmt_2dp(r.seconds),
        )
        .map_err(io_out)
    }
}

fn quantize(ctx: &mut Ctx, a: QuantizeArgs) -> Result<(), Failure> {
    let mix = mix_table(a.mix.as_deref(), &ctx.config)?;
    let mut source: Box<dyn TensorSource> = if a.synthetic {
        let inv = if a.input.as_os_str() == BUILTIN_INVENTORY {
            inventory::llama_3_1_8b()
        } else {
            let text = std::fs::read_to_string(&a.input)
                .map_err(|e| Failure::Input(format!("reading {}: {e}", a.input.display())))?;
            inventory::parse_inventory(&text).map_err(|e| Failure::Input(format!("{}: {e}", a.input.display())))?
        };
        let name = a.input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Box::new(SyntheticSource::new(&inv, &name, a.seed))
    } else {
        Box::new(GgufSource::new(gguf::open(&a.input).map_err(|e| open_error(&a.input, e))?))
    };
    let out = create(&a.output)?;
    let report = convert::convert(source.as_mut(), a.scheme, &mix, out)?;
    print_convert(ctx, &a.output, &report)
}

fn open_error(path: &Path, e: GgufError) -> Failure {
    Failure::Input(format!("{}: {e}", path.display()))
}

fn dequantize(ctx: &mut Ctx, input: &Path, output: &Path) -> Result<(), Failure> {
    let mut source = GgufSource::new(gguf::open(input).map_err(|e| open_error(input, e))?);
    let out = create(output)?;
    let report = convert::dequantize(&mut source, out)?;
    print_convert(ctx, output, &report)
}

fn inspect(ctx: &mut Ctx, path: &Path) -> Result<(), Failure> {
    let reader = gguf::open(path).map_err(|e| open_error(path, e))?;
    let file_bytes = std::fs::metadata(path).map_err(input)?.len();
    let h = reader.header();
    let scheme = h
        .metadata
        .get(convert::FILE_TYPE_KEY)
        .and_then(|v| v.as_u64())
        .and_then(|v| QuantScheme::from_file_type(v as u32));
    let payload: u64 = h.tensors.iter().map(|t| t.payload_bytes()).sum();
    let elements: u64 = h.tensors.iter().map(|t| t.elements()).sum();
    let bpw = if elements == 0 { 0.0 } else { 8.0 * payload as f64 / elements as f64 };
    if ctx.json {
        let meta: serde_json::Map<String, serde_json::Value> =
            h.metadata.iter().map(|(k, v)| (k.to_string(), json!(v.to_string()))).collect();
        let tensors: Vec<_> = h
            .tensors
            .iter()
            .map(|t| {
                json!({
                    "name": t.name,
                    "shape": t.shape,
                    "format": t.format,
                    "bpw": t.format.layout().bits_per_weight(),
                    "bytes": t.payload_bytes(),
                    "offset": t.offset,
                })
            })
            .collect();
        let v = json!({
            "version": h.version,
            "alignment": h.alignment,
            "scheme": scheme.map(|s| s.name()),
            "metadata": meta,
            "tensors": tensors,
            "payload_bytes": payload,
            "file_bytes": file_bytes,
            "size_mib": file_bytes as f64 / MIB,
            "bpw": bpw,
        });
        return writeln!(ctx.out, "{v}").map_err(io_out);
    }
    let o = &mut ctx.out;
    let mut w = || -> std::io::Result<()> {
        writeln!(o, "GGUF v{}, alignment {}", h.version, h.alignment)?;
        writeln!(o, "scheme: {}", scheme.map_or("unknown", |s| s.name()))?;
        writeln!(o, "\nmetadata ({} keys):", h.metadata.len())?;
        for (k, v) in h.metadata.iter() {
            writeln!(o, "  {k} = {v}")?;
        }
        writeln!(o, "\ntensors ({}):", h.tensors.len())?;
        let nw = h.tensors.iter().map(|t| t.name.len()).max().unwrap_or(4).max(4);
        writeln!(o, "  {:nw$}  {:>16}  {:6}  {:>7}  {:>12}", "name", "shape", "format", "bpw", "bytes")?;
        for t in &h.tensors {
            let shape = t.shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x");
            writeln!(
                o,
                "  {:nw$}  {:>16}  {:6}  {:>7.4}  {:>12}",
                t.name,
                shape,
                t.format.name(),
                t.format.layout().bits_per_weight(),
                t.payload_bytes()
            )?;
        }
        writeln!(
            o,
            "\ntotal: {} bytes ({} MiB), payload {} bytes, {:.4} bpw",
            file_bytes,
            fmt_2dp(file_bytes as f64 / MIB),
            payload,
            bpw
        )
    };
    w().map_err(io_out)
}

fn bench_cmd(ctx: &mut Ctx, a: BenchArgs) -> Result<(), Failure> {
    let env_threads = (ctx.env)(THREADS_ENV);
    let threads = ctx
        .config
        .threads(a.threads, env_threads.as_deref())
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let mix = mix_table(a.mix.as_deref(), &ctx.config)?;
    let b = &ctx.config.bench;
    let defaults = BenchConfig::new(QuantScheme::F16, Mode::Decode);
    let depth = a.depth.or(b.depth).unwrap_or(defaults.dims.depth);
    let width = a.width.or(b.width).unwrap_or(defaults.dims.width);
    let repeats = a.repeats.or(ctx.config.repeats).unwrap_or(defaults.repeats);
    if repeats < bench::MIN_REPEATS {
        return Err(Failure::Usage(BenchError::TooFewRepeats(repeats).to_string()));
    }
    let mode = match a.mode {
        ModeArg::Decode => Mode::Decode,
        ModeArg::Prefill => Mode::Prefill,
    };
    for scheme in a.scheme {
        let cfg = BenchConfig {
            scheme,
            mode,
            dims: Dims::llama(depth, width),
            pp: a.pp.or(b.pp).unwrap_or(defaults.pp),
            tg: a.tg.or(b.tg).unwrap_or(defaults.tg),
            threads,
            repeats,
            seed: a.seed.or(b.seed).unwrap_or(defaults.seed),
            memory_limit: a.memory_limit.map(|m| m * (1 << 20)),
            mix: mix.clone(),
            isa: defaults.isa,
        };
        match bench::bench_throughput(&cfg) {
            Ok(r) => {
                if ctx.json {
                    writeln!(ctx.out, "{}", serde_json::to_string(&r).expect("bench results serialize")).map_err(io_out)?;
                } else {
                    writeln!(
                        ctx.out,
                        "{:7} {} {} ± {} tok/s  ({} repeats of {} tokens, {} threads, stack {} MiB)",
                        r.scheme_id,
                        r.mode,
                        fmt_2dp(r.tokens_per_second.mean),
                        fmt_2dp(r.tokens_per_second.std),
                        r.samples.len(),
                        r.tokens,
                        r.threads,
                        fmt_2dp(r.stack_bytes as f64 / MIB),
                    )
                    .map_err(io_out)?;
                }
                if r.tokens_per_second.cv() >= 0.2 {
                    let _ = writeln!(
                        ctx.err,
                        "warning: {} std/mean is {:.3}; timings are noisy",
                        r.scheme_id,
                        r.tokens_per_second.cv()
                    );
                }
            }
            Err(BenchError::InsufficientMemory {
                needed,
                available,
                partial,
            }) => {
                if ctx.json {
                    let v = json!({ "aborted": "insufficient memory", "needed_bytes": needed,
                                    "available_bytes": available, "partial": partial });
                    writeln!(ctx.out, "{v}").map_err(io_out)?;
                } else {
                    writeln!(
                        ctx.out,
                        "{:7} {} aborted: built {} of {} layers",
                        partial.scheme_id, partial.mode, partial.layers_built, partial.dims.depth
                    )
                    .map_err(io_out)?;
                }
                return Err(Failure::Memory(format!(
                    "{scheme}: next layer needs {needed} bytes but only {available} are available"
                )));
            }
            Err(e @ (BenchError::Dims(_) | BenchError::TooFewRepeats(_))) => return Err(Failure::Usage(e.to_string())),
            Err(e) => return Err(Failure::Internal(e.to_string())),
        }
    }
    Ok(())
}

fn load_rows(ctx: &mut Ctx, path: &Path) -> Result<Ingested, Failure> {
    let ingested = results::load_results(path).map_err(input)?;
    for r in &ingested.rejected {
        let _ = writeln!(ctx.err, "warning: {}: rejected {r}", path.display());
    }
    if ingested.rows.is_empty() {
        return Err(Failure::Input(format!("{}: no usable rows", path.display())));
    }
    Ok(ingested)
}

fn baseline<'a>(flag: &'a Option<String>, config: &'a RunConfig) -> &'a str {
    flag.as_deref().or(config.baseline.as_deref()).unwrap_or("F16")
}

fn analyze(ctx: &mut Ctx, a: AnalyzeArgs) -> Result<(), Failure> {
    let ingested = load_rows(ctx, &a.results)?;
    let base = baseline(&a.baseline, &ctx.config).to_string();
    let mut points = pareto_points(&ingested.rows, &base).map_err(input)?;
    points.sort_by(|p, q| p.reduction.total_cmp(&q.reduction));
    let constraints = Constraints {
        max_size_mib: a.max_size,
        min_reduction: a.min_reduction,
        min_avg: a.min_avg,
        max_ppl: a.max_ppl,
        objective: a.objective.map(Into::into),
    };
    let rec = if constraints == Constraints::default() {
        None
    } else {
        Some(recommend(&ingested.rows, &base, &constraints).map_err(input)?)
    };
    let frontier: Vec<&str> = points.iter().filter(|p| p.on_frontier).map(|p| p.scheme.as_str()).collect();
    if ctx.json {
        let v = json!({
            "baseline": base,
            "points": points,
            "frontier": frontier,
            "recommendation": rec,
            "rejected": ingested.rejected.iter().map(|r| r.to_string()).collect::<Vec<_>>(),
        });
        return writeln!(ctx.out, "{v}").map_err(io_out);
    }
    let o = &mut ctx.out;
    let mut w = || -> std::io::Result<()> {
        writeln!(o, "{:8} {:>11} {:>10}  {:8}  dominated by", "scheme", "reduction %", "avg loss %", "frontier")?;
        for p in &points {
            writeln!(
                o,
                "{:8} {:>11} {:>10}  {:8}  {}",
                p.scheme,
                fmt_2dp(p.reduction),
                fmt_2dp(p.avg_loss),
                if p.on_frontier { "yes" } else { "no" },
                p.dominated_by.join(", ")
            )?;
        }
        writeln!(o, "\nfrontier (vs {base}): {}", frontier.join(", "))?;
        if let Some(rec) = &rec {
            writeln!(o, "\nrecommendation:")?;
            if rec.ranked.is_empty() {
                writeln!(o, "  no scheme satisfies every constraint")?;
            }
            for (i, r) in rec.ranked.iter().enumerate() {
                let f = |v: Option<f64>| v.map_or("-".to_string(), fmt_2dp);
                writeln!(
                    o,
                    "  {}. {:8} size {} MiB, reduction {}%, avg {}, ppl {}",
                    i + 1,
                    r.scheme,
                    f(r.size_mib),
                    f(r.reduction),
                    f(r.avg),
                    f(r.ppl)
                )?;
            }
            for b in &rec.binding {
                writeln!(
                    o,
                    "  binding: {} {} rejects {} rows (best available {})",
                    b.constraint,
                    fmt_2dp(b.limit),
                    b.rejected,
                    b.best_available.map_or("-".to_string(), fmt_2dp)
                )?;
            }
        }
        Ok(())
    };
    w().map_err(io_out)
}

fn report(ctx: &mut Ctx, a: ReportArgs) -> Result<(), Failure> {
    let ingested = load_rows(ctx, &a.results)?;
    let base = baseline(&a.baseline, &ctx.config);
    let rep = emit_report(&ingested.rows, base).map_err(input)?;
    match &a.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Failure::Input(format!("creating {}: {e}", dir.display())))?;
            let write = |name: &str, body: &str| {
                let p = dir.join(name);
                std::fs::write(&p, body).map_err(|e| Failure::Input(format!("writing {}: {e}", p.display())))
            };
            write("report.txt", &rep.table)?;
            write("pareto.svg", &rep.svg)?;
            if ctx.json {
                let v = json!({ "table": dir.join("report.txt"), "svg": dir.join("pareto.svg") });
                writeln!(ctx.out, "{v}").map_err(io_out)
            } else {
                writeln!(ctx.out, "wrote {} and {}", dir.join("report.txt").display(), dir.join("pareto.svg").display())
                    .map_err(io_out)
            }
        }
        None if ctx.json => writeln!(ctx.out, "{}", json!({ "table": rep.table, "svg": rep.svg })).map_err(io_out),
        None => write!(ctx.out, "{}", rep.table).map_err(io_out),
    }
}

fn layout_doc(ctx: &mut Ctx) -> Result<(), Failure> {
    let mix = mix_table(None, &ctx.config)?;
    let inv = inventory::llama_3_1_8b();
    let o = &mut ctx.out;
    let mut w = || -> std::io::Result<()> {
        writeln!(o, "# Block formats\n")?;
        writeln!(o, "| Format | ggml type | Weights/block | Bytes/block | bpw | Code bits | Offset | Sub-blocks | Scale bits | Min bits |")?;
        writeln!(o, "|---|---|---|---|---|---|---|---|---|---|")?;
        for f in Format::ALL {
            let l = f.layout();
            writeln!(
                o,
                "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
                f.name(),
                f.ggml_type(),
                l.block_weights,
                l.block_bytes,
                l.bits_per_weight(),
                l.code_bits,
                if l.has_offset { "yes" } else { "no" },
                l.sub_blocks,
                l.scale_bits,
                l.min_bits
            )?;
        }
        writeln!(o, "\n# Schemes\n")?;
        writeln!(o, "Sizes are predicted for the built-in Llama-3.1-8B inventory with the active mix.\n")?;
        writeln!(o, "| Scheme | file_type | Base format | Size MiB | bpw | Description |")?;
        writeln!(o, "|---|---|---|---|---|---|")?;
        for s in QuantScheme::ALL {
            let (mib, bpw) = match predict_model_size_with(&inv, s, &mix, ContainerOverhead::default()) {
                Ok(e) => (fmt_2dp(e.mib()), format!("{:.4}", e.bits_per_weight())),
                Err(_) => ("-".into(), "-".into()),
            };
            writeln!(
                o,
                "| {} | {} | {} | {} | {} | {} |",
                s.name(),
                s.file_type(),
                s.base_format().name(),
                mib,
                bpw,
                s.description()
            )?;
        }
        writeln!(o, "\n# Mix table\n\n```toml\n{}```", mixfile::render_mix_table(&mix))
    };
    w().map_err(io_out)
}
