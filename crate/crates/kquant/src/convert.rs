//! Whole-model conversion: re-encodes every tensor of a source model into the
//! formats a scheme's mix selects and streams the result as GGUF.
//!
//! Tensors are processed in row chunks, so peak memory stays around one
//! chunk regardless of model size.

use std::io::{Read, Seek, Write};
use std::time::Instant;

use kquant_core::codecs::{dequantize_row, quantize_row};
use kquant_core::{Format, Inventory, MixTable, QuantScheme, TensorRole};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::gguf::{self, GgufError, GgufModel, GgufReader, GgufWriter, Metadata, TensorDesc, Value};

pub const FILE_TYPE_KEY: &str = "general.file_type";

/// Values decoded per chunk.
const CHUNK_VALUES: usize = 1 << 22;

#[derive(Debug, thiserror::Error)]
pub enum ConvertError {
    #[error(transparent)]
    Gguf(#[from] GgufError),
    #[error("tensor `{name}`: {source}")]
    Codec {
        name: String,
        #[source]
        source: kquant_core::Error,
    },
    #[error("tensor `{name}` is stored as {format}; conversion needs F32 or F16 input")]
    NotFloatInput { name: String, format: Format },
}

/// A model whose tensors can be read a few rows at a time.
pub trait TensorSource {
    fn metadata(&self) -> &Metadata;
    fn tensors(&self) -> &[TensorDesc];
    /// Packed bytes of rows `start..start + n` of tensor `index`, in its
    /// stored format.
    fn read_rows(&mut self, index: usize, start: usize, n: usize) -> Result<Vec<u8>, ConvertError>;
}

pub struct GgufSource<R> {
    reader: GgufReader<R>,
    tensors: Vec<TensorDesc>,
}

impl<R: Read + Seek> GgufSource<R> {
    pub fn new(reader: GgufReader<R>) -> Self {
        let tensors = reader.header().tensors.iter().map(TensorDesc::from).collect();
        GgufSource { reader, tensors }
    }
}

impl<R: Read + Seek> TensorSource for GgufSource<R> {
    fn metadata(&self) -> &Metadata {
        &self.reader.header().metadata
    }

    fn tensors(&self) -> &[TensorDesc] {
        &self.tensors
    }

    fn read_rows(&mut self, index: usize, start: usize, n: usize) -> Result<Vec<u8>, ConvertError> {
        Ok(self.reader.read_rows(index, start, n)?)
    }
}

pub struct MemorySource<'a> {
    model: &'a GgufModel,
    tensors: Vec<TensorDesc>,
}

impl<'a> MemorySource<'a> {
    pub fn new(model: &'a GgufModel) -> Self {
        MemorySource {
            model,
            tensors: model.tensors.iter().map(TensorDesc::from).collect(),
        }
    }
}

impl TensorSource for MemorySource<'_> {
    fn metadata(&self) -> &Metadata {
        &self.model.metadata
    }

    fn tensors(&self) -> &[TensorDesc] {
        &self.tensors
    }

    fn read_rows(&mut self, index: usize, start: usize, n: usize) -> Result<Vec<u8>, ConvertError> {
        let t = &self.model.tensors[index];
        let rb = t.row_bytes();
        Ok(t.payload()[start * rb..(start + n) * rb].to_vec())
    }
}

/// Deterministic pseudo-random weights in the shapes of an inventory.
/// Matrices are F16 with values uniform in ±`scale`; norm vectors are F32
/// ones. Each row is generated independently from `(seed, tensor, row)`, so
/// reads may come in any order.
pub struct SyntheticSource {
    metadata: Metadata,
    tensors: Vec<TensorDesc>,
    seed: u64,
    scale: f32,
}

impl SyntheticSource {
    pub fn new(inventory: &Inventory, name: &str, seed: u64) -> Self {
        let mut metadata = Metadata::new();
        metadata.insert("general.architecture", "llama");
        metadata.insert("general.name", name);
        metadata.insert(FILE_TYPE_KEY, QuantScheme::F16.file_type());
        metadata.insert("llama.block_count", inventory.n_layers());
        let tensors = inventory
            .tensors()
            .iter()
            .map(|t| TensorDesc {
                name: t.name.clone(),
                shape: t.shape.clone(),
                format: if t.role.is_quantizable() { Format::F16 } else { Format::F32 },
            })
            .collect();
        SyntheticSource {
            metadata,
            tensors,
            seed,
            scale: 0.05,
        }
    }

    fn row_values(&self, index: usize, row: usize, out: &mut [f32]) {
        if self.tensors[index].format == Format::F32 {
            out.fill(1.0);
            return;
        }
        let key = self.seed ^ ((index as u64) << 40) ^ row as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        for v in out {
            *v = rng.gen_range(-self.scale..self.scale);
        }
    }
}

impl TensorSource for SyntheticSource {
    fn metadata(&self) -> &Metadata {
        &self.metadata
    }

    fn tensors(&self) -> &[TensorDesc] {
        &self.tensors
    }

    fn read_rows(&mut self, index: usize, start: usize, n: usize) -> Result<Vec<u8>, ConvertError> {
        let t = &self.tensors[index];
        let row_len = *t.shape.last().unwrap();
        let mut values = vec![0f32; row_len];
        let rb = row_len * t.format.block_bytes();
        let mut out = vec![0u8; n * rb];
        for (r, chunk) in out.chunks_exact_mut(rb).enumerate() {
            self.row_values(index, start + r, &mut values);
            quantize_row(t.format, &values, chunk).map_err(|source| ConvertError::Codec {
                name: t.name.clone(),
                source,
            })?;
        }
        Ok(out)
    }
}

/// A small Llama-shaped model held in memory: `layers` blocks of width
/// `width`, feed-forward width `ffn`, grouped KV heads of width `width / 4`
/// and a `vocab`-row embedding and output head.
pub fn tiny_llama(layers: u32, width: usize, ffn: usize, vocab: usize, seed: u64) -> GgufModel {
    let mut specs = vec![format!("token_embd.weight {vocab} {width}")];
    for i in 0..layers {
        let kv = width / 4;
        specs.extend([
            format!("blk.{i}.attn_norm.weight {width}"),
            format!("blk.{i}.attn_q.weight {width} {width}"),
            format!("blk.{i}.attn_k.weight {kv} {width}"),
            format!("blk.{i}.attn_v.weight {kv} {width}"),
            format!("blk.{i}.attn_output.weight {width} {width}"),
            format!("blk.{i}.ffn_norm.weight {width}"),
            format!("blk.{i}.ffn_gate.weight {ffn} {width}"),
            format!("blk.{i}.ffn_up.weight {ffn} {width}"),
            format!("blk.{i}.ffn_down.weight {width} {ffn}"),
        ]);
    }
    specs.push(format!("output_norm.weight {width}"));
    specs.push(format!("output.weight {vocab} {width}"));
    let inv = crate::inventory::parse_inventory(&specs.join("\n")).expect("tiny inventory is valid");
    let mut src = SyntheticSource::new(&inv, "tiny-llama", seed);
    let tensors = src
        .tensors
        .clone()
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            let rows = d.shape.iter().product::<usize>() / d.shape.last().unwrap();
            let payload = src.read_rows(i, 0, rows).expect("synthetic rows");
            kquant_core::QuantizedTensor::new(d.name, d.format, d.shape, payload).expect("consistent shape")
        })
        .collect();
    GgufModel {
        metadata: src.metadata,
        tensors,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvertedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub from: Format,
    pub to: Format,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvertReport {
    /// Scheme id, or `F32` for dequantization.
    pub target: String,
    /// GGUF size of the source model, bytes.
    pub input_bytes: u64,
    pub output_bytes: u64,
    /// Predicted output size, computed before any payload is written.
    pub predicted_bytes: u64,
    pub input_payload_bytes: u64,
    pub output_payload_bytes: u64,
    pub seconds: f64,
    pub tensors: Vec<ConvertedTensor>,
}

impl ConvertReport {
    /// Output size reduction against the input file, percent.
    pub fn reduction(&self) -> f64 {
        100.0 * (1.0 - self.output_bytes as f64 / self.input_bytes as f64)
    }

    pub fn payload_reduction(&self) -> f64 {
        100.0 * (1.0 - self.output_payload_bytes as f64 / self.input_payload_bytes as f64)
    }
}

fn n_layers(tensors: &[TensorDesc]) -> u32 {
    tensors
        .iter()
        .filter_map(|t| TensorRole::from_tensor_name(&t.name).ok()?.1)
        .max()
        .map_or(0, |l| l + 1)
}

/// Storage format for one tensor. Names outside the known roles keep their
/// format when one-dimensional and take the scheme's base format otherwise.
pub fn target_format(mix: &MixTable, scheme: QuantScheme, t: &TensorDesc, n_layers: u32) -> Format {
    match TensorRole::from_tensor_name(&t.name) {
        Ok((role, layer)) => mix.resolve(scheme, role, layer, n_layers),
        Err(_) if t.shape.len() == 1 => t.format,
        Err(_) => scheme.base_format(),
    }
}

/// Output directory and metadata for converting `source` to `scheme`.
/// Metadata keys are preserved; `general.file_type` is updated only when
/// present.
pub fn plan(source: &dyn TensorSource, scheme: QuantScheme, mix: &MixTable) -> (Metadata, Vec<TensorDesc>) {
    let mut metadata = source.metadata().clone();
    if metadata.get(FILE_TYPE_KEY).is_some() {
        metadata.insert(FILE_TYPE_KEY, Value::U32(scheme.file_type()));
    }
    let n = n_layers(source.tensors());
    let descs = source
        .tensors()
        .iter()
        .map(|t| TensorDesc {
            format: target_format(mix, scheme, t, n),
            ..t.clone()
        })
        .collect();
    (metadata, descs)
}

/// Output plan that stores every tensor as F32. `general.file_type` becomes
/// 0 (all F32) when present.
pub fn plan_dequantize(source: &dyn TensorSource) -> (Metadata, Vec<TensorDesc>) {
    let mut metadata = source.metadata().clone();
    if metadata.get(FILE_TYPE_KEY).is_some() {
        metadata.insert(FILE_TYPE_KEY, Value::U32(0));
    }
    let descs = source
        .tensors()
        .iter()
        .map(|t| TensorDesc {
            format: Format::F32,
            ..t.clone()
        })
        .collect();
    (metadata, descs)
}

/// Converts `source` into `scheme`, writing GGUF to `out`.
pub fn convert<W: Write>(
    source: &mut dyn TensorSource,
    scheme: QuantScheme,
    mix: &MixTable,
    out: W,
) -> Result<ConvertReport, ConvertError> {
    let (metadata, descs) = plan(source, scheme, mix);
    convert_planned(source, scheme.name(), metadata, descs, out)
}

/// Decodes every tensor of `source` to F32.
pub fn dequantize<W: Write>(source: &mut dyn TensorSource, out: W) -> Result<ConvertReport, ConvertError> {
    let (metadata, descs) = plan_dequantize(source);
    convert_planned(source, "F32", metadata, descs, out)
}

/// Writes `source` re-encoded per `descs`, which must list the source
/// tensors in order. Quantized inputs may only be kept as they are or
/// decoded to a float format.
pub fn convert_planned<W: Write>(
    source: &mut dyn TensorSource,
    target: &str,
    metadata: Metadata,
    descs: Vec<TensorDesc>,
    out: W,
) -> Result<ConvertReport, ConvertError> {
    let start = Instant::now();
    assert_eq!(descs.len(), source.tensors().len(), "plan must cover every source tensor");
    let input_bytes = gguf::predicted_len(source.metadata(), source.tensors())?;
    let predicted_bytes = gguf::predicted_len(&metadata, &descs)?;

    let mut writer = GgufWriter::new(out, &metadata, &descs)?;
    let mut tensors = Vec::with_capacity(descs.len());
    let mut input_payload_bytes = 0;
    let mut output_payload_bytes = 0;
    for (index, to) in descs.iter().enumerate() {
        let from = source.tensors()[index].clone();
        let codec = |source| ConvertError::Codec {
            name: from.name.clone(),
            source,
        };
        let is_float = |f: Format| matches!(f, Format::F32 | Format::F16);
        if from.format != to.format && !is_float(from.format) && !is_float(to.format) {
            return Err(ConvertError::NotFloatInput {
                name: from.name,
                format: from.format,
            });
        }
        let row_len = *from.shape.last().unwrap();
        let rows = from.shape.iter().product::<usize>() / row_len;
        let chunk_rows = (CHUNK_VALUES / row_len).max(1);
        let out_row_bytes = kquant_core::QuantizedTensor::check_shape(&to.name, to.format, &to.shape)
            .map_err(codec)?
            / rows;
        let mut values = vec![0f32; chunk_rows.min(rows) * row_len];
        let mut packed = vec![0u8; chunk_rows.min(rows) * out_row_bytes];
        let mut row = 0;
        while row < rows {
            let n = chunk_rows.min(rows - row);
            let raw = source.read_rows(index, row, n)?;
            input_payload_bytes += raw.len() as u64;
            if from.format == to.format {
                writer.write_chunk(&raw)?;
            } else {
                let vals = &mut values[..n * row_len];
                dequantize_row(from.format, &raw, vals).map_err(codec)?;
                let bytes = &mut packed[..n * out_row_bytes];
                quantize_row(to.format, vals, bytes).map_err(codec)?;
                writer.write_chunk(bytes)?;
            }
            row += n;
        }
        let bytes = (rows * out_row_bytes) as u64;
        output_payload_bytes += bytes;
        tensors.push(ConvertedTensor {
            name: from.name,
            shape: from.shape,
            from: from.format,
            to: to.format,
            bytes,
        });
    }
    let output_bytes = writer.finish()?;
    Ok(ConvertReport {
        target: target.into(),
        input_bytes,
        output_bytes,
        predicted_bytes,
        input_payload_bytes,
        output_payload_bytes,
        seconds: start.elapsed().as_secs_f64(),
        tensors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_rows_are_order_independent() {
        let inv = crate::inventory::parse_inventory("blk.0.ffn_up.weight 8 64\nblk.0.ffn_norm.weight 64").unwrap();
        let mut a = SyntheticSource::new(&inv, "x", 7);
        let all = a.read_rows(0, 0, 8).unwrap();
        let tail = a.read_rows(0, 5, 3).unwrap();
        assert_eq!(&all[5 * 128..], &tail[..]);
        assert_eq!(a.read_rows(1, 0, 1).unwrap(), 1f32.to_le_bytes().repeat(64));
    }

    #[test]
    fn file_type_only_updated_when_present() {
        let mut m = tiny_llama(1, 256, 512, 64, 1);
        let (meta, _) = plan(&MemorySource::new(&m), QuantScheme::Q4_K_M, &MixTable::default());
        assert_eq!(meta.get(FILE_TYPE_KEY), Some(&Value::U32(15)));
        m.metadata.remove(FILE_TYPE_KEY);
        let (meta, _) = plan(&MemorySource::new(&m), QuantScheme::Q4_K_M, &MixTable::default());
        assert_eq!(meta.get(FILE_TYPE_KEY), None);
        assert_eq!(meta.len(), m.metadata.len());
    }

    #[test]
    fn quantized_input_rejected() {
        let m = tiny_llama(1, 256, 512, 64, 1);
        let mut out = Vec::new();
        convert(&mut MemorySource::new(&m), QuantScheme::Q8_0, &MixTable::default(), &mut out).unwrap();
        let q = gguf::read_gguf(&out).unwrap();
        let err = convert(&mut MemorySource::new(&q), QuantScheme::Q4_0, &MixTable::default(), Vec::new()).unwrap_err();
        assert!(matches!(err, ConvertError::NotFloatInput { format: Format::Q8_0, .. }), "{err}");
    }
}
