//! GGUF v3 container: typed metadata, a tensor directory and aligned
//! tensor payloads, all little-endian.
//!
//! ```text
//! "GGUF" | version u32 | tensor count u64 | metadata count u64
//! metadata: (key string, value type u32, value)*
//! tensors:  (name string, n_dims u32, ne u64 * n_dims, ggml type u32, offset u64)*
//! padding to alignment, then payloads at their offsets, each padded
//! ```
//!
//! `ne` lists dimensions innermost first, the reverse of the row-major
//! shapes used everywhere else in this crate.

use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Cursor, Read, Seek, SeekFrom, Write};
use std::path::Path;

use kquant_core::{Format, QuantizedTensor};

pub const MAGIC: [u8; 4] = *b"GGUF";
pub const VERSION: u32 = 3;
pub const DEFAULT_ALIGNMENT: u64 = 32;
pub const ALIGNMENT_KEY: &str = "general.alignment";
const MAX_DIMS: u32 = 4;

/// Where in the file a read ran out of bytes or found bad text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Section {
    Header,
    Metadata(usize),
    TensorInfo(usize),
    TensorData(usize),
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Section::Header => f.write_str("header"),
            Section::Metadata(i) => write!(f, "metadata entry {i}"),
            Section::TensorInfo(i) => write!(f, "tensor info {i}"),
            Section::TensorData(i) => write!(f, "data of tensor {i}"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GgufError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a GGUF file (magic {0:02x?})")]
    BadMagic([u8; 4]),
    #[error("unsupported GGUF version {0}")]
    UnsupportedVersion(u32),
    #[error("file truncated in {0}")]
    Truncated(Section),
    #[error("payloads of `{first}` and `{second}` overlap")]
    Overlap { first: String, second: String },
    #[error("payload of `{tensor}` at offset {offset} is not aligned to {alignment}")]
    Misaligned { tensor: String, offset: u64, alignment: u64 },
    #[error("metadata `{key}` has unknown value type {type_id}")]
    UnknownValueType { key: String, type_id: u32 },
    #[error("metadata `{key}` has an invalid boolean byte")]
    InvalidBool { key: String },
    #[error("invalid UTF-8 in {0}")]
    InvalidUtf8(Section),
    #[error("metadata key `{0}` appears more than once")]
    DuplicateKey(String),
    #[error("tensor `{0}` appears more than once")]
    DuplicateTensor(String),
    #[error("tensor {index} has unsupported ggml type {type_id}")]
    UnsupportedTensorType { index: usize, type_id: u32 },
    #[error("tensor {index} has {n_dims} dimensions")]
    TooManyDims { index: usize, n_dims: u32 },
    #[error("`{ALIGNMENT_KEY}` must be a power-of-two u32, found {0}")]
    InvalidAlignment(String),
    #[error("array `{key}` mixes element types")]
    MixedArray { key: String },
    #[error("tensor `{name}`: {source}")]
    Tensor {
        name: String,
        #[source]
        source: kquant_core::Error,
    },
    #[error("expected payload for `{name}` of {expected} bytes, got {actual}")]
    PayloadSize { name: String, expected: u64, actual: u64 },
    #[error("{written} of {expected} tensors written")]
    Incomplete { written: usize, expected: usize },
}

pub type Result<T, E = GgufError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum ValueType {
    U8 = 0,
    I8 = 1,
    U16 = 2,
    I16 = 3,
    U32 = 4,
    I32 = 5,
    F32 = 6,
    Bool = 7,
    String = 8,
    Array = 9,
    U64 = 10,
    I64 = 11,
    F64 = 12,
}

impl ValueType {
    pub fn from_u32(v: u32) -> Option<Self> {
        use ValueType::*;
        Some(match v {
            0 => U8,
            1 => I8,
            2 => U16,
            3 => I16,
            4 => U32,
            5 => I32,
            6 => F32,
            7 => Bool,
            8 => String,
            9 => Array,
            10 => U64,
            11 => I64,
            12 => F64,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    U8(u8),
    I8(i8),
    U16(u16),
    I16(i16),
    U32(u32),
    I32(i32),
    F32(f32),
    Bool(bool),
    String(String),
    /// Element type and elements; every element has that type.
    Array(ValueType, Vec<Value>),
    U64(u64),
    I64(i64),
    F64(f64),
}

impl Value {
    pub fn value_type(&self) -> ValueType {
        match self {
            Value::U8(_) => ValueType::U8,
            Value::I8(_) => ValueType::I8,
            Value::U16(_) => ValueType::U16,
            Value::I16(_) => ValueType::I16,
            Value::U32(_) => ValueType::U32,
            Value::I32(_) => ValueType::I32,
            Value::F32(_) => ValueType::F32,
            Value::Bool(_) => ValueType::Bool,
            Value::String(_) => ValueType::String,
            Value::Array(..) => ValueType::Array,
            Value::U64(_) => ValueType::U64,
            Value::I64(_) => ValueType::I64,
            Value::F64(_) => ValueType::F64,
        }
    }

    /// Integer value if it is a non-negative integer of any width.
    pub fn as_u64(&self) -> Option<u64> {
        match *self {
            Value::U8(v) => Some(v.into()),
            Value::U16(v) => Some(v.into()),
            Value::U32(v) => Some(v.into()),
            Value::U64(v) => Some(v),
            Value::I8(v) => u64::try_from(v).ok(),
            Value::I16(v) => u64::try_from(v).ok(),
            Value::I32(v) => u64::try_from(v).ok(),
            Value::I64(v) => u64::try_from(v).ok(),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::String(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::U8(v) => write!(f, "{v}"),
            Value::I8(v) => write!(f, "{v}"),
            Value::U16(v) => write!(f, "{v}"),
            Value::I16(v) => write!(f, "{v}"),
            Value::U32(v) => write!(f, "{v}"),
            Value::I32(v) => write!(f, "{v}"),
            Value::F32(v) => write!(f, "{v}"),
            Value::Bool(v) => write!(f, "{v}"),
            Value::String(s) => write!(f, "{s:?}"),
            Value::U64(v) => write!(f, "{v}"),
            Value::I64(v) => write!(f, "{v}"),
            Value::F64(v) => write!(f, "{v}"),
            Value::Array(t, v) => {
                const SHOWN: usize = 8;
                write!(f, "[{t:?}; {}]", v.len())?;
                if !v.is_empty() {
                    f.write_str(" [")?;
                    for (i, x) in v.iter().take(SHOWN).enumerate() {
                        if i > 0 {
                            f.write_str(", ")?;
                        }
                        write!(f, "{x}")?;
                    }
                    if v.len() > SHOWN {
                        f.write_str(", ...")?;
                    }
                    f.write_str("]")?;
                }
                Ok(())
            }
        }
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::String(s.into())
    }
}

impl From<u32> for Value {
    fn from(v: u32) -> Self {
        Value::U32(v)
    }
}

/// Insertion-ordered metadata; keys are unique.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metadata {
    entries: Vec<(String, Value)>,
}

impl Metadata {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    /// Replaces the value in place if the key exists, otherwise appends.
    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<Value>) {
        let key = key.into();
        let value = value.into();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    pub fn remove(&mut self, key: &str) -> Option<Value> {
        let i = self.entries.iter().position(|(k, _)| k == key)?;
        Some(self.entries.remove(i).1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Payload alignment declared by `general.alignment`, or the default.
    pub fn alignment(&self) -> Result<u64> {
        match self.get(ALIGNMENT_KEY) {
            None => Ok(DEFAULT_ALIGNMENT),
            Some(Value::U32(a)) if a.is_power_of_two() => Ok(u64::from(*a)),
            Some(v) => Err(GgufError::InvalidAlignment(v.to_string())),
        }
    }
}

/// Directory entry for one tensor. `offset` is relative to the start of the
/// data section.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub format: Format,
    pub offset: u64,
}

impl TensorInfo {
    pub fn elements(&self) -> u64 {
        self.shape.iter().map(|&d| d as u64).product()
    }

    /// Payload bytes implied by shape and format.
    pub fn payload_bytes(&self) -> u64 {
        let l = self.format.layout();
        self.elements() / l.block_weights as u64 * l.block_bytes as u64
    }
}

/// Parsed header and directory of a GGUF file.
#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub version: u32,
    pub metadata: Metadata,
    pub tensors: Vec<TensorInfo>,
    pub alignment: u64,
    /// Absolute file offset of the data section.
    pub data_offset: u64,
}

/// A whole model held in memory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GgufModel {
    pub metadata: Metadata,
    pub tensors: Vec<QuantizedTensor>,
}

impl GgufModel {
    pub fn payload_bytes(&self) -> u64 {
        self.tensors.iter().map(|t| t.payload().len() as u64).sum()
    }
}

fn align_up(x: u64, a: u64) -> u64 {
    x.div_ceil(a) * a
}

// ---------------------------------------------------------------------------
// reading
// ---------------------------------------------------------------------------

struct Src<R> {
    inner: R,
    pos: u64,
}

impl<R: Read> Src<R> {
    fn bytes(&mut self, buf: &mut [u8], at: &Section) -> Result<()> {
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.pos += buf.len() as u64;
                Ok(())
            }
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => Err(GgufError::Truncated(at.clone())),
            Err(e) => Err(e.into()),
        }
    }

    fn array<const N: usize>(&mut self, at: &Section) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.bytes(&mut b, at)?;
        Ok(b)
    }

    fn u32(&mut self, at: &Section) -> Result<u32> {
        self.array(at).map(u32::from_le_bytes)
    }

    fn u64(&mut self, at: &Section) -> Result<u64> {
        self.array(at).map(u64::from_le_bytes)
    }

    fn string(&mut self, at: &Section) -> Result<String> {
        let len = self.u64(at)?;
        let mut buf = Vec::new();
        (&mut self.inner).take(len).read_to_end(&mut buf)?;
        if (buf.len() as u64) < len {
            return Err(GgufError::Truncated(at.clone()));
        }
        self.pos += len;
        String::from_utf8(buf).map_err(|_| GgufError::InvalidUtf8(at.clone()))
    }

    fn value(&mut self, ty: ValueType, key: &str, at: &Section) -> Result<Value> {
        Ok(match ty {
            ValueType::U8 => Value::U8(self.array::<1>(at)?[0]),
            ValueType::I8 => Value::I8(self.array::<1>(at)?[0] as i8),
            ValueType::U16 => Value::U16(u16::from_le_bytes(self.array(at)?)),
            ValueType::I16 => Value::I16(i16::from_le_bytes(self.array(at)?)),
            ValueType::U32 => Value::U32(self.u32(at)?),
            ValueType::I32 => Value::I32(i32::from_le_bytes(self.array(at)?)),
            ValueType::F32 => Value::F32(f32::from_le_bytes(self.array(at)?)),
            ValueType::Bool => match self.array::<1>(at)?[0] {
                0 => Value::Bool(false),
                1 => Value::Bool(true),
                _ => return Err(GgufError::InvalidBool { key: key.into() }),
            },
            ValueType::String => Value::String(self.string(at)?),
            ValueType::U64 => Value::U64(self.u64(at)?),
            ValueType::I64 => Value::I64(i64::from_le_bytes(self.array(at)?)),
            ValueType::F64 => Value::F64(f64::from_le_bytes(self.array(at)?)),
            ValueType::Array => {
                let id = self.u32(at)?;
                let elem = ValueType::from_u32(id).ok_or_else(|| GgufError::UnknownValueType {
                    key: key.into(),
                    type_id: id,
                })?;
                let n = self.u64(at)?;
                let mut items = Vec::with_capacity(n.min(4096) as usize);
                for _ in 0..n {
                    items.push(self.value(elem, key, at)?);
                }
                Value::Array(elem, items)
            }
        })
    }
}

fn read_header<R: Read>(src: &mut Src<R>) -> Result<Header> {
    let at = Section::Header;
    let magic: [u8; 4] = src.array(&at)?;
    if magic != MAGIC {
        return Err(GgufError::BadMagic(magic));
    }
    let version = src.u32(&at)?;
    if !(2..=3).contains(&version) {
        return Err(GgufError::UnsupportedVersion(version));
    }
    let n_tensors = src.u64(&at)?;
    let n_kv = src.u64(&at)?;

    let mut metadata = Metadata::new();
    for i in 0..n_kv as usize {
        let at = Section::Metadata(i);
        let key = src.string(&at)?;
        let id = src.u32(&at)?;
        let ty = ValueType::from_u32(id).ok_or_else(|| GgufError::UnknownValueType {
            key: key.clone(),
            type_id: id,
        })?;
        let value = src.value(ty, &key, &at)?;
        if metadata.get(&key).is_some() {
            return Err(GgufError::DuplicateKey(key));
        }
        metadata.insert(key, value);
    }
    let alignment = metadata.alignment()?;

    let mut tensors: Vec<TensorInfo> = Vec::with_capacity(n_tensors.min(4096) as usize);
    for index in 0..n_tensors as usize {
        let at = Section::TensorInfo(index);
        let name = src.string(&at)?;
        let n_dims = src.u32(&at)?;
        if n_dims > MAX_DIMS {
            return Err(GgufError::TooManyDims { index, n_dims });
        }
        let mut shape = Vec::with_capacity(n_dims as usize);
        for _ in 0..n_dims {
            shape.push(src.u64(&at)? as usize);
        }
        shape.reverse();
        let type_id = src.u32(&at)?;
        let format = Format::from_ggml_type(type_id).ok_or(GgufError::UnsupportedTensorType { index, type_id })?;
        let offset = src.u64(&at)?;
        if tensors.iter().any(|t| t.name == name) {
            return Err(GgufError::DuplicateTensor(name));
        }
        let info = TensorInfo {
            name,
            shape,
            format,
            offset,
        };
        QuantizedTensor::check_shape(&info.name, format, &info.shape).map_err(|source| GgufError::Tensor {
            name: info.name.clone(),
            source,
        })?;
        if offset % alignment != 0 {
            return Err(GgufError::Misaligned {
                tensor: info.name,
                offset,
                alignment,
            });
        }
        tensors.push(info);
    }

    let mut order: Vec<usize> = (0..tensors.len()).collect();
    order.sort_by_key(|&i| tensors[i].offset);
    for w in order.windows(2) {
        let (a, b) = (&tensors[w[0]], &tensors[w[1]]);
        if a.offset + a.payload_bytes() > b.offset {
            return Err(GgufError::Overlap {
                first: a.name.clone(),
                second: b.name.clone(),
            });
        }
    }

    Ok(Header {
        version,
        metadata,
        tensors,
        alignment,
        data_offset: align_up(src.pos, alignment),
    })
}

/// Streaming reader: parses the header eagerly and reads payloads on demand.
#[derive(Debug)]
pub struct GgufReader<R> {
    inner: R,
    header: Header,
}

impl<R: Read + Seek> GgufReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        inner.seek(SeekFrom::Start(0))?;
        let mut src = Src {
            inner: &mut inner,
            pos: 0,
        };
        let header = read_header(&mut src)?;
        let len = inner.seek(SeekFrom::End(0))?;
        for (i, t) in header.tensors.iter().enumerate() {
            if header.data_offset + t.offset + t.payload_bytes() > len {
                return Err(GgufError::Truncated(Section::TensorData(i)));
            }
        }
        Ok(GgufReader { inner, header })
    }

    pub fn header(&self) -> &Header {
        &self.header
    }

    pub fn read_payload(&mut self, index: usize) -> Result<Vec<u8>> {
        let t = &self.header.tensors[index];
        self.inner.seek(SeekFrom::Start(self.header.data_offset + t.offset))?;
        let mut buf = vec![0u8; t.payload_bytes() as usize];
        self.inner.read_exact(&mut buf).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => GgufError::Truncated(Section::TensorData(index)),
            _ => e.into(),
        })?;
        Ok(buf)
    }

    /// Packed bytes of rows `start..start + n` of tensor `index`.
    pub fn read_rows(&mut self, index: usize, start: usize, n: usize) -> Result<Vec<u8>> {
        let t = &self.header.tensors[index];
        let row_len = *t.shape.last().unwrap() as u64;
        let l = t.format.layout();
        let row_bytes = row_len / l.block_weights as u64 * l.block_bytes as u64;
        let rows = t.elements() / row_len;
        let end = (start + n) as u64;
        assert!(end <= rows, "rows {start}..{end} out of range for `{}` with {rows} rows", t.name);
        self.inner
            .seek(SeekFrom::Start(self.header.data_offset + t.offset + start as u64 * row_bytes))?;
        let mut buf = vec![0u8; (n as u64 * row_bytes) as usize];
        self.inner.read_exact(&mut buf).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => GgufError::Truncated(Section::TensorData(index)),
            _ => e.into(),
        })?;
        Ok(buf)
    }

    pub fn read_tensor(&mut self, index: usize) -> Result<QuantizedTensor> {
        let payload = self.read_payload(index)?;
        let t = &self.header.tensors[index];
        QuantizedTensor::new(t.name.clone(), t.format, t.shape.clone(), payload).map_err(|source| {
            GgufError::Tensor {
                name: t.name.clone(),
                source,
            }
        })
    }

    pub fn into_model(mut self) -> Result<GgufModel> {
        let tensors = (0..self.header.tensors.len())
            .map(|i| self.read_tensor(i))
            .collect::<Result<_>>()?;
        Ok(GgufModel {
            metadata: self.header.metadata,
            tensors,
        })
    }
}

pub fn open(path: impl AsRef<Path>) -> Result<GgufReader<BufReader<File>>> {
    GgufReader::new(BufReader::new(File::open(path)?))
}

pub fn read_gguf(bytes: &[u8]) -> Result<GgufModel> {
    GgufReader::new(Cursor::new(bytes))?.into_model()
}

// ---------------------------------------------------------------------------
// writing
// ---------------------------------------------------------------------------

fn put_string(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u64).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn put_value(out: &mut Vec<u8>, key: &str, v: &Value) -> Result<()> {
    match v {
        Value::U8(x) => out.push(*x),
        Value::I8(x) => out.push(*x as u8),
        Value::U16(x) => out.extend_from_slice(&x.to_le_bytes()),
        Value::I16(x) => out.extend_from_slice(&x.to_le_bytes()),
        Value::U32(x) => out.extend_from_slice(&x.to_le_bytes()),
        Value::I32(x) => out.extend_from_slice(&x.to_le_bytes()),
        Value::F32(x) => out.extend_from_slice(&x.to_le_bytes()),
        Value::Bool(x) => out.push(u8::from(*x)),
        Value::String(s) => put_string(out, s),
        Value::U64(x) => out.extend_from_slice(&x.to_le_bytes()),
        Value::I64(x) => out.extend_from_slice(&x.to_le_bytes()),
        Value::F64(x) => out.extend_from_slice(&x.to_le_bytes()),
        Value::Array(t, items) => {
            out.extend_from_slice(&(*t as u32).to_le_bytes());
            out.extend_from_slice(&(items.len() as u64).to_le_bytes());
            for item in items {
                if item.value_type() != *t {
                    return Err(GgufError::MixedArray { key: key.into() });
                }
                put_value(out, key, item)?;
            }
        }
    }
    Ok(())
}

/// Tensor description handed to [`GgufWriter::new`]; offsets are assigned
/// by the writer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorDesc {
    pub name: String,
    pub shape: Vec<usize>,
    pub format: Format,
}

impl From<&TensorInfo> for TensorDesc {
    fn from(t: &TensorInfo) -> Self {
        TensorDesc {
            name: t.name.clone(),
            shape: t.shape.clone(),
            format: t.format,
        }
    }
}

impl From<&QuantizedTensor> for TensorDesc {
    fn from(t: &QuantizedTensor) -> Self {
        TensorDesc {
            name: t.name().into(),
            shape: t.shape().into(),
            format: t.format(),
        }
    }
}

/// Encodes the header and directory, assigning each tensor the next aligned
/// offset in order. Returns the bytes (padded to the data section) and the
/// directory.
pub fn encode_header(metadata: &Metadata, tensors: &[TensorDesc]) -> Result<(Vec<u8>, Vec<TensorInfo>)> {
    let alignment = metadata.alignment()?;
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u64).to_le_bytes());
    out.extend_from_slice(&(metadata.len() as u64).to_le_bytes());
    for (k, v) in metadata.iter() {
        put_string(&mut out, k);
        out.extend_from_slice(&(v.value_type() as u32).to_le_bytes());
        put_value(&mut out, k, v)?;
    }
    let mut infos = Vec::with_capacity(tensors.len());
    let mut offset = 0u64;
    for t in tensors {
        if infos.iter().any(|i: &TensorInfo| i.name == t.name) {
            return Err(GgufError::DuplicateTensor(t.name.clone()));
        }
        QuantizedTensor::check_shape(&t.name, t.format, &t.shape).map_err(|source| GgufError::Tensor {
            name: t.name.clone(),
            source,
        })?;
        if t.shape.len() > MAX_DIMS as usize {
            return Err(GgufError::TooManyDims {
                index: infos.len(),
                n_dims: t.shape.len() as u32,
            });
        }
        put_string(&mut out, &t.name);
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in t.shape.iter().rev() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        out.extend_from_slice(&t.format.ggml_type().to_le_bytes());
        out.extend_from_slice(&offset.to_le_bytes());
        let info = TensorInfo {
            name: t.name.clone(),
            shape: t.shape.clone(),
            format: t.format,
            offset,
        };
        offset = align_up(offset + info.payload_bytes(), alignment);
        infos.push(info);
    }
    out.resize(align_up(out.len() as u64, alignment) as usize, 0);
    Ok((out, infos))
}

/// Streaming writer: the directory is fixed up front, then payloads are
/// written one at a time in directory order.
pub struct GgufWriter<W: Write> {
    out: W,
    tensors: Vec<TensorInfo>,
    alignment: u64,
    next: usize,
    in_tensor: u64,
    written: u64,
}

impl<W: Write> GgufWriter<W> {
    pub fn new(mut out: W, metadata: &Metadata, tensors: &[TensorDesc]) -> Result<Self> {
        let (header, infos) = encode_header(metadata, tensors)?;
        out.write_all(&header)?;
        Ok(GgufWriter {
            out,
            tensors: infos,
            alignment: metadata.alignment()?,
            next: 0,
            in_tensor: 0,
            written: header.len() as u64,
        })
    }

    pub fn tensors(&self) -> &[TensorInfo] {
        &self.tensors
    }

    /// Writes the next tensor's whole payload followed by padding.
    pub fn write_payload(&mut self, payload: &[u8]) -> Result<()> {
        let t = self.current()?;
        if self.in_tensor != 0 || payload.len() as u64 != t.payload_bytes() {
            return Err(GgufError::PayloadSize {
                name: t.name.clone(),
                expected: t.payload_bytes(),
                actual: self.in_tensor + payload.len() as u64,
            });
        }
        self.write_chunk(payload)
    }

    /// Appends part of the current tensor's payload. Once the payload is
    /// complete it is padded and the writer moves to the next tensor.
    pub fn write_chunk(&mut self, chunk: &[u8]) -> Result<()> {
        let t = self.current()?;
        let size = t.payload_bytes();
        let filled = self.in_tensor + chunk.len() as u64;
        if filled > size {
            return Err(GgufError::PayloadSize {
                name: t.name.clone(),
                expected: size,
                actual: filled,
            });
        }
        self.out.write_all(chunk)?;
        self.written += chunk.len() as u64;
        self.in_tensor = filled;
        if filled == size {
            let pad = align_up(size, self.alignment) - size;
            self.out.write_all(&vec![0u8; pad as usize])?;
            self.written += pad;
            self.in_tensor = 0;
            self.next += 1;
        }
        Ok(())
    }

    fn current(&self) -> Result<&TensorInfo> {
        self.tensors.get(self.next).ok_or(GgufError::Incomplete {
            written: self.next + 1,
            expected: self.tensors.len(),
        })
    }

    /// Flushes and returns the total byte count.
    pub fn finish(mut self) -> Result<u64> {
        if self.next != self.tensors.len() {
            return Err(GgufError::Incomplete {
                written: self.next,
                expected: self.tensors.len(),
            });
        }
        self.out.flush()?;
        Ok(self.written)
    }
}

/// Writes a whole model and returns the byte count.
pub fn write_gguf<W: Write>(model: &GgufModel, out: W) -> Result<u64> {
    let descs: Vec<TensorDesc> = model.tensors.iter().map(TensorDesc::from).collect();
    let mut w = GgufWriter::new(out, &model.metadata, &descs)?;
    for t in &model.tensors {
        w.write_payload(t.payload())?;
    }
    w.finish()
}

/// Exact size of a file with this metadata and directory.
pub fn predicted_len(metadata: &Metadata, tensors: &[TensorDesc]) -> Result<u64> {
    let (header, infos) = encode_header(metadata, tensors)?;
    let alignment = metadata.alignment()?;
    Ok(header.len() as u64 + infos.iter().map(|t| align_up(t.payload_bytes(), alignment)).sum::<u64>())
}

/// Exact size [`write_gguf`] will produce.
pub fn encoded_len(model: &GgufModel) -> Result<u64> {
    let descs: Vec<TensorDesc> = model.tensors.iter().map(TensorDesc::from).collect();
    predicted_len(&model.metadata, &descs)
}

pub fn to_bytes(model: &GgufModel) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_gguf(model, &mut out)?;
    Ok(out)
}

pub fn create(path: impl AsRef<Path>, metadata: &Metadata, tensors: &[TensorDesc]) -> Result<GgufWriter<BufWriter<File>>> {
    GgufWriter::new(BufWriter::new(File::create(path)?), metadata, tensors)
}
