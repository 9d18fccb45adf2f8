//! GGUF container: an independent byte-level encoder as oracle, exact
//! round trips, and one distinct error per kind of corruption.

use kquant::gguf::{self, GgufError, GgufModel, Metadata, Section, Value, ValueType};
use kquant_core::{quantize_tensor, Format, TensorF32};
use proptest::prelude::*;

/// Hand-rolled GGUF v3 writer used to build valid and corrupt files.
#[derive(Default)]
struct Raw {
    buf: Vec<u8>,
}

impl Raw {
    fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend(v.to_le_bytes());
        self
    }
    fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend(v.to_le_bytes());
        self
    }
    fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.buf.extend(b);
        self
    }
    fn str(&mut self, s: &[u8]) -> &mut Self {
        self.u64(s.len() as u64).bytes(s)
    }
    fn header(&mut self, version: u32, tensors: u64, kvs: u64) -> &mut Self {
        self.bytes(b"GGUF").u32(version).u64(tensors).u64(kvs)
    }
    fn kv_u32(&mut self, key: &[u8], v: u32) -> &mut Self {
        self.str(key).u32(4).u32(v)
    }
    fn tensor(&mut self, name: &[u8], dims: &[u64], ty: u32, offset: u64) -> &mut Self {
        self.str(name).u32(dims.len() as u32);
        for &d in dims {
            self.u64(d);
        }
        self.u32(ty).u64(offset)
    }
    fn pad(&mut self, align: usize) -> &mut Self {
        while !self.buf.len().is_multiple_of(align) {
            self.buf.push(0);
        }
        self
    }
}

/// Two tensors: a 32-element Q4_0 row (18 bytes) and an 8-element F32
/// vector, in that order, with one metadata key.
fn two_tensor_parts() -> (Vec<u8>, Vec<u8>, Vec<u8>) {
    let q = quantize_tensor(
        &TensorF32::new("blk.0.ffn_up.weight", vec![1, 32], (0..32).map(|i| i as f32 / 8.0 - 2.0).collect()).unwrap(),
        Format::Q4_0,
    )
    .unwrap();
    let mut head = Raw::default();
    head.header(3, 2, 1)
        .kv_u32(b"general.file_type", 2)
        .tensor(b"blk.0.ffn_up.weight", &[32, 1], 2, 0)
        .tensor(b"blk.0.ffn_norm.weight", &[8], 0, 32)
        .pad(32);
    let f32s: Vec<u8> = (0..8).flat_map(|i| (i as f32).to_le_bytes()).collect();
    (head.buf, q.payload().to_vec(), f32s)
}

fn assemble(head: &[u8], a: &[u8], b: &[u8]) -> Vec<u8> {
    let mut out = head.to_vec();
    out.extend(a);
    out.resize(head.len() + 32, 0);
    out.extend(b);
    out.resize(head.len() + 64, 0);
    out
}

fn valid_file() -> Vec<u8> {
    let (h, a, b) = two_tensor_parts();
    assemble(&h, &a, &b)
}

fn err(bytes: &[u8]) -> GgufError {
    gguf::read_gguf(bytes).expect_err("corrupt file must not parse")
}

#[test]
fn oracle_bytes_parse_and_rewrite_identically() {
    let bytes = valid_file();
    let model = gguf::read_gguf(&bytes).unwrap();
    assert_eq!(model.tensors.len(), 2);
    assert_eq!(model.tensors[0].format(), Format::Q4_0);
    assert_eq!(model.tensors[0].shape(), &[1, 32]);
    assert_eq!(model.tensors[1].shape(), &[8]);
    assert_eq!(model.metadata.get("general.file_type"), Some(&Value::U32(2)));
    assert_eq!(gguf::to_bytes(&model).unwrap(), bytes);
}

#[test]
fn single_q4_0_tensor_is_18_bytes_plus_padding() {
    let (_, a, _) = two_tensor_parts();
    assert_eq!(a.len(), 18);
    let model = gguf::read_gguf(&valid_file()).unwrap();
    let only = GgufModel {
        metadata: model.metadata.clone(),
        tensors: vec![model.tensors[0].clone()],
    };
    let bytes = gguf::to_bytes(&only).unwrap();
    let descs: Vec<_> = only.tensors.iter().map(gguf::TensorDesc::from).collect();
    let (header, _) = gguf::encode_header(&only.metadata, &descs).unwrap();
    assert_eq!(bytes.len(), header.len() + 32);
    assert_eq!(bytes.len() as u64, gguf::predicted_len(&only.metadata, &descs).unwrap());
}

#[test]
fn zero_tensor_one_key_file_parses() {
    let mut r = Raw::default();
    r.header(3, 0, 1).kv_u32(b"general.alignment", 32).pad(32);
    let model = gguf::read_gguf(&r.buf).unwrap();
    assert!(model.tensors.is_empty());
    assert_eq!(model.metadata.len(), 1);
    let mut r = Raw::default();
    r.header(3, 0, 1).kv_u32(b"k", 7);
    assert_eq!(gguf::read_gguf(&r.buf).unwrap().metadata.get("k"), Some(&Value::U32(7)));
}

#[test]
fn version_2_is_read() {
    let mut bytes = valid_file();
    bytes[4] = 2;
    assert_eq!(gguf::read_gguf(&bytes).unwrap().tensors.len(), 2);
}

#[test]
fn bad_magic_and_version() {
    let mut bytes = valid_file();
    bytes[0] = b'X';
    assert!(matches!(err(&bytes), GgufError::BadMagic(m) if &m == b"XGUF"));
    let mut bytes = valid_file();
    bytes[4] = 9;
    assert!(matches!(err(&bytes), GgufError::UnsupportedVersion(9)));
    let mut bytes = valid_file();
    bytes[4] = 1;
    assert!(matches!(err(&bytes), GgufError::UnsupportedVersion(1)));
}

#[test]
fn truncation_names_the_section() {
    let bytes = valid_file();
    assert!(matches!(err(&bytes[..10]), GgufError::Truncated(Section::Header)));
    // header is 24 bytes; the key string starts right after
    assert!(matches!(err(&bytes[..30]), GgufError::Truncated(Section::Metadata(0))));
    let kv_end = 24 + 8 + 17 + 4 + 4;
    assert!(matches!(err(&bytes[..kv_end + 5]), GgufError::Truncated(Section::TensorInfo(0))));
    let (h, _, _) = two_tensor_parts();
    assert!(matches!(err(&bytes[..h.len() + 10]), GgufError::Truncated(Section::TensorData(0))));
    assert!(matches!(err(&bytes[..h.len() + 40]), GgufError::Truncated(Section::TensorData(1))));
}

#[test]
fn unknown_value_type_rejected() {
    let mut r = Raw::default();
    r.header(3, 0, 1).str(b"weird").u32(13).u32(0);
    assert!(matches!(err(&r.buf), GgufError::UnknownValueType { key, type_id: 13 } if key == "weird"));
    let mut r = Raw::default();
    r.header(3, 0, 1).str(b"arr").u32(9).u32(42).u64(0);
    assert!(matches!(err(&r.buf), GgufError::UnknownValueType { type_id: 42, .. }));
}

#[test]
fn bad_bool_and_utf8() {
    let mut r = Raw::default();
    r.header(3, 0, 1).str(b"flag").u32(7).bytes(&[2]);
    assert!(matches!(err(&r.buf), GgufError::InvalidBool { key } if key == "flag"));
    let mut r = Raw::default();
    r.header(3, 0, 1).str(&[0xff, 0xfe]).u32(4).u32(0);
    assert!(matches!(err(&r.buf), GgufError::InvalidUtf8(Section::Metadata(0))));
    let mut r = Raw::default();
    r.header(3, 1, 0).tensor(&[0xc3], &[32], 0, 0);
    assert!(matches!(err(&r.buf), GgufError::InvalidUtf8(Section::TensorInfo(0))));
}

#[test]
fn duplicates_rejected_on_read() {
    let mut r = Raw::default();
    r.header(3, 0, 2).kv_u32(b"k", 1).kv_u32(b"k", 2);
    assert!(matches!(err(&r.buf), GgufError::DuplicateKey(k) if k == "k"));
    let mut r = Raw::default();
    r.header(3, 2, 0).tensor(b"t", &[8], 0, 0).tensor(b"t", &[8], 0, 32).pad(32);
    r.buf.resize(r.buf.len() + 64, 0);
    assert!(matches!(err(&r.buf), GgufError::DuplicateTensor(n) if n == "t"));
}

#[test]
fn bad_directory_entries() {
    let build = |dims: &[u64], ty: u32, second_offset: u64| {
        let mut r = Raw::default();
        r.header(3, 2, 0).tensor(b"a", dims, ty, 0).tensor(b"b", &[8], 0, second_offset).pad(32);
        r.buf.resize(r.buf.len() + 256, 0);
        r.buf
    };
    assert!(gguf::read_gguf(&build(&[8], 0, 32)).is_ok());
    assert!(matches!(
        err(&build(&[8], 99, 32)),
        GgufError::UnsupportedTensorType { index: 0, type_id: 99 }
    ));
    assert!(matches!(
        err(&build(&[2, 2, 2, 1, 1], 0, 32)),
        GgufError::TooManyDims { index: 0, n_dims: 5 }
    ));
    assert!(matches!(err(&build(&[8], 0, 16)), GgufError::Misaligned { offset: 16, .. }));
    assert!(matches!(err(&build(&[16], 0, 32)), GgufError::Overlap { .. }));
    // 33 elements cannot form Q4_0 blocks
    assert!(matches!(err(&build(&[33], 2, 32)), GgufError::Tensor { .. }));
}

#[test]
fn corruption_errors_are_distinct() {
    let mut r = Raw::default();
    r.header(3, 0, 1).str(b"w").u32(13).u32(0);
    let unknown = r.buf.clone();
    let mut r = Raw::default();
    r.header(3, 0, 1).str(b"f").u32(7).bytes(&[3]);
    let bad_bool = r.buf.clone();
    let mut magic = valid_file();
    magic[1] = 0;
    let mut version = valid_file();
    version[4] = 7;
    let full = valid_file();
    let kinds: Vec<String> = [&magic[..], &version, &full[..40], &unknown, &bad_bool]
        .iter()
        .map(|b| format!("{:?}", std::mem::discriminant(&err(b))))
        .collect();
    let mut dedup = kinds.clone();
    dedup.sort();
    dedup.dedup();
    assert_eq!(dedup.len(), kinds.len(), "{kinds:?}");
}

#[test]
fn duplicate_tensor_names_rejected_on_write() {
    let mut m = gguf::read_gguf(&valid_file()).unwrap();
    m.tensors.push(m.tensors[0].clone());
    assert!(matches!(gguf::to_bytes(&m), Err(GgufError::DuplicateTensor(_))));
}

fn value() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        any::<u8>().prop_map(Value::U8),
        any::<i8>().prop_map(Value::I8),
        any::<u16>().prop_map(Value::U16),
        any::<i16>().prop_map(Value::I16),
        any::<u32>().prop_map(Value::U32),
        any::<i32>().prop_map(Value::I32),
        any::<f32>().prop_map(Value::F32),
        any::<bool>().prop_map(Value::Bool),
        "[a-z .]{0,12}".prop_map(Value::String),
        any::<u64>().prop_map(Value::U64),
        any::<i64>().prop_map(Value::I64),
        any::<f64>().prop_map(Value::F64),
    ];
    prop_oneof![
        4 => leaf,
        1 => prop::collection::vec(any::<i16>(), 0..5)
            .prop_map(|v| Value::Array(ValueType::I16, v.into_iter().map(Value::I16).collect())),
        1 => prop::collection::vec("[a-z]{0,4}", 0..4)
            .prop_map(|v| Value::Array(ValueType::String, v.into_iter().map(Value::String).collect())),
    ]
}

fn model() -> impl Strategy<Value = GgufModel> {
    let formats = [Format::F32, Format::F16, Format::Q4_0, Format::Q8_0, Format::Q4_K, Format::Q6_K];
    (
        prop::collection::btree_map("[a-z]{1,6}\\.[a-z]{1,6}", value(), 0..6),
        prop::collection::vec((0..formats.len(), 1usize..3, any::<u64>()), 0..4),
    )
        .prop_map(move |(kvs, specs)| {
            let mut metadata = Metadata::new();
            for (k, v) in kvs {
                metadata.insert(k, v);
            }
            let tensors = specs
                .into_iter()
                .enumerate()
                .map(|(i, (fi, rows, seed))| {
                    let f = formats[fi];
                    let cols = f.block_weights().max(256);
                    let data = (0..rows * cols)
                        .map(|j| ((seed.wrapping_add(j as u64 * 2654435761) % 2001) as f32 - 1000.0) / 997.0)
                        .collect();
                    quantize_tensor(&TensorF32::new(format!("t{i}"), vec![rows, cols], data).unwrap(), f).unwrap()
                })
                .collect();
            GgufModel { metadata, tensors }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn write_read_write_is_byte_identical(m in model()) {
        let first = gguf::to_bytes(&m).unwrap();
        prop_assert_eq!(first.len() as u64, gguf::encoded_len(&m).unwrap());
        let back = gguf::read_gguf(&first).unwrap();
        let second = gguf::to_bytes(&back).unwrap();
        prop_assert_eq!(first, second);
    }

    #[test]
    fn any_truncation_is_an_error(m in model(), cut in 0.0f64..1.0) {
        let bytes = gguf::to_bytes(&m).unwrap();
        let n = ((bytes.len() as f64) * cut) as usize;
        prop_assume!(n < bytes.len());
        // trailing padding is optional, so only cuts before the last
        // payload byte (or inside the directory) must fail
        let last_end = {
            let r = gguf::GgufReader::new(std::io::Cursor::new(&bytes)).unwrap();
            let h = r.header();
            h.tensors
                .iter()
                .map(|t| h.data_offset + t.offset + t.payload_bytes())
                .max()
                .unwrap_or(h.data_offset - (h.alignment - 1))
        };
        if (n as u64) < last_end {
            prop_assert!(gguf::read_gguf(&bytes[..n]).is_err());
        }
    }
}
