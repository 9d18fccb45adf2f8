use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::format::Format;

/// Dense row-major f32 tensor. The last dimension is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorF32 {
    name: String,
    shape: Vec<usize>,
    data: Vec<f32>,
}

pub(crate) fn element_count(name: &str, shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::InvalidShape { name: name.into() });
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::InvalidShape { name: name.into() })
}

impl TensorF32 {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let name = name.into();
        let expected = element_count(&name, &shape)?;
        if data.len() != expected {
            return Err(Error::ShapeMismatch {
                name,
                len: data.len(),
                expected,
            });
        }
        Ok(TensorF32 { name, shape, data })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Length of the contiguous (last) dimension.
    pub fn row_len(&self) -> usize {
        *self.shape.last().expect("shape is non-empty")
    }
}

/// Packed payload of one tensor in a single storage format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedTensor {
    name: String,
    format: Format,
    shape: Vec<usize>,
    payload: Vec<u8>,
}

impl QuantizedTensor {
    /// Validates that the payload length matches the format's accounting.
    pub fn new(
        name: impl Into<String>,
        format: Format,
        shape: Vec<usize>,
        payload: Vec<u8>,
    ) -> Result<Self> {
        let name = name.into();
        let expected = Self::check_shape(&name, format, &shape)?;
        if payload.len() != expected {
            return Err(Error::PayloadLength {
                format,
                actual: payload.len(),
                expected,
            });
        }
        Ok(QuantizedTensor {
            name,
            format,
            shape,
            payload,
        })
    }

    /// Checks that `shape` can be stored in `format` and returns the payload
    /// size in bytes.
    pub fn check_shape(name: &str, format: Format, shape: &[usize]) -> Result<usize> {
        let elements = element_count(name, shape)?;
        let layout = format.layout();
        let row = *shape.last().unwrap();
        if !row.is_multiple_of(layout.block_weights) {
            return Err(Error::NotBlockAligned {
                name: name.into(),
                format,
                dim: row,
                block: layout.block_weights,
            });
        }
        Ok(elements / layout.block_weights * layout.block_bytes)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn format(&self) -> Format {
        self.format
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn into_payload(self) -> Vec<u8> {
        self.payload
    }

    pub fn elements(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn row_len(&self) -> usize {
        *self.shape.last().unwrap()
    }

    pub fn rows(&self) -> usize {
        self.elements() / self.row_len()
    }

    /// Packed bytes of one row.
    pub fn row_bytes(&self) -> usize {
        self.row_len() / self.format.block_weights() * self.format.block_bytes()
    }
}
