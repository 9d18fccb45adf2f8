//! Model size and bits-per-weight accounting over a tensor inventory.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::format::Format;
use crate::mix::{MixTable, TensorRole};
use crate::scheme::QuantScheme;
use crate::tensor::element_count;

pub const MIB: f64 = 1024.0 * 1024.0;

/// One tensor of a model: name, row-major shape, role and layer index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub role: TensorRole,
    pub layer: Option<u32>,
}

impl TensorSpec {
    /// Role and layer derived from the tensor name.
    pub fn from_name(name: impl Into<String>, shape: Vec<usize>) -> Result<Self> {
        let name = name.into();
        let (role, layer) = TensorRole::from_tensor_name(&name)?;
        Ok(TensorSpec {
            name,
            shape,
            role,
            layer,
        })
    }

    pub fn elements(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn row_len(&self) -> usize {
        self.shape.last().copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Inventory {
    tensors: Vec<TensorSpec>,
    n_layers: u32,
}

impl Inventory {
    /// `n_layers` is one past the highest layer index found.
    pub fn new(tensors: Vec<TensorSpec>) -> Result<Self> {
        for t in &tensors {
            element_count(&t.name, &t.shape)?;
        }
        let n_layers = tensors
            .iter()
            .filter_map(|t| t.layer)
            .max()
            .map_or(0, |l| l + 1);
        Ok(Inventory { tensors, n_layers })
    }

    pub fn tensors(&self) -> &[TensorSpec] {
        &self.tensors
    }

    pub fn n_layers(&self) -> u32 {
        self.n_layers
    }

    pub fn elements(&self) -> u64 {
        self.tensors.iter().map(|t| t.elements() as u64).sum()
    }

    /// Elements of quantizable (non-norm) tensors.
    pub fn weight_elements(&self) -> u64 {
        self.tensors
            .iter()
            .filter(|t| t.role.is_quantizable())
            .map(|t| t.elements() as u64)
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }
}

/// Format the mix table selects for one tensor.
pub fn tensor_format(
    mix: &MixTable,
    scheme: QuantScheme,
    spec: &TensorSpec,
    n_layers: u32,
) -> Format {
    mix.resolve(scheme, spec.role, spec.layer, n_layers)
}

/// Packed payload size of one tensor, rejecting shapes that do not divide
/// into whole blocks along the contiguous dimension.
pub fn tensor_payload_bytes(spec: &TensorSpec, format: Format) -> Result<u64> {
    let layout = format.layout();
    let row = spec.row_len();
    if !row.is_multiple_of(layout.block_weights) {
        return Err(Error::NotBlockAligned {
            name: spec.name.clone(),
            format,
            dim: row,
            block: layout.block_weights,
        });
    }
    Ok((spec.elements() / layout.block_weights * layout.block_bytes) as u64)
}

/// Container bytes on top of tensor payloads.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ContainerOverhead {
    pub per_tensor_bytes: u64,
    pub fixed_bytes: u64,
}

impl ContainerOverhead {
    pub fn bytes(&self, tensor_count: usize) -> u64 {
        self.fixed_bytes + self.per_tensor_bytes * tensor_count as u64
    }

    /// Fixed overhead that makes the F16 prediction equal a measured size.
    /// Clamped at zero when the payload alone already reaches it.
    pub fn calibrate(inventory: &Inventory, mix: &MixTable, f16_mib: f64) -> Result<Self> {
        let payload = predict_model_size_with(inventory, QuantScheme::F16, mix, Self::default())?
            .payload_bytes;
        let target = libm::round(f16_mib * MIB) as i128;
        let fixed = (target - payload as i128).max(0) as u64;
        Ok(ContainerOverhead {
            per_tensor_bytes: 0,
            fixed_bytes: fixed,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeEstimate {
    pub payload_bytes: u64,
    pub overhead_bytes: u64,
    pub elements: u64,
}

impl SizeEstimate {
    pub fn total_bytes(&self) -> u64 {
        self.payload_bytes + self.overhead_bytes
    }

    pub fn mib(&self) -> f64 {
        self.total_bytes() as f64 / MIB
    }

    /// Payload bits per stored element (including unquantized norms).
    pub fn bits_per_weight(&self) -> f64 {
        8.0 * self.payload_bytes as f64 / self.elements as f64
    }
}

/// Predicted size with the default mix table and no container overhead.
pub fn predict_model_size(inventory: &Inventory, scheme: QuantScheme) -> Result<SizeEstimate> {
    predict_model_size_with(
        inventory,
        scheme,
        &MixTable::default(),
        ContainerOverhead::default(),
    )
}

pub fn predict_model_size_with(
    inventory: &Inventory,
    scheme: QuantScheme,
    mix: &MixTable,
    overhead: ContainerOverhead,
) -> Result<SizeEstimate> {
    if inventory.is_empty() {
        return Err(Error::EmptyInventory);
    }
    let mut payload = 0u64;
    for spec in inventory.tensors() {
        let format = tensor_format(mix, scheme, spec, inventory.n_layers());
        payload += tensor_payload_bytes(spec, format)?;
    }
    Ok(SizeEstimate {
        payload_bytes: payload,
        overhead_bytes: overhead.bytes(inventory.tensors().len()),
        elements: inventory.elements(),
    })
}

/// Element-weighted bits per weight of a scheme over an inventory.
pub fn bits_per_weight(inventory: &Inventory, scheme: QuantScheme, mix: &MixTable) -> Result<f64> {
    let est = predict_model_size_with(inventory, scheme, mix, ContainerOverhead::default())?;
    Ok(est.bits_per_weight())
}

/// Size reduction in percent: `100 * (1 - quantized / f16)`.
pub fn size_reduction(quantized_mib: f64, f16_mib: f64) -> Result<f64> {
    if !(f16_mib > 0.0) {
        return Err(Error::NonPositive("f16 size"));
    }
    if !(quantized_mib > 0.0) {
        return Err(Error::NonPositive("quantized size"));
    }
    Ok(100.0 * (1.0 - quantized_mib / f16_mib))
}
