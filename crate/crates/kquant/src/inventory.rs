//! Tensor inventories: a plain-text listing of tensor names and shapes.
//!
//! One tensor per line, `name dim0 dim1 ...` with the last dimension
//! contiguous. Blank lines and lines starting with `#` are ignored.

use std::fmt::Write;

use kquant_core::{Inventory, TensorSpec};

/// Llama-3.1-8B tensor inventory.
pub const LLAMA_3_1_8B: &str = include_str!("../data/llama-3.1-8b.inventory");

#[derive(Debug, thiserror::Error)]
pub enum InventoryError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error(transparent)]
    Core(#[from] kquant_core::Error),
}

pub fn parse_inventory(text: &str) -> Result<Inventory, InventoryError> {
    let mut specs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| InventoryError::Line { line: i + 1, message };
        let mut parts = line.split_whitespace();
        let name = parts.next().unwrap();
        let shape = parts
            .map(|d| d.parse::<usize>().map_err(|_| err(format!("bad dimension `{d}`"))))
            .collect::<Result<Vec<_>, _>>()?;
        if shape.is_empty() {
            return Err(err(format!("`{name}` has no dimensions")));
        }
        if specs.iter().any(|s: &TensorSpec| s.name == name) {
            return Err(err(format!("`{name}` listed twice")));
        }
        specs.push(TensorSpec::from_name(name, shape).map_err(|e| err(e.to_string()))?);
    }
    Ok(Inventory::new(specs)?)
}

pub fn llama_3_1_8b() -> Inventory {
    parse_inventory(LLAMA_3_1_8B).expect("shipped inventory parses")
}

/// Renders an inventory in the text format read by [`parse_inventory`].
pub fn format_inventory(inv: &Inventory) -> String {
    let mut out = String::new();
    for t in inv.tensors() {
        out.push_str(&t.name);
        for d in &t.shape {
            let _ = write!(out, " {d}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_inventory() {
        let inv = llama_3_1_8b();
        assert_eq!(inv.tensors().len(), 292);
        assert_eq!(inv.n_layers(), 32);
        assert_eq!(inv.elements(), 8_030_261_312);
        assert_eq!(parse_inventory(&format_inventory(&inv)).unwrap(), inv);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse_inventory("# c\n\nblk.0.ffn_up.weight 4 x\n").unwrap_err();
        assert!(matches!(e, InventoryError::Line { line: 3, .. }), "{e}");
        let e = parse_inventory("output.weight 4\noutput.weight 4\n").unwrap_err();
        assert!(matches!(e, InventoryError::Line { line: 2, .. }), "{e}");
        let e = parse_inventory("mystery.weight 4\n").unwrap_err();
        assert!(matches!(e, InventoryError::Line { line: 1, .. }), "{e}");
    }
}
