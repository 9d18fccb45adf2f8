//! Mix override files: TOML tables keyed by scheme id.
//!
//! ```toml
//! [Q3_K_M]
//! base = "Q3_K"
//! rules = [
//!     { role = "attn_v", select = "first:2", format = "Q5_K" },
//!     { role = "ffn_down", format = "Q4_K" },
//! ]
//! ```
//!
//! Schemes named in the file replace the built-in mix entirely; other schemes
//! keep theirs.

use std::collections::BTreeMap;
use std::path::Path;

use kquant_core::{MixTable, QuantScheme, SchemeMix};

#[derive(Debug, thiserror::Error)]
pub enum MixFileError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("mix file: {0}")]
    Parse(#[from] toml::de::Error),
}

pub fn parse_mix_overrides(text: &str) -> Result<BTreeMap<QuantScheme, SchemeMix>, MixFileError> {
    Ok(toml::from_str(text)?)
}

/// The default table with the overrides from `text` applied.
pub fn mix_table_from_str(text: &str) -> Result<MixTable, MixFileError> {
    let mut table = MixTable::default();
    for (scheme, mix) in parse_mix_overrides(text)? {
        table.set(scheme, mix);
    }
    Ok(table)
}

pub fn load_mix_table(path: &Path) -> Result<MixTable, MixFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| MixFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    mix_table_from_str(&text)
}

/// Renders a whole table in the override format.
pub fn render_mix_table(table: &MixTable) -> String {
    let map: BTreeMap<QuantScheme, &SchemeMix> = table.iter().collect();
    toml::to_string(&map).expect("mix tables serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use kquant_core::{Format, TensorRole};

    #[test]
    fn override_one_scheme() {
        let t = mix_table_from_str(
            r#"
            [Q3_K_M]
            base = "Q3_K"
            rules = [{ role = "ffn_down", format = "Q6_K" }]
            "#,
        )
        .unwrap();
        assert_eq!(t.resolve(QuantScheme::Q3_K_M, TensorRole::FfnDown, Some(9), 32), Format::Q6_K);
        assert_eq!(t.resolve(QuantScheme::Q3_K_M, TensorRole::AttnV, Some(0), 32), Format::Q3_K);
        assert_eq!(t.get(QuantScheme::Q4_K_M), MixTable::default().get(QuantScheme::Q4_K_M));
    }

    #[test]
    fn default_table_round_trips() {
        let text = render_mix_table(&MixTable::default());
        assert_eq!(mix_table_from_str(&text).unwrap(), MixTable::default());
    }

    #[test]
    fn bad_entries_rejected() {
        assert!(mix_table_from_str("[Q9_X]\nbase = \"Q4_0\"\n").is_err());
        assert!(mix_table_from_str("[Q4_0]\nbase = \"Q4_0\"\nrules = [{ role = \"mlp\", format = \"Q4_0\" }]\n").is_err());
        assert!(mix_table_from_str("[Q4_0]\nbase = \"Q4_0\"\nrules = [{ role = \"attn_v\", select = \"last:2\", format = \"Q4_0\" }]\n").is_err());
    }
}
