//! Dataset bundles: `manifest.json` plus one raw little-endian f64 file per
//! block (row-major `n_space × n_time`, no header).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_f64, read_json, read_matrix, write_dir_atomic, write_f64, write_json, write_matrix};

use super::dataset::{Dataset, Split, VariableBlock, VariableKind};
use super::normalize::NormStats;

pub const DATASET_FORMAT_VERSION: u32 = 1;
const WEIGHTS_FILE: &str = "element_weights.bin";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockEntry {
    pub name: String,
    pub kind: VariableKind,
    pub rows: usize,
    pub cols: usize,
    pub units: String,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub dt_seconds: f64,
    pub split: Split,
    pub blocks: Vec<BlockEntry>,
    pub weights_file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_stats: Option<NormStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<serde_json::Value>,
    /// Free-form extras such as rollout timing records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra: Option<serde_json::Value>,
}

fn block_file(name: &str) -> Result<String> {
    let ok = !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
        && !name.starts_with('.');
    if !ok {
        return Err(Error::InvalidParam(format!("block name `{name}` is not file-safe")));
    }
    Ok(format!("{name}.bin"))
}

pub fn save_dataset(
    d: &Dataset,
    dir: &Path,
    force: bool,
    norm_stats: Option<&NormStats>,
    extra: Option<serde_json::Value>,
) -> Result<()> {
    d.validate()?;
    let mut entries = Vec::new();
    for b in &d.blocks {
        entries.push(BlockEntry {
            name: b.name.clone(),
            kind: b.kind,
            rows: b.values.rows(),
            cols: b.values.cols(),
            units: b.units.clone(),
            file: block_file(&b.name)?,
        });
    }
    let manifest = DatasetManifest {
        format_version: DATASET_FORMAT_VERSION,
        dt_seconds: d.dt_seconds,
        split: d.split,
        blocks: entries,
        weights_file: WEIGHTS_FILE.into(),
        norm_stats: norm_stats.cloned(),
        generator: d.generator.clone(),
        extra,
    };
    write_dir_atomic(dir, force, |tmp| {
        for (b, e) in d.blocks.iter().zip(&manifest.blocks) {
            write_matrix(&tmp.join(&e.file), &b.values)?;
        }
        write_f64(&tmp.join(WEIGHTS_FILE), &d.element_weights)?;
        write_json(&tmp.join("manifest.json"), &manifest)
    })
}

pub fn load_manifest(dir: &Path) -> Result<DatasetManifest> {
    let m: DatasetManifest = read_json(&dir.join("manifest.json"))?;
    if m.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::config(
            "manifest.format_version",
            format!("unsupported version {}", m.format_version),
        ));
    }
    Ok(m)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let m = load_manifest(dir)?;
    let mut blocks = Vec::with_capacity(m.blocks.len());
    for e in &m.blocks {
        let values = read_matrix(&dir.join(&e.file), e.rows, e.cols)?;
        blocks.push(VariableBlock::new(e.name.clone(), e.kind, values, e.units.clone()));
    }
    let n_state = blocks
        .iter()
        .find(|b| b.kind == VariableKind::State)
        .map_or(0, |b| b.n_space());
    let element_weights = read_f64(&dir.join(&m.weights_file), n_state)?;
    let d = Dataset {
        blocks,
        dt_seconds: m.dt_seconds,
        element_weights,
        split: m.split,
        generator: m.generator,
    };
    d.validate()
        .map_err(|e| Error::config(dir.join("manifest.json").display().to_string(), e.to_string()))?;
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_linear_forced, LinearSpec};

    #[test]
    fn bit_exact_round_trip() {
        let (d, _) = gen_linear_forced(&LinearSpec::default(), 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("ds");
        save_dataset(&d, &out, false, None, None).unwrap();
        let back = load_dataset(&out).unwrap();
        assert_eq!(back, d);
        for (a, b) in d.blocks.iter().zip(&back.blocks) {
            let same = a
                .values
                .as_slice()
                .iter()
                .zip(b.values.as_slice())
                .all(|(x, y)| x.to_bits() == y.to_bits());
            assert!(same);
        }
    }

    #[test]
    fn unsafe_block_names_rejected() {
        assert!(block_file("../x").is_err());
        assert!(block_file("S").is_ok());
    }
}
