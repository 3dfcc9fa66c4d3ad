use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dataset::{ModalityBounds, Normalizer};
use super::TrainingConfig;
use crate::error::{Error, Result};
use crate::numkernel::{AdamState, ParamArray, ParamSet};
use crate::shlstm::{ModelConfig, ModelParams};

pub const CHECKPOINT_VERSION: u32 = 1;
const SECTIONS: [&str; 3] = ["params", "adam_m", "adam_v"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    dtype: String,
    data_file: String,
    epoch: usize,
    model: ModelConfig,
    training: Option<TrainingConfig>,
    normalization: Option<Vec<ModalityBounds>>,
    adam_step: Option<u64>,
    sections: Vec<String>,
    arrays: Vec<ArrayEntry>,
}

/// Everything needed to resume training or run a trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub epoch: usize,
    pub params: ModelParams,
    pub adam: Option<AdamState>,
    pub training: Option<TrainingConfig>,
    pub normalizer: Option<Normalizer>,
}

fn ckpt_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Checkpoint { path: path.to_path_buf(), msg: msg.into() }
}

/// Header and data file paths for a checkpoint base path (extension ignored).
pub fn checkpoint_paths(path: &Path) -> (PathBuf, PathBuf) {
    (path.with_extension("json"), path.with_extension("bin"))
}

fn push_f32(out: &mut Vec<u8>, set: &ParamSet) {
    for a in &set.arrays {
        for &v in &a.values {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
}

/// Writes `<path>.json` and `<path>.bin`. Values are stored as little-endian
/// f32, so a loaded checkpoint saves back to identical bytes.
pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let (header_path, data_path) = checkpoint_paths(path);
    let data_file = data_path.file_name().and_then(|n| n.to_str()).ok_or_else(|| ckpt_err(path, "path has no file name"))?.to_string();
    let n_sections = if ckpt.adam.is_some() { 3 } else { 1 };
    let header = Header {
        format_version: CHECKPOINT_VERSION,
        dtype: "f32".into(),
        data_file,
        epoch: ckpt.epoch,
        model: ckpt.params.config.clone(),
        training: ckpt.training.clone(),
        normalization: ckpt.normalizer.as_ref().map(|n| n.modalities.clone()),
        adam_step: ckpt.adam.as_ref().map(|a| a.step),
        sections: SECTIONS[..n_sections].iter().map(|s| s.to_string()).collect(),
        arrays: ckpt.params.set.arrays.iter().map(|a| ArrayEntry { name: a.name.clone(), shape: a.shape.clone() }).collect(),
    };
    let mut bytes = Vec::with_capacity(4 * n_sections * ckpt.params.set.num_values());
    push_f32(&mut bytes, &ckpt.params.set);
    if let Some(adam) = &ckpt.adam {
        push_f32(&mut bytes, &adam.m);
        push_f32(&mut bytes, &adam.v);
    }
    if let Some(dir) = header_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(&data_path, &bytes).map_err(|e| Error::io(&data_path, e))?;
    let mut text = serde_json::to_string_pretty(&header).expect("header serializes");
    text.push('\n');
    fs::write(&header_path, text).map_err(|e| Error::io(&header_path, e))?;
    Ok(())
}

fn read_set(entries: &[ArrayEntry], bytes: &[u8], at: &mut usize) -> Result<ParamSet> {
    let mut arrays = Vec::with_capacity(entries.len());
    for e in entries {
        let n: usize = e.shape.iter().product();
        let values = bytes[*at..*at + 4 * n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        *at += 4 * n;
        arrays.push(ParamArray::new(e.name.clone(), e.shape.clone(), values)?);
    }
    ParamSet::new(arrays)
}

/// Loads a checkpoint, using the model configuration stored in its header.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let (header_path, _) = checkpoint_paths(path);
    let text = fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?;
    let header: Header = serde_json::from_str(&text).map_err(|e| ckpt_err(&header_path, format!("bad header: {e}")))?;
    if header.format_version != CHECKPOINT_VERSION {
        return Err(ckpt_err(&header_path, format!("format version {} (supported: {CHECKPOINT_VERSION})", header.format_version)));
    }
    if header.dtype != "f32" {
        return Err(ckpt_err(&header_path, format!("dtype {:?} (supported: \"f32\")", header.dtype)));
    }
    let n_sections = header.sections.len();
    if !(n_sections == 1 || n_sections == 3) || header.sections.iter().zip(SECTIONS).any(|(a, b)| a != b) {
        return Err(ckpt_err(&header_path, format!("unexpected sections {:?}", header.sections)));
    }
    let data_path = header_path.with_file_name(&header.data_file);
    let bytes = fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
    let per_section: usize = header.arrays.iter().map(|a| a.shape.iter().product::<usize>()).sum();
    let expected = 4 * per_section * n_sections;
    if bytes.len() != expected {
        return Err(ckpt_err(&data_path, format!("expected {expected} bytes, found {}", bytes.len())));
    }

    let mut at = 0;
    let set = read_set(&header.arrays, &bytes, &mut at)?;
    let params = ModelParams::from_set(&header.model, set).map_err(|e| ckpt_err(&header_path, e.to_string()))?;
    let adam = if n_sections == 3 {
        let m = read_set(&header.arrays, &bytes, &mut at)?;
        let v = read_set(&header.arrays, &bytes, &mut at)?;
        Some(AdamState { m, v, step: header.adam_step.unwrap_or(0) })
    } else {
        None
    };
    Ok(Checkpoint {
        epoch: header.epoch,
        params,
        adam,
        training: header.training,
        normalizer: header.normalization.map(|modalities| Normalizer { modalities }),
    })
}

/// Loads a checkpoint that must fit `expected`; a layout difference is
/// reported array by array.
pub fn load_checkpoint_for(path: &Path, expected: &ModelConfig) -> Result<Checkpoint> {
    let ckpt = load_checkpoint(path)?;
    let want = ModelParams::zeros(expected)?;
    let bad = want.set.layout_mismatches(&ckpt.params.set);
    if !bad.is_empty() {
        return Err(ckpt_err(path, format!("does not match the configured model: {}", bad.join(", "))));
    }
    Ok(Checkpoint { params: ModelParams::from_set(expected, ckpt.params.set.clone())?, ..ckpt })
}
