use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::doorworld::{feat_bounds, joint_bounds, DoorType, Observation, FEAT_DIM, JOINT_DIM};
use crate::error::{Error, Result};
use crate::shlstm::Frame;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATASET_VERSION: u32 = 1;

/// A normalized trajectory: `frames[t]` is `[joint, feat]` in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: String,
    pub door_type: DoorType,
    pub frames: Vec<Frame>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityBounds {
    pub name: String,
    pub dim: usize,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEntry {
    pub id: String,
    pub file: String,
    pub door_type: DoorType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub modalities: Vec<ModalityBounds>,
    pub trajectories: Vec<TrajectoryEntry>,
}

/// Per-dimension affine map between raw values and `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub modalities: Vec<ModalityBounds>,
}

impl Default for Normalizer {
    fn default() -> Self {
        let split = |b: &[(f64, f64)]| (b.iter().map(|p| p.0).collect(), b.iter().map(|p| p.1).collect());
        let (jmin, jmax) = split(&joint_bounds());
        let (fmin, fmax) = split(&feat_bounds());
        Normalizer {
            modalities: vec![
                ModalityBounds { name: "joint".into(), dim: JOINT_DIM, min: jmin, max: jmax },
                ModalityBounds { name: "feat".into(), dim: FEAT_DIM, min: fmin, max: fmax },
            ],
        }
    }
}

impl Normalizer {
    pub fn validate(&self) -> Result<()> {
        for m in &self.modalities {
            if m.min.len() != m.dim || m.max.len() != m.dim {
                return Err(Error::Dataset(format!("bounds of {} do not have {} entries", m.name, m.dim)));
            }
            if m.min.iter().zip(&m.max).any(|(a, b)| !(a < b)) {
                return Err(Error::Dataset(format!("bounds of {} need min < max in every dimension", m.name)));
            }
        }
        Ok(())
    }

    pub fn normalize(&self, modality: usize, raw: &[f64]) -> Vec<f64> {
        let b = &self.modalities[modality];
        raw.iter().enumerate().map(|(i, v)| 2.0 * (v - b.min[i]) / (b.max[i] - b.min[i]) - 1.0).collect()
    }

    pub fn denormalize(&self, modality: usize, x: &[f64]) -> Vec<f64> {
        let b = &self.modalities[modality];
        x.iter().enumerate().map(|(i, v)| b.min[i] + (v + 1.0) * 0.5 * (b.max[i] - b.min[i])).collect()
    }

    pub fn frame(&self, obs: &Observation) -> Frame {
        vec![self.normalize(0, &obs.joint), self.normalize(1, &obs.feat)]
    }

    fn in_bounds(&self, modality: usize, raw: &[f64]) -> Option<usize> {
        let b = &self.modalities[modality];
        raw.iter().enumerate().position(|(i, v)| !(b.min[i] <= *v && *v <= b.max[i]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub normalizer: Normalizer,
    pub trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn count(&self, door: DoorType) -> usize {
        self.trajectories.iter().filter(|t| t.door_type == door).count()
    }
}

fn csv_header(n: &Normalizer) -> String {
    let mut cols = vec!["t".to_string()];
    for m in &n.modalities {
        cols.extend((0..m.dim).map(|i| format!("{}{i}", m.name)));
    }
    cols.join(",")
}

/// Writes `manifest.json` and one raw-valued CSV per trajectory.
pub fn save_dataset(dir: &Path, dataset: &Dataset) -> Result<()> {
    dataset.normalizer.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let header = csv_header(&dataset.normalizer);
    let mut entries = Vec::with_capacity(dataset.trajectories.len());
    for traj in &dataset.trajectories {
        let file = format!("{}.csv", traj.id);
        let mut out = String::with_capacity(traj.len() * 200);
        out.push_str(&header);
        out.push('\n');
        for (t, frame) in traj.frames.iter().enumerate() {
            out.push_str(&t.to_string());
            for (m, x) in frame.iter().enumerate() {
                for v in dataset.normalizer.denormalize(m, x) {
                    out.push(',');
                    out.push_str(&v.to_string());
                }
            }
            out.push('\n');
        }
        let path = dir.join(&file);
        fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
        entries.push(TrajectoryEntry { id: traj.id.clone(), file, door_type: traj.door_type });
    }
    let manifest = Manifest { version: DATASET_VERSION, modalities: dataset.normalizer.modalities.clone(), trajectories: entries };
    let path = dir.join(MANIFEST_FILE);
    let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    f.write_all(text.as_bytes()).and_then(|_| f.write_all(b"\n")).map_err(|e| Error::io(&path, e))?;
    Ok(())
}

/// Loads a dataset directory, rescaling raw values into `[-1, 1]`.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(Error::Dataset(format!("no manifest: {} not found", manifest_path.display())));
    }
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        file: manifest_path.clone(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    if manifest.version != DATASET_VERSION {
        return Err(Error::Dataset(format!("manifest version {} (supported: {DATASET_VERSION})", manifest.version)));
    }
    let normalizer = Normalizer { modalities: manifest.modalities };
    normalizer.validate()?;
    let header = csv_header(&normalizer);
    let dims: Vec<usize> = normalizer.modalities.iter().map(|m| m.dim).collect();
    let width = 1 + dims.iter().sum::<usize>();

    let mut trajectories = Vec::with_capacity(manifest.trajectories.len());
    for entry in &manifest.trajectories {
        let path = dir.join(&entry.file);
        let file = path.clone();
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == header => {}
            _ => return Err(Error::Parse { file, line: 1, msg: format!("expected header {header:?}") }),
        }
        let mut frames = Vec::new();
        for (i, line) in lines {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != width {
                return Err(Error::Parse { file, line: line_no, msg: format!("{} fields, expected {width}", fields.len()) });
            }
            let mut values = Vec::with_capacity(width - 1);
            for f in &fields[1..] {
                let v: f64 = f.trim().parse().map_err(|_| Error::Parse { file: file.clone(), line: line_no, msg: format!("not a number: {f:?}") })?;
                values.push(v);
            }
            let mut frame = Vec::with_capacity(dims.len());
            let mut at = 0;
            for (m, &d) in dims.iter().enumerate() {
                let raw = &values[at..at + d];
                if let Some(k) = normalizer.in_bounds(m, raw) {
                    let b = &normalizer.modalities[m];
                    return Err(Error::Parse {
                        file,
                        line: line_no,
                        msg: format!("{}{k} = {} outside [{}, {}]", b.name, raw[k], b.min[k], b.max[k]),
                    });
                }
                frame.push(normalizer.normalize(m, raw));
                at += d;
            }
            frames.push(frame);
        }
        if frames.len() < 2 {
            return Err(Error::Dataset(format!("{}: trajectory needs at least 2 rows, found {}", file.display(), frames.len())));
        }
        trajectories.push(Trajectory { id: entry.id.clone(), door_type: entry.door_type, frames });
    }
    if trajectories.is_empty() {
        return Err(Error::Dataset(format!("{} lists no trajectories", manifest_path.display())));
    }
    Ok(Dataset { normalizer, trajectories })
}
