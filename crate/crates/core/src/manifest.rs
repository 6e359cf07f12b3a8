//! Line-oriented JSON dataset manifests and lossless frame files.
//!
//! Each manifest line is one object:
//!
//! ```json
//! {"subject_id":"007","sequence_id":"nm-01","role":"gallery","frames":["007/nm-01/000.png"],"mask":[0]}
//! ```
//!
//! Frame paths are relative to the manifest's directory. `mask` is optional;
//! `1` marks an occluded frame.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::silhouette::{validate_binary, SilhouetteFrame, SilhouetteSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Gallery,
    Probe,
    DetectorTrain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub subject_id: String,
    pub sequence_id: String,
    pub role: Role,
    pub frames: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    /// Directory that frame paths are resolved against.
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (i, e) in entries.iter().enumerate() {
            if !seen.insert((e.subject_id.as_str(), e.sequence_id.as_str())) {
                return Err(Error::Manifest {
                    line: i + 1,
                    reason: format!("duplicate entry ({}, {})", e.subject_id, e.sequence_id),
                });
            }
            if let Some(m) = &e.mask {
                if m.len() != e.frames.len() || m.iter().any(|&v| v > 1) {
                    return Err(Error::Manifest {
                        line: i + 1,
                        reason: "mask must hold one 0/1 value per frame".into(),
                    });
                }
            }
        }
        Ok(Self {
            entries,
            base_dir: base_dir.into(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|_| Error::MissingFile(path.to_path_buf()))?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ManifestEntry = serde_json::from_str(&line).map_err(|e| Error::Manifest {
                line: i + 1,
                reason: e.to_string(),
            })?;
            entries.push(entry);
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::new(entries, base)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = fs::File::create(path)?;
        for e in &self.entries {
            writeln!(out, "{}", serde_json::to_string(e)?)?;
        }
        Ok(())
    }

    pub fn with_role(&self, role: Role) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.role == role).collect()
    }

    /// Loads every entry of `role`; `normalize` resizes frames to the
    /// given `(height, width)`.
    pub fn load_role(&self, role: Role, normalize: Option<(usize, usize)>) -> Result<Vec<SilhouetteSequence>> {
        self.with_role(role)
            .into_iter()
            .map(|e| load_sequence(e, &self.base_dir, normalize))
            .collect()
    }
}

/// Reads a frame file; gray levels are scaled to `[0, 1]` and snapped to
/// binary at 0.5.
pub fn load_frame(path: &Path) -> Result<SilhouetteFrame> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let img = image::open(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let gray = img.to_luma8();
    let (w, h) = gray.dimensions();
    let pixels = gray.pixels().map(|p| f32::from(p.0[0]) / 255.0).collect();
    let frame = SilhouetteFrame::new(h as usize, w as usize, pixels)?;
    Ok(validate_binary(&frame, 0.0).0)
}

/// Writes a frame as an 8-bit grayscale PNG (foreground 255).
pub fn save_frame(frame: &SilhouetteFrame, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let img = GrayImage::from_fn(frame.width() as u32, frame.height() as u32, |x, y| {
        Luma([if frame.get(y as usize, x as usize) >= 0.5 { 255 } else { 0 }])
    });
    img.save(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn load_sequence(
    entry: &ManifestEntry,
    base_dir: &Path,
    normalize: Option<(usize, usize)>,
) -> Result<SilhouetteSequence> {
    let frames = entry
        .frames
        .iter()
        .map(|rel| {
            let f = load_frame(&base_dir.join(rel))?;
            match normalize {
                Some(t) => crate::silhouette::normalize_frame(&f, t),
                None => Ok(f),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let seq = SilhouetteSequence::new(frames, entry.subject_id.clone(), entry.sequence_id.clone())?;
    match &entry.mask {
        Some(m) => seq.with_mask(m.iter().map(|&v| v == 1).collect()),
        None => Ok(seq),
    }
}

/// Writes the frames of `seq` under `base_dir/<subject>/<sequence>/NNN.png`
/// and returns the matching manifest entry.
pub fn save_sequence(seq: &SilhouetteSequence, base_dir: &Path, role: Role) -> Result<ManifestEntry> {
    let rel_dir = PathBuf::from(&seq.subject_id).join(&seq.sequence_id);
    let mut frames = Vec::with_capacity(seq.len());
    for (i, f) in seq.frames().iter().enumerate() {
        let rel = rel_dir.join(format!("{i:03}.png"));
        save_frame(f, &base_dir.join(&rel))?;
        frames.push(rel.to_string_lossy().replace('\\', "/"));
    }
    Ok(ManifestEntry {
        subject_id: seq.subject_id.clone(),
        sequence_id: seq.sequence_id.clone(),
        role,
        frames,
        mask: seq.mask().map(|m| m.iter().map(|&b| u8::from(b)).collect()),
    })
}

/// One line of a mask sidecar file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskRecord {
    pub subject_id: String,
    pub sequence_id: String,
    pub mask: Vec<u8>,
}

pub fn save_masks(records: &[MaskRecord], path: &Path) -> Result<()> {
    let mut out = fs::File::create(path)?;
    for r in records {
        writeln!(out, "{}", serde_json::to_string(r)?)?;
    }
    Ok(())
}

pub fn load_masks(path: &Path) -> Result<Vec<MaskRecord>> {
    let text = fs::read_to_string(path).map_err(|_| Error::MissingFile(path.to_path_buf()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Manifest {
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}
