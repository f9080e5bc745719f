// SPDX-License-Identifier: MIT OR Apache-2.0

//! Named tensor containers: safetensors files and the raw manifest format.
//!
//! The manifest format is a JSON document next to one little-endian blob:
//!
//! ```json
//! {
//!   "format": "tokentrail-raw-v1",
//!   "blob": "weights.bin",
//!   "metadata": { "n_head": "12" },
//!   "tensors": [
//!     { "name": "wte.weight", "dtype": "F32", "shape": [50257, 768], "offset": 0 }
//!   ]
//! }
//! ```
//!
//! `blob` is resolved relative to the manifest; `offset` is in bytes and the
//! byte length follows from shape and dtype.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use safetensors::{Dtype, SafeTensors};
use serde::{Deserialize, Serialize};

pub const MANIFEST_FORMAT: &str = "tokentrail-raw-v1";

#[derive(Debug, thiserror::Error)]
pub enum TensorFileError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("tensor {name}: unsupported dtype {dtype}")]
    Dtype { name: String, dtype: String },
}

/// A dense tensor decoded to `f32`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// Tensors by name plus free-form string metadata.
#[derive(Debug, Default, Clone)]
pub struct TensorSet {
    pub tensors: HashMap<String, RawTensor>,
    pub metadata: HashMap<String, String>,
}

impl TensorSet {
    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) {
        self.tensors.insert(name.into(), RawTensor { shape, data });
    }

    pub fn take(&mut self, name: &str) -> Option<RawTensor> {
        self.tensors.remove(name)
    }

    pub fn shape(&self, name: &str) -> Option<&[usize]> {
        self.tensors.get(name).map(|t| t.shape.as_slice())
    }

    /// Loads a safetensors file, or a raw manifest when the path ends in
    /// `.json`.
    pub fn load(path: &Path) -> Result<Self, TensorFileError> {
        let is_manifest = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_manifest {
            Self::load_manifest(path)
        } else {
            Self::load_safetensors(path)
        }
    }

    pub fn load_safetensors(path: &Path) -> Result<Self, TensorFileError> {
        let buf = read(path)?;
        let format_err = |e: safetensors::SafeTensorError| TensorFileError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let (_, meta) = SafeTensors::read_metadata(&buf).map_err(format_err)?;
        let st = SafeTensors::deserialize(&buf).map_err(format_err)?;
        let mut set = TensorSet {
            metadata: meta.metadata().clone().unwrap_or_default(),
            ..Default::default()
        };
        for (name, view) in st.tensors() {
            let data = decode(&name, view.dtype(), view.data())?;
            set.insert(name, view.shape().to_vec(), data);
        }
        Ok(set)
    }

    pub fn load_manifest(path: &Path) -> Result<Self, TensorFileError> {
        let text = read(path)?;
        let format_err = |message: String| TensorFileError::Format {
            path: path.to_path_buf(),
            message,
        };
        let manifest: Manifest =
            serde_json::from_slice(&text).map_err(|e| format_err(e.to_string()))?;
        if manifest.format != MANIFEST_FORMAT {
            return Err(format_err(format!(
                "unknown manifest format {:?}, expected {MANIFEST_FORMAT:?}",
                manifest.format
            )));
        }
        let blob_path = path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&manifest.blob);
        let blob = read(&blob_path)?;
        let mut set = TensorSet {
            metadata: manifest.metadata,
            ..Default::default()
        };
        for entry in manifest.tensors {
            let dtype = parse_dtype(&entry.dtype).ok_or_else(|| TensorFileError::Dtype {
                name: entry.name.clone(),
                dtype: entry.dtype.clone(),
            })?;
            let count: usize = entry.shape.iter().product();
            let len = count * dtype.size();
            let end = entry.offset.checked_add(len).filter(|&e| e <= blob.len()).ok_or_else(|| {
                format_err(format!(
                    "tensor {} spans bytes {}..{} past the blob end ({} bytes)",
                    entry.name,
                    entry.offset,
                    entry.offset.saturating_add(len),
                    blob.len()
                ))
            })?;
            let data = decode(&entry.name, dtype, &blob[entry.offset..end])?;
            set.insert(entry.name, entry.shape, data);
        }
        Ok(set)
    }

    /// Writes the set as a safetensors file with `F32` tensors.
    pub fn save_safetensors(&self, path: &Path) -> Result<(), TensorFileError> {
        let mut names: Vec<&String> = self.tensors.keys().collect();
        names.sort();
        let bytes: Vec<(String, Vec<usize>, Vec<u8>)> = names
            .into_iter()
            .map(|n| {
                let t = &self.tensors[n];
                (n.clone(), t.shape.clone(), f32_le_bytes(&t.data))
            })
            .collect();
        write_safetensors(path, &bytes, &self.metadata)
    }

    /// Writes the set in the raw manifest format: `path` is the manifest,
    /// the blob is written beside it.
    pub fn save_manifest(&self, path: &Path, blob_name: &str) -> Result<(), TensorFileError> {
        let mut names: Vec<&String> = self.tensors.keys().collect();
        names.sort();
        let mut blob = Vec::new();
        let mut entries = Vec::new();
        for name in names {
            let t = &self.tensors[name];
            entries.push(ManifestEntry {
                name: name.clone(),
                dtype: "F32".to_string(),
                shape: t.shape.clone(),
                offset: blob.len(),
            });
            blob.extend_from_slice(&f32_le_bytes(&t.data));
        }
        let manifest = Manifest {
            format: MANIFEST_FORMAT.to_string(),
            blob: blob_name.to_string(),
            metadata: self.metadata.clone(),
            tensors: entries,
        };
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        write(&dir.join(blob_name), &blob)?;
        let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        write(path, &json)
    }
}

/// Writes pre-encoded little-endian `F32` tensors as safetensors.
pub fn write_safetensors(
    path: &Path,
    tensors: &[(String, Vec<usize>, Vec<u8>)],
    metadata: &HashMap<String, String>,
) -> Result<(), TensorFileError> {
    let views: Vec<(&str, safetensors::tensor::TensorView<'_>)> = tensors
        .iter()
        .map(|(name, shape, data)| {
            safetensors::tensor::TensorView::new(Dtype::F32, shape.clone(), data)
                .map(|v| (name.as_str(), v))
                .map_err(|e| TensorFileError::Format {
                    path: path.to_path_buf(),
                    message: format!("tensor {name}: {e}"),
                })
        })
        .collect::<Result<_, _>>()?;
    let info = (!metadata.is_empty()).then(|| metadata.clone());
    safetensors::serialize_to_file(views, &info, path).map_err(|e| TensorFileError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn f32_le_bytes(data: &[f32]) -> Vec<u8> {
    data.iter().flat_map(|v| v.to_le_bytes()).collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    blob: String,
    #[serde(default)]
    metadata: HashMap<String, String>,
    tensors: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    offset: usize,
}

fn parse_dtype(s: &str) -> Option<Dtype> {
    Some(match s.to_ascii_uppercase().as_str() {
        "F32" => Dtype::F32,
        "F16" => Dtype::F16,
        "BF16" => Dtype::BF16,
        "F64" => Dtype::F64,
        _ => return None,
    })
}

fn decode(name: &str, dtype: Dtype, bytes: &[u8]) -> Result<Vec<f32>, TensorFileError> {
    Ok(match dtype {
        Dtype::F32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
        Dtype::F16 => bytes
            .chunks_exact(2)
            .map(|c| half::f16::from_le_bytes([c[0], c[1]]).to_f32())
            .collect(),
        Dtype::BF16 => bytes
            .chunks_exact(2)
            .map(|c| half::bf16::from_le_bytes([c[0], c[1]]).to_f32())
            .collect(),
        Dtype::F64 => bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")) as f32)
            .collect(),
        other => {
            return Err(TensorFileError::Dtype {
                name: name.to_string(),
                dtype: format!("{other:?}"),
            })
        }
    })
}

fn read(path: &Path) -> Result<Vec<u8>, TensorFileError> {
    std::fs::read(path).map_err(|source| TensorFileError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), TensorFileError> {
    std::fs::write(path, bytes).map_err(|source| TensorFileError::Io {
        path: path.to_path_buf(),
        source,
    })
}
