// SPDX-License-Identifier: MIT OR Apache-2.0

//! GPT-2 inference that records the residual stream of every token at every
//! layer.

pub mod kernels;
mod lens;
mod trace;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::tensorfile::{RawTensor, TensorFileError, TensorSet};
use crate::tokenizer::TokenId;
use kernels::{Gelu, LayerNorm, Linear};

pub use lens::{LensEntry, LensMode};
pub use trace::Trace;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    File(#[from] TensorFileError),
    #[error("missing tensor {0}")]
    MissingTensor(String),
    #[error("tensor {name}: expected shape {expected:?}, found {actual:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("tensor {name}: non-finite value at element {index}")]
    NonFinite { name: String, index: usize },
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("input is empty")]
    EmptyInput,
    #[error("input of {len} tokens exceeds the context length of {limit}")]
    ContextLength { len: usize, limit: usize },
    #[error("{what} {index} out of range (must be below {bound})")]
    OutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },
}

/// Architecture sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_head: usize,
    pub vocab_size: usize,
    pub n_ctx: usize,
    pub ln_eps: f32,
    #[serde(default)]
    pub gelu: Gelu,
}

impl ModelConfig {
    pub fn gpt2_small() -> Self {
        ModelConfig {
            n_layers: 12,
            d_model: 768,
            n_heads: 12,
            d_head: 64,
            vocab_size: 50257,
            n_ctx: 1024,
            ln_eps: 1e-5,
            gelu: Gelu::Tanh,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let counts = [
            ("n_layers", self.n_layers),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("d_head", self.d_head),
            ("vocab_size", self.vocab_size),
            ("n_ctx", self.n_ctx),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::Config(format!("{name} must be positive")));
        }
        if self.n_heads * self.d_head != self.d_model {
            return Err(ModelError::Config(format!(
                "d_model {} != n_heads {} x d_head {}",
                self.d_model, self.n_heads, self.d_head
            )));
        }
        if !(self.ln_eps.is_finite() && self.ln_eps > 0.0) {
            return Err(ModelError::Config(format!("ln_eps {} must be positive", self.ln_eps)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Block {
    pub ln1: LayerNorm,
    pub attn_qkv: Linear,
    pub attn_out: Linear,
    pub ln2: LayerNorm,
    pub mlp_up: Linear,
    pub mlp_down: Linear,
}

/// All parameters, with projections in input-major orientation. The
/// unembedding is the token embedding (tied).
#[derive(Debug, Clone)]
pub struct Weights {
    /// `vocab_size x d_model`
    pub token_embedding: Vec<f32>,
    /// `n_ctx x d_model`
    pub position_embedding: Vec<f32>,
    pub blocks: Vec<Block>,
    pub ln_final: LayerNorm,
}

/// Weights plus config; immutable after load.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    weights: Weights,
    id: String,
}

/// How projection matrices are laid out in the checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Orientation {
    /// `(in, out)`, as in the published GPT-2 checkpoints.
    InputMajor,
    /// `(out, in)`, as written by `nn.Linear`.
    OutputMajor,
}

impl Model {
    /// Loads a safetensors file or raw manifest. Sizes are inferred from
    /// tensor shapes, with the head count and epsilon taken from container
    /// metadata or a sibling `config.json` when present.
    pub fn load(path: &Path, config_override: Option<ModelConfig>) -> Result<Self, ModelError> {
        let mut tensors = TensorSet::load(path)?;
        if let Some(dir) = path.parent() {
            let cfg_path = dir.join("config.json");
            if let Ok(text) = std::fs::read_to_string(&cfg_path) {
                merge_hf_config(&mut tensors, &text);
            }
        }
        let id = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "model".to_string());
        Self::from_tensors(tensors, config_override, id)
    }

    pub fn from_tensors(
        mut tensors: TensorSet,
        config_override: Option<ModelConfig>,
        id: impl Into<String>,
    ) -> Result<Self, ModelError> {
        strip_prefix(&mut tensors, "transformer.");
        let config = match config_override {
            Some(c) => c,
            None => infer_config(&tensors)?,
        };
        config.validate()?;
        let weights = build_weights(&mut tensors, &config)?;
        Ok(Model {
            config,
            weights,
            id: id.into(),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    /// Name of the loaded weights, recorded on sessions.
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub(crate) fn check_tokens(&self, ids: &[TokenId]) -> Result<(), ModelError> {
        if ids.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        if ids.len() > self.config.n_ctx {
            return Err(ModelError::ContextLength {
                len: ids.len(),
                limit: self.config.n_ctx,
            });
        }
        if let Some(bad) = ids.iter().find(|t| t.index() >= self.config.vocab_size) {
            return Err(ModelError::OutOfRange {
                what: "token id",
                index: bad.index(),
                bound: self.config.vocab_size,
            });
        }
        Ok(())
    }
}

fn merge_hf_config(tensors: &mut TensorSet, text: &str) {
    let Ok(value) = serde_json::from_str::<serde_json::Value>(text) else {
        return;
    };
    for key in ["n_head", "layer_norm_epsilon", "activation_function"] {
        if let Some(v) = value.get(key) {
            let s = match v {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            tensors.metadata.entry(key.to_string()).or_insert(s);
        }
    }
}

fn strip_prefix(tensors: &mut TensorSet, prefix: &str) {
    let renamed: Vec<String> = tensors
        .tensors
        .keys()
        .filter(|k| k.starts_with(prefix))
        .cloned()
        .collect();
    for old in renamed {
        let t = tensors.tensors.remove(&old).expect("key listed above");
        tensors.tensors.insert(old[prefix.len()..].to_string(), t);
    }
}

fn infer_config(tensors: &TensorSet) -> Result<ModelConfig, ModelError> {
    let wte = tensors
        .shape("wte.weight")
        .ok_or_else(|| ModelError::MissingTensor("wte.weight".into()))?;
    let wpe = tensors
        .shape("wpe.weight")
        .ok_or_else(|| ModelError::MissingTensor("wpe.weight".into()))?;
    if wte.len() != 2 || wpe.len() != 2 {
        return Err(ModelError::Config("embeddings must be matrices".into()));
    }
    let (vocab_size, d_model) = (wte[0], wte[1]);
    let n_ctx = wpe[0];
    let mut n_layers = 0;
    while tensors
        .tensors
        .keys()
        .any(|k| k.starts_with(&format!("h.{n_layers}.")))
    {
        n_layers += 1;
    }
    let meta = &tensors.metadata;
    let n_heads = match meta.get("n_head") {
        Some(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| ModelError::Config(format!("n_head metadata {v:?} is not a count")))?,
        // GPT-2 family models use 64-wide heads
        None if d_model % 64 == 0 => d_model / 64,
        None => {
            return Err(ModelError::Config(
                "head count not recorded and d_model is not a multiple of 64".into(),
            ))
        }
    };
    if n_heads == 0 || d_model % n_heads != 0 {
        return Err(ModelError::Config(format!(
            "d_model {d_model} not divisible by n_head {n_heads}"
        )));
    }
    let ln_eps = match meta.get("layer_norm_epsilon") {
        Some(v) => v
            .trim()
            .parse::<f32>()
            .map_err(|_| ModelError::Config(format!("layer_norm_epsilon {v:?} is not a number")))?,
        None => 1e-5,
    };
    let gelu = match meta.get("activation_function").map(String::as_str) {
        Some("gelu") => Gelu::Erf,
        _ => Gelu::Tanh,
    };
    Ok(ModelConfig {
        n_layers,
        d_model,
        n_heads,
        d_head: d_model / n_heads,
        vocab_size,
        n_ctx,
        ln_eps,
        gelu,
    })
}

fn take(tensors: &mut TensorSet, name: &str, shape: &[usize]) -> Result<Vec<f32>, ModelError> {
    let RawTensor { shape: actual, data } = tensors
        .take(name)
        .ok_or_else(|| ModelError::MissingTensor(name.to_string()))?;
    if actual != shape {
        return Err(ModelError::ShapeMismatch {
            name: name.to_string(),
            expected: shape.to_vec(),
            actual,
        });
    }
    if let Some(index) = data.iter().position(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite {
            name: name.to_string(),
            index,
        });
    }
    Ok(data)
}

fn transpose(data: &[f32], rows: usize, cols: usize) -> Vec<f32> {
    let mut out = vec![0.0; data.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}

fn take_linear(
    tensors: &mut TensorSet,
    prefix: &str,
    in_dim: usize,
    out_dim: usize,
    orientation: Orientation,
) -> Result<Linear, ModelError> {
    let wname = format!("{prefix}.weight");
    let weight = match orientation {
        Orientation::InputMajor => take(tensors, &wname, &[in_dim, out_dim])?,
        Orientation::OutputMajor => transpose(&take(tensors, &wname, &[out_dim, in_dim])?, out_dim, in_dim),
    };
    let bias = take(tensors, &format!("{prefix}.bias"), &[out_dim])?;
    Ok(Linear {
        in_dim,
        out_dim,
        weight,
        bias,
    })
}

fn take_ln(tensors: &mut TensorSet, prefix: &str, d: usize, eps: f32) -> Result<LayerNorm, ModelError> {
    Ok(LayerNorm {
        scale: take(tensors, &format!("{prefix}.weight"), &[d])?,
        shift: take(tensors, &format!("{prefix}.bias"), &[d])?,
        eps,
    })
}

fn build_weights(tensors: &mut TensorSet, cfg: &ModelConfig) -> Result<Weights, ModelError> {
    let d = cfg.d_model;
    let orientation = match tensors.shape("h.0.attn.c_attn.weight") {
        Some(s) if s == [3 * d, d] => Orientation::OutputMajor,
        _ => Orientation::InputMajor,
    };
    let token_embedding = take(tensors, "wte.weight", &[cfg.vocab_size, d])?;
    let position_embedding = take(tensors, "wpe.weight", &[cfg.n_ctx, d])?;
    let mut blocks = Vec::with_capacity(cfg.n_layers);
    for b in 0..cfg.n_layers {
        let p = format!("h.{b}");
        blocks.push(Block {
            ln1: take_ln(tensors, &format!("{p}.ln_1"), d, cfg.ln_eps)?,
            attn_qkv: take_linear(tensors, &format!("{p}.attn.c_attn"), d, 3 * d, orientation)?,
            attn_out: take_linear(tensors, &format!("{p}.attn.c_proj"), d, d, orientation)?,
            ln2: take_ln(tensors, &format!("{p}.ln_2"), d, cfg.ln_eps)?,
            mlp_up: take_linear(tensors, &format!("{p}.mlp.c_fc"), d, 4 * d, orientation)?,
            mlp_down: take_linear(tensors, &format!("{p}.mlp.c_proj"), 4 * d, d, orientation)?,
        });
    }
    let ln_final = take_ln(tensors, "ln_f", d, cfg.ln_eps)?;
    Ok(Weights {
        token_embedding,
        position_embedding,
        blocks,
        ln_final,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{self, SyntheticSpec};

    fn tiny_tensors() -> TensorSet {
        synthetic::tensor_set(&SyntheticSpec::micro())
    }

    #[test]
    fn infers_config_from_shapes() {
        let model = Model::from_tensors(tiny_tensors(), None, "t").unwrap();
        let spec = SyntheticSpec::micro();
        let c = model.config();
        assert_eq!(c.n_layers, spec.n_layers);
        assert_eq!(c.d_model, spec.d_model);
        assert_eq!(c.n_heads, spec.n_heads);
        assert_eq!(c.vocab_size, spec.vocab_size);
        assert_eq!(c.n_ctx, spec.n_ctx);
        assert_eq!(c.ln_eps, 1e-5);
    }

    #[test]
    fn missing_tensor_is_named() {
        let mut t = tiny_tensors();
        t.tensors.remove("h.1.ln_2.bias");
        let err = Model::from_tensors(t, None, "t").unwrap_err();
        match err {
            ModelError::MissingTensor(name) => assert_eq!(name, "h.1.ln_2.bias"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn shape_mismatch_reports_both_shapes() {
        let mut t = tiny_tensors();
        let bias = t.tensors.get_mut("h.0.mlp.c_fc.bias").unwrap();
        bias.shape = vec![bias.data.len() - 1];
        bias.data.pop();
        let err = Model::from_tensors(t, None, "t").unwrap_err();
        match err {
            ModelError::ShapeMismatch { name, expected, actual } => {
                assert_eq!(name, "h.0.mlp.c_fc.bias");
                assert_eq!(expected[0], actual[0] + 1);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn non_finite_is_integrity_error() {
        let mut t = tiny_tensors();
        t.tensors.get_mut("ln_f.weight").unwrap().data[3] = f32::NAN;
        let err = Model::from_tensors(t, None, "t").unwrap_err();
        assert!(matches!(err, ModelError::NonFinite { index: 3, .. }), "{err}");
    }

    #[test]
    fn prefixed_and_output_major_checkpoints_load_identically() {
        let base = Model::from_tensors(tiny_tensors(), None, "t").unwrap();
        let mut t = tiny_tensors();
        for (name, tensor) in t.tensors.iter_mut() {
            let is_proj = name.ends_with(".weight")
                && (name.contains("c_attn") || name.contains("c_proj") || name.contains("c_fc"));
            if is_proj {
                let (r, c) = (tensor.shape[0], tensor.shape[1]);
                tensor.data = transpose(&tensor.data, r, c);
                tensor.shape = vec![c, r];
            }
        }
        let renamed: TensorSet = TensorSet {
            tensors: t
                .tensors
                .into_iter()
                .map(|(k, v)| (format!("transformer.{k}"), v))
                .collect(),
            metadata: t.metadata,
        };
        let other = Model::from_tensors(renamed, None, "t").unwrap();
        for (a, b) in base.weights().blocks.iter().zip(&other.weights().blocks) {
            assert_eq!(a.attn_qkv.weight, b.attn_qkv.weight);
            assert_eq!(a.attn_out.weight, b.attn_out.weight);
            assert_eq!(a.mlp_down.weight, b.mlp_down.weight);
        }
    }

    #[test]
    fn override_is_validated() {
        let mut cfg = ModelConfig::gpt2_small();
        cfg.d_head = 60;
        let err = Model::from_tensors(tiny_tensors(), Some(cfg), "t").unwrap_err();
        assert!(matches!(err, ModelError::Config(_)));
    }

    #[test]
    fn gpt2_small_config_is_consistent() {
        let c = ModelConfig::gpt2_small();
        c.validate().unwrap();
        assert_eq!(c.n_layers, 12);
    }
}
