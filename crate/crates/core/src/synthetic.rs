// SPDX-License-Identifier: MIT OR Apache-2.0

//! Deterministic synthetic GPT-2 weights.
//!
//! Element `i` (0-based, row-major in checkpoint layout) of tensor `name` is
//!
//! ```text
//! z = fnv1a64(name) + (i + 1) * 0x9E3779B97F4A7C15     (wrapping)
//! z = splitmix64_mix(z);  u = (z >> 11) * 2^-53
//! value = f32(center + scale * (2u - 1))                 (f64 arithmetic)
//! ```
//!
//! with `(center, scale)` fixed per tensor kind. The rule is simple enough to
//! reproduce exactly in other languages, which lets an independent GPT-2
//! implementation run the very same weights.

use std::collections::HashMap;
use std::path::Path;

use crate::model::{Model, ModelError};
use crate::tensorfile::{self, TensorFileError, TensorSet};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub name: String,
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub vocab_size: usize,
    pub n_ctx: usize,
}

impl SyntheticSpec {
    /// GPT-2-small geometry (124M parameters).
    pub fn gpt2_small() -> Self {
        SyntheticSpec {
            name: "synthetic-gpt2-small".into(),
            n_layers: 12,
            d_model: 768,
            n_heads: 12,
            vocab_size: 50257,
            n_ctx: 1024,
        }
    }

    /// Twelve layers and the full vocabulary, but only 64 wide.
    pub fn tiny() -> Self {
        SyntheticSpec {
            name: "synthetic-gpt2-tiny".into(),
            n_layers: 12,
            d_model: 64,
            n_heads: 4,
            vocab_size: 50257,
            n_ctx: 1024,
        }
    }

    /// Small enough for unit tests.
    pub fn micro() -> Self {
        SyntheticSpec {
            name: "synthetic-micro".into(),
            n_layers: 3,
            d_model: 16,
            n_heads: 2,
            vocab_size: 300,
            n_ctx: 32,
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "small" | "gpt2-small" => Some(Self::gpt2_small()),
            "tiny" => Some(Self::tiny()),
            "micro" => Some(Self::micro()),
            _ => None,
        }
    }

    /// `(name, shape, center, scale)` for every tensor, checkpoint naming.
    pub fn tensor_specs(&self) -> Vec<(String, Vec<usize>, f64, f64)> {
        let (d, v, ctx) = (self.d_model, self.vocab_size, self.n_ctx);
        let mut specs = vec![
            ("wte.weight".to_string(), vec![v, d], 0.0, 0.08),
            ("wpe.weight".to_string(), vec![ctx, d], 0.0, 0.02),
        ];
        for b in 0..self.n_layers {
            let p = format!("h.{b}.");
            let mut push = |suffix: &str, shape: Vec<usize>, center: f64, scale: f64| {
                specs.push((format!("{p}{suffix}"), shape, center, scale));
            };
            push("ln_1.weight", vec![d], 1.0, 0.2);
            push("ln_1.bias", vec![d], 0.0, 0.05);
            push("attn.c_attn.weight", vec![d, 3 * d], 0.0, 0.08);
            push("attn.c_attn.bias", vec![3 * d], 0.0, 0.02);
            push("attn.c_proj.weight", vec![d, d], 0.0, 0.04);
            push("attn.c_proj.bias", vec![d], 0.0, 0.02);
            push("ln_2.weight", vec![d], 1.0, 0.2);
            push("ln_2.bias", vec![d], 0.0, 0.05);
            push("mlp.c_fc.weight", vec![d, 4 * d], 0.0, 0.08);
            push("mlp.c_fc.bias", vec![4 * d], 0.0, 0.02);
            push("mlp.c_proj.weight", vec![4 * d, d], 0.0, 0.04);
            push("mlp.c_proj.bias", vec![d], 0.0, 0.02);
        }
        specs.push(("ln_f.weight".to_string(), vec![d], 1.0, 0.2));
        specs.push(("ln_f.bias".to_string(), vec![d], 0.0, 0.05));
        specs
    }

    fn metadata(&self) -> HashMap<String, String> {
        HashMap::from([
            ("n_head".to_string(), self.n_heads.to_string()),
            ("layer_norm_epsilon".to_string(), "1e-5".to_string()),
            ("generator".to_string(), self.name.clone()),
        ])
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[inline]
fn unit(seed: u64, index: u64) -> f64 {
    let mut z = seed.wrapping_add((index + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    (z >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// The `count` values of one tensor.
pub fn values(name: &str, count: usize, center: f64, scale: f64) -> impl Iterator<Item = f32> {
    let seed = fnv1a64(name.as_bytes());
    (0..count as u64).map(move |i| (center + scale * (2.0 * unit(seed, i) - 1.0)) as f32)
}

pub fn tensor_set(spec: &SyntheticSpec) -> TensorSet {
    let mut set = TensorSet {
        metadata: spec.metadata(),
        ..Default::default()
    };
    for (name, shape, center, scale) in spec.tensor_specs() {
        let count = shape.iter().product();
        let data = values(&name, count, center, scale).collect();
        set.insert(name, shape, data);
    }
    set
}

pub fn model(spec: &SyntheticSpec) -> Model {
    Model::from_tensors(tensor_set(spec), None, spec.name.clone())
        .expect("synthetic tensors match their own geometry")
}

/// Writes the weights as a safetensors file without holding a decoded copy.
pub fn write_safetensors(spec: &SyntheticSpec, path: &Path) -> Result<(), TensorFileError> {
    let tensors: Vec<(String, Vec<usize>, Vec<u8>)> = spec
        .tensor_specs()
        .into_iter()
        .map(|(name, shape, center, scale)| {
            let count = shape.iter().product();
            let bytes = values(&name, count, center, scale)
                .flat_map(f32::to_le_bytes)
                .collect();
            (name, shape, bytes)
        })
        .collect();
    tensorfile::write_safetensors(path, &tensors, &spec.metadata())
}

/// Prefix selecting generated weights instead of a file, as in
/// `synthetic:tiny`.
pub const SOURCE_PREFIX: &str = "synthetic:";

/// Loads a model from a weight file path, or generates one for
/// `synthetic:<small|tiny|micro>`.
pub fn load_model(source: &str) -> Result<Model, ModelError> {
    match source.strip_prefix(SOURCE_PREFIX) {
        Some(name) => SyntheticSpec::by_name(name)
            .map(|spec| model(&spec))
            .ok_or_else(|| ModelError::Config(format!("unknown synthetic model {name:?} (small, tiny, micro)"))),
        None => Model::load(Path::new(source), None),
    }
}
