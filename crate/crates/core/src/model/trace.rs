// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use super::kernels::{self, softmax};
use super::{Block, Model, ModelConfig, ModelError};
use crate::tokenizer::TokenId;

/// Residual-stream record of one forward pass.
///
/// State `(i, 0)` is token plus position embedding; state `(i, b + 1)` is the
/// stream after block `b`, so `residual(i, b + 1) == residual(i, b) +
/// attn_out(i, b) + mlp_out(i, b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub token_ids: Vec<TokenId>,
    pub n_layers: usize,
    pub d_model: usize,
    pub vocab_size: usize,
    /// `n x (n_layers + 1) x d_model`
    residual: Vec<f32>,
    /// `n x n_layers x d_model`
    attn_out: Vec<f32>,
    /// `n x n_layers x d_model`
    mlp_out: Vec<f32>,
    /// `n x vocab_size`
    logits: Vec<f32>,
}

impl Trace {
    pub fn n_tokens(&self) -> usize {
        self.token_ids.len()
    }

    /// Number of recorded states per token (`n_layers + 1`).
    pub fn n_states(&self) -> usize {
        self.n_layers + 1
    }

    pub fn residual(&self, token_pos: usize, layer: usize) -> &[f32] {
        assert!(token_pos < self.n_tokens() && layer <= self.n_layers);
        let start = (token_pos * self.n_states() + layer) * self.d_model;
        &self.residual[start..start + self.d_model]
    }

    /// The `n_layers + 1` states of one token, layer-major.
    pub fn trajectory(&self, token_pos: usize) -> &[f32] {
        assert!(token_pos < self.n_tokens());
        let per = self.n_states() * self.d_model;
        &self.residual[token_pos * per..(token_pos + 1) * per]
    }

    /// Every recorded state, `n x (n_layers + 1)` rows of `d_model`.
    pub fn all_states(&self) -> &[f32] {
        &self.residual
    }

    pub fn attn_out(&self, token_pos: usize, block: usize) -> &[f32] {
        let start = (token_pos * self.n_layers + block) * self.d_model;
        &self.attn_out[start..start + self.d_model]
    }

    pub fn mlp_out(&self, token_pos: usize, block: usize) -> &[f32] {
        let start = (token_pos * self.n_layers + block) * self.d_model;
        &self.mlp_out[start..start + self.d_model]
    }

    pub fn logits(&self, token_pos: usize) -> &[f32] {
        &self.logits[token_pos * self.vocab_size..(token_pos + 1) * self.vocab_size]
    }

    pub(crate) fn check_position(&self, token_pos: usize) -> Result<(), ModelError> {
        if token_pos >= self.n_tokens() {
            return Err(ModelError::OutOfRange {
                what: "token position",
                index: token_pos,
                bound: self.n_tokens(),
            });
        }
        Ok(())
    }
}

struct BlockOutput {
    attn: Vec<f32>,
    mlp: Vec<f32>,
    /// head-averaged attention, `n x n`, when requested
    pattern: Option<Vec<f32>>,
}

impl Model {
    /// Runs the model over `token_ids`, recording every residual state.
    pub fn forward_trace(&self, token_ids: &[TokenId]) -> Result<Trace, ModelError> {
        self.check_tokens(token_ids)?;
        let cfg = self.config;
        let n = token_ids.len();
        let d = cfg.d_model;
        let n_states = cfg.n_layers + 1;

        let mut x = self.embed(token_ids);
        let mut residual = vec![0.0f32; n * n_states * d];
        let mut attn_out = vec![0.0f32; n * cfg.n_layers * d];
        let mut mlp_out = vec![0.0f32; n * cfg.n_layers * d];
        let store = |dst: &mut [f32], per: usize, slot: usize, src: &[f32]| {
            for i in 0..n {
                let at = (i * per + slot) * d;
                dst[at..at + d].copy_from_slice(&src[i * d..(i + 1) * d]);
            }
        };
        store(&mut residual, n_states, 0, &x);

        for (b, block) in self.weights.blocks.iter().enumerate() {
            let out = run_block(&cfg, block, &x, n, false);
            for ((xv, &a), &m) in x.iter_mut().zip(&out.attn).zip(&out.mlp) {
                *xv = (*xv + a) + m;
            }
            store(&mut attn_out, cfg.n_layers, b, &out.attn);
            store(&mut mlp_out, cfg.n_layers, b, &out.mlp);
            store(&mut residual, n_states, b + 1, &x);
        }

        let normed = self.weights.ln_final.forward(&x);
        let logits = kernels::matmul_transposed(&normed, n, &self.weights.token_embedding, d);

        Ok(Trace {
            token_ids: token_ids.to_vec(),
            n_layers: cfg.n_layers,
            d_model: d,
            vocab_size: cfg.vocab_size,
            residual,
            attn_out,
            mlp_out,
            logits,
        })
    }

    /// Head-averaged attention weights of `block`, `n x n` row-major; row
    /// `i` is the distribution of query `i` over keys `0..=i`.
    pub fn attention_pattern(&self, token_ids: &[TokenId], block: usize) -> Result<Vec<f32>, ModelError> {
        self.check_tokens(token_ids)?;
        if block >= self.config.n_layers {
            return Err(ModelError::OutOfRange {
                what: "block",
                index: block,
                bound: self.config.n_layers,
            });
        }
        let n = token_ids.len();
        let mut x = self.embed(token_ids);
        for (b, blk) in self.weights.blocks.iter().enumerate() {
            let out = run_block(&self.config, blk, &x, n, b == block);
            if b == block {
                return Ok(out.pattern.expect("pattern requested"));
            }
            for ((xv, &a), &m) in x.iter_mut().zip(&out.attn).zip(&out.mlp) {
                *xv = (*xv + a) + m;
            }
        }
        unreachable!("block index checked above")
    }

    fn embed(&self, token_ids: &[TokenId]) -> Vec<f32> {
        let d = self.config.d_model;
        let w = &self.weights;
        let mut x = Vec::with_capacity(token_ids.len() * d);
        for (pos, id) in token_ids.iter().enumerate() {
            let te = &w.token_embedding[id.index() * d..(id.index() + 1) * d];
            let pe = &w.position_embedding[pos * d..(pos + 1) * d];
            x.extend(te.iter().zip(pe).map(|(a, b)| a + b));
        }
        x
    }
}

fn run_block(cfg: &ModelConfig, block: &Block, x: &[f32], n: usize, want_pattern: bool) -> BlockOutput {
    let d = cfg.d_model;
    let dh = cfg.d_head;
    let h = block.ln1.forward(x);
    let qkv = block.attn_qkv.forward(&h, n);
    let scale = (dh as f32).sqrt();

    let mut mixed = vec![0.0f32; n * d];
    let mut pattern = want_pattern.then(|| vec![0.0f32; n * n]);
    let mut scores = Vec::with_capacity(n);
    for head in 0..cfg.n_heads {
        let q_off = head * dh;
        let k_off = d + head * dh;
        let v_off = 2 * d + head * dh;
        for i in 0..n {
            let q = &qkv[i * 3 * d + q_off..i * 3 * d + q_off + dh];
            scores.clear();
            // keys after the query are masked out entirely
            for j in 0..=i {
                let k = &qkv[j * 3 * d + k_off..j * 3 * d + k_off + dh];
                scores.push(kernels::dot(q, k) / scale);
            }
            softmax(&mut scores);
            let out = &mut mixed[i * d + head * dh..i * d + (head + 1) * dh];
            for (j, &p) in scores.iter().enumerate() {
                let v = &qkv[j * 3 * d + v_off..j * 3 * d + v_off + dh];
                for (o, &vv) in out.iter_mut().zip(v) {
                    *o += p * vv;
                }
            }
            if let Some(pat) = pattern.as_mut() {
                for (j, &p) in scores.iter().enumerate() {
                    pat[i * n + j] += p;
                }
            }
        }
    }
    if let Some(pat) = pattern.as_mut() {
        let heads = cfg.n_heads as f32;
        pat.iter_mut().for_each(|p| *p /= heads);
    }

    let attn = block.attn_out.forward(&mixed, n);
    let mid: Vec<f32> = x.iter().zip(&attn).map(|(a, b)| a + b).collect();
    let h2 = block.ln2.forward(&mid);
    let mut up = block.mlp_up.forward(&h2, n);
    for v in up.iter_mut() {
        *v = cfg.gelu.apply(*v);
    }
    let mlp = block.mlp_down.forward(&up, n);
    BlockOutput { attn, mlp, pattern }
}
