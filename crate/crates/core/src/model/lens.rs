// SPDX-License-Identifier: MIT OR Apache-2.0

//! Logit lens: read an intermediate residual state through the unembedding.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::kernels;
use super::{Model, ModelError, Trace};
use crate::tokenizer::TokenId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LensEntry {
    pub token_id: TokenId,
    pub score: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LensMode {
    /// Final layer norm, then unembedding.
    #[default]
    Normalized,
    /// Unembedding of the raw state.
    Raw,
}

impl Model {
    /// Top-`k` vocabulary readout of state `(token_pos, layer)`, descending
    /// by score with ties broken by ascending token id.
    pub fn logit_lens(
        &self,
        trace: &Trace,
        token_pos: usize,
        layer: usize,
        k: usize,
    ) -> Result<Vec<LensEntry>, ModelError> {
        self.logit_lens_with(trace, token_pos, layer, k, LensMode::Normalized)
    }

    pub fn logit_lens_with(
        &self,
        trace: &Trace,
        token_pos: usize,
        layer: usize,
        k: usize,
        mode: LensMode,
    ) -> Result<Vec<LensEntry>, ModelError> {
        trace.check_position(token_pos)?;
        if layer > trace.n_layers {
            return Err(ModelError::OutOfRange {
                what: "layer",
                index: layer,
                bound: trace.n_layers + 1,
            });
        }
        if k == 0 {
            return Err(ModelError::OutOfRange {
                what: "lens depth",
                index: 0,
                bound: 1,
            });
        }
        if trace.d_model != self.config.d_model || trace.vocab_size != self.config.vocab_size {
            return Err(ModelError::Config("trace was produced by a different model".into()));
        }
        let state = trace.residual(token_pos, layer);
        let input = match mode {
            LensMode::Normalized => self.weights.ln_final.forward(state),
            LensMode::Raw => state.to_vec(),
        };
        let scores = kernels::matmul_transposed(&input, 1, &self.weights.token_embedding, self.config.d_model);
        Ok(top_k(&scores, k))
    }
}

fn rank_order(a: &(usize, f32), b: &(usize, f32)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Indices of the `k` largest scores, descending, ties by ascending index.
pub fn top_k(scores: &[f32], k: usize) -> Vec<LensEntry> {
    let mut indexed: Vec<(usize, f32)> = scores.iter().copied().enumerate().collect();
    let k = k.min(indexed.len());
    if k < indexed.len() {
        indexed.select_nth_unstable_by(k, rank_order);
        indexed.truncate(k);
    }
    indexed.sort_by(rank_order);
    indexed
        .into_iter()
        .map(|(i, score)| LensEntry {
            token_id: TokenId(i as u32),
            score,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{self, SyntheticSpec};

    #[test]
    fn top_k_orders_and_breaks_ties() {
        let top = top_k(&[0.5, 2.0, 2.0, -1.0, 3.0], 3);
        let ids: Vec<u32> = top.iter().map(|e| e.token_id.0).collect();
        assert_eq!(ids, vec![4, 1, 2]);
        assert_eq!(top_k(&[1.0, 1.0], 5).len(), 2);
    }

    #[test]
    fn final_layer_lens_matches_logits() {
        let m = synthetic::model(&SyntheticSpec::micro());
        let t: Vec<TokenId> = [11u32, 22, 33].into_iter().map(TokenId).collect();
        let tr = m.forward_trace(&t).unwrap();
        let last = tr.n_tokens() - 1;
        let lens = m.logit_lens(&tr, last, tr.n_layers, 10).unwrap();
        let expect = top_k(tr.logits(last), 10);
        assert_eq!(lens, expect);
        let single = m.logit_lens(&tr, 0, 2, 1).unwrap();
        assert_eq!(single.len(), 1);
        assert!(single[0].score.is_finite());
    }

    #[test]
    fn lens_range_errors() {
        let m = synthetic::model(&SyntheticSpec::micro());
        let tr = m.forward_trace(&[TokenId(1), TokenId(2)]).unwrap();
        assert!(m.logit_lens(&tr, 2, 0, 1).is_err());
        assert!(m.logit_lens(&tr, 0, tr.n_layers + 1, 1).is_err());
        assert!(m.logit_lens(&tr, 0, 0, 0).is_err());
        let raw = m.logit_lens_with(&tr, 0, 0, 3, LensMode::Raw).unwrap();
        assert_eq!(raw.len(), 3);
    }
}
