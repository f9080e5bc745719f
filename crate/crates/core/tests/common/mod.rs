// SPDX-License-Identifier: MIT OR Apache-2.0

#![allow(dead_code)]

pub mod http;

use std::path::PathBuf;
use std::sync::OnceLock;

use serde::Deserialize;
use tokentrail::synthetic::{self, SyntheticSpec};
use tokentrail::{Model, TokenId, Tokenizer};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("fixtures")
        .join(name)
}

pub fn tokenizer() -> &'static Tokenizer {
    static TOK: OnceLock<Tokenizer> = OnceLock::new();
    TOK.get_or_init(Tokenizer::gpt2)
}

/// GPT-2-small geometry with synthetic weights, loaded through a
/// safetensors file so the container path is exercised too.
pub fn small_model() -> &'static Model {
    static MODEL: OnceLock<Model> = OnceLock::new();
    MODEL.get_or_init(|| {
        let spec = SyntheticSpec::gpt2_small();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("synthetic-gpt2-small.safetensors");
        synthetic::write_safetensors(&spec, &path).unwrap();
        Model::load(&path, None).unwrap().with_id(spec.name)
    })
}

pub fn tiny_model() -> &'static Model {
    static MODEL: OnceLock<Model> = OnceLock::new();
    MODEL.get_or_init(|| synthetic::model(&SyntheticSpec::tiny()))
}

#[derive(Debug, Deserialize)]
pub struct OraclePosition {
    pub top10_ids: Vec<u32>,
    pub top10_logits: Vec<f32>,
    pub min_gap: f32,
}

#[derive(Debug, Deserialize)]
pub struct OraclePrompt {
    pub prompt: String,
    pub token_ids: Vec<u32>,
    pub positions: Vec<OraclePosition>,
    #[serde(default)]
    pub attention_block0: Option<Vec<Vec<f32>>>,
}

#[derive(Debug, Deserialize)]
pub struct OracleFixture {
    pub vocab_size: usize,
    pub prompts: Vec<OraclePrompt>,
}

pub struct Oracle {
    pub fixture: OracleFixture,
    /// final-position logits, one vocab-sized row per prompt
    pub final_logits: Vec<Vec<f32>>,
}

pub fn oracle() -> &'static Oracle {
    static ORACLE: OnceLock<Oracle> = OnceLock::new();
    ORACLE.get_or_init(|| {
        let text = std::fs::read_to_string(fixture_path("oracle_logits.json")).unwrap();
        let fixture: OracleFixture = serde_json::from_str(&text).unwrap();
        let raw = std::fs::read(fixture_path("oracle_final_logits.bin")).unwrap();
        let all: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let final_logits = all.chunks(fixture.vocab_size).map(<[f32]>::to_vec).collect();
        Oracle {
            fixture,
            final_logits,
        }
    })
}

pub fn ids(v: &[u32]) -> Vec<TokenId> {
    v.iter().copied().map(TokenId).collect()
}

/// Indices sorted by descending value, ties by ascending index.
pub fn ranking(values: &[f32], k: usize) -> Vec<u32> {
    let mut idx: Vec<u32> = (0..values.len() as u32).collect();
    idx.sort_by(|&a, &b| {
        values[b as usize]
            .total_cmp(&values[a as usize])
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    idx
}

/// Cyclic Jacobi rotations until the off-diagonal mass vanishes. Returns
/// eigenvalues in descending order with matching eigenvectors.
pub fn jacobi_eigen(a: &[f64], n: usize) -> Vec<(f64, Vec<f64>)> {
    let mut m = a.to_vec();
    let mut v = vec![0.0f64; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| m[p * n + q] * m[p * n + q])
            .sum();
        let total: f64 = m.iter().map(|x| x * x).sum();
        if off <= 1e-30 * total.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|j| (m[j * n + j], (0..n).map(|k| v[k * n + j]).collect()))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs
}

/// Sample covariance with `1/(N-1)` normalization, computed directly.
pub fn naive_covariance(x: &[f64], d: usize) -> Vec<f64> {
    let n = x.len() / d;
    let mut mean = vec![0.0; d];
    for row in x.chunks(d) {
        for j in 0..d {
            mean[j] += row[j] / n as f64;
        }
    }
    let mut cov = vec![0.0; d * d];
    for r in 0..d {
        for c in 0..d {
            let s: f64 = x.chunks(d).map(|row| (row[r] - mean[r]) * (row[c] - mean[c])).sum();
            cov[r * d + c] = s / (n.max(2) - 1) as f64;
        }
    }
    cov
}

pub mod gloss_ops {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;
    use tokentrail::glossstore::{GlossFilter, GlossPatch, NewGloss};
    use tokentrail::{Anchor, Gloss, GlossStore, Session, TokenId};

    /// Every session and its glosses, in list order.
    pub fn observable(store: &GlossStore) -> Vec<(Session, Vec<Gloss>)> {
        let snap = store.snapshot();
        snap.sessions()
            .into_iter()
            .map(|s| (s.clone(), snap.list(&s.session_id, &GlossFilter::default()).unwrap()))
            .collect()
    }

    pub fn random_anchor(rng: &mut ChaCha8Rng, n_tokens: usize, n_layers: usize) -> Anchor {
        match rng.random_range(0..4) {
            0 => Anchor::token_layer(rng.random_range(0..n_tokens), rng.random_range(0..=n_layers)),
            1 => Anchor::token(rng.random_range(0..n_tokens)),
            2 => Anchor::layer(rng.random_range(0..=n_layers)),
            _ => {
                let start = rng.random_range(0..n_layers);
                let tok = rng.random_bool(0.5).then(|| rng.random_range(0..n_tokens));
                Anchor::segment(tok, start, rng.random_range(start + 1..=n_layers))
            }
        }
    }

    /// Applies `n_ops` random successful mutations. `after_each` sees the
    /// store after every operation.
    pub fn run(store: &GlossStore, seed: u64, n_ops: usize, mut after_each: impl FnMut(&GlossStore)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sessions: Vec<Session> = store.snapshot().sessions().into_iter().cloned().collect();
        for op in 0..n_ops {
            let live: Vec<String> = sessions
                .iter()
                .flat_map(|s| store.list_glosses(&s.session_id, &GlossFilter::default()).unwrap())
                .map(|g| g.gloss_id)
                .collect();
            let choice = if sessions.is_empty() { 0 } else { rng.random_range(0..10) };
            match choice {
                0 => {
                    let n = rng.random_range(1..8);
                    let ids = (0..n).map(|_| TokenId(rng.random_range(0..50257))).collect();
                    sessions.push(store.create_session(&format!("prompt {op}"), ids, "synthetic", 12).unwrap());
                }
                1..=5 => {
                    let s = &sessions[rng.random_range(0..sessions.len())];
                    let tags: BTreeSet<String> =
                        (0..rng.random_range(0..3)).map(|t| format!("tag{}", (op + t) % 4)).collect();
                    store
                        .create_gloss(NewGloss {
                            session_id: s.session_id.clone(),
                            anchor: random_anchor(&mut rng, s.n_tokens(), s.n_layers),
                            body: format!("note {op}: «{}»", rng.random::<u16>()),
                            author: "reader".into(),
                            tags,
                        })
                        .unwrap();
                }
                6 | 7 if !live.is_empty() => {
                    let id = &live[rng.random_range(0..live.len())];
                    let patch = GlossPatch {
                        body: rng.random_bool(0.7).then(|| format!("revised at {op}")),
                        tags: rng.random_bool(0.5).then(|| BTreeSet::from([format!("r{op}")])),
                        anchor: None,
                    };
                    store.update_gloss(id, patch).unwrap();
                }
                _ if !live.is_empty() => {
                    let id = &live[rng.random_range(0..live.len())];
                    store.delete_gloss(id).unwrap();
                }
                _ => {
                    let s = &sessions[0];
                    store
                        .create_gloss(NewGloss {
                            session_id: s.session_id.clone(),
                            anchor: Anchor::token(0),
                            body: "fallback".into(),
                            author: String::new(),
                            tags: BTreeSet::new(),
                        })
                        .unwrap();
                }
            }
            after_each(store);
        }
    }
}
