// SPDX-License-Identifier: MIT OR Apache-2.0

//! JSON shapes served by the API and written by the CLI.
//!
//! Numbers derived from the model go out as `f32`, which serializes as the
//! shortest decimal that reads back to the same 32-bit value.

use serde::Serialize;

use crate::glossstore::record::timestamp;
use crate::glossstore::Session;
use crate::model::{Model, ModelError, Trace};
use crate::projection::{self, ProjectionBasis, ProjectionError};
use crate::tokenizer::{TokenId, Tokenizer};

/// Largest lens depth a request may ask for.
pub const MAX_LENS_K: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasisSummary {
    pub explained_variance: [f32; 2],
    pub fitted_over: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionResource {
    pub session_id: String,
    pub prompt: String,
    pub token_ids: Vec<TokenId>,
    pub tokens: Vec<String>,
    pub model_id: String,
    #[serde(serialize_with = "timestamp::serialize")]
    pub created_at: chrono::DateTime<chrono::Utc>,
    pub n_tokens: usize,
    pub n_layers: usize,
    pub d_model: usize,
    pub basis: BasisSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointResource {
    pub x: f32,
    pub y: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftResource {
    pub d: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LensToken {
    pub token_id: TokenId,
    pub text: String,
    pub score: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryResource {
    pub token_pos: usize,
    pub token_id: TokenId,
    pub text: String,
    pub points: Vec<PointResource>,
    pub shift: ShiftResource,
    /// top-k readout per layer `0..=n_layers`
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lens: Option<Vec<Vec<LensToken>>>,
    /// the `n_layers + 1` residual states
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw: Option<Vec<Vec<f32>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridResource {
    pub n_tokens: usize,
    pub n_layers: usize,
    /// `grid[i][b]`: shift of token `i` across block `b`
    pub grid: Vec<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttentionResource {
    pub block: usize,
    pub n_tokens: usize,
    /// `pattern[i][j]`: head-averaged weight of query `i` on key `j`
    pub pattern: Vec<Vec<f32>>,
}

/// Full basis, as written into session exports and trace dumps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasisResource {
    pub mean: Vec<f32>,
    pub components: [Vec<f32>; 2],
    pub explained_variance: [f32; 2],
    pub fitted_over: usize,
}

fn narrow(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

impl From<&ProjectionBasis> for BasisResource {
    fn from(b: &ProjectionBasis) -> Self {
        BasisResource {
            mean: narrow(&b.mean),
            components: [narrow(&b.components[0]), narrow(&b.components[1])],
            explained_variance: b.explained_variance.map(|v| v as f32),
            fitted_over: b.fitted_over,
        }
    }
}

impl From<&ProjectionBasis> for BasisSummary {
    fn from(b: &ProjectionBasis) -> Self {
        BasisSummary {
            explained_variance: b.explained_variance.map(|v| v as f32),
            fitted_over: b.fitted_over,
        }
    }
}

pub fn token_texts(tokenizer: &Tokenizer, ids: &[TokenId]) -> Vec<String> {
    ids.iter()
        .map(|&id| tokenizer.token_text(id).unwrap_or_else(|_| format!("<{id}>")))
        .collect()
}

pub fn session_resource(
    tokenizer: &Tokenizer,
    model: &Model,
    session: &Session,
    basis: &ProjectionBasis,
) -> SessionResource {
    SessionResource {
        session_id: session.session_id.clone(),
        prompt: session.prompt.clone(),
        token_ids: session.token_ids.clone(),
        tokens: token_texts(tokenizer, &session.token_ids),
        model_id: session.model_id.clone(),
        created_at: session.created_at,
        n_tokens: session.n_tokens(),
        n_layers: session.n_layers,
        d_model: model.config().d_model,
        basis: basis.into(),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ResourceError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
}

/// Trajectory of `token_pos` with lens depth `k` (0 = no lens) and
/// optionally the raw states.
pub fn trajectory_resource(
    model: &Model,
    tokenizer: &Tokenizer,
    trace: &Trace,
    basis: &ProjectionBasis,
    token_pos: usize,
    k: usize,
    raw: bool,
) -> Result<TrajectoryResource, ResourceError> {
    let points = basis
        .project_trajectory(trace, token_pos)?
        .into_iter()
        .map(|p| PointResource {
            x: p.x as f32,
            y: p.y as f32,
        })
        .collect();
    let shift = projection::shift_profile(trace, token_pos)?;
    let lens = if k == 0 {
        None
    } else {
        let mut layers = Vec::with_capacity(trace.n_states());
        for layer in 0..trace.n_states() {
            let entries = model.logit_lens(trace, token_pos, layer, k)?;
            layers.push(
                entries
                    .into_iter()
                    .map(|e| LensToken {
                        token_id: e.token_id,
                        text: tokenizer.token_text(e.token_id).unwrap_or_default(),
                        score: e.score,
                    })
                    .collect(),
            );
        }
        Some(layers)
    };
    let raw = raw.then(|| {
        trace
            .trajectory(token_pos)
            .chunks_exact(trace.d_model)
            .map(<[f32]>::to_vec)
            .collect()
    });
    let token_id = trace.token_ids[token_pos];
    Ok(TrajectoryResource {
        token_pos,
        token_id,
        text: tokenizer.token_text(token_id).unwrap_or_default(),
        points,
        shift: ShiftResource { d: narrow(&shift.d) },
        lens,
        raw,
    })
}

pub fn grid_resource(trace: &Trace) -> GridResource {
    GridResource {
        n_tokens: trace.n_tokens(),
        n_layers: trace.n_layers,
        grid: projection::shift_grid(trace).iter().map(|row| narrow(row)).collect(),
    }
}

pub fn attention_resource(block: usize, n: usize, flat: &[f32]) -> AttentionResource {
    AttentionResource {
        block,
        n_tokens: n,
        pattern: flat.chunks(n.max(1)).map(<[f32]>::to_vec).collect(),
    }
}

/// Self-contained record of one traced prompt: everything the API would
/// serve for it, minus session identity and timestamps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceDump {
    pub prompt: String,
    pub model_id: String,
    pub n_layers: usize,
    pub d_model: usize,
    pub token_ids: Vec<TokenId>,
    pub tokens: Vec<String>,
    pub basis: BasisResource,
    pub trajectories: Vec<TrajectoryResource>,
    pub grid: Vec<Vec<f32>>,
}

pub fn trace_dump(
    model: &Model,
    tokenizer: &Tokenizer,
    prompt: &str,
    trace: &Trace,
    basis: &ProjectionBasis,
    k: usize,
) -> Result<TraceDump, ResourceError> {
    let trajectories = (0..trace.n_tokens())
        .map(|i| trajectory_resource(model, tokenizer, trace, basis, i, k, false))
        .collect::<Result<_, _>>()?;
    Ok(TraceDump {
        prompt: prompt.to_string(),
        model_id: model.id().to_string(),
        n_layers: trace.n_layers,
        d_model: trace.d_model,
        token_ids: trace.token_ids.clone(),
        tokens: token_texts(tokenizer, &trace.token_ids),
        basis: basis.into(),
        trajectories,
        grid: grid_resource(trace).grid,
    })
}
