// SPDX-License-Identifier: MIT OR Apache-2.0

use std::ffi::c_char;

use tokentrail::model::LensMode;
use tokentrail::projection::{self, FitScope};
use tokentrail::synthetic;
use tokentrail::{Model, ProjectionBasis, TokenId, Trace};

use crate::error::{guard, Error, TtStatus};
use crate::{fill, free_handle, handle, put, put_handle, put_string, slice_arg, str_arg};

/// GPT-2-architecture model weights.
pub struct TtModel(pub(crate) Model);

/// Every residual state of one forward pass.
pub struct TtTrace(pub(crate) Trace);

/// Two-component PCA basis over residual states.
pub struct TtBasis(pub(crate) ProjectionBasis);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TtModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub vocab_size: usize,
    pub n_ctx: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TtTraceShape {
    pub n_tokens: usize,
    /// transformer blocks; each token has `n_layers + 1` states
    pub n_layers: usize,
    pub d_model: usize,
    pub vocab_size: usize,
}

/// Loads weights from a safetensors file or JSON manifest path, or
/// generates them for `synthetic:small`, `synthetic:tiny` or
/// `synthetic:micro`.
#[no_mangle]
pub unsafe extern "C" fn tt_model_load(source: *const c_char, out: *mut *mut TtModel) -> TtStatus {
    guard(|| {
        let model = synthetic::load_model(str_arg(source, "source")?)?;
        put_handle(out, TtModel(model))
    })
}

#[no_mangle]
pub unsafe extern "C" fn tt_model_free(model: *mut TtModel) {
    free_handle(model)
}

#[no_mangle]
pub unsafe extern "C" fn tt_model_config(model: *const TtModel, out: *mut TtModelConfig) -> TtStatus {
    guard(|| {
        let c = handle(model, "model")?.0.config();
        put(
            out,
            TtModelConfig {
                n_layers: c.n_layers,
                d_model: c.d_model,
                n_heads: c.n_heads,
                vocab_size: c.vocab_size,
                n_ctx: c.n_ctx,
            },
        )
    })
}

/// Model identifier recorded on sessions.
#[no_mangle]
pub unsafe extern "C" fn tt_model_id(model: *const TtModel, out: *mut *mut c_char) -> TtStatus {
    guard(|| put_string(out, handle(model, "model")?.0.id().to_string()))
}

fn token_ids(ids: &[u32]) -> Vec<TokenId> {
    ids.iter().copied().map(TokenId).collect()
}

/// Runs the model over `ids` and keeps every residual state.
#[no_mangle]
pub unsafe extern "C" fn tt_model_trace(
    model: *const TtModel,
    ids: *const u32,
    n_ids: usize,
    out: *mut *mut TtTrace,
) -> TtStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let trace = model.0.forward_trace(&token_ids(slice_arg(ids, n_ids, "ids")?))?;
        put_handle(out, TtTrace(trace))
    })
}

/// Head-averaged attention of `block` as an `n_ids x n_ids` row-major
/// matrix, query rows and key columns.
#[no_mangle]
pub unsafe extern "C" fn tt_model_attention(
    model: *const TtModel,
    ids: *const u32,
    n_ids: usize,
    block: usize,
    out: *mut f32,
    cap: usize,
    out_len: *mut usize,
) -> TtStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let pattern = model.0.attention_pattern(&token_ids(slice_arg(ids, n_ids, "ids")?), block)?;
        fill(&pattern, out, cap, out_len)
    })
}

/// Top-`k` vocabulary readout of state `(token_pos, layer)`, descending.
/// `normalized` applies the final layer norm first. `out_ids` and
/// `out_scores` both need room for `k` entries (fewer if the vocabulary
/// is smaller).
#[no_mangle]
pub unsafe extern "C" fn tt_model_logit_lens(
    model: *const TtModel,
    trace: *const TtTrace,
    token_pos: usize,
    layer: usize,
    k: usize,
    normalized: bool,
    out_ids: *mut u32,
    out_scores: *mut f32,
    cap: usize,
    out_len: *mut usize,
) -> TtStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let trace = handle(trace, "trace")?;
        let mode = if normalized { LensMode::Normalized } else { LensMode::Raw };
        let entries = model.0.logit_lens_with(&trace.0, token_pos, layer, k, mode)?;
        let ids: Vec<u32> = entries.iter().map(|e| e.token_id.0).collect();
        let scores: Vec<f32> = entries.iter().map(|e| e.score).collect();
        if out_ids.is_null() != out_scores.is_null() {
            return Err(Error::null(if out_ids.is_null() { "out_ids" } else { "out_scores" }));
        }
        fill(&ids, out_ids, cap, out_len)?;
        fill(&scores, out_scores, cap, out_len)
    })
}

#[no_mangle]
pub unsafe extern "C" fn tt_trace_free(trace: *mut TtTrace) {
    free_handle(trace)
}

#[no_mangle]
pub unsafe extern "C" fn tt_trace_shape(trace: *const TtTrace, out: *mut TtTraceShape) -> TtStatus {
    guard(|| {
        let t = &handle(trace, "trace")?.0;
        put(
            out,
            TtTraceShape {
                n_tokens: t.n_tokens(),
                n_layers: t.n_layers,
                d_model: t.d_model,
                vocab_size: t.vocab_size,
            },
        )
    })
}

fn check_state(t: &Trace, token_pos: usize, layer: usize) -> Result<(), Error> {
    if token_pos >= t.n_tokens() {
        return Err(Error::new(
            TtStatus::OutOfRange,
            format!("token_pos {token_pos} out of range (must be below {})", t.n_tokens()),
        ));
    }
    if layer > t.n_layers {
        return Err(Error::new(
            TtStatus::OutOfRange,
            format!("layer {layer} out of range (must be at most {})", t.n_layers),
        ));
    }
    Ok(())
}

/// Residual state `(token_pos, layer)`: `d_model` floats. Layer 0 is the
/// embedding; layer `l` follows block `l - 1`.
#[no_mangle]
pub unsafe extern "C" fn tt_trace_residual(
    trace: *const TtTrace,
    token_pos: usize,
    layer: usize,
    out: *mut f32,
    cap: usize,
    out_len: *mut usize,
) -> TtStatus {
    guard(|| {
        let t = &handle(trace, "trace")?.0;
        check_state(t, token_pos, layer)?;
        fill(t.residual(token_pos, layer), out, cap, out_len)
    })
}

/// All `n_layers + 1` states of one token, layer-major.
#[no_mangle]
pub unsafe extern "C" fn tt_trace_trajectory(
    trace: *const TtTrace,
    token_pos: usize,
    out: *mut f32,
    cap: usize,
    out_len: *mut usize,
) -> TtStatus {
    guard(|| {
        let t = &handle(trace, "trace")?.0;
        check_state(t, token_pos, 0)?;
        fill(t.trajectory(token_pos), out, cap, out_len)
    })
}

/// Next-token logits at `token_pos`: `vocab_size` floats.
#[no_mangle]
pub unsafe extern "C" fn tt_trace_logits(
    trace: *const TtTrace,
    token_pos: usize,
    out: *mut f32,
    cap: usize,
    out_len: *mut usize,
) -> TtStatus {
    guard(|| {
        let t = &handle(trace, "trace")?.0;
        check_state(t, token_pos, 0)?;
        fill(t.logits(token_pos), out, cap, out_len)
    })
}

/// Cosine distance between consecutive states of one token: `n_layers`
/// values in `[0, 2]`.
#[no_mangle]
pub unsafe extern "C" fn tt_trace_shift_profile(
    trace: *const TtTrace,
    token_pos: usize,
    out: *mut f64,
    cap: usize,
    out_len: *mut usize,
) -> TtStatus {
    guard(|| {
        let t = &handle(trace, "trace")?.0;
        fill(&projection::shift_profile(t, token_pos)?.d, out, cap, out_len)
    })
}

/// Basis fitted over every state of every token in the trace.
#[no_mangle]
pub unsafe extern "C" fn tt_basis_fit_session(trace: *const TtTrace, out: *mut *mut TtBasis) -> TtStatus {
    guard(|| {
        let t = &handle(trace, "trace")?.0;
        put_handle(out, TtBasis(ProjectionBasis::fit_trace(t, FitScope::Session)?))
    })
}

/// Basis fitted over the states of one token only.
#[no_mangle]
pub unsafe extern "C" fn tt_basis_fit_token(
    trace: *const TtTrace,
    token_pos: usize,
    out: *mut *mut TtBasis,
) -> TtStatus {
    guard(|| {
        let t = &handle(trace, "trace")?.0;
        put_handle(out, TtBasis(ProjectionBasis::fit_trace(t, FitScope::Token(token_pos))?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn tt_basis_free(basis: *mut TtBasis) {
    free_handle(basis)
}

/// Variance along the two components, descending; `out` holds 2 values.
#[no_mangle]
pub unsafe extern "C" fn tt_basis_explained_variance(basis: *const TtBasis, out: *mut f64) -> TtStatus {
    guard(|| {
        let b = &handle(basis, "basis")?.0;
        fill(&b.explained_variance, out, 2, std::ptr::null_mut())
    })
}

/// Component 0 or 1: `d_model` values, unit length.
#[no_mangle]
pub unsafe extern "C" fn tt_basis_component(
    basis: *const TtBasis,
    index: usize,
    out: *mut f64,
    cap: usize,
    out_len: *mut usize,
) -> TtStatus {
    guard(|| {
        let b = &handle(basis, "basis")?.0;
        let c = b
            .components
            .get(index)
            .ok_or_else(|| Error::new(TtStatus::OutOfRange, format!("component {index} out of range (must be below 2)")))?;
        fill(c, out, cap, out_len)
    })
}

/// Mean the basis is centered on: `d_model` values.
#[no_mangle]
pub unsafe extern "C" fn tt_basis_mean(basis: *const TtBasis, out: *mut f64, cap: usize, out_len: *mut usize) -> TtStatus {
    guard(|| fill(&handle(basis, "basis")?.0.mean, out, cap, out_len))
}

/// 2-D positions of one token's states, as `n_layers + 1` interleaved
/// `(x, y)` pairs.
#[no_mangle]
pub unsafe extern "C" fn tt_basis_project_trajectory(
    basis: *const TtBasis,
    trace: *const TtTrace,
    token_pos: usize,
    out: *mut f64,
    cap: usize,
    out_len: *mut usize,
) -> TtStatus {
    guard(|| {
        let b = &handle(basis, "basis")?.0;
        let t = &handle(trace, "trace")?.0;
        let xy: Vec<f64> = b
            .project_trajectory(t, token_pos)?
            .into_iter()
            .flat_map(|p| [p.x, p.y])
            .collect();
        fill(&xy, out, cap, out_len)
    })
}
