// SPDX-License-Identifier: MIT OR Apache-2.0

use std::ffi::c_char;

use tokentrail::glossstore::{GlossFilter, GlossPatch, NewGloss};
use tokentrail::{GlossStore, TokenId};

use crate::error::{guard, Error, TtStatus};
use crate::{free_handle, handle, put, put_handle, put_json, put_string, slice_arg, str_arg};

/// Durable gloss log. Writes are serialized internally.
pub struct TtStore(pub(crate) GlossStore);

fn json_arg<T: serde::de::DeserializeOwned>(text: &str, name: &str) -> Result<T, Error> {
    serde_json::from_str(text).map_err(|e| Error::new(TtStatus::InvalidArgument, format!("{name}: {e}")))
}

/// Opens (creating if absent) the log at `path`, replaying it.
#[no_mangle]
pub unsafe extern "C" fn tt_store_open(path: *const c_char, out: *mut *mut TtStore) -> TtStatus {
    guard(|| put_handle(out, TtStore(GlossStore::open(str_arg(path, "path")?)?)))
}

/// A store that keeps nothing on disk.
#[no_mangle]
pub unsafe extern "C" fn tt_store_in_memory(out: *mut *mut TtStore) -> TtStatus {
    guard(|| put_handle(out, TtStore(GlossStore::in_memory())))
}

#[no_mangle]
pub unsafe extern "C" fn tt_store_free(store: *mut TtStore) {
    free_handle(store)
}

/// Records a session; `*out` receives the session as JSON.
#[no_mangle]
pub unsafe extern "C" fn tt_store_create_session(
    store: *const TtStore,
    prompt: *const c_char,
    ids: *const u32,
    n_ids: usize,
    model_id: *const c_char,
    n_layers: usize,
    out: *mut *mut c_char,
) -> TtStatus {
    guard(|| {
        let store = handle(store, "store")?;
        let ids: Vec<TokenId> = slice_arg(ids, n_ids, "ids")?.iter().copied().map(TokenId).collect();
        let s = store
            .0
            .create_session(str_arg(prompt, "prompt")?, ids, str_arg(model_id, "model_id")?, n_layers)?;
        put_json(out, &s)
    })
}

#[no_mangle]
pub unsafe extern "C" fn tt_store_get_session(
    store: *const TtStore,
    session_id: *const c_char,
    out: *mut *mut c_char,
) -> TtStatus {
    guard(|| put_json(out, &handle(store, "store")?.0.get_session(str_arg(session_id, "session_id")?)?))
}

/// Creates a gloss from `{"session_id", "anchor", "body", "author"?,
/// "tags"?}`; `*out` receives the stored gloss.
#[no_mangle]
pub unsafe extern "C" fn tt_store_create_gloss(
    store: *const TtStore,
    gloss_json: *const c_char,
    out: *mut *mut c_char,
) -> TtStatus {
    guard(|| {
        let store = handle(store, "store")?;
        let new: NewGloss = json_arg(str_arg(gloss_json, "gloss_json")?, "gloss_json")?;
        put_json(out, &store.0.create_gloss(new)?)
    })
}

#[no_mangle]
pub unsafe extern "C" fn tt_store_get_gloss(
    store: *const TtStore,
    gloss_id: *const c_char,
    out: *mut *mut c_char,
) -> TtStatus {
    guard(|| put_json(out, &handle(store, "store")?.0.get_gloss(str_arg(gloss_id, "gloss_id")?)?))
}

/// Glosses of a session as a JSON array. `filter_json` may be NULL or an
/// object with any of `token_pos`, `layer`, `tag`.
#[no_mangle]
pub unsafe extern "C" fn tt_store_list_glosses(
    store: *const TtStore,
    session_id: *const c_char,
    filter_json: *const c_char,
    out: *mut *mut c_char,
) -> TtStatus {
    guard(|| {
        let store = handle(store, "store")?;
        let filter: GlossFilter = if filter_json.is_null() {
            GlossFilter::default()
        } else {
            json_arg(str_arg(filter_json, "filter_json")?, "filter_json")?
        };
        put_json(out, &store.0.list_glosses(str_arg(session_id, "session_id")?, &filter)?)
    })
}

/// Applies `{"body"?, "tags"?}`; an `anchor` field is refused with
/// `TT_STATUS_IMMUTABLE`.
#[no_mangle]
pub unsafe extern "C" fn tt_store_update_gloss(
    store: *const TtStore,
    gloss_id: *const c_char,
    patch_json: *const c_char,
    out: *mut *mut c_char,
) -> TtStatus {
    guard(|| {
        let store = handle(store, "store")?;
        let patch: GlossPatch = json_arg(str_arg(patch_json, "patch_json")?, "patch_json")?;
        put_json(out, &store.0.update_gloss(str_arg(gloss_id, "gloss_id")?, patch)?)
    })
}

#[no_mangle]
pub unsafe extern "C" fn tt_store_delete_gloss(store: *const TtStore, gloss_id: *const c_char) -> TtStatus {
    guard(|| Ok(handle(store, "store")?.0.delete_gloss(str_arg(gloss_id, "gloss_id")?)?))
}

/// Newline-delimited session record followed by its live glosses.
#[no_mangle]
pub unsafe extern "C" fn tt_store_export_session(
    store: *const TtStore,
    session_id: *const c_char,
    out: *mut *mut c_char,
) -> TtStatus {
    guard(|| put_string(out, handle(store, "store")?.0.export_session(str_arg(session_id, "session_id")?)?))
}

/// Imports an export stream atomically; `*out_count` receives the number
/// of glosses added.
#[no_mangle]
pub unsafe extern "C" fn tt_store_import(
    store: *const TtStore,
    data: *const u8,
    len: usize,
    out_count: *mut usize,
) -> TtStatus {
    guard(|| {
        let store = handle(store, "store")?;
        let n = store.0.import(slice_arg(data, len, "data")?)?;
        put(out_count, n)
    })
}
