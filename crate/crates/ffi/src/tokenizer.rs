// SPDX-License-Identifier: MIT OR Apache-2.0

use std::ffi::c_char;
use std::path::Path;

use tokentrail::{TokenId, Tokenizer};

use crate::error::{guard, TtStatus};
use crate::{fill, free_handle, handle, put, put_handle, put_string, slice_arg, str_arg};

/// Byte-level BPE tokenizer.
pub struct TtTokenizer(pub(crate) Tokenizer);

/// The bundled GPT-2 tokenizer.
#[no_mangle]
pub unsafe extern "C" fn tt_tokenizer_new_gpt2(out: *mut *mut TtTokenizer) -> TtStatus {
    guard(|| put_handle(out, TtTokenizer(Tokenizer::gpt2())))
}

/// A tokenizer from an `encoder.json` vocabulary and a `vocab.bpe` merge
/// list.
#[no_mangle]
pub unsafe extern "C" fn tt_tokenizer_from_files(
    vocab_path: *const c_char,
    merges_path: *const c_char,
    out: *mut *mut TtTokenizer,
) -> TtStatus {
    guard(|| {
        let vocab = str_arg(vocab_path, "vocab_path")?;
        let merges = str_arg(merges_path, "merges_path")?;
        let tok = Tokenizer::from_files(Path::new(vocab), Path::new(merges))?;
        put_handle(out, TtTokenizer(tok))
    })
}

#[no_mangle]
pub unsafe extern "C" fn tt_tokenizer_free(tokenizer: *mut TtTokenizer) {
    free_handle(tokenizer)
}

#[no_mangle]
pub unsafe extern "C" fn tt_tokenizer_vocab_size(tokenizer: *const TtTokenizer, out: *mut usize) -> TtStatus {
    guard(|| put(out, handle(tokenizer, "tokenizer")?.0.vocab_size()))
}

/// Token ids of `text`.
#[no_mangle]
pub unsafe extern "C" fn tt_tokenizer_encode(
    tokenizer: *const TtTokenizer,
    text: *const c_char,
    out: *mut u32,
    cap: usize,
    out_len: *mut usize,
) -> TtStatus {
    guard(|| {
        let tok = handle(tokenizer, "tokenizer")?;
        let ids: Vec<u32> = tok.0.encode(str_arg(text, "text")?).into_iter().map(|t| t.0).collect();
        fill(&ids, out, cap, out_len)
    })
}

/// Text of `ids`; byte runs that are not valid UTF-8 become U+FFFD.
#[no_mangle]
pub unsafe extern "C" fn tt_tokenizer_decode(
    tokenizer: *const TtTokenizer,
    ids: *const u32,
    n_ids: usize,
    out: *mut *mut c_char,
) -> TtStatus {
    guard(|| {
        let tok = handle(tokenizer, "tokenizer")?;
        let ids: Vec<TokenId> = slice_arg(ids, n_ids, "ids")?.iter().copied().map(TokenId).collect();
        put_string(out, tok.0.decode(&ids)?)
    })
}

/// Raw bytes of `ids`, exactly as the vocabulary stores them.
#[no_mangle]
pub unsafe extern "C" fn tt_tokenizer_decode_bytes(
    tokenizer: *const TtTokenizer,
    ids: *const u32,
    n_ids: usize,
    out: *mut u8,
    cap: usize,
    out_len: *mut usize,
) -> TtStatus {
    guard(|| {
        let tok = handle(tokenizer, "tokenizer")?;
        let ids: Vec<TokenId> = slice_arg(ids, n_ids, "ids")?.iter().copied().map(TokenId).collect();
        fill(&tok.0.decode_bytes(&ids)?, out, cap, out_len)
    })
}

/// Display label of one token, with a visible space marker.
#[no_mangle]
pub unsafe extern "C" fn tt_tokenizer_token_text(
    tokenizer: *const TtTokenizer,
    id: u32,
    out: *mut *mut c_char,
) -> TtStatus {
    guard(|| put_string(out, handle(tokenizer, "tokenizer")?.0.token_text(TokenId(id))?))
}
