// SPDX-License-Identifier: MIT OR Apache-2.0

//! C ABI over the tokentrail core.
//!
//! Conventions shared by every function:
//!
//! - The return value is a [`TtStatus`]; on anything but `TT_STATUS_OK`,
//!   [`tt_last_error`] describes the failure on the calling thread.
//! - Objects are opaque handles created by `*_new`/`*_load`/`*_open`
//!   functions and released with the matching `*_free`. Handles are
//!   immutable or internally synchronized, so one handle may be used from
//!   several threads at once.
//! - Array results are copied into caller buffers `(out, cap, out_len)`.
//!   `*out_len` always receives the full length; pass `out = NULL` to ask
//!   for it. A buffer shorter than the result gives
//!   `TT_STATUS_BUFFER_TOO_SMALL` and is left untouched.
//! - String results are NUL-terminated, heap-allocated and released with
//!   [`tt_string_free`]. Structured records travel as JSON text in the
//!   same shape the HTTP API uses.
//! - Text arguments must be NUL-terminated UTF-8.

#![allow(clippy::missing_safety_doc)]

mod error;
mod model;
mod store;
mod tokenizer;

use std::ffi::{c_char, CStr, CString};

pub use error::{tt_last_error, TtStatus};
pub use model::*;
pub use store::*;
pub use tokenizer::*;

use error::Error;

static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
    Ok(v) => v,
    Err(_) => panic!("version string"),
};

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn tt_version() -> *const c_char {
    VERSION.as_ptr()
}

/// Releases a string returned by this library. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn tt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

pub(crate) unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Error> {
    if p.is_null() {
        return Err(Error::null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Error::new(TtStatus::InvalidUtf8, format!("{name}: {e}")))
}

pub(crate) unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Error> {
    p.as_ref().ok_or_else(|| Error::null(name))
}

pub(crate) unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Error> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Error::null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Stores a new handle in `*out`.
pub(crate) unsafe fn put_handle<T>(out: *mut *mut T, value: T) -> Result<(), Error> {
    if out.is_null() {
        return Err(Error::null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

pub(crate) unsafe fn put<T>(out: *mut T, value: T) -> Result<(), Error> {
    if out.is_null() {
        return Err(Error::null("out"));
    }
    *out = value;
    Ok(())
}

pub(crate) unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Error> {
    if out.is_null() {
        return Err(Error::null("out"));
    }
    let c = CString::new(s).map_err(|_| Error::new(TtStatus::InvalidArgument, "result contains a NUL byte"))?;
    *out = c.into_raw();
    Ok(())
}

pub(crate) unsafe fn put_json<T: serde::Serialize>(out: *mut *mut c_char, value: &T) -> Result<(), Error> {
    let text = serde_json::to_string(value).map_err(|e| Error::new(TtStatus::InvalidArgument, e.to_string()))?;
    put_string(out, text)
}

/// Copies `src` into a caller buffer following the `(out, cap, out_len)`
/// convention.
pub(crate) unsafe fn fill<T: Copy>(src: &[T], out: *mut T, cap: usize, out_len: *mut usize) -> Result<(), Error> {
    if !out_len.is_null() {
        *out_len = src.len();
    }
    if out.is_null() {
        return if out_len.is_null() { Err(Error::null("out_len")) } else { Ok(()) };
    }
    if cap < src.len() {
        return Err(Error::new(
            TtStatus::BufferTooSmall,
            format!("buffer holds {cap} elements, {} needed", src.len()),
        ));
    }
    std::ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

/// Drops a handle created by [`put_handle`].
pub(crate) unsafe fn free_handle<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_is_package_version() {
        let v = unsafe { CStr::from_ptr(tt_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn fill_reports_length_and_refuses_short_buffers() {
        let src = [1u32, 2, 3];
        let mut len = 0usize;
        unsafe {
            assert!(fill(&src, std::ptr::null_mut(), 0, &mut len).is_ok());
            assert_eq!(len, 3);
            let mut small = [0u32; 2];
            let e = fill(&src, small.as_mut_ptr(), 2, &mut len).unwrap_err();
            assert_eq!(e.status, TtStatus::BufferTooSmall);
            assert_eq!(small, [0, 0]);
            let mut big = [0u32; 4];
            fill(&src, big.as_mut_ptr(), 4, &mut len).unwrap();
            assert_eq!(big, [1, 2, 3, 0]);
        }
    }
}
