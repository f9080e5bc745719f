// SPDX-License-Identifier: MIT OR Apache-2.0

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{self, AssertUnwindSafe};

use tokentrail::projection::ProjectionError;
use tokentrail::tensorfile::TensorFileError;
use tokentrail::{ModelError, StoreError, TokenizerError};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TtStatus {
    Ok = 0,
    /// a required pointer argument was NULL
    NullArgument = 1,
    InvalidUtf8 = 2,
    /// malformed JSON, empty input, unknown model name and the like
    InvalidArgument = 3,
    /// token position, layer, block or token id past its bound
    OutOfRange = 4,
    NotFound = 5,
    Conflict = 6,
    /// a gloss update tried to change a fixed field
    Immutable = 7,
    /// an import stream line is not a valid record
    Parse = 8,
    /// input longer than the model context
    TooLong = 9,
    BufferTooSmall = 10,
    /// file system failure, or a corrupt gloss log
    Io = 11,
    /// weights could not be loaded or do not form a model
    Model = 12,
    /// an internal panic was caught at the boundary
    Panic = 13,
}

#[derive(Debug)]
pub(crate) struct Error {
    pub status: TtStatus,
    pub message: String,
}

impl Error {
    pub fn new(status: TtStatus, message: impl Into<String>) -> Self {
        Error {
            status,
            message: message.into(),
        }
    }

    pub fn null(name: &str) -> Self {
        Self::new(TtStatus::NullArgument, format!("{name} is NULL"))
    }
}

impl From<StoreError> for Error {
    fn from(e: StoreError) -> Self {
        let status = match &e {
            StoreError::NotFound { .. } => TtStatus::NotFound,
            StoreError::AnchorRange { .. } => TtStatus::OutOfRange,
            StoreError::Validation(_) => TtStatus::InvalidArgument,
            StoreError::ImmutableField(_) => TtStatus::Immutable,
            StoreError::Conflict { .. } => TtStatus::Conflict,
            StoreError::Parse { .. } => TtStatus::Parse,
            StoreError::Corrupt { .. } | StoreError::Io { .. } => TtStatus::Io,
        };
        Error::new(status, e.to_string())
    }
}

impl From<ModelError> for Error {
    fn from(e: ModelError) -> Self {
        let status = match &e {
            ModelError::ContextLength { .. } => TtStatus::TooLong,
            ModelError::OutOfRange { .. } => TtStatus::OutOfRange,
            ModelError::EmptyInput => TtStatus::InvalidArgument,
            ModelError::Config(_) => TtStatus::InvalidArgument,
            ModelError::File(TensorFileError::Io { .. }) => TtStatus::Io,
            _ => TtStatus::Model,
        };
        Error::new(status, e.to_string())
    }
}

impl From<TokenizerError> for Error {
    fn from(e: TokenizerError) -> Self {
        let status = match &e {
            TokenizerError::OutOfRange { .. } => TtStatus::OutOfRange,
            TokenizerError::Io { .. } => TtStatus::Io,
            _ => TtStatus::InvalidArgument,
        };
        Error::new(status, e.to_string())
    }
}

impl From<ProjectionError> for Error {
    fn from(e: ProjectionError) -> Self {
        let status = match &e {
            ProjectionError::OutOfRange { .. } => TtStatus::OutOfRange,
            _ => TtStatus::InvalidArgument,
        };
        Error::new(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', "\\0")).expect("NUL bytes escaped");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Message for the most recent failure on this thread, or NULL after a
/// success. The pointer stays valid until the next call into this library
/// from the same thread.
#[no_mangle]
pub extern "C" fn tt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Runs `f`, records its error message and maps the outcome to a status.
pub(crate) fn guard(f: impl FnOnce() -> Result<(), Error>) -> TtStatus {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            TtStatus::Ok
        }
        Ok(Err(e)) => {
            set_last_error(e.message);
            e.status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal error: {msg}"));
            TtStatus::Panic
        }
    }
}
