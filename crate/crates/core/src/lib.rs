// SPDX-License-Identifier: MIT OR Apache-2.0

pub mod glossstore;
pub mod model;
pub mod projection;
pub mod server;
pub mod synthetic;
pub mod tensorfile;
pub mod tokenizer;

pub use glossstore::{Anchor, AnchorKind, Gloss, GlossStore, Session, StoreError};
pub use model::{Model, ModelConfig, ModelError, Trace};
pub use projection::{Point2D, ProjectionBasis, ProjectionError, ShiftProfile};
pub use tokenizer::{TokenId, Tokenizer, TokenizerError};
