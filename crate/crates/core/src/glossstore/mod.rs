// SPDX-License-Identifier: MIT OR Apache-2.0

//! Glosses: reader annotations anchored to token/layer coordinates of a
//! traced session, persisted in an append-only JSON-lines log.

pub mod record;
mod store;

use std::collections::BTreeSet;
use std::path::PathBuf;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::tokenizer::TokenId;

pub use record::Record;
pub use store::{GlossStore, Snapshot, DERIVED_KIND};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{what} {id} not found")]
    NotFound { what: &'static str, id: String },
    #[error("anchor {field} = {value} out of range (must be {bound})")]
    AnchorRange {
        field: &'static str,
        value: usize,
        bound: String,
    },
    #[error("{0}")]
    Validation(String),
    #[error("field {0} cannot be changed after creation")]
    ImmutableField(&'static str),
    #[error("{what} {id} already exists")]
    Conflict { what: &'static str, id: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{}: line {line}: {message}", path.display())]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub prompt: String,
    pub token_ids: Vec<TokenId>,
    pub model_id: String,
    /// Block count of the model; anchors may name layers `0..=n_layers`.
    pub n_layers: usize,
    #[serde(with = "record::timestamp")]
    pub created_at: DateTime<Utc>,
}

impl Session {
    pub fn n_tokens(&self) -> usize {
        self.token_ids.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorKind {
    /// one token at one layer
    TokenLayer,
    /// a whole token trajectory
    Token,
    /// one layer across all tokens
    Layer,
    /// layers `layer..=layer_end`, optionally of one token
    Segment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Anchor {
    pub kind: AnchorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_pos: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer_end: Option<usize>,
}

impl Anchor {
    pub fn token_layer(token_pos: usize, layer: usize) -> Self {
        Anchor {
            kind: AnchorKind::TokenLayer,
            token_pos: Some(token_pos),
            layer: Some(layer),
            layer_end: None,
        }
    }

    pub fn token(token_pos: usize) -> Self {
        Anchor {
            kind: AnchorKind::Token,
            token_pos: Some(token_pos),
            layer: None,
            layer_end: None,
        }
    }

    pub fn layer(layer: usize) -> Self {
        Anchor {
            kind: AnchorKind::Layer,
            token_pos: None,
            layer: Some(layer),
            layer_end: None,
        }
    }

    pub fn segment(token_pos: Option<usize>, layer: usize, layer_end: usize) -> Self {
        Anchor {
            kind: AnchorKind::Segment,
            token_pos,
            layer: Some(layer),
            layer_end: Some(layer_end),
        }
    }

    /// Checks field presence for the kind and bounds against `session`.
    pub fn validate(&self, session: &Session) -> Result<(), StoreError> {
        let (needs_token, needs_layer, needs_end) = match self.kind {
            AnchorKind::TokenLayer => (Some(true), true, false),
            AnchorKind::Token => (Some(true), false, false),
            AnchorKind::Layer => (Some(false), true, false),
            AnchorKind::Segment => (None, true, true),
        };
        let kind = serde_json::to_value(self.kind).expect("plain enum");
        let presence = |field: &str, present: bool, required: bool| {
            if present == required {
                Ok(())
            } else if required {
                Err(StoreError::Validation(format!("{kind} anchor requires {field}")))
            } else {
                Err(StoreError::Validation(format!("{kind} anchor does not take {field}")))
            }
        };
        if let Some(required) = needs_token {
            presence("token_pos", self.token_pos.is_some(), required)?;
        }
        presence("layer", self.layer.is_some(), needs_layer)?;
        presence("layer_end", self.layer_end.is_some(), needs_end)?;

        if let Some(t) = self.token_pos {
            if t >= session.n_tokens() {
                return Err(StoreError::AnchorRange {
                    field: "token_pos",
                    value: t,
                    bound: format!("< {}", session.n_tokens()),
                });
            }
        }
        if let Some(l) = self.layer {
            if l > session.n_layers {
                return Err(StoreError::AnchorRange {
                    field: "layer",
                    value: l,
                    bound: format!("<= {}", session.n_layers),
                });
            }
        }
        if let Some(end) = self.layer_end {
            let start = self.layer.unwrap_or(0);
            if end <= start || end > session.n_layers {
                return Err(StoreError::AnchorRange {
                    field: "layer_end",
                    value: end,
                    bound: format!("in {}..={}", start + 1, session.n_layers),
                });
            }
        }
        Ok(())
    }

    /// Layers this anchor covers, if it is layer-scoped.
    fn layers(&self) -> Option<std::ops::RangeInclusive<usize>> {
        let l = self.layer?;
        Some(l..=self.layer_end.unwrap_or(l))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gloss {
    pub gloss_id: String,
    pub session_id: String,
    pub anchor: Anchor,
    pub body: String,
    pub author: String,
    #[serde(with = "record::timestamp")]
    pub created_at: DateTime<Utc>,
    #[serde(with = "record::timestamp")]
    pub updated_at: DateTime<Utc>,
    #[serde(default)]
    pub tags: BTreeSet<String>,
}

/// Input for [`GlossStore::create_gloss`].
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewGloss {
    pub session_id: String,
    pub anchor: Anchor,
    pub body: String,
    #[serde(default)]
    pub author: String,
    #[serde(default)]
    pub tags: BTreeSet<String>,
}

/// Changes for [`GlossStore::update_gloss`]; `anchor` is accepted only so
/// it can be rejected.
#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
pub struct GlossPatch {
    #[serde(default)]
    pub body: Option<String>,
    #[serde(default)]
    pub tags: Option<BTreeSet<String>>,
    #[serde(default)]
    pub anchor: Option<Anchor>,
}

/// Conjunctive filter; `None` matches everything.
///
/// `token_pos` matches anchors scoped to that token; `layer` matches anchors
/// whose layer range includes it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
pub struct GlossFilter {
    pub token_pos: Option<usize>,
    pub layer: Option<usize>,
    pub tag: Option<String>,
}

impl GlossFilter {
    pub fn matches(&self, g: &Gloss) -> bool {
        if let Some(t) = self.token_pos {
            if g.anchor.token_pos != Some(t) {
                return false;
            }
        }
        if let Some(l) = self.layer {
            if !g.anchor.layers().is_some_and(|r| r.contains(&l)) {
                return false;
            }
        }
        if let Some(tag) = &self.tag {
            if !g.tags.contains(tag) {
                return false;
            }
        }
        true
    }
}

fn check_body(body: &str) -> Result<(), StoreError> {
    if body.trim().is_empty() {
        return Err(StoreError::Validation("body must not be empty".into()));
    }
    Ok(())
}

/// Fresh 128-bit identifier as 32 lowercase hex digits.
pub fn new_id() -> String {
    format!("{:032x}", rand::random::<u128>())
}
