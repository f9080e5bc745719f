// SPDX-License-Identifier: MIT OR Apache-2.0

//! HTTP JSON API under `/api/v1`, plus optional static hosting of a UI
//! bundle under `/`.

mod cache;
mod error;
mod handlers;
pub mod resources;

use std::future::Future;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::DefaultBodyLimit;
use axum::handler::HandlerWithoutStateExt;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::Router;
use tower_http::catch_panic::CatchPanicLayer;
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;

use crate::glossstore::GlossStore;
use crate::model::Model;
use crate::tokenizer::Tokenizer;

pub use cache::{SessionView, TraceCache};
pub use error::ApiError;
pub use handlers::session_export;

pub const DEFAULT_PORT: u16 = 8077;

#[derive(Debug, Clone)]
pub struct ServerOptions {
    /// most sessions whose traces stay in memory
    pub cache_sessions: usize,
    /// approximate memory bound for cached traces
    pub cache_bytes: usize,
    pub cors: bool,
    pub ui_dir: Option<PathBuf>,
    pub max_body_bytes: usize,
}

impl Default for ServerOptions {
    fn default() -> Self {
        ServerOptions {
            cache_sessions: 16,
            cache_bytes: 1 << 30,
            cors: true,
            ui_dir: None,
            max_body_bytes: 16 << 20,
        }
    }
}

pub struct AppState {
    pub tokenizer: Arc<Tokenizer>,
    pub model: Arc<Model>,
    pub store: Arc<GlossStore>,
    pub cache: TraceCache,
}

impl AppState {
    pub fn new(tokenizer: Arc<Tokenizer>, model: Arc<Model>, store: Arc<GlossStore>, opts: &ServerOptions) -> Self {
        AppState {
            tokenizer,
            model,
            store,
            cache: TraceCache::new(opts.cache_sessions, opts.cache_bytes),
        }
    }
}

async fn no_route() -> impl IntoResponse {
    ApiError::not_found("no such resource")
}

async fn bad_method() -> impl IntoResponse {
    ApiError::new(
        axum::http::StatusCode::METHOD_NOT_ALLOWED,
        "method_not_allowed",
        "method not allowed for this resource",
    )
}

pub fn router(state: Arc<AppState>, opts: &ServerOptions) -> Router {
    use handlers::*;
    let api = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/trajectory/{token_pos}", get(get_trajectory))
        .route("/sessions/{id}/grid", get(get_grid))
        .route("/sessions/{id}/attention/{block}", get(get_attention))
        .route("/sessions/{id}/export", get(export_session))
        .route("/glosses", post(create_gloss).get(list_glosses))
        .route("/glosses/{id}", get(get_gloss).patch(update_gloss).delete(delete_gloss))
        .route("/import", post(import_glosses))
        .fallback(no_route)
        .method_not_allowed_fallback(bad_method)
        .with_state(state);

    let mut app = Router::new().nest("/api/v1", api);
    app = match &opts.ui_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir).fallback(no_route.into_service())),
        None => app.fallback(no_route),
    };
    app = app
        .layer(DefaultBodyLimit::max(opts.max_body_bytes))
        .layer(CatchPanicLayer::custom(|_| {
            ApiError::internal("internal error").into_response()
        }));
    if opts.cors {
        app = app.layer(CorsLayer::permissive());
    }
    app
}

/// Serves `app` on `listener` until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    app: Router,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await
}
