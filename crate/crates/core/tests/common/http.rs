// SPDX-License-Identifier: MIT OR Apache-2.0

//! A live server on an ephemeral port plus JSON Schema checks.

use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use reqwest::{Method, StatusCode};
use serde_json::Value;
use tokio::sync::oneshot;
use tokentrail::server::{self, AppState, ServerOptions};
use tokentrail::synthetic::{self, SyntheticSpec};
use tokentrail::{GlossStore, Model, Tokenizer};

pub fn shared_tokenizer() -> Arc<Tokenizer> {
    static TOK: OnceLock<Arc<Tokenizer>> = OnceLock::new();
    TOK.get_or_init(|| Arc::new(Tokenizer::gpt2())).clone()
}

pub fn shared_tiny() -> Arc<Model> {
    static MODEL: OnceLock<Arc<Model>> = OnceLock::new();
    MODEL.get_or_init(|| Arc::new(synthetic::model(&SyntheticSpec::tiny()))).clone()
}

pub struct TestServer {
    pub base: String,
    pub state: Arc<AppState>,
    pub client: reqwest::Client,
    stop: Option<oneshot::Sender<()>>,
    task: Option<tokio::task::JoinHandle<()>>,
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: reqwest::header::HeaderMap,
    pub text: String,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.text).unwrap_or_else(|e| panic!("not JSON ({e}): {}", self.text))
    }

    pub fn code(&self) -> String {
        self.json()["error"]["code"].as_str().unwrap_or_default().to_string()
    }
}

impl TestServer {
    pub async fn start(store: GlossStore, opts: ServerOptions) -> Self {
        Self::start_with(shared_tiny(), store, opts).await
    }

    pub async fn start_with(model: Arc<Model>, store: GlossStore, opts: ServerOptions) -> Self {
        let state = Arc::new(AppState::new(shared_tokenizer(), model, Arc::new(store), &opts));
        let app = server::router(state.clone(), &opts);
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}/api/v1", listener.local_addr().unwrap());
        let (stop, stopped) = oneshot::channel::<()>();
        let task = tokio::spawn(async move {
            server::serve(listener, app, async {
                let _ = stopped.await;
            })
            .await
            .unwrap();
        });
        TestServer {
            base,
            state,
            client: reqwest::Client::new(),
            stop: Some(stop),
            task: Some(task),
        }
    }

    pub async fn memory() -> Self {
        Self::start(GlossStore::in_memory(), ServerOptions::default()).await
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub async fn send(&self, method: Method, path: &str, body: Option<Vec<u8>>) -> Reply {
        let mut req = self.client.request(method, self.url(path));
        if let Some(b) = body {
            req = req.header("content-type", "application/json").body(b);
        }
        let resp = req.send().await.unwrap();
        Reply {
            status: resp.status(),
            headers: resp.headers().clone(),
            text: resp.text().await.unwrap(),
        }
    }

    pub async fn get(&self, path: &str) -> Reply {
        self.send(Method::GET, path, None).await
    }

    pub async fn post(&self, path: &str, body: &Value) -> Reply {
        self.send(Method::POST, path, Some(serde_json::to_vec(body).unwrap())).await
    }

    pub async fn patch(&self, path: &str, body: &Value) -> Reply {
        self.send(Method::PATCH, path, Some(serde_json::to_vec(body).unwrap())).await
    }

    pub async fn delete(&self, path: &str) -> Reply {
        self.send(Method::DELETE, path, None).await
    }

    /// Creates a session and returns its resource.
    pub async fn session(&self, prompt: &str) -> Value {
        let r = self.post("/sessions", &serde_json::json!({ "prompt": prompt })).await;
        assert_eq!(r.status, StatusCode::CREATED, "{}", r.text);
        r.json()
    }

    pub async fn stop(mut self) {
        if let Some(s) = self.stop.take() {
            let _ = s.send(());
        }
        if let Some(t) = self.task.take() {
            t.await.unwrap();
        }
    }
}

fn schema_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../schema")
}

fn load_schema(file: &str) -> Value {
    let text = std::fs::read_to_string(schema_dir().join(file)).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// Validates `value` against `$defs/<def>` of the API schema.
pub fn check_api(def: &str, value: &Value) {
    static DOC: OnceLock<Value> = OnceLock::new();
    let mut doc = DOC.get_or_init(|| load_schema("api.schema.json")).clone();
    doc["$ref"] = Value::String(format!("#/$defs/{def}"));
    let validator = jsonschema::validator_for(&doc).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(value).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "{def} schema violations: {errors:?}\n{value}");
}

/// Validates one line of a gloss log or session export.
pub fn check_log_line(line: &str) {
    static VALIDATOR: OnceLock<jsonschema::Validator> = OnceLock::new();
    let v = VALIDATOR.get_or_init(|| jsonschema::validator_for(&load_schema("gloss-log.schema.json")).unwrap());
    let value: Value = serde_json::from_str(line).unwrap();
    let errors: Vec<String> = v.iter_errors(&value).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "log line violations: {errors:?}\n{line}");
}
