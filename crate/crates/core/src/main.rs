// SPDX-License-Identifier: MIT OR Apache-2.0

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use tokentrail::projection::{FitScope, ProjectionBasis};
use tokentrail::server::{self, resources, AppState, ServerOptions};
use tokentrail::synthetic::{self, SyntheticSpec};
use tokentrail::{GlossStore, Model, Tokenizer};

const DEFAULT_GLOSS_LOG: &str = "glosses.jsonl";

#[derive(Parser)]
#[command(name = "tokentrail", version, about = "Follow tokens through GPT-2's residual stream and gloss what you find")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP API (and the UI bundle, if given).
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// 0 picks a free port
        #[arg(long, default_value_t = server::DEFAULT_PORT)]
        port: u16,
        /// weight file, or synthetic:<small|tiny|micro>
        #[arg(long, env = "MODEL_PATH")]
        model: String,
        #[arg(long, env = "GLOSS_LOG_PATH", default_value = DEFAULT_GLOSS_LOG)]
        gloss_log: PathBuf,
        /// directory with the built UI, served under /
        #[arg(long)]
        ui_dir: Option<PathBuf>,
        /// turn off permissive CORS headers
        #[arg(long)]
        no_cors: bool,
        #[arg(long, default_value_t = 16)]
        cache_sessions: usize,
    },
    /// Print the BPE tokens of TEXT, one `id<TAB>display` per line.
    Tokenize {
        text: String,
        /// encoder.json-style vocabulary (default: bundled GPT-2)
        #[arg(long, requires = "merges")]
        vocab: Option<PathBuf>,
        #[arg(long, requires = "vocab")]
        merges: Option<PathBuf>,
    },
    /// Trace a prompt and write the full session dump as JSON.
    Trace {
        #[arg(long)]
        prompt: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = "MODEL_PATH")]
        model: String,
        /// logit-lens depth per layer
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
    /// Write one session and its glosses in the line-oriented export format.
    ExportSession {
        #[arg(long)]
        session: String,
        #[arg(long, env = "GLOSS_LOG_PATH", default_value = DEFAULT_GLOSS_LOG)]
        gloss_log: PathBuf,
        /// when given, the projection basis is included
        #[arg(long, env = "MODEL_PATH")]
        model: Option<String>,
        /// default: stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Add the sessions and glosses of an export file to the gloss log.
    ImportGlosses {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, env = "GLOSS_LOG_PATH", default_value = DEFAULT_GLOSS_LOG)]
        gloss_log: PathBuf,
    },
    /// Write deterministic synthetic weights with GPT-2 geometry.
    SynthWeights {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "small")]
        spec: String,
        #[arg(long, value_enum, default_value_t = WeightFormat::Safetensors)]
        format: WeightFormat,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightFormat {
    Safetensors,
    /// JSON manifest plus one raw little-endian blob next to it
    Raw,
}

/// A failure with its exit status.
struct Failure(u8, String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(1, e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}

fn load_model(source: &str) -> Result<Model, Failure> {
    synthetic::load_model(source).map_err(|e| Failure(1, format!("loading model {source}: {e}")))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, bytes).map_err(|e| Failure(1, format!("{}: {e}", path.display())))
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Serve {
            host,
            port,
            model,
            gloss_log,
            ui_dir,
            no_cors,
            cache_sessions,
        } => {
            let opts = ServerOptions {
                cache_sessions,
                cors: !no_cors,
                ui_dir,
                ..ServerOptions::default()
            };
            let model = Arc::new(load_model(&model)?);
            let store = Arc::new(GlossStore::open(&gloss_log)?);
            let state = Arc::new(AppState::new(Arc::new(Tokenizer::gpt2()), model, store, &opts));
            let app = server::router(state, &opts);
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async move {
                let addr: SocketAddr = tokio::net::lookup_host((host.as_str(), port))
                    .await?
                    .next()
                    .ok_or_else(|| Failure(1, format!("cannot resolve {host}")))?;
                let listener = tokio::net::TcpListener::bind(addr).await?;
                let local = listener.local_addr()?;
                println!("listening on http://{local}");
                std::io::stdout().flush()?;
                let shutdown = async {
                    #[cfg(unix)]
                    {
                        use tokio::signal::unix::{signal, SignalKind};
                        match signal(SignalKind::terminate()) {
                            Ok(mut term) => {
                                tokio::select! {
                                    _ = tokio::signal::ctrl_c() => {}
                                    _ = term.recv() => {}
                                }
                            }
                            Err(_) => {
                                let _ = tokio::signal::ctrl_c().await;
                            }
                        }
                    }
                    #[cfg(not(unix))]
                    let _ = tokio::signal::ctrl_c().await;
                    tracing::info!("shutting down");
                };
                server::serve(listener, app, shutdown).await?;
                Ok(())
            })
        }
        Command::Tokenize { text, vocab, merges } => {
            let tokenizer = match (vocab, merges) {
                (Some(v), Some(m)) => Tokenizer::from_files(&v, &m)?,
                _ => Tokenizer::gpt2(),
            };
            let mut out = std::io::stdout().lock();
            for id in tokenizer.encode(&text) {
                writeln!(out, "{}\t{}", id, tokenizer.token_text(id)?)?;
            }
            Ok(())
        }
        Command::Trace { prompt, out, model, k } => {
            if prompt.is_empty() {
                return Err(Failure(1, "prompt must not be empty".into()));
            }
            let model = load_model(&model)?;
            let tokenizer = Tokenizer::gpt2();
            let ids = tokenizer.encode(&prompt);
            let trace = model.forward_trace(&ids)?;
            let basis = ProjectionBasis::fit_trace(&trace, FitScope::Session)?;
            let dump = resources::trace_dump(&model, &tokenizer, &prompt, &trace, &basis, k)?;
            let mut text = serde_json::to_string_pretty(&dump)?;
            text.push('\n');
            write_file(&out, text.as_bytes())
        }
        Command::ExportSession {
            session,
            gloss_log,
            model,
            out,
        } => {
            if !gloss_log.exists() {
                return Err(Failure(1, format!("{}: no such gloss log", gloss_log.display())));
            }
            let store = GlossStore::open(&gloss_log)?;
            let mut text = store.export_session(&session)?;
            if let Some(source) = model {
                let model = load_model(&source)?;
                let s = store.get_session(&session)?;
                let trace = model.forward_trace(&s.token_ids)?;
                let basis = ProjectionBasis::fit_trace(&trace, FitScope::Session)?;
                text = server::session_export(&text, &session, &basis);
            }
            match out {
                Some(path) => write_file(&path, text.as_bytes()),
                None => Ok(std::io::stdout().lock().write_all(text.as_bytes())?),
            }
        }
        Command::ImportGlosses { input, gloss_log } => {
            let data = std::fs::read(&input).map_err(|e| Failure(1, format!("{}: {e}", input.display())))?;
            let store = GlossStore::open(&gloss_log)?;
            let n = store.import(&data)?;
            println!("imported {n} glosses");
            Ok(())
        }
        Command::SynthWeights { out, spec, format } => {
            let spec = SyntheticSpec::by_name(&spec)
                .ok_or_else(|| Failure(2, format!("unknown spec {spec:?} (small, tiny, micro)")))?;
            match format {
                WeightFormat::Safetensors => synthetic::write_safetensors(&spec, &out)?,
                WeightFormat::Raw => {
                    let blob = out.with_extension("bin");
                    let blob_name = blob
                        .file_name()
                        .and_then(|n| n.to_str())
                        .ok_or_else(|| Failure(1, "output path needs a file name".into()))?;
                    synthetic::tensor_set(&spec).save_manifest(&out, blob_name)?;
                }
            }
            println!("wrote {} ({})", out.display(), spec.name);
            Ok(())
        }
    }
}
