use std::net::{SocketAddr, TcpListener};
use std::path::PathBuf;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use tokio::sync::{oneshot, Semaphore};

use super::{LiveState, Phase};
use crate::error::{Error, Result};
use crate::octree::{NodeName, METADATA_FILE};

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub port: u16,
    /// Directory of a built octree, or the output directory of an attached
    /// build.
    pub dir: PathBuf,
    pub cors: bool,
    pub max_concurrent_node_reads: usize,
}

impl ServeConfig {
    pub fn new(port: u16, dir: impl Into<PathBuf>) -> Self {
        Self {
            port,
            dir: dir.into(),
            cors: true,
            max_concurrent_node_reads: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.port == 0 {
            return Err(Error::InvalidConfig("port must be in 1..=65535".into()));
        }
        if self.max_concurrent_node_reads == 0 {
            return Err(Error::InvalidConfig("max_concurrent_node_reads must be >= 1".into()));
        }
        Ok(())
    }
}

struct AppState {
    live: Arc<LiveState>,
    reads: Semaphore,
}

/// A running server. Dropping it stops the server.
pub struct Service {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl Service {
    /// Serves `live` on an already bound listener.
    pub fn start(listener: TcpListener, cfg: &ServeConfig, live: Arc<LiveState>) -> Result<Self> {
        if cfg.max_concurrent_node_reads == 0 {
            return Err(Error::InvalidConfig("max_concurrent_node_reads must be >= 1".into()));
        }
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let app = router(
            Arc::new(AppState {
                live,
                reads: Semaphore::new(cfg.max_concurrent_node_reads),
            }),
            cfg.cors,
        );
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .thread_name("fastpoints-http")
            .enable_all()
            .build()?;
        let (tx, rx) = oneshot::channel::<()>();
        let (ready_tx, ready_rx) = std::sync::mpsc::channel();
        let thread = std::thread::Builder::new()
            .name("fastpoints-serve".into())
            .spawn(move || {
                runtime.block_on(async move {
                    let listener = match tokio::net::TcpListener::from_std(listener) {
                        Ok(l) => l,
                        Err(e) => {
                            let _ = ready_tx.send(Err(e));
                            return;
                        }
                    };
                    let _ = ready_tx.send(Ok(()));
                    let _ = axum::serve(listener, app)
                        .with_graceful_shutdown(async {
                            let _ = rx.await;
                        })
                        .await;
                });
            })?;
        ready_rx
            .recv()
            .map_err(|_| Error::InvalidConfig("server thread exited".into()))??;
        Ok(Self {
            addr,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }

    /// Blocks until the server stops.
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    pub fn stop(mut self) {
        self.stop_inner();
    }

    fn stop_inner(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for Service {
    fn drop(&mut self) {
        self.stop_inner();
    }
}

/// Binds `127.0.0.1:<port>` and serves `live`.
pub fn serve(cfg: &ServeConfig, live: Arc<LiveState>) -> Result<Service> {
    cfg.validate()?;
    let listener = TcpListener::bind(("127.0.0.1", cfg.port))?;
    Service::start(listener, cfg, live)
}

fn router(state: Arc<AppState>, cors: bool) -> Router {
    let r = Router::new()
        .route("/status", get(status))
        .route("/metadata", get(metadata))
        .route("/hierarchy", get(hierarchy))
        .route("/decimated", get(decimated))
        .route("/nodes/{name}", get(node))
        .route("/healthz", get(|| async { "ok" }))
        .with_state(state);
    if cors {
        r.layer(axum::middleware::map_response(add_cors))
    } else {
        r
    }
}

async fn add_cors(mut res: Response) -> Response {
    let h = res.headers_mut();
    h.insert(header::ACCESS_CONTROL_ALLOW_ORIGIN, HeaderValue::from_static("*"));
    h.insert(header::ACCESS_CONTROL_ALLOW_METHODS, HeaderValue::from_static("GET, OPTIONS"));
    h.insert(header::ACCESS_CONTROL_ALLOW_HEADERS, HeaderValue::from_static("*"));
    res
}

fn octet(bytes: impl Into<Bytes>) -> Response {
    ([(header::CONTENT_TYPE, "application/octet-stream")], bytes.into()).into_response()
}

fn error(code: StatusCode, msg: impl Into<String>) -> Response {
    (code, Json(serde_json::json!({ "error": msg.into() }))).into_response()
}

fn internal(e: impl std::fmt::Display) -> Response {
    error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
}

async fn status(State(s): State<Arc<AppState>>) -> Response {
    Json(s.live.status().as_ref().clone()).into_response()
}

async fn metadata(State(s): State<Arc<AppState>>) -> Response {
    let Some(o) = s.live.octree() else {
        return error(StatusCode::NOT_FOUND, "metadata not available yet");
    };
    match tokio::task::spawn_blocking(move || std::fs::read(o.dir.join(METADATA_FILE))).await {
        Ok(Ok(b)) => ([(header::CONTENT_TYPE, "application/json")], b).into_response(),
        Ok(Err(e)) => internal(e),
        Err(e) => internal(e),
    }
}

async fn hierarchy(State(s): State<Arc<AppState>>) -> Response {
    match s.live.octree() {
        Some(o) => octet(crate::octree::encode_hierarchy(&o.hierarchy)),
        None => error(StatusCode::NOT_FOUND, "hierarchy not available until the build is done"),
    }
}

async fn decimated(State(s): State<Arc<AppState>>) -> Response {
    if let Some(b) = s.live.decimated() {
        return octet(Bytes::from_owner(ArcBytes(b)));
    }
    if let Some(o) = s.live.octree() {
        return match tokio::task::spawn_blocking(move || o.decimated_bytes()).await {
            Ok(Ok(b)) => octet(b),
            Ok(Err(e)) => internal(e),
            Err(e) => internal(e),
        };
    }
    error(StatusCode::NOT_FOUND, "preview not available yet")
}

async fn node(State(s): State<Arc<AppState>>, Path(name): Path<String>) -> Response {
    let Some(o) = s.live.octree() else {
        return if s.live.status().phase == Phase::Failed {
            error(StatusCode::NOT_FOUND, "build failed")
        } else {
            error(StatusCode::CONFLICT, "nodes not available until the build is done")
        };
    };
    let Ok(name) = name.parse::<NodeName>() else {
        return error(StatusCode::NOT_FOUND, format!("no node {name}"));
    };
    if o.hierarchy.get(&name).is_none() {
        return error(StatusCode::NOT_FOUND, format!("no node {name}"));
    }
    let Ok(_permit) = s.reads.acquire().await else {
        return internal("server shutting down");
    };
    match tokio::task::spawn_blocking(move || o.read_node_bytes(&name)).await {
        Ok(Ok(b)) => octet(b),
        Ok(Err(e)) => internal(e),
        Err(e) => internal(e),
    }
}

struct ArcBytes(Arc<Vec<u8>>);

impl AsRef<[u8]> for ArcBytes {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}
