//! HTTP/1.1 JSON API over the shard registry.
//!
//! | method | path | success |
//! |---|---|---|
//! | GET | `/shard/{key}?agent_id=X` | 200 `{key, version, content}` |
//! | POST | `/commit/v2` | 200 `{key, new_version}` |
//! | POST | `/admin/shard` | 201 `{key, version, content}` |
//! | POST | `/admin/reset` | 204 |
//! | POST | `/admin/mode` | 200 `{ori_enabled}` |
//! | POST | `/admin/expire` | 200 `{expired}` |
//! | GET | `/admin/history` | 200 line-delimited trace |
//! | GET | `/stats[?logs=1]` | 200 snapshot |
//! | GET | `/health` | 200 |
//!
//! Errors are `{code, detail}` with 404/409/410/422. Only HTTP/1.1 is spoken;
//! there is no HTTP/2 support to upgrade to.

pub mod api;
pub mod config;
pub mod error;

use std::future::Future;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;

use axum::routing::{get, post};
use axum::Router;
use ori_core::{Clock, Mode, MonotonicClock, Registry};
use tokio::net::TcpListener;
use tokio::sync::oneshot;

pub use config::ServerConfig;
pub use error::{ApiError, ErrorCode};

pub struct AppState {
    pub registry: Registry,
    pub clock: Arc<dyn Clock>,
    pub ori_enabled: AtomicBool,
}

impl AppState {
    pub fn new(registry: Registry, clock: Arc<dyn Clock>, ori_enabled: bool) -> Self {
        Self {
            registry,
            clock,
            ori_enabled: AtomicBool::new(ori_enabled),
        }
    }

    pub fn mode(&self) -> Mode {
        if self.ori_enabled.load(Ordering::SeqCst) {
            Mode::OriOn
        } else {
            Mode::OriOff
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/shard/{key}", get(api::get_shard))
        .route("/commit/v2", post(api::commit_v2))
        .route("/admin/shard", post(api::create_shard))
        .route("/admin/reset", post(api::reset))
        .route("/admin/mode", post(api::set_mode))
        .route("/admin/expire", post(api::expire_sessions))
        .route("/admin/history", get(api::history))
        .route("/stats", get(api::stats))
        .route("/health", get(api::health))
        .with_state(state)
}

pub async fn serve(
    listener: TcpListener,
    state: Arc<AppState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

/// A server running on its own runtime thread. Dropping the handle stops it.
pub struct ServerHandle {
    addr: SocketAddr,
    state: Arc<AppState>,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<thread::JoinHandle<std::io::Result<()>>>,
}

impl ServerHandle {
    pub fn start(config: &ServerConfig) -> ori_core::Result<Self> {
        let registry = config.open_registry()?;
        let state = Arc::new(AppState::new(
            registry,
            Arc::new(MonotonicClock::new()),
            config.ori_enabled,
        ));
        Self::start_with(config.addr(), state)
    }

    pub fn start_with(addr: SocketAddr, state: Arc<AppState>) -> ori_core::Result<Self> {
        let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
        let listener = rt.block_on(TcpListener::bind(addr))?;
        let addr = listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let st = state.clone();
        let thread = thread::spawn(move || {
            rt.block_on(serve(listener, st, async {
                let _ = rx.await;
            }))
        });
        Ok(Self {
            addr,
            state,
            stop: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn state(&self) -> &Arc<AppState> {
        &self.state
    }

    pub fn stop(mut self) -> std::io::Result<()> {
        self.shutdown()
    }

    fn shutdown(&mut self) -> std::io::Result<()> {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or(Ok(())),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.shutdown();
    }
}
