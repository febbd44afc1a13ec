//! HTTP service for the personalization loop: users link devices, upload
//! labeled recordings, trigger fine-tuning, and devices poll for the bundle
//! that results. State is an in-memory model rebuilt at startup from a
//! JSON-lines write-ahead log.

mod config;
mod error;
mod jobs;
mod routes;
mod store;

use std::net::SocketAddr;
use std::sync::Arc;

use tokio::net::TcpListener;

pub use config::{ServerConfig, DEFAULT_BIND};
pub use error::{ApiError, ErrorBody};
pub use store::{
    ClassSummary, DeviceRegistration, DeviceView, HistoryResponse, JobMetrics, JobStatus, JobView, StoreError, UserView,
};

use store::Store;

/// Shared handle given to every request handler and job worker.
#[derive(Clone)]
pub struct AppState {
    store: Arc<Store>,
    config: Arc<ServerConfig>,
}

impl AppState {
    /// Opens (or creates) the log in `config.data_dir` and replays it.
    pub fn open(config: ServerConfig) -> Result<Self, StoreError> {
        let store = Store::open(&config.data_dir, config.fsync)?;
        Ok(Self {
            store: Arc::new(store),
            config: Arc::new(config),
        })
    }
}

pub fn router(state: AppState) -> axum::Router {
    routes::router(state)
}

/// A server bound to its listener, ready to run.
pub struct Server {
    listener: TcpListener,
    state: AppState,
}

impl Server {
    pub async fn bind(config: ServerConfig) -> std::io::Result<Self> {
        let listener = TcpListener::bind(config.bind).await?;
        let state = AppState::open(config).map_err(std::io::Error::other)?;
        Ok(Self { listener, state })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Serves until `shutdown` resolves.
    pub async fn run_until<F>(self, shutdown: F) -> std::io::Result<()>
    where
        F: std::future::Future<Output = ()> + Send + 'static,
    {
        tracing::info!(addr = %self.listener.local_addr()?, "listening");
        axum::serve(self.listener, router(self.state))
            .with_graceful_shutdown(shutdown)
            .await
    }

    /// Serves until Ctrl-C.
    pub async fn run(self) -> std::io::Result<()> {
        self.run_until(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
    }
}

/// A server running on its own thread and runtime; stops on drop.
pub struct BackgroundServer {
    addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<std::io::Result<()>>>,
}

impl BackgroundServer {
    /// Binds `config.bind` (port 0 picks a free port) and starts serving.
    pub fn spawn(config: ServerConfig) -> std::io::Result<Self> {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let server = runtime.block_on(Server::bind(config))?;
        let addr = server.local_addr()?;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::Builder::new()
            .name("tinyfit-server".into())
            .spawn(move || {
                runtime.block_on(server.run_until(async {
                    let _ = rx.await;
                }))
            })?;
        Ok(Self {
            addr,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops accepting connections and waits for the server thread.
    pub fn stop(mut self) -> std::io::Result<()> {
        self.shutdown_and_join()
    }

    fn shutdown_and_join(&mut self) -> std::io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t
                .join()
                .unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for BackgroundServer {
    fn drop(&mut self) {
        let _ = self.shutdown_and_join();
    }
}
