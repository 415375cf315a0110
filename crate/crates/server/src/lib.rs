//! Avatar rig server: one session owner task running the fixed-rate tick
//! loop, fed by newline-delimited JSON over TCP and by a WebSocket endpoint
//! at `/ws` carrying the same messages.

pub mod bench;
pub mod config;
mod hub;
mod net;

use std::net::SocketAddr;
use std::sync::atomic::AtomicU64;
use std::sync::Arc;

use axum::routing::get;
use axum::Router;
use rigserve_core::clock::{Clock, MonotonicClock};
use rigserve_core::session::Session;
use tokio::net::TcpListener;
use tokio::sync::{mpsc, oneshot, Semaphore};
use tokio::task::JoinHandle;

pub use config::{BlinkSettings, ConfigError, ServerConfig, CONFIG_ENV};
pub use hub::ServerStats;

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        source: std::io::Error,
    },
}

/// Listeners bound and configuration checked, nothing running yet.
pub struct BoundServer {
    config: ServerConfig,
    session: Session,
    tcp: TcpListener,
    ws: TcpListener,
}

async fn bind(addr: &str) -> Result<TcpListener, ServerError> {
    TcpListener::bind(addr)
        .await
        .map_err(|source| ServerError::Bind {
            addr: addr.to_owned(),
            source,
        })
}

impl BoundServer {
    /// Validates the config, loads the rig and binds both listeners.
    pub async fn bind(config: ServerConfig, clock: &dyn Clock) -> Result<Self, ServerError> {
        config.validate()?;
        let defs = Arc::new(config.load_rig()?);
        let session = Session::new(defs, config.session_config()?, clock.now_ms())
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let tcp = bind(&config.listen).await?;
        let ws = bind(&config.ws_listen).await?;
        Ok(Self {
            config,
            session,
            tcp,
            ws,
        })
    }

    pub fn tcp_addr(&self) -> SocketAddr {
        self.tcp
            .local_addr()
            .expect("bound listener has an address")
    }

    pub fn ws_addr(&self) -> SocketAddr {
        self.ws.local_addr().expect("bound listener has an address")
    }

    /// Starts the hub and both acceptors on the current runtime.
    pub fn spawn(self, clock: Arc<dyn Clock>) -> ServerHandle {
        let tcp_addr = self.tcp_addr();
        let ws_addr = self.ws_addr();
        let (hub_tx, hub_rx) = mpsc::channel(self.config.command_queue);
        let (stop_tx, stop_rx) = oneshot::channel();
        let shared = net::Shared {
            hub: hub_tx.clone(),
            slots: Arc::new(Semaphore::new(self.config.max_clients)),
            backlog: self.config.subscriber_backlog,
            next_id: Arc::new(AtomicU64::new(1)),
        };
        let hub = hub::Hub::new(self.session, clock, self.config.tick_period());
        let hub_task = tokio::spawn(hub.run(hub_rx, stop_rx));
        let tcp_task = tokio::spawn(net::accept_tcp(self.tcp, shared.clone()));
        let app = Router::new()
            .route("/ws", get(net::ws_upgrade))
            .with_state(shared);
        let ws_listener = self.ws;
        let ws_task = tokio::spawn(async move {
            if let Err(e) = axum::serve(ws_listener, app).await {
                tracing::error!(error = %e, "websocket endpoint failed");
            }
        });
        tracing::info!(%tcp_addr, %ws_addr, tick_hz = self.config.tick_hz, "rigserve listening");
        ServerHandle {
            tcp_addr,
            ws_addr,
            hub: hub_tx,
            stop: Some(stop_tx),
            hub_task,
            acceptors: vec![tcp_task, ws_task],
        }
    }
}

pub struct ServerHandle {
    pub tcp_addr: SocketAddr,
    pub ws_addr: SocketAddr,
    hub: mpsc::Sender<hub::Inbound>,
    stop: Option<oneshot::Sender<()>>,
    hub_task: JoinHandle<()>,
    acceptors: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub async fn stats(&self) -> Option<ServerStats> {
        let (tx, rx) = oneshot::channel();
        self.hub.send(hub::Inbound::Stats(tx)).await.ok()?;
        rx.await.ok()
    }

    /// Says goodbye to every client and stops the tick loop.
    pub async fn shutdown(mut self) {
        for a in &self.acceptors {
            a.abort();
        }
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        let _ = (&mut self.hub_task).await;
    }

    /// Resolves if the hub stops on its own (it normally never does).
    pub async fn wait(&mut self) {
        let _ = (&mut self.hub_task).await;
    }
}

/// Binds and runs until `shutdown` resolves, on the monotonic clock.
pub async fn run_server(
    config: ServerConfig,
    shutdown: impl std::future::Future<Output = ()>,
) -> Result<(), ServerError> {
    let clock: Arc<dyn Clock> = Arc::new(MonotonicClock::new());
    let bound = BoundServer::bind(config, clock.as_ref()).await?;
    let mut handle = bound.spawn(clock);
    tokio::select! {
        _ = shutdown => {}
        _ = handle.wait() => {}
    }
    handle.shutdown().await;
    Ok(())
}
