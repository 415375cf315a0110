//! TCP and WebSocket transports. Each connection gets a reader that forwards
//! parsed requests to the hub and a writer that drains the hub's replies.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use futures_util::{SinkExt, StreamExt};
use rigserve_core::protocol::{parse_message, ErrorCode, Response, ServerMessage};
use tokio::io::{AsyncBufReadExt, AsyncReadExt, AsyncWrite, AsyncWriteExt, BufReader, BufWriter};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, oneshot, OwnedSemaphorePermit, Semaphore};

use crate::hub::{ClientId, ClientOut, Inbound};

/// Longest accepted request line.
pub const MAX_LINE_BYTES: usize = 1 << 20;

#[derive(Clone)]
pub(crate) struct Shared {
    pub hub: mpsc::Sender<Inbound>,
    pub slots: Arc<Semaphore>,
    pub backlog: usize,
    pub next_id: Arc<AtomicU64>,
}

impl Shared {
    fn next_client(&self) -> ClientId {
        self.next_id.fetch_add(1, Ordering::Relaxed)
    }

    /// Registers a connection with the hub and returns its outbound queue.
    async fn register(
        &self,
        client: ClientId,
    ) -> Option<(
        mpsc::Receiver<Arc<str>>,
        oneshot::Receiver<String>,
        mpsc::Sender<Arc<str>>,
    )> {
        // Replies from the hub plus room for local queue_full notices.
        let (tx, rx) = mpsc::channel(self.backlog + 16);
        let (gtx, grx) = oneshot::channel();
        let out = ClientOut {
            lines: tx.clone(),
            goodbye: gtx,
        };
        self.hub.send(Inbound::Connect { client, out }).await.ok()?;
        Some((rx, grx, tx))
    }

    /// Forwards one received line; answers `queue_full` locally when the hub
    /// is saturated.
    fn forward(&self, client: ClientId, line: &str, local: &mpsc::Sender<Arc<str>>) {
        let parsed = parse_message(line);
        let id = match &parsed {
            Ok(r) => Some(r.id),
            Err(e) => e.id,
        };
        if let Err(mpsc::error::TrySendError::Full(_)) =
            self.hub.try_send(Inbound::Request { client, parsed })
        {
            let resp = Response::error(id, ErrorCode::QueueFull, "command queue is full");
            let _ = local.try_send(ServerMessage::Response(resp).to_line().into());
        }
    }

    async fn disconnect(&self, client: ClientId) {
        let _ = self.hub.send(Inbound::Disconnect { client }).await;
    }
}

fn refusal_lines() -> [String; 2] {
    [
        ServerMessage::Response(Response::error(
            None,
            ErrorCode::ServerFull,
            "too many clients",
        ))
        .to_line(),
        ServerMessage::Goodbye {
            reason: "server full".into(),
        }
        .to_line(),
    ]
}

pub(crate) async fn accept_tcp(listener: TcpListener, shared: Shared) {
    loop {
        let (stream, peer) = match listener.accept().await {
            Ok(s) => s,
            Err(e) => {
                tracing::warn!(error = %e, "accept failed");
                continue;
            }
        };
        let _ = stream.set_nodelay(true);
        let shared = shared.clone();
        match shared.slots.clone().try_acquire_owned() {
            Ok(permit) => {
                tokio::spawn(async move {
                    tracing::debug!(%peer, "tcp client connected");
                    tcp_connection(stream, shared, permit).await;
                    tracing::debug!(%peer, "tcp client gone");
                });
            }
            Err(_) => {
                tokio::spawn(async move {
                    let mut stream = stream;
                    for l in refusal_lines() {
                        let _ = stream.write_all(format!("{l}\n").as_bytes()).await;
                    }
                    let _ = stream.shutdown().await;
                });
            }
        }
    }
}

async fn write_lines<W: AsyncWrite + Unpin>(
    wr: W,
    mut rx: mpsc::Receiver<Arc<str>>,
    mut goodbye: oneshot::Receiver<String>,
) {
    let mut wr = BufWriter::new(wr);
    loop {
        tokio::select! {
            biased;
            reason = &mut goodbye => {
                if let Ok(reason) = reason {
                    let line = ServerMessage::Goodbye { reason }.to_line();
                    let _ = wr.write_all(line.as_bytes()).await;
                    let _ = wr.write_all(b"\n").await;
                    let _ = wr.flush().await;
                    let _ = wr.shutdown().await;
                    return;
                }
                // The hub dropped us without a goodbye: drain what is queued.
                while let Some(line) = rx.recv().await {
                    if write_one(&mut wr, &line, rx.is_empty()).await.is_err() {
                        return;
                    }
                }
                return;
            }
            line = rx.recv() => match line {
                Some(line) => {
                    if write_one(&mut wr, &line, rx.is_empty()).await.is_err() {
                        return;
                    }
                }
                None => return,
            },
        }
    }
}

async fn write_one<W: AsyncWrite + Unpin>(
    wr: &mut BufWriter<W>,
    line: &str,
    flush: bool,
) -> std::io::Result<()> {
    wr.write_all(line.as_bytes()).await?;
    wr.write_all(b"\n").await?;
    if flush {
        wr.flush().await?;
    }
    Ok(())
}

async fn tcp_connection(stream: TcpStream, shared: Shared, _permit: OwnedSemaphorePermit) {
    let client = shared.next_client();
    let Some((rx, goodbye, local)) = shared.register(client).await else {
        return;
    };
    let (rd, wr) = stream.into_split();
    let mut writer = tokio::spawn(write_lines(wr, rx, goodbye));
    let mut rd = BufReader::new(rd);
    let mut buf = Vec::new();
    loop {
        buf.clear();
        let mut limited = (&mut rd).take(MAX_LINE_BYTES as u64 + 1);
        let read = tokio::select! {
            r = limited.read_until(b'\n', &mut buf) => r,
            _ = &mut writer => break,
        };
        match read {
            Ok(0) | Err(_) => break,
            Ok(_) => {}
        }
        if buf.last() != Some(&b'\n') && buf.len() > MAX_LINE_BYTES {
            // Skip the rest of the oversized line.
            let mut sink = Vec::new();
            if rd.read_until(b'\n', &mut sink).await.is_err() {
                break;
            }
            let resp = Response::error(None, ErrorCode::Malformed, "line too long");
            let _ = local.try_send(ServerMessage::Response(resp).to_line().into());
            continue;
        }
        let text = String::from_utf8_lossy(&buf);
        let line = text.trim_end_matches(['\n', '\r']);
        shared.forward(client, line, &local);
    }
    shared.disconnect(client).await;
    drop(local);
    if !writer.is_finished() {
        let _ = writer.await;
    }
}

pub(crate) async fn ws_upgrade(
    ws: WebSocketUpgrade,
    State(shared): State<Shared>,
) -> impl IntoResponse {
    ws.max_message_size(MAX_LINE_BYTES)
        .on_upgrade(move |socket| async move {
            match shared.slots.clone().try_acquire_owned() {
                Ok(permit) => ws_connection(socket, shared, permit).await,
                Err(_) => {
                    let mut socket = socket;
                    for l in refusal_lines() {
                        let _ = socket.send(Message::Text(l.into())).await;
                    }
                    let _ = socket.send(Message::Close(None)).await;
                }
            }
        })
}

async fn ws_connection(socket: WebSocket, shared: Shared, _permit: OwnedSemaphorePermit) {
    let client = shared.next_client();
    let Some((mut rx, mut goodbye, local)) = shared.register(client).await else {
        return;
    };
    let (mut sink, mut stream) = socket.split();
    let mut writer = tokio::spawn(async move {
        loop {
            tokio::select! {
                biased;
                reason = &mut goodbye => {
                    if let Ok(reason) = reason {
                        let line = ServerMessage::Goodbye { reason }.to_line();
                        let _ = sink.send(Message::Text(line.into())).await;
                        let _ = sink.send(Message::Close(None)).await;
                        return;
                    }
                    while let Some(line) = rx.recv().await {
                        if sink.send(Message::Text(line.as_ref().into())).await.is_err() {
                            return;
                        }
                    }
                    return;
                }
                line = rx.recv() => match line {
                    Some(line) => {
                        if sink.send(Message::Text(line.as_ref().into())).await.is_err() {
                            return;
                        }
                    }
                    None => return,
                },
            }
        }
    });
    loop {
        let msg = tokio::select! {
            m = stream.next() => m,
            _ = &mut writer => break,
        };
        match msg {
            Some(Ok(Message::Text(t))) => shared.forward(client, t.as_str(), &local),
            Some(Ok(Message::Binary(b))) => {
                shared.forward(client, &String::from_utf8_lossy(&b), &local)
            }
            Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
            Some(Ok(_)) => {}
        }
    }
    shared.disconnect(client).await;
    drop(local);
    if !writer.is_finished() {
        let _ = writer.await;
    }
}
