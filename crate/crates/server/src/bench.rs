//! Desk-scale load harness: N subscribers plus one commander driving a
//! running server over TCP.
//!
//! The commander sends `SetCameraPose` with the camera x coordinate set to a
//! sequence number. With smoothing alpha 1 the first frame carrying that x
//! marks when the command became visible, which gives command-to-frame
//! latency without clock sharing between processes.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rigserve_core::protocol::{Command, Request, ServerMessage};
use rigserve_core::rig::CameraPose;
use serde::Serialize;
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::TcpStream;
use tokio::sync::watch;
use tokio::time::{Instant, MissedTickBehavior};

#[derive(Clone, Debug)]
pub struct LoadConfig {
    pub subscribers: usize,
    pub commands_per_sec: f64,
    pub duration: Duration,
}

impl Default for LoadConfig {
    fn default() -> Self {
        Self {
            subscribers: 8,
            commands_per_sec: 500.0,
            duration: Duration::from_secs(30),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct LoadReport {
    pub commands_sent: u64,
    pub responses: u64,
    pub error_responses: u64,
    pub frames_per_subscriber: Vec<u64>,
    /// Tick numbers missing from any subscriber's stream.
    pub frame_gaps: u64,
    pub goodbyes: u64,
    /// Command-to-frame latency samples, one per (command, subscriber).
    pub latency_samples: usize,
    pub latency_p50_ms: f64,
    pub latency_p99_ms: f64,
    pub latency_max_ms: f64,
    /// Commands that never showed up in some subscriber's frames.
    pub unobserved: u64,
}

struct SubscriberLog {
    /// (camera x, arrival) per frame.
    frames: Vec<(f64, Instant)>,
    gaps: u64,
    goodbyes: u64,
}

async fn subscriber(
    addr: SocketAddr,
    mut stop: watch::Receiver<bool>,
) -> std::io::Result<SubscriberLog> {
    let stream = TcpStream::connect(addr).await?;
    stream.set_nodelay(true)?;
    let (rd, mut wr) = stream.into_split();
    let sub = Request::new(0, Command::Subscribe {}).to_line() + "\n";
    wr.write_all(sub.as_bytes()).await?;
    let mut lines = BufReader::new(rd).lines();
    let mut log = SubscriberLog {
        frames: Vec::new(),
        gaps: 0,
        goodbyes: 0,
    };
    let mut last_tick: Option<u64> = None;
    loop {
        let line = tokio::select! {
            l = lines.next_line() => l?,
            _ = stop.changed() => break,
        };
        let Some(line) = line else { break };
        let at = Instant::now();
        match ServerMessage::from_line(&line) {
            Ok(ServerMessage::Frame(f)) => {
                if let Some(prev) = last_tick {
                    log.gaps += f.tick.saturating_sub(prev + 1);
                }
                last_tick = Some(f.tick);
                log.frames.push((f.camera.position[0], at));
            }
            Ok(ServerMessage::Goodbye { .. }) => {
                log.goodbyes += 1;
                break;
            }
            _ => {}
        }
    }
    Ok(log)
}

pub async fn run_load(addr: SocketAddr, cfg: &LoadConfig) -> std::io::Result<LoadReport> {
    let (stop_tx, stop_rx) = watch::channel(false);
    let subs: Vec<_> = (0..cfg.subscribers)
        .map(|_| tokio::spawn(subscriber(addr, stop_rx.clone())))
        .collect();
    // Let subscriptions land before the clock starts.
    tokio::time::sleep(Duration::from_millis(200)).await;

    let stream = TcpStream::connect(addr).await?;
    stream.set_nodelay(true)?;
    let (rd, mut wr) = stream.into_split();
    let counts = Arc::new(Mutex::new((0u64, 0u64)));
    let reader = {
        let counts = counts.clone();
        tokio::spawn(async move {
            let mut lines = BufReader::new(rd).lines();
            while let Ok(Some(line)) = lines.next_line().await {
                if let Ok(ServerMessage::Response(r)) = ServerMessage::from_line(&line) {
                    let mut c = counts.lock().unwrap();
                    c.0 += 1;
                    if !r.is_ok() {
                        c.1 += 1;
                    }
                }
            }
        })
    };

    let mut sent_at: Vec<Instant> = Vec::new();
    let mut interval = tokio::time::interval(Duration::from_secs_f64(1.0 / cfg.commands_per_sec));
    interval.set_missed_tick_behavior(MissedTickBehavior::Burst);
    let end = Instant::now() + cfg.duration;
    while Instant::now() < end {
        interval.tick().await;
        let seq = sent_at.len() as u64 + 1;
        let cmd = Command::SetCameraPose {
            pose: CameraPose {
                position: [seq as f64, 0.0, 60.0],
                orientation: [0.0; 3],
            },
        };
        let line = Request::new(seq, cmd).to_line() + "\n";
        sent_at.push(Instant::now());
        wr.write_all(line.as_bytes()).await?;
    }
    tokio::time::sleep(Duration::from_millis(300)).await;
    let _ = stop_tx.send(true);
    drop(wr);

    let mut report = LoadReport {
        commands_sent: sent_at.len() as u64,
        ..LoadReport::default()
    };
    let mut latencies = Vec::new();
    for s in subs {
        let log = s.await.expect("subscriber task panicked")?;
        report.frames_per_subscriber.push(log.frames.len() as u64);
        report.frame_gaps += log.gaps;
        report.goodbyes += log.goodbyes;
        let mut i = 0;
        for (k, sent) in sent_at.iter().enumerate() {
            let seq = (k + 1) as f64;
            while i < log.frames.len() && log.frames[i].0 < seq {
                i += 1;
            }
            match log.frames.get(i) {
                Some((_, at)) => {
                    latencies.push(at.saturating_duration_since(*sent).as_secs_f64() * 1000.0)
                }
                None => report.unobserved += 1,
            }
        }
    }
    reader.abort();
    let c = *counts.lock().unwrap();
    report.responses = c.0;
    report.error_responses = c.1;

    latencies.sort_by(f64::total_cmp);
    let pct = |p: f64| {
        if latencies.is_empty() {
            f64::NAN
        } else {
            latencies[((latencies.len() - 1) as f64 * p).round() as usize]
        }
    };
    report.latency_samples = latencies.len();
    report.latency_p50_ms = pct(0.5);
    report.latency_p99_ms = pct(0.99);
    report.latency_max_ms = latencies.last().copied().unwrap_or(f64::NAN);
    Ok(report)
}
