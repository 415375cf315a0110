use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use rigserve_core::lipsync::{
    compile_track, parse_lexicon, parse_phoneme_track_with, text_to_phoneme_track, Lexicon,
    PhonemeTrack, RampConfig, DEMO_LEXICON,
};
use rigserve_core::protocol::{Command, FramePayload, ServerMessage};
use rigserve_core::replay::{run_virtual, PuppetScript};
use rigserve_core::retarget::{
    au_frame_to_controls, parse_au_stream, AuControls, RetargetOptions, Rounding, RECOGNIZER_AUS,
};
use rigserve_core::rig::{validate_presets, ActionUnit, BoneId};
use rigserve_core::RigDefinition;
use rigserve_server::bench::{run_load, LoadConfig};
use rigserve_server::{run_server, ServerConfig, ServerError};
use serde_json::{json, Value};

use crate::client::Client;
use crate::virtual_run::VirtualSession;
use crate::{Cli, CliError, Cmd};

pub fn run(cli: Cli) -> Result<u8, CliError> {
    match &cli.cmd {
        Cmd::Serve { print_config } => serve(&cli, *print_config),
        Cmd::Validate { rig } => validate(&cli, rig),
        Cmd::Play {
            track,
            offset_ms,
            dry_run,
        } => {
            let cfg = load_config(&cli)?;
            let defs = load_defs(&cfg)?;
            let ramp = ramp(&cfg)?;
            let doc = read(track)?;
            let track = parse_phoneme_track_with(&doc, &defs, &ramp)
                .map_err(|e| CliError::Input(format!("{}: {e}", track.display())))?;
            play(&cli, &cfg, &defs, &track, *offset_ms, *dry_run)
        }
        Cmd::ReplayAus {
            stream,
            alpha,
            threshold,
            speed,
        } => replay_aus(&cli, stream, *alpha, *threshold, *speed),
        Cmd::Say {
            text,
            lexicon,
            canned,
            rate,
            dry_run,
        } => say(
            &cli,
            text,
            lexicon.as_deref(),
            canned.as_deref(),
            *rate,
            *dry_run,
        ),
        Cmd::Puppet {
            script,
            duration_ms,
            out,
        } => puppet(&cli, script, *duration_ms, out.as_deref()),
        Cmd::Bench {
            subscribers,
            rate,
            seconds,
            connect,
        } => bench(&cli, *subscribers, *rate, *seconds, *connect),
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

fn load_config(cli: &Cli) -> Result<ServerConfig, CliError> {
    match &cli.config {
        Some(p) => ServerConfig::load(p).map_err(|e| CliError::Config(e.to_string())),
        None => Ok(ServerConfig::default()),
    }
}

fn load_defs(cfg: &ServerConfig) -> Result<RigDefinition, CliError> {
    cfg.load_rig().map_err(|e| CliError::Config(e.to_string()))
}

fn ramp(cfg: &ServerConfig) -> Result<RampConfig, CliError> {
    RampConfig::new(cfg.ramp_ms).map_err(|e| CliError::Config(e.to_string()))
}

fn print_json(v: &Value) {
    println!("{v}");
}

fn serve(cli: &Cli, print_config: bool) -> Result<u8, CliError> {
    let cfg = load_config(cli)?;
    if print_config {
        println!(
            "{}",
            serde_json::to_string_pretty(&cfg).expect("config serializes")
        );
        return Ok(0);
    }
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .init();
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Failed(e.to_string()))?;
    rt.block_on(run_server(cfg, async {
        let _ = tokio::signal::ctrl_c().await;
    }))
    .map_err(|e| match e {
        ServerError::Config(c) => CliError::Config(c.to_string()),
        ServerError::Bind { .. } => CliError::Bind(e.to_string()),
    })?;
    Ok(0)
}

fn validate(cli: &Cli, path: &Path) -> Result<u8, CliError> {
    let doc = read(path)?;
    if let Err(e) = serde_json::from_str::<Value>(&doc) {
        return Err(CliError::Input(format!(
            "{}: not JSON: {e}",
            path.display()
        )));
    }
    let (ok, report) = match RigDefinition::from_json(&doc) {
        Ok(defs) => {
            let report = validate_presets(&defs);
            let text = report.to_string();
            let findings = serde_json::to_value(&report.findings).expect("findings serialize");
            (report.is_empty(), (findings, text))
        }
        Err(e) => {
            let msg = e.to_string();
            (
                false,
                (
                    json!([{"subject": "document", "bone": null, "message": msg}]),
                    msg + "\n",
                ),
            )
        }
    };
    if cli.json {
        print_json(&json!({"file": path.display().to_string(), "ok": ok, "findings": report.0}));
    } else {
        print!("{}", report.1);
    }
    Ok(if ok { 0 } else { 1 })
}

fn visemes_text(f: &rigserve_core::lipsync::VisemeWeights) -> String {
    let parts: Vec<String> = f.iter().map(|(v, w)| format!("{v}={w:.6}")).collect();
    if parts.is_empty() {
        "-".into()
    } else {
        parts.join(" ")
    }
}

fn play(
    cli: &Cli,
    cfg: &ServerConfig,
    defs: &RigDefinition,
    track: &PhonemeTrack,
    offset_ms: f64,
    dry_run: bool,
) -> Result<u8, CliError> {
    let ramp = ramp(cfg)?;
    if dry_run {
        let table = compile_track(track, cfg.tick_hz, &ramp, defs)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let mut out = std::io::stdout().lock();
        for (k, w) in &table {
            let t = *k as f64 * 1000.0 / cfg.tick_hz;
            let line = if cli.json {
                json!({"tick": k, "t_ms": t, "weights": w}).to_string()
            } else {
                format!("{k}\t{t:.3}\t{}", visemes_text(w))
            };
            let _ = writeln!(out, "{line}");
        }
        return Ok(0);
    }
    let cmd = Command::PlayVisemeTrack {
        track: track.events().to_vec(),
        offset_ms,
    };
    let end_ms = track.total_ms() as f64 + ramp.ramp_ms - offset_ms;
    if cli.virtual_time {
        let mut vs = VirtualSession::new(cfg)?;
        let r = vs.handle(cmd, 0.0);
        if !r.is_ok() {
            return Err(CliError::Input(r.message.unwrap_or_default()));
        }
        let frames = vs.run_until(end_ms.max(0.0) + 1000.0 / cfg.tick_hz);
        print_frames(cli, &frames);
        return Ok(0);
    }
    let mut client = Client::connect(&cli.server)?;
    let r = client.call(cmd)?;
    if !r.is_ok() {
        return Err(CliError::Input(format!(
            "server rejected track: {}",
            r.message.unwrap_or_default()
        )));
    }
    let start = r
        .payload
        .as_ref()
        .and_then(|p| p.get("track_start_ms"))
        .and_then(Value::as_f64)
        .unwrap_or(f64::NAN);
    if cli.json {
        print_json(
            &json!({"track_start_ms": start, "total_ms": track.total_ms(), "events": track.events().len()}),
        );
    } else {
        println!(
            "track_start_ms={start} total_ms={} events={}",
            track.total_ms(),
            track.events().len()
        );
    }
    let _ = std::io::stdout().flush();
    std::thread::sleep(Duration::from_secs_f64(end_ms.max(0.0) / 1000.0));
    Ok(0)
}

fn print_frames(cli: &Cli, frames: &[FramePayload]) {
    let mut out = std::io::stdout().lock();
    for f in frames {
        let line = if cli.json {
            ServerMessage::Frame(Box::new(f.clone())).to_line()
        } else {
            format!(
                "{}\t{:.3}\t{}\t{}",
                f.tick,
                f.time_ms,
                if f.lipsync_active { "lips" } else { "-" },
                visemes_text(&f.active_visemes)
            )
        };
        let _ = writeln!(out, "{line}");
    }
}

fn replay_aus(
    cli: &Cli,
    path: &Path,
    alpha: f64,
    threshold: Option<f64>,
    speed: f64,
) -> Result<u8, CliError> {
    if !(speed > 0.0 && speed.is_finite()) {
        return Err(CliError::Input(format!(
            "--speed must be positive, got {speed}"
        )));
    }
    let rounding = match threshold {
        Some(t) => Rounding::Threshold(t),
        None => Rounding::Off,
    };
    let opts = RetargetOptions::new(alpha, rounding).map_err(|e| CliError::Input(e.to_string()))?;
    let doc = read(path)?;
    let frames =
        parse_au_stream(&doc).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let cfg = load_config(cli)?;
    let defs = load_defs(&cfg)?;

    // Rounding and smoothing happen here; the session receives the
    // processed values and passes them through.
    let mut controls = AuControls::zero();
    let scheduled: Vec<(f64, Command)> = frames
        .iter()
        .map(|f| {
            controls = au_frame_to_controls(f, &controls, &opts);
            let t = f.timestamp_ms / speed;
            let probabilities = std::array::from_fn(|k| match ActionUnit::new(RECOGNIZER_AUS[k]) {
                Some(au) => controls.get(au),
                None => controls.eyelid_close,
            });
            (
                t,
                Command::AuFrame {
                    t_ms: t,
                    probabilities,
                },
            )
        })
        .collect();

    let rest = defs.rest_state();
    let at_rest = |f: &FramePayload| {
        f.active_aus.is_zero()
            && BoneId::all()
                .filter(|b| !b.is_eyelid())
                .all(|b| f.bone(b) == rest.bone(b))
    };

    let (last, errors, non_rest) = if cli.virtual_time {
        let mut vs = VirtualSession::new(&cfg)?;
        let mut errors = 0;
        let mut non_rest = 0;
        for (t, cmd) in scheduled.iter().cloned() {
            for f in vs.run_until(t) {
                non_rest += usize::from(!at_rest(&f));
            }
            errors += usize::from(!vs.handle(cmd, t).is_ok());
        }
        let end = scheduled.last().map_or(0.0, |s| s.0) + 1000.0 / cfg.tick_hz;
        let tail = vs.run_until(end);
        non_rest += tail.iter().filter(|f| !at_rest(f)).count();
        (vs.session().last_frame().clone(), errors, Some(non_rest))
    } else {
        let mut client = Client::connect(&cli.server)?;
        let start = Instant::now();
        let mut errors = 0;
        for (t, cmd) in scheduled.iter().cloned() {
            let due = Duration::from_secs_f64(t.max(0.0) / 1000.0);
            if let Some(wait) = due.checked_sub(start.elapsed()) {
                std::thread::sleep(wait);
            }
            errors += usize::from(!client.call(cmd)?.is_ok());
        }
        std::thread::sleep(Duration::from_secs_f64(2.0 / cfg.tick_hz));
        let r = client.call(Command::QueryState {})?;
        let f: FramePayload = serde_json::from_value(r.payload.unwrap_or_default())
            .map_err(|e| CliError::Connect(format!("bad QueryState payload: {e}")))?;
        (f, errors, None)
    };

    let aus: Value = last
        .active_aus
        .iter()
        .filter(|(_, v)| *v > 0.0)
        .map(|(au, v)| (au.number().to_string(), json!(v)))
        .collect::<serde_json::Map<_, _>>()
        .into();
    if cli.json {
        print_json(&json!({
            "frames_sent": scheduled.len(),
            "span_ms": scheduled.last().map_or(0.0, |s| s.0),
            "errors": errors,
            "at_rest": at_rest(&last),
            "final_aus": aus,
            "non_rest_frames": non_rest,
        }));
    } else {
        println!(
            "sent {} frames, {errors} errors; final state {}; active AUs {aus}",
            scheduled.len(),
            if at_rest(&last) {
                "at rest"
            } else {
                "not at rest"
            },
        );
        if let Some(n) = non_rest {
            println!("frames away from rest: {n}");
        }
    }
    Ok(if errors == 0 { 0 } else { 1 })
}

fn normalize_prompt(s: &str) -> String {
    s.split_whitespace()
        .map(|w| {
            w.trim_matches(|c: char| !c.is_alphanumeric() && c != '\'')
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

fn say(
    cli: &Cli,
    text: &str,
    lexicon: Option<&Path>,
    canned: Option<&Path>,
    rate: f64,
    dry_run: bool,
) -> Result<u8, CliError> {
    let lex: Lexicon = match lexicon {
        Some(p) => parse_lexicon(&read(p)?)
            .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?,
        None => parse_lexicon(DEMO_LEXICON).expect("bundled lexicon parses"),
    };
    let utterance = match canned {
        Some(p) => {
            let table: serde_json::Map<String, Value> = serde_json::from_str(&read(p)?)
                .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
            let key = normalize_prompt(text);
            let reply = table
                .iter()
                .find(|(k, _)| normalize_prompt(k) == key)
                .map(|(_, v)| v)
                .or_else(|| table.get("*"))
                .and_then(Value::as_str)
                .ok_or_else(|| CliError::Failed(format!("no canned reply for {text:?}")))?;
            reply.to_owned()
        }
        None => text.to_owned(),
    };
    let cfg = load_config(cli)?;
    let defs = load_defs(&cfg)?;
    if normalize_prompt(&utterance).is_empty() {
        if cli.json {
            print_json(&json!({"utterance": utterance, "events": 0}));
        } else {
            println!("nothing to say");
        }
        return Ok(0);
    }
    let track = text_to_phoneme_track(&utterance, &lex, rate, &defs).map_err(|e| match e {
        rigserve_core::lipsync::LipsyncError::OutOfLexicon(_) => CliError::Failed(e.to_string()),
        other => CliError::Input(other.to_string()),
    })?;
    if !cli.json {
        println!("saying {utterance:?} ({} phonemes)", track.events().len());
    } else if dry_run {
        print_json(&json!({"utterance": utterance, "events": track.events()}));
        return Ok(0);
    }
    if dry_run {
        for e in track.events() {
            println!("{},{},{}", e.phoneme, e.start_ms, e.duration_ms);
        }
        return Ok(0);
    }
    play(cli, &cfg, &defs, &track, 0.0, false)
}

fn puppet(
    cli: &Cli,
    path: &Path,
    duration_ms: Option<f64>,
    out: Option<&Path>,
) -> Result<u8, CliError> {
    let script = PuppetScript::parse(&read(path)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let cfg = load_config(cli)?;
    if cli.virtual_time {
        let defs = load_defs(&cfg)?;
        let sc = cfg
            .session_config()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let duration = duration_ms.unwrap_or(script.end_ms() + 1000.0);
        let result = run_virtual(
            std::sync::Arc::new(defs),
            sc,
            &script,
            cfg.tick_hz,
            duration,
        )
        .map_err(|e| CliError::Config(e.to_string()))?;
        let bytes = result.frame_bytes();
        match out {
            Some(p) => std::fs::write(p, &bytes)
                .map_err(|e| CliError::Failed(format!("cannot write {}: {e}", p.display())))?,
            None => {
                let _ = std::io::stdout().lock().write_all(&bytes);
            }
        }
        let errors = result.responses.iter().filter(|r| !r.is_ok()).count();
        eprintln!(
            "{} frames, {} commands, {errors} errors",
            result.frames.len(),
            result.responses.len()
        );
        return Ok(if errors == 0 { 0 } else { 1 });
    }
    let mut client = Client::connect(&cli.server)?;
    let start = Instant::now();
    let mut errors = 0;
    for e in &script.entries {
        let due = Duration::from_secs_f64(e.at_ms / 1000.0);
        if let Some(wait) = due.checked_sub(start.elapsed()) {
            std::thread::sleep(wait);
        }
        let r = client.call(e.request.command.clone())?;
        errors += usize::from(!r.is_ok());
        if cli.json {
            println!("{}", ServerMessage::Response(r).to_line());
        } else {
            println!(
                "{:>8.1} ms  {:<16} {}",
                e.at_ms,
                e.request.command.name(),
                if r.is_ok() {
                    "ok".to_owned()
                } else {
                    r.message.unwrap_or_default()
                }
            );
        }
    }
    Ok(if errors == 0 { 0 } else { 1 })
}

fn bench(
    cli: &Cli,
    subscribers: usize,
    rate: f64,
    seconds: f64,
    connect: bool,
) -> Result<u8, CliError> {
    if !(rate > 0.0 && seconds > 0.0) {
        return Err(CliError::Input(
            "--rate and --seconds must be positive".into(),
        ));
    }
    let cfg = ServerConfig {
        listen: "127.0.0.1:0".into(),
        ws_listen: "127.0.0.1:0".into(),
        smoothing_alpha: 1.0,
        ..load_config(cli)?
    };
    let load = LoadConfig {
        subscribers,
        commands_per_sec: rate,
        duration: Duration::from_secs_f64(seconds),
    };
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Failed(e.to_string()))?;
    let (report, stats) = rt.block_on(async {
        if connect {
            let addr = tokio::net::lookup_host(&cli.server)
                .await
                .ok()
                .and_then(|mut a| a.next())
                .ok_or_else(|| CliError::Connect(format!("cannot resolve {}", cli.server)))?;
            let report = run_load(addr, &load)
                .await
                .map_err(|e| CliError::Connect(e.to_string()))?;
            Ok::<_, CliError>((report, None))
        } else {
            let clock: std::sync::Arc<dyn rigserve_core::clock::Clock> =
                std::sync::Arc::new(rigserve_core::clock::MonotonicClock::new());
            let bound = rigserve_server::BoundServer::bind(cfg.clone(), clock.as_ref())
                .await
                .map_err(|e| CliError::Bind(e.to_string()))?;
            let handle = bound.spawn(clock);
            let report = run_load(handle.tcp_addr, &load)
                .await
                .map_err(|e| CliError::Connect(e.to_string()))?;
            let stats = handle.stats().await;
            handle.shutdown().await;
            Ok((report, stats))
        }
    })?;
    let period_ms = 1000.0 / cfg.tick_hz;
    let mut summary = json!({"load": report, "tick_period_ms": period_ms});
    let mut pass = report.frame_gaps == 0
        && report.unobserved == 0
        && report.latency_max_ms <= 2.0 * period_ms;
    if let Some(s) = &stats {
        let miss = (s.deadline_misses + s.skipped_ticks) as f64 / s.ticks.max(1) as f64;
        pass &= miss < 0.01;
        summary["server"] = json!(s);
        summary["miss_ratio"] = json!(miss);
    }
    summary["pass"] = json!(pass);
    if cli.json {
        print_json(&summary);
    } else {
        println!(
            "{}",
            serde_json::to_string_pretty(&summary).expect("serializes")
        );
    }
    Ok(if pass { 0 } else { 1 })
}
