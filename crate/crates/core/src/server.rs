//! Long-running tap service.
//!
//! Threads:
//! - control: receives OSC over UDP, resolves taps, builds voices;
//! - render: paced block loop mixing voices, fed only through SPSC rings,
//!   never locks or allocates;
//! - capture: drains rendered samples into a WAV file;
//! - web: accepts WebSocket clients (JSON taps) and plain HTTP GETs for the
//!   scene assets, one thread per connection.

use std::io::{self, Read, Write};
use std::net::{IpAddr, Ipv4Addr, SocketAddr, TcpListener, TcpStream, UdpSocket};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use rtrb::{Consumer, Producer, RingBuffer};
use serde::Serialize;
use thiserror::Error;
use tungstenite::Message;

use crate::engine::{Engine, EngineConfig, ErrorReport};
use crate::material::MaterialTable;
use crate::osc::{decode_osc, Command, TapRequest};
use crate::scene::{load_scene_dir, MaskMeta, SceneError, SharedMaskBuffer, BACKDROP_FILE};
use crate::synth::{BlockEvent, ResonatorBank, PEAK_GUARD};
use crate::wav::{SampleFormat, WavError, WavWriter};

pub const DEFAULT_OSC_PORT: u16 = 9000;
pub const DEFAULT_WS_PORT: u16 = 9001;
pub const MAX_VOICES: usize = 16;
const POLL: Duration = Duration::from_millis(50);
// Window used to find a voice's attack peak for its output gain.
const GAIN_PROBE: f64 = 0.01;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot bind {what} on {addr}: {source}")]
    Bind {
        what: &'static str,
        addr: SocketAddr,
        source: io::Error,
    },
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("capture file: {0}")]
    Capture(#[from] WavError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub bind: IpAddr,
    pub osc_port: u16,
    pub ws_port: u16,
    pub scene_dir: Option<PathBuf>,
    pub capture: Option<PathBuf>,
    pub capture_format: SampleFormat,
    pub block_size: usize,
    /// Request live playback. No playback backend is built in, so this
    /// only logs a warning; rendering always feeds the capture path.
    pub audio_device: bool,
    pub engine: EngineConfig,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            osc_port: DEFAULT_OSC_PORT,
            ws_port: DEFAULT_WS_PORT,
            scene_dir: None,
            capture: None,
            capture_format: SampleFormat::Float32,
            block_size: 256,
            audio_device: false,
            engine: EngineConfig::default(),
        }
    }
}

#[derive(Debug, Default)]
struct Stats {
    taps: AtomicU64,
    dropped: AtomicU64,
    voices_started: AtomicU64,
    last_latency_us: AtomicU64,
    max_latency_us: AtomicU64,
    rendered_samples: AtomicU64,
    captured_samples: AtomicU64,
    overruns: AtomicU64,
}

/// Counters exposed by a running service.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StatsSnapshot {
    /// OSC taps accepted.
    pub taps: u64,
    /// Datagrams or requests dropped as malformed or unresolvable.
    pub dropped: u64,
    /// Voices whose first non-zero sample has been rendered.
    pub voices_started: u64,
    /// Tap receipt to first non-zero rendered sample, ms.
    pub last_latency_ms: f64,
    pub max_latency_ms: f64,
    pub rendered_samples: u64,
    pub captured_samples: u64,
}

impl Stats {
    fn snapshot(&self) -> StatsSnapshot {
        let ms = |a: &AtomicU64| a.load(Ordering::Relaxed) as f64 / 1000.0;
        StatsSnapshot {
            taps: self.taps.load(Ordering::Relaxed),
            dropped: self.dropped.load(Ordering::Relaxed),
            voices_started: self.voices_started.load(Ordering::Relaxed),
            last_latency_ms: ms(&self.last_latency_us),
            max_latency_ms: ms(&self.max_latency_us),
            rendered_samples: self.rendered_samples.load(Ordering::Relaxed),
            captured_samples: self.captured_samples.load(Ordering::Relaxed),
        }
    }
}

struct Voice {
    bank: ResonatorBank,
    pending: Option<BlockEvent>,
    received: Instant,
    started: bool,
}

pub struct Server {
    osc_addr: SocketAddr,
    ws_addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    stats: Arc<Stats>,
    threads: Vec<JoinHandle<()>>,
}

impl Server {
    pub fn start(config: ServeConfig, table: Arc<MaterialTable>) -> Result<Server, ServeError> {
        let osc_bind = SocketAddr::new(config.bind, config.osc_port);
        let ws_bind = SocketAddr::new(config.bind, config.ws_port);
        let udp = UdpSocket::bind(osc_bind).map_err(|source| ServeError::Bind {
            what: "OSC/UDP",
            addr: osc_bind,
            source,
        })?;
        let tcp = TcpListener::bind(ws_bind).map_err(|source| ServeError::Bind {
            what: "WebSocket",
            addr: ws_bind,
            source,
        })?;
        let osc_addr = udp.local_addr()?;
        let ws_addr = tcp.local_addr()?;
        udp.set_read_timeout(Some(POLL))?;
        tcp.set_nonblocking(true)?;

        let (masks, assets) = match &config.scene_dir {
            Some(dir) => {
                let scene = load_scene_dir(dir)?;
                log::info!("scene {}: {} masks", dir.display(), scene.masks.len());
                let assets = SceneAssets::new(dir, &scene);
                (Some(SharedMaskBuffer::new(scene.buffer())), Some(assets))
            }
            None => (None, None),
        };
        if config.audio_device {
            log::warn!("no audio playback backend available; rendering to capture only");
        }
        let engine = Arc::new(Engine::new(table, masks, config.engine));
        let shutdown = Arc::new(AtomicBool::new(false));
        let stats = Arc::new(Stats::default());

        let block = config.block_size.clamp(crate::synth::MIN_BLOCK, crate::synth::MAX_BLOCK);
        let sr = config.engine.sample_rate;
        let (voice_tx, voice_rx) = RingBuffer::<Voice>::new(MAX_VOICES);
        let (retire_tx, retire_rx) = RingBuffer::<Voice>::new(MAX_VOICES * 4);
        let (sample_tx, sample_rx) = RingBuffer::<f32>::new((sr as usize * 2).max(block * 4));

        let capture = match &config.capture {
            Some(p) => Some(WavWriter::create(p, sr as u32, config.capture_format)?),
            None => None,
        };

        let mut threads = Vec::new();
        {
            let (stats, shutdown) = (stats.clone(), shutdown.clone());
            threads.push(
                thread::Builder::new()
                    .name("render".into())
                    .spawn(move || render_loop(voice_rx, retire_tx, sample_tx, block, sr, &stats, &shutdown))?,
            );
        }
        {
            let stats = stats.clone();
            threads.push(
                thread::Builder::new()
                    .name("capture".into())
                    .spawn(move || capture_loop(sample_rx, capture, &stats))?,
            );
        }
        {
            let (engine, stats, shutdown) = (engine.clone(), stats.clone(), shutdown.clone());
            threads.push(
                thread::Builder::new()
                    .name("osc".into())
                    .spawn(move || control_loop(udp, &engine, voice_tx, retire_rx, &stats, &shutdown))?,
            );
        }
        {
            let (stats, shutdown) = (stats.clone(), shutdown.clone());
            let assets = Arc::new(assets);
            threads.push(
                thread::Builder::new()
                    .name("web".into())
                    .spawn(move || accept_loop(tcp, engine, assets, stats, shutdown))?,
            );
        }
        log::info!("listening: OSC udp://{osc_addr}, WebSocket ws://{ws_addr}");
        Ok(Server {
            osc_addr,
            ws_addr,
            shutdown,
            stats,
            threads,
        })
    }

    pub fn osc_addr(&self) -> SocketAddr {
        self.osc_addr
    }

    pub fn ws_addr(&self) -> SocketAddr {
        self.ws_addr
    }

    pub fn stats(&self) -> StatsSnapshot {
        self.stats.snapshot()
    }

    /// Setting this flag stops the service; see [`Server::wait`].
    pub fn shutdown_flag(&self) -> Arc<AtomicBool> {
        self.shutdown.clone()
    }

    /// Blocks until the shutdown flag is set, then stops all threads and
    /// finalizes the capture file.
    pub fn wait(self) {
        while !self.shutdown.load(Ordering::SeqCst) {
            thread::sleep(POLL);
        }
        self.join();
    }

    pub fn shutdown(self) {
        self.shutdown.store(true, Ordering::SeqCst);
        self.join();
    }

    fn join(self) {
        for t in self.threads {
            let name = t.thread().name().unwrap_or("?").to_string();
            if t.join().is_err() {
                log::error!("{name} thread panicked");
            }
        }
        log::info!("stopped");
    }
}

fn build_voice(engine: &Engine, req: &TapRequest, received: Instant) -> Result<Voice, String> {
    let tap = engine.resolve(req).map_err(|e| e.to_string())?;
    let sr = tap.model.sample_rate;
    let mut bank = ResonatorBank::new(&tap.model, sr).map_err(|e| e.to_string())?;
    let p = bank.probe_peak(tap.force, tap.point, (GAIN_PROBE * sr).ceil() as usize);
    bank.set_output_gain(if p > PEAK_GUARD { PEAK_GUARD / p } else { 1.0 });
    log::info!(
        "tap {} force {:.2} at ({:.3}, {:.3}) m, {} modes",
        tap.material,
        tap.force,
        tap.point.x,
        tap.point.y,
        tap.model.modes.len()
    );
    Ok(Voice {
        bank,
        pending: Some(BlockEvent {
            offset: 0,
            force: tap.force,
            plate_point: tap.point,
        }),
        received,
        started: false,
    })
}

fn control_loop(
    udp: UdpSocket,
    engine: &Engine,
    mut voices: Producer<Voice>,
    mut retired: Consumer<Voice>,
    stats: &Stats,
    shutdown: &AtomicBool,
) {
    let mut buf = vec![0u8; 65_536];
    while !shutdown.load(Ordering::SeqCst) {
        // Voices are freed here, off the render thread.
        while retired.pop().is_ok() {}
        let (n, from) = match udp.recv_from(&mut buf) {
            Ok(x) => x,
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => continue,
            Err(e) => {
                log::warn!("udp receive: {e}");
                continue;
            }
        };
        let received = Instant::now();
        let cmd = decode_osc(&buf[..n])
            .map_err(|e| e.to_string())
            .and_then(|m| Command::from_osc(&m).map_err(|e| e.to_string()));
        let outcome = match cmd {
            Ok(Command::Tap(req)) => build_voice(engine, &req, received).and_then(|v| {
                voices.push(v).map_err(|_| "voice queue full".to_string())?;
                stats.taps.fetch_add(1, Ordering::Relaxed);
                Ok(())
            }),
            Ok(Command::SetPlateMaterial(name)) => engine.set_plate_material(&name).map_err(|e| e.to_string()),
            Err(e) => Err(e),
        };
        if let Err(e) = outcome {
            stats.dropped.fetch_add(1, Ordering::Relaxed);
            log::warn!("dropped datagram from {from}: {e}");
        }
    }
}

fn retire(slot: &mut Option<Voice>, retired: &mut Producer<Voice>) {
    if let Some(v) = slot.take() {
        // If the return ring is full the voice is freed here instead.
        let _ = retired.push(v);
    }
}

fn render_loop(
    mut incoming: Consumer<Voice>,
    mut retired: Producer<Voice>,
    mut samples: Producer<f32>,
    block: usize,
    sample_rate: f64,
    stats: &Stats,
    shutdown: &AtomicBool,
) {
    let mut slots: Vec<Option<Voice>> = (0..MAX_VOICES).map(|_| None).collect();
    let mut ages = [0u64; MAX_VOICES];
    let mut clock = 0u64;
    let mut mix = vec![0.0f64; block];
    let mut scratch = vec![0.0f64; block];
    let mut out = vec![0.0f32; block];
    let period = Duration::from_secs_f64(block as f64 / sample_rate);
    let mut deadline = Instant::now();

    while !shutdown.load(Ordering::SeqCst) {
        while let Ok(v) = incoming.pop() {
            clock += 1;
            let i = match slots.iter().position(|s| s.is_none()) {
                Some(i) => i,
                None => {
                    let oldest = (0..MAX_VOICES).min_by_key(|&i| ages[i]).unwrap_or(0);
                    retire(&mut slots[oldest], &mut retired);
                    oldest
                }
            };
            slots[i] = Some(v);
            ages[i] = clock;
        }

        mix.fill(0.0);
        for slot in slots.iter_mut() {
            let Some(v) = slot.as_mut() else { continue };
            let ev = v.pending.take();
            if v.bank.render_block(ev.as_slice(), &mut scratch).is_err() {
                retire(slot, &mut retired);
                continue;
            }
            for (m, s) in mix.iter_mut().zip(&scratch) {
                *m += s;
            }
            if !v.started && scratch.iter().any(|&s| s != 0.0) {
                v.started = true;
                let us = v.received.elapsed().as_micros() as u64;
                stats.last_latency_us.store(us, Ordering::Relaxed);
                stats.max_latency_us.fetch_max(us, Ordering::Relaxed);
                stats.voices_started.fetch_add(1, Ordering::Relaxed);
            }
            if v.bank.is_silent() {
                retire(slot, &mut retired);
            }
        }
        for (o, m) in out.iter_mut().zip(&mix) {
            *o = m.clamp(-1.0, 1.0) as f32;
        }
        let (_, rest) = samples.push_partial_slice(&out);
        if !rest.is_empty() {
            stats.overruns.fetch_add(1, Ordering::Relaxed);
        }
        stats.rendered_samples.fetch_add(block as u64, Ordering::Relaxed);

        deadline += period;
        let now = Instant::now();
        if deadline > now {
            thread::sleep(deadline - now);
        } else if now - deadline > Duration::from_secs(1) {
            deadline = now;
        }
    }
    // Dropping `samples` here tells the capture thread to finish.
}

fn capture_loop(mut samples: Consumer<f32>, mut writer: Option<WavWriter>, stats: &Stats) {
    let mut buf = vec![0.0f32; 4096];
    let mut wide = Vec::with_capacity(4096);
    let mut last_flush = Instant::now();
    loop {
        let abandoned = samples.is_abandoned();
        let (got, _) = samples.pop_partial_slice(&mut buf);
        let n = got.len();
        if n > 0 {
            if let Some(w) = writer.as_mut() {
                wide.clear();
                wide.extend(buf[..n].iter().map(|&s| s as f64));
                if let Err(e) = w.write(&wide) {
                    log::error!("capture write failed, capture disabled: {e}");
                    writer = None;
                }
            }
            stats.captured_samples.fetch_add(n as u64, Ordering::Relaxed);
        }
        if let Some(w) = writer.as_mut() {
            if last_flush.elapsed() > Duration::from_millis(250) {
                if let Err(e) = w.flush() {
                    log::error!("capture flush failed: {e}");
                }
                last_flush = Instant::now();
            }
        }
        if n == 0 {
            if abandoned {
                break;
            }
            thread::sleep(Duration::from_millis(5));
        }
    }
    if let Some(w) = writer {
        if let Err(e) = w.finish() {
            log::error!("capture finalize failed: {e}");
        }
    }
}

/// Files of the loaded scene that may be served over HTTP.
#[derive(Debug)]
struct SceneAssets {
    dir: PathBuf,
    index: String,
    files: Vec<String>,
}

#[derive(Serialize)]
struct SceneIndex<'a> {
    masks: Vec<SceneIndexEntry>,
    backdrop: Option<&'a str>,
}

#[derive(Serialize)]
struct SceneIndexEntry {
    image: String,
    metadata: String,
    meta: MaskMeta,
}

impl SceneAssets {
    fn new(dir: &Path, scene: &crate::scene::Scene) -> Self {
        let mut files = Vec::new();
        let masks = scene
            .names
            .iter()
            .zip(&scene.masks)
            .map(|(stem, m)| {
                let (image, metadata) = (format!("{stem}.png"), format!("{stem}.toml"));
                files.push(image.clone());
                files.push(metadata.clone());
                SceneIndexEntry {
                    image,
                    metadata,
                    meta: MaskMeta::of(m),
                }
            })
            .collect();
        let backdrop = scene.backdrop.as_ref().map(|_| BACKDROP_FILE);
        if backdrop.is_some() {
            files.push(BACKDROP_FILE.to_string());
        }
        let index = serde_json::to_string(&SceneIndex {
            masks,
            backdrop,
        })
        .unwrap_or_default();
        SceneAssets {
            dir: dir.to_path_buf(),
            index,
            files,
        }
    }
}

fn accept_loop(
    listener: TcpListener,
    engine: Arc<Engine>,
    assets: Arc<Option<SceneAssets>>,
    stats: Arc<Stats>,
    shutdown: Arc<AtomicBool>,
) {
    let mut handlers: Vec<JoinHandle<()>> = Vec::new();
    while !shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let (engine, assets, stats, shutdown) =
                    (engine.clone(), assets.clone(), stats.clone(), shutdown.clone());
                let spawned = thread::Builder::new().name(format!("conn {peer}")).spawn(move || {
                    if let Err(e) = handle_connection(stream, &engine, &assets, &stats, &shutdown) {
                        log::debug!("connection {peer}: {e}");
                    }
                });
                match spawned {
                    Ok(h) => handlers.push(h),
                    Err(e) => log::warn!("cannot spawn handler for {peer}: {e}"),
                }
                handlers.retain(|h| !h.is_finished());
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(10)),
            Err(e) => {
                log::warn!("accept: {e}");
                thread::sleep(POLL);
            }
        }
    }
    for h in handlers {
        let _ = h.join();
    }
}

/// Reads (without consuming) the request head.
fn peek_head(stream: &TcpStream) -> io::Result<String> {
    let mut buf = [0u8; 8192];
    let deadline = Instant::now() + Duration::from_secs(2);
    loop {
        let n = stream.peek(&mut buf)?;
        if n == 0 {
            return Err(io::ErrorKind::UnexpectedEof.into());
        }
        if let Some(end) = buf[..n].windows(4).position(|w| w == b"\r\n\r\n") {
            return Ok(String::from_utf8_lossy(&buf[..end]).into_owned());
        }
        if n == buf.len() || Instant::now() > deadline {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "request head too large or too slow"));
        }
        thread::sleep(Duration::from_millis(2));
    }
}

fn handle_connection(
    stream: TcpStream,
    engine: &Engine,
    assets: &Option<SceneAssets>,
    stats: &Stats,
    shutdown: &AtomicBool,
) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(Duration::from_secs(2)))?;
    let head = peek_head(&stream)?;
    let is_ws = head
        .lines()
        .any(|l| l.to_ascii_lowercase().starts_with("upgrade:") && l.to_ascii_lowercase().contains("websocket"));
    if is_ws {
        serve_websocket(stream, engine, stats, shutdown)
    } else {
        serve_http(stream, &head, assets)
    }
}

fn serve_websocket(stream: TcpStream, engine: &Engine, stats: &Stats, shutdown: &AtomicBool) -> io::Result<()> {
    let mut ws = tungstenite::accept(stream).map_err(|e| io::Error::other(e.to_string()))?;
    ws.get_mut().set_read_timeout(Some(POLL))?;
    loop {
        match ws.read() {
            Ok(Message::Text(text)) => {
                let reply = handle_json(text.as_str(), engine, stats);
                if ws.send(Message::text(reply)).is_err() {
                    break;
                }
            }
            Ok(Message::Close(_)) => break,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                if shutdown.load(Ordering::SeqCst) {
                    let _ = ws.close(None);
                    let _ = ws.flush();
                    break;
                }
            }
            Err(_) => break,
        }
    }
    Ok(())
}

#[derive(serde::Deserialize)]
struct RequestKind {
    #[serde(rename = "type")]
    kind: String,
}

/// One JSON request in, one JSON reply out.
fn handle_json(text: &str, engine: &Engine, stats: &Stats) -> String {
    let kind = match serde_json::from_str::<RequestKind>(text) {
        Ok(k) => k.kind,
        Err(e) => return error_json(format!("bad request: {e}")),
    };
    match kind.as_str() {
        "tap" => match TapRequest::from_json(text).map_err(|e| e.to_string()).and_then(|req| {
            engine.report(&req).map_err(|e| e.to_string())
        }) {
            Ok(report) => serde_json::to_string(&report).unwrap_or_else(error_json),
            Err(e) => {
                stats.dropped.fetch_add(1, Ordering::Relaxed);
                error_json(e)
            }
        },
        "stats" => {
            #[derive(Serialize)]
            struct Reply {
                #[serde(rename = "type")]
                kind: &'static str,
                #[serde(flatten)]
                stats: StatsSnapshot,
            }
            serde_json::to_string(&Reply {
                kind: "stats",
                stats: stats.snapshot(),
            })
            .unwrap_or_else(error_json)
        }
        "materials" => {
            let list: Vec<_> = engine
                .table()
                .entries()
                .iter()
                .map(|m| serde_json::json!({"name": m.name, "color": m.label_color.to_string()}))
                .collect();
            serde_json::json!({"type": "materials", "materials": list}).to_string()
        }
        other => error_json(format!("unknown request type {other:?}")),
    }
}

fn error_json(message: impl ToString) -> String {
    serde_json::to_string(&ErrorReport::new(message)).unwrap_or_else(|_| r#"{"type":"error"}"#.into())
}

fn content_type(name: &str) -> &'static str {
    match name.rsplit('.').next() {
        Some("png") => "image/png",
        Some("json") => "application/json",
        Some("toml") => "text/plain; charset=utf-8",
        _ => "application/octet-stream",
    }
}

fn serve_http(mut stream: TcpStream, head: &str, assets: &Option<SceneAssets>) -> io::Result<()> {
    // Consume the head we peeked.
    let mut sink = vec![0u8; head.len() + 4];
    stream.read_exact(&mut sink)?;
    let mut parts = head.lines().next().unwrap_or("").split_whitespace();
    let (method, path) = (parts.next().unwrap_or(""), parts.next().unwrap_or(""));
    let path = path.split('?').next().unwrap_or("");
    let (status, ctype, body): (&str, &str, Vec<u8>) = if method != "GET" {
        ("405 Method Not Allowed", "text/plain", b"GET only\n".to_vec())
    } else if path == "/" {
        ("200 OK", "text/plain", b"sonomat engine: WebSocket JSON on this port, scene under /scene/\n".to_vec())
    } else if let Some(name) = path.strip_prefix("/scene/") {
        match assets {
            None => ("404 Not Found", "text/plain", b"no scene loaded\n".to_vec()),
            Some(a) if name == "index.json" => ("200 OK", "application/json", a.index.clone().into_bytes()),
            Some(a) if a.files.iter().any(|f| f == name) => match std::fs::read(a.dir.join(name)) {
                Ok(b) => ("200 OK", content_type(name), b),
                Err(_) => ("500 Internal Server Error", "text/plain", b"read failed\n".to_vec()),
            },
            Some(_) => ("404 Not Found", "text/plain", b"not found\n".to_vec()),
        }
    } else {
        ("404 Not Found", "text/plain", b"not found\n".to_vec())
    };
    write!(
        stream,
        "HTTP/1.1 {status}\r\nContent-Type: {ctype}\r\nContent-Length: {}\r\nAccess-Control-Allow-Origin: *\r\nConnection: close\r\n\r\n",
        body.len()
    )?;
    stream.write_all(&body)?;
    stream.flush()
}
