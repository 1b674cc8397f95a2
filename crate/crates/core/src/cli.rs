//! Command-line front end. JSON results go to stdout, logs to stderr.
//!
//! Exit codes: 0 ok, 1 environment (I/O, sockets), 2 usage or bad input,
//! 3 material could not be resolved.

use std::collections::BTreeMap;
use std::io::Write;
use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::Ordering;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::Point3;
use serde_json::json;

use crate::analysis::{estimate_t60, spectrogram};
use crate::engine::EngineConfig;
use crate::material::{load_material_db, MaterialError, MaterialTable};
use crate::plate::{build_modal_model, PlateError, PlateGeometry, PlatePoint};
use crate::plot::{spectrogram_image, PlotOptions};
use crate::scene::{fixtures, load_scene_dir, resolve_material, SceneError};
use crate::server::{ServeConfig, Server, DEFAULT_OSC_PORT, DEFAULT_WS_PORT};
use crate::sheet::{contact_sheet, contact_sheet_image};
use crate::synth::{render_events, ExcitationEvent, ExcitationProfile, SynthError};
use crate::wav::{read_wav, write_wav, SampleFormat, WavError};

pub const EXIT_ENV: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_UNRESOLVED: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "sonomat", version, about = "Material-aware impact sound synthesis")]
pub struct Cli {
    /// Material database (TOML); the built-in table when omitted.
    #[arg(long, global = true, env = "SONOMAT_DB")]
    pub db: Option<PathBuf>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render one strike on a plate to a WAV file.
    Render(RenderArgs),
    /// Resolve the material under a world point from a scene directory.
    Resolve(ResolveArgs),
    /// Run the OSC / WebSocket tap service.
    Serve(ServeArgs),
    /// Spectrogram of a WAV as CSV or PNG, or the all-material contact sheet.
    Spectrogram(SpectrogramArgs),
    #[command(hide = true)]
    Fixtures {
        #[command(subcommand)]
        command: FixturesCommand,
    },
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Material name (case-insensitive).
    #[arg(long, short)]
    pub material: String,
    /// Plate footprint `LXxLY` in metres.
    #[arg(long, default_value = "0.22x0.22", value_parser = parse_size)]
    pub size: (f64, f64),
    /// Plate thickness in metres; the material's default when omitted.
    #[arg(long)]
    pub thickness: Option<f64>,
    /// Strike point `X,Y` in metres; (0.31, 0.27) of the sides when omitted.
    #[arg(long, value_parser = parse_pair)]
    pub excitation: Option<(f64, f64)>,
    /// Listening point `X,Y` in metres.
    #[arg(long, value_parser = parse_pair)]
    pub listen: Option<(f64, f64)>,
    #[arg(long, default_value_t = 1.0)]
    pub force: f64,
    /// Seconds (at most 60).
    #[arg(long, default_value_t = 1.5)]
    pub duration: f64,
    #[arg(long, default_value_t = 48_000)]
    pub sample_rate: u32,
    /// Raised-cosine contact of this many milliseconds instead of an ideal
    /// impulse.
    #[arg(long)]
    pub contact_ms: Option<f64>,
    /// Write 16-bit PCM instead of 32-bit float.
    #[arg(long)]
    pub pcm16: bool,
    /// Also write the mode table (m n f alpha gain) to this file.
    #[arg(long)]
    pub dump_modes: Option<PathBuf>,
    #[arg(long, short, default_value = "render.wav")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ResolveArgs {
    /// Scene directory of mask PNGs with TOML sidecars.
    #[arg(long)]
    pub scene: PathBuf,
    /// World point `X,Y,Z` in metres.
    #[arg(long, value_parser = parse_triple, allow_hyphen_values = true)]
    pub point: (f64, f64, f64),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// UDP port for OSC (0 picks a free one).
    #[arg(long, env = "SONOMAT_OSC_PORT", default_value_t = DEFAULT_OSC_PORT.to_string())]
    pub osc_port: String,
    /// TCP port for WebSocket clients and scene assets.
    #[arg(long, env = "SONOMAT_WS_PORT", default_value_t = DEFAULT_WS_PORT.to_string())]
    pub ws_port: String,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: IpAddr,
    /// Scene directory for world taps.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Append everything rendered to this WAV file.
    #[arg(long)]
    pub capture: Option<PathBuf>,
    /// Capture as 16-bit PCM instead of 32-bit float.
    #[arg(long)]
    pub pcm16: bool,
    /// Render to the capture file only, without a playback device.
    #[arg(long)]
    pub no_audio_device: bool,
    /// Samples per render block.
    #[arg(long, default_value_t = 256)]
    pub block: usize,
    /// Plate footprint `LXxLY` in metres for every tap.
    #[arg(long, default_value = "0.22x0.22", value_parser = parse_size)]
    pub size: (f64, f64),
    /// Plate thickness in metres; each material's default when omitted.
    #[arg(long)]
    pub thickness: Option<f64>,
    #[arg(long, default_value_t = 48_000)]
    pub sample_rate: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SpecFormat {
    Csv,
    Png,
}

#[derive(Debug, Args)]
pub struct SpectrogramArgs {
    /// Input WAV (not used with --batch).
    #[arg(required_unless_present = "batch")]
    pub input: Option<PathBuf>,
    /// Output file; format follows the extension unless --format is given.
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<SpecFormat>,
    #[arg(long, default_value_t = 1024)]
    pub window: usize,
    #[arg(long, default_value_t = 256)]
    pub hop: usize,
    /// Upper frequency of the PNG axis.
    #[arg(long)]
    pub max_hz: Option<f64>,
    /// Render every material and write a contact sheet ordered by stiffness.
    #[arg(long, conflicts_with = "input")]
    pub batch: bool,
}

#[derive(Debug, Subcommand)]
pub enum FixturesCommand {
    /// Write the synthetic test scenes.
    Gen {
        /// Output directory; `grid/` and `split/` are created inside.
        out: PathBuf,
    },
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn usage(message: impl ToString) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.to_string(),
        }
    }

    fn env(message: impl ToString) -> Self {
        CliError {
            code: EXIT_ENV,
            message: message.to_string(),
        }
    }
}

impl From<MaterialError> for CliError {
    fn from(e: MaterialError) -> Self {
        match e {
            MaterialError::Io { .. } => CliError::env(e),
            _ => CliError::usage(e),
        }
    }
}

impl From<PlateError> for CliError {
    fn from(e: PlateError) -> Self {
        CliError::usage(e)
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::usage(e)
    }
}

impl From<WavError> for CliError {
    fn from(e: WavError) -> Self {
        match e {
            WavError::Io(_) => CliError::env(e),
            _ => CliError::usage(e),
        }
    }
}

impl From<SceneError> for CliError {
    fn from(e: SceneError) -> Self {
        match e {
            SceneError::NoVotes { .. } => CliError {
                code: EXIT_UNRESOLVED,
                message: format!("{e}; no material could be resolved"),
            },
            SceneError::Io(_) => CliError::env(e),
            _ => CliError::usage(e),
        }
    }
}

fn parse_numbers(s: &str, sep: char, n: usize) -> Result<Vec<f64>, String> {
    let v: Vec<f64> = s
        .split(sep)
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    if v.len() != n {
        return Err(format!("expected {n} values separated by `{sep}`"));
    }
    Ok(v)
}

fn parse_size(s: &str) -> Result<(f64, f64), String> {
    let v = parse_numbers(&s.to_ascii_lowercase(), 'x', 2)?;
    Ok((v[0], v[1]))
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let v = parse_numbers(s, ',', 2)?;
    Ok((v[0], v[1]))
}

fn parse_triple(s: &str) -> Result<(f64, f64, f64), String> {
    let v = parse_numbers(s, ',', 3)?;
    Ok((v[0], v[1], v[2]))
}

fn parse_port(s: &str, what: &str) -> Result<u16, CliError> {
    s.trim()
        .parse::<u16>()
        .map_err(|_| CliError::env(format!("invalid {what} port `{s}` (expected 0-65535)")))
}

fn print_json(v: &serde_json::Value) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{v}");
    let _ = out.flush();
}

fn load_table(db: Option<&Path>) -> Result<MaterialTable, CliError> {
    match db {
        Some(p) => Ok(load_material_db(p)?),
        None => Ok(MaterialTable::shipped()),
    }
}

fn cmd_render(table: &MaterialTable, a: &RenderArgs) -> Result<(), CliError> {
    let m = table.lookup_by_name(&a.material)?;
    let geometry = PlateGeometry::new(a.size.0, a.size.1, a.thickness.unwrap_or(m.default_thickness))?;
    let exc = a.excitation.map_or(geometry.reference_tap(), |(x, y)| PlatePoint::new(x, y));
    let listen = a.listen.map_or(geometry.default_listening_point(), |(x, y)| PlatePoint::new(x, y));
    let model = build_modal_model(geometry, m, exc, listen, a.sample_rate as f64)?;
    let profile = match a.contact_ms {
        Some(ms) => ExcitationProfile::RaisedCosine { duration: ms / 1000.0 },
        None => ExcitationProfile::Impulse,
    };
    let buf = render_events(&model, &[ExcitationEvent::new(0.0, a.force, exc)], a.duration, profile)?;
    let format = if a.pcm16 { SampleFormat::Pcm16 } else { SampleFormat::Float32 };
    write_wav(&a.out, &buf, format).map_err(|e| CliError::env(format!("{}: {e}", a.out.display())))?;
    if let Some(p) = &a.dump_modes {
        std::fs::write(p, model.dump()).map_err(|e| CliError::env(format!("{}: {e}", p.display())))?;
    }
    log::info!("wrote {} ({} samples)", a.out.display(), buf.samples.len());
    print_json(&json!({
        "material": m.name,
        "modes": model.modes.len(),
        "f11_hz": model.fundamental().frequency,
        "t60_estimate_s": model.t60_estimate(),
        "t60_measured_s": estimate_t60(&buf),
        "peak": buf.peak(),
        "sample_rate": buf.sample_rate,
        "duration_s": buf.duration(),
        "out": a.out,
    }));
    Ok(())
}

fn cmd_resolve(table: &MaterialTable, a: &ResolveArgs) -> Result<(), CliError> {
    let scene = load_scene_dir(&a.scene)?;
    let buffer = scene.buffer();
    let (x, y, z) = a.point;
    let res = resolve_material(&buffer, &Point3::new(x, y, z), table)?;
    print_json(&json!({
        "material": res.material,
        "tally": res.tally,
        "masks": buffer.len(),
    }));
    Ok(())
}

fn cmd_serve(db: Option<&Path>, a: &ServeArgs) -> Result<(), CliError> {
    let table = Arc::new(load_table(db)?);
    let config = ServeConfig {
        bind: a.bind,
        osc_port: parse_port(&a.osc_port, "OSC")?,
        ws_port: parse_port(&a.ws_port, "WebSocket")?,
        scene_dir: a.scene.clone(),
        capture: a.capture.clone(),
        capture_format: if a.pcm16 { SampleFormat::Pcm16 } else { SampleFormat::Float32 },
        block_size: a.block,
        audio_device: !a.no_audio_device,
        engine: EngineConfig {
            length_x: a.size.0,
            length_y: a.size.1,
            thickness: a.thickness,
            sample_rate: a.sample_rate as f64,
            ..EngineConfig::default()
        },
    };
    // Reject a bad plate before binding anything.
    PlateGeometry::new(a.size.0, a.size.1, a.thickness.unwrap_or(0.005))?;
    let server = Server::start(config, table).map_err(|e| match e {
        crate::server::ServeError::Scene(e) => CliError::from(e),
        e => CliError::env(e),
    })?;
    let flag = server.shutdown_flag();
    if let Err(e) = ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst)) {
        log::warn!("cannot install interrupt handler: {e}");
    }
    print_json(&json!({
        "status": "listening",
        "osc_port": server.osc_addr().port(),
        "ws_port": server.ws_addr().port(),
    }));
    let stop = server.shutdown_flag();
    while !stop.load(Ordering::SeqCst) {
        std::thread::sleep(std::time::Duration::from_millis(50));
    }
    let snapshot = server.stats();
    server.shutdown();
    print_json(&json!({ "status": "stopped", "stats": snapshot }));
    Ok(())
}

fn cmd_spectrogram(table: &MaterialTable, a: &SpectrogramArgs) -> Result<(), CliError> {
    let ext_png = a.out.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let format = a.format.unwrap_or(if ext_png { SpecFormat::Png } else { SpecFormat::Csv });
    let save_png = |img: image::RgbImage| {
        img.save_with_format(&a.out, image::ImageFormat::Png)
            .map_err(|e| CliError::env(format!("{}: {e}", a.out.display())))
    };
    if a.batch {
        if format != SpecFormat::Png {
            return Err(CliError::usage("--batch writes a PNG contact sheet"));
        }
        let sheet = contact_sheet(table).map_err(CliError::usage)?;
        save_png(contact_sheet_image(&sheet).map_err(CliError::usage)?)?;
        let entries: Vec<_> = sheet.iter().map(|(e, _)| e).collect();
        print_json(&json!({ "out": a.out, "materials": entries }));
        return Ok(());
    }
    let input = a.input.as_deref().ok_or_else(|| CliError::usage("input WAV required"))?;
    let buf = read_wav(input).map_err(|e| match e {
        WavError::Io(ref io) if io.kind() == std::io::ErrorKind::NotFound => {
            CliError::usage(format!("{}: {e}", input.display()))
        }
        e => {
            let mut c = CliError::from(e);
            c.message = format!("{}: {}", input.display(), c.message);
            c
        }
    })?;
    let spec = spectrogram(&buf, a.window, a.hop).map_err(CliError::usage)?;
    match format {
        SpecFormat::Csv => {
            let f = std::fs::File::create(&a.out).map_err(|e| CliError::env(format!("{}: {e}", a.out.display())))?;
            spec.write_csv(std::io::BufWriter::new(f))
                .map_err(|e| CliError::env(format!("{}: {e}", a.out.display())))?;
        }
        SpecFormat::Png => save_png(spectrogram_image(
            &spec,
            &PlotOptions {
                max_hz: a.max_hz,
                ..PlotOptions::default()
            },
        ))?,
    }
    print_json(&json!({
        "out": a.out,
        "frames": spec.frames(),
        "bins": spec.bins(),
        "dominant_ridge_hz": spec.dominant_ridge(),
    }));
    Ok(())
}

fn cmd_fixtures(table: &MaterialTable, out: &Path) -> Result<(), CliError> {
    let grid = out.join("grid");
    let split = out.join("split");
    fixtures::write_scene(&grid, &fixtures::grid_scene(table), Some(&fixtures::grid_backdrop(table)))?;
    fixtures::write_scene(&split, &fixtures::split_scene(table), None)?;
    let points: BTreeMap<_, _> = table
        .names()
        .into_iter()
        .filter_map(|n| fixtures::grid_point(table, n).map(|p| (n.to_string(), [p.x, p.y, p.z])))
        .collect();
    print_json(&json!({
        "grid": grid,
        "split": split,
        "grid_points": points,
        "split_point": [0.0, 0.0, fixtures::PLANE_Z],
    }));
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let db = cli.db.as_deref();
    match &cli.command {
        Command::Serve(a) => cmd_serve(db, a),
        cmd => {
            let table = load_table(db)?;
            match cmd {
                Command::Render(a) => cmd_render(&table, a),
                Command::Resolve(a) => cmd_resolve(&table, a),
                Command::Spectrogram(a) => cmd_spectrogram(&table, a),
                Command::Fixtures {
                    command: FixturesCommand::Gen { out },
                } => cmd_fixtures(&table, out),
                Command::Serve(_) => unreachable!(),
            }
        }
    }
}

/// Parses the process arguments, runs, and maps failures to exit codes.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
