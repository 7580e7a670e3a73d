use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use notecast_core::llm::LlmConfig;
use notecast_core::notebook::Notebook;
use notecast_core::pipeline::{self, BuildRequest};
use notecast_core::render::{encode_sequence, EncoderConfig, OutputMode};
use notecast_core::script::{self, DesignScript, Resolution, Settings, Span};
use notecast_core::tts::{Synthesizer, TtsConfig};

use crate::config::{encoder_available, voice_spec, LlmMode, RenderMode, ServiceConfig};

#[derive(Debug, Parser)]
#[command(
    name = "notecast",
    version,
    about = "Turn Jupyter notebooks into narrated code walkthrough videos"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct LlmArgs {
    /// Deterministic offline model.
    #[arg(long, conflicts_with = "replay_dir")]
    pub stub_llm: bool,
    /// Answer model requests from recorded fixtures in this directory.
    #[arg(long, value_name = "DIR")]
    pub replay_dir: Option<PathBuf>,
}

impl LlmArgs {
    fn mode(&self) -> Option<LlmMode> {
        if self.stub_llm {
            Some(LlmMode::Stub)
        } else {
            self.replay_dir.clone().map(LlmMode::Replay)
        }
    }

    /// The chosen mode, or the live model from the environment.
    fn mode_or_live(&self) -> LlmMode {
        self.mode()
            .unwrap_or_else(|| LlmMode::Live(LlmConfig::from_env()))
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the logic flow of a notebook as JSON.
    Flow {
        notebook: PathBuf,
        /// Ask the model for step descriptions.
        #[arg(long)]
        describe: bool,
        #[command(flatten)]
        llm: LlmArgs,
    },
    /// Write an empty design script with one scene per code cell.
    Init {
        notebook: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        fps: Option<u32>,
        /// WIDTHxHEIGHT
        #[arg(long, value_parser = parse_resolution)]
        resolution: Option<Resolution>,
    },
    /// Add an emphasis element to a script in place.
    Emphasize {
        notebook: PathBuf,
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        cell: usize,
        /// First occurrence of this text in the cell.
        #[arg(
            long = "match",
            conflicts_with = "span",
            required_unless_present = "span"
        )]
        text: Option<String>,
        /// START:END in characters.
        #[arg(long, value_parser = parse_span)]
        span: Option<Span>,
        #[arg(long)]
        annotation: String,
    },
    /// Fill in narration for every scene.
    Narrate {
        notebook: PathBuf,
        #[arg(long)]
        script: PathBuf,
        /// Defaults to overwriting the script.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        llm: LlmArgs,
    },
    /// Render a script to an MP4 and/or an image sequence.
    Build {
        notebook: PathBuf,
        #[arg(long)]
        script: PathBuf,
        #[arg(long, required_unless_present = "frames_dir")]
        out: Option<PathBuf>,
        #[arg(long)]
        frames_dir: Option<PathBuf>,
        #[arg(long)]
        fps: Option<u32>,
        #[arg(long, value_parser = parse_resolution)]
        resolution: Option<Resolution>,
        /// Render only this scene.
        #[arg(long)]
        scene: Option<String>,
        /// Silent audio timed from word counts.
        #[arg(long)]
        stub_tts: bool,
        /// Narrate scenes that have no narration yet.
        #[command(flatten)]
        llm: LlmArgs,
    },
    /// Run the HTTP authoring service.
    Serve {
        #[arg(long, env = "NOTECAST_ADDR", default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[arg(long, env = "NOTECAST_DATA_DIR", default_value = "notecast-data")]
        data_dir: PathBuf,
        /// Directory with the authoring UI, served at the root.
        #[arg(long, env = "NOTECAST_STATIC_DIR")]
        static_dir: Option<PathBuf>,
        #[arg(long, env = "NOTECAST_STUB_TTS")]
        stub_tts: bool,
        /// Write image sequences even when an encoder is available.
        #[arg(long)]
        frames: bool,
        #[command(flatten)]
        llm: LlmArgs,
    },
}

fn parse_resolution(s: &str) -> Result<Resolution, String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WIDTHxHEIGHT")?;
    let width: u32 = w.parse().map_err(|_| format!("bad width {w:?}"))?;
    let height: u32 = h.parse().map_err(|_| format!("bad height {h:?}"))?;
    if width == 0 || height == 0 {
        return Err("resolution must be positive".into());
    }
    Ok(Resolution { width, height })
}

fn parse_span(s: &str) -> Result<Span, String> {
    let (a, b) = s.split_once(':').ok_or("expected START:END")?;
    let start = a.parse().map_err(|_| format!("bad start {a:?}"))?;
    let end = b.parse().map_err(|_| format!("bad end {b:?}"))?;
    Ok(Span::new(start, end))
}

fn read_notebook(path: &Path) -> Result<Notebook> {
    if !path.exists() {
        bail!("notebook not found: {}", path.display());
    }
    Ok(pipeline::read_notebook(path)?)
}

fn read_script(path: &Path) -> Result<DesignScript> {
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => anyhow!("script not found: {}", path.display()),
        _ => anyhow!("{}: {e}", path.display()),
    })?;
    script::deserialize(&bytes).with_context(|| format!("invalid script {}", path.display()))
}

/// Prints a line to stdout; a closed pipe is not an error.
fn emit(line: &str) -> Result<()> {
    use std::io::Write;
    match writeln!(std::io::stdout(), "{line}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn write_script(path: &Path, script: &DesignScript) -> Result<()> {
    std::fs::write(path, script::serialize(script)?)
        .with_context(|| format!("writing {}", path.display()))
}

/// Parses arguments and runs; returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", error_chain(&e));
            1
        }
    }
}

/// Joins the causes of `e`, skipping any whose text its parent already shows.
fn error_chain(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Flow {
            notebook,
            describe,
            llm,
        } => {
            let nb = read_notebook(&notebook)?;
            let bridge = describe.then(|| llm.mode_or_live().bridge());
            let flow = pipeline::logic_flow(&nb, bridge.as_ref())?;
            emit(&serde_json::to_string_pretty(&flow)?)?;
        }
        Command::Init {
            notebook,
            out,
            fps,
            resolution,
        } => {
            let nb = read_notebook(&notebook)?;
            let flow = pipeline::logic_flow(&nb, None)?;
            let mut settings = Settings::default();
            if let Some(f) = fps {
                settings.fps = f;
            }
            if let Some(r) = resolution {
                settings.resolution = r;
            }
            write_script(&out, &pipeline::initial_script(&flow, settings))?;
        }
        Command::Emphasize {
            notebook,
            script: path,
            cell,
            text,
            span,
            annotation,
        } => {
            let nb = read_notebook(&notebook)?;
            let script = read_script(&path)?;
            let source = &nb
                .cell(cell)
                .ok_or_else(|| anyhow!("no cell {cell}"))?
                .source;
            let span = match (span, text) {
                (Some(s), _) => s,
                (None, Some(t)) => {
                    let at = source
                        .find(&t)
                        .ok_or_else(|| anyhow!("{t:?} does not occur in cell {cell}"))?;
                    let start = source[..at].chars().count();
                    Span::new(start, start + t.chars().count())
                }
                (None, None) => bail!("give --match or --span"),
            };
            let scene_id = script
                .scene_for_cell(cell)
                .ok_or_else(|| anyhow!("no scene for cell {cell}"))?
                .id
                .clone();
            let mut created = None;
            let next = script.with_scene(&scene_id, |sc| {
                let (next, e) = sc.add_emphasis(source, span, &annotation)?;
                created = Some(e);
                Ok(next)
            })?;
            write_script(&path, &next)?;
            emit(&serde_json::to_string(&created)?)?;
        }
        Command::Narrate {
            notebook,
            script: path,
            out,
            llm,
        } => {
            let nb = read_notebook(&notebook)?;
            let script = read_script(&path)?;
            let flow = pipeline::flow_for_script(&nb, &script);
            script.validate_against(&nb, &flow)?;
            let next = pipeline::narrate(&script, &nb, &llm.mode_or_live().bridge())?;
            write_script(out.as_deref().unwrap_or(&path), &next)?;
        }
        Command::Build {
            notebook,
            script: path,
            out,
            frames_dir,
            fps,
            resolution,
            scene,
            stub_tts,
            llm,
        } => {
            let nb = read_notebook(&notebook)?;
            let mut script = read_script(&path)?;
            if let Some(f) = fps {
                script.settings.fps = f;
            }
            if let Some(r) = resolution {
                script.settings.resolution = r;
            }
            if let Some(mode) = llm.mode() {
                script = pipeline::narrate_missing(&script, &nb, &mode.bridge())?;
            }
            let flow = pipeline::flow_for_script(&nb, &script);
            let tts = TtsConfig::from_env();
            let silent = stub_tts || tts.endpoint.is_none();
            if silent && !stub_tts {
                eprintln!("warning: NOTECAST_TTS_ENDPOINT is not set; narration audio is silent");
            }
            let voice = voice_spec(silent, &script.settings.voice);
            let synth = Synthesizer::new(tts, None);
            let encoder = EncoderConfig::default();
            let mode = match (&frames_dir, &out) {
                (Some(dir), _) => OutputMode::ImageSequence(dir.clone()),
                (None, Some(o)) => OutputMode::Mp4 {
                    path: o.clone(),
                    encoder: encoder.clone(),
                },
                (None, None) => bail!("give --out or --frames-dir"),
            };
            let (_, artifact) = pipeline::build(&BuildRequest {
                script: &script,
                notebook: &nb,
                flow: &flow,
                synth: &synth,
                voice: &voice,
                mode: &mode,
                scene: scene.as_deref(),
            })?;
            if let (Some(dir), Some(o)) = (&frames_dir, &out) {
                encode_sequence(dir, o, &encoder)?;
            }
            emit(
                &serde_json::json!({
                    "frame_count": artifact.frame_count,
                    "duration_ms": artifact.duration_ms,
                    "fps": artifact.manifest.fps,
                    "frames_dir": frames_dir,
                    "video": out,
                })
                .to_string(),
            )?;
        }
        Command::Serve {
            addr,
            data_dir,
            static_dir,
            stub_tts,
            frames,
            llm,
        } => {
            let encoder = EncoderConfig::default();
            let render = if !frames && encoder_available(&encoder) {
                RenderMode::Mp4(encoder)
            } else {
                RenderMode::Frames
            };
            let config = ServiceConfig {
                data_dir,
                static_dir,
                llm: llm.mode_or_live(),
                tts: TtsConfig::from_env(),
                stub_tts,
                render,
            };
            serve(config, addr)?;
        }
    }
    Ok(())
}

fn serve(config: ServiceConfig, addr: SocketAddr) -> Result<()> {
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        std::fs::create_dir_all(&config.data_dir)?;
        tracing::info!(?config.render, "serving on {addr}");
        let app = crate::router(crate::AppState::new(config));
        let listener = tokio::net::TcpListener::bind(addr).await?;
        axum::serve(listener, app).await?;
        Ok(())
    })
}
