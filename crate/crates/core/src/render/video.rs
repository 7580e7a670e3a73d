use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ExtendedColorType, ImageEncoder, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{render_frame, RenderAssets, RenderError};
use crate::timeline::{frame_time_ms, Timeline};
use crate::tts::{encode_wav, samples_for_duration, AudioClip, SAMPLE_RATE};

pub const FRAME_PATTERN: &str = "frame_%06d.png";
pub const AUDIO_FILE: &str = "audio.wav";
pub const MANIFEST_FILE: &str = "manifest.json";

/// External encoder command. The default is `ffmpeg`, or `NOTECAST_FFMPEG`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderConfig {
    pub program: String,
    /// Arguments placed after the inputs and before the output path.
    pub output_args: Vec<String>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            program: std::env::var("NOTECAST_FFMPEG").unwrap_or_else(|_| "ffmpeg".into()),
            output_args: ["-c:v", "libx264", "-pix_fmt", "yuv420p", "-c:a", "aac"]
                .map(String::from)
                .to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OutputMode {
    /// Numbered PNG frames, a WAV track and a manifest in a directory.
    ImageSequence(PathBuf),
    Mp4 {
        path: PathBuf,
        encoder: EncoderConfig,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub fps: u32,
    pub width: u32,
    pub height: u32,
    pub frame_count: u64,
    pub duration_ms: u64,
    pub frames: String,
    pub audio: String,
    pub audio_sample_rate: u32,
    pub audio_samples: u64,
    pub timeline: Timeline,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderArtifact {
    pub frames_dir: Option<PathBuf>,
    pub audio_path: PathBuf,
    pub mp4_path: Option<PathBuf>,
    pub frame_count: u64,
    pub duration_ms: u64,
    pub manifest: Manifest,
}

/// One track of `total_ms`, each clip placed at its segment's start over
/// silence.
pub fn assemble_audio(timeline: &Timeline, clips: &BTreeMap<String, AudioClip>) -> Vec<i16> {
    let mut track = vec![0i16; samples_for_duration(timeline.total_ms)];
    for slot in timeline.scenes.iter().flat_map(|s| &s.segments) {
        let Some(clip) = clips.get(&slot.segment_id) else {
            continue;
        };
        let at = samples_for_duration(slot.start_ms);
        let room = track.len().saturating_sub(at);
        let n = clip.samples.len().min(room);
        track[at..at + n].copy_from_slice(&clip.samples[..n]);
    }
    track
}

fn manifest(timeline: &Timeline, audio_samples: usize) -> Manifest {
    Manifest {
        fps: timeline.fps,
        width: timeline.resolution.width,
        height: timeline.resolution.height,
        frame_count: timeline.frame_count(),
        duration_ms: timeline.total_ms,
        frames: FRAME_PATTERN.into(),
        audio: AUDIO_FILE.into(),
        audio_sample_rate: SAMPLE_RATE,
        audio_samples: audio_samples as u64,
        timeline: timeline.clone(),
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RenderError> {
    let tmp = path.with_extension("part");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn frame_file_name(i: u64) -> String {
    format!("frame_{i:06}.png")
}

fn encode_png(img: &RgbImage) -> Result<Vec<u8>, RenderError> {
    let mut out = Vec::new();
    PngEncoder::new_with_quality(&mut out, CompressionType::Fast, FilterType::Sub)
        .write_image(
            img.as_raw(),
            img.width(),
            img.height(),
            ExtendedColorType::Rgb8,
        )
        .map_err(|e| RenderError::Io(e.to_string()))?;
    Ok(out)
}

fn render_sequence(
    timeline: &Timeline,
    assets: &RenderAssets,
    dir: &Path,
    track: &[i16],
) -> Result<RenderArtifact, RenderError> {
    fs::create_dir_all(dir)?;
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with("frame_") && name.ends_with(".png") {
            fs::remove_file(&path)?;
        }
    }
    let n = timeline.frame_count();
    (0..n).into_par_iter().try_for_each(|i| {
        let img = render_frame(timeline, frame_time_ms(i, timeline.fps), assets)?;
        fs::write(dir.join(frame_file_name(i)), encode_png(&img)?)?;
        Ok::<_, RenderError>(())
    })?;
    let audio_path = dir.join(AUDIO_FILE);
    write_atomic(&audio_path, &encode_wav(track))?;
    let manifest = manifest(timeline, track.len());
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    write_atomic(&dir.join(MANIFEST_FILE), &json)?;
    Ok(RenderArtifact {
        frames_dir: Some(dir.to_path_buf()),
        audio_path,
        mp4_path: None,
        frame_count: n,
        duration_ms: timeline.total_ms,
        manifest,
    })
}

fn render_mp4(
    timeline: &Timeline,
    assets: &RenderAssets,
    out: &Path,
    encoder: &EncoderConfig,
    track: &[i16],
) -> Result<RenderArtifact, RenderError> {
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let audio_path = out.with_extension("wav");
    write_atomic(&audio_path, &encode_wav(track))?;
    let res = timeline.resolution;
    let mut child = Command::new(&encoder.program)
        .args([
            "-y",
            "-loglevel",
            "error",
            "-f",
            "rawvideo",
            "-pix_fmt",
            "rgb24",
        ])
        .args(["-s", &format!("{}x{}", res.width, res.height)])
        .args(["-r", &timeline.fps.to_string(), "-i", "-"])
        .arg("-i")
        .arg(&audio_path)
        .args(&encoder.output_args)
        .arg(out)
        .stdin(Stdio::piped())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| RenderError::EncoderSpawnFailure(format!("{}: {e}", encoder.program)))?;

    let mut stderr = child.stderr.take().expect("piped");
    let drain = std::thread::spawn(move || {
        let mut s = String::new();
        let _ = stderr.read_to_string(&mut s);
        s
    });

    // Frames are rendered in parallel batches and written in index order.
    let n = timeline.frame_count();
    let batch = (rayon::current_num_threads() * 2).max(1) as u64;
    let mut stdin = BufWriter::new(child.stdin.take().expect("piped"));
    let mut write_result: Result<(), RenderError> = Ok(());
    let mut start = 0;
    'outer: while start < n {
        let end = (start + batch).min(n);
        let frames: Vec<Result<RgbImage, RenderError>> = (start..end)
            .into_par_iter()
            .map(|i| render_frame(timeline, frame_time_ms(i, timeline.fps), assets))
            .collect();
        for f in frames {
            match f {
                Ok(img) => {
                    if let Err(e) = stdin.write_all(img.as_raw()) {
                        write_result = Err(RenderError::Io(e.to_string()));
                        break 'outer;
                    }
                }
                Err(e) => {
                    write_result = Err(e);
                    break 'outer;
                }
            }
        }
        start = end;
    }
    let flushed = stdin.flush();
    drop(stdin);
    let status = child.wait()?;
    let stderr = drain.join().unwrap_or_default();
    if !status.success() {
        return Err(RenderError::EncoderNonZeroExit {
            status: status.to_string(),
            stderr,
        });
    }
    write_result?;
    flushed?;
    let manifest = manifest(timeline, track.len());
    Ok(RenderArtifact {
        frames_dir: None,
        audio_path,
        mp4_path: Some(out.to_path_buf()),
        frame_count: n,
        duration_ms: timeline.total_ms,
        manifest,
    })
}

pub fn render_video(
    timeline: &Timeline,
    assets: &RenderAssets,
    clips: &BTreeMap<String, AudioClip>,
    mode: &OutputMode,
) -> Result<RenderArtifact, RenderError> {
    let track = assemble_audio(timeline, clips);
    match mode {
        OutputMode::ImageSequence(dir) => render_sequence(timeline, assets, dir, &track),
        OutputMode::Mp4 { path, encoder } => render_mp4(timeline, assets, path, encoder, &track),
    }
}

/// Renders a single scene on its own.
pub fn preview_scene(
    timeline: &Timeline,
    scene_id: &str,
    assets: &RenderAssets,
    clips: &BTreeMap<String, AudioClip>,
    mode: &OutputMode,
) -> Result<RenderArtifact, RenderError> {
    let single = timeline.only_scene(scene_id)?;
    render_video(&single, assets, clips, mode)
}

/// Encodes a directory written in image-sequence mode into an MP4.
pub fn encode_sequence(dir: &Path, out: &Path, encoder: &EncoderConfig) -> Result<(), RenderError> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)
        .map_err(|e| RenderError::Io(format!("{MANIFEST_FILE}: {e}")))?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let output = Command::new(&encoder.program)
        .args([
            "-y",
            "-loglevel",
            "error",
            "-framerate",
            &manifest.fps.to_string(),
            "-i",
        ])
        .arg(dir.join(&manifest.frames))
        .arg("-i")
        .arg(dir.join(&manifest.audio))
        .args(&encoder.output_args)
        .arg(out)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .output()
        .map_err(|e| RenderError::EncoderSpawnFailure(format!("{}: {e}", encoder.program)))?;
    if !output.status.success() {
        return Err(RenderError::EncoderNonZeroExit {
            status: output.status.to_string(),
            stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
        });
    }
    Ok(())
}
