//! Deterministic frame rendering and video output.

mod font;
mod layout;
mod raster;
mod video;

use std::collections::BTreeMap;

use image::{Rgb, RgbImage};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::logicflow::LogicFlow;
use crate::notebook::Notebook;
use crate::script::DesignScript;
use crate::timeline::{frame_state, scene_state, FrameState, Timeline, TimelineError};

pub use font::{normalize, wrap};
pub use layout::SceneLayout;
pub use video::{
    assemble_audio, encode_sequence, frame_file_name, preview_scene, render_video, EncoderConfig,
    Manifest, OutputMode, RenderArtifact, AUDIO_FILE, FRAME_PATTERN, MANIFEST_FILE,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RenderError {
    #[error("time {t_ms} ms is outside the timeline of {total_ms} ms")]
    OutOfRange { t_ms: u64, total_ms: u64 },
    #[error("unknown scene {0}")]
    UnknownScene(String),
    #[error("no code cell {0} for scene")]
    UnknownCell(usize),
    #[error("unreadable output asset: {0}")]
    Asset(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("could not start encoder: {0}")]
    EncoderSpawnFailure(String),
    #[error("encoder exited with {status}: {stderr}")]
    EncoderNonZeroExit { status: String, stderr: String },
    #[error("timeline: {0}")]
    Timeline(String),
}

impl From<TimelineError> for RenderError {
    fn from(e: TimelineError) -> Self {
        match e {
            TimelineError::OutOfRange { t_ms, total_ms } => {
                RenderError::OutOfRange { t_ms, total_ms }
            }
            TimelineError::UnknownScene(id) => RenderError::UnknownScene(id),
            other => RenderError::Timeline(other.to_string()),
        }
    }
}

impl From<std::io::Error> for RenderError {
    fn from(e: std::io::Error) -> Self {
        RenderError::Io(e.to_string())
    }
}

/// Everything a frame needs beyond the timeline: one laid-out scene per
/// script scene.
pub struct RenderAssets {
    scenes: BTreeMap<String, SceneLayout>,
}

impl RenderAssets {
    /// Lays out every scene. Titles come from the flow when given.
    pub fn new(
        script: &DesignScript,
        notebook: &Notebook,
        flow: Option<&LogicFlow>,
    ) -> Result<Self, RenderError> {
        let mut scenes = BTreeMap::new();
        for scene in &script.scenes {
            let cell = notebook
                .cell(scene.cell_index)
                .filter(|c| c.is_code())
                .ok_or(RenderError::UnknownCell(scene.cell_index))?;
            let description = flow
                .and_then(|f| f.node(scene.cell_index))
                .map(|n| n.description.clone())
                .unwrap_or_else(|| format!("Cell {}", scene.cell_index));
            let input = layout::LayoutInput {
                scene,
                cell,
                title: format!("[{}] {}", scene.cell_index, description),
            };
            scenes.insert(
                scene.id.clone(),
                layout::layout_scene(&input, script.settings.resolution)?,
            );
        }
        Ok(RenderAssets { scenes })
    }

    pub fn scene(&self, id: &str) -> Option<&SceneLayout> {
        self.scenes.get(id)
    }

    fn scale_of(&self, emphasis_id: &str) -> f64 {
        self.scenes
            .values()
            .find_map(|s| s.emphases.get(emphasis_id))
            .map_or(1.0, |e| e.scale_factor)
    }
}

fn draw_scene(layout: &SceneLayout, state: &FrameState) -> RgbImage {
    let mut img = layout.base.clone();
    for e in &state.emphases {
        if let Some(el) = layout.emphases.get(&e.emphasis_id) {
            layout::draw_emphasis(&mut img, layout, el.span, e.scale, e.shadow);
        }
    }
    for a in &state.annotations {
        if let Some(el) = layout.emphases.get(&a.id) {
            layout::draw_annotation(&mut img, layout, el, a.opacity);
        }
    }
    if let Some(c) = &state.caption {
        if let Some(lines) = layout.captions.get(&c.id) {
            layout::draw_caption(&mut img, layout, lines, c.opacity, c.offset);
        }
    }
    raster::fade_to(&mut img, layout::BG, 1.0 - state.opacity);
    img
}

/// Animation state at `t`, as drawn by `render_frame`.
pub fn state_at(
    timeline: &Timeline,
    assets: &RenderAssets,
    t_ms: u64,
) -> Result<FrameState, RenderError> {
    Ok(frame_state(timeline, |id| assets.scale_of(id), t_ms)?)
}

/// Renders the frame at `t_ms`. Pure: equal inputs give equal pixels.
pub fn render_frame(
    timeline: &Timeline,
    t_ms: u64,
    assets: &RenderAssets,
) -> Result<RgbImage, RenderError> {
    let state = state_at(timeline, assets, t_ms)?;
    let layout_of = |id: &str| {
        assets
            .scene(id)
            .ok_or_else(|| RenderError::UnknownScene(id.to_string()))
    };
    let current = draw_scene(layout_of(&state.scene_id)?, &state);
    let next = timeline.scenes.get(state.scene_index + 1);
    match (state.slide, next) {
        (Some(p), Some(next)) => {
            let scale_of = |id: &str| assets.scale_of(id);
            let next_state = scene_state(timeline, state.scene_index + 1, &scale_of, next.start_ms);
            let incoming = draw_scene(layout_of(&next.scene_id)?, &next_state);
            let w = timeline.resolution.width;
            let dx = (p * w as f64).round() as i64;
            let mut out = RgbImage::from_pixel(w, timeline.resolution.height, Rgb(layout::BG));
            raster::blit_shifted(&mut out, &current, -dx);
            raster::blit_shifted(&mut out, &incoming, w as i64 - dx);
            Ok(out)
        }
        _ => Ok(current),
    }
}

/// Hex SHA-256 of the raw RGB bytes.
pub fn frame_hash(img: &RgbImage) -> String {
    hex::encode(Sha256::digest(img.as_raw()))
}
