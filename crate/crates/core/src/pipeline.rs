//! The authoring steps strung together, shared by the command line and the
//! HTTP service so that both produce the same scripts and artifacts.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::llm::{LlmBridge, LlmError};
use crate::logicflow::{build_logic_flow, FlowError, LogicFlow};
use crate::narration::apply_narration;
use crate::notebook::{parse_notebook_at, Notebook, NotebookError};
use crate::render::{
    preview_scene, render_video, OutputMode, RenderArtifact, RenderAssets, RenderError,
};
use crate::script::{emphasis_record, DesignScript, ScriptError, Settings};
use crate::timeline::{compile_timeline, Timeline, TimelineError};
use crate::tts::{AudioClip, Synthesizer, TtsError, VoiceSpec};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("notebook: {0}")]
    Notebook(#[from] NotebookError),
    #[error("logic flow: {0}")]
    Flow(#[from] FlowError),
    #[error("language model: {0}")]
    Llm(#[from] LlmError),
    #[error("design script: {0}")]
    Script(#[from] ScriptError),
    #[error("speech: {0}")]
    Tts(#[from] TtsError),
    #[error("timeline: {0}")]
    Timeline(#[from] TimelineError),
    #[error("render: {0}")]
    Render(#[from] RenderError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

pub fn read_notebook(path: &Path) -> Result<Notebook, PipelineError> {
    let bytes = std::fs::read(path).map_err(|e| PipelineError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(parse_notebook_at(&bytes, &path.display().to_string())?)
}

/// The deterministic flow, with descriptions from the model when a bridge
/// is given.
pub fn logic_flow(
    notebook: &Notebook,
    bridge: Option<&LlmBridge>,
) -> Result<LogicFlow, PipelineError> {
    let flow = build_logic_flow(notebook, None);
    match bridge {
        Some(b) => Ok(flow.apply_descriptions(&b.generate_logic_descriptions(notebook)?)),
        None => Ok(flow),
    }
}

pub fn initial_script(flow: &LogicFlow, settings: Settings) -> DesignScript {
    DesignScript::from_flow(flow, settings)
}

/// Generates narration for every scene and applies it.
pub fn narrate(
    script: &DesignScript,
    notebook: &Notebook,
    bridge: &LlmBridge,
) -> Result<DesignScript, PipelineError> {
    let cells: Vec<usize> = script.scenes.iter().map(|s| s.cell_index).collect();
    let emphases: Vec<_> = emphasis_record(script)
        .into_iter()
        .map(|(_, e)| e)
        .collect();
    let results = bridge.generate_narrations(notebook, &cells, &emphases)?;
    Ok(apply_narration(script, &results, notebook)?)
}

/// Narrates only the scenes that have no segments yet. Makes no call when
/// every scene is narrated.
pub fn narrate_missing(
    script: &DesignScript,
    notebook: &Notebook,
    bridge: &LlmBridge,
) -> Result<DesignScript, PipelineError> {
    let empty: Vec<_> = script
        .scenes
        .iter()
        .filter(|s| s.segments.is_empty())
        .collect();
    if empty.is_empty() {
        return Ok(script.clone());
    }
    let cells: Vec<usize> = empty.iter().map(|s| s.cell_index).collect();
    let emphases: Vec<_> = empty
        .iter()
        .flat_map(|s| s.emphases.iter().cloned())
        .collect();
    let results = bridge.generate_narrations(notebook, &cells, &emphases)?;
    Ok(apply_narration(script, &results, notebook)?)
}

/// The deterministic flow with every node the script leaves out marked
/// hidden, for checking a script read from disk.
pub fn flow_for_script(notebook: &Notebook, script: &DesignScript) -> LogicFlow {
    let mut flow = build_logic_flow(notebook, None);
    for node in &mut flow.nodes {
        node.hidden = script.scene_for_cell(node.id).is_none();
    }
    flow
}

pub struct Compiled {
    pub timeline: Timeline,
    pub clips: BTreeMap<String, AudioClip>,
}

/// Synthesizes audio for every segment and lays out the timeline.
pub fn compile(
    script: &DesignScript,
    synth: &Synthesizer,
    voice: &VoiceSpec,
) -> Result<Compiled, PipelineError> {
    script.validate()?;
    let clips = synth.synthesize_script(script, voice)?;
    let durations = clips
        .iter()
        .map(|(k, c)| (k.clone(), c.duration_ms))
        .collect();
    let timeline = compile_timeline(script, &durations)?;
    Ok(Compiled { timeline, clips })
}

pub struct BuildRequest<'a> {
    pub script: &'a DesignScript,
    pub notebook: &'a Notebook,
    pub flow: &'a LogicFlow,
    pub synth: &'a Synthesizer,
    pub voice: &'a VoiceSpec,
    pub mode: &'a OutputMode,
    /// Only this scene, when set.
    pub scene: Option<&'a str>,
}

pub fn build(req: &BuildRequest<'_>) -> Result<(Timeline, RenderArtifact), PipelineError> {
    req.script.validate_against(req.notebook, req.flow)?;
    let compiled = compile(req.script, req.synth, req.voice)?;
    let assets = RenderAssets::new(req.script, req.notebook, Some(req.flow))?;
    let artifact = match req.scene {
        Some(id) => preview_scene(&compiled.timeline, id, &assets, &compiled.clips, req.mode)?,
        None => render_video(&compiled.timeline, &assets, &compiled.clips, req.mode)?,
    };
    Ok((compiled.timeline, artifact))
}
