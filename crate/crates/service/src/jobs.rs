use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use notecast_core::pipeline::PipelineError;

use crate::error::variant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

/// `"full"` or `{"scene": "s3"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Full,
    Scene(String),
}

/// Variant name of the underlying module error.
pub fn error_kind(e: &PipelineError) -> String {
    match e {
        PipelineError::Notebook(x) => variant(x),
        PipelineError::Flow(x) => variant(x),
        PipelineError::Llm(x) => variant(x),
        PipelineError::Script(x) => variant(x),
        PipelineError::Tts(x) => variant(x),
        PipelineError::Timeline(x) => variant(x),
        PipelineError::Render(x) => variant(x),
        PipelineError::Io { .. } => "Io".into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactInfo {
    /// `"mp4"` or `"frames"`.
    pub format: String,
    pub frame_count: u64,
    pub duration_ms: u64,
    pub fps: u32,
    pub video_url: Option<String>,
    pub manifest_url: String,
    pub audio_url: String,
    pub frame_url_template: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderJob {
    pub id: String,
    pub session_id: String,
    pub scope: Scope,
    pub state: JobState,
    /// Session version the job rendered.
    pub script_version: Option<u64>,
    pub error: Option<String>,
    pub error_kind: Option<String>,
    pub artifact: Option<ArtifactInfo>,
    #[serde(skip)]
    pub dir: PathBuf,
}
