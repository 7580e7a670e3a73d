use std::path::PathBuf;
use std::process::{Command, Stdio};

use notecast_core::llm::{LlmBridge, LlmConfig};
use notecast_core::render::EncoderConfig;
use notecast_core::tts::{Synthesizer, TtsConfig, VoiceSpec};

/// Which language-model backend to use.
#[derive(Debug, Clone, PartialEq)]
pub enum LlmMode {
    Stub,
    Replay(PathBuf),
    Live(LlmConfig),
}

impl LlmMode {
    pub fn bridge(&self) -> LlmBridge {
        match self {
            LlmMode::Stub => LlmBridge::stub(),
            LlmMode::Replay(dir) => LlmBridge::replay(dir, LlmConfig::from_env().model),
            LlmMode::Live(cfg) => LlmBridge::live(cfg.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RenderMode {
    Frames,
    Mp4(EncoderConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub static_dir: Option<PathBuf>,
    pub llm: LlmMode,
    pub tts: TtsConfig,
    /// Silence instead of the speech service.
    pub stub_tts: bool,
    pub render: RenderMode,
}

impl ServiceConfig {
    /// Offline defaults: stub model, silent voice, image-sequence output.
    pub fn offline(data_dir: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            data_dir: data_dir.into(),
            static_dir: None,
            llm: LlmMode::Stub,
            tts: TtsConfig::default(),
            stub_tts: true,
            render: RenderMode::Frames,
        }
    }

    pub fn synthesizer(&self) -> Synthesizer {
        Synthesizer::new(self.tts.clone(), Some(self.data_dir.join("tts-cache")))
    }

    pub fn voice(&self, voice_id: &str) -> VoiceSpec {
        voice_spec(self.stub_tts || self.tts.endpoint.is_none(), voice_id)
    }
}

pub fn voice_spec(silent: bool, voice_id: &str) -> VoiceSpec {
    if silent {
        VoiceSpec::silence(voice_id)
    } else {
        VoiceSpec::http(voice_id)
    }
}

/// Whether the encoder program runs at all.
pub fn encoder_available(encoder: &EncoderConfig) -> bool {
    Command::new(&encoder.program)
        .arg("-version")
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .status()
        .is_ok_and(|s| s.success())
}
