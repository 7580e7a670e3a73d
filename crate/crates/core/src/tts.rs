//! Per-segment voice-over audio.
//!
//! Every clip is mono 16-bit PCM at 22050 Hz. Without a speech service the
//! fallback produces silence whose length follows a words-per-minute model.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Cursor;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::script::{DesignScript, NarrationSegment};

pub const SAMPLE_RATE: u32 = 22050;
pub const DEFAULT_RATE_WPM: u32 = 150;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TtsError {
    #[error("speech provider unreachable: {0}")]
    ProviderUnreachable(String),
    #[error("speech provider returned status {status}: {body}")]
    Provider { status: u16, body: String },
    #[error("undecodable audio: {0}")]
    BadAudio(String),
    #[error("segment {0} has no text")]
    EmptyText(String),
    #[error("speaking rate must be positive")]
    ZeroRate,
    #[error("segment {segment_id}: {message}")]
    Segment { segment_id: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TtsProvider {
    HttpTts,
    SilenceFallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VoiceSpec {
    pub provider: TtsProvider,
    pub voice_id: String,
    pub rate_wpm: u32,
}

impl VoiceSpec {
    pub fn silence(voice_id: impl Into<String>) -> Self {
        VoiceSpec {
            provider: TtsProvider::SilenceFallback,
            voice_id: voice_id.into(),
            rate_wpm: DEFAULT_RATE_WPM,
        }
    }

    pub fn http(voice_id: impl Into<String>) -> Self {
        VoiceSpec {
            provider: TtsProvider::HttpTts,
            voice_id: voice_id.into(),
            rate_wpm: DEFAULT_RATE_WPM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AudioClip {
    pub segment_id: String,
    pub samples: Arc<Vec<i16>>,
    pub duration_ms: u64,
}

impl AudioClip {
    pub fn new(segment_id: impl Into<String>, samples: Arc<Vec<i16>>) -> Self {
        let duration_ms = duration_of_samples(samples.len());
        AudioClip {
            segment_id: segment_id.into(),
            samples,
            duration_ms,
        }
    }
}

/// round(n / 22.05) with integers.
pub fn duration_of_samples(n: usize) -> u64 {
    (n as u64 * 1000 + SAMPLE_RATE as u64 / 2) / SAMPLE_RATE as u64
}

/// round(ms × 22.05) with integers; `duration_of_samples` maps it back to `ms`.
pub fn samples_for_duration(ms: u64) -> usize {
    ((ms * SAMPLE_RATE as u64 + 500) / 1000) as usize
}

/// Whitespace-separated words after dropping `*`, `_` and backticks.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace()
        .filter(|w| w.chars().any(|c| !matches!(c, '*' | '_' | '`')))
        .count()
}

/// round(words / (wpm / 60) × 1000). Text made only of markup still counts
/// as one word so that every clip has a length.
pub fn fallback_duration_ms(text: &str, rate_wpm: u32) -> u64 {
    let words = word_count(text).max(1) as u64;
    let wpm = rate_wpm as u64;
    (words * 60_000 + wpm / 2) / wpm
}

/// Speech-service endpoint: `POST {endpoint}` with `{"text", "voice"}`,
/// answered by a WAV file.
#[derive(Debug, Clone, PartialEq)]
pub struct TtsConfig {
    pub endpoint: Option<String>,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl Default for TtsConfig {
    fn default() -> Self {
        TtsConfig {
            endpoint: None,
            api_key: None,
            timeout: Duration::from_secs(60),
        }
    }
}

impl TtsConfig {
    /// Reads `NOTECAST_TTS_ENDPOINT`, `NOTECAST_TTS_API_KEY` and
    /// `NOTECAST_TTS_TIMEOUT_SECS`.
    pub fn from_env() -> Self {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        let mut cfg = TtsConfig {
            endpoint: var("NOTECAST_TTS_ENDPOINT"),
            api_key: var("NOTECAST_TTS_API_KEY"),
            ..TtsConfig::default()
        };
        if let Some(secs) = var("NOTECAST_TTS_TIMEOUT_SECS").and_then(|v| v.parse().ok()) {
            cfg.timeout = Duration::from_secs(secs);
        }
        cfg
    }
}

/// Synthesizes clips and caches them by a digest of (provider, voice, rate,
/// text), in memory and optionally as `<digest>.pcm` files.
pub struct Synthesizer {
    config: TtsConfig,
    cache_dir: Option<PathBuf>,
    memory: Mutex<HashMap<String, Arc<Vec<i16>>>>,
    client: OnceLock<reqwest::blocking::Client>,
    provider_calls: AtomicU64,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl Synthesizer {
    pub fn new(config: TtsConfig, cache_dir: Option<PathBuf>) -> Self {
        Synthesizer {
            config,
            cache_dir,
            memory: Mutex::new(HashMap::new()),
            client: OnceLock::new(),
            provider_calls: AtomicU64::new(0),
        }
    }

    pub fn offline() -> Self {
        Synthesizer::new(TtsConfig::default(), None)
    }

    /// Number of requests sent to the speech service so far.
    pub fn provider_calls(&self) -> u64 {
        self.provider_calls.load(Ordering::Relaxed)
    }

    pub fn cache_key(text: &str, voice: &VoiceSpec) -> String {
        let mut h = Sha256::new();
        let provider = match voice.provider {
            TtsProvider::HttpTts => "http_tts",
            TtsProvider::SilenceFallback => "silence_fallback",
        };
        for part in [
            provider,
            voice.voice_id.as_str(),
            &voice.rate_wpm.to_string(),
            text,
        ] {
            h.update(part.as_bytes());
            h.update([0]);
        }
        hex::encode(h.finalize())
    }

    pub fn synthesize(
        &self,
        segment: &NarrationSegment,
        voice: &VoiceSpec,
    ) -> Result<AudioClip, TtsError> {
        let text = segment.text.trim();
        if text.is_empty() {
            return Err(TtsError::EmptyText(segment.id.clone()));
        }
        if voice.rate_wpm == 0 {
            return Err(TtsError::ZeroRate);
        }
        let key = Synthesizer::cache_key(text, voice);
        if let Some(samples) = self.lookup(&key) {
            return Ok(AudioClip::new(&segment.id, samples));
        }
        let samples = match voice.provider {
            TtsProvider::SilenceFallback => {
                vec![0i16; samples_for_duration(fallback_duration_ms(text, voice.rate_wpm))]
            }
            TtsProvider::HttpTts => self.fetch(text, &voice.voice_id)?,
        };
        let samples = self.store(key, samples);
        Ok(AudioClip::new(&segment.id, samples))
    }

    /// Clips for every segment of the script, keyed by segment id.
    pub fn synthesize_script(
        &self,
        script: &DesignScript,
        voice: &VoiceSpec,
    ) -> Result<BTreeMap<String, AudioClip>, TtsError> {
        let segments: Vec<&NarrationSegment> =
            script.scenes.iter().flat_map(|s| &s.segments).collect();
        segments
            .par_iter()
            .map(|seg| {
                self.synthesize(seg, voice)
                    .map(|c| (seg.id.clone(), c))
                    .map_err(|e| TtsError::Segment {
                        segment_id: seg.id.clone(),
                        message: e.to_string(),
                    })
            })
            .collect()
    }

    fn lookup(&self, key: &str) -> Option<Arc<Vec<i16>>> {
        if let Some(s) = self.memory.lock().unwrap().get(key) {
            return Some(s.clone());
        }
        let path = self.cache_dir.as_ref()?.join(format!("{key}.pcm"));
        let bytes = fs::read(path).ok()?;
        let samples: Vec<i16> = bytes
            .chunks_exact(2)
            .map(|b| i16::from_le_bytes([b[0], b[1]]))
            .collect();
        let samples = Arc::new(samples);
        self.memory
            .lock()
            .unwrap()
            .insert(key.to_string(), samples.clone());
        Some(samples)
    }

    fn store(&self, key: String, samples: Vec<i16>) -> Arc<Vec<i16>> {
        if let Some(dir) = &self.cache_dir {
            let bytes: Vec<u8> = samples.iter().flat_map(|s| s.to_le_bytes()).collect();
            let n = TMP_COUNTER.fetch_add(1, Ordering::Relaxed);
            let tmp = dir.join(format!("{key}.{}.{n}.tmp", std::process::id()));
            let done = fs::create_dir_all(dir)
                .and_then(|_| fs::write(&tmp, &bytes))
                .and_then(|_| fs::rename(&tmp, dir.join(format!("{key}.pcm"))));
            if let Err(e) = done {
                log::warn!("could not cache clip {key}: {e}");
                let _ = fs::remove_file(&tmp);
            }
        }
        // Identical keys carry identical samples, so whichever insert lands
        // first is kept.
        self.memory
            .lock()
            .unwrap()
            .entry(key)
            .or_insert_with(|| Arc::new(samples))
            .clone()
    }

    fn fetch(&self, text: &str, voice_id: &str) -> Result<Vec<i16>, TtsError> {
        let endpoint =
            self.config.endpoint.as_deref().ok_or_else(|| {
                TtsError::ProviderUnreachable("no speech endpoint configured".into())
            })?;
        let client = match self.client.get() {
            Some(c) => c,
            None => {
                let built = reqwest::blocking::Client::builder()
                    .timeout(self.config.timeout)
                    .build()
                    .map_err(|e| TtsError::ProviderUnreachable(e.to_string()))?;
                self.client.get_or_init(|| built)
            }
        };
        self.provider_calls.fetch_add(1, Ordering::Relaxed);
        let mut call = client
            .post(endpoint)
            .json(&serde_json::json!({"text": text, "voice": voice_id}));
        if let Some(key) = &self.config.api_key {
            call = call.bearer_auth(key);
        }
        let resp = call
            .send()
            .map_err(|e| TtsError::ProviderUnreachable(e.to_string()))?;
        let status = resp.status();
        let body = resp
            .bytes()
            .map_err(|e| TtsError::ProviderUnreachable(e.to_string()))?;
        if !status.is_success() {
            return Err(TtsError::Provider {
                status: status.as_u16(),
                body: String::from_utf8_lossy(&body).into_owned(),
            });
        }
        decode_wav(&body)
    }
}

/// Decodes a WAV file to canonical mono 22050 Hz samples.
pub fn decode_wav(bytes: &[u8]) -> Result<Vec<i16>, TtsError> {
    let mut reader =
        hound::WavReader::new(Cursor::new(bytes)).map_err(|e| TtsError::BadAudio(e.to_string()))?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let frames: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| TtsError::BadAudio(e.to_string()))?,
        hound::SampleFormat::Int => {
            let scale = (1i64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 / scale))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| TtsError::BadAudio(e.to_string()))?
        }
    };
    let mono: Vec<f32> = frames
        .chunks(channels)
        .map(|c| c.iter().sum::<f32>() / c.len() as f32)
        .collect();
    let resampled = resample_linear(&mono, spec.sample_rate, SAMPLE_RATE);
    Ok(resampled
        .into_iter()
        .map(|v| (v.clamp(-1.0, 1.0) * i16::MAX as f32).round() as i16)
        .collect())
}

fn resample_linear(input: &[f32], from: u32, to: u32) -> Vec<f32> {
    if from == to || input.is_empty() {
        return input.to_vec();
    }
    let out_len = ((input.len() as u64 * to as u64 + from as u64 / 2) / from as u64) as usize;
    (0..out_len)
        .map(|i| {
            let pos = i as f64 * from as f64 / to as f64;
            let k = pos.floor() as usize;
            let frac = (pos - k as f64) as f32;
            let a = input[k.min(input.len() - 1)];
            let b = input[(k + 1).min(input.len() - 1)];
            a + (b - a) * frac
        })
        .collect()
}

/// Encodes samples as a canonical WAV file.
pub fn encode_wav(samples: &[i16]) -> Vec<u8> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut buf = Cursor::new(Vec::with_capacity(44 + samples.len() * 2));
    {
        let mut w = hound::WavWriter::new(&mut buf, spec).expect("in-memory wav");
        let mut w16 = w.get_i16_writer(samples.len() as u32);
        for &s in samples {
            w16.write_sample(s);
        }
        w16.flush().expect("in-memory wav");
        w.finalize().expect("in-memory wav");
    }
    buf.into_inner()
}
