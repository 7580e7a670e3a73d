//! Prompt rendering, chat providers and validation of model replies.

mod extract;
mod prompt;
mod provider;
mod stub;

use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::json;
use thiserror::Error;

use crate::notebook::Notebook;
use crate::script::EmphasisElement;

pub use extract::{
    extract_json, parse_reply, repair_json, validate_logic_entries, validate_narrations,
    validate_question,
};
pub use prompt::{ChatMessage, ChatRequest, PromptTemplate, TemplateName};
pub use provider::{
    fixture_path, ChatProvider, HttpProvider, LlmConfig, RecordingProvider, ReplayProvider,
};
pub use stub::{CannedProvider, StubProvider};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LlmError {
    #[error("provider unreachable: {0}")]
    ProviderUnreachable(String),
    #[error("provider returned status {status}: {body}")]
    Provider { status: u16, body: String },
    #[error("reply does not match the schema at {path}: {message}")]
    SchemaInvalid { path: String, message: String },
    #[error("no replay fixture for request {hash}")]
    FixtureMiss { hash: String },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogicEntry {
    pub id: usize,
    pub description: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmphasisContext {
    pub code_snippet: String,
    pub annotation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NarrationResult {
    pub id: usize,
    pub narration: String,
    /// A single echoed context is written as an object, several as an array.
    #[serde(
        default,
        serialize_with = "one_or_many_out",
        deserialize_with = "one_or_many_in"
    )]
    pub inputs: Vec<EmphasisContext>,
}

fn one_or_many_out<S: Serializer>(v: &[EmphasisContext], s: S) -> Result<S::Ok, S::Error> {
    match v {
        [one] => one.serialize(s),
        many => many.serialize(s),
    }
}

fn one_or_many_in<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<EmphasisContext>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(EmphasisContext),
        Many(Vec<EmphasisContext>),
        Nothing(()),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(c) => vec![c],
        OneOrMany::Many(v) => v,
        OneOrMany::Nothing(()) => Vec::new(),
    })
}

/// One provider round trip.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LlmExchange {
    pub request_hash: String,
    pub response_text: String,
    pub validated: bool,
}

pub struct LlmBridge {
    provider: Arc<dyn ChatProvider>,
    model: String,
    temperature: f32,
    log: Mutex<Vec<LlmExchange>>,
}

impl LlmBridge {
    pub fn new(
        provider: Arc<dyn ChatProvider>,
        model: impl Into<String>,
        temperature: f32,
    ) -> Self {
        LlmBridge {
            provider,
            model: model.into(),
            temperature,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn stub() -> Self {
        LlmBridge::new(Arc::new(StubProvider), "stub", 0.0)
    }

    pub fn live(config: LlmConfig) -> Self {
        let (model, t) = (config.model.clone(), config.temperature);
        LlmBridge::new(Arc::new(HttpProvider::new(config)), model, t)
    }

    pub fn replay(dir: impl Into<PathBuf>, model: impl Into<String>) -> Self {
        LlmBridge::new(Arc::new(ReplayProvider::new(dir)), model, 0.0)
    }

    pub fn record(config: LlmConfig, dir: impl Into<PathBuf>) -> Self {
        let (model, t) = (config.model.clone(), config.temperature);
        let inner = Box::new(HttpProvider::new(config));
        LlmBridge::new(Arc::new(RecordingProvider::new(inner, dir)), model, t)
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn exchanges(&self) -> Vec<LlmExchange> {
        self.log.lock().unwrap().clone()
    }

    pub fn request(&self, template: TemplateName, input: &str) -> ChatRequest {
        ChatRequest {
            template,
            model: self.model.clone(),
            temperature: self.temperature,
            messages: PromptTemplate::get(template).render(input),
        }
    }

    fn call(&self, request: &ChatRequest) -> Result<String, LlmError> {
        self.provider.complete(request)
    }

    fn note(&self, request: &ChatRequest, reply: &str, validated: bool) {
        self.log.lock().unwrap().push(LlmExchange {
            request_hash: request.hash(),
            response_text: reply.to_string(),
            validated,
        });
    }

    /// Sends `request`; a reply that fails `validate` gets exactly one retry
    /// with a corrective message appended.
    fn run<T>(
        &self,
        request: ChatRequest,
        validate: impl Fn(&str) -> Result<T, LlmError>,
    ) -> Result<T, LlmError> {
        let reply = self.call(&request)?;
        let problem = match validate(&reply) {
            Ok(v) => {
                self.note(&request, &reply, true);
                return Ok(v);
            }
            Err(LlmError::SchemaInvalid { path, message }) => format!("{path}: {message}"),
            Err(e) => return Err(e),
        };
        self.note(&request, &reply, false);
        log::warn!(
            "{} reply rejected ({problem}), retrying once",
            request.template
        );
        let retry = request.with_correction(&reply, &problem);
        let reply = self.call(&retry)?;
        let out = validate(&reply);
        self.note(&retry, &reply, out.is_ok());
        out
    }

    /// Descriptions for every code cell. Cells are numbered from 0 in the
    /// prompt, as the template asks; returned ids are notebook cell indices.
    pub fn generate_logic_descriptions(
        &self,
        notebook: &Notebook,
    ) -> Result<Vec<LogicEntry>, LlmError> {
        let cells = notebook.code_cells();
        if cells.is_empty() {
            return Ok(Vec::new());
        }
        let input: Vec<_> = cells
            .iter()
            .enumerate()
            .map(|(k, c)| json!({"id": k, "source": c.source}))
            .collect();
        let expected: Vec<usize> = (0..cells.len()).collect();
        let request = self.request(TemplateName::LogicFlow, &pretty(&input));
        let entries = self.run(request, |reply| {
            validate_logic_entries(&parse_reply(reply)?, &expected)
        })?;
        Ok(entries
            .into_iter()
            .map(|e| LogicEntry {
                id: cells[e.id].index,
                ..e
            })
            .collect())
    }

    /// One narration per scene cell, in the given order.
    pub fn generate_narrations(
        &self,
        notebook: &Notebook,
        scene_cells: &[usize],
        emphases: &[EmphasisElement],
    ) -> Result<Vec<NarrationResult>, LlmError> {
        for &idx in scene_cells {
            if !notebook.cell(idx).is_some_and(|c| c.is_code()) {
                return Err(LlmError::Precondition(format!(
                    "cell {idx} is not a code cell"
                )));
            }
        }
        let mut snippets = Vec::with_capacity(emphases.len());
        for e in emphases {
            if !scene_cells.contains(&e.cell_index) {
                return Err(LlmError::Precondition(format!(
                    "emphasis {} references cell {} which has no scene",
                    e.id, e.cell_index
                )));
            }
            let source = &notebook.cell(e.cell_index).expect("checked above").source;
            let Some(snippet) = e.snippet(source) else {
                return Err(LlmError::Precondition(format!(
                    "emphasis {} span {}..{} is outside cell {}",
                    e.id, e.span.start, e.span.end, e.cell_index
                )));
            };
            snippets.push((e, snippet));
        }
        if scene_cells.is_empty() {
            return Ok(Vec::new());
        }
        let input: Vec<_> = scene_cells
            .iter()
            .map(|&idx| {
                let mut mine: Vec<_> = snippets
                    .iter()
                    .filter(|(e, _)| e.cell_index == idx)
                    .collect();
                mine.sort_by_key(|(e, _)| e.span.start);
                let emphasis: Vec<_> = mine
                    .iter()
                    .map(|(e, s)| json!({"code_snippet": s, "annotation": e.annotation}))
                    .collect();
                json!({
                    "id": idx,
                    "code": notebook.cell(idx).expect("checked above").source,
                    "emphasis": emphasis,
                })
            })
            .collect();
        let request = self.request(TemplateName::Narration, &pretty(&input));
        self.run(request, |reply| {
            validate_narrations(&parse_reply(reply)?, scene_cells)
        })
    }

    /// Rewrites a declarative sentence as a question followed by its answer.
    pub fn transform_to_question(&self, sentence: &str) -> Result<String, LlmError> {
        let sentence = sentence.trim();
        if sentence.is_empty() {
            return Err(LlmError::Precondition("sentence is empty".into()));
        }
        let request = self.request(TemplateName::QuestionTransform, sentence);
        self.run(request, validate_question)
    }
}

fn pretty(v: &[serde_json::Value]) -> String {
    serde_json::to_string_pretty(v).expect("json serializes")
}
