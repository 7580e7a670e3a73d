//! Offline providers: a deterministic stub that imitates the expected reply
//! shapes, and a canned provider for tests.

use std::sync::Mutex;

use serde_json::{json, Value};

use super::extract::extract_json;
use super::{ChatProvider, ChatRequest, LlmError, TemplateName};
use crate::logicflow::names::analyze_cell_names;

/// Produces well-formed replies from the request input alone.
#[derive(Debug, Default, Clone, Copy)]
pub struct StubProvider;

impl ChatProvider for StubProvider {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let input = request.user_input();
        match request.template {
            TemplateName::QuestionTransform => {
                let sentence = input.strip_prefix("# Sentence\n").unwrap_or(input).trim();
                Ok(format!("What does this step do? {sentence}"))
            }
            TemplateName::LogicFlow => {
                let cells = input_cells(input)?;
                let entries: Vec<Value> = cells.iter().map(describe_cell).collect();
                Ok(fenced(&Value::Array(entries)))
            }
            TemplateName::Narration => {
                let cells = input_cells(input)?;
                let entries: Vec<Value> = cells.iter().map(narrate_cell).collect();
                Ok(fenced(&Value::Array(entries)))
            }
        }
    }
}

fn input_cells(input: &str) -> Result<Vec<Value>, LlmError> {
    extract_json(input)
        .and_then(|j| serde_json::from_str::<Value>(&j).ok())
        .and_then(|v| v.as_array().cloned())
        .ok_or_else(|| LlmError::Precondition("stub could not read the rendered input".into()))
}

fn fenced(v: &Value) -> String {
    format!(
        "```json\n{}\n```",
        serde_json::to_string_pretty(v).expect("json serializes")
    )
}

fn describe_cell(cell: &Value) -> Value {
    let source = cell["source"].as_str().unwrap_or("");
    let description = source
        .lines()
        .find_map(|l| {
            l.trim()
                .strip_prefix('#')
                .map(str::trim)
                .filter(|c| !c.is_empty())
        })
        .map(str::to_string)
        .or_else(|| {
            source
                .lines()
                .map(str::trim)
                .find(|l| !l.is_empty())
                .map(|l| format!("Run {}", l.chars().take(40).collect::<String>()))
        })
        .unwrap_or_else(|| "Empty cell".into());
    let names = analyze_cell_names(source);
    let inputs: Vec<&String> = names.referenced.iter().chain(&names.resources).collect();
    json!({
        "id": cell["id"],
        "description": description,
        "inputs": inputs,
        "outputs": names.defined,
    })
}

fn narrate_cell(cell: &Value) -> Value {
    let source = cell["code"].as_str().unwrap_or("");
    let names = analyze_cell_names(source);
    let outputs: Vec<&str> = names.defined.iter().map(String::as_str).collect();
    let mut sentences = Vec::new();
    sentences.push(match outputs.as_slice() {
        [] => "In this step we work with the data from the previous cells.".to_string(),
        [one] => format!("In this step we build {one}."),
        many => format!("In this step we build {}.", many.join(" and ")),
    });
    let emphasis = cell["emphasis"].as_array().cloned().unwrap_or_default();
    for e in &emphasis {
        let snippet = e["code_snippet"].as_str().unwrap_or("");
        let annotation = e["annotation"]
            .as_str()
            .unwrap_or("")
            .trim()
            .trim_end_matches('.');
        let quote = if snippet.contains('"') { '`' } else { '"' };
        let mut purpose = annotation.to_string();
        if let Some(first) = purpose.chars().next() {
            purpose.replace_range(..first.len_utf8(), &first.to_lowercase().to_string());
        }
        if purpose.is_empty() {
            sentences.push(format!("We use {quote}{snippet}{quote} here."));
        } else {
            sentences.push(format!("We use {quote}{snippet}{quote} here to {purpose}."));
        }
    }
    if let Some(last) = outputs.last() {
        sentences.push(format!(
            "The result is stored in {last} for the steps that follow."
        ));
    }
    json!({
        "id": cell["id"],
        "narration": sentences.join(" "),
        "inputs": emphasis,
    })
}

/// Returns fixed replies in order and remembers every request it saw.
#[derive(Debug, Default)]
pub struct CannedProvider {
    replies: Mutex<Vec<String>>,
    seen: Mutex<Vec<ChatRequest>>,
}

impl CannedProvider {
    pub fn new<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        let mut replies: Vec<String> = replies.into_iter().map(Into::into).collect();
        replies.reverse();
        CannedProvider {
            replies: Mutex::new(replies),
            seen: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.seen.lock().unwrap().clone()
    }
}

impl ChatProvider for CannedProvider {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        self.seen.lock().unwrap().push(request.clone());
        self.replies
            .lock()
            .unwrap()
            .pop()
            .ok_or_else(|| LlmError::ProviderUnreachable("no canned reply left".into()))
    }
}
