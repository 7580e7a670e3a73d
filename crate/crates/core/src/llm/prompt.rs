use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateName {
    LogicFlow,
    Narration,
    QuestionTransform,
}

impl fmt::Display for TemplateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TemplateName::LogicFlow => "logic_flow",
            TemplateName::Narration => "narration",
            TemplateName::QuestionTransform => "question_transform",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: TemplateName,
    pub system_text: &'static str,
    pub input_slots: &'static [&'static str],
}

const LOGIC_FLOW_SYSTEM: &str = include_str!("../../prompts/logic_flow.md");
const NARRATION_SYSTEM: &str = include_str!("../../prompts/narration.md");
const QUESTION_SYSTEM: &str = include_str!("../../prompts/question_transform.md");

impl PromptTemplate {
    pub fn get(name: TemplateName) -> PromptTemplate {
        match name {
            TemplateName::LogicFlow => PromptTemplate {
                name,
                system_text: LOGIC_FLOW_SYSTEM,
                input_slots: &["cells"],
            },
            TemplateName::Narration => PromptTemplate {
                name,
                system_text: NARRATION_SYSTEM,
                input_slots: &["cells"],
            },
            TemplateName::QuestionTransform => PromptTemplate {
                name,
                system_text: QUESTION_SYSTEM,
                input_slots: &["sentence"],
            },
        }
    }

    /// Renders the user message. `input` fills the template's single slot.
    pub fn render(&self, input: &str) -> Vec<ChatMessage> {
        let user = match self.name {
            TemplateName::LogicFlow => format!("# Notebook Cells\n```json\n{input}\n```\n"),
            TemplateName::Narration => {
                format!("# Notebook Cells with Emphasis\n```json\n{input}\n```\n")
            }
            TemplateName::QuestionTransform => format!("# Sentence\n{input}\n"),
        };
        vec![
            ChatMessage::system(self.system_text),
            ChatMessage::user(user),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "user".into(),
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "assistant".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub template: TemplateName,
    pub model: String,
    pub temperature: f32,
    pub messages: Vec<ChatMessage>,
}

impl ChatRequest {
    /// Hex SHA-256 over the template name, model id and every message.
    /// Temperature is configuration and does not take part.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.template.to_string().as_bytes());
        hasher.update([0]);
        hasher.update(self.model.as_bytes());
        for m in &self.messages {
            hasher.update([0]);
            hasher.update(m.role.as_bytes());
            hasher.update([0]);
            hasher.update(m.content.as_bytes());
        }
        hex::encode(hasher.finalize())
    }

    /// The request sent after a reply failed validation.
    pub fn with_correction(&self, bad_reply: &str, problem: &str) -> ChatRequest {
        let mut next = self.clone();
        next.messages.push(ChatMessage::assistant(bad_reply));
        next.messages.push(ChatMessage::user(format!(
            "Your previous reply did not match the required output format ({problem}). \
             Reply again with only the JSON array described in the Output Requirements, \
             inside a single fenced code block."
        )));
        next
    }

    /// Content of the first user message, which carries the rendered input.
    pub fn user_input(&self) -> &str {
        self.messages
            .iter()
            .find(|m| m.role == "user")
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }
}
