pub mod llm;
pub mod logicflow;
pub mod narration;
pub mod notebook;
pub mod pipeline;
pub mod pylex;
pub mod render;
pub mod script;
pub mod timeline;
pub mod tts;
