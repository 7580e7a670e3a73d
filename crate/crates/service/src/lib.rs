//! HTTP authoring service and command-line front end.

pub mod api;
pub mod cli;
pub mod config;
pub mod error;
pub mod jobs;
pub mod session;

pub use api::{router, AppState};
pub use config::{LlmMode, RenderMode, ServiceConfig};
