#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use notecast_service::{router, AppState, ServiceConfig};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
}

pub fn covid_bytes() -> Vec<u8> {
    std::fs::read(fixture("covid.ipynb")).unwrap()
}

pub fn covid_cell(i: usize) -> String {
    let nb = notecast_core::notebook::parse_notebook(&covid_bytes()).unwrap();
    nb.cells[i].source.clone()
}

pub const CONFIRMED: &str = "Case_Type == 'Confirmed'";
pub const GERMANY: &str = "Country_Region == 'Germany'";
pub const CONFIRMED_NOTE: &str = "Filter out the confirmed cases";
pub const GERMANY_NOTE: &str = "Filter out data for Germany";

/// Character span of the first `needle` in `source`.
pub fn char_span(source: &str, needle: &str) -> (usize, usize) {
    let at = source.find(needle).expect("needle present");
    let start = source[..at].chars().count();
    (start, start + needle.chars().count())
}

pub struct TestApp {
    pub app: Router,
    pub state: Arc<AppState>,
    pub dir: tempfile::TempDir,
}

impl TestApp {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        Self::with_config(ServiceConfig::offline(dir.path()), dir)
    }

    pub fn with_config(config: ServiceConfig, dir: tempfile::TempDir) -> Self {
        let state = AppState::new(config);
        TestApp {
            app: router(state.clone()),
            state,
            dir,
        }
    }

    pub async fn raw(&self, method: Method, uri: &str, body: Vec<u8>) -> (StatusCode, Vec<u8>) {
        let req = Request::builder()
            .method(method)
            .uri(uri)
            .header("content-type", "application/json")
            .body(Body::from(body))
            .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp
            .into_body()
            .collect()
            .await
            .unwrap()
            .to_bytes()
            .to_vec();
        (status, bytes)
    }

    pub async fn call(
        &self,
        method: Method,
        uri: &str,
        body: Option<Value>,
    ) -> (StatusCode, Value) {
        let bytes = body
            .map(|b| serde_json::to_vec(&b).unwrap())
            .unwrap_or_default();
        let (status, out) = self.raw(method, uri, bytes).await;
        let value = if out.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&out).unwrap_or(Value::Null)
        };
        (status, value)
    }

    /// Uploads the COVID notebook and returns the session view.
    pub async fn covid_session(&self) -> Value {
        let (status, view) = self.raw(Method::POST, "/sessions", covid_bytes()).await;
        assert_eq!(status, StatusCode::OK);
        serde_json::from_slice(&view).unwrap()
    }

    /// Shrinks the output so renders stay quick.
    pub async fn small_settings(&self, id: &str, version: u64) -> Value {
        let (status, view) = self
            .call(
                Method::PATCH,
                &format!("/sessions/{id}/settings"),
                Some(json!({
                    "version": version,
                    "settings": {"resolution": {"width": 240, "height": 135}, "fps": 5}
                })),
            )
            .await;
        assert_eq!(status, StatusCode::OK, "{view}");
        view
    }

    pub async fn add_emphasis(
        &self,
        id: &str,
        version: u64,
        needle: &str,
        note: &str,
    ) -> (StatusCode, Value) {
        let (start, end) = char_span(&covid_cell(3), needle);
        self.call(
            Method::POST,
            &format!("/sessions/{id}/scenes/s3/emphasis"),
            Some(json!({"version": version, "start": start, "end": end, "annotation": note})),
        )
        .await
    }

    pub async fn wait_job(&self, job: &str) -> Value {
        let deadline = Instant::now() + Duration::from_secs(120);
        loop {
            let (status, j) = self.call(Method::GET, &format!("/jobs/{job}"), None).await;
            assert_eq!(status, StatusCode::OK);
            if j["state"] == "done" || j["state"] == "failed" {
                return j;
            }
            assert!(Instant::now() < deadline, "job {job} did not finish");
            tokio::time::sleep(Duration::from_millis(25)).await;
        }
    }
}

pub fn version(view: &Value) -> u64 {
    view["version"].as_u64().expect("version")
}
