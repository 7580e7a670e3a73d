use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use notecast_core::logicflow::LogicFlow;
use notecast_core::notebook::{parse_notebook, Notebook};
use notecast_core::pipeline;
use notecast_core::script::{self, emphasis_record, DesignScript, Scene, Settings};

use crate::error::ApiError;

const NOTEBOOK_FILE: &str = "notebook.ipynb";
const SCRIPT_FILE: &str = "script.nps.json";
const STATE_FILE: &str = "state.json";

/// One authoring session: a notebook, its flow and the script built on it.
#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    pub version: u64,
    pub notebook: Notebook,
    pub flow: LogicFlow,
    pub script: DesignScript,
    /// Scenes of hidden nodes, kept so that unhiding restores them.
    pub parked: BTreeMap<usize, Scene>,
}

#[derive(Serialize, Deserialize)]
struct StateFile {
    version: u64,
    flow: LogicFlow,
    #[serde(default)]
    parked: BTreeMap<usize, Scene>,
}

impl Session {
    pub fn create(id: String, notebook: Notebook, flow: LogicFlow, settings: Settings) -> Self {
        let script = pipeline::initial_script(&flow, settings);
        Session {
            id,
            version: 1,
            notebook,
            flow,
            script,
            parked: BTreeMap::new(),
        }
    }

    pub fn view(&self) -> Value {
        json!({
            "id": self.id,
            "version": self.version,
            "flow": self.flow,
            "script": self.script,
            "emphasis": emphasis_record(&self.script)
                .into_iter()
                .map(|(scene_id, e)| json!({"scene_id": scene_id, "emphasis": e}))
                .collect::<Vec<_>>(),
        })
    }

    pub fn check_version(&self, expected: u64) -> Result<(), ApiError> {
        if expected != self.version {
            return Err(ApiError::VersionConflict {
                expected,
                actual: self.version,
            });
        }
        Ok(())
    }

    pub fn source_of(&self, cell: usize) -> Result<&str, ApiError> {
        self.notebook
            .cell(cell)
            .map(|c| c.source.as_str())
            .ok_or_else(|| ApiError::NotFound(format!("unknown cell {cell}")))
    }

    /// Hides or shows a flow node, parking or restoring its scene.
    pub fn set_hidden(&mut self, node: usize, hidden: bool) -> Result<(), ApiError> {
        let flow = self.flow.set_hidden(node, hidden)?;
        let mut script = self.script.clone();
        if hidden {
            if let Some(pos) = script.scenes.iter().position(|s| s.cell_index == node) {
                let scene = script.scenes.remove(pos);
                self.parked.insert(node, scene);
            }
        } else if script.scene_for_cell(node).is_none() {
            let scene = self
                .parked
                .remove(&node)
                .unwrap_or_else(|| Scene::new(node));
            let at = script
                .scenes
                .iter()
                .position(|s| s.cell_index > node)
                .unwrap_or(script.scenes.len());
            script.scenes.insert(at, scene);
        }
        self.flow = flow;
        self.script = script;
        Ok(())
    }

    /// Replaces the script with an uploaded one after checking it against
    /// the notebook and flow.
    pub fn replace_script(&mut self, script: DesignScript) -> Result<(), ApiError> {
        script.validate_against(&self.notebook, &self.flow)?;
        self.script = script;
        Ok(())
    }

    pub fn dir(data_dir: &Path, id: &str) -> PathBuf {
        data_dir.join("sessions").join(id)
    }

    pub fn save(&self, data_dir: &Path) -> Result<(), ApiError> {
        let dir = Self::dir(data_dir, &self.id);
        fs::create_dir_all(&dir).map_err(io_error)?;
        let state = StateFile {
            version: self.version,
            flow: self.flow.clone(),
            parked: self.parked.clone(),
        };
        write_atomic(&dir.join(NOTEBOOK_FILE), &self.notebook.to_bytes())?;
        write_atomic(&dir.join(SCRIPT_FILE), &script::serialize(&self.script)?)?;
        let state =
            serde_json::to_vec_pretty(&state).map_err(|e| ApiError::Internal(e.to_string()))?;
        write_atomic(&dir.join(STATE_FILE), &state)
    }

    pub fn load(data_dir: &Path, id: &str) -> Result<Session, String> {
        let dir = Self::dir(data_dir, id);
        let read = |name: &str| fs::read(dir.join(name)).map_err(|e| format!("{name}: {e}"));
        let notebook = parse_notebook(&read(NOTEBOOK_FILE)?).map_err(|e| e.to_string())?;
        let script = script::deserialize(&read(SCRIPT_FILE)?).map_err(|e| e.to_string())?;
        let state: StateFile =
            serde_json::from_slice(&read(STATE_FILE)?).map_err(|e| e.to_string())?;
        Ok(Session {
            id: id.to_string(),
            version: state.version,
            notebook,
            flow: state.flow,
            script,
            parked: state.parked,
        })
    }

    /// Every session stored under `data_dir`, skipping unreadable ones.
    pub fn load_all(data_dir: &Path) -> Vec<Session> {
        let Ok(entries) = fs::read_dir(data_dir.join("sessions")) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for entry in entries.flatten() {
            let id = entry.file_name().to_string_lossy().into_owned();
            match Session::load(data_dir, &id) {
                Ok(s) => out.push(s),
                Err(e) => tracing::warn!("skipping session {id}: {e}"),
            }
        }
        out
    }
}

fn io_error(e: std::io::Error) -> ApiError {
    ApiError::Internal(e.to_string())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ApiError> {
    let tmp = path.with_extension("part");
    fs::write(&tmp, bytes).map_err(io_error)?;
    fs::rename(&tmp, path).map_err(io_error)
}
