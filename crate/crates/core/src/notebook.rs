//! nbformat 4 notebook documents.
//!
//! Cells are identified by their position in the document; notebook `id`
//! metadata is ignored. Raw outputs are kept as JSON so that decoding
//! problems surface only when a scene actually asks for them.

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NotebookError {
    #[error("malformed notebook: {0}")]
    MalformedDocument(String),
    #[error("unsupported nbformat version {major}.{minor} (only 4.x is accepted)")]
    UnsupportedVersion { major: i64, minor: i64 },
    #[error("cell {index} output {output}: {reason}")]
    DecodeError {
        index: usize,
        output: usize,
        reason: String,
    },
    #[error("cell {0} is not a code cell")]
    NotACodeCell(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Code,
    Markdown,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub index: usize,
    pub kind: CellKind,
    pub source: String,
    /// Raw nbformat output objects. Always empty for non-code cells.
    pub outputs: Vec<Value>,
    pub execution_count: Option<i64>,
}

impl Cell {
    pub fn is_code(&self) -> bool {
        self.kind == CellKind::Code
    }

    pub fn line_count(&self) -> usize {
        if self.source.is_empty() {
            0
        } else {
            self.source.lines().count()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    StreamText,
    ExecuteResultText,
    ImagePng,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Text(String),
    Binary(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputAsset {
    pub kind: OutputKind,
    pub payload: Payload,
    pub mime: String,
}

impl OutputAsset {
    pub fn text(&self) -> Option<&str> {
        match &self.payload {
            Payload::Text(t) => Some(t),
            Payload::Binary(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Notebook {
    pub format_version: (i64, i64),
    pub cells: Vec<Cell>,
    pub source_path: String,
}

impl Notebook {
    pub fn code_cells(&self) -> Vec<&Cell> {
        code_cells(self)
    }

    pub fn cell(&self, index: usize) -> Option<&Cell> {
        self.cells.get(index)
    }

    /// Serializes back to nbformat 4 JSON. Sources are written as line
    /// arrays, which join back to the exact original text.
    pub fn to_json(&self) -> Value {
        let cells: Vec<Value> = self
            .cells
            .iter()
            .map(|cell| {
                let mut obj = Map::new();
                let kind = match cell.kind {
                    CellKind::Code => "code",
                    CellKind::Markdown => "markdown",
                    CellKind::Raw => "raw",
                };
                obj.insert("cell_type".into(), json!(kind));
                obj.insert("metadata".into(), json!({}));
                obj.insert("source".into(), json!(split_source_lines(&cell.source)));
                if cell.is_code() {
                    obj.insert("execution_count".into(), json!(cell.execution_count));
                    obj.insert("outputs".into(), Value::Array(cell.outputs.clone()));
                }
                Value::Object(obj)
            })
            .collect();
        json!({
            "nbformat": self.format_version.0,
            "nbformat_minor": self.format_version.1,
            "metadata": {},
            "cells": cells,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec_pretty(&self.to_json()).expect("notebook JSON is always serializable")
    }
}

pub fn parse_notebook(bytes: &[u8]) -> Result<Notebook, NotebookError> {
    parse_notebook_at(bytes, "")
}

pub fn parse_notebook_at(bytes: &[u8], source_path: &str) -> Result<Notebook, NotebookError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| NotebookError::MalformedDocument(format!("not UTF-8: {e}")))?;
    let doc: Value = serde_json::from_str(text)
        .map_err(|e| NotebookError::MalformedDocument(format!("invalid JSON: {e}")))?;
    let obj = doc
        .as_object()
        .ok_or_else(|| NotebookError::MalformedDocument("top level is not an object".into()))?;

    let major = obj
        .get("nbformat")
        .and_then(Value::as_i64)
        .ok_or_else(|| NotebookError::MalformedDocument("missing integer `nbformat`".into()))?;
    let minor = obj
        .get("nbformat_minor")
        .and_then(Value::as_i64)
        .unwrap_or(0);
    if major != 4 {
        return Err(NotebookError::UnsupportedVersion { major, minor });
    }
    let raw_cells = obj
        .get("cells")
        .and_then(Value::as_array)
        .ok_or_else(|| NotebookError::MalformedDocument("missing `cells` array".into()))?;

    let mut cells = Vec::with_capacity(raw_cells.len());
    for (index, raw) in raw_cells.iter().enumerate() {
        cells.push(parse_cell(index, raw)?);
    }

    Ok(Notebook {
        format_version: (major, minor),
        cells,
        source_path: source_path.to_string(),
    })
}

fn parse_cell(index: usize, raw: &Value) -> Result<Cell, NotebookError> {
    let malformed =
        |what: &str| NotebookError::MalformedDocument(format!("cells[{index}]: {what}"));
    let obj = raw.as_object().ok_or_else(|| malformed("not an object"))?;
    let kind = match obj.get("cell_type").and_then(Value::as_str) {
        Some("code") => CellKind::Code,
        Some("markdown") => CellKind::Markdown,
        Some("raw") => CellKind::Raw,
        Some(other) => return Err(malformed(&format!("unknown cell_type {other:?}"))),
        None => return Err(malformed("missing cell_type")),
    };
    let source = match obj.get("source") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Array(lines)) => {
            let mut joined = String::new();
            for line in lines {
                joined.push_str(
                    line.as_str()
                        .ok_or_else(|| malformed("source line is not a string"))?,
                );
            }
            joined
        }
        _ => return Err(malformed("missing source")),
    };
    let (outputs, execution_count) = if kind == CellKind::Code {
        let outputs = match obj.get("outputs") {
            Some(Value::Array(o)) => o.clone(),
            None => Vec::new(),
            Some(_) => return Err(malformed("outputs is not an array")),
        };
        (outputs, obj.get("execution_count").and_then(Value::as_i64))
    } else {
        (Vec::new(), None)
    };
    Ok(Cell {
        index,
        kind,
        source,
        outputs,
        execution_count,
    })
}

/// Splits text into nbformat-style lines, each keeping its trailing `\n`.
pub fn split_source_lines(source: &str) -> Vec<&str> {
    source.split_inclusive('\n').collect()
}

pub fn code_cells(notebook: &Notebook) -> Vec<&Cell> {
    notebook.cells.iter().filter(|c| c.is_code()).collect()
}

pub fn extract_output_assets(cell: &Cell) -> Result<Vec<OutputAsset>, NotebookError> {
    if !cell.is_code() {
        return Err(NotebookError::NotACodeCell(cell.index));
    }
    let mut assets = Vec::new();
    for (pos, output) in cell.outputs.iter().enumerate() {
        let decode_err = |reason: String| NotebookError::DecodeError {
            index: cell.index,
            output: pos,
            reason,
        };
        let output_type = output
            .get("output_type")
            .and_then(Value::as_str)
            .unwrap_or("");
        match output_type {
            "stream" => {
                let text = multiline_text(output.get("text"));
                assets.push(OutputAsset {
                    kind: OutputKind::StreamText,
                    payload: Payload::Text(text),
                    mime: "text/plain".into(),
                });
            }
            "execute_result" | "display_data" => {
                let data = output.get("data");
                if let Some(png) = data.and_then(|d| d.get("image/png")) {
                    let encoded: String = multiline_text(Some(png)).split_whitespace().collect();
                    let bytes = base64::engine::general_purpose::STANDARD
                        .decode(encoded.as_bytes())
                        .map_err(|e| decode_err(format!("invalid base64: {e}")))?;
                    image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
                        .map_err(|e| decode_err(format!("invalid PNG: {e}")))?;
                    assets.push(OutputAsset {
                        kind: OutputKind::ImagePng,
                        payload: Payload::Binary(bytes),
                        mime: "image/png".into(),
                    });
                } else if let Some(text) = data.and_then(|d| d.get("text/plain")) {
                    assets.push(OutputAsset {
                        kind: OutputKind::ExecuteResultText,
                        payload: Payload::Text(multiline_text(Some(text))),
                        mime: "text/plain".into(),
                    });
                }
            }
            "error" => {
                let ename = output
                    .get("ename")
                    .and_then(Value::as_str)
                    .unwrap_or("Error");
                let evalue = output.get("evalue").and_then(Value::as_str).unwrap_or("");
                assets.push(OutputAsset {
                    kind: OutputKind::Error,
                    payload: Payload::Text(format!("{ename}: {evalue}")),
                    mime: "text/plain".into(),
                });
            }
            _ => {}
        }
    }
    Ok(assets)
}

fn multiline_text(value: Option<&Value>) -> String {
    match value {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Array(parts)) => parts.iter().filter_map(Value::as_str).collect(),
        _ => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nb(cells: Value) -> Vec<u8> {
        serde_json::to_vec(&json!({
            "nbformat": 4, "nbformat_minor": 5, "metadata": {}, "cells": cells
        }))
        .unwrap()
    }

    #[test]
    fn empty_notebook() {
        let notebook = parse_notebook(&nb(json!([]))).unwrap();
        assert!(notebook.cells.is_empty());
        assert!(code_cells(&notebook).is_empty());
    }

    #[test]
    fn empty_object_is_malformed() {
        assert!(matches!(
            parse_notebook(b"{}"),
            Err(NotebookError::MalformedDocument(_))
        ));
    }

    #[test]
    fn rejects_nbformat_3() {
        let bytes = br#"{"nbformat": 3, "nbformat_minor": 0, "worksheets": []}"#;
        assert!(matches!(
            parse_notebook(bytes),
            Err(NotebookError::UnsupportedVersion { major: 3, .. })
        ));
    }

    #[test]
    fn joins_source_arrays_exactly() {
        let bytes = nb(json!([
            {"cell_type": "code", "metadata": {}, "execution_count": 1, "outputs": [],
             "source": ["x = 1\n", "\ty = 'é'\r\n", "z"]}
        ]));
        let notebook = parse_notebook(&bytes).unwrap();
        assert_eq!(notebook.cells[0].source, "x = 1\n\ty = 'é'\r\nz");
        assert_eq!(notebook.cells[0].execution_count, Some(1));
    }

    #[test]
    fn stream_output_becomes_text_asset() {
        let bytes = nb(json!([
            {"cell_type": "code", "metadata": {}, "execution_count": 1, "source": "print('hello')",
             "outputs": [{"output_type": "stream", "name": "stdout", "text": ["hello\n"]}]}
        ]));
        let notebook = parse_notebook(&bytes).unwrap();
        let assets = extract_output_assets(&notebook.cells[0]).unwrap();
        assert_eq!(assets.len(), 1);
        assert_eq!(assets[0].kind, OutputKind::StreamText);
        assert_eq!(assets[0].text(), Some("hello\n"));
    }

    #[test]
    fn markdown_cell_has_no_assets() {
        let bytes = nb(json!([{"cell_type": "markdown", "metadata": {}, "source": "# Title"}]));
        let notebook = parse_notebook(&bytes).unwrap();
        assert!(matches!(
            extract_output_assets(&notebook.cells[0]),
            Err(NotebookError::NotACodeCell(0))
        ));
    }

    #[test]
    fn bad_base64_png_is_decode_error() {
        let bytes = nb(json!([
            {"cell_type": "code", "metadata": {}, "execution_count": 1, "source": "plot()",
             "outputs": [{"output_type": "display_data", "metadata": {},
                          "data": {"image/png": "not base64!!", "text/plain": "<Figure>"}}]}
        ]));
        let notebook = parse_notebook(&bytes).unwrap();
        assert!(matches!(
            extract_output_assets(&notebook.cells[0]),
            Err(NotebookError::DecodeError {
                index: 0,
                output: 0,
                ..
            })
        ));
    }

    #[test]
    fn error_output() {
        let bytes = nb(json!([
            {"cell_type": "code", "metadata": {}, "execution_count": 1, "source": "1/0",
             "outputs": [{"output_type": "error", "ename": "ZeroDivisionError",
                          "evalue": "division by zero", "traceback": []}]}
        ]));
        let notebook = parse_notebook(&bytes).unwrap();
        let assets = extract_output_assets(&notebook.cells[0]).unwrap();
        assert_eq!(assets[0].kind, OutputKind::Error);
        assert_eq!(
            assets[0].text(),
            Some("ZeroDivisionError: division by zero")
        );
    }
}
