//! Logic flow: one node per code cell with inputs, outputs and the
//! dependency edges between cells.
//!
//! Inputs, outputs and edges always come from the deterministic def/use
//! analysis. Descriptions may come from a language model; whatever the model
//! reports as inputs/outputs is kept on the node as advisory metadata only.

pub mod names;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::notebook::{Cell, Notebook};
pub use names::{analyze_cell_names, NameAnalysis};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FlowError {
    #[error("unknown flow node {0}")]
    UnknownNode(usize),
    #[error("invalid split boundary for node {id}: {reason}")]
    InvalidBoundary { id: usize, reason: String },
    #[error("description must not be empty")]
    EmptyDescription,
}

/// Half-open range of zero-based physical lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineRange {
    pub start: usize,
    pub end: usize,
}

/// What the language model claimed a cell reads and writes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdvisoryIo {
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowNode {
    pub id: usize,
    pub description: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    #[serde(default)]
    pub hidden: bool,
    #[serde(default)]
    pub children: Vec<FlowNode>,
    pub lines: LineRange,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advisory: Option<AdvisoryIo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub name: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LogicFlow {
    pub nodes: Vec<FlowNode>,
    pub edges: Vec<Edge>,
}

impl LogicFlow {
    pub fn node(&self, id: usize) -> Option<&FlowNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    fn node_mut(&mut self, id: usize) -> Result<&mut FlowNode, FlowError> {
        self.nodes
            .iter_mut()
            .find(|n| n.id == id)
            .ok_or(FlowError::UnknownNode(id))
    }

    /// Cell indices of visible nodes, in notebook order. This is the scene order.
    pub fn scene_order(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .filter(|n| !n.hidden)
            .map(|n| n.id)
            .collect()
    }

    pub fn is_visible(&self, id: usize) -> bool {
        self.node(id).is_some_and(|n| !n.hidden)
    }

    pub fn set_hidden(&self, id: usize, hidden: bool) -> Result<LogicFlow, FlowError> {
        let mut next = self.clone();
        next.node_mut(id)?.hidden = hidden;
        Ok(next)
    }

    pub fn rename(&self, id: usize, description: &str) -> Result<LogicFlow, FlowError> {
        let description = description.trim();
        if description.is_empty() {
            return Err(FlowError::EmptyDescription);
        }
        let mut next = self.clone();
        next.node_mut(id)?.description = description.to_string();
        Ok(next)
    }

    /// Breaks a node into children at the given line boundaries. Each call
    /// replaces any earlier split; an empty boundary list removes it.
    pub fn split_node(
        &self,
        notebook: &Notebook,
        id: usize,
        boundaries: &[usize],
    ) -> Result<LogicFlow, FlowError> {
        let mut next = self.clone();
        let node = next.node_mut(id)?;
        let cell = notebook.cell(id).ok_or(FlowError::UnknownNode(id))?;
        let total = node.lines.end;
        let invalid = |reason: String| FlowError::InvalidBoundary { id, reason };

        let mut prev = 0;
        for &b in boundaries {
            if b == 0 || b >= total {
                return Err(invalid(format!("{b} is outside 1..{total}")));
            }
            if b <= prev {
                return Err(invalid(format!("{b} does not increase on {prev}")));
            }
            prev = b;
        }
        if boundaries.is_empty() {
            node.children.clear();
            return Ok(next);
        }

        let lines: Vec<&str> = cell.source.split_inclusive('\n').collect();
        let mut cuts = Vec::with_capacity(boundaries.len() + 2);
        cuts.push(0);
        cuts.extend_from_slice(boundaries);
        cuts.push(total);
        node.children = cuts
            .windows(2)
            .map(|w| {
                let text: String = lines[w[0]..w[1]].concat();
                let analysis = analyze_cell_names(&text);
                let description =
                    first_comment(&text).unwrap_or_else(|| format!("Lines {}-{}", w[0] + 1, w[1]));
                FlowNode {
                    id,
                    description,
                    inputs: node_inputs(&analysis),
                    outputs: analysis.defined.iter().cloned().collect(),
                    hidden: false,
                    children: Vec::new(),
                    lines: LineRange {
                        start: w[0],
                        end: w[1],
                    },
                    advisory: None,
                    diagnostic: analysis.diagnostic,
                }
            })
            .collect();
        Ok(next)
    }

    /// Applies model-generated descriptions. Model inputs/outputs are stored
    /// as advisory metadata and never touch edges.
    pub fn apply_descriptions(&self, entries: &[crate::llm::LogicEntry]) -> LogicFlow {
        let mut next = self.clone();
        for entry in entries {
            if let Ok(node) = next.node_mut(entry.id) {
                if !entry.description.trim().is_empty() {
                    node.description = entry.description.trim().to_string();
                }
                node.advisory = Some(AdvisoryIo {
                    inputs: entry.inputs.clone(),
                    outputs: entry.outputs.clone(),
                });
            }
        }
        next
    }

    /// Advisory names the model reported that the analysis did not find.
    pub fn advisory_mismatches(&self) -> Vec<(usize, String)> {
        let mut out = Vec::new();
        for node in &self.nodes {
            if let Some(adv) = &node.advisory {
                for name in adv.inputs.iter().chain(&adv.outputs) {
                    if !node.inputs.contains(name) && !node.outputs.contains(name) {
                        out.push((node.id, name.clone()));
                    }
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("flow serializes")
    }
}

/// Wire form: the per-cell list, each node carrying its incoming edges.
#[derive(Serialize, Deserialize)]
struct WireNode {
    #[serde(flatten)]
    node: FlowNode,
    #[serde(default)]
    edges: Vec<WireEdge>,
}

#[derive(Serialize, Deserialize)]
struct WireEdge {
    from: usize,
    name: String,
}

impl Serialize for LogicFlow {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let wire: Vec<WireNode> = self
            .nodes
            .iter()
            .map(|n| WireNode {
                node: n.clone(),
                edges: self
                    .edges
                    .iter()
                    .filter(|e| e.to == n.id)
                    .map(|e| WireEdge {
                        from: e.from,
                        name: e.name.clone(),
                    })
                    .collect(),
            })
            .collect();
        wire.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for LogicFlow {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let wire = Vec::<WireNode>::deserialize(deserializer)?;
        let mut flow = LogicFlow::default();
        for w in wire {
            for e in w.edges {
                flow.edges.push(Edge {
                    from: e.from,
                    to: w.node.id,
                    name: e.name,
                });
            }
            flow.nodes.push(w.node);
        }
        Ok(flow)
    }
}

fn node_inputs(analysis: &NameAnalysis) -> Vec<String> {
    analysis
        .referenced
        .iter()
        .chain(analysis.resources.iter())
        .cloned()
        .collect()
}

fn first_comment(source: &str) -> Option<String> {
    source.lines().find_map(|line| {
        let line = line.trim();
        let text = line.strip_prefix('#')?.trim_start_matches('#').trim();
        (!text.is_empty()).then(|| text.to_string())
    })
}

fn default_description(cell: &Cell) -> String {
    first_comment(&cell.source).unwrap_or_else(|| format!("Cell {}", cell.index))
}

pub fn build_logic_flow(
    notebook: &Notebook,
    descriptions: Option<&BTreeMap<usize, String>>,
) -> LogicFlow {
    let mut flow = LogicFlow::default();
    // name -> most recent defining cell
    let mut last_def: BTreeMap<String, usize> = BTreeMap::new();

    for cell in notebook.code_cells() {
        let analysis = analyze_cell_names(&cell.source);
        for name in &analysis.referenced {
            if let Some(&producer) = last_def.get(name) {
                flow.edges.push(Edge {
                    from: producer,
                    to: cell.index,
                    name: name.clone(),
                });
            }
        }
        for name in &analysis.defined {
            last_def.insert(name.clone(), cell.index);
        }
        let description = descriptions
            .and_then(|d| d.get(&cell.index))
            .map(|d| d.trim().to_string())
            .filter(|d| !d.is_empty())
            .unwrap_or_else(|| default_description(cell));
        flow.nodes.push(FlowNode {
            id: cell.index,
            description,
            inputs: node_inputs(&analysis),
            outputs: analysis.defined.iter().cloned().collect(),
            hidden: false,
            children: Vec::new(),
            lines: LineRange {
                start: 0,
                end: cell.line_count(),
            },
            advisory: None,
            diagnostic: analysis.diagnostic,
        });
    }
    flow
}
