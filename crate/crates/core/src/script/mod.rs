//! The design script: the scene-based authoring IR.
//!
//! A script holds one scene per visible code cell. Each scene carries the
//! author's emphasis elements (a character span of the cell source plus an
//! annotation) and the narration split into categorized sentences, each
//! linked to at most two emphasis elements.
//!
//! All mutations are functional: they return a new value and leave the
//! input untouched.

mod classify;
mod effects;
mod io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use classify::{classify_segment, classify_segment_in, quoted_fragments, split_sentences};
pub use effects::{effects_for, Effect, EffectSet};
pub use io::{deserialize, serialize, SCRIPT_EXTENSION, SCRIPT_VERSION};

use crate::logicflow::LogicFlow;
use crate::notebook::Notebook;

pub const DEFAULT_SCALE_FACTOR: f64 = 1.25;
pub const MAX_LINKS: usize = 2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScriptError {
    #[error("span {start}..{end} is out of bounds for a source of {len} characters")]
    SpanOutOfBounds {
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("span {start}..{end} overlaps emphasis {existing}")]
    SpanOverlap {
        start: usize,
        end: usize,
        existing: String,
    },
    #[error("annotation must not be empty")]
    EmptyAnnotation,
    #[error("a segment links at most {MAX_LINKS} emphasis elements, got {0}")]
    TooManyLinks(usize),
    #[error("unknown id {0}")]
    UnknownId(String),
    #[error("unknown scene {0}")]
    UnknownScene(String),
    #[error("no scene for cell {0}")]
    UnknownCell(usize),
    #[error("narration text must not be empty")]
    EmptyText,
    #[error("segment {0} is already interactive")]
    AlreadyInteractive(String),
    #[error("schema violation at {path}: {message}")]
    SchemaViolation { path: String, message: String },
}

impl ScriptError {
    fn at(path: impl Into<String>, message: impl Into<String>) -> Self {
        ScriptError::SchemaViolation {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// Half-open character range into a cell's source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// The spanned text, if the span fits the source.
    pub fn slice<'a>(&self, source: &'a str) -> Option<&'a str> {
        if self.is_empty() {
            return None;
        }
        let start = char_to_byte(source, self.start)?;
        let end = char_to_byte(source, self.end)?;
        Some(&source[start..end])
    }
}

/// Byte offset of the `n`th character; `n == char count` maps to the end.
pub fn char_to_byte(source: &str, n: usize) -> Option<usize> {
    source
        .char_indices()
        .map(|(i, _)| i)
        .chain([source.len()])
        .nth(n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmphasisElement {
    pub id: String,
    pub cell_index: usize,
    pub span: Span,
    pub annotation: String,
    #[serde(default = "default_scale")]
    pub scale_factor: f64,
}

fn default_scale() -> f64 {
    DEFAULT_SCALE_FACTOR
}

impl EmphasisElement {
    pub fn snippet<'a>(&self, source: &'a str) -> Option<&'a str> {
        self.span.slice(source)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NarrationCategory {
    Background,
    CodeInterpretation,
    ResultDescription,
    Insight,
    Conclusion,
    Transition,
    Direction,
    Question,
}

impl NarrationCategory {
    pub const ALL: [NarrationCategory; 8] = [
        NarrationCategory::Background,
        NarrationCategory::CodeInterpretation,
        NarrationCategory::ResultDescription,
        NarrationCategory::Insight,
        NarrationCategory::Conclusion,
        NarrationCategory::Transition,
        NarrationCategory::Direction,
        NarrationCategory::Question,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NarrationSegment {
    pub id: String,
    pub text: String,
    pub category: NarrationCategory,
    #[serde(default)]
    pub linked_emphasis: Vec<String>,
    #[serde(default)]
    pub interactive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub id: String,
    pub cell_index: usize,
    #[serde(default)]
    pub emphases: Vec<EmphasisElement>,
    #[serde(default)]
    pub segments: Vec<NarrationSegment>,
    #[serde(default)]
    pub include_outputs: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Settings {
    pub resolution: Resolution,
    pub fps: u32,
    pub voice: String,
    pub gap_ms: u64,
    pub enter_ms: u64,
    pub exit_ms: u64,
    /// Duration of the snippet scale-up and annotation fades.
    pub emphasis_ms: u64,
    /// Horizontal slide between consecutive scenes.
    pub move_ms: u64,
    pub captions: bool,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            resolution: Resolution {
                width: 1920,
                height: 1080,
            },
            fps: 30,
            voice: "default".into(),
            gap_ms: 300,
            enter_ms: 500,
            exit_ms: 500,
            emphasis_ms: 300,
            move_ms: 400,
            captions: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignScript {
    pub nps: u32,
    pub scenes: Vec<Scene>,
    #[serde(default)]
    pub settings: Settings,
}

impl Default for DesignScript {
    fn default() -> Self {
        DesignScript {
            nps: SCRIPT_VERSION,
            scenes: Vec::new(),
            settings: Settings::default(),
        }
    }
}

pub fn scene_id_for(cell_index: usize) -> String {
    format!("s{cell_index}")
}

/// Next free id of the form `{prefix}{cell}-{k}` among `existing`.
fn next_id<'a>(prefix: char, cell: usize, existing: impl Iterator<Item = &'a str>) -> String {
    let stem = format!("{prefix}{cell}-");
    let max = existing
        .filter_map(|id| id.strip_prefix(&stem)?.parse::<u64>().ok())
        .max()
        .unwrap_or(0);
    format!("{stem}{}", max + 1)
}

impl Scene {
    pub fn new(cell_index: usize) -> Self {
        Scene {
            id: scene_id_for(cell_index),
            cell_index,
            emphases: Vec::new(),
            segments: Vec::new(),
            include_outputs: false,
        }
    }

    pub fn emphasis(&self, id: &str) -> Option<&EmphasisElement> {
        self.emphases.iter().find(|e| e.id == id)
    }

    pub fn segment(&self, id: &str) -> Option<&NarrationSegment> {
        self.segments.iter().find(|s| s.id == id)
    }

    pub fn next_segment_id(&self) -> String {
        next_id(
            'g',
            self.cell_index,
            self.segments.iter().map(|s| s.id.as_str()),
        )
    }

    /// Allocates `n` fresh segment ids without reusing any current one.
    pub fn fresh_segment_ids(&self, n: usize) -> Vec<String> {
        let mut ids: Vec<String> = self.segments.iter().map(|s| s.id.clone()).collect();
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let id = next_id('g', self.cell_index, ids.iter().map(String::as_str));
            ids.push(id.clone());
            out.push(id);
        }
        out
    }

    pub fn add_emphasis(
        &self,
        source: &str,
        span: Span,
        annotation: &str,
    ) -> Result<(Scene, EmphasisElement), ScriptError> {
        let len = source.chars().count();
        if span.start >= span.end || span.end > len {
            return Err(ScriptError::SpanOutOfBounds {
                start: span.start,
                end: span.end,
                len,
            });
        }
        let annotation = annotation.trim();
        if annotation.is_empty() {
            return Err(ScriptError::EmptyAnnotation);
        }
        if let Some(existing) = self.emphases.iter().find(|e| e.span.overlaps(&span)) {
            return Err(ScriptError::SpanOverlap {
                start: span.start,
                end: span.end,
                existing: existing.id.clone(),
            });
        }
        let element = EmphasisElement {
            id: next_id(
                'e',
                self.cell_index,
                self.emphases.iter().map(|e| e.id.as_str()),
            ),
            cell_index: self.cell_index,
            span,
            annotation: annotation.to_string(),
            scale_factor: DEFAULT_SCALE_FACTOR,
        };
        let mut next = self.clone();
        next.emphases.push(element.clone());
        Ok((next, element))
    }

    /// Removes an emphasis element and every link pointing at it.
    pub fn remove_emphasis(&self, emphasis_id: &str) -> Result<Scene, ScriptError> {
        if self.emphasis(emphasis_id).is_none() {
            return Err(ScriptError::UnknownId(emphasis_id.to_string()));
        }
        let mut next = self.clone();
        next.emphases.retain(|e| e.id != emphasis_id);
        for seg in &mut next.segments {
            seg.linked_emphasis.retain(|l| l != emphasis_id);
        }
        Ok(next)
    }

    pub fn link_segment(
        &self,
        segment_id: &str,
        emphasis_ids: &[String],
    ) -> Result<Scene, ScriptError> {
        if emphasis_ids.len() > MAX_LINKS {
            return Err(ScriptError::TooManyLinks(emphasis_ids.len()));
        }
        if self.segment(segment_id).is_none() {
            return Err(ScriptError::UnknownId(segment_id.to_string()));
        }
        if let Some(missing) = emphasis_ids.iter().find(|id| self.emphasis(id).is_none()) {
            return Err(ScriptError::UnknownId(missing.clone()));
        }
        let mut next = self.clone();
        let seg = next
            .segments
            .iter_mut()
            .find(|s| s.id == segment_id)
            .expect("checked above");
        seg.linked_emphasis = emphasis_ids.to_vec();
        Ok(next)
    }
}

impl DesignScript {
    /// One empty scene per visible flow node.
    pub fn from_flow(flow: &LogicFlow, settings: Settings) -> Self {
        DesignScript {
            nps: SCRIPT_VERSION,
            scenes: flow.scene_order().into_iter().map(Scene::new).collect(),
            settings,
        }
    }

    pub fn scene(&self, id: &str) -> Option<&Scene> {
        self.scenes.iter().find(|s| s.id == id)
    }

    pub fn scene_for_cell(&self, cell_index: usize) -> Option<&Scene> {
        self.scenes.iter().find(|s| s.cell_index == cell_index)
    }

    /// Returns a copy with scene `id` replaced by `f(scene)`.
    pub fn with_scene<F>(&self, id: &str, f: F) -> Result<DesignScript, ScriptError>
    where
        F: FnOnce(&Scene) -> Result<Scene, ScriptError>,
    {
        let pos = self
            .scenes
            .iter()
            .position(|s| s.id == id)
            .ok_or_else(|| ScriptError::UnknownScene(id.to_string()))?;
        let replaced = f(&self.scenes[pos])?;
        let mut next = self.clone();
        next.scenes[pos] = replaced;
        Ok(next)
    }

    pub fn scene_of_emphasis(&self, emphasis_id: &str) -> Option<&Scene> {
        self.scenes
            .iter()
            .find(|s| s.emphasis(emphasis_id).is_some())
    }

    pub fn scene_of_segment(&self, segment_id: &str) -> Option<&Scene> {
        self.scenes.iter().find(|s| s.segment(segment_id).is_some())
    }

    /// Structural checks that need no notebook.
    pub fn validate(&self) -> Result<(), ScriptError> {
        if self.nps != SCRIPT_VERSION {
            return Err(ScriptError::at(
                "nps",
                format!("expected {SCRIPT_VERSION}, got {}", self.nps),
            ));
        }
        let s = &self.settings;
        if s.fps == 0 {
            return Err(ScriptError::at("settings.fps", "must be positive"));
        }
        if s.resolution.width == 0 || s.resolution.height == 0 {
            return Err(ScriptError::at("settings.resolution", "must be positive"));
        }
        let mut prev_cell: Option<usize> = None;
        let mut seen_ids = std::collections::HashSet::new();
        for (si, scene) in self.scenes.iter().enumerate() {
            let sp = format!("scenes[{si}]");
            if prev_cell.is_some_and(|p| p >= scene.cell_index) {
                return Err(ScriptError::at(
                    format!("{sp}.cell_index"),
                    "scenes must follow notebook order",
                ));
            }
            prev_cell = Some(scene.cell_index);
            if !seen_ids.insert(scene.id.clone()) {
                return Err(ScriptError::at(
                    format!("{sp}.id"),
                    format!("duplicate id {}", scene.id),
                ));
            }
            for (ei, e) in scene.emphases.iter().enumerate() {
                let ep = format!("{sp}.emphases[{ei}]");
                if !seen_ids.insert(e.id.clone()) {
                    return Err(ScriptError::at(
                        format!("{ep}.id"),
                        format!("duplicate id {}", e.id),
                    ));
                }
                if e.cell_index != scene.cell_index {
                    return Err(ScriptError::at(
                        format!("{ep}.cell_index"),
                        "does not match its scene",
                    ));
                }
                if e.span.start >= e.span.end {
                    return Err(ScriptError::at(
                        format!("{ep}.span"),
                        "span must be non-empty",
                    ));
                }
                if e.annotation.trim().is_empty() {
                    return Err(ScriptError::at(
                        format!("{ep}.annotation"),
                        "must not be empty",
                    ));
                }
                if !(e.scale_factor.is_finite() && e.scale_factor > 0.0) {
                    return Err(ScriptError::at(
                        format!("{ep}.scale_factor"),
                        "must be a positive number",
                    ));
                }
                if let Some(other) = scene.emphases[..ei]
                    .iter()
                    .find(|o| o.span.overlaps(&e.span))
                {
                    return Err(ScriptError::at(
                        format!("{ep}.span"),
                        format!("overlaps {}", other.id),
                    ));
                }
            }
            for (gi, seg) in scene.segments.iter().enumerate() {
                let gp = format!("{sp}.segments[{gi}]");
                if !seen_ids.insert(seg.id.clone()) {
                    return Err(ScriptError::at(
                        format!("{gp}.id"),
                        format!("duplicate id {}", seg.id),
                    ));
                }
                if seg.text.trim().is_empty() {
                    return Err(ScriptError::at(format!("{gp}.text"), "must not be empty"));
                }
                if seg.linked_emphasis.len() > MAX_LINKS {
                    return Err(ScriptError::at(
                        format!("{gp}.linked_emphasis"),
                        format!(
                            "at most {MAX_LINKS} links, got {}",
                            seg.linked_emphasis.len()
                        ),
                    ));
                }
                if let Some(bad) = seg
                    .linked_emphasis
                    .iter()
                    .find(|l| scene.emphasis(l).is_none())
                {
                    return Err(ScriptError::at(
                        format!("{gp}.linked_emphasis"),
                        format!("{bad} is not an emphasis of this scene"),
                    ));
                }
                if seg.interactive && seg.category != NarrationCategory::Question {
                    return Err(ScriptError::at(
                        format!("{gp}.category"),
                        "interactive segments must be questions",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Checks spans against the cell sources and scene order against the flow.
    pub fn validate_against(
        &self,
        notebook: &Notebook,
        flow: &LogicFlow,
    ) -> Result<(), ScriptError> {
        self.validate()?;
        let order: Vec<usize> = self.scenes.iter().map(|s| s.cell_index).collect();
        if order != flow.scene_order() {
            return Err(ScriptError::at(
                "scenes",
                "scene order must equal the visible logic-flow order",
            ));
        }
        for (si, scene) in self.scenes.iter().enumerate() {
            let cell = notebook
                .cell(scene.cell_index)
                .filter(|c| c.is_code())
                .ok_or(ScriptError::UnknownCell(scene.cell_index))?;
            let len = cell.source.chars().count();
            for (ei, e) in scene.emphases.iter().enumerate() {
                if e.span.end > len {
                    return Err(ScriptError::at(
                        format!("scenes[{si}].emphases[{ei}].span"),
                        format!("ends at {} past the {len}-character source", e.span.end),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Every emphasis element in scene order, then by span start.
pub fn emphasis_record(script: &DesignScript) -> Vec<(String, EmphasisElement)> {
    let mut out = Vec::new();
    for scene in &script.scenes {
        let mut emphases: Vec<&EmphasisElement> = scene.emphases.iter().collect();
        emphases.sort_by_key(|e| e.span);
        out.extend(emphases.into_iter().map(|e| (scene.id.clone(), e.clone())));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const GERMANY: &str = "germany = df.query(\"Case_Type == 'Confirmed' and Country_Region == 'Germany'\")\ngermany.head()\n";

    fn char_span(source: &str, needle: &str) -> Span {
        let byte = source.find(needle).unwrap();
        let start = source[..byte].chars().count();
        Span::new(start, start + needle.chars().count())
    }

    #[test]
    fn scenario_emphases() {
        let scene = Scene::new(3);
        let confirmed = char_span(GERMANY, "Case_Type == 'Confirmed'");
        let (scene, first) = scene
            .add_emphasis(GERMANY, confirmed, "Filter out the confirmed cases")
            .unwrap();
        assert_eq!(first.snippet(GERMANY), Some("Case_Type == 'Confirmed'"));
        assert_eq!(first.scale_factor, 1.25);
        let germany = char_span(GERMANY, "Country_Region == 'Germany'");
        let (scene, second) = scene
            .add_emphasis(GERMANY, germany, "Filter out data for Germany")
            .unwrap();
        assert_ne!(first.id, second.id);
        assert_eq!(scene.emphases.len(), 2);
        assert_eq!(scene.emphases[0], first);
    }

    #[test]
    fn empty_and_out_of_range_spans() {
        let scene = Scene::new(0);
        assert!(matches!(
            scene.add_emphasis("abcdefgh", Span::new(5, 5), "x"),
            Err(ScriptError::SpanOutOfBounds { .. })
        ));
        assert!(matches!(
            scene.add_emphasis("abc", Span::new(1, 4), "x"),
            Err(ScriptError::SpanOutOfBounds { .. })
        ));
        assert_eq!(
            scene.add_emphasis("abc", Span::new(0, 2), "  "),
            Err(ScriptError::EmptyAnnotation)
        );
    }

    #[test]
    fn overlapping_span_rejected() {
        let (scene, _) = Scene::new(0)
            .add_emphasis("abcdefgh", Span::new(2, 5), "x")
            .unwrap();
        assert!(matches!(
            scene.add_emphasis("abcdefgh", Span::new(4, 6), "y"),
            Err(ScriptError::SpanOverlap { .. })
        ));
        assert!(scene.add_emphasis("abcdefgh", Span::new(5, 6), "y").is_ok());
    }

    #[test]
    fn spans_count_characters_not_bytes() {
        let src = "ä = 'ü'";
        assert_eq!(Span::new(4, 7).slice(src), Some("'ü'"));
        assert!(Scene::new(0)
            .add_emphasis(src, Span::new(0, 7), "all")
            .is_ok());
    }

    fn scene_with_segment() -> Scene {
        let (scene, _) = Scene::new(1)
            .add_emphasis("abcdefghij", Span::new(0, 2), "a")
            .unwrap();
        let (scene, _) = scene
            .add_emphasis("abcdefghij", Span::new(3, 5), "b")
            .unwrap();
        let (mut scene, _) = scene
            .add_emphasis("abcdefghij", Span::new(6, 8), "c")
            .unwrap();
        scene.segments.push(NarrationSegment {
            id: scene.next_segment_id(),
            text: "Hello.".into(),
            category: NarrationCategory::Background,
            linked_emphasis: vec![],
            interactive: false,
        });
        scene
    }

    #[test]
    fn linking() {
        let scene = scene_with_segment();
        let linked = scene.link_segment("g1-1", &["e1-1".to_string()]).unwrap();
        assert_eq!(linked.segments[0].linked_emphasis, vec!["e1-1"]);
        let three: Vec<String> = ["e1-1", "e1-2", "e1-3"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(
            scene.link_segment("g1-1", &three),
            Err(ScriptError::TooManyLinks(3))
        );
        let cleared = linked.link_segment("g1-1", &[]).unwrap();
        assert!(cleared.segments[0].linked_emphasis.is_empty());
        assert_eq!(
            scene.link_segment("g1-9", &[]),
            Err(ScriptError::UnknownId("g1-9".into()))
        );
        assert_eq!(
            scene.link_segment("g1-1", &["e7-1".to_string()]),
            Err(ScriptError::UnknownId("e7-1".into()))
        );
    }

    #[test]
    fn removing_emphasis_drops_links() {
        let scene = scene_with_segment()
            .link_segment("g1-1", &["e1-1".into(), "e1-2".into()])
            .unwrap();
        let scene = scene.remove_emphasis("e1-1").unwrap();
        assert_eq!(scene.segments[0].linked_emphasis, vec!["e1-2"]);
        assert_eq!(scene.emphases.len(), 2);
    }

    #[test]
    fn record_orders_by_scene_then_span() {
        let (s0, _) = Scene::new(0)
            .add_emphasis("abcdefgh", Span::new(5, 7), "late")
            .unwrap();
        let (s0, _) = s0
            .add_emphasis("abcdefgh", Span::new(0, 2), "early")
            .unwrap();
        let (s2, _) = Scene::new(2)
            .add_emphasis("xyz", Span::new(0, 1), "x")
            .unwrap();
        let (s4, _) = Scene::new(4)
            .add_emphasis("xyz", Span::new(1, 3), "yz")
            .unwrap();
        let script = DesignScript {
            scenes: vec![s0, s2, s4],
            ..DesignScript::default()
        };
        let record: Vec<(String, String)> = emphasis_record(&script)
            .into_iter()
            .map(|(sid, e)| (sid, e.annotation))
            .collect();
        assert_eq!(
            record,
            vec![
                ("s0".into(), "early".into()),
                ("s0".into(), "late".into()),
                ("s2".into(), "x".into()),
                ("s4".into(), "yz".into()),
            ]
        );
        assert!(emphasis_record(&DesignScript::default()).is_empty());
    }

    #[test]
    fn validation_rejects_interactive_non_question() {
        let mut scene = scene_with_segment();
        scene.segments[0].interactive = true;
        let script = DesignScript {
            scenes: vec![scene],
            ..DesignScript::default()
        };
        assert!(matches!(
            script.validate(),
            Err(ScriptError::SchemaViolation { path, .. }) if path == "scenes[0].segments[0].category"
        ));
    }
}
