//! Narration assembly: turning generated narration into linked, classified
//! segments, inserting transitions and question rewrites.

use thiserror::Error;

use crate::llm::{LlmBridge, LlmError, NarrationResult};
use crate::notebook::Notebook;
use crate::script::{
    classify_segment_in, quoted_fragments, split_sentences, DesignScript, EmphasisElement,
    NarrationCategory, NarrationSegment, Scene, ScriptError, MAX_LINKS,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NarrationError {
    #[error(transparent)]
    Script(#[from] ScriptError),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

pub const OPENING_TRANSITION: &str =
    "Focusing on this cell, we continue with the next step of the analysis.";
pub const TURNING_TRANSITION: &str =
    "By further working with this result, we take the analysis forward.";

/// Emphasis ids a sentence refers to: either the whole snippet appears in
/// the sentence, or a quoted fragment of at least three characters appears
/// in the snippet. At most two, earliest spans first.
pub fn auto_links(sentence: &str, emphases: &[EmphasisElement], source: &str) -> Vec<String> {
    let fragments: Vec<&str> = quoted_fragments(sentence)
        .into_iter()
        .map(str::trim)
        .filter(|f| f.chars().count() >= 3)
        .collect();
    let mut hits: Vec<&EmphasisElement> = emphases
        .iter()
        .filter(|e| {
            let Some(snippet) = e.snippet(source) else {
                return false;
            };
            let snippet = snippet.trim();
            (!snippet.is_empty() && sentence.contains(snippet))
                || fragments.iter().any(|f| snippet.contains(f))
        })
        .collect();
    hits.sort_by_key(|e| e.span);
    hits.into_iter()
        .take(MAX_LINKS)
        .map(|e| e.id.clone())
        .collect()
}

fn segments_from_text(
    scene: &Scene,
    text: &str,
    source: &str,
) -> Result<Vec<NarrationSegment>, ScriptError> {
    let sentences = split_sentences(text);
    if sentences.is_empty() {
        return Err(ScriptError::EmptyText);
    }
    let blank = Scene {
        segments: Vec::new(),
        ..scene.clone()
    };
    let ids = blank.fresh_segment_ids(sentences.len());
    sentences
        .into_iter()
        .zip(ids)
        .map(|(sentence, id)| {
            Ok(NarrationSegment {
                id,
                category: classify_segment_in(&sentence, Some(source))?,
                linked_emphasis: auto_links(&sentence, &scene.emphases, source),
                text: sentence,
                interactive: false,
            })
        })
        .collect()
}

/// Replaces the segments of every scene named by a result with the
/// sentence-split, classified and auto-linked narration.
pub fn apply_narration(
    script: &DesignScript,
    results: &[NarrationResult],
    notebook: &Notebook,
) -> Result<DesignScript, ScriptError> {
    let mut next = script.clone();
    for r in results {
        let pos = next
            .scenes
            .iter()
            .position(|s| s.cell_index == r.id)
            .ok_or(ScriptError::UnknownCell(r.id))?;
        let source = notebook
            .cell(r.id)
            .map(|c| c.source.as_str())
            .ok_or(ScriptError::UnknownCell(r.id))?;
        let segments = segments_from_text(&next.scenes[pos], &r.narration, source)?;
        next.scenes[pos].segments = segments;
    }
    Ok(next)
}

/// Replaces one scene's narration with author-written text.
pub fn set_scene_narration(
    script: &DesignScript,
    scene_id: &str,
    text: &str,
    notebook: &Notebook,
) -> Result<DesignScript, ScriptError> {
    script.with_scene(scene_id, |scene| {
        let source = notebook
            .cell(scene.cell_index)
            .map(|c| c.source.as_str())
            .ok_or(ScriptError::UnknownCell(scene.cell_index))?;
        let segments = segments_from_text(scene, text, source)?;
        Ok(Scene {
            segments,
            ..scene.clone()
        })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionPosition {
    Opening,
    /// Before the segment at this index.
    TurningPoint(usize),
}

/// Inserts a transition segment. Its category is always `Transition`,
/// whatever the text.
pub fn insert_transition(
    script: &DesignScript,
    scene_id: &str,
    position: TransitionPosition,
    text: Option<&str>,
) -> Result<DesignScript, ScriptError> {
    script.with_scene(scene_id, |scene| {
        let (index, default) = match position {
            TransitionPosition::Opening => (0, OPENING_TRANSITION),
            TransitionPosition::TurningPoint(i) => (i, TURNING_TRANSITION),
        };
        if index > scene.segments.len() {
            return Err(ScriptError::UnknownId(format!("segment index {index}")));
        }
        let text = text.unwrap_or(default).trim();
        if text.is_empty() {
            return Err(ScriptError::EmptyText);
        }
        let mut next = scene.clone();
        next.segments.insert(
            index,
            NarrationSegment {
                id: scene.next_segment_id(),
                text: text.to_string(),
                category: NarrationCategory::Transition,
                linked_emphasis: Vec::new(),
                interactive: false,
            },
        );
        Ok(next)
    })
}

/// Rewrites a segment as a question and its answer. Checks run before the
/// provider is called.
pub fn make_interactive(
    script: &DesignScript,
    scene_id: &str,
    segment_id: &str,
    bridge: &LlmBridge,
) -> Result<DesignScript, NarrationError> {
    let scene = script
        .scene(scene_id)
        .ok_or_else(|| ScriptError::UnknownScene(scene_id.to_string()))?;
    let segment = scene
        .segment(segment_id)
        .ok_or_else(|| ScriptError::UnknownId(segment_id.to_string()))?;
    if segment.interactive {
        return Err(ScriptError::AlreadyInteractive(segment_id.to_string()).into());
    }
    let rewritten = bridge.transform_to_question(&segment.text)?;
    let next = script.with_scene(scene_id, |scene| {
        let mut next = scene.clone();
        let seg = next
            .segments
            .iter_mut()
            .find(|s| s.id == segment_id)
            .expect("checked above");
        seg.text = rewritten;
        seg.category = NarrationCategory::Question;
        seg.interactive = true;
        Ok(next)
    })?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{CannedProvider, LlmBridge};
    use crate::notebook::parse_notebook;
    use crate::script::{Settings, Span};
    use serde_json::json;
    use std::sync::Arc;

    const LOAD: &str = "# Load dataset\nraw_data = data.read_csv('file.csv')";

    fn notebook() -> Notebook {
        let doc = json!({"nbformat": 4, "nbformat_minor": 5, "metadata": {}, "cells": [
            {"cell_type": "code", "metadata": {}, "outputs": [], "execution_count": null, "source": LOAD},
            {"cell_type": "code", "metadata": {}, "outputs": [], "execution_count": null, "source": "print(raw_data)"},
        ]});
        parse_notebook(doc.to_string().as_bytes()).unwrap()
    }

    fn script() -> DesignScript {
        let mut s = DesignScript {
            scenes: vec![Scene::new(0), Scene::new(1)],
            settings: Settings::default(),
            ..DesignScript::default()
        };
        let (scene, _) = s.scenes[0]
            .add_emphasis(
                LOAD,
                Span::new(26, 51),
                "Essential for initial data loading.",
            )
            .unwrap();
        s.scenes[0] = scene;
        s
    }

    fn result(id: usize, narration: &str) -> NarrationResult {
        NarrationResult {
            id,
            narration: narration.into(),
            inputs: vec![],
        }
    }

    #[test]
    fn example_narration_is_split_and_linked() {
        let text = "This cell initiates our data analysis by loading data from 'data.csv', focusing on the 'read_csv' function. Highlighted by the user, 'read_csv' is crucial for efficient data loading, preparing us for subsequent preprocessing steps.";
        let out = apply_narration(&script(), &[result(0, text)], &notebook()).unwrap();
        let segs = &out.scenes[0].segments;
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].id, "g0-1");
        assert_eq!(segs[1].id, "g0-2");
        for s in segs {
            assert_eq!(s.linked_emphasis, vec!["e0-1".to_string()]);
            assert_eq!(s.category, NarrationCategory::CodeInterpretation);
        }
        assert_eq!(out.scenes[0].emphases, script().scenes[0].emphases);
        out.validate().unwrap();
    }

    #[test]
    fn plain_narration_has_no_links() {
        let out = apply_narration(
            &script(),
            &[result(0, "We load the data. It is ready.")],
            &notebook(),
        )
        .unwrap();
        assert!(out.scenes[0]
            .segments
            .iter()
            .all(|s| s.linked_emphasis.is_empty()));
    }

    #[test]
    fn unknown_cell() {
        assert_eq!(
            apply_narration(&script(), &[result(99, "Hi.")], &notebook()),
            Err(ScriptError::UnknownCell(99))
        );
    }

    #[test]
    fn transitions() {
        let s =
            apply_narration(&script(), &[result(1, "We print it. Done.")], &notebook()).unwrap();
        let s = insert_transition(&s, "s1", TransitionPosition::Opening, None).unwrap();
        let first = &s.scenes[1].segments[0];
        assert_eq!(first.category, NarrationCategory::Transition);
        assert_eq!(first.text, OPENING_TRANSITION);
        assert_eq!(first.id, "g1-3");
        let text = "By further narrowing our dataset we stay focused.";
        let s =
            insert_transition(&s, "s1", TransitionPosition::TurningPoint(2), Some(text)).unwrap();
        assert_eq!(s.scenes[1].segments[2].text, text);
        assert_eq!(
            s.scenes[1].segments[2].category,
            NarrationCategory::Transition
        );
        assert_eq!(
            insert_transition(&s, "s7", TransitionPosition::Opening, None),
            Err(ScriptError::UnknownScene("s7".into()))
        );
        assert!(insert_transition(&s, "s1", TransitionPosition::TurningPoint(9), None).is_err());
    }

    #[test]
    fn interactive_rewrite_keeps_links_and_ids() {
        let text = "We call 'read_csv' to load the table.";
        let s = apply_narration(&script(), &[result(0, text)], &notebook()).unwrap();
        let provider = Arc::new(CannedProvider::new([
            "Why load it first? Because everything else needs it.",
        ]));
        let bridge = LlmBridge::new(provider.clone(), "m", 0.0);
        let out = make_interactive(&s, "s0", "g0-1", &bridge).unwrap();
        let seg = &out.scenes[0].segments[0];
        assert_eq!(seg.category, NarrationCategory::Question);
        assert!(seg.interactive);
        assert_eq!(seg.linked_emphasis, s.scenes[0].segments[0].linked_emphasis);
        assert_eq!(out.scenes[0].segments.len(), s.scenes[0].segments.len());
        let again = make_interactive(&out, "s0", "g0-1", &bridge);
        assert_eq!(
            again,
            Err(NarrationError::Script(ScriptError::AlreadyInteractive(
                "g0-1".into()
            )))
        );
        assert_eq!(provider.requests().len(), 1);
        assert!(matches!(
            make_interactive(&out, "s0", "g0-9", &bridge),
            Err(NarrationError::Script(ScriptError::UnknownId(_)))
        ));
    }

    #[test]
    fn links_capped_at_two_earliest() {
        let src = "a_1 = b_1 + c_1 + d_1";
        let mut scene = Scene::new(0);
        for (s, e) in [(12, 15), (0, 3), (6, 9)] {
            scene = scene.add_emphasis(src, Span::new(s, e), "x").unwrap().0;
        }
        let links = auto_links("Look at 'a_1', 'b_1' and 'c_1'.", &scene.emphases, src);
        assert_eq!(links, vec!["e0-2".to_string(), "e0-3".to_string()]);
    }
}
