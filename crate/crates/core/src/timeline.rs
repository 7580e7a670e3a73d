//! Compiling a design script and audio durations into absolute clip times.
//!
//! All times are integer milliseconds from the start of the video. Within a
//! scene the enter animation comes first, then the segments with a gap
//! between consecutive ones, then the exit animation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::script::{effects_for, DesignScript, Effect, Resolution, Scene};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TimelineError {
    #[error("segment {0} has no audio duration")]
    MissingAudio(String),
    #[error("unknown scene {0}")]
    UnknownScene(String),
    #[error("time {t_ms} ms is outside the timeline of {total_ms} ms")]
    OutOfRange { t_ms: u64, total_ms: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum ClipTarget {
    SceneBackdrop,
    Emphasis(String),
    Annotation(String),
    Caption(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnimKind {
    FadeIn,
    FadeOut,
    MoveToNext,
    Scale,
    Shadow,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Curve {
    Linear,
    EaseInOut,
}

impl Curve {
    pub fn apply(self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        match self {
            Curve::Linear => p,
            Curve::EaseInOut => p * p * (3.0 - 2.0 * p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnimationSpec {
    pub kind: AnimKind,
    pub duration_ms: u64,
    pub curve: Curve,
}

impl AnimationSpec {
    pub fn new(kind: AnimKind, duration_ms: u64) -> Self {
        AnimationSpec {
            kind,
            duration_ms,
            curve: Curve::EaseInOut,
        }
    }

    pub fn none() -> Self {
        AnimationSpec::new(AnimKind::None, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clip {
    pub target: ClipTarget,
    pub start_ms: u64,
    pub duration_ms: u64,
    pub enter: AnimationSpec,
    pub exit: AnimationSpec,
    /// For emphasis clips: starts at `start_ms`, and the snippet scales back
    /// down over the same duration at the clip's end.
    pub emphasis_anim: Option<AnimationSpec>,
}

impl Clip {
    pub fn end_ms(&self) -> u64 {
        self.start_ms + self.duration_ms
    }

    pub fn contains(&self, t: u64) -> bool {
        self.start_ms <= t && t < self.end_ms()
    }
}

/// When a segment's audio plays.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentSlot {
    pub segment_id: String,
    pub start_ms: u64,
    pub duration_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneTimeline {
    pub scene_id: String,
    pub cell_index: usize,
    pub start_ms: u64,
    pub duration_ms: u64,
    pub segments: Vec<SegmentSlot>,
    pub clips: Vec<Clip>,
}

impl SceneTimeline {
    pub fn end_ms(&self) -> u64 {
        self.start_ms + self.duration_ms
    }

    pub fn backdrop(&self) -> &Clip {
        self.clips
            .iter()
            .find(|c| c.target == ClipTarget::SceneBackdrop)
            .expect("every scene has a backdrop clip")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timeline {
    pub scenes: Vec<SceneTimeline>,
    pub total_ms: u64,
    pub fps: u32,
    pub resolution: Resolution,
}

/// ceil(total_ms / 1000 × fps) with integers.
pub fn frame_count(total_ms: u64, fps: u32) -> u64 {
    (total_ms * fps as u64).div_ceil(1000)
}

/// Start of frame `i` in milliseconds, rounded down.
pub fn frame_time_ms(i: u64, fps: u32) -> u64 {
    i * 1000 / fps as u64
}

impl Timeline {
    pub fn frame_count(&self) -> u64 {
        frame_count(self.total_ms, self.fps)
    }

    pub fn scene(&self, id: &str) -> Option<&SceneTimeline> {
        self.scenes.iter().find(|s| s.scene_id == id)
    }

    /// Index of the scene playing at `t`.
    pub fn scene_at(&self, t: u64) -> Result<usize, TimelineError> {
        if t >= self.total_ms {
            return Err(TimelineError::OutOfRange {
                t_ms: t,
                total_ms: self.total_ms,
            });
        }
        Ok(self.scenes.partition_point(|s| s.end_ms() <= t))
    }

    /// The same timeline cut down to one scene, starting at zero.
    pub fn only_scene(&self, id: &str) -> Result<Timeline, TimelineError> {
        let scene = self
            .scene(id)
            .ok_or_else(|| TimelineError::UnknownScene(id.to_string()))?;
        let shift = scene.start_ms;
        let mut s = scene.clone();
        s.start_ms = 0;
        for seg in &mut s.segments {
            seg.start_ms -= shift;
        }
        for clip in &mut s.clips {
            clip.start_ms -= shift;
            // Nothing follows in a preview.
            if clip.target == ClipTarget::SceneBackdrop && clip.exit.kind == AnimKind::MoveToNext {
                clip.exit = AnimationSpec::none();
            }
        }
        Ok(Timeline {
            total_ms: s.duration_ms,
            scenes: vec![s],
            fps: self.fps,
            resolution: self.resolution,
        })
    }
}

fn caption_animations(
    scene_segment: &crate::script::NarrationSegment,
    fade_ms: u64,
) -> (AnimationSpec, AnimationSpec) {
    let fx = effects_for(scene_segment.category);
    let enter = if fx.contains(Effect::MoveToNext) {
        AnimationSpec::new(AnimKind::MoveToNext, fade_ms)
    } else if fx.contains(Effect::FadeIn) {
        AnimationSpec::new(AnimKind::FadeIn, fade_ms)
    } else {
        AnimationSpec::none()
    };
    let exit = if fx.contains(Effect::FadeOut) {
        AnimationSpec::new(AnimKind::FadeOut, fade_ms)
    } else {
        AnimationSpec::none()
    };
    (enter, exit)
}

fn compile_scene(
    script: &DesignScript,
    index: usize,
    scene: &Scene,
    start: u64,
    durations: &BTreeMap<String, u64>,
) -> Result<SceneTimeline, TimelineError> {
    let st = &script.settings;
    let mut slots = Vec::with_capacity(scene.segments.len());
    let mut cursor = start + st.enter_ms;
    for (k, seg) in scene.segments.iter().enumerate() {
        let dur = *durations
            .get(&seg.id)
            .ok_or_else(|| TimelineError::MissingAudio(seg.id.clone()))?;
        if k > 0 {
            cursor += st.gap_ms;
        }
        slots.push(SegmentSlot {
            segment_id: seg.id.clone(),
            start_ms: cursor,
            duration_ms: dur,
        });
        cursor += dur;
    }
    let duration = cursor + st.exit_ms - start;
    let has_next = index + 1 < script.scenes.len();

    let enter = if index == 0 {
        AnimationSpec::new(AnimKind::FadeIn, st.enter_ms)
    } else {
        // Arrived by sliding in from the previous scene.
        AnimationSpec::new(AnimKind::None, st.enter_ms)
    };
    let exit = if has_next {
        AnimationSpec::new(AnimKind::MoveToNext, st.move_ms.min(st.exit_ms))
    } else {
        AnimationSpec::new(AnimKind::FadeOut, st.exit_ms)
    };
    let mut clips = vec![Clip {
        target: ClipTarget::SceneBackdrop,
        start_ms: start,
        duration_ms: duration,
        enter,
        exit,
        emphasis_anim: None,
    }];

    for (seg, slot) in scene.segments.iter().zip(&slots) {
        if slot.duration_ms == 0 {
            continue;
        }
        let fade = st.emphasis_ms.min(slot.duration_ms / 2);
        for eid in &seg.linked_emphasis {
            clips.push(Clip {
                target: ClipTarget::Emphasis(eid.clone()),
                start_ms: slot.start_ms,
                duration_ms: slot.duration_ms,
                enter: AnimationSpec::none(),
                exit: AnimationSpec::none(),
                emphasis_anim: Some(AnimationSpec::new(AnimKind::Scale, st.emphasis_ms)),
            });
            clips.push(Clip {
                target: ClipTarget::Annotation(eid.clone()),
                start_ms: slot.start_ms,
                duration_ms: slot.duration_ms,
                enter: AnimationSpec::new(AnimKind::FadeIn, fade),
                exit: AnimationSpec::new(AnimKind::FadeOut, fade),
                emphasis_anim: None,
            });
        }
        if st.captions {
            let (enter, exit) = caption_animations(seg, fade);
            clips.push(Clip {
                target: ClipTarget::Caption(seg.id.clone()),
                start_ms: slot.start_ms,
                duration_ms: slot.duration_ms,
                enter,
                exit,
                emphasis_anim: None,
            });
        }
    }
    Ok(SceneTimeline {
        scene_id: scene.id.clone(),
        cell_index: scene.cell_index,
        start_ms: start,
        duration_ms: duration,
        segments: slots,
        clips,
    })
}

/// Lays out every scene back to back. Every segment needs a duration.
pub fn compile_timeline(
    script: &DesignScript,
    durations: &BTreeMap<String, u64>,
) -> Result<Timeline, TimelineError> {
    let mut scenes = Vec::with_capacity(script.scenes.len());
    let mut start = 0;
    for (i, scene) in script.scenes.iter().enumerate() {
        let compiled = compile_scene(script, i, scene, start, durations)?;
        start = compiled.end_ms();
        scenes.push(compiled);
    }
    Ok(Timeline {
        scenes,
        total_ms: start,
        fps: script.settings.fps,
        resolution: script.settings.resolution,
    })
}

/// Visual state of one element at a given time.
#[derive(Debug, Clone, PartialEq)]
pub struct EmphasisState {
    pub emphasis_id: String,
    pub scale: f64,
    /// Shadow strength in 0..=1; follows the scale progress.
    pub shadow: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlayState {
    pub id: String,
    pub opacity: f64,
    /// Horizontal offset as a fraction of the frame width (slide-in).
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameState {
    pub t_ms: u64,
    pub scene_index: usize,
    pub scene_id: String,
    pub opacity: f64,
    /// Progress of the slide to the next scene, when one is under way.
    pub slide: Option<f64>,
    pub emphases: Vec<EmphasisState>,
    pub annotations: Vec<OverlayState>,
    pub caption: Option<OverlayState>,
}

fn progress(t: u64, start: u64, dur: u64) -> f64 {
    if dur == 0 {
        return if t >= start { 1.0 } else { 0.0 };
    }
    if t <= start {
        return 0.0;
    }
    ((t - start) as f64 / dur as f64).min(1.0)
}

/// Opacity of a clip from its enter and exit fades.
fn clip_opacity(clip: &Clip, t: u64) -> f64 {
    let mut o = 1.0;
    if clip.enter.kind == AnimKind::FadeIn {
        o *= clip
            .enter
            .curve
            .apply(progress(t, clip.start_ms, clip.enter.duration_ms));
    }
    if clip.exit.kind == AnimKind::FadeOut {
        let from = clip.end_ms().saturating_sub(clip.exit.duration_ms);
        o *= 1.0
            - clip
                .exit
                .curve
                .apply(progress(t, from, clip.exit.duration_ms));
    }
    o
}

fn clip_offset(clip: &Clip, t: u64) -> f64 {
    if clip.enter.kind == AnimKind::MoveToNext {
        1.0 - clip
            .enter
            .curve
            .apply(progress(t, clip.start_ms, clip.enter.duration_ms))
    } else {
        0.0
    }
}

/// Scene-level and element-level animation values at `t`.
pub fn frame_state(
    timeline: &Timeline,
    scale_of: impl Fn(&str) -> f64,
    t: u64,
) -> Result<FrameState, TimelineError> {
    let si = timeline.scene_at(t)?;
    Ok(scene_state(timeline, si, &scale_of, t))
}

/// State of scene `si` at `t`, even if `t` lies outside the scene; used to
/// draw the incoming scene during a slide.
pub fn scene_state(
    timeline: &Timeline,
    si: usize,
    scale_of: &impl Fn(&str) -> f64,
    t: u64,
) -> FrameState {
    let scene = &timeline.scenes[si];
    let t_in = t.clamp(scene.start_ms, scene.end_ms().saturating_sub(1));
    let backdrop = scene.backdrop();
    let opacity = clip_opacity(backdrop, t_in);
    let slide = (backdrop.exit.kind == AnimKind::MoveToNext).then(|| {
        let from = backdrop.end_ms() - backdrop.exit.duration_ms;
        backdrop
            .exit
            .curve
            .apply(progress(t_in, from, backdrop.exit.duration_ms))
    });
    let slide = slide.filter(|p| *p > 0.0);

    let mut emphases = Vec::new();
    let mut annotations = Vec::new();
    let mut caption = None;
    for clip in scene.clips.iter().filter(|c| c.contains(t_in)) {
        match &clip.target {
            ClipTarget::SceneBackdrop => {}
            ClipTarget::Emphasis(id) => {
                let anim = clip.emphasis_anim.unwrap_or_else(AnimationSpec::none);
                let up = anim
                    .curve
                    .apply(progress(t_in, clip.start_ms, anim.duration_ms));
                let down_from = clip.end_ms().saturating_sub(anim.duration_ms);
                let down = anim
                    .curve
                    .apply(progress(t_in, down_from, anim.duration_ms));
                let p = up.min(1.0 - down);
                let sf = scale_of(id);
                let state = EmphasisState {
                    emphasis_id: id.clone(),
                    scale: 1.0 + (sf - 1.0) * p,
                    shadow: p,
                };
                // A later link to the same element replaces an earlier one.
                emphases.retain(|e: &EmphasisState| e.emphasis_id != *id);
                emphases.push(state);
            }
            ClipTarget::Annotation(id) => {
                annotations.retain(|a: &OverlayState| a.id != *id);
                annotations.push(OverlayState {
                    id: id.clone(),
                    opacity: clip_opacity(clip, t_in),
                    offset: 0.0,
                });
            }
            ClipTarget::Caption(id) => {
                caption = Some(OverlayState {
                    id: id.clone(),
                    opacity: clip_opacity(clip, t_in),
                    offset: clip_offset(clip, t_in),
                });
            }
        }
    }
    FrameState {
        t_ms: t,
        scene_index: si,
        scene_id: scene.scene_id.clone(),
        opacity,
        slide,
        emphases,
        annotations,
        caption,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::script::{
        NarrationCategory, NarrationSegment, Settings, Span, DEFAULT_SCALE_FACTOR,
    };

    fn segment(id: &str, links: &[&str], category: NarrationCategory) -> NarrationSegment {
        NarrationSegment {
            id: id.into(),
            text: "x".into(),
            category,
            linked_emphasis: links.iter().map(|s| s.to_string()).collect(),
            interactive: false,
        }
    }

    fn two_segment_script() -> (DesignScript, BTreeMap<String, u64>) {
        let src = "df = load()";
        let (mut scene, e) = Scene::new(0)
            .add_emphasis(src, Span::new(5, 11), "Load it")
            .unwrap();
        scene.segments = vec![
            segment("g0-1", &[], NarrationCategory::Background),
            segment("g0-2", &[&e.id], NarrationCategory::CodeInterpretation),
        ];
        let script = DesignScript {
            scenes: vec![scene],
            settings: Settings::default(),
            ..DesignScript::default()
        };
        let durations = BTreeMap::from([("g0-1".to_string(), 4000), ("g0-2".to_string(), 3000)]);
        (script, durations)
    }

    #[test]
    fn scene_duration_and_sync() {
        let (script, durations) = two_segment_script();
        let tl = compile_timeline(&script, &durations).unwrap();
        assert_eq!(tl.total_ms, 8300);
        assert_eq!(tl.scenes[0].duration_ms, 8300);
        let emph = tl.scenes[0]
            .clips
            .iter()
            .find(|c| matches!(c.target, ClipTarget::Emphasis(_)))
            .unwrap();
        assert_eq!(emph.start_ms, 4800);
        assert_eq!(tl.scenes[0].segments[1].start_ms, 4800);
        assert_eq!(tl.frame_count(), 249);
    }

    #[test]
    fn empty_scene_is_enter_plus_exit() {
        let script = DesignScript {
            scenes: vec![Scene::new(3)],
            ..DesignScript::default()
        };
        let tl = compile_timeline(&script, &BTreeMap::new()).unwrap();
        assert_eq!(tl.total_ms, 1000);
    }

    #[test]
    fn missing_audio() {
        let (script, _) = two_segment_script();
        assert_eq!(
            compile_timeline(&script, &BTreeMap::new()),
            Err(TimelineError::MissingAudio("g0-1".into()))
        );
    }

    #[test]
    fn curve_endpoints() {
        let (script, durations) = two_segment_script();
        let tl = compile_timeline(&script, &durations).unwrap();
        let scale = |_: &str| DEFAULT_SCALE_FACTOR;
        let at0 = frame_state(&tl, scale, 0).unwrap();
        assert_eq!(at0.opacity, 0.0);
        let peak = frame_state(&tl, scale, 4800 + 300).unwrap();
        assert_eq!(peak.emphases[0].scale, 1.25);
        assert_eq!(peak.annotations[0].opacity, 1.0);
        let start = frame_state(&tl, scale, 4800).unwrap();
        assert_eq!(start.emphases[0].scale, 1.0);
        assert_eq!(
            frame_state(&tl, scale, 8300),
            Err(TimelineError::OutOfRange {
                t_ms: 8300,
                total_ms: 8300
            })
        );
        let last = frame_state(&tl, scale, 8299).unwrap();
        assert!(last.opacity < 0.01);
    }

    #[test]
    fn scenes_slide_into_each_other() {
        let (mut script, mut durations) = two_segment_script();
        let mut second = Scene::new(1);
        second.segments = vec![segment("g1-1", &[], NarrationCategory::Transition)];
        script.scenes.push(second);
        durations.insert("g1-1".into(), 1000);
        let tl = compile_timeline(&script, &durations).unwrap();
        assert_eq!(tl.scenes[1].start_ms, 8300);
        assert_eq!(tl.total_ms, 8300 + 2000);
        let b0 = tl.scenes[0].backdrop();
        assert_eq!(b0.exit, AnimationSpec::new(AnimKind::MoveToNext, 400));
        let mid = frame_state(&tl, |_| 1.25, 8300 - 200).unwrap();
        assert_eq!(mid.slide, Some(0.5));
        let arrived = frame_state(&tl, |_| 1.25, 8300).unwrap();
        assert_eq!(arrived.opacity, 1.0);
        let caption = tl.scenes[1]
            .clips
            .iter()
            .find(|c| matches!(c.target, ClipTarget::Caption(_)))
            .unwrap();
        assert_eq!(caption.enter.kind, AnimKind::MoveToNext);
        let preview = tl.only_scene("s1").unwrap();
        assert_eq!(preview.total_ms, 2000);
        assert_eq!(preview.scenes[0].segments[0].start_ms, 500);
        assert!(matches!(
            tl.only_scene("s9"),
            Err(TimelineError::UnknownScene(_))
        ));
    }
}
