//! Generators and oracles shared by the property tests and the acceptance
//! target.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use proptest::collection::vec;
use proptest::prelude::*;
use serde_json::json;

use notecast_core::notebook::{parse_notebook, Notebook};
use notecast_core::script::{
    DesignScript, EmphasisElement, NarrationCategory, NarrationSegment, Resolution, Scene,
    Settings, Span, SCRIPT_VERSION,
};
use notecast_core::timeline::{compile_timeline, ClipTarget, Timeline};

/// nbformat 4 bytes for `(cell_type, source)` pairs.
pub fn notebook_bytes(cells: &[(&str, String)]) -> Vec<u8> {
    let cells: Vec<_> = cells
        .iter()
        .map(|(kind, source)| {
            let mut c = json!({"cell_type": kind, "metadata": {}, "source": source});
            if *kind == "code" {
                c["outputs"] = json!([]);
                c["execution_count"] = json!(null);
            }
            c
        })
        .collect();
    serde_json::to_vec(&json!({"cells": cells, "metadata": {}, "nbformat": 4, "nbformat_minor": 5}))
        .unwrap()
}

pub fn code_notebook(sources: &[String]) -> Notebook {
    let cells: Vec<_> = sources.iter().map(|s| ("code", s.clone())).collect();
    parse_notebook(&notebook_bytes(&cells)).unwrap()
}

// Straight-line programs over a small name pool.

pub const NAMES: [&str; 5] = ["a", "b", "c", "d", "e"];

#[derive(Debug, Clone)]
pub enum Stmt {
    /// `target = f(uses...)`, or `target = 1` with no uses.
    Assign { target: usize, uses: Vec<usize> },
    /// `print(uses...)`
    Print { uses: Vec<usize> },
}

impl Stmt {
    fn render(&self) -> String {
        let args = |uses: &[usize]| {
            uses.iter()
                .map(|&u| NAMES[u])
                .collect::<Vec<_>>()
                .join(", ")
        };
        match self {
            Stmt::Assign { target, uses } if uses.is_empty() => format!("{} = 1", NAMES[*target]),
            Stmt::Assign { target, uses } => format!("{} = max({}, 0)", NAMES[*target], args(uses)),
            Stmt::Print { uses } => format!("print({})", args(uses)),
        }
    }
}

pub fn render_cell(stmts: &[Stmt]) -> String {
    stmts
        .iter()
        .map(Stmt::render)
        .collect::<Vec<_>>()
        .join("\n")
}

fn arb_stmt(pool: usize) -> impl Strategy<Value = Stmt> {
    prop_oneof![
        (0..pool, vec(0..pool, 0..3)).prop_map(|(target, uses)| Stmt::Assign { target, uses }),
        vec(0..pool, 1..3).prop_map(|uses| Stmt::Print { uses }),
    ]
}

/// Up to 6 cells of up to 4 statements over at most 5 names.
pub fn arb_program() -> impl Strategy<Value = Vec<Vec<Stmt>>> {
    (1..=NAMES.len()).prop_flat_map(|pool| vec(vec(arb_stmt(pool), 1..5), 1..=6))
}

/// Replays bindings cell by cell. A cell consumes a name when it reads it
/// before binding it itself; the edge comes from the latest earlier cell
/// that bound it.
pub fn oracle_edges(program: &[Vec<Stmt>]) -> BTreeSet<(usize, usize, String)> {
    let mut bound_in: BTreeMap<usize, usize> = BTreeMap::new();
    let mut edges = BTreeSet::new();
    for (cell, stmts) in program.iter().enumerate() {
        let mut local = BTreeSet::new();
        for stmt in stmts {
            let (uses, target) = match stmt {
                Stmt::Assign { target, uses } => (uses, Some(*target)),
                Stmt::Print { uses } => (uses, None),
            };
            for u in uses {
                if !local.contains(u) {
                    if let Some(&from) = bound_in.get(u) {
                        edges.insert((from, cell, NAMES[*u].to_string()));
                    }
                }
            }
            if let Some(t) = target {
                local.insert(t);
            }
        }
        for t in local {
            bound_in.insert(t, cell);
        }
    }
    edges
}

// Design scripts.

const WORDS: [&str; 12] = [
    "we", "filter", "the", "rows", "by", "country", "and", "plot", "daily", "cases", "then", "sum",
];

fn arb_text() -> impl Strategy<Value = String> {
    vec(proptest::sample::select(WORDS.to_vec()), 1..12).prop_map(|w| {
        let mut s = w.join(" ");
        s.push('.');
        s
    })
}

fn arb_category() -> impl Strategy<Value = NarrationCategory> {
    proptest::sample::select(NarrationCategory::ALL.to_vec())
}

/// Plan for one scene: emphasis spans and segments with link choices.
#[derive(Debug, Clone)]
struct ScenePlan {
    gap: usize,
    spans: Vec<(usize, usize)>,
    annotations: Vec<String>,
    scales: Vec<f64>,
    segments: Vec<(String, NarrationCategory, bool, Vec<usize>, u64)>,
    include_outputs: bool,
}

fn arb_scene_plan() -> impl Strategy<Value = ScenePlan> {
    (
        1usize..4,
        vec((0usize..8, 1usize..6), 0..4),
        vec(arb_text(), 4),
        vec(0.5f64..3.0, 4),
        vec(
            (
                arb_text(),
                arb_category(),
                any::<bool>(),
                vec(0usize..4, 0..3),
                0u64..20_000,
            ),
            0..5,
        ),
        any::<bool>(),
    )
        .prop_map(
            |(gap, raw, annotations, scales, segments, include_outputs)| {
                // Lay gaps and lengths end to end so spans never overlap.
                let mut at = 0;
                let spans = raw
                    .into_iter()
                    .map(|(skip, len)| {
                        let start = at + skip;
                        at = start + len;
                        (start, at)
                    })
                    .collect();
                ScenePlan {
                    gap,
                    spans,
                    annotations,
                    scales,
                    segments,
                    include_outputs,
                }
            },
        )
}

fn arb_settings() -> impl Strategy<Value = Settings> {
    (
        (1u32..4000, 1u32..4000),
        1u32..=120,
        0u64..2000,
        0u64..2000,
        0u64..2000,
        0u64..1000,
        0u64..1000,
        any::<bool>(),
    )
        .prop_map(
            |((width, height), fps, gap_ms, enter_ms, exit_ms, emphasis_ms, move_ms, captions)| {
                Settings {
                    resolution: Resolution { width, height },
                    fps,
                    voice: "default".into(),
                    gap_ms,
                    enter_ms,
                    exit_ms,
                    emphasis_ms,
                    move_ms,
                    captions,
                }
            },
        )
}

/// A valid script and an audio duration for each of its segments.
pub fn arb_script() -> impl Strategy<Value = (DesignScript, BTreeMap<String, u64>)> {
    (vec(arb_scene_plan(), 0..6), arb_settings()).prop_map(|(plans, settings)| {
        let mut cell = 0;
        let mut durations = BTreeMap::new();
        let scenes = plans
            .into_iter()
            .map(|plan| {
                cell += plan.gap;
                let mut scene = Scene::new(cell);
                scene.include_outputs = plan.include_outputs;
                for (k, &(start, end)) in plan.spans.iter().enumerate() {
                    scene.emphases.push(EmphasisElement {
                        id: format!("e{cell}-{}", k + 1),
                        cell_index: cell,
                        span: Span::new(start, end),
                        annotation: plan.annotations[k].clone(),
                        scale_factor: plan.scales[k],
                    });
                }
                for (k, (text, category, interactive, links, dur)) in
                    plan.segments.into_iter().enumerate()
                {
                    let id = format!("g{cell}-{}", k + 1);
                    let mut linked: Vec<String> = Vec::new();
                    for l in links {
                        if let Some(e) = scene.emphases.get(l) {
                            if !linked.contains(&e.id) {
                                linked.push(e.id.clone());
                            }
                        }
                    }
                    durations.insert(id.clone(), dur);
                    let interactive = interactive && category == NarrationCategory::Question;
                    scene.segments.push(NarrationSegment {
                        id,
                        text,
                        category,
                        linked_emphasis: linked,
                        interactive,
                    });
                }
                scene
            })
            .collect();
        (
            DesignScript {
                nps: SCRIPT_VERSION,
                scenes,
                settings,
            },
            durations,
        )
    })
}

// Timeline laws.

/// Smallest n with n * 1000 >= total_ms * fps.
pub fn ceil_frames(total_ms: u64, fps: u32) -> u64 {
    let need = total_ms as u128 * fps as u128;
    need.div_ceil(1000) as u64
}

pub fn check_partition(script: &DesignScript, tl: &Timeline) -> Result<(), String> {
    let sum: u64 = tl.scenes.iter().map(|s| s.duration_ms).sum();
    if sum != tl.total_ms {
        return Err(format!(
            "scene durations sum to {sum}, total is {}",
            tl.total_ms
        ));
    }
    let mut at = 0;
    for s in &tl.scenes {
        if s.start_ms != at {
            return Err(format!(
                "{} starts at {} instead of {at}",
                s.scene_id, s.start_ms
            ));
        }
        at += s.duration_ms;
    }
    let st = &script.settings;
    for (scene, s) in script.scenes.iter().zip(&tl.scenes) {
        let audio: u64 = s.segments.iter().map(|g| g.duration_ms).sum();
        let gaps = st.gap_ms * scene.segments.len().saturating_sub(1) as u64;
        let want = st.enter_ms + audio + gaps + st.exit_ms;
        if s.duration_ms != want {
            return Err(format!(
                "{} lasts {} ms, expected {want}",
                s.scene_id, s.duration_ms
            ));
        }
    }
    Ok(())
}

pub fn check_sync(script: &DesignScript, tl: &Timeline) -> Result<(), String> {
    for (scene, s) in script.scenes.iter().zip(&tl.scenes) {
        for seg in &scene.segments {
            let slot = s
                .segments
                .iter()
                .find(|g| g.segment_id == seg.id)
                .ok_or("segment has no slot")?;
            for eid in &seg.linked_emphasis {
                let clip = s.clips.iter().find(|c| {
                    c.target == ClipTarget::Emphasis(eid.clone()) && c.start_ms == slot.start_ms
                });
                match clip {
                    Some(c) if c.emphasis_anim.is_some() => {}
                    Some(_) => return Err(format!("{eid} clip has no emphasis animation")),
                    None if slot.duration_ms == 0 => {}
                    None => {
                        return Err(format!(
                            "{eid} has no clip at {} for {}",
                            slot.start_ms, seg.id
                        ))
                    }
                }
            }
        }
        for c in &s.clips {
            if let ClipTarget::Emphasis(eid) = &c.target {
                let starts_a_link = scene.segments.iter().any(|seg| {
                    seg.linked_emphasis.contains(eid)
                        && s.segments
                            .iter()
                            .any(|g| g.segment_id == seg.id && g.start_ms == c.start_ms)
                });
                if !starts_a_link {
                    return Err(format!(
                        "{eid} clip at {} matches no linked segment",
                        c.start_ms
                    ));
                }
            }
        }
    }
    Ok(())
}

pub fn check_frame_count(tl: &Timeline) -> Result<(), String> {
    let want = ceil_frames(tl.total_ms, tl.fps);
    if tl.frame_count() != want {
        return Err(format!(
            "{} frames for {} ms at {} fps, expected {want}",
            tl.frame_count(),
            tl.total_ms,
            tl.fps
        ));
    }
    Ok(())
}

/// Lengthening one segment by `delta` moves every later start in its scene
/// and every later scene by exactly `delta`, and nothing earlier.
pub fn check_delta_shift(
    script: &DesignScript,
    durations: &BTreeMap<String, u64>,
    segment: &str,
    delta: u64,
) -> Result<(), String> {
    let before = compile_timeline(script, durations).map_err(|e| e.to_string())?;
    let mut longer = durations.clone();
    *longer.get_mut(segment).ok_or("unknown segment")? += delta;
    let after = compile_timeline(script, &longer).map_err(|e| e.to_string())?;

    let (si, gi) = before
        .scenes
        .iter()
        .enumerate()
        .find_map(|(i, s)| {
            s.segments
                .iter()
                .position(|g| g.segment_id == segment)
                .map(|k| (i, k))
        })
        .ok_or("segment not in timeline")?;
    if after.total_ms != before.total_ms + delta {
        return Err(format!(
            "total moved from {} to {}",
            before.total_ms, after.total_ms
        ));
    }
    for (i, (b, a)) in before.scenes.iter().zip(&after.scenes).enumerate() {
        let scene_shift = if i > si { delta } else { 0 };
        if a.start_ms != b.start_ms + scene_shift {
            return Err(format!(
                "{} start moved by {}",
                b.scene_id,
                a.start_ms - b.start_ms
            ));
        }
        for (k, (gb, ga)) in b.segments.iter().zip(&a.segments).enumerate() {
            let shift = if i > si || (i == si && k > gi) {
                delta
            } else {
                0
            };
            if ga.start_ms != gb.start_ms + shift {
                return Err(format!(
                    "{} moved by {} instead of {shift}",
                    gb.segment_id,
                    ga.start_ms - gb.start_ms
                ));
            }
        }
    }
    Ok(())
}

/// All timeline laws for one script, the shift applied to its first
/// segment.
pub fn check_timeline_laws(
    script: &DesignScript,
    durations: &BTreeMap<String, u64>,
    delta: u64,
) -> Result<(), String> {
    let tl = compile_timeline(script, durations).map_err(|e| e.to_string())?;
    check_partition(script, &tl)?;
    check_sync(script, &tl)?;
    check_frame_count(&tl)?;
    if let Some(first) = script.scenes.iter().flat_map(|s| &s.segments).next() {
        check_delta_shift(script, durations, &first.id, delta)?;
    }
    Ok(())
}

// End-to-end run on the COVID fixture.

pub const CONFIRMED: &str = "Case_Type == 'Confirmed'";
pub const GERMANY: &str = "Country_Region == 'Germany'";
pub const CONFIRMED_NOTE: &str = "Filter out the confirmed cases";
pub const GERMANY_NOTE: &str = "Filter out data for Germany";

pub fn fixture_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
}

pub struct E2eRun {
    pub script: DesignScript,
    pub timeline: Timeline,
    pub manifest: notecast_core::render::Manifest,
    /// (time, frame file index, raw-pixel hash, PNG bytes) for t = 0, the
    /// first emphasis start and the last instant of its scene.
    pub probes: Vec<(u64, u64, String, Vec<u8>)>,
    pub audio_samples: usize,
    pub png_count: u64,
    pub elapsed: std::time::Duration,
}

/// Stub model, silent voice, image-sequence output into `out`.
pub fn covid_e2e(out: &std::path::Path, width: u32, height: u32, fps: u32) -> E2eRun {
    use notecast_core::llm::LlmBridge;
    use notecast_core::pipeline::{self, BuildRequest};
    use notecast_core::render::{
        frame_file_name, frame_hash, render_frame, OutputMode, RenderAssets, AUDIO_FILE,
    };
    use notecast_core::tts::{decode_wav, Synthesizer, VoiceSpec};

    let began = std::time::Instant::now();
    let nb = pipeline::read_notebook(&fixture_path("covid.ipynb")).unwrap();
    let bridge = LlmBridge::stub();
    let flow = pipeline::logic_flow(&nb, Some(&bridge)).unwrap();
    let settings = Settings {
        resolution: Resolution { width, height },
        fps,
        ..Settings::default()
    };
    let mut script = pipeline::initial_script(&flow, settings);
    let source = nb.cells[3].source.clone();
    for (needle, note) in [(CONFIRMED, CONFIRMED_NOTE), (GERMANY, GERMANY_NOTE)] {
        let at = source.find(needle).unwrap();
        let start = source[..at].chars().count();
        let span = Span::new(start, start + needle.chars().count());
        script = script
            .with_scene("s3", |s| Ok(s.add_emphasis(&source, span, note)?.0))
            .unwrap();
    }
    let script = pipeline::narrate(&script, &nb, &bridge).unwrap();
    let synth = Synthesizer::offline();
    let voice = VoiceSpec::silence("default");
    let mode = OutputMode::ImageSequence(out.to_path_buf());
    let (timeline, artifact) = pipeline::build(&BuildRequest {
        script: &script,
        notebook: &nb,
        flow: &flow,
        synth: &synth,
        voice: &voice,
        mode: &mode,
        scene: None,
    })
    .unwrap();
    let elapsed = began.elapsed();

    let s3 = timeline.scene("s3").unwrap();
    let emphasis_start = s3
        .clips
        .iter()
        .filter(|c| matches!(c.target, ClipTarget::Emphasis(_)))
        .map(|c| c.start_ms)
        .min()
        .unwrap();
    let assets = RenderAssets::new(&script, &nb, Some(&flow)).unwrap();
    let probes = [0, emphasis_start, s3.end_ms() - 1]
        .into_iter()
        .map(|t| {
            // The first frame shown at or after t.
            let i = (t as u128 * fps as u128).div_ceil(1000) as u64;
            let i = i.min(timeline.frame_count() - 1);
            let png = std::fs::read(out.join(frame_file_name(i))).unwrap();
            let hash = frame_hash(&render_frame(&timeline, t, &assets).unwrap());
            (t, i, hash, png)
        })
        .collect();
    let audio_samples = decode_wav(&std::fs::read(out.join(AUDIO_FILE)).unwrap())
        .unwrap()
        .len();
    let png_count = std::fs::read_dir(out)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .ends_with(".png")
        })
        .count() as u64;
    E2eRun {
        script,
        timeline,
        manifest: artifact.manifest,
        probes,
        audio_samples,
        png_count,
        elapsed,
    }
}
