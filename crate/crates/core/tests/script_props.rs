mod support;

use proptest::prelude::*;

use notecast_core::llm::{LlmBridge, NarrationResult};
use notecast_core::narration::{apply_narration, make_interactive};
use notecast_core::script::{
    classify_segment, deserialize, serialize, NarrationCategory, Span, MAX_LINKS,
};
use support::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn generated_scripts_validate((script, _) in arb_script()) {
        prop_assert!(script.validate().is_ok(), "{:?}", script.validate());
    }

    #[test]
    fn serialization_round_trips((script, _) in arb_script()) {
        let bytes = serialize(&script).unwrap();
        let back = deserialize(&bytes).unwrap();
        prop_assert_eq!(&back, &script);
        prop_assert_eq!(serialize(&back).unwrap(), bytes);
    }

    #[test]
    fn add_emphasis_keeps_existing((script, _) in arb_script(), start in 0usize..80, len in 1usize..10) {
        let source = "x".repeat(100);
        for scene in &script.scenes {
            if let Ok((next, added)) = scene.add_emphasis(&source, Span::new(start, start + len), "note") {
                prop_assert_eq!(&next.emphases[..scene.emphases.len()], &scene.emphases[..]);
                prop_assert_eq!(next.emphases.len(), scene.emphases.len() + 1);
                prop_assert!(scene.emphases.iter().all(|e| e.id != added.id));
            }
        }
    }

    #[test]
    fn questions_classify_as_questions(words in "[A-Za-z][A-Za-z ,']{0,40}") {
        let text = format!("{words}?");
        prop_assert_eq!(classify_segment(&text).unwrap(), NarrationCategory::Question);
    }

    #[test]
    fn interactive_keeps_segment_ids((script, _) in arb_script(), pick in any::<prop::sample::Index>()) {
        let segs: Vec<(String, String, bool)> = script
            .scenes
            .iter()
            .flat_map(|s| s.segments.iter().map(move |g| (s.id.clone(), g.id.clone(), g.interactive)))
            .collect();
        prop_assume!(!segs.is_empty());
        let (scene, seg, was) = &segs[pick.index(segs.len())];
        let bridge = LlmBridge::stub();
        match make_interactive(&script, scene, seg, &bridge) {
            Ok(next) => {
                prop_assert!(!was);
                let ids = |s: &notecast_core::script::DesignScript| {
                    s.scenes.iter().flat_map(|x| x.segments.iter().map(|g| g.id.clone())).collect::<Vec<_>>()
                };
                prop_assert_eq!(ids(&next), ids(&script));
                for g in next.scenes.iter().flat_map(|s| &s.segments) {
                    prop_assert!(!g.interactive || g.category == NarrationCategory::Question);
                }
            }
            Err(_) => prop_assert!(was),
        }
    }

    #[test]
    fn narration_keeps_emphases_and_bounds_links((script, _) in arb_script(), text in "[a-z ]{1,30}") {
        let sources: Vec<String> = (0..=script.scenes.last().map_or(0, |s| s.cell_index))
            .map(|_| format!("data = frame.query('{}')", "y".repeat(60)))
            .collect();
        let nb = code_notebook(&sources);
        let results: Vec<NarrationResult> = script
            .scenes
            .iter()
            .map(|s| NarrationResult {
                id: s.cell_index,
                narration: format!("We use \"yyyy\" here. {text}. Then \"yyy\" again."),
                inputs: vec![],
            })
            .collect();
        let next = apply_narration(&script, &results, &nb).unwrap();
        for (a, b) in script.scenes.iter().zip(&next.scenes) {
            prop_assert_eq!(&a.emphases, &b.emphases);
            for g in &b.segments {
                prop_assert!(g.linked_emphasis.len() <= MAX_LINKS);
            }
        }
    }
}
