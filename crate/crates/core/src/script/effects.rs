use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::NarrationCategory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Effect {
    FadeIn,
    FadeOut,
    MoveToNext,
    SnippetScaling,
    SnippetShadow,
    AnnotationFadeIn,
    AnnotationFadeOut,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectSet(BTreeSet<Effect>);

impl EffectSet {
    pub fn of(effects: &[Effect]) -> Self {
        assert!(!effects.is_empty(), "an effect set is never empty");
        EffectSet(effects.iter().copied().collect())
    }

    pub fn contains(&self, effect: Effect) -> bool {
        self.0.contains(&effect)
    }

    pub fn iter(&self) -> impl Iterator<Item = Effect> + '_ {
        self.0.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Default visual effects for each narration context.
///
/// Code interpretation gets the snippet and annotation effects; the other
/// informative categories simply fade in. Transitions move to the next
/// scene, directions fade in, and questions fade in and out.
pub fn effects_for(category: NarrationCategory) -> EffectSet {
    use Effect::*;
    use NarrationCategory as C;
    match category {
        C::CodeInterpretation => EffectSet::of(&[
            SnippetShadow,
            SnippetScaling,
            AnnotationFadeIn,
            AnnotationFadeOut,
        ]),
        C::Background | C::ResultDescription | C::Insight | C::Conclusion => {
            EffectSet::of(&[FadeIn])
        }
        C::Transition => EffectSet::of(&[MoveToNext]),
        C::Direction => EffectSet::of(&[FadeIn]),
        C::Question => EffectSet::of(&[FadeIn, FadeOut]),
    }
}
