//! Rule-based narration classification.
//!
//! Rules are tried in a fixed order: question mark, leading transition cue,
//! attention cue, code reference, then the cue lexicons of the remaining
//! informative categories. Anything unmatched counts as background.

use super::{NarrationCategory, ScriptError};
use crate::pylex::{self, TokenKind};

const TRANSITION_CUES: &[&str] = &[
    "next",
    "now",
    "so the next",
    "so now",
    "we started with",
    "focusing on",
    "by further",
    "moving on",
];

const DIRECTION_CUES: &[&str] = &[
    "pay close attention",
    "pay attention",
    "special attention",
    "note that",
    "notice that",
    "keep in mind",
];

const BACKGROUND_CUES: &[&str] = &[
    "in this video",
    "in this tutorial",
    "in this notebook",
    "we're going to explore",
    "we are going to explore",
    "today we",
    "this dataset",
    "the dataset contains",
    "let's begin",
    "to begin",
    "welcome",
];

const RESULT_CUES: &[&str] = &[
    "the result",
    "we can see",
    "shows us",
    "as shown",
    "the output",
    "bar plot",
    "the plot",
    "the chart",
    "the table",
    "displays",
];

const INSIGHT_CUES: &[&str] = &[
    "no relationship",
    "relationship between",
    "correlat",
    "suggests",
    "indicates",
    "this means",
    "interesting",
    "trend",
    "we observe",
];

const CONCLUSION_CUES: &[&str] = &[
    "in conclusion",
    "in summary",
    "to summarize",
    "overall",
    "allows us to understand",
    "finally",
    "to wrap up",
    "we have seen",
];

const CODE_LEADS: &[&str] = &[
    "import ", "from ", "def ", "class ", "for ", "lambda ", "return ",
];

/// Classifies a sentence without cell context.
pub fn classify_segment(text: &str) -> Result<NarrationCategory, ScriptError> {
    classify_segment_in(text, None)
}

/// Classifies a sentence; with a cell source, naming one of the cell's
/// distinctive identifiers also counts as code interpretation.
pub fn classify_segment_in(
    text: &str,
    cell_source: Option<&str>,
) -> Result<NarrationCategory, ScriptError> {
    let text = text.trim();
    if text.is_empty() {
        return Err(ScriptError::EmptyText);
    }
    let lower = text.to_lowercase();
    let lead = lower.trim_start_matches(|c: char| !c.is_alphanumeric());

    if text.ends_with('?') {
        return Ok(NarrationCategory::Question);
    }
    if TRANSITION_CUES
        .iter()
        .any(|cue| starts_with_word(lead, cue))
    {
        return Ok(NarrationCategory::Transition);
    }
    if DIRECTION_CUES.iter().any(|cue| lower.contains(cue)) {
        return Ok(NarrationCategory::Direction);
    }
    if names_code(text, cell_source) {
        return Ok(NarrationCategory::CodeInterpretation);
    }
    let lexicons = [
        (BACKGROUND_CUES, NarrationCategory::Background),
        (RESULT_CUES, NarrationCategory::ResultDescription),
        (INSIGHT_CUES, NarrationCategory::Insight),
        (CONCLUSION_CUES, NarrationCategory::Conclusion),
    ];
    for (cues, category) in lexicons {
        if cues.iter().any(|cue| lower.contains(cue)) {
            return Ok(category);
        }
    }
    Ok(NarrationCategory::Background)
}

fn starts_with_word(text: &str, cue: &str) -> bool {
    text.strip_prefix(cue)
        .is_some_and(|rest| !rest.starts_with(|c: char| c.is_alphanumeric()))
}

fn names_code(text: &str, cell_source: Option<&str>) -> bool {
    let fragments = quoted_fragments(text);
    if fragments.iter().any(|f| looks_like_code(f)) {
        return true;
    }
    let Some(source) = cell_source else {
        return false;
    };
    let idents = distinctive_identifiers(source);
    if fragments.iter().any(|f| idents.iter().any(|i| i == f)) {
        return true;
    }
    words(text).any(|w| idents.iter().any(|i| i == w))
}

fn looks_like_code(fragment: &str) -> bool {
    let f = fragment.trim();
    if f.is_empty() {
        return false;
    }
    f.contains(['(', ')', '=', '[', ']', '_', '.'])
        || CODE_LEADS
            .iter()
            .any(|lead| f.to_lowercase().starts_with(lead))
}

/// Text between matching quote marks: "..", '..', `..`, *..* and curly quotes.
/// An apostrophe inside a word (we're) is not a quote.
pub fn quoted_fragments(text: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (start, c) = chars[i];
        let close = match c {
            '"' | '`' | '*' => Some(c),
            '“' => Some('”'),
            '‘' => Some('’'),
            '\'' if i == 0 || !chars[i - 1].1.is_alphanumeric() => Some('\''),
            _ => None,
        };
        let Some(close) = close else {
            i += 1;
            continue;
        };
        let body_start = start + c.len_utf8();
        let mut j = i + 1;
        let mut found = None;
        while j < chars.len() {
            let (pos, d) = chars[j];
            let word_internal =
                close == '\'' && chars.get(j + 1).is_some_and(|(_, n)| n.is_alphanumeric());
            if d == close && !word_internal {
                found = Some((pos, j));
                break;
            }
            j += 1;
        }
        match found {
            Some((end, j)) => {
                if end > body_start {
                    out.push(&text[body_start..end]);
                }
                i = j + 1;
            }
            None => i += 1,
        }
    }
    out
}

fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|w| !w.is_empty())
}

/// Identifiers worth recognising in prose: at least three characters and
/// either containing `_`/digits or used as a call.
fn distinctive_identifiers(source: &str) -> Vec<String> {
    let (tokens, _) = pylex::tokenize_lossy(source);
    let mut out: Vec<String> = Vec::new();
    for (i, t) in tokens.iter().enumerate() {
        if t.kind != TokenKind::Name || t.text.chars().count() < 3 {
            continue;
        }
        let called = tokens.get(i + 1).is_some_and(|n| n.is_op("("));
        let marked = t.text.contains('_') || t.text.chars().any(|c| c.is_ascii_digit());
        if (called || marked) && !out.contains(&t.text) {
            out.push(t.text.clone());
        }
    }
    out
}

/// Splits narration into sentences at terminal punctuation followed by
/// whitespace.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if matches!(c, '.' | '!' | '?') {
            if let Some(&(_, next)) = iter.peek() {
                if next.is_whitespace() {
                    let end = i + c.len_utf8();
                    let sentence = text[start..end].trim();
                    if !sentence.is_empty() {
                        out.push(sentence.to_string());
                    }
                    start = end;
                }
            }
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail.to_string());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use NarrationCategory as C;

    fn class(text: &str) -> C {
        classify_segment(text).unwrap()
    }

    #[test]
    fn taxonomy_examples() {
        let cases = [
            ("In this video, we're going to explore some real-world economic data using Python and pandas.", C::Background),
            ("Also, we use Seaborn for data visualization, so let me \"import Seaborn as SNS\".", C::CodeInterpretation),
            ("The result is a pandas dataframe that shows us the series ids.", C::ResultDescription),
            ("From this bar plot we can see that electronic accessories are purchased in the highest quantity.", C::ResultDescription),
            ("There is no relationship between cost of goods sold and ratings.", C::Insight),
            ("Performing EDA, such as univariate, bivariate, and multivariate analysis, allows us to understand the underlying patterns and relationships within the dataset.", C::Conclusion),
            ("We started with importing essential libraries, setting up our environment, and loading the dataset to prepare for the exploratory data analysis.", C::Transition),
            ("So the next thing we're going to do is try to pull in some data about multiple data series and then compare them side by side.", C::Transition),
            ("So now our next step in this session we have to get statistics about the new data set.", C::Transition),
            ("Pay close attention to the practical application of EDA techniques.", C::Direction),
            ("Special attention is given to the statistical summaries.", C::Direction),
            ("i'm going to show you how we'll do that here right?", C::Question),
            ("Does the cost of goods sold affect customer ratings?", C::Question),
        ];
        for (text, expected) in cases {
            assert_eq!(class(text), expected, "{text}");
        }
    }

    #[test]
    fn by_further_is_a_transition() {
        assert_eq!(
            class("By further narrowing our dataset to \"Region == 'Italy'\" we ensure that our analysis is geographically focused."),
            C::Transition
        );
    }

    #[test]
    fn cell_identifiers_count_as_code() {
        let src = "daily = germany.groupby('Date')['Cases'].sum()";
        assert_eq!(
            classify_segment_in("We aggregate with groupby over each date.", Some(src)),
            Ok(C::CodeInterpretation)
        );
        assert_eq!(
            classify_segment_in("We aggregate over each date.", Some(src)),
            Ok(C::Background)
        );
    }

    #[test]
    fn empty_text() {
        assert_eq!(classify_segment("   "), Err(ScriptError::EmptyText));
    }

    #[test]
    fn cue_must_be_a_whole_word() {
        assert_eq!(class("Nowhere is this clearer than here."), C::Background);
    }

    #[test]
    fn fragments_skip_apostrophes() {
        assert_eq!(
            quoted_fragments("we're using 'read_csv' and it's \"fast\""),
            vec!["read_csv", "fast"]
        );
        assert_eq!(quoted_fragments("use *head()* here"), vec!["head()"]);
    }

    #[test]
    fn sentence_splitting() {
        let text = "This cell initiates our data analysis by loading data from 'data.csv', focusing on the 'read_csv' function. Highlighted by the user, 'read_csv' is crucial for efficient data loading, preparing us for subsequent preprocessing steps.";
        let sentences = split_sentences(text);
        assert_eq!(sentences.len(), 2);
        assert!(sentences[0].ends_with("function."));
        assert_eq!(
            split_sentences("One! Two? Three"),
            vec!["One!", "Two?", "Three"]
        );
        assert!(split_sentences("  ").is_empty());
    }
}
