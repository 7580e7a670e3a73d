//! Canonical `.nps.json` encoding.
//!
//! Keys are sorted (the JSON map is ordered), ids keep script order, and
//! the output always ends with a newline, so equal scripts serialize to
//! identical bytes.

use super::{DesignScript, ScriptError};

pub const SCRIPT_VERSION: u32 = 1;
pub const SCRIPT_EXTENSION: &str = "nps.json";

pub fn serialize(script: &DesignScript) -> Result<Vec<u8>, ScriptError> {
    script.validate()?;
    let value = serde_json::to_value(script).map_err(|e| ScriptError::SchemaViolation {
        path: "$".into(),
        message: e.to_string(),
    })?;
    let mut bytes = serde_json::to_vec_pretty(&value).expect("JSON values always serialize");
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn deserialize(bytes: &[u8]) -> Result<DesignScript, ScriptError> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    let script: DesignScript = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ScriptError::SchemaViolation {
            path: if path == "." { "$".into() } else { path },
            message: e.into_inner().to_string(),
        }
    })?;
    script.validate()?;
    Ok(script)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_script_round_trips() {
        let script = DesignScript::default();
        let bytes = serialize(&script).unwrap();
        assert_eq!(deserialize(&bytes).unwrap(), script);
        let minimal = deserialize(br#"{"nps": 1, "scenes": []}"#).unwrap();
        assert!(minimal.scenes.is_empty());
        assert_eq!(minimal.settings.fps, 30);
    }

    #[test]
    fn keys_are_sorted() {
        let text = String::from_utf8(serialize(&DesignScript::default()).unwrap()).unwrap();
        let nps = text.find("\"nps\"").unwrap();
        let scenes = text.find("\"scenes\"").unwrap();
        let settings = text.find("\"settings\"").unwrap();
        assert!(nps < scenes && scenes < settings);
    }

    #[test]
    fn too_many_links_reports_path() {
        let doc = br#"{"nps": 1, "scenes": [{"id": "s0", "cell_index": 0,
            "emphases": [
              {"id": "e0-1", "cell_index": 0, "span": {"start": 0, "end": 1}, "annotation": "a"},
              {"id": "e0-2", "cell_index": 0, "span": {"start": 1, "end": 2}, "annotation": "b"},
              {"id": "e0-3", "cell_index": 0, "span": {"start": 2, "end": 3}, "annotation": "c"}],
            "segments": [{"id": "g0-1", "text": "Hi.", "category": "Background",
                          "linked_emphasis": ["e0-1", "e0-2", "e0-3"]}]}]}"#;
        match deserialize(doc) {
            Err(ScriptError::SchemaViolation { path, .. }) => {
                assert_eq!(path, "scenes[0].segments[0].linked_emphasis")
            }
            other => panic!("expected schema violation, got {other:?}"),
        }
    }

    #[test]
    fn type_errors_report_path() {
        let doc = br#"{"nps": 1, "scenes": [{"id": "s0", "cell_index": "zero"}]}"#;
        match deserialize(doc) {
            Err(ScriptError::SchemaViolation { path, .. }) => {
                assert_eq!(path, "scenes[0].cell_index")
            }
            other => panic!("expected schema violation, got {other:?}"),
        }
    }

    #[test]
    fn wrong_version() {
        assert!(matches!(
            deserialize(br#"{"nps": 2, "scenes": []}"#),
            Err(ScriptError::SchemaViolation { path, .. }) if path == "nps"
        ));
    }
}
