//! Pulling JSON out of chat replies and checking it against the expected
//! output shapes.

use serde_json::Value;

use super::{EmphasisContext, LlmError, LogicEntry, NarrationResult};

/// Finds the JSON payload of a reply: the first fenced block if there is
/// one, else the widest bracketed region of the raw body.
pub fn extract_json(reply: &str) -> Option<String> {
    if let Some(block) = first_fenced_block(reply) {
        let block = block.trim();
        if block.starts_with('[') || block.starts_with('{') {
            return Some(block.to_string());
        }
    }
    let open = reply.find(['[', '{'])?;
    let close_char = if reply[open..].starts_with('[') {
        ']'
    } else {
        '}'
    };
    let close = reply.rfind(close_char)?;
    (close > open).then(|| reply[open..=close].to_string())
}

fn first_fenced_block(reply: &str) -> Option<&str> {
    let start = reply.find("```")?;
    let after = &reply[start + 3..];
    // Skip the info string (```json).
    let body_start = after.find('\n')? + 1;
    let body = &after[body_start..];
    let end = body.find("```")?;
    Some(&body[..end])
}

/// Light repairs for near-JSON: lines holding only an ellipsis and trailing
/// commas before a closing bracket are dropped.
pub fn repair_json(text: &str) -> String {
    let kept: Vec<&str> = text
        .lines()
        .filter(|l| !matches!(l.trim(), "..." | "…" | "...," | "// ..."))
        .collect();
    let joined = kept.join("\n");
    let mut out = String::with_capacity(joined.len());
    let mut in_string = false;
    let mut escaped = false;
    let chars: Vec<char> = joined.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        if in_string {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            continue;
        }
        if c == '"' {
            in_string = true;
        }
        if c == ',' {
            let next = chars[i + 1..].iter().find(|n| !n.is_whitespace());
            if matches!(next, Some(']') | Some('}')) {
                continue;
            }
        }
        out.push(c);
    }
    out
}

/// Parses a reply into JSON, trying the raw payload before the repaired one.
pub fn parse_reply(reply: &str) -> Result<Value, LlmError> {
    let Some(payload) = extract_json(reply) else {
        return Err(schema("$", "no JSON found in reply"));
    };
    match serde_json::from_str(&payload) {
        Ok(v) => Ok(v),
        Err(first) => serde_json::from_str(&repair_json(&payload))
            .map_err(|_| schema("$", &format!("invalid JSON: {first}"))),
    }
}

fn schema(path: &str, message: &str) -> LlmError {
    LlmError::SchemaInvalid {
        path: path.to_string(),
        message: message.to_string(),
    }
}

fn as_array<'a>(value: &'a Value, what: &str) -> Result<&'a Vec<Value>, LlmError> {
    value
        .as_array()
        .ok_or_else(|| schema("$", &format!("expected an array of {what}")))
}

fn field<'a>(obj: &'a Value, path: &str, key: &str) -> Result<&'a Value, LlmError> {
    obj.get(key)
        .ok_or_else(|| schema(&format!("{path}.{key}"), "missing key"))
}

fn id_of(obj: &Value, path: &str) -> Result<usize, LlmError> {
    field(obj, path, "id")?
        .as_u64()
        .map(|n| n as usize)
        .ok_or_else(|| schema(&format!("{path}.id"), "expected a non-negative integer"))
}

fn string_of(obj: &Value, path: &str, key: &str) -> Result<String, LlmError> {
    field(obj, path, key)?
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| schema(&format!("{path}.{key}"), "expected a string"))
}

fn strings_of(obj: &Value, path: &str, key: &str) -> Result<Vec<String>, LlmError> {
    let arr = field(obj, path, key)?
        .as_array()
        .ok_or_else(|| schema(&format!("{path}.{key}"), "expected an array of strings"))?;
    arr.iter()
        .enumerate()
        .map(|(i, v)| {
            v.as_str()
                .map(str::to_string)
                .ok_or_else(|| schema(&format!("{path}.{key}[{i}]"), "expected a string"))
        })
        .collect()
}

/// Checks a logic-flow reply: one object per expected id, in order, with
/// `id`, `description`, `inputs` and `outputs`.
pub fn validate_logic_entries(
    value: &Value,
    expected_ids: &[usize],
) -> Result<Vec<LogicEntry>, LlmError> {
    let items = as_array(value, "cell entries")?;
    let mut out = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let path = format!("$[{i}]");
        if !item.is_object() {
            return Err(schema(&path, "expected an object"));
        }
        let id = id_of(item, &path)?;
        let description = string_of(item, &path, "description")?;
        let inputs = strings_of(item, &path, "inputs")?;
        let outputs = strings_of(item, &path, "outputs")?;
        match expected_ids.get(i) {
            Some(&want) if want == id => {}
            Some(&want) => {
                return Err(schema(
                    &format!("{path}.id"),
                    &format!("expected {want}, found {id}"),
                ));
            }
            None => return Err(schema(&path, &format!("unexpected entry for id {id}"))),
        }
        out.push(LogicEntry {
            id,
            description,
            inputs,
            outputs,
        });
    }
    if out.len() < expected_ids.len() {
        return Err(schema(
            &format!("$[{}]", out.len()),
            &format!("missing entry for id {}", expected_ids[out.len()]),
        ));
    }
    Ok(out)
}

/// Checks a narration reply: one non-empty narration per expected id, in
/// order. The echoed `inputs` may be an object, an array or absent.
pub fn validate_narrations(
    value: &Value,
    expected_ids: &[usize],
) -> Result<Vec<NarrationResult>, LlmError> {
    let items: Vec<&Value> = match value {
        Value::Object(_) => vec![value],
        Value::Array(a) => a.iter().collect(),
        _ => return Err(schema("$", "expected an array of narrations")),
    };
    let mut out = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let path = format!("$[{i}]");
        if !item.is_object() {
            return Err(schema(&path, "expected an object"));
        }
        let id = id_of(item, &path)?;
        let narration = string_of(item, &path, "narration")?;
        if narration.trim().is_empty() {
            return Err(schema(&format!("{path}.narration"), "empty narration"));
        }
        let inputs = match item.get("inputs") {
            None | Some(Value::Null) => Vec::new(),
            Some(v @ Value::Object(_)) => vec![context_of(v, &format!("{path}.inputs"))?],
            Some(Value::Array(a)) => a
                .iter()
                .enumerate()
                .map(|(k, v)| context_of(v, &format!("{path}.inputs[{k}]")))
                .collect::<Result<_, _>>()?,
            Some(_) => {
                return Err(schema(
                    &format!("{path}.inputs"),
                    "expected an object or array",
                ))
            }
        };
        match expected_ids.get(i) {
            Some(&want) if want == id => {}
            Some(&want) => {
                return Err(schema(
                    &format!("{path}.id"),
                    &format!("expected {want}, found {id}"),
                ));
            }
            None => return Err(schema(&path, &format!("unexpected entry for id {id}"))),
        }
        out.push(NarrationResult {
            id,
            narration,
            inputs,
        });
    }
    if out.len() < expected_ids.len() {
        return Err(schema(
            &format!("$[{}]", out.len()),
            &format!("missing narration for id {}", expected_ids[out.len()]),
        ));
    }
    Ok(out)
}

fn context_of(v: &Value, path: &str) -> Result<EmphasisContext, LlmError> {
    if !v.is_object() {
        return Err(schema(path, "expected an object"));
    }
    Ok(EmphasisContext {
        code_snippet: string_of(v, path, "code_snippet")?,
        annotation: string_of(v, path, "annotation")?,
    })
}

/// A question-transform reply: a question ending in `?` followed by an
/// answer, as plain text.
pub fn validate_question(reply: &str) -> Result<String, LlmError> {
    let text = reply.trim();
    let text = text
        .strip_prefix("```")
        .and_then(|t| t.strip_suffix("```"))
        .map(|t| t.trim_start_matches(|c: char| c.is_alphanumeric()).trim())
        .unwrap_or(text);
    let Some(q) = text.find('?') else {
        return Err(schema("$", "no question mark in reply"));
    };
    if text[..q].trim().is_empty() {
        return Err(schema("$", "empty question"));
    }
    if text[q + 1..].trim().is_empty() {
        return Err(schema("$", "question has no answer"));
    }
    Ok(text.to_string())
}
