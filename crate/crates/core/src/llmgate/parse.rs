use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::LlmError;

/// JSON objects embedded in `text`, in order of their opening brace. Each
/// candidate is the longest valid JSON value starting at a `{`.
fn objects(text: &str) -> impl Iterator<Item = serde_json::Map<String, Value>> + '_ {
    text.char_indices()
        .filter(|(_, c)| *c == '{')
        .filter_map(move |(i, _)| {
            let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
            match stream.next() {
                Some(Ok(Value::Object(m))) => Some(m),
                _ => None,
            }
        })
}

/// Labels from the first object with an `answer` key. Prose and code fences
/// around the object are ignored.
pub fn parse_type_answer(text: &str) -> Result<Vec<String>, LlmError> {
    let m = objects(text)
        .find(|m| m.contains_key("answer"))
        .ok_or_else(|| LlmError::MalformedAnswer("no JSON object with an `answer` key".into()))?;
    match &m["answer"] {
        Value::Array(items) => items
            .iter()
            .map(|v| match v {
                Value::String(s) => Ok(s.trim().to_string()),
                other => Err(LlmError::MalformedAnswer(format!(
                    "`answer` holds a non-string item: {other}"
                ))),
            })
            .filter(|r| !matches!(r, Ok(s) if s.is_empty()))
            .collect(),
        other => Err(LlmError::MalformedAnswer(format!(
            "`answer` is not a list: {other}"
        ))),
    }
}

/// The strict answer form.
pub fn render_type_answer<S: AsRef<str>>(labels: &[S]) -> String {
    let labels: Vec<&str> = labels.iter().map(|s| s.as_ref()).collect();
    serde_json::json!({ "answer": labels }).to_string()
}

/// Per-column label lists of a whole-table answer: `{"answer": {"col": [..]}}`.
pub fn parse_table_answer(text: &str) -> Result<BTreeMap<String, Vec<String>>, LlmError> {
    let m = objects(text)
        .find(|m| m.contains_key("answer"))
        .ok_or_else(|| LlmError::MalformedAnswer("no JSON object with an `answer` key".into()))?;
    let Value::Object(cols) = &m["answer"] else {
        return Err(LlmError::MalformedAnswer("`answer` is not an object".into()));
    };
    let mut out = BTreeMap::new();
    for (col, v) in cols {
        let labels = match v {
            Value::Array(items) => items
                .iter()
                .filter_map(|x| x.as_str())
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect(),
            Value::String(s) => vec![s.trim().to_string()],
            _ => {
                return Err(LlmError::MalformedAnswer(format!(
                    "labels of `{col}` are not a list"
                )))
            }
        };
        out.insert(col.clone(), labels);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Correct,
    Incorrect,
}

/// Verdict map from `{"verdicts": {"label": "correct" | "incorrect"}}`.
/// Every label in `expected` must be present.
pub fn parse_verdicts(
    text: &str,
    expected: &[String],
) -> Result<BTreeMap<String, Verdict>, LlmError> {
    let m = objects(text)
        .find(|m| m.contains_key("verdicts"))
        .ok_or_else(|| LlmError::MalformedAnswer("no JSON object with a `verdicts` key".into()))?;
    let Value::Object(v) = &m["verdicts"] else {
        return Err(LlmError::MalformedAnswer("`verdicts` is not an object".into()));
    };
    let mut out = BTreeMap::new();
    for label in expected {
        let raw = v
            .get(label)
            .or_else(|| {
                v.iter()
                    .find(|(k, _)| k.trim().eq_ignore_ascii_case(label.trim()))
                    .map(|(_, x)| x)
            })
            .ok_or_else(|| LlmError::MalformedAnswer(format!("no verdict for `{label}`")))?;
        let verdict = match raw {
            Value::Bool(true) => Verdict::Correct,
            Value::Bool(false) => Verdict::Incorrect,
            Value::String(s) if s.trim().eq_ignore_ascii_case("correct") => Verdict::Correct,
            Value::String(s) if s.trim().eq_ignore_ascii_case("incorrect") => Verdict::Incorrect,
            other => {
                return Err(LlmError::MalformedAnswer(format!(
                    "bad verdict for `{label}`: {other}"
                )))
            }
        };
        out.insert(label.clone(), verdict);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_answer() {
        assert_eq!(
            parse_type_answer(r#"{"answer": ["NYC Borough","DBN"]}"#).unwrap(),
            vec!["NYC Borough", "DBN"]
        );
    }

    #[test]
    fn fenced_answer_amid_prose() {
        let t = "Sure, here you go:\n```json\n{\"answer\": [\" NYC Borough \", \"DBN\"]}\n```\nDone {x}.";
        assert_eq!(parse_type_answer(t).unwrap(), vec!["NYC Borough", "DBN"]);
    }

    #[test]
    fn non_list_answer_is_malformed() {
        assert!(matches!(
            parse_type_answer(r#"{"answer": "NYC Borough"}"#),
            Err(LlmError::MalformedAnswer(_))
        ));
        assert!(matches!(parse_type_answer("no json"), Err(LlmError::MalformedAnswer(_))));
    }

    #[test]
    fn skips_objects_without_answer() {
        let t = r#"{"note": 1} then {"answer": []}"#;
        assert_eq!(parse_type_answer(t).unwrap(), Vec::<String>::new());
    }

    #[test]
    fn render_round_trip() {
        let labels = vec!["A b".to_string(), "C\\d".to_string()];
        assert_eq!(parse_type_answer(&render_type_answer(&labels)).unwrap(), labels);
    }

    #[test]
    fn table_answer() {
        let m = parse_table_answer(r#"{"answer": {"boro": ["NYC Borough"], "n": "Count"}}"#).unwrap();
        assert_eq!(m["boro"], vec!["NYC Borough"]);
        assert_eq!(m["n"], vec!["Count"]);
    }

    #[test]
    fn verdicts_require_every_label() {
        let labels = vec!["A".to_string(), "B".to_string()];
        let ok = parse_verdicts(r#"{"verdicts": {"A": "correct", "b": false}}"#, &labels).unwrap();
        assert_eq!(ok["A"], Verdict::Correct);
        assert_eq!(ok["B"], Verdict::Incorrect);
        assert!(matches!(
            parse_verdicts(r#"{"verdicts": {"A": "correct"}}"#, &labels),
            Err(LlmError::MalformedAnswer(_))
        ));
    }
}
