//! Parsers for model replies. All of them are pure functions over text so
//! they can be tested without a transport.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::Value;

use super::super::EstimatorError;

/// Accepted window for the sum of a returned distribution. Sums inside it
/// are renormalized; sums outside it are rejected.
pub const SUM_WINDOW: (f64, f64) = (0.9, 1.1);

/// The first balanced `{...}` in `text`, skipping braces inside JSON strings.
pub fn first_json_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (offset, c) in text[start..].char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + offset + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

fn parse_object(text: &str) -> Result<serde_json::Map<String, Value>, EstimatorError> {
    let raw = first_json_object(text).ok_or_else(|| EstimatorError::ParseFailure(format!("no JSON object in {text:?}")))?;
    match serde_json::from_str::<Value>(raw) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(EstimatorError::ParseFailure("not a JSON object".into())),
        Err(e) => Err(EstimatorError::ParseFailure(e.to_string())),
    }
}

/// Parses `{"key": p, ...}` whose key set is exactly `expected_keys` and
/// whose values are numbers in `[0, 1]`. Prose around the object is ignored.
pub fn parse_strict_json_distribution(
    text: &str,
    expected_keys: &[&str],
) -> Result<BTreeMap<String, f64>, EstimatorError> {
    let map = parse_object(text)?;
    let expected: BTreeSet<&str> = expected_keys.iter().copied().collect();
    let found: BTreeSet<&str> = map.keys().map(String::as_str).collect();
    if expected != found {
        return Err(EstimatorError::KeyMismatch {
            expected: expected.into_iter().map(str::to_string).collect(),
            found: found.into_iter().map(str::to_string).collect(),
        });
    }
    map.iter()
        .map(|(key, value)| {
            let v = value
                .as_f64()
                .ok_or_else(|| EstimatorError::ParseFailure(format!("value for {key:?} is not a number")))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(EstimatorError::ValueOutOfRange { key: key.clone(), value: v });
            }
            Ok((key.clone(), v))
        })
        .collect()
}

/// Orders a parsed distribution by `keys` and renormalizes it when its sum
/// lies inside [`SUM_WINDOW`].
pub fn normalized_in_order(map: &BTreeMap<String, f64>, keys: &[&str]) -> Result<Vec<f64>, EstimatorError> {
    let values: Vec<f64> = keys.iter().map(|k| map.get(*k).copied().unwrap_or(0.0)).collect();
    let sum: f64 = values.iter().sum();
    if !(SUM_WINDOW.0..=SUM_WINDOW.1).contains(&sum) {
        return Err(EstimatorError::OutOfRangeSum(sum));
    }
    Ok(values.into_iter().map(|v| v / sum).collect())
}

/// Parses `{"guess": "...", "confidence": n}` into `(guess, n / 100)`.
pub fn parse_confidence_reply(text: &str) -> Result<(String, f64), EstimatorError> {
    let map = parse_object(text)?;
    let guess = map
        .get("guess")
        .and_then(Value::as_str)
        .ok_or_else(|| EstimatorError::ParseFailure("missing string field \"guess\"".into()))?;
    let confidence = map
        .get("confidence")
        .and_then(|v| v.as_f64().or_else(|| v.as_str().and_then(|s| s.trim().parse().ok())))
        .ok_or_else(|| EstimatorError::ParseFailure("missing numeric field \"confidence\"".into()))?;
    if !(1.0..=100.0).contains(&confidence) {
        return Err(EstimatorError::ConfidenceOutOfRange(confidence));
    }
    Ok((guess.trim().to_string(), confidence / 100.0))
}

/// Lower-cases and folds `_`, `-` and runs of whitespace into single spaces,
/// so "Polar_Bear" and "polar bear" compare equal.
pub fn normalize_label(label: &str) -> String {
    let folded: String = label
        .chars()
        .map(|c| if c == '_' || c == '-' { ' ' } else { c.to_ascii_lowercase() })
        .filter(|c| !matches!(c, '*' | '"' | '`' | '[' | ']'))
        .collect();
    folded.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn strip_list_marker(line: &str) -> &str {
    let line = line.trim().trim_start_matches(['-', '*', '•']).trim_start();
    let digits = line.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        let rest = &line[digits..];
        if let Some(stripped) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            return stripped.trim_start();
        }
    }
    line
}

/// One simulated answer from a batch reply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchAnswer {
    Label(usize),
    Maybe,
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct BatchReply {
    /// Candidate index to parsed answer. Candidates that are absent or whose
    /// answer did not parse are missing from the map.
    pub answers: BTreeMap<usize, BatchAnswer>,
    /// Names that matched no candidate.
    pub unknown: Vec<String>,
}

/// Parses `Name: Answer` lines against the candidate names and the
/// question's answer labels. "Maybe" is accepted for every question.
pub fn parse_batch_answers(text: &str, candidates: &[String], labels: &[String]) -> BatchReply {
    let names: Vec<String> = candidates.iter().map(|c| normalize_label(c)).collect();
    let labels: Vec<String> = labels.iter().map(|l| normalize_label(l)).collect();
    let mut reply = BatchReply::default();
    for line in text.lines() {
        let Some((name, answer)) = strip_list_marker(line).rsplit_once(':') else { continue };
        let name = normalize_label(name);
        if name.is_empty() {
            continue;
        }
        let answer = normalize_label(answer.trim().trim_end_matches(['.', '!', ',']));
        let Some(index) = names.iter().position(|n| *n == name) else {
            reply.unknown.push(name);
            continue;
        };
        let parsed = match labels.iter().position(|l| *l == answer) {
            Some(i) => Some(BatchAnswer::Label(i)),
            None if answer == "maybe" => Some(BatchAnswer::Maybe),
            None => None,
        };
        if let Some(parsed) = parsed {
            reply.answers.entry(index).or_insert(parsed);
        }
    }
    reply
}

/// `p(y | q, θ)` for a simulated answer: the named label gets `1 − η̂` and
/// the rest share `η̂`; "Maybe" is uniform.
pub fn likelihood_row(answer: BatchAnswer, num_labels: usize, noise: f64) -> Vec<f64> {
    match answer {
        BatchAnswer::Maybe => vec![1.0 / num_labels as f64; num_labels],
        BatchAnswer::Label(i) => {
            let off = noise / (num_labels - 1) as f64;
            (0..num_labels).map(|y| if y == i { 1.0 - noise } else { off }).collect()
        }
    }
}

/// Items of a numbered (or bulleted) list, in order.
pub fn parse_numbered_list(text: &str) -> Vec<String> {
    text.lines()
        .filter_map(|line| {
            let trimmed = line.trim();
            let item = strip_list_marker(trimmed);
            (item.len() < trimmed.len() && !item.is_empty()).then(|| item.to_string())
        })
        .collect()
}

/// What an auto-stop reply asks for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdaptiveReply {
    Guess(String),
    Question(String),
}

const GUESS_MARKER: &str = "my guess is:";

pub fn parse_adaptive_reply(text: &str) -> Result<AdaptiveReply, EstimatorError> {
    let lower = text.to_ascii_lowercase();
    if let Some(at) = lower.find(GUESS_MARKER) {
        let rest = text[at + GUESS_MARKER.len()..].lines().next().unwrap_or("");
        let guess = rest.trim().trim_end_matches(['.', '!']).trim_matches(['[', ']', '"', '*', ' ']);
        if guess.is_empty() {
            return Err(EstimatorError::ParseFailure("empty guess".into()));
        }
        return Ok(AdaptiveReply::Guess(guess.to_string()));
    }
    let trimmed = text.trim();
    if trimmed.ends_with('?') {
        let question = trimmed.lines().last().unwrap_or(trimmed).trim();
        return Ok(AdaptiveReply::Question(strip_list_marker(question).to_string()));
    }
    Err(EstimatorError::ParseFailure(format!("reply is neither a guess nor a question: {trimmed:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    const STATES: [&str; 3] = ["lower", "higher", "none"];

    #[test]
    fn strict_distribution_exact_match() {
        let m = parse_strict_json_distribution(r#"{"lower":0.2,"higher":0.7,"none":0.1}"#, &STATES).unwrap();
        assert_eq!(m["higher"], 0.7);
        assert_eq!(normalized_in_order(&m, &STATES).unwrap().len(), 3);
    }

    #[test]
    fn strict_distribution_strips_prose() {
        let m = parse_strict_json_distribution(r#"Sure! {"a":1.0} Hope that helps {"b": 2}"#, &["a"]).unwrap();
        assert_eq!(m["a"], 1.0);
    }

    #[test]
    fn strict_distribution_key_mismatch() {
        assert!(matches!(
            parse_strict_json_distribution(r#"{"a":0.5}"#, &["a", "b"]),
            Err(EstimatorError::KeyMismatch { .. })
        ));
        assert!(matches!(
            parse_strict_json_distribution(r#"{"a":0.5,"b":0.3,"c":0.2}"#, &["a", "b"]),
            Err(EstimatorError::KeyMismatch { .. })
        ));
    }

    #[test]
    fn strict_distribution_value_range_and_garbage() {
        assert!(matches!(
            parse_strict_json_distribution(r#"{"a":1.5}"#, &["a"]),
            Err(EstimatorError::ValueOutOfRange { .. })
        ));
        assert!(matches!(parse_strict_json_distribution("no json here", &["a"]), Err(EstimatorError::ParseFailure(_))));
        assert!(matches!(parse_strict_json_distribution(r#"{"a": "x"}"#, &["a"]), Err(EstimatorError::ParseFailure(_))));
    }

    #[test]
    fn braces_inside_strings_do_not_confuse_extraction() {
        assert_eq!(first_json_object(r#"x {"a}": "{", "b": 1} y"#), Some(r#"{"a}": "{", "b": 1}"#));
    }

    #[test]
    fn renormalization_window() {
        let m: BTreeMap<String, f64> = [("a".to_string(), 0.51), ("b".to_string(), 0.51)].into();
        let v = normalized_in_order(&m, &["a", "b"]).unwrap();
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let m: BTreeMap<String, f64> = [("a".to_string(), 0.2), ("b".to_string(), 0.2)].into();
        assert!(matches!(normalized_in_order(&m, &["a", "b"]), Err(EstimatorError::OutOfRangeSum(_))));
    }

    #[test]
    fn confidence_contract() {
        assert_eq!(parse_confidence_reply(r#"{"guess":"lion","confidence":85}"#).unwrap(), ("lion".into(), 0.85));
        assert!(matches!(
            parse_confidence_reply(r#"{"guess":"lion","confidence":0}"#),
            Err(EstimatorError::ConfidenceOutOfRange(_))
        ));
        assert!(matches!(parse_confidence_reply("I think lion"), Err(EstimatorError::ParseFailure(_))));
    }

    #[test]
    fn batch_answers() {
        let candidates = vec!["lion".to_string(), "polar_bear".to_string(), "cat".to_string()];
        let labels = vec!["yes".to_string(), "no".to_string()];
        let reply = parse_batch_answers("Lion: Yes\n- Polar Bear: maybe.\ncat: purple\nwombat: No\n", &candidates, &labels);
        assert_eq!(reply.answers.get(&0), Some(&BatchAnswer::Label(0)));
        assert_eq!(reply.answers.get(&1), Some(&BatchAnswer::Maybe));
        assert!(!reply.answers.contains_key(&2));
        assert_eq!(reply.unknown, vec!["wombat".to_string()]);
    }

    #[test]
    fn likelihood_rows() {
        assert_eq!(likelihood_row(BatchAnswer::Label(0), 2, 0.05), vec![0.95, 0.05]);
        assert_eq!(likelihood_row(BatchAnswer::Label(1), 2, 0.05), vec![0.05, 0.95]);
        assert_eq!(likelihood_row(BatchAnswer::Maybe, 2, 0.05), vec![0.5, 0.5]);
        let row = likelihood_row(BatchAnswer::Label(2), 3, 0.1);
        assert_eq!(row, vec![0.05, 0.05, 0.9]);
    }

    #[test]
    fn numbered_lists() {
        let items = parse_numbered_list("Here you go:\n1. Is it a mammal?\n2) Does it fly?\n\n3. Is it big?\nThanks");
        assert_eq!(items, vec!["Is it a mammal?", "Does it fly?", "Is it big?"]);
    }

    #[test]
    fn adaptive_replies() {
        assert_eq!(parse_adaptive_reply("My guess is: lion").unwrap(), AdaptiveReply::Guess("lion".into()));
        assert_eq!(parse_adaptive_reply("OK. my guess is: [Polar Bear].").unwrap(), AdaptiveReply::Guess("Polar Bear".into()));
        assert_eq!(
            parse_adaptive_reply("Thinking...\nDoes it live in water?").unwrap(),
            AdaptiveReply::Question("Does it live in water?".into())
        );
        assert!(matches!(parse_adaptive_reply("Hmm, let me think."), Err(EstimatorError::ParseFailure(_))));
    }
}
