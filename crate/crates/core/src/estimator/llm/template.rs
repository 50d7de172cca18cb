//! Prompt templates: plain text with `{slot}` placeholders.
//!
//! `{{` and `}}` render as literal braces. Every slot the template mentions
//! must be bound at render time; extra bindings are ignored.

use std::collections::{BTreeMap, BTreeSet};

use super::super::EstimatorError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece<'a> {
    Text(&'a str),
    LiteralBrace(char),
    Slot(&'a str),
}

impl PromptTemplate {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self, EstimatorError> {
        let template = Self { id: id.into(), text: text.into() };
        template.pieces()?;
        Ok(template)
    }

    fn error(&self, message: impl Into<String>) -> EstimatorError {
        EstimatorError::Template { template: self.id.clone(), message: message.into() }
    }

    fn pieces(&self) -> Result<Vec<Piece<'_>>, EstimatorError> {
        let text = self.text.as_str();
        let bytes = text.as_bytes();
        let mut pieces = Vec::new();
        let mut start = 0;
        let mut i = 0;
        while i < bytes.len() {
            match bytes[i] {
                b'{' | b'}' if bytes.get(i + 1) == Some(&bytes[i]) => {
                    pieces.push(Piece::Text(&text[start..i]));
                    pieces.push(Piece::LiteralBrace(bytes[i] as char));
                    i += 2;
                    start = i;
                }
                b'{' => {
                    let close = text[i + 1..].find('}').ok_or_else(|| self.error("unclosed '{'"))? + i + 1;
                    let name = &text[i + 1..close];
                    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                        return Err(self.error(format!("bad slot name {name:?}")));
                    }
                    pieces.push(Piece::Text(&text[start..i]));
                    pieces.push(Piece::Slot(name));
                    i = close + 1;
                    start = i;
                }
                b'}' => return Err(self.error("unmatched '}'")),
                _ => i += 1,
            }
        }
        pieces.push(Piece::Text(&text[start..]));
        Ok(pieces)
    }

    /// Names of all slots the template references.
    pub fn slots(&self) -> BTreeSet<String> {
        self.pieces()
            .unwrap_or_default()
            .into_iter()
            .filter_map(|p| match p {
                Piece::Slot(name) => Some(name.to_string()),
                _ => None,
            })
            .collect()
    }

    pub fn render(&self, bindings: &BTreeMap<&str, String>) -> Result<String, EstimatorError> {
        let mut out = String::with_capacity(self.text.len());
        for piece in self.pieces()? {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::LiteralBrace(c) => out.push(c),
                Piece::Slot(name) => {
                    let value = bindings.get(name).ok_or_else(|| self.error(format!("slot {name:?} is unbound")))?;
                    out.push_str(value);
                }
            }
        }
        Ok(out)
    }
}

macro_rules! bundled {
    ($($name:literal),* $(,)?) => {
        /// Every template shipped with the crate, by id.
        pub const BUNDLED: &[(&str, &str)] = &[
            $(($name, include_str!(concat!("../../../prompts/", $name, ".txt")))),*
        ];
    };
}

bundled!(
    "animal_direct",
    "animal_auto_stop",
    "animal_confidence",
    "animal_question_generation",
    "animal_batch_answer",
    "medical_direct",
    "medical_auto_stop",
    "medical_confidence",
    "medical_question_generation",
    "medical_batch_answer",
    "flight_direct",
    "flight_prior",
    "flight_posterior",
    "flight_candidate_question",
    "generic_auto_stop",
    "generic_confidence",
    "generic_question_generation",
    "generic_batch_answer",
);

/// A bundled template by id.
pub fn bundled(id: &str) -> Result<PromptTemplate, EstimatorError> {
    let (_, text) = BUNDLED
        .iter()
        .find(|(name, _)| *name == id)
        .ok_or_else(|| EstimatorError::Template { template: id.into(), message: "no such template".into() })?;
    PromptTemplate::new(id, text.trim_end())
}

/// The template for `purpose` ("auto_stop", "batch_answer", ...) on a task:
/// the task's own variant when one ships, the generic one otherwise.
pub fn for_task(task_name: &str, purpose: &str) -> Result<PromptTemplate, EstimatorError> {
    bundled(&format!("{task_name}_{purpose}")).or_else(|_| bundled(&format!("generic_{purpose}")))
}
