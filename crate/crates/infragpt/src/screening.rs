//! Screening stage: build the inspection prompt, ask the vision-language
//! backend whether the frame shows any defect family, and parse the reply
//! into a decision vector.

use std::path::Path;

use crate::backends::{CallKind, VlmClient};
use crate::domain::{DecisionVector, Frame};
use crate::error::{Error, Result};
use crate::metrics::text::tokenize;

/// A versioned prompt body with `{placeholder}` slots.
///
/// Placeholders are single-brace runs of lowercase letters or underscores;
/// anything else (including JSON braces in embedded examples) passes through
/// verbatim.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: String,
    pub version: String,
    pub body: String,
}

impl PromptTemplate {
    pub fn new(name: &str, version: &str, body: &str) -> Result<PromptTemplate> {
        if body.is_empty() {
            return Err(Error::Template(format!("template {name} has an empty body")));
        }
        Ok(PromptTemplate {
            name: name.to_string(),
            version: version.to_string(),
            body: body.to_string(),
        })
    }

    /// Load a template file: first line `version: <string>`, remainder is
    /// the body.
    pub fn from_file(path: &Path) -> Result<PromptTemplate> {
        let text = std::fs::read_to_string(path)?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("template");
        let (header, body) = text.split_once('\n').ok_or_else(|| {
            Error::Template(format!("template {name} must start with a version line"))
        })?;
        let version = header.strip_prefix("version:").map(str::trim).ok_or_else(|| {
            Error::Template(format!("template {name} first line must be \"version: <string>\""))
        })?;
        PromptTemplate::new(name, version, body)
    }

    /// Substitute placeholders from the given (name, value) pairs. A
    /// placeholder with no matching pair is an error.
    pub fn render(&self, values: &[(&str, String)]) -> Result<String> {
        let mut out = String::with_capacity(self.body.len());
        let mut rest = self.body.as_str();
        while let Some(start) = rest.find('{') {
            out.push_str(&rest[..start]);
            let after = &rest[start + 1..];
            let name_len =
                after.bytes().take_while(|b| b.is_ascii_lowercase() || *b == b'_').count();
            if name_len > 0 && after.as_bytes().get(name_len) == Some(&b'}') {
                let name = &after[..name_len];
                match values.iter().find(|(k, _)| *k == name) {
                    Some((_, value)) => out.push_str(value),
                    None => {
                        return Err(Error::Template(format!(
                            "unknown placeholder {{{name}}} in template {}",
                            self.name
                        )))
                    }
                }
                rest = &after[name_len + 1..];
            } else {
                out.push('{');
                rest = after;
            }
        }
        out.push_str(rest);
        Ok(out)
    }
}

/// Fill the screening template with frame provenance.
pub fn build_screening_prompt(template: &PromptTemplate, frame: &Frame) -> Result<String> {
    template.render(&[
        ("source_id", frame.source_id.clone()),
        ("timestamp", frame.timestamp.to_string()),
    ])
}

/// Read a decision object out of a JSON value: all three fields present as
/// booleans (or 0/1, matching the vector's own serialization).
fn decision_from_value(value: &serde_json::Value) -> Option<DecisionVector> {
    let obj = value.as_object()?;
    let flag = |name: &str| -> Option<bool> {
        match obj.get(name)? {
            serde_json::Value::Bool(b) => Some(*b),
            serde_json::Value::Number(n) => match n.as_u64() {
                Some(0) => Some(false),
                Some(1) => Some(true),
                _ => None,
            },
            _ => None,
        }
    };
    Some(DecisionVector::new(flag("crack")?, flag("leak")?, flag("other")?))
}

const NEGATIONS: [&str; 4] = ["no", "not", "none", "without"];

fn keyword_flag(tokens: &[String], keyword: &str) -> bool {
    tokens.iter().enumerate().any(|(i, token)| {
        token == keyword
            && !tokens[i.saturating_sub(3)..i].iter().any(|t| NEGATIONS.contains(&t.as_str()))
    })
}

/// Two-tier reply parse. Tier 1: the first well-formed JSON object anywhere
/// in the text holding all three flags wins. Tier 2: case-insensitive
/// keyword scan where a defect word counts unless a negation appears within
/// the three preceding tokens; "other" cannot be inferred from keywords and
/// stays 0. Token-free text is a parse error.
pub fn parse_decision(text: &str) -> Result<DecisionVector> {
    for (start, _) in text.match_indices('{') {
        let mut stream =
            serde_json::Deserializer::from_str(&text[start..]).into_iter::<serde_json::Value>();
        if let Some(Ok(value)) = stream.next() {
            if let Some(decision) = decision_from_value(&value) {
                return Ok(decision);
            }
        }
    }

    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(Error::ScreenParse(format!(
            "reply has no JSON decision and no tokens: {text:?}"
        )));
    }
    Ok(DecisionVector::new(
        keyword_flag(&tokens, "crack"),
        keyword_flag(&tokens, "leak"),
        false,
    ))
}

/// What the screening stage hands the pipeline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScreenResult {
    pub decision: DecisionVector,
    pub latency_ms: u64,
    /// True when the reply was unparseable and the decision degraded to
    /// all-zero.
    pub degraded: bool,
}

/// Screen one frame: prompt, call the backend, parse. Unparseable replies
/// degrade to the all-zero vector with a warning; backend failures propagate.
pub fn screen(
    frame: &Frame,
    template: &PromptTemplate,
    backend: &dyn VlmClient,
) -> Result<ScreenResult> {
    let prompt = build_screening_prompt(template, frame)?;
    let response = backend.generate(frame, CallKind::Screen, &prompt)?;
    match parse_decision(&response.text) {
        Ok(decision) => {
            Ok(ScreenResult { decision, latency_ms: response.latency_ms, degraded: false })
        }
        Err(e) => {
            log::warn!("frame {}: screening reply unparseable ({e}); treating as no-defect", frame.frame_id);
            Ok(ScreenResult {
                decision: DecisionVector::ZERO,
                latency_ms: response.latency_ms,
                degraded: true,
            })
        }
    }
}
