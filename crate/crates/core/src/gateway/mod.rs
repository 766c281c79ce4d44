//! Provider-agnostic chat and embedding contract.
//!
//! [`Gateway::complete`] turns a [`PromptBundle`] into a validated
//! [`StructuredReply`]. Model text goes through a strict JSON parse, then one
//! repair pass (strip code fences, take the outermost braced block), then one
//! corrective retry. Anything still unusable becomes a typed error.

mod embed;
mod http;
mod mock;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub use embed::{cosine, CachingEmbedder, Embedder, EmbeddingVector, MockEmbedder};
pub use http::{HttpBackend, HttpEmbedder, ProviderConfig};
pub use mock::{FailMode, FlakyBackend, MockBackend, ScriptedBackend};

use crate::prompt::{CallKind, PromptBundle};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("provider error: {0}")]
    Provider(String),
    #[error("malformed reply: {0}")]
    MalformedReply(String),
    #[error("reply is missing required keys: {}", .0.join(", "))]
    MissingKeys(Vec<String>),
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("embedding dimensions differ ({0} vs {1})")]
    DimMismatch(usize, usize),
    #[error("cosine of a zero vector")]
    ZeroVector,
    #[error("gateway configuration: {0}")]
    Config(String),
}

/// A validated model reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredReply {
    pub fields: BTreeMap<String, String>,
    pub raw: String,
    pub repaired: bool,
    pub call_kind: CallKind,
}

impl StructuredReply {
    pub fn code(&self) -> &str {
        self.fields.get("code").map(String::as_str).unwrap_or_default()
    }

    pub fn field(&self, key: &str) -> Option<&str> {
        self.fields.get(key).map(String::as_str)
    }
}

/// One chat-completion request as seen by a backend.
#[derive(Debug, Clone, Copy)]
pub struct ChatRequest<'a> {
    pub model: &'a str,
    pub system: &'a str,
    pub user: &'a str,
    /// Keys the caller will validate; backends may use them as a format hint.
    pub expected_keys: &'a [String],
}

pub trait ChatBackend: Send + Sync {
    fn chat(&self, request: &ChatRequest<'_>) -> Result<String, GatewayError>;
}

#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway").finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        Self { backend }
    }

    pub fn mock() -> Self {
        Self::new(Arc::new(MockBackend))
    }

    /// Sends `bundle` and validates the reply. Makes at most two backend
    /// calls.
    pub fn complete(&self, bundle: &PromptBundle, model: &str) -> Result<StructuredReply, GatewayError> {
        let system = bundle.render_system();
        let user = bundle.render_user();
        let mut request = ChatRequest {
            model,
            system: &system,
            user: &user,
            expected_keys: &bundle.expected_keys,
        };

        let text = self.backend.chat(&request)?;
        let failure = match interpret(&text, bundle) {
            Ok(reply) => return Ok(reply),
            Err(e) => e,
        };
        log::warn!("reply for {:?} unusable ({failure}); retrying once", bundle.call_kind);

        let corrected = format!(
            "{user}\n\n### Format Correction\nYour previous reply could not be used ({failure}). \
             Respond with a single valid JSON object containing the keys: {}.",
            bundle.expected_keys.join(", ")
        );
        request.user = &corrected;
        let text = self.backend.chat(&request)?;
        let mut reply = interpret(&text, bundle)?;
        reply.repaired = true;
        Ok(reply)
    }
}

/// Parses and validates one model text against the bundle's schema.
pub fn interpret(text: &str, bundle: &PromptBundle) -> Result<StructuredReply, GatewayError> {
    let (object, repaired) = match serde_json::from_str::<Value>(text) {
        Ok(Value::Object(map)) => (map, false),
        _ => (repair(text)?, true),
    };
    let fields = validate(object, &bundle.expected_keys)?;
    Ok(StructuredReply {
        fields,
        raw: text.to_string(),
        repaired,
        call_kind: bundle.call_kind,
    })
}

fn repair(text: &str) -> Result<Map<String, Value>, GatewayError> {
    let unfenced: String = text
        .lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n");
    let start = unfenced.find('{');
    let end = unfenced.rfind('}');
    let block = match (start, end) {
        (Some(s), Some(e)) if s < e => &unfenced[s..=e],
        _ => return Err(GatewayError::MalformedReply("no JSON object found".into())),
    };
    match serde_json::from_str::<Value>(block) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(GatewayError::MalformedReply("braced block is not an object".into())),
        Err(e) => Err(GatewayError::MalformedReply(e.to_string())),
    }
}

fn validate(object: Map<String, Value>, expected: &[String]) -> Result<BTreeMap<String, String>, GatewayError> {
    let fields: BTreeMap<String, String> = object
        .into_iter()
        .filter_map(|(k, v)| as_text(v).map(|t| (k, t)))
        .collect();
    let missing: Vec<String> = expected
        .iter()
        .filter(|k| match fields.get(*k) {
            None => true,
            Some(v) => *k == "code" && v.trim().is_empty(),
        })
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(GatewayError::MissingKeys(missing));
    }
    Ok(fields)
}

/// Flattens a JSON value into display text. Lists become `-` bullets.
fn as_text(value: Value) -> Option<String> {
    match value {
        Value::Null => None,
        Value::String(s) => Some(s),
        Value::Array(items) => Some(
            items
                .into_iter()
                .map(|v| match v {
                    Value::String(s) => format!("- {s}"),
                    other => format!("- {other}"),
                })
                .collect::<Vec<_>>()
                .join("\n"),
        ),
        other => Some(other.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispatch::ReflectionMode;
    use crate::graph::ContextBundle;
    use crate::graph::NodeId;
    use crate::prompt::PromptLibrary;

    fn bundle(mode: ReflectionMode) -> PromptBundle {
        let ctx = ContextBundle {
            node_id: NodeId(0),
            code: String::new(),
            history: vec![],
        };
        PromptLibrary::builtin()
            .build_mode_prompt(mode, None, &ctx, &[], "draw waves", 12)
            .unwrap()
    }

    fn scripted(replies: &[&str]) -> (Gateway, Arc<ScriptedBackend>) {
        let backend = Arc::new(ScriptedBackend::new(replies.iter().map(|r| Ok(r.to_string()))));
        (Gateway::new(backend.clone()), backend)
    }

    const R1_OK: &str = r#"{"code":"draw();","rationale":"- r","reflection":"why?"}"#;

    #[test]
    fn strict_reply_is_not_repaired() {
        let (gw, backend) = scripted(&[R1_OK]);
        let reply = gw.complete(&bundle(ReflectionMode::R1), "m").unwrap();
        assert!(!reply.repaired);
        assert_eq!(reply.code(), "draw();");
        assert_eq!(reply.call_kind, CallKind::R1);
        assert_eq!(backend.calls(), 1);
    }

    #[test]
    fn fenced_reply_is_repaired() {
        let text = format!("Here you go:\n```json\n{R1_OK}\n```\n");
        let (gw, backend) = scripted(&[&text]);
        let reply = gw.complete(&bundle(ReflectionMode::R1), "m").unwrap();
        assert!(reply.repaired);
        assert_eq!(reply.raw, text);
        assert_eq!(backend.calls(), 1);
    }

    #[test]
    fn prose_fails_after_one_retry() {
        let (gw, backend) = scripted(&["I think you should add waves.", "Still prose."]);
        let err = gw.complete(&bundle(ReflectionMode::R1), "m").unwrap_err();
        assert!(matches!(err, GatewayError::MalformedReply(_)));
        assert_eq!(backend.calls(), 2);
        let second = backend.requests()[1].clone();
        assert!(second.contains("### Format Correction"));
    }

    #[test]
    fn retry_can_recover() {
        let (gw, _) = scripted(&["nope", R1_OK]);
        let reply = gw.complete(&bundle(ReflectionMode::R1), "m").unwrap();
        assert!(reply.repaired);
    }

    #[test]
    fn wrong_schema_reports_missing_keys() {
        let wrong = r#"{"code":"x","exploration":"e"}"#;
        let (gw, _) = scripted(&[wrong, wrong]);
        let err = gw.complete(&bundle(ReflectionMode::R1), "m").unwrap_err();
        assert_eq!(
            err,
            GatewayError::MissingKeys(vec!["rationale".into(), "reflection".into()])
        );
    }

    #[test]
    fn empty_code_counts_as_missing() {
        let b = bundle(ReflectionMode::R1);
        let err = interpret(r#"{"code":"  ","rationale":"r","reflection":"q"}"#, &b).unwrap_err();
        assert_eq!(err, GatewayError::MissingKeys(vec!["code".into()]));
    }

    #[test]
    fn list_values_become_bullets() {
        let b = bundle(ReflectionMode::R3);
        let reply = interpret(r#"{"code":"c","reflection":"q","advice":["flip it","slow down"]}"#, &b).unwrap();
        assert_eq!(reply.field("advice"), Some("- flip it\n- slow down"));
    }

    #[test]
    fn provider_error_is_not_retried() {
        let backend = Arc::new(ScriptedBackend::new([Err("down".to_string())]));
        let gw = Gateway::new(backend.clone());
        let err = gw.complete(&bundle(ReflectionMode::R1), "m").unwrap_err();
        assert_eq!(err, GatewayError::Provider("down".into()));
        assert_eq!(backend.calls(), 1);
    }

    #[test]
    fn mock_replies_are_deterministic_and_exact() {
        let gw = Gateway::mock();
        for mode in ReflectionMode::ALL {
            let b = bundle(mode);
            let one = gw.complete(&b, "gpt-4o").unwrap();
            let two = gw.complete(&b, "gpt-4o").unwrap();
            assert_eq!(one, two);
            let keys: Vec<&String> = one.fields.keys().collect();
            let mut expected: Vec<&String> = b.expected_keys.iter().collect();
            expected.sort();
            assert_eq!(keys, expected);
            assert!(!one.repaired);
        }
    }
}
