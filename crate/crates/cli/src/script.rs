//! JSON session scripts: a list of operations applied to one session.
//!
//! A script is either a bare array of commands or
//! `{"settings": {...}, "commands": [...]}`.

use std::path::Path;

use reflexa_core::persist::{self, PersistError};
use reflexa_core::{Engine, EngineError, NodeId, ReflectionMode, SessionSettings, SessionState};
use serde::{Deserialize, Deserializer};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Command {
    Turn {
        #[serde(deserialize_with = "mode_from_str")]
        mode: ReflectionMode,
        prompt: String,
    },
    Collect {
        code: String,
        title: String,
        #[serde(default)]
        preview_asset: Option<String>,
    },
    Activate {
        node: NodeId,
    },
    Modify {
        node: NodeId,
        instruction: String,
    },
    Spark {
        node: NodeId,
        spark: String,
    },
    Merge {
        a: NodeId,
        b: NodeId,
        #[serde(default)]
        instruction: String,
    },
    Duplicate {
        node: NodeId,
    },
    Delete {
        node: NodeId,
        #[serde(default)]
        recursive: bool,
    },
}

fn mode_from_str<'de, D: Deserializer<'de>>(d: D) -> Result<ReflectionMode, D::Error> {
    let s = String::deserialize(d)?;
    s.parse().map_err(|_| serde::de::Error::custom(format!("unknown mode `{s}`")))
}

impl Command {
    pub fn op(&self) -> &'static str {
        match self {
            Self::Turn { .. } => "turn",
            Self::Collect { .. } => "collect",
            Self::Activate { .. } => "activate",
            Self::Modify { .. } => "modify",
            Self::Spark { .. } => "spark",
            Self::Merge { .. } => "merge",
            Self::Duplicate { .. } => "duplicate",
            Self::Delete { .. } => "delete",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Script {
    #[serde(default)]
    pub settings: Option<SessionSettings>,
    pub commands: Vec<Command>,
}

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("invalid script: {0}")]
    Parse(String),
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("step {step} ({op}): {source}")]
    Engine {
        step: usize,
        op: &'static str,
        #[source]
        source: EngineError,
    },
    #[error(transparent)]
    Persist(#[from] PersistError),
}

impl Script {
    pub fn parse(text: &str) -> Result<Self, ScriptError> {
        let value: Value = serde_json::from_str(text).map_err(|e| ScriptError::Parse(e.to_string()))?;
        let script = if value.is_array() {
            Script {
                settings: None,
                commands: serde_json::from_value(value).map_err(|e| ScriptError::Parse(e.to_string()))?,
            }
        } else {
            serde_json::from_value(value).map_err(|e| ScriptError::Parse(e.to_string()))?
        };
        if let Some(settings) = &script.settings {
            settings.validate().map_err(|e| ScriptError::Parse(e.to_string()))?;
        }
        Ok(script)
    }
}

/// Deterministic id for a mock run of `script_text`.
pub fn mock_session_id(script_text: &str) -> String {
    let digest = Sha256::digest(script_text.as_bytes());
    format!("mock-{}", &hex::encode(digest)[..12])
}

pub fn apply(engine: &Engine, session: &mut SessionState, command: &Command) -> Result<Value, EngineError> {
    Ok(match command {
        Command::Turn { mode, prompt } => json!(engine.turn(session, *mode, prompt)?),
        Command::Collect { code, title, preview_asset } => {
            json!({"node_id": session.collect(code.clone(), title.clone(), preview_asset.clone())})
        }
        Command::Activate { node } => {
            session.graph.activate(*node)?;
            json!({"node_id": node})
        }
        Command::Modify { node, instruction } => json!(engine.modify_node(session, *node, instruction)?),
        Command::Spark { node, spark } => json!(engine.apply_spark(session, *node, spark)?),
        Command::Merge { a, b, instruction } => json!(engine.merge_nodes(session, *a, *b, instruction)?),
        Command::Duplicate { node } => json!({"node_id": session.duplicate(*node)?}),
        Command::Delete { node, recursive } => {
            let removed = session.graph.delete(*node, *recursive)?;
            json!({"removed": removed, "active_id": session.graph.active_id()})
        }
    })
}

/// Applies every command in order, stopping at the first failure.
///
/// With `checkpoint`, the session is saved after each successful command,
/// so an interrupted run leaves a valid file reflecting a prefix of the
/// script. `on_step` receives a record per completed command.
pub fn run_script(
    engine: &Engine,
    commands: &[Command],
    session: &mut SessionState,
    checkpoint: Option<&Path>,
    mut on_step: impl FnMut(&Value),
) -> Result<(), RunError> {
    if let Some(path) = checkpoint {
        persist::save(session, path)?;
    }
    for (step, command) in commands.iter().enumerate() {
        let result = apply(engine, session, command).map_err(|source| RunError::Engine {
            step,
            op: command.op(),
            source,
        })?;
        if let Some(path) = checkpoint {
            persist::save(session, path)?;
        }
        on_step(&json!({"step": step, "op": command.op(), "result": result}));
    }
    Ok(())
}
