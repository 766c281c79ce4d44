//! Session files: one pretty-printed JSON document per session, written by
//! temp-file-then-rename so a crash leaves either the old or the new file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::dispatch::DispatchState;
use crate::graph::{NodeId, VersionGraph, VersionNode};
use crate::session::{SessionSettings, SessionState, Timestamp};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported schema_version {found} (expected {SCHEMA_VERSION})")]
    SchemaVersionMismatch { found: Value },
    #[error("corrupt session file: {0}")]
    Corrupt(String),
}

#[derive(Serialize, Deserialize)]
struct Document {
    schema_version: u64,
    session_id: String,
    created_at: Timestamp,
    settings: SessionSettings,
    dispatch_state: DispatchState,
    active_id: NodeId,
    next_seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    next_turn_seq: Option<u64>,
    nodes: Vec<VersionNode>,
}

/// Canonical serialized form, ending in a newline.
pub fn to_string(session: &SessionState) -> String {
    let doc = Document {
        schema_version: SCHEMA_VERSION,
        session_id: session.session_id.clone(),
        created_at: session.created_at,
        settings: session.settings.clone(),
        dispatch_state: session.dispatch.clone(),
        active_id: session.graph.active_id(),
        next_seq: session.graph.next_seq(),
        next_turn_seq: Some(session.graph.next_turn_seq()),
        nodes: session.graph.nodes().cloned().collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("session serializes");
    text.push('\n');
    text
}

pub fn from_str(text: &str) -> Result<SessionState, PersistError> {
    let value: Value = serde_json::from_str(text).map_err(|e| PersistError::Corrupt(e.to_string()))?;
    match value.get("schema_version") {
        None => return Err(PersistError::Corrupt("missing schema_version".into())),
        Some(v) if v.as_u64() != Some(SCHEMA_VERSION) => {
            return Err(PersistError::SchemaVersionMismatch { found: v.clone() })
        }
        Some(_) => {}
    }
    let doc: Document = serde_json::from_value(value).map_err(|e| PersistError::Corrupt(e.to_string()))?;
    doc.settings
        .validate()
        .map_err(|e| PersistError::Corrupt(e.to_string()))?;
    // Files without the counter get one past the highest recorded turn.
    let next_turn_seq = doc.next_turn_seq.unwrap_or_else(|| {
        doc.nodes
            .iter()
            .flat_map(|n| n.turns.iter().map(|t| t.seq + 1))
            .max()
            .unwrap_or(1)
    });
    let graph = VersionGraph::from_parts(doc.nodes, doc.active_id, doc.next_seq, next_turn_seq)
        .map_err(PersistError::Corrupt)?;
    Ok(SessionState {
        session_id: doc.session_id,
        created_at: doc.created_at,
        settings: doc.settings,
        dispatch: doc.dispatch_state,
        graph,
    })
}

pub fn save(session: &SessionState, path: &Path) -> Result<(), PersistError> {
    let io = |source| PersistError::Io { path: path.to_path_buf(), source };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(to_string(session).as_bytes()).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<SessionState, PersistError> {
    let text = fs::read_to_string(path).map_err(|source| PersistError::Io { path: path.to_path_buf(), source })?;
    from_str(&text)
}
