use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dispatch::DispatchState;
use crate::graph::{GraphError, NodeId, VersionGraph};

/// UTC milliseconds since the Unix epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub fn now() -> Self {
        let ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as i64)
            .unwrap_or(0);
        Timestamp(ms)
    }
}

/// Creation time of every mock-mode session (2025-01-01T00:00:00Z).
pub const MOCK_EPOCH: Timestamp = Timestamp(1_735_689_600_000);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSettings {
    pub chat_model: String,
    pub embed_model: String,
    pub context_window_turns: u32,
    pub fewshot_k: u32,
    pub mock: bool,
}

impl Default for SessionSettings {
    fn default() -> Self {
        Self {
            chat_model: "gpt-4o".to_string(),
            embed_model: "text-embedding-ada-002".to_string(),
            context_window_turns: 12,
            fewshot_k: 3,
            mock: false,
        }
    }
}

impl SessionSettings {
    pub fn mock() -> Self {
        Self {
            mock: true,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        if self.chat_model.trim().is_empty() || self.embed_model.trim().is_empty() {
            return Err(SessionError::InvalidSettings("model names must be nonempty".into()));
        }
        if self.context_window_turns == 0 {
            return Err(SessionError::InvalidSettings("context_window_turns must be at least 1".into()));
        }
        if self.fewshot_k == 0 {
            return Err(SessionError::InvalidSettings("fewshot_k must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("invalid settings: {0}")]
    InvalidSettings(String),
}

/// Everything that is persisted for one session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    pub session_id: String,
    pub created_at: Timestamp,
    pub settings: SessionSettings,
    pub dispatch: DispatchState,
    pub graph: VersionGraph,
}

impl SessionState {
    /// A session holding a single empty root node.
    ///
    /// Mock sessions run on a logical clock anchored at [`MOCK_EPOCH`] so that
    /// replays produce identical files.
    pub fn create(session_id: impl Into<String>, settings: SessionSettings) -> Result<Self, SessionError> {
        settings.validate()?;
        let created_at = if settings.mock { MOCK_EPOCH } else { Timestamp::now() };
        Ok(Self {
            session_id: session_id.into(),
            created_at,
            settings,
            dispatch: DispatchState::default(),
            graph: VersionGraph::new(created_at),
        })
    }

    /// An unpredictable 16-hex-digit id for non-mock sessions.
    pub fn fresh_id() -> String {
        static COUNTER: AtomicU64 = AtomicU64::new(0);
        let nanos = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or(0);
        let mut h = Sha256::new();
        h.update(nanos.to_le_bytes());
        h.update(std::process::id().to_le_bytes());
        h.update(COUNTER.fetch_add(1, Ordering::Relaxed).to_le_bytes());
        hex::encode(&h.finalize()[..8])
    }

    /// Current time for new nodes and turns.
    ///
    /// In mock mode this is derived from the graph counters, one second per
    /// allocated node or turn.
    pub fn now(&self) -> Timestamp {
        if self.settings.mock {
            let ticks = (self.graph.next_seq() + self.graph.next_turn_seq()) as i64;
            Timestamp(self.created_at.0 + 1000 * ticks)
        } else {
            Timestamp::now()
        }
    }

    /// Saves `code` under the active node, stamped with [`Self::now`].
    pub fn collect(&mut self, code: impl Into<String>, title: impl Into<String>, preview_asset: Option<String>) -> NodeId {
        let now = self.now();
        self.graph.collect(code, title, preview_asset, now)
    }

    pub fn duplicate(&mut self, id: NodeId) -> Result<NodeId, GraphError> {
        let now = self.now();
        self.graph.duplicate(id, now)
    }
}
