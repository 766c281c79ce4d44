use std::collections::HashMap;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use axum::http::StatusCode;
use reflexa_core::persist::{self, PersistError};
use reflexa_core::{SessionSettings, SessionState};

use crate::error::ApiError;

pub type SessionCell = Arc<Mutex<SessionState>>;

/// Session files under one directory, `{id}.json` each, with an in-memory
/// cell per opened session so concurrent requests on a session serialize.
pub struct SessionStore {
    dir: PathBuf,
    mock: bool,
    open: Mutex<HashMap<String, SessionCell>>,
}

pub(crate) fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    // Mutations are applied to a copy and swapped in only after saving, so a
    // poisoned lock still guards consistent data.
    m.lock().unwrap_or_else(|e| e.into_inner())
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

impl SessionStore {
    /// In mock mode new sessions get sequential ids (`session-0001`, ...).
    pub fn new(dir: impl Into<PathBuf>, mock: bool) -> io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            mock,
            open: Mutex::new(HashMap::new()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    pub fn create(&self, mut settings: SessionSettings) -> Result<SessionCell, ApiError> {
        settings.mock = self.mock;
        let mut open = lock(&self.open);
        let id = if self.mock {
            (1..)
                .map(|n| format!("session-{n:04}"))
                .find(|id| !open.contains_key(id) && !self.path(id).exists())
                .expect("unbounded id range")
        } else {
            SessionState::fresh_id()
        };
        let state = SessionState::create(id.clone(), settings)?;
        self.save(&state)?;
        let cell = Arc::new(Mutex::new(state));
        open.insert(id, cell.clone());
        Ok(cell)
    }

    pub fn get(&self, id: &str) -> Result<SessionCell, ApiError> {
        let unknown = || ApiError::new(StatusCode::NOT_FOUND, "unknown-session", format!("no session `{id}`"));
        if !valid_id(id) {
            return Err(unknown());
        }
        let mut open = lock(&self.open);
        if let Some(cell) = open.get(id) {
            return Ok(cell.clone());
        }
        let path = self.path(id);
        if !path.exists() {
            return Err(unknown());
        }
        let state = persist::load(&path)?;
        let cell = Arc::new(Mutex::new(state));
        open.insert(id.to_string(), cell.clone());
        Ok(cell)
    }

    pub fn save(&self, state: &SessionState) -> Result<(), PersistError> {
        persist::save(state, &self.path(&state.session_id))
    }
}
