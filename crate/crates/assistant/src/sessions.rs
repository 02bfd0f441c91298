//! In-memory conversation sessions with an optional line-delimited log.
//!
//! Every processed turn appends a full session snapshot to the log. Replay
//! keeps the last snapshot seen for each session id.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use convsearch_core::ConversationSession;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SessionStoreError {
    #[error("session log {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("session log {path} line {line}: {reason}")]
    Corrupt { path: String, line: usize, reason: String },
}

pub type SharedSession = Arc<tokio::sync::Mutex<ConversationSession>>;

#[derive(Default)]
pub struct SessionStore {
    sessions: Mutex<HashMap<String, SharedSession>>,
    log: Option<(PathBuf, Mutex<File>)>,
}

impl SessionStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Replays `path` if it exists, then appends to it.
    pub fn with_log(path: &Path) -> Result<Self, SessionStoreError> {
        let io = |source| SessionStoreError::Io {
            path: path.display().to_string(),
            source,
        };
        let restored = if path.exists() { replay(path)? } else { Vec::new() };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        let store = Self {
            sessions: Mutex::default(),
            log: Some((path.to_path_buf(), Mutex::new(file))),
        };
        {
            let mut map = store.sessions.lock().expect("session map");
            for s in restored {
                map.insert(s.session_id.clone(), Arc::new(tokio::sync::Mutex::new(s)));
            }
        }
        Ok(store)
    }

    pub fn create(&self, topic_label: Option<String>) -> String {
        let id = uuid::Uuid::new_v4().to_string();
        let mut session = ConversationSession::new(id.clone());
        session.topic_label = topic_label;
        self.sessions
            .lock()
            .expect("session map")
            .insert(id.clone(), Arc::new(tokio::sync::Mutex::new(session)));
        id
    }

    pub fn get(&self, id: &str) -> Option<SharedSession> {
        self.sessions.lock().expect("session map").get(id).cloned()
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().expect("session map").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends a snapshot of `session` to the log, if one is configured.
    pub fn record(&self, session: &ConversationSession) -> Result<(), SessionStoreError> {
        let Some((path, file)) = &self.log else {
            return Ok(());
        };
        let mut line = serde_json::to_string(session).expect("session serializes");
        line.push('\n');
        let mut file = file.lock().expect("session log");
        file.write_all(line.as_bytes())
            .and_then(|_| file.flush())
            .map_err(|source| SessionStoreError::Io {
                path: path.display().to_string(),
                source,
            })
    }
}

/// Reads a session log; later snapshots replace earlier ones. Output is
/// ordered by first appearance.
pub fn replay(path: &Path) -> Result<Vec<ConversationSession>, SessionStoreError> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| SessionStoreError::Io {
        path: display.clone(),
        source,
    })?;
    let mut order: Vec<String> = Vec::new();
    let mut latest: HashMap<String, ConversationSession> = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| SessionStoreError::Io {
            path: display.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let corrupt = |reason: String| SessionStoreError::Corrupt {
            path: display.clone(),
            line: i + 1,
            reason,
        };
        let session: ConversationSession = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
        session.validate().map_err(|e| corrupt(e.to_string()))?;
        if !latest.contains_key(&session.session_id) {
            order.push(session.session_id.clone());
        }
        latest.insert(session.session_id.clone(), session);
    }
    Ok(order.into_iter().filter_map(|id| latest.remove(&id)).collect())
}
