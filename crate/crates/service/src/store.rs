//! Session store: in memory, optionally written through to a directory so
//! that a restarted service can pick sessions up again.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use tokio::sync::Mutex as SessionLock;

use stackrefine_core::pipeline::{SessionLog, SessionState};
use stackrefine_core::{ugstack, ProbabilityGroup};

use crate::error::ApiError;

const IMAGE: &str = "image";
const PROBS: &str = "probs";
const MASK: &str = "mask";
const LOG: &str = "log.json";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Write-through directory, one subdirectory per session.
    pub data_dir: Option<PathBuf>,
    /// Sessions untouched for this long are dropped from memory.
    pub idle_timeout: Option<Duration>,
    /// Request body limit for uploads, in bytes.
    pub max_upload_bytes: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            data_dir: None,
            idle_timeout: Some(Duration::from_secs(3600)),
            max_upload_bytes: 1 << 30,
        }
    }
}

pub type SharedSession = Arc<SessionLock<SessionState>>;

struct Slot {
    session: SharedSession,
    /// Milliseconds since the store was created.
    touched: AtomicU64,
}

pub struct Store {
    config: ServiceConfig,
    epoch: Instant,
    sessions: Mutex<HashMap<String, Arc<Slot>>>,
}

/// Session ids are generated by the service; anything else cannot name a
/// session directory.
fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_hexdigit() || c == '-')
}

impl Store {
    pub fn new(config: ServiceConfig) -> Self {
        Self {
            config,
            epoch: Instant::now(),
            sessions: Mutex::new(HashMap::new()),
        }
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    fn now(&self) -> u64 {
        self.epoch.elapsed().as_millis() as u64
    }

    fn session_dir(&self, id: &str) -> Option<PathBuf> {
        self.config.data_dir.as_ref().map(|d| d.join(id))
    }

    /// Register a new session, writing its inputs when persistence is on.
    pub fn insert(&self, id: String, state: SessionState, probs: &ProbabilityGroup) -> Result<SharedSession, ApiError> {
        if let Some(dir) = self.session_dir(&id) {
            fs::create_dir_all(&dir).map_err(|e| ApiError::internal(format!("cannot create {}: {e}", dir.display())))?;
            let stack = state.stack();
            let (r, c) = stack.pixel_spacing();
            ugstack::write_stack(stack, &dir.join(IMAGE))?;
            ugstack::write_probability_group(probs, (stack.slice_spacing(), r, c), &dir.join(PROBS))?;
            persist_state(&dir, &state)?;
        }
        let session = Arc::new(SessionLock::new(state));
        let slot = Arc::new(Slot {
            session: session.clone(),
            touched: AtomicU64::new(self.now()),
        });
        self.sessions.lock().expect("store lock").insert(id, slot);
        Ok(session)
    }

    /// The session with `id`, reloaded from disk if it was evicted or the
    /// service restarted.
    pub async fn get(&self, id: &str) -> Result<SharedSession, ApiError> {
        if let Some(slot) = self.sessions.lock().expect("store lock").get(id) {
            slot.touched.store(self.now(), Ordering::Relaxed);
            return Ok(slot.session.clone());
        }
        let unknown = || ApiError::not_found(format!("unknown session {id}"));
        if !valid_id(id) {
            return Err(unknown());
        }
        let Some(dir) = self.session_dir(id).filter(|d| d.join(LOG).is_file()) else {
            return Err(unknown());
        };
        let state = tokio::task::spawn_blocking(move || load_state(&dir))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))??;
        tracing::info!(session = id, "resumed session from disk");
        let mut sessions = self.sessions.lock().expect("store lock");
        let slot = sessions.entry(id.to_string()).or_insert_with(|| {
            Arc::new(Slot {
                session: Arc::new(SessionLock::new(state)),
                touched: AtomicU64::new(0),
            })
        });
        slot.touched.store(self.now(), Ordering::Relaxed);
        Ok(slot.session.clone())
    }

    /// Write the session's log and mask through to disk, if persistence is on.
    pub fn persist(&self, id: &str, state: &SessionState) -> Result<(), ApiError> {
        match self.session_dir(id) {
            Some(dir) => persist_state(&dir, state),
            None => Ok(()),
        }
    }

    /// Drop sessions idle for longer than the timeout that no request holds.
    /// Returns how many were dropped.
    pub fn evict_idle(&self) -> usize {
        let Some(timeout) = self.config.idle_timeout else {
            return 0;
        };
        let now = self.now();
        let limit = timeout.as_millis() as u64;
        let mut sessions = self.sessions.lock().expect("store lock");
        let before = sessions.len();
        sessions.retain(|_, slot| {
            let idle = now.saturating_sub(slot.touched.load(Ordering::Relaxed));
            idle < limit || Arc::strong_count(&slot.session) > 1
        });
        before - sessions.len()
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn persist_state(dir: &Path, state: &SessionState) -> Result<(), ApiError> {
    let stack = state.stack();
    let (r, c) = stack.pixel_spacing();
    ugstack::write_mask(state.mask(), (stack.slice_spacing(), r, c), &dir.join(MASK))?;
    let tmp = dir.join("log.json.tmp");
    fs::write(&tmp, state.log().to_json()).map_err(|e| ApiError::internal(format!("cannot write log: {e}")))?;
    fs::rename(&tmp, dir.join(LOG)).map_err(|e| ApiError::internal(format!("cannot write log: {e}")))?;
    Ok(())
}

fn load_state(dir: &Path) -> Result<SessionState, ApiError> {
    let stack = ugstack::read_stack(&dir.join(IMAGE))?;
    let probs = ugstack::read_probability_group(&dir.join(PROBS))?;
    let json = fs::read_to_string(dir.join(LOG)).map_err(|e| ApiError::internal(format!("cannot read log: {e}")))?;
    let log = SessionLog::from_json(&json)?;
    Ok(SessionState::replay(stack, &probs, &log)?)
}
