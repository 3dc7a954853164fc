//! Session bookkeeping, independent of the transport.
//!
//! A session exists while its patient is connected. The patient side pushes
//! frames through a [`PatientLink`]; at most one [`DoctorLink`] receives them.
//! Frames arriving while no doctor is attached are dropped and counted.
//! Dropping a link is the disconnect: the doctor leaving returns the session
//! to `PatientConnected`, the patient leaving ends the session and closes the
//! doctor's stream.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, Weak};

use axum::extract::ws::Utf8Bytes;
pub use ekg_core::session::{InvalidSessionId, SessionId, MAX_SESSION_ID_LEN};
use thiserror::Error;
use tokio::sync::mpsc;

/// Text payload carried between patient and doctor, forwarded untouched.
pub type Frame = Utf8Bytes;

/// Number of finished sessions whose final counters are kept for inspection.
const FINISHED_HISTORY: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionState {
    Idle,
    PatientConnected,
    Paired,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum RelayError {
    #[error("a patient is already streaming on this session id")]
    DuplicateSession,
    #[error("no patient is streaming on this session id")]
    NoPatient,
    #[error("a doctor is already attached to this session")]
    DoctorTaken,
    #[error("the relay is hosting its maximum number of sessions")]
    TooManySessions,
}

/// Per-session counters.
///
/// Once a session has ended,
/// `frames_in == frames_out + frames_dropped_unpaired + frames_dropped_backpressure + frames_in_flight_at_teardown`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SessionStats {
    pub frames_in: u64,
    /// Frames handed to a doctor connection.
    pub frames_out: u64,
    pub frames_dropped_unpaired: u64,
    /// Frames dropped because the doctor's queue was full.
    pub frames_dropped_backpressure: u64,
    /// Frames queued for a doctor that left before taking them.
    pub frames_in_flight_at_teardown: u64,
    pub doctors_attached: u64,
}

impl SessionStats {
    pub fn is_balanced(&self) -> bool {
        self.frames_in
            == self.frames_out
                + self.frames_dropped_unpaired
                + self.frames_dropped_backpressure
                + self.frames_in_flight_at_teardown
    }
}

#[derive(Debug, Clone)]
pub struct RegistryConfig {
    pub max_sessions: usize,
    /// Frames buffered toward a slow doctor before new ones are dropped.
    pub doctor_queue: usize,
}

impl Default for RegistryConfig {
    fn default() -> Self {
        RegistryConfig {
            max_sessions: 64,
            doctor_queue: 1024,
        }
    }
}

/// What happened to a forwarded frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Forwarded {
    Queued,
    DroppedUnpaired,
    DroppedBackpressure,
}

struct DoctorSlot {
    uid: u64,
    tx: mpsc::Sender<Frame>,
}

#[derive(Default)]
struct SessionInner {
    doctor: Option<DoctorSlot>,
    patient_live: bool,
    stats: SessionStats,
}

struct Session {
    id: SessionId,
    inner: Mutex<SessionInner>,
    registry: Weak<Registry>,
}

impl Drop for Session {
    fn drop(&mut self) {
        if let Some(registry) = self.registry.upgrade() {
            let stats = self.inner.get_mut().map(|i| i.stats).unwrap_or_default();
            let mut finished = registry.finished.lock().unwrap();
            if finished.len() == FINISHED_HISTORY {
                finished.pop_front();
            }
            finished.push_back((self.id.clone(), stats));
        }
    }
}

/// All live sessions of one relay instance.
pub struct Registry {
    config: RegistryConfig,
    sessions: Mutex<HashMap<SessionId, Arc<Session>>>,
    finished: Mutex<VecDeque<(SessionId, SessionStats)>>,
    next_uid: AtomicU64,
}

impl Registry {
    pub fn new(config: RegistryConfig) -> Arc<Self> {
        Arc::new(Registry {
            config,
            sessions: Mutex::new(HashMap::new()),
            finished: Mutex::new(VecDeque::new()),
            next_uid: AtomicU64::new(1),
        })
    }

    pub fn config(&self) -> &RegistryConfig {
        &self.config
    }

    pub fn live_sessions(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }

    fn session(&self, id: &SessionId) -> Option<Arc<Session>> {
        self.sessions.lock().unwrap().get(id).cloned()
    }

    /// Registers a patient stream. Fails while another patient holds `id`.
    pub fn connect_patient(self: &Arc<Self>, id: &SessionId) -> Result<PatientLink, RelayError> {
        let mut sessions = self.sessions.lock().unwrap();
        if sessions.contains_key(id) {
            return Err(RelayError::DuplicateSession);
        }
        if sessions.len() >= self.config.max_sessions {
            return Err(RelayError::TooManySessions);
        }
        let session = Arc::new(Session {
            id: id.clone(),
            inner: Mutex::new(SessionInner {
                patient_live: true,
                ..SessionInner::default()
            }),
            registry: Arc::downgrade(self),
        });
        sessions.insert(id.clone(), Arc::clone(&session));
        Ok(PatientLink {
            registry: Arc::clone(self),
            session,
        })
    }

    /// Whether a doctor may open `id` right now.
    pub fn check_doctor(&self, id: &SessionId) -> Result<(), RelayError> {
        let session = self.session(id).ok_or(RelayError::NoPatient)?;
        let inner = session.inner.lock().unwrap();
        if inner.doctor.is_some() {
            Err(RelayError::DoctorTaken)
        } else {
            Ok(())
        }
    }

    /// Attaches the doctor that will receive `id`'s frames from now on.
    pub fn attach_doctor(self: &Arc<Self>, id: &SessionId) -> Result<DoctorLink, RelayError> {
        let session = self.session(id).ok_or(RelayError::NoPatient)?;
        let mut inner = session.inner.lock().unwrap();
        if !inner.patient_live {
            return Err(RelayError::NoPatient);
        }
        if inner.doctor.is_some() {
            return Err(RelayError::DoctorTaken);
        }
        let (tx, rx) = mpsc::channel(self.config.doctor_queue);
        let uid = self.next_uid.fetch_add(1, Ordering::Relaxed);
        inner.doctor = Some(DoctorSlot { uid, tx });
        inner.stats.doctors_attached += 1;
        drop(inner);
        Ok(DoctorLink { session, uid, rx })
    }

    pub fn state(&self, id: &SessionId) -> SessionState {
        match self.session(id) {
            None => SessionState::Idle,
            Some(session) => {
                if session.inner.lock().unwrap().doctor.is_some() {
                    SessionState::Paired
                } else {
                    SessionState::PatientConnected
                }
            }
        }
    }

    /// Counters of a live session.
    pub fn stats(&self, id: &SessionId) -> Option<SessionStats> {
        self.session(id).map(|s| s.inner.lock().unwrap().stats)
    }

    /// Final counters of ended sessions, oldest first.
    pub fn finished_sessions(&self) -> Vec<(SessionId, SessionStats)> {
        self.finished.lock().unwrap().iter().cloned().collect()
    }

    fn patient_gone(&self, session: &Arc<Session>) {
        {
            let mut sessions = self.sessions.lock().unwrap();
            if sessions.get(&session.id).is_some_and(|s| Arc::ptr_eq(s, session)) {
                sessions.remove(&session.id);
            }
        }
        let mut inner = session.inner.lock().unwrap();
        inner.patient_live = false;
        // Dropping the sender ends the doctor's stream once it has drained
        // the frames already queued.
        inner.doctor = None;
    }
}

/// The patient half of a session. Dropping it ends the session.
pub struct PatientLink {
    registry: Arc<Registry>,
    session: Arc<Session>,
}

impl PatientLink {
    pub fn id(&self) -> &SessionId {
        &self.session.id
    }

    pub fn forward(&self, frame: Frame) -> Forwarded {
        let mut inner = self.session.inner.lock().unwrap();
        inner.stats.frames_in += 1;
        let outcome = match &inner.doctor {
            None => Forwarded::DroppedUnpaired,
            Some(slot) => match slot.tx.try_send(frame) {
                Ok(()) => Forwarded::Queued,
                Err(mpsc::error::TrySendError::Full(_)) => Forwarded::DroppedBackpressure,
                // The doctor is going away; its link has not been dropped yet.
                Err(mpsc::error::TrySendError::Closed(_)) => Forwarded::DroppedUnpaired,
            },
        };
        match outcome {
            Forwarded::Queued => {}
            Forwarded::DroppedUnpaired => inner.stats.frames_dropped_unpaired += 1,
            Forwarded::DroppedBackpressure => inner.stats.frames_dropped_backpressure += 1,
        }
        outcome
    }

    pub fn stats(&self) -> SessionStats {
        self.session.inner.lock().unwrap().stats
    }
}

impl Drop for PatientLink {
    fn drop(&mut self) {
        self.registry.patient_gone(&self.session);
    }
}

/// The doctor half of a session. Dropping it detaches the doctor.
pub struct DoctorLink {
    session: Arc<Session>,
    uid: u64,
    rx: mpsc::Receiver<Frame>,
}

impl DoctorLink {
    pub fn id(&self) -> &SessionId {
        &self.session.id
    }

    /// Next frame, or `None` once the patient has left and every queued
    /// frame has been taken.
    pub async fn recv(&mut self) -> Option<Frame> {
        let frame = self.rx.recv().await?;
        self.session.inner.lock().unwrap().stats.frames_out += 1;
        Some(frame)
    }
}

impl Drop for DoctorLink {
    fn drop(&mut self) {
        self.rx.close();
        let mut remaining = 0;
        while self.rx.try_recv().is_ok() {
            remaining += 1;
        }
        let mut inner = self.session.inner.lock().unwrap();
        inner.stats.frames_in_flight_at_teardown += remaining;
        if inner.doctor.as_ref().is_some_and(|d| d.uid == self.uid) {
            inner.doctor = None;
        }
    }
}
