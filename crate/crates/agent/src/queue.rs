use std::collections::VecDeque;
use std::sync::Mutex;

use tokio::sync::Notify;

/// Bounded single-consumer queue that discards its oldest entry when full,
/// so a stalled consumer always resumes on recent data.
pub struct DropOldestQueue<T> {
    state: Mutex<State<T>>,
    notify: Notify,
    capacity: usize,
}

struct State<T> {
    items: VecDeque<T>,
    closed: bool,
}

impl<T> DropOldestQueue<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "queue capacity must be positive");
        DropOldestQueue {
            state: Mutex::new(State {
                items: VecDeque::with_capacity(capacity),
                closed: false,
            }),
            notify: Notify::new(),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.state.lock().unwrap().items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Returns `true` if an older entry had to be discarded.
    pub fn push(&self, item: T) -> bool {
        let evicted = {
            let mut state = self.state.lock().unwrap();
            let evicted = state.items.len() == self.capacity;
            if evicted {
                state.items.pop_front();
            }
            state.items.push_back(item);
            evicted
        };
        self.notify.notify_one();
        evicted
    }

    /// Discards everything queued and returns how many entries that was.
    pub fn clear(&self) -> usize {
        let mut state = self.state.lock().unwrap();
        let n = state.items.len();
        state.items.clear();
        n
    }

    /// No more pushes will follow; `pop` returns `None` once drained.
    pub fn close(&self) {
        self.state.lock().unwrap().closed = true;
        self.notify.notify_one();
    }

    /// Next entry in push order. Cancel safe: an entry is only removed when
    /// the returned future completes.
    pub async fn pop(&self) -> Option<T> {
        loop {
            {
                let mut state = self.state.lock().unwrap();
                if let Some(item) = state.items.pop_front() {
                    return Some(item);
                }
                if state.closed {
                    return None;
                }
            }
            self.notify.notified().await;
        }
    }
}
