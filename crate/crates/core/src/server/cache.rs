// SPDX-License-Identifier: MIT OR Apache-2.0

//! Bounded cache of traced sessions with one computation per key in flight.

use std::future::Future;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;
use tokio::sync::OnceCell;

use crate::glossstore::Session;
use crate::model::Trace;
use crate::projection::ProjectionBasis;

/// A session with its trace and fitted basis.
#[derive(Debug)]
pub struct SessionView {
    pub session: Session,
    pub trace: Trace,
    pub basis: ProjectionBasis,
}

impl SessionView {
    fn bytes(&self) -> usize {
        let t = &self.trace;
        let states = t.n_tokens() * (2 * t.n_layers + t.n_states()) * t.d_model;
        4 * (states + t.n_tokens() * t.vocab_size)
    }
}

struct Slot {
    key: String,
    cell: Arc<OnceCell<Arc<SessionView>>>,
    bytes: usize,
}

/// Least-recently-used cache bounded by entry count and by approximate
/// memory. The most recent entry is always kept, whatever its size.
pub struct TraceCache {
    slots: Mutex<Vec<Slot>>,
    capacity: usize,
    byte_budget: usize,
    computations: AtomicUsize,
}

impl TraceCache {
    pub fn new(capacity: usize, byte_budget: usize) -> Self {
        TraceCache {
            slots: Mutex::new(Vec::new()),
            capacity: capacity.max(1),
            byte_budget,
            computations: AtomicUsize::new(0),
        }
    }

    /// Number of computations started so far.
    pub fn computations(&self) -> usize {
        self.computations.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.slots.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, key: &str) -> bool {
        self.slots.lock().iter().any(|s| s.key == key && s.cell.initialized())
    }

    /// Moves `key` to the front, creating an empty slot if needed.
    fn touch(&self, key: &str) -> Arc<OnceCell<Arc<SessionView>>> {
        let mut slots = self.slots.lock();
        let slot = match slots.iter().position(|s| s.key == key) {
            Some(i) => slots.remove(i),
            None => Slot {
                key: key.to_string(),
                cell: Arc::new(OnceCell::new()),
                bytes: 0,
            },
        };
        let cell = slot.cell.clone();
        slots.insert(0, slot);
        Self::evict(&mut slots, self.capacity, self.byte_budget);
        cell
    }

    fn evict(slots: &mut Vec<Slot>, capacity: usize, budget: usize) {
        slots.truncate(capacity);
        let mut total: usize = slots.iter().map(|s| s.bytes).sum();
        while slots.len() > 1 && total > budget {
            let gone = slots.pop().expect("len > 1");
            total -= gone.bytes;
        }
    }

    fn settle(&self, key: &str, cell: &Arc<OnceCell<Arc<SessionView>>>) {
        let mut slots = self.slots.lock();
        if let Some(i) = slots.iter().position(|s| s.key == key && Arc::ptr_eq(&s.cell, cell)) {
            match cell.get() {
                Some(view) => slots[i].bytes = view.bytes(),
                None => {
                    slots.remove(i);
                }
            }
        }
        Self::evict(&mut slots, self.capacity, self.byte_budget);
    }

    /// Returns the cached view for `key`, running `compute` if absent.
    /// Concurrent callers for the same key share one computation.
    pub async fn get_or_compute<E, F, Fut>(&self, key: &str, compute: F) -> Result<Arc<SessionView>, E>
    where
        F: FnOnce() -> Fut,
        Fut: Future<Output = Result<SessionView, E>>,
    {
        let cell = self.touch(key);
        let result = cell
            .get_or_try_init(|| async {
                self.computations.fetch_add(1, Ordering::Relaxed);
                compute().await.map(Arc::new)
            })
            .await
            .cloned();
        self.settle(key, &cell);
        result
    }

    /// Stores an already computed view.
    pub fn insert(&self, view: SessionView) -> Arc<SessionView> {
        let key = view.session.session_id.clone();
        let view = Arc::new(view);
        let cell = Arc::new(OnceCell::new_with(Some(view.clone())));
        let mut slots = self.slots.lock();
        slots.retain(|s| s.key != key);
        slots.insert(
            0,
            Slot {
                key,
                cell,
                bytes: view.bytes(),
            },
        );
        Self::evict(&mut slots, self.capacity, self.byte_budget);
        view
    }
}
