use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

/// One frame on a model wire, stamped with the virtual time it was sent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireFrame {
    pub tick: u64,
    pub data: Vec<u8>,
}

/// Bounded FIFO with tail drop. Its lock is a leaf: nothing else is taken
/// while it is held.
#[derive(Debug)]
pub(crate) struct Link {
    queue: Mutex<VecDeque<WireFrame>>,
    capacity: usize,
    drops: AtomicU64,
}

impl Link {
    pub(crate) fn new(capacity: usize) -> Self {
        Self {
            queue: Mutex::new(VecDeque::new()),
            capacity,
            drops: AtomicU64::new(0),
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, VecDeque<WireFrame>> {
        self.queue.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Returns false if the frame was tail-dropped.
    pub(crate) fn push(&self, frame: WireFrame) -> bool {
        let mut q = self.lock();
        if q.len() >= self.capacity {
            drop(q);
            self.drops.fetch_add(1, Ordering::Relaxed);
            return false;
        }
        q.push_back(frame);
        true
    }

    pub(crate) fn pop(&self) -> Option<WireFrame> {
        self.lock().pop_front()
    }

    /// Puts back a frame the receiver could not take yet.
    pub(crate) fn unpop(&self, frame: WireFrame) {
        self.lock().push_front(frame);
    }

    pub(crate) fn len(&self) -> usize {
        self.lock().len()
    }

    pub(crate) fn drops(&self) -> u64 {
        self.drops.load(Ordering::Relaxed)
    }
}
