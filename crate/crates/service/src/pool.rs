//! A fixed set of model replicas behind a semaphore. Each replica serves one
//! request at a time, on the blocking thread pool.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use basnet::model::BasNet;
use tokio::sync::Semaphore;

#[derive(Debug, PartialEq, Eq)]
pub enum PoolError {
    /// Every replica is busy and the wait queue is full.
    Busy,
    /// The inference closure panicked.
    Crashed,
}

pub struct ReplicaPool {
    replicas: Vec<Mutex<BasNet>>,
    permits: Arc<Semaphore>,
    queue_capacity: usize,
    admitted: AtomicUsize,
    waiting: AtomicUsize,
    completed: AtomicUsize,
}

struct Admission<'a>(&'a AtomicUsize);

impl Drop for Admission<'_> {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

impl ReplicaPool {
    /// `size` copies of `model`; up to `queue_capacity` further requests may
    /// wait for one.
    pub fn new(model: BasNet, size: usize, queue_capacity: usize) -> Self {
        let size = size.max(1);
        Self {
            replicas: (0..size).map(|_| Mutex::new(model.clone())).collect(),
            permits: Arc::new(Semaphore::new(size)),
            queue_capacity,
            admitted: AtomicUsize::new(0),
            waiting: AtomicUsize::new(0),
            completed: AtomicUsize::new(0),
        }
    }

    pub fn size(&self) -> usize {
        self.replicas.len()
    }

    /// Requests admitted but not yet holding a replica.
    pub fn queue_depth(&self) -> usize {
        self.waiting.load(Ordering::SeqCst)
    }

    pub fn in_flight(&self) -> usize {
        self.admitted.load(Ordering::SeqCst)
    }

    /// Closures that ran to completion since startup.
    pub fn completed(&self) -> usize {
        self.completed.load(Ordering::SeqCst)
    }

    /// Runs `f` on a free replica, waiting for one if the queue has room.
    pub async fn run<T, F>(self: &Arc<Self>, f: F) -> Result<T, PoolError>
    where
        T: Send + 'static,
        F: FnOnce(&mut BasNet) -> T + Send + 'static,
    {
        if self.admitted.fetch_add(1, Ordering::SeqCst) >= self.replicas.len() + self.queue_capacity
        {
            self.admitted.fetch_sub(1, Ordering::SeqCst);
            return Err(PoolError::Busy);
        }
        let _admission = Admission(&self.admitted);
        self.waiting.fetch_add(1, Ordering::SeqCst);
        let permit = self.permits.clone().acquire_owned().await;
        self.waiting.fetch_sub(1, Ordering::SeqCst);
        let permit = permit.expect("semaphore is never closed");
        let pool = Arc::clone(self);
        tokio::task::spawn_blocking(move || {
            let _permit = permit;
            // A permit guarantees at least one replica is unlocked.
            let mut guard = pool
                .replicas
                .iter()
                .find_map(|m| m.try_lock().ok())
                .expect("a free replica for every permit");
            let out = f(&mut guard);
            pool.completed.fetch_add(1, Ordering::SeqCst);
            out
        })
        .await
        .map_err(|_| PoolError::Crashed)
    }
}
