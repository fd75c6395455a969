//! Content-addressed response cache with per-kind expiry.

use std::collections::HashMap;
use std::time::Duration;

use parking_lot::Mutex;

use crate::clock::SharedClock;

use super::{CacheKey, ServiceKind, ServiceResponse};

const DEFAULT_CAPACITY: usize = 4096;

pub fn ttl_for(kind: ServiceKind) -> Duration {
    match kind {
        ServiceKind::Ocr => Duration::from_secs(600),
        _ => Duration::from_secs(30),
    }
}

struct Entry {
    kind: ServiceKind,
    stored_at: Duration,
    response: ServiceResponse,
}

pub struct ResponseCache {
    entries: Mutex<HashMap<CacheKey, Entry>>,
    clock: SharedClock,
    capacity: usize,
}

impl ResponseCache {
    pub fn new(clock: SharedClock) -> Self {
        Self::with_capacity(clock, DEFAULT_CAPACITY)
    }

    pub fn with_capacity(clock: SharedClock, capacity: usize) -> Self {
        Self {
            entries: Mutex::new(HashMap::new()),
            clock,
            capacity: capacity.max(1),
        }
    }

    pub fn get(&self, key: &CacheKey, kind: ServiceKind) -> Option<ServiceResponse> {
        let now = self.clock.now();
        let mut entries = self.entries.lock();
        let hit = match entries.get(key) {
            Some(e) if e.kind == kind && now.saturating_sub(e.stored_at) < ttl_for(kind) => {
                Some(e.response.clone())
            }
            Some(_) => None,
            None => return None,
        };
        if hit.is_none() {
            entries.remove(key);
        }
        hit
    }

    pub fn insert(&self, key: CacheKey, kind: ServiceKind, response: ServiceResponse) {
        let now = self.clock.now();
        let mut entries = self.entries.lock();
        if entries.len() >= self.capacity && !entries.contains_key(&key) {
            entries.retain(|_, e| now.saturating_sub(e.stored_at) < ttl_for(e.kind));
            if entries.len() >= self.capacity {
                if let Some(oldest) = entries
                    .iter()
                    .min_by_key(|(_, e)| e.stored_at)
                    .map(|(k, _)| *k)
                {
                    entries.remove(&oldest);
                }
            }
        }
        entries.insert(
            key,
            Entry {
                kind,
                stored_at: now,
                response,
            },
        );
    }

    pub fn len(&self) -> usize {
        self.entries.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
