//! Destinations for cue batches.

use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;

use crate::clock::SharedClock;
use crate::transport::wire::Packet;
use crate::transport::TransportServer;

use super::CueBatch;

pub trait CueSink: Send + Sync {
    fn emit(&self, batch: &CueBatch);
    fn cancel(&self, batch_id: u32);
}

impl<T: CueSink + ?Sized> CueSink for Arc<T> {
    fn emit(&self, batch: &CueBatch) {
        (**self).emit(batch)
    }

    fn cancel(&self, batch_id: u32) {
        (**self).cancel(batch_id)
    }
}

impl CueSink for TransportServer {
    fn emit(&self, batch: &CueBatch) {
        self.broadcast(&Packet::CueBatch(batch.to_wire()));
    }

    fn cancel(&self, batch_id: u32) {
        self.broadcast(&Packet::CancelBatch { batch_id });
    }
}

pub struct NullSink;

impl CueSink for NullSink {
    fn emit(&self, _: &CueBatch) {}
    fn cancel(&self, _: u32) {}
}

#[derive(Debug, Clone, PartialEq)]
pub enum SinkEvent {
    Batch { at: Duration, batch: CueBatch },
    Cancel { at: Duration, batch_id: u32 },
}

impl SinkEvent {
    pub fn at(&self) -> Duration {
        match self {
            SinkEvent::Batch { at, .. } | SinkEvent::Cancel { at, .. } => *at,
        }
    }
}

/// Keeps every event with the clock time it arrived.
pub struct RecordingSink {
    clock: SharedClock,
    events: Mutex<Vec<SinkEvent>>,
}

impl RecordingSink {
    pub fn new(clock: SharedClock) -> Self {
        Self {
            clock,
            events: Mutex::new(Vec::new()),
        }
    }

    pub fn events(&self) -> Vec<SinkEvent> {
        self.events.lock().clone()
    }

    pub fn take(&self) -> Vec<SinkEvent> {
        std::mem::take(&mut *self.events.lock())
    }

    pub fn batches(&self) -> Vec<CueBatch> {
        self.events
            .lock()
            .iter()
            .filter_map(|e| match e {
                SinkEvent::Batch { batch, .. } => Some(batch.clone()),
                SinkEvent::Cancel { .. } => None,
            })
            .collect()
    }
}

impl CueSink for RecordingSink {
    fn emit(&self, batch: &CueBatch) {
        let at = self.clock.now();
        self.events.lock().push(SinkEvent::Batch {
            at,
            batch: batch.clone(),
        });
    }

    fn cancel(&self, batch_id: u32) {
        let at = self.clock.now();
        self.events.lock().push(SinkEvent::Cancel { at, batch_id });
    }
}

/// Forwards to several sinks in order.
pub struct FanOut(pub Vec<Arc<dyn CueSink>>);

impl CueSink for FanOut {
    fn emit(&self, batch: &CueBatch) {
        for s in &self.0 {
            s.emit(batch);
        }
    }

    fn cancel(&self, batch_id: u32) {
        for s in &self.0 {
            s.cancel(batch_id);
        }
    }
}
