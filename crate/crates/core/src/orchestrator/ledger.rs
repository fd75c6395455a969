//! Per-dispatch latency accounting.

use std::time::Duration;

use crate::services::ServiceKind;

use super::InteractionKey;

/// `total - preamble` in whole milliseconds, floored at zero.
pub fn realized_latency(total_ms: u32, preamble_ms: u32) -> u32 {
    total_ms.saturating_sub(preamble_ms)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyLedger {
    pub key: InteractionKey,
    pub preamble_batch: u32,
    pub result_batch: u32,
    /// Keypress to preamble handed to the sink.
    pub to_preamble: Duration,
    /// Snapshot plus content services (OCR, LLM).
    pub interaction: Duration,
    pub synthesis: Duration,
    /// Scheduling and handing the result batch to the sink.
    pub emission: Duration,
    /// Individual provider round trips, possibly overlapping.
    pub service_calls: Vec<(ServiceKind, Duration)>,
    pub preamble_ms: u32,
    /// Keypress to result batch emission.
    pub total_ms: u32,
}

impl LatencyLedger {
    pub fn realized_ms(&self) -> u32 {
        realized_latency(self.total_ms, self.preamble_ms)
    }

    /// Sum of the sequential engine-side stages.
    pub fn engine_stages(&self) -> Duration {
        self.to_preamble + self.interaction + self.synthesis + self.emission
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn realized_latency_is_clamped_difference() {
        assert_eq!(realized_latency(2501, 1940), 561);
        assert_eq!(realized_latency(2247, 2200), 47);
        assert_eq!(realized_latency(100, 2200), 0);
    }
}
