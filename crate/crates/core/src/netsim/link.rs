use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{fragment_count, REFERENCE_MTU};

/// Store-and-forward link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkModel {
    pub bandwidth_bps: f64,
    pub mtu: u64,
    pub per_fragment_overhead: u64,
    pub per_fragment_latency_s: f64,
    pub propagation_delay_s: f64,
}

impl Default for LinkModel {
    /// 100 Mbit/s backhaul, 1400-byte MTU, 5 ms propagation.
    fn default() -> Self {
        LinkModel {
            bandwidth_bps: 100e6,
            mtu: REFERENCE_MTU,
            per_fragment_overhead: 0,
            per_fragment_latency_s: 0.0,
            propagation_delay_s: 0.005,
        }
    }
}

impl LinkModel {
    pub fn validate(&self) -> Result<()> {
        if self.mtu <= self.per_fragment_overhead {
            return Err(Error::InvalidMtu { mtu: self.mtu, overhead: self.per_fragment_overhead });
        }
        if !(self.bandwidth_bps.is_finite() && self.bandwidth_bps > 0.0) {
            return Err(Error::Config(format!("bandwidth must be positive, got {}", self.bandwidth_bps)));
        }
        for (name, v) in [
            ("per_fragment_latency_s", self.per_fragment_latency_s),
            ("propagation_delay_s", self.propagation_delay_s),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be nonnegative, got {v}")));
            }
        }
        Ok(())
    }

    pub fn fragment_payload(&self) -> u64 {
        self.mtu - self.per_fragment_overhead
    }

    /// Time the sender is busy putting `size` bytes on the wire.
    pub fn serialization_time(&self, size_bytes: u64) -> f64 {
        fragment(size_bytes, self)
            .iter()
            .map(|&p| (p + self.per_fragment_overhead) as f64 * 8.0 / self.bandwidth_bps + self.per_fragment_latency_s)
            .sum()
    }
}

/// Split `size_bytes` into IP fragments. A zero-size message is one empty fragment.
pub fn fragment(size_bytes: u64, link: &LinkModel) -> Vec<u64> {
    let cap = link.fragment_payload();
    if size_bytes == 0 {
        return vec![0];
    }
    let full = size_bytes / cap;
    let mut out = vec![cap; full as usize];
    if size_bytes % cap != 0 {
        out.push(size_bytes % cap);
    }
    debug_assert_eq!(Ok(out.len() as u64), fragment_count(size_bytes, link.mtu, link.per_fragment_overhead));
    out
}

pub fn transmit_time(size_bytes: u64, link: &LinkModel) -> f64 {
    link.serialization_time(size_bytes) + link.propagation_delay_s
}
