use std::path::Path;

use serde::Serialize;

use super::link::{fragment, LinkModel};
use super::scenario::Mode;
use crate::error::{Error, Result};
use crate::hemodel::{AnalyticsCircuit, OpLog, Role};
use crate::params::{HeScheme, ParamSetName};
use crate::protocol::{MessageBody, MessageKind, ProtocolMessage};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Uplink,
    Downlink,
}

impl Direction {
    fn as_str(self) -> &'static str {
        match self {
            Direction::Uplink => "uplink",
            Direction::Downlink => "downlink",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MessageRecord {
    pub cycle: Option<u64>,
    pub rsu_id: Option<u32>,
    pub kind: MessageKind,
    pub direction: Direction,
    pub offline: bool,
    pub payload_bytes: u64,
    pub fragments: u64,
    /// Nonce bytes carried by a symmetric upload.
    pub nonce_bytes: u64,
    pub enqueue_s: f64,
    pub queuing_delay_s: f64,
    pub serialization_delay_s: f64,
    pub propagation_delay_s: f64,
    pub delivered_s: f64,
    pub op_log: Option<OpLog>,
    pub mult_depth: Option<u32>,
}

fn secs(ns: u64) -> f64 {
    ns as f64 / 1e9
}

impl MessageRecord {
    pub(crate) fn new<T: Real>(
        msg: &ProtocolMessage<T>,
        direction: Direction,
        link: &LinkModel,
        enqueue_ns: u64,
        start_ns: u64,
        serialization_ns: u64,
        propagation_ns: u64,
    ) -> Self {
        let (op_log, mult_depth) = match &msg.body {
            MessageBody::ResultReturn { result, .. } => (Some(result.op_log()), Some(result.mult_depth_used())),
            _ => (None, None),
        };
        let size = msg.payload_bytes();
        MessageRecord {
            cycle: msg.cycle(),
            rsu_id: msg.rsu_id(),
            kind: msg.kind(),
            direction,
            offline: msg.offline,
            payload_bytes: size,
            fragments: fragment(size, link).len() as u64,
            nonce_bytes: 0,
            enqueue_s: secs(enqueue_ns),
            queuing_delay_s: secs(start_ns - enqueue_ns),
            serialization_delay_s: secs(serialization_ns),
            propagation_delay_s: secs(propagation_ns),
            delivered_s: secs(start_ns + serialization_ns + propagation_ns),
            op_log,
            mult_depth,
        }
    }

    pub fn latency_s(&self) -> f64 {
        self.delivered_s - self.enqueue_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleRecord {
    pub cycle: u64,
    pub close_s: f64,
    pub uploads: u64,
    pub records: u64,
    pub uplink_bytes: u64,
    pub uplink_fragments: u64,
    pub downlink_bytes: u64,
    pub downlink_fragments: u64,
    /// Downstream ciphertexts produced for this cycle.
    pub results: u64,
    pub result_delivered_s: Option<f64>,
    /// Cycle close to decrypted result.
    pub latency_s: Option<f64>,
    pub op_log: Option<OpLog>,
    pub mult_depth: Option<u32>,
    /// Largest per-slot deviation from the plaintext circuit.
    pub max_slot_error: Option<f64>,
    pub slot_error_bound: Option<f64>,
    pub mean_speed: Option<f64>,
    pub mean_speed_error_bound: Option<f64>,
    pub plaintext_mean_speed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportHeader {
    pub mode: Mode,
    pub param_set: ParamSetName,
    pub modulus: u64,
    pub lambda: u32,
    pub ell: usize,
    pub coefficient_block_bytes: u64,
    pub upload_header_bytes: u64,
    pub profile: HeScheme,
    pub profile_ciphertext_bytes: u64,
    pub circuit: AnalyticsCircuit,
    pub decryptor: Role,
    pub rsu_count: u32,
    pub bsm_rate_hz: f64,
    pub plaintext_bytes_per_msg: u64,
    pub duration_s: f64,
    pub cycle_window_s: f64,
    pub cycles: u64,
    pub bsm_messages: u64,
    pub seed: u64,
    pub uplink: LinkModel,
    pub downlink: LinkModel,
    pub link_note: String,
    pub quantization_error: f64,
    pub decryption_error_bound: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Totals {
    pub offline_messages: u64,
    pub offline_bytes: u64,
    pub offline_fragments: u64,
    pub uplink_messages: u64,
    pub uplink_bytes: u64,
    pub uplink_fragments: u64,
    pub downlink_messages: u64,
    pub downlink_bytes: u64,
    pub downlink_fragments: u64,
    pub nonce_overhead_bits: u64,
    pub plaintext_bytes: u64,
    /// Online uplink bytes per plaintext byte.
    pub uplink_expansion: f64,
}

/// Nearest-rank percentiles.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LatencySummary {
    pub count: u64,
    pub mean_s: f64,
    pub p50_s: f64,
    pub p95_s: f64,
    pub p99_s: f64,
    pub max_s: f64,
}

impl LatencySummary {
    pub fn of(mut xs: Vec<f64>) -> Self {
        if xs.is_empty() {
            return LatencySummary::default();
        }
        xs.sort_by(f64::total_cmp);
        let n = xs.len();
        let rank = |pct: f64| xs[((pct / 100.0 * n as f64).ceil() as usize).clamp(1, n) - 1];
        LatencySummary {
            count: n as u64,
            mean_s: xs.iter().sum::<f64>() / n as f64,
            p50_s: rank(50.0),
            p95_s: rank(95.0),
            p99_s: rank(99.0),
            max_s: xs[n - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub header: ReportHeader,
    pub totals: Totals,
    pub upload_latency: LatencySummary,
    pub queuing_delay: LatencySummary,
    pub cycle_latency: LatencySummary,
    pub cycles: Vec<CycleRecord>,
    pub messages: Vec<MessageRecord>,
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ScenarioReport {
    pub(crate) fn assemble(header: ReportHeader, messages: Vec<MessageRecord>, cycles: Vec<CycleRecord>) -> Self {
        let mut t = Totals::default();
        for m in &messages {
            let (count, bytes, frags) = match (m.offline, m.direction) {
                (true, _) => (&mut t.offline_messages, &mut t.offline_bytes, &mut t.offline_fragments),
                (false, Direction::Uplink) => (&mut t.uplink_messages, &mut t.uplink_bytes, &mut t.uplink_fragments),
                (false, Direction::Downlink) => {
                    (&mut t.downlink_messages, &mut t.downlink_bytes, &mut t.downlink_fragments)
                }
            };
            *count += 1;
            *bytes += m.payload_bytes;
            *frags += m.fragments;
            t.nonce_overhead_bits += m.nonce_bytes * 8;
        }
        t.plaintext_bytes = header.bsm_messages * header.plaintext_bytes_per_msg;
        t.uplink_expansion = if t.plaintext_bytes == 0 { 0.0 } else { t.uplink_bytes as f64 / t.plaintext_bytes as f64 };
        let online_up = || messages.iter().filter(|m| !m.offline && m.direction == Direction::Uplink);
        ScenarioReport {
            upload_latency: LatencySummary::of(online_up().map(MessageRecord::latency_s).collect()),
            queuing_delay: LatencySummary::of(online_up().map(|m| m.queuing_delay_s).collect()),
            cycle_latency: LatencySummary::of(cycles.iter().filter_map(|c| c.latency_s).collect()),
            header,
            totals: t,
            cycles,
            messages,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn messages_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "cycle",
            "rsu_id",
            "kind",
            "direction",
            "offline",
            "payload_bytes",
            "fragments",
            "nonce_bytes",
            "enqueue_s",
            "queuing_delay_s",
            "serialization_delay_s",
            "propagation_delay_s",
            "delivered_s",
        ])
        .expect("in-memory write");
        for m in &self.messages {
            w.write_record([
                opt(m.cycle),
                opt(m.rsu_id),
                m.kind.as_str().to_string(),
                m.direction.as_str().to_string(),
                m.offline.to_string(),
                m.payload_bytes.to_string(),
                m.fragments.to_string(),
                m.nonce_bytes.to_string(),
                m.enqueue_s.to_string(),
                m.queuing_delay_s.to_string(),
                m.serialization_delay_s.to_string(),
                m.propagation_delay_s.to_string(),
                m.delivered_s.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    pub fn cycles_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "cycle",
            "close_s",
            "uploads",
            "records",
            "uplink_bytes",
            "uplink_fragments",
            "downlink_bytes",
            "downlink_fragments",
            "results",
            "result_delivered_s",
            "latency_s",
            "op_add",
            "op_mul",
            "op_scalar_mul",
            "op_transcipher",
            "mult_depth",
            "max_slot_error",
            "slot_error_bound",
            "mean_speed",
            "mean_speed_error_bound",
            "plaintext_mean_speed",
        ])
        .expect("in-memory write");
        for c in &self.cycles {
            w.write_record([
                c.cycle.to_string(),
                c.close_s.to_string(),
                c.uploads.to_string(),
                c.records.to_string(),
                c.uplink_bytes.to_string(),
                c.uplink_fragments.to_string(),
                c.downlink_bytes.to_string(),
                c.downlink_fragments.to_string(),
                c.results.to_string(),
                opt(c.result_delivered_s),
                opt(c.latency_s),
                opt(c.op_log.map(|o| o.add)),
                opt(c.op_log.map(|o| o.mul)),
                opt(c.op_log.map(|o| o.scalar_mul)),
                opt(c.op_log.map(|o| o.transcipher)),
                opt(c.mult_depth),
                opt(c.max_slot_error),
                opt(c.slot_error_bound),
                opt(c.mean_speed),
                opt(c.mean_speed_error_bound),
                opt(c.plaintext_mean_speed),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    /// Write `report.json`, `cycles.csv` and `messages.csv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let io = |e: std::io::Error| Error::Io(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        std::fs::write(dir.join("report.json"), self.to_json()).map_err(io)?;
        std::fs::write(dir.join("cycles.csv"), self.cycles_csv()).map_err(io)?;
        std::fs::write(dir.join("messages.csv"), self.messages_csv()).map_err(io)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank() {
        let s = LatencySummary::of((1..=100).map(f64::from).collect());
        assert_eq!((s.p50_s, s.p95_s, s.p99_s, s.max_s), (50.0, 95.0, 99.0, 100.0));
        assert_eq!(s.mean_s, 50.5);
        let one = LatencySummary::of(vec![3.0]);
        assert_eq!((one.p50_s, one.p99_s), (3.0, 3.0));
        assert_eq!(LatencySummary::of(vec![]).count, 0);
        let s = LatencySummary::of(vec![4.0, 1.0, 3.0, 2.0]);
        assert_eq!((s.p50_s, s.p95_s), (2.0, 4.0));
    }
}
