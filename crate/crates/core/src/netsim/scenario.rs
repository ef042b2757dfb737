use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::link::LinkModel;
use super::report::{CycleRecord, Direction, MessageRecord, ReportHeader, ScenarioReport};
use crate::codec::{slot_layout, RecordFormat, TelemetryRecord};
use crate::error::{Error, Result};
use crate::hemodel::{AnalyticsCircuit, HeContext, HeEvaluator, Role, DEFAULT_DEPTH_BUDGET};
use crate::params::{ciphertext_size_bytes, HeSchemeProfile, ParamSet, BSM_PLAINTEXT_BYTES};
use crate::protocol::{CloudState, CycleResult, MessageBody, ProtocolMessage, RsuState, TmcState};
use crate::symcipher::wire::HEADER_BYTES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "hhe")]
    Hhe,
    #[serde(rename = "pure-he")]
    PureHe,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Hhe => "hhe",
            Mode::PureHe => "pure-he",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Workload {
    pub rsu_count: u32,
    pub bsm_rate_hz: f64,
    pub plaintext_bytes_per_msg: u64,
    pub duration_s: f64,
    /// Length of one upload/compute cycle.
    pub cycle_window_s: f64,
    pub mode: Mode,
}

impl Default for Workload {
    fn default() -> Self {
        Workload {
            rsu_count: 1,
            bsm_rate_hz: 10.0,
            plaintext_bytes_per_msg: BSM_PLAINTEXT_BYTES,
            duration_s: 1.0,
            cycle_window_s: 1.0,
            mode: Mode::Hhe,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub workload: Workload,
    pub uplink: LinkModel,
    pub downlink: LinkModel,
    pub param_set: ParamSet,
    pub profile: HeSchemeProfile,
    pub circuit: AnalyticsCircuit,
    pub depth_budget: u32,
    /// `Role::Tmc`, or `Role::Rsu` for RSU-side decryption.
    pub decryptor: Role,
    pub record_format: RecordFormat,
    pub bound_b: Option<f64>,
    pub compute_time_s: f64,
    pub seed: u64,
    /// Injected telemetry, replayed per RSU in order. Synthetic when absent.
    pub telemetry: Option<Vec<TelemetryRecord<f64>>>,
}

impl Scenario {
    pub fn new(workload: Workload, param_set: ParamSet, profile: HeSchemeProfile) -> Self {
        Scenario {
            workload,
            uplink: LinkModel::default(),
            downlink: LinkModel::default(),
            param_set,
            profile,
            circuit: AnalyticsCircuit::Mean,
            depth_budget: DEFAULT_DEPTH_BUDGET,
            decryptor: Role::Tmc,
            record_format: RecordFormat::default(),
            bound_b: None,
            compute_time_s: 0.0,
            seed: 0,
            telemetry: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = &self.workload;
        let bad = |m: String| Err(Error::Config(m));
        if w.rsu_count == 0 {
            return bad("rsu_count must be at least 1".into());
        }
        for (name, v) in [("bsm_rate_hz", w.bsm_rate_hz), ("duration_s", w.duration_s), ("cycle_window_s", w.cycle_window_s)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.compute_time_s.is_finite() && self.compute_time_s >= 0.0) {
            return bad(format!("compute_time_s must be nonnegative, got {}", self.compute_time_s));
        }
        if self.decryptor == Role::Cloud {
            return bad("the cloud cannot hold decryption authority".into());
        }
        if self.circuit.needs_mul() {
            if !self.profile.supports_mul {
                return Err(Error::MulUnsupported(self.profile.scheme.to_string()));
            }
            if self.circuit.mult_depth() > self.depth_budget {
                return Err(Error::DepthExhausted { budget: self.depth_budget });
            }
        }
        if let Some(b) = self.bound_b {
            if !(b.is_finite() && b > 0.0) {
                return Err(Error::NonpositiveBound(b));
            }
        }
        if self.telemetry.as_ref().is_some_and(|t| t.is_empty()) {
            return bad("telemetry file has no records".into());
        }
        self.param_set.validate()?;
        self.profile.validate()?;
        self.uplink.validate()?;
        self.downlink.validate()
    }
}

fn to_ns(s: f64) -> u64 {
    (s * 1e9).round() as u64
}

fn to_s(ns: u64) -> f64 {
    ns as f64 / 1e9
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    CycleClose { cycle: u64 },
    Bsm { rsu: usize },
    UplinkDelivered { msg: usize },
    Compute { cycle: u64 },
    DownlinkDelivered { msg: usize },
}

impl EventKind {
    // Cycle boundaries are processed before arrivals at the same instant.
    fn class(&self) -> u8 {
        match self {
            EventKind::CycleClose { .. } => 0,
            EventKind::Bsm { .. } => 1,
            EventKind::UplinkDelivered { .. } => 2,
            EventKind::Compute { .. } => 3,
            EventKind::DownlinkDelivered { .. } => 4,
        }
    }
}

#[derive(Default)]
struct EventQueue {
    heap: BinaryHeap<Reverse<(u64, u8, u64, EventKind)>>,
    seq: u64,
}

impl EventQueue {
    fn push(&mut self, at: u64, ev: EventKind) {
        self.seq += 1;
        self.heap.push(Reverse((at, ev.class(), self.seq, ev)));
    }

    fn pop(&mut self) -> Option<(u64, EventKind)> {
        self.heap.pop().map(|Reverse((t, _, _, ev))| (t, ev))
    }
}

/// FIFO transmitter for one link direction.
struct Transmitter {
    link: LinkModel,
    busy_until: u64,
}

impl Transmitter {
    fn send(&mut self, now: u64, size: u64) -> (u64, u64, u64) {
        let start = now.max(self.busy_until);
        let ser = to_ns(self.link.serialization_time(size));
        self.busy_until = start + ser;
        (start, ser, self.busy_until + to_ns(self.link.propagation_delay_s))
    }
}

#[derive(Default)]
struct CycleTrack {
    closed: bool,
    emitted: usize,
    delivered: usize,
    close_ns: u64,
    plain_inputs: Vec<Vec<f64>>,
    speeds: Vec<f64>,
    result_msg: Option<usize>,
}

struct TelemetrySource {
    rng: ChaCha20Rng,
    replay: Option<Vec<Vec<TelemetryRecord<f64>>>>,
    cursor: Vec<usize>,
}

impl TelemetrySource {
    fn next(&mut self, rsu: usize, t_ns: u64) -> TelemetryRecord<f64> {
        let timestamp_ms = t_ns / 1_000_000;
        if let Some(replay) = &self.replay {
            let pool = &replay[rsu];
            let mut r = pool[self.cursor[rsu] % pool.len()];
            self.cursor[rsu] += 1;
            r.rsu_id = rsu as u32;
            r.timestamp_ms = timestamp_ms;
            return r;
        }
        TelemetryRecord {
            rsu_id: rsu as u32,
            timestamp_ms,
            speed: self.rng.random_range(0.0..35.0),
            acceleration: self.rng.random_range(-3.0..3.0),
            occupancy: self.rng.random_range(0..=40) as f64,
            queue_length: self.rng.random_range(0..=25) as f64,
        }
    }
}

/// Per-slot error bound for the cycle result, if the circuit is linear.
fn circuit_error_bound(c: &AnalyticsCircuit, inputs: usize, eps: f64) -> Option<f64> {
    match c {
        AnalyticsCircuit::Mean => Some(eps),
        AnalyticsCircuit::Sum => Some(eps * inputs as f64),
        AnalyticsCircuit::WeightedIndex { weights } => Some(eps * weights.iter().map(|w| w.abs()).sum::<f64>()),
        AnalyticsCircuit::Variance => None,
    }
}

/// Run the scenario to completion.
pub fn run_scenario(sc: &Scenario) -> Result<ScenarioReport> {
    sc.validate()?;
    let w = sc.workload;
    let p = sc.param_set;
    let n = w.rsu_count as usize;
    let mut master = ChaCha20Rng::seed_from_u64(sc.seed);

    let ctx = HeContext::new(sc.seed, sc.profile, &[sc.decryptor]);
    let pk = ctx.public_key();
    let mut cloud: CloudState<f64> = CloudState::new(
        vec![p],
        sc.record_format,
        sc.bound_b,
        sc.circuit.clone(),
        HeEvaluator::new(sc.depth_budget),
    );
    let mut tmc = TmcState::new(ctx.handle(Role::Tmc));

    let mut messages: Vec<MessageRecord> = Vec::new();
    let mut in_flight: Vec<Option<ProtocolMessage<f64>>> = Vec::new();

    // Offline phase: key registration, accounted apart from the online timeline.
    let mut rsus = Vec::with_capacity(n);
    for id in 0..n {
        let (mut st, reg) = RsuState::init(id as u32, &p, &pk, sc.record_format, sc.bound_b, master.next_u64())?;
        if w.mode == Mode::Hhe {
            let size = reg.payload_bytes();
            let ser = to_ns(sc.uplink.serialization_time(size));
            let prop = to_ns(sc.uplink.propagation_delay_s);
            messages.push(MessageRecord::new(&reg, Direction::Uplink, &sc.uplink, 0, 0, ser, prop));
            in_flight.push(None);
            st.confirm_registration(&cloud.register(&reg)?)?;
        }
        if sc.decryptor == Role::Rsu {
            st.grant_decryption(ctx.handle(Role::Rsu));
        }
        rsus.push(st);
    }

    let replay = sc.telemetry.as_ref().map(|recs| {
        let mut pools: Vec<Vec<TelemetryRecord<f64>>> = vec![Vec::new(); n];
        for r in recs {
            pools[r.rsu_id as usize % n].push(*r);
        }
        // RSUs without injected rows share the full trace.
        pools.iter().map(|pool| if pool.is_empty() { recs.clone() } else { pool.clone() }).collect()
    });
    let mut source =
        TelemetrySource { rng: ChaCha20Rng::seed_from_u64(master.next_u64()), replay, cursor: vec![0; n] };

    let duration_ns = to_ns(w.duration_s);
    let window_ns = to_ns(w.cycle_window_s).max(1);
    let period_ns = to_ns(1.0 / w.bsm_rate_hz).max(1);
    let cycles = duration_ns.div_ceil(window_ns).max(1);

    let mut q = EventQueue::default();
    for c in 0..cycles {
        q.push((c + 1) * window_ns, EventKind::CycleClose { cycle: c });
    }
    for rsu in 0..n {
        let offset = period_ns * rsu as u64 / n as u64;
        if offset < duration_ns {
            q.push(offset, EventKind::Bsm { rsu });
        }
    }

    let mut uplinks: Vec<Transmitter> = (0..n).map(|_| Transmitter { link: sc.uplink, busy_until: 0 }).collect();
    let mut downlink = Transmitter { link: sc.downlink, busy_until: 0 };
    let mut track: Vec<CycleTrack> = (0..cycles).map(|_| CycleTrack::default()).collect();
    let mut pending_plain: Vec<Vec<TelemetryRecord<f64>>> = vec![Vec::new(); n];
    let mut results: Vec<Option<CycleResult<f64>>> = vec![None; cycles as usize];
    let mut bsm_count: u64 = 0;

    let nonce_bytes_of = |size: u64| size - (HEADER_BYTES + ciphertext_size_bytes(&p)) as u64;
    let send_up = |now: u64,
                   msg: ProtocolMessage<f64>,
                   tx: &mut Transmitter,
                   messages: &mut Vec<MessageRecord>,
                   in_flight: &mut Vec<Option<ProtocolMessage<f64>>>,
                   q: &mut EventQueue| {
        let (start, ser, deliver) = tx.send(now, msg.payload_bytes());
        let prop = deliver - start - ser;
        let mut rec = MessageRecord::new(&msg, Direction::Uplink, &tx.link, now, start, ser, prop);
        if let MessageBody::CiphertextUpload { bytes, .. } = &msg.body {
            rec.nonce_bytes = nonce_bytes_of(bytes.len() as u64);
        }
        messages.push(rec);
        in_flight.push(Some(msg));
        q.push(deliver, EventKind::UplinkDelivered { msg: messages.len() - 1 });
    };

    while let Some((now, ev)) = q.pop() {
        match ev {
            EventKind::Bsm { rsu } => {
                bsm_count += 1;
                let cycle = (now / window_ns).min(cycles - 1);
                let rec = source.next(rsu, now);
                track[cycle as usize].speeds.push(rec.speed);
                match w.mode {
                    Mode::Hhe => {
                        pending_plain[rsu].push(rec);
                        rsus[rsu].receive_bsm(rec);
                    }
                    Mode::PureHe => {
                        track[cycle as usize].plain_inputs.extend(slot_layout(&[rec], p.ell));
                        track[cycle as usize].emitted += 1;
                        let msg = rsus[rsu].upload_pure_he(&rec, cycle)?;
                        send_up(now, msg, &mut uplinks[rsu], &mut messages, &mut in_flight, &mut q);
                    }
                }
                let next = now + period_ns;
                if next < duration_ns {
                    q.push(next, EventKind::Bsm { rsu });
                }
            }
            EventKind::CycleClose { cycle } => {
                if w.mode == Mode::Hhe {
                    for rsu in 0..n {
                        let plain = std::mem::take(&mut pending_plain[rsu]);
                        track[cycle as usize].plain_inputs.extend(slot_layout(&plain, p.ell));
                        for msg in rsus[rsu].upload_cycle(cycle)? {
                            track[cycle as usize].emitted += 1;
                            send_up(now, msg, &mut uplinks[rsu], &mut messages, &mut in_flight, &mut q);
                        }
                    }
                }
                let t = &mut track[cycle as usize];
                t.closed = true;
                t.close_ns = now;
                if t.emitted > 0 && t.delivered == t.emitted {
                    q.push(now + to_ns(sc.compute_time_s), EventKind::Compute { cycle });
                }
            }
            EventKind::UplinkDelivered { msg } => {
                let m = in_flight[msg].take().expect("delivered once");
                cloud.ingest(&m)?;
                let cycle = m.cycle().expect("uploads carry a cycle");
                let t = &mut track[cycle as usize];
                t.delivered += 1;
                if t.closed && t.delivered == t.emitted {
                    q.push(now + to_ns(sc.compute_time_s), EventKind::Compute { cycle });
                }
            }
            EventKind::Compute { cycle } => {
                let out = cloud.compute_cycle(cycle)?;
                let (start, ser, deliver) = downlink.send(now, out.payload_bytes());
                let prop = deliver - start - ser;
                messages.push(MessageRecord::new(&out, Direction::Downlink, &sc.downlink, now, start, ser, prop));
                in_flight.push(Some(out));
                track[cycle as usize].result_msg = Some(messages.len() - 1);
                q.push(deliver, EventKind::DownlinkDelivered { msg: messages.len() - 1 });
            }
            EventKind::DownlinkDelivered { msg } => {
                let m = in_flight[msg].take().expect("delivered once");
                let r = match sc.decryptor {
                    Role::Rsu => {
                        let MessageBody::ResultReturn { cycle, inputs, records, max_fill, .. } = m.body else {
                            unreachable!("downlink carries results only")
                        };
                        CycleResult { cycle, inputs, records, max_fill, values: rsus[0].receive_result(&m)? }
                    }
                    _ => tmc.receive(&m)?,
                };
                let cycle = r.cycle as usize;
                results[cycle] = Some(r);
            }
        }
    }

    let quant_eps: f64 = sc.record_format.max_error();
    let cipher_eps = match w.mode {
        Mode::Hhe => p.decryption_error_bound(&rsus[0].delta_policy()),
        Mode::PureHe => 0.0,
    };
    let mut cycle_records = Vec::with_capacity(cycles as usize);
    for (c, t) in track.iter().enumerate() {
        let ups: Vec<&MessageRecord> =
            messages.iter().filter(|m| !m.offline && m.direction == Direction::Uplink && m.cycle == Some(c as u64)).collect();
        let down = t.result_msg.map(|i| &messages[i]);
        let mut rec = CycleRecord {
            cycle: c as u64,
            close_s: to_s(t.close_ns),
            uploads: ups.len() as u64,
            records: t.speeds.len() as u64,
            uplink_bytes: ups.iter().map(|m| m.payload_bytes).sum(),
            uplink_fragments: ups.iter().map(|m| m.fragments).sum(),
            downlink_bytes: down.map_or(0, |m| m.payload_bytes),
            downlink_fragments: down.map_or(0, |m| m.fragments),
            results: u64::from(down.is_some()),
            result_delivered_s: down.map(|m| m.delivered_s),
            latency_s: down.map(|m| m.delivered_s - to_s(t.close_ns)),
            op_log: None,
            mult_depth: None,
            max_slot_error: None,
            slot_error_bound: None,
            mean_speed: None,
            mean_speed_error_bound: None,
            plaintext_mean_speed: None,
        };
        if let Some(r) = &results[c] {
            let reference = sc.circuit.evaluate_plain(&t.plain_inputs)?;
            let err = r.values.values().iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            rec.max_slot_error = Some(err);
            rec.slot_error_bound = circuit_error_bound(&sc.circuit, t.plain_inputs.len(), quant_eps + cipher_eps);
            if let Some(i) = t.result_msg {
                rec.op_log = messages[i].op_log;
                rec.mult_depth = messages[i].mult_depth;
            }
            if sc.circuit == AnalyticsCircuit::Mean {
                rec.mean_speed = Some(r.field_means()[0]);
                rec.mean_speed_error_bound = Some(r.field_mean_error_bound(quant_eps + cipher_eps));
                rec.plaintext_mean_speed = Some(t.speeds.iter().sum::<f64>() / t.speeds.len() as f64);
            }
        }
        cycle_records.push(rec);
    }

    let header = ReportHeader {
        mode: w.mode,
        param_set: p.name,
        modulus: p.q,
        lambda: p.lambda,
        ell: p.ell,
        coefficient_block_bytes: ciphertext_size_bytes(&p) as u64,
        upload_header_bytes: (HEADER_BYTES + p.nonce_bytes()) as u64,
        profile: sc.profile.scheme,
        profile_ciphertext_bytes: sc.profile.ciphertext_bytes,
        circuit: sc.circuit.clone(),
        decryptor: sc.decryptor,
        rsu_count: w.rsu_count,
        bsm_rate_hz: w.bsm_rate_hz,
        plaintext_bytes_per_msg: w.plaintext_bytes_per_msg,
        duration_s: w.duration_s,
        cycle_window_s: w.cycle_window_s,
        cycles,
        bsm_messages: bsm_count,
        seed: sc.seed,
        uplink: sc.uplink,
        downlink: sc.downlink,
        link_note: "link bandwidths and delays are simulation settings, not measured values".into(),
        quantization_error: quant_eps,
        decryption_error_bound: cipher_eps,
    };
    Ok(ScenarioReport::assemble(header, messages, cycle_records))
}
