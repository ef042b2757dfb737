//! RSU, cloud and TMC roles and the messages between them.
//!
//! Key registration happens once per RSU in the offline phase. Each online
//! cycle the RSU uploads packed symmetric ciphertexts, the cloud transciphers
//! and evaluates the configured circuit, and exactly one HE ciphertext is
//! returned downstream.
//!
//! Every public [`CloudState`] method returns a [`CloudOutput`] type, and
//! neither [`SlotVector`] nor [`SymKey`] implements that trait:
//!
//! ```
//! fn cloud_visible<O: hhe_its::protocol::CloudOutput>() {}
//! cloud_visible::<hhe_its::protocol::RegistrationAck>();
//! cloud_visible::<hhe_its::protocol::ProtocolMessage<f64>>();
//! ```
//!
//! ```compile_fail
//! fn cloud_visible<O: hhe_its::protocol::CloudOutput>() {}
//! cloud_visible::<hhe_its::SlotVector<f64>>();
//! ```
//!
//! ```compile_fail
//! fn cloud_visible<O: hhe_its::protocol::CloudOutput>() {}
//! cloud_visible::<hhe_its::SymKey>();
//! ```

use std::collections::BTreeMap;

use serde::Serialize;

use crate::codec::{pack_records, records_per_vector, RecordFormat, SlotVector, TelemetryRecord, FIELDS_PER_RECORD};
use crate::error::{Error, Result};
use crate::hemodel::{
    model_decrypt, model_encrypt, model_encrypt_key, model_transcipher, AnalyticsCircuit, EncryptedSymKey,
    HeEvaluator, HePublicKey, KeyHolderHandle, ShadowCiphertext,
};
use crate::params::{DeltaPolicy, ParamSet};
use crate::scalar::Real;
use crate::symcipher::{encrypt_fresh, keygen, wire, NonceLedger, SymKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MessageKind {
    KeyRegistration,
    CiphertextUpload,
    ResultReturn,
}

impl MessageKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MessageKind::KeyRegistration => "key-registration",
            MessageKind::CiphertextUpload => "ciphertext-upload",
            MessageKind::ResultReturn => "result-return",
        }
    }
}

#[derive(Debug, Clone)]
pub enum MessageBody<T> {
    KeyRegistration { rsu_id: u32, key: EncryptedSymKey },
    /// Serialized symmetric ciphertext carrying `records` packed records.
    CiphertextUpload { rsu_id: u32, cycle: u64, records: usize, bytes: Vec<u8> },
    /// Pure-HE baseline: one record encrypted directly under the HE scheme.
    PureHeUpload { rsu_id: u32, cycle: u64, records: usize, ciphertext: ShadowCiphertext<T> },
    /// `max_fill` is the largest record count of any input.
    ResultReturn { cycle: u64, inputs: usize, records: usize, max_fill: usize, result: ShadowCiphertext<T> },
}

#[derive(Debug, Clone)]
pub struct ProtocolMessage<T> {
    pub body: MessageBody<T>,
    /// Set on key-registration traffic, which is accounted separately.
    pub offline: bool,
}

impl<T: Real> ProtocolMessage<T> {
    pub fn kind(&self) -> MessageKind {
        match self.body {
            MessageBody::KeyRegistration { .. } => MessageKind::KeyRegistration,
            MessageBody::CiphertextUpload { .. } | MessageBody::PureHeUpload { .. } => MessageKind::CiphertextUpload,
            MessageBody::ResultReturn { .. } => MessageKind::ResultReturn,
        }
    }

    pub fn payload_bytes(&self) -> u64 {
        match &self.body {
            MessageBody::KeyRegistration { key, .. } => key.size_bytes(),
            MessageBody::CiphertextUpload { bytes, .. } => bytes.len() as u64,
            MessageBody::PureHeUpload { ciphertext, .. } => ciphertext.size_bytes(),
            MessageBody::ResultReturn { result, .. } => result.size_bytes(),
        }
    }

    pub fn rsu_id(&self) -> Option<u32> {
        match self.body {
            MessageBody::KeyRegistration { rsu_id, .. }
            | MessageBody::CiphertextUpload { rsu_id, .. }
            | MessageBody::PureHeUpload { rsu_id, .. } => Some(rsu_id),
            MessageBody::ResultReturn { .. } => None,
        }
    }

    pub fn cycle(&self) -> Option<u64> {
        match self.body {
            MessageBody::KeyRegistration { .. } => None,
            MessageBody::CiphertextUpload { cycle, .. }
            | MessageBody::PureHeUpload { cycle, .. }
            | MessageBody::ResultReturn { cycle, .. } => Some(cycle),
        }
    }
}

/// Types the cloud is allowed to hand back to callers.
pub trait CloudOutput {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegistrationAck {
    pub rsu_id: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestReceipt {
    pub cycle: u64,
    pub buffered: usize,
}

impl CloudOutput for () {}
impl CloudOutput for usize {}
impl CloudOutput for Vec<u32> {}
impl CloudOutput for RegistrationAck {}
impl CloudOutput for IngestReceipt {}
impl<T> CloudOutput for ProtocolMessage<T> {}
impl<O: CloudOutput> CloudOutput for Result<O> {}

pub struct RsuState<T> {
    id: u32,
    param: ParamSet,
    key: SymKey,
    dp: DeltaPolicy<T>,
    fmt: RecordFormat,
    ledger: NonceLedger,
    pk: HePublicKey,
    pending: Vec<TelemetryRecord<T>>,
    registered: bool,
    authority: Option<KeyHolderHandle>,
}

impl<T: Real> RsuState<T> {
    /// Generate the RSU key and its offline registration message.
    ///
    /// `bound_b` defaults to the format's loose bound for `p`.
    pub fn init(
        id: u32,
        p: &ParamSet,
        pk: &HePublicKey,
        fmt: RecordFormat,
        bound_b: Option<T>,
        seed: u64,
    ) -> Result<(Self, ProtocolMessage<T>)> {
        let dp = DeltaPolicy::for_params(p, bound_b.unwrap_or_else(|| fmt.loose_bound(p.ell)))?;
        let key = keygen(p, seed);
        let msg = registration(id, &key, pk);
        let st = RsuState {
            id,
            param: *p,
            key,
            dp,
            fmt,
            ledger: NonceLedger::new(),
            pk: *pk,
            pending: Vec::new(),
            registered: false,
            authority: None,
        };
        Ok((st, msg))
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn param(&self) -> &ParamSet {
        &self.param
    }

    pub fn delta_policy(&self) -> DeltaPolicy<T> {
        self.dp
    }

    pub fn is_registered(&self) -> bool {
        self.registered
    }

    pub fn confirm_registration(&mut self, ack: &RegistrationAck) -> Result<()> {
        if ack.rsu_id != self.id {
            return Err(Error::UnknownRsu(ack.rsu_id));
        }
        self.registered = true;
        Ok(())
    }

    /// Replace the symmetric key. Uploads stop until the new key is confirmed.
    pub fn rotate_key(&mut self, seed: u64) -> ProtocolMessage<T> {
        self.key = keygen(&self.param, seed);
        self.ledger = NonceLedger::new();
        self.registered = false;
        registration(self.id, &self.key, &self.pk)
    }

    pub fn grant_decryption(&mut self, handle: KeyHolderHandle) {
        self.authority = Some(handle);
    }

    pub fn receive_bsm(&mut self, rec: TelemetryRecord<T>) {
        self.pending.push(rec);
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn nonces_used(&self) -> usize {
        self.ledger.consumed()
    }

    /// Encrypt and drain everything received since the last cycle.
    pub fn upload_cycle(&mut self, cycle: u64) -> Result<Vec<ProtocolMessage<T>>> {
        if !self.registered {
            return Err(Error::UnregisteredRsu(self.id));
        }
        let vectors = pack_records(&self.pending, &self.param, &self.fmt, Some(self.dp.b))?;
        let per_vector = records_per_vector(self.param.ell);
        let total = self.pending.len();
        let mut out = Vec::with_capacity(vectors.len());
        for (i, m) in vectors.iter().enumerate() {
            let ct = encrypt_fresh(m, &self.key, &self.dp, &mut self.ledger)?;
            out.push(ProtocolMessage {
                body: MessageBody::CiphertextUpload {
                    rsu_id: self.id,
                    cycle,
                    records: per_vector.min(total - i * per_vector),
                    bytes: wire::serialize(&ct),
                },
                offline: false,
            });
        }
        self.pending.clear();
        Ok(out)
    }

    /// Pure-HE baseline upload of a single record in slots `0..4`.
    pub fn upload_pure_he(&self, rec: &TelemetryRecord<T>, cycle: u64) -> Result<ProtocolMessage<T>> {
        let m = pack_records(std::slice::from_ref(rec), &self.param, &self.fmt, Some(self.dp.b))?;
        let ciphertext = model_encrypt(&m[0], &self.pk);
        Ok(ProtocolMessage {
            body: MessageBody::PureHeUpload { rsu_id: self.id, cycle, records: 1, ciphertext },
            offline: false,
        })
    }

    /// RSU-side decryption, available only when configured.
    pub fn receive_result(&self, msg: &ProtocolMessage<T>) -> Result<SlotVector<T>> {
        let handle = self.authority.as_ref().ok_or(Error::Unauthorized)?;
        match &msg.body {
            MessageBody::ResultReturn { result, .. } => model_decrypt(result, handle),
            _ => Err(Error::UnexpectedMessage { role: "RSU", kind: msg.kind().as_str() }),
        }
    }
}

fn registration<T>(rsu_id: u32, key: &SymKey, pk: &HePublicKey) -> ProtocolMessage<T> {
    ProtocolMessage { body: MessageBody::KeyRegistration { rsu_id, key: model_encrypt_key(key, pk) }, offline: true }
}

#[derive(Debug, Default)]
struct CycleBuffer<T> {
    inputs: Vec<ShadowCiphertext<T>>,
    records: usize,
    max_fill: usize,
}

pub struct CloudState<T> {
    params: Vec<ParamSet>,
    bound_b: Option<T>,
    fmt: RecordFormat,
    keys: BTreeMap<u32, EncryptedSymKey>,
    buffers: BTreeMap<u64, CycleBuffer<T>>,
    circuit: AnalyticsCircuit,
    evaluator: HeEvaluator,
}

impl<T: Real> CloudState<T> {
    /// `params` lists the parameter sets the cloud can parse. `bound_b` must
    /// match the RSUs' setting.
    pub fn new(
        params: Vec<ParamSet>,
        fmt: RecordFormat,
        bound_b: Option<T>,
        circuit: AnalyticsCircuit,
        evaluator: HeEvaluator,
    ) -> Self {
        CloudState { params, bound_b, fmt, keys: BTreeMap::new(), buffers: BTreeMap::new(), circuit, evaluator }
    }

    /// Store `Enc_pk(k)` for an RSU. Re-registering replaces the key.
    pub fn register(&mut self, msg: &ProtocolMessage<T>) -> Result<RegistrationAck> {
        match &msg.body {
            MessageBody::KeyRegistration { rsu_id, key } => {
                self.keys.insert(*rsu_id, key.clone());
                Ok(RegistrationAck { rsu_id: *rsu_id })
            }
            _ => Err(Error::UnexpectedMessage { role: "cloud registration", kind: msg.kind().as_str() }),
        }
    }

    pub fn registered_rsus(&self) -> Vec<u32> {
        self.keys.keys().copied().collect()
    }

    /// Transcipher (or accept a pure-HE ciphertext) and buffer it for its cycle.
    pub fn ingest(&mut self, msg: &ProtocolMessage<T>) -> Result<IngestReceipt> {
        let (cycle, records, ct) = match &msg.body {
            MessageBody::CiphertextUpload { rsu_id, cycle, records, bytes } => {
                let ek = self.keys.get(rsu_id).ok_or(Error::UnknownRsu(*rsu_id))?;
                let params = &self.params;
                let sct = wire::deserialize(bytes, |name| params.iter().find(|p| p.name == name).copied())?;
                let p = sct.param();
                let b = self.bound_b.unwrap_or_else(|| self.fmt.loose_bound(p.ell));
                let dp = DeltaPolicy::for_params(p, b)?;
                (*cycle, *records, model_transcipher(&sct, ek, &dp)?)
            }
            MessageBody::PureHeUpload { cycle, records, ciphertext, .. } => (*cycle, *records, ciphertext.clone()),
            _ => return Err(Error::UnexpectedMessage { role: "cloud ingest", kind: msg.kind().as_str() }),
        };
        let buf = self.buffers.entry(cycle).or_insert_with(|| CycleBuffer { inputs: Vec::new(), records: 0, max_fill: 0 });
        buf.inputs.push(ct);
        buf.records += records;
        buf.max_fill = buf.max_fill.max(records);
        Ok(IngestReceipt { cycle, buffered: buf.inputs.len() })
    }

    pub fn buffered(&self, cycle: u64) -> usize {
        self.buffers.get(&cycle).map_or(0, |b| b.inputs.len())
    }

    /// Evaluate the circuit over one cycle and clear its buffer.
    pub fn compute_cycle(&mut self, cycle: u64) -> Result<ProtocolMessage<T>> {
        let buf = self.buffers.remove(&cycle).ok_or(Error::EmptyCycle)?;
        let result = self.evaluator.eval_circuit(&self.circuit, &buf.inputs)?;
        Ok(ProtocolMessage {
            body: MessageBody::ResultReturn {
                cycle,
                inputs: buf.inputs.len(),
                records: buf.records,
                max_fill: buf.max_fill,
                result,
            },
            offline: false,
        })
    }
}

#[allow(dead_code)]
fn cloud_surface_is_opaque<T: Real>(c: &mut CloudState<T>, m: &ProtocolMessage<T>) {
    fn visible<O: CloudOutput>(_: &O) {}
    visible(&c.register(m));
    visible(&c.registered_rsus());
    visible(&c.ingest(m));
    visible(&c.buffered(0));
    visible(&c.compute_cycle(0));
}

/// A decrypted per-cycle result.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleResult<T> {
    pub cycle: u64,
    pub inputs: usize,
    pub records: usize,
    pub max_fill: usize,
    pub values: SlotVector<T>,
}

impl<T: Real> CycleResult<T> {
    /// Per-field average over all records of a mean-circuit result.
    ///
    /// Record positions up to `max_fill` are summed, so padding slots of
    /// partly filled inputs contribute their decryption noise.
    pub fn field_means(&self) -> [T; FIELDS_PER_RECORD] {
        let mut acc = [T::zero(); FIELDS_PER_RECORD];
        if self.records == 0 {
            return acc;
        }
        for rec in self.values.values().chunks(FIELDS_PER_RECORD).take(self.max_fill) {
            for (a, v) in acc.iter_mut().zip(rec) {
                *a = *a + *v;
            }
        }
        let scale = T::from_usize(self.inputs).expect("usize") / T::from_usize(self.records).expect("usize");
        acc.map(|a| a * scale)
    }

    /// Error bound on [`field_means`](Self::field_means) given a per-slot bound.
    /// Equals `per_slot` when every input is filled to `max_fill`.
    pub fn field_mean_error_bound(&self, per_slot: T) -> T {
        let terms = T::from_usize(self.inputs * self.max_fill).expect("usize");
        per_slot * terms / T::from_usize(self.records.max(1)).expect("usize")
    }
}

pub struct TmcState<T> {
    authority: KeyHolderHandle,
    results: BTreeMap<u64, CycleResult<T>>,
}

impl<T: Real> TmcState<T> {
    pub fn new(authority: KeyHolderHandle) -> Self {
        TmcState { authority, results: BTreeMap::new() }
    }

    pub fn receive(&mut self, msg: &ProtocolMessage<T>) -> Result<CycleResult<T>> {
        match &msg.body {
            MessageBody::ResultReturn { cycle, inputs, records, max_fill, result } => {
                let values = model_decrypt(result, &self.authority)?;
                let r = CycleResult { cycle: *cycle, inputs: *inputs, records: *records, max_fill: *max_fill, values };
                self.results.insert(*cycle, r.clone());
                Ok(r)
            }
            _ => Err(Error::UnexpectedMessage { role: "TMC", kind: msg.kind().as_str() }),
        }
    }

    pub fn results(&self) -> impl Iterator<Item = &CycleResult<T>> {
        self.results.values()
    }
}
