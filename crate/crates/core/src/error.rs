use thiserror::Error;

use crate::params::ParamSetName;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown parameter set `{0}`")]
    UnknownName(String),
    #[error("unknown HE scheme `{0}`")]
    UnknownScheme(String),
    #[error("invalid parameter set {name}: {reason}")]
    InvalidParamSet { name: ParamSetName, reason: String },
    #[error("plaintext size must be positive")]
    ZeroPlaintext,
    #[error("mtu {mtu} must exceed per-fragment overhead {overhead}")]
    InvalidMtu { mtu: u64, overhead: u64 },
    #[error("1-norm bound must be positive and finite, got {0}")]
    NonpositiveBound(f64),
    #[error("invalid fixed-point format Q(total {total_bits}, fraction {fraction_bits})")]
    InvalidFormat { total_bits: u32, fraction_bits: u32 },
    #[error("value {value} outside fixed-point range [{min}, {max}]")]
    OutOfRange { value: f64, min: f64, max: f64 },
    #[error("slot vector has {actual} slots, parameter set needs {expected}")]
    SlotCount { expected: usize, actual: usize },
    #[error("record count {count} inconsistent with {vectors} slot vectors of {per_vector} records")]
    CountMismatch { count: usize, vectors: usize, per_vector: usize },
    #[error("1-norm {norm} exceeds bound {bound}")]
    BoundViolation { norm: f64, bound: f64 },
    #[error("nonce {0:#x} already used under this key")]
    NonceReuse(u128),
    #[error("nonce counter exhausted")]
    NonceExhausted,
    #[error("parameter set mismatch: {left} vs {right}")]
    ParamMismatch { left: ParamSetName, right: ParamSetName },
    #[error("malformed ciphertext header: {0}")]
    MalformedHeader(String),
    #[error("truncated payload: need {needed} bytes, got {got}")]
    TruncatedPayload { needed: usize, got: usize },
    #[error("coefficient {value} outside centered range for q = {q}")]
    CoefficientOutOfRange { value: i64, q: u64 },
    #[error("multiplicative depth budget {budget} exhausted")]
    DepthExhausted { budget: u32 },
    #[error("HE profile mismatch")]
    ProfileMismatch,
    #[error("scheme {0} does not support ciphertext multiplication")]
    MulUnsupported(String),
    #[error("circuit input error: {0}")]
    CircuitInput(String),
    #[error("caller does not hold decryption authority")]
    Unauthorized,
    #[error("RSU {0} has not completed key registration")]
    UnregisteredRsu(u32),
    #[error("no key registered for RSU {0}")]
    UnknownRsu(u32),
    #[error("computation cycle has no buffered ciphertexts")]
    EmptyCycle,
    #[error("{role} cannot handle a {kind} message")]
    UnexpectedMessage { role: &'static str, kind: &'static str },
    #[error("inconsistent configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
