//! Hybrid homomorphic encryption for roadside telemetry.
//!
//! RSUs encrypt fixed-point telemetry under a lightweight LWE-style symmetric
//! cipher and upload compact ciphertexts. The cloud transciphers them into a
//! (modelled) HE scheme, evaluates analytics, and forwards one result per
//! cycle to the traffic management center.

pub mod acceptance;
pub mod codec;
pub mod config;
pub mod error;
pub mod hemodel;
pub mod netsim;
pub mod params;
pub mod protocol;
pub mod ring;
pub mod roundtrip;
pub mod scalar;
pub mod symcipher;
pub mod tables;

pub use codec::{FixedPointFormat, RecordFormat, SlotVector, TelemetryRecord};
pub use error::{Error, Result};
pub use hemodel::{AnalyticsCircuit, HeEvaluator, ShadowCiphertext};
pub use params::{DeltaPolicy, HeScheme, HeSchemeProfile, ParamSet, ParamSetName};
pub use scalar::Real;
pub use symcipher::{Nonce, NonceLedger, SymCiphertext, SymKey};

pub type SlotVectorF64 = SlotVector<f64>;
pub type SlotVectorF32 = SlotVector<f32>;
pub type DeltaPolicyF64 = DeltaPolicy<f64>;
pub type DeltaPolicyF32 = DeltaPolicy<f32>;
pub type ShadowCiphertextF64 = ShadowCiphertext<f64>;
pub type ShadowCiphertextF32 = ShadowCiphertext<f32>;
pub type TelemetryRecordF64 = TelemetryRecord<f64>;
