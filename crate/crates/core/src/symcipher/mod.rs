//! Rubato-form symmetric encryption `ct = ⌊Δ·m⌉ + z mod q`.
//!
//! The keystream `z` is a keyed pseudorandom residue per slot plus a discrete
//! Gaussian perturbation of width αq drawn from a seed derived from `(k, nc)`.
//! Decryption removes only the pseudorandom part, so the Gaussian term stays
//! in the recovered message as bounded error `≤ (T + 0.5)/Δ`.

mod gaussian;
mod prf;
pub mod wire;

use std::collections::HashSet;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

pub use gaussian::GaussianSampler;
pub use wire::{deserialize, deserialize_builtin, serialize, serialized_len};

use crate::codec::SlotVector;
use crate::error::{Error, Result};
use crate::params::{DeltaPolicy, ParamSet};
use crate::ring::{center, is_centered};
use crate::scalar::Real;

/// Keystream overrides for precision tests.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct KeystreamHooks {
    pub zero_prf: bool,
    pub zero_noise: bool,
}

/// Symmetric key `k ∈ Z_q^n`.
#[derive(Clone, PartialEq)]
pub struct SymKey {
    entries: Vec<i64>,
    param: ParamSet,
    hooks: KeystreamHooks,
}

impl std::fmt::Debug for SymKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SymKey")
            .field("param", &self.param.name)
            .field("n", &self.entries.len())
            .finish_non_exhaustive()
    }
}

impl SymKey {
    pub fn entries(&self) -> &[i64] {
        &self.entries
    }

    pub fn param(&self) -> &ParamSet {
        &self.param
    }

    pub fn hooks(&self) -> KeystreamHooks {
        self.hooks
    }

    #[cfg(any(test, feature = "test-hooks"))]
    pub fn with_hooks(mut self, hooks: KeystreamHooks) -> Self {
        self.hooks = hooks;
        self
    }
}

/// Key with `n` entries uniform over `Z_q`, deterministic in `seed`.
pub fn keygen(p: &ParamSet, seed: u64) -> SymKey {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mask = (1u64 << p.log_q_ceil) - 1;
    let entries = (0..p.n)
        .map(|_| loop {
            let v = rng.next_u64() & mask;
            if v < p.q {
                break center(v as i128, p.q);
            }
        })
        .collect();
    SymKey { entries, param: *p, hooks: KeystreamHooks::default() }
}

/// λ-bit nonce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Nonce {
    value: u128,
    lambda: u32,
}

impl Nonce {
    pub fn new(value: u128, lambda: u32) -> Result<Self> {
        if lambda == 0 || lambda > 128 || lambda % 8 != 0 {
            return Err(Error::MalformedHeader(format!("nonce width {lambda} unsupported")));
        }
        if lambda < 128 && value >> lambda != 0 {
            return Err(Error::MalformedHeader(format!("nonce {value:#x} wider than {lambda} bits")));
        }
        Ok(Nonce { value, lambda })
    }

    /// Counter nonce: the 64-bit counter occupies the low bits of the λ-bit field.
    pub fn from_counter(counter: u64, lambda: u32) -> Result<Self> {
        Self::new(counter as u128, lambda)
    }

    pub fn value(&self) -> u128 {
        self.value
    }

    pub fn lambda(&self) -> u32 {
        self.lambda
    }

    /// Big-endian, `λ/8` bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = (self.lambda / 8) as usize;
        self.value.to_be_bytes()[16 - n..].to_vec()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.is_empty() || bytes.len() > 16 {
            return Err(Error::MalformedHeader(format!("nonce of {} bytes", bytes.len())));
        }
        let mut buf = [0u8; 16];
        buf[16 - bytes.len()..].copy_from_slice(bytes);
        Self::new(u128::from_be_bytes(buf), bytes.len() as u32 * 8)
    }
}

/// Per-key record of consumed nonces plus the counter that issues fresh ones.
///
/// Single writer per key.
#[derive(Debug, Clone, Default)]
pub struct NonceLedger {
    used: HashSet<u128>,
    next: Option<u64>,
    exhausted: bool,
}

impl NonceLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Resume from a given counter value.
    pub fn starting_at(counter: u64) -> Self {
        NonceLedger { next: Some(counter), ..Self::default() }
    }

    /// Next unused counter nonce.
    pub fn fresh(&mut self, lambda: u32) -> Result<Nonce> {
        loop {
            if self.exhausted {
                return Err(Error::NonceExhausted);
            }
            let counter = self.next.unwrap_or(0);
            match counter.checked_add(1) {
                Some(n) => self.next = Some(n),
                None => self.exhausted = true,
            }
            let nonce = Nonce::from_counter(counter, lambda)?;
            if !self.used.contains(&nonce.value) {
                return Ok(nonce);
            }
        }
    }

    pub fn consume(&mut self, nonce: &Nonce) -> Result<()> {
        if !self.used.insert(nonce.value) {
            return Err(Error::NonceReuse(nonce.value));
        }
        Ok(())
    }

    pub fn is_used(&self, nonce: &Nonce) -> bool {
        self.used.contains(&nonce.value)
    }

    pub fn consumed(&self) -> usize {
        self.used.len()
    }
}

/// Nonce plus ℓ centered residues.
#[derive(Debug, Clone, PartialEq)]
pub struct SymCiphertext {
    nonce: Nonce,
    coeffs: Vec<i64>,
    param: ParamSet,
}

impl SymCiphertext {
    pub fn new(param: ParamSet, nonce: Nonce, coeffs: Vec<i64>) -> Result<Self> {
        if coeffs.len() != param.ell {
            return Err(Error::SlotCount { expected: param.ell, actual: coeffs.len() });
        }
        if nonce.lambda != param.lambda {
            return Err(Error::MalformedHeader(format!(
                "nonce width {} differs from lambda {}",
                nonce.lambda, param.lambda
            )));
        }
        if let Some(&bad) = coeffs.iter().find(|&&c| !is_centered(c, param.q)) {
            return Err(Error::CoefficientOutOfRange { value: bad, q: param.q });
        }
        Ok(SymCiphertext { nonce, coeffs, param })
    }

    pub fn nonce(&self) -> &Nonce {
        &self.nonce
    }

    pub fn coeffs(&self) -> &[i64] {
        &self.coeffs
    }

    pub fn param(&self) -> &ParamSet {
        &self.param
    }
}

fn check_same_params(a: &ParamSet, b: &ParamSet) -> Result<()> {
    if a != b {
        return Err(Error::ParamMismatch { left: a.name, right: b.name });
    }
    Ok(())
}

fn check_nonce(key: &SymKey, nonce: &Nonce) -> Result<()> {
    if nonce.lambda != key.param.lambda {
        return Err(Error::MalformedHeader(format!(
            "nonce width {} differs from lambda {}",
            nonce.lambda, key.param.lambda
        )));
    }
    Ok(())
}

/// The noise-free part of the keystream: one uniform residue per slot.
pub fn prf_stream(key: &SymKey, nonce: &Nonce) -> Result<Vec<i64>> {
    check_nonce(key, nonce)?;
    let p = &key.param;
    if key.hooks.zero_prf {
        return Ok(vec![0; p.ell]);
    }
    Ok(prf::uniform_slots(&key.entries, nonce, p.ell, p.q, p.log_q_ceil))
}

/// Gaussian keystream perturbation, deterministic in `(k, nc)`.
pub fn noise_stream(key: &SymKey, nonce: &Nonce) -> Result<Vec<i64>> {
    check_nonce(key, nonce)?;
    let p = &key.param;
    if key.hooks.zero_noise {
        return Ok(vec![0; p.ell]);
    }
    let sampler = GaussianSampler::new(p.alpha_q);
    let mut rng = ChaCha20Rng::from_seed(prf::noise_seed(&key.entries, nonce));
    Ok((0..p.ell).map(|_| sampler.sample(&mut rng)).collect())
}

/// Noisy keystream `z = PRF(k, nc) + g mod q`, centered.
pub fn keystream(key: &SymKey, nonce: &Nonce) -> Result<Vec<i64>> {
    let q = key.param.q;
    let prf = prf_stream(key, nonce)?;
    let noise = noise_stream(key, nonce)?;
    Ok(prf.iter().zip(&noise).map(|(&z, &g)| center(z as i128 + g as i128, q)).collect())
}

/// Encrypt under `nonce`, recording it in `ledger`.
pub fn encrypt<T: Real>(
    m: &SlotVector<T>,
    key: &SymKey,
    nonce: Nonce,
    dp: &DeltaPolicy<T>,
    ledger: &mut NonceLedger,
) -> Result<SymCiphertext> {
    let p = key.param;
    if m.len() != p.ell {
        return Err(Error::SlotCount { expected: p.ell, actual: m.len() });
    }
    let norm = m.l1_norm();
    if !(norm <= dp.b) {
        return Err(Error::BoundViolation {
            norm: norm.to_f64().unwrap_or(f64::NAN),
            bound: dp.b.to_f64().unwrap_or(f64::NAN),
        });
    }
    check_nonce(key, &nonce)?;
    if ledger.is_used(&nonce) {
        return Err(Error::NonceReuse(nonce.value));
    }
    let z = keystream(key, &nonce)?;
    ledger.consume(&nonce)?;
    let coeffs = m
        .values()
        .iter()
        .zip(&z)
        .map(|(&mi, &zi)| {
            let scaled = (dp.delta * mi).round_half_down().to_i64().expect("|Δ·m| ≤ q/16");
            center(scaled as i128 + zi as i128, p.q)
        })
        .collect();
    Ok(SymCiphertext { nonce, coeffs, param: p })
}

/// Encrypt under the ledger's next counter nonce.
pub fn encrypt_fresh<T: Real>(
    m: &SlotVector<T>,
    key: &SymKey,
    dp: &DeltaPolicy<T>,
    ledger: &mut NonceLedger,
) -> Result<SymCiphertext> {
    let nonce = ledger.fresh(key.param.lambda)?;
    encrypt(m, key, nonce, dp, ledger)
}

/// `m̂_i = centered(ct_i − PRF_i) / Δ`.
pub fn decrypt<T: Real>(ct: &SymCiphertext, key: &SymKey, dp: &DeltaPolicy<T>) -> Result<SlotVector<T>> {
    check_same_params(&ct.param, &key.param)?;
    let prf = prf_stream(key, &ct.nonce)?;
    let q = ct.param.q;
    let values: Vec<T> = ct
        .coeffs
        .iter()
        .zip(&prf)
        .map(|(&c, &z)| T::from_i64(center(c as i128 - z as i128, q)).expect("i64 converts") / dp.delta)
        .collect();
    // The noise term can push the 1-norm past b; widen by the worst-case error.
    let slack = ct.param.decryption_error_bound(dp) * T::from_usize(values.len()).expect("usize");
    let norm: T = values.iter().map(|v| v.abs()).sum();
    SlotVector::new(values, (dp.b + slack).max(norm))
}
