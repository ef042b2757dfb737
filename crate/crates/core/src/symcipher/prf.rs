//! Keyed keystream stand-in built on SHAKE256.
//!
//! Slot `i` is drawn from `SHAKE256("hhe-its/prf" ‖ k ‖ nc ‖ i)` by rejection
//! sampling `⌈log q⌉`-bit words below `q`. The noise seed is
//! `SHAKE256("hhe-its/noise" ‖ k ‖ nc)` truncated to 32 bytes. No security claim
//! is made for this construction; it reproduces the interface, size and noise
//! behaviour of the cipher, not its round structure.

use sha3::digest::{ExtendableOutput, Update, XofReader};
use sha3::Shake256;

use super::Nonce;
use crate::ring::center;

const PRF_DOMAIN: &[u8] = b"hhe-its/prf";
const NOISE_DOMAIN: &[u8] = b"hhe-its/noise";

fn absorb_key_nonce(domain: &[u8], key: &[i64], nonce: &Nonce) -> Shake256 {
    let mut h = Shake256::default();
    h.update(&(domain.len() as u32).to_le_bytes());
    h.update(domain);
    h.update(&(key.len() as u32).to_le_bytes());
    for k in key {
        h.update(&k.to_le_bytes());
    }
    h.update(&nonce.lambda().to_le_bytes());
    h.update(&nonce.value().to_le_bytes());
    h
}

/// Uniform centered residues, one per slot.
pub(crate) fn uniform_slots(key: &[i64], nonce: &Nonce, ell: usize, q: u64, log_q_ceil: u32) -> Vec<i64> {
    let base = absorb_key_nonce(PRF_DOMAIN, key, nonce);
    let mask = if log_q_ceil >= 64 { u64::MAX } else { (1u64 << log_q_ceil) - 1 };
    (0..ell)
        .map(|slot| {
            let mut h = base.clone();
            h.update(&(slot as u32).to_le_bytes());
            let mut reader = h.finalize_xof();
            let mut word = [0u8; 8];
            loop {
                reader.read(&mut word);
                let v = u64::from_le_bytes(word) & mask;
                if v < q {
                    break center(v as i128, q);
                }
            }
        })
        .collect()
}

pub(crate) fn noise_seed(key: &[i64], nonce: &Nonce) -> [u8; 32] {
    let mut seed = [0u8; 32];
    absorb_key_nonce(NOISE_DOMAIN, key, nonce).finalize_xof().read(&mut seed);
    seed
}
