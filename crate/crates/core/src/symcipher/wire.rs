//! Bit-exact ciphertext wire format.
//!
//! ```text
//! +----------+----------------+---------------------------------------+
//! | param id | nonce (λ/8 B)  | ℓ × (c+1)-bit two's complement coeffs |
//! | 1 byte   | big-endian     | MSB-first, zero-padded to a byte      |
//! +----------+----------------+---------------------------------------+
//! ```
//!
//! The coefficient block is exactly `⌈ℓ·(c+1)/8⌉` bytes.

use super::{Nonce, SymCiphertext};
use crate::error::{Error, Result};
use crate::params::{ciphertext_size_bytes, ParamSet, ParamSetName};

pub const HEADER_BYTES: usize = 1;

/// Total serialized size for a parameter set.
pub fn serialized_len(p: &ParamSet) -> usize {
    HEADER_BYTES + p.nonce_bytes() + ciphertext_size_bytes(p)
}

struct BitWriter {
    out: Vec<u8>,
    acc: u128,
    filled: u32,
}

impl BitWriter {
    fn push(&mut self, value: u64, width: u32) {
        let mask = (1u128 << width) - 1;
        self.acc = (self.acc << width) | (value as u128 & mask);
        self.filled += width;
        while self.filled >= 8 {
            self.filled -= 8;
            self.out.push((self.acc >> self.filled) as u8);
        }
        self.acc &= (1u128 << self.filled) - 1;
    }

    fn finish(mut self) -> Vec<u8> {
        if self.filled > 0 {
            self.out.push((self.acc << (8 - self.filled)) as u8);
        }
        self.out
    }
}

pub fn serialize(ct: &SymCiphertext) -> Vec<u8> {
    let p = ct.param();
    let width = p.coefficient_bits();
    let mut out = Vec::with_capacity(serialized_len(p));
    out.push(p.name.wire_id());
    out.extend_from_slice(&ct.nonce().to_bytes());
    let mut w = BitWriter { out, acc: 0, filled: 0 };
    for &c in ct.coeffs() {
        w.push(c as u64, width);
    }
    w.finish()
}

/// Parse a ciphertext, resolving its parameter set through `resolve`.
pub fn deserialize<F>(bytes: &[u8], resolve: F) -> Result<SymCiphertext>
where
    F: Fn(ParamSetName) -> Option<ParamSet>,
{
    let (&id, rest) = bytes
        .split_first()
        .ok_or_else(|| Error::MalformedHeader("empty message".into()))?;
    let name = ParamSetName::from_wire_id(id)
        .ok_or_else(|| Error::MalformedHeader(format!("unknown parameter id {id}")))?;
    let p = resolve(name).ok_or_else(|| Error::MalformedHeader(format!("parameter set {name} not loaded")))?;
    let needed = serialized_len(&p);
    if bytes.len() < needed {
        return Err(Error::TruncatedPayload { needed, got: bytes.len() });
    }
    if bytes.len() > needed {
        return Err(Error::MalformedHeader(format!("{} trailing bytes", bytes.len() - needed)));
    }
    let (nonce_bytes, block) = rest.split_at(p.nonce_bytes());
    let nonce = Nonce::from_bytes(nonce_bytes)?;

    let width = p.coefficient_bits();
    let mut coeffs = Vec::with_capacity(p.ell);
    let mut acc: u128 = 0;
    let mut filled = 0u32;
    let mut bytes_iter = block.iter();
    for _ in 0..p.ell {
        while filled < width {
            let &b = bytes_iter.next().expect("length checked above");
            acc = (acc << 8) | b as u128;
            filled += 8;
        }
        filled -= width;
        let raw = (acc >> filled) as u64 & ((1u64 << width) - 1);
        acc &= (1u128 << filled) - 1;
        // Sign-extend from `width` bits.
        let shift = 64 - width;
        coeffs.push(((raw << shift) as i64) >> shift);
    }
    if acc != 0 {
        return Err(Error::MalformedHeader("nonzero padding bits".into()));
    }
    SymCiphertext::new(p, nonce, coeffs)
}

/// Parse against the built-in parameter sets.
pub fn deserialize_builtin(bytes: &[u8]) -> Result<SymCiphertext> {
    deserialize(bytes, |name| Some(ParamSet::builtin(name)))
}
