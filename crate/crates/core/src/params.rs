//! Rubato parameter sets, HE scheme size profiles and the closed-form size
//! formulas used throughout the pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Bits per plaintext slot assumed by the payload tables.
pub const DEFAULT_SLOT_BITS: u32 = 16;

/// Plaintext size of one ITS message in the pure-HE baseline.
pub const BSM_PLAINTEXT_BYTES: u64 = 200;

/// Reference MTU used by the fragmentation tables.
pub const REFERENCE_MTU: u64 = 1400;

/// Largest modulus width the i64 ring arithmetic supports.
pub const MAX_MODULUS_BITS: u32 = 62;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ParamSetName {
    #[serde(rename = "Par-80S")]
    Par80S,
    #[serde(rename = "Par-80M")]
    Par80M,
    #[serde(rename = "Par-80L")]
    Par80L,
    #[serde(rename = "Par-128S")]
    Par128S,
    #[serde(rename = "Par-128M")]
    Par128M,
    #[serde(rename = "Par-128L")]
    Par128L,
}

impl ParamSetName {
    pub const ALL: [ParamSetName; 6] = [
        ParamSetName::Par80S,
        ParamSetName::Par80M,
        ParamSetName::Par80L,
        ParamSetName::Par128S,
        ParamSetName::Par128M,
        ParamSetName::Par128L,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ParamSetName::Par80S => "Par-80S",
            ParamSetName::Par80M => "Par-80M",
            ParamSetName::Par80L => "Par-80L",
            ParamSetName::Par128S => "Par-128S",
            ParamSetName::Par128M => "Par-128M",
            ParamSetName::Par128L => "Par-128L",
        }
    }

    /// One-byte identifier used in the ciphertext wire header.
    pub fn wire_id(self) -> u8 {
        self as u8
    }

    pub fn from_wire_id(id: u8) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    /// The published (λ, n, ℓ, ⌈log q⌉, αq) row.
    fn table_row(self) -> (u32, usize, usize, u32, f64) {
        match self {
            ParamSetName::Par80S => (80, 16, 12, 26, 11.1),
            ParamSetName::Par80M => (80, 36, 32, 25, 2.7),
            ParamSetName::Par80L => (80, 64, 60, 25, 1.6),
            ParamSetName::Par128S => (128, 16, 12, 26, 10.5),
            ParamSetName::Par128M => (128, 36, 32, 25, 4.1),
            ParamSetName::Par128L => (128, 64, 60, 25, 4.1),
        }
    }
}

impl fmt::Display for ParamSetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ParamSetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownName(s.to_string()))
    }
}

/// One Rubato parameter row with its prime modulus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub name: ParamSetName,
    /// Security level in bits; also the nonce width.
    pub lambda: u32,
    /// Key length.
    pub n: usize,
    /// Slot count.
    pub ell: usize,
    /// ⌈log₂ q⌉.
    pub log_q_ceil: u32,
    /// Width of the discrete Gaussian keystream noise.
    pub alpha_q: f64,
    pub q: u64,
}

impl ParamSet {
    /// Built-in row with `q = select_prime(⌈log q⌉)`.
    pub fn builtin(name: ParamSetName) -> Self {
        let (lambda, n, ell, log_q_ceil, alpha_q) = name.table_row();
        ParamSet {
            name,
            lambda,
            n,
            ell,
            log_q_ceil,
            alpha_q,
            q: select_prime(log_q_ceil),
        }
    }

    /// Replace the modulus, keeping the rest of the row.
    pub fn with_modulus(mut self, q: u64) -> Result<Self> {
        self.q = q;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Err(Error::InvalidParamSet { name: self.name, reason });
        let c = self.log_q_ceil;
        if !(2..=MAX_MODULUS_BITS).contains(&c) {
            return fail(format!("modulus width {c} outside [2, {MAX_MODULUS_BITS}]"));
        }
        if self.q <= 1u64 << (c - 1) || self.q >= 1u64 << c {
            return fail(format!("q = {} not in (2^{}, 2^{c})", self.q, c - 1));
        }
        if !is_prime(self.q) {
            return fail(format!("q = {} is not prime", self.q));
        }
        if self.lambda == 0 || self.lambda > 128 || self.lambda % 8 != 0 {
            return fail(format!("lambda = {} must be a positive multiple of 8 up to 128", self.lambda));
        }
        if self.n == 0 || self.ell == 0 {
            return fail("n and ell must be positive".into());
        }
        if !(self.alpha_q.is_finite() && self.alpha_q > 0.0) {
            return fail(format!("alpha_q = {} must be positive", self.alpha_q));
        }
        Ok(())
    }

    /// Serialized width of one centered coefficient.
    pub fn coefficient_bits(&self) -> u32 {
        self.log_q_ceil + 1
    }

    pub fn nonce_bytes(&self) -> usize {
        (self.lambda / 8) as usize
    }

    /// Hard tail cutoff of the keystream noise, `⌈10·αq⌉`.
    pub fn noise_tail(&self) -> i64 {
        (10.0 * self.alpha_q).ceil() as i64
    }

    /// Worst-case per-slot decryption error `(T + 0.5)/Δ`.
    pub fn decryption_error_bound<T: Real>(&self, delta: &DeltaPolicy<T>) -> T {
        (T::of(self.noise_tail() as f64) + T::of(0.5)) / delta.delta
    }
}

/// Look up one of the six built-in parameter sets by name.
pub fn load_paramset(name: &str) -> Result<ParamSet> {
    Ok(ParamSet::builtin(name.parse()?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HeScheme {
    #[serde(rename = "BFV")]
    Bfv,
    #[serde(rename = "BGV")]
    Bgv,
    #[serde(rename = "CKKS-add")]
    CkksAdd,
    #[serde(rename = "CKKS-addmul")]
    CkksAddMul,
    #[serde(rename = "Rubato-hom")]
    RubatoHom,
}

impl HeScheme {
    pub const ALL: [HeScheme; 5] = [
        HeScheme::Bfv,
        HeScheme::Bgv,
        HeScheme::CkksAdd,
        HeScheme::CkksAddMul,
        HeScheme::RubatoHom,
    ];

    /// Schemes listed in the pure-HE half of the expansion table.
    pub const PURE_HE: [HeScheme; 4] = [
        HeScheme::Bfv,
        HeScheme::Bgv,
        HeScheme::CkksAdd,
        HeScheme::CkksAddMul,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HeScheme::Bfv => "BFV",
            HeScheme::Bgv => "BGV",
            HeScheme::CkksAdd => "CKKS-add",
            HeScheme::CkksAddMul => "CKKS-addmul",
            HeScheme::RubatoHom => "Rubato-hom",
        }
    }

    /// Label used in rendered tables.
    pub fn label(self) -> &'static str {
        match self {
            HeScheme::Bfv => "BFV",
            HeScheme::Bgv => "BGV",
            HeScheme::CkksAdd => "CKKS (add)",
            HeScheme::CkksAddMul => "CKKS (add+mul)",
            HeScheme::RubatoHom => "Rubato (hom)",
        }
    }
}

impl fmt::Display for HeScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HeScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownScheme(s.to_string()))
    }
}

/// Size and capability record of one HE scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeSchemeProfile {
    pub scheme: HeScheme,
    pub ciphertext_bytes: u64,
    pub supports_mul: bool,
}

impl HeSchemeProfile {
    pub fn builtin(scheme: HeScheme) -> Self {
        let (ciphertext_bytes, supports_mul) = match scheme {
            HeScheme::Bfv => (131_939, true),
            HeScheme::Bgv => (394_573, true),
            HeScheme::CkksAdd => (787_791, false),
            HeScheme::CkksAddMul => (1_050_129, true),
            // No published size; sized like the add+mul CKKS target it transciphers into.
            HeScheme::RubatoHom => (1_050_129, true),
        };
        HeSchemeProfile { scheme, ciphertext_bytes, supports_mul }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ciphertext_bytes == 0 {
            return Err(Error::Config(format!("{} ciphertext size must be positive", self.scheme)));
        }
        Ok(())
    }
}

/// Scaling factor Δ for messages with ‖m‖₁ ≤ b.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaPolicy<T> {
    pub b: T,
    pub delta: T,
}

impl<T: Real> DeltaPolicy<T> {
    pub fn new(q: u64, b: T) -> Result<Self> {
        Ok(DeltaPolicy { b, delta: compute_delta(q, b)? })
    }

    pub fn for_params(p: &ParamSet, b: T) -> Result<Self> {
        Self::new(p.q, b)
    }
}

/// `Δ = q / (16·b)`.
pub fn compute_delta<T: Real>(q: u64, b: T) -> Result<T> {
    if !(b.is_finite() && b > T::zero()) {
        return Err(Error::NonpositiveBound(b.to_f64().unwrap_or(f64::NAN)));
    }
    let q = T::from_u64(q).expect("u64 converts to float");
    Ok(q / (T::of(16.0) * b))
}

/// Smallest prime strictly greater than `2^(c-1)`.
///
/// Panics if `c` is outside `[2, 64]`.
pub fn select_prime(c: u32) -> u64 {
    assert!((2..=64).contains(&c), "modulus width {c} outside [2, 64]");
    let mut candidate = (1u64 << (c - 1)) + 1;
    while !is_prime(candidate) {
        candidate += 1;
    }
    candidate
}

/// Deterministic Miller-Rabin for the full `u64` range.
pub fn is_prime(n: u64) -> bool {
    const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &p in &WITNESSES {
        if n % p == 0 {
            return n == p;
        }
    }
    let mul = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let pow = |mut base: u64, mut exp: u64| {
        let mut acc = 1u64;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = mul(acc, base);
            }
            base = mul(base, base);
            exp >>= 1;
        }
        acc
    };
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for &a in &WITNESSES {
        let mut x = pow(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Bytes of a tightly packed block of `ell` coefficients of `c + 1` bits.
pub fn coefficient_block_bytes(ell: usize, log_q_ceil: u32) -> usize {
    (ell * (log_q_ceil as usize + 1)).div_ceil(8)
}

/// `⌈ℓ·(c+1)/8⌉`, the coefficient block size of one ciphertext.
pub fn ciphertext_size_bytes(p: &ParamSet) -> usize {
    coefficient_block_bytes(p.ell, p.log_q_ceil)
}

/// `⌈ℓ·B/8⌉`, plaintext carried by one ciphertext at `B` bits per slot.
pub fn payload_bytes(ell: usize, bits_per_slot: u32) -> usize {
    (ell * bits_per_slot as usize).div_ceil(8)
}

pub fn expansion_factor(ciphertext_bytes: u64, plaintext_bytes: u64) -> Result<f64> {
    if plaintext_bytes == 0 {
        return Err(Error::ZeroPlaintext);
    }
    Ok(ciphertext_bytes as f64 / plaintext_bytes as f64)
}

/// `⌈size / (mtu − overhead)⌉`, never less than one.
pub fn fragment_count(size_bytes: u64, mtu_bytes: u64, per_fragment_overhead_bytes: u64) -> Result<u64> {
    if mtu_bytes <= per_fragment_overhead_bytes {
        return Err(Error::InvalidMtu { mtu: mtu_bytes, overhead: per_fragment_overhead_bytes });
    }
    let capacity = mtu_bytes - per_fragment_overhead_bytes;
    Ok(size_bytes.div_ceil(capacity).max(1))
}

/// Bits spent on nonces when `r` messages are sent at security level λ.
pub fn nonce_overhead_bits(r: u64, lambda: u32) -> u64 {
    r * lambda as u64
}

/// Named per-fragment overhead conventions for the fragmentation tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FragmentPreset {
    /// Whole MTU carries payload.
    Plain,
    /// Seven header bytes per fragment (1393 payload bytes at MTU 1400).
    Header7,
}

impl FragmentPreset {
    pub fn overhead_bytes(self) -> u64 {
        match self {
            FragmentPreset::Plain => 0,
            FragmentPreset::Header7 => 7,
        }
    }
}

impl FromStr for FragmentPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(FragmentPreset::Plain),
            "header7" => Ok(FragmentPreset::Header7),
            other => Err(Error::Config(format!("unknown fragment preset `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial_division(n: u64) -> bool {
        n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| n % d != 0)
    }

    #[test]
    fn loads_table_rows() {
        let p = load_paramset("Par-80S").unwrap();
        assert_eq!((p.lambda, p.n, p.ell, p.log_q_ceil, p.alpha_q), (80, 16, 12, 26, 11.1));
        let p = load_paramset("Par-128L").unwrap();
        assert_eq!((p.lambda, p.n, p.ell, p.log_q_ceil, p.alpha_q), (128, 64, 60, 25, 4.1));
        assert_eq!(load_paramset("Par-256"), Err(Error::UnknownName("Par-256".into())));
        for name in ParamSetName::ALL {
            ParamSet::builtin(name).validate().unwrap();
        }
    }

    #[test]
    fn prime_selection_matches_scan() {
        assert_eq!(select_prime(3), 5);
        assert_eq!(select_prime(2), 3);
        // Oracle: first trial-division prime above 2^(c-1).
        for c in [10u32, 17, 25, 26] {
            let start = (1u64 << (c - 1)) + 1;
            let expected = (start..).find(|&n| trial_division(n)).unwrap();
            assert_eq!(select_prime(c), expected);
        }
        assert_eq!(select_prime(26), 33_554_467);
        assert_eq!(select_prime(25), 16_777_259);
        // 2^63 + 29 is the first prime above 2^63.
        assert_eq!(select_prime(64), 9_223_372_036_854_775_837);
    }

    #[test]
    fn miller_rabin_agrees_with_trial_division() {
        for n in 0..20_000u64 {
            assert_eq!(is_prime(n), trial_division(n), "n = {n}");
        }
        // Strong pseudoprime to several small bases.
        assert!(!is_prime(3_215_031_751));
    }

    #[test]
    fn size_formulas() {
        assert_eq!(coefficient_block_bytes(12, 26), 41);
        assert_eq!(coefficient_block_bytes(32, 25), 104);
        assert_eq!(coefficient_block_bytes(60, 25), 195);
        assert_eq!(payload_bytes(12, 16), 24);
        assert_eq!(payload_bytes(60, 16), 120);
        assert_eq!(payload_bytes(1, 8), 1);
        let expected = [(41, 24), (104, 64), (195, 120), (41, 24), (104, 64), (195, 120)];
        for (name, (ct, pt)) in ParamSetName::ALL.into_iter().zip(expected) {
            let p = ParamSet::builtin(name);
            assert_eq!(ciphertext_size_bytes(&p), ct);
            assert_eq!(payload_bytes(p.ell, DEFAULT_SLOT_BITS), pt);
            let e = expansion_factor(ct as u64, pt as u64).unwrap();
            assert!((1.6..=1.71).contains(&e), "{name}: {e}");
        }
    }

    #[test]
    fn expansion_and_fragments() {
        assert_eq!(crate::scalar::round_reported(expansion_factor(131_939, 200).unwrap(), 0), 660.0);
        assert_eq!(crate::scalar::round_reported(expansion_factor(41, 24).unwrap(), 1), 1.7);
        assert_eq!(expansion_factor(200, 200).unwrap(), 1.0);
        assert_eq!(expansion_factor(1, 0), Err(Error::ZeroPlaintext));

        assert_eq!(fragment_count(131_939, 1400, 0).unwrap(), 95);
        assert_eq!(fragment_count(195, 1400, 0).unwrap(), 1);
        assert_eq!(fragment_count(394_573, 1400, 0).unwrap(), 282);
        assert_eq!(fragment_count(394_573, 1400, 7).unwrap(), 284);
        assert_eq!(fragment_count(0, 1400, 0).unwrap(), 1);
        assert!(matches!(fragment_count(10, 7, 7), Err(Error::InvalidMtu { .. })));
    }

    #[test]
    fn delta_rule() {
        let q = select_prime(26);
        assert_eq!(compute_delta(q, 1.0f64).unwrap(), q as f64 / 16.0);
        assert_eq!(compute_delta(33_554_467, 1024.0f64).unwrap(), 33_554_467.0 / 16_384.0);
        assert_eq!(compute_delta(q, q as f64 / 16.0).unwrap(), 1.0);
        assert!(matches!(compute_delta(q, 0.0f64), Err(Error::NonpositiveBound(_))));
        assert!(matches!(compute_delta(q, -1.0f32), Err(Error::NonpositiveBound(_))));
    }

    #[test]
    fn nonce_bits() {
        assert_eq!(nonce_overhead_bits(10, 128), 1280);
        assert_eq!(nonce_overhead_bits(0, 128), 0);
        assert_eq!(nonce_overhead_bits(100, 80), 8000);
    }

    #[test]
    fn modulus_override_is_validated() {
        let p = ParamSet::builtin(ParamSetName::Par80S);
        assert!(p.with_modulus(33_554_469).is_err());
        assert!(p.with_modulus(16_777_259).is_err());
        assert_eq!(p.with_modulus(33_554_467).unwrap().q, 33_554_467);
    }

    #[test]
    fn wire_ids_round_trip() {
        for name in ParamSetName::ALL {
            assert_eq!(ParamSetName::from_wire_id(name.wire_id()), Some(name));
        }
        assert_eq!(ParamSetName::from_wire_id(6), None);
    }

    proptest::proptest! {
        #[test]
        fn fragment_count_monotone(a in 0u64..5_000_000, b in 0u64..5_000_000, ovh in 0u64..1399) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let f_lo = fragment_count(lo, 1400, ovh).unwrap();
            let f_hi = fragment_count(hi, 1400, ovh).unwrap();
            proptest::prop_assert!(f_lo <= f_hi);
            proptest::prop_assert_eq!(f_lo == 1, lo <= 1400 - ovh);
        }
    }
}
