//! Encrypt, transcipher and decrypt random bounded vectors and measure the
//! per-slot error against the analytic bound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::codec::{RecordFormat, SlotVector};
use crate::error::{Error, Result};
use crate::hemodel::{model_decrypt, model_encrypt_key, model_transcipher, HeContext, Role};
use crate::params::{DeltaPolicy, HeScheme, HeSchemeProfile, ParamSet, ParamSetName};
use crate::symcipher::{encrypt_fresh, keygen, KeystreamHooks, NonceLedger};
use crate::tables::{Cell, Table};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundtripReport {
    pub param_set: ParamSetName,
    pub trials: u64,
    pub seed: u64,
    pub bound_b: f64,
    pub delta: f64,
    pub noise_tail: i64,
    pub zero_noise: bool,
    pub error_bound: f64,
    pub max_error: f64,
    pub mean_error: f64,
    pub violations: u64,
}

impl RoundtripReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    pub fn table(&self) -> Table {
        Table {
            columns: vec![
                "param_set",
                "trials",
                "seed",
                "delta",
                "error_bound",
                "max_error",
                "mean_error",
                "violations",
            ],
            rows: vec![vec![
                Cell::Text(self.param_set.to_string()),
                Cell::Int(self.trials),
                Cell::Int(self.seed),
                Cell::Fixed(self.delta, 3),
                Cell::Fixed(self.error_bound, 9),
                Cell::Fixed(self.max_error, 9),
                Cell::Fixed(self.mean_error, 9),
                Cell::Int(self.violations),
            ]],
        }
    }
}

/// Run `trials` vectors with every slot uniform in `[-b/ℓ, b/ℓ]`.
pub fn run_roundtrip(p: &ParamSet, trials: u64, seed: u64) -> Result<RoundtripReport> {
    run(p, trials, seed, KeystreamHooks::default())
}

/// As [`run_roundtrip`] with keystream components disabled.
#[cfg(any(test, feature = "test-hooks"))]
pub fn run_roundtrip_with_hooks(p: &ParamSet, trials: u64, seed: u64, hooks: KeystreamHooks) -> Result<RoundtripReport> {
    run(p, trials, seed, hooks)
}

fn run(p: &ParamSet, trials: u64, seed: u64, hooks: KeystreamHooks) -> Result<RoundtripReport> {
    if trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    p.validate()?;
    let b = RecordFormat::default().loose_bound::<f64>(p.ell);
    let dp = DeltaPolicy::for_params(p, b)?;
    let error_bound = if hooks.zero_noise { 0.5 / dp.delta } else { p.decryption_error_bound(&dp) };

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    #[allow(unused_mut)]
    let mut key = keygen(p, rng.random());
    #[cfg(any(test, feature = "test-hooks"))]
    {
        key = key.with_hooks(hooks);
    }
    let ctx = HeContext::new(seed, HeSchemeProfile::builtin(HeScheme::CkksAddMul), &[Role::Tmc]);
    let ek = model_encrypt_key(&key, &ctx.public_key());
    let tmc = ctx.handle(Role::Tmc);
    let mut ledger = NonceLedger::new();

    let per_slot = b / p.ell as f64;
    let (mut max_error, mut sum, mut violations) = (0.0f64, 0.0f64, 0u64);
    for _ in 0..trials {
        let values: Vec<f64> = (0..p.ell).map(|_| rng.random_range(-per_slot..per_slot)).collect();
        let m = SlotVector::new(values, b)?;
        let ct = encrypt_fresh(&m, &key, &dp, &mut ledger)?;
        let out = model_decrypt(&model_transcipher(&ct, &ek, &dp)?, &tmc)?;
        for (a, e) in m.values().iter().zip(out.values()) {
            let err = (a - e).abs();
            max_error = max_error.max(err);
            sum += err;
            violations += u64::from(err > error_bound);
        }
    }
    Ok(RoundtripReport {
        param_set: p.name,
        trials,
        seed,
        bound_b: b,
        delta: dp.delta,
        noise_tail: p.noise_tail(),
        zero_noise: hooks.zero_noise,
        error_bound,
        max_error,
        mean_error: sum / (trials as f64 * p.ell as f64),
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par80s_stays_within_bound() {
        let p = ParamSet::builtin(ParamSetName::Par80S);
        let r = run_roundtrip(&p, 2000, 5).unwrap();
        assert_eq!(r.noise_tail, 111);
        assert!((r.error_bound - 111.5 / r.delta).abs() < 1e-15);
        assert!(r.passed() && r.max_error <= r.error_bound);
        assert!(r.mean_error > 0.0);
        assert_eq!(run_roundtrip(&p, 2000, 5).unwrap(), r);
        assert!(run_roundtrip(&p, 0, 5).is_err());
    }

    #[test]
    fn zero_noise_is_rounding_only() {
        let p = ParamSet::builtin(ParamSetName::Par128M);
        let hooks = KeystreamHooks { zero_prf: false, zero_noise: true };
        let r = run_roundtrip_with_hooks(&p, 500, 1, hooks).unwrap();
        assert!(r.zero_noise);
        assert!(r.max_error <= 0.5 / r.delta);
        assert!(r.passed());
    }
}
