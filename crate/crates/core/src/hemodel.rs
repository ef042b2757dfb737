//! Shadow homomorphic layer.
//!
//! Ciphertexts carry their plaintext slots behind a private field and report
//! the fixed size of their HE profile. Arithmetic on the hidden slots is
//! plain floating point; all approximation error enters at transciphering.
//! Only a [`KeyHolderHandle`] issued with decryption authority can release
//! the slots.

use serde::{Deserialize, Serialize};

use crate::codec::SlotVector;
use crate::error::{Error, Result};
use crate::params::{DeltaPolicy, HeSchemeProfile, ParamSet};
use crate::scalar::Real;
use crate::symcipher::{self, SymCiphertext, SymKey};

/// Default multiplicative depth budget.
pub const DEFAULT_DEPTH_BUDGET: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Rsu,
    Cloud,
    Tmc,
}

/// HE key material owner. Issues the public handle and decryption handles.
#[derive(Debug, Clone)]
pub struct HeContext {
    id: u64,
    profile: HeSchemeProfile,
    decryptors: Vec<Role>,
}

/// Opaque stand-in for `pk`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HePublicKey {
    context: u64,
    profile: HeSchemeProfile,
}

/// Capability to call [`model_decrypt`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyHolderHandle {
    context: u64,
    role: Role,
    authorized: bool,
}

impl HeContext {
    pub fn new(id: u64, profile: HeSchemeProfile, decryptors: &[Role]) -> Self {
        HeContext { id, profile, decryptors: decryptors.to_vec() }
    }

    pub fn profile(&self) -> HeSchemeProfile {
        self.profile
    }

    pub fn public_key(&self) -> HePublicKey {
        HePublicKey { context: self.id, profile: self.profile }
    }

    pub fn handle(&self, role: Role) -> KeyHolderHandle {
        KeyHolderHandle { context: self.id, role, authorized: self.decryptors.contains(&role) }
    }
}

impl HePublicKey {
    pub fn profile(&self) -> HeSchemeProfile {
        self.profile
    }
}

impl KeyHolderHandle {
    pub fn role(&self) -> Role {
        self.role
    }

    pub fn can_decrypt(&self) -> bool {
        self.authorized
    }
}

/// Operation counts accumulated over a ciphertext's expression tree.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpLog {
    pub add: u64,
    pub mul: u64,
    pub scalar_mul: u64,
    pub transcipher: u64,
}

impl OpLog {
    fn merged(a: &OpLog, b: &OpLog) -> OpLog {
        OpLog {
            add: a.add + b.add,
            mul: a.mul + b.mul,
            scalar_mul: a.scalar_mul + b.scalar_mul,
            transcipher: a.transcipher + b.transcipher,
        }
    }
}

/// `Enc_pk(k)` under the shadow model.
#[derive(Clone)]
pub struct EncryptedSymKey {
    shadow_key: SymKey,
    profile: HeSchemeProfile,
    context: u64,
}

impl std::fmt::Debug for EncryptedSymKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EncryptedSymKey")
            .field("param", &self.shadow_key.param().name)
            .field("profile", &self.profile)
            .finish_non_exhaustive()
    }
}

impl EncryptedSymKey {
    pub fn size_bytes(&self) -> u64 {
        self.profile.ciphertext_bytes
    }

    pub fn profile(&self) -> HeSchemeProfile {
        self.profile
    }

    pub fn param(&self) -> &ParamSet {
        self.shadow_key.param()
    }
}

/// HE ciphertext whose slots are only reachable through [`model_decrypt`].
#[derive(Clone, PartialEq)]
pub struct ShadowCiphertext<T> {
    shadow_values: Vec<T>,
    // Upper bound on the hidden 1-norm, carried through arithmetic.
    norm_bound: T,
    profile: HeSchemeProfile,
    context: u64,
    mult_depth_used: u32,
    op_log: OpLog,
}

impl<T> std::fmt::Debug for ShadowCiphertext<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ShadowCiphertext")
            .field("profile", &self.profile)
            .field("slots", &self.shadow_values.len())
            .field("mult_depth_used", &self.mult_depth_used)
            .field("op_log", &self.op_log)
            .finish_non_exhaustive()
    }
}

impl<T: Real> ShadowCiphertext<T> {
    pub fn size_bytes(&self) -> u64 {
        self.profile.ciphertext_bytes
    }

    pub fn profile(&self) -> HeSchemeProfile {
        self.profile
    }

    pub fn slot_count(&self) -> usize {
        self.shadow_values.len()
    }

    pub fn mult_depth_used(&self) -> u32 {
        self.mult_depth_used
    }

    pub fn op_log(&self) -> OpLog {
        self.op_log
    }

    fn derived(&self, values: Vec<T>, norm_bound: T, depth: u32, op_log: OpLog) -> Self {
        ShadowCiphertext {
            shadow_values: values,
            norm_bound,
            profile: self.profile,
            context: self.context,
            mult_depth_used: depth,
            op_log,
        }
    }
}

pub fn model_encrypt_key(k: &SymKey, pk: &HePublicKey) -> EncryptedSymKey {
    EncryptedSymKey { shadow_key: k.clone(), profile: pk.profile, context: pk.context }
}

/// Direct `Enc_pk(m)`, the pure-HE baseline.
pub fn model_encrypt<T: Real>(m: &SlotVector<T>, pk: &HePublicKey) -> ShadowCiphertext<T> {
    ShadowCiphertext {
        shadow_values: m.values().to_vec(),
        norm_bound: m.bound(),
        profile: pk.profile,
        context: pk.context,
        mult_depth_used: 0,
        op_log: OpLog::default(),
    }
}

/// Homomorphic evaluation of the symmetric decryption circuit.
pub fn model_transcipher<T: Real>(
    sct: &SymCiphertext,
    ek: &EncryptedSymKey,
    dp: &DeltaPolicy<T>,
) -> Result<ShadowCiphertext<T>> {
    let m = symcipher::decrypt(sct, &ek.shadow_key, dp)?;
    let norm_bound = m.bound();
    Ok(ShadowCiphertext {
        shadow_values: m.into_values(),
        norm_bound,
        profile: ek.profile,
        context: ek.context,
        mult_depth_used: 0,
        op_log: OpLog { transcipher: 1, ..OpLog::default() },
    })
}

pub fn model_decrypt<T: Real>(r: &ShadowCiphertext<T>, authority: &KeyHolderHandle) -> Result<SlotVector<T>> {
    if !authority.authorized || authority.context != r.context {
        return Err(Error::Unauthorized);
    }
    let norm: T = r.shadow_values.iter().map(|v| v.abs()).sum();
    let bound = r.norm_bound.max(norm).max(T::min_positive_value());
    SlotVector::new(r.shadow_values.clone(), bound)
}

/// Analytics evaluated by the cloud once per cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AnalyticsCircuit {
    Sum,
    Mean,
    WeightedIndex { weights: Vec<f64> },
    Variance,
}

impl AnalyticsCircuit {
    pub fn needs_mul(&self) -> bool {
        matches!(self, AnalyticsCircuit::Variance)
    }

    pub fn mult_depth(&self) -> u32 {
        u32::from(self.needs_mul())
    }

    pub fn name(&self) -> &'static str {
        match self {
            AnalyticsCircuit::Sum => "sum",
            AnalyticsCircuit::Mean => "mean",
            AnalyticsCircuit::WeightedIndex { .. } => "weighted-index",
            AnalyticsCircuit::Variance => "variance",
        }
    }

    /// Same circuit on cleartext slot vectors, evaluated in the same order.
    pub fn evaluate_plain<T: Real>(&self, inputs: &[Vec<T>]) -> Result<Vec<T>> {
        let first = inputs.first().ok_or_else(|| Error::CircuitInput("no inputs".into()))?;
        let ell = first.len();
        if inputs.iter().any(|v| v.len() != ell) {
            return Err(Error::CircuitInput("slot count differs between inputs".into()));
        }
        let n = T::from_usize(inputs.len()).expect("usize converts");
        let sum = |xs: &mut dyn Iterator<Item = Vec<T>>| -> Vec<T> {
            let mut acc = xs.next().expect("nonempty");
            for x in xs {
                acc.iter_mut().zip(&x).for_each(|(a, b)| *a = *a + *b);
            }
            acc
        };
        let scale = |v: Vec<T>, s: T| v.into_iter().map(|x| x * s).collect::<Vec<T>>();
        Ok(match self {
            AnalyticsCircuit::Sum => sum(&mut inputs.iter().cloned()),
            AnalyticsCircuit::Mean => scale(sum(&mut inputs.iter().cloned()), T::one() / n),
            AnalyticsCircuit::WeightedIndex { weights } => {
                if weights.len() != inputs.len() {
                    return Err(Error::CircuitInput(format!(
                        "{} weights for {} inputs",
                        weights.len(),
                        inputs.len()
                    )));
                }
                sum(&mut inputs.iter().zip(weights).map(|(x, w)| scale(x.clone(), T::of(*w))))
            }
            AnalyticsCircuit::Variance => {
                let squares = inputs.iter().map(|x| x.iter().map(|v| *v * *v).collect::<Vec<T>>());
                let mean_sq = scale(sum(&mut squares.into_iter()), T::one() / n);
                let mean = scale(sum(&mut inputs.iter().cloned()), T::one() / n);
                mean_sq.iter().zip(&mean).map(|(a, m)| *a - *m * *m).collect()
            }
        })
    }
}

/// Evaluator enforcing the multiplicative depth budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeEvaluator {
    pub depth_budget: u32,
}

impl Default for HeEvaluator {
    fn default() -> Self {
        HeEvaluator { depth_budget: DEFAULT_DEPTH_BUDGET }
    }
}

impl HeEvaluator {
    pub fn new(depth_budget: u32) -> Self {
        HeEvaluator { depth_budget }
    }

    fn compatible<T: Real>(a: &ShadowCiphertext<T>, b: &ShadowCiphertext<T>) -> Result<()> {
        if a.profile != b.profile || a.context != b.context {
            return Err(Error::ProfileMismatch);
        }
        if a.shadow_values.len() != b.shadow_values.len() {
            return Err(Error::CircuitInput(format!(
                "slot counts {} and {} differ",
                a.shadow_values.len(),
                b.shadow_values.len()
            )));
        }
        Ok(())
    }

    fn zip_with<T: Real>(
        a: &ShadowCiphertext<T>,
        b: &ShadowCiphertext<T>,
        f: impl Fn(T, T) -> T,
    ) -> Vec<T> {
        a.shadow_values.iter().zip(&b.shadow_values).map(|(x, y)| f(*x, *y)).collect()
    }

    pub fn add<T: Real>(&self, a: &ShadowCiphertext<T>, b: &ShadowCiphertext<T>) -> Result<ShadowCiphertext<T>> {
        Self::compatible(a, b)?;
        let mut log = OpLog::merged(&a.op_log, &b.op_log);
        log.add += 1;
        let depth = a.mult_depth_used.max(b.mult_depth_used);
        Ok(a.derived(Self::zip_with(a, b, |x, y| x + y), a.norm_bound + b.norm_bound, depth, log))
    }

    /// Subtraction; logged as an addition.
    pub fn sub<T: Real>(&self, a: &ShadowCiphertext<T>, b: &ShadowCiphertext<T>) -> Result<ShadowCiphertext<T>> {
        Self::compatible(a, b)?;
        let mut log = OpLog::merged(&a.op_log, &b.op_log);
        log.add += 1;
        let depth = a.mult_depth_used.max(b.mult_depth_used);
        Ok(a.derived(Self::zip_with(a, b, |x, y| x - y), a.norm_bound + b.norm_bound, depth, log))
    }

    pub fn scalar_mul<T: Real>(&self, a: &ShadowCiphertext<T>, s: T) -> ShadowCiphertext<T> {
        let mut log = a.op_log;
        log.scalar_mul += 1;
        let values = a.shadow_values.iter().map(|x| *x * s).collect();
        a.derived(values, a.norm_bound * s.abs(), a.mult_depth_used, log)
    }

    pub fn mul<T: Real>(&self, a: &ShadowCiphertext<T>, b: &ShadowCiphertext<T>) -> Result<ShadowCiphertext<T>> {
        Self::compatible(a, b)?;
        if !a.profile.supports_mul {
            return Err(Error::MulUnsupported(a.profile.scheme.to_string()));
        }
        let depth = a.mult_depth_used.max(b.mult_depth_used);
        if depth >= self.depth_budget {
            return Err(Error::DepthExhausted { budget: self.depth_budget });
        }
        let mut log = OpLog::merged(&a.op_log, &b.op_log);
        log.mul += 1;
        // ‖x∘y‖₁ ≤ ‖x‖₁·‖y‖₁
        Ok(a.derived(Self::zip_with(a, b, |x, y| x * y), a.norm_bound * b.norm_bound, depth + 1, log))
    }

    fn sum<T: Real>(&self, inputs: &[ShadowCiphertext<T>]) -> Result<ShadowCiphertext<T>> {
        let (first, rest) = inputs.split_first().ok_or_else(|| Error::CircuitInput("no inputs".into()))?;
        rest.iter().try_fold(first.clone(), |acc, x| self.add(&acc, x))
    }

    /// Evaluate `c` over one cycle's inputs, producing a single ciphertext.
    pub fn eval_circuit<T: Real>(
        &self,
        c: &AnalyticsCircuit,
        inputs: &[ShadowCiphertext<T>],
    ) -> Result<ShadowCiphertext<T>> {
        if inputs.is_empty() {
            return Err(Error::CircuitInput("no inputs".into()));
        }
        let inv_n = T::one() / T::from_usize(inputs.len()).expect("usize converts");
        match c {
            AnalyticsCircuit::Sum => self.sum(inputs),
            AnalyticsCircuit::Mean => Ok(self.scalar_mul(&self.sum(inputs)?, inv_n)),
            AnalyticsCircuit::WeightedIndex { weights } => {
                if weights.len() != inputs.len() {
                    return Err(Error::CircuitInput(format!(
                        "{} weights for {} inputs",
                        weights.len(),
                        inputs.len()
                    )));
                }
                let scaled: Vec<_> = inputs.iter().zip(weights).map(|(x, w)| self.scalar_mul(x, T::of(*w))).collect();
                self.sum(&scaled)
            }
            AnalyticsCircuit::Variance => {
                let squares = inputs.iter().map(|x| self.mul(x, x)).collect::<Result<Vec<_>>>()?;
                let mean_sq = self.scalar_mul(&self.sum(&squares)?, inv_n);
                let mean = self.scalar_mul(&self.sum(inputs)?, inv_n);
                let mean_2 = self.mul(&mean, &mean)?;
                self.sub(&mean_sq, &mean_2)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{HeScheme, ParamSetName};
    use crate::symcipher::{encrypt_fresh, keygen, KeystreamHooks, NonceLedger};

    fn ctx(scheme: HeScheme) -> HeContext {
        HeContext::new(1, HeSchemeProfile::builtin(scheme), &[Role::Tmc])
    }

    fn fresh(ctx: &HeContext, values: &[f64]) -> ShadowCiphertext<f64> {
        let bound = values.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
        model_encrypt(&SlotVector::new(values.to_vec(), bound).unwrap(), &ctx.public_key())
    }

    fn reveal(ctx: &HeContext, ct: &ShadowCiphertext<f64>) -> Vec<f64> {
        model_decrypt(ct, &ctx.handle(Role::Tmc)).unwrap().into_values()
    }

    #[test]
    fn encrypted_key_sizes() {
        let p = ParamSet::builtin(ParamSetName::Par80S);
        let k = keygen(&p, 1);
        let ek = model_encrypt_key(&k, &ctx(HeScheme::CkksAddMul).public_key());
        assert_eq!(ek.size_bytes(), 1_050_129);
        let ek = model_encrypt_key(&k, &ctx(HeScheme::Bfv).public_key());
        assert_eq!(ek.size_bytes(), 131_939);
    }

    #[test]
    fn transcipher_matches_symmetric_bound() {
        let p = ParamSet::builtin(ParamSetName::Par80S);
        let dp = DeltaPolicy::for_params(&p, 12.0 * 128.0).unwrap();
        let c = ctx(HeScheme::CkksAddMul);
        let m = SlotVector::new((0..12).map(|i| i as f64 * 9.5 - 50.0).collect(), dp.b).unwrap();
        for (hooks, bound) in [
            (KeystreamHooks::default(), p.decryption_error_bound(&dp)),
            (KeystreamHooks { zero_prf: false, zero_noise: true }, 0.5 / dp.delta),
        ] {
            let k = keygen(&p, 4).with_hooks(hooks);
            let ct = encrypt_fresh(&m, &k, &dp, &mut NonceLedger::new()).unwrap();
            let ek = model_encrypt_key(&k, &c.public_key());
            let sh = model_transcipher(&ct, &ek, &dp).unwrap();
            assert_eq!(sh.op_log().transcipher, 1);
            for (a, b) in m.values().iter().zip(reveal(&c, &sh)) {
                assert!((a - b).abs() <= bound);
            }
        }
        let other = keygen(&ParamSet::builtin(ParamSetName::Par128S), 4);
        let ct = encrypt_fresh(&m, &keygen(&p, 4), &dp, &mut NonceLedger::new()).unwrap();
        let ek = model_encrypt_key(&other, &c.public_key());
        assert!(matches!(model_transcipher(&ct, &ek, &dp), Err(Error::ParamMismatch { .. })));
    }

    #[test]
    fn primitive_ops() {
        let c = ctx(HeScheme::Bfv);
        let ev = HeEvaluator::default();
        let x = fresh(&c, &[1.5, -2.0, 4.0]);
        let zero = fresh(&c, &[0.0, 0.0, 0.0]);
        assert_eq!(reveal(&c, &ev.add(&x, &zero).unwrap()), vec![1.5, -2.0, 4.0]);
        let three_x = ev.add(&ev.scalar_mul(&x, 2.0), &x).unwrap();
        assert_eq!(reveal(&c, &three_x), vec![4.5, -6.0, 12.0]);
        assert_eq!(three_x.size_bytes(), x.size_bytes());

        let add_only = ctx(HeScheme::CkksAdd);
        let y = fresh(&add_only, &[1.0, 2.0, 3.0]);
        assert_eq!(ev.mul(&y, &y), Err(Error::MulUnsupported("CKKS-add".into())));

        let other = fresh(&ctx(HeScheme::Bgv), &[1.0, 2.0, 3.0]);
        assert_eq!(ev.add(&x, &other), Err(Error::ProfileMismatch));
    }

    #[test]
    fn depth_budget() {
        let c = ctx(HeScheme::CkksAddMul);
        let x = fresh(&c, &[2.0]);
        let ev = HeEvaluator::new(2);
        let x2 = ev.mul(&x, &x).unwrap();
        assert_eq!(x2.mult_depth_used(), 1);
        let x4 = ev.mul(&x2, &x2).unwrap();
        assert_eq!(x4.mult_depth_used(), 2);
        assert_eq!(reveal(&c, &x4), vec![16.0]);
        assert_eq!(ev.mul(&x4, &x), Err(Error::DepthExhausted { budget: 2 }));
        // Depth of a product is max of inputs plus one.
        assert_eq!(ev.mul(&x2, &x).unwrap().mult_depth_used(), 2);
    }

    #[test]
    fn circuits() {
        let c = ctx(HeScheme::CkksAddMul);
        let ev = HeEvaluator::default();
        let xs: Vec<_> = [10.0, 20.0, 30.0].iter().map(|v| fresh(&c, &[*v, *v])).collect();
        let mean = ev.eval_circuit(&AnalyticsCircuit::Mean, &xs).unwrap();
        assert_eq!(reveal(&c, &mean), vec![20.0, 20.0]);
        assert_eq!(mean.op_log(), OpLog { add: 2, mul: 0, scalar_mul: 1, transcipher: 0 });
        assert_eq!(mean.mult_depth_used(), 0);

        let w = AnalyticsCircuit::WeightedIndex { weights: vec![0.5, 0.5] };
        let pair = [fresh(&c, &[10.0]), fresh(&c, &[30.0])];
        assert_eq!(reveal(&c, &ev.eval_circuit(&w, &pair).unwrap()), vec![20.0]);
        assert!(matches!(ev.eval_circuit(&w, &xs), Err(Error::CircuitInput(_))));

        let var = ev.eval_circuit(&AnalyticsCircuit::Variance, &xs).unwrap();
        assert_eq!(var.mult_depth_used(), 1);
        let got = reveal(&c, &var);
        // Oracle: E[x²] − E[x]² in the same evaluation order.
        let mean_sq = (100.0f64 + 400.0 + 900.0) * (1.0 / 3.0);
        let mean = (10.0f64 + 20.0 + 30.0) * (1.0 / 3.0);
        assert_eq!(got[0], mean_sq - mean * mean);
        assert!((got[0] - 200.0 / 3.0).abs() < 1e-9);

        let add_only = ctx(HeScheme::CkksAdd);
        let ys: Vec<_> = [1.0, 2.0].iter().map(|v| fresh(&add_only, &[*v])).collect();
        assert!(matches!(ev.eval_circuit(&AnalyticsCircuit::Variance, &ys), Err(Error::MulUnsupported(_))));
        assert!(matches!(ev.eval_circuit::<f64>(&AnalyticsCircuit::Sum, &[]), Err(Error::CircuitInput(_))));
    }

    #[test]
    fn decryption_authority() {
        let c = HeContext::new(9, HeSchemeProfile::builtin(HeScheme::CkksAddMul), &[Role::Tmc]);
        let x = fresh(&c, &[3.0]);
        assert_eq!(model_decrypt(&x, &c.handle(Role::Tmc)).unwrap().values(), &[3.0]);
        assert_eq!(model_decrypt(&x, &c.handle(Role::Cloud)), Err(Error::Unauthorized));
        assert_eq!(model_decrypt(&x, &c.handle(Role::Rsu)), Err(Error::Unauthorized));

        let rsu_side = HeContext::new(9, c.profile(), &[Role::Rsu]);
        assert!(model_decrypt(&x, &rsu_side.handle(Role::Rsu)).is_ok());
        // A handle from another context cannot open this ciphertext.
        let foreign = HeContext::new(10, c.profile(), &[Role::Tmc]);
        assert_eq!(model_decrypt(&x, &foreign.handle(Role::Tmc)), Err(Error::Unauthorized));
    }

    proptest::proptest! {
        #[test]
        fn shadow_soundness(
            rows in proptest::collection::vec(proptest::collection::vec(-100.0f64..100.0, 4), 1..12),
            which in 0usize..4,
        ) {
            let c = ctx(HeScheme::CkksAddMul);
            let ev = HeEvaluator::default();
            let circuit = match which {
                0 => AnalyticsCircuit::Sum,
                1 => AnalyticsCircuit::Mean,
                2 => AnalyticsCircuit::WeightedIndex { weights: (0..rows.len()).map(|i| i as f64 * 0.25).collect() },
                _ => AnalyticsCircuit::Variance,
            };
            let enc: Vec<_> = rows.iter().map(|r| fresh(&c, r)).collect();
            let out = ev.eval_circuit(&circuit, &enc).unwrap();
            proptest::prop_assert_eq!(reveal(&c, &out), circuit.evaluate_plain(&rows).unwrap());
            proptest::prop_assert_eq!(out.size_bytes(), 1_050_129);
            proptest::prop_assert_eq!(out.mult_depth_used(), circuit.mult_depth());
        }
    }
}
