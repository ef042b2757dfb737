//! Cross-checks of library results against independently computed values.

use hhe_its::acceptance::{chi_square_p_value, gaussian_pmf};
use hhe_its::config::Catalog;
use hhe_its::params::{fragment_count, HeScheme, HeSchemeProfile, ParamSet, ParamSetName};
use hhe_its::roundtrip::run_roundtrip_with_hooks;
use hhe_its::symcipher::{GaussianSampler, KeystreamHooks};
use hhe_its::tables::{expansion_rows, size_rows};

#[test]
fn chi_square_rejects_wrong_width() {
    let s = GaussianSampler::new(4.1);
    let wrong = gaussian_pmf(4.5, s.tail_cutoff());
    assert!(chi_square_p_value(&s, &wrong, 1_000_000, 3) < 1e-6);
    let right = gaussian_pmf(4.1, s.tail_cutoff());
    assert!(chi_square_p_value(&s, &right, 1_000_000, 3) > 0.01);
}

#[test]
fn pmf_direct_summation() {
    // αq = 1.6: P(0) = 1 / Σ exp(-π a² / 2.56).
    let z: f64 = (-16i64..=16).map(|a| (-std::f64::consts::PI * (a * a) as f64 / 2.56).exp()).sum();
    let pmf = gaussian_pmf(1.6, 16);
    assert_eq!(pmf.len(), 33);
    assert!((pmf[16] - 1.0 / z).abs() < 1e-15);
    assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(pmf[0], pmf[32]);
}

#[test]
fn fragment_ceilings() {
    for (bytes, plain, h7) in [(131_939u64, 95, 95), (394_573, 282, 284), (787_791, 563, 566), (1_050_129, 751, 754)] {
        assert_eq!(fragment_count(bytes, 1400, 0).unwrap(), plain);
        assert_eq!(fragment_count(bytes, 1400, 7).unwrap(), h7);
        assert_eq!(bytes.div_ceil(1393), h7);
    }
    let rows = expansion_rows(&Catalog::default(), 1400, 0).unwrap();
    for (row, scheme) in rows.iter().zip(HeScheme::PURE_HE) {
        let ct = HeSchemeProfile::builtin(scheme).ciphertext_bytes;
        assert_eq!(row.fragments, ct.div_ceil(1400));
        assert_eq!(row.expansion(), (ct as f64 / 200.0).round());
    }
}

#[test]
fn coefficient_blocks() {
    // ⌈ℓ(c+1)/8⌉ with c = 25, 25, 25 for 80-bit and 25 for 128-bit rows.
    for r in size_rows(&Catalog::default()) {
        let p = ParamSet::builtin(r.param_set);
        assert_eq!(r.ciphertext_bytes, (p.ell * (p.log_q_ceil as usize + 1) + 7) / 8);
        assert_eq!(r.payload_bytes, p.ell * 2);
    }
}

#[test]
fn test_hooks_feature_reaches_integration_tests() {
    let p = ParamSet::builtin(ParamSetName::Par80L);
    let r = run_roundtrip_with_hooks(&p, 200, 9, KeystreamHooks { zero_prf: true, zero_noise: true }).unwrap();
    assert!(r.max_error <= 0.5 / r.delta);
}
