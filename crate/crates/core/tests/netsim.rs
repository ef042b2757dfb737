use hhe_its::codec::TelemetryRecord;
use hhe_its::hemodel::Role;
use hhe_its::netsim::{run_scenario, Direction, LinkModel, Mode, Scenario, Workload};
use hhe_its::params::{nonce_overhead_bits, HeScheme, HeSchemeProfile, ParamSet, ParamSetName};
use hhe_its::protocol::MessageKind;
use hhe_its::symcipher::serialized_len;
use hhe_its::AnalyticsCircuit;

fn scenario(mode: Mode, rsus: u32, secs: f64, name: ParamSetName, scheme: HeScheme) -> Scenario {
    let w = Workload { rsu_count: rsus, duration_s: secs, mode, ..Workload::default() };
    let mut sc = Scenario::new(w, ParamSet::builtin(name), HeSchemeProfile::builtin(scheme));
    sc.seed = 11;
    sc
}

#[test]
fn single_rsu_hhe_second() {
    let r = run_scenario(&scenario(Mode::Hhe, 1, 1.0, ParamSetName::Par80L, HeScheme::CkksAddMul)).unwrap();
    let online: Vec<_> = r.messages.iter().filter(|m| !m.offline && m.direction == Direction::Uplink).collect();
    assert_eq!(online.len(), 1);
    assert_eq!(online[0].payload_bytes, 1 + 10 + 195);
    assert!(online.iter().all(|m| m.fragments == 1));
    assert_eq!(r.totals.uplink_bytes, 206);
    assert_eq!(r.totals.offline_bytes, 1_050_129);
    assert_eq!(r.totals.offline_messages, 1);
    assert_eq!(r.cycles.len(), 1);
    assert_eq!(r.cycles[0].records, 10);
    assert_eq!(r.totals.downlink_messages, 1);
    assert_eq!(r.totals.downlink_fragments, 751);
}

#[test]
fn pure_he_fragments() {
    let r = run_scenario(&scenario(Mode::PureHe, 1, 1.0, ParamSetName::Par80L, HeScheme::CkksAddMul)).unwrap();
    let ups: Vec<_> = r.messages.iter().filter(|m| m.direction == Direction::Uplink).collect();
    assert_eq!(ups.len(), 10);
    assert!(ups.iter().all(|m| m.fragments == 751 && !m.offline));
    assert_eq!(r.totals.offline_bytes, 0);
    assert_eq!(r.totals.uplink_fragments, 7510);
}

#[test]
fn byte_ratio_matches_sizes() {
    let hhe = run_scenario(&scenario(Mode::Hhe, 1, 1.0, ParamSetName::Par80S, HeScheme::Bfv)).unwrap();
    let pure = run_scenario(&scenario(Mode::PureHe, 1, 1.0, ParamSetName::Par80S, HeScheme::Bfv)).unwrap();
    let per_hhe = hhe.totals.uplink_bytes as f64 / hhe.totals.uplink_messages as f64;
    let per_pure = pure.totals.uplink_bytes as f64 / pure.totals.uplink_messages as f64;
    assert_eq!(per_hhe, 52.0);
    assert_eq!(per_pure / per_hhe, 131_939.0 / 52.0);
}

#[test]
fn totals_conserve_message_records() {
    for mode in [Mode::Hhe, Mode::PureHe] {
        let r = run_scenario(&scenario(mode, 3, 4.0, ParamSetName::Par80M, HeScheme::Bgv)).unwrap();
        let sum = |off: bool, dir: Direction, f: fn(&hhe_its::netsim::MessageRecord) -> u64| -> u64 {
            r.messages.iter().filter(|m| m.offline == off && m.direction == dir).map(f).sum()
        };
        assert_eq!(r.totals.uplink_bytes, sum(false, Direction::Uplink, |m| m.payload_bytes));
        assert_eq!(r.totals.uplink_fragments, sum(false, Direction::Uplink, |m| m.fragments));
        assert_eq!(r.totals.downlink_bytes, sum(false, Direction::Downlink, |m| m.payload_bytes));
        assert_eq!(r.totals.offline_bytes, sum(true, Direction::Uplink, |m| m.payload_bytes));
        assert_eq!(r.totals.uplink_bytes, r.cycles.iter().map(|c| c.uplink_bytes).sum::<u64>());
        assert_eq!(r.totals.uplink_fragments, r.cycles.iter().map(|c| c.uplink_fragments).sum::<u64>());
        assert_eq!(r.totals.plaintext_bytes, 3 * 40 * 200);
        assert!(r.cycles.iter().all(|c| c.results == 1));
    }
}

#[test]
fn hhe_conservation() {
    let r = run_scenario(&scenario(Mode::Hhe, 5, 10.0, ParamSetName::Par128S, HeScheme::CkksAddMul)).unwrap();
    let uploads = r.totals.uplink_messages;
    // 10 records per cycle and 3 per vector: 4 uploads per RSU per cycle.
    assert_eq!(uploads, 5 * 10 * 4);
    assert_eq!(r.totals.nonce_overhead_bits, nonce_overhead_bits(uploads, 128));
    assert_eq!(r.totals.offline_bytes, 5 * 1_050_129);
    assert!(r.messages.iter().filter(|m| m.kind == MessageKind::ResultReturn).count() == 10);
    for c in &r.cycles {
        assert_eq!(c.results, 1);
        assert!(c.max_slot_error.unwrap() <= c.slot_error_bound.unwrap());
        let op = c.op_log.unwrap();
        assert_eq!((op.transcipher, op.add, op.scalar_mul, op.mul), (20, 19, 1, 0));
    }
}

#[test]
fn queue_stays_empty_at_ten_hertz() {
    // BFV serialization takes about 10.6 ms, well under the 100 ms BSM period.
    let r = run_scenario(&scenario(Mode::PureHe, 4, 5.0, ParamSetName::Par80S, HeScheme::Bfv)).unwrap();
    assert!(r.messages.iter().filter(|m| m.direction == Direction::Uplink).all(|m| m.queuing_delay_s == 0.0));
    assert_eq!(r.queuing_delay.max_s, 0.0);

    // A 1 Mbit/s uplink cannot keep up and the queue grows.
    let mut slow = scenario(Mode::PureHe, 1, 2.0, ParamSetName::Par80S, HeScheme::Bfv);
    slow.uplink = LinkModel { bandwidth_bps: 1e6, ..LinkModel::default() };
    let r = run_scenario(&slow).unwrap();
    assert!(r.queuing_delay.max_s > 1.0);
    assert!(r.cycles.iter().all(|c| c.results == 1));
}

#[test]
fn deterministic_reports() {
    let sc = scenario(Mode::Hhe, 5, 6.0, ParamSetName::Par80L, HeScheme::CkksAddMul);
    let a = run_scenario(&sc).unwrap();
    let b = run_scenario(&sc).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.cycles_csv(), b.cycles_csv());
    assert_eq!(a.messages_csv(), b.messages_csv());
    let mut other = sc.clone();
    other.seed = 12;
    assert_ne!(run_scenario(&other).unwrap().to_json(), a.to_json());
}

#[test]
fn latency_accounts_for_propagation_and_serialization() {
    let r = run_scenario(&scenario(Mode::Hhe, 1, 3.0, ParamSetName::Par80L, HeScheme::CkksAddMul)).unwrap();
    for m in r.messages.iter().filter(|m| !m.offline) {
        let expect = m.queuing_delay_s + m.serialization_delay_s + m.propagation_delay_s;
        assert!((m.latency_s() - expect).abs() < 1e-9);
    }
    let up = 206.0 * 8.0 / 100e6 + 0.005;
    let down = 1_050_129.0 * 8.0 / 100e6 + 0.005;
    for c in &r.cycles {
        assert!((c.latency_s.unwrap() - (up + down)).abs() < 1e-8, "{:?}", c.latency_s);
    }
}

#[test]
fn variance_and_rsu_side_decryption() {
    let mut sc = scenario(Mode::Hhe, 2, 2.0, ParamSetName::Par80M, HeScheme::CkksAddMul);
    sc.circuit = AnalyticsCircuit::Variance;
    sc.decryptor = Role::Rsu;
    let r = run_scenario(&sc).unwrap();
    assert!(r.cycles.iter().all(|c| c.mult_depth == Some(1) && c.results == 1));

    sc.profile = HeSchemeProfile::builtin(HeScheme::CkksAdd);
    assert!(run_scenario(&sc).is_err());
    sc.profile = HeSchemeProfile::builtin(HeScheme::CkksAddMul);
    sc.decryptor = Role::Cloud;
    assert!(run_scenario(&sc).is_err());
}

#[test]
fn injected_telemetry_mean_speed() {
    let telemetry: Vec<_> = (0..40)
        .map(|i| TelemetryRecord {
            rsu_id: i % 2,
            timestamp_ms: 0,
            speed: 10.0 + (i % 2) as f64 * 10.0 + (i / 2) as f64 * 0.1,
            acceleration: 0.5,
            occupancy: 4.0,
            queue_length: 1.0,
        })
        .collect();
    let mut sc = scenario(Mode::Hhe, 2, 2.0, ParamSetName::Par80L, HeScheme::CkksAddMul);
    sc.telemetry = Some(telemetry);
    let r = run_scenario(&sc).unwrap();
    let bound = r.header.quantization_error + r.header.decryption_error_bound;
    for c in &r.cycles {
        let (got, want) = (c.mean_speed.unwrap(), c.plaintext_mean_speed.unwrap());
        assert!((got - want).abs() <= bound, "cycle {}: {got} vs {want}", c.cycle);
    }
    assert!((r.cycles[0].plaintext_mean_speed.unwrap() - 15.45).abs() < 1e-9);
}

#[test]
fn hhe_uploads_single_fragment_for_all_sets() {
    for name in ParamSetName::ALL {
        let r = run_scenario(&scenario(Mode::Hhe, 2, 2.0, name, HeScheme::Bfv)).unwrap();
        let p = ParamSet::builtin(name);
        for m in r.messages.iter().filter(|m| !m.offline && m.direction == Direction::Uplink) {
            assert_eq!(m.fragments, 1);
            assert_eq!(m.payload_bytes, serialized_len(&p) as u64);
        }
    }
}
