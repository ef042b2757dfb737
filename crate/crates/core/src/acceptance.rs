//! Acceptance checks, shared by the `selftest` command and the test suite.
//!
//! Each check reads sizes and parameters from a [`Catalog`], so a tampered
//! configuration shows up as a named failure.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::config::{Catalog, ConfigFile, EXAMPLE_CONFIG};
use crate::error::Result;
use crate::hemodel::AnalyticsCircuit;
use crate::netsim::{run_scenario, Direction, Mode, Scenario, ScenarioReport, Workload};
use crate::params::{nonce_overhead_bits, HeScheme, ParamSetName};
use crate::protocol::MessageKind;
use crate::roundtrip::run_roundtrip;
use crate::symcipher::GaussianSampler;
use crate::tables::{expansion_rows, expansion_table, size_rows, sizes_table, OutputFormat};

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub limit: Option<Duration>,
}

impl CriterionResult {
    /// One status line, free of timing so repeated runs print the same text.
    pub fn line(&self) -> String {
        let status = if self.passed { "PASS" } else { "FAIL" };
        format!("{status} [{}] {}: {}", self.id, self.name, self.detail)
    }
}

pub const CRITERIA: [(u8, &str); 8] = [
    (1, "ciphertext sizes"),
    (2, "expansion and fragmentation"),
    (3, "transciphering precision"),
    (4, "gaussian sampler fidelity"),
    (5, "end-to-end protocol correctness"),
    (6, "privacy and conservation"),
    (7, "single-fragment uploads"),
    (8, "determinism"),
];

fn timed(id: u8, limit: Option<Duration>, f: impl FnOnce() -> Result<(bool, String)>) -> CriterionResult {
    let name = CRITERIA[usize::from(id) - 1].1;
    let start = Instant::now();
    let (mut passed, mut detail) = match f() {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    let elapsed = start.elapsed();
    if let Some(l) = limit {
        if elapsed > l {
            passed = false;
            detail.push_str(&format!("; exceeded the {} s time limit", l.as_secs_f64()));
        }
    }
    CriterionResult { id, name, passed, detail, elapsed, limit }
}

fn csv_records(text: &str) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.records().filter_map(|rec| rec.ok()).map(|rec| rec.iter().map(String::from).collect()).collect()
}

/// Sizes rendered by the `sizes` command.
pub fn check_sizes(cat: &Catalog) -> CriterionResult {
    timed(1, Some(Duration::from_secs(1)), || {
        let rendered = sizes_table(&size_rows(cat)).render(OutputFormat::Csv);
        let got: Vec<(String, String, String)> =
            csv_records(&rendered).into_iter().map(|r| (r[2].clone(), r[3].clone(), r[4].clone())).collect();
        let want: Vec<(String, String, String)> = [(12, 24, 41), (32, 64, 104), (60, 120, 195)]
            .repeat(2)
            .into_iter()
            .map(|(a, b, c)| (a.to_string(), b.to_string(), c.to_string()))
            .collect();
        let ok = got == want;
        let detail = if ok {
            "(ell, payload, ct) = (12,24,41), (32,64,104), (60,120,195) at 80 and 128 bits".to_string()
        } else {
            format!("rows {got:?}, expected {want:?}")
        };
        Ok((ok, detail))
    })
}

/// Expansion factors and fragment counts from the `expansion` command.
pub fn check_expansion(cat: &Catalog) -> CriterionResult {
    timed(2, Some(Duration::from_secs(1)), || {
        let column = |mtu, ovh, col: usize| -> Result<Vec<String>> {
            let t = expansion_table(&expansion_rows(cat, mtu, ovh)?).render(OutputFormat::Csv);
            Ok(csv_records(&t).into_iter().map(|r| r[col].clone()).collect())
        };
        let expansion = column(1400, 0, 3)?;
        let plain = column(1400, 0, 4)?;
        let header7 = column(1400, 7, 4)?;
        let mut problems = Vec::new();
        let want_exp = ["660", "1973", "3939", "5251", "1.7", "1.6", "1.6"];
        if expansion != want_exp {
            problems.push(format!("expansion {expansion:?}, expected {want_exp:?}"));
        }
        let want_plain = ["95", "282", "563", "751", "1", "1", "1"];
        if plain != want_plain {
            problems.push(format!("fragments at overhead 0 {plain:?}, expected {want_plain:?}"));
        }
        let want_h7 = ["284", "566", "754"];
        if header7[1..4] != want_h7 {
            problems.push(format!("BGV/CKKS fragments at overhead 7 {:?}, expected {want_h7:?}", &header7[1..4]));
        }
        Ok(match problems.is_empty() {
            true => (
                true,
                "expansion 660/1973/3939/5251 and 1.7/1.6/1.6; fragments 95/282/563/751 and 1/1/1; \
                 284/566/754 at 7-byte overhead"
                    .into(),
            ),
            false => (false, problems.join("; ")),
        })
    })
}

pub const PRECISION_TRIALS: u64 = 10_000;

/// Transcipher-and-decrypt error against `(T + 0.5)/Δ` for every parameter set.
pub fn check_precision(cat: &Catalog) -> CriterionResult {
    timed(3, Some(Duration::from_secs(30)), || {
        let mut worst = Vec::new();
        let mut ok = true;
        for (i, p) in cat.params().enumerate() {
            let r = run_roundtrip(p, PRECISION_TRIALS, 0xacce_0003 + i as u64)?;
            ok &= r.passed();
            worst.push(format!("{} {} violations (max/bound {:.3})", p.name, r.violations, r.max_error / r.error_bound));
        }
        Ok((ok, format!("{PRECISION_TRIALS} vectors per set: {}", worst.join(", "))))
    })
}

pub const GAUSSIAN_DRAWS: usize = 1_000_000;
pub const GAUSSIAN_WIDTHS: [f64; 3] = [1.6, 4.1, 11.1];

/// Chi-square goodness of fit of `sampler` against `pmf` over the sampler's
/// support, merging neighbouring bins until each expects at least five draws.
pub fn chi_square_p_value(sampler: &GaussianSampler, pmf: &[f64], draws: usize, seed: u64) -> f64 {
    let tail = sampler.tail_cutoff();
    let mut counts = vec![0u64; pmf.len()];
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for _ in 0..draws {
        counts[(sampler.sample(&mut rng) + tail) as usize] += 1;
    }
    let n = draws as f64;
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut e, mut o) = (0.0, 0.0);
    for (p, c) in pmf.iter().zip(&counts) {
        e += p * n;
        o += *c as f64;
        if e >= 5.0 {
            bins.push((e, o));
            (e, o) = (0.0, 0.0);
        }
    }
    if let Some(last) = bins.last_mut() {
        last.0 += e;
        last.1 += o;
    }
    if bins.len() < 2 {
        return 1.0;
    }
    let stat: f64 = bins.iter().map(|(e, o)| (o - e) * (o - e) / e).sum();
    ChiSquared::new((bins.len() - 1) as f64).expect("positive degrees of freedom").sf(stat)
}

/// `exp(-π a²/(αq)²)` normalised over `|a| ≤ tail` by direct summation.
pub fn gaussian_pmf(alpha_q: f64, tail: i64) -> Vec<f64> {
    let w: Vec<f64> = (-tail..=tail).map(|a| (-std::f64::consts::PI * (a * a) as f64 / (alpha_q * alpha_q)).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

pub fn check_gaussian() -> CriterionResult {
    timed(4, Some(Duration::from_secs(30)), || {
        let mut ok = true;
        let mut parts = Vec::new();
        for (i, &aq) in GAUSSIAN_WIDTHS.iter().enumerate() {
            let s = GaussianSampler::new(aq);
            let pval = chi_square_p_value(&s, &gaussian_pmf(aq, s.tail_cutoff()), GAUSSIAN_DRAWS, 0x6a55 + i as u64);
            ok &= pval > 0.01;
            parts.push(format!("αq={aq} p={pval:.4}"));
        }
        Ok((ok, parts.join(", ")))
    })
}

fn hhe_scenario(cat: &Catalog, name: ParamSetName, rsus: u32, cycles: u32, scheme: HeScheme) -> Scenario {
    let w = Workload { rsu_count: rsus, duration_s: f64::from(cycles), mode: Mode::Hhe, ..Workload::default() };
    let mut sc = Scenario::new(w, cat.param(name), cat.profile(scheme));
    sc.seed = 0xacce_0005;
    sc
}

pub fn check_end_to_end(cat: &Catalog) -> CriterionResult {
    timed(5, Some(Duration::from_secs(10)), || {
        let mut sc = hhe_scenario(cat, ParamSetName::Par80L, 5, 10, HeScheme::CkksAddMul);
        sc.circuit = AnalyticsCircuit::Mean;
        let r = run_scenario(&sc)?;
        let bound = r.header.quantization_error + r.header.decryption_error_bound;
        let mut violations = 0;
        let mut worst: f64 = 0.0;
        for c in &r.cycles {
            let slot = c.max_slot_error.unwrap_or(f64::INFINITY);
            let speed = match (c.mean_speed, c.plaintext_mean_speed) {
                (Some(a), Some(b)) => (a - b).abs(),
                _ => f64::INFINITY,
            };
            violations += usize::from(slot > bound) + usize::from(speed > bound);
            worst = worst.max(slot).max(speed);
        }
        let ok = violations == 0 && r.cycles.len() == 10;
        Ok((ok, format!("{} cycles, {violations} violations, worst error {worst:.3e} vs bound {bound:.3e}", r.cycles.len())))
    })
}

pub fn check_privacy_conservation(cat: &Catalog) -> CriterionResult {
    timed(6, None, || {
        // The cloud API surface is checked at compile time in `protocol`.
        let mut problems = Vec::new();
        let mut uploads_total = 0;
        for name in [ParamSetName::Par80S, ParamSetName::Par128L] {
            let sc = hhe_scenario(cat, name, 5, 10, HeScheme::CkksAddMul);
            let r = run_scenario(&sc)?;
            for c in &r.cycles {
                let results = r
                    .messages
                    .iter()
                    .filter(|m| m.kind == MessageKind::ResultReturn && m.cycle == Some(c.cycle))
                    .count();
                if results != 1 {
                    problems.push(format!("{name} cycle {} sent {results} results", c.cycle));
                }
            }
            let want_offline = u64::from(sc.workload.rsu_count) * sc.profile.ciphertext_bytes;
            if r.totals.offline_bytes != want_offline {
                problems.push(format!("{name} offline bytes {} != {want_offline}", r.totals.offline_bytes));
            }
            let uploads = r.totals.uplink_messages;
            let want_nonce = nonce_overhead_bits(uploads, sc.param_set.lambda);
            if r.totals.nonce_overhead_bits != want_nonce {
                problems.push(format!("{name} nonce bits {} != {want_nonce}", r.totals.nonce_overhead_bits));
            }
            uploads_total += uploads;
        }
        Ok(match problems.is_empty() {
            true => (true, format!("one result per cycle, offline = RSUs × key size, nonce bits = r·λ over {uploads_total} uploads; cloud API returns no plaintext")),
            false => (false, problems.join("; ")),
        })
    })
}

fn online_uplink(r: &ScenarioReport) -> impl Iterator<Item = &crate::netsim::MessageRecord> {
    r.messages.iter().filter(|m| !m.offline && m.direction == Direction::Uplink)
}

pub fn check_fragmentation(cat: &Catalog) -> CriterionResult {
    timed(7, None, || {
        let mut problems = Vec::new();
        for name in ParamSetName::ALL {
            let r = run_scenario(&hhe_scenario(cat, name, 2, 2, HeScheme::CkksAddMul))?;
            let multi = online_uplink(&r).filter(|m| m.fragments != 1).count();
            if multi > 0 {
                problems.push(format!("{name}: {multi} multi-fragment uploads"));
            }
        }
        let mut pure = hhe_scenario(cat, ParamSetName::Par80S, 2, 2, HeScheme::Bfv);
        pure.workload.mode = Mode::PureHe;
        let r = run_scenario(&pure)?;
        let min = online_uplink(&r).map(|m| m.fragments).min().unwrap_or(0);
        if min < 95 {
            problems.push(format!("pure-HE BFV upload with only {min} fragments"));
        }
        Ok(match problems.is_empty() {
            true => (true, format!("all six sets single-fragment at MTU 1400; BFV uploads ≥ {min} fragments")),
            false => (false, problems.join("; ")),
        })
    })
}

pub fn check_determinism() -> CriterionResult {
    timed(8, None, || {
        let sc = ConfigFile::parse(EXAMPLE_CONFIG, "example.toml")?.scenario(std::path::Path::new("."))?;
        let a = run_scenario(&sc)?;
        let b = run_scenario(&sc)?;
        let same =
            a.to_json() == b.to_json() && a.cycles_csv() == b.cycles_csv() && a.messages_csv() == b.messages_csv();
        Ok((same, format!("bundled example run twice: reports {}", if same { "identical" } else { "differ" })))
    })
}

pub fn run_all(cat: &Catalog) -> Vec<CriterionResult> {
    vec![
        check_sizes(cat),
        check_expansion(cat),
        check_precision(cat),
        check_gaussian(),
        check_end_to_end(cat),
        check_privacy_conservation(cat),
        check_fragmentation(cat),
        check_determinism(),
    ]
}
