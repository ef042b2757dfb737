//! TOML configuration: parameter-set and profile overrides plus scenarios.
//!
//! ```toml
//! seed = 7
//!
//! [[param_set]]
//! name = "Par-80S"
//! q = 33554467
//!
//! [[profile]]
//! scheme = "BFV"
//! ciphertext_bytes = 131939
//! supports_mul = true
//!
//! [scenario]
//! mode = "hhe"
//! param_set = "Par-80L"
//! rsu_count = 5
//!
//! [uplink]
//! per_fragment_overhead = 7
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::codec::{load_telemetry_csv, FixedPointFormat, RecordFormat};
use crate::error::{Error, Result};
use crate::hemodel::{AnalyticsCircuit, Role, DEFAULT_DEPTH_BUDGET};
use crate::netsim::{LinkModel, Mode, Scenario, Workload};
use crate::params::{HeScheme, HeSchemeProfile, ParamSet, ParamSetName, BSM_PLAINTEXT_BYTES, DEFAULT_SLOT_BITS};

/// Colon-separated directories searched for relative config paths.
pub const CONFIG_PATH_ENV: &str = "HHE_ITS_CONFIG_PATH";

/// The bundled example scenario.
pub const EXAMPLE_CONFIG: &str = include_str!("../configs/example.toml");

/// Parameter sets and HE profiles in effect.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    params: BTreeMap<ParamSetName, ParamSet>,
    profiles: BTreeMap<HeScheme, HeSchemeProfile>,
}

impl Default for Catalog {
    fn default() -> Self {
        Catalog {
            params: ParamSetName::ALL.iter().map(|&n| (n, ParamSet::builtin(n))).collect(),
            profiles: HeScheme::ALL.iter().map(|&s| (s, HeSchemeProfile::builtin(s))).collect(),
        }
    }
}

impl Catalog {
    pub fn param(&self, name: ParamSetName) -> ParamSet {
        self.params[&name]
    }

    pub fn profile(&self, scheme: HeScheme) -> HeSchemeProfile {
        self.profiles[&scheme]
    }

    pub fn params(&self) -> impl Iterator<Item = &ParamSet> {
        self.params.values()
    }

    pub fn with_param(mut self, p: ParamSet) -> Result<Self> {
        p.validate()?;
        self.params.insert(p.name, p);
        Ok(self)
    }

    pub fn with_profile(mut self, profile: HeSchemeProfile) -> Result<Self> {
        profile.validate()?;
        self.profiles.insert(profile.scheme, profile);
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSetOverride {
    pub name: ParamSetName,
    pub q: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub mode: Mode,
    pub param_set: ParamSetName,
    pub profile: HeScheme,
    pub rsu_count: u32,
    pub bsm_rate_hz: f64,
    pub plaintext_bytes_per_msg: u64,
    pub duration_s: f64,
    pub cycle_window_s: f64,
    pub decryptor: Role,
    pub circuit: AnalyticsCircuit,
    pub depth_budget: u32,
    pub compute_time_s: f64,
    pub bound_b: Option<f64>,
    /// Relative paths resolve against the config file's directory.
    pub telemetry_csv: Option<PathBuf>,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        let w = Workload::default();
        ScenarioSection {
            mode: w.mode,
            param_set: ParamSetName::Par80L,
            profile: HeScheme::CkksAddMul,
            rsu_count: w.rsu_count,
            bsm_rate_hz: w.bsm_rate_hz,
            plaintext_bytes_per_msg: BSM_PLAINTEXT_BYTES,
            duration_s: w.duration_s,
            cycle_window_s: w.cycle_window_s,
            decryptor: Role::Tmc,
            circuit: AnalyticsCircuit::Mean,
            depth_budget: DEFAULT_DEPTH_BUDGET,
            compute_time_s: 0.0,
            bound_b: None,
            telemetry_csv: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodecSection {
    pub total_bits: u32,
    pub fraction_bits: u32,
}

impl Default for CodecSection {
    fn default() -> Self {
        CodecSection { total_bits: DEFAULT_SLOT_BITS, fraction_bits: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    #[serde(default, rename = "param_set")]
    pub param_sets: Vec<ParamSetOverride>,
    #[serde(default, rename = "profile")]
    pub profiles: Vec<HeSchemeProfile>,
    pub scenario: Option<ScenarioSection>,
    pub codec: Option<CodecSection>,
    pub uplink: Option<LinkModel>,
    pub downlink: Option<LinkModel>,
}

impl ConfigFile {
    /// Parse TOML text. `origin` names the source in error messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))
    }

    pub fn catalog(&self) -> Result<Catalog> {
        let mut cat = Catalog::default();
        for o in &self.param_sets {
            let mut p = cat.param(o.name);
            if let Some(q) = o.q {
                p = p.with_modulus(q)?;
            }
            cat = cat.with_param(p)?;
        }
        for prof in &self.profiles {
            cat = cat.with_profile(*prof)?;
        }
        Ok(cat)
    }

    /// Build the scenario. `base_dir` anchors relative telemetry paths.
    pub fn scenario(&self, base_dir: &Path) -> Result<Scenario> {
        let cat = self.catalog()?;
        let s = self.scenario.clone().unwrap_or_default();
        let codec = self.codec.unwrap_or_default();
        let workload = Workload {
            rsu_count: s.rsu_count,
            bsm_rate_hz: s.bsm_rate_hz,
            plaintext_bytes_per_msg: s.plaintext_bytes_per_msg,
            duration_s: s.duration_s,
            cycle_window_s: s.cycle_window_s,
            mode: s.mode,
        };
        let mut sc = Scenario::new(workload, cat.param(s.param_set), cat.profile(s.profile));
        sc.uplink = self.uplink.unwrap_or_default();
        sc.downlink = self.downlink.unwrap_or_default();
        sc.circuit = s.circuit;
        sc.depth_budget = s.depth_budget;
        sc.decryptor = s.decryptor;
        sc.record_format = RecordFormat::uniform(FixedPointFormat::new(codec.total_bits, codec.fraction_bits)?);
        sc.bound_b = s.bound_b;
        sc.compute_time_s = s.compute_time_s;
        sc.seed = self.seed.unwrap_or(0);
        if let Some(path) = &s.telemetry_csv {
            sc.telemetry = Some(load_telemetry_csv(&base_dir.join(path))?);
        }
        sc.validate()?;
        Ok(sc)
    }
}

/// Locate `path`, falling back to the directories in [`CONFIG_PATH_ENV`].
pub fn resolve_config_path(path: &Path) -> Result<PathBuf> {
    if path.is_file() {
        return Ok(path.to_path_buf());
    }
    if path.is_relative() {
        if let Some(dirs) = std::env::var_os(CONFIG_PATH_ENV) {
            for dir in std::env::split_paths(&dirs) {
                let candidate = dir.join(path);
                if candidate.is_file() {
                    return Ok(candidate);
                }
            }
        }
    }
    Err(Error::Config(format!("config file {} not found", path.display())))
}

/// A parsed config file and the directory it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub path: PathBuf,
    pub file: ConfigFile,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let path = resolve_config_path(path)?;
        let text = std::fs::read_to_string(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let file = ConfigFile::parse(&text, &path.display().to_string())?;
        Ok(LoadedConfig { path, file })
    }

    pub fn base_dir(&self) -> &Path {
        self.path.parent().unwrap_or(Path::new("."))
    }

    pub fn scenario(&self) -> Result<Scenario> {
        self.file.scenario(self.base_dir())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_config_parses() {
        let f = ConfigFile::parse(EXAMPLE_CONFIG, "example").unwrap();
        let sc = f.scenario(Path::new(".")).unwrap();
        assert_eq!(sc.workload.rsu_count, 5);
        assert_eq!(sc.workload.mode, Mode::Hhe);
        assert_eq!(sc.workload.duration_s, 60.0);
        assert_eq!(sc.param_set, ParamSet::builtin(ParamSetName::Par80L));
        assert_eq!(sc.profile.ciphertext_bytes, 1_050_129);
        assert_eq!(sc.seed, 2024);
        assert_eq!(sc.uplink, LinkModel::default());
    }

    #[test]
    fn overrides() {
        let text = r#"
[[param_set]]
name = "Par-80S"
q = 33554467

[[profile]]
scheme = "BFV"
ciphertext_bytes = 1000
supports_mul = false
"#;
        let cat = ConfigFile::parse(text, "t").unwrap().catalog().unwrap();
        assert_eq!(cat.param(ParamSetName::Par80S).q, 33_554_467);
        assert_eq!(cat.param(ParamSetName::Par80M).q, ParamSet::builtin(ParamSetName::Par80M).q);
        assert_eq!(cat.profile(HeScheme::Bfv).ciphertext_bytes, 1000);

        let composite = "[[param_set]]\nname = \"Par-80S\"\nq = 33554433\n";
        assert!(ConfigFile::parse(composite, "t").unwrap().catalog().is_err());
    }

    #[test]
    fn errors_carry_line_context() {
        let e = ConfigFile::parse("seed = 1\n[scenario]\nparam_set = \"Par-256\"\n", "bad.toml").unwrap_err();
        let Error::Config(msg) = e else { panic!("{e:?}") };
        assert!(msg.starts_with("bad.toml"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");

        let e = ConfigFile::parse("[scenario]\nrsu_cnt = 4\n", "typo.toml").unwrap_err();
        assert!(e.to_string().contains("rsu_cnt"), "{e}");

        let f = ConfigFile::parse("[scenario]\nrsu_count = 0\n", "zero.toml").unwrap();
        assert!(f.scenario(Path::new(".")).is_err());
        let f = ConfigFile::parse("[uplink]\nmtu = 7\nper_fragment_overhead = 7\n", "mtu.toml").unwrap();
        assert!(matches!(f.scenario(Path::new(".")), Err(Error::InvalidMtu { .. })));
    }

    #[test]
    fn circuits_and_modes() {
        let text = r#"
[scenario]
mode = "pure-he"
profile = "BFV"
decryptor = "rsu"
[scenario.circuit]
kind = "weighted-index"
weights = [0.5, 0.25]
"#;
        let sc = ConfigFile::parse(text, "t").unwrap().scenario(Path::new(".")).unwrap();
        assert_eq!(sc.workload.mode, Mode::PureHe);
        assert_eq!(sc.circuit, AnalyticsCircuit::WeightedIndex { weights: vec![0.5, 0.25] });
        assert_eq!(sc.decryptor, Role::Rsu);
        let bad = "[scenario]\nprofile = \"CKKS-add\"\n[scenario.circuit]\nkind = \"variance\"\n";
        let f = ConfigFile::parse(bad, "t").unwrap();
        assert!(matches!(f.scenario(Path::new(".")), Err(Error::MulUnsupported(_))));
    }

    #[test]
    fn telemetry_path_is_relative_to_config() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("t.csv"),
            "rsu_id,timestamp_ms,speed,acceleration,occupancy,queue_length\n0,0,12.5,0.1,3,1\n",
        )
        .unwrap();
        let cfg = dir.path().join("c.toml");
        std::fs::write(&cfg, "[scenario]\ntelemetry_csv = \"t.csv\"\n").unwrap();
        let sc = LoadedConfig::load(&cfg).unwrap().scenario().unwrap();
        assert_eq!(sc.telemetry.unwrap()[0].speed, 12.5);
        assert!(LoadedConfig::load(&dir.path().join("missing.toml")).is_err());
    }
}
