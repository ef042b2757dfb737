use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hhe_its::acceptance::run_all;
use hhe_its::config::{Catalog, LoadedConfig};
use hhe_its::netsim::{run_scenario, Mode, ScenarioReport};
use hhe_its::params::{FragmentPreset, ParamSetName};
use hhe_its::roundtrip::run_roundtrip;
use hhe_its::tables::{expansion_rows, expansion_table, size_rows, sizes_table, Cell, OutputFormat, Table};
use hhe_its::Error;

#[derive(Parser)]
#[command(name = "hhe-its", version, about = "Size tables, precision checks and backhaul simulation for the RSU-Cloud-TMC pipeline")]
#[command(after_help = "Relative --config paths are also searched in the directories listed in HHE_ITS_CONFIG_PATH.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ciphertext sizes of every parameter set.
    Sizes(Common),
    /// Per-message expansion and fragment counts.
    Expansion(ExpansionArgs),
    /// Encrypt, transcipher and decrypt random vectors and report the error.
    Roundtrip(RoundtripArgs),
    /// Run a backhaul scenario from a config file.
    Simulate(SimulateArgs),
    /// Run the acceptance criteria.
    Selftest(Common),
}

#[derive(Args)]
struct Common {
    /// TOML file with parameter set or HE profile overrides.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Args)]
struct ExpansionArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 1400)]
    mtu: u64,
    /// Per-fragment header bytes.
    #[arg(long, default_value_t = 0, conflicts_with = "preset")]
    overhead: u64,
    /// Named overhead: plain (0) or header7 (7).
    #[arg(long, value_parser = parse_preset)]
    preset: Option<FragmentPreset>,
}

#[derive(Args)]
struct RoundtripArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_parser = parse_params, default_value = "Par-80S")]
    params: ParamSetName,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Drop the Gaussian noise so only rounding error remains.
    #[cfg(feature = "test-hooks")]
    #[arg(long)]
    zero_noise: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Directory for report.json, cycles.csv and messages.csv.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Override the scenario parameter set.
    #[arg(long, value_parser = parse_params)]
    params: Option<ParamSetName>,
    /// Override the MTU of both links.
    #[arg(long)]
    mtu: Option<u64>,
    /// Override the per-fragment overhead of both links.
    #[arg(long)]
    overhead: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Table => OutputFormat::Table,
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

fn parse_params(s: &str) -> Result<ParamSetName, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_preset(s: &str) -> Result<FragmentPreset, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

enum Failure {
    Usage(Error),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_)
            | Error::Io(_)
            | Error::UnknownName(_)
            | Error::UnknownScheme(_)
            | Error::InvalidParamSet { .. }
            | Error::InvalidMtu { .. }
            | Error::InvalidFormat { .. }
            | Error::NonpositiveBound(_)
            | Error::ZeroPlaintext
            | Error::MulUnsupported(_)
            | Error::DepthExhausted { .. } => Failure::Usage(e),
            other => Failure::Check(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
    }
}

fn catalog(config: Option<&Path>) -> Result<Catalog, Error> {
    match config {
        Some(path) => LoadedConfig::load(path)?.file.catalog(),
        None => Ok(Catalog::default()),
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Sizes(c) => {
            let cat = catalog(c.config.as_deref())?;
            print!("{}", sizes_table(&size_rows(&cat)).render(c.format.into()));
        }
        Command::Expansion(a) => {
            let cat = catalog(a.common.config.as_deref())?;
            let overhead = a.preset.map_or(a.overhead, FragmentPreset::overhead_bytes);
            let rows = expansion_rows(&cat, a.mtu, overhead)?;
            print!("{}", expansion_table(&rows).render(a.common.format.into()));
        }
        Command::Roundtrip(a) => {
            let cat = catalog(a.common.config.as_deref())?;
            let p = cat.param(a.params);
            #[cfg(feature = "test-hooks")]
            let report = if a.zero_noise {
                let hooks = hhe_its::symcipher::KeystreamHooks { zero_prf: false, zero_noise: true };
                hhe_its::roundtrip::run_roundtrip_with_hooks(&p, a.trials, a.seed, hooks)?
            } else {
                run_roundtrip(&p, a.trials, a.seed)?
            };
            #[cfg(not(feature = "test-hooks"))]
            let report = run_roundtrip(&p, a.trials, a.seed)?;
            print!("{}", report.table().render(a.common.format.into()));
            if !report.passed() {
                return Err(Failure::Check(format!(
                    "{} of {} slots exceeded the error bound {:e}",
                    report.violations,
                    report.trials * p.ell as u64,
                    report.error_bound
                )));
            }
        }
        Command::Simulate(a) => simulate(a)?,
        Command::Selftest(c) => {
            let cat = catalog(c.config.as_deref())?;
            let results = run_all(&cat);
            for r in &results {
                println!("{}", r.line());
            }
            let failed: Vec<_> = results.iter().filter(|r| !r.passed).map(|r| r.id.to_string()).collect();
            if !failed.is_empty() {
                return Err(Failure::Check(format!("failed criteria: {}", failed.join(", "))));
            }
        }
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    let loaded = LoadedConfig::load(&a.config)?;
    let mut sc = loaded.scenario()?;
    if let Some(name) = a.params {
        sc.param_set = loaded.file.catalog()?.param(name);
    }
    for link in [&mut sc.uplink, &mut sc.downlink] {
        if let Some(mtu) = a.mtu {
            link.mtu = mtu;
        }
        if let Some(ovh) = a.overhead {
            link.per_fragment_overhead = ovh;
        }
    }
    if let Some(seed) = a.seed {
        sc.seed = seed;
    }
    sc.validate()?;
    let report = run_scenario(&sc)?;
    if let Some(dir) = &a.out {
        report.write_to(dir)?;
    }
    print!("{}", summary(&report).render(a.format.into()));
    Ok(())
}

fn summary(r: &ScenarioReport) -> Table {
    let h = &r.header;
    let t = &r.totals;
    let text = |k: &str, v: String| vec![Cell::Text(k.into()), Cell::Text(v)];
    let int = |k: &str, v: u64| vec![Cell::Text(k.into()), Cell::Int(v)];
    let fixed = |k: &str, v: f64, d: u32| vec![Cell::Text(k.into()), Cell::Fixed(v, d)];
    let mut rows = vec![
        text("mode", if h.mode == Mode::Hhe { "hhe" } else { "pure-he" }.into()),
        text("param_set", h.param_set.to_string()),
        text("profile", h.profile.to_string()),
        text("circuit", h.circuit.name().to_string()),
        int("rsu_count", u64::from(h.rsu_count)),
        int("cycles", h.cycles),
        int("bsm_messages", h.bsm_messages),
        int("seed", h.seed),
        int("plaintext_bytes", t.plaintext_bytes),
        int("offline_messages", t.offline_messages),
        int("offline_bytes", t.offline_bytes),
        int("uplink_messages", t.uplink_messages),
        int("uplink_bytes", t.uplink_bytes),
        int("uplink_fragments", t.uplink_fragments),
        int("downlink_messages", t.downlink_messages),
        int("downlink_bytes", t.downlink_bytes),
        int("downlink_fragments", t.downlink_fragments),
        int("nonce_overhead_bits", t.nonce_overhead_bits),
        fixed("uplink_expansion", t.uplink_expansion, 4),
        fixed("upload_latency_p50_s", r.upload_latency.p50_s, 6),
        fixed("upload_latency_p95_s", r.upload_latency.p95_s, 6),
        fixed("upload_latency_max_s", r.upload_latency.max_s, 6),
        fixed("queuing_delay_max_s", r.queuing_delay.max_s, 6),
        fixed("cycle_latency_p50_s", r.cycle_latency.p50_s, 6),
        fixed("cycle_latency_max_s", r.cycle_latency.max_s, 6),
    ];
    let max_err = r.cycles.iter().filter_map(|c| c.max_slot_error).fold(None, |m: Option<f64>, e| Some(m.map_or(e, |m| m.max(e))));
    if let Some(e) = max_err {
        rows.push(fixed("max_slot_error", e, 9));
        rows.push(fixed("decryption_error_bound", h.decryption_error_bound, 9));
    }
    Table { columns: vec!["metric", "value"], rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;
    use hhe_its::config::CONFIG_PATH_ENV;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn env_var_name_matches_help() {
        let help = Cli::command().render_long_help().to_string();
        assert!(help.contains(CONFIG_PATH_ENV));
    }
}
