//! Command-line front end: replay traces through the pipeline, drive the
//! catalog coverage run, write simulated scenarios to disk, and print the
//! catalog and its statistics.
//!
//! Exit codes are stable for CI: 0 success, 1 usage error, 2 parse error,
//! 3 coverage failure.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use udsmon::catalog::{self, CatalogStats};
use udsmon::coverage;
use udsmon::detect::pipeline::process_trace;
use udsmon::detect::pti::{load_feed, render_feed, ThreatIntelItem};
use udsmon::detect::rules::{default_rules, RuleSet};
use udsmon::flow::RoutingExpectation;
use udsmon::sensor::LoggingPolicy;
use udsmon::sim::{self, simulate};
use udsmon::store::load_store;
use udsmon::trace::{load_trace, render_trace};

/// Seed used when none is given; every run with the same seed is
/// byte-identical.
const DEFAULT_SEED: u64 = 0xC0FFEE;
/// Benign trace length exercised by the coverage command.
const BENIGN_DURATION_MS: u64 = 1_300_000;

// ===== cli definition =====

#[derive(Parser)]
#[command(name = "udsmon", version, about = "UDS security-monitoring pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum Format {
    #[default]
    Text,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate all cataloged techniques plus benign traffic and score the
    /// pipeline against the catalog's expectations.
    Coverage {
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full pipeline over a saved trace.
    Replay {
        /// Trace file, one exchange per line.
        trace: PathBuf,
        /// Logging policy TOML (default: built-in policy).
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Detection rule set TOML (default: built-in rules).
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Context store TOML (default: the built-in fixture vehicle).
        #[arg(long)]
        store: Option<PathBuf>,
        /// Routing expectation TOML; omitting it skips flow monitoring and
        /// feeds every trace line to the sensor.
        #[arg(long)]
        expect: Option<PathBuf>,
        /// Threat-intelligence feed (default: none).
        #[arg(long)]
        ti: Option<PathBuf>,
        #[arg(long, default_value = sim::DEFAULT_VEHICLE)]
        vehicle: String,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write one technique's simulated scenario (trace, store, expectation,
    /// policy, rules, intel feed) to a directory.
    Simulate {
        /// Technique id, e.g. AT-PE-4.
        technique: String,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Output directory (default: scenario-<technique>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the attack-technique catalog.
    Catalog {
        #[arg(long, value_enum, default_value_t)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the catalog and AUTOSAR logging-support statistics.
    Stats {
        #[arg(long, value_enum, default_value_t)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

// ===== errors =====

#[derive(Debug)]
enum CliError {
    Usage(String),
    Parse(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Parse(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Parse(msg) => f.write_str(msg),
        }
    }
}

/// Attach the offending path to a load/parse failure.
fn at_path<E: fmt::Display>(path: &Path) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Parse(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cmd: Cmd) -> Result<u8, CliError> {
    match cmd {
        Cmd::Coverage { seed, format, out } => cmd_coverage(seed, format, out.as_deref()),
        Cmd::Replay { trace, policy, rules, store, expect, ti, vehicle, format, out } => {
            cmd_replay(ReplayInputs { trace, policy, rules, store, expect, ti, vehicle }, format, out.as_deref())
        }
        Cmd::Simulate { technique, seed, out } => cmd_simulate(&technique, seed, out),
        Cmd::Catalog { format, out } => cmd_catalog(format, out.as_deref()),
        Cmd::Stats { format, out } => cmd_stats(format, out.as_deref()),
    }
}

/// Write to `--out` when given, stdout otherwise.
fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text).map_err(at_path(path)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

// ===== coverage =====

#[derive(Serialize)]
struct CoverageReport {
    stats: CatalogStats,
    benign: coverage::BenignCheck,
    #[serde(flatten)]
    matrix: coverage::CoverageMatrix,
}

fn cmd_coverage(seed: u64, format: Format, out: Option<&Path>) -> Result<u8, CliError> {
    let matrix = coverage::run(seed).map_err(|e| CliError::Parse(e.to_string()))?;
    let benign = coverage::check_benign(seed, BENIGN_DURATION_MS)
        .map_err(|e| CliError::Parse(e.to_string()))?;
    let ok = matrix.all_pass() && benign.pass;
    let report = CoverageReport { stats: catalog::stats(), benign, matrix };
    let text = match format {
        Format::Text => {
            let mut s = render_stats(&report.stats);
            s.push_str(&format!(
                "benign traffic ({} ms): {} events, {} alerts -> {}\n\n",
                report.benign.duration_ms,
                report.benign.events,
                report.benign.alerts,
                if report.benign.pass { "pass" } else { "FAIL" }
            ));
            s.push_str(&report.matrix.render_text());
            s
        }
        Format::Json => {
            serde_json::to_string_pretty(&report).expect("coverage report serializes") + "\n"
        }
    };
    emit(out, &text)?;
    Ok(if ok { 0 } else { 3 })
}

// ===== replay =====

struct ReplayInputs {
    trace: PathBuf,
    policy: Option<PathBuf>,
    rules: Option<PathBuf>,
    store: Option<PathBuf>,
    expect: Option<PathBuf>,
    ti: Option<PathBuf>,
    vehicle: String,
}

fn cmd_replay(inputs: ReplayInputs, format: Format, out: Option<&Path>) -> Result<u8, CliError> {
    let trace = load_trace(&inputs.trace).map_err(at_path(&inputs.trace))?;
    let policy = match &inputs.policy {
        Some(p) => LoggingPolicy::load(p).map_err(at_path(p))?,
        None => LoggingPolicy::default(),
    };
    let rules = match &inputs.rules {
        Some(p) => RuleSet::load(p).map_err(at_path(p))?,
        None => default_rules(),
    };
    let store = match &inputs.store {
        Some(p) => load_store(p).map_err(at_path(p))?,
        None => sim::fixture_store(),
    };
    let expect = match &inputs.expect {
        Some(p) => Some(RoutingExpectation::load(p).map_err(at_path(p))?),
        None => None,
    };
    let ti: Vec<ThreatIntelItem> = match &inputs.ti {
        Some(p) => load_feed(p).map_err(at_path(p))?,
        None => Vec::new(),
    };
    let report = process_trace(&policy, &rules, &store, expect.as_ref(), &ti, &inputs.vehicle, &trace)
        .map_err(|e| CliError::Parse(e.to_string()))?;
    let text = match format {
        Format::Text => report.render_text(),
        Format::Json => report.to_json() + "\n",
    };
    emit(out, &text)?;
    Ok(0)
}

// ===== simulate =====

#[derive(Serialize)]
struct ScenarioMeta<'a> {
    technique: &'a str,
    seed: u64,
    vehicle: &'a str,
    /// Ground-truth attack intervals, half-open `[start, end)`.
    truth: &'a [(u64, u64)],
}

fn cmd_simulate(technique: &str, seed: u64, out: Option<PathBuf>) -> Result<u8, CliError> {
    let scenario = simulate(technique, seed).map_err(|e| CliError::Usage(e.to_string()))?;
    let dir = out.unwrap_or_else(|| PathBuf::from(format!("scenario-{}", technique.to_lowercase())));
    fs::create_dir_all(&dir).map_err(at_path(&dir))?;

    let ser = |e: &dyn fmt::Display| CliError::Parse(e.to_string());
    let meta = ScenarioMeta {
        technique,
        seed,
        vehicle: &scenario.vehicle_id,
        truth: &scenario.truth,
    };
    let files = [
        ("trace.log", render_trace(&scenario.trace)),
        ("store.toml", scenario.store.to_toml().map_err(|e| ser(&e))?),
        ("expect.toml", scenario.expect.to_toml().map_err(|e| ser(&e))?),
        ("policy.toml", scenario.policy.to_toml().map_err(|e| ser(&e))?),
        ("rules.toml", default_rules().to_toml().map_err(|e| ser(&e))?),
        ("ti.log", render_feed(&scenario.ti)),
        ("scenario.toml", toml::to_string(&meta).map_err(|e| ser(&e))?),
    ];
    for (name, text) in files {
        let path = dir.join(name);
        fs::write(&path, text).map_err(at_path(&path))?;
        println!("wrote {}", path.display());
    }
    Ok(0)
}

// ===== catalog & stats =====

fn cmd_catalog(format: Format, out: Option<&Path>) -> Result<u8, CliError> {
    let catalog = catalog::catalog();
    let text = match format {
        Format::Text => {
            let mut s = format!(
                "{:<10} {:<38} {:<16} {:<8} {:<18} {}\n",
                "id", "name", "sids", "logging", "autosar", "detection"
            );
            for t in &catalog {
                let sids = if t.sids_multiple {
                    "multiple".to_string()
                } else if t.sids.is_empty() {
                    "-".to_string()
                } else {
                    t.sids.iter().map(|s| format!("0x{s:02x}")).collect::<Vec<_>>().join(",")
                };
                let logging = if t.logging_various {
                    "various".to_string()
                } else if t.logging.is_empty() {
                    "NA".to_string()
                } else {
                    t.logging.iter().map(|s| s.as_str()).collect::<Vec<_>>().join("+")
                };
                let autosar = match &t.autosar_note {
                    Some(note) => format!("{} ({note})", t.autosar.as_str()),
                    None => t.autosar.as_str().to_string(),
                };
                let detection = if t.detection.is_empty() {
                    "NA".to_string()
                } else {
                    t.detection.iter().map(|s| s.as_str()).collect::<Vec<_>>().join("+")
                };
                s.push_str(&format!(
                    "{:<10} {:<38} {:<16} {:<8} {:<18} {}\n",
                    t.id, t.name, sids, logging, autosar, detection
                ));
            }
            s.push_str(&format!("{} techniques\n", catalog.len()));
            s
        }
        Format::Json => serde_json::to_string_pretty(&catalog).expect("catalog serializes") + "\n",
    };
    emit(out, &text)?;
    Ok(0)
}

fn render_stats(s: &CatalogStats) -> String {
    let tactics = s
        .tactic_counts
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(" ");
    format!(
        "techniques: {}\n\
         tactics: {}\n\
         context-table sids: {}\n\
         autosar-supported sids: {} of {}\n\
         autosar technique logging: full={} partial={} none={}\n\
         autosar logging support ratio: {}%-{}%\n\
         detectable techniques: {} of {}\n\n",
        s.techniques,
        tactics,
        s.table_sids,
        s.autosar_sids,
        s.table_sids,
        s.autosar_full,
        s.autosar_partial,
        s.autosar_none,
        s.autosar_ratio_low_pct,
        s.autosar_ratio_high_pct,
        s.detectable,
        s.techniques
    )
}

fn cmd_stats(format: Format, out: Option<&Path>) -> Result<u8, CliError> {
    let stats = catalog::stats();
    let text = match format {
        Format::Text => render_stats(&stats),
        Format::Json => serde_json::to_string_pretty(&stats).expect("stats serialize") + "\n",
    };
    emit(out, &text)?;
    Ok(0)
}
