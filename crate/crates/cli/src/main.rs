//! `reglove`: headless runner for the glove simulation.
//!
//! Exit status: 0 on success, 1 when a scenario or verdict fails (or an
//! input cannot be read), 2 on usage errors. Results go to stdout as JSON;
//! the human-readable summary goes to stderr.

mod conformance;

use std::fs;
use std::io::{self, BufReader, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{ArgGroup, Parser, Subcommand};
use reglove_core::harness::{
    load_adl_csv, load_ycb_csv, run_scenario, run_soak, score_adl, score_ycb, FaultEvent, Scenario,
    ScenarioReport, SimConfig, SoakConfig,
};
use reglove_core::session::{read_log, replay, SessionConfig};
use reglove_service::{DriverConfig, ServeOptions};

#[derive(Debug, Parser)]
#[command(name = "reglove", version, about = "Run glove scenarios, soak tests, scoring and the live service")]
struct Cli {
    /// Base config (TOML) layered under scenario files.
    #[arg(long, global = true, env = "REGLOVE_CONFIG", value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario file and emit its report.
    Run {
        #[arg(long, value_name = "FILE")]
        scenario: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the JSON report here instead of stdout.
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
        /// Also write the per-trigger CSV.
        #[arg(long, value_name = "FILE")]
        csv: Option<PathBuf>,
    },
    /// Repeated grasp/hold/release endurance run.
    Soak {
        #[arg(long, default_value_t = 90.0)]
        minutes: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the full report (every cycle) here.
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
    },
    /// Re-run a session command log.
    Replay {
        #[arg(long, value_name = "FILE")]
        log: PathBuf,
    },
    /// Serve live telemetry and commands over websocket/HTTP.
    Serve {
        #[arg(long, env = "REGLOVE_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: IpAddr,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory of scenario files offered to clients.
        #[arg(long, value_name = "DIR")]
        scenarios: Option<PathBuf>,
        /// Command log for later replay.
        #[arg(long, value_name = "FILE")]
        log: Option<PathBuf>,
        /// Static files (the operator console) served at `/`.
        #[arg(long, value_name = "DIR")]
        console: Option<PathBuf>,
    },
    /// Emit or check the protocol golden vectors.
    #[command(group(ArgGroup::new("mode").required(true).args(["emit", "check"])))]
    Conformance {
        #[arg(long, value_name = "FILE")]
        emit: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        check: Option<PathBuf>,
    },
    /// Score benchmark spreadsheets.
    #[command(group(ArgGroup::new("sheet").required(true).args(["adl", "ycb"])))]
    Score {
        #[arg(long, value_name = "CSV")]
        adl: Option<PathBuf>,
        #[arg(long, value_name = "CSV")]
        ycb: Option<PathBuf>,
    },
}

/// What a subcommand reports back: success, or a failed verdict.
enum Outcome {
    Pass,
    Fail,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<Outcome> {
    let base = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Some(SimConfig::base_table(&text).with_context(|| format!("in {}", path.display()))?)
        }
        None => None,
    };
    match cli.command {
        Command::Run { scenario, seed, report, csv } => run(&scenario, seed, report, csv, base.as_ref()),
        Command::Soak { minutes, seed, report } => soak(minutes, seed, report, base.as_ref()),
        Command::Replay { log } => replay_log(&log),
        Command::Serve { port, bind, seed, scenarios, log, console } => {
            let sim = SimConfig::from_layers(base.as_ref(), &toml::Table::new())?;
            let mut driver = DriverConfig::new(SessionConfig { seed, sim, ..SessionConfig::default() });
            driver.scenario_dir = scenarios;
            driver.base_config = base;
            driver.log_path = log;
            let opts = ServeOptions {
                addr: SocketAddr::new(bind, port),
                driver,
                console_dir: console,
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(reglove_service::serve(opts))?;
            Ok(Outcome::Pass)
        }
        Command::Conformance { emit, check } => match (emit, check) {
            (Some(path), _) => {
                let golden = conformance::golden();
                write_out(Some(&path), &serde_json::to_string_pretty(&golden)?)?;
                eprintln!("wrote {} vectors to {}", golden.vectors.len(), path.display());
                Ok(Outcome::Pass)
            }
            (None, Some(path)) => {
                let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                let file: conformance::VectorFile =
                    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
                let problems = conformance::check(&file);
                let verdict = serde_json::json!({
                    "vectors": file.vectors.len(),
                    "mismatches": problems,
                    "pass": problems.is_empty(),
                });
                write_out(None, &verdict.to_string())?;
                for p in &problems {
                    eprintln!("mismatch: {p}");
                }
                eprintln!("{}/{} vectors match", file.vectors.len().saturating_sub(problems.len()), file.vectors.len());
                Ok(if problems.is_empty() { Outcome::Pass } else { Outcome::Fail })
            }
            (None, None) => unreachable!("clap requires one of the group"),
        },
        Command::Score { adl, ycb } => {
            if let Some(path) = adl {
                let score = score_adl(&load_adl_csv(&path)?)?;
                write_out(None, &serde_json::to_string(&score)?)?;
                eprintln!(
                    "mean score {:.2} (sd {:.2}) over {} tasks, glove/human time x{:.2}",
                    score.mean_score, score.std_score, score.n, score.mean_time_ratio
                );
            }
            if let Some(path) = ycb {
                let score = score_ycb(&load_ycb_csv(&path)?)?;
                write_out(None, &serde_json::to_string(&score)?)?;
                eprintln!(
                    "success_rate {:.2}% ({}/{} points, {} objects)",
                    score.success_rate_pct, score.points, score.possible, score.trials
                );
            }
            Ok(Outcome::Pass)
        }
    }
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, format!("{text}\n")).with_context(|| format!("writing {}", p.display())),
        None => match writeln!(io::stdout().lock(), "{text}") {
            // a closed pipe (`| head`) just means nobody wants the rest
            Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
            r => Ok(r?),
        },
    }
}

/// Safety failures of a finished run. Controller faults on their own are
/// expected behaviour in fault scenarios and do not count.
fn safety_failures(report: &ScenarioReport, limit_kpa: f64) -> Vec<String> {
    let mut out = Vec::new();
    if report.max_abs_pressure_kpa >= limit_kpa {
        out.push(format!(
            "pressure reached {:.2} kPa (limit {limit_kpa})",
            report.max_abs_pressure_kpa
        ));
    }
    for entry in &report.fault_log {
        if let FaultEvent::Burst { finger } = entry.event {
            out.push(format!("{finger} chamber burst at {} ms", entry.time_ms));
        }
    }
    out
}

fn run(
    path: &Path,
    seed: Option<u64>,
    report_path: Option<PathBuf>,
    csv_path: Option<PathBuf>,
    base: Option<&toml::Table>,
) -> Result<Outcome> {
    let mut scenario = Scenario::load(path, base)?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    let report = run_scenario(&scenario)?;
    write_out(report_path.as_deref(), &report.to_json())?;
    if let Some(p) = csv_path {
        fs::write(&p, report.to_csv()?).with_context(|| format!("writing {}", p.display()))?;
    }
    let failures = safety_failures(&report, scenario.config.safety.p_hard_limit_kpa);
    let o = &report.outcomes;
    eprintln!(
        "{}: {}/{} gripped, {}/{} predicted correctly, max |P| {:.2} kPa, mean power {:.2} W, final phase {:?}",
        report.scenario,
        o.gripped,
        o.triggers,
        o.correct_predictions,
        o.triggers,
        report.max_abs_pressure_kpa,
        report.mean_power_w,
        report.final_phase
    );
    if report.latency.count > 0 {
        eprintln!(
            "latency {:.2} ms mean, {:.2} ms sd over {} triggers",
            report.latency.mean_ms, report.latency.std_ms, report.latency.count
        );
    }
    for f in &failures {
        eprintln!("FAIL: {f}");
    }
    Ok(if failures.is_empty() { Outcome::Pass } else { Outcome::Fail })
}

fn soak(minutes: f64, seed: u64, report_path: Option<PathBuf>, base: Option<&toml::Table>) -> Result<Outcome> {
    let mut cfg = SoakConfig {
        minutes,
        seed,
        ..SoakConfig::default()
    };
    if let Some(base) = base {
        // the soak's own defaults sit under the base file
        let defaults = toml::Table::try_from(&cfg.config)?;
        cfg.config = SimConfig::from_layers(Some(&defaults), base)?;
    }
    let (report, _) = run_soak(&cfg)?;
    let verdict = report.endurance.clone().context("soak report carries no verdict")?;
    write_out(None, &serde_json::to_string_pretty(&verdict)?)?;
    if let Some(p) = report_path {
        write_out(Some(&p), &report.to_json())?;
    }
    eprintln!(
        "soak {} min: {} cycles, mean power {:.3} W, drift {:.3} kPa: {}",
        verdict.minutes,
        verdict.cycles,
        verdict.mean_power_w,
        verdict.drift_kpa,
        if verdict.pass { "pass" } else { "FAIL" }
    );
    for f in &verdict.failures {
        eprintln!("FAIL: {f}");
    }
    Ok(if verdict.pass { Outcome::Pass } else { Outcome::Fail })
}

fn replay_log(path: &Path) -> Result<Outcome> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let entries = read_log(BufReader::new(file))?;
    let (session, snapshots) = replay(&entries)?;
    let last = snapshots.last().cloned().unwrap_or_else(|| session.snapshot());
    let out = serde_json::json!({
        "frames": session.frame(),
        "commands": session.log().len().saturating_sub(1),
        "reports": session.reports(),
        "final": last,
    });
    write_out(None, &serde_json::to_string_pretty(&out)?)?;
    eprintln!(
        "replayed {} frames ({} ms simulated), final phase {:?}",
        session.frame(),
        last.sim_time_ms,
        last.phase
    );
    Ok(Outcome::Pass)
}
