//! Live operator session: a [`Simulation`] advanced in fixed frames, with
//! operator commands applied between frames and recorded for replay.
//!
//! Everything here is synchronous and deterministic; the network service
//! owns a `Session` on one thread and feeds it commands.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controller::{Phase, ValveRoute};
use crate::grasp::{GraspType, PerFinger};
use crate::harness::{
    ClassifierSpec, HarnessError, HostFault, Injection, LastClassification, LatencyStats, Scenario,
    ScenarioReport, SimConfig, Simulation,
};
use crate::perception::SceneObject;
use crate::plant::flexion;
use crate::protocol::Message;

pub const SNAPSHOT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FingerSnapshot {
    pub pressure_kpa: f64,
    /// -1 fully flexed, +1 fully extended.
    pub flexion: f64,
    pub valve: ValveRoute,
    pub vent_latched: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySnapshot {
    pub schema_version: u32,
    pub seq: u64,
    pub sim_time_ms: f64,
    pub phase: Phase,
    pub fingers: PerFinger<FingerSnapshot>,
    pub exhaust_open: bool,
    pub inflation_pump: bool,
    pub vacuum_pump: bool,
    pub last_classification: Option<LastClassification>,
    pub latency: LatencyStats,
    pub mean_power_w: f64,
    pub energy_joules: f64,
    pub active_faults: Vec<String>,
    pub selected_object: String,
    pub armed_override: Option<GraspType>,
    pub classifier: String,
    pub scenario: Option<String>,
    pub paused: bool,
}

impl TelemetrySnapshot {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("snapshot serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum OperatorCommand {
    /// The tactile switch.
    TriggerIntent,
    SelectObject { name: String },
    OverrideGrasp { grasp: GraspType },
    InjectFault { fault: Injection },
    ClearFaults,
    SetClassifierMode { mode: ClassifierSpec },
    Reset,
    StartScenario { name: String },
    Pause,
    Resume,
}

/// Why a command was refused. `error` is a stable machine-readable kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub error: String,
    pub reason: String,
}

impl Rejection {
    fn new(error: &str, reason: impl Into<String>) -> Self {
        Rejection {
            error: error.into(),
            reason: reason.into(),
        }
    }
}

/// Objects the operator can put in front of the camera.
pub fn default_objects() -> Vec<SceneObject> {
    vec![
        SceneObject::new("mug", GraspType::Power),
        SceneObject::new("coin", GraspType::Pinch),
        SceneObject::new("bottle cap", GraspType::ThreeJawChuck),
        SceneObject::new("spray bottle", GraspType::Tool),
        SceneObject::new("key", GraspType::Key),
        SceneObject {
            name: "marble".into(),
            true_grasp: GraspType::Pinch,
            scale_ambiguous: true,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub seed: u64,
    pub sim: SimConfig,
    pub classifier: ClassifierSpec,
    /// Simulated time per frame; one snapshot per frame.
    pub frame_ms: f64,
    pub objects: Vec<SceneObject>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            seed: 0,
            sim: SimConfig::default(),
            classifier: ClassifierSpec::Stub,
            frame_ms: 20.0,
            objects: default_objects(),
        }
    }
}

/// One line of the command log. `frame` is the number of frames completed
/// when the command took effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "snake_case")]
pub enum LogEntry {
    Start { config: SessionConfig },
    Command {
        frame: u64,
        command: OperatorCommand,
        /// The scenario a `StartScenario` resolved to, so replay needs no
        /// scenario files.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scenario: Option<Box<Scenario>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rejected: Option<Rejection>,
    },
    End { frame: u64 },
}

pub struct Session {
    cfg: SessionConfig,
    sim: Simulation,
    frame: u64,
    paused: bool,
    selected: usize,
    armed_override: Option<GraspType>,
    scenario: Option<Scenario>,
    scenario_reported: bool,
    reports: BTreeMap<String, ScenarioReport>,
    log: Vec<LogEntry>,
    scenario_dir: Option<PathBuf>,
    base_table: Option<toml::Table>,
}

impl Session {
    pub fn new(cfg: SessionConfig) -> Result<Self, HarnessError> {
        if !(cfg.frame_ms >= cfg.sim.plant.dt_ms) {
            return Err(HarnessError::ScenarioInvalid("frame_ms shorter than one plant step".into()));
        }
        if cfg.objects.is_empty() {
            return Err(HarnessError::ScenarioInvalid("object catalog is empty".into()));
        }
        let sim = Self::fresh_sim(&cfg)?;
        Ok(Session {
            log: vec![LogEntry::Start { config: cfg.clone() }],
            cfg,
            sim,
            frame: 0,
            paused: false,
            selected: 0,
            armed_override: None,
            scenario: None,
            scenario_reported: false,
            reports: BTreeMap::new(),
            scenario_dir: None,
            base_table: None,
        })
    }

    fn fresh_sim(cfg: &SessionConfig) -> Result<Simulation, HarnessError> {
        Simulation::new("live", cfg.seed, cfg.sim.clone(), cfg.classifier.resolve(cfg.seed))
    }

    /// Where `StartScenario` looks for `<name>.toml`, and the base config
    /// layered under those files.
    pub fn with_scenario_dir(mut self, dir: PathBuf, base: Option<toml::Table>) -> Self {
        self.scenario_dir = Some(dir);
        self.base_table = base;
        self
    }

    pub fn frame(&self) -> u64 {
        self.frame
    }

    pub fn simulation(&self) -> &Simulation {
        &self.sim
    }

    pub fn reports(&self) -> &BTreeMap<String, ScenarioReport> {
        &self.reports
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    pub fn list_scenarios(&self) -> Vec<String> {
        let Some(dir) = &self.scenario_dir else { return Vec::new() };
        list_scenarios(dir)
    }

    fn resolve_scenario(&self, name: &str) -> Result<Scenario, Rejection> {
        let dir = self
            .scenario_dir
            .as_ref()
            .ok_or_else(|| Rejection::new("unknown_scenario", "no scenario directory configured"))?;
        if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') {
            return Err(Rejection::new("unknown_scenario", format!("bad scenario name {name:?}")));
        }
        let path = dir.join(format!("{name}.toml"));
        if !path.is_file() {
            return Err(Rejection::new("unknown_scenario", format!("no scenario named {name:?}")));
        }
        let s = Scenario::load(&path, self.base_table.as_ref())
            .map_err(|e| Rejection::new("invalid_scenario", e.to_string()))?;
        s.validate().map_err(|e| Rejection::new("invalid_scenario", e.to_string()))?;
        Ok(s)
    }

    /// Applies one operator command at the current frame boundary and
    /// records it.
    pub fn apply(&mut self, command: OperatorCommand) -> Result<(), Rejection> {
        let scenario = match &command {
            OperatorCommand::StartScenario { name } => match self.resolve_scenario(name) {
                Ok(s) => Some(Box::new(s)),
                Err(r) => {
                    self.record(command, None, Some(r.clone()));
                    return Err(r);
                }
            },
            _ => None,
        };
        let result = self.execute(&command, scenario.as_deref());
        self.record(command, scenario, result.clone().err());
        result
    }

    fn record(&mut self, command: OperatorCommand, scenario: Option<Box<Scenario>>, rejected: Option<Rejection>) {
        self.log.push(LogEntry::Command {
            frame: self.frame,
            command,
            scenario,
            rejected,
        });
    }

    fn execute(&mut self, command: &OperatorCommand, scenario: Option<&Scenario>) -> Result<(), Rejection> {
        match command {
            OperatorCommand::TriggerIntent => {
                let object = self.cfg.objects[self.selected].clone();
                let grasp = if self.sim.controller().phase == Phase::Idle {
                    self.armed_override.take()
                } else {
                    None
                };
                self.sim.trigger_now(object, grasp);
            }
            OperatorCommand::SelectObject { name } => {
                self.selected = self
                    .cfg
                    .objects
                    .iter()
                    .position(|o| o.name == *name)
                    .ok_or_else(|| Rejection::new("unknown_object", format!("no object named {name:?}")))?;
            }
            OperatorCommand::OverrideGrasp { grasp } => match self.sim.controller().phase {
                Phase::Idle => self.armed_override = Some(*grasp),
                Phase::AwaitGrasp => {
                    if !self.sim.override_pending(*grasp) {
                        // the host's own command never made it; send ours
                        self.sim.send_command(Message::SetGrasp { grasp: *grasp });
                    }
                }
                Phase::Hold => {
                    // let go, and use the correction on the next attempt
                    self.sim.send_command(Message::Release);
                    self.armed_override = Some(*grasp);
                }
                other => {
                    return Err(Rejection::new(
                        "phase",
                        format!("override not accepted in {}", other.name()),
                    ))
                }
            },
            OperatorCommand::InjectFault { fault } => {
                if !fault.is_valid() {
                    return Err(Rejection::new("invalid", "fault parameters out of range"));
                }
                let now = self.sim.now_ms();
                self.sim.inject_now(*fault, now);
            }
            OperatorCommand::ClearFaults => {
                let now = self.sim.now_ms();
                self.sim.inject_now(Injection::Host(HostFault::ClearFaults), now);
            }
            OperatorCommand::SetClassifierMode { mode } => {
                if let ClassifierSpec::Confusion { matrix: Some(m), .. } = mode {
                    crate::perception::ConfusionMatrix::new(*m.rows())
                        .map_err(|e| Rejection::new("invalid", e.to_string()))?;
                }
                self.cfg.classifier = mode.clone();
                self.sim
                    .set_classifier(mode.resolve(self.cfg.seed))
                    .map_err(|e| Rejection::new("invalid", e.to_string()))?;
            }
            OperatorCommand::Reset => {
                self.sim = Self::fresh_sim(&self.cfg).map_err(|e| Rejection::new("invalid", e.to_string()))?;
                self.scenario = None;
                self.armed_override = None;
                self.paused = false;
            }
            OperatorCommand::StartScenario { .. } => {
                let s = scenario.expect("resolved before execute");
                self.sim = Simulation::from_scenario(s).map_err(|e| Rejection::new("invalid_scenario", e.to_string()))?;
                self.scenario = Some(s.clone());
                self.scenario_reported = false;
                self.armed_override = None;
            }
            OperatorCommand::Pause => self.paused = true,
            OperatorCommand::Resume => self.paused = false,
        }
        Ok(())
    }

    /// Advances one frame (unless paused) and returns its snapshot.
    pub fn advance_frame(&mut self) -> TelemetrySnapshot {
        if !self.paused {
            let target = self.sim.now_ms() + self.cfg.frame_ms;
            self.sim.run_until(target);
            if let Some(s) = &self.scenario {
                if !self.scenario_reported && self.sim.now_ms() >= s.duration_ms {
                    self.reports.insert(s.name.clone(), self.sim.report());
                    self.scenario_reported = true;
                }
            }
        }
        self.frame += 1;
        self.snapshot()
    }

    /// Pure projection of the current state.
    pub fn snapshot(&self) -> TelemetrySnapshot {
        let sim = &self.sim;
        let plant = sim.plant();
        let cmd = sim.command();
        let ctrl = sim.controller();
        let plant_cfg = &sim.config().plant;
        TelemetrySnapshot {
            schema_version: SNAPSHOT_SCHEMA_VERSION,
            seq: self.frame,
            sim_time_ms: sim.now_ms(),
            phase: ctrl.phase,
            fingers: PerFinger::from_fn(|f| FingerSnapshot {
                pressure_kpa: plant.pressure_kpa[f],
                flexion: flexion(plant.pressure_kpa[f], plant_cfg),
                valve: cmd.finger_valve[f],
                vent_latched: ctrl.vent_latch[f],
            }),
            exhaust_open: cmd.exhaust_open(),
            inflation_pump: cmd.inflation_pump,
            vacuum_pump: cmd.vacuum_pump,
            last_classification: sim.last_classification().cloned(),
            latency: sim.latency_stats(),
            mean_power_w: sim.mean_power_w(),
            energy_joules: plant.energy_joules,
            active_faults: sim.active_faults(),
            selected_object: self.cfg.objects[self.selected].name.clone(),
            armed_override: self.armed_override,
            classifier: match sim.classifier_mode() {
                crate::perception::ClassifierMode::Stub => "stub".into(),
                crate::perception::ClassifierMode::Confusion { .. } => "confusion".into(),
            },
            scenario: self.scenario.as_ref().map(|s| s.name.clone()),
            paused: self.paused,
        }
    }

    /// Writes the log as JSON lines, with an end marker at the current frame.
    pub fn write_log<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for entry in &self.log {
            writeln!(out, "{}", serde_json::to_string(entry).expect("log entry serializes"))?;
        }
        writeln!(
            out,
            "{}",
            serde_json::to_string(&LogEntry::End { frame: self.frame }).expect("log entry serializes")
        )
    }
}

pub fn list_scenarios(dir: &Path) -> Vec<String> {
    let Ok(entries) = std::fs::read_dir(dir) else { return Vec::new() };
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .collect();
    names.sort();
    names
}

pub fn read_log<R: BufRead>(input: R) -> Result<Vec<LogEntry>, HarnessError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| HarnessError::Parse(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(&line)
            .map_err(|e| HarnessError::Parse(format!("log line {}: {e}", i + 1)))?;
        out.push(entry);
    }
    Ok(out)
}

/// Re-runs a logged session frame by frame and returns it together with
/// every snapshot it produced.
pub fn replay(entries: &[LogEntry]) -> Result<(Session, Vec<TelemetrySnapshot>), HarnessError> {
    let Some(LogEntry::Start { config }) = entries.first() else {
        return Err(HarnessError::Parse("log does not begin with a start entry".into()));
    };
    let mut session = Session::new(config.clone())?;
    let mut end = None;
    let mut snapshots = Vec::new();
    for entry in &entries[1..] {
        match entry {
            LogEntry::Start { .. } => return Err(HarnessError::Parse("second start entry in log".into())),
            LogEntry::Command {
                frame,
                command,
                scenario,
                ..
            } => {
                while session.frame < *frame {
                    snapshots.push(session.advance_frame());
                }
                let result = match command {
                    OperatorCommand::StartScenario { .. } => {
                        let s = scenario.as_deref();
                        match s {
                            Some(s) => session.execute(command, Some(s)),
                            None => Err(Rejection::new("unknown_scenario", "not resolved when logged")),
                        }
                    }
                    other => session.execute(other, None),
                };
                session.record(command.clone(), scenario.clone(), result.err());
            }
            LogEntry::End { frame } => end = Some(*frame),
        }
    }
    if let Some(end) = end {
        while session.frame < end {
            snapshots.push(session.advance_frame());
        }
    }
    Ok((session, snapshots))
}
