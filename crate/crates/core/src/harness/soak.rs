//! Long-run duty-cycle test: repeated grasp/hold/release of one object.

use serde::{Deserialize, Serialize};

use super::config::SimConfig;
use super::report::{FaultEvent, ScenarioReport};
use super::scenario::ScheduledFault;
use super::sim::Simulation;
use super::HarnessError;
use crate::grasp::{FingerTarget, GraspType};
use crate::perception::{ClassifierMode, SceneObject};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SoakConfig {
    pub minutes: f64,
    pub seed: u64,
    pub cycle_period_ms: f64,
    pub first_trigger_ms: f64,
    pub hold_ms: f64,
    pub grasp: GraspType,
    pub power_nominal_w: f64,
    pub power_tolerance_w: f64,
    /// Largest allowed cycle-to-cycle change of end-of-Hold pressure.
    pub drift_limit_kpa: f64,
    pub faults: Vec<ScheduledFault>,
    pub config: SimConfig,
}

impl Default for SoakConfig {
    fn default() -> Self {
        let mut config = SimConfig::default();
        // a worn glove keeps its grip topped up
        config.safety.hold_regulation = true;
        SoakConfig {
            minutes: 90.0,
            seed: 0,
            cycle_period_ms: 20_000.0,
            first_trigger_ms: 1_000.0,
            hold_ms: 14_000.0,
            grasp: GraspType::Power,
            power_nominal_w: 10.3,
            power_tolerance_w: 1.2,
            drift_limit_kpa: 0.5,
            faults: Vec::new(),
            config,
        }
    }
}

impl SoakConfig {
    pub fn duration_ms(&self) -> f64 {
        self.minutes * 60_000.0
    }

    /// One trigger per period, as many as fit whole in the run.
    pub fn trigger_times(&self) -> Vec<f64> {
        let end = self.duration_ms();
        (0u64..)
            .map(|i| i as f64 * self.cycle_period_ms)
            .take_while(|start| start + self.cycle_period_ms <= end)
            .map(|start| start + self.first_trigger_ms)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoakVerdict {
    pub pass: bool,
    pub minutes: f64,
    pub cycles: usize,
    /// Worst cycle-to-cycle change of end-of-Hold pressure on any flexed
    /// finger.
    pub drift_kpa: f64,
    pub mean_power_w: f64,
    pub energy_joules: f64,
    /// False when the run is shorter than one full cycle; the power
    /// envelope is then not judged.
    pub power_checked: bool,
    pub failures: Vec<String>,
}

/// Runs the soak and returns the full report (with the verdict attached)
/// and the finished simulation.
pub fn run_soak(cfg: &SoakConfig) -> Result<(ScenarioReport, Simulation), HarnessError> {
    if !(cfg.minutes > 0.0 && cfg.minutes.is_finite()) {
        return Err(HarnessError::ScenarioInvalid(format!("minutes {} must be > 0", cfg.minutes)));
    }
    let need = cfg.cycle_period_ms - cfg.hold_ms
        - cfg.config.safety.extend_ms
        - cfg.config.safety.flex_settle_ms
        - cfg.config.safety.release_vent_ms;
    if !(cfg.hold_ms > 0.0 && cfg.first_trigger_ms >= 0.0 && need > 0.0) {
        return Err(HarnessError::ScenarioInvalid(
            "soak cycle period too short for hold plus phase timers".into(),
        ));
    }
    let name = format!("soak-{}min", cfg.minutes);
    let mut sim = Simulation::new(&name, cfg.seed, cfg.config.clone(), ClassifierMode::Stub)?;
    let object = SceneObject::new("soak-object", cfg.grasp);
    for t in cfg.trigger_times() {
        sim.schedule_trigger(t, object.clone(), Some(cfg.hold_ms), None);
    }
    for f in &cfg.faults {
        if !f.injection.is_valid() {
            return Err(HarnessError::ScenarioInvalid("soak fault parameters out of range".into()));
        }
        sim.schedule_injection(f.at_ms, f.injection);
    }
    sim.run_until(cfg.duration_ms());
    let mut report = sim.report();
    report.endurance = Some(judge(cfg, &report, &sim));
    Ok((report, sim))
}

fn judge(cfg: &SoakConfig, report: &ScenarioReport, sim: &Simulation) -> SoakVerdict {
    let mut failures = Vec::new();
    for entry in &report.fault_log {
        match entry.event {
            FaultEvent::ControllerFault { code } => {
                failures.push(format!("controller fault {} at {:.0} ms", code.name(), entry.time_ms))
            }
            FaultEvent::Burst { finger } => {
                failures.push(format!("{finger} chamber burst at {:.0} ms", entry.time_ms))
            }
            _ => {}
        }
    }

    let plan = sim.config().grasp_table().map(|t| t.plan(cfg.grasp));
    let flexed: Vec<_> = plan
        .map(|p| p.fingers_with(FingerTarget::Flex).collect())
        .unwrap_or_default();
    let samples: Vec<_> = report.triggers.iter().filter_map(|t| t.hold_end_pressure_kpa).collect();
    let mut drift_kpa = 0.0_f64;
    for pair in samples.windows(2) {
        for &f in &flexed {
            drift_kpa = drift_kpa.max((pair[1][f] - pair[0][f]).abs());
        }
    }
    if drift_kpa >= cfg.drift_limit_kpa {
        failures.push(format!(
            "hold pressure drift {drift_kpa:.3} kPa per cycle (limit {})",
            cfg.drift_limit_kpa
        ));
    }

    let cycles = report
        .triggers
        .iter()
        .filter(|t| t.hold_end_pressure_kpa.is_some())
        .count();
    let power_checked = cfg.duration_ms() >= cfg.cycle_period_ms;
    let (lo, hi) = (
        cfg.power_nominal_w - cfg.power_tolerance_w,
        cfg.power_nominal_w + cfg.power_tolerance_w,
    );
    if power_checked && !(lo..=hi).contains(&report.mean_power_w) {
        failures.push(format!(
            "mean power {:.3} W outside [{lo}, {hi}] W",
            report.mean_power_w
        ));
    }
    SoakVerdict {
        pass: failures.is_empty(),
        minutes: cfg.minutes,
        cycles,
        drift_kpa,
        mean_power_w: report.mean_power_w,
        energy_joules: report.energy_joules,
        power_checked,
        failures,
    }
}

/// The verdict alone. Configuration problems become failures.
pub fn endurance_soak(cfg: &SoakConfig) -> SoakVerdict {
    match run_soak(cfg) {
        Ok((report, _)) => report.endurance.expect("run_soak attaches a verdict"),
        Err(e) => SoakVerdict {
            pass: false,
            minutes: cfg.minutes,
            cycles: 0,
            drift_kpa: 0.0,
            mean_power_w: 0.0,
            energy_joules: 0.0,
            power_checked: false,
            failures: vec![e.to_string()],
        },
    }
}
