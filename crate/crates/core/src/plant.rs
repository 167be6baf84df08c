//! Fixed-timestep model of the pneumatic plant.
//!
//! Each finger chamber relaxes first-order toward the pressure of whatever
//! it is routed to, with a shared per-pump flow limit, leaks, and injected
//! faults. Explicit Euler at `dt_ms` (default 1 ms, so `k * dt = 0.012`).

use serde::{Deserialize, Serialize};

use crate::controller::{ExhaustValve, PneumaticCommand, ValveRoute};
use crate::grasp::{ActuationPlan, Finger, FingerTarget, PerFinger};

/// Electrical draw of each component while it is active.
///
/// A finger valve is energized whenever it is commanded away from
/// `Closed`. The exhaust solenoid is normally open, so it draws power while
/// commanded `Closed`; the de-energized glove vents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerTable {
    pub pump_w: f64,
    pub solenoid_w: f64,
    pub baseline_w: f64,
}

impl Default for PowerTable {
    fn default() -> Self {
        PowerTable {
            pump_w: 4.8,
            solenoid_w: 0.9,
            baseline_w: 2.7,
        }
    }
}

impl PowerTable {
    /// Instantaneous draw under `cmd`, in watts.
    pub fn draw_w(&self, cmd: &PneumaticCommand) -> f64 {
        let pumps = cmd.inflation_pump as u32 + cmd.vacuum_pump as u32;
        let finger_coils = cmd
            .finger_valve
            .iter()
            .filter(|(_, r)| *r != ValveRoute::Closed)
            .count() as u32;
        let exhaust_coil = (cmd.exhaust_valve == ExhaustValve::Closed) as u32;
        self.baseline_w
            + self.pump_w * f64::from(pumps)
            + self.solenoid_w * f64::from(finger_coils + exhaust_coil)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConfig {
    pub chamber_volume_ml: f64,
    pub pump_flow_lpm: f64,
    pub p_source_kpa: f64,
    pub p_vacuum_kpa: f64,
    /// First-order relaxation rate `k` of a valve open to a source, 1/s.
    pub valve_rate_per_s: f64,
    pub leak_rate_per_s: f64,
    pub dt_ms: f64,
    pub power: PowerTable,
    pub hard_burst_kpa: f64,
    /// Fingers one pump can serve at the full relaxation rate.
    pub full_rate_channels_per_pump: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        PlantConfig {
            chamber_volume_ml: 20.0,
            pump_flow_lpm: 6.0,
            p_source_kpa: 40.0,
            p_vacuum_kpa: -40.0,
            valve_rate_per_s: 12.0,
            leak_rate_per_s: 0.02,
            dt_ms: 1.0,
            power: PowerTable::default(),
            hard_burst_kpa: 55.0,
            full_rate_channels_per_pump: 3.0,
        }
    }
}

impl PlantConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.dt_ms > 0.0 && self.dt_ms.is_finite()) {
            return Err("dt_ms must be > 0".into());
        }
        if !(self.chamber_volume_ml > 0.0) {
            return Err("chamber_volume_ml must be > 0".into());
        }
        if !(self.p_vacuum_kpa < 0.0 && self.p_source_kpa > 0.0) {
            return Err("require p_vacuum_kpa < 0 < p_source_kpa".into());
        }
        if !(self.valve_rate_per_s > 0.0 && self.leak_rate_per_s >= 0.0) {
            return Err("rates must be non-negative (valve rate > 0)".into());
        }
        if self.valve_rate_per_s * self.dt_ms / 1000.0 >= 1.0 {
            return Err("valve_rate_per_s * dt must stay below 1 for a stable step".into());
        }
        if !(self.full_rate_channels_per_pump > 0.0 && self.pump_flow_lpm > 0.0) {
            return Err("pump capacity must be > 0".into());
        }
        let p = &self.power;
        if p.pump_w < 0.0 || p.solenoid_w < 0.0 || p.baseline_w < 0.0 {
            return Err("power entries must be >= 0".into());
        }
        if !(self.hard_burst_kpa > 0.0) {
            return Err("hard_burst_kpa must be > 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pump {
    Inflation,
    Vacuum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fault {
    StuckValve { finger: Finger, position: ValveRoute },
    Leak { finger: Finger, rate_per_s: f64 },
    PumpDegraded { pump: Pump, flow_fraction: f64 },
}

impl Fault {
    pub fn is_valid(&self) -> bool {
        match *self {
            Fault::StuckValve { .. } => true,
            Fault::Leak { rate_per_s, .. } => rate_per_s >= 0.0 && rate_per_s.is_finite(),
            Fault::PumpDegraded { flow_fraction, .. } => flow_fraction > 0.0 && flow_fraction <= 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub pressure_kpa: PerFinger<f64>,
    pub sim_time_ms: f64,
    pub steps: u64,
    pub energy_joules: f64,
    /// First finger whose chamber ruptured.
    pub burst: Option<Finger>,
    pub ruptured: PerFinger<bool>,
    pub active_faults: Vec<Fault>,
}

impl Default for PlantState {
    fn default() -> Self {
        PlantState {
            pressure_kpa: PerFinger::splat(0.0),
            sim_time_ms: 0.0,
            steps: 0,
            energy_joules: 0.0,
            burst: None,
            ruptured: PerFinger::splat(false),
            active_faults: Vec::new(),
        }
    }
}

impl PlantState {
    pub fn inject(&mut self, fault: Fault) {
        if !self.active_faults.contains(&fault) {
            self.active_faults.push(fault);
        }
    }

    pub fn clear_faults(&mut self) {
        self.active_faults.clear();
    }

    pub fn max_abs_pressure(&self) -> f64 {
        self.pressure_kpa
            .iter()
            .map(|(_, p)| p.abs())
            .fold(0.0, f64::max)
    }

    fn route(&self, finger: Finger, cmd: &PneumaticCommand) -> ValveRoute {
        self.active_faults
            .iter()
            .rev()
            .find_map(|f| match *f {
                Fault::StuckValve { finger: s, position } if s == finger => Some(position),
                _ => None,
            })
            .unwrap_or(cmd.finger_valve[finger])
    }

    fn flow_fraction(&self, pump: Pump) -> f64 {
        self.active_faults
            .iter()
            .filter_map(|f| match *f {
                Fault::PumpDegraded { pump: p, flow_fraction } if p == pump => Some(flow_fraction),
                _ => None,
            })
            .product()
    }

    fn extra_leak(&self, finger: Finger) -> f64 {
        self.active_faults
            .iter()
            .filter_map(|f| match *f {
                Fault::Leak { finger: l, rate_per_s } if l == finger => Some(rate_per_s),
                _ => None,
            })
            .sum()
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Drive {
    Source,
    Vacuum,
    Vent,
    Trapped,
}

/// Advances `state` by one timestep in place.
pub fn advance(state: &mut PlantState, cmd: &PneumaticCommand, cfg: &PlantConfig) {
    let drives = PerFinger::from_fn(|f| {
        let route = state.route(f, cmd);
        if route != ValveRoute::Closed && cmd.exhaust_open() {
            // the open exhaust vents anything routed to the manifold
            return Drive::Vent;
        }
        match route {
            ValveRoute::ToPressureLine if cmd.inflation_pump => Drive::Source,
            ValveRoute::ToVacuumLine if cmd.vacuum_pump => Drive::Vacuum,
            _ => Drive::Trapped,
        }
    });
    let demand = |d: Drive| drives.iter().filter(|(f, x)| *x == d && !state.ruptured[*f]).count();
    let share = |pump: Pump, n: usize| {
        if n == 0 {
            return 1.0;
        }
        let capacity = cfg.full_rate_channels_per_pump * state.flow_fraction(pump);
        (capacity / n as f64).min(1.0)
    };
    let share_source = share(Pump::Inflation, demand(Drive::Source));
    let share_vacuum = share(Pump::Vacuum, demand(Drive::Vacuum));

    let dt_s = cfg.dt_ms / 1000.0;
    let k = cfg.valve_rate_per_s;
    for finger in Finger::ALL {
        if state.ruptured[finger] {
            continue;
        }
        let p = state.pressure_kpa[finger];
        let (k_eff, target) = match drives[finger] {
            Drive::Source => (k * share_source, cfg.p_source_kpa),
            Drive::Vacuum => (k * share_vacuum, cfg.p_vacuum_kpa),
            Drive::Vent => (k, 0.0),
            Drive::Trapped => (0.0, p),
        };
        let leak = cfg.leak_rate_per_s + state.extra_leak(finger);
        let next = p + k_eff * (target - p) * dt_s - leak * p * dt_s;
        if next.abs() > cfg.hard_burst_kpa {
            state.ruptured[finger] = true;
            state.burst.get_or_insert(finger);
            state.pressure_kpa[finger] = 0.0;
        } else {
            state.pressure_kpa[finger] = next;
        }
    }

    state.energy_joules += cfg.power.draw_w(cmd) * dt_s;
    state.steps += 1;
    state.sim_time_ms = state.steps as f64 * cfg.dt_ms;
}

/// Pure form of [`advance`].
pub fn step_plant(state: &PlantState, cmd: &PneumaticCommand, cfg: &PlantConfig) -> PlantState {
    let mut next = state.clone();
    advance(&mut next, cmd, cfg);
    next
}

/// Normalized posture: -1 fully flexed, +1 fully extended.
pub fn flexion(pressure_kpa: f64, cfg: &PlantConfig) -> f64 {
    (pressure_kpa / cfg.p_source_kpa).clamp(-1.0, 1.0)
}

pub const DEFAULT_GRIP_THRESHOLD: f64 = 0.8;

/// Does the hand hold the shape `plan` asks for?
pub fn grip_predicate(
    state: &PlantState,
    plan: &ActuationPlan,
    threshold: f64,
    cfg: &PlantConfig,
) -> bool {
    plan.targets.iter().all(|(finger, target)| {
        let x = flexion(state.pressure_kpa[finger], cfg);
        match target {
            FingerTarget::Flex => x <= -threshold,
            FingerTarget::Extend => x >= threshold * 0.5,
            FingerTarget::Neutral => true,
        }
    })
}
