//! Actuator-side grasp controller.
//!
//! A pure, clock-driven state machine: every transition is a function of
//! `(state, event, config)` only. The driver owns the clock and feeds
//! `Tick` events; nothing in here reads wall time.
//!
//! Cycle: `Idle -> AwaitGrasp -> Extend -> Flex -> Hold -> Release -> Idle`.
//! `Extend` pre-shapes the hand by inflating every finger, `Flex` reverses
//! the valves of flex-target fingers onto the vacuum line, `Hold` traps the
//! chamber pressures, and `Release` vents through the exhaust solenoid.
//! `Fault` is latched; the driver must rebuild the state to leave it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grasp::{ActuationPlan, Finger, FingerTarget, GraspTable, GraspType, PerFinger};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultCode {
    OverPressure,
    HostLost,
    Aborted,
    LinkFault,
}

impl FaultCode {
    pub fn to_wire(self) -> u8 {
        match self {
            FaultCode::OverPressure => 1,
            FaultCode::HostLost => 2,
            FaultCode::Aborted => 3,
            FaultCode::LinkFault => 4,
        }
    }

    pub fn from_wire(code: u8) -> Option<Self> {
        match code {
            1 => Some(FaultCode::OverPressure),
            2 => Some(FaultCode::HostLost),
            3 => Some(FaultCode::Aborted),
            4 => Some(FaultCode::LinkFault),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FaultCode::OverPressure => "over_pressure",
            FaultCode::HostLost => "host_lost",
            FaultCode::Aborted => "aborted",
            FaultCode::LinkFault => "link_fault",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    AwaitGrasp,
    Extend,
    Flex,
    Hold,
    Release,
    Fault(FaultCode),
}

impl Phase {
    pub fn to_wire(self) -> u8 {
        match self {
            Phase::Idle => 0,
            Phase::AwaitGrasp => 1,
            Phase::Extend => 2,
            Phase::Flex => 3,
            Phase::Hold => 4,
            Phase::Release => 5,
            Phase::Fault(_) => 6,
        }
    }

    pub fn has_plan(self) -> bool {
        matches!(self, Phase::Extend | Phase::Flex | Phase::Hold)
    }

    pub fn is_fault(self) -> bool {
        matches!(self, Phase::Fault(_))
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::Idle => "idle",
            Phase::AwaitGrasp => "await_grasp",
            Phase::Extend => "extend",
            Phase::Flex => "flex",
            Phase::Hold => "hold",
            Phase::Release => "release",
            Phase::Fault(_) => "fault",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValveRoute {
    ToPressureLine,
    ToVacuumLine,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExhaustValve {
    Open,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PneumaticCommand {
    pub finger_valve: PerFinger<ValveRoute>,
    pub exhaust_valve: ExhaustValve,
    pub inflation_pump: bool,
    pub vacuum_pump: bool,
}

impl PneumaticCommand {
    /// All finger valves closed, exhaust open, pumps off.
    pub fn fail_safe() -> Self {
        PneumaticCommand {
            finger_valve: PerFinger::splat(ValveRoute::Closed),
            exhaust_valve: ExhaustValve::Open,
            inflation_pump: false,
            vacuum_pump: false,
        }
    }

    /// Everything closed and off, exhaust shut.
    pub fn sealed() -> Self {
        PneumaticCommand {
            exhaust_valve: ExhaustValve::Closed,
            ..Self::fail_safe()
        }
    }

    pub fn is_fail_safe(&self) -> bool {
        *self == Self::fail_safe()
    }

    pub fn exhaust_open(&self) -> bool {
        self.exhaust_valve == ExhaustValve::Open
    }

    /// No finger is routed to a line while both pumps are off and the
    /// exhaust is shut.
    pub fn is_well_formed(&self) -> bool {
        if self.inflation_pump || self.vacuum_pump || self.exhaust_open() {
            return true;
        }
        self.finger_valve
            .iter()
            .all(|(_, route)| route == ValveRoute::Closed)
    }

    /// Is `finger` routed to a line whose pump is running?
    pub fn routed_to_active_line(&self, finger: Finger) -> bool {
        match self.finger_valve[finger] {
            ValveRoute::ToPressureLine => self.inflation_pump,
            ValveRoute::ToVacuumLine => self.vacuum_pump,
            ValveRoute::Closed => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ControllerEvent {
    IntentEdge,
    GraspCommand(GraspType),
    ReleaseCommand,
    Heartbeat,
    Tick(f64),
    PressureReport(PerFinger<f64>),
    AbortCommand,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("invalid controller config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafetyConfig {
    pub p_soft_limit_kpa: f64,
    pub p_hard_limit_kpa: f64,
    pub watchdog_ms: f64,
    pub extend_ms: f64,
    pub flex_settle_ms: f64,
    pub release_vent_ms: f64,
    /// A vented finger unlatches once |P| drops below this fraction of the
    /// soft limit.
    pub hysteresis: f64,
    /// Vacuum source pressure, used for the early exit out of `Flex`.
    pub vacuum_source_kpa: f64,
    /// `Flex` ends early once every flex-target finger reaches this
    /// fraction of `vacuum_source_kpa`.
    pub flex_exit_fraction: f64,
    /// Keep pumps and routing live during `Hold` instead of trapping the
    /// chamber pressure. Flexed fingers are topped up toward
    /// `vacuum_source_kpa` and shut off at it.
    pub hold_regulation: bool,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        SafetyConfig {
            p_soft_limit_kpa: 45.0,
            p_hard_limit_kpa: 50.0,
            watchdog_ms: 250.0,
            extend_ms: 300.0,
            flex_settle_ms: 400.0,
            release_vent_ms: 500.0,
            hysteresis: 0.9,
            vacuum_source_kpa: -40.0,
            flex_exit_fraction: 0.9,
            hold_regulation: false,
        }
    }
}

impl SafetyConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if !(self.p_soft_limit_kpa > 0.0 && self.p_soft_limit_kpa < self.p_hard_limit_kpa) {
            return bad("require 0 < p_soft_limit_kpa < p_hard_limit_kpa");
        }
        for (name, d) in [
            ("watchdog_ms", self.watchdog_ms),
            ("extend_ms", self.extend_ms),
            ("flex_settle_ms", self.flex_settle_ms),
            ("release_vent_ms", self.release_vent_ms),
        ] {
            if !(d > 0.0 && d.is_finite()) {
                return Err(ConfigError::Invalid(format!("{name} must be > 0")));
            }
        }
        if !(self.hysteresis > 0.0 && self.hysteresis < 1.0) {
            return bad("hysteresis must lie in (0, 1)");
        }
        if !(self.vacuum_source_kpa < 0.0) {
            return bad("vacuum_source_kpa must be negative");
        }
        if !(self.flex_exit_fraction > 0.0 && self.flex_exit_fraction <= 1.0) {
            return bad("flex_exit_fraction must lie in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ControllerConfig {
    pub safety: SafetyConfig,
    pub grasp_table: GraspTable,
}

impl From<SafetyConfig> for ControllerConfig {
    fn from(safety: SafetyConfig) -> Self {
        ControllerConfig {
            safety,
            grasp_table: GraspTable::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub phase: Phase,
    pub active_plan: Option<ActuationPlan>,
    pub phase_entry_time: f64,
    pub last_heartbeat_time: f64,
    /// Time of the latest `Tick`.
    pub now_ms: f64,
    pub last_pressures: PerFinger<f64>,
    /// Fingers currently isolated by the soft-limit interlock.
    pub vent_latch: PerFinger<bool>,
}

impl ControllerState {
    pub fn new(now_ms: f64) -> Self {
        ControllerState {
            phase: Phase::Idle,
            active_plan: None,
            phase_entry_time: now_ms,
            last_heartbeat_time: now_ms,
            now_ms,
            last_pressures: PerFinger::splat(0.0),
            vent_latch: PerFinger::splat(false),
        }
    }

    /// Invariants that must hold in every reachable state.
    pub fn is_well_formed(&self) -> bool {
        self.active_plan.is_some() == self.phase.has_plan()
            && self.phase_entry_time <= self.now_ms
            && self.last_heartbeat_time <= self.now_ms
    }

    fn enter(mut self, phase: Phase) -> Self {
        self.phase = phase;
        self.phase_entry_time = self.now_ms;
        if !phase.has_plan() {
            self.active_plan = None;
        }
        self
    }

    fn elapsed(&self) -> f64 {
        self.now_ms - self.phase_entry_time
    }
}

/// The standing command for a state, including any soft-limit venting.
pub fn command_for(state: &ControllerState, cfg: &SafetyConfig) -> PneumaticCommand {
    use ValveRoute::*;
    let mut cmd = match (state.phase, state.active_plan) {
        (Phase::Fault(_), _) | (Phase::Idle, _) => return PneumaticCommand::fail_safe(),
        (Phase::AwaitGrasp, _) => PneumaticCommand::sealed(),
        (Phase::Extend, _) => PneumaticCommand {
            finger_valve: PerFinger::splat(ToPressureLine),
            exhaust_valve: ExhaustValve::Closed,
            inflation_pump: true,
            vacuum_pump: false,
        },
        (Phase::Hold, Some(plan)) if cfg.hold_regulation => regulated_hold(state, &plan, cfg),
        (Phase::Hold, _) => PneumaticCommand::sealed(),
        (Phase::Flex, Some(plan)) => closure_command(&plan),
        (Phase::Flex, None) => PneumaticCommand::sealed(),
        (Phase::Release, _) => PneumaticCommand {
            finger_valve: PerFinger::splat(ToPressureLine),
            exhaust_valve: ExhaustValve::Open,
            inflation_pump: false,
            vacuum_pump: false,
        },
    };
    for (finger, latched) in state.vent_latch.iter() {
        if latched {
            cmd.finger_valve[finger] = Closed;
            cmd.exhaust_valve = ExhaustValve::Open;
        }
    }
    cmd
}

fn closure_command(plan: &ActuationPlan) -> PneumaticCommand {
    let finger_valve = plan.targets.map(|_, target| match target {
        FingerTarget::Flex => ValveRoute::ToVacuumLine,
        FingerTarget::Extend => ValveRoute::ToPressureLine,
        FingerTarget::Neutral => ValveRoute::Closed,
    });
    PneumaticCommand {
        finger_valve,
        exhaust_valve: ExhaustValve::Closed,
        inflation_pump: plan.fingers_with(FingerTarget::Extend).next().is_some(),
        vacuum_pump: plan.fingers_with(FingerTarget::Flex).next().is_some(),
    }
}

/// Closure routing, except a flexed finger is shut off once it is at or
/// below the vacuum setpoint. The pumps keep their lines live throughout.
fn regulated_hold(state: &ControllerState, plan: &ActuationPlan, cfg: &SafetyConfig) -> PneumaticCommand {
    let mut cmd = closure_command(plan);
    for f in plan.fingers_with(FingerTarget::Flex) {
        if state.last_pressures[f] <= cfg.vacuum_source_kpa {
            cmd.finger_valve[f] = ValveRoute::Closed;
        }
    }
    cmd
}

fn flex_reached(state: &ControllerState, cfg: &SafetyConfig) -> bool {
    let Some(plan) = state.active_plan else {
        return false;
    };
    let threshold = cfg.flex_exit_fraction * cfg.vacuum_source_kpa;
    let mut flex_fingers = plan.fingers_with(FingerTarget::Flex).peekable();
    flex_fingers.peek().is_some() && flex_fingers.all(|f| state.last_pressures[f] <= threshold)
}

/// One transition. Events that mean nothing in the current phase leave the
/// state untouched and return its standing command.
pub fn step(
    state: &ControllerState,
    event: &ControllerEvent,
    cfg: &ControllerConfig,
) -> (ControllerState, PneumaticCommand) {
    let safety = &cfg.safety;
    let mut next = *state;
    match (state.phase, event) {
        (_, ControllerEvent::Tick(now)) => {
            if *now >= state.now_ms {
                next.now_ms = *now;
                next = advance_timers(next, safety);
            }
        }
        (_, ControllerEvent::Heartbeat) => next.last_heartbeat_time = state.now_ms,
        (_, ControllerEvent::PressureReport(p)) => next.last_pressures = *p,
        (Phase::Fault(_), _) => {}
        (_, ControllerEvent::AbortCommand) => next = next.enter(Phase::Fault(FaultCode::Aborted)),
        (Phase::Idle, ControllerEvent::IntentEdge) => next = next.enter(Phase::AwaitGrasp),
        (Phase::AwaitGrasp, ControllerEvent::GraspCommand(grasp)) => {
            next.active_plan = Some(cfg.grasp_table.plan(*grasp));
            next = next.enter(Phase::Extend);
        }
        (Phase::AwaitGrasp, ControllerEvent::ReleaseCommand) => next = next.enter(Phase::Idle),
        (Phase::Hold, ControllerEvent::IntentEdge) => next = next.enter(Phase::Release),
        (Phase::Extend | Phase::Flex | Phase::Hold, ControllerEvent::ReleaseCommand) => {
            next = next.enter(Phase::Release)
        }
        _ => {}
    }
    (next, command_for(&next, safety))
}

fn advance_timers(state: ControllerState, cfg: &SafetyConfig) -> ControllerState {
    match state.phase {
        Phase::Extend if state.elapsed() >= cfg.extend_ms => state.enter(Phase::Flex),
        Phase::Flex if state.elapsed() >= cfg.flex_settle_ms || flex_reached(&state, cfg) => {
            state.enter(Phase::Hold)
        }
        Phase::Release if state.elapsed() >= cfg.release_vent_ms => state.enter(Phase::Idle),
        _ => state,
    }
}

/// Pressure interlock, run after every pressure report.
///
/// Any |P| at or above the hard limit latches `Fault(OverPressure)`. A
/// finger at or above the soft limit is isolated (valve closed, exhaust
/// open) until it falls below `hysteresis * soft`. Returns `None` when the
/// interlock has nothing to say.
pub fn safety_override(
    state: &ControllerState,
    pressures: &PerFinger<f64>,
    cfg: &SafetyConfig,
) -> Option<(ControllerState, PneumaticCommand)> {
    if state.phase.is_fault() {
        return None;
    }
    let mut next = *state;
    next.last_pressures = *pressures;
    if pressures
        .iter()
        .any(|(_, p)| p.abs() >= cfg.p_hard_limit_kpa)
    {
        next.vent_latch = PerFinger::splat(false);
        let next = next.enter(Phase::Fault(FaultCode::OverPressure));
        return Some((next, PneumaticCommand::fail_safe()));
    }
    let release_below = cfg.hysteresis * cfg.p_soft_limit_kpa;
    next.vent_latch = PerFinger::from_fn(|f| {
        let p = pressures[f].abs();
        if p >= cfg.p_soft_limit_kpa {
            true
        } else if state.vent_latch[f] {
            p >= release_below
        } else {
            false
        }
    });
    let changed = next.vent_latch != state.vent_latch;
    let any_latched = next.vent_latch.iter().any(|(_, l)| l);
    if changed || any_latched {
        Some((next, command_for(&next, cfg)))
    } else {
        None
    }
}

/// Host-loss watchdog. `Idle` and `Fault` are already safe.
pub fn watchdog_check(
    state: &ControllerState,
    now_ms: f64,
    cfg: &SafetyConfig,
) -> Option<(ControllerState, PneumaticCommand)> {
    if matches!(state.phase, Phase::Idle | Phase::Fault(_)) {
        return None;
    }
    if now_ms - state.last_heartbeat_time > cfg.watchdog_ms {
        let mut next = *state;
        next.now_ms = next.now_ms.max(now_ms);
        next.vent_latch = PerFinger::splat(false);
        let next = next.enter(Phase::Fault(FaultCode::HostLost));
        return Some((next, PneumaticCommand::fail_safe()));
    }
    None
}
