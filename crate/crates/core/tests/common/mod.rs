//! Helpers and independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use reglove_core::grasp::GraspType;
use reglove_core::protocol::{Message, Telemetry};

/// Bit-at-a-time CRC-16/CCITT-FALSE, written from the parameter set
/// (poly 0x1021, init 0xFFFF, no reflection, no xorout).
pub fn crc16_oracle(data: &[u8]) -> u16 {
    let mut crc: u16 = 0xFFFF;
    for &byte in data {
        for bit in (0..8).rev() {
            let input = (byte >> bit) & 1 == 1;
            let top = crc & 0x8000 != 0;
            crc <<= 1;
            if input != top {
                crc ^= 0x1021;
            }
        }
    }
    crc
}

/// P(t) for dP/dt = k (target - P) - leak P, P(0) = p0.
pub fn closed_form(p0: f64, target: f64, k: f64, leak: f64, t_s: f64) -> f64 {
    let rate = k + leak;
    let p_inf = k * target / rate;
    p_inf + (p0 - p_inf) * (-rate * t_s).exp()
}

pub fn random_grasp<R: Rng>(rng: &mut R) -> GraspType {
    GraspType::ALL[rng.random_range(0..GraspType::ALL.len())]
}

pub fn random_message<R: Rng>(rng: &mut R) -> Message {
    match rng.random_range(0..9) {
        0 => Message::Hello { version: rng.random() },
        1 => Message::Ack { acked_seq: rng.random() },
        2 => Message::Nack { acked_seq: rng.random(), reason: rng.random() },
        3 => Message::SetGrasp { grasp: random_grasp(rng) },
        4 => Message::Release,
        5 => Message::Abort,
        6 => Message::Heartbeat,
        7 => Message::Telemetry(Telemetry {
            phase: rng.random(),
            pressures_dkpa: rng.random(),
            valve_bitmap: rng.random(),
            pump_bitmap: rng.random(),
        }),
        _ => Message::Fault { code: rng.random() },
    }
}

/// One representative of every message type.
pub fn one_of_each() -> Vec<Message> {
    vec![
        Message::Hello { version: 1 },
        Message::Ack { acked_seq: 17 },
        Message::Nack { acked_seq: 17, reason: 2 },
        Message::SetGrasp { grasp: GraspType::ThreeJawChuck },
        Message::Release,
        Message::Abort,
        Message::Heartbeat,
        Message::Telemetry(Telemetry {
            phase: 4,
            pressures_dkpa: [-380, -375, 120, 0, 399],
            valve_bitmap: 0b01_0011,
            pump_bitmap: 0b10,
        }),
        Message::Fault { code: 1 },
    ]
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Electrical draw of a command under the default power table, tallied
/// component by component.
pub fn watts(c: &reglove_core::controller::PneumaticCommand) -> f64 {
    use reglove_core::controller::{ExhaustValve, ValveRoute};
    use reglove_core::grasp::Finger;
    let pumps = [c.inflation_pump, c.vacuum_pump].iter().filter(|x| **x).count() as f64;
    let coils = Finger::ALL
        .iter()
        .filter(|f| c.finger_valve[**f] != ValveRoute::Closed)
        .count() as f64
        + if c.exhaust_valve == ExhaustValve::Closed { 1.0 } else { 0.0 };
    2.7 + 4.8 * pumps + 0.9 * coils
}

/// Energy from a per-command occupancy histogram at a 1 ms step.
pub fn occupancy_energy(occ: &[(reglove_core::controller::PneumaticCommand, u64)]) -> f64 {
    occ.iter().map(|(c, n)| watts(c) * *n as f64 / 1000.0).sum()
}

pub fn data_dir() -> std::path::PathBuf {
    std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// Outcome of one randomized closed-loop run of controller and plant.
#[derive(Debug, Default)]
pub struct SafetyRun {
    pub events: u64,
    pub max_abs_kpa: f64,
    /// Ticks checked while the host was silent past the deadline.
    pub silent_ticks_checked: u64,
    pub violations: Vec<String>,
}

/// Drives the pure controller against the plant for `duration_ms` with a
/// random host: intents, grasps, releases, aborts, heartbeat gaps, plant
/// faults and (when `over_spec`) sources stronger than the defaults.
pub fn closed_loop_safety(seed: u64, duration_ms: u64, over_spec: bool) -> SafetyRun {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use reglove_core::controller::{
        safety_override, step, watchdog_check, ControllerConfig, ControllerEvent, ControllerState,
        PneumaticCommand, SafetyConfig, ValveRoute,
    };
    use reglove_core::grasp::Finger;
    use reglove_core::plant::{advance, Fault, PlantConfig, PlantState, Pump};

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plant_cfg = PlantConfig::default();
    if over_spec {
        plant_cfg.p_source_kpa = rng.random_range(40.0..54.0);
        plant_cfg.p_vacuum_kpa = -rng.random_range(40.0..54.0);
    }
    let safety = SafetyConfig {
        hold_regulation: rng.random_bool(0.5),
        ..SafetyConfig::default()
    };
    let deadline = safety.watchdog_ms + safety.release_vent_ms;
    let cfg = ControllerConfig::from(safety);
    let mut ctrl = ControllerState::new(0.0);
    let mut cmd = PneumaticCommand::fail_safe();
    let mut plant = PlantState::default();
    let mut run = SafetyRun::default();
    let mut silent_since: Option<f64> = None;
    let mut silent_until = 0.0;

    let feed = |ctrl: &mut ControllerState, cmd: &mut PneumaticCommand, e: ControllerEvent, run: &mut SafetyRun| {
        let (s, c) = step(ctrl, &e, &cfg);
        *ctrl = s;
        *cmd = c;
        run.events += 1;
    };

    for ms in 0..duration_ms {
        let now = ms as f64;
        // host side
        if silent_since.is_some() && now >= silent_until {
            silent_since = None;
        }
        if silent_since.is_none() {
            if rng.random_bool(0.0005) {
                silent_since = Some(now);
                silent_until = now + rng.random_range(100.0..1500.0);
            } else {
                if ms % 100 == 0 || rng.random_bool(0.002) {
                    feed(&mut ctrl, &mut cmd, ControllerEvent::Heartbeat, &mut run);
                }
                let r: f64 = rng.random();
                let e = if r < 0.004 {
                    Some(ControllerEvent::IntentEdge)
                } else if r < 0.008 {
                    Some(ControllerEvent::GraspCommand(random_grasp(&mut rng)))
                } else if r < 0.009 {
                    Some(ControllerEvent::ReleaseCommand)
                } else if r < 0.00905 {
                    Some(ControllerEvent::AbortCommand)
                } else {
                    None
                };
                if let Some(e) = e {
                    feed(&mut ctrl, &mut cmd, e, &mut run);
                }
            }
        }
        // latched faults are cleared by a controller reset now and then
        if ctrl.phase.is_fault() && rng.random_bool(0.001) {
            ctrl = ControllerState::new(now.max(ctrl.now_ms));
        }
        // plant faults
        if rng.random_bool(0.0003) {
            let finger = Finger::ALL[rng.random_range(0..5)];
            let fault = match rng.random_range(0..3) {
                0 => Fault::StuckValve {
                    finger,
                    position: [ValveRoute::ToPressureLine, ValveRoute::ToVacuumLine, ValveRoute::Closed]
                        [rng.random_range(0..3)],
                },
                1 => Fault::Leak { finger, rate_per_s: rng.random_range(0.0..2.0) },
                _ => Fault::PumpDegraded {
                    pump: if rng.random_bool(0.5) { Pump::Inflation } else { Pump::Vacuum },
                    flow_fraction: rng.random_range(0.1..=1.0),
                },
            };
            plant.inject(fault);
        }
        if rng.random_bool(0.0002) {
            plant.clear_faults();
        }

        // controller side, in driver order
        feed(&mut ctrl, &mut cmd, ControllerEvent::Tick(now), &mut run);
        feed(&mut ctrl, &mut cmd, ControllerEvent::PressureReport(plant.pressure_kpa), &mut run);
        if let Some((s, c)) = safety_override(&ctrl, &plant.pressure_kpa, &cfg.safety) {
            ctrl = s;
            cmd = c;
        }
        if let Some((s, c)) = watchdog_check(&ctrl, now, &cfg.safety) {
            ctrl = s;
            cmd = c;
        }
        if let Some(since) = silent_since {
            if now - since > deadline {
                run.silent_ticks_checked += 1;
                if !cmd.is_fail_safe() {
                    run.violations.push(format!(
                        "seed {seed}: t={now} silent since {since}, phase {:?} not fail-safe",
                        ctrl.phase
                    ));
                }
            }
        }
        advance(&mut plant, &cmd, &plant_cfg);
        for (f, p) in plant.pressure_kpa.iter() {
            run.max_abs_kpa = run.max_abs_kpa.max(p.abs());
            if p.abs() >= cfg.safety.p_hard_limit_kpa {
                run.violations.push(format!("seed {seed}: t={now} {f} at {p:.2} kPa"));
            }
        }
        if plant.burst.is_some() {
            run.violations.push(format!("seed {seed}: burst"));
            break;
        }
    }
    run
}
