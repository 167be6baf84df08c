//! End-to-end scenario runs.

mod common;

use common::{data_dir, occupancy_energy};
use reglove_core::controller::{FaultCode, Phase, ValveRoute};
use reglove_core::grasp::{Finger, GraspType};
use reglove_core::harness::{
    endurance_soak, run_scenario, run_soak, ClassifierSpec, FaultEvent, HarnessError, HostFault,
    Injection, Scenario, ScenarioReport, ScheduledFault, ScheduledObject, Simulation, SoakConfig,
};
use reglove_core::plant::Fault;

fn load(name: &str) -> Scenario {
    Scenario::load(&data_dir().join("scenarios").join(name), None).unwrap()
}

fn object(name: &str, grasp: GraspType, trigger_ms: f64) -> ScheduledObject {
    ScheduledObject { name: name.into(), grasp, trigger_ms, scale_ambiguous: false, hold_ms: 1000.0 }
}

fn assert_energy_identities(report: &ScenarioReport, sim: &Simulation) {
    let e = sim.plant().energy_joules;
    assert_eq!(report.energy_joules, e);
    let from_power = report.mean_power_w * report.duration_ms / 1000.0;
    assert!((from_power - e).abs() / e < 1e-6, "{from_power} vs {e}");
    let tally = occupancy_energy(sim.occupancy());
    assert!((tally - e).abs() / e < 1e-6, "occupancy {tally} vs {e}");
}

#[test]
fn stub_classifier_grips_every_grasp_type() {
    let s = load("nominal.toml");
    s.validate().unwrap();
    let mut sim = Simulation::from_scenario(&s).unwrap();
    sim.run_until(s.duration_ms);
    let r = sim.report();
    assert_eq!(r.outcomes.triggers, 5);
    assert_eq!(r.outcomes.gripped, 5);
    assert_eq!(r.outcomes.success_rate_pct, 100.0);
    let mut seen: Vec<_> = r.triggers.iter().map(|t| t.true_grasp).collect();
    seen.sort();
    assert_eq!(seen, GraspType::ALL.to_vec());
    assert!(r.triggers.iter().all(|t| t.correct() && t.delivered));
    assert_eq!(r.final_phase, Phase::Idle);
    assert!(r.fault_log.is_empty());
    assert!(r.max_abs_pressure_kpa < 45.0);
    assert_energy_identities(&r, &sim);
}

#[test]
fn same_seed_same_bytes() {
    for name in ["nominal.toml", "confusion_demo.toml", "stuck_valve.toml", "host_silence.toml"] {
        let s = load(name);
        let a = run_scenario(&s).unwrap().to_json();
        let b = run_scenario(&s).unwrap().to_json();
        assert_eq!(a, b, "{name}");
        let back = ScenarioReport::from_json(&a).unwrap();
        assert_eq!(back.to_json(), a);
    }
    let mut s = load("confusion_demo.toml");
    let a = run_scenario(&s).unwrap();
    s.seed += 1;
    let b = run_scenario(&s).unwrap();
    assert_ne!(a.triggers, b.triggers);
}

#[test]
fn stuck_valve_is_held_by_the_interlock() {
    let r = run_scenario(&load("stuck_valve.toml")).unwrap();
    assert!(r.max_abs_pressure_kpa < 50.0, "{}", r.max_abs_pressure_kpa);
    assert!(r.fault_log.iter().any(|e| matches!(
        e.event,
        FaultEvent::SoftLimitEngaged { finger: Finger::Index, .. }
    )));
    assert!(!r.fault_log.iter().any(|e| matches!(e.event, FaultEvent::Burst { .. })));
    assert_eq!(r.final_phase, Phase::Idle);
}

#[test]
fn host_silence_trips_the_watchdog() {
    let s = load("host_silence.toml");
    let mut sim = Simulation::from_scenario(&s).unwrap();
    sim.run_until(s.duration_ms);
    let r = sim.report();
    let fault = r
        .fault_log
        .iter()
        .find(|e| matches!(e.event, FaultEvent::ControllerFault { code: FaultCode::HostLost }))
        .expect("watchdog fault");
    let watchdog = s.config.safety.watchdog_ms;
    assert!(fault.time_ms > 2000.0 && fault.time_ms <= 2000.0 + watchdog + 1.0, "{}", fault.time_ms);
    // the latch holds until the operator clears it
    assert!(matches!(r.final_phase, Phase::Fault(FaultCode::HostLost)));
    assert!(sim.command().is_fail_safe());
    // closed finger valves trap the chambers; only leakage relaxes them
    assert!(sim.plant().pressure_kpa.to_array().iter().all(|p| p.abs() < 40.0));
}

#[test]
fn dropped_frames_are_retransmitted() {
    let mut s = Scenario::new("drops", 3, 3000.0);
    s.objects.push(object("mug", GraspType::Power, 130.0));
    // after the 100 ms heartbeat, before the command leaves the host
    s.faults.push(ScheduledFault { at_ms: 131.0, injection: Injection::Host(HostFault::DropFrames { count: 2 }) });
    let r = run_scenario(&s).unwrap();
    let t = &r.triggers[0];
    assert_eq!(t.delivery_attempts, Some(3));
    assert_eq!(t.gripped, Some(true));
    // two ack timeouts on top of the pipeline
    assert!(t.latency.unwrap().controller_dispatch_ms >= 100.0);

    s.faults[0].injection = Injection::Host(HostFault::DropFrames { count: 10 });
    let r = run_scenario(&s).unwrap();
    assert!(!r.triggers[0].delivered);
    assert_eq!(r.link.link_faults, 1);
    assert!(r.fault_log.iter().any(|e| matches!(e.event, FaultEvent::LinkFault { attempts: 4, .. })));
}

#[test]
fn latency_breakdowns_sum_exactly() {
    let mut s = Scenario::new("latency", 5, 0.0);
    s.classifier = ClassifierSpec::confusion();
    let mut t = 100.0;
    for i in 0..200 {
        s.objects.push(ScheduledObject { hold_ms: 200.0, ..object("o", GraspType::ALL[i % 5], t) });
        t += 1600.0 + (i % 7) as f64 * 3.3;
    }
    s.duration_ms = t;
    let r = run_scenario(&s).unwrap();
    assert_eq!(r.latency.count, 200);
    for trig in &r.triggers {
        let b = trig.latency.unwrap();
        assert!(b.is_consistent());
        assert!(b.inference_ms < b.preprocess_infer_ms);
        let hold = trig.hold_entry_ms.unwrap();
        assert!(hold > trig.trigger_ms + b.total_ms);
    }
}

#[test]
fn scenario_validation() {
    let base = load("nominal.toml");
    let expect_invalid = |s: &Scenario| {
        assert!(matches!(s.validate(), Err(HarnessError::ScenarioInvalid(_))), "{s:?}");
        assert!(run_scenario(s).is_err());
    };
    let mut s = base.clone();
    s.schema_version = 2;
    expect_invalid(&s);
    let mut s = base.clone();
    s.objects[1].trigger_ms = s.objects[0].trigger_ms + 500.0;
    expect_invalid(&s);
    let mut s = base.clone();
    s.duration_ms = 11_000.0;
    expect_invalid(&s);
    let mut s = base.clone();
    s.faults.push(ScheduledFault {
        at_ms: 100.0,
        injection: Injection::Plant(Fault::Leak { finger: Finger::Thumb, rate_per_s: -1.0 }),
    });
    expect_invalid(&s);
    let mut s = base.clone();
    s.config.safety.p_soft_limit_kpa = 60.0;
    assert!(s.validate().is_err());

    let text = std::fs::read_to_string(data_dir().join("scenarios/nominal.toml")).unwrap();
    assert!(Scenario::from_toml_str(&format!("{text}\nbogus = 1\n"), None, None).is_err());
}

#[test]
fn toml_round_trip_and_layering() {
    let s = load("stuck_valve.toml");
    assert_eq!(s.config.plant.p_vacuum_kpa, -60.0);
    assert!(s.config.safety.hold_regulation);
    assert!(matches!(
        s.faults[0].injection,
        Injection::Plant(Fault::StuckValve { finger: Finger::Index, position: ValveRoute::ToVacuumLine })
    ));
    let text = s.to_toml_string().unwrap();
    assert_eq!(Scenario::from_toml_str(&text, None, None).unwrap(), s);

    // a base config sits under the file's own sections
    let base: toml::Table = "[safety]\nwatchdog_ms = 300.0\nhold_regulation = false\n".parse().unwrap();
    let layered = Scenario::load(&data_dir().join("scenarios/stuck_valve.toml"), Some(&base)).unwrap();
    assert_eq!(layered.config.safety.watchdog_ms, 300.0);
    assert!(layered.config.safety.hold_regulation);

    let demo = load("confusion_demo.toml");
    match demo.classifier {
        ClassifierSpec::Confusion { matrix: Some(m), .. } => assert!((m.mean_diagonal() - 0.967).abs() < 1e-12),
        other => panic!("{other:?}"),
    }
}

#[test]
fn csv_summary_has_a_row_per_trigger() {
    let r = run_scenario(&load("nominal.toml")).unwrap();
    let csv = r.to_csv().unwrap();
    assert_eq!(csv.lines().count(), 1 + r.triggers.len());
}

#[test]
fn idle_soak_is_baseline_power() {
    let cfg = SoakConfig { minutes: 0.001, ..SoakConfig::default() };
    let v = endurance_soak(&cfg);
    assert!(v.pass, "{:?}", v.failures);
    assert_eq!(v.cycles, 0);
    assert!(!v.power_checked);
    assert!((v.mean_power_w - 2.7).abs() < 1e-9);
}

#[test]
fn short_soak_holds_the_envelope() {
    let cfg = SoakConfig { minutes: 3.0, ..SoakConfig::default() };
    let (report, sim) = run_soak(&cfg).unwrap();
    let v = report.endurance.clone().unwrap();
    assert!(v.pass, "{:?}", v.failures);
    assert_eq!(v.cycles, 9);
    assert!(v.drift_kpa < 0.5);
    assert!((v.mean_power_w - 10.3).abs() <= 1.2, "{}", v.mean_power_w);
    assert_energy_identities(&report, &sim);
}

#[test]
fn leaking_finger_fails_the_soak() {
    let mut cfg = SoakConfig { minutes: 4.0, ..SoakConfig::default() };
    cfg.faults.push(ScheduledFault {
        at_ms: 60_000.0,
        injection: Injection::Plant(Fault::Leak { finger: Finger::Index, rate_per_s: 0.5 }),
    });
    let v = endurance_soak(&cfg);
    assert!(!v.pass);
    assert!(v.drift_kpa >= 0.5);
    assert!(v.failures.iter().any(|f| f.contains("drift")));
    let (report, _) = run_soak(&cfg).unwrap();
    assert!(report.fault_log.iter().any(|e| matches!(e.event, FaultEvent::Injected { .. })));
}

#[test]
fn bad_soak_config_is_a_failed_verdict() {
    let v = endurance_soak(&SoakConfig { minutes: 0.0, ..SoakConfig::default() });
    assert!(!v.pass);
    let v = endurance_soak(&SoakConfig { hold_ms: 19_500.0, ..SoakConfig::default() });
    assert!(!v.pass);
}
