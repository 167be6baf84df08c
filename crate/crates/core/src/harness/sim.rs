//! Closed-loop driver: host pipeline, wire link, controller and plant,
//! advanced together one plant step at a time.
//!
//! Per tick, in order: due host events (triggers, protocol deliveries,
//! heartbeats, injections), controller `Tick`, pressure report, pressure
//! interlock, watchdog, telemetry, then one plant step under the command
//! that results.

use std::collections::BTreeMap;

use log::{debug, info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::SimConfig;
use super::report::{
    FaultEvent, FaultLogEntry, LatencyBreakdown, LatencyStats, LinkStats, OutcomeSummary,
    ScenarioReport, TriggerRecord, REPORT_SCHEMA_VERSION,
};
use super::scenario::{HostFault, Injection, Scenario};
use super::HarnessError;
use crate::controller::{
    safety_override, step, watchdog_check, ControllerConfig, ControllerEvent, ControllerState,
    Phase, PneumaticCommand,
};
use crate::grasp::{Finger, GraspType};
use crate::perception::{Classifier, ClassifierMode, SceneObject, StageDist};
use crate::plant::{advance, grip_predicate, PlantState, DEFAULT_GRIP_THRESHOLD};
use crate::protocol::{
    decode_stream, reliable_send, ControllerEndpoint, InProcessChannel, LinkState, Message,
    SendOutcome, Telemetry, Transport,
};

/// The most recent classification, as the operator sees it.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LastClassification {
    pub object: String,
    pub true_grasp: GraspType,
    pub predicted: GraspType,
    pub confidence: f64,
    pub overridden: bool,
    /// End-to-end latency, once the command has reached the controller.
    pub latency_ms: Option<f64>,
}

#[derive(Debug, Clone)]
enum HostEvent {
    Trigger {
        at_ms: f64,
        object: SceneObject,
        hold_ms: Option<f64>,
        override_grasp: Option<GraspType>,
    },
    /// The host finishes its decision and puts SetGrasp on the wire.
    GraspReady { trigger: usize },
    /// A command frame reaches the controller.
    Deliver {
        trigger: Option<usize>,
        message: Message,
    },
    ReleaseIntent { trigger: usize },
    Inject(Injection),
    Heartbeat,
}

#[derive(Debug, Clone, Copy)]
struct PendingStages {
    frame_wait: f64,
    capture_transfer: f64,
    preprocess_infer: f64,
    inference: f64,
    decision_protocol: f64,
    ready_ms: f64,
    hold_ms: Option<f64>,
}

/// Controller -> host byte pipe. Nothing on this side is acknowledged.
#[derive(Default)]
struct Uplink {
    bytes: Vec<u8>,
}

impl Transport for Uplink {
    fn transmit(&mut self, frame: &[u8]) -> std::io::Result<()> {
        self.bytes.extend_from_slice(frame);
        Ok(())
    }

    fn receive(&mut self, _timeout_ms: f64) -> std::io::Result<Vec<u8>> {
        Ok(Vec::new())
    }
}

pub struct Simulation {
    name: String,
    seed: u64,
    cfg: SimConfig,
    ctrl_cfg: ControllerConfig,
    controller: ControllerState,
    command: PneumaticCommand,
    plant: PlantState,
    classifier: Classifier,
    rng: ChaCha8Rng,

    host_link: LinkState,
    endpoint: ControllerEndpoint,
    uplink: LinkState,
    uplink_diagnostics: u64,
    last_telemetry: Option<Telemetry>,
    host_fault_code: Option<u8>,
    telemetry_every: u64,

    queue: BTreeMap<(u64, u64), HostEvent>,
    queue_seq: u64,
    host_silent: bool,
    drop_budget: u32,

    triggers: Vec<TriggerRecord>,
    pending: Vec<Option<PendingStages>>,
    active_trigger: Option<usize>,
    last_classification: Option<LastClassification>,
    fault_log: Vec<FaultLogEntry>,
    link_faults: u64,
    max_abs_pressure: f64,
    burst_logged: bool,
    /// Ticks spent under each distinct command, for energy cross-checks.
    occupancy: Vec<(PneumaticCommand, u64)>,
}

impl Simulation {
    pub fn new(name: &str, seed: u64, cfg: SimConfig, mode: ClassifierMode) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let ctrl_cfg = cfg.controller_config()?;
        let classifier = Classifier::new(mode, inference_dist(&cfg)).map_err(|e| HarnessError::ScenarioInvalid(e.to_string()))?;
        let telemetry_every = (cfg.telemetry_interval_ms / cfg.plant.dt_ms).round().max(1.0) as u64;
        let controller = ControllerState::new(0.0);
        let command = crate::controller::command_for(&controller, &cfg.safety);
        let mut sim = Simulation {
            name: name.to_string(),
            seed,
            ctrl_cfg,
            controller,
            command,
            plant: PlantState::default(),
            classifier,
            rng: ChaCha8Rng::seed_from_u64(seed),
            host_link: LinkState::new(),
            endpoint: ControllerEndpoint::new(),
            uplink: LinkState::new(),
            uplink_diagnostics: 0,
            last_telemetry: None,
            host_fault_code: None,
            telemetry_every,
            queue: BTreeMap::new(),
            queue_seq: 0,
            host_silent: false,
            drop_budget: 0,
            triggers: Vec::new(),
            pending: Vec::new(),
            active_trigger: None,
            last_classification: None,
            fault_log: Vec::new(),
            link_faults: 0,
            max_abs_pressure: 0.0,
            burst_logged: false,
            occupancy: Vec::new(),
            cfg,
        };
        sim.schedule(0.0, HostEvent::Heartbeat);
        Ok(sim)
    }

    /// Builds a simulation with every object and fault of `s` queued.
    pub fn from_scenario(s: &Scenario) -> Result<Self, HarnessError> {
        s.validate()?;
        let mut sim = Simulation::new(&s.name, s.seed, s.config.clone(), s.classifier.resolve(s.seed))?;
        for obj in &s.objects {
            sim.schedule_trigger(obj.trigger_ms, obj.scene_object(), Some(obj.hold_ms), None);
        }
        for f in &s.faults {
            sim.schedule_injection(f.at_ms, f.injection);
        }
        Ok(sim)
    }

    // ---- accessors -------------------------------------------------------

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn now_ms(&self) -> f64 {
        self.plant.sim_time_ms
    }

    pub fn ticks(&self) -> u64 {
        self.plant.steps
    }

    pub fn controller(&self) -> &ControllerState {
        &self.controller
    }

    pub fn command(&self) -> &PneumaticCommand {
        &self.command
    }

    pub fn plant(&self) -> &PlantState {
        &self.plant
    }

    pub fn classifier_mode(&self) -> &ClassifierMode {
        self.classifier.mode()
    }

    pub fn triggers(&self) -> &[TriggerRecord] {
        &self.triggers
    }

    pub fn fault_log(&self) -> &[FaultLogEntry] {
        &self.fault_log
    }

    pub fn last_classification(&self) -> Option<&LastClassification> {
        self.last_classification.as_ref()
    }

    /// What the host last decoded from controller telemetry.
    pub fn host_telemetry(&self) -> Option<&Telemetry> {
        self.last_telemetry.as_ref()
    }

    /// Fault code the host last heard from the controller.
    pub fn host_fault_code(&self) -> Option<u8> {
        self.host_fault_code
    }

    pub fn host_silent(&self) -> bool {
        self.host_silent
    }

    pub fn occupancy(&self) -> &[(PneumaticCommand, u64)] {
        &self.occupancy
    }

    pub fn latency_stats(&self) -> LatencyStats {
        LatencyStats::from_breakdowns(self.triggers.iter().filter_map(|t| t.latency.as_ref()))
    }

    pub fn mean_power_w(&self) -> f64 {
        if self.plant.sim_time_ms > 0.0 {
            self.plant.energy_joules / (self.plant.sim_time_ms / 1000.0)
        } else {
            self.cfg.plant.power.draw_w(&self.command)
        }
    }

    // ---- scheduling ------------------------------------------------------

    fn tick_at(&self, t_ms: f64) -> u64 {
        let ticks = t_ms / self.cfg.plant.dt_ms;
        // absorb float noise so t = k*dt lands on tick k
        let k = (ticks - 1e-9).ceil().max(0.0) as u64;
        k.max(self.plant.steps)
    }

    fn schedule(&mut self, t_ms: f64, ev: HostEvent) {
        let key = (self.tick_at(t_ms), self.queue_seq);
        self.queue_seq += 1;
        self.queue.insert(key, ev);
    }

    /// Queues an intent edge at `at_ms`. With `hold_ms` the release edge
    /// follows automatically; without it the operator must send another.
    pub fn schedule_trigger(
        &mut self,
        at_ms: f64,
        object: SceneObject,
        hold_ms: Option<f64>,
        override_grasp: Option<GraspType>,
    ) {
        self.schedule(
            at_ms,
            HostEvent::Trigger {
                at_ms,
                object,
                hold_ms,
                override_grasp,
            },
        );
    }

    pub fn schedule_injection(&mut self, at_ms: f64, injection: Injection) {
        self.schedule(at_ms, HostEvent::Inject(injection));
    }

    /// Replaces the classifier; its generator restarts from the mode's seed.
    pub fn set_classifier(&mut self, mode: ClassifierMode) -> Result<(), HarnessError> {
        self.classifier = Classifier::new(mode, inference_dist(&self.cfg))
            .map_err(|e| HarnessError::ScenarioInvalid(e.to_string()))?;
        Ok(())
    }

    // ---- stepping --------------------------------------------------------

    pub fn run_until(&mut self, t_ms: f64) {
        while self.now_ms() + 0.5 * self.cfg.plant.dt_ms < t_ms {
            self.tick();
        }
    }

    pub fn tick(&mut self) {
        let n = self.plant.steps;
        let now = n as f64 * self.cfg.plant.dt_ms;

        while let Some(entry) = self.queue.first_entry() {
            if entry.key().0 > n {
                break;
            }
            let ev = entry.remove();
            self.handle(ev, now);
        }

        self.apply(ControllerEvent::Tick(now), now);
        self.apply(ControllerEvent::PressureReport(self.plant.pressure_kpa), now);
        if let Some((state, cmd)) = safety_override(&self.controller, &self.plant.pressure_kpa, &self.cfg.safety) {
            self.log_latch_changes(&state, now);
            self.set_state(state, cmd, now);
        }
        if let Some((state, cmd)) = watchdog_check(&self.controller, now, &self.cfg.safety) {
            self.set_state(state, cmd, now);
        }

        if n.is_multiple_of(self.telemetry_every) {
            let t = Telemetry::capture(self.controller.phase, &self.plant.pressure_kpa, &self.command);
            self.send_uplink(Message::Telemetry(t));
        }

        match self.occupancy.last_mut() {
            Some((cmd, count)) if *cmd == self.command => *count += 1,
            _ => match self.occupancy.iter_mut().find(|(c, _)| *c == self.command) {
                Some((_, count)) => *count += 1,
                None => self.occupancy.push((self.command, 1)),
            },
        }

        advance(&mut self.plant, &self.command, &self.cfg.plant);

        let peak = self.plant.max_abs_pressure();
        if peak > self.max_abs_pressure {
            self.max_abs_pressure = peak;
        }
        if let (Some(finger), false) = (self.plant.burst, self.burst_logged) {
            self.burst_logged = true;
            self.log(self.now_ms(), FaultEvent::Burst { finger });
        }
    }

    fn log(&mut self, time_ms: f64, event: FaultEvent) {
        debug!("{time_ms:.0} ms: {event:?}");
        self.fault_log.push(FaultLogEntry { time_ms, event });
    }

    fn log_latch_changes(&mut self, next: &ControllerState, now: f64) {
        for f in Finger::ALL {
            let (was, is) = (self.controller.vent_latch[f], next.vent_latch[f]);
            let pressure_kpa = self.plant.pressure_kpa[f];
            if is && !was {
                self.log(now, FaultEvent::SoftLimitEngaged { finger: f, pressure_kpa });
            } else if was && !is {
                self.log(now, FaultEvent::SoftLimitCleared { finger: f, pressure_kpa });
            }
        }
    }

    fn apply(&mut self, ev: ControllerEvent, now: f64) {
        let (state, cmd) = step(&self.controller, &ev, &self.ctrl_cfg);
        self.set_state(state, cmd, now);
    }

    fn set_state(&mut self, state: ControllerState, cmd: PneumaticCommand, now: f64) {
        let old = self.controller.phase;
        self.controller = state;
        self.command = cmd;
        if old != state.phase {
            self.on_phase_change(old, state.phase, now);
        }
    }

    fn on_phase_change(&mut self, old: Phase, new: Phase, now: f64) {
        debug!("{now:.0} ms: {} -> {}", old.name(), new.name());
        match new {
            Phase::Hold => {
                if let Some(i) = self.active_trigger {
                    let plan = self.ctrl_cfg.grasp_table.plan(self.triggers[i].true_grasp);
                    let gripped = grip_predicate(&self.plant, &plan, DEFAULT_GRIP_THRESHOLD, &self.cfg.plant);
                    self.triggers[i].hold_entry_ms = Some(now);
                    self.triggers[i].gripped = Some(gripped);
                    if let Some(hold) = self.pending[i].and_then(|p| p.hold_ms) {
                        self.schedule(now + hold, HostEvent::ReleaseIntent { trigger: i });
                    }
                }
            }
            Phase::Fault(code) => {
                warn!("{now:.0} ms: controller fault {code:?}");
                self.log(now, FaultEvent::ControllerFault { code });
                if let Some(i) = self.active_trigger.take() {
                    self.triggers[i].gripped.get_or_insert(false);
                }
                self.send_uplink(Message::Fault { code: code.to_wire() });
            }
            Phase::Idle => self.active_trigger = None,
            _ => {}
        }
    }

    fn send_uplink(&mut self, msg: Message) {
        let mut pipe = Uplink::default();
        reliable_send(&msg, &mut self.uplink, &self.cfg.link, &mut pipe).expect("uplink messages fit a frame");
        let out = decode_stream(&pipe.bytes);
        self.uplink_diagnostics += out.diagnostics.len() as u64;
        for m in out.messages() {
            match m {
                Message::Telemetry(t) => self.last_telemetry = Some(*t),
                Message::Fault { code } => self.host_fault_code = Some(*code),
                _ => {}
            }
        }
    }

    /// Host -> controller send over the in-process wire. Returns the
    /// outcome and the messages the controller accepted.
    fn send_downlink(&mut self, msg: Message) -> (SendOutcome, Vec<Message>) {
        let budget = &mut self.drop_budget;
        let mut channel = InProcessChannel::with_loss(&mut self.endpoint, |_| {
            if *budget > 0 {
                *budget -= 1;
                true
            } else {
                false
            }
        });
        let outcome = reliable_send(&msg, &mut self.host_link, &self.cfg.link, &mut channel)
            .expect("host messages fit a frame");
        (outcome, std::mem::take(&mut channel.delivered))
    }

    fn handle(&mut self, ev: HostEvent, now: f64) {
        match ev {
            HostEvent::Heartbeat => {
                if !self.host_silent {
                    let (_, delivered) = self.send_downlink(Message::Heartbeat);
                    for m in delivered {
                        self.deliver(None, m, now);
                    }
                }
                let next = now + self.cfg.link.heartbeat_interval_ms;
                self.schedule(next, HostEvent::Heartbeat);
            }
            HostEvent::Trigger {
                at_ms,
                object,
                hold_ms,
                override_grasp,
            } => self.on_trigger(at_ms, object, hold_ms, override_grasp, now),
            HostEvent::GraspReady { trigger } => {
                let grasp = self.triggers[trigger].predicted.expect("classified before send");
                let msg = Message::SetGrasp { grasp };
                let (outcome, delivered) = self.send_downlink(msg);
                match outcome {
                    SendOutcome::Delivered { attempts, .. } => {
                        self.triggers[trigger].delivered = true;
                        self.triggers[trigger].delivery_attempts = Some(attempts);
                        // each lost attempt costs one ack timeout
                        let lag = f64::from(attempts - 1) * self.cfg.link.ack_timeout_ms;
                        for m in delivered {
                            self.schedule(now + lag, HostEvent::Deliver { trigger: Some(trigger), message: m });
                        }
                    }
                    SendOutcome::LinkFault { seq, attempts } => {
                        warn!("{now:.0} ms: SetGrasp seq {seq} undeliverable after {attempts} attempts");
                        self.triggers[trigger].delivery_attempts = Some(attempts);
                        self.link_faults += 1;
                        self.log(now, FaultEvent::LinkFault { seq, attempts });
                    }
                }
            }
            HostEvent::Deliver { trigger, message } => self.deliver(trigger, message, now),
            HostEvent::ReleaseIntent { trigger } => {
                self.triggers[trigger].hold_end_pressure_kpa = Some(self.plant.pressure_kpa);
                if self.controller.phase == Phase::Hold && self.active_trigger == Some(trigger) {
                    self.apply(ControllerEvent::IntentEdge, now);
                }
            }
            HostEvent::Inject(injection) => self.inject_now(injection, now),
        }
    }

    fn deliver(&mut self, trigger: Option<usize>, message: Message, now: f64) {
        let ev = match message {
            Message::SetGrasp { grasp } => ControllerEvent::GraspCommand(grasp),
            Message::Release => ControllerEvent::ReleaseCommand,
            Message::Abort => ControllerEvent::AbortCommand,
            Message::Heartbeat => ControllerEvent::Heartbeat,
            _ => return,
        };
        let before = self.controller.phase;
        self.apply(ev, now);
        let Some(i) = trigger else { return };
        if before == Phase::AwaitGrasp && self.controller.phase == Phase::Extend {
            self.active_trigger = Some(i);
        }
        if let Some(p) = self.pending[i] {
            let dispatch = now - p.ready_ms;
            let total = LatencyBreakdown::stage_sum(
                p.frame_wait,
                p.capture_transfer,
                p.preprocess_infer,
                p.decision_protocol,
                dispatch,
            );
            self.triggers[i].latency = Some(LatencyBreakdown {
                frame_wait_ms: p.frame_wait,
                capture_transfer_ms: p.capture_transfer,
                preprocess_infer_ms: p.preprocess_infer,
                inference_ms: p.inference,
                decision_protocol_ms: p.decision_protocol,
                controller_dispatch_ms: dispatch,
                total_ms: total,
            });
            if let Some(c) = self.last_classification.as_mut() {
                if self.triggers.len() == i + 1 {
                    c.latency_ms = Some(total);
                }
            }
        }
    }

    fn on_trigger(
        &mut self,
        at_ms: f64,
        object: SceneObject,
        hold_ms: Option<f64>,
        override_grasp: Option<GraspType>,
        now: f64,
    ) {
        let phase = self.controller.phase;
        // the switch is wired straight to the controller
        self.apply(ControllerEvent::IntentEdge, now);
        let index = self.triggers.len();
        let mut record = TriggerRecord {
            index,
            object: object.name.clone(),
            trigger_ms: at_ms,
            true_grasp: object.true_grasp,
            scale_ambiguous: object.scale_ambiguous,
            accepted: phase == Phase::Idle,
            predicted: None,
            confidence: None,
            overridden: false,
            delivered: false,
            delivery_attempts: None,
            latency: None,
            hold_entry_ms: None,
            gripped: None,
            hold_end_pressure_kpa: None,
        };
        if phase != Phase::Idle {
            info!("{now:.0} ms: intent edge for {} in {}; no grasp started", object.name, phase.name());
            self.triggers.push(record);
            self.pending.push(None);
            return;
        }

        let lat = self.cfg.latency;
        let (frame_wait, capture_transfer, pre, decision_protocol);
        if lat.stochastic {
            frame_wait = self.rng.random_range(0.0..lat.frame_period_ms);
            capture_transfer = lat.capture_transfer.sample(&mut self.rng);
            pre = lat.preprocess_only().sample(&mut self.rng);
            decision_protocol = lat.decision_protocol.sample(&mut self.rng);
        } else {
            frame_wait = crate::perception::frame_wait(at_ms, &lat);
            capture_transfer = lat.capture_transfer.mean_ms;
            pre = lat.preprocess_only().mean_ms;
            decision_protocol = lat.decision_protocol.mean_ms;
        }
        let out = self.classifier.classify(&object);
        let inference = out.inference_latency_ms;
        let preprocess_infer = pre + inference;
        let (predicted, confidence, overridden) = match override_grasp {
            Some(g) => (g, 1.0, true),
            None => (out.predicted, out.confidence, false),
        };
        record.predicted = Some(predicted);
        record.confidence = Some(confidence);
        record.overridden = overridden;
        let ready_ms = at_ms + frame_wait + capture_transfer + preprocess_infer + decision_protocol;
        self.triggers.push(record);
        self.pending.push(Some(PendingStages {
            frame_wait,
            capture_transfer,
            preprocess_infer,
            inference,
            decision_protocol,
            ready_ms,
            hold_ms,
        }));
        self.last_classification = Some(LastClassification {
            object: object.name,
            true_grasp: object.true_grasp,
            predicted,
            confidence,
            overridden,
            latency_ms: None,
        });
        self.schedule(ready_ms, HostEvent::GraspReady { trigger: index });
    }

    // ---- live control ----------------------------------------------------

    /// An intent edge now. In Idle it starts a grasp on `object`; in Hold it
    /// releases; elsewhere the controller decides what it means.
    pub fn trigger_now(&mut self, object: SceneObject, override_grasp: Option<GraspType>) {
        let now = self.now_ms();
        if self.controller.phase == Phase::Idle {
            self.schedule_trigger(now, object, None, override_grasp);
        } else {
            self.apply(ControllerEvent::IntentEdge, now);
        }
    }

    /// Replaces the grasp of the trigger still waiting on the host, if any.
    /// Returns whether a pending command was changed.
    pub fn override_pending(&mut self, grasp: GraspType) -> bool {
        let Some(i) = self.triggers.len().checked_sub(1) else { return false };
        // still inside the host pipeline: classified but not yet sent
        if self.pending[i].is_none() || self.triggers[i].delivery_attempts.is_some() {
            return false;
        }
        let t = &mut self.triggers[i];
        t.predicted = Some(grasp);
        t.confidence = Some(1.0);
        t.overridden = true;
        if let Some(c) = self.last_classification.as_mut() {
            c.predicted = grasp;
            c.confidence = 1.0;
            c.overridden = true;
        }
        true
    }

    /// Sends a command frame from the host right now.
    pub fn send_command(&mut self, message: Message) -> SendOutcome {
        let now = self.now_ms();
        let (outcome, delivered) = self.send_downlink(message);
        match outcome {
            SendOutcome::Delivered { attempts, .. } => {
                let lag = f64::from(attempts - 1) * self.cfg.link.ack_timeout_ms;
                for m in delivered {
                    self.schedule(now + lag, HostEvent::Deliver { trigger: None, message: m });
                }
            }
            SendOutcome::LinkFault { seq, attempts } => {
                self.link_faults += 1;
                self.log(now, FaultEvent::LinkFault { seq, attempts });
            }
        }
        outcome
    }

    pub fn inject_now(&mut self, injection: Injection, now: f64) {
        info!("{now:.0} ms: inject {injection:?}");
        self.log(now, FaultEvent::Injected { injection });
        match injection {
            Injection::Plant(f) => self.plant.inject(f),
            Injection::Host(HostFault::HostSilence) => self.host_silent = true,
            Injection::Host(HostFault::HostResume) => self.host_silent = false,
            Injection::Host(HostFault::DropFrames { count }) => self.drop_budget += count,
            Injection::Host(HostFault::ClearFaults) => {
                self.plant.clear_faults();
                self.host_silent = false;
                self.drop_budget = 0;
            }
        }
    }

    /// Faults currently acting on the loop: plant faults, host
    /// disturbances, and a latched controller fault.
    pub fn active_faults(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .plant
            .active_faults
            .iter()
            .map(|f| serde_json::to_string(f).expect("fault serializes"))
            .collect();
        if self.host_silent {
            out.push("host_silence".into());
        }
        if self.drop_budget > 0 {
            out.push(format!("drop_frames({})", self.drop_budget));
        }
        if let Phase::Fault(code) = self.controller.phase {
            out.push(format!("controller_fault({})", code.name()));
        }
        if let Some(f) = self.plant.burst {
            out.push(format!("burst({f})"));
        }
        out
    }

    // ---- results ---------------------------------------------------------

    pub fn report(&self) -> ScenarioReport {
        let delivered = self.triggers.iter().filter(|t| t.delivered).count();
        let gripped = self.triggers.iter().filter(|t| t.gripped == Some(true)).count();
        let n = self.triggers.len();
        ScenarioReport {
            schema_version: REPORT_SCHEMA_VERSION,
            scenario: self.name.clone(),
            seed: self.seed,
            duration_ms: self.plant.sim_time_ms,
            energy_joules: self.plant.energy_joules,
            mean_power_w: self.mean_power_w(),
            max_abs_pressure_kpa: self.max_abs_pressure,
            final_phase: self.controller.phase,
            latency: self.latency_stats(),
            outcomes: OutcomeSummary {
                triggers: n,
                delivered,
                correct_predictions: self.triggers.iter().filter(|t| t.correct()).count(),
                gripped,
                success_rate_pct: if n > 0 { 100.0 * gripped as f64 / n as f64 } else { 0.0 },
            },
            link: LinkStats {
                host_frames_sent: self.host_link.frames_sent,
                controller_frames_sent: self.uplink.frames_sent,
                diagnostics: self.endpoint.diagnostics + self.uplink_diagnostics,
                link_faults: self.link_faults,
            },
            fault_log: self.fault_log.clone(),
            triggers: self.triggers.clone(),
            endurance: None,
        }
    }
}

fn inference_dist(cfg: &SimConfig) -> StageDist {
    if cfg.latency.stochastic {
        cfg.latency.inference
    } else {
        StageDist::new(cfg.latency.inference.mean_ms, 0.0)
    }
}

/// Validates `s`, runs it for its full duration, and reports.
pub fn run_scenario(s: &Scenario) -> Result<ScenarioReport, HarnessError> {
    let mut sim = Simulation::from_scenario(s)?;
    sim.run_until(s.duration_ms);
    Ok(sim.report())
}
