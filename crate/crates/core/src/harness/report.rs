use serde::{Deserialize, Serialize};

use super::scenario::Injection;
use super::soak::SoakVerdict;
use super::HarnessError;
use crate::controller::{FaultCode, Phase};
use crate::grasp::{Finger, GraspType, PerFinger};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Sensing-to-actuation stages of one trigger, in pipeline order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub frame_wait_ms: f64,
    pub capture_transfer_ms: f64,
    pub preprocess_infer_ms: f64,
    /// The inference share of `preprocess_infer_ms`, not an extra stage.
    pub inference_ms: f64,
    pub decision_protocol_ms: f64,
    pub controller_dispatch_ms: f64,
    pub total_ms: f64,
}

impl LatencyBreakdown {
    /// Sums the stages left to right; `total_ms` is always this value.
    pub fn stage_sum(
        frame_wait_ms: f64,
        capture_transfer_ms: f64,
        preprocess_infer_ms: f64,
        decision_protocol_ms: f64,
        controller_dispatch_ms: f64,
    ) -> f64 {
        frame_wait_ms + capture_transfer_ms + preprocess_infer_ms + decision_protocol_ms + controller_dispatch_ms
    }

    pub fn is_consistent(&self) -> bool {
        self.total_ms
            == Self::stage_sum(
                self.frame_wait_ms,
                self.capture_transfer_ms,
                self.preprocess_infer_ms,
                self.decision_protocol_ms,
                self.controller_dispatch_ms,
            )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerRecord {
    pub index: usize,
    pub object: String,
    pub trigger_ms: f64,
    pub true_grasp: GraspType,
    pub scale_ambiguous: bool,
    /// False when the controller was not Idle at the intent edge.
    pub accepted: bool,
    pub predicted: Option<GraspType>,
    pub confidence: Option<f64>,
    /// The operator replaced the classifier's answer.
    pub overridden: bool,
    pub delivered: bool,
    pub delivery_attempts: Option<u32>,
    pub latency: Option<LatencyBreakdown>,
    pub hold_entry_ms: Option<f64>,
    /// Plant posture matched the true grasp's plan on entering Hold.
    pub gripped: Option<bool>,
    /// Pressures at the release edge, for drift tracking.
    pub hold_end_pressure_kpa: Option<PerFinger<f64>>,
}

impl TriggerRecord {
    pub fn correct(&self) -> bool {
        self.predicted == Some(self.true_grasp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: usize,
    pub mean_ms: f64,
    /// Population standard deviation.
    pub std_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub inference_mean_ms: f64,
}

impl LatencyStats {
    pub fn from_breakdowns<'a>(items: impl IntoIterator<Item = &'a LatencyBreakdown>) -> Self {
        let items: Vec<&LatencyBreakdown> = items.into_iter().collect();
        if items.is_empty() {
            return LatencyStats::default();
        }
        let n = items.len() as f64;
        let mean = items.iter().map(|b| b.total_ms).sum::<f64>() / n;
        let var = items.iter().map(|b| (b.total_ms - mean).powi(2)).sum::<f64>() / n;
        LatencyStats {
            count: items.len(),
            mean_ms: mean,
            std_ms: var.sqrt(),
            min_ms: items.iter().map(|b| b.total_ms).fold(f64::INFINITY, f64::min),
            max_ms: items.iter().map(|b| b.total_ms).fold(f64::NEG_INFINITY, f64::max),
            inference_mean_ms: items.iter().map(|b| b.inference_ms).sum::<f64>() / n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum FaultEvent {
    Injected { injection: Injection },
    SoftLimitEngaged { finger: Finger, pressure_kpa: f64 },
    SoftLimitCleared { finger: Finger, pressure_kpa: f64 },
    ControllerFault { code: FaultCode },
    LinkFault { seq: u8, attempts: u32 },
    Burst { finger: Finger },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultLogEntry {
    pub time_ms: f64,
    #[serde(flatten)]
    pub event: FaultEvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OutcomeSummary {
    pub triggers: usize,
    pub delivered: usize,
    pub correct_predictions: usize,
    pub gripped: usize,
    /// gripped / triggers, in percent.
    pub success_rate_pct: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LinkStats {
    pub host_frames_sent: u64,
    pub controller_frames_sent: u64,
    pub diagnostics: u64,
    pub link_faults: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub duration_ms: f64,
    pub energy_joules: f64,
    pub mean_power_w: f64,
    pub max_abs_pressure_kpa: f64,
    pub final_phase: Phase,
    pub latency: LatencyStats,
    pub outcomes: OutcomeSummary,
    pub link: LinkStats,
    pub fault_log: Vec<FaultLogEntry>,
    pub triggers: Vec<TriggerRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endurance: Option<SoakVerdict>,
}

impl ScenarioReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))
    }

    /// One row per trigger, for plotting.
    pub fn to_csv(&self) -> Result<String, HarnessError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "index",
            "object",
            "trigger_ms",
            "true_grasp",
            "predicted",
            "confidence",
            "overridden",
            "frame_wait_ms",
            "capture_transfer_ms",
            "preprocess_infer_ms",
            "decision_protocol_ms",
            "controller_dispatch_ms",
            "total_ms",
            "gripped",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for t in &self.triggers {
            let l = t.latency.as_ref();
            w.write_record([
                t.index.to_string(),
                t.object.clone(),
                t.trigger_ms.to_string(),
                t.true_grasp.label().to_string(),
                t.predicted.map(|g| g.label().to_string()).unwrap_or_default(),
                opt(t.confidence),
                t.overridden.to_string(),
                opt(l.map(|l| l.frame_wait_ms)),
                opt(l.map(|l| l.capture_transfer_ms)),
                opt(l.map(|l| l.preprocess_infer_ms)),
                opt(l.map(|l| l.decision_protocol_ms)),
                opt(l.map(|l| l.controller_dispatch_ms)),
                opt(l.map(|l| l.total_ms)),
                t.gripped.map(|g| g.to_string()).unwrap_or_default(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| HarnessError::Parse(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
    }
}
