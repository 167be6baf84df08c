//! Scenario files: what to show the camera, when, and what to break.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{SimConfig, CONFIG_KEYS};
use super::HarnessError;
use crate::grasp::GraspType;
use crate::perception::{default_confusion_matrix, ClassifierMode, ConfusionMatrix, SceneObject};
use crate::plant::Fault;

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

/// Allowance for the sensing pipeline when checking trigger spacing: one
/// camera period plus a generous bound on the processing stages.
const PIPELINE_ALLOWANCE_MS: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClassifierSpec {
    #[default]
    Stub,
    Confusion {
        /// Defaults to a value derived from the scenario seed.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        /// Defaults to the calibrated matrix.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        matrix: Option<ConfusionMatrix>,
    },
}

impl ClassifierSpec {
    pub fn confusion() -> Self {
        ClassifierSpec::Confusion { seed: None, matrix: None }
    }

    pub fn resolve(&self, scenario_seed: u64) -> ClassifierMode {
        match self {
            ClassifierSpec::Stub => ClassifierMode::Stub,
            ClassifierSpec::Confusion { seed, matrix } => ClassifierMode::Confusion {
                matrix: matrix.clone().unwrap_or_else(default_confusion_matrix),
                seed: seed.unwrap_or(scenario_seed ^ 0x9E37_79B9_7F4A_7C15),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduledObject {
    pub name: String,
    pub grasp: GraspType,
    pub trigger_ms: f64,
    #[serde(default)]
    pub scale_ambiguous: bool,
    /// Time spent in Hold before the release edge.
    #[serde(default = "default_hold_ms")]
    pub hold_ms: f64,
}

fn default_hold_ms() -> f64 {
    1000.0
}

impl ScheduledObject {
    pub fn scene_object(&self) -> SceneObject {
        SceneObject {
            name: self.name.clone(),
            true_grasp: self.grasp,
            scale_ambiguous: self.scale_ambiguous,
        }
    }
}

/// Host-side disturbances that are not plant faults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HostFault {
    /// Host stops sending heartbeats.
    HostSilence,
    HostResume,
    /// The next `count` host -> controller frames are lost on the wire.
    DropFrames { count: u32 },
    /// Clears plant faults and host disturbances. A latched controller
    /// fault stays latched.
    ClearFaults,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Injection {
    Plant(Fault),
    Host(HostFault),
}

impl Injection {
    pub fn is_valid(&self) -> bool {
        match self {
            Injection::Plant(f) => f.is_valid(),
            Injection::Host(_) => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduledFault {
    pub at_ms: f64,
    #[serde(flatten)]
    pub injection: Injection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub seed: u64,
    pub duration_ms: f64,
    #[serde(default)]
    pub classifier: ClassifierSpec,
    #[serde(default)]
    pub objects: Vec<ScheduledObject>,
    #[serde(default)]
    pub faults: Vec<ScheduledFault>,
    #[serde(default)]
    pub config: SimConfig,
}

/// The scenario fields of a file, with config sections split off.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioHeader {
    schema_version: u32,
    name: String,
    seed: u64,
    duration_ms: f64,
    #[serde(default)]
    classifier: ClassifierSpec,
    #[serde(default)]
    objects: Vec<ScheduledObject>,
    #[serde(default)]
    faults: Vec<ScheduledFault>,
}

impl Scenario {
    pub fn new(name: impl Into<String>, seed: u64, duration_ms: f64) -> Self {
        Scenario {
            schema_version: SCENARIO_SCHEMA_VERSION,
            name: name.into(),
            seed,
            duration_ms,
            classifier: ClassifierSpec::Stub,
            objects: Vec::new(),
            faults: Vec::new(),
            config: SimConfig::default(),
        }
    }

    /// Parses a scenario file. Config sections in the file are layered on
    /// top of `base`. A `classifier.matrix_file` is resolved against `dir`.
    pub fn from_toml_str(
        text: &str,
        base: Option<&toml::Table>,
        dir: Option<&Path>,
    ) -> Result<Self, HarnessError> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| HarnessError::Parse(e.to_string()))?;
        let mut config_table = toml::Table::new();
        for key in CONFIG_KEYS {
            if let Some(v) = table.remove(key) {
                config_table.insert(key.to_string(), v);
            }
        }
        if let Some(toml::Value::Table(cls)) = table.get_mut("classifier") {
            if let Some(file) = cls.remove("matrix_file") {
                let file = file
                    .as_str()
                    .ok_or_else(|| HarnessError::Parse("classifier.matrix_file must be a string".into()))?;
                let path = dir.map_or_else(|| Path::new(file).to_path_buf(), |d| d.join(file));
                let csv = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
                let matrix = ConfusionMatrix::from_csv_str(&csv)
                    .map_err(|e| HarnessError::ScenarioInvalid(format!("{}: {e}", path.display())))?;
                let rows = toml::Value::try_from(matrix).map_err(|e| HarnessError::Parse(e.to_string()))?;
                cls.insert("matrix".into(), rows);
            }
        }
        let header = ScenarioHeader::deserialize(toml::Value::Table(table))
            .map_err(|e| HarnessError::Parse(e.to_string()))?;
        let config = SimConfig::from_layers(base, &config_table)?;
        Ok(Scenario {
            schema_version: header.schema_version,
            name: header.name,
            seed: header.seed,
            duration_ms: header.duration_ms,
            classifier: header.classifier,
            objects: header.objects,
            faults: header.faults,
            config,
        })
    }

    pub fn load(path: &Path, base: Option<&toml::Table>) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml_str(&text, base, path.parent())
    }

    /// Writes the file form: scenario fields and config sections side by
    /// side at the top level.
    pub fn to_toml_string(&self) -> Result<String, HarnessError> {
        let mut table = match toml::Value::try_from(self).map_err(|e| HarnessError::Parse(e.to_string()))? {
            toml::Value::Table(t) => t,
            _ => unreachable!("a struct serializes to a table"),
        };
        if let Some(toml::Value::Table(config)) = table.remove("config") {
            table.extend(config);
        }
        toml::to_string(&table).map_err(|e| HarnessError::Parse(e.to_string()))
    }

    /// Worst-case wall-to-wall time of one grasp/release cycle for `obj`.
    pub fn cycle_ms(&self, obj: &ScheduledObject) -> f64 {
        let s = &self.config.safety;
        PIPELINE_ALLOWANCE_MS + s.extend_ms + s.flex_settle_ms + obj.hold_ms + s.release_vent_ms
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::ScenarioInvalid(msg));
        if self.schema_version != SCENARIO_SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} unsupported (expected {SCENARIO_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.name.trim().is_empty() {
            return bad("name is empty".into());
        }
        if !(self.duration_ms.is_finite() && self.duration_ms > 0.0) {
            return bad(format!("duration_ms {} must be > 0", self.duration_ms));
        }
        self.config.validate()?;
        if let ClassifierSpec::Confusion { matrix: Some(m), .. } = &self.classifier {
            ConfusionMatrix::new(*m.rows()).map_err(|e| HarnessError::ScenarioInvalid(e.to_string()))?;
        }
        let mut free_at = 0.0_f64;
        for (i, obj) in self.objects.iter().enumerate() {
            if !(obj.trigger_ms.is_finite() && obj.trigger_ms >= 0.0) {
                return bad(format!("object {i} ({}): trigger_ms must be >= 0", obj.name));
            }
            if !(obj.hold_ms.is_finite() && obj.hold_ms > 0.0) {
                return bad(format!("object {i} ({}): hold_ms must be > 0", obj.name));
            }
            if i > 0 && obj.trigger_ms <= self.objects[i - 1].trigger_ms {
                return bad(format!("object {i} ({}): trigger times must strictly increase", obj.name));
            }
            if obj.trigger_ms < free_at {
                return bad(format!(
                    "object {i} ({}) triggers at {} ms, before the previous grasp cycle ends at {free_at} ms",
                    obj.name, obj.trigger_ms
                ));
            }
            free_at = obj.trigger_ms + self.cycle_ms(obj);
        }
        if self.duration_ms < free_at {
            return bad(format!(
                "duration_ms {} ends before the last grasp cycle completes at {free_at} ms",
                self.duration_ms
            ));
        }
        for (i, f) in self.faults.iter().enumerate() {
            if !(f.at_ms.is_finite() && f.at_ms >= 0.0 && f.at_ms <= self.duration_ms) {
                return bad(format!("fault {i}: at_ms {} outside the run", f.at_ms));
            }
            if !f.injection.is_valid() {
                return bad(format!("fault {i}: parameters out of range"));
            }
        }
        Ok(())
    }
}
