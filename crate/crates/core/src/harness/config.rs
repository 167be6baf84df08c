//! Simulation configuration: every tunable of the closed loop in one
//! struct, loadable from TOML and layered (base file, then scenario).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::controller::{ControllerConfig, SafetyConfig};
use crate::grasp::{FingerTarget, GraspTable, GraspType, PerFinger};
use crate::perception::LatencyModel;
use crate::plant::PlantConfig;
use crate::protocol::LinkConfig;

/// Top-level keys of a config table. A scenario file may carry any of these
/// next to its own fields.
pub const CONFIG_KEYS: [&str; 6] = [
    "plant",
    "safety",
    "latency",
    "link",
    "grasp_map",
    "telemetry_interval_ms",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub plant: PlantConfig,
    pub safety: SafetyConfig,
    pub latency: LatencyModel,
    pub link: LinkConfig,
    /// Rows replacing the built-in grasp -> finger table.
    pub grasp_map: BTreeMap<GraspType, PerFinger<FingerTarget>>,
    /// Controller -> host telemetry period.
    pub telemetry_interval_ms: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            plant: PlantConfig::default(),
            safety: SafetyConfig::default(),
            latency: LatencyModel::default(),
            link: LinkConfig::default(),
            grasp_map: BTreeMap::new(),
            telemetry_interval_ms: 20.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let invalid = |what: &str, e: String| HarnessError::ScenarioInvalid(format!("{what}: {e}"));
        self.plant.validate().map_err(|e| invalid("plant", e))?;
        self.safety
            .validate()
            .map_err(|e| invalid("safety", e.to_string()))?;
        self.latency.validate().map_err(|e| invalid("latency", e))?;
        self.link
            .validate(self.safety.watchdog_ms)
            .map_err(|e| invalid("link", e))?;
        if !(self.telemetry_interval_ms >= self.plant.dt_ms) {
            return Err(invalid(
                "telemetry_interval_ms",
                "must be at least one plant step".into(),
            ));
        }
        self.grasp_table()?;
        Ok(())
    }

    pub fn grasp_table(&self) -> Result<GraspTable, HarnessError> {
        let mut table = GraspTable::default();
        for (grasp, targets) in &self.grasp_map {
            table = table
                .with_override(*grasp, *targets)
                .map_err(|e| HarnessError::ScenarioInvalid(format!("grasp_map: {e}")))?;
        }
        Ok(table)
    }

    pub fn controller_config(&self) -> Result<ControllerConfig, HarnessError> {
        Ok(ControllerConfig {
            safety: self.safety,
            grasp_table: self.grasp_table()?,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))
    }

    /// Parses a base config into a raw table, for layering under scenarios.
    pub fn base_table(text: &str) -> Result<toml::Table, HarnessError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| HarnessError::Parse(e.to_string()))?;
        // reject typos in the base file up front
        SimConfig::deserialize(toml::Value::Table(table.clone()))
            .map_err(|e| HarnessError::Parse(e.to_string()))?;
        Ok(table)
    }

    /// `over` wins key by key; anything neither table sets takes its default.
    pub fn from_layers(base: Option<&toml::Table>, over: &toml::Table) -> Result<Self, HarnessError> {
        let mut merged = base.cloned().unwrap_or_default();
        deep_merge(&mut merged, over);
        SimConfig::deserialize(toml::Value::Table(merged)).map_err(|e| HarnessError::Parse(e.to_string()))
    }
}

/// Recursively overlays `over` onto `base`; tables merge, anything else
/// replaces.
pub fn deep_merge(base: &mut toml::Table, over: &toml::Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => deep_merge(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}
