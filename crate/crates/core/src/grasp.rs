//! Grasp taxonomy, finger set, and the grasp -> finger actuation table.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraspError {
    #[error("unknown grasp label: {0:?}")]
    UnknownLabel(String),
    #[error("grasp wire id {0} out of range 0..=4")]
    BadWireId(u8),
    #[error("invalid actuation plan for {grasp}: {reason}")]
    InvalidPlan { grasp: GraspType, reason: String },
}

/// The five grasp classes, in wire-id order.
///
/// Deserializes from any label [`parse_grasp_label`] accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GraspType {
    Pinch,
    Power,
    ThreeJawChuck,
    Tool,
    Key,
}

impl GraspType {
    pub const ALL: [GraspType; 5] = [
        GraspType::Pinch,
        GraspType::Power,
        GraspType::ThreeJawChuck,
        GraspType::Tool,
        GraspType::Key,
    ];

    pub fn to_wire(self) -> u8 {
        self as u8
    }

    pub fn from_wire(id: u8) -> Result<Self, GraspError> {
        Self::ALL
            .get(id as usize)
            .copied()
            .ok_or(GraspError::BadWireId(id))
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            GraspType::Pinch => "pinch",
            GraspType::Power => "power",
            GraspType::ThreeJawChuck => "three-jaw chuck",
            GraspType::Tool => "tool",
            GraspType::Key => "key",
        }
    }
}

impl fmt::Display for GraspType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for GraspType {
    type Err = GraspError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_grasp_label(s)
    }
}

impl<'de> Deserialize<'de> for GraspType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let label = String::deserialize(d)?;
        parse_grasp_label(&label).map_err(serde::de::Error::custom)
    }
}

/// Case-, whitespace- and hyphen-insensitive label lookup.
pub fn parse_grasp_label(label: &str) -> Result<GraspType, GraspError> {
    let key: String = label
        .chars()
        .filter(|c| !c.is_whitespace() && *c != '-' && *c != '_')
        .flat_map(char::to_lowercase)
        .collect();
    match key.as_str() {
        "pinch" => Ok(GraspType::Pinch),
        "power" => Ok(GraspType::Power),
        "threejawchuck" | "3jawchuck" | "threejaw" | "3jaw" => Ok(GraspType::ThreeJawChuck),
        "tool" => Ok(GraspType::Tool),
        "key" => Ok(GraspType::Key),
        _ => Err(GraspError::UnknownLabel(label.to_string())),
    }
}

/// One pneumatic channel per finger; the discriminant is the channel index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Finger {
    Thumb,
    Index,
    Middle,
    Ring,
    Little,
}

impl Finger {
    pub const ALL: [Finger; 5] = [
        Finger::Thumb,
        Finger::Index,
        Finger::Middle,
        Finger::Ring,
        Finger::Little,
    ];

    pub fn channel(self) -> usize {
        self as usize
    }

    pub fn from_channel(ch: usize) -> Option<Finger> {
        Self::ALL.get(ch).copied()
    }
}

impl fmt::Display for Finger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Finger::Thumb => "thumb",
            Finger::Index => "index",
            Finger::Middle => "middle",
            Finger::Ring => "ring",
            Finger::Little => "little",
        };
        f.write_str(s)
    }
}

/// A total map from [`Finger`] to `T`.
///
/// Serialized as a struct with one named field per finger so config and
/// report files stay readable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct PerFinger<T> {
    pub thumb: T,
    pub index: T,
    pub middle: T,
    pub ring: T,
    pub little: T,
}

impl<T: Copy> PerFinger<T> {
    pub fn splat(v: T) -> Self {
        PerFinger {
            thumb: v,
            index: v,
            middle: v,
            ring: v,
            little: v,
        }
    }

    pub fn from_fn(mut f: impl FnMut(Finger) -> T) -> Self {
        PerFinger {
            thumb: f(Finger::Thumb),
            index: f(Finger::Index),
            middle: f(Finger::Middle),
            ring: f(Finger::Ring),
            little: f(Finger::Little),
        }
    }

    pub fn map<U: Copy>(&self, mut f: impl FnMut(Finger, T) -> U) -> PerFinger<U> {
        PerFinger::from_fn(|finger| f(finger, self[finger]))
    }

    pub fn iter(&self) -> impl Iterator<Item = (Finger, T)> + '_ {
        Finger::ALL.into_iter().map(move |f| (f, self[f]))
    }

    pub fn to_array(&self) -> [T; 5] {
        [self.thumb, self.index, self.middle, self.ring, self.little]
    }
}

impl<T> Index<Finger> for PerFinger<T> {
    type Output = T;

    fn index(&self, finger: Finger) -> &T {
        match finger {
            Finger::Thumb => &self.thumb,
            Finger::Index => &self.index,
            Finger::Middle => &self.middle,
            Finger::Ring => &self.ring,
            Finger::Little => &self.little,
        }
    }
}

impl<T> IndexMut<Finger> for PerFinger<T> {
    fn index_mut(&mut self, finger: Finger) -> &mut T {
        match finger {
            Finger::Thumb => &mut self.thumb,
            Finger::Index => &mut self.index,
            Finger::Middle => &mut self.middle,
            Finger::Ring => &mut self.ring,
            Finger::Little => &mut self.little,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FingerTarget {
    /// Vacuum-driven closure.
    Flex,
    /// Pressure-driven opening.
    Extend,
    /// Vented, no drive.
    Neutral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActuationPlan {
    pub targets: PerFinger<FingerTarget>,
    /// Always set: the thumb brace holds partial abduction for every grasp.
    pub thumb_brace_constrained: bool,
}

impl ActuationPlan {
    fn from_targets(targets: [FingerTarget; 5]) -> Self {
        ActuationPlan {
            targets: PerFinger::from_fn(|f| targets[f.channel()]),
            thumb_brace_constrained: true,
        }
    }

    pub fn target(&self, finger: Finger) -> FingerTarget {
        self.targets[finger]
    }

    pub fn fingers_with(&self, target: FingerTarget) -> impl Iterator<Item = Finger> + '_ {
        self.targets
            .iter()
            .filter(move |(_, t)| *t == target)
            .map(|(f, _)| f)
    }

    /// Checks a plan that came from outside the built-in table.
    pub fn validate(&self, grasp: GraspType) -> Result<(), GraspError> {
        if !self.thumb_brace_constrained {
            return Err(GraspError::InvalidPlan {
                grasp,
                reason: "thumb_brace_constrained must be true".into(),
            });
        }
        Ok(())
    }
}

/// Default grasp -> finger table.
pub fn actuation_plan(grasp: GraspType) -> ActuationPlan {
    use FingerTarget::{Extend as E, Flex as F};
    // order: thumb, index, middle, ring, little
    let row = match grasp {
        GraspType::Power => [F, F, F, F, F],
        GraspType::Pinch => [F, F, E, E, E],
        GraspType::ThreeJawChuck => [F, F, F, E, E],
        GraspType::Tool => [F, E, F, F, F],
        // Same pneumatics as Power; the brace supplies lateral opposition.
        GraspType::Key => [F, F, F, F, F],
    };
    ActuationPlan::from_targets(row)
}

/// Grasp table with optional per-row overrides loaded from config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraspTable {
    rows: [ActuationPlan; 5],
}

impl Default for GraspTable {
    fn default() -> Self {
        GraspTable {
            rows: GraspType::ALL.map(actuation_plan),
        }
    }
}

impl GraspTable {
    pub fn plan(&self, grasp: GraspType) -> ActuationPlan {
        self.rows[grasp.index()]
    }

    pub fn with_override(
        mut self,
        grasp: GraspType,
        targets: PerFinger<FingerTarget>,
    ) -> Result<Self, GraspError> {
        let plan = ActuationPlan {
            targets,
            thumb_brace_constrained: true,
        };
        plan.validate(grasp)?;
        self.rows[grasp.index()] = plan;
        Ok(self)
    }

    /// Applies `label -> targets` overrides as found in a scenario's
    /// `[grasp_map]` section.
    pub fn with_overrides<'a>(
        mut self,
        rows: impl IntoIterator<Item = (&'a String, &'a PerFinger<FingerTarget>)>,
    ) -> Result<Self, GraspError> {
        for (label, targets) in rows {
            self = self.with_override(parse_grasp_label(label)?, *targets)?;
        }
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use FingerTarget::*;

    #[test]
    fn power_flexes_everything() {
        let plan = actuation_plan(GraspType::Power);
        assert!(plan.targets.iter().all(|(_, t)| t == Flex));
        assert!(plan.thumb_brace_constrained);
    }

    #[test]
    fn pinch_and_three_jaw_rows() {
        let pinch = actuation_plan(GraspType::Pinch);
        assert_eq!(pinch.targets.to_array(), [Flex, Flex, Extend, Extend, Extend]);
        let chuck = actuation_plan(GraspType::ThreeJawChuck);
        assert_eq!(chuck.targets.to_array(), [Flex, Flex, Flex, Extend, Extend]);
        let tool = actuation_plan(GraspType::Tool);
        assert_eq!(tool.target(Finger::Index), Extend);
        assert_eq!(tool.fingers_with(Flex).count(), 4);
    }

    #[test]
    fn plans_are_deterministic() {
        for g in GraspType::ALL {
            let first = actuation_plan(g);
            for _ in 0..1000 {
                assert_eq!(actuation_plan(g), first);
            }
        }
    }

    #[test]
    fn wire_ids_are_a_bijection() {
        let ids: Vec<u8> = GraspType::ALL.iter().map(|g| g.to_wire()).collect();
        assert_eq!(ids, vec![0, 1, 2, 3, 4]);
        for g in GraspType::ALL {
            assert_eq!(GraspType::from_wire(g.to_wire()), Ok(g));
        }
        assert_eq!(GraspType::from_wire(5), Err(GraspError::BadWireId(5)));
    }

    #[test]
    fn label_parsing() {
        assert_eq!(parse_grasp_label("power"), Ok(GraspType::Power));
        assert_eq!(parse_grasp_label("Three-Jaw Chuck"), Ok(GraspType::ThreeJawChuck));
        assert_eq!(parse_grasp_label("three jaw chuck"), Ok(GraspType::ThreeJawChuck));
        assert_eq!(parse_grasp_label("3-jaw"), Ok(GraspType::ThreeJawChuck));
        assert_eq!(parse_grasp_label("  KEY "), Ok(GraspType::Key));
        assert_eq!(
            parse_grasp_label("fist"),
            Err(GraspError::UnknownLabel("fist".into()))
        );
        for g in GraspType::ALL {
            assert_eq!(parse_grasp_label(g.label()), Ok(g));
        }
    }

    #[test]
    fn deserialized_plans_are_checked() {
        let json = r#"{"targets":{"thumb":"flex","index":"flex","middle":"extend","ring":"extend","little":"neutral"},"thumb_brace_constrained":false}"#;
        let plan: ActuationPlan = serde_json::from_str(json).unwrap();
        assert!(plan.validate(GraspType::Pinch).is_err());
        // a finger holds exactly one target, so Flex+Extend on one finger cannot parse
        let dup = r#"{"targets":{"thumb":["flex","extend"],"index":"flex","middle":"flex","ring":"flex","little":"flex"},"thumb_brace_constrained":true}"#;
        assert!(serde_json::from_str::<ActuationPlan>(dup).is_err());
    }

    #[test]
    fn table_override_replaces_one_row() {
        let table = GraspTable::default()
            .with_override(GraspType::Tool, PerFinger::splat(Neutral))
            .unwrap();
        assert_eq!(table.plan(GraspType::Tool).targets, PerFinger::splat(Neutral));
        assert_eq!(table.plan(GraspType::Power), actuation_plan(GraspType::Power));
    }
}
