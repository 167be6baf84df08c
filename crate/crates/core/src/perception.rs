//! Host-side perception stage: grasp classifier models and the latency of
//! the camera -> inference pipeline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grasp::GraspType;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerceptionError {
    #[error("invalid confusion matrix: {0}")]
    InvalidMatrix(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub name: String,
    pub true_grasp: GraspType,
    #[serde(default)]
    pub scale_ambiguous: bool,
}

impl SceneObject {
    pub fn new(name: impl Into<String>, true_grasp: GraspType) -> Self {
        SceneObject {
            name: name.into(),
            true_grasp,
            scale_ambiguous: false,
        }
    }
}

const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Row-stochastic 5x5 matrix; row = true class, column = predicted class,
/// both in wire-id order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 5]; 5]", into = "[[f64; 5]; 5]")]
pub struct ConfusionMatrix {
    rows: [[f64; 5]; 5],
}

impl ConfusionMatrix {
    pub fn new(rows: [[f64; 5]; 5]) -> Result<Self, PerceptionError> {
        for (i, row) in rows.iter().enumerate() {
            if let Some(x) = row.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                return Err(PerceptionError::InvalidMatrix(format!(
                    "row {i} has entry {x} outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(PerceptionError::InvalidMatrix(format!(
                    "row {i} sums to {sum}"
                )));
            }
        }
        Ok(ConfusionMatrix { rows })
    }

    pub fn identity() -> Self {
        let mut rows = [[0.0; 5]; 5];
        for (i, row) in rows.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        ConfusionMatrix { rows }
    }

    /// Parses five lines of five comma-separated probabilities.
    pub fn from_csv_str(text: &str) -> Result<Self, PerceptionError> {
        let lines: Vec<&str> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect();
        if lines.len() != 5 {
            return Err(PerceptionError::InvalidMatrix(format!(
                "expected 5 rows, found {}",
                lines.len()
            )));
        }
        let mut rows = [[0.0; 5]; 5];
        for (i, line) in lines.iter().enumerate() {
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != 5 {
                return Err(PerceptionError::InvalidMatrix(format!(
                    "row {i} has {} columns",
                    cells.len()
                )));
            }
            for (j, cell) in cells.iter().enumerate() {
                rows[i][j] = cell.parse().map_err(|_| {
                    PerceptionError::InvalidMatrix(format!("row {i} column {j}: {cell:?}"))
                })?;
            }
        }
        Self::new(rows)
    }

    pub fn get(&self, truth: GraspType, predicted: GraspType) -> f64 {
        self.rows[truth.index()][predicted.index()]
    }

    pub fn row(&self, truth: GraspType) -> [f64; 5] {
        self.rows[truth.index()]
    }

    pub fn rows(&self) -> &[[f64; 5]; 5] {
        &self.rows
    }

    /// Accuracy under a uniform class prior.
    pub fn mean_diagonal(&self) -> f64 {
        (0..5).map(|i| self.rows[i][i]).sum::<f64>() / 5.0
    }
}

impl TryFrom<[[f64; 5]; 5]> for ConfusionMatrix {
    type Error = PerceptionError;

    fn try_from(rows: [[f64; 5]; 5]) -> Result<Self, Self::Error> {
        Self::new(rows)
    }
}

impl From<ConfusionMatrix> for [[f64; 5]; 5] {
    fn from(m: ConfusionMatrix) -> Self {
        m.rows
    }
}

/// Default confusion model. Aggregate accuracy is 0.967, and the dominant
/// confusion is pinch <-> three-jaw chuck.
pub fn default_confusion_matrix() -> ConfusionMatrix {
    ConfusionMatrix {
        rows: [
            [0.950, 0.004, 0.040, 0.003, 0.003],
            [0.005, 0.975, 0.005, 0.010, 0.005],
            [0.040, 0.004, 0.950, 0.003, 0.003],
            [0.005, 0.010, 0.005, 0.975, 0.005],
            [0.005, 0.004, 0.003, 0.003, 0.985],
        ],
    }
}

/// Gaussian truncated at zero, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageDist {
    pub mean_ms: f64,
    pub sd_ms: f64,
}

impl StageDist {
    pub const fn new(mean_ms: f64, sd_ms: f64) -> Self {
        StageDist { mean_ms, sd_ms }
    }

    /// Rejection sampling keeps the draw strictly positive.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.sd_ms == 0.0 {
            return self.mean_ms;
        }
        loop {
            let z: f64 = rng.sample(StandardNormal);
            let x = self.mean_ms + self.sd_ms * z;
            if x > 0.0 {
                return x;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyModel {
    pub frame_period_ms: f64,
    pub capture_transfer: StageDist,
    /// Preprocessing plus inference together.
    pub preprocess_infer: StageDist,
    /// The inference share of `preprocess_infer`.
    pub inference: StageDist,
    pub decision_protocol: StageDist,
    /// When false every stage takes its mean and the frame wait follows the
    /// trigger's phase against the camera clock.
    pub stochastic: bool,
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel {
            frame_period_ms: 33.33,
            capture_transfer: StageDist::new(17.6, 2.0),
            preprocess_infer: StageDist::new(1.5, 0.3),
            inference: StageDist::new(0.9, 0.15),
            decision_protocol: StageDist::new(2.2, 0.5),
            stochastic: true,
        }
    }
}

impl LatencyModel {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.frame_period_ms > 0.0) {
            return Err("frame_period_ms must be > 0".into());
        }
        for (name, d) in [
            ("capture_transfer", self.capture_transfer),
            ("preprocess_infer", self.preprocess_infer),
            ("inference", self.inference),
            ("decision_protocol", self.decision_protocol),
        ] {
            if !(d.mean_ms > 0.0 && d.sd_ms >= 0.0) {
                return Err(format!("{name}: need mean > 0 and sd >= 0"));
            }
        }
        if self.inference.mean_ms >= self.preprocess_infer.mean_ms
            || self.inference.sd_ms > self.preprocess_infer.sd_ms
        {
            return Err("inference must be a strict part of preprocess_infer".into());
        }
        Ok(())
    }

    /// The non-inference part of `preprocess_infer`, so that the sum of the
    /// two independent draws keeps the configured mean and spread.
    pub fn preprocess_only(&self) -> StageDist {
        StageDist {
            mean_ms: self.preprocess_infer.mean_ms - self.inference.mean_ms,
            sd_ms: (self.preprocess_infer.sd_ms.powi(2) - self.inference.sd_ms.powi(2)).sqrt(),
        }
    }
}

/// Time from `trigger_time_ms` to the next camera frame boundary.
pub fn frame_wait(trigger_time_ms: f64, model: &LatencyModel) -> f64 {
    let period = model.frame_period_ms;
    (period - trigger_time_ms.rem_euclid(period)).rem_euclid(period)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ClassifierMode {
    Stub,
    Confusion { matrix: ConfusionMatrix, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierOutput {
    pub predicted: GraspType,
    pub confidence: f64,
    pub inference_latency_ms: f64,
}

/// Owns its generator; one instance per driver.
#[derive(Debug, Clone)]
pub struct Classifier {
    mode: ClassifierMode,
    inference: StageDist,
    rng: ChaCha8Rng,
}

impl Classifier {
    pub fn new(mode: ClassifierMode, inference: StageDist) -> Result<Self, PerceptionError> {
        let seed = match &mode {
            ClassifierMode::Stub => 0,
            ClassifierMode::Confusion { matrix, seed } => {
                ConfusionMatrix::new(*matrix.rows())?;
                *seed
            }
        };
        Ok(Classifier {
            mode,
            inference,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn stub() -> Self {
        Self::new(ClassifierMode::Stub, LatencyModel::default().inference).expect("stub is valid")
    }

    pub fn mode(&self) -> &ClassifierMode {
        &self.mode
    }

    pub fn classify(&mut self, object: &SceneObject) -> ClassifierOutput {
        let matrix = match &self.mode {
            ClassifierMode::Stub => {
                return ClassifierOutput {
                    predicted: object.true_grasp,
                    confidence: 1.0,
                    inference_latency_ms: self.inference.mean_ms,
                }
            }
            ClassifierMode::Confusion { matrix, .. } => matrix,
        };
        let mut row = matrix.row(object.true_grasp);
        if object.scale_ambiguous {
            // no absolute size cue: half the mass spreads uniformly
            for p in row.iter_mut() {
                *p = 0.5 * *p + 0.1;
            }
        }
        let u: f64 = self.rng.random();
        let mut acc = 0.0;
        let mut pick = GraspType::ALL.len() - 1;
        for (i, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = i;
                break;
            }
        }
        let inference_latency_ms = self.inference.sample(&mut self.rng);
        ClassifierOutput {
            predicted: GraspType::ALL[pick],
            confidence: row[pick],
            inference_latency_ms,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_matrix_properties() {
        let m = default_confusion_matrix();
        for row in m.rows() {
            assert_eq!(row.iter().sum::<f64>(), 1.0);
        }
        assert!((m.mean_diagonal() - 0.967).abs() < 1e-12);
        let mut worst = (0.0, 0, 0);
        for i in 0..5 {
            for j in 0..5 {
                if i != j && m.rows()[i][j] > worst.0 {
                    worst = (m.rows()[i][j], i, j);
                }
            }
        }
        assert_eq!(worst.0, 0.040);
        let pair = (GraspType::ALL[worst.1], GraspType::ALL[worst.2]);
        assert!(matches!(
            pair,
            (GraspType::Pinch, GraspType::ThreeJawChuck) | (GraspType::ThreeJawChuck, GraspType::Pinch)
        ));
        assert_eq!(m.get(GraspType::Pinch, GraspType::ThreeJawChuck), 0.040);
        assert_eq!(m.get(GraspType::ThreeJawChuck, GraspType::Pinch), 0.040);
    }

    #[test]
    fn stub_is_identity() {
        let mut c = Classifier::stub();
        let out = c.classify(&SceneObject::new("mug", GraspType::Power));
        assert_eq!(out.predicted, GraspType::Power);
        assert_eq!(out.confidence, 1.0);
        assert_eq!(out.inference_latency_ms, 0.9);
    }

    #[test]
    fn identity_matrix_never_errs() {
        let mode = ClassifierMode::Confusion { matrix: ConfusionMatrix::identity(), seed: 3 };
        let mut c = Classifier::new(mode, LatencyModel::default().inference).unwrap();
        for i in 0..10_000 {
            let g = GraspType::ALL[i % 5];
            let out = c.classify(&SceneObject::new("x", g));
            assert_eq!(out.predicted, g);
            assert_eq!(out.confidence, 1.0);
        }
    }

    #[test]
    fn invalid_matrix_is_rejected() {
        let mut rows = *default_confusion_matrix().rows();
        rows[2][2] = 0.9;
        assert!(matches!(ConfusionMatrix::new(rows), Err(PerceptionError::InvalidMatrix(_))));
        rows[2][2] = -0.01;
        assert!(ConfusionMatrix::new(rows).is_err());
        assert!(serde_json::from_str::<ConfusionMatrix>("[[1,0,0,0,0],[1,0,0,0,0],[1,0,0,0,0],[1,0,0,0,0],[0.5,0,0,0,0]]").is_err());
    }

    #[test]
    fn matrix_csv_round_trip() {
        let text = "0.950,0.004,0.040,0.003,0.003\n0.005,0.975,0.005,0.010,0.005\n0.040,0.004,0.950,0.003,0.003\n0.005,0.010,0.005,0.975,0.005\n0.005,0.004,0.003,0.003,0.985\n";
        assert_eq!(ConfusionMatrix::from_csv_str(text).unwrap(), default_confusion_matrix());
        assert!(ConfusionMatrix::from_csv_str("1,0,0,0,0\n").is_err());
        assert!(ConfusionMatrix::from_csv_str(&text.replace("0.985", "0.5")).is_err());
    }

    #[test]
    fn confusion_sampling_is_seed_deterministic() {
        let mode = ClassifierMode::Confusion { matrix: default_confusion_matrix(), seed: 11 };
        let mut a = Classifier::new(mode.clone(), LatencyModel::default().inference).unwrap();
        let mut b = Classifier::new(mode, LatencyModel::default().inference).unwrap();
        let obj = SceneObject::new("pen", GraspType::Pinch);
        for _ in 0..1000 {
            assert_eq!(a.classify(&obj), b.classify(&obj));
        }
    }

    #[test]
    fn ambiguous_objects_are_harder() {
        let mode = ClassifierMode::Confusion { matrix: default_confusion_matrix(), seed: 5 };
        let mut c = Classifier::new(mode, LatencyModel::default().inference).unwrap();
        let mut obj = SceneObject::new("marble", GraspType::Key);
        obj.scale_ambiguous = true;
        let hits = (0..20_000).filter(|_| c.classify(&obj).predicted == GraspType::Key).count();
        // 0.5 * 0.985 + 0.1
        let rate = hits as f64 / 20_000.0;
        assert!((rate - 0.5925).abs() < 0.015, "{rate}");
    }

    #[test]
    fn frame_wait_examples() {
        let m = LatencyModel::default();
        assert_eq!(frame_wait(0.0, &m), 0.0);
        assert_eq!(frame_wait(3.0 * m.frame_period_ms, &m), 0.0);
        assert!((frame_wait(m.frame_period_ms / 2.0, &m) - m.frame_period_ms / 2.0).abs() < 1e-12);
        assert!((frame_wait(10.0, &m) - 23.33).abs() < 1e-9);
    }

    #[test]
    fn truncated_samples_are_positive() {
        let d = StageDist::new(0.2, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..10_000).all(|_| d.sample(&mut rng) > 0.0));
    }

    #[test]
    fn preprocess_split_preserves_moments() {
        let m = LatencyModel::default();
        let p = m.preprocess_only();
        assert!((p.mean_ms + m.inference.mean_ms - 1.5).abs() < 1e-12);
        assert!(((p.sd_ms.powi(2) + m.inference.sd_ms.powi(2)).sqrt() - 0.3).abs() < 1e-12);
        assert!(m.validate().is_ok());
    }
}
