//! Benchmark data ingestion and scoring: activities-of-daily-living task
//! tables and YCB gripper-assessment point sheets.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdlRecord {
    pub task_category: String,
    pub specific_task: String,
    pub human_time_s: f64,
    pub reglove_time_s: f64,
    /// 0 = failed, 3 = excellent.
    pub score: Option<f64>,
    pub failure_rate_pct: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdlScore {
    pub mean_score: f64,
    /// Population standard deviation.
    pub std_score: f64,
    pub n: usize,
    /// Mean of per-task glove/human time ratios.
    pub mean_time_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YcbTrial {
    pub object_name: String,
    pub points_awarded: f64,
    pub points_possible: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YcbScore {
    pub success_rate_pct: f64,
    pub points: f64,
    pub possible: f64,
    pub trials: usize,
}

/// Header names compare after trimming, lowercasing and folding `--` to
/// `-`, so spreadsheet exports with typographic dashes still match.
fn norm(h: &str) -> String {
    h.trim().to_lowercase().replace("--", "-").replace(['\u{2013}', '\u{2014}'], "-")
}

struct Columns {
    headers: Vec<String>,
}

impl Columns {
    fn find(&self, names: &[&str]) -> Option<usize> {
        names
            .iter()
            .find_map(|n| self.headers.iter().position(|h| *h == norm(n)))
    }

    fn require(&self, names: &[&str]) -> Result<usize, HarnessError> {
        self.find(names)
            .ok_or_else(|| HarnessError::MissingColumn(names.join(" | ")))
    }
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn columns<R: Read>(rdr: &mut csv::Reader<R>) -> Result<Columns, HarnessError> {
    let headers = rdr.headers()?.iter().map(norm).collect();
    Ok(Columns { headers })
}

/// Parses a numeric cell. `row` counts data rows from 1.
fn number(
    record: &csv::StringRecord,
    idx: usize,
    row: usize,
    column: &str,
    range: (f64, f64),
) -> Result<Option<f64>, HarnessError> {
    let cell = record.get(idx).unwrap_or("");
    if cell.is_empty() {
        return Ok(None);
    }
    let malformed = |reason: String| HarnessError::MalformedNumber {
        row,
        column: column.to_string(),
        reason,
    };
    let v: f64 = cell
        .trim_end_matches('%')
        .trim()
        .parse()
        .map_err(|_| malformed(format!("{cell:?} is not a number")))?;
    if !(v.is_finite() && v >= range.0 && v <= range.1) {
        return Err(malformed(format!("{v} outside [{}, {}]", range.0, range.1)));
    }
    Ok(Some(v))
}

fn required(v: Option<f64>, row: usize, column: &str) -> Result<f64, HarnessError> {
    v.ok_or_else(|| HarnessError::MalformedNumber {
        row,
        column: column.to_string(),
        reason: "empty cell".into(),
    })
}

/// Reads ADL task rows. Accepts the task-table header set
/// (`Task Category, Specific Task, Human Time (s), ReGlove Time (s),
/// Score (0-3), Failure Rate (%)`) and the plot-data set (`Tasks,
/// Avg Human Execution Time (s), Avg ReGlove Execution Time (s)`).
/// Blank category cells inherit the category above them.
pub fn parse_adl_csv<R: Read>(input: R) -> Result<Vec<AdlRecord>, HarnessError> {
    let mut rdr = reader(input);
    let cols = columns(&mut rdr)?;
    let task = cols.require(&["Specific Task", "Tasks", "Task"])?;
    let category = cols.find(&["Task Category", "Category"]);
    let human = cols.require(&["Human Time (s)", "Avg Human Execution Time (s)"])?;
    let glove = cols.require(&["ReGlove Time (s)", "Avg ReGlove Execution Time (s)"])?;
    let score = cols.find(&["Score (0--3)", "Score (0-3)", "Score"]);
    let failure = cols.find(&["Failure Rate (%)", "Failure Rate"]);

    let mut out = Vec::new();
    let mut last_category = String::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if let Some(c) = category.and_then(|c| rec.get(c)).filter(|c| !c.is_empty()) {
            last_category = c.to_string();
        }
        let positive = (0.0, f64::INFINITY);
        out.push(AdlRecord {
            task_category: last_category.clone(),
            specific_task: rec.get(task).unwrap_or("").to_string(),
            human_time_s: required(number(&rec, human, row, "human_time_s", positive)?, row, "human_time_s")?,
            reglove_time_s: required(
                number(&rec, glove, row, "reglove_time_s", positive)?,
                row,
                "reglove_time_s",
            )?,
            score: match score {
                Some(c) => number(&rec, c, row, "score", (0.0, 3.0))?,
                None => None,
            },
            failure_rate_pct: match failure {
                Some(c) => number(&rec, c, row, "failure_rate_pct", (0.0, 100.0))?,
                None => None,
            },
        });
    }
    Ok(out)
}

pub fn load_adl_csv(path: &Path) -> Result<Vec<AdlRecord>, HarnessError> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    parse_adl_csv(file)
}

/// Mean and population σ over the scored records.
pub fn score_adl(records: &[AdlRecord]) -> Result<AdlScore, HarnessError> {
    let scores: Vec<f64> = records.iter().filter_map(|r| r.score).collect();
    if scores.is_empty() {
        return Err(HarnessError::NoScores);
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    let ratios: Vec<f64> = records
        .iter()
        .filter(|r| r.human_time_s > 0.0)
        .map(|r| r.reglove_time_s / r.human_time_s)
        .collect();
    let mean_time_ratio = if ratios.is_empty() {
        f64::NAN
    } else {
        ratios.iter().sum::<f64>() / ratios.len() as f64
    };
    Ok(AdlScore {
        mean_score: mean,
        std_score: var.sqrt(),
        n: scores.len(),
        mean_time_ratio,
    })
}

/// Reads a YCB point sheet: `Object, Points Awarded, Points Possible`
/// (snake_case headers also accepted).
pub fn parse_ycb_csv<R: Read>(input: R) -> Result<Vec<YcbTrial>, HarnessError> {
    let mut rdr = reader(input);
    let cols = columns(&mut rdr)?;
    let name = cols.require(&["Object", "object_name", "Object Name"])?;
    let awarded = cols.require(&["Points Awarded", "points_awarded", "Points"])?;
    let possible = cols.require(&["Points Possible", "points_possible", "Max Points"])?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let any = (0.0, f64::INFINITY);
        let points_possible = required(number(&rec, possible, row, "points_possible", any)?, row, "points_possible")?;
        if points_possible <= 0.0 {
            return Err(HarnessError::MalformedNumber {
                row,
                column: "points_possible".into(),
                reason: "must be > 0".into(),
            });
        }
        let points_awarded = required(
            number(&rec, awarded, row, "points_awarded", (0.0, points_possible))?,
            row,
            "points_awarded",
        )?;
        out.push(YcbTrial {
            object_name: rec.get(name).unwrap_or("").to_string(),
            points_awarded,
            points_possible,
        });
    }
    Ok(out)
}

pub fn load_ycb_csv(path: &Path) -> Result<Vec<YcbTrial>, HarnessError> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    parse_ycb_csv(file)
}

pub fn score_ycb(trials: &[YcbTrial]) -> Result<YcbScore, HarnessError> {
    if trials.is_empty() {
        return Err(HarnessError::EmptyTrials);
    }
    let points: f64 = trials.iter().map(|t| t.points_awarded).sum();
    let possible: f64 = trials.iter().map(|t| t.points_possible).sum();
    Ok(YcbScore {
        success_rate_pct: 100.0 * points / possible,
        points,
        possible,
        trials: trials.len(),
    })
}
