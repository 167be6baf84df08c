//! ADL and YCB ingestion and scoring against spreadsheet-style oracles.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reglove_core::harness::{
    load_adl_csv, load_ycb_csv, parse_adl_csv, parse_ycb_csv, score_adl, score_ycb, AdlRecord,
    HarnessError, YcbTrial,
};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

/// Scores in quarter points, so the oracle works in exact integers.
fn quarter_oracle(quarters: &[i64]) -> (f64, f64) {
    let n = quarters.len() as i64;
    let s: i64 = quarters.iter().sum();
    let ss: i64 = quarters.iter().map(|q| q * q).sum();
    let mean = s as f64 / (4 * n) as f64;
    // n^2 var = n ss - s^2, in quarter units squared
    let var = (n * ss - s * s) as f64 / (16 * n * n) as f64;
    (mean, var.sqrt())
}

fn adl_csv(rows: &[(String, f64, f64, Option<f64>)]) -> String {
    let mut out = String::from("Task Category,Specific Task,Human Time (s),ReGlove Time (s),Score (0-3),Failure Rate (%)\n");
    for (i, (task, h, g, s)) in rows.iter().enumerate() {
        let cat = if i % 5 == 0 { "Group" } else { "" };
        let s = s.map(|s| s.to_string()).unwrap_or_default();
        out.push_str(&format!("{cat},{task},{h},{g},{s},0\n"));
    }
    out
}

#[test]
fn both_adl_header_variants_parse() {
    let table = load_adl_csv(&data("adl_sample.csv")).unwrap();
    assert_eq!(table.len(), 27);
    assert_eq!(table[1].task_category, "Kitchen");
    assert!(table.iter().all(|r| r.score.is_some()));

    let plot = load_adl_csv(&data("adl_plot_sample.csv")).unwrap();
    assert_eq!(plot.len(), 27);
    assert!(plot.iter().all(|r| r.score.is_none()));
    assert_eq!(plot[0].specific_task, table[0].specific_task);

    let one = parse_adl_csv(
        "Tasks,Avg Human Execution Time (s),Avg ReGlove Execution Time (s)\nFill water,4.1,9.8\n".as_bytes(),
    )
    .unwrap();
    assert_eq!(one[0].specific_task, "Fill water");
    assert_eq!((one[0].human_time_s, one[0].reglove_time_s), (4.1, 9.8));
}

#[test]
fn unknown_columns_are_ignored() {
    let text = "Notes,Tasks,Extra,Avg Human Execution Time (s),Avg ReGlove Execution Time (s)\nx,Pour,y,2,5\n";
    let r = parse_adl_csv(text.as_bytes()).unwrap();
    assert_eq!(r[0].specific_task, "Pour");
}

#[test]
fn synthetic_27_row_set_reproduces_exactly() {
    let quarters: Vec<i64> = (0..27).map(|i| [12, 10, 8, 12, 11, 6, 12, 9, 12][i % 9]).collect();
    let rows: Vec<_> = quarters
        .iter()
        .enumerate()
        .map(|(i, q)| (format!("task {i}"), 2.0 + i as f64, 4.0 + 2.0 * i as f64, Some(*q as f64 / 4.0)))
        .collect();
    let recs = parse_adl_csv(adl_csv(&rows).as_bytes()).unwrap();
    let s = score_adl(&recs).unwrap();
    let (mean, sd) = quarter_oracle(&quarters);
    assert_eq!(s.n, 27);
    assert!((s.mean_score - mean).abs() < 1e-12);
    assert!((s.std_score - sd).abs() < 1e-12);
    assert!((s.mean_time_ratio - 2.0).abs() < 1e-12);
}

#[test]
fn adl_small_cases() {
    let rec = |s: f64| AdlRecord {
        task_category: String::new(),
        specific_task: "t".into(),
        human_time_s: 1.0,
        reglove_time_s: 2.0,
        score: Some(s),
        failure_rate_pct: None,
    };
    let all3 = score_adl(&vec![rec(3.0); 27]).unwrap();
    assert_eq!((all3.mean_score, all3.std_score), (3.0, 0.0));
    let two = score_adl(&[rec(2.0), rec(3.0)]).unwrap();
    assert_eq!((two.mean_score, two.std_score), (2.5, 0.5));
}

#[test]
fn adl_errors() {
    assert!(matches!(parse_adl_csv("".as_bytes()), Err(HarnessError::MissingColumn(_))));
    assert!(matches!(
        parse_adl_csv("Name,Human Time (s),ReGlove Time (s)\n".as_bytes()),
        Err(HarnessError::MissingColumn(_))
    ));
    let over = adl_csv(&[("a".into(), 1.0, 2.0, Some(3.5))]);
    match parse_adl_csv(over.as_bytes()) {
        Err(HarnessError::MalformedNumber { row, column, .. }) => {
            assert_eq!((row, column.as_str()), (1, "score"))
        }
        other => panic!("{other:?}"),
    }
    let neg = adl_csv(&[("a".into(), 1.0, 2.0, Some(-0.5))]);
    assert!(parse_adl_csv(neg.as_bytes()).is_err());
    let text = "Tasks,Avg Human Execution Time (s),Avg ReGlove Execution Time (s)\nPour,fast,3\n";
    assert!(matches!(parse_adl_csv(text.as_bytes()), Err(HarnessError::MalformedNumber { .. })));
    let unscored = parse_adl_csv(adl_csv(&[("a".into(), 1.0, 2.0, None)]).as_bytes()).unwrap();
    assert!(matches!(score_adl(&unscored), Err(HarnessError::NoScores)));
}

#[test]
fn ycb_sample_sheet() {
    let trials = load_ycb_csv(&data("ycb_sample.csv")).unwrap();
    assert_eq!(trials.len(), 5);
    let s = score_ycb(&trials).unwrap();
    assert_eq!((s.points, s.possible), (215.5, 260.5));
    assert!((s.success_rate_pct - 82.73).abs() <= 0.01);
    // rounding must not drift to a neighbouring value
    assert!((s.success_rate_pct - 82.71).abs() > 0.01);
}

#[test]
fn ycb_header_variants_and_errors() {
    let snake = "object_name,points_awarded,points_possible\nmug,4,4\ncoin,0,4\n";
    let s = score_ycb(&parse_ycb_csv(snake.as_bytes()).unwrap()).unwrap();
    assert_eq!(s.success_rate_pct, 50.0);
    assert!(matches!(score_ycb(&[]), Err(HarnessError::EmptyTrials)));
    assert!(parse_ycb_csv("Object,Points Awarded,Points Possible\nmug,5,4\n".as_bytes()).is_err());
    assert!(parse_ycb_csv("Object,Points Awarded\nmug,5\n".as_bytes()).is_err());
}

#[test]
fn scoring_matches_oracle_on_random_datasets() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..100 {
        let n = rng.random_range(1..60);
        let quarters: Vec<i64> = (0..n).map(|_| rng.random_range(0..=12)).collect();
        let times: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.random_range(1..200) as f64 / 10.0, rng.random_range(1..600) as f64 / 10.0))
            .collect();
        let rows: Vec<_> = quarters
            .iter()
            .zip(&times)
            .enumerate()
            .map(|(i, (q, (h, g)))| (format!("t{i}"), *h, *g, Some(*q as f64 / 4.0)))
            .collect();
        let s = score_adl(&parse_adl_csv(adl_csv(&rows).as_bytes()).unwrap()).unwrap();
        let (mean, sd) = quarter_oracle(&quarters);
        assert!((s.mean_score - mean).abs() < 1e-12);
        assert!((s.std_score - sd).abs() < 1e-9);
        let ratio = times.iter().map(|(h, g)| g / h).sum::<f64>() / n as f64;
        assert!((s.mean_time_ratio - ratio).abs() < 1e-9);

        // YCB in half points: exact integer sums
        let trials: Vec<YcbTrial> = (0..rng.random_range(1..20))
            .map(|i| {
                let possible = rng.random_range(1..=40);
                YcbTrial {
                    object_name: format!("o{i}"),
                    points_awarded: rng.random_range(0..=possible) as f64 / 2.0,
                    points_possible: possible as f64 / 2.0,
                }
            })
            .collect();
        let got: i64 = trials.iter().map(|t| (t.points_awarded * 2.0) as i64).sum();
        let max: i64 = trials.iter().map(|t| (t.points_possible * 2.0) as i64).sum();
        let y = score_ycb(&trials).unwrap();
        assert!((y.success_rate_pct - 100.0 * got as f64 / max as f64).abs() < 1e-9);
    }
}
