use chrono::{Duration, NaiveDate};
use lagrisk_core::analytics::{best_delay_from_table, lag_sweep, pearson};
use lagrisk_core::ingest::{
    align, bucket_mean, grid_series_to_json, grid_stats, parse_grid_series, regional_stats, subset_region, BBox,
    BucketedSeries, GeoGrid, GridSeries, RegionMask, ScalarSeries, SeriesKind,
};
use lagrisk_core::lstm::{loss, FeatureMatrix, LstmModel, TargetMatrix};
use lagrisk_core::risk::{
    apply_scenario, squash, Override, OverrideMode, RiskLevel, RiskThresholds, Scenario, ScenarioSpec,
};
use proptest::prelude::*;

fn bbox() -> BBox {
    BBox::new(-10.0, 10.0, 100.0, 120.0).unwrap()
}

fn grid_strategy() -> impl Strategy<Value = GeoGrid> {
    (1usize..6, 1usize..6).prop_flat_map(|(rows, cols)| {
        let n = rows * cols;
        (
            prop::collection::vec(-1e3f64..1e3, n),
            prop::collection::vec(prop::bool::weighted(0.2), n),
        )
            .prop_map(move |(values, nodata)| GeoGrid::new(rows, cols, bbox(), values, nodata).unwrap())
    })
}

fn two_pass(values: &[f64]) -> (f64, f64, f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (min, max, mean, var.sqrt())
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #[test]
    fn stats_match_two_pass(grid in grid_strategy()) {
        let valid: Vec<f64> = (0..grid.len()).filter_map(|i| grid.value(i)).collect();
        let all = RegionMask::all("all", grid.rows(), grid.cols()).unwrap();
        match regional_stats(&grid, &all) {
            Ok(s) => {
                let (min, max, mean, std) = two_pass(&valid);
                prop_assert!(s.min <= s.mean && s.mean <= s.max);
                prop_assert_eq!(s.min, min);
                prop_assert_eq!(s.max, max);
                prop_assert!(close(s.mean, mean, 1e-12));
                prop_assert!(close(s.std, std, 1e-12));
                prop_assert_eq!(Some(s), grid_stats(&grid));
            }
            Err(_) => prop_assert!(valid.is_empty()),
        }
    }

    #[test]
    fn subset_is_idempotent(grid in grid_strategy(), seed in any::<u64>()) {
        let n = grid.len();
        let mut inside: Vec<bool> = (0..n).map(|i| (seed >> (i % 64)) & 1 == 1).collect();
        inside[0] = true;
        let mask = RegionMask::new("m", grid.rows(), grid.cols(), inside).unwrap();
        let once = subset_region(&grid, &mask).unwrap();
        prop_assert_eq!(subset_region(&once, &mask).unwrap(), once);
    }

    #[test]
    fn unit_window_reproduces_daily_values(values in prop::collection::vec(0f64..1e4, 1..60), gaps in any::<u64>()) {
        let start: NaiveDate = "2020-01-01".parse().unwrap();
        let points: Vec<(NaiveDate, f64)> = values
            .iter()
            .enumerate()
            .filter(|(i, _)| *i == 0 || (gaps >> (i % 64)) & 1 == 0)
            .map(|(i, v)| (start + Duration::days(i as i64), *v))
            .collect();
        let series = ScalarSeries::new(points.clone(), SeriesKind::PollutantMean).unwrap();
        let b = bucket_mean(&series, 1, None).unwrap();
        let present: Vec<(NaiveDate, f64)> = b.buckets.iter().filter_map(|k| k.mean.map(|m| (k.start_date, m))).collect();
        prop_assert_eq!(present, points);
    }

    #[test]
    fn raster_json_round_trip(grids in prop::collection::vec(grid_strategy(), 1..4)) {
        let layout = grids[0].clone();
        let start: NaiveDate = "2020-01-01".parse().unwrap();
        let frames = grids
            .iter()
            .enumerate()
            .map(|(i, g)| {
                // reuse the first layout so frames are homogeneous
                let values: Vec<f64> = (0..layout.len()).map(|k| g.values().get(k).copied().unwrap_or(1.0)).collect();
                let values: Vec<f64> = values.into_iter().map(|v| if v.is_nan() { 0.5 } else { v }).collect();
                let nodata = (0..layout.len()).map(|k| g.nodata_mask().get(k).copied().unwrap_or(false)).collect();
                (start + Duration::days(i as i64), GeoGrid::new(layout.rows(), layout.cols(), bbox(), values, nodata).unwrap())
            })
            .collect();
        let gs = GridSeries::new(frames).unwrap();
        prop_assert_eq!(parse_grid_series(&grid_series_to_json(&gs)).unwrap(), gs);
    }

    #[test]
    fn pearson_symmetric_and_affine_invariant(
        pairs in prop::collection::vec((-100f64..100.0, -100f64..100.0), 3..80),
        a in 0.01f64..50.0,
        b in -100f64..100.0,
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if let (Ok(rxy), Ok(ryx)) = (pearson(&x, &y), pearson(&y, &x)) {
            prop_assert!((rxy - ryx).abs() <= 1e-12);
            prop_assert!(rxy.abs() <= 1.0 + 1e-12);
            let ax: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            prop_assert!((pearson(&ax, &y).unwrap() - rxy).abs() <= 1e-9);
        }
    }

    #[test]
    fn best_delay_agrees_with_sweep(values in prop::collection::vec(0f64..100.0, 12..30), lag in 0usize..4) {
        let anchor: NaiveDate = "2020-01-01".parse().unwrap();
        let n = values.len();
        let p: Vec<Option<f64>> = values.iter().map(|v| Some(*v)).collect();
        let c: Vec<Option<f64>> = (0..n).map(|t| Some(if t >= lag { values[t - lag] } else { 50.0 + t as f64 })).collect();
        let pair = align(
            &BucketedSeries::from_means(anchor, 5, &p).unwrap(),
            &BucketedSeries::from_means(anchor, 5, &c).unwrap(),
        ).unwrap();
        if let Ok(report) = lag_sweep(&pair, 6, 3) {
            let (d, r) = best_delay_from_table(&report.pcc_by_delay()).unwrap();
            prop_assert_eq!(d, report.best_delay_units);
            prop_assert_eq!(r, report.best_pcc);
            prop_assert!(report.entries.iter().all(|e| e.pcc <= report.best_pcc && e.pcc.abs() <= 1.0));
            prop_assert_eq!(report.best_delay_days, d * 5);
        }
    }

    #[test]
    fn loss_is_non_negative(
        pairs in prop::collection::vec((-10f64..10.0, -10f64..10.0), 1..20)
    ) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let ya = TargetMatrix::from_rows(vec![a.clone()]).unwrap();
        let yb = TargetMatrix::from_rows(vec![b.clone()]).unwrap();
        let l = loss(&ya, &yb).unwrap();
        prop_assert!(l >= 0.0);
        prop_assert_eq!(l == 0.0, a == b);
    }

    #[test]
    fn forward_is_stateless(seed in any::<u64>(), steps in 1usize..8) {
        let model = LstmModel::init(2, 3, 2, seed).unwrap();
        let x = FeatureMatrix::unlabeled(vec![
            (0..steps).map(|t| (t as f64 * 0.37).sin()).collect(),
            (0..steps).map(|t| (t as f64 * 0.11).cos()).collect(),
        ]).unwrap();
        let first = model.forward(&x).unwrap();
        prop_assert_eq!(first.shape(), (2, steps));
        prop_assert_eq!(model.forward(&x).unwrap(), first.clone());
        prop_assert_eq!(model.predict(&x).unwrap(), first);
    }

    #[test]
    fn squash_is_monotone(a in -30f64..30.0, gap in 1e-6f64..10.0) {
        prop_assert!(squash(a) < squash(a + gap));
        let r = squash(a);
        prop_assert!((0.0..=1.0).contains(&r));
    }

    #[test]
    fn levels_are_pure_threshold_functions(risk in 0f64..=1.0, lo in 0.05f64..0.45, span in 0.05f64..0.5) {
        let t = RiskThresholds::new(lo, (lo + span).min(0.95)).unwrap();
        let expected = if risk <= t.low_upper {
            RiskLevel::Low
        } else if risk <= t.medium_upper {
            RiskLevel::Medium
        } else {
            RiskLevel::High
        };
        prop_assert_eq!(t.level(risk), expected);
        prop_assert_eq!(t.level(t.low_upper), RiskLevel::Low);
        prop_assert_eq!(t.level(t.medium_upper), RiskLevel::Medium);
    }

    #[test]
    fn scenario_never_touches_baseline(mul in 0f64..2.0, first in 0usize..5, len in 0usize..5) {
        let baseline = FeatureMatrix::from_rows(
            vec!["no2".into(), "mobility".into()],
            vec![vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![0.9; 5]],
        ).unwrap();
        let before = baseline.clone();
        let scenario = Scenario {
            baseline,
            spec: ScenarioSpec {
                description: String::new(),
                overrides: vec![Override {
                    source: "mobility".into(),
                    steps: Some([first, (first + len).min(4)]),
                    mode: OverrideMode::Mul,
                    value: mul,
                }],
            },
        };
        let _ = apply_scenario(&scenario);
        prop_assert_eq!(scenario.baseline, before);
    }
}
