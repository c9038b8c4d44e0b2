//! Browser bindings behind `www/index.html`. Every export takes plain numbers
//! or text and returns a JSON document; the `*_json` functions are the same
//! operations for native callers.

use chrono::NaiveDate;
use lagrisk_core::analytics::{lag_sweep, scatter_series, LagCorrelationReport, PccTable, ScatterSeries};
use lagrisk_core::ingest::{align, BBox, BucketedSeries};
use lagrisk_core::lstm::FeatureMatrix;
use lagrisk_core::risk::{
    evaluate_scenario, GridSpec, Override, OverrideMode, Resolution, RiskMap, RiskThresholds, Scenario, ScenarioSpec,
};
use lagrisk_core::synth::{lagged_pair, monotone_model};
use lagrisk_core::{Error, Result};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const WINDOW_DAYS: usize = 5;
const DEMO_BUCKETS: usize = 40;
const DEMO_STEPS: usize = 12;
const DEMO_SIDE: usize = 4;

/// Published PCC-by-delay columns for Lombardy and Wuhan.
pub const PUBLISHED_PCC_TABLE: &str = include_str!("../../../fixtures/pcc_lombardy_wuhan.csv");

fn start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 2, 1).expect("valid date")
}

#[derive(Serialize)]
pub struct LagExploration {
    pub pollutant: Vec<f64>,
    pub cases: Vec<f64>,
    pub report: LagCorrelationReport,
    /// Points behind the winning delay.
    pub scatter: ScatterSeries,
}

/// Synthetic pollutant/case pair with a known lag, swept over delays.
pub fn explore_lag(lag: usize, noise: f64, seed: u64, max_delay: usize, min_overlap: usize) -> Result<LagExploration> {
    if !(0.0..=10.0).contains(&noise) {
        return Err(Error::Validation(format!("noise fraction {noise} outside [0, 10]")));
    }
    let (pollutant, cases) = lagged_pair(DEMO_BUCKETS, lag, noise, seed);
    let bucketed = |v: &[f64]| {
        let means: Vec<Option<f64>> = v.iter().copied().map(Some).collect();
        BucketedSeries::from_means(start(), WINDOW_DAYS, &means)
    };
    let pair = align(&bucketed(&pollutant)?, &bucketed(&cases)?)?;
    let report = lag_sweep(&pair, max_delay, min_overlap)?;
    let scatter = scatter_series(&pair, report.best_delay_units, report.min_overlap)?;
    Ok(LagExploration {
        pollutant,
        cases,
        report,
        scatter,
    })
}

#[derive(Serialize)]
pub struct WhatIf {
    pub rows: usize,
    pub cols: usize,
    pub dates: Vec<NaiveDate>,
    pub baseline_mean_risk: Vec<f64>,
    pub scenario_mean_risk: Vec<f64>,
    pub baseline: Vec<RiskMap>,
    pub scenario: Vec<RiskMap>,
}

/// Demo features: `no2` and a slowly declining `mobility` index.
pub fn demo_baseline() -> FeatureMatrix {
    FeatureMatrix::from_rows(
        vec!["no2".into(), "mobility".into()],
        vec![
            (0..DEMO_STEPS).map(|t| 1.0 + 0.3 * (t as f64 * 0.7).sin()).collect(),
            (0..DEMO_STEPS).map(|t| 1.0 - 0.04 * t as f64).collect(),
        ],
    )
    .expect("demo features are well formed")
}

/// Risk on a 4 x 4 city grid from a model driven by mobility, before and
/// after scaling mobility by `factor` over steps `first..=last`.
pub fn what_if(factor: f64, first: usize, last: usize, low: f64, medium: f64) -> Result<WhatIf> {
    let thresholds = RiskThresholds::new(low, medium)?;
    let grid = GridSpec {
        rows: DEMO_SIDE,
        cols: DEMO_SIDE,
        bbox: BBox::new(45.40, 45.56, 9.08, 9.28)?,
        resolution: Resolution::Micro,
        start_date: start(),
        step_days: WINDOW_DAYS,
    };
    let model = monotone_model(2, 1, grid.cells())?;
    let baseline = demo_baseline();
    let spec = ScenarioSpec {
        description: format!("mobility x{factor} over steps {first}..={last}"),
        overrides: vec![Override {
            source: "mobility".into(),
            steps: Some([first, last]),
            mode: OverrideMode::Mul,
            value: factor,
        }],
    };
    let base = evaluate_scenario(
        &model,
        &Scenario {
            baseline: baseline.clone(),
            spec: ScenarioSpec::default(),
        },
        &grid,
        thresholds,
    )?;
    let scen = evaluate_scenario(&model, &Scenario { baseline, spec }, &grid, thresholds)?;
    Ok(WhatIf {
        rows: grid.rows,
        cols: grid.cols,
        dates: (0..DEMO_STEPS).map(|t| grid.date_of(t)).collect(),
        baseline_mean_risk: base.mean_risk,
        scenario_mean_risk: scen.mean_risk,
        baseline: base.maps,
        scenario: scen.maps,
    })
}

/// Best delay per region of a `delay,<region>,...` CSV table.
pub fn best_delays(csv: &str, window_days: usize) -> Result<Vec<lagrisk_core::analytics::BestDelay>> {
    PccTable::parse(csv, "table")?.best_delays(window_days)
}

fn to_json<T: Serialize>(r: Result<T>) -> std::result::Result<String, String> {
    r.map(|v| serde_json::to_string(&v).expect("serializes"))
        .map_err(|e| e.to_string())
}

pub fn explore_lag_json(
    lag: usize,
    noise: f64,
    seed: u64,
    max_delay: usize,
    min_overlap: usize,
) -> std::result::Result<String, String> {
    to_json(explore_lag(lag, noise, seed, max_delay, min_overlap))
}

pub fn what_if_json(
    factor: f64,
    first: usize,
    last: usize,
    low: f64,
    medium: f64,
) -> std::result::Result<String, String> {
    to_json(what_if(factor, first, last, low, medium))
}

pub fn best_delays_json(csv: &str, window_days: usize) -> std::result::Result<String, String> {
    to_json(best_delays(csv, window_days))
}

#[wasm_bindgen(js_name = exploreLag)]
pub fn explore_lag_js(
    lag: usize,
    noise: f64,
    seed: u32,
    max_delay: usize,
    min_overlap: usize,
) -> std::result::Result<String, JsError> {
    explore_lag_json(lag, noise, seed as u64, max_delay, min_overlap).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = whatIf)]
pub fn what_if_js(
    factor: f64,
    first: usize,
    last: usize,
    low: f64,
    medium: f64,
) -> std::result::Result<String, JsError> {
    what_if_json(factor, first, last, low, medium).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = bestDelays)]
pub fn best_delays_js(csv: &str, window_days: usize) -> std::result::Result<String, JsError> {
    best_delays_json(csv, window_days).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = publishedPccTable)]
pub fn published_pcc_table() -> String {
    PUBLISHED_PCC_TABLE.to_string()
}
