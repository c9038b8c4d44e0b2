//! Seeded synthetic data: lagged pollutant/case pairs, a delayed-response
//! training task, demo rasters, and a hand-built model whose risk rises
//! monotonically with one input.

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::ingest::{BBox, GeoGrid, GridSeries, RegionMask, ScalarSeries, SeriesKind};
use crate::lstm::{FeatureMatrix, LstmModel, Sample, TargetMatrix};

fn std_normal() -> Normal<f64> {
    Normal::new(0.0, 1.0).expect("unit normal")
}

fn population_std(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Bucket-level pollutant signal and a case series that follows it `lag`
/// buckets later: `cases[t] = 40 + 12 * pollutant[t - lag] + noise`.
///
/// Cases before `lag` are drawn independently. `noise_frac` scales Gaussian
/// noise relative to the standard deviation of the lagged signal.
pub fn lagged_pair(n_buckets: usize, lag: usize, noise_frac: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = std_normal();
    let pollutant: Vec<f64> = (0..n_buckets).map(|_| 5.0 + normal.sample(&mut rng)).collect();
    let signal: Vec<f64> = (0..n_buckets)
        .map(|t| {
            let driver = if t >= lag {
                pollutant[t - lag]
            } else {
                5.0 + normal.sample(&mut rng)
            };
            40.0 + 12.0 * driver
        })
        .collect();
    let sigma = noise_frac * population_std(&signal);
    let cases = signal.iter().map(|s| s + sigma * normal.sample(&mut rng)).collect();
    (pollutant, cases)
}

/// Samples for a delayed-response task: a smooth random driver `x` and a
/// target `y_t = x_{t - delay}` (zero before the delay has elapsed).
pub fn delayed_response_samples(n_samples: usize, steps: usize, delay: usize, seed: u64) -> Result<Vec<Sample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = std_normal();
    (0..n_samples)
        .map(|_| {
            // AR(1) driver keeps neighbouring steps related, like bucketed means.
            let mut x = Vec::with_capacity(steps);
            let mut prev = 0.0;
            for _ in 0..steps {
                prev = 0.6 * prev + 0.5 * normal.sample(&mut rng);
                x.push(prev);
            }
            let y: Vec<f64> = (0..steps)
                .map(|t| if t >= delay { x[t - delay] } else { 0.0 })
                .collect();
            Ok((
                FeatureMatrix::from_rows(vec!["no2".into()], vec![x])?,
                TargetMatrix::from_rows(vec![y])?,
            ))
        })
        .collect()
}

/// Model with one hidden unit per output cell whose output is strictly
/// increasing in source `driver` and ignores every other source.
///
/// The input, forget and output gates are pinned open by large biases, so
/// the memory accumulates `tanh(weight * x_t)` and the projection is
/// positive.
pub fn monotone_model(n_sources: usize, driver: usize, cells: usize) -> Result<LstmModel> {
    let mut m = LstmModel::zeros(n_sources, cells, cells)?;
    let width = n_sources + cells;
    let p = &mut m.params;
    for k in 0..cells {
        p.b_i[k] = 12.0;
        p.b_f[k] = 12.0;
        p.b_o[k] = 12.0;
        // Cells differ in sensitivity so the maps are not uniform.
        p.w_c[k * width + driver] = 0.4 + 0.2 * k as f64 / cells.max(1) as f64;
        p.b_c[k] = -0.3;
        p.w_y[k * cells + k] = 2.5;
        p.b_y[k] = -1.0;
    }
    Ok(m)
}

/// A demo region: a daily raster series over `days` days with sparse
/// nodata, a region mask covering the central cells, and a daily case
/// series that echoes the regional pollutant `lag_buckets` five-day windows
/// later.
pub struct DemoRegion {
    pub rasters: GridSeries,
    pub mask: RegionMask,
    pub cases: ScalarSeries,
}

pub fn demo_region(
    name: &str,
    start: NaiveDate,
    days: usize,
    lag_buckets: usize,
    window_days: usize,
    seed: u64,
) -> Result<DemoRegion> {
    const ROWS: usize = 4;
    const COLS: usize = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = std_normal();
    let n_buckets = days.div_ceil(window_days);
    // One level per five-day window, in mol/m² scale.
    let level: Vec<f64> = (0..n_buckets)
        .map(|_| 1.0e-4 * (1.5 + 0.4 * normal.sample(&mut rng)).max(0.2))
        .collect();
    let bbox = BBox::new(44.0, 46.5, 8.0, 11.5)?;
    let mut frames = Vec::with_capacity(days);
    for d in 0..days {
        // Satellites miss some days entirely.
        if rng.random_bool(0.08) {
            continue;
        }
        let base = level[d / window_days];
        let mut values = Vec::with_capacity(ROWS * COLS);
        let mut nodata = Vec::with_capacity(ROWS * COLS);
        for cell in 0..ROWS * COLS {
            let spatial = 1.0 + 0.05 * (cell % COLS) as f64;
            values.push(base * spatial);
            nodata.push(rng.random_bool(0.1));
        }
        frames.push((
            start + Duration::days(d as i64),
            GeoGrid::new(ROWS, COLS, bbox, values, nodata)?,
        ));
    }
    let rasters = GridSeries::new(frames)?;
    let mask = RegionMask::from_indices(name, ROWS, COLS, &[5, 6, 9, 10])?;

    let points = (0..days)
        .map(|d| {
            let b = d / window_days;
            let driver = if b >= lag_buckets {
                level[b - lag_buckets]
            } else {
                1.5e-4
            };
            let expected = 2.0e6 * driver;
            let jitter = 1.0 + 0.05 * normal.sample(&mut rng);
            (start + Duration::days(d as i64), (expected * jitter).round().max(0.0))
        })
        .collect();
    let cases = ScalarSeries::new(points, SeriesKind::NewCases)?;
    Ok(DemoRegion { rasters, mask, cases })
}
