//! Loading, validating, subsetting, bucketing and aligning input data.

mod formats;
mod grid;
mod series;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use formats::{
    case_series_to_csv, grid_series_to_json, load_case_series, load_grid_series, load_region_mask, parse_case_series,
    parse_grid_series, parse_region_mask, region_mask_to_json, RasterFormat,
};
pub use grid::{
    grid_series_to_regional_series, grid_stats, regional_stats, subset_region, BBox, GeoGrid, GridSeries, RegionMask,
    RegionalStats,
};
pub use series::{
    align, bucket_mean, AlignedPair, Bucket, BucketedSeries, ScalarSeries, SeriesKind, DEFAULT_WINDOW_DAYS,
};

use crate::error::{Error, Result};

pub const BUNDLE_FORMAT_VERSION: u32 = 1;

/// How empty buckets are treated before alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapFill {
    #[default]
    None,
    Linear,
}

/// Everything the correlation stage needs for one region, persisted by
/// `lagrisk ingest`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionBundle {
    pub format_version: u32,
    pub region: String,
    pub window_days: usize,
    pub anchor: NaiveDate,
    pub gap_fill: GapFill,
    pub pollutant_daily: ScalarSeries,
    pub cases_daily: ScalarSeries,
    pub pair: AlignedPair,
}

impl RegionBundle {
    /// Regional mean of the raster per date, both series bucketed from a
    /// common anchor (default: the earlier of the two first dates), then
    /// aligned.
    pub fn build(
        rasters: &GridSeries,
        cases: &ScalarSeries,
        mask: &RegionMask,
        window_days: usize,
        anchor: Option<NaiveDate>,
        gap_fill: GapFill,
    ) -> Result<Self> {
        if mask.shape() != rasters.shape() {
            let (mr, mc) = mask.shape();
            let (gr, gc) = rasters.shape();
            return Err(Error::shape(
                format!("raster grid {gr}x{gc}"),
                format!("mask `{}` {mr}x{mc}", mask.name()),
            ));
        }
        let pollutant_daily = grid_series_to_regional_series(rasters, mask)?;
        let anchor = match anchor {
            Some(a) => a,
            None => match (pollutant_daily.first_date(), cases.first_date()) {
                (Some(a), Some(b)) => a.min(b),
                _ => return Err(Error::Empty("no dated observations".into())),
            },
        };
        let mut p = bucket_mean(&pollutant_daily, window_days, Some(anchor))?;
        let mut c = bucket_mean(cases, window_days, Some(anchor))?;
        if gap_fill == GapFill::Linear {
            p = p.interpolate_linear();
            c = c.interpolate_linear();
        }
        let pair = align(&p, &c)?;
        Ok(RegionBundle {
            format_version: BUNDLE_FORMAT_VERSION,
            region: mask.name().to_string(),
            window_days,
            anchor,
            gap_fill,
            pollutant_daily,
            cases_daily: cases.clone(),
            pair,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let b: RegionBundle = serde_json::from_str(text)?;
        if b.format_version != BUNDLE_FORMAT_VERSION {
            return Err(Error::UnsupportedFormat(format!(
                "bundle format_version {}",
                b.format_version
            )));
        }
        Ok(b)
    }
}
