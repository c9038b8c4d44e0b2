//! Daily scalar series, fixed-window bucketing and pollutant/case alignment.

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_WINDOW_DAYS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    PollutantMean,
    NewCases,
    OtherCovariate,
}

/// Date-indexed scalar values, strictly increasing in date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScalarSeriesRepr", into = "ScalarSeriesRepr")]
pub struct ScalarSeries {
    points: Vec<(NaiveDate, f64)>,
    kind: SeriesKind,
}

impl ScalarSeries {
    pub fn new(mut points: Vec<(NaiveDate, f64)>, kind: SeriesKind) -> Result<Self> {
        points.sort_by_key(|(d, _)| *d);
        for w in points.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::Inconsistent(format!("duplicate date {}", w[0].0)));
            }
        }
        for (d, v) in &points {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("series value on {d}")));
            }
            if kind == SeriesKind::NewCases && *v < 0.0 {
                return Err(Error::Validation(format!("negative case count {v} on {d}")));
            }
        }
        Ok(ScalarSeries { points, kind })
    }

    pub fn points(&self) -> &[(NaiveDate, f64)] {
        &self.points
    }

    pub fn kind(&self) -> SeriesKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.points.first().map(|p| p.0)
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.1).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct ScalarSeriesRepr {
    kind: SeriesKind,
    points: Vec<(NaiveDate, f64)>,
}

impl TryFrom<ScalarSeriesRepr> for ScalarSeries {
    type Error = Error;

    fn try_from(r: ScalarSeriesRepr) -> Result<Self> {
        ScalarSeries::new(r.points, r.kind)
    }
}

impl From<ScalarSeries> for ScalarSeriesRepr {
    fn from(s: ScalarSeries) -> Self {
        ScalarSeriesRepr {
            kind: s.kind,
            points: s.points,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub index: usize,
    pub start_date: NaiveDate,
    /// Mean of the values present in the window; `None` marks a gap.
    pub mean: Option<f64>,
    pub valid_count: usize,
    /// True when `mean` was filled by interpolation rather than observed.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub interpolated: bool,
}

impl Bucket {
    pub fn is_gap(&self) -> bool {
        self.mean.is_none()
    }
}

/// Consecutive fixed-width window means anchored at bucket 0's start date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketedSeries {
    pub window_days: usize,
    pub buckets: Vec<Bucket>,
}

impl BucketedSeries {
    pub fn anchor(&self) -> NaiveDate {
        self.buckets[0].start_date
    }

    pub fn len(&self) -> usize {
        self.buckets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }

    pub fn means(&self) -> Vec<Option<f64>> {
        self.buckets.iter().map(|b| b.mean).collect()
    }

    /// First and last bucket index holding a value.
    pub fn occupied_range(&self) -> Option<(usize, usize)> {
        let first = self.buckets.iter().find(|b| !b.is_gap())?.index;
        let last = self.buckets.iter().rev().find(|b| !b.is_gap())?.index;
        Some((first, last))
    }

    /// Builds a series directly from per-bucket means (`None` = gap).
    ///
    /// Present buckets are recorded with `valid_count = window_days`.
    pub fn from_means(anchor: NaiveDate, window_days: usize, means: &[Option<f64>]) -> Result<Self> {
        if window_days == 0 {
            return Err(Error::Validation("window_days must be at least 1".into()));
        }
        if means.is_empty() {
            return Err(Error::Empty("no buckets".into()));
        }
        let buckets = means
            .iter()
            .enumerate()
            .map(|(i, m)| {
                if let Some(v) = m {
                    if !v.is_finite() {
                        return Err(Error::NonFinite(format!("bucket {i}")));
                    }
                }
                Ok(Bucket {
                    index: i,
                    start_date: anchor + Duration::days((i * window_days) as i64),
                    mean: *m,
                    valid_count: if m.is_some() { window_days } else { 0 },
                    interpolated: false,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BucketedSeries { window_days, buckets })
    }

    /// Fills interior gaps linearly from the nearest present neighbours.
    /// Leading and trailing gaps stay empty.
    pub fn interpolate_linear(&self) -> BucketedSeries {
        let mut out = self.clone();
        let present: Vec<usize> = (0..out.buckets.len()).filter(|&i| !out.buckets[i].is_gap()).collect();
        for pair in present.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let (va, vb) = (out.buckets[a].mean.unwrap(), out.buckets[b].mean.unwrap());
            for i in a + 1..b {
                let t = (i - a) as f64 / (b - a) as f64;
                out.buckets[i].mean = Some(va + t * (vb - va));
                out.buckets[i].interpolated = true;
            }
        }
        out
    }
}

/// Averages `series` over consecutive `window_days` windows starting at
/// `start_date` (default: the first date of the series).
///
/// Points dated before the anchor are ignored. Windows with no observations
/// are emitted as gaps.
pub fn bucket_mean(series: &ScalarSeries, window_days: usize, start_date: Option<NaiveDate>) -> Result<BucketedSeries> {
    if window_days == 0 {
        return Err(Error::Validation("window_days must be at least 1".into()));
    }
    let anchor = match start_date.or_else(|| series.first_date()) {
        Some(d) => d,
        None => return Err(Error::Empty("cannot bucket an empty series".into())),
    };
    let in_range: Vec<(usize, f64)> = series
        .points()
        .iter()
        .filter(|(d, _)| *d >= anchor)
        .map(|(d, v)| (((*d - anchor).num_days() as usize) / window_days, *v))
        .collect();
    let Some(&(last_bucket, _)) = in_range.last() else {
        return Err(Error::Empty(format!("no observations on or after {anchor}")));
    };

    let mut sums = vec![0.0; last_bucket + 1];
    let mut counts = vec![0usize; last_bucket + 1];
    for (b, v) in in_range {
        sums[b] += v;
        counts[b] += 1;
    }
    let buckets = sums
        .into_iter()
        .zip(counts)
        .enumerate()
        .map(|(i, (sum, count))| Bucket {
            index: i,
            start_date: anchor + Duration::days((i * window_days) as i64),
            mean: (count > 0).then(|| sum / count as f64),
            valid_count: count,
            interpolated: false,
        })
        .collect();
    Ok(BucketedSeries { window_days, buckets })
}

/// Pollutant and case bucket series trimmed to their common bucket range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedPair {
    pub pollutant: BucketedSeries,
    pub cases: BucketedSeries,
    /// Inclusive bucket-index range shared by both series.
    pub common_range: (usize, usize),
}

impl AlignedPair {
    pub fn window_days(&self) -> usize {
        self.pollutant.window_days
    }

    /// Number of buckets in the common range.
    pub fn span(&self) -> usize {
        self.common_range.1 - self.common_range.0 + 1
    }

    fn pollutant_at(&self, idx: usize) -> Option<f64> {
        self.pollutant.buckets.get(idx - self.common_range.0)?.mean
    }

    fn cases_at(&self, idx: usize) -> Option<f64> {
        self.cases.buckets.get(idx - self.common_range.0)?.mean
    }

    /// Bucket indices inside the common range where either side is a gap.
    pub fn gaps(&self) -> Vec<usize> {
        (self.common_range.0..=self.common_range.1)
            .filter(|&i| self.pollutant_at(i).is_none() || self.cases_at(i).is_none())
            .collect()
    }

    /// Gap-free pairs `(t, pollutant[t], cases[t + delay])` with both
    /// indices inside the common range.
    pub fn pairs_at_delay(&self, delay: usize) -> Vec<(usize, f64, f64)> {
        let (lo, hi) = self.common_range;
        if lo + delay > hi {
            return Vec::new();
        }
        (lo..=hi - delay)
            .filter_map(|t| Some((t, self.pollutant_at(t)?, self.cases_at(t + delay)?)))
            .collect()
    }
}

fn trim(series: &BucketedSeries, lo: usize, hi: usize) -> BucketedSeries {
    BucketedSeries {
        window_days: series.window_days,
        buckets: series.buckets[lo..=hi].to_vec(),
    }
}

/// Intersects the occupied bucket ranges of both series.
pub fn align(pollutant: &BucketedSeries, cases: &BucketedSeries) -> Result<AlignedPair> {
    if pollutant.window_days != cases.window_days {
        return Err(Error::Alignment(format!(
            "window mismatch: pollutant {} days, cases {} days",
            pollutant.window_days, cases.window_days
        )));
    }
    if pollutant.is_empty() || cases.is_empty() {
        return Err(Error::Alignment("cannot align an empty bucket series".into()));
    }
    if pollutant.anchor() != cases.anchor() {
        return Err(Error::Alignment(format!(
            "bucket anchors differ: pollutant {}, cases {}",
            pollutant.anchor(),
            cases.anchor()
        )));
    }
    let (Some((p_lo, p_hi)), Some((c_lo, c_hi))) = (pollutant.occupied_range(), cases.occupied_range()) else {
        return Err(Error::Alignment("one of the series has no observed buckets".into()));
    };
    let lo = p_lo.max(c_lo);
    let hi = p_hi.min(c_hi);
    if lo > hi {
        return Err(Error::Alignment(format!(
            "no overlap: pollutant buckets {p_lo}..={p_hi}, cases buckets {c_lo}..={c_hi}"
        )));
    }
    Ok(AlignedPair {
        pollutant: trim(pollutant, lo, hi),
        cases: trim(cases, lo, hi),
        common_range: (lo, hi),
    })
}
