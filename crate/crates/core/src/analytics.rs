//! Pearson correlation between bucketed pollutant and case series over a
//! sweep of forward delays of the case series.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::AlignedPair;

pub const DEFAULT_MAX_DELAY: usize = 15;
pub const DEFAULT_MIN_OVERLAP: usize = 3;
pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Product-moment correlation coefficient.
///
/// Two passes: means first, then co-moments about them. Fails rather than
/// returning 0 when either input has no variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!(
            "pearson needs equal lengths, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!(
            "{} point(s); need at least 2",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("pearson input".into()));
    }

    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }

    if degenerate(x, sxx) {
        return Err(Error::UndefinedCorrelation("first series has zero variance".into()));
    }
    if degenerate(y, syy) {
        return Err(Error::UndefinedCorrelation("second series has zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Zero variance, or variance indistinguishable from accumulated rounding.
fn degenerate(v: &[f64], sum_sq_dev: f64) -> bool {
    if v.iter().all(|&a| a == v[0]) {
        return true;
    }
    let scale = v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let floor = v.len() as f64 * (8.0 * f64::EPSILON * scale).powi(2);
    sum_sq_dev <= floor
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagEntry {
    pub delay_units: usize,
    pub pcc: f64,
    /// `pcc` rounded to 4 decimals for tabular display.
    pub pcc_display: f64,
    pub n_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedDelay {
    pub delay_units: usize,
    pub n_pairs: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagCorrelationReport {
    pub format_version: u32,
    pub region_name: String,
    pub window_days: usize,
    pub min_overlap: usize,
    pub entries: Vec<LagEntry>,
    /// Delays that were swept but produced no coefficient.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<SkippedDelay>,
    pub best_delay_units: usize,
    pub best_pcc: f64,
    pub best_delay_days: usize,
}

impl LagCorrelationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn pcc_by_delay(&self) -> Vec<(usize, f64)> {
        self.entries.iter().map(|e| (e.delay_units, e.pcc)).collect()
    }

    /// Console table: one row per delay, PCC to four decimals.
    pub fn format_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Region: {}  (window {} days)", self.region_name, self.window_days);
        let _ = writeln!(out, "{:>10}  {:>8}  {:>7}", "Delay unit", "PCC", "n_pairs");
        for e in &self.entries {
            let marker = if e.delay_units == self.best_delay_units {
                " *"
            } else {
                ""
            };
            let _ = writeln!(out, "{:>10}  {:>8.4}  {:>7}{marker}", e.delay_units, e.pcc, e.n_pairs);
        }
        for s in &self.skipped {
            let _ = writeln!(
                out,
                "{:>10}  {:>8}  {:>7}  ({})",
                s.delay_units, "-", s.n_pairs, s.reason
            );
        }
        let _ = writeln!(
            out,
            "Best delay: {} units = {} days (PCC {:.4})",
            self.best_delay_units, self.best_delay_days, self.best_pcc
        );
        out
    }
}

pub fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

/// Correlates pollutant bucket `t` with case bucket `t + k` for every
/// `k` in `0..=max_delay_units`.
///
/// Delays with fewer than `min_overlap` gap-free pairs, or with a
/// zero-variance side, are listed in `skipped` rather than failing the sweep.
pub fn lag_sweep(pair: &AlignedPair, max_delay_units: usize, min_overlap: usize) -> Result<LagCorrelationReport> {
    lag_sweep_named(pair, max_delay_units, min_overlap, "")
}

pub fn lag_sweep_named(
    pair: &AlignedPair,
    max_delay_units: usize,
    min_overlap: usize,
    region_name: &str,
) -> Result<LagCorrelationReport> {
    let min_overlap = min_overlap.max(2);
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    for k in 0..=max_delay_units {
        let pairs = pair.pairs_at_delay(k);
        if pairs.len() < min_overlap {
            skipped.push(SkippedDelay {
                delay_units: k,
                n_pairs: pairs.len(),
                reason: format!("fewer than {min_overlap} pairs"),
            });
            continue;
        }
        let (p, c): (Vec<f64>, Vec<f64>) = pairs.iter().map(|&(_, p, c)| (p, c)).unzip();
        match pearson(&p, &c) {
            Ok(r) => entries.push(LagEntry {
                delay_units: k,
                pcc: r,
                pcc_display: round4(r),
                n_pairs: pairs.len(),
            }),
            Err(Error::UndefinedCorrelation(reason)) => skipped.push(SkippedDelay {
                delay_units: k,
                n_pairs: pairs.len(),
                reason,
            }),
            Err(e) => return Err(e),
        }
    }
    let table: Vec<(usize, f64)> = entries.iter().map(|e| (e.delay_units, e.pcc)).collect();
    let (best_delay_units, best_pcc) = best_delay_from_table(&table).map_err(|_| Error::NoValidDelay {
        max_delay: max_delay_units,
        min_overlap,
    })?;
    Ok(LagCorrelationReport {
        format_version: REPORT_FORMAT_VERSION,
        region_name: region_name.to_string(),
        window_days: pair.window_days(),
        min_overlap,
        entries,
        skipped,
        best_delay_units,
        best_pcc,
        best_delay_days: delay_to_days(best_delay_units, pair.window_days()),
    })
}

/// Entry with the largest signed PCC; ties go to the smaller delay.
pub fn best_delay_from_table(pcc_by_delay: &[(usize, f64)]) -> Result<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for &(delay, pcc) in pcc_by_delay {
        best = match best {
            Some((bd, bp)) if bp > pcc || (bp == pcc && bd <= delay) => Some((bd, bp)),
            _ => Some((delay, pcc)),
        };
    }
    best.ok_or_else(|| Error::Empty("PCC table has no rows".into()))
}

pub fn delay_to_days(delay_units: usize, window_days: usize) -> usize {
    delay_units * window_days
}

/// PCC-by-delay table with one column per region, as read from CSV
/// `delay,<region>,...`.
#[derive(Debug, Clone, PartialEq)]
pub struct PccTable {
    pub regions: Vec<String>,
    /// `columns[r]` holds `(delay, pcc)` rows for `regions[r]`.
    pub columns: Vec<Vec<(usize, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestDelay {
    pub region: String,
    pub best_delay_units: usize,
    pub best_pcc: f64,
    pub best_delay_days: usize,
}

impl PccTable {
    /// `source` names the input in error messages.
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let ctx = |line: u64| format!("{source} line {line}");
        let headers = rdr.headers().map_err(|e| Error::format(ctx(1), e))?.clone();
        if headers.len() < 2 || &headers[0] != "delay" {
            return Err(Error::format(ctx(1), "expected header `delay,<region>,...`"));
        }
        let regions: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut columns = vec![Vec::new(); regions.len()];
        for (i, rec) in rdr.records().enumerate() {
            let line = i as u64 + 2;
            let rec = rec.map_err(|e| Error::format(ctx(line), e))?;
            let delay: usize = rec[0]
                .parse()
                .map_err(|e| Error::format(ctx(line), format!("delay: {e}")))?;
            for (c, col) in columns.iter_mut().enumerate() {
                let v: f64 = rec
                    .get(c + 1)
                    .ok_or_else(|| Error::format(ctx(line), "missing column"))?
                    .parse()
                    .map_err(|e| Error::format(ctx(line), format!("{}: {e}", regions[c])))?;
                if !(-1.0..=1.0).contains(&v) {
                    return Err(Error::format(ctx(line), format!("PCC {v} outside [-1, 1]")));
                }
                col.push((delay, v));
            }
        }
        Ok(PccTable { regions, columns })
    }

    pub fn best_delays(&self, window_days: usize) -> Result<Vec<BestDelay>> {
        self.regions
            .iter()
            .zip(&self.columns)
            .map(|(region, col)| {
                let (d, r) = best_delay_from_table(col)?;
                Ok(BestDelay {
                    region: region.clone(),
                    best_delay_units: d,
                    best_pcc: r,
                    best_delay_days: delay_to_days(d, window_days),
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    /// Consecutive from 0 in time order; the dot label in a numbered scatter.
    pub index: usize,
    /// Pollutant bucket index the point was taken from.
    pub bucket: usize,
    pub cases_mean: f64,
    pub pollutant_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterSeries {
    pub delay_units: usize,
    pub points: Vec<ScatterPoint>,
}

impl ScatterSeries {
    /// CSV `index,cases_mean,pollutant_mean`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,cases_mean,pollutant_mean\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", p.index, p.cases_mean, p.pollutant_mean);
        }
        out
    }
}

/// Cases at `t + delay` against pollutant at `t`, in bucket order.
pub fn scatter_series(pair: &AlignedPair, delay_units: usize, min_overlap: usize) -> Result<ScatterSeries> {
    let pairs = pair.pairs_at_delay(delay_units);
    if pairs.len() < min_overlap {
        return Err(Error::OutOfRange(format!(
            "delay {delay_units} leaves {} pairs, below the minimum overlap {min_overlap}",
            pairs.len()
        )));
    }
    Ok(ScatterSeries {
        delay_units,
        points: pairs
            .into_iter()
            .enumerate()
            .map(|(index, (bucket, p, c))| ScatterPoint {
                index,
                bucket,
                cases_mean: c,
                pollutant_mean: p,
            })
            .collect(),
    })
}
