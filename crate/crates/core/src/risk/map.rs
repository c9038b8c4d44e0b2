use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::BBox;
use crate::lstm::TargetMatrix;

pub const RISK_MAP_FORMAT_VERSION: u32 = 1;

/// Class boundaries; a value equal to a boundary belongs to the lower class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskThresholds {
    pub low_upper: f64,
    pub medium_upper: f64,
}

impl Default for RiskThresholds {
    fn default() -> Self {
        RiskThresholds {
            low_upper: 0.33,
            medium_upper: 0.66,
        }
    }
}

impl RiskThresholds {
    pub fn new(low_upper: f64, medium_upper: f64) -> Result<Self> {
        let t = RiskThresholds {
            low_upper,
            medium_upper,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.low_upper && self.low_upper < self.medium_upper && self.medium_upper < 1.0) {
            return Err(Error::Validation(format!(
                "thresholds need 0 < low_upper < medium_upper < 1, got {} and {}",
                self.low_upper, self.medium_upper
            )));
        }
        Ok(())
    }

    pub fn level(&self, risk: f64) -> RiskLevel {
        if risk <= self.low_upper {
            RiskLevel::Low
        } else if risk <= self.medium_upper {
            RiskLevel::Medium
        } else {
            RiskLevel::High
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskLevel {
    Low,
    Medium,
    High,
}

/// Country/region scale (`macro`) or city/local scale (`micro`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resolution {
    #[default]
    Macro,
    Micro,
}

/// Layout and time axis of the maps a model produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub bbox: BBox,
    #[serde(default)]
    pub resolution: Resolution,
    /// Date of output step 0.
    pub start_date: NaiveDate,
    /// Days between consecutive output steps.
    pub step_days: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Validation("grid spec needs at least one cell".into()));
        }
        if self.step_days == 0 {
            return Err(Error::Validation("step_days must be at least 1".into()));
        }
        self.bbox.validate()
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn date_of(&self, step: usize) -> NaiveDate {
        self.start_date + Duration::days((step * self.step_days) as i64)
    }

    /// A `1 x cells` strip over a unit bbox, for models without a georeferenced grid.
    pub fn strip(cells: usize, start_date: NaiveDate, step_days: usize) -> Self {
        GridSpec {
            rows: 1,
            cols: cells,
            bbox: BBox {
                lat_min: 0.0,
                lat_max: 1.0,
                lon_min: 0.0,
                lon_max: 1.0,
            },
            resolution: Resolution::Macro,
            start_date,
            step_days,
        }
    }
}

/// One timestep of gridded risk in `[0, 1]` with its discrete level per cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskMap {
    pub format_version: u32,
    pub timestamp: NaiveDate,
    pub rows: usize,
    pub cols: usize,
    pub bbox: BBox,
    pub resolution: Resolution,
    pub thresholds: RiskThresholds,
    pub risk: Vec<f64>,
    pub level: Vec<RiskLevel>,
}

#[derive(Deserialize)]
struct RiskMapDoc {
    format_version: u32,
    timestamp: NaiveDate,
    rows: usize,
    cols: usize,
    bbox: BBox,
    resolution: Resolution,
    thresholds: RiskThresholds,
    risk: Vec<f64>,
    level: Vec<RiskLevel>,
}

impl RiskMap {
    pub fn new(timestamp: NaiveDate, grid: &GridSpec, thresholds: RiskThresholds, risk: Vec<f64>) -> Result<Self> {
        if risk.len() != grid.cells() {
            return Err(Error::shape(
                format!("{} cells", grid.cells()),
                format!("{} risk values", risk.len()),
            ));
        }
        if let Some(v) = risk.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Validation(format!("risk value {v} outside [0, 1]")));
        }
        let level = risk.iter().map(|r| thresholds.level(*r)).collect();
        Ok(RiskMap {
            format_version: RISK_MAP_FORMAT_VERSION,
            timestamp,
            rows: grid.rows,
            cols: grid.cols,
            bbox: grid.bbox,
            resolution: grid.resolution,
            thresholds,
            risk,
            level,
        })
    }

    pub fn mean_risk(&self) -> f64 {
        self.risk.iter().sum::<f64>() / self.risk.len() as f64
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("risk map serializes")
    }

    /// Parses and re-validates a map, including level/threshold consistency.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: RiskMapDoc = serde_json::from_str(text)?;
        if doc.format_version != RISK_MAP_FORMAT_VERSION {
            return Err(Error::UnsupportedFormat(format!(
                "risk map format_version {}",
                doc.format_version
            )));
        }
        doc.thresholds.validate()?;
        let grid = GridSpec {
            rows: doc.rows,
            cols: doc.cols,
            bbox: doc.bbox,
            resolution: doc.resolution,
            start_date: doc.timestamp,
            step_days: 1,
        };
        let map = RiskMap::new(doc.timestamp, &grid, doc.thresholds, doc.risk)?;
        if map.level != doc.level {
            return Err(Error::Inconsistent("risk levels disagree with thresholds".into()));
        }
        Ok(map)
    }
}

/// Logistic map onto `(0, 1)`, evaluated without overflow for large `|v|`.
pub fn squash(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn squash_to_risk(raw: &TargetMatrix) -> TargetMatrix {
    raw.map(squash)
}

/// Splits a `cells x q` model output into per-cell `1 x q` series.
pub fn predictions_by_cell(raw: &TargetMatrix, grid: &GridSpec) -> Result<BTreeMap<usize, TargetMatrix>> {
    if raw.p() != grid.cells() {
        return Err(Error::Dimension(format!(
            "model emits {} outputs per step but the grid has {} cells",
            raw.p(),
            grid.cells()
        )));
    }
    (0..raw.p())
        .map(|cell| Ok((cell, TargetMatrix::from_rows(vec![raw.row(cell).to_vec()])?)))
        .collect()
}

/// One map per timestep from raw per-cell predictions (output channel 0 of
/// each cell's matrix).
pub fn assemble_risk_maps(
    per_cell: &BTreeMap<usize, TargetMatrix>,
    grid: &GridSpec,
    thresholds: RiskThresholds,
) -> Result<Vec<RiskMap>> {
    grid.validate()?;
    thresholds.validate()?;
    let mut q = None;
    for cell in 0..grid.cells() {
        let m = per_cell
            .get(&cell)
            .ok_or_else(|| Error::Validation(format!("no prediction for cell {cell}")))?;
        match q {
            None => q = Some(m.q()),
            Some(q0) if q0 != m.q() => {
                return Err(Error::Dimension(format!(
                    "cell {cell} has {} steps, expected {q0}",
                    m.q()
                )));
            }
            _ => {}
        }
    }
    let q = q.unwrap_or(0);
    (0..q)
        .map(|t| {
            let risk = (0..grid.cells())
                .map(|cell| squash(per_cell[&cell].get(0, t)))
                .collect();
            RiskMap::new(grid.date_of(t), grid, thresholds, risk)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Json,
    Pgm,
}

impl std::str::FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ExportFormat::Json),
            "pgm" => Ok(ExportFormat::Pgm),
            other => Err(Error::UnsupportedFormat(other.to_string())),
        }
    }
}

/// 8-bit grey level, `round(risk * 255)` with halves rounded up.
pub fn grey_level(risk: f64) -> u8 {
    (risk * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn export_risk_map(map: &RiskMap, format: ExportFormat) -> Vec<u8> {
    match format {
        ExportFormat::Json => map.to_json().into_bytes(),
        ExportFormat::Pgm => to_pgm(map).into_bytes(),
    }
}

fn to_pgm(map: &RiskMap) -> String {
    let mut out = String::new();
    let b = map.bbox;
    let _ = writeln!(out, "P2");
    let _ = writeln!(
        out,
        "# date={} bbox={},{},{},{}",
        map.timestamp, b.lat_min, b.lat_max, b.lon_min, b.lon_max
    );
    let _ = writeln!(out, "{} {}", map.cols, map.rows);
    let _ = writeln!(out, "255");
    for r in 0..map.rows {
        let row: Vec<String> = map.risk[r * map.cols..(r + 1) * map.cols]
            .iter()
            .map(|v| grey_level(*v).to_string())
            .collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: usize, cols: usize) -> GridSpec {
        GridSpec {
            rows,
            cols,
            bbox: BBox::new(44.0, 46.0, 8.0, 11.0).unwrap(),
            resolution: Resolution::Micro,
            start_date: "2020-01-01".parse().unwrap(),
            step_days: 5,
        }
    }

    #[test]
    fn squash_values() {
        assert_eq!(squash(0.0), 0.5);
        assert!((squash(-1.3863) - 0.2).abs() < 1e-4);
        assert_eq!(squash(800.0), 1.0);
        assert_eq!(squash(-800.0), 0.0);
        assert!(squash(30.0) > squash(29.0));
    }

    #[test]
    fn boundaries_go_to_lower_level() {
        let t = RiskThresholds::default();
        assert_eq!(t.level(0.33), RiskLevel::Low);
        assert_eq!(t.level(0.330001), RiskLevel::Medium);
        assert_eq!(t.level(0.66), RiskLevel::Medium);
        assert_eq!(t.level(0.9), RiskLevel::High);
        assert_eq!(RiskThresholds::new(0.2, 0.8).unwrap().level(0.5), RiskLevel::Medium);
        assert!(RiskThresholds::new(0.8, 0.2).is_err());
    }

    #[test]
    fn single_cell_zero_predictions() {
        let mut cells = BTreeMap::new();
        cells.insert(0, TargetMatrix::from_rows(vec![vec![0.0, 0.0, 0.0]]).unwrap());
        let maps = assemble_risk_maps(&cells, &grid(1, 1), RiskThresholds::default()).unwrap();
        assert_eq!(maps.len(), 3);
        assert!(maps
            .iter()
            .all(|m| m.risk == vec![0.5] && m.level == vec![RiskLevel::Medium]));
        assert_eq!(maps[2].timestamp.to_string(), "2020-01-11");
    }

    #[test]
    fn hot_cell_is_high() {
        let mut cells = BTreeMap::new();
        for c in 0..4 {
            let v = if c == 2 { 10.0 } else { 0.0 };
            cells.insert(c, TargetMatrix::from_rows(vec![vec![v]]).unwrap());
        }
        let maps = assemble_risk_maps(&cells, &grid(2, 2), RiskThresholds::default()).unwrap();
        assert_eq!(maps[0].level[2], RiskLevel::High);
        assert_eq!(maps[0].level[0], RiskLevel::Medium);
    }

    #[test]
    fn missing_cell_and_ragged_steps() {
        let mut cells = BTreeMap::new();
        cells.insert(0, TargetMatrix::from_rows(vec![vec![0.0, 1.0]]).unwrap());
        assert!(assemble_risk_maps(&cells, &grid(1, 2), RiskThresholds::default()).is_err());
        cells.insert(1, TargetMatrix::from_rows(vec![vec![0.0]]).unwrap());
        assert!(matches!(
            assemble_risk_maps(&cells, &grid(1, 2), RiskThresholds::default()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn pgm_endpoints_and_midpoint() {
        let map = RiskMap::new(
            "2020-03-01".parse().unwrap(),
            &grid(1, 3),
            RiskThresholds::default(),
            vec![0.0, 0.5, 1.0],
        )
        .unwrap();
        let text = String::from_utf8(export_risk_map(&map, ExportFormat::Pgm)).unwrap();
        assert_eq!(text, "P2\n# date=2020-03-01 bbox=44,46,8,11\n3 1\n255\n0 128 255\n");
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let map = RiskMap::new(
            "2020-03-01".parse().unwrap(),
            &grid(2, 2),
            RiskThresholds::default(),
            vec![0.1, 1.0 / 3.0, squash(0.7), 0.999],
        )
        .unwrap();
        let back = RiskMap::from_json(&map.to_json()).unwrap();
        assert_eq!(back, map);
        assert!(back.risk.iter().zip(&map.risk).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn tampered_levels_rejected() {
        let map = RiskMap::new(
            "2020-03-01".parse().unwrap(),
            &grid(1, 1),
            RiskThresholds::default(),
            vec![0.9],
        )
        .unwrap();
        let text = map.to_json().replace("\"high\"", "\"low\"");
        assert!(RiskMap::from_json(&text).is_err());
    }

    #[test]
    fn unknown_export_format() {
        assert!(matches!(
            "png".parse::<ExportFormat>(),
            Err(Error::UnsupportedFormat(_))
        ));
    }
}
