//! On-disk formats: raster JSON, case-count CSV and region-mask JSON.

use std::fs;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::grid::{BBox, GeoGrid, GridSeries, RegionMask};
use super::series::{ScalarSeries, SeriesKind};
use crate::error::{Error, Result};

/// Raster encodings accepted by [`load_grid_series`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RasterFormat {
    /// `{rows, cols, bbox, frames: [{date, values, nodata}]}`
    #[default]
    Json,
}

impl std::str::FromStr for RasterFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(RasterFormat::Json),
            other => Err(Error::UnsupportedFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RasterDoc {
    rows: usize,
    cols: usize,
    bbox: BBox,
    frames: Vec<FrameDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameDoc {
    date: NaiveDate,
    /// Row-major, north to south; `null` is treated as nodata.
    values: Vec<Option<f64>>,
    #[serde(default)]
    nodata: Vec<usize>,
}

pub fn parse_grid_series(text: &str) -> Result<GridSeries> {
    let doc: RasterDoc = serde_json::from_str(text)?;
    let n = doc.rows * doc.cols;
    let mut frames = Vec::with_capacity(doc.frames.len());
    for (i, f) in doc.frames.into_iter().enumerate() {
        let ctx = || format!("frame {i} ({})", f.date);
        if f.values.len() != n {
            return Err(Error::format(
                ctx(),
                format!(
                    "expected {n} values for {}x{}, found {}",
                    doc.rows,
                    doc.cols,
                    f.values.len()
                ),
            ));
        }
        let mut nodata: Vec<bool> = f.values.iter().map(Option::is_none).collect();
        for &idx in &f.nodata {
            if idx >= n {
                return Err(Error::format(ctx(), format!("nodata index {idx} out of range")));
            }
            nodata[idx] = true;
        }
        let values = f.values.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
        let grid = GeoGrid::new(doc.rows, doc.cols, doc.bbox, values, nodata).map_err(|e| Error::format(ctx(), e))?;
        frames.push((f.date, grid));
    }
    GridSeries::new(frames)
}

pub fn load_grid_series(path: &Path, format: RasterFormat) -> Result<GridSeries> {
    match format {
        RasterFormat::Json => parse_grid_series(&read_text(path)?),
    }
}

pub fn grid_series_to_json(gs: &GridSeries) -> String {
    let (rows, cols) = gs.shape();
    let doc = RasterDoc {
        rows,
        cols,
        bbox: gs.bbox(),
        frames: gs
            .frames()
            .iter()
            .map(|(date, g)| FrameDoc {
                date: *date,
                values: (0..g.len()).map(|i| g.value(i)).collect(),
                nodata: (0..g.len()).filter(|&i| g.is_nodata(i)).collect(),
            })
            .collect(),
    };
    serde_json::to_string(&doc).expect("raster document serializes")
}

/// Parses a `date,new_cases` CSV. Rows are sorted by date on return.
pub fn parse_case_series<R: Read>(reader: R) -> Result<ScalarSeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::format("header", e))?
        .iter()
        .map(str::to_owned)
        .collect::<Vec<_>>();
    if headers != ["date", "new_cases"] {
        return Err(Error::format(
            "line 1",
            format!("expected header `date,new_cases`, found `{}`", headers.join(",")),
        ));
    }
    let mut points = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::format(format!("line {line}"), e)
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let date: NaiveDate = record[0]
            .parse()
            .map_err(|e| Error::format(format!("line {line}"), format!("bad date `{}`: {e}", &record[0])))?;
        let count: i64 = record[1]
            .parse()
            .map_err(|e| Error::format(format!("line {line}"), format!("bad count `{}`: {e}", &record[1])))?;
        if count < 0 {
            return Err(Error::Validation(format!("line {line}: negative case count {count}")));
        }
        points.push((date, count as f64));
    }
    if points.is_empty() {
        return Err(Error::Empty("case series has a header but no rows".into()));
    }
    ScalarSeries::new(points, SeriesKind::NewCases)
}

pub fn load_case_series(path: &Path) -> Result<ScalarSeries> {
    let file = fs::File::open(path).map_err(|e| with_path(e, path))?;
    parse_case_series(file)
}

pub fn case_series_to_csv(series: &ScalarSeries) -> String {
    let mut out = String::from("date,new_cases\n");
    for (d, v) in series.points() {
        out.push_str(&format!("{d},{}\n", *v as i64));
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaskDoc {
    name: String,
    rows: usize,
    cols: usize,
    inside: Vec<usize>,
}

pub fn parse_region_mask(text: &str) -> Result<RegionMask> {
    let doc: MaskDoc = serde_json::from_str(text)?;
    RegionMask::from_indices(doc.name, doc.rows, doc.cols, &doc.inside)
}

pub fn load_region_mask(path: &Path) -> Result<RegionMask> {
    parse_region_mask(&read_text(path)?)
}

pub fn region_mask_to_json(mask: &RegionMask) -> String {
    let (rows, cols) = mask.shape();
    serde_json::to_string(&MaskDoc {
        name: mask.name().to_string(),
        rows,
        cols,
        inside: mask.indices(),
    })
    .expect("mask document serializes")
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| with_path(e, path))
}

fn with_path(e: std::io::Error, path: &Path) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}
