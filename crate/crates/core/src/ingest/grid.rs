//! Georeferenced rasters, region masks and zonal statistics.
//!
//! Rows run north to south and columns west to east; cell `(r, c)` lives at
//! flat index `r * cols + c`. Nodata cells carry `NaN` internally and are
//! tracked by an explicit mask so that a finite sentinel in the source file
//! never leaks into a statistic.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl BBox {
    pub fn new(lat_min: f64, lat_max: f64, lon_min: f64, lon_max: f64) -> Result<Self> {
        let bbox = BBox {
            lat_min,
            lat_max,
            lon_min,
            lon_max,
        };
        bbox.validate()?;
        Ok(bbox)
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.lat_min, self.lat_max, self.lon_min, self.lon_max]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite || self.lat_min >= self.lat_max || self.lon_min >= self.lon_max {
            return Err(Error::Validation(format!(
                "bbox requires lat_min < lat_max and lon_min < lon_max, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// A single raster frame of concentrations with a nodata mask.
#[derive(Debug, Clone)]
pub struct GeoGrid {
    rows: usize,
    cols: usize,
    bbox: BBox,
    values: Vec<f64>,
    nodata: Vec<bool>,
}

impl GeoGrid {
    /// Builds a grid, normalising nodata cells to `NaN`.
    ///
    /// A non-finite value outside the nodata mask is rejected.
    pub fn new(rows: usize, cols: usize, bbox: BBox, values: Vec<f64>, nodata: Vec<bool>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Validation(format!(
                "grid must be at least 1x1, got {rows}x{cols}"
            )));
        }
        bbox.validate()?;
        let n = rows * cols;
        if values.len() != n {
            return Err(Error::shape(
                format!("{n} values for a {rows}x{cols} grid"),
                format!("{} values", values.len()),
            ));
        }
        if nodata.len() != n {
            return Err(Error::shape(
                format!("{n} nodata flags for a {rows}x{cols} grid"),
                format!("{} flags", nodata.len()),
            ));
        }
        let mut values = values;
        for (i, (v, &masked)) in values.iter_mut().zip(&nodata).enumerate() {
            if masked {
                *v = f64::NAN;
            } else if !v.is_finite() {
                return Err(Error::NonFinite(format!("grid cell {i} (not flagged as nodata)")));
            }
        }
        Ok(GeoGrid {
            rows,
            cols,
            bbox,
            values,
            nodata,
        })
    }

    /// Grid without nodata cells.
    pub fn from_values(rows: usize, cols: usize, bbox: BBox, values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        GeoGrid::new(rows, cols, bbox, values, vec![false; n])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Raw values; nodata cells hold `NaN`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nodata_mask(&self) -> &[bool] {
        &self.nodata
    }

    pub fn is_nodata(&self, idx: usize) -> bool {
        self.nodata[idx]
    }

    pub fn value(&self, idx: usize) -> Option<f64> {
        if self.nodata[idx] {
            None
        } else {
            Some(self.values[idx])
        }
    }

    pub fn valid_count(&self) -> usize {
        self.nodata.iter().filter(|m| !**m).count()
    }

    pub fn same_layout(&self, other: &GeoGrid) -> bool {
        self.rows == other.rows && self.cols == other.cols && self.bbox == other.bbox
    }
}

impl PartialEq for GeoGrid {
    /// Bitwise equality on valid cells; nodata cells compare by mask only.
    fn eq(&self, other: &Self) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.bbox == other.bbox
            && self.nodata == other.nodata
            && self
                .values
                .iter()
                .zip(&other.values)
                .zip(&self.nodata)
                .all(|((a, b), &masked)| masked || a.to_bits() == b.to_bits())
    }
}

/// Time-ordered sequence of grids sharing one layout.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSeries {
    frames: Vec<(NaiveDate, GeoGrid)>,
}

impl GridSeries {
    /// Sorts frames by date and checks layout homogeneity and date uniqueness.
    pub fn new(mut frames: Vec<(NaiveDate, GeoGrid)>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Empty("grid series has no frames".into()));
        }
        frames.sort_by_key(|(d, _)| *d);
        for w in frames.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::Inconsistent(format!("duplicate frame date {}", w[0].0)));
            }
        }
        let first = &frames[0].1;
        for (date, grid) in &frames[1..] {
            if !first.same_layout(grid) {
                return Err(Error::Inconsistent(format!(
                    "frame {date} has layout {}x{} {:?}, expected {}x{} {:?}",
                    grid.rows, grid.cols, grid.bbox, first.rows, first.cols, first.bbox
                )));
            }
        }
        Ok(GridSeries { frames })
    }

    pub fn frames(&self) -> &[(NaiveDate, GeoGrid)] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.frames[0].1.shape()
    }

    pub fn bbox(&self) -> BBox {
        self.frames[0].1.bbox()
    }
}

/// Cell-level selection of a named region on a grid layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionMask {
    name: String,
    rows: usize,
    cols: usize,
    inside: Vec<bool>,
}

impl RegionMask {
    pub fn new(name: impl Into<String>, rows: usize, cols: usize, inside: Vec<bool>) -> Result<Self> {
        let name = name.into();
        if inside.len() != rows * cols {
            return Err(Error::shape(
                format!("{} mask cells for {rows}x{cols}", rows * cols),
                format!("{} cells", inside.len()),
            ));
        }
        if !inside.iter().any(|c| *c) {
            return Err(Error::EmptyRegion(name));
        }
        Ok(RegionMask {
            name,
            rows,
            cols,
            inside,
        })
    }

    /// Builds a mask from flat cell indices.
    pub fn from_indices(name: impl Into<String>, rows: usize, cols: usize, indices: &[usize]) -> Result<Self> {
        let n = rows * cols;
        let mut inside = vec![false; n];
        for &i in indices {
            if i >= n {
                return Err(Error::Validation(format!(
                    "mask cell index {i} outside a {rows}x{cols} grid"
                )));
            }
            inside[i] = true;
        }
        RegionMask::new(name, rows, cols, inside)
    }

    pub fn all(name: impl Into<String>, rows: usize, cols: usize) -> Result<Self> {
        RegionMask::new(name, rows, cols, vec![true; rows * cols])
    }

    /// Selects every cell whose centre falls inside `region` (edges inclusive).
    pub fn from_bbox(name: impl Into<String>, rows: usize, cols: usize, grid_bbox: BBox, region: BBox) -> Result<Self> {
        grid_bbox.validate()?;
        region.validate()?;
        let dlat = (grid_bbox.lat_max - grid_bbox.lat_min) / rows as f64;
        let dlon = (grid_bbox.lon_max - grid_bbox.lon_min) / cols as f64;
        let mut inside = vec![false; rows * cols];
        for r in 0..rows {
            let lat = grid_bbox.lat_max - (r as f64 + 0.5) * dlat;
            for c in 0..cols {
                let lon = grid_bbox.lon_min + (c as f64 + 0.5) * dlon;
                inside[r * cols + c] = (region.lat_min..=region.lat_max).contains(&lat)
                    && (region.lon_min..=region.lon_max).contains(&lon);
            }
        }
        RegionMask::new(name, rows, cols, inside)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn inside(&self) -> &[bool] {
        &self.inside
    }

    pub fn indices(&self) -> Vec<usize> {
        self.inside
            .iter()
            .enumerate()
            .filter_map(|(i, &v)| v.then_some(i))
            .collect()
    }

    fn check_against(&self, grid: &GeoGrid) -> Result<()> {
        if self.shape() != grid.shape() {
            return Err(Error::shape(
                format!("mask `{}` {}x{}", self.name, self.rows, self.cols),
                format!("grid {}x{}", grid.rows, grid.cols),
            ));
        }
        Ok(())
    }
}

/// Descriptive statistics over the valid cells of a region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionalStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Population standard deviation (divisor = `valid_count`).
    pub std: f64,
    pub valid_count: usize,
}

/// Marks every cell outside `mask` as nodata; the bbox is left unchanged.
pub fn subset_region(grid: &GeoGrid, mask: &RegionMask) -> Result<GeoGrid> {
    mask.check_against(grid)?;
    let nodata: Vec<bool> = grid
        .nodata
        .iter()
        .zip(&mask.inside)
        .map(|(&nd, &inside)| nd || !inside)
        .collect();
    GeoGrid::new(grid.rows, grid.cols, grid.bbox, grid.values.clone(), nodata)
}

pub fn regional_stats(grid: &GeoGrid, mask: &RegionMask) -> Result<RegionalStats> {
    mask.check_against(grid)?;
    let valid = grid
        .values
        .iter()
        .zip(&grid.nodata)
        .zip(&mask.inside)
        .filter(|((_, &nd), &inside)| inside && !nd)
        .map(|((v, _), _)| *v);
    stats_of(valid).ok_or_else(|| Error::EmptyRegion(mask.name.clone()))
}

/// Statistics over all valid cells of a grid.
pub fn grid_stats(grid: &GeoGrid) -> Option<RegionalStats> {
    stats_of(
        grid.values
            .iter()
            .zip(&grid.nodata)
            .filter(|(_, nd)| !**nd)
            .map(|(v, _)| *v),
    )
}

fn stats_of(values: impl Iterator<Item = f64>) -> Option<RegionalStats> {
    // Welford's update; a single pass keeps the accumulation stable without
    // buffering the region.
    let mut n = 0usize;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for v in values {
        n += 1;
        let delta = v - mean;
        mean += delta / n as f64;
        m2 += delta * (v - mean);
        min = min.min(v);
        max = max.max(v);
    }
    if n == 0 {
        return None;
    }
    // Rounding can push the running mean a hair outside [min, max] for
    // near-constant fields.
    let mean = mean.clamp(min, max);
    Some(RegionalStats {
        min,
        max,
        mean,
        std: (m2.max(0.0) / n as f64).sqrt(),
        valid_count: n,
    })
}

/// Per-date regional mean; dates whose region is entirely nodata are skipped.
pub fn grid_series_to_regional_series(gs: &GridSeries, mask: &RegionMask) -> Result<super::ScalarSeries> {
    let mut points = Vec::with_capacity(gs.len());
    for (date, grid) in gs.frames() {
        match regional_stats(grid, mask) {
            Ok(s) => points.push((*date, s.mean)),
            Err(Error::EmptyRegion(_)) => {}
            Err(e) => return Err(e),
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyRegion(mask.name.clone()));
    }
    super::ScalarSeries::new(points, super::SeriesKind::PollutantMean)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bbox() -> BBox {
        BBox::new(44.0, 46.0, 8.0, 11.0).unwrap()
    }

    fn grid2x2(values: [f64; 4], nodata: [bool; 4]) -> GeoGrid {
        GeoGrid::new(2, 2, bbox(), values.to_vec(), nodata.to_vec()).unwrap()
    }

    #[test]
    fn subset_top_row_masks_bottom_row() {
        let g = grid2x2([1.0, 2.0, 3.0, 4.0], [false; 4]);
        let m = RegionMask::from_indices("top", 2, 2, &[0, 1]).unwrap();
        let s = subset_region(&g, &m).unwrap();
        assert_eq!(s.nodata_mask(), &[false, false, true, true]);
        assert_eq!(s.value(0), Some(1.0));
        assert_eq!(s.value(2), None);
        assert_eq!(s.bbox(), g.bbox());
    }

    #[test]
    fn subset_with_full_mask_is_identity() {
        let g = grid2x2([1.0, 2.0, 3.0, 4.0], [false, true, false, false]);
        let m = RegionMask::all("all", 2, 2).unwrap();
        assert_eq!(subset_region(&g, &m).unwrap(), g);
    }

    #[test]
    fn empty_mask_is_rejected() {
        assert!(matches!(
            RegionMask::new("none", 2, 2, vec![false; 4]),
            Err(Error::EmptyRegion(_))
        ));
    }

    #[test]
    fn mask_shape_mismatch() {
        let g = grid2x2([1.0; 4], [false; 4]);
        let m = RegionMask::all("big", 3, 3).unwrap();
        assert!(matches!(subset_region(&g, &m), Err(Error::ShapeMismatch { .. })));
        assert!(matches!(regional_stats(&g, &m), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn stats_skip_nodata_and_use_population_std() {
        let g = grid2x2([1.0, 2.0, 3.0, 99.0], [false, false, false, true]);
        let m = RegionMask::all("all", 2, 2).unwrap();
        let s = regional_stats(&g, &m).unwrap();
        assert_eq!(s.min, 1.0);
        assert_eq!(s.max, 3.0);
        assert!((s.mean - 2.0).abs() < 1e-15);
        assert!((s.std - 0.816496580927726).abs() < 1e-12);
        assert_eq!(s.valid_count, 3);
    }

    #[test]
    fn constant_field_has_zero_std() {
        let g = grid2x2([7.0; 4], [false; 4]);
        let s = regional_stats(&g, &RegionMask::all("all", 2, 2).unwrap()).unwrap();
        assert_eq!((s.min, s.max, s.mean, s.std), (7.0, 7.0, 7.0, 0.0));
    }

    #[test]
    fn all_nodata_region_is_an_error() {
        let g = grid2x2([1.0; 4], [true; 4]);
        let err = regional_stats(&g, &RegionMask::all("void", 2, 2).unwrap()).unwrap_err();
        assert!(matches!(err, Error::EmptyRegion(name) if name == "void"));
    }

    #[test]
    fn non_finite_valid_cell_rejected() {
        let err = GeoGrid::new(1, 2, bbox(), vec![1.0, f64::INFINITY], vec![false, false]).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        // the same value is fine once flagged
        assert!(GeoGrid::new(1, 2, bbox(), vec![1.0, f64::INFINITY], vec![false, true]).is_ok());
    }

    #[test]
    fn bbox_mask_selects_cell_centres() {
        // 2x2 over lat 44..46, lon 8..11: centres at lat 45.5/44.5, lon 8.75/10.25
        let m = RegionMask::from_bbox("nw", 2, 2, bbox(), BBox::new(45.0, 46.0, 8.0, 9.0).unwrap()).unwrap();
        assert_eq!(m.indices(), vec![0]);
    }

    #[test]
    fn regional_series_skips_empty_dates() {
        let d = |s: &str| s.parse::<NaiveDate>().unwrap();
        let gs = GridSeries::new(vec![
            (d("2020-01-01"), grid2x2([1.0, 5.0, 0.0, 0.0], [false; 4])),
            (
                d("2020-01-02"),
                grid2x2([0.0, 0.0, 0.0, 0.0], [true, true, false, false]),
            ),
            (d("2020-01-03"), grid2x2([3.0, 7.0, 0.0, 0.0], [false; 4])),
        ])
        .unwrap();
        let m = RegionMask::from_indices("top", 2, 2, &[0, 1]).unwrap();
        let s = grid_series_to_regional_series(&gs, &m).unwrap();
        assert_eq!(s.points(), &[(d("2020-01-01"), 3.0), (d("2020-01-03"), 5.0)]);

        let single = RegionMask::from_indices("one", 2, 2, &[1]).unwrap();
        let s = grid_series_to_regional_series(&gs, &single).unwrap();
        assert_eq!(s.values(), vec![5.0, 7.0]);
    }

    #[test]
    fn grid_series_rejects_duplicates_and_mixed_shapes() {
        let d = |s: &str| s.parse::<NaiveDate>().unwrap();
        let g = grid2x2([1.0; 4], [false; 4]);
        assert!(matches!(
            GridSeries::new(vec![(d("2020-01-01"), g.clone()), (d("2020-01-01"), g.clone())]),
            Err(Error::Inconsistent(_))
        ));
        let g3 = GeoGrid::from_values(3, 3, bbox(), vec![0.0; 9]).unwrap();
        assert!(matches!(
            GridSeries::new(vec![(d("2020-01-01"), g3), (d("2020-01-02"), g)]),
            Err(Error::Inconsistent(_))
        ));
    }
}
