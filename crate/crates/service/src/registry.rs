//! Named, immutable datasets shared by all handlers.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use chrono::NaiveDate;
use lagrisk_core::ingest::{
    parse_case_series, parse_grid_series, parse_region_mask, GridSeries, RegionMask, ScalarSeries,
};
use lagrisk_core::lstm::{FeatureMatrix, LstmModel, Sample, SampleSet};
use lagrisk_core::risk::{risk_maps_for, GridSpec, RiskThresholds, ScenarioOutcome};
use lagrisk_core::Error;
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ApiResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Raster,
    Cases,
    Mask,
    Features,
    Samples,
    Model,
    Grid,
}

impl DatasetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::Raster => "raster",
            DatasetKind::Cases => "cases",
            DatasetKind::Mask => "mask",
            DatasetKind::Features => "features",
            DatasetKind::Samples => "samples",
            DatasetKind::Model => "model",
            DatasetKind::Grid => "grid",
        }
    }
}

/// A grid given inline or by the handle of a registered `grid` dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridRef {
    Handle(String),
    Inline(GridSpec),
}

/// Body of `POST /datasets`. Exactly one of `path` (a file readable by the
/// service) and `content` (inline text, or inline JSON for JSON formats)
/// must be given. `features` and `grid` only apply to models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Registration {
    pub name: String,
    pub kind: DatasetKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridRef>,
}

/// A model together with the grid its outputs map onto and, when a baseline
/// feature matrix is attached, the baseline risk maps.
#[derive(Debug, Clone)]
pub struct ModelEntry {
    pub model: LstmModel,
    pub grid: GridSpec,
    pub baseline: Option<(String, Arc<FeatureMatrix>)>,
    pub baseline_outcome: Option<ScenarioOutcome>,
}

#[derive(Debug, Clone)]
pub enum Dataset {
    Raster(Arc<GridSeries>),
    Cases(Arc<ScalarSeries>),
    Mask(Arc<RegionMask>),
    Features(Arc<FeatureMatrix>),
    Samples(Arc<Vec<Sample>>),
    Model(Arc<ModelEntry>),
    Grid(Arc<GridSpec>),
}

impl Dataset {
    pub fn kind(&self) -> DatasetKind {
        match self {
            Dataset::Raster(_) => DatasetKind::Raster,
            Dataset::Cases(_) => DatasetKind::Cases,
            Dataset::Mask(_) => DatasetKind::Mask,
            Dataset::Features(_) => DatasetKind::Features,
            Dataset::Samples(_) => DatasetKind::Samples,
            Dataset::Model(_) => DatasetKind::Model,
            Dataset::Grid(_) => DatasetKind::Grid,
        }
    }
}

/// Grid used when a model is registered without one: a one-row strip with
/// one cell per output, five-day steps from 1970-01-01.
pub fn default_grid(n_out: usize) -> GridSpec {
    GridSpec::strip(n_out, NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid date"), 5)
}

pub fn validate_name(name: &str) -> ApiResult<()> {
    let ok = !name.is_empty()
        && name.len() <= 64
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && !name.starts_with('.');
    if ok {
        Ok(())
    } else {
        Err(ApiError::bad_request(format!(
            "invalid name `{name}`: use 1-64 characters from [A-Za-z0-9_.-], not starting with `.`"
        )))
    }
}

#[derive(Debug, Default)]
pub struct Registry {
    entries: BTreeMap<String, Dataset>,
}

macro_rules! typed_getter {
    ($fn:ident, $variant:ident, $ty:ty) => {
        pub fn $fn(&self, name: &str) -> ApiResult<Arc<$ty>> {
            match self.get(name)? {
                Dataset::$variant(v) => Ok(v.clone()),
                other => Err(wrong_kind(name, DatasetKind::$variant, other.kind())),
            }
        }
    };
}

fn wrong_kind(name: &str, wanted: DatasetKind, found: DatasetKind) -> ApiError {
    ApiError::bad_request(format!(
        "dataset `{name}` is a {}, expected a {}",
        found.as_str(),
        wanted.as_str()
    ))
}

impl Registry {
    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn get(&self, name: &str) -> ApiResult<&Dataset> {
        self.entries
            .get(name)
            .ok_or_else(|| ApiError::not_found("dataset", name))
    }

    typed_getter!(raster, Raster, GridSeries);
    typed_getter!(cases, Cases, ScalarSeries);
    typed_getter!(mask, Mask, RegionMask);
    typed_getter!(features, Features, FeatureMatrix);
    typed_getter!(samples, Samples, Vec<Sample>);
    typed_getter!(model, Model, ModelEntry);
    typed_getter!(grid, Grid, GridSpec);

    pub fn list(&self) -> impl Iterator<Item = (&str, &Dataset)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Registered objects never change; a taken name is a conflict.
    pub fn insert(&mut self, name: &str, dataset: Dataset) -> ApiResult<()> {
        if self.entries.contains_key(name) {
            return Err(ApiError::conflict(
                "duplicate_name",
                format!("a dataset named `{name}` already exists"),
            ));
        }
        self.entries.insert(name.to_string(), dataset);
        Ok(())
    }

    pub fn resolve_grid(&self, grid: Option<&GridRef>, n_out: usize) -> ApiResult<GridSpec> {
        let spec = match grid {
            None => default_grid(n_out),
            Some(GridRef::Handle(h)) => (*self.grid(h)?).clone(),
            Some(GridRef::Inline(g)) => {
                g.validate().map_err(ApiError::engine)?;
                g.clone()
            }
        };
        if spec.cells() != n_out {
            return Err(ApiError::engine(Error::Dimension(format!(
                "model emits {n_out} outputs per step but the grid has {} cells",
                spec.cells()
            ))));
        }
        Ok(spec)
    }

    /// Attaches grid and optional baseline to a model, precomputing the
    /// baseline risk maps.
    pub fn model_entry(
        &self,
        model: LstmModel,
        features: Option<&str>,
        grid: Option<&GridRef>,
        thresholds: RiskThresholds,
    ) -> ApiResult<ModelEntry> {
        let grid = self.resolve_grid(grid, model.n_out())?;
        let (baseline, baseline_outcome) = match features {
            None => (None, None),
            Some(h) => {
                let f = self.features(h)?;
                let outcome = risk_maps_for(&model, &f, &grid, thresholds).map_err(ApiError::engine)?;
                (Some((h.to_string(), f)), Some(outcome))
            }
        };
        Ok(ModelEntry {
            model,
            grid,
            baseline,
            baseline_outcome,
        })
    }

    /// Parses a registration into a dataset without inserting it.
    pub fn load(&self, reg: &Registration, thresholds: RiskThresholds) -> ApiResult<Dataset> {
        validate_name(&reg.name)?;
        if reg.kind != DatasetKind::Model && (reg.features.is_some() || reg.grid.is_some()) {
            return Err(ApiError::bad_request("`features` and `grid` only apply to models"));
        }
        let text = registration_text(reg)?;
        let e = ApiError::engine;
        Ok(match reg.kind {
            DatasetKind::Raster => Dataset::Raster(Arc::new(parse_grid_series(&text).map_err(e)?)),
            DatasetKind::Cases => Dataset::Cases(Arc::new(parse_case_series(text.as_bytes()).map_err(e)?)),
            DatasetKind::Mask => Dataset::Mask(Arc::new(parse_region_mask(&text).map_err(e)?)),
            DatasetKind::Features => {
                let f: FeatureMatrix = serde_json::from_str(&text).map_err(|err| e(err.into()))?;
                Dataset::Features(Arc::new(f))
            }
            DatasetKind::Samples => {
                let samples = SampleSet::from_json(&text).map_err(e)?.into_samples();
                if samples.is_empty() {
                    return Err(e(Error::Empty("sample set has no samples".into())));
                }
                Dataset::Samples(Arc::new(samples))
            }
            DatasetKind::Grid => {
                let g: GridSpec = serde_json::from_str(&text).map_err(|err| e(err.into()))?;
                g.validate().map_err(e)?;
                Dataset::Grid(Arc::new(g))
            }
            DatasetKind::Model => {
                let model = LstmModel::from_json(&text).map_err(e)?;
                let entry = self.model_entry(model, reg.features.as_deref(), reg.grid.as_ref(), thresholds)?;
                Dataset::Model(Arc::new(entry))
            }
        })
    }
}

fn registration_text(reg: &Registration) -> ApiResult<String> {
    match (&reg.path, &reg.content) {
        (Some(p), None) => std::fs::read_to_string(p).map_err(|err| ApiError::engine(Error::format(p.display(), err))),
        (None, Some(serde_json::Value::String(s))) => Ok(s.clone()),
        (None, Some(v)) => Ok(v.to_string()),
        _ => Err(ApiError::bad_request("give exactly one of `path` and `content`")),
    }
}

/// The registration with its payload inlined, so it can be replayed
/// without the original file.
pub fn inlined(reg: &Registration) -> ApiResult<Registration> {
    let text = registration_text(reg)?;
    let content = match reg.kind {
        DatasetKind::Cases => serde_json::Value::String(text),
        _ => serde_json::from_str(&text).unwrap_or(serde_json::Value::String(text)),
    };
    Ok(Registration {
        path: None,
        content: Some(content),
        ..reg.clone()
    })
}
