use serde::{Deserialize, Serialize};

use super::map::{assemble_risk_maps, predictions_by_cell, GridSpec, RiskMap, RiskThresholds};
use crate::error::{Error, Result};
use crate::lstm::{FeatureMatrix, LstmModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverrideMode {
    /// Replace the value.
    Set,
    /// Multiply the existing value.
    Mul,
}

/// One input perturbation over an inclusive step range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Override {
    pub source: String,
    /// Inclusive `[first, last]` steps; all steps when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<[usize; 2]>,
    pub mode: OverrideMode,
    pub value: f64,
}

/// The scenario document accepted by the CLI and the service.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub overrides: Vec<Override>,
}

impl ScenarioSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// A baseline input matrix and the perturbations to evaluate against it.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub baseline: FeatureMatrix,
    pub spec: ScenarioSpec,
}

/// Returns a perturbed copy of the baseline. Overrides apply in order, so a
/// later override wins where ranges overlap.
pub fn apply_scenario(scenario: &Scenario) -> Result<FeatureMatrix> {
    let mut out = scenario.baseline.clone();
    let steps = out.n_steps();
    for (k, o) in scenario.spec.overrides.iter().enumerate() {
        let source = out
            .source_index(&o.source)
            .ok_or_else(|| Error::UnknownSource(o.source.clone()))?;
        if !o.value.is_finite() {
            return Err(Error::NonFinite(format!("override {k} value")));
        }
        let [first, last] = o.steps.unwrap_or([0, steps - 1]);
        if first > last || last >= steps {
            return Err(Error::OutOfRange(format!(
                "override {k} steps [{first}, {last}] outside 0..{steps}"
            )));
        }
        let row = out.row_mut(source);
        for v in &mut row[first..=last] {
            *v = match o.mode {
                OverrideMode::Set => o.value,
                OverrideMode::Mul => *v * o.value,
            };
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutcome {
    pub maps: Vec<RiskMap>,
    /// Mean risk over all cells, per timestep.
    pub mean_risk: Vec<f64>,
}

/// Predicts risk maps for a feature matrix; the model must emit one output
/// per grid cell.
pub fn risk_maps_for(
    model: &LstmModel,
    features: &FeatureMatrix,
    grid: &GridSpec,
    thresholds: RiskThresholds,
) -> Result<ScenarioOutcome> {
    let raw = model.predict(features)?;
    let maps = assemble_risk_maps(&predictions_by_cell(&raw, grid)?, grid, thresholds)?;
    let mean_risk = maps.iter().map(RiskMap::mean_risk).collect();
    Ok(ScenarioOutcome { maps, mean_risk })
}

/// Applies the scenario, predicts, squashes and assembles the maps.
pub fn evaluate_scenario(
    model: &LstmModel,
    scenario: &Scenario,
    grid: &GridSpec,
    thresholds: RiskThresholds,
) -> Result<ScenarioOutcome> {
    let features = apply_scenario(scenario)?;
    risk_maps_for(model, &features, grid, thresholds)
}
