//! Risk maps from model output, and what-if scenario evaluation.

mod map;
mod scenario;

pub use map::{
    assemble_risk_maps, export_risk_map, grey_level, predictions_by_cell, squash, squash_to_risk, ExportFormat,
    GridSpec, Resolution, RiskLevel, RiskMap, RiskThresholds, RISK_MAP_FORMAT_VERSION,
};
pub use scenario::{
    apply_scenario, evaluate_scenario, risk_maps_for, Override, OverrideMode, Scenario, ScenarioOutcome, ScenarioSpec,
};
