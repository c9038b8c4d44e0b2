//! Lagged pollutant/infection correlation and LSTM-based risk mapping.
//!
//! The pipeline runs in four stages:
//!
//! * [`ingest`] loads rasters, case counts and region masks, reduces rasters
//!   to regional means and buckets daily series into fixed windows;
//! * [`analytics`] sweeps forward delays of the case series and reports the
//!   Pearson correlation at each;
//! * [`lstm`] trains a recurrent model from a feature matrix (sources x time)
//!   to a target matrix (outputs x time);
//! * [`risk`] turns model output into time series of risk maps and
//!   evaluates what-if scenarios.

pub mod analytics;
pub mod error;
pub mod ingest;
pub mod labels;
pub mod lstm;
pub mod risk;
pub mod synth;

pub use error::{Error, ErrorClass, Result};
