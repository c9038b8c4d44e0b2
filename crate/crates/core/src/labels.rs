//! Synthetic risk labels derived from future case growth.
//!
//! No labelled risk dataset exists, so training targets are synthesised
//! from bucketed case counts. For bucket `t` the label is the mean of the
//! case buckets `t + lead .. t + lead + horizon`, divided by the largest
//! such mean in the series, clamped to `[floor, 1 - floor]`, and mapped
//! through the logit so that the model's logistic squash recovers it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{AlignedPair, BucketedSeries};
use crate::lstm::{FeatureMatrix, Sample, TargetMatrix};

pub const LABEL_PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelProtocol {
    pub version: u32,
    /// Shift in buckets, normally the best delay found by the lag sweep.
    pub lead_buckets: usize,
    /// Window of future buckets averaged; 3 five-day buckets = 15 days.
    pub horizon_buckets: usize,
    pub floor: f64,
}

impl Default for LabelProtocol {
    fn default() -> Self {
        LabelProtocol {
            version: LABEL_PROTOCOL_VERSION,
            lead_buckets: 3,
            horizon_buckets: 3,
            floor: 0.01,
        }
    }
}

/// Risk in `[floor, 1 - floor]` per bucket; `None` where the forward
/// window runs past the data or is all gaps.
pub fn risk_labels(cases: &BucketedSeries, protocol: &LabelProtocol) -> Result<Vec<Option<f64>>> {
    if protocol.version != LABEL_PROTOCOL_VERSION {
        return Err(Error::UnsupportedFormat(format!(
            "label protocol version {}",
            protocol.version
        )));
    }
    if protocol.horizon_buckets == 0 || !(0.0 < protocol.floor && protocol.floor < 0.5) {
        return Err(Error::Validation(
            "label protocol needs horizon >= 1 and 0 < floor < 0.5".into(),
        ));
    }
    let means = cases.means();
    let n = means.len();
    let forward: Vec<Option<f64>> = (0..n)
        .map(|t| {
            let lo = t + protocol.lead_buckets;
            let hi = lo + protocol.horizon_buckets;
            if hi > n {
                return None;
            }
            let present: Vec<f64> = means[lo..hi].iter().flatten().copied().collect();
            (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
        })
        .collect();
    let peak = forward.iter().flatten().fold(0.0f64, |m, v| m.max(*v));
    if peak <= 0.0 {
        return Err(Error::Empty(
            "no positive forward case counts to normalise against".into(),
        ));
    }
    Ok(forward
        .into_iter()
        .map(|f| f.map(|v| (v / peak).clamp(protocol.floor, 1.0 - protocol.floor)))
        .collect())
}

/// Inverse of the logistic squash.
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// One training sample from an aligned pair: the pollutant bucket means
/// (gaps interpolated, divided by their mean so a scenario factor of 0.5
/// halves the pollutant) against the logit of the risk labels.
///
/// The sequence ends at the last bucket with a label; interior buckets
/// without one reuse the previous label.
pub fn training_sample(pair: &AlignedPair, source_label: &str, protocol: &LabelProtocol) -> Result<Sample> {
    let labels = risk_labels(&pair.cases, protocol)?;
    let Some(last) = labels.iter().rposition(Option::is_some) else {
        return Err(Error::Empty("series too short for the label horizon".into()));
    };
    let pollutant: Vec<f64> = pair.pollutant.interpolate_linear().means()[..=last]
        .iter()
        .map(|v| v.ok_or_else(|| Error::Empty("pollutant bucket could not be interpolated".into())))
        .collect::<Result<_>>()?;
    let scale = pollutant.iter().sum::<f64>() / pollutant.len() as f64;
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::Validation(format!(
            "pollutant mean {scale} cannot be used as a scale"
        )));
    }
    let first = labels[..=last]
        .iter()
        .flatten()
        .next()
        .copied()
        .unwrap_or(protocol.floor);
    let mut prev = first;
    let targets: Vec<f64> = labels[..=last]
        .iter()
        .map(|l| {
            prev = l.unwrap_or(prev);
            logit(prev)
        })
        .collect();
    Ok((
        FeatureMatrix::from_rows(
            vec![source_label.to_string()],
            vec![pollutant.iter().map(|v| v / scale).collect()],
        )?,
        TargetMatrix::from_rows(vec![targets])?,
    ))
}
