//! Single-layer LSTM sequence model trained by full-batch gradient descent
//! with backpropagation through time.
//!
//! Gate equations, per step, on `z = [x_t; h_{t-1}]`:
//!
//! ```text
//! i = σ(W_i z + b_i)    f = σ(W_f z + b_f)    o = σ(W_o z + b_o)
//! g = tanh(W_c z + b_c)
//! c_t = f ⊙ c_{t-1} + i ⊙ g
//! h_t = o ⊙ tanh(c_t)
//! y_t = W_y h_t + b_y
//! ```

mod grad;
mod matrix;
mod model;
mod train;

pub use grad::{
    backward, compare_with_finite_differences, gradient_check, loss, relative_error, Backprop, GradCheckReport,
    GRADCHECK_FLOOR,
};
pub use matrix::{FeatureMatrix, TargetMatrix};
pub use model::{CellState, LstmModel, Params, FORGET_BIAS_INIT, MODEL_FORMAT_VERSION, TENSOR_NAMES};
pub use train::{batch_gradient, train, train_with_progress, LossKind, Sample, TrainConfig, TrainRecord};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// On-disk training set: `{"samples": [{"features": ..., "targets": ...}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub samples: Vec<SampleDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleDoc {
    pub features: FeatureMatrix,
    pub targets: TargetMatrix,
}

impl SampleSet {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("sample set serializes")
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples.into_iter().map(|s| (s.features, s.targets)).collect()
    }

    pub fn from_samples(samples: &[Sample]) -> Self {
        SampleSet {
            samples: samples
                .iter()
                .map(|(x, y)| SampleDoc {
                    features: x.clone(),
                    targets: y.clone(),
                })
                .collect(),
        }
    }
}
