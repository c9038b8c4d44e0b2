use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use super::grad::backward;
use super::matrix::{FeatureMatrix, TargetMatrix};
use super::model::{LstmModel, Params};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Mse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    #[serde(default)]
    pub loss: LossKind,
    /// Rescale the averaged gradient to this global L2 norm when exceeded.
    #[serde(default)]
    pub gradient_clip: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 500,
            loss: LossKind::Mse,
            gradient_clip: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Validation(format!(
                "learning_rate must be a finite non-negative number, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Validation("epochs must be at least 1".into()));
        }
        if let Some(c) = self.gradient_clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Validation(format!("gradient_clip must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

/// Loss at the start of each epoch (before that epoch's update).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainRecord {
    pub losses: Vec<f64>,
}

impl TrainRecord {
    /// CSV `epoch,loss`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss\n");
        for (i, l) in self.losses.iter().enumerate() {
            out.push_str(&format!("{i},{l}\n"));
        }
        out
    }

    pub fn initial(&self) -> Option<f64> {
        self.losses.first().copied()
    }

    pub fn last(&self) -> Option<f64> {
        self.losses.last().copied()
    }
}

pub type Sample = (FeatureMatrix, TargetMatrix);

fn check_dataset(model: &LstmModel, data: &[Sample]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Empty("training set has no samples".into()));
    }
    for (i, (x, y)) in data.iter().enumerate() {
        model
            .check_input(x)
            .map_err(|e| Error::Dimension(format!("sample {i}: {e}")))?;
        if y.shape() != (model.n_out(), x.n_steps()) {
            return Err(Error::Dimension(format!(
                "sample {i}: target is {:?}, model produces ({}, {})",
                y.shape(),
                model.n_out(),
                x.n_steps()
            )));
        }
    }
    Ok(())
}

/// Mean loss and mean gradient over the whole dataset, summed in sample order.
pub fn batch_gradient(model: &LstmModel, data: &[Sample]) -> Result<(f64, Params)> {
    let mut total = Params::zeros(model.n_in(), model.n_hidden(), model.n_out());
    let mut loss = 0.0;
    for (x, y) in data {
        let bp = backward(model, x, y)?;
        loss += bp.loss;
        total.add_scaled(&bp.grads, 1.0);
    }
    let n = data.len() as f64;
    total.scale(1.0 / n);
    Ok((loss / n, total))
}

/// Full-batch gradient descent.
pub fn train(model: &LstmModel, data: &[Sample], cfg: &TrainConfig) -> Result<(LstmModel, TrainRecord)> {
    train_with_progress(model, data, cfg, |_, _| ControlFlow::Continue(()))
}

/// As [`train`], calling `progress(epoch, loss)` after each epoch's loss is
/// known. Returning `ControlFlow::Break` stops early with the model so far.
pub fn train_with_progress(
    model: &LstmModel,
    data: &[Sample],
    cfg: &TrainConfig,
    mut progress: impl FnMut(usize, f64) -> ControlFlow<()>,
) -> Result<(LstmModel, TrainRecord)> {
    cfg.validate()?;
    check_dataset(model, data)?;
    let mut model = model.clone();
    let mut record = TrainRecord::default();
    for epoch in 0..cfg.epochs {
        let (loss, mut grad) = batch_gradient(&model, data)?;
        if !loss.is_finite() || !grad.all_finite() {
            return Err(Error::Diverged {
                epoch,
                loss,
                learning_rate: cfg.learning_rate,
            });
        }
        record.losses.push(loss);
        if let Some(clip) = cfg.gradient_clip {
            let norm = grad.l2_norm();
            if norm > clip {
                grad.scale(clip / norm);
            }
        }
        if cfg.learning_rate != 0.0 {
            model.params.add_scaled(&grad, -cfg.learning_rate);
        }
        if progress(epoch, loss).is_break() {
            break;
        }
    }
    Ok((model, record))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bias_task() -> (LstmModel, Vec<Sample>) {
        // Zero gate weights keep h at 0, so only b_y receives a gradient.
        let model = LstmModel::zeros(1, 2, 1).unwrap();
        let x = FeatureMatrix::unlabeled(vec![vec![0.3, -0.1, 0.8, 0.2]]).unwrap();
        let y = TargetMatrix::from_rows(vec![vec![0.7; 4]]).unwrap();
        (model, vec![(x, y)])
    }

    #[test]
    fn bias_only_fit_converges_monotonically() {
        let (model, data) = bias_task();
        let cfg = TrainConfig {
            learning_rate: 0.1,
            epochs: 60,
            ..Default::default()
        };
        let (trained, rec) = train(&model, &data, &cfg).unwrap();
        assert!(rec.losses.windows(2).all(|w| w[1] < w[0]));
        // b <- b - lr * 2 (b - 0.7)  =>  error shrinks by 0.8 per epoch
        let expected = 0.7 * (1.0 - 0.8f64.powi(60));
        assert!((trained.params.b_y[0] - expected).abs() < 1e-12);
        assert!((trained.params.b_y[0] - 0.7).abs() < 1e-3);
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let model = LstmModel::init(2, 3, 1, 4).unwrap();
        let x = FeatureMatrix::unlabeled(vec![vec![0.1, 0.2], vec![0.3, 0.4]]).unwrap();
        let y = TargetMatrix::from_rows(vec![vec![1.0, 0.0]]).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 5,
            ..Default::default()
        };
        let (trained, rec) = train(&model, &[(x, y)], &cfg).unwrap();
        assert_eq!(trained, model);
        assert!(rec.losses.iter().all(|l| *l == rec.losses[0]));
    }

    #[test]
    fn repeat_runs_are_bit_identical() {
        let model = LstmModel::init(2, 3, 1, 4).unwrap();
        let x = FeatureMatrix::unlabeled(vec![vec![0.1, 0.2, 0.5], vec![0.3, 0.4, -0.2]]).unwrap();
        let y = TargetMatrix::from_rows(vec![vec![1.0, 0.0, 0.5]]).unwrap();
        let data = vec![(x, y)];
        let cfg = TrainConfig {
            learning_rate: 0.3,
            epochs: 50,
            ..Default::default()
        };
        let (m1, r1) = train(&model, &data, &cfg).unwrap();
        let (m2, r2) = train(&model, &data, &cfg).unwrap();
        assert_eq!(r1.to_csv(), r2.to_csv());
        assert_eq!(m1.to_json(), m2.to_json());
    }

    #[test]
    fn divergence_is_reported() {
        let mut model = LstmModel::zeros(1, 1, 1).unwrap();
        model.params.w_y = vec![1.0];
        let x = FeatureMatrix::unlabeled(vec![vec![1.0, 1.0]]).unwrap();
        let y = TargetMatrix::from_rows(vec![vec![1e3, -1e3]]).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e12,
            epochs: 100,
            ..Default::default()
        };
        let err = train(&model, &[(x, y)], &cfg).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "{err}");
        assert!(err.to_string().contains("learning rate"));
    }

    #[test]
    fn clipping_bounds_the_step() {
        let (model, data) = bias_task();
        let cfg = TrainConfig {
            learning_rate: 1.0,
            epochs: 1,
            gradient_clip: Some(0.01),
            ..Default::default()
        };
        let (trained, _) = train(&model, &data, &cfg).unwrap();
        assert!((trained.params.b_y[0] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_config_and_shapes() {
        let (model, data) = bias_task();
        let bad = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        assert!(train(&model, &data, &bad).is_err());
        assert!(train(&model, &[], &TrainConfig::default()).is_err());
        let wrong = vec![(data[0].0.clone(), TargetMatrix::zeros(2, 4))];
        assert!(matches!(
            train(&model, &wrong, &TrainConfig::default()),
            Err(Error::Dimension(_))
        ));
    }
}
