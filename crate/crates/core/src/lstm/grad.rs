//! Mean-squared-error loss, backpropagation through time, and a
//! central-difference gradient check.

use super::matrix::{FeatureMatrix, TargetMatrix};
use super::model::{LstmModel, Params, TENSOR_NAMES};
use crate::error::{Error, Result};

/// Denominator floor for the relative gradient error. Central differences at
/// epsilon 1e-5 carry about 1e-11 of rounding noise, so smaller entries are
/// judged on absolute error instead.
pub const GRADCHECK_FLOOR: f64 = 1e-6;

/// Mean squared error over all `p x q` entries.
pub fn loss(y_pred: &TargetMatrix, y_true: &TargetMatrix) -> Result<f64> {
    if y_pred.shape() != y_true.shape() {
        return Err(Error::Dimension(format!(
            "prediction is {:?}, target is {:?}",
            y_pred.shape(),
            y_true.shape()
        )));
    }
    let n = y_pred.as_slice().len() as f64;
    Ok(y_pred
        .as_slice()
        .iter()
        .zip(y_true.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// Weight gradients plus the gradient with respect to the input matrix.
#[derive(Debug, Clone)]
pub struct Backprop {
    pub loss: f64,
    pub grads: Params,
    /// `d loss / d X`, same layout as the input (sources x steps).
    pub input_grad: Vec<Vec<f64>>,
}

/// Exact gradients of the MSE loss over the full unrolled sequence.
#[allow(clippy::needless_range_loop)]
pub fn backward(model: &LstmModel, x: &FeatureMatrix, y_true: &TargetMatrix) -> Result<Backprop> {
    let (caches, y_pred) = model.forward_cached(x)?;
    let loss_value = loss(&y_pred, y_true)?;
    let (n_in, nh, n_out) = (model.n_in(), model.n_hidden(), model.n_out());
    let width = n_in + nh;
    let steps = x.n_steps();
    let scale = 2.0 / (n_out * steps) as f64;
    let p = &model.params;

    let mut g = Params::zeros(n_in, nh, n_out);
    let mut input_grad = vec![vec![0.0; steps]; n_in];
    let mut dh_next = vec![0.0; nh];
    let mut dc_next = vec![0.0; nh];

    for t in (0..steps).rev() {
        let s = &caches[t];
        let mut dh = dh_next.clone();
        for d in 0..n_out {
            let dy = scale * (y_pred.get(d, t) - y_true.get(d, t));
            g.b_y[d] += dy;
            for k in 0..nh {
                g.w_y[d * nh + k] += dy * s.h[k];
                dh[k] += dy * p.w_y[d * nh + k];
            }
        }

        // Pre-activation gradients of the four gates.
        let mut da_i = vec![0.0; nh];
        let mut da_f = vec![0.0; nh];
        let mut da_o = vec![0.0; nh];
        let mut da_c = vec![0.0; nh];
        for k in 0..nh {
            let dc = dh[k] * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]) + dc_next[k];
            da_o[k] = dh[k] * s.tanh_c[k] * s.o[k] * (1.0 - s.o[k]);
            da_i[k] = dc * s.g[k] * s.i[k] * (1.0 - s.i[k]);
            da_f[k] = dc * s.c_prev[k] * s.f[k] * (1.0 - s.f[k]);
            da_c[k] = dc * s.i[k] * (1.0 - s.g[k] * s.g[k]);
            dc_next[k] = dc * s.f[k];
        }

        let mut dz = vec![0.0; width];
        for (w, gw, gb, da) in [
            (&p.w_i, &mut g.w_i, &mut g.b_i, &da_i),
            (&p.w_f, &mut g.w_f, &mut g.b_f, &da_f),
            (&p.w_o, &mut g.w_o, &mut g.b_o, &da_o),
            (&p.w_c, &mut g.w_c, &mut g.b_c, &da_c),
        ] {
            for k in 0..nh {
                gb[k] += da[k];
                let row = k * width;
                for j in 0..width {
                    gw[row + j] += da[k] * s.z[j];
                    dz[j] += w[row + j] * da[k];
                }
            }
        }
        for (j, row) in input_grad.iter_mut().enumerate() {
            row[t] = dz[j];
        }
        dh_next.copy_from_slice(&dz[n_in..]);
    }

    Ok(Backprop {
        loss: loss_value,
        grads: g,
        input_grad,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_tensor: &'static str,
    pub worst_index: usize,
    pub checked: usize,
}

/// `|analytic - numeric| / max(|numeric|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / numeric.abs().max(GRADCHECK_FLOOR)
}

/// Compares `analytic` against central differences of the loss, perturbing
/// each parameter independently by `±epsilon`.
pub fn compare_with_finite_differences(
    model: &LstmModel,
    x: &FeatureMatrix,
    y_true: &TargetMatrix,
    epsilon: f64,
    analytic: &Params,
) -> Result<GradCheckReport> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Validation(format!("epsilon must be positive, got {epsilon}")));
    }
    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_tensor: TENSOR_NAMES[0],
        worst_index: 0,
        checked: 0,
    };
    for (t, name) in TENSOR_NAMES.iter().enumerate() {
        let len = analytic.tensors()[t].len();
        for idx in 0..len {
            let original = probe.params.tensors()[t][idx];
            probe.params.tensors_mut()[t][idx] = original + epsilon;
            let plus = loss(&probe.forward(x)?, y_true)?;
            probe.params.tensors_mut()[t][idx] = original - epsilon;
            let minus = loss(&probe.forward(x)?, y_true)?;
            probe.params.tensors_mut()[t][idx] = original;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let err = relative_error(analytic.tensors()[t][idx], numeric);
            report.checked += 1;
            if err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst_tensor = name;
                report.worst_index = idx;
            }
        }
    }
    Ok(report)
}

/// Worst relative discrepancy between [`backward`] and central differences.
pub fn gradient_check(model: &LstmModel, x: &FeatureMatrix, y_true: &TargetMatrix, epsilon: f64) -> Result<f64> {
    let bp = backward(model, x, y_true)?;
    Ok(compare_with_finite_differences(model, x, y_true, epsilon, &bp.grads)?.max_relative_error)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(seed: u64) -> (LstmModel, FeatureMatrix, TargetMatrix) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let model = LstmModel::init(3, 4, 2, seed).unwrap();
        let x = FeatureMatrix::unlabeled(
            (0..3)
                .map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect(),
        )
        .unwrap();
        let y = TargetMatrix::from_rows(
            (0..2)
                .map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect(),
        )
        .unwrap();
        (model, x, y)
    }

    #[test]
    fn loss_examples() {
        let a = TargetMatrix::from_rows(vec![vec![0.0, 0.0]]).unwrap();
        let b = TargetMatrix::from_rows(vec![vec![1.0, 3.0]]).unwrap();
        assert_eq!(loss(&a, &b).unwrap(), 5.0);
        assert_eq!(loss(&b, &b).unwrap(), 0.0);
        let doubled = TargetMatrix::from_rows(vec![vec![-1.0, -3.0]]).unwrap();
        assert_eq!(loss(&doubled, &b).unwrap(), 4.0 * loss(&a, &b).unwrap());
        assert!(loss(&a, &TargetMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn gradients_vanish_at_zero_residual() {
        let (model, x, _) = toy(3);
        let y = model.forward(&x).unwrap();
        let bp = backward(&model, &x, &y).unwrap();
        assert_eq!(bp.loss, 0.0);
        assert!(bp.grads.tensors().iter().all(|t| t.iter().all(|v| v.abs() < 1e-12)));
        // every ratio falls back to the absolute floor instead of dividing by ~0
        assert!(gradient_check(&model, &x, &y, 1e-5).unwrap().is_finite());
    }

    #[test]
    fn matches_finite_differences() {
        for seed in [1, 2, 3] {
            let (model, x, y) = toy(seed);
            let err = gradient_check(&model, &x, &y, 1e-5).unwrap();
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn doubled_forget_gradient_is_caught() {
        let (model, x, y) = toy(5);
        let mut bp = backward(&model, &x, &y).unwrap();
        bp.grads.w_f.iter_mut().for_each(|v| *v *= 2.0);
        let report = compare_with_finite_differences(&model, &x, &y, 1e-5, &bp.grads).unwrap();
        assert!(report.max_relative_error > 0.5, "{report:?}");
        assert_eq!(report.worst_tensor, "w_f");
    }

    #[test]
    fn bias_only_output_gradient_is_mean_residual() {
        // With zero gates h = 0, so y = b_y and dL/db_y[d] = 2/(p q) * sum_t (b_y[d] - y[d][t]).
        let mut model = LstmModel::zeros(2, 3, 2).unwrap();
        model.params.b_y = vec![0.5, -1.0];
        let x = FeatureMatrix::unlabeled(vec![vec![0.1, 0.2, 0.3], vec![1.0, 0.0, -1.0]]).unwrap();
        let y = TargetMatrix::from_rows(vec![vec![1.0, 2.0, 3.0], vec![0.0, 0.0, 3.0]]).unwrap();
        let bp = backward(&model, &x, &y).unwrap();
        let expected = [
            2.0 / 6.0 * ((0.5 - 1.0) + (0.5 - 2.0) + (0.5 - 3.0)),
            2.0 / 6.0 * ((-1.0 - 0.0) + (-1.0 - 0.0) + (-1.0 - 3.0)),
        ];
        for (g, e) in bp.grads.b_y.iter().zip(expected) {
            assert!((g - e).abs() < 1e-15, "{g} vs {e}");
        }
        assert!(bp.grads.w_y.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let (model, x, y) = toy(8);
        let bp = backward(&model, &x, &y).unwrap();
        let eps = 1e-6;
        for s in 0..x.n_sources() {
            for t in 0..x.n_steps() {
                let mut xp = x.clone();
                xp.set(s, t, x.get(s, t) + eps);
                let mut xm = x.clone();
                xm.set(s, t, x.get(s, t) - eps);
                let num = (loss(&model.forward(&xp).unwrap(), &y).unwrap()
                    - loss(&model.forward(&xm).unwrap(), &y).unwrap())
                    / (2.0 * eps);
                assert!(relative_error(bp.input_grad[s][t], num) < 1e-4);
            }
        }
    }

    #[test]
    fn non_positive_epsilon_rejected() {
        let (model, x, y) = toy(1);
        assert!(gradient_check(&model, &x, &y, 0.0).is_err());
    }
}
