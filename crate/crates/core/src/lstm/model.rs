use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{FeatureMatrix, TargetMatrix};
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Initial forget-gate bias; keeps the memory path open early in training.
pub const FORGET_BIAS_INIT: f64 = 1.0;

/// Every trainable tensor of the network. Also used as the gradient
/// container, since gradients have exactly the same shapes.
///
/// Gate matrices are `n_hidden x (n_in + n_hidden)`, row-major, acting on the
/// concatenation `[x_t; h_{t-1}]`. `w_y` is `n_out x n_hidden`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub w_i: Vec<f64>,
    pub w_f: Vec<f64>,
    pub w_o: Vec<f64>,
    pub w_c: Vec<f64>,
    pub b_i: Vec<f64>,
    pub b_f: Vec<f64>,
    pub b_o: Vec<f64>,
    pub b_c: Vec<f64>,
    pub w_y: Vec<f64>,
    pub b_y: Vec<f64>,
}

pub const TENSOR_NAMES: [&str; 10] = ["w_i", "w_f", "w_o", "w_c", "b_i", "b_f", "b_o", "b_c", "w_y", "b_y"];

impl Params {
    pub fn zeros(n_in: usize, n_hidden: usize, n_out: usize) -> Self {
        let gate = n_hidden * (n_in + n_hidden);
        Params {
            w_i: vec![0.0; gate],
            w_f: vec![0.0; gate],
            w_o: vec![0.0; gate],
            w_c: vec![0.0; gate],
            b_i: vec![0.0; n_hidden],
            b_f: vec![0.0; n_hidden],
            b_o: vec![0.0; n_hidden],
            b_c: vec![0.0; n_hidden],
            w_y: vec![0.0; n_out * n_hidden],
            b_y: vec![0.0; n_out],
        }
    }

    /// Tensors in [`TENSOR_NAMES`] order.
    pub fn tensors(&self) -> [&[f64]; 10] {
        [
            &self.w_i, &self.w_f, &self.w_o, &self.w_c, &self.b_i, &self.b_f, &self.b_o, &self.b_c, &self.w_y,
            &self.b_y,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 10] {
        [
            &mut self.w_i,
            &mut self.w_f,
            &mut self.w_o,
            &mut self.w_c,
            &mut self.b_i,
            &mut self.b_f,
            &mut self.b_o,
            &mut self.b_c,
            &mut self.w_y,
            &mut self.b_y,
        ]
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Vec<f64>> {
        let idx = TENSOR_NAMES.iter().position(|n| *n == name)?;
        Some(self.tensors_mut().into_iter().nth(idx).unwrap())
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= k);
        }
    }

    /// `self += k * other`
    pub fn add_scaled(&mut self, other: &Params, k: f64) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += k * s);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    n_in: usize,
    n_hidden: usize,
    n_out: usize,
    seed: u64,
    pub params: Params,
}

/// Hidden output and memory carried between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl CellState {
    pub fn zeros(n_hidden: usize) -> Self {
        CellState {
            h: vec![0.0; n_hidden],
            c: vec![0.0; n_hidden],
        }
    }
}

/// Intermediate activations of one step, kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    pub z: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    pub g: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `w (rows x z.len()) * z + b`
fn affine(w: &[f64], b: &[f64], z: &[f64]) -> Vec<f64> {
    let cols = z.len();
    b.iter()
        .enumerate()
        .map(|(r, bias)| {
            let row = &w[r * cols..(r + 1) * cols];
            bias + row.iter().zip(z).map(|(a, x)| a * x).sum::<f64>()
        })
        .collect()
}

impl LstmModel {
    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` weights from a seeded
    /// ChaCha8 stream; biases zero except the forget gate.
    pub fn init(n_in: usize, n_hidden: usize, n_out: usize, seed: u64) -> Result<Self> {
        let mut model = LstmModel::zeros(n_in, n_hidden, n_out)?;
        model.seed = seed;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gate_bound = 1.0 / ((n_in + n_hidden) as f64).sqrt();
        let out_bound = 1.0 / (n_hidden as f64).sqrt();
        let p = &mut model.params;
        for w in [&mut p.w_i, &mut p.w_f, &mut p.w_o, &mut p.w_c] {
            w.iter_mut()
                .for_each(|v| *v = rng.random_range(-gate_bound..=gate_bound));
        }
        p.w_y
            .iter_mut()
            .for_each(|v| *v = rng.random_range(-out_bound..=out_bound));
        p.b_f.iter_mut().for_each(|v| *v = FORGET_BIAS_INIT);
        Ok(model)
    }

    /// All weights and biases zero.
    pub fn zeros(n_in: usize, n_hidden: usize, n_out: usize) -> Result<Self> {
        if n_in == 0 || n_hidden == 0 || n_out == 0 {
            return Err(Error::Validation(format!(
                "model dimensions must be positive, got n_in={n_in} n_hidden={n_hidden} n_out={n_out}"
            )));
        }
        Ok(LstmModel {
            n_in,
            n_hidden,
            n_out,
            seed: 0,
            params: Params::zeros(n_in, n_hidden, n_out),
        })
    }

    pub fn from_params(n_in: usize, n_hidden: usize, n_out: usize, seed: u64, params: Params) -> Result<Self> {
        let mut model = LstmModel::zeros(n_in, n_hidden, n_out)?;
        model.seed = seed;
        let expected = model.params.tensors().map(|t| t.len());
        for ((name, want), got) in TENSOR_NAMES.iter().zip(expected).zip(params.tensors()) {
            if got.len() != want {
                return Err(Error::Dimension(format!(
                    "tensor {name} has {} values, expected {want}",
                    got.len()
                )));
            }
        }
        if !params.all_finite() {
            return Err(Error::NonFinite("model weights".into()));
        }
        model.params = params;
        Ok(model)
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_hidden(&self) -> usize {
        self.n_hidden
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub(crate) fn step_cached(&self, x: &[f64], state: &CellState) -> StepCache {
        let p = &self.params;
        let mut z = Vec::with_capacity(self.n_in + self.n_hidden);
        z.extend_from_slice(x);
        z.extend_from_slice(&state.h);
        let i: Vec<f64> = affine(&p.w_i, &p.b_i, &z).into_iter().map(sigmoid).collect();
        let f: Vec<f64> = affine(&p.w_f, &p.b_f, &z).into_iter().map(sigmoid).collect();
        let o: Vec<f64> = affine(&p.w_o, &p.b_o, &z).into_iter().map(sigmoid).collect();
        let g: Vec<f64> = affine(&p.w_c, &p.b_c, &z).into_iter().map(f64::tanh).collect();
        let c: Vec<f64> = (0..self.n_hidden).map(|k| f[k] * state.c[k] + i[k] * g[k]).collect();
        let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        let h = o.iter().zip(&tanh_c).map(|(o, t)| o * t).collect();
        StepCache {
            z,
            i,
            f,
            o,
            g,
            c_prev: state.c.clone(),
            c,
            tanh_c,
            h,
        }
    }

    /// One recurrent step: consumes the current input plus the previous
    /// output and memory, returns the new output and the updated state.
    pub fn cell_step(&self, x: &[f64], state: &CellState) -> Result<(Vec<f64>, CellState)> {
        if x.len() != self.n_in {
            return Err(Error::Dimension(format!(
                "input has {} values, model expects {}",
                x.len(),
                self.n_in
            )));
        }
        if state.h.len() != self.n_hidden || state.c.len() != self.n_hidden {
            return Err(Error::Dimension(format!("state size must be {}", self.n_hidden)));
        }
        if x.iter().chain(&state.h).chain(&state.c).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("cell input".into()));
        }
        let cache = self.step_cached(x, state);
        Ok((cache.h.clone(), CellState { h: cache.h, c: cache.c }))
    }

    pub(crate) fn project(&self, h: &[f64]) -> Vec<f64> {
        affine(&self.params.w_y, &self.params.b_y, h)
    }

    pub(crate) fn check_input(&self, x: &FeatureMatrix) -> Result<()> {
        if x.n_sources() != self.n_in {
            return Err(Error::Dimension(format!(
                "feature matrix has {} sources, model expects {}",
                x.n_sources(),
                self.n_in
            )));
        }
        Ok(())
    }

    /// Unrolled pass from a zero state, returning the per-step caches and the
    /// `n_out x n_steps` projection.
    pub(crate) fn forward_cached(&self, x: &FeatureMatrix) -> Result<(Vec<StepCache>, TargetMatrix)> {
        self.check_input(x)?;
        let mut state = CellState::zeros(self.n_hidden);
        let mut caches = Vec::with_capacity(x.n_steps());
        let mut out = TargetMatrix::zeros(self.n_out, x.n_steps());
        for t in 0..x.n_steps() {
            let cache = self.step_cached(&x.column(t), &state);
            for (d, y) in self.project(&cache.h).into_iter().enumerate() {
                out.set(d, t, y);
            }
            state = CellState {
                h: cache.h.clone(),
                c: cache.c.clone(),
            };
            caches.push(cache);
        }
        Ok((caches, out))
    }

    /// Output `W_y h_t + b_y` at every step, from a fresh zero state.
    pub fn forward(&self, x: &FeatureMatrix) -> Result<TargetMatrix> {
        Ok(self.forward_cached(x)?.1)
    }

    /// Prediction on unseen data; identical to [`LstmModel::forward`].
    pub fn predict(&self, x: &FeatureMatrix) -> Result<TargetMatrix> {
        self.forward(x)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ModelDoc {
            format_version: MODEL_FORMAT_VERSION,
            n_in: self.n_in,
            n_hidden: self.n_hidden,
            n_out: self.n_out,
            seed: self.seed,
            weights: self.params.clone(),
        })
        .expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(text)?;
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::UnsupportedFormat(format!(
                "model format_version {}",
                doc.format_version
            )));
        }
        LstmModel::from_params(doc.n_in, doc.n_hidden, doc.n_out, doc.seed, doc.weights)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    format_version: u32,
    n_in: usize,
    n_hidden: usize,
    n_out: usize,
    seed: u64,
    weights: Params,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = LstmModel::init(3, 4, 2, 7).unwrap();
        let b = LstmModel::init(3, 4, 2, 7).unwrap();
        let c = LstmModel::init(3, 4, 2, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.params, c.params);
        assert!(a.params.b_f.iter().all(|v| *v == FORGET_BIAS_INIT));
        let bound = 1.0 / 7f64.sqrt();
        assert!(a.params.w_i.iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn zero_dims_rejected() {
        assert!(LstmModel::init(3, 0, 2, 1).is_err());
        assert!(LstmModel::init(0, 3, 2, 1).is_err());
    }

    #[test]
    fn zero_model_cell_step() {
        let m = LstmModel::zeros(1, 1, 1).unwrap();
        let (h, s) = m.cell_step(&[0.3], &CellState::zeros(1)).unwrap();
        assert_eq!(h, vec![0.0]);
        assert_eq!(s.c, vec![0.0]);

        // f = 0.5 halves the memory, g = 0 adds nothing, o = 0.5.
        let (h, s) = m
            .cell_step(
                &[0.0],
                &CellState {
                    h: vec![0.0],
                    c: vec![2.0],
                },
            )
            .unwrap();
        assert_eq!(s.c, vec![1.0]);
        assert!((h[0] - 0.5 * 1f64.tanh()).abs() < 1e-15);
        assert!((h[0] - 0.380797).abs() < 1e-6);
    }

    #[test]
    fn state_matters_with_recurrent_weights() {
        let m = LstmModel::init(2, 3, 1, 11).unwrap();
        let zero = CellState::zeros(3);
        let warm = CellState {
            h: vec![0.5, -0.2, 0.1],
            c: vec![1.0, 0.0, -1.0],
        };
        let (a, _) = m.cell_step(&[0.0, 0.0], &zero).unwrap();
        let (b, _) = m.cell_step(&[0.0, 0.0], &warm).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn non_finite_input_rejected() {
        let m = LstmModel::zeros(1, 1, 1).unwrap();
        assert!(matches!(
            m.cell_step(&[f64::NAN], &CellState::zeros(1)),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn bias_only_output() {
        let mut m = LstmModel::zeros(2, 3, 1).unwrap();
        m.params.b_y = vec![0.7];
        let x = FeatureMatrix::unlabeled(vec![vec![1.0, -2.0, 3.0], vec![0.5, 0.5, 0.5]]).unwrap();
        let y = m.forward(&x).unwrap();
        assert_eq!(y.shape(), (1, 3));
        assert!(y.as_slice().iter().all(|v| *v == 0.7));
        assert!(LstmModel::zeros(2, 3, 1)
            .unwrap()
            .forward(&x)
            .unwrap()
            .as_slice()
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn forward_rejects_wrong_source_count() {
        let m = LstmModel::zeros(3, 2, 1).unwrap();
        let x = FeatureMatrix::unlabeled(vec![vec![1.0]]).unwrap();
        assert!(matches!(m.forward(&x), Err(Error::Dimension(_))));
    }

    #[test]
    fn saturated_gates_accumulate_memory() {
        // i, f, o pinned open; candidate constant tanh(0.4). After t steps
        // the memory holds t * tanh(0.4) (to within sigmoid(50) rounding).
        let mut m = LstmModel::zeros(1, 1, 1).unwrap();
        m.params.b_i = vec![50.0];
        m.params.b_f = vec![50.0];
        m.params.b_o = vec![50.0];
        m.params.w_c = vec![0.4, 0.0];
        let mut s = CellState::zeros(1);
        for t in 1..=20 {
            s = m.cell_step(&[1.0], &s).unwrap().1;
            assert!((s.c[0] - t as f64 * 0.4f64.tanh()).abs() < 1e-6);
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let m = LstmModel::init(3, 5, 2, 99).unwrap();
        let again = LstmModel::from_json(&m.to_json()).unwrap();
        assert_eq!(m, again);
        assert_eq!(m.to_json(), again.to_json());
    }
}
