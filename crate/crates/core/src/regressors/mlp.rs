//! Fully connected feed-forward network with a single linear output, trained
//! by Adam with optional L1/L2 weight penalties.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, LossMode, Matrix, ModelError};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpParams {
    pub loss: LossMode,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub l1: f64,
    pub l2: f64,
    pub adam: AdamParams,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            loss: LossMode::Quantile(0.2),
            hidden: vec![32, 16],
            activation: Activation::Relu,
            l1: 0.0,
            l2: 1e-4,
            adam: AdamParams::default(),
            epochs: 50,
            batch_size: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major `n_out × n_in`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    pub activation: Activation,
    /// Mean training loss after each epoch.
    #[serde(default)]
    pub epoch_loss: Vec<f64>,
}

/// Rows per gradient chunk. Chunks are summed in order so the result does not
/// depend on the number of threads.
const CHUNK: usize = 32;

impl Mlp {
    pub fn new(n_in: usize, hidden: &[usize], activation: Activation, rng: &mut impl Rng) -> Self {
        let mut widths = vec![n_in];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let layers = widths
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let s = (6.0 / (n_in + n_out) as f64).sqrt();
                Layer {
                    n_in,
                    n_out,
                    weights: (0..n_in * n_out).map(|_| rng.gen_range(-s..s)).collect(),
                    bias: vec![0.0; n_out],
                }
            })
            .collect();
        Self {
            layers,
            activation,
            epoch_loss: Vec::new(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Parameters flattened layer by layer, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params(), "parameter count mismatch");
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&flat[at..at + nw]);
            at += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[at..at + nb]);
            at += nb;
        }
    }

    fn weight_mask(&self) -> Vec<bool> {
        let mut mask = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            mask.extend(std::iter::repeat_n(true, l.weights.len()));
            mask.extend(std::iter::repeat_n(false, l.bias.len()));
        }
        mask
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut a = x.to_vec();
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            let mut z = l.bias.clone();
            for (o, zo) in z.iter_mut().enumerate() {
                *zo += l.weights[o * l.n_in..(o + 1) * l.n_in]
                    .iter()
                    .zip(&a)
                    .map(|(w, v)| w * v)
                    .sum::<f64>();
            }
            if k < last {
                z.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
            a = z;
        }
        a[0]
    }

    /// Adds the gradient of `loss(y, f(x))` to `grad` and returns the loss.
    fn backprop_row(&self, x: &[f64], y: f64, loss: LossMode, grad: &mut [f64]) -> f64 {
        let last = self.layers.len() - 1;
        let mut zs: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for (k, l) in self.layers.iter().enumerate() {
            let input = &acts[k];
            let z: Vec<f64> = (0..l.n_out)
                .map(|o| {
                    l.bias[o]
                        + l.weights[o * l.n_in..(o + 1) * l.n_in]
                            .iter()
                            .zip(input)
                            .map(|(w, v)| w * v)
                            .sum::<f64>()
                })
                .collect();
            let a = if k < last {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            } else {
                z.clone()
            };
            zs.push(z);
            acts.push(a);
        }
        let out = acts[self.layers.len()][0];
        let mut delta = vec![loss.derivative(y, out)];

        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut at = 0;
        for l in &self.layers {
            offsets.push(at);
            at += l.weights.len() + l.bias.len();
        }
        for k in (0..self.layers.len()).rev() {
            let l = &self.layers[k];
            let input = &acts[k];
            let off = offsets[k];
            for (o, &d) in delta.iter().enumerate() {
                let row = &mut grad[off + o * l.n_in..off + (o + 1) * l.n_in];
                for (g, v) in row.iter_mut().zip(input) {
                    *g += d * v;
                }
                grad[off + l.weights.len() + o] += d;
            }
            if k > 0 {
                let mut prev = vec![0.0; l.n_in];
                for (o, &d) in delta.iter().enumerate() {
                    for (p, w) in prev.iter_mut().zip(&l.weights[o * l.n_in..(o + 1) * l.n_in]) {
                        *p += d * w;
                    }
                }
                for (i, p) in prev.iter_mut().enumerate() {
                    *p *= self.activation.derivative(zs[k - 1][i], acts[k][i]);
                }
                delta = prev;
            }
        }
        loss.loss(y, out)
    }

    /// Mean loss over `rows` plus `l1·Σ|w| + l2·Σw²` over weights, and its
    /// gradient with respect to [`Mlp::params`].
    pub fn objective_and_gradient(
        &self,
        x: &Matrix,
        y: &[f64],
        rows: &[usize],
        loss: LossMode,
        l1: f64,
        l2: f64,
    ) -> (f64, Vec<f64>) {
        let p = self.n_params();
        let partial: Vec<(f64, Vec<f64>)> = rows
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut g = vec![0.0; p];
                let l: f64 = chunk.iter().map(|&i| self.backprop_row(x.row(i), y[i], loss, &mut g)).sum();
                (l, g)
            })
            .collect();
        let mut grad = vec![0.0; p];
        let mut total = 0.0;
        for (l, g) in partial {
            total += l;
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        let inv = 1.0 / rows.len() as f64;
        total *= inv;
        grad.iter_mut().for_each(|g| *g *= inv);
        if l1 != 0.0 || l2 != 0.0 {
            for ((g, w), is_weight) in grad.iter_mut().zip(self.params()).zip(self.weight_mask()) {
                if is_weight {
                    total += l1 * w.abs() + l2 * w * w;
                    *g += l1 * if w > 0.0 { 1.0 } else if w < 0.0 { -1.0 } else { 0.0 } + 2.0 * l2 * w;
                }
            }
        }
        (total, grad)
    }

    fn mean_loss(&self, data: &FeatureMatrix, loss: LossMode) -> f64 {
        let parts: Vec<f64> = (0..data.n())
            .collect::<Vec<_>>()
            .par_chunks(CHUNK * 8)
            .map(|c| c.iter().map(|&i| loss.loss(data.y[i], self.predict_row(data.x.row(i)))).sum::<f64>())
            .collect();
        parts.iter().sum::<f64>() / data.n() as f64
    }
}

/// First- and second-moment state of Adam.
#[derive(Debug, Clone)]
pub struct Adam {
    params: AdamParams,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(params: AdamParams, n: usize) -> Self {
        Self {
            params,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let AdamParams {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.params;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        for (((th, g), m), v) in theta.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *th -= learning_rate * (*m / c1) / ((*v / c2).sqrt() + epsilon);
        }
    }
}

/// Expects standardized features. The output bias starts at the loss-optimal
/// constant so training begins from the best constant predictor.
pub fn fit_mlp(data: &FeatureMatrix, params: &MlpParams, seed: u64) -> Result<Mlp, ModelError> {
    params.loss.validate()?;
    if params.hidden.contains(&0) {
        return Err(ModelError::Config("hidden layer widths must be at least 1".into()));
    }
    if params.batch_size == 0 || !(params.adam.learning_rate > 0.0) || params.l1 < 0.0 || params.l2 < 0.0 {
        return Err(ModelError::Config(format!("invalid network parameters {params:?}")));
    }
    let mut init_rng = seed::rng(seed, "mlp-init", 0);
    let mut net = Mlp::new(data.d(), &params.hidden, params.activation, &mut init_rng);
    let out = net.layers.last_mut().expect("output layer");
    out.bias[0] = params.loss.optimal_constant(&mut data.y.clone());

    let mut theta = net.params();
    let mut adam = Adam::new(params.adam, theta.len());
    let mut order: Vec<usize> = (0..data.n()).collect();
    let mut last_stable = None;
    for epoch in 0..params.epochs {
        order.shuffle(&mut seed::rng(seed, "mlp-epoch", epoch as u64));
        for batch in order.chunks(params.batch_size) {
            let (_, grad) = net.objective_and_gradient(&data.x, &data.y, batch, params.loss, params.l1, params.l2);
            adam.step(&mut theta, &grad);
            net.set_params(&theta);
        }
        let l = net.mean_loss(data, params.loss);
        if !l.is_finite() || theta.iter().any(|t| !t.is_finite()) {
            return Err(ModelError::Diverged { epoch, last_stable });
        }
        net.epoch_loss.push(l);
        last_stable = Some(epoch);
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regressors::fit_linear_ols;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fm(rows: Vec<Vec<f64>>, y: Vec<f64>) -> FeatureMatrix {
        FeatureMatrix::new(Matrix::from_rows(&rows).unwrap(), y).unwrap()
    }

    fn random_data(n: usize, d: usize, seed: u64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect()).collect();
        let y = rows.iter().map(|r| r.iter().sum::<f64>().sin() * 3.0 + 5.0).collect();
        fm(rows, y)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let data = random_data(20, 3, 1);
        let rows: Vec<usize> = (0..20).collect();
        for act in [Activation::Relu, Activation::Tanh, Activation::Sigmoid] {
            let mut net = Mlp::new(3, &[5, 4], act, &mut ChaCha8Rng::seed_from_u64(2));
            let (_, grad) = net.objective_and_gradient(&data.x, &data.y, &rows, LossMode::Mse, 0.01, 0.02);
            let theta = net.params();
            let mut pick = ChaCha8Rng::seed_from_u64(3);
            for _ in 0..10 {
                let k = pick.gen_range(0..theta.len());
                let eps = 1e-5;
                let mut plus = theta.clone();
                plus[k] += eps;
                net.set_params(&plus);
                let (fp, _) = net.objective_and_gradient(&data.x, &data.y, &rows, LossMode::Mse, 0.01, 0.02);
                let mut minus = theta.clone();
                minus[k] -= eps;
                net.set_params(&minus);
                let (fm_, _) = net.objective_and_gradient(&data.x, &data.y, &rows, LossMode::Mse, 0.01, 0.02);
                net.set_params(&theta);
                let numeric = (fp - fm_) / (2.0 * eps);
                let rel = (numeric - grad[k]).abs() / numeric.abs().max(grad[k].abs()).max(1e-7);
                assert!(rel < 1e-4, "{act:?} param {k}: {numeric} vs {}", grad[k]);
            }
        }
    }

    #[test]
    fn zero_gradient_adam_step_is_identity() {
        let mut theta = vec![0.3, -1.2, 4.0];
        let before = theta.clone();
        let mut adam = Adam::new(AdamParams::default(), 3);
        adam.step(&mut theta, &[0.0; 3]);
        assert_eq!(theta, before);
    }

    #[test]
    fn linear_network_matches_ols() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<Vec<f64>> = (0..100).map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let y: Vec<f64> = rows.iter().map(|r| 3.0 + 2.0 * r[0] - 1.0 * r[1]).collect();
        let data = fm(rows.clone(), y);
        let ols = fit_linear_ols(&data).unwrap();
        let params = MlpParams {
            loss: LossMode::Mse,
            hidden: vec![],
            l1: 0.0,
            l2: 0.0,
            adam: AdamParams {
                learning_rate: 0.02,
                ..AdamParams::default()
            },
            epochs: 400,
            batch_size: 20,
            ..MlpParams::default()
        };
        let net = fit_mlp(&data, &params, 5).unwrap();
        for r in &rows {
            assert!((net.predict_row(r) - ols.predict_row(r)).abs() < 0.05);
        }
    }

    #[test]
    fn fits_are_reproducible_and_reduce_loss() {
        let data = random_data(200, 2, 6);
        let params = MlpParams {
            loss: LossMode::Quantile(0.3),
            hidden: vec![8],
            activation: Activation::Tanh,
            adam: AdamParams {
                learning_rate: 0.01,
                ..AdamParams::default()
            },
            epochs: 30,
            ..MlpParams::default()
        };
        let a = fit_mlp(&data, &params, 7).unwrap();
        let b = fit_mlp(&data, &params, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.epoch_loss.last().unwrap() < a.epoch_loss.first().unwrap());
    }

    #[test]
    fn divergence_and_bad_widths() {
        let data = fm(vec![vec![1e200], vec![-1e200]], vec![0.0, 1e300]);
        let params = MlpParams {
            loss: LossMode::Mse,
            hidden: vec![],
            epochs: 3,
            ..MlpParams::default()
        };
        assert!(matches!(fit_mlp(&data, &params, 0), Err(ModelError::Diverged { .. })));
        let bad = MlpParams {
            hidden: vec![4, 0],
            ..MlpParams::default()
        };
        assert!(matches!(fit_mlp(&random_data(10, 1, 0), &bad, 0), Err(ModelError::Config(_))));
    }
}
