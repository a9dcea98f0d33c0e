//! Fully connected regressor trained with mini-batch Adam on half mean
//! squared error, with early stopping on an internal validation split.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TrainingMeta;
use crate::error::{Error, Result};
use crate::features::ColumnStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Logistic,
    Tanh,
    Relu,
}

impl Activation {
    pub const ALL: [Activation; 3] = [Activation::Logistic, Activation::Tanh, Activation::Relu];

    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Logistic => z.mapv_inplace(|v| 1.0 / (1.0 + (-v).exp())),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
        }
    }

    /// Multiply `delta` by the derivative, expressed through the output `a`.
    fn backprop(self, delta: &mut Array2<f64>, a: &Array2<f64>) {
        match self {
            Activation::Logistic => Zip::from(delta).and(a).for_each(|d, &a| *d *= a * (1.0 - a)),
            Activation::Tanh => Zip::from(delta).and(a).for_each(|d, &a| *d *= 1.0 - a * a),
            Activation::Relu => Zip::from(delta).and(a).for_each(|d, &a| {
                if a <= 0.0 {
                    *d = 0.0
                }
            }),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MlpConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub validation_fraction: f64,
    pub n_iter_no_change: usize,
    pub tol: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            max_epochs: 300,
            batch_size: 256,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            validation_fraction: 0.1,
            n_iter_no_change: 20,
            tol: 1e-5,
        }
    }
}

/// Dense layer; `weights` is row-major `n_in × n_out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn w(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.n_in, self.n_out), &self.weights).expect("layer shape")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpNetwork {
    pub activation: Activation,
    pub layers: Vec<Layer>,
}

/// Gradient of the loss with respect to every layer's weights and bias.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied().collect::<Vec<_>>())
            .collect()
    }
}

impl MlpNetwork {
    /// Glorot-uniform initialization; `sizes` includes input and output widths.
    pub fn init(sizes: &[usize], activation: Activation, rng: &mut impl Rng) -> Self {
        let factor = if activation == Activation::Logistic { 2.0 } else { 6.0 };
        let layers = sizes
            .windows(2)
            .map(|p| {
                let (n_in, n_out) = (p[0], p[1]);
                let bound = (factor / (n_in + n_out) as f64).sqrt();
                Layer {
                    n_in,
                    n_out,
                    weights: (0..n_in * n_out).map(|_| rng.random_range(-bound..bound)).collect(),
                    bias: (0..n_out).map(|_| rng.random_range(-bound..bound)).collect(),
                }
            })
            .collect();
        Self { activation, layers }
    }

    /// Layer outputs, input first, final (linear) output last.
    fn forward_all(&self, x: ArrayView2<'_, f64>) -> Vec<Array2<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_owned());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = acts[l].dot(&layer.w());
            z += &ArrayView1::from(&layer.bias);
            if l + 1 < self.layers.len() {
                self.activation.apply(&mut z);
            }
            acts.push(z);
        }
        acts
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let mut a = x.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.w());
            z += &ArrayView1::from(&layer.bias);
            if l + 1 < self.layers.len() {
                self.activation.apply(&mut z);
            }
            a = z;
        }
        a.column(0).to_vec()
    }

    /// Half mean squared error and its exact gradient.
    pub fn loss_and_gradient(&self, x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> (f64, Gradients) {
        let b = x.nrows() as f64;
        let acts = self.forward_all(x);
        let out = acts.last().expect("output layer");
        let mut delta = out.clone();
        Zip::from(delta.column_mut(0)).and(&y).for_each(|d, &t| *d -= t);
        let loss = 0.5 * delta.iter().map(|d| d * d).sum::<f64>() / b;
        delta /= b;

        let n = self.layers.len();
        let mut gw = Vec::with_capacity(n);
        let mut gb = Vec::with_capacity(n);
        for l in (0..n).rev() {
            gw.push(acts[l].t().dot(&delta));
            gb.push(delta.sum_axis(Axis(0)));
            if l > 0 {
                let mut prev = delta.dot(&self.layers[l].w().t());
                self.activation.backprop(&mut prev, &acts[l]);
                delta = prev;
            }
        }
        gw.reverse();
        gb.reverse();
        (loss, Gradients { weights: gw, biases: gb })
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Parameters in the same order as [`Gradients::flatten`].
    pub fn params_flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias).copied()).collect()
    }

    pub fn set_params_flat(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.n_params());
        let mut it = p.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|v| *v = it.next().unwrap());
        }
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, net: &mut MlpNetwork, grad: &Gradients, cfg: &MlpConfig) {
        self.t += 1;
        let lr = cfg.learning_rate * (1.0 - cfg.beta2.powi(self.t)).sqrt()
            / (1.0 - cfg.beta1.powi(self.t));
        let mut k = 0;
        for (l, layer) in net.layers.iter_mut().enumerate() {
            let grads = grad.weights[l].iter().chain(grad.biases[l].iter());
            for (p, g) in layer.weights.iter_mut().chain(layer.bias.iter_mut()).zip(grads) {
                self.m[k] = cfg.beta1 * self.m[k] + (1.0 - cfg.beta1) * g;
                self.v[k] = cfg.beta2 * self.v[k] + (1.0 - cfg.beta2) * g * g;
                *p -= lr * self.m[k] / (self.v[k].sqrt() + cfg.epsilon);
                k += 1;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub stats: ColumnStats,
    pub network: MlpNetwork,
}

impl MlpModel {
    pub(super) fn fit(
        x: ArrayView2<'_, f64>,
        y: &[f64],
        activation: Activation,
        hidden: &[usize],
        cfg: &MlpConfig,
        seed: u64,
    ) -> Result<(Self, TrainingMeta)> {
        let stats = ColumnStats::fit(x)?;
        let z = stats.apply(x)?;
        let y = Array1::from(y.to_vec());
        let n = z.nrows();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let n_val = ((n as f64 * cfg.validation_fraction).round() as usize).clamp(1, n - 1);
        let (val_idx, train_idx) = perm.split_at(n_val);
        let mut train_idx = train_idx.to_vec();
        let xv = z.select(Axis(0), val_idx);
        let yv = y.select(Axis(0), val_idx);
        // Training rows gathered once; batches are contiguous slices of a
        // shuffled copy.
        let mut xt = z.select(Axis(0), &train_idx);
        let mut yt = y.select(Axis(0), &train_idx);

        let mut sizes = vec![z.ncols()];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mut net = MlpNetwork::init(&sizes, activation, &mut rng);
        let mut adam = Adam::new(net.n_params());
        let batch = cfg.batch_size.min(train_idx.len()).max(1);

        let mut best_val = f64::INFINITY;
        let mut best_params = net.params_flat();
        let mut stale = 0;
        let mut history = Vec::new();
        let mut epochs = 0;
        for _ in 0..cfg.max_epochs {
            epochs += 1;
            let mut order: Vec<usize> = (0..train_idx.len()).collect();
            order.shuffle(&mut rng);
            xt = xt.select(Axis(0), &order);
            yt = yt.select(Axis(0), &order);
            train_idx = order.iter().map(|&i| train_idx[i]).collect();
            let mut epoch_loss = 0.0;
            let mut start = 0;
            while start < train_idx.len() {
                let end = (start + batch).min(train_idx.len());
                let (loss, grad) =
                    net.loss_and_gradient(xt.slice(s![start..end, ..]), yt.slice(s![start..end]));
                epoch_loss += 2.0 * loss * (end - start) as f64;
                adam.step(&mut net, &grad, cfg);
                start = end;
            }
            let train_mse = epoch_loss / train_idx.len() as f64;
            if !train_mse.is_finite() {
                return Err(Error::InvalidData("MLP training diverged".into()));
            }
            history.push(train_mse);

            let pv = net.forward(xv.view());
            let val_mse = super::mse(&pv, yv.as_slice().expect("contiguous"));
            if val_mse < best_val - cfg.tol {
                best_val = val_mse;
                best_params = net.params_flat();
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.n_iter_no_change {
                    break;
                }
            }
        }
        net.set_params_flat(&best_params);
        let model = Self { stats, network: net };
        let loss = super::mse(&model.predict(x), y.as_slice().expect("contiguous"));
        Ok((model, TrainingMeta { iterations: epochs, final_training_loss: loss, loss_history: history }))
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let z = self.stats.apply(x).expect("column count checked by caller");
        self.network.forward(z.view())
    }
}
