//! Dense feed-forward networks with manual backpropagation, RMSprop, and a
//! patience-based learning-rate schedule.
//!
//! A model may carry a `frozen_output` map: a square linear layer applied
//! after the last dense layer. It participates in the forward pass and in
//! the chain rule, but [`backward`] never produces a gradient for it — its
//! weights are set externally by the orthogonalization step.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Tanh => math::tanh(x),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the post-activation value.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(width: usize, activation: Activation) -> Self {
        assert!(width >= 1, "layer width must be at least 1");
        Self { width, activation }
    }
}

/// One dense layer: `weights` is `in x out` row-major, bias one entry per
/// output unit.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    input_dim: usize,
    specs: Vec<LayerSpec>,
    layers: Vec<DenseLayer>,
    frozen_output: Option<Matrix>,
}

impl MlpModel {
    /// Fresh model with uniform Glorot-style fan-based weight init and zero
    /// biases. Weights are drawn row-major, so a fixed seed gives a
    /// bit-identical model.
    pub fn new<R: Rng>(input_dim: usize, specs: Vec<LayerSpec>, rng: &mut R) -> Self {
        assert!(!specs.is_empty(), "model needs at least one layer");
        let mut layers = Vec::with_capacity(specs.len());
        let mut fan_in = input_dim;
        for spec in &specs {
            let fan_out = spec.width;
            let limit = math::sqrt(6.0 / (fan_in + fan_out) as f64);
            let data = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-limit..limit))
                .collect();
            layers.push(DenseLayer {
                weights: Matrix::new(fan_in, fan_out, data),
                bias: vec![0.0; fan_out],
            });
            fan_in = fan_out;
        }
        Self {
            input_dim,
            specs,
            layers,
            frozen_output: None,
        }
    }

    /// Reassembles a model from stored weights, validating the dimension
    /// chain.
    pub fn from_parts(
        input_dim: usize,
        specs: Vec<LayerSpec>,
        layers: Vec<DenseLayer>,
        frozen_output: Option<Matrix>,
    ) -> Result<Self> {
        if specs.len() != layers.len() {
            return Err(Error::DimensionMismatch {
                expected: specs.len(),
                got: layers.len(),
            });
        }
        let mut fan_in = input_dim;
        for (spec, layer) in specs.iter().zip(&layers) {
            if layer.weights.rows() != fan_in {
                return Err(Error::DimensionMismatch {
                    expected: fan_in,
                    got: layer.weights.rows(),
                });
            }
            if layer.weights.cols() != spec.width || layer.bias.len() != spec.width {
                return Err(Error::DimensionMismatch {
                    expected: spec.width,
                    got: layer.weights.cols(),
                });
            }
            fan_in = spec.width;
        }
        if let Some(f) = &frozen_output {
            if f.rows() != fan_in || f.cols() != fan_in {
                return Err(Error::DimensionMismatch {
                    expected: fan_in,
                    got: f.rows(),
                });
            }
        }
        Ok(Self {
            input_dim,
            specs,
            layers,
            frozen_output,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.specs.last().map(|s| s.width).unwrap_or(self.input_dim)
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn frozen_output(&self) -> Option<&Matrix> {
        self.frozen_output.as_ref()
    }

    pub fn set_frozen_output(&mut self, map: Matrix) {
        let k = self.output_dim();
        assert_eq!(
            (map.rows(), map.cols()),
            (k, k),
            "frozen output map must be {k}x{k}"
        );
        self.frozen_output = Some(map);
    }
}

/// Post-activation values recorded by [`forward`]: the input batch followed
/// by each layer's outputs, before the frozen output map.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    activations: Vec<Matrix>,
}

impl ForwardCache {
    /// Outputs of the last dense layer (the inputs to the frozen map).
    pub fn pre_output(&self) -> &Matrix {
        self.activations.last().unwrap()
    }
}

/// Batch forward pass. Returns the final outputs (after the frozen output
/// map, when installed) together with the cache needed by [`backward`].
pub fn forward(model: &MlpModel, batch: &Matrix) -> Result<(Matrix, ForwardCache)> {
    if batch.cols() != model.input_dim {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim,
            got: batch.cols(),
        });
    }
    let mut activations = Vec::with_capacity(model.layers.len() + 1);
    activations.push(batch.clone());
    for (layer, spec) in model.layers.iter().zip(&model.specs) {
        let prev = activations.last().unwrap();
        let mut z = prev.matmul(&layer.weights);
        for i in 0..z.rows() {
            let row = z.row_mut(i);
            for (v, b) in row.iter_mut().zip(&layer.bias) {
                *v = spec.activation.apply(*v + b);
            }
        }
        activations.push(z);
    }
    let out = match &model.frozen_output {
        Some(f) => activations.last().unwrap().matmul(f),
        None => activations.last().unwrap().clone(),
    };
    Ok((out, ForwardCache { activations }))
}

/// Gradients for every dense layer, in layer order. The frozen output map
/// is deliberately absent: it is not a trainable parameter.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    /// Accumulates `other` into `self`; shapes must match.
    pub fn add_in_place(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a = a.add(b);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

/// Backpropagates `output_grad` (the loss gradient with respect to the
/// model outputs) through the frozen map and all dense layers.
pub fn backward(model: &MlpModel, cache: &ForwardCache, output_grad: &Matrix) -> Gradients {
    let n_layers = model.layers.len();
    let mut d_act = match &model.frozen_output {
        Some(f) => output_grad.matmul(&f.transpose()),
        None => output_grad.clone(),
    };

    let mut weights = vec![Matrix::zeros(0, 0); n_layers];
    let mut biases = vec![Vec::new(); n_layers];
    for l in (0..n_layers).rev() {
        let post = &cache.activations[l + 1];
        let prev = &cache.activations[l];
        let act = model.specs[l].activation;

        let mut dz = d_act;
        for i in 0..dz.rows() {
            let post_row = post.row(i);
            let dz_row = dz.row_mut(i);
            for (g, &a) in dz_row.iter_mut().zip(post_row) {
                *g *= act.derivative_from_output(a);
            }
        }

        let mut db = vec![0.0; dz.cols()];
        for i in 0..dz.rows() {
            for (acc, &g) in db.iter_mut().zip(dz.row(i)) {
                *acc += g;
            }
        }
        weights[l] = prev.xt_y(&dz);
        biases[l] = db;

        if l > 0 {
            d_act = dz.matmul(&model.layers[l].weights.transpose());
        } else {
            d_act = dz; // consumed; keeps the borrow checker satisfied
        }
    }
    Gradients { weights, biases }
}

/// Per-parameter squared-gradient accumulators for RMSprop.
#[derive(Debug, Clone)]
pub struct RmspropState {
    sq_weights: Vec<Matrix>,
    sq_biases: Vec<Vec<f64>>,
    pub rho: f64,
    pub epsilon: f64,
}

impl RmspropState {
    pub fn new(model: &MlpModel, rho: f64, epsilon: f64) -> Self {
        Self {
            sq_weights: model
                .layers
                .iter()
                .map(|l| Matrix::zeros(l.weights.rows(), l.weights.cols()))
                .collect(),
            sq_biases: model.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
            rho,
            epsilon,
        }
    }
}

/// One RMSprop update: `acc <- rho*acc + (1-rho)*g^2`,
/// `w <- w - lr * g / sqrt(acc + eps)`.
pub fn rmsprop_step(model: &mut MlpModel, grads: &Gradients, state: &mut RmspropState, lr: f64) {
    let rho = state.rho;
    let eps = state.epsilon;
    for (l, layer) in model.layers.iter_mut().enumerate() {
        let gw = &grads.weights[l];
        let acc = &mut state.sq_weights[l];
        for (i, (w, &g)) in layer
            .weights
            .data_mut()
            .iter_mut()
            .zip(gw.data())
            .enumerate()
        {
            let a = rho * acc.data()[i] + (1.0 - rho) * g * g;
            acc.data_mut()[i] = a;
            *w -= lr * g / math::sqrt(a + eps);
        }
        let gb = &grads.biases[l];
        let accb = &mut state.sq_biases[l];
        for ((b, &g), a) in layer.bias.iter_mut().zip(gb).zip(accb.iter_mut()) {
            *a = rho * *a + (1.0 - rho) * g * g;
            *b -= lr * g / math::sqrt(*a + eps);
        }
    }
}

/// Patience schedule: when the best validation loss has not improved for
/// `patience` epochs the rate is multiplied by `decay_factor`; training
/// stops once the rate falls below `floor`.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    pub lr: f64,
    pub decay_factor: f64,
    pub patience: usize,
    pub floor: f64,
    best: f64,
    stale: usize,
}

impl LrSchedule {
    pub fn new(lr: f64, decay_factor: f64, patience: usize, floor: f64) -> Self {
        assert!(lr > 0.0 && decay_factor > 0.0 && decay_factor < 1.0 && patience >= 1);
        Self {
            lr,
            decay_factor,
            patience,
            floor,
            best: f64::INFINITY,
            stale: 0,
        }
    }

    /// Feeds one epoch's validation loss; returns the stop flag.
    pub fn observe(&mut self, val_loss: f64) -> bool {
        if val_loss < self.best {
            self.best = val_loss;
            self.stale = 0;
        } else {
            self.stale += 1;
            if self.stale >= self.patience {
                self.lr *= self.decay_factor;
                self.stale = 0;
                if self.lr < self.floor {
                    return true;
                }
            }
        }
        false
    }
}

/// Folds a validation-loss history through the schedule; returns the final
/// schedule state and whether training should have stopped.
pub fn schedule_update(mut sched: LrSchedule, history: &[f64]) -> (LrSchedule, bool) {
    let mut stop = false;
    for &v in history {
        if sched.observe(v) {
            stop = true;
            break;
        }
    }
    (sched, stop)
}

/// Optimizer and schedule settings shared by the trainers.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub lr_decay: f64,
    pub patience: usize,
    pub lr_floor: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub max_epochs: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            lr_decay: 0.1,
            patience: 10,
            lr_floor: 1e-8,
            rho: 0.9,
            epsilon: 1e-8,
            max_epochs: 1000,
        }
    }
}

impl OptimizerConfig {
    pub fn schedule(&self) -> LrSchedule {
        LrSchedule::new(self.lr, self.lr_decay, self.patience, self.lr_floor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_linear(weights: Matrix, bias: Vec<f64>) -> MlpModel {
        let width = weights.cols();
        MlpModel::from_parts(
            weights.rows(),
            vec![LayerSpec::new(width, Activation::Linear)],
            vec![DenseLayer { weights, bias }],
            None,
        )
        .unwrap()
    }

    #[test]
    fn forward_zero_map() {
        let model = single_linear(Matrix::zeros(3, 2), vec![0.0, 0.0]);
        let x = Matrix::from_rows(&[[1.0, -2.0, 0.5], [4.0, 0.0, 1.0]]);
        let (y, _) = forward(&model, &x).unwrap();
        assert_eq!(y, Matrix::zeros(2, 2));
    }

    #[test]
    fn forward_identity_map() {
        let model = single_linear(Matrix::identity(3), vec![0.0; 3]);
        let x = Matrix::from_rows(&[[1.0, -2.0, 0.5]]);
        let (y, _) = forward(&model, &x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn forward_dimension_mismatch() {
        let model = single_linear(Matrix::identity(3), vec![0.0; 3]);
        let x = Matrix::zeros(1, 2);
        assert_eq!(
            forward(&model, &x).unwrap_err(),
            Error::DimensionMismatch { expected: 3, got: 2 }
        );
    }

    #[test]
    fn forward_matches_scalar_hand_computation() {
        // 1-2-1 tanh net: h = tanh(x*w + b), y = h . v + c
        let model = MlpModel::from_parts(
            1,
            vec![
                LayerSpec::new(2, Activation::Tanh),
                LayerSpec::new(1, Activation::Linear),
            ],
            vec![
                DenseLayer {
                    weights: Matrix::from_rows(&[[0.5, -1.0]]),
                    bias: vec![0.1, 0.2],
                },
                DenseLayer {
                    weights: Matrix::from_rows(&[[2.0], [-0.5]]),
                    bias: vec![0.3],
                },
            ],
            None,
        )
        .unwrap();
        let x: f64 = 0.7;
        let h0 = (0.5 * x + 0.1).tanh();
        let h1 = (-1.0 * x + 0.2).tanh();
        let expect = 2.0 * h0 - 0.5 * h1 + 0.3;
        let (y, _) = forward(&model, &Matrix::from_rows(&[[x]])).unwrap();
        assert!((y[(0, 0)] - expect).abs() < 1e-15);
    }

    #[test]
    fn backward_zero_grad_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let model = MlpModel::new(
            3,
            vec![
                LayerSpec::new(4, Activation::Relu),
                LayerSpec::new(2, Activation::Tanh),
            ],
            &mut rng,
        );
        let x = Matrix::from_rows(&[[0.3, -0.2, 0.9], [1.0, 0.0, -1.0]]);
        let (_, cache) = forward(&model, &x).unwrap();
        let grads = backward(&model, &cache, &Matrix::zeros(2, 2));
        for g in &grads.weights {
            assert!(g.data().iter().all(|&v| v == 0.0));
        }
        for b in &grads.biases {
            assert!(b.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn backward_linear_layer_closed_form() {
        // loss = 0.5*|y|^2 so output_grad = y and dW = x^T y
        let model = single_linear(Matrix::from_rows(&[[1.0, 2.0], [0.5, -1.0]]), vec![0.0, 0.0]);
        let x = Matrix::from_rows(&[[1.0, 3.0], [-2.0, 0.5]]);
        let (y, cache) = forward(&model, &x).unwrap();
        let grads = backward(&model, &cache, &y);
        let expected = x.xt_y(&y);
        assert!(grads.weights[0].sub(&expected).frob_norm() < 1e-14);
    }

    #[test]
    fn frozen_output_gets_no_gradient_but_shapes_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut model = MlpModel::new(2, vec![LayerSpec::new(2, Activation::Tanh)], &mut rng);
        let x = Matrix::from_rows(&[[0.4, -0.7], [0.1, 0.2]]);
        let (y_plain, _) = forward(&model, &x).unwrap();

        model.set_frozen_output(Matrix::from_rows(&[[2.0, 0.0], [0.0, 3.0]]));
        let (y_frozen, cache) = forward(&model, &x).unwrap();
        assert!(y_plain.sub(&y_frozen).frob_norm() > 1e-6);

        let grads = backward(&model, &cache, &y_frozen);
        assert_eq!(grads.weights.len(), model.layers().len());
    }

    #[test]
    fn rmsprop_first_step_scalar() {
        let mut model = single_linear(Matrix::from_rows(&[[0.0]]), vec![0.0]);
        let mut state = RmspropState::new(&model, 0.9, 0.0);
        let grads = Gradients {
            weights: vec![Matrix::from_rows(&[[1.0]])],
            biases: vec![vec![0.0]],
        };
        rmsprop_step(&mut model, &grads, &mut state, 0.01);
        let expect = -0.01 / (0.1f64).sqrt();
        assert!((model.layers()[0].weights[(0, 0)] - expect).abs() < 1e-15);
    }

    #[test]
    fn rmsprop_zero_gradient_keeps_weights_decays_accumulator() {
        let mut model = single_linear(Matrix::from_rows(&[[1.5]]), vec![0.0]);
        let mut state = RmspropState::new(&model, 0.9, 1e-8);
        let g1 = Gradients {
            weights: vec![Matrix::from_rows(&[[2.0]])],
            biases: vec![vec![0.0]],
        };
        rmsprop_step(&mut model, &g1, &mut state, 0.01);
        let acc_before = state.sq_weights[0][(0, 0)];
        let w_before = model.layers()[0].weights[(0, 0)];

        let g0 = Gradients {
            weights: vec![Matrix::from_rows(&[[0.0]])],
            biases: vec![vec![0.0]],
        };
        rmsprop_step(&mut model, &g0, &mut state, 0.01);
        assert_eq!(model.layers()[0].weights[(0, 0)], w_before);
        assert!((state.sq_weights[0][(0, 0)] - 0.9 * acc_before).abs() < 1e-15);
    }

    #[test]
    fn rmsprop_constant_gradient_step_approaches_lr() {
        let mut model = single_linear(Matrix::from_rows(&[[0.0]]), vec![0.0]);
        let mut state = RmspropState::new(&model, 0.9, 1e-8);
        let grads = Gradients {
            weights: vec![Matrix::from_rows(&[[1.0]])],
            biases: vec![vec![0.0]],
        };
        let lr = 0.01;
        let mut prev = 0.0;
        let mut step = 0.0;
        for _ in 0..400 {
            rmsprop_step(&mut model, &grads, &mut state, lr);
            let w = model.layers()[0].weights[(0, 0)];
            step = (w - prev).abs();
            prev = w;
        }
        assert!((step - lr).abs() < 1e-4, "step {step} vs lr {lr}");
    }

    #[test]
    fn schedule_improving_history_keeps_lr() {
        let sched = LrSchedule::new(1e-3, 0.1, 3, 1e-8);
        let (out, stop) = schedule_update(sched, &[1.0, 0.9, 0.8, 0.7, 0.6]);
        assert_eq!(out.lr, 1e-3);
        assert!(!stop);
    }

    #[test]
    fn schedule_flat_history_decays_once() {
        let sched = LrSchedule::new(1e-3, 0.1, 3, 1e-8);
        let (out, stop) = schedule_update(sched, &[1.0, 1.0, 1.0, 1.0]);
        assert!((out.lr - 1e-4).abs() < 1e-19);
        assert!(!stop);
    }

    #[test]
    fn schedule_stops_below_floor() {
        let mut sched = LrSchedule::new(1e-7, 0.1, 2, 1e-8);
        let mut stop = false;
        // first exhaustion: 1e-7 -> 1e-8, still at the floor, no stop
        for v in [1.0, 1.0, 1.0] {
            stop = sched.observe(v);
        }
        assert!((sched.lr - 1e-8).abs() < 1e-22);
        assert!(!stop);
        // second exhaustion: 1e-8 -> 1e-9 < floor, stop
        for v in [1.0, 1.0] {
            stop = sched.observe(v);
        }
        assert!(stop);
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let specs = vec![
            LayerSpec::new(8, Activation::Relu),
            LayerSpec::new(3, Activation::Tanh),
        ];
        let a = MlpModel::new(5, specs.clone(), &mut ChaCha8Rng::seed_from_u64(42));
        let b = MlpModel::new(5, specs, &mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(a, b);
    }
}
