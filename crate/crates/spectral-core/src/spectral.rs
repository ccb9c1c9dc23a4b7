//! The spectral-map trainer: alternating orthogonalization and gradient
//! steps, the batch spectral losses, the frozen orthonormalization output
//! layer, and out-of-sample embedding.
//!
//! Each iteration draws two independent uniform minibatches. The first sets
//! the frozen output layer to `sqrt(m) * (L^-1)^T` from the Cholesky factor
//! of the pre-output Gram matrix, which makes `(1/m) Y^T Y = I` hold on
//! that batch. The second builds a batch affinity matrix and follows the
//! gradient of the spectral loss through every weight except the frozen
//! layer.

use alloc::borrow::Cow;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::affinity::{gaussian_affinity_from_rep, AffinityBatch, AffinityConfig};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, lower_tri_inverse, sq_dist, Matrix};
use crate::math;
use crate::nn::{
    self, Activation, LayerSpec, MlpModel, OptimizerConfig, RmspropState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossVariant {
    /// `s * sum_ij W_ij |y_i - y_j|^2`
    Unnormalized,
    /// `s * sum_ij W_ij |y_i/d_i - y_j/d_j|^2`
    Normalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossScaling {
    /// `s = 1/m`; keeps gradients well-scaled in practice.
    InverseM,
    /// `s = 1/m^2`; the exact minibatch analogue of the population loss.
    InverseMSquared,
}

impl LossScaling {
    fn factor(self, m: usize) -> f64 {
        match self {
            LossScaling::InverseM => 1.0 / m as f64,
            LossScaling::InverseMSquared => 1.0 / (m * m) as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralConfig {
    /// Target cluster count and embedding dimension.
    pub k: usize,
    /// Gradient minibatch size.
    pub grad_batch: usize,
    /// Orthogonalization minibatch size.
    pub ortho_batch: usize,
    pub loss_variant: LossVariant,
    pub loss_scaling: LossScaling,
    /// Hidden layers; the trainer appends a `tanh` output layer of width `k`
    /// followed by the frozen orthonormalization map.
    pub hidden: Vec<LayerSpec>,
    pub affinity: AffinityConfig,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

impl SpectralConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            grad_batch: 256,
            ortho_batch: 256,
            loss_variant: LossVariant::Unnormalized,
            loss_scaling: LossScaling::InverseM,
            hidden: vec![
                LayerSpec::new(128, Activation::Relu),
                LayerSpec::new(128, Activation::Relu),
            ],
            affinity: AffinityConfig::default(),
            optimizer: OptimizerConfig::default(),
            seed: 0,
        }
    }
}

/// One metrics-log row. `val_loss` is present on the last iteration of each
/// epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    pub iteration: usize,
    pub loss: f64,
    pub val_loss: Option<f64>,
    pub lr: f64,
}

/// Observer invoked after every recorded iteration with the current model.
pub type Observer<'a> = &'a mut dyn FnMut(&MlpModel, &TrainRecord);

/// Installs the orthonormalizing output layer for `batch`: forward to the
/// pre-output activations `Y~`, factor `Y~^T Y~ = L L^T`, and freeze
/// `sqrt(m) * (L^-1)^T` so the batch outputs satisfy `(1/m) Y^T Y = I`.
pub fn orthonorm_step(model: &mut MlpModel, batch: &Matrix) -> Result<()> {
    orthonorm_step_at(model, batch, 0)
}

fn orthonorm_step_at(model: &mut MlpModel, batch: &Matrix, iteration: usize) -> Result<()> {
    let (_, cache) = nn::forward(model, batch)?;
    let pre = cache.pre_output();
    let gram = pre.gram();
    let l = cholesky(&gram).map_err(|err| match err {
        Error::NotPositiveDefinite { .. } => Error::RankDeficientBatch { iteration },
        other => other,
    })?;
    let map = lower_tri_inverse(&l)
        .transpose()
        .scale(math::sqrt(batch.rows() as f64));
    model.set_frozen_output(map);
    Ok(())
}

/// Batch spectral loss and its gradient with respect to the outputs `y`.
pub fn spectral_loss(
    y: &Matrix,
    w: &AffinityBatch,
    variant: LossVariant,
    scaling: LossScaling,
) -> Result<(f64, Matrix)> {
    let m = y.rows();
    if w.size() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: w.size(),
        });
    }
    let s = scaling.factor(m);
    let k = y.cols();
    let wm = w.w();

    // rows the loss differences are taken over: raw outputs, or outputs
    // divided by the row degree for the normalized variant
    let rows: Cow<Matrix> = match variant {
        LossVariant::Unnormalized => Cow::Borrowed(y),
        LossVariant::Normalized => {
            let mut scaled = y.clone();
            for (i, &d) in w.degrees().iter().enumerate() {
                if d == 0.0 {
                    return Err(Error::ZeroDegree { index: i });
                }
                for v in scaled.row_mut(i) {
                    *v /= d;
                }
            }
            Cow::Owned(scaled)
        }
    };

    let mut loss = 0.0;
    let mut grad = Matrix::zeros(m, k);
    for i in 0..m {
        let ri = rows.row(i);
        for j in 0..m {
            let wij = wm[(i, j)];
            if wij == 0.0 {
                continue;
            }
            let rj = rows.row(j);
            loss += wij * sq_dist(ri, rj);
            let g = grad.row_mut(i);
            for t in 0..k {
                g[t] += 4.0 * s * wij * (ri[t] - rj[t]);
            }
        }
    }
    if let LossVariant::Normalized = variant {
        for (i, &d) in w.degrees().iter().enumerate() {
            for v in grad.row_mut(i) {
                *v /= d;
            }
        }
    }
    Ok((loss * s, grad))
}

/// Forward pass through a trained map; row `i` of the result is the
/// embedding of row `i` of `points`.
pub fn embed(model: &MlpModel, points: &Matrix) -> Result<Matrix> {
    Ok(nn::forward(model, points)?.0)
}

/// Trains the spectral map per the alternating scheme. When `siamese` is
/// given, batch affinities are built from distances between its embeddings;
/// otherwise raw Euclidean distances are used. `labels` (when present)
/// trigger the semi-supervised kernel override inside every batch.
pub fn train_spectral_map(
    points: &Matrix,
    cfg: &SpectralConfig,
    siamese: Option<&MlpModel>,
    labels: Option<&[Option<usize>]>,
    observer: Option<Observer<'_>>,
) -> Result<(MlpModel, Vec<TrainRecord>)> {
    let order: Vec<usize> = (0..points.rows()).collect();
    train_with_order(points, cfg, siamese, labels, observer, order)
}

pub(crate) fn train_with_order(
    points: &Matrix,
    cfg: &SpectralConfig,
    siamese: Option<&MlpModel>,
    labels: Option<&[Option<usize>]>,
    mut observer: Option<Observer<'_>>,
    mut pool: Vec<usize>,
) -> Result<(MlpModel, Vec<TrainRecord>)> {
    let n = points.rows();
    assert!(cfg.k >= 1, "k must be at least 1");
    assert!(
        cfg.grad_batch >= cfg.k && cfg.ortho_batch >= cfg.k,
        "batch sizes must be at least k"
    );
    let max_batch = cfg.grad_batch.max(cfg.ortho_batch);
    let n_val = (n / 10).max(1);
    if n < max_batch + n_val {
        return Err(Error::TooFewPoints {
            needed: max_batch + n_val,
            got: n,
        });
    }
    if let Some(l) = labels {
        assert_eq!(l.len(), n, "label slice must match point count");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // distance representation for affinities, embedded once when Siamese
    let rep: Cow<Matrix> = match siamese {
        Some(model) => Cow::Owned(embed(model, points)?),
        None => Cow::Borrowed(points),
    };

    let mut specs = cfg.hidden.clone();
    specs.push(LayerSpec::new(cfg.k, Activation::Tanh));
    let mut model = MlpModel::new(points.cols(), specs, &mut rng);

    pool.shuffle(&mut rng);
    let (val_idx, train_idx) = pool.split_at(n_val);
    let val_points = points.select_rows(val_idx);
    let val_rep = rep.select_rows(val_idx);
    let val_labels = labels.map(|l| select_labels(l, val_idx));
    let val_aff = gaussian_affinity_from_rep(&val_rep, &cfg.affinity, val_labels.as_deref())?;

    let mut state = RmspropState::new(&model, cfg.optimizer.rho, cfg.optimizer.epsilon);
    let mut schedule = cfg.optimizer.schedule();
    let iters_per_epoch = train_idx.len().div_ceil(cfg.grad_batch).max(1);
    let mut records = Vec::new();
    let mut iteration = 0usize;

    'training: for _epoch in 0..cfg.optimizer.max_epochs {
        for step in 0..iters_per_epoch {
            iteration += 1;

            // orthogonalization step; one retry on a rank-deficient batch
            let mut attempt = 0;
            loop {
                let ob = sample_from(&mut rng, train_idx, cfg.ortho_batch);
                let ob_points = points.select_rows(&ob);
                match orthonorm_step_at(&mut model, &ob_points, iteration) {
                    Ok(()) => break,
                    Err(Error::RankDeficientBatch { .. }) if attempt == 0 => attempt = 1,
                    Err(err) => return Err(err),
                }
            }

            // gradient step on an independent fresh batch
            let gb = sample_from(&mut rng, train_idx, cfg.grad_batch);
            let gb_points = points.select_rows(&gb);
            let gb_rep = rep.select_rows(&gb);
            let gb_labels = labels.map(|l| select_labels(l, &gb));
            let aff = gaussian_affinity_from_rep(&gb_rep, &cfg.affinity, gb_labels.as_deref())?;
            let (y, cache) = nn::forward(&model, &gb_points)?;
            let (loss, gy) = spectral_loss(&y, &aff, cfg.loss_variant, cfg.loss_scaling)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { iteration });
            }
            let grads = nn::backward(&model, &cache, &gy);
            nn::rmsprop_step(&mut model, &grads, &mut state, schedule.lr);

            let val_loss = if step + 1 == iters_per_epoch {
                let vy = embed(&model, &val_points)?;
                let (vl, _) = spectral_loss(&vy, &val_aff, cfg.loss_variant, cfg.loss_scaling)?;
                if !vl.is_finite() {
                    return Err(Error::NonFiniteLoss { iteration });
                }
                Some(vl)
            } else {
                None
            };
            let record = TrainRecord {
                iteration,
                loss,
                val_loss,
                lr: schedule.lr,
            };
            if let Some(cb) = observer.as_mut() {
                cb(&model, &record);
            }
            records.push(record);

            if let Some(vl) = val_loss {
                if schedule.observe(vl) {
                    break 'training;
                }
            }
        }
    }
    Ok((model, records))
}

fn select_labels(labels: &[Option<usize>], idx: &[usize]) -> Vec<Option<usize>> {
    idx.iter().map(|&i| labels[i]).collect()
}

fn sample_from<R: Rng>(rng: &mut R, pool: &[usize], amount: usize) -> Vec<usize> {
    index::sample(rng, pool.len(), amount.min(pool.len()))
        .into_iter()
        .map(|p| pool[p])
        .collect()
}
