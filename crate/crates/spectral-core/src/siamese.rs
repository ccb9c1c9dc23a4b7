//! Unsupervised metric learning: positive pairs from nearest neighbors,
//! negative pairs from random non-neighbors, contrastive loss, and the
//! minibatch training loop for the embedding network.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::affinity::knn;
use crate::error::{Error, Result};
use crate::linalg::{sq_dist, Matrix};
use crate::math;
use crate::nn::{
    self, Activation, LayerSpec, MlpModel, OptimizerConfig, RmspropState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pair {
    pub i: usize,
    pub j: usize,
    pub polarity: Polarity,
}

/// Balanced set of training pairs: every positive is matched by one
/// negative.
#[derive(Debug, Clone)]
pub struct PairSet {
    pub pairs: Vec<Pair>,
}

impl PairSet {
    pub fn positives(&self) -> impl Iterator<Item = &Pair> {
        self.pairs.iter().filter(|p| p.polarity == Polarity::Positive)
    }

    pub fn negatives(&self) -> impl Iterator<Item = &Pair> {
        self.pairs.iter().filter(|p| p.polarity == Polarity::Negative)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiameseConfig {
    /// Positive pairs per point, taken from its Euclidean nearest neighbors.
    pub n_pos_neighbors: usize,
    /// Hinge margin for negative pairs.
    pub margin: f64,
    /// Embedding network, last layer width = embedding dimension.
    pub architecture: Vec<LayerSpec>,
    /// Pair minibatch size.
    pub batch_size: usize,
    /// When set, each point is paired with one random pick among its
    /// `n_pos_neighbors` nearest neighbors instead of all of them.
    pub sample_one: bool,
    pub optimizer: OptimizerConfig,
}

impl SiameseConfig {
    /// Toy-scale defaults for `input_dim`-dimensional data. The embedding
    /// keeps the input dimension for low-dimensional data and caps at 10
    /// otherwise.
    pub fn for_input_dim(input_dim: usize) -> Self {
        let embed = input_dim.min(10);
        Self {
            n_pos_neighbors: 2,
            margin: 1.0,
            architecture: vec![
                LayerSpec::new(64, Activation::Relu),
                LayerSpec::new(64, Activation::Relu),
                LayerSpec::new(embed, Activation::Linear),
            ],
            batch_size: 128,
            sample_one: false,
            optimizer: OptimizerConfig::default(),
        }
    }
}

/// Builds the balanced pair set: `n_pos_neighbors` positives per point from
/// its nearest neighbors, and an equal number of negatives drawn uniformly
/// from non-neighbor pairs. Deterministic for a given seed.
pub fn build_pairs(points: &Matrix, cfg: &SiameseConfig, seed: u64) -> Result<PairSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    build_pairs_with_rng(points, cfg, &mut rng)
}

fn build_pairs_with_rng<R: Rng>(points: &Matrix, cfg: &SiameseConfig, rng: &mut R) -> Result<PairSet> {
    let n = points.rows();
    // every anchor must keep at least one non-neighbor to draw negatives from
    if cfg.n_pos_neighbors + 2 > n {
        return Err(Error::TooFewPoints {
            needed: cfg.n_pos_neighbors + 2,
            got: n,
        });
    }
    let neighbors = knn(points, cfg.n_pos_neighbors)?;

    let mut pairs = Vec::new();
    for (i, nb) in neighbors.iter().enumerate() {
        if cfg.sample_one {
            let j = nb[rng.random_range(0..nb.len())];
            pairs.push(Pair {
                i,
                j,
                polarity: Polarity::Positive,
            });
        } else {
            for &j in nb {
                pairs.push(Pair {
                    i,
                    j,
                    polarity: Polarity::Positive,
                });
            }
        }
    }

    let n_neg = pairs.len();
    for _ in 0..n_neg {
        let i = rng.random_range(0..n);
        let j = loop {
            let cand = rng.random_range(0..n);
            if cand != i && !neighbors[i].contains(&cand) {
                break cand;
            }
        };
        pairs.push(Pair {
            i,
            j,
            polarity: Polarity::Negative,
        });
    }
    Ok(PairSet { pairs })
}

/// Contrastive loss for one embedded pair, with gradients for both
/// embeddings: squared distance for positives, squared hinge
/// `max(margin - d, 0)^2` for negatives.
pub fn contrastive_loss(
    z_i: &[f64],
    z_j: &[f64],
    polarity: Polarity,
    margin: f64,
) -> (f64, Vec<f64>, Vec<f64>) {
    debug_assert_eq!(z_i.len(), z_j.len());
    let d2 = sq_dist(z_i, z_j);
    match polarity {
        Polarity::Positive => {
            let g_i: Vec<f64> = z_i.iter().zip(z_j).map(|(a, b)| 2.0 * (a - b)).collect();
            let g_j: Vec<f64> = g_i.iter().map(|g| -g).collect();
            (d2, g_i, g_j)
        }
        Polarity::Negative => {
            let d = math::sqrt(d2);
            if d >= margin {
                return (0.0, vec![0.0; z_i.len()], vec![0.0; z_i.len()]);
            }
            if d <= 1e-12 {
                // coincident embeddings: flat direction, zero subgradient
                return (margin * margin, vec![0.0; z_i.len()], vec![0.0; z_i.len()]);
            }
            let loss = (margin - d) * (margin - d);
            let coeff = -2.0 * (margin - d) / d;
            let g_i: Vec<f64> = z_i.iter().zip(z_j).map(|(a, b)| coeff * (a - b)).collect();
            let g_j: Vec<f64> = g_i.iter().map(|g| -g).collect();
            (loss, g_i, g_j)
        }
    }
}

/// Mean contrastive loss of `pairs` under `model`, with gradients when
/// `with_grads` is set.
fn pair_batch_loss(
    model: &MlpModel,
    points: &Matrix,
    pairs: &[Pair],
    margin: f64,
    with_grads: bool,
) -> Result<(f64, Option<nn::Gradients>)> {
    let rows_a: Vec<usize> = pairs.iter().map(|p| p.i).collect();
    let rows_b: Vec<usize> = pairs.iter().map(|p| p.j).collect();
    let xa = points.select_rows(&rows_a);
    let xb = points.select_rows(&rows_b);
    let (za, cache_a) = nn::forward(model, &xa)?;
    let (zb, cache_b) = nn::forward(model, &xb)?;

    let b = pairs.len();
    let scale = 1.0 / b as f64;
    let mut total = 0.0;
    let mut ga = Matrix::zeros(b, za.cols());
    let mut gb = Matrix::zeros(b, zb.cols());
    for (r, pair) in pairs.iter().enumerate() {
        let (loss, gi, gj) = contrastive_loss(za.row(r), zb.row(r), pair.polarity, margin);
        total += loss;
        if with_grads {
            for (slot, g) in ga.row_mut(r).iter_mut().zip(&gi) {
                *slot = g * scale;
            }
            for (slot, g) in gb.row_mut(r).iter_mut().zip(&gj) {
                *slot = g * scale;
            }
        }
    }
    let grads = if with_grads {
        let mut g = nn::backward(model, &cache_a, &ga);
        g.add_in_place(&nn::backward(model, &cache_b, &gb));
        Some(g)
    } else {
        None
    };
    Ok((total * scale, grads))
}

/// Trains the Siamese embedding network on unsupervised pairs with
/// minibatch RMSprop under the patience schedule. Deterministic per seed.
pub fn train_siamese(points: &Matrix, cfg: &SiameseConfig, seed: u64) -> Result<MlpModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pair_set = build_pairs_with_rng(points, cfg, &mut rng)?;
    let mut model = MlpModel::new(points.cols(), cfg.architecture.clone(), &mut rng);

    let mut pairs = pair_set.pairs;
    pairs.shuffle(&mut rng);
    let n_val = (pairs.len() / 10).max(1);
    let (val_pairs, train_pairs) = pairs.split_at(n_val);
    let val_pairs = val_pairs.to_vec();
    let mut train_pairs = train_pairs.to_vec();

    let mut state = RmspropState::new(&model, cfg.optimizer.rho, cfg.optimizer.epsilon);
    let mut schedule = cfg.optimizer.schedule();
    for _ in 0..cfg.optimizer.max_epochs {
        train_pairs.shuffle(&mut rng);
        for chunk in train_pairs.chunks(cfg.batch_size.max(1)) {
            let (_, grads) = pair_batch_loss(&model, points, chunk, cfg.margin, true)?;
            nn::rmsprop_step(&mut model, &grads.unwrap(), &mut state, schedule.lr);
        }
        let (val_loss, _) = pair_batch_loss(&model, points, &val_pairs, cfg.margin, false)?;
        if schedule.observe(val_loss) {
            break;
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_cfg(n_pos: usize) -> SiameseConfig {
        SiameseConfig {
            n_pos_neighbors: n_pos,
            ..SiameseConfig::for_input_dim(1)
        }
    }

    #[test]
    fn build_pairs_collinear_enumeration() {
        let pts = Matrix::new(3, 1, vec![0.0, 1.0, 3.0]);
        let set = build_pairs(&pts, &toy_cfg(1), 0).unwrap();
        let pos: Vec<(usize, usize)> = set.positives().map(|p| (p.i, p.j)).collect();
        assert_eq!(pos, vec![(0, 1), (1, 0), (2, 1)]);
        assert_eq!(set.negatives().count(), 3);
        for p in set.negatives() {
            assert_ne!(p.i, p.j);
            // the only non-neighbor of each anchor here
            let expected_j = match p.i {
                0 => 2,
                1 => 2,
                2 => 0,
                _ => unreachable!(),
            };
            assert_eq!(p.j, expected_j);
        }
    }

    #[test]
    fn build_pairs_rejects_empty_negative_pool() {
        let pts = Matrix::new(3, 1, vec![0.0, 1.0, 3.0]);
        assert!(matches!(
            build_pairs(&pts, &toy_cfg(2), 0),
            Err(Error::TooFewPoints { .. })
        ));
    }

    #[test]
    fn build_pairs_duplicates_are_positives() {
        let pts = Matrix::new(4, 1, vec![0.0, 0.0, 9.0, 9.0]);
        let set = build_pairs(&pts, &toy_cfg(1), 5).unwrap();
        for p in set.positives() {
            let pair = (p.i.min(p.j), p.i.max(p.j));
            assert!(pair == (0, 1) || pair == (2, 3), "unexpected positive {pair:?}");
        }
    }

    #[test]
    fn build_pairs_balanced_and_deterministic() {
        let pts = Matrix::new(8, 1, vec![0.0, 0.5, 1.0, 1.5, 8.0, 8.5, 9.0, 9.5]);
        let a = build_pairs(&pts, &toy_cfg(2), 123).unwrap();
        let b = build_pairs(&pts, &toy_cfg(2), 123).unwrap();
        assert_eq!(a.pairs, b.pairs);
        assert_eq!(a.positives().count(), a.negatives().count());
    }

    #[test]
    fn contrastive_loss_examples() {
        let (l, _, _) = contrastive_loss(&[1.0, 2.0], &[1.0, 2.0], Polarity::Positive, 1.0);
        assert_eq!(l, 0.0);
        let (l, gi, _) = contrastive_loss(&[0.0], &[2.0], Polarity::Negative, 1.0);
        assert_eq!(l, 0.0);
        assert_eq!(gi, vec![0.0]);
        let (l, _, _) = contrastive_loss(&[0.0], &[0.4], Polarity::Negative, 1.0);
        assert!((l - 0.36).abs() < 1e-12);
    }

    #[test]
    fn contrastive_loss_symmetric() {
        let zi = [0.3, -0.7];
        let zj = [0.1, 0.4];
        for pol in [Polarity::Positive, Polarity::Negative] {
            let (a, _, _) = contrastive_loss(&zi, &zj, pol, 1.0);
            let (b, _, _) = contrastive_loss(&zj, &zi, pol, 1.0);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn contrastive_gradient_matches_finite_differences() {
        let zi = [0.3, -0.2];
        let zj = [0.5, 0.1];
        let h = 1e-6;
        for pol in [Polarity::Positive, Polarity::Negative] {
            let (_, gi, gj) = contrastive_loss(&zi, &zj, pol, 1.0);
            for t in 0..2 {
                let mut zp = zi;
                zp[t] += h;
                let mut zm = zi;
                zm[t] -= h;
                let (lp, _, _) = contrastive_loss(&zp, &zj, pol, 1.0);
                let (lm, _, _) = contrastive_loss(&zm, &zj, pol, 1.0);
                let fd = (lp - lm) / (2.0 * h);
                assert!((fd - gi[t]).abs() < 1e-5, "{pol:?} z_i[{t}]: {fd} vs {}", gi[t]);

                let mut zp = zj;
                zp[t] += h;
                let mut zm = zj;
                zm[t] -= h;
                let (lp, _, _) = contrastive_loss(&zi, &zp, pol, 1.0);
                let (lm, _, _) = contrastive_loss(&zi, &zm, pol, 1.0);
                let fd = (lp - lm) / (2.0 * h);
                assert!((fd - gj[t]).abs() < 1e-5, "{pol:?} z_j[{t}]: {fd} vs {}", gj[t]);
            }
        }
    }

    #[test]
    fn saturated_start_leaves_weights_unchanged() {
        // duplicate points make every positive pair coincide, and a tiny
        // margin saturates every negative pair, so all gradients vanish
        let pts = Matrix::new(6, 1, vec![0.0, 0.0, 10.0, 10.0, 20.0, 20.0]);
        let mut cfg = toy_cfg(1);
        cfg.margin = 0.01;
        cfg.optimizer.max_epochs = 5;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pair_set = build_pairs_with_rng(&pts, &cfg, &mut rng).unwrap();
        let model = MlpModel::new(1, cfg.architecture.clone(), &mut rng);
        let (loss, grads) = pair_batch_loss(&model, &pts, &pair_set.pairs, cfg.margin, true).unwrap();
        assert_eq!(loss, 0.0);
        let grads = grads.unwrap();
        for g in &grads.weights {
            assert!(g.data().iter().all(|&v| v == 0.0));
        }
        let trained = train_siamese(&pts, &cfg, 9).unwrap();
        // same rng draw order as above reproduces the initial model
        assert_eq!(trained.layers(), model.layers());
    }

    #[test]
    fn training_separates_two_blobs() {
        let mut data = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for c in 0..2 {
            let cx = c as f64 * 6.0;
            for _ in 0..20 {
                data.push(cx + rng.random_range(-0.5..0.5));
                data.push(rng.random_range(-0.5..0.5));
            }
        }
        let pts = Matrix::new(40, 2, data);
        let mut cfg = SiameseConfig::for_input_dim(2);
        cfg.architecture = vec![
            LayerSpec::new(16, Activation::Relu),
            LayerSpec::new(2, Activation::Linear),
        ];
        cfg.optimizer.max_epochs = 40;
        let model = train_siamese(&pts, &cfg, 3).unwrap();

        let set = build_pairs(&pts, &cfg, 3).unwrap();
        let (z, _) = nn::forward(&model, &pts).unwrap();
        let mean_dist = |pol: Polarity| {
            let (sum, count) = set
                .pairs
                .iter()
                .filter(|p| p.polarity == pol)
                .fold((0.0, 0usize), |(s, c), p| {
                    (s + math::sqrt(sq_dist(z.row(p.i), z.row(p.j))), c + 1)
                });
            sum / count as f64
        };
        assert!(
            mean_dist(Polarity::Positive) < mean_dist(Polarity::Negative),
            "positives should embed closer than negatives"
        );
    }
}
