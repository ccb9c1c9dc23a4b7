//! Nearest-neighbor graph construction and Gaussian affinities over a
//! pluggable distance: raw Euclidean, or Euclidean between Siamese
//! embeddings. Labeled points can override the kernel for semi-supervised
//! training.

use alloc::borrow::Cow;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{dist, sq_dist, Matrix};
use crate::math;
use crate::nn::{self, MlpModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleMode {
    /// Median over points of the distance to the nearest neighbor.
    PerPointMedianNn,
    /// Median over points of the distance to the `scale_k`-th neighbor.
    GlobalMedianKth,
    /// Caller-supplied sigma.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceKind {
    Euclidean,
    /// Euclidean distance between embeddings of a trained Siamese net.
    Siamese,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffinityConfig {
    pub n_neighbors: usize,
    pub scale_mode: ScaleMode,
    /// Neighbor index (1-based) for [`ScaleMode::GlobalMedianKth`].
    pub scale_k: usize,
    pub fixed_sigma: Option<f64>,
    pub distance: DistanceKind,
}

impl Default for AffinityConfig {
    fn default() -> Self {
        Self {
            n_neighbors: 10,
            scale_mode: ScaleMode::GlobalMedianKth,
            scale_k: 3,
            fixed_sigma: None,
            distance: DistanceKind::Euclidean,
        }
    }
}

/// Symmetric nonnegative batch affinity matrix with zero diagonal, plus the
/// degree vector `d_i = sum_j W_ij`.
#[derive(Debug, Clone)]
pub struct AffinityBatch {
    w: Matrix,
    degrees: Vec<f64>,
}

impl AffinityBatch {
    /// Wraps an affinity matrix, computing degrees. Panics when the matrix
    /// is not square-symmetric with nonnegative entries and zero diagonal.
    pub fn from_affinity_matrix(w: Matrix) -> Self {
        let m = w.rows();
        assert_eq!(m, w.cols(), "affinity matrix must be square");
        for i in 0..m {
            assert!(w[(i, i)] == 0.0, "affinity diagonal must be zero");
            for j in 0..i {
                assert!(
                    (w[(i, j)] - w[(j, i)]).abs() <= 1e-12 && w[(i, j)] >= 0.0,
                    "affinity matrix must be symmetric and nonnegative"
                );
            }
        }
        let degrees = (0..m).map(|i| w.row(i).iter().sum()).collect();
        Self { w, degrees }
    }

    pub fn w(&self) -> &Matrix {
        &self.w
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn size(&self) -> usize {
        self.w.rows()
    }
}

/// Indices of the `k` nearest neighbors of each point under a caller
/// distance, self excluded, sorted by distance with ties to the lower index.
pub fn knn_with<F: Fn(usize, usize) -> f64>(n: usize, k: usize, dist_fn: F) -> Result<Vec<Vec<usize>>> {
    if k >= n {
        return Err(Error::TooFewPoints {
            needed: k + 1,
            got: n,
        });
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut cand: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (dist_fn(i, j), j))
            .collect();
        cand.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        out.push(cand[..k].iter().map(|&(_, j)| j).collect());
    }
    Ok(out)
}

/// Euclidean k-nearest-neighbor lists by exhaustive search.
pub fn knn(points: &Matrix, k: usize) -> Result<Vec<Vec<usize>>> {
    knn_with(points.rows(), k, |i, j| sq_dist(points.row(i), points.row(j)))
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn kth_neighbor_median(points: &Matrix, k: usize) -> Result<f64> {
    let n = points.rows();
    if n < k + 1 {
        return Err(Error::TooFewPoints {
            needed: k + 1,
            got: n,
        });
    }
    let neighbors = knn(points, k)?;
    let mut ds: Vec<f64> = (0..n)
        .map(|i| dist(points.row(i), points.row(neighbors[i][k - 1])))
        .collect();
    let sigma = median(&mut ds);
    if sigma > 0.0 {
        Ok(sigma)
    } else {
        Err(Error::DegenerateScale)
    }
}

/// Kernel scale per the configured heuristic.
pub fn select_scale(points: &Matrix, cfg: &AffinityConfig) -> Result<f64> {
    match cfg.scale_mode {
        ScaleMode::Fixed => {
            let sigma = cfg
                .fixed_sigma
                .expect("fixed scale mode requires fixed_sigma");
            if sigma > 0.0 {
                Ok(sigma)
            } else {
                Err(Error::DegenerateScale)
            }
        }
        ScaleMode::PerPointMedianNn => kth_neighbor_median(points, 1),
        ScaleMode::GlobalMedianKth => kth_neighbor_median(points, cfg.scale_k),
    }
}

/// The representation distances are measured in: the raw points for the
/// Euclidean kind, Siamese embeddings otherwise.
///
/// Panics if the config asks for Siamese distances and no model is given.
pub fn representation<'a>(
    points: &'a Matrix,
    cfg: &AffinityConfig,
    siamese: Option<&MlpModel>,
) -> Result<Cow<'a, Matrix>> {
    match cfg.distance {
        DistanceKind::Euclidean => Ok(Cow::Borrowed(points)),
        DistanceKind::Siamese => {
            let model = siamese.expect("siamese distance requires a trained model");
            let (z, _) = nn::forward(model, points)?;
            Ok(Cow::Owned(z))
        }
    }
}

/// Gaussian kernel over the k-nearest-neighbor graph:
/// `W_ij = exp(-d_ij^2 / (2 sigma^2))` when `j` is among `i`'s neighbors,
/// 0 otherwise, then symmetrized as `(W + W^T) / 2` with a zero diagonal.
///
/// When both endpoints carry labels the kernel value is overridden: 1 for
/// equal labels, 0 for different ones.
pub fn gaussian_affinity(
    points: &Matrix,
    cfg: &AffinityConfig,
    labels: Option<&[Option<usize>]>,
    siamese: Option<&MlpModel>,
) -> Result<AffinityBatch> {
    let rep = representation(points, cfg, siamese)?;
    gaussian_affinity_from_rep(&rep, cfg, labels)
}

/// Same kernel construction, but on rows that already live in the space
/// distances are measured in (raw points or precomputed embeddings).
pub fn gaussian_affinity_from_rep(
    rep: &Matrix,
    cfg: &AffinityConfig,
    labels: Option<&[Option<usize>]>,
) -> Result<AffinityBatch> {
    let sigma = select_scale(rep, cfg)?;
    let neighbors = knn(rep, cfg.n_neighbors)?;

    let m = rep.rows();
    let mut w = Matrix::zeros(m, m);
    let denom = 2.0 * sigma * sigma;
    for (i, nb) in neighbors.iter().enumerate() {
        for &j in nb {
            w[(i, j)] = math::exp(-sq_dist(rep.row(i), rep.row(j)) / denom);
        }
    }
    for i in 0..m {
        for j in (i + 1)..m {
            let v = 0.5 * (w[(i, j)] + w[(j, i)]);
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
        w[(i, i)] = 0.0;
    }
    if let Some(labels) = labels {
        assert_eq!(labels.len(), m, "label slice must match point count");
        apply_label_override(&mut w, labels);
    }
    Ok(AffinityBatch::from_affinity_matrix(w))
}

/// Sets `W_ij` to 1 for same-label pairs and 0 for different-label pairs,
/// leaving pairs with an unlabeled endpoint untouched. Idempotent.
pub(crate) fn apply_label_override(w: &mut Matrix, labels: &[Option<usize>]) {
    let m = w.rows();
    for i in 0..m {
        let Some(li) = labels[i] else { continue };
        for j in (i + 1)..m {
            let Some(lj) = labels[j] else { continue };
            let v = if li == lj { 1.0 } else { 0.0 };
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
}

/// Euclidean distance between the Siamese embeddings of two points.
pub fn siamese_distance(model: &MlpModel, x_i: &[f64], x_j: &[f64]) -> Result<f64> {
    let d = model.input_dim();
    if x_i.len() != d || x_j.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: if x_i.len() != d { x_i.len() } else { x_j.len() },
        });
    }
    let (zi, _) = nn::forward(model, &Matrix::new(1, d, x_i.to_vec()))?;
    let (zj, _) = nn::forward(model, &Matrix::new(1, d, x_j.to_vec()))?;
    Ok(dist(zi.row(0), zj.row(0)))
}
