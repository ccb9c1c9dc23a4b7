//! k-means over embeddings, nearest-centroid out-of-sample assignment, and
//! the ACC / NMI clustering measures with an optimal label matching.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{sq_dist, Matrix};
use crate::math;
use crate::nn::{self, MlpModel};

/// A trained spectral map plus the `k` centroids found in its embedding
/// space; the unit of persistence and out-of-sample prediction.
#[derive(Debug, Clone)]
pub struct ClusterModel {
    pub spectral_map: MlpModel,
    pub centroids: Matrix,
    pub k: usize,
}

#[derive(Debug, Clone)]
pub struct KmeansOutcome {
    pub centroids: Matrix,
    pub labels: Vec<usize>,
    pub inertia: f64,
    /// Number of empty-cluster reseeds that occurred across Lloyd updates.
    pub reseeded: usize,
}

/// Lloyd's algorithm with k-means++ initialization, best of `restarts`
/// runs by inertia (ties keep the earliest restart). An emptied cluster is
/// reseeded at the point farthest from its assigned centroid.
pub fn kmeans(points: &Matrix, k: usize, restarts: usize, seed: u64) -> Result<KmeansOutcome> {
    let n = points.rows();
    if n < k {
        return Err(Error::TooFewPoints { needed: k, got: n });
    }
    assert!(k >= 1 && restarts >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KmeansOutcome> = None;
    for _ in 0..restarts {
        let (outcome, _) = lloyd_once(points, k, &mut rng);
        if best.as_ref().is_none_or(|b| outcome.inertia < b.inertia) {
            best = Some(outcome);
        }
    }
    Ok(best.unwrap())
}

const LLOYD_MAX_ITERATIONS: usize = 300;

fn lloyd_once<R: Rng>(points: &Matrix, k: usize, rng: &mut R) -> (KmeansOutcome, Vec<f64>) {
    let mut centroids = kmeans_pp_init(points, k, rng);
    let mut labels = nearest_centroid_labels(points, &centroids);
    let mut reseeded = 0;
    let mut inertia_history = Vec::new();
    for _ in 0..LLOYD_MAX_ITERATIONS {
        let (new_centroids, reseeds) = update_centroids(points, &labels, k, &centroids);
        let new_labels = nearest_centroid_labels(points, &new_centroids);
        reseeded += reseeds;
        centroids = new_centroids;
        inertia_history.push(inertia(points, &new_labels, &centroids));
        let converged = new_labels == labels;
        labels = new_labels;
        if converged {
            break;
        }
    }
    let inertia = inertia(points, &labels, &centroids);
    (
        KmeansOutcome {
            centroids,
            labels,
            inertia,
            reseeded,
        },
        inertia_history,
    )
}

fn kmeans_pp_init<R: Rng>(points: &Matrix, k: usize, rng: &mut R) -> Matrix {
    let n = points.rows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), points.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    idx = i;
                    break;
                }
                target -= w;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), points.row(next)));
        }
    }
    let mut centroids = Matrix::zeros(k, points.cols());
    for (c, &i) in chosen.iter().enumerate() {
        centroids.row_mut(c).copy_from_slice(points.row(i));
    }
    centroids
}

/// Nearest centroid per row, ties to the lower centroid index.
pub fn nearest_centroid_labels(points: &Matrix, centroids: &Matrix) -> Vec<usize> {
    (0..points.rows())
        .map(|i| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..centroids.rows() {
                let d = sq_dist(points.row(i), centroids.row(c));
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            best
        })
        .collect()
}

fn update_centroids(
    points: &Matrix,
    labels: &[usize],
    k: usize,
    previous: &Matrix,
) -> (Matrix, usize) {
    let dim = points.cols();
    let mut sums = Matrix::zeros(k, dim);
    let mut counts = vec![0usize; k];
    for (i, &c) in labels.iter().enumerate() {
        counts[c] += 1;
        let row = points.row(i);
        let acc = sums.row_mut(c);
        for (a, &x) in acc.iter_mut().zip(row) {
            *a += x;
        }
    }
    let mut reseeds = 0;
    let mut centroids = Matrix::zeros(k, dim);
    for (c, &count) in counts.iter().enumerate() {
        if count == 0 {
            // reseed at the point farthest from its currently assigned centroid
            let mut far_idx = 0;
            let mut far_d = -1.0;
            for (i, &label) in labels.iter().enumerate() {
                let d = sq_dist(points.row(i), previous.row(label));
                if d > far_d {
                    far_d = d;
                    far_idx = i;
                }
            }
            centroids.row_mut(c).copy_from_slice(points.row(far_idx));
            reseeds += 1;
        } else {
            let inv = 1.0 / count as f64;
            for (out, &s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                *out = s * inv;
            }
        }
    }
    (centroids, reseeds)
}

fn inertia(points: &Matrix, labels: &[usize], centroids: &Matrix) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(i, &c)| sq_dist(points.row(i), centroids.row(c)))
        .sum()
}

/// Embeds `points` through the model's spectral map and assigns each row to
/// its nearest centroid — the out-of-sample extension path.
pub fn assign(model: &ClusterModel, points: &Matrix) -> Result<Vec<usize>> {
    let (embedded, _) = nn::forward(&model.spectral_map, points)?;
    Ok(nearest_centroid_labels(&embedded, &model.centroids))
}

fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = BTreeMap::new();
    let mut out = Vec::with_capacity(labels.len());
    for &l in labels {
        let next = map.len();
        let id = *map.entry(l).or_insert(next);
        out.push(id);
    }
    (out, map.len())
}

fn check_lengths(truth: &[usize], pred: &[usize]) -> Result<()> {
    if truth.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: truth.len(),
            right: pred.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::TooFewPoints { needed: 1, got: 0 });
    }
    Ok(())
}

/// Unsupervised clustering accuracy: the best agreement over all
/// permutations of predicted cluster names, found as an optimal assignment
/// on the confusion matrix.
pub fn acc(truth: &[usize], pred: &[usize]) -> Result<f64> {
    check_lengths(truth, pred)?;
    let n = truth.len();
    let (t, kt) = compact(truth);
    let (p, kp) = compact(pred);
    let k = kt.max(kp);
    let mut confusion = vec![vec![0i64; k]; k];
    for (&ti, &pi) in t.iter().zip(&p) {
        confusion[ti][pi] += 1;
    }
    // maximize matched counts == minimize (n - count)
    let cost: Vec<Vec<i64>> = confusion
        .iter()
        .map(|row| row.iter().map(|&c| n as i64 - c).collect())
        .collect();
    let matching = hungarian_min(&cost);
    let matched: i64 = matching.iter().enumerate().map(|(i, &j)| confusion[i][j]).sum();
    Ok(matched as f64 / n as f64)
}

/// Normalized mutual information `I(l;c) / max(H(l), H(c))` with
/// natural-log entropies from empirical counts. Two single-cluster
/// partitions compare as 1.0.
pub fn nmi(truth: &[usize], pred: &[usize]) -> Result<f64> {
    check_lengths(truth, pred)?;
    let n = truth.len() as f64;
    let (t, kt) = compact(truth);
    let (p, kp) = compact(pred);
    let mut joint = vec![vec![0usize; kp]; kt];
    let mut t_counts = vec![0usize; kt];
    let mut p_counts = vec![0usize; kp];
    for (&ti, &pi) in t.iter().zip(&p) {
        joint[ti][pi] += 1;
        t_counts[ti] += 1;
        p_counts[pi] += 1;
    }
    let entropy = |counts: &[usize]| -> f64 {
        counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let q = c as f64 / n;
                -q * math::ln(q)
            })
            .sum()
    };
    let h_t = entropy(&t_counts);
    let h_p = entropy(&p_counts);
    if h_t == 0.0 && h_p == 0.0 {
        return Ok(1.0);
    }
    let mut info = 0.0;
    for (i, row) in joint.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let pij = c as f64 / n;
            let pi = t_counts[i] as f64 / n;
            let qj = p_counts[j] as f64 / n;
            info += pij * math::ln(pij / (pi * qj));
        }
    }
    Ok((info / h_t.max(h_p)).clamp(0.0, 1.0))
}

/// Mutual information in nats between two labelings; exposed for symmetry
/// checks of the unnormalized quantity.
pub fn mutual_information(truth: &[usize], pred: &[usize]) -> Result<f64> {
    check_lengths(truth, pred)?;
    let n = truth.len() as f64;
    let (t, kt) = compact(truth);
    let (p, kp) = compact(pred);
    let mut joint = vec![vec![0usize; kp]; kt];
    let mut t_counts = vec![0usize; kt];
    let mut p_counts = vec![0usize; kp];
    for (&ti, &pi) in t.iter().zip(&p) {
        joint[ti][pi] += 1;
        t_counts[ti] += 1;
        p_counts[pi] += 1;
    }
    let mut info = 0.0;
    for (i, row) in joint.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let pij = c as f64 / n;
            info += pij * math::ln(pij * n * n / (t_counts[i] as f64 * p_counts[j] as f64));
        }
    }
    Ok(info)
}

/// Minimum-cost perfect matching on a square cost matrix (Kuhn–Munkres via
/// potentials). Returns the column matched to each row.
fn hungarian_min(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    const INF: i64 = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1]; // p[j]: row matched to column j (1-based, 0 = free)
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = INF;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kmeans_n_equals_k_is_exact() {
        let pts = Matrix::from_rows(&[[0.0, 0.0], [5.0, 5.0], [9.0, 0.0]]);
        let out = kmeans(&pts, 3, 5, 1).unwrap();
        assert!(out.inertia < 1e-24);
        let mut sorted: Vec<usize> = out.labels.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 3);
    }

    #[test]
    fn kmeans_two_pairs_on_line() {
        let pts = Matrix::new(4, 1, alloc::vec![0.0, 0.1, 10.0, 10.1]);
        let out = kmeans(&pts, 2, 5, 7).unwrap();
        let mut centers = out.centroids.col(0);
        centers.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((centers[0] - 0.05).abs() < 1e-12);
        assert!((centers[1] - 10.05).abs() < 1e-12);
        assert_eq!(out.labels[0], out.labels[1]);
        assert_eq!(out.labels[2], out.labels[3]);
        assert_ne!(out.labels[0], out.labels[2]);
    }

    #[test]
    fn kmeans_degenerate_identical_points() {
        let pts = Matrix::new(4, 1, alloc::vec![2.0, 2.0, 2.0, 2.0]);
        let out = kmeans(&pts, 2, 3, 0).unwrap();
        assert_eq!(out.inertia, 0.0);
        for c in 0..2 {
            assert_eq!(out.centroids[(c, 0)], 2.0);
        }
    }

    #[test]
    fn kmeans_rejects_too_few_points() {
        let pts = Matrix::zeros(2, 1);
        assert!(matches!(
            kmeans(&pts, 3, 1, 0),
            Err(Error::TooFewPoints { .. })
        ));
    }

    #[test]
    fn lloyd_inertia_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut data = Vec::new();
        for _ in 0..60 {
            data.push(rng.random_range(-1.0..1.0));
            data.push(rng.random_range(-1.0..1.0));
        }
        let pts = Matrix::new(60, 2, data);
        let (_, history) = lloyd_once(&pts, 4, &mut rng);
        for w in history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "inertia increased: {w:?}");
        }
    }

    #[test]
    fn assign_ties_break_to_lower_index() {
        let centroids = Matrix::from_rows(&[[0.0], [2.0]]);
        let labels = nearest_centroid_labels(&Matrix::from_rows(&[[1.0]]), &centroids);
        assert_eq!(labels, alloc::vec![0]);
    }

    #[test]
    fn acc_exact_and_permutation_invariant() {
        assert_eq!(acc(&[1, 1, 2, 2], &[1, 1, 2, 2]).unwrap(), 1.0);
        assert_eq!(acc(&[1, 1, 2, 2], &[2, 2, 1, 1]).unwrap(), 1.0);
        assert_eq!(acc(&[1, 1, 2, 2], &[1, 2, 1, 2]).unwrap(), 0.5);
    }

    #[test]
    fn acc_length_mismatch() {
        assert_eq!(
            acc(&[0, 1], &[0]).unwrap_err(),
            Error::LengthMismatch { left: 2, right: 1 }
        );
    }

    #[test]
    fn acc_handles_unequal_cluster_counts() {
        // three predicted clusters vs two true ones
        let a = acc(&[0, 0, 1, 1], &[0, 1, 2, 2]).unwrap();
        assert!((a - 0.75).abs() < 1e-12);
    }

    #[test]
    fn nmi_examples() {
        assert_eq!(nmi(&[1, 1, 2, 2], &[1, 1, 2, 2]).unwrap(), 1.0);
        assert_eq!(nmi(&[1, 1, 2, 2], &[1, 2, 1, 2]).unwrap(), 0.0);
        assert_eq!(nmi(&[1, 1, 2, 2], &[5, 5, 9, 9]).unwrap(), 1.0);
        // both single-cluster: 0/0 convention
        assert_eq!(nmi(&[3, 3, 3], &[7, 7, 7]).unwrap(), 1.0);
        // one single-cluster, the other not
        assert_eq!(nmi(&[0, 0, 1, 1], &[4, 4, 4, 4]).unwrap(), 0.0);
    }

    #[test]
    fn hungarian_small_known_case() {
        let cost = alloc::vec![
            alloc::vec![4i64, 1, 3],
            alloc::vec![2, 0, 5],
            alloc::vec![3, 2, 2],
        ];
        let m = hungarian_min(&cost);
        let total: i64 = m.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        assert_eq!(total, 5); // (0,1), (1,0), (2,2)
    }
}
