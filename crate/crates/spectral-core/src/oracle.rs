//! Ground-truth machinery: exact spectral clustering by dense
//! eigendecomposition of the full graph Laplacian, Grassmann-distance
//! evaluation of learned embeddings, and an empirically verified
//! shattering construction that realizes every dichotomy of a grid point
//! set through the sign pattern of a Laplacian's second eigenvector.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::affinity::{gaussian_affinity, AffinityBatch, AffinityConfig};
use crate::cluster::kmeans;
use crate::error::{Error, Result};
use crate::linalg::{dist, grassmann_sq, sq_dist, sym_eigen, Matrix};
use crate::math;
use crate::nn::MlpModel;
use crate::spectral::embed;

/// Unnormalized graph Laplacian `D - W`.
pub fn laplacian(w: &AffinityBatch) -> Matrix {
    let m = w.size();
    let mut l = w.w().scale(-1.0);
    for (i, &d) in w.degrees().iter().enumerate() {
        l[(i, i)] += d;
    }
    debug_assert_eq!(l.rows(), m);
    l
}

/// Eigenvectors of the `k` smallest eigenvalues, as columns, with the
/// eigenvalues themselves.
pub fn bottom_eigenvectors(lap: &Matrix, k: usize) -> Result<(Matrix, Vec<f64>)> {
    let pair = sym_eigen(lap)?;
    let n = lap.rows();
    assert!(k <= n, "k exceeds matrix size");
    let mut vectors = Matrix::zeros(n, k);
    for j in 0..k {
        for i in 0..n {
            vectors[(i, j)] = pair.vectors[(i, j)];
        }
    }
    Ok((vectors, pair.values[..k].to_vec()))
}

#[derive(Debug, Clone)]
pub struct ExactClustering {
    pub labels: Vec<usize>,
    /// Bottom-k eigenvectors of `D - W`, columns ascending by eigenvalue.
    pub eigenvectors: Matrix,
    pub eigenvalues: Vec<f64>,
}

/// Classic spectral clustering on the full dataset: build the affinity
/// matrix per `cfg`, eigendecompose `D - W`, and k-means the bottom-k
/// eigenvector embedding (10 restarts).
pub fn exact_spectral_clustering(
    points: &Matrix,
    k: usize,
    cfg: &AffinityConfig,
    seed: u64,
) -> Result<ExactClustering> {
    let aff = gaussian_affinity(points, cfg, None, None)?;
    let lap = laplacian(&aff);
    let (eigenvectors, eigenvalues) = bottom_eigenvectors(&lap, k)?;
    let km = kmeans(&eigenvectors, k, 10, seed)?;
    Ok(ExactClustering {
        labels: km.labels,
        eigenvectors,
        eigenvalues,
    })
}

/// Squared Grassmann distance between the learned embedding of `points`
/// and the bottom-k eigenspace of the full-graph Laplacian.
pub fn grassmann_vs_oracle(
    model: &MlpModel,
    points: &Matrix,
    k: usize,
    cfg: &AffinityConfig,
) -> Result<f64> {
    let emb = embed(model, points)?;
    let aff = gaussian_affinity(points, cfg, None, None)?;
    let (vecs, _) = bottom_eigenvectors(&laplacian(&aff), k)?;
    grassmann_sq(&emb, &vecs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    S,
    T,
}

/// A point set realizing one dichotomy of `m` grid points: `n = 10m`
/// points in 3-space split into balanced sides such that each side is
/// chained by short hops (max gap `< 1`) while all cross-side distances
/// are at least 1.
#[derive(Debug, Clone)]
pub struct ShatterInstance {
    /// The `m` dichotomized grid points, at `z = 0`.
    pub base: Matrix,
    /// All `10m` points.
    pub points: Matrix,
    pub side: Vec<Side>,
    /// Certificate for the within-side chaining: the largest hop needed,
    /// strictly below 1.
    pub max_path_gap: f64,
    /// Certificate for the cross-side separation: at least 1.
    pub min_cross_distance: f64,
}

impl ShatterInstance {
    pub fn base_count(&self) -> usize {
        self.base.rows()
    }

    pub fn size(&self) -> usize {
        self.points.rows()
    }
}

/// Builds the lifted construction for one dichotomy of `m` unit-grid
/// points. The seed shuffles which balancing slot lands on which side; the
/// geometry stays inside the minimal grid square either way.
///
/// Layout per side (5m points): m grid points at z = 0, their copies at
/// z = +/-1, midpoints at z = +/-1/2, and 2m filler points equally spaced
/// along a minimum spanning tree of the lifted copies.
pub fn build_shatter_instance(m: usize, dichotomy: &[bool], seed: u64) -> Result<ShatterInstance> {
    assert!(m >= 1, "m must be at least 1");
    if dichotomy.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: dichotomy.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // 2m compact row-major slots on the unit grid
    let grid_side = int_sqrt_ceil(2 * m);
    let slot = |idx: usize| -> [f64; 3] {
        [(idx % grid_side) as f64, (idx / grid_side) as f64, 0.0]
    };

    let mut plane_points: Vec<[f64; 3]> = Vec::with_capacity(2 * m);
    let mut plane_sides: Vec<Side> = Vec::with_capacity(2 * m);
    for (i, &in_s) in dichotomy.iter().enumerate() {
        plane_points.push(slot(i));
        plane_sides.push(if in_s { Side::S } else { Side::T });
    }

    // balancing points: the next m slots in shuffled order, assigned
    // alternately to whichever side still needs members
    let count_s = plane_sides.iter().filter(|&&s| s == Side::S).count();
    let mut quota_s = m - count_s;
    let mut quota_t = m - (m - count_s);
    let balance_positions: Vec<usize> = index::sample(&mut rng, m, m)
        .into_iter()
        .map(|p| m + p)
        .collect();
    let mut prefer_s = true;
    for idx in balance_positions {
        let take_s = if quota_s == 0 {
            false
        } else if quota_t == 0 {
            true
        } else {
            prefer_s
        };
        prefer_s = !prefer_s;
        plane_points.push(slot(idx));
        if take_s {
            plane_sides.push(Side::S);
            quota_s -= 1;
        } else {
            plane_sides.push(Side::T);
            quota_t -= 1;
        }
    }

    let mut points: Vec<[f64; 3]> = Vec::with_capacity(10 * m);
    let mut sides: Vec<Side> = Vec::with_capacity(10 * m);

    // z = 0 plane, copies, midpoints
    let mut lifted: [Vec<[f64; 3]>; 2] = [Vec::new(), Vec::new()];
    let mut spines: [Vec<([f64; 3], [f64; 3])>; 2] = [Vec::new(), Vec::new()];
    for (&p, &side) in plane_points.iter().zip(&plane_sides) {
        let z_top = match side {
            Side::S => 1.0,
            Side::T => -1.0,
        };
        let copy = [p[0], p[1], z_top];
        let mid = [p[0], p[1], z_top / 2.0];
        let side_idx = if side == Side::S { 0 } else { 1 };
        lifted[side_idx].push(copy);
        spines[side_idx].push((p, mid));
        spines[side_idx].push((mid, copy));
        for q in [p, copy, mid] {
            points.push(q);
            sides.push(side);
        }
    }

    // 2m filler points per side along the spanning tree of the lifted
    // copies; with a single copy (m = 1) the spine segments stand in
    for side_idx in 0..2 {
        let side = if side_idx == 0 { Side::S } else { Side::T };
        let edges: Vec<([f64; 3], [f64; 3])> = if lifted[side_idx].len() >= 2 {
            prim_mst(&lifted[side_idx])
        } else {
            spines[side_idx].clone()
        };
        let lengths: Vec<f64> = edges.iter().map(|(a, b)| dist3(a, b)).collect();
        let alloc = allocate_proportional(&lengths, 2 * m);
        for ((a, b), count) in edges.iter().zip(alloc) {
            for j in 1..=count {
                let t = j as f64 / (count + 1) as f64;
                let p = [
                    a[0] + t * (b[0] - a[0]),
                    a[1] + t * (b[1] - a[1]),
                    a[2] + t * (b[2] - a[2]),
                ];
                points.push(p);
                sides.push(side);
            }
        }
    }

    if points.len() != 10 * m {
        return Err(Error::ConstructionInvariantViolated(
            "point count is not 10m",
        ));
    }
    let n_s = sides.iter().filter(|&&s| s == Side::S).count();
    if n_s != 5 * m {
        return Err(Error::ConstructionInvariantViolated(
            "partition is not balanced",
        ));
    }

    let mut flat = Vec::with_capacity(points.len() * 3);
    for p in &points {
        flat.extend_from_slice(p);
    }
    let points = Matrix::new(10 * m, 3, flat);

    let mut base_flat = Vec::with_capacity(m * 3);
    for p in plane_points.iter().take(m) {
        base_flat.extend_from_slice(p);
    }
    let base = Matrix::new(m, 3, base_flat);

    // certificates
    let max_path_gap = side_bottleneck(&points, &sides, Side::S)
        .max(side_bottleneck(&points, &sides, Side::T));
    if max_path_gap >= 1.0 || !max_path_gap.is_finite() {
        return Err(Error::ConstructionInvariantViolated(
            "within-side path gap reaches 1",
        ));
    }
    let mut min_cross = f64::INFINITY;
    for i in 0..points.rows() {
        for j in (i + 1)..points.rows() {
            if sides[i] != sides[j] {
                min_cross = min_cross.min(dist(points.row(i), points.row(j)));
            }
        }
    }
    if min_cross < 1.0 - 1e-9 {
        return Err(Error::ConstructionInvariantViolated(
            "cross-side distance below 1",
        ));
    }

    Ok(ShatterInstance {
        base,
        points,
        side: sides,
        max_path_gap,
        min_cross_distance: min_cross,
    })
}

fn int_sqrt_ceil(x: usize) -> usize {
    let mut s = 1;
    while s * s < x {
        s += 1;
    }
    s
}

fn dist3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    dist(a.as_slice(), b.as_slice())
}

/// Prim's algorithm on the complete Euclidean graph.
fn prim_mst(pts: &[[f64; 3]]) -> Vec<([f64; 3], [f64; 3])> {
    let n = pts.len();
    let mut in_tree = vec![false; n];
    let mut best_d = vec![f64::INFINITY; n];
    let mut best_from = vec![0usize; n];
    in_tree[0] = true;
    for j in 1..n {
        best_d[j] = dist3(&pts[0], &pts[j]);
    }
    let mut edges = Vec::with_capacity(n - 1);
    for _ in 1..n {
        let mut pick = usize::MAX;
        let mut pick_d = f64::INFINITY;
        for j in 0..n {
            if !in_tree[j] && best_d[j] < pick_d {
                pick_d = best_d[j];
                pick = j;
            }
        }
        in_tree[pick] = true;
        edges.push((pts[best_from[pick]], pts[pick]));
        for j in 0..n {
            if !in_tree[j] {
                let d = dist3(&pts[pick], &pts[j]);
                if d < best_d[j] {
                    best_d[j] = d;
                    best_from[j] = pick;
                }
            }
        }
    }
    edges
}

/// Largest-remainder allocation of `total` items proportional to `lengths`.
fn allocate_proportional(lengths: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = lengths.iter().sum();
    if sum <= 0.0 || lengths.is_empty() {
        let mut out = vec![0; lengths.len()];
        if let Some(first) = out.first_mut() {
            *first = total;
        }
        return out;
    }
    let shares: Vec<f64> = lengths.iter().map(|&l| total as f64 * l / sum).collect();
    let mut counts: Vec<usize> = shares.iter().map(|&s| s as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.sort_unstable_by(|&a, &b| {
        let ra = shares[a] - counts[a] as f64;
        let rb = shares[b] - counts[b] as f64;
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for i in 0..(total - assigned) {
        counts[order[i % order.len()]] += 1;
    }
    counts
}

/// Largest edge of the minimum spanning tree over one side's points: the
/// smallest `b` such that the side is chained by hops of length <= `b`.
fn side_bottleneck(points: &Matrix, sides: &[Side], side: Side) -> f64 {
    let members: Vec<usize> = (0..points.rows()).filter(|&i| sides[i] == side).collect();
    let n = members.len();
    let mut in_tree = vec![false; n];
    let mut best_d = vec![f64::INFINITY; n];
    in_tree[0] = true;
    for j in 1..n {
        best_d[j] = dist(points.row(members[0]), points.row(members[j]));
    }
    let mut bottleneck: f64 = 0.0;
    for _ in 1..n {
        let mut pick = usize::MAX;
        let mut pick_d = f64::INFINITY;
        for j in 0..n {
            if !in_tree[j] && best_d[j] < pick_d {
                pick_d = best_d[j];
                pick = j;
            }
        }
        in_tree[pick] = true;
        bottleneck = bottleneck.max(pick_d);
        for j in 0..n {
            if !in_tree[j] {
                let d = dist(points.row(members[pick]), points.row(members[j]));
                if d < best_d[j] {
                    best_d[j] = d;
                }
            }
        }
    }
    bottleneck
}

/// Complete-graph Gaussian affinity `exp(-d^2 / (2 sigma^2))` over all
/// pairs, zero diagonal — the graph the shattering theorem reasons about.
pub fn complete_gaussian_affinity(points: &Matrix, sigma: f64) -> AffinityBatch {
    let n = points.rows();
    let denom = 2.0 * sigma * sigma;
    let mut w = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = math::exp(-sq_dist(points.row(i), points.row(j)) / denom);
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    AffinityBatch::from_affinity_matrix(w)
}

/// Geometric scale sweep from `start` down to `floor`.
pub fn geometric_sweep(start: f64, floor: f64, ratio: f64) -> Vec<f64> {
    assert!(ratio > 0.0 && ratio < 1.0 && start > floor && floor > 0.0);
    let mut out = Vec::new();
    let mut s = start;
    while s >= floor {
        out.push(s);
        s *= ratio;
    }
    out
}

/// The default sweep used by the shattering demos: 1 down to 1e-3, ratio
/// 0.7.
pub fn default_sigma_sweep() -> Vec<f64> {
    geometric_sweep(1.0, 1e-3, 0.7)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShatterOutcome {
    pub success: bool,
    /// First scale in the sweep whose thresholded second eigenvector
    /// separates the sides.
    pub sigma: Option<f64>,
}

/// Sweeps sigma (largest first), eigendecomposes the complete-graph
/// Laplacian, and checks whether thresholding the second-smallest
/// eigenvector at zero reproduces the S/T partition up to global sign.
/// A miss across the whole sweep is reported, not an error.
pub fn verify_shattering(instance: &ShatterInstance, sweep: &[f64]) -> Result<ShatterOutcome> {
    for &sigma in sweep {
        if sign_split_matches(instance, sigma)? {
            return Ok(ShatterOutcome {
                success: true,
                sigma: Some(sigma),
            });
        }
    }
    Ok(ShatterOutcome {
        success: false,
        sigma: None,
    })
}

fn sign_split_matches(instance: &ShatterInstance, sigma: f64) -> Result<bool> {
    let aff = complete_gaussian_affinity(&instance.points, sigma);
    let lap = laplacian(&aff);
    let pair = sym_eigen(&lap)?;
    let n = instance.size();
    let mut direct = true;
    let mut flipped = true;
    for i in 0..n {
        let positive = pair.vectors[(i, 1)] > 0.0;
        let in_s = instance.side[i] == Side::S;
        if positive != in_s {
            direct = false;
        }
        if positive == in_s {
            flipped = false;
        }
    }
    Ok(direct || flipped)
}

/// Alpha/beta separation of the instance's complete Gaussian graph at a
/// given scale: within-side chaining hops carry affinity at least
/// `alpha = exp(-b^2 / 2 sigma^2)` and cross-side pairs at most
/// `beta = exp(-1 / 2 sigma^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparationCertificate {
    pub alpha: f64,
    pub beta: f64,
    pub holds: bool,
}

pub fn separation_certificate(instance: &ShatterInstance, sigma: f64) -> SeparationCertificate {
    let denom = 2.0 * sigma * sigma;
    let b = instance.max_path_gap;
    let alpha = math::exp(-(b * b) / denom);
    let beta = math::exp(-1.0 / denom);

    let mut holds = alpha > beta;
    // every within-side chaining hop carries affinity >= alpha
    for side in [Side::S, Side::T] {
        let members: Vec<usize> = (0..instance.size())
            .filter(|&i| instance.side[i] == side)
            .collect();
        let pts: Vec<[f64; 3]> = members
            .iter()
            .map(|&i| {
                let r = instance.points.row(i);
                [r[0], r[1], r[2]]
            })
            .collect();
        for (a, c) in prim_mst(&pts) {
            let w = math::exp(-sq_dist(a.as_slice(), c.as_slice()) / denom);
            if w < alpha - 1e-12 {
                holds = false;
            }
        }
    }
    // every cross pair carries affinity <= beta
    for i in 0..instance.size() {
        for j in (i + 1)..instance.size() {
            if instance.side[i] != instance.side[j] {
                let w = math::exp(-sq_dist(instance.points.row(i), instance.points.row(j)) / denom);
                if w > beta + 1e-12 {
                    holds = false;
                }
            }
        }
    }
    SeparationCertificate { alpha, beta, holds }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplacian_of_four_cycle() {
        // cycle 0-1-2-3-0 with unit weights: spectrum 0, 2, 2, 4
        let mut w = Matrix::zeros(4, 4);
        for (i, j) in [(0, 1), (1, 2), (2, 3), (3, 0)] {
            w[(i, j)] = 1.0;
            w[(j, i)] = 1.0;
        }
        let aff = AffinityBatch::from_affinity_matrix(w);
        let pair = sym_eigen(&laplacian(&aff)).unwrap();
        let expect = [0.0, 2.0, 2.0, 4.0];
        for (v, e) in pair.values.iter().zip(expect) {
            assert!((v - e).abs() < 1e-10, "{v} vs {e}");
        }
    }

    #[test]
    fn disconnected_components_have_two_zero_eigenvalues() {
        // two far blobs with a 2-NN graph: disconnected, labels = components
        let points = Matrix::from_rows(&[
            [0.0, 0.0],
            [0.4, 0.0],
            [0.0, 0.4],
            [100.0, 100.0],
            [100.4, 100.0],
            [100.0, 100.4],
        ]);
        let cfg = AffinityConfig {
            n_neighbors: 2,
            ..AffinityConfig::default()
        };
        let out = exact_spectral_clustering(&points, 2, &cfg, 0).unwrap();
        assert!(out.eigenvalues[0].abs() < 1e-10);
        assert!(out.eigenvalues[1].abs() < 1e-10);
        assert_eq!(out.labels[0], out.labels[1]);
        assert_eq!(out.labels[1], out.labels[2]);
        assert_eq!(out.labels[3], out.labels[4]);
        assert_eq!(out.labels[4], out.labels[5]);
        assert_ne!(out.labels[0], out.labels[3]);
    }

    #[test]
    fn laplacian_is_psd_with_constant_bottom_eigenvector() {
        let points = Matrix::from_rows(&[
            [0.0, 0.0],
            [1.0, 0.1],
            [2.0, -0.1],
            [3.0, 0.2],
            [4.0, 0.0],
        ]);
        let cfg = AffinityConfig {
            n_neighbors: 2,
            scale_k: 1,
            ..AffinityConfig::default()
        };
        let aff = gaussian_affinity(&points, &cfg, None, None).unwrap();
        let pair = sym_eigen(&laplacian(&aff)).unwrap();
        assert!(pair.values[0] > -1e-10);
        let v0 = pair.vectors.col(0);
        let mean = v0.iter().sum::<f64>() / v0.len() as f64;
        for v in &v0 {
            assert!((v - mean).abs() < 1e-6, "bottom eigenvector not constant");
        }
    }

    #[test]
    fn shatter_instance_m1_has_expected_shape() {
        let inst = build_shatter_instance(1, &[true], 0).unwrap();
        assert_eq!(inst.size(), 10);
        assert_eq!(inst.side.iter().filter(|&&s| s == Side::S).count(), 5);
        assert!(inst.max_path_gap < 1.0);
        assert!(inst.min_cross_distance >= 1.0 - 1e-9);
    }

    #[test]
    fn shatter_instance_respects_dichotomy_on_base_points() {
        let dichotomy = [true, true, false, false];
        let inst = build_shatter_instance(4, &dichotomy, 7).unwrap();
        for (i, &in_s) in dichotomy.iter().enumerate() {
            let expect = if in_s { Side::S } else { Side::T };
            assert_eq!(inst.side[3 * i], expect); // plane points go in triples
            let p = inst.points.row(3 * i);
            assert_eq!(p, inst.base.row(i));
        }
    }

    #[test]
    fn shattering_m1_succeeds_in_default_sweep() {
        let inst = build_shatter_instance(1, &[true], 0).unwrap();
        let out = verify_shattering(&inst, &default_sigma_sweep()).unwrap();
        assert!(out.success, "no sigma separated the m=1 instance");
        let sigma = out.sigma.unwrap();
        let cert = separation_certificate(&inst, sigma);
        assert!(cert.holds);
        assert!(cert.alpha > cert.beta);
    }

    #[test]
    fn oversized_sigma_fails_on_mixed_dichotomy() {
        let inst = build_shatter_instance(4, &[true, false, true, false], 3).unwrap();
        assert!(!sign_split_matches(&inst, 100.0).unwrap());
    }

    #[test]
    fn allocation_matches_totals() {
        let alloc = allocate_proportional(&[1.0, 1.0, 2.0], 8);
        assert_eq!(alloc.iter().sum::<usize>(), 8);
        assert_eq!(alloc, vec![2, 2, 4]);
        let alloc = allocate_proportional(&[1.0, 1.5], 5);
        assert_eq!(alloc.iter().sum::<usize>(), 5);
    }
}
