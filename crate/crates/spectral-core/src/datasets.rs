//! Seeded toy-dataset generators: non-convex 2D shapes that spectral
//! methods separate and centroid methods do not, plus Gaussian blob
//! baselines in 2D and 3D.

use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    /// Two 270-degree arcs, radii 1 and 2.5, same center, openings aligned.
    NestedC,
    /// Two full circles, radii 1 and 2.5.
    ConcentricCircles,
    /// Two interleaved Archimedean spiral arms.
    Spirals,
    /// Two interleaving half-circles.
    Moons,
    /// Two Gaussian blobs, centers 10 apart.
    Blobs,
    /// Two Gaussian blobs in 3-space, centers 10*sqrt(3) apart.
    Blobs3d,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub n: usize,
    /// Standard deviation of per-coordinate Gaussian jitter.
    pub noise: f64,
    pub seed: u64,
}

/// An n x d feature table with optional per-point integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    pub features: Matrix,
    pub labels: Option<Vec<usize>>,
}

impl DataMatrix {
    pub fn unlabeled(features: Matrix) -> Self {
        Self {
            features,
            labels: None,
        }
    }
}

const TAU: f64 = core::f64::consts::TAU;
const PI: f64 = core::f64::consts::PI;

/// Deterministic per seed; ground-truth labels attached (cluster 0 first).
pub fn generate(spec: &DatasetSpec) -> Result<DataMatrix> {
    if spec.n < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: spec.n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n0 = spec.n / 2;
    let n1 = spec.n - n0;
    let dim = match spec.kind {
        DatasetKind::Blobs3d => 3,
        _ => 2,
    };

    let mut features = Matrix::zeros(spec.n, dim);
    let mut labels = Vec::with_capacity(spec.n);
    let mut row = 0;
    for (cluster, count) in [(0usize, n0), (1usize, n1)] {
        for _ in 0..count {
            let p = sample_point(spec.kind, cluster, &mut rng);
            let out = features.row_mut(row);
            for (t, &v) in p.iter().take(dim).enumerate() {
                let jitter: f64 = StandardNormal.sample(&mut rng);
                out[t] = v + spec.noise * jitter;
            }
            labels.push(cluster);
            row += 1;
        }
    }
    Ok(DataMatrix {
        features,
        labels: Some(labels),
    })
}

fn sample_point<R: Rng>(kind: DatasetKind, cluster: usize, rng: &mut R) -> [f64; 3] {
    match kind {
        DatasetKind::NestedC => {
            // 270-degree arcs with the gap facing angle zero
            let theta = rng.random_range(0.25 * PI..1.75 * PI);
            let r = if cluster == 0 { 1.0 } else { 2.5 };
            [r * math::cos(theta), r * math::sin(theta), 0.0]
        }
        DatasetKind::ConcentricCircles => {
            let theta = rng.random_range(0.0..TAU);
            let r = if cluster == 0 { 1.0 } else { 2.5 };
            [r * math::cos(theta), r * math::sin(theta), 0.0]
        }
        DatasetKind::Spirals => {
            let theta = rng.random_range(0.5 * PI..3.0 * PI);
            let r = 2.5 * theta / (3.0 * PI);
            let (x, y) = (r * math::cos(theta), r * math::sin(theta));
            if cluster == 0 {
                [x, y, 0.0]
            } else {
                [-x, -y, 0.0]
            }
        }
        DatasetKind::Moons => {
            let t = rng.random_range(0.0..PI);
            if cluster == 0 {
                [math::cos(t), math::sin(t), 0.0]
            } else {
                [1.0 - math::cos(t), 0.5 - math::sin(t), 0.0]
            }
        }
        DatasetKind::Blobs => {
            let cx = if cluster == 0 { 0.0 } else { 10.0 };
            [cx, 0.0, 0.0]
        }
        DatasetKind::Blobs3d => {
            let c = if cluster == 0 { 0.0 } else { 10.0 };
            [c, c, c]
        }
    }
}
