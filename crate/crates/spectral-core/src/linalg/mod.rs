//! Dense linear-algebra kernels: Cholesky factorization, Cholesky-based QR,
//! symmetric eigendecomposition, and Grassmann distance between subspaces.

mod matrix;

pub use matrix::{dist, sq_dist, Matrix};

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Full spectrum of a symmetric matrix, eigenvalues ascending, eigenvectors
/// as the corresponding columns of an orthonormal matrix.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

/// Lower Cholesky factor `L` with `L * L^T = gram`.
///
/// Fails with [`Error::NotPositiveDefinite`] when a pivot drops below
/// `1e-12 * trace(gram) / n` or goes non-finite. No jitter is added; callers
/// decide whether a rank-deficient input is recoverable.
pub fn cholesky(gram: &Matrix) -> Result<Matrix> {
    let n = gram.rows();
    assert_eq!(n, gram.cols(), "cholesky requires a square matrix");
    let trace: f64 = (0..n).map(|i| gram[(i, i)]).sum();
    let tol = (1e-12 * trace / n as f64).max(0.0);

    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut s = gram[(j, j)];
        for p in 0..j {
            s -= l[(j, p)] * l[(j, p)];
        }
        if !(s > tol && s.is_finite()) {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let ljj = math::sqrt(s);
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut v = gram[(i, j)];
            for p in 0..j {
                v -= l[(i, p)] * l[(j, p)];
            }
            l[(i, j)] = v / ljj;
        }
    }
    Ok(l)
}

/// Inverse of a lower-triangular matrix by forward substitution.
pub fn lower_tri_inverse(l: &Matrix) -> Matrix {
    let n = l.rows();
    let mut inv = Matrix::zeros(n, n);
    for j in 0..n {
        inv[(j, j)] = 1.0 / l[(j, j)];
        for i in (j + 1)..n {
            let mut s = 0.0;
            for p in j..i {
                s += l[(i, p)] * inv[(p, j)];
            }
            inv[(i, j)] = -s / l[(i, i)];
        }
    }
    inv
}

/// Thin QR orthogonalization of an `m x k` full-column-rank matrix via the
/// Cholesky factor of its Gram matrix: `Q = A * (L^-1)^T` where
/// `L * L^T = A^T A`. Row `i` of `Q` solves `L z = a_i`, so each column
/// prefix of `Q` spans the same subspace as the matching prefix of `A`.
pub fn cholesky_qr(a: &Matrix) -> Result<Matrix> {
    let l = cholesky(&a.gram())?;
    let k = a.cols();
    let mut q = Matrix::zeros(a.rows(), k);
    for i in 0..a.rows() {
        let x = a.row(i).to_vec();
        let q_row = q.row_mut(i);
        for j in 0..k {
            let mut v = x[j];
            for p in 0..j {
                v -= l[(j, p)] * q_row[p];
            }
            q_row[j] = v / l[(j, j)];
        }
    }
    Ok(q)
}

const EIGEN_MAX_ITERATIONS: usize = 50;

/// Eigendecomposition of a symmetric matrix: Householder tridiagonalization
/// followed by implicit-shift QL with accumulated rotations. Returns the
/// full spectrum in ascending order with orthonormal eigenvector columns.
pub fn sym_eigen(a: &Matrix) -> Result<EigenPair> {
    let n = a.rows();
    assert_eq!(n, a.cols(), "sym_eigen requires a square matrix");
    if n == 0 {
        return Ok(EigenPair {
            values: Vec::new(),
            vectors: Matrix::zeros(0, 0),
        });
    }

    let mut z = a.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(&mut z, &mut d, &mut e);
    ql_implicit(&mut d, &mut e, &mut z)?;

    // ascending order, stable in the original index for determinism
    let mut perm: Vec<usize> = (0..n).collect();
    perm.sort_unstable_by(|&i, &j| d[i].partial_cmp(&d[j]).unwrap().then(i.cmp(&j)));
    let values: Vec<f64> = perm.iter().map(|&i| d[i]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (jn, &jo) in perm.iter().enumerate() {
        for i in 0..n {
            vectors[(i, jn)] = z[(i, jo)];
        }
    }
    Ok(EigenPair { values, vectors })
}

/// Householder reduction to tridiagonal form with accumulated transforms
/// (the classic `tred2`). On return `d` holds the diagonal, `e` the
/// subdiagonal in `e[1..]`, and `z` the accumulated orthogonal matrix.
fn tridiagonalize(z: &mut Matrix, d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let scale: f64 = (0..=l).map(|k| math::abs(z[(i, k)])).sum();
            if scale == 0.0 {
                e[i] = z[(i, l)];
            } else {
                for k in 0..=l {
                    z[(i, k)] /= scale;
                    h += z[(i, k)] * z[(i, k)];
                }
                let mut f = z[(i, l)];
                let g = if f >= 0.0 { -math::sqrt(h) } else { math::sqrt(h) };
                e[i] = scale * g;
                h -= f * g;
                z[(i, l)] = f - g;
                f = 0.0;
                for j in 0..=l {
                    z[(j, i)] = z[(i, j)] / h;
                    let mut g = 0.0;
                    for k in 0..=j {
                        g += z[(j, k)] * z[(i, k)];
                    }
                    for k in (j + 1)..=l {
                        g += z[(k, j)] * z[(i, k)];
                    }
                    e[j] = g / h;
                    f += e[j] * z[(i, j)];
                }
                let hh = f / (h + h);
                for j in 0..=l {
                    let f = z[(i, j)];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        let delta = f * e[k] + g * z[(i, k)];
                        z[(j, k)] -= delta;
                    }
                }
            }
        } else {
            e[i] = z[(i, l)];
        }
        d[i] = h;
    }
    d[0] = 0.0;
    e[0] = 0.0;
    for i in 0..n {
        if d[i] != 0.0 {
            for j in 0..i {
                let mut g = 0.0;
                for k in 0..i {
                    g += z[(i, k)] * z[(k, j)];
                }
                for k in 0..i {
                    let delta = g * z[(k, i)];
                    z[(k, j)] -= delta;
                }
            }
        }
        d[i] = z[(i, i)];
        z[(i, i)] = 1.0;
        for j in 0..i {
            z[(j, i)] = 0.0;
            z[(i, j)] = 0.0;
        }
    }
}

/// Implicit-shift QL on a tridiagonal matrix, rotating `z`'s columns along
/// (the classic `tql2`). Errors after a fixed per-eigenvalue budget.
fn ql_implicit(d: &mut [f64], e: &mut [f64], z: &mut Matrix) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = math::abs(d[m]) + math::abs(d[m + 1]);
                if math::abs(e[m]) <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > EIGEN_MAX_ITERATIONS {
                return Err(Error::NoConvergence {
                    limit: EIGEN_MAX_ITERATIONS,
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = math::hypot(g, 1.0);
            let sign_r = if g >= 0.0 { math::abs(r) } else { -math::abs(r) };
            g = d[m] - d[l] + e[l] / (g + sign_r);
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = math::hypot(f, g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    f = z[(k, i + 1)];
                    z[(k, i + 1)] = s * z[(k, i)] + c * f;
                    z[(k, i)] = c * z[(k, i)] - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Squared Grassmann distance between the column spaces of two `m x k`
/// full-column-rank matrices: `k - sum_i cos^2(theta_i)` over the principal
/// angles. Both inputs are re-orthonormalized through [`cholesky_qr`], so
/// the comparison is well-defined for approximately orthonormal inputs, and
/// the sum of squared cosines reduces to `|Q_a^T Q_b|_F^2`.
pub fn grassmann_sq(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.rows() != b.rows() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            got: b.rows(),
        });
    }
    if a.cols() != b.cols() {
        return Err(Error::DimensionMismatch {
            expected: a.cols(),
            got: b.cols(),
        });
    }
    let qa = cholesky_qr(a)?;
    let qb = cholesky_qr(b)?;
    let overlap = qa.xt_y(&qb).frob_norm();
    Ok((a.cols() as f64 - overlap * overlap).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQRT_2: f64 = core::f64::consts::SQRT_2;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn cholesky_identity() {
        let l = cholesky(&Matrix::identity(3)).unwrap();
        assert_eq!(l, Matrix::identity(3));
    }

    #[test]
    fn cholesky_scalar() {
        let l = cholesky(&Matrix::from_rows(&[[2.0]])).unwrap();
        assert_close(l[(0, 0)], SQRT_2, 1e-15);
    }

    #[test]
    fn cholesky_hand_expansion() {
        let l = cholesky(&Matrix::from_rows(&[[4.0, 2.0], [2.0, 5.0]])).unwrap();
        assert_eq!(l, Matrix::from_rows(&[[2.0, 0.0], [1.0, 2.0]]));
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let err = cholesky(&Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]])).unwrap_err();
        assert_eq!(err, Error::NotPositiveDefinite { pivot: 1 });
        let err = cholesky(&Matrix::zeros(2, 2)).unwrap_err();
        assert_eq!(err, Error::NotPositiveDefinite { pivot: 0 });
    }

    #[test]
    fn lower_tri_inverse_roundtrip() {
        let l = Matrix::from_rows(&[[2.0, 0.0], [1.0, 2.0]]);
        let inv = lower_tri_inverse(&l);
        let prod = l.matmul(&inv);
        assert!(prod.sub(&Matrix::identity(2)).frob_norm() < 1e-14);
    }

    #[test]
    fn cholesky_qr_keeps_orthonormal_input() {
        let (c, s) = (0.6, 0.8);
        let rot = Matrix::from_rows(&[[c, -s], [s, c]]);
        let q = cholesky_qr(&rot).unwrap();
        assert!(q.sub(&rot).frob_norm() < 1e-12);
        let q = cholesky_qr(&Matrix::identity(3)).unwrap();
        assert!(q.sub(&Matrix::identity(3)).frob_norm() < 1e-12);
    }

    #[test]
    fn cholesky_qr_normalizes_single_column() {
        let a = Matrix::from_rows(&[[1.0], [1.0]]);
        let q = cholesky_qr(&a).unwrap();
        assert_close(q[(0, 0)], 1.0 / SQRT_2, 1e-15);
        assert_close(q[(1, 0)], 1.0 / SQRT_2, 1e-15);
    }

    #[test]
    fn cholesky_qr_propagates_rank_deficiency() {
        let a = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]]);
        assert!(matches!(
            cholesky_qr(&a),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn sym_eigen_diagonal() {
        let pair = sym_eigen(&Matrix::from_rows(&[
            [3.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 2.0],
        ]))
        .unwrap();
        assert_close(pair.values[0], 1.0, 1e-12);
        assert_close(pair.values[1], 2.0, 1e-12);
        assert_close(pair.values[2], 3.0, 1e-12);
    }

    #[test]
    fn sym_eigen_two_by_two() {
        let pair = sym_eigen(&Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]])).unwrap();
        assert_close(pair.values[0], 1.0, 1e-12);
        assert_close(pair.values[1], 3.0, 1e-12);
        // eigenvectors (1,-1)/sqrt(2) and (1,1)/sqrt(2), up to sign
        let v0 = pair.vectors.col(0);
        let v1 = pair.vectors.col(1);
        assert_close(v0[0].abs(), 1.0 / SQRT_2, 1e-12);
        assert_close(v0[1].abs(), 1.0 / SQRT_2, 1e-12);
        assert_close((v0[0] + v0[1]).abs(), 0.0, 1e-12);
        assert_close((v1[0] - v1[1]).abs(), 0.0, 1e-12);
    }

    #[test]
    fn sym_eigen_path_laplacian() {
        let pair = sym_eigen(&Matrix::from_rows(&[[1.0, -1.0], [-1.0, 1.0]])).unwrap();
        assert_close(pair.values[0], 0.0, 1e-12);
        assert_close(pair.values[1], 2.0, 1e-12);
        let v0 = pair.vectors.col(0);
        assert_close(v0[0] - v0[1], 0.0, 1e-12); // constant bottom eigenvector
    }

    #[test]
    fn sym_eigen_reconstructs() {
        let a = Matrix::from_rows(&[[1.0, 2.0, 3.0], [2.0, 3.0, 2.0], [3.0, 2.0, 2.0]]);
        let pair = sym_eigen(&a).unwrap();
        let mut recon = Matrix::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                for (t, &lam) in pair.values.iter().enumerate() {
                    recon[(i, j)] += lam * pair.vectors[(i, t)] * pair.vectors[(j, t)];
                }
            }
        }
        assert!(recon.sub(&a).frob_norm() / a.frob_norm() < 1e-12);
    }

    #[test]
    fn grassmann_identical_subspaces() {
        let a = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0]]);
        assert_close(grassmann_sq(&a, &a).unwrap(), 0.0, 1e-12);
    }

    #[test]
    fn grassmann_orthogonal_subspaces() {
        let a = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0]]);
        let b = Matrix::from_rows(&[[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        assert_close(grassmann_sq(&a, &b).unwrap(), 2.0, 1e-12);
    }

    #[test]
    fn grassmann_half_angle() {
        let a = Matrix::from_rows(&[[1.0], [0.0]]);
        let b = Matrix::from_rows(&[[1.0 / SQRT_2], [1.0 / SQRT_2]]);
        assert_close(grassmann_sq(&a, &b).unwrap(), 0.5, 1e-12);
    }

    #[test]
    fn grassmann_shape_mismatch() {
        let a = Matrix::zeros(4, 2);
        let b = Matrix::zeros(3, 2);
        assert!(matches!(
            grassmann_sq(&a, &b),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
