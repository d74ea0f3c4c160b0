//! SVD-based rank-revealing factorization.

use nalgebra::DMatrix;

use crate::error::{Result, TssError};

/// Default relative truncation tolerance.
pub const DEFAULT_TOL: f64 = 1e-12;

/// `F ~ left * right` with `left` having orthonormal columns.
#[derive(Clone, Debug)]
pub struct LowRankFactors {
    /// `p x rank`
    pub left: DMatrix<f64>,
    /// `rank x q`
    pub right: DMatrix<f64>,
    pub rank: usize,
    /// Retained singular values, descending.
    pub sigma: Vec<f64>,
}

impl LowRankFactors {
    fn empty(p: usize, q: usize) -> Self {
        LowRankFactors {
            left: DMatrix::zeros(p, 0),
            right: DMatrix::zeros(0, q),
            rank: 0,
            sigma: Vec::new(),
        }
    }

    pub fn product(&self) -> DMatrix<f64> {
        &self.left * &self.right
    }
}

/// Singular value cut-off used by [`rank_reveal`] for a matrix of the given
/// shape and largest singular value.
pub fn rank_threshold(p: usize, q: usize, sigma_max: f64, tol: f64) -> f64 {
    if tol > 0.0 {
        tol * sigma_max
    } else {
        p.max(q) as f64 * f64::EPSILON * sigma_max
    }
}

/// Thin SVD `a = u * diag(sigma) * v^T`, singular values descending.
///
/// Householder QR reduces the tall orientation to a square triangle, which is
/// then diagonalized by one-sided Jacobi rotations. Columns of `u` belonging
/// to exactly zero singular values are zero.
pub struct Svd {
    pub u: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub v: DMatrix<f64>,
}

impl Svd {
    pub fn new(a: &DMatrix<f64>) -> Svd {
        let (p, q) = a.shape();
        if p < q {
            let t = Svd::new(&a.transpose());
            return Svd {
                u: t.v,
                sigma: t.sigma,
                v: t.u,
            };
        }
        if q == 0 {
            return Svd {
                u: DMatrix::zeros(p, 0),
                sigma: Vec::new(),
                v: DMatrix::zeros(0, 0),
            };
        }
        let qr = a.clone().qr();
        let (basis, mut g) = (qr.q(), qr.r());
        let mut v = DMatrix::<f64>::identity(q, q);
        for _sweep in 0..80 {
            let mut rotated = false;
            for i in 0..q {
                for j in i + 1..q {
                    let alpha = g.column(i).norm_squared();
                    let beta = g.column(j).norm_squared();
                    let gamma = g.column(i).dot(&g.column(j));
                    if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                        continue;
                    }
                    rotated = true;
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    for m in [&mut g, &mut v] {
                        for r in 0..m.nrows() {
                            let (x, y) = (m[(r, i)], m[(r, j)]);
                            m[(r, i)] = c * x - s * y;
                            m[(r, j)] = s * x + c * y;
                        }
                    }
                }
            }
            if !rotated {
                break;
            }
        }
        let mut order: Vec<usize> = (0..q).collect();
        let norms: Vec<f64> = (0..q).map(|k| g.column(k).norm()).collect();
        order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
        let mut u_small = DMatrix::zeros(q, q);
        let mut v_sorted = DMatrix::zeros(q, q);
        let mut sigma = Vec::with_capacity(q);
        for (dst, &src) in order.iter().enumerate() {
            let s = norms[src];
            if s > 0.0 {
                u_small.set_column(dst, &(g.column(src) / s));
            }
            v_sorted.set_column(dst, &v.column(src));
            sigma.push(s);
        }
        Svd {
            u: basis * u_small,
            sigma,
            v: v_sorted,
        }
    }
}

/// Truncated SVD: keeps the singular values above `tol * sigma_max`, with
/// `tol == 0` meaning machine-precision rank.
pub fn rank_reveal(f: &DMatrix<f64>, tol: f64) -> Result<LowRankFactors> {
    rank_reveal_scaled(f, tol, 0.0)
}

/// Like [`rank_reveal`] with the cut-off taken relative to
/// `max(sigma_max, scale)` instead of `sigma_max`.
///
/// When `f` is a piece of a larger matrix, passing that matrix's norm as
/// `scale` keeps blocks that are zero up to rounding at rank zero.
pub fn rank_reveal_scaled(f: &DMatrix<f64>, tol: f64, scale: f64) -> Result<LowRankFactors> {
    if f.iter().any(|v| !v.is_finite()) {
        return Err(TssError::NonFiniteInput);
    }
    let (p, q) = f.shape();
    if p == 0 || q == 0 {
        return Ok(LowRankFactors::empty(p, q));
    }
    let svd = Svd::new(f);
    let sigma_max = svd.sigma[0];
    if sigma_max == 0.0 {
        return Ok(LowRankFactors::empty(p, q));
    }
    let cut = rank_threshold(p, q, sigma_max.max(scale), tol.max(0.0));
    let rank = svd.sigma.iter().take_while(|&&s| s > cut).count();
    let left = svd.u.columns(0, rank).into_owned();
    let mut right = svd.v.columns(0, rank).transpose();
    for (r, mut row) in right.row_iter_mut().enumerate() {
        row *= svd.sigma[r];
    }
    let sigma = svd.sigma[..rank].to_vec();
    Ok(LowRankFactors {
        left,
        right,
        rank,
        sigma,
    })
}

/// Numerical rank with the same thresholding as [`rank_reveal`].
pub fn numerical_rank(f: &DMatrix<f64>, tol: f64) -> Result<usize> {
    Ok(rank_reveal(f, tol)?.rank)
}

/// Numerical rank with the same thresholding as [`rank_reveal_scaled`].
pub fn numerical_rank_scaled(f: &DMatrix<f64>, tol: f64, scale: f64) -> Result<usize> {
    Ok(rank_reveal_scaled(f, tol, scale)?.rank)
}
