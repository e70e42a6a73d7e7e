//! Small dense kernels for fixed-size symmetric matrices.
//!
//! Everything here works on `SMatrix<f64, N, N>` so the 2×2 residual
//! covariances and the 6×6 information matrices share one code path.

use nalgebra::{SMatrix, SVector};

/// Off-diagonal Frobenius norm at which the Jacobi sweep stops.
pub const JACOBI_TOLERANCE: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 64;

/// Lower-triangular Cholesky factor `L` with `a = L Lᵀ`.
///
/// Only the lower triangle of `a` is read. Returns `None` when a pivot is
/// not strictly positive.
pub fn cholesky<const N: usize>(a: &SMatrix<f64, N, N>) -> Option<SMatrix<f64, N, N>> {
    let mut l = SMatrix::<f64, N, N>::zeros();
    for j in 0..N {
        let mut d = a[(j, j)];
        for p in 0..j {
            d -= l[(j, p)] * l[(j, p)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..N {
            let mut s = a[(i, j)];
            for p in 0..j {
                s -= l[(i, p)] * l[(j, p)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

/// `log det(a)` for symmetric positive definite `a`, or `-inf` when the
/// Cholesky factorization breaks down.
pub fn log_det_spd<const N: usize>(a: &SMatrix<f64, N, N>) -> f64 {
    match cholesky(a) {
        Some(l) => (0..N).map(|i| 2.0 * l[(i, i)].ln()).sum(),
        None => f64::NEG_INFINITY,
    }
}

/// Solves `L x = b` for lower-triangular `L`, column by column.
pub fn forward_substitute<const N: usize, const C: usize>(
    l: &SMatrix<f64, N, N>,
    b: &SMatrix<f64, N, C>,
) -> SMatrix<f64, N, C> {
    let mut x = *b;
    for c in 0..C {
        for i in 0..N {
            let mut s = x[(i, c)];
            for p in 0..i {
                s -= l[(i, p)] * x[(p, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    x
}

/// Solves `Lᵀ x = b` for lower-triangular `L`.
pub fn backward_substitute_transpose<const N: usize, const C: usize>(
    l: &SMatrix<f64, N, N>,
    b: &SMatrix<f64, N, C>,
) -> SMatrix<f64, N, C> {
    let mut x = *b;
    for c in 0..C {
        for i in (0..N).rev() {
            let mut s = x[(i, c)];
            for p in (i + 1)..N {
                s -= l[(p, i)] * x[(p, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    x
}

/// Solves `a x = b` for SPD `a` through its Cholesky factor.
pub fn spd_solve<const N: usize>(a: &SMatrix<f64, N, N>, b: &SVector<f64, N>) -> Option<SVector<f64, N>> {
    let l = cholesky(a)?;
    let y = forward_substitute(&l, b);
    Some(backward_substitute_transpose(&l, &y))
}

/// Inverse of an SPD matrix, symmetrized.
pub fn spd_inverse<const N: usize>(a: &SMatrix<f64, N, N>) -> Option<SMatrix<f64, N, N>> {
    let l = cholesky(a)?;
    let y = forward_substitute(&l, &SMatrix::<f64, N, N>::identity());
    let inv = backward_substitute_transpose(&l, &y);
    Some((inv + inv.transpose()) * 0.5)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted in
/// descending order.
pub fn symmetric_eigenvalues<const N: usize>(a: &SMatrix<f64, N, N>) -> SVector<f64, N> {
    let mut m = (a + a.transpose()) * 0.5;
    let scale = m.abs().max().max(f64::MIN_POSITIVE);
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&m) < JACOBI_TOLERANCE * scale.max(1.0) {
            break;
        }
        for p in 0..N {
            for q in (p + 1)..N {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // m ← Jᵀ m J with J the (p, q) plane rotation
                for k in 0..N {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..N {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
            }
        }
    }
    let mut eig: Vec<f64> = (0..N).map(|i| m[(i, i)]).collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    SVector::<f64, N>::from_iterator(eig)
}

fn off_diagonal_norm<const N: usize>(m: &SMatrix<f64, N, N>) -> f64 {
    let mut s = 0.0;
    for i in 0..N {
        for j in 0..N {
            if i != j {
                s += m[(i, j)] * m[(i, j)];
            }
        }
    }
    s.sqrt()
}
