//! Small dense complex linear algebra shared by every module.
//!
//! All inner products are conjugate-linear in the first slot: `<x, y> = x^H y`.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use num_complex::Complex;

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = Complex { re: 0.0, im: 0.0 };
pub const ONE: C64 = Complex { re: 1.0, im: 0.0 };
pub const I: C64 = Complex { re: 0.0, im: 1.0 };

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

/// Builds a complex matrix from real row-major entries.
pub fn real_mat(rows: usize, cols: usize, entries: &[f64]) -> CMat {
    assert_eq!(entries.len(), rows * cols);
    CMat::from_fn(rows, cols, |i, j| c(entries[i * cols + j], 0.0))
}

pub fn real_vec(entries: &[f64]) -> CVec {
    CVec::from_iterator(entries.len(), entries.iter().map(|&x| c(x, 0.0)))
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Unit basis vector `e_k` of length `n`.
pub fn unit(n: usize, k: usize) -> CVec {
    let mut v = CVec::zeros(n);
    v[k] = ONE;
    v
}

/// Column vector as an `n x 1` matrix.
pub fn col(v: &CVec) -> CMat {
    CMat::from_column_slice(v.len(), 1, v.as_slice())
}

/// Singular values in non-increasing order. Empty matrices have none.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = match to_faer(m).singular_values() {
        Ok(s) => s,
        Err(_) => SVD::new(m.clone(), false, false)
            .singular_values
            .iter()
            .copied()
            .collect(),
    };
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Spectral (operator 2-) norm.
pub fn op_norm(m: &CMat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

fn to_faer(m: &CMat) -> faer::Mat<C64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, C64>) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Thin SVD with singular values sorted non-increasingly: `(U, s, V)`, `m = U diag(s) V^H`.
///
/// Uses faer; nalgebra's complex SVD loses accuracy on nearly real 2x2 input.
pub fn svd_sorted(m: &CMat) -> (CMat, Vec<f64>, CMat) {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return (CMat::zeros(rows, 0), Vec::new(), CMat::zeros(cols, 0));
    }
    if let Ok(svd) = to_faer(m).thin_svd() {
        let s = svd.S().column_vector().iter().map(|z| z.re).collect();
        return (from_faer(svd.U()), s, from_faer(svd.V()));
    }
    let svd = SVD::new(m.clone(), true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^H");
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let s = order.iter().map(|&i| svd.singular_values[i]).collect();
    let u_sorted = CMat::from_fn(rows, k, |i, j| u[(i, order[j])]);
    let v_sorted = CMat::from_fn(cols, k, |i, j| v_t[(order[j], i)].conj());
    (u_sorted, s, v_sorted)
}

/// Orthonormal basis of the null space of `m` (columns), using the full right
/// singular basis. Singular values at or below `tol` count as zero.
pub fn null_space(m: &CMat, tol: f64) -> CMat {
    let (rows, cols) = m.shape();
    if cols == 0 {
        return CMat::zeros(0, 0);
    }
    if rows == 0 {
        return identity(cols);
    }
    // Pad to a square system so that the right singular basis is complete.
    let mut padded = CMat::zeros(rows.max(cols), cols);
    padded.view_mut((0, 0), (rows, cols)).copy_from(m);
    let (_, s, v) = svd_sorted(&padded);
    let rank = s.iter().filter(|&&x| x > tol).count();
    v.columns(rank, cols - rank).into_owned()
}

/// Hermitian eigendecomposition with eigenvalues sorted ascending.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    let herm = (m + m.adjoint()) * c(0.5, 0.0);
    if let Ok(eig) = to_faer(&herm).self_adjoint_eigen(faer::Side::Lower) {
        let values = eig.S().column_vector().iter().map(|z| z.re).collect();
        return (values, from_faer(eig.U()));
    }
    let eig = SymmetricEigen::new(herm);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// Eigenvalues of a general square complex matrix (unordered).
pub fn eigenvalues_general(m: &CMat) -> Vec<C64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    if m.nrows() == 1 {
        return vec![m[(0, 0)]];
    }
    nalgebra::Schur::new(m.clone())
        .eigenvalues()
        .map(|v| v.iter().copied().collect())
        .unwrap_or_else(|| {
            // Complex Schur always triangularizes; keep a fallback for safety.
            let (_, t) = nalgebra::Schur::new(m.clone()).unpack();
            (0..t.nrows()).map(|i| t[(i, i)]).collect()
        })
}

/// Matrix exponential (Padé scaling and squaring).
pub fn expm(m: &CMat) -> CMat {
    m.clone().exp()
}

/// Frobenius-free check that every entry is finite.
pub fn all_finite(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Thin QR with a non-negative real diagonal in `R`.
pub fn qr_thin(m: &CMat) -> (CMat, CMat) {
    let (rows, cols) = m.shape();
    if cols == 0 {
        return (CMat::zeros(rows, 0), CMat::zeros(0, 0));
    }
    let qr = m.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for k in 0..cols.min(rows) {
        let d = r[(k, k)];
        let a = d.norm();
        if a > 0.0 {
            let phase = d / a;
            // Q R = (Q D)(D^H R) with D = diag(phase).
            for i in 0..rows {
                q[(i, k)] *= phase;
            }
            for j in 0..r.ncols() {
                r[(k, j)] *= phase.conj();
            }
        }
    }
    (q, r)
}

/// Thin QR by modified Gram-Schmidt with one reorthogonalization pass.
///
/// Rows that are uniformly small in `m` stay relatively accurate in `Q`,
/// which Householder reflections do not guarantee. Columns must be independent.
pub fn qr_gs(m: &CMat) -> (CMat, CMat) {
    let (rows, cols) = m.shape();
    let mut q = m.clone();
    let mut r = CMat::zeros(cols, cols);
    for k in 0..cols {
        for _ in 0..2 {
            for j in 0..k {
                let p = q.column(j).dotc(&q.column(k));
                r[(j, k)] += p;
                let qj = q.column(j).into_owned();
                q.column_mut(k).axpy(-p, &qj, ONE);
            }
        }
        let nrm = q.column(k).norm();
        r[(k, k)] = c(nrm, 0.0);
        if nrm > 0.0 {
            q.column_mut(k).unscale_mut(nrm);
        }
    }
    let _ = rows;
    (q, r)
}

/// Principal argument of a complex number in (-pi, pi].
#[inline]
pub fn arg(z: C64) -> f64 {
    z.im.atan2(z.re)
}

/// Matrix of stacked columns.
pub fn hstack(blocks: &[&CMat]) -> CMat {
    let rows = blocks.first().map(|b| b.nrows()).unwrap_or(0);
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMat::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows);
        out.view_mut((0, at), (rows, b.ncols())).copy_from(b);
        at += b.ncols();
    }
    out
}

pub fn anticommutator(a: &CMat, b: &CMat) -> CMat {
    a * b + b * a
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm_of_diagonal() {
        let m = real_mat(2, 2, &[1.5, 0.0, 0.0, -1.5]);
        let e = expm(&(m * c(2.0, 0.0)));
        assert!((e[(0, 0)].re - 3.0f64.exp()).abs() < 1e-12 * 3.0f64.exp());
        assert!((e[(1, 1)].re - (-3.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn null_space_of_rank_one() {
        let m = real_mat(2, 3, &[1.0, 1.0, 0.0, 2.0, 2.0, 0.0]);
        let ns = null_space(&m, 1e-12);
        assert_eq!(ns.ncols(), 2);
        assert!((&m * &ns).norm() < 1e-12);
    }

    #[test]
    fn qr_has_positive_diagonal() {
        let m = CMat::from_fn(3, 2, |i, j| c((i + j) as f64, (i * j) as f64 - 1.0));
        let (q, r) = qr_thin(&m);
        assert!((&q * &r - &m).norm() < 1e-12);
        assert!(r[(0, 0)].re > 0.0 && r[(0, 0)].im.abs() < 1e-14);
        assert!((q.adjoint() * &q - identity(2)).norm() < 1e-12);
    }

    #[test]
    fn svd_of_nearly_real_rank_one_projector() {
        let eps = 6.591949208711867e-17;
        let m = CMat::from_row_slice(
            2,
            2,
            &[
                c(0.0010830750709228676, 0.0),
                c(-0.0328922790228002, -eps),
                c(-0.0328922790228002, eps),
                c(0.998916924929077, 0.0),
            ],
        );
        let (u, s, v) = svd_sorted(&m);
        let d = CMat::from_fn(2, 2, |i, j| if i == j { c(s[i], 0.0) } else { ZERO });
        assert!((&u * d * v.adjoint() - &m).norm() < 1e-14);
        assert!(s[1] < 1e-14);
    }
}
