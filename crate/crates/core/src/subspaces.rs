//! Finite-dimensional subspace geometry.
//!
//! Subspaces are stored as orthonormal frames. Every distance reduces to
//! singular values of small matrices built from the frames, so nothing here
//! depends on the basis a caller happened to supply.

use crate::error::{Error, Result};
use crate::linalg::{c, hstack, identity, qr_gs, singular_values, svd_sorted, CMat};

/// Relative rank tolerance used when none is supplied.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// An orthonormal frame `Q` (n x k, `Q^H Q = I_k`) representing its column span.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    basis: CMat,
}

impl Frame {
    /// Wraps columns that are already orthonormal. Use [`orthonormalize`] otherwise.
    pub fn from_orthonormal(basis: CMat) -> Self {
        debug_assert!(orthonormality_defect(&basis) < 1e-10, "columns are not orthonormal");
        Frame { basis }
    }

    pub fn zero(ambient_dim: usize) -> Self {
        Frame {
            basis: CMat::zeros(ambient_dim, 0),
        }
    }

    pub fn full(ambient_dim: usize) -> Self {
        Frame {
            basis: identity(ambient_dim),
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn is_zero(&self) -> bool {
        self.dim() == 0
    }

    pub fn basis(&self) -> &CMat {
        &self.basis
    }

    pub fn into_basis(self) -> CMat {
        self.basis
    }

    /// Orthogonal projector `Q Q^H`.
    pub fn projector(&self) -> CMat {
        &self.basis * self.basis.adjoint()
    }

    /// Applies a linear map and re-orthonormalizes the image.
    pub fn map(&self, m: &CMat, rank_tol: f64) -> Frame {
        orthonormalize(&(m * &self.basis), rank_tol)
    }

    /// Orthogonal complement inside the ambient space.
    pub fn complement(&self) -> Frame {
        let n = self.ambient_dim();
        let p = identity(n) - self.projector();
        orthonormalize(&p, DEFAULT_RANK_TOL)
    }
}

/// `||Q^H Q - I||`, the orthonormality defect of a column set.
pub fn orthonormality_defect(q: &CMat) -> f64 {
    if q.ncols() == 0 {
        return 0.0;
    }
    (q.adjoint() * q - identity(q.ncols())).norm()
}

fn check_dims(u: &Frame, v: &Frame) -> Result<()> {
    if u.ambient_dim() != v.ambient_dim() {
        return Err(Error::DimensionMismatch(format!(
            "frames live in C^{} and C^{}",
            u.ambient_dim(),
            v.ambient_dim()
        )));
    }
    Ok(())
}

/// Orthonormal frame for the column space of `m`.
///
/// Directions whose singular value falls below `rank_tol` times the largest
/// singular value are dropped; a zero matrix yields the zero frame.
pub fn orthonormalize(m: &CMat, rank_tol: f64) -> Frame {
    assert!(rank_tol > 0.0, "rank_tol must be positive");
    let n = m.nrows();
    if m.ncols() == 0 || m.iter().all(|z| z.norm() == 0.0) {
        return Frame::zero(n);
    }
    let (u, s, _) = svd_sorted(m);
    let cutoff = rank_tol * s[0];
    let rank = s.iter().filter(|&&x| x > cutoff).count();
    if rank == m.ncols() && s[rank - 1] > 1e-3 * s[0] {
        // Well-conditioned full rank: Gram-Schmidt keeps exact columns exact.
        return Frame { basis: qr_gs(m).0 };
    }
    Frame {
        basis: u.columns(0, rank).into_owned(),
    }
}

/// Directed gap `sup { dist(u, V) : u in U, |u| = 1 }`.
///
/// The zero subspace has directed gap 0 to anything (supremum over the empty set).
pub fn gap_directed(u: &Frame, v: &Frame) -> Result<f64> {
    check_dims(u, v)?;
    if u.is_zero() {
        return Ok(0.0);
    }
    let residual = u.basis() - v.basis() * (v.basis().adjoint() * u.basis());
    Ok(singular_values(&residual).first().copied().unwrap_or(0.0).min(1.0))
}

/// Symmetric gap `max(gap(U, V), gap(V, U))`.
pub fn gap(u: &Frame, v: &Frame) -> Result<f64> {
    Ok(gap_directed(u, v)?.max(gap_directed(v, u)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionBound {
    /// Smallest singular value of `P_V` restricted to `U`.
    pub sigma_min: f64,
    pub injective: bool,
    pub isomorphism: bool,
}

/// Lower bound for `|P_V u| / |u|` on `U`, plus the injectivity verdicts that
/// follow from the gap being below one.
pub fn projection_bound(u: &Frame, v: &Frame) -> Result<ProjectionBound> {
    check_dims(u, v)?;
    let sigma_min = if u.is_zero() {
        1.0
    } else if u.dim() > v.dim() {
        0.0
    } else {
        let g = v.basis().adjoint() * u.basis();
        singular_values(&g).last().copied().unwrap_or(0.0)
    };
    let injective = gap_directed(u, v)? < 1.0 - 1e-12;
    let isomorphism = gap(u, v)? < 1.0 - 1e-12 && u.dim() == v.dim();
    Ok(ProjectionBound {
        sigma_min,
        injective,
        isomorphism,
    })
}

pub fn subspace_sum(u: &Frame, v: &Frame, rank_tol: f64) -> Result<Frame> {
    check_dims(u, v)?;
    Ok(orthonormalize(&hstack(&[u.basis(), v.basis()]), rank_tol))
}

/// Intersection from principal angles: principal vectors of `U` whose cosine
/// with `V` is at least `1 - rank_tol`.
pub fn subspace_intersection(u: &Frame, v: &Frame, rank_tol: f64) -> Result<Frame> {
    check_dims(u, v)?;
    if u.is_zero() || v.is_zero() {
        return Ok(Frame::zero(u.ambient_dim()));
    }
    let g = u.basis().adjoint() * v.basis();
    let (y, s, _) = svd_sorted(&g);
    let count = s.iter().filter(|&&cos| cos >= 1.0 - rank_tol).count();
    let vectors = u.basis() * y.columns(0, count);
    Ok(orthonormalize(&vectors, DEFAULT_RANK_TOL))
}

/// `|| 1_U - P_U P_V |_U ||`, equal to `1 - sigma_min(Q_V^H Q_U)^2`.
pub fn asymptotic_projection_defect(u: &Frame, v: &Frame) -> Result<f64> {
    check_dims(u, v)?;
    if u.is_zero() {
        return Ok(0.0);
    }
    let g = u.basis().adjoint() * v.basis();
    let m = identity(u.dim()) - &g * g.adjoint();
    Ok(singular_values(&m).first().copied().unwrap_or(0.0))
}

/// Coordinates for a family of vectors known only through their Gram matrix.
///
/// Returns `X` (rank x m) with `X^H X = G`, dropping eigen-directions below
/// `rank_tol * max eigenvalue`. Columns of `X` can then be compared with the
/// frame machinery above in place of the original vectors.
pub fn gram_coordinates(gram: &CMat, rank_tol: f64) -> CMat {
    let m = gram.nrows();
    if m == 0 {
        return CMat::zeros(0, 0);
    }
    let (vals, vecs) = crate::linalg::hermitian_eigen(gram);
    let top = vals.iter().cloned().fold(0.0f64, f64::max);
    let keep: Vec<usize> = (0..m).filter(|&i| top > 0.0 && vals[i] > rank_tol * top).collect();
    let mut x = CMat::zeros(keep.len(), m);
    for (row, &i) in keep.iter().enumerate() {
        let scale = vals[i].sqrt();
        for j in 0..m {
            x[(row, j)] = vecs[(j, i)].conj() * c(scale, 0.0);
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{col, real_mat, unit};

    fn line(theta: f64) -> Frame {
        orthonormalize(&real_mat(2, 1, &[theta.cos(), theta.sin()]), 1e-12)
    }

    #[test]
    fn orthonormalize_identity_and_repeated_columns() {
        let f = orthonormalize(&identity(3), 1e-9);
        assert_eq!(f.dim(), 3);
        assert!((f.basis().adjoint() * f.basis() - identity(3)).norm() < 1e-14);
        let m = real_mat(3, 2, &[1.0, 1.0, 2.0, 2.0, 0.0, 0.0]);
        assert_eq!(orthonormalize(&m, 1e-9).dim(), 1);
        assert_eq!(orthonormalize(&CMat::zeros(3, 2), 1e-9).dim(), 0);
    }

    #[test]
    fn gap_examples() {
        let e1 = line(0.0);
        let e2 = line(std::f64::consts::FRAC_PI_2);
        assert!(gap_directed(&e1, &e1).unwrap() < 1e-15);
        assert!((gap_directed(&e1, &e2).unwrap() - 1.0).abs() < 1e-15);
        let rotated = line(std::f64::consts::PI / 6.0);
        assert!((gap_directed(&e1, &rotated).unwrap() - 0.5).abs() < 1e-14);
        assert!((gap(&rotated, &e1).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn gap_for_strict_inclusion() {
        let u = Frame::from_orthonormal(col(&unit(3, 0)));
        let v = orthonormalize(&hstack(&[&col(&unit(3, 0)), &col(&unit(3, 1))]), 1e-9);
        assert!(gap_directed(&u, &v).unwrap() < 1e-15);
        assert!((gap(&u, &v).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_subspace_conventions() {
        let z = Frame::zero(2);
        let e1 = line(0.0);
        assert_eq!(gap_directed(&z, &e1).unwrap(), 0.0);
        assert_eq!(gap_directed(&e1, &z).unwrap(), 1.0);
        assert_eq!(gap(&z, &Frame::zero(2)).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert!(gap(&Frame::full(2), &Frame::full(3)).is_err());
    }

    #[test]
    fn projection_bound_for_lines() {
        let e1 = line(0.0);
        let b = projection_bound(&e1, &e1).unwrap();
        assert!((b.sigma_min - 1.0).abs() < 1e-15 && b.isomorphism);
        let b = projection_bound(&e1, &line(std::f64::consts::PI / 3.0)).unwrap();
        assert!((b.sigma_min - 0.5).abs() < 1e-14 && b.isomorphism);
        let b = projection_bound(&e1, &line(std::f64::consts::FRAC_PI_2)).unwrap();
        assert!(!b.injective);
    }

    #[test]
    fn sum_and_intersection() {
        let e1 = line(0.0);
        let e2 = line(std::f64::consts::FRAC_PI_2);
        assert_eq!(subspace_sum(&e1, &e1, 1e-9).unwrap().dim(), 1);
        assert_eq!(subspace_intersection(&e1, &e1, 1e-9).unwrap().dim(), 1);
        assert_eq!(subspace_sum(&e1, &e2, 1e-9).unwrap().dim(), 2);
        assert_eq!(subspace_intersection(&e1, &e2, 1e-9).unwrap().dim(), 0);
        let close = line(0.01);
        assert_eq!(subspace_intersection(&e1, &close, 1e-8).unwrap().dim(), 0);
        assert_eq!(subspace_sum(&e1, &close, 1e-8).unwrap().dim(), 2);
    }

    #[test]
    fn projection_defect_for_lines() {
        let e1 = line(0.0);
        assert!(asymptotic_projection_defect(&e1, &e1).unwrap() < 1e-15);
        let e2 = line(std::f64::consts::FRAC_PI_2);
        assert!((asymptotic_projection_defect(&e1, &e2).unwrap() - 1.0).abs() < 1e-15);
        let theta = 0.3f64;
        // Direct 2x2 computation: P_U P_V restricted to U is cos^2.
        let pu = line(0.0).projector();
        let pv = line(theta).projector();
        let m = &pu * &pv;
        let direct = 1.0 - m[(0, 0)].re;
        let d = asymptotic_projection_defect(&e1, &line(theta)).unwrap();
        assert!((d - direct).abs() < 1e-14);
        assert!((d - theta.sin().powi(2)).abs() < 1e-14);
    }

    #[test]
    fn gram_coordinates_reproduce_gram() {
        let v = real_mat(3, 2, &[1.0, 0.5, 0.0, 1.0, 2.0, 0.0]);
        let g = v.adjoint() * &v;
        let x = gram_coordinates(&g, 1e-12);
        assert!((x.adjoint() * &x - g).norm() < 1e-12);
    }
}
