//! Cross-section data: the boundary operator `D`, Clifford unit `J` and an
//! optional chirality `C`, with spectral decomposition and lagrangian checks.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{anticommutator, c, commutator, hermitian_eigen, hstack, identity, op_norm, CMat, CVec};
use crate::subspaces::{gap, gap_directed, orthonormalize, Frame, DEFAULT_RANK_TOL};

/// Defect threshold for the algebraic identities `J^2 = -I`, `{J, D} = 0`, ...
const ALGEBRA_TOL: f64 = 1e-12;
const LAGRANGIAN_TOL: f64 = 1e-8;
const INVARIANCE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryModel {
    pub d: CMat,
    pub j: CMat,
    pub grading: Option<CMat>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub invariant: String,
    pub defect: f64,
}

impl Violation {
    fn new(invariant: &str, defect: f64) -> Self {
        Violation {
            invariant: invariant.to_string(),
            defect,
        }
    }
}

impl BoundaryModel {
    pub fn new(d: CMat, j: CMat, grading: Option<CMat>) -> Self {
        BoundaryModel { d, j, grading }
    }

    pub fn n(&self) -> usize {
        self.d.nrows()
    }

    /// Every violated invariant with its defect. Empty means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.d.nrows();
        if self.d.ncols() != n || self.j.shape() != (n, n) {
            out.push(Violation::new("D and J must be square of equal size", 1.0));
            return out;
        }
        if n == 0 {
            out.push(Violation::new("n must be positive", 1.0));
            return out;
        }
        if n % 2 == 1 {
            out.push(Violation::new("n must be even", 1.0));
        }
        let scale = 1.0 + self.d.norm();
        let check = |out: &mut Vec<Violation>, name: &str, defect: f64, tol: f64| {
            if !(defect <= tol) {
                out.push(Violation::new(name, defect));
            }
        };
        check(
            &mut out,
            "D† = D",
            op_norm(&(&self.d - self.d.adjoint())),
            ALGEBRA_TOL * scale,
        );
        check(&mut out, "J† = −J", op_norm(&(&self.j + self.j.adjoint())), ALGEBRA_TOL);
        check(
            &mut out,
            "J†J = I",
            op_norm(&(self.j.adjoint() * &self.j - identity(n))),
            ALGEBRA_TOL,
        );
        check(
            &mut out,
            "JD+DJ ≠ 0",
            op_norm(&anticommutator(&self.j, &self.d)),
            ALGEBRA_TOL * scale,
        );
        if n.is_multiple_of(2) {
            // Lagrangians exist only when the +i and -i eigenspaces of J have equal size.
            let signature = (&self.j * c(0.0, -1.0)).trace().re;
            check(&mut out, "J must have balanced ±i eigenspaces", signature.abs(), 1e-6);
        }
        if let Some(cm) = &self.grading {
            if cm.shape() != (n, n) {
                out.push(Violation::new("C must be n×n", 1.0));
                return out;
            }
            check(&mut out, "C† = C", op_norm(&(cm - cm.adjoint())), ALGEBRA_TOL);
            check(&mut out, "C² = I", op_norm(&(cm * cm - identity(n))), ALGEBRA_TOL);
            check(
                &mut out,
                "CD − DC = 0",
                op_norm(&commutator(cm, &self.d)),
                ALGEBRA_TOL * scale,
            );
            check(
                &mut out,
                "CJ + JC = 0",
                op_norm(&anticommutator(cm, &self.j)),
                ALGEBRA_TOL,
            );
        }
        out
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            let msg: Vec<String> = v
                .iter()
                .map(|x| format!("{} (defect {:.3e})", x.invariant, x.defect))
                .collect();
            Err(Error::InvalidInput(msg.join("; ")))
        }
    }

    /// Orthonormal eigenbases `(V+, V-)` of `J` for the eigenvalues `+i` and `-i`.
    pub fn j_eigenbasis(&self) -> (CMat, CMat) {
        let n = self.n();
        // -iJ is Hermitian with eigenvalues -1 (J = -i) and +1 (J = +i).
        let (vals, vecs) = hermitian_eigen(&(&self.j * c(0.0, -1.0)));
        let minus: Vec<usize> = (0..n).filter(|&k| vals[k] < 0.0).collect();
        let plus: Vec<usize> = (0..n).filter(|&k| vals[k] >= 0.0).collect();
        let pick = |idx: &[usize]| CMat::from_fn(n, idx.len(), |i, k| vecs[(i, idx[k])]);
        (pick(&plus), pick(&minus))
    }
}

#[derive(Debug, Clone)]
pub struct Eigenspace {
    pub value: f64,
    pub frame: Frame,
}

impl Eigenspace {
    pub fn projector(&self) -> CMat {
        self.frame.projector()
    }
}

#[derive(Debug, Clone)]
pub struct SpectralData {
    /// Sorted, with multiplicity.
    pub eigenvalues: Vec<f64>,
    /// One entry per distinct eigenvalue, ascending.
    pub eigenspaces: Vec<Eigenspace>,
    /// Smallest positive eigenvalue, `f64::INFINITY` when there is none.
    pub gamma: f64,
    pub kernel: Frame,
    pub positive: Frame,
    pub negative: Frame,
    pub warnings: Vec<String>,
}

impl SpectralData {
    pub fn kernel_projector(&self) -> CMat {
        self.kernel.projector()
    }

    /// Nonzero eigenspaces.
    pub fn modes(&self) -> impl Iterator<Item = &Eigenspace> {
        self.eigenspaces.iter().filter(|e| e.value != 0.0)
    }
}

pub fn default_eig_tol(model: &BoundaryModel) -> f64 {
    (1e-10 * model.d.norm()).max(1e-14)
}

pub fn spectral_decompose(model: &BoundaryModel, eig_tol: f64) -> Result<SpectralData> {
    model.ensure_valid()?;
    let n = model.n();
    let (vals, vecs) = hermitian_eigen(&model.d);
    let mut warnings = Vec::new();

    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for k in 0..n {
        match clusters.last_mut() {
            Some(last) if vals[k] - vals[*last.last().unwrap()] <= eig_tol => last.push(k),
            _ => {
                if k > 0 {
                    let step = vals[k] - vals[k - 1];
                    if step <= 10.0 * eig_tol {
                        warnings.push(format!(
                            "ambiguous clustering at {:.6e}: separate clusters give dims {} and {}, merged gives {}",
                            vals[k],
                            clusters.last().map(|c| c.len()).unwrap_or(0),
                            1,
                            clusters.last().map(|c| c.len()).unwrap_or(0) + 1
                        ));
                    }
                }
                clusters.push(vec![k]);
            }
        }
    }

    let mut eigenspaces = Vec::new();
    for cl in &clusters {
        let mean = cl.iter().map(|&k| vals[k]).sum::<f64>() / cl.len() as f64;
        let value = if mean.abs() <= eig_tol { 0.0 } else { mean };
        let cols = CMat::from_fn(n, cl.len(), |i, k| vecs[(i, cl[k])]);
        let cols = match &model.grading {
            Some(cm) => chirality_adapted(&cols, cm),
            None => cols,
        };
        eigenspaces.push(Eigenspace {
            value,
            frame: Frame::from_orthonormal(cols),
        });
    }

    let collect = |pred: &dyn Fn(f64) -> bool| -> Frame {
        let blocks: Vec<&CMat> = eigenspaces
            .iter()
            .filter(|e| pred(e.value))
            .map(|e| e.frame.basis())
            .collect();
        if blocks.is_empty() {
            Frame::zero(n)
        } else {
            Frame::from_orthonormal(hstack(&blocks))
        }
    };
    let kernel = collect(&|v| v == 0.0);
    let positive = collect(&|v| v > 0.0);
    let negative = collect(&|v| v < 0.0);
    let gamma = eigenspaces
        .iter()
        .map(|e| e.value)
        .filter(|&v| v > 0.0)
        .fold(f64::INFINITY, f64::min);

    Ok(SpectralData {
        eigenvalues: vals,
        eigenspaces,
        gamma,
        kernel,
        positive,
        negative,
        warnings,
    })
}

/// Rotates an orthonormal basis of a C-invariant space so each column is a
/// C-eigenvector (even columns first).
fn chirality_adapted(cols: &CMat, cm: &CMat) -> CMat {
    let g = cols.adjoint() * cm * cols;
    let (vals, vecs) = hermitian_eigen(&g);
    let k = cols.ncols();
    let order: Vec<usize> = (0..k).rev().collect();
    let _ = vals;
    let rot = CMat::from_fn(k, k, |i, j| vecs[(i, order[j])]);
    cols * rot
}

/// `omega(u, v) = <J u, v>`, conjugate-linear in the first slot.
pub fn symplectic_form(model: &BoundaryModel, u: &CVec, v: &CVec) -> Result<crate::linalg::C64> {
    let n = model.n();
    if u.len() != n || v.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "vectors of length {} and {} for n = {n}",
            u.len(),
            v.len()
        )));
    }
    Ok((&model.j * u).dotc(v))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LagrangianCheck {
    pub lagrangian: bool,
    pub defect: f64,
}

/// Checks `L^perp = J L` inside the J-invariant space `within`.
pub fn is_lagrangian(l: &Frame, within: &Frame, j: &CMat) -> Result<LagrangianCheck> {
    let contained = gap_directed(l, within)?;
    if contained >= LAGRANGIAN_TOL {
        return Err(Error::NotContained { defect: contained });
    }
    let p_l = l.projector();
    let complement = orthonormalize(&(within.basis() - &p_l * within.basis()), DEFAULT_RANK_TOL);
    let jl = l.map(j, DEFAULT_RANK_TOL);
    let defect = gap(&complement, &jl)?;
    Ok(LagrangianCheck {
        lagrangian: defect < LAGRANGIAN_TOL && 2 * l.dim() == within.dim(),
        defect,
    })
}

/// Lagrangian defect of `L` inside the full space `C^n`.
pub fn lagrangian_defect_full(l: &Frame, j: &CMat) -> f64 {
    let full = Frame::full(l.ambient_dim());
    match is_lagrangian(l, &full, j) {
        Ok(chk) if 2 * l.dim() == l.ambient_dim() => chk.defect,
        Ok(chk) => chk.defect.max(1.0),
        Err(_) => 1.0,
    }
}

/// Even and odd parts of a C-invariant subspace.
pub fn graded_split(space: &Frame, cm: &CMat, rank_tol: f64) -> Result<(Frame, Frame)> {
    let image = space.map(cm, rank_tol);
    let defect = gap(&image, space)?;
    if defect >= INVARIANCE_TOL {
        return Err(Error::NotInvariant { defect });
    }
    let n = space.ambient_dim();
    let half = c(0.5, 0.0);
    let p_even = (identity(n) + cm) * half;
    let p_odd = (identity(n) - cm) * half;
    let even = orthonormalize(&(p_even * space.basis()), rank_tol);
    let odd = orthonormalize(&(p_odd * space.basis()), rank_tol);
    Ok((even, odd))
}

/// The lagrangian `{ V+ a + V- U a }` attached to a unitary `U`.
pub fn lagrangian_from_unitary(v_plus: &CMat, v_minus: &CMat, u: &CMat) -> Frame {
    let q = (v_plus + v_minus * u) * c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    orthonormalize(&q, DEFAULT_RANK_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{col, real_mat, real_vec, unit, C64, I};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn j2() -> CMat {
        real_mat(2, 2, &[0.0, -1.0, 1.0, 0.0])
    }

    fn random_mat(rng: &mut ChaCha8Rng, n: usize) -> CMat {
        CMat::from_fn(n, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn j4() -> CMat {
        let mut j = CMat::zeros(4, 4);
        j.view_mut((0, 0), (2, 2)).copy_from(&j2());
        j.view_mut((2, 2), (2, 2)).copy_from(&j2());
        j
    }

    fn random_admissible_d(rng: &mut ChaCha8Rng, j: &CMat) -> CMat {
        let x = random_mat(rng, j.nrows());
        let h = (&x + x.adjoint()) * c(0.5, 0.0);
        (&h + j * &h * j) * c(0.5, 0.0)
    }

    #[test]
    fn validate_examples() {
        let ok = BoundaryModel::new(CMat::zeros(2, 2), j2(), None);
        assert!(ok.validate().is_empty());

        let bad = BoundaryModel::new(identity(2), j2(), None);
        let v = bad.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].invariant, "JD+DJ ≠ 0");
        assert!((v[0].defect - 2.0).abs() < 1e-12);

        let odd = BoundaryModel::new(CMat::zeros(3, 3), identity(3), None);
        assert!(odd.validate().iter().any(|v| v.invariant == "n must be even"));

        let not_skew = BoundaryModel::new(CMat::zeros(2, 2), identity(2), None);
        assert!(not_skew.validate().iter().any(|v| v.invariant == "J† = −J"));

        // J = diag(i, i) is skew and unitary but admits no lagrangian.
        let unbalanced = BoundaryModel::new(CMat::zeros(2, 2), identity(2) * I, None);
        assert!(unbalanced
            .validate()
            .iter()
            .any(|v| v.invariant.starts_with("J must have balanced")));
    }

    #[test]
    fn spectral_examples() {
        let zero = BoundaryModel::new(CMat::zeros(2, 2), j2(), None);
        let s = spectral_decompose(&zero, 1e-12).unwrap();
        assert!(s.gamma.is_infinite());
        assert_eq!(s.kernel.dim(), 2);

        let m = BoundaryModel::new(real_mat(2, 2, &[1.5, 0.0, 0.0, -1.5]), j2(), None);
        let s = spectral_decompose(&m, default_eig_tol(&m)).unwrap();
        assert_eq!(s.gamma, 1.5);
        assert_eq!(s.kernel.dim(), 0);
        assert_eq!(s.positive.dim(), 1);
    }

    /// Roots of the characteristic polynomial through an independent route:
    /// Faddeev-LeVerrier coefficients and the eigenvalues of the companion matrix.
    fn char_poly_roots(m: &CMat) -> Vec<f64> {
        let n = m.nrows();
        let mut coeffs = vec![c(1.0, 0.0)];
        let mut mk = CMat::zeros(n, n);
        let mut prev_c = c(1.0, 0.0);
        for k in 1..=n {
            mk = m * (&mk + identity(n) * prev_c);
            let ck = -mk.trace() / c(k as f64, 0.0);
            coeffs.push(ck);
            prev_c = ck;
        }
        let mut comp = CMat::zeros(n, n);
        for i in 1..n {
            comp[(i, i - 1)] = c(1.0, 0.0);
        }
        for i in 0..n {
            comp[(i, n - 1)] = -coeffs[n - i];
        }
        let mut roots: Vec<f64> = crate::linalg::eigenvalues_general(&comp)
            .iter()
            .map(|z: &C64| z.re)
            .collect();
        roots.sort_by(f64::total_cmp);
        roots
    }

    #[test]
    fn random_admissible_spectrum_matches_companion_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let d = random_admissible_d(&mut rng, &j4());
            let m = BoundaryModel::new(d.clone(), j4(), None);
            assert!(m.validate().is_empty(), "{:?}", m.validate());
            let s = spectral_decompose(&m, default_eig_tol(&m)).unwrap();
            let oracle = char_poly_roots(&d);
            for (a, b) in s.eigenvalues.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
            let k = s.eigenvalues.len();
            for i in 0..k {
                assert!((s.eigenvalues[i] + s.eigenvalues[k - 1 - i]).abs() < 1e-10);
            }
            // J maps the mu-eigenspace onto the (-mu)-eigenspace.
            for e in &s.eigenspaces {
                let partner = s
                    .eigenspaces
                    .iter()
                    .find(|f| (f.value + e.value).abs() < 1e-8)
                    .expect("symmetric partner");
                let image = e.frame.map(&m.j, 1e-9);
                assert!(gap(&image, &partner.frame).unwrap() < 1e-9);
            }
        }
    }

    #[test]
    fn symplectic_form_examples() {
        let m = BoundaryModel::new(CMat::zeros(2, 2), j2(), None);
        let e1 = unit(2, 0);
        let e2 = unit(2, 1);
        assert_eq!(symplectic_form(&m, &e1, &e2).unwrap(), c(1.0, 0.0));
        assert_eq!(symplectic_form(&m, &e1, &e1).unwrap(), c(0.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let u = CVec::from_fn(2, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let v = CVec::from_fn(2, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let a = symplectic_form(&m, &u, &v).unwrap();
            let b = symplectic_form(&m, &v, &u).unwrap();
            assert!((b + a.conj()).norm() < 1e-14);
        }
        assert!(symplectic_form(&m, &real_vec(&[1.0]), &e1).is_err());
    }

    #[test]
    fn lagrangian_examples() {
        let full = Frame::full(2);
        let l = orthonormalize(&CMat::from_column_slice(2, 1, &[c(1.0, 0.0), c(0.0, 0.0)]), 1e-9);
        let chk = is_lagrangian(&l, &full, &j2()).unwrap();
        assert!(chk.lagrangian && chk.defect < 1e-15);

        let l = orthonormalize(&CMat::from_column_slice(2, 1, &[c(1.0, 0.0), c(0.0, 1.0)]), 1e-9);
        let chk = is_lagrangian(&l, &full, &j2()).unwrap();
        assert!(!chk.lagrangian);
        assert!((chk.defect - 1.0).abs() < 1e-12);

        let line = orthonormalize(&CMat::from_column_slice(2, 1, &[c(1.0, 0.0), c(0.0, 0.0)]), 1e-9);
        let other = orthonormalize(&CMat::from_column_slice(2, 1, &[c(0.0, 0.0), c(1.0, 0.0)]), 1e-9);
        assert!(matches!(
            is_lagrangian(&line, &other, &j2()),
            Err(Error::NotContained { .. })
        ));
    }

    #[test]
    fn graded_lagrangian_halves() {
        // C = diag(1, -1), G = 1, L+ = H+ = span e1, L- = 0: the complement of
        // L+ in H+ and G* L- are both zero.
        let cm = real_mat(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let h_plus = Frame::from_orthonormal(col(&unit(2, 0)));
        let l_plus = h_plus.clone();
        let l_minus = Frame::zero(2);
        let comp = orthonormalize(&(h_plus.basis() - l_plus.projector() * h_plus.basis()), 1e-9);
        let image = l_minus.map(&j2(), 1e-9);
        assert_eq!(comp.dim(), 0);
        assert_eq!(gap(&comp, &image).unwrap(), 0.0);
        let m = BoundaryModel::new(CMat::zeros(2, 2), j2(), Some(cm));
        assert!(m.validate().is_empty());
    }

    #[test]
    fn graded_split_examples() {
        let cm = real_mat(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let (e, o) = graded_split(&Frame::full(2), &cm, 1e-9).unwrap();
        assert_eq!((e.dim(), o.dim()), (1, 1));
        let (e, o) = graded_split(&Frame::from_orthonormal(col(&unit(2, 0))), &cm, 1e-9).unwrap();
        assert_eq!((e.dim(), o.dim()), (1, 0));
        let diag = orthonormalize(&real_mat(2, 1, &[1.0, 1.0]), 1e-9);
        match graded_split(&diag, &cm, 1e-9) {
            Err(Error::NotInvariant { defect }) => assert!((defect - 1.0).abs() < 1e-12),
            other => panic!("expected NotInvariant, got {other:?}"),
        }
    }

    #[test]
    fn j_eigenbasis_splits_evenly() {
        let m = BoundaryModel::new(CMat::zeros(4, 4), j4(), None);
        let (vp, vm) = m.j_eigenbasis();
        assert_eq!((vp.ncols(), vm.ncols()), (2, 2));
        assert!((&m.j * &vp - &vp * I).norm() < 1e-12);
        assert!((&m.j * &vm + &vm * I).norm() < 1e-12);
    }

    #[test]
    fn unitary_parametrization_gives_lagrangians() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = BoundaryModel::new(CMat::zeros(4, 4), j4(), None);
        let (vp, vm) = m.j_eigenbasis();
        for _ in 0..10 {
            let x = random_mat(&mut rng, 2);
            let u = crate::linalg::qr_thin(&x).0;
            let l = lagrangian_from_unitary(&vp, &vm, &u);
            assert!(lagrangian_defect_full(&l, &m.j) < 1e-12);
        }
    }
}
