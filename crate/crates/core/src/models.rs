//! Built-in regression models and random admissible ends.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::boundary::{lagrangian_from_unitary, BoundaryModel};
use crate::ends::{CapPotential, EndModel, Side};
use crate::linalg::{c, hermitian_eigen, identity, qr_gs, real_mat, CMat};
use crate::necks::NeckPerturbation;
use crate::subspaces::{orthonormalize, Frame};

/// A pair of ends to be glued, with a short name.
#[derive(Debug, Clone)]
pub struct ModelPair {
    pub name: String,
    pub end1: EndModel,
    pub end2: EndModel,
}

impl ModelPair {
    /// `min(gamma, lambda_decay)` over both ends.
    pub fn decay_scale(&self) -> f64 {
        let g = crate::boundary::spectral_decompose(
            &self.end1.boundary,
            crate::boundary::default_eig_tol(&self.end1.boundary),
        )
        .map(|s| s.gamma)
        .unwrap_or(f64::INFINITY);
        g.min(self.end1.neck.lambda()).min(self.end2.neck.lambda())
    }
}

/// Standard `J = [[0, -I], [I, 0]]` on `C^n`.
pub fn standard_j(n: usize) -> CMat {
    let m = n / 2;
    let mut j = CMat::zeros(n, n);
    for i in 0..m {
        j[(i, m + i)] = c(-1.0, 0.0);
        j[(m + i, i)] = c(1.0, 0.0);
    }
    j
}

fn line(v: &[f64]) -> Frame {
    orthonormalize(&real_mat(2, 1, v), 1e-12)
}

fn chirality() -> CMat {
    real_mat(2, 2, &[1.0, 0.0, 0.0, -1.0])
}

fn plain_end(side: Side, boundary: &BoundaryModel, lagrangian: Frame) -> EndModel {
    EndModel {
        side,
        cap_length: 0.0,
        cap_potential: CapPotential::Zero,
        lagrangian,
        neck: NeckPerturbation::none(boundary.n()),
        boundary: boundary.clone(),
    }
}

fn pair(name: &str, boundary: BoundaryModel, l1: Frame, l2: Frame) -> ModelPair {
    ModelPair {
        name: name.into(),
        end1: plain_end(Side::RightInfinite, &boundary, l1),
        end2: plain_end(Side::LeftInfinite, &boundary, l2),
    }
}

/// `n = 2`, `D = 0`, no potential. `L_tot = 2r + 3`.
pub fn rotation(aligned: bool) -> ModelPair {
    let b = BoundaryModel::new(CMat::zeros(2, 2), standard_j(2), None);
    let l2 = if aligned { line(&[1.0, 0.0]) } else { line(&[0.0, 1.0]) };
    let name = if aligned { "rotation" } else { "rotation_perp" };
    pair(name, b, line(&[1.0, 0.0]), l2)
}

/// `D = diag(1, -1)`; each end carries one decaying kernel mode.
pub fn exponential() -> ModelPair {
    let b = BoundaryModel::new(chirality(), standard_j(2), None);
    pair("exponential", b, line(&[0.0, 1.0]), line(&[1.0, 0.0]))
}

/// `D = diag(1, -1)` with both lagrangians along `e1 + e2`: no small eigenvalues.
pub fn exponential_mismatched() -> ModelPair {
    let b = BoundaryModel::new(chirality(), standard_j(2), None);
    pair("exponential_mismatched", b, line(&[1.0, 1.0]), line(&[1.0, 1.0]))
}

/// Rotation model with `A(t) = 0.5 exp(-|t|) diag(1, -1)` and a constant cap potential.
pub fn perturbed_rotation() -> ModelPair {
    let j = standard_j(2);
    let b = BoundaryModel::new(CMat::zeros(2, 2), j.clone(), None);
    let a0 = chirality();
    let neck = NeckPerturbation::new(a0.clone(), 1.0, 0.5, &j).expect("A0 anti-commutes with J");
    let cap = -(&j * &a0) * c(0.3, 0.0);
    let mk = |side| EndModel {
        side,
        cap_length: 1.0,
        cap_potential: CapPotential::Constant(cap.clone()),
        lagrangian: line(&[1.0, 0.0]),
        neck: neck.clone(),
        boundary: b.clone(),
    };
    ModelPair {
        name: "perturbed_rotation".into(),
        end1: mk(Side::RightInfinite),
        end2: mk(Side::LeftInfinite),
    }
}

/// Exponential model with `C = diag(1, -1)`: `K1` odd, `K2` even.
pub fn graded_exponential() -> ModelPair {
    let b = BoundaryModel::new(chirality(), standard_j(2), Some(chirality()));
    pair("graded_exponential", b, line(&[0.0, 1.0]), line(&[1.0, 0.0]))
}

/// Aligned rotation model with `C = diag(1, -1)`; the lagrangian `span(e1)` is even.
pub fn graded_rotation() -> ModelPair {
    let b = BoundaryModel::new(CMat::zeros(2, 2), standard_j(2), Some(chirality()));
    pair("graded_rotation", b, line(&[1.0, 0.0]), line(&[1.0, 0.0]))
}

pub fn builtin(name: &str) -> Option<ModelPair> {
    Some(match name {
        "rotation" => rotation(true),
        "rotation_perp" => rotation(false),
        "exponential" => exponential(),
        "exponential_mismatched" => exponential_mismatched(),
        "perturbed_rotation" => perturbed_rotation(),
        "graded_exponential" => graded_exponential(),
        "graded_rotation" => graded_rotation(),
        _ => return None,
    })
}

pub const BUILTIN_NAMES: [&str; 7] = [
    "rotation",
    "rotation_perp",
    "exponential",
    "exponential_mismatched",
    "perturbed_rotation",
    "graded_exponential",
    "graded_rotation",
];

fn random_hermitian(rng: &mut ChaCha8Rng, m: usize) -> CMat {
    let x = CMat::from_fn(m, m, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    (&x + x.adjoint()) * c(0.5, 0.0)
}

/// Hermitian `[[P, Q], [Q, -P]]`, which anti-commutes with the standard `J`.
fn random_odd(rng: &mut ChaCha8Rng, n: usize) -> CMat {
    let m = n / 2;
    let p = random_hermitian(rng, m);
    let q = random_hermitian(rng, m);
    let mut out = CMat::zeros(n, n);
    out.view_mut((0, 0), (m, m)).copy_from(&p);
    out.view_mut((0, m), (m, m)).copy_from(&q);
    out.view_mut((m, 0), (m, m)).copy_from(&q);
    out.view_mut((m, m), (m, m)).copy_from(&(-&p));
    out
}

fn random_unitary(rng: &mut ChaCha8Rng, m: usize) -> CMat {
    let x = CMat::from_fn(m, m, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    qr_gs(&(x + identity(m) * c(0.1, 0.0))).0
}

/// Boundary model with a random `D` whose gap is at least `0.3`. About half
/// the draws have a nontrivial `ker D`: `D = 0` for `n = 2`, rank-one blocks
/// for larger `n`.
pub fn random_boundary(rng: &mut ChaCha8Rng, n: usize) -> BoundaryModel {
    let j = standard_j(n);
    if n == 2 && rng.random_bool(0.5) {
        return BoundaryModel::new(CMat::zeros(2, 2), j, None);
    }
    loop {
        let d = if n >= 4 && rng.random_bool(0.5) {
            // Rank-one blocks leave ker D of dimension n - 2.
            let v = CMat::from_fn(n / 2, 1, |_, _| {
                c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            let vv = &v * v.adjoint();
            let (p, q) = (rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
            let m = n / 2;
            let mut out = CMat::zeros(n, n);
            out.view_mut((0, 0), (m, m)).copy_from(&(&vv * c(p, 0.0)));
            out.view_mut((0, m), (m, m)).copy_from(&(&vv * c(q, 0.0)));
            out.view_mut((m, 0), (m, m)).copy_from(&(&vv * c(q, 0.0)));
            out.view_mut((m, m), (m, m)).copy_from(&(&vv * c(-p, 0.0)));
            out
        } else {
            random_odd(rng, n)
        };
        let (vals, _) = hermitian_eigen(&d);
        let has_small = vals.iter().any(|v| v.abs() > 1e-9 && v.abs() < 0.3);
        if !has_small && vals.iter().all(|v| v.abs() < 4.0) {
            return BoundaryModel::new(d, j, None);
        }
    }
}

/// Random admissible end over `boundary`: random lagrangian, cap potential,
/// cap length in `[0, 2]` (multiple of 1/4) and decaying neck perturbation.
pub fn random_end(rng: &mut ChaCha8Rng, boundary: &BoundaryModel, side: Side) -> EndModel {
    let n = boundary.n();
    let (vp, vm) = boundary.j_eigenbasis();
    let lagrangian = lagrangian_from_unitary(&vp, &vm, &random_unitary(rng, n / 2));
    let cap_length = rng.random_range(0..=8) as f64 / 4.0;
    let cap_potential = if cap_length == 0.0 {
        CapPotential::Zero
    } else {
        CapPotential::Constant(random_hermitian(rng, n) * c(0.5, 0.0))
    };
    let b0 = random_odd(rng, n);
    let a0 = &boundary.j * &b0;
    let neck = NeckPerturbation::new(a0, rng.random_range(0.8..2.0), rng.random_range(0.0..0.5), &boundary.j)
        .expect("J B0 anti-commutes with J");
    EndModel {
        side,
        cap_length,
        cap_potential,
        lagrangian,
        neck,
        boundary: boundary.clone(),
    }
}
