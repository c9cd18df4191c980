use neckglue::boundary::{default_eig_tol, is_lagrangian, lagrangian_from_unitary, spectral_decompose};
use neckglue::linalg::{c, CMat};
use neckglue::models;
use neckglue::necks::{scalar_ode_bounds, CylinderSection};
use neckglue::subspaces::{
    asymptotic_projection_defect, gap, gap_directed, orthonormality_defect, orthonormalize, projection_bound,
    subspace_intersection, subspace_sum, Frame,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cmat(n: usize, k: usize) -> impl Strategy<Value = CMat> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), n * k)
        .prop_map(move |v| CMat::from_fn(n, k, |i, j| c(v[i * k + j].0, v[i * k + j].1)))
}

fn frame(n: usize, k: usize) -> impl Strategy<Value = Frame> {
    cmat(n, k).prop_map(|m| orthonormalize(&m, 1e-10))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn orthonormalize_is_orthonormal_and_spans(m in cmat(5, 3)) {
        let f = orthonormalize(&m, 1e-10);
        prop_assert!(orthonormality_defect(f.basis()) < 1e-12);
        // Every column of m lies in the frame.
        let resid = &m - f.projector() * &m;
        prop_assert!(resid.norm() < 1e-12 * (1.0 + m.norm()));
    }

    #[test]
    fn gap_is_symmetric_and_bounded(u in frame(5, 2), v in frame(5, 2), w in frame(5, 3)) {
        let d = gap(&u, &v).unwrap();
        prop_assert!((d - gap(&v, &u).unwrap()).abs() < 1e-14);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&d));
        prop_assert!(gap(&u, &u).unwrap() < 1e-7);
        let dw = gap_directed(&u, &w).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&dw));
        // Different dimensions are at gap one.
        prop_assert!(gap(&u, &w).unwrap() > 1.0 - 1e-12);
    }

    #[test]
    fn directed_gap_vanishes_on_subspaces(u in frame(6, 2), v in frame(6, 2)) {
        let s = subspace_sum(&u, &v, 1e-10).unwrap();
        prop_assert!(gap_directed(&u, &s).unwrap() < 1e-7);
        prop_assert!(gap_directed(&v, &s).unwrap() < 1e-7);
        let i = subspace_intersection(&u, &s, 1e-8).unwrap();
        prop_assert_eq!(i.dim(), 2);
    }

    /// `sigma_min(P_V|_U) >= sqrt(1 - dhat(U, V)^2)` whenever `dhat < 1`.
    #[test]
    fn projection_bound_from_gap(u in frame(5, 2), v in frame(5, 3)) {
        let d = gap_directed(&u, &v).unwrap();
        let b = projection_bound(&u, &v).unwrap();
        if d < 1.0 - 1e-9 {
            prop_assert!(b.sigma_min >= (1.0 - d * d).sqrt() - 1e-10);
            prop_assert!(b.injective);
        }
    }

    #[test]
    fn projection_defect_is_squared_directed_gap(u in frame(5, 2), v in frame(5, 2)) {
        let d = gap_directed(&u, &v).unwrap();
        let p = asymptotic_projection_defect(&u, &v).unwrap();
        prop_assert!((p - d * d).abs() < 1e-10);
    }

    #[test]
    fn unitaries_give_lagrangians(seed in 0u64..10_000, half in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = models::random_boundary(&mut rng, 2 * half);
        let (vp, vm) = b.j_eigenbasis();
        let x = CMat::from_fn(half, half, |i, j| c((seed as f64 + (i * 7 + j) as f64).sin(), (i as f64 - j as f64).cos()));
        let q = orthonormalize(&x, 1e-12);
        prop_assume!(q.dim() == half);
        let l = lagrangian_from_unitary(&vp, &vm, q.basis());
        let chk = is_lagrangian(&l, &Frame::full(2 * half), &b.j).unwrap();
        prop_assert!(chk.lagrangian, "defect {}", chk.defect);
        let spec = spectral_decompose(&b, default_eig_tol(&b)).unwrap();
        prop_assert!(spec.gamma >= 0.3 - 1e-9);
    }

    /// Decay bounds on `u' = mu u + a e^{-b t}` sampled exactly.
    #[test]
    fn scalar_decay_bounds_hold(
        mu in prop_oneof![Just(0.0), 0.2..2.0f64, -2.0..-0.2f64],
        a in -2.0..2.0f64,
        b in 0.1..2.5f64,
        u0 in -1.0..1.0f64,
        n in 1usize..4,
        t in prop_oneof![Just(0.0), Just(0.5), Just(1.0)],
    ) {
        prop_assume!((mu + b).abs() > 0.05);
        let k = a / (-b - mu);
        let u = |s: f64| (mu * s).exp() * (u0 - k) + k * (-b * s).exp();
        let h = 0.01;
        let len = t + n as f64 + 1.0;
        let nodes = (len / h).round() as usize + 1;
        let us: Vec<_> = (0..nodes).map(|j| c(u(j as f64 * h), 0.0)).collect();
        let fs: Vec<_> = (0..nodes).map(|j| c(a * (-b * j as f64 * h).exp(), 0.0)).collect();
        let u = CylinderSection::from_scalar(0.0, h, &us).unwrap();
        let f = CylinderSection::from_scalar(0.0, h, &fs).unwrap();
        let bound = scalar_ode_bounds(mu, &u, &f, t, n).unwrap().bound;
        prop_assert!(bound.lhs <= bound.rhs * (1.0 + 1e-6) + 1e-12, "{:?}", bound);
    }
}
