use neckglue::analysis::{end_pair, run_sweep, SweepOptions, ThresholdSchedule};
use neckglue::eigen::{ktilde, EigenOptions};
use neckglue::ends::{ex_norm, ExtendedSection};
use neckglue::glue::{default_split_window, glue_map, k_inf_pairs, split_map, GluedProblem};
use neckglue::linalg::{c, CVec, ONE};
use neckglue::models;
use neckglue::par::Exec;
use proptest::prelude::*;

/// Exactness gap of the exponential model: both split sections freeze a
/// decaying mode `e^{-r}` over a window of length `W`; the part of that tail
/// outside `K1 ⊕ K2` has norm `e^{-r} sqrt(2 (W - 2(1 - e^{-W}) + (1 - e^{-2W}) / 2))`.
fn exponential_gap(r: f64, w: f64) -> f64 {
    let inner = w - 2.0 * (1.0 - (-w).exp()) + (1.0 - (-2.0 * w).exp()) / 2.0;
    (-r).exp() * (2.0 * inner).sqrt()
}

#[test]
fn exponential_exactness_gap_matches_closed_form() {
    let pair = models::exponential();
    let rs = [4.0, 6.0, 8.0, 10.0];
    let schedule = ThresholdSchedule::auto(&pair.end1, &pair.end2, rs[0]).unwrap();
    let rep = run_sweep(&pair.end1, &pair.end2, &schedule, &rs, &SweepOptions::default()).unwrap();
    let w = default_split_window(1.0);
    for row in &rep.rows {
        let got = row.exactness_gap().unwrap();
        let want = exponential_gap(row.r, w);
        assert!((got / want - 1.0).abs() < 0.02, "r = {}: {got} vs {want}", row.r);
    }
}

#[test]
fn rotation_split_is_exact() {
    let pair = models::rotation(true);
    let schedule = ThresholdSchedule::auto(&pair.end1, &pair.end2, 3.0).unwrap();
    let rep = run_sweep(&pair.end1, &pair.end2, &schedule, &[3.0, 5.0], &SweepOptions::default()).unwrap();
    for row in &rep.rows {
        let e = row.exactness.unwrap();
        assert!(e.gap < 1e-10 && e.split_to_kinf < 1e-10 && e.kinf_to_split < 1e-10);
        assert_eq!((e.dim_split, e.dim_kinf), (1, 1));
        assert!(e.projection_defect.unwrap() < 1e-10);
    }
}

fn diff_norm(a: &ExtendedSection, b: &ExtendedSection, grid: &neckglue::ends::EndGrid) -> f64 {
    ex_norm(&ExtendedSection::combine(&[a, b], &[ONE, -ONE]), grid)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn split_map_is_linear(a_re in -2.0..2.0f64, a_im in -2.0..2.0f64, b_re in -2.0..2.0f64, b_im in -2.0..2.0f64) {
        let pair = models::exponential();
        let p = GluedProblem::assemble(&pair.end1, &pair.end2, 4.0, 0.02).unwrap();
        let kt = ktilde(&p, 0.1, &EigenOptions { window: 0.5, ..EigenOptions::default() }).unwrap();
        let v = kt.vectors();
        prop_assert_eq!(v.len(), 2);
        let (a, b) = (c(a_re, a_im), c(b_re, b_im));
        let mix: Vec<CVec> = v[0].iter().zip(v[1]).map(|(x, y)| x * a + y * b).collect();
        let w = default_split_window(1.0);
        let s0 = split_map(&p, v[0], w).unwrap();
        let s1 = split_map(&p, v[1], w).unwrap();
        let sm = split_map(&p, &mix, w).unwrap();
        let lin1 = ExtendedSection::combine(&[&s0.side1, &s1.side1], &[a, b]);
        let lin2 = ExtendedSection::combine(&[&s0.side2, &s1.side2], &[a, b]);
        let scale = 1.0 + a.norm() + b.norm();
        prop_assert!(diff_norm(&sm.side1, &lin1, &p.grid1) < 1e-12 * scale);
        prop_assert!(diff_norm(&sm.side2, &lin2, &p.grid2) < 1e-12 * scale);
    }

    #[test]
    fn schedule_dominates_past_r_min(c0 in 0.01..1.0f64, delta in 0.05..3.0f64) {
        let s = ThresholdSchedule::new(c0, Some(delta)).unwrap();
        prop_assert!(s.r_min >= 1.0 && (4.0 * s.r_min).fract() == 0.0);
        for k in 0..200 {
            let r = s.r_min + 0.25 * k as f64;
            prop_assert!(s.threshold(r) >= (-delta * r).exp(), "r = {}", r);
        }
        // r^2 c(r) is constant, so c = o(1/r).
        prop_assert!((s.threshold(40.0) * 1600.0 - c0).abs() < 1e-12 * c0);
    }
}

/// `S_r Psi_r` returns the kernel pair up to the frozen tail, which decays like `e^{-r}`.
#[test]
fn split_after_glue_is_asymptotically_identity() {
    let pair = models::exponential();
    let ends = end_pair(&pair.end1, &pair.end2, &SweepOptions::default()).unwrap();
    let pairs = k_inf_pairs(&ends.k1, &ends.k2, &ends.diff.k_inf);
    assert_eq!(pairs.len(), 2);
    let mut errs = Vec::new();
    for r in [3.0, 5.0, 7.0] {
        let p = GluedProblem::assemble(&pair.end1, &pair.end2, r, 0.02).unwrap();
        let mut worst = 0.0f64;
        for (u1, u2) in &pairs {
            let img = glue_map(&p, &ends.k1, &ends.k2, u1, u2).unwrap();
            let s = split_map(&p, &img.values, default_split_window(1.0)).unwrap();
            let d1 = ex_norm(&s.side1.subtract(&[u1], &[ONE], &ends.k1.grid), &ends.k1.grid);
            let d2 = ex_norm(&s.side2.subtract(&[u2], &[ONE], &ends.k2.grid), &ends.k2.grid);
            worst = worst.max(d1.hypot(d2));
        }
        errs.push(worst);
    }
    assert!(errs[2] < 1e-2, "{errs:?}");
    for w in errs.windows(2) {
        // Rate at least 0.9 over two units of r.
        assert!(w[1] < w[0] * (-1.8f64).exp(), "{errs:?}");
    }
}

#[test]
fn sequential_and_parallel_sweeps_agree_bitwise() {
    let pair = models::perturbed_rotation();
    let rs = [2.0, 3.0, 4.0];
    let schedule = ThresholdSchedule::auto(&pair.end1, &pair.end2, rs[0]).unwrap();
    let run = |exec| {
        let opts = SweepOptions {
            exec,
            eigen: EigenOptions {
                exec,
                ..EigenOptions::default()
            },
            ..SweepOptions::default()
        };
        run_sweep(&pair.end1, &pair.end2, &schedule, &rs, &opts).unwrap()
    };
    let (a, b) = (run(Exec::Sequential), run(Exec::Parallel));
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert_eq!(x.eigenvalues, y.eigenvalues);
        assert_eq!(x.exactness_gap(), y.exactness_gap());
        assert_eq!(x.glue_residual_max, y.glue_residual_max);
    }
}

#[test]
fn mismatched_lagrangians_leave_no_small_eigenvalues() {
    let pair = models::exponential_mismatched();
    let rs = [2.0, 4.0, 6.0];
    let schedule = ThresholdSchedule::auto(&pair.end1, &pair.end2, rs[0]).unwrap();
    let rep = run_sweep(&pair.end1, &pair.end2, &schedule, &rs, &SweepOptions::default()).unwrap();
    assert_eq!(rep.dim_k_inf, 0);
    for row in &rep.rows {
        assert!(row.error.is_none());
        assert_eq!(row.dim_ktilde, 0);
        assert_eq!(row.dim_ktilde + row.dim_lsum, row.kappa1 + row.kappa2);
    }
    assert!(rep.verdicts.ledger.unwrap().pass);
}

#[test]
fn perturbed_rotation_stabilizes_to_k_inf() {
    let pair = models::perturbed_rotation();
    let rs: Vec<f64> = (2..=8).map(f64::from).collect();
    let schedule = ThresholdSchedule::auto(&pair.end1, &pair.end2, rs[0]).unwrap();
    let rep = run_sweep(&pair.end1, &pair.end2, &schedule, &rs, &SweepOptions::default()).unwrap();
    assert!(rep.verdicts.ktilde_matches_kinf);
    assert!(rep.verdicts.stabilization_r0.is_some());
    let fit = rep.fits.glue_residual.unwrap();
    assert!(fit.rate > 0.9, "{fit:?}");
}
