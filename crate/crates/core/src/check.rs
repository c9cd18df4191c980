//! Built-in regression suite run by `neckglue check`: closed-form spectra,
//! the Chen product, the exponential splitting root, residual and gap decay,
//! finite-difference agreement, lagrangian traces, appendix inequalities and
//! graded bookkeeping.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analysis::{fit_decay, run_sweep, SweepOptions, SweepReport, ThresholdSchedule};
use crate::eigen::{fd_oracle, find_eigenvalues, EigenOptions};
use crate::ends::{extended_kernel, KernelOptions, Side};
use crate::error::{Error, Result};
use crate::glue::GluedProblem;
use crate::linalg::{c, CMat};
use crate::models::{self, ModelPair};
use crate::necks::{scalar_ode_bounds, CylinderSection};
use crate::par::Exec;
use crate::subspaces::{asymptotic_projection_defect, gap, gap_directed, orthonormalize, projection_bound, Frame};

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub pass: bool,
    pub seconds: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Copy)]
pub struct CheckOptions {
    pub seed: u64,
    pub exec: Exec,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            seed: 20,
            exec: Exec::Parallel,
        }
    }
}

pub const NAMES: [&str; 9] = [
    "rotation spectrum and kernel",
    "Chen sharpness",
    "exponential splitting root",
    "gluing residual decay",
    "exactness gap trend",
    "shooting vs finite differences",
    "lagrangian traces",
    "appendix inequalities",
    "graded suite",
];

type Outcome = Result<(bool, String)>;

pub fn run_criterion(id: u8, opts: &CheckOptions) -> CriterionResult {
    let start = Instant::now();
    let out: Outcome = match id {
        1 => rotation_spectrum(opts),
        2 => chen_sharpness(opts),
        3 => exponential_root(opts),
        4 => glue_residual(opts),
        5 => exactness_trend(opts),
        6 => fd_agreement(opts),
        7 => lagrangian_traces(opts),
        8 => appendix_suites(opts),
        9 => graded_suite(opts),
        _ => Err(Error::InvalidInput(format!("no criterion {id}"))),
    };
    let seconds = start.elapsed().as_secs_f64();
    let (pass, detail) = out.unwrap_or_else(|e| (false, format!("error: {e}")));
    let budget = match id {
        1 => 5.0,
        2 => 10.0,
        3 => 20.0,
        _ => f64::INFINITY,
    };
    let (pass, detail) = if seconds > budget {
        (false, format!("{detail}; took {seconds:.1} s > {budget} s"))
    } else {
        (pass, detail)
    };
    CriterionResult {
        id,
        name: NAMES[id as usize - 1],
        pass,
        seconds,
        detail,
    }
}

pub fn run_all(opts: &CheckOptions) -> Vec<CriterionResult> {
    (1..=9).map(|id| run_criterion(id, opts)).collect()
}

fn sweep(pair: &ModelPair, rs: &[f64], exec: Exec) -> Result<SweepReport> {
    let schedule = ThresholdSchedule::auto(&pair.end1, &pair.end2, rs[0])?;
    let opts = SweepOptions {
        exec,
        eigen: EigenOptions {
            exec,
            ..EigenOptions::default()
        },
        ..SweepOptions::default()
    };
    run_sweep(&pair.end1, &pair.end2, &schedule, rs, &opts)
}

fn range(a: u32, b: u32) -> Vec<f64> {
    (a..=b).map(f64::from).collect()
}

fn row_errors(rep: &SweepReport) -> Option<String> {
    rep.rows
        .iter()
        .find_map(|r| r.error.as_ref().map(|e| format!("r = {}: {e}", r.r)))
}

fn rotation_spectrum(opts: &CheckOptions) -> Outcome {
    let pair = models::rotation(true);
    let mut worst = 0.0f64;
    for r in [2.0, 4.0, 8.0] {
        let p = GluedProblem::assemble(&pair.end1, &pair.end2, r, 0.02)?;
        let l = p.total_length;
        let eopts = EigenOptions {
            window: 3.5 * PI / l,
            exec: opts.exec,
            ..EigenOptions::default()
        };
        let got = find_eigenvalues(&p, &eopts)?.flat();
        let want: Vec<f64> = (-3..=3).map(|k| k as f64 * PI / l).collect();
        if got.len() != want.len() {
            return Ok((false, format!("r = {r}: {} eigenvalues, expected 7", got.len())));
        }
        for (g, w) in got.iter().zip(&want) {
            worst = worst.max((g - w).abs());
        }
    }
    let rep = sweep(&pair, &range(3, 10), opts.exec)?;
    if let Some(e) = row_errors(&rep) {
        return Ok((false, e));
    }
    let dims_ok = rep.rows.iter().all(|r| r.dim_ktilde == 1);
    let max_gap = rep
        .rows
        .iter()
        .map(|r| r.exactness_gap().unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    Ok((
        worst < 1e-8 && dims_ok && max_gap < 1e-8,
        format!("max |lambda - k pi/L| = {worst:.2e}, dim K~ = 1 for r >= 3: {dims_ok}, max gap {max_gap:.2e}"),
    ))
}

fn chen_sharpness(opts: &CheckOptions) -> Outcome {
    let rep = sweep(&models::rotation(false), &range(2, 10), opts.exec)?;
    if let Some(e) = row_errors(&rep) {
        return Ok((false, e));
    }
    let mut worst = 0.0f64;
    for r in &rep.rows {
        let lam = r.lambda_min_abs.unwrap_or(0.0);
        worst = worst.max((lam * r.total_length - PI / 2.0).abs());
    }
    let dims_ok = rep.rows.iter().all(|r| r.dim_ktilde == 0);
    Ok((
        worst < 1e-6 && dims_ok,
        format!("max |lambda_min L - pi/2| = {worst:.2e}, dim K~ = 0: {dims_ok}"),
    ))
}

/// Positive root of `tanh(nu L) = nu / gamma` with `lambda^2 = gamma^2 - nu^2`,
/// written as `lambda^2 = gamma (gamma + nu) 2 / (exp(2 nu L) + 1)` and bisected in `log lambda`.
pub fn splitting_root(length: f64, gamma: f64) -> f64 {
    let f = |lam: f64| {
        let nu = (gamma * gamma - lam * lam).sqrt();
        lam * lam - gamma * (gamma + nu) * 2.0 / ((2.0 * nu * length).exp() + 1.0)
    };
    let (mut lo, mut hi) = ((1e-300f64).ln(), (0.5 * gamma).ln());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid.exp()) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}

fn exponential_root(opts: &CheckOptions) -> Outcome {
    let pair = models::exponential();
    let rep = sweep(&pair, &range(2, 8), opts.exec)?;
    if let Some(e) = row_errors(&rep) {
        return Ok((false, e));
    }
    let mut worst = 0.0f64;
    let mut series = Vec::new();
    for row in &rep.rows {
        let want = splitting_root(row.total_length, 1.0);
        let small: Vec<f64> = row.eigenvalues.iter().copied().filter(|l| l.abs() < 0.5).collect();
        if small.len() != 2 {
            return Ok((false, format!("r = {}: {} near-zero eigenvalues", row.r, small.len())));
        }
        for l in &small {
            worst = worst.max((l.abs() - want).abs() / want);
        }
        series.push((row.total_length, row.lambda_min_abs.unwrap_or(0.0)));
    }
    let fit = fit_decay(&series)?;
    let ledger = rep
        .rows
        .iter()
        .all(|r| r.dim_ktilde == 2 && r.dim_ktilde + r.dim_lsum == r.kappa1 + r.kappa2);
    Ok((
        worst < 1e-9 && (fit.rate - 1.0).abs() < 0.05 && ledger,
        format!(
            "max relative root error {worst:.2e}, decay rate vs L {:.4}, dim K~ = 2 = kappa1 + kappa2 - dim(L1+L2): {ledger}",
            fit.rate
        ),
    ))
}

fn glue_residual(opts: &CheckOptions) -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for pair in [models::exponential(), models::perturbed_rotation()] {
        let rep = sweep(&pair, &range(2, 10), opts.exec)?;
        if let Some(e) = row_errors(&rep) {
            return Ok((false, e));
        }
        let series: Vec<(f64, f64)> = rep
            .rows
            .iter()
            .map(|r| {
                (
                    r.r,
                    r.glue_residual_max.unwrap_or(0.0) / r.glue_injectivity.unwrap_or(1.0),
                )
            })
            .collect();
        let fit = fit_decay(&series)?;
        let need = 0.9 * pair.decay_scale();
        let ok = fit.rate >= need && fit.fit_residual < 0.1;
        pass &= ok;
        notes.push(format!(
            "{}: rate {:.4} (need {need:.2}), log-fit residual {:.2e}",
            pair.name, fit.rate, fit.fit_residual
        ));
    }
    Ok((pass, notes.join("; ")))
}

fn exactness_trend(opts: &CheckOptions) -> Outcome {
    let rep = sweep(&models::perturbed_rotation(), &range(2, 10), opts.exec)?;
    if let Some(e) = row_errors(&rep) {
        return Ok((false, e));
    }
    let gaps: Vec<(f64, f64)> = rep
        .rows
        .iter()
        .map(|r| (r.r, r.exactness_gap().unwrap_or(f64::INFINITY)))
        .collect();
    let tail: Vec<f64> = gaps.iter().filter(|g| g.0 >= 4.0).map(|g| g.1).collect();
    let monotone = tail.windows(2).all(|w| w[1] < w[0]);
    let last = gaps.last().unwrap().1;
    let ledger = rep.verdicts.ledger.is_some_and(|l| l.pass);
    Ok((
        monotone && last < 0.02 && ledger,
        format!("decreasing for r >= 4: {monotone}, gap(10) = {last:.3e}, ledger at r = 10: {ledger}"),
    ))
}

/// Slope of `log |e|` against `log h` by least squares.
fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let series: Vec<(f64, f64)> = points.iter().map(|&(h, e)| (-h.ln(), e)).collect();
    fit_decay(&series).map(|f| f.rate).unwrap_or(f64::NAN)
}

pub const FD_STEPS: [f64; 3] = [0.1, 0.05, 0.025];
pub const FD_WINDOW: f64 = 0.3;

fn fd_agreement(opts: &CheckOptions) -> Outcome {
    let cases = [
        (models::rotation(true), 5.0),
        (models::rotation(false), 5.0),
        (models::exponential(), 2.0),
    ];
    let mut pass = true;
    let mut notes = Vec::new();
    for (pair, r) in cases {
        let p = GluedProblem::assemble(&pair.end1, &pair.end2, r, 0.02)?;
        let eopts = EigenOptions {
            window: FD_WINDOW,
            exec: opts.exec,
            ..EigenOptions::default()
        };
        let shoot = find_eigenvalues(&p, &eopts)?.flat();
        let fds: Vec<Vec<f64>> = FD_STEPS
            .iter()
            .map(|&h| fd_oracle(&p, h, 2.0 * FD_WINDOW).map(|s| s.eigenvalues))
            .collect::<Result<_>>()?;
        let mut finest = 0.0f64;
        let mut slopes = Vec::new();
        for &lam in &shoot {
            let errs: Vec<(f64, f64)> = FD_STEPS
                .iter()
                .zip(&fds)
                .map(|(&h, ev)| {
                    let near = ev
                        .iter()
                        .copied()
                        .min_by(|a, b| (a - lam).abs().total_cmp(&(b - lam).abs()));
                    (h, near.map_or(f64::INFINITY, |x| (x - lam).abs()))
                })
                .collect();
            finest = finest.max(errs[2].1);
            // Errors at rounding level carry no rate.
            if errs[0].1 > 1e-10 {
                slopes.push(loglog_slope(&errs));
            }
        }
        let slopes_ok = !slopes.is_empty() && slopes.iter().all(|s| (s - 2.0).abs() <= 0.3);
        let ok = slopes_ok && finest < 1e-6 && !shoot.is_empty();
        pass &= ok;
        notes.push(format!(
            "{} r = {r}: {} eigenvalues, slopes {:?}, finest error {finest:.2e}",
            pair.name,
            shoot.len(),
            slopes.iter().map(|s| (s * 1000.0).round() / 1000.0).collect::<Vec<_>>()
        ));
    }
    Ok((pass, notes.join("; ")))
}

fn lagrangian_traces(opts: &CheckOptions) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut ends = Vec::new();
    for pair in [models::rotation(true), models::rotation(false), models::exponential()] {
        ends.push(pair.end1);
        ends.push(pair.end2);
    }
    for k in 0..20 {
        let n = if k < 10 { 2 } else { 4 };
        let b = models::random_boundary(&mut rng, n);
        let side = if k % 2 == 0 {
            Side::RightInfinite
        } else {
            Side::LeftInfinite
        };
        ends.push(models::random_end(&mut rng, &b, side));
    }
    let defects: Vec<f64> = crate::par::map(opts.exec, &ends, |e| {
        extended_kernel(e, &KernelOptions::default()).map(|k| k.lagrangian.defect)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let worst = defects.iter().cloned().fold(0.0, f64::max);
    Ok((
        worst < 1e-6,
        format!("{} ends, worst lagrangian defect {worst:.2e}", ends.len()),
    ))
}

/// `u' = mu u + f` with `f = a e^{bt} + s sin(w t + phi)`, solved in closed form.
fn scalar_instance(rng: &mut ChaCha8Rng, mu: f64, len: f64, h: f64) -> (CylinderSection, CylinderSection) {
    let a = rng.random_range(-1.0..1.0);
    let mut b = rng.random_range(-2.0..2.0);
    if (b - mu).abs() < 0.1 {
        b += 0.2;
    }
    let s = rng.random_range(-1.0..1.0);
    let w = rng.random_range(0.5..3.0);
    let phi = rng.random_range(0.0..PI);
    let u0 = rng.random_range(-1.0..1.0);
    let den = w * w + mu * mu;
    let part = |t: f64| a * (b * t).exp() / (b - mu) - s * (mu * (w * t + phi).sin() + w * (w * t + phi).cos()) / den;
    let nodes = (len / h).round() as usize + 1;
    let mut uu = Vec::with_capacity(nodes);
    let mut ff = Vec::with_capacity(nodes);
    for k in 0..nodes {
        let t = k as f64 * h;
        uu.push(c((mu * t).exp() * (u0 - part(0.0)) + part(t), 0.0));
        ff.push(c(a * (b * t).exp() + s * (w * t + phi).sin(), 0.0));
    }
    (
        CylinderSection::from_scalar(0.0, h, &uu).expect("grid"),
        CylinderSection::from_scalar(0.0, h, &ff).expect("grid"),
    )
}

fn random_unitary(rng: &mut ChaCha8Rng, n: usize) -> CMat {
    let x = CMat::from_fn(n, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    crate::linalg::qr_gs(&x).0
}

fn appendix_suites(opts: &CheckOptions) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(1));
    let mut worst_margin = f64::INFINITY;
    for k in 0..1000 {
        let mu = match k % 3 {
            0 => 0.0,
            1 => rng.random_range(0.2..2.0),
            _ => -rng.random_range(0.2..2.0),
        };
        let n = rng.random_range(1..=3usize);
        let t = 0.5 * rng.random_range(0..=2usize) as f64;
        let (u, f) = scalar_instance(&mut rng, mu, t + n as f64 + 1.0, 0.01);
        let b = scalar_ode_bounds(mu, &u, &f, t, n)?;
        let margin = (b.bound.rhs - b.bound.lhs) / b.bound.rhs.abs().max(1e-300);
        worst_margin = worst_margin.min(margin);
    }

    let mut worst_asym = f64::INFINITY;
    for _ in 0..200 {
        let n = 4;
        let q = random_unitary(&mut rng, n);
        let u = Frame::from_orthonormal(q.columns(0, 2).into_owned());
        let tilt = rng.random_range(0.0..1.2);
        let pert = CMat::from_fn(n, 2, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let v = orthonormalize(&(u.basis() + pert * c(tilt, 0.0)), 1e-12);
        let d = gap_directed(&u, &v)?;
        if d >= 1.0 - 1e-9 {
            continue;
        }
        let a = (1.0 - d * d).sqrt();
        worst_asym = worst_asym.min(projection_bound(&u, &v)?.sigma_min - a);
    }

    let mut worst_wae = 0.0f64;
    let mut decreasing = true;
    let mut prev = f64::INFINITY;
    let q = random_unitary(&mut rng, 6);
    let u = Frame::from_orthonormal(q.columns(0, 2).into_owned());
    for r in 1..=50 {
        let th = 1.0 / r as f64;
        let v = q.columns(0, 2) * c(th.cos(), 0.0) + q.columns(2, 2) * c(th.sin(), 0.0);
        let v = Frame::from_orthonormal(v);
        let defect = asymptotic_projection_defect(&u, &v)? + asymptotic_projection_defect(&v, &u)?;
        worst_wae = worst_wae.max((defect - 2.0 * th.sin().powi(2)).abs());
        worst_wae = worst_wae.max((gap(&u, &v)? - th.sin()).abs());
        decreasing &= defect < prev;
        prev = defect;
    }
    let pass = worst_margin >= -1e-6 && worst_asym >= -1e-10 && worst_wae < 1e-10 && decreasing && prev < 1e-3;
    Ok((
        pass,
        format!(
            "ODE bounds worst relative margin {worst_margin:.2e}; sigma_min - a >= {worst_asym:.2e}; \
             projection defect error {worst_wae:.2e}, decreasing to {prev:.2e}"
        ),
    ))
}

fn graded_suite(opts: &CheckOptions) -> Outcome {
    let rs = [2.0, 4.0, 6.0, 8.0];
    let exp = sweep(&models::graded_exponential(), &rs, opts.exec)?;
    let rot = sweep(&models::graded_rotation(), &rs, opts.exec)?;
    for rep in [&exp, &rot] {
        if let Some(e) = row_errors(rep) {
            return Ok((false, e));
        }
    }
    let mut pass = true;
    let mut worst_inv = 0.0f64;
    let mut worst_pair = 0.0f64;
    let mut worst_anti = 0.0f64;
    for (rep, want) in [(&exp, (1, 1)), (&rot, (1, 0))] {
        for row in &rep.rows {
            let g = row.graded.as_ref().expect("graded model");
            pass &= (g.ktilde.even, g.ktilde.odd) == want;
            pass &= g.even_balanced && g.odd_balanced;
            worst_inv = worst_inv.max(g.invariance_defect);
            worst_pair = worst_pair.max(g.pairing_gap);
            worst_anti = worst_anti.max(g.anticommutation_defect);
        }
    }
    let g = exp.rows[0].graded.as_ref().unwrap();
    let parities = (g.kernel1.odd, g.kernel1.even, g.kernel2.even, g.kernel2.odd) == (1, 0, 1, 0);
    let r = rot.rows[0].graded.as_ref().unwrap();
    let even_kinf = (r.k_inf.even, r.k_inf.odd) == (1, 0);
    pass &= parities && even_kinf && worst_inv < 1e-6 && worst_pair < 1e-6 && worst_anti < 1e-12;
    Ok((
        pass,
        format!(
            "K1 odd / K2 even: {parities}; rotation K_inf purely even: {even_kinf}; invariance defect {worst_inv:.2e}; \
             pairing gap {worst_pair:.2e}; anti-commutation defect {worst_anti:.2e}"
        ),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitting_root_satisfies_its_equation() {
        for l in [7.0, 11.0, 19.0] {
            let lam: f64 = splitting_root(l, 1.0);
            let nu = (1.0 - lam * lam).sqrt();
            assert!(((nu * l).tanh() - nu).abs() < 1e-14);
            assert!((lam / (2.0 * (-l).exp()) - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn appendix_suite_passes() {
        let r = run_criterion(8, &CheckOptions::default());
        assert!(r.pass, "{}", r.detail);
    }
}
