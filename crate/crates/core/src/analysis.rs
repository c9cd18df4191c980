//! r-sweeps over a pair of ends: threshold schedule, dimension ledger,
//! exactness gaps between split eigenvectors and `K_inf`, decay fits, the
//! Chen-type lower bound and graded bookkeeping.

use serde::Serialize;

use crate::boundary::graded_split;
use crate::eigen::{ktilde, EigenOptions, KTilde};
use crate::ends::kernel::ex_gram;
use crate::ends::{
    difference_kernel, ex_inner, extended_kernel, DifferenceKernel, EndKernel, EndModel, ExtendedSection, KernelOptions,
};
use crate::error::{Error, Result};
use crate::glue::{default_split_window, glue_basis, split_map, GluedProblem, SplitPair};
use crate::linalg::{c, hermitian_eigen, op_norm, CMat, CVec, C64};
use crate::par::{self, Exec};
use crate::subspaces::{
    asymptotic_projection_defect, gap, gap_directed, gram_coordinates, orthonormalize, Frame, DEFAULT_RANK_TOL,
};

/// `c(r) = c0 min(1, r^-2)` and the rate `delta` it must dominate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdSchedule {
    pub c0: f64,
    /// `None` when `min(gamma, lambda_decay)` is infinite.
    pub delta: Option<f64>,
    /// `c(r) >= exp(-delta r)` for every `r >= r_min`.
    pub r_min: f64,
}

/// Total glued length for caps `t1`, `t2`.
pub fn total_length(r: f64, t1: f64, t2: f64) -> f64 {
    t1 + t2 + 2.0 * r + 3.0
}

impl ThresholdSchedule {
    pub fn new(c0: f64, delta: Option<f64>) -> Result<Self> {
        if !(c0 > 0.0) || !c0.is_finite() {
            return Err(Error::InvalidInput(format!("c0 must be positive, got {c0}")));
        }
        if let Some(d) = delta {
            if !(d > 0.0) {
                return Err(Error::InvalidInput(format!("delta must be positive, got {d}")));
            }
        }
        let mut s = ThresholdSchedule { c0, delta, r_min: 1.0 };
        s.r_min = s.domination_start();
        Ok(s)
    }

    /// Defaults from the end data. `r_first` is the first r of the sweep; the
    /// bulk eigenvalue there is estimated by `pi / (2 L_tot)`.
    pub fn auto(end1: &EndModel, end2: &EndModel, r_first: f64) -> Result<Self> {
        let spectral =
            crate::boundary::spectral_decompose(&end1.boundary, crate::boundary::default_eig_tol(&end1.boundary))?;
        let gamma = spectral.gamma;
        let l = total_length(r_first, end1.cap_length, end2.cap_length);
        let bulk = r_first.max(1.0).powi(2) * std::f64::consts::PI / (2.0 * l);
        let c0 = 1f64.min(gamma / 4.0).min(bulk / 4.0);
        let rate = gamma.min(end1.neck.lambda()).min(end2.neck.lambda());
        let delta = rate.is_finite().then_some(0.9 * rate);
        Self::new(c0, delta)
    }

    pub fn threshold(&self, r: f64) -> f64 {
        self.c0 * (1.0f64).min(r.powi(-2))
    }

    /// Smallest quarter-integer `r >= 1` past which `c(r) >= exp(-delta r)` holds.
    fn domination_start(&self) -> f64 {
        let Some(d) = self.delta else { return 1.0 };
        let holds = |r: f64| self.threshold(r).ln() >= -d * r;
        // log c(r) + delta r is increasing once r > 2 / delta.
        let tail = (2.0 / d).max(1.0);
        let mut last_fail = None;
        let mut r = 1.0;
        while r <= tail + 0.25 {
            if !holds(r) {
                last_fail = Some(r);
            }
            r += 0.25;
        }
        let mut r_min = last_fail.map_or(1.0, |f| f + 0.25);
        while !holds(r_min) {
            r_min += 0.25;
        }
        r_min
    }

    /// `c(r) = o(1/r)` holds by construction; checks `c(r) >= e^{-delta r}` on `rs`.
    pub fn dominates_on(&self, rs: &[f64]) -> bool {
        match self.delta {
            None => true,
            Some(d) => rs
                .iter()
                .filter(|&&r| r >= self.r_min)
                .all(|&r| self.threshold(r) >= (-d * r).exp()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepOptions {
    pub ode_step: f64,
    pub kernel_rank_tol: f64,
    pub t_cut: Option<f64>,
    /// Frozen-tail window of the splitting map; `10 / max(gamma, 1)` when absent.
    pub split_window: Option<f64>,
    /// The window field is replaced per row.
    pub eigen: EigenOptions,
    pub exec: Exec,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            ode_step: 0.02,
            kernel_rank_tol: 1e-9,
            t_cut: None,
            split_window: None,
            eigen: EigenOptions::default(),
            exec: Exec::Parallel,
        }
    }
}

/// `delta(span S_r K~_r, K_inf)` and its pieces, in `K1 ⊕ K2` coordinates
/// extended by the part of the split sections orthogonal to `K1 ⊕ K2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExactnessGap {
    pub gap: f64,
    /// `delta^(S_r K~_r, K_inf)`.
    pub split_to_kinf: f64,
    /// `delta^(K_inf, S_r K~_r)`.
    pub kinf_to_split: f64,
    /// Sum of both asymptotic projection defects; `None` when dimensions differ.
    pub projection_defect: Option<f64>,
    pub dim_split: usize,
    pub dim_kinf: usize,
}

/// Coordinates of each split pair: projection coefficients on the kernel
/// bases, followed by coordinates of the orthogonal remainder.
fn split_coordinates(k1: &EndKernel, k2: &EndKernel, splits: &[SplitPair]) -> CMat {
    let (m1, m2) = (k1.kappa, k2.kappa);
    let s = splits.len();
    let r1: Vec<&ExtendedSection> = k1.solutions.iter().collect();
    let r2: Vec<&ExtendedSection> = k2.solutions.iter().collect();
    let mut proj = CMat::zeros(m1 + m2, s);
    let mut rest1 = Vec::with_capacity(s);
    let mut rest2 = Vec::with_capacity(s);
    for (col, p) in splits.iter().enumerate() {
        let a: Vec<C64> = r1.iter().map(|k| ex_inner(k, &p.side1, &k1.grid)).collect();
        let b: Vec<C64> = r2.iter().map(|k| ex_inner(k, &p.side2, &k2.grid)).collect();
        for (i, v) in a.iter().chain(&b).enumerate() {
            proj[(i, col)] = *v;
        }
        rest1.push(p.side1.subtract(&r1, &a, &k1.grid));
        rest2.push(p.side2.subtract(&r2, &b, &k2.grid));
    }
    let rest = gram_coordinates(&(ex_gram(&rest1, &k1.grid) + ex_gram(&rest2, &k2.grid)), 1e-14);
    let mut x = CMat::zeros(m1 + m2 + rest.nrows(), s);
    x.view_mut((0, 0), (m1 + m2, s)).copy_from(&proj);
    x.view_mut((m1 + m2, 0), (rest.nrows(), s)).copy_from(&rest);
    x
}

/// Gap between the split low-lying eigenvectors and `K_inf`.
pub fn exactness_gap(
    problem: &GluedProblem,
    k1: &EndKernel,
    k2: &EndKernel,
    diff: &DifferenceKernel,
    vectors: &[&Vec<CVec>],
    split_window: f64,
) -> Result<ExactnessGap> {
    let splits: Vec<SplitPair> = vectors
        .iter()
        .map(|psi| split_map(problem, psi, split_window))
        .collect::<Result<_>>()?;
    let x = split_coordinates(k1, k2, &splits);
    let dim = x.nrows();
    let u = if splits.is_empty() {
        Frame::zero(dim)
    } else {
        orthonormalize(&x, DEFAULT_RANK_TOL)
    };
    let mut kinf = CMat::zeros(dim, diff.dim_k_inf);
    if diff.dim_k_inf > 0 {
        kinf.view_mut((0, 0), (diff.k_inf.nrows(), diff.dim_k_inf))
            .copy_from(&diff.k_inf);
    }
    let v = Frame::from_orthonormal(kinf);
    let projection_defect = if u.dim() == v.dim() {
        Some(asymptotic_projection_defect(&u, &v)? + asymptotic_projection_defect(&v, &u)?)
    } else {
        None
    };
    Ok(ExactnessGap {
        gap: gap(&u, &v)?,
        split_to_kinf: gap_directed(&u, &v)?,
        kinf_to_split: gap_directed(&v, &u)?,
        projection_defect,
        dim_split: u.dim(),
        dim_kinf: v.dim(),
    })
}

/// Counts of positive and negative eigenvalues of the (Hermitian) matrix of `C`.
fn parity_counts(g: &CMat) -> (usize, usize) {
    if g.nrows() == 0 {
        return (0, 0);
    }
    let (vals, _) = hermitian_eigen(&((g + g.adjoint()) * c(0.5, 0.0)));
    let even = vals.iter().filter(|&&v| v > 0.0).count();
    (even, vals.len() - even)
}

/// Square root of the largest eigenvalue of a Gram matrix of remainders.
fn gram_size(g: &CMat) -> f64 {
    if g.nrows() == 0 {
        return 0.0;
    }
    let (vals, _) = hermitian_eigen(g);
    vals.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GradedDims {
    pub even: usize,
    pub odd: usize,
}

impl From<(usize, usize)> for GradedDims {
    fn from((even, odd): (usize, usize)) -> Self {
        GradedDims { even, odd }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradedReport {
    pub ktilde: GradedDims,
    pub kernel1: GradedDims,
    pub kernel2: GradedDims,
    pub traces1: GradedDims,
    pub traces2: GradedDims,
    pub trace_sum: GradedDims,
    pub k_inf: GradedDims,
    /// How far `K~_r` is from being C-invariant.
    pub invariance_defect: f64,
    pub kernel_defect: f64,
    /// `max |lambda_i + lambda_{N-1-i}|` over the spectrum in the window.
    pub pairing_gap: f64,
    /// `||CJ + JC||` plus the largest `||CH + HC||` over the cells.
    pub anticommutation_defect: f64,
    pub even_balanced: bool,
    pub odd_balanced: bool,
    pub warnings: Vec<String>,
}

/// Matrix of `C` on an extended-L2-orthonormal kernel basis, with the size of
/// the part of `C K` outside `K`.
fn kernel_grading(k: &EndKernel, cm: &CMat) -> (CMat, f64) {
    let m = k.kappa;
    let images: Vec<ExtendedSection> = k.solutions.iter().map(|s| s.map(cm)).collect();
    let g = CMat::from_fn(m, m, |i, j| ex_inner(&k.solutions[i], &images[j], &k.grid));
    let basis: Vec<&ExtendedSection> = k.solutions.iter().collect();
    let rest: Vec<ExtendedSection> = (0..m)
        .map(|j| {
            let coeffs: Vec<C64> = (0..m).map(|i| g[(i, j)]).collect();
            images[j].subtract(&basis, &coeffs, &k.grid)
        })
        .collect();
    (g, gram_size(&ex_gram(&rest, &k.grid)))
}

pub const INVARIANCE_FLAG: f64 = 1e-6;

/// Eigenvalues below this are exact zeros resolved only down to the bisection floor.
pub const ZERO_EIGENVALUE: f64 = 1e-20;

pub fn graded_report(
    problem: &GluedProblem,
    k1: &EndKernel,
    k2: &EndKernel,
    diff: &DifferenceKernel,
    kt: &KTilde,
    rank_tol: f64,
) -> Result<GradedReport> {
    let cm = problem
        .boundary()
        .grading
        .clone()
        .ok_or_else(|| Error::InvalidInput("graded report needs a chirality C".into()))?;
    let mut warnings = Vec::new();
    let vecs = kt.vectors();
    let k = vecs.len();
    let images: Vec<Vec<CVec>> = vecs.iter().map(|u| u.iter().map(|v| &cm * v).collect()).collect();
    let g = CMat::from_fn(k, k, |i, j| problem.l2_inner(vecs[i], &images[j]));
    let (kt_even, kt_odd) = parity_counts(&g);
    let rest: Vec<Vec<CVec>> = (0..k)
        .map(|j| {
            (0..problem.nodes())
                .map(|node| {
                    let mut v = images[j][node].clone();
                    for i in 0..k {
                        v -= &vecs[i][node] * g[(i, j)];
                    }
                    v
                })
                .collect()
        })
        .collect();
    let invariance_defect = gram_size(&CMat::from_fn(k, k, |i, j| problem.l2_inner(&rest[i], &rest[j])));
    if invariance_defect > INVARIANCE_FLAG {
        warnings.push(format!(
            "K~_r is not C-invariant (defect {invariance_defect:.3e}); the threshold may split a ±lambda pair"
        ));
    }
    let (g1, d1) = kernel_grading(k1, &cm);
    let (g2, d2) = kernel_grading(k2, &cm);
    let (e1, o1) = parity_counts(&g1);
    let (e2, o2) = parity_counts(&g2);
    let mut block = CMat::zeros(k1.kappa + k2.kappa, k1.kappa + k2.kappa);
    block.view_mut((0, 0), (k1.kappa, k1.kappa)).copy_from(&g1);
    block
        .view_mut((k1.kappa, k1.kappa), (k2.kappa, k2.kappa))
        .copy_from(&g2);
    let (ei, oi, di) = if diff.dim_k_inf == 0 {
        (0, 0, 0.0)
    } else {
        let gi = diff.k_inf.adjoint() * &block * &diff.k_inf;
        let rest = &block * &diff.k_inf - &diff.k_inf * &gi;
        let (e, o) = parity_counts(&gi);
        (e, o, op_norm(&rest))
    };
    let split = |f: &Frame| -> Result<GradedDims> {
        let (e, o) = graded_split(f, &cm, rank_tol)?;
        Ok((e.dim(), o.dim()).into())
    };
    let traces1 = split(&k1.traces)?;
    let traces2 = split(&k2.traces)?;
    let trace_sum = split(&diff.l_sum)?;

    let flat = kt.spectrum.flat();
    let pairing_gap = flat
        .iter()
        .zip(flat.iter().rev())
        .map(|(a, b)| (a + b).abs())
        .fold(0.0, f64::max);

    let chain = problem.chain();
    let jd = op_norm(&crate::linalg::anticommutator(&cm, &chain.j));
    let hd = (0..chain.cells.len())
        .map(|k| {
            let h = chain.hamiltonian(chain.potential(k));
            op_norm(&crate::linalg::anticommutator(&cm, &h))
        })
        .fold(0.0, f64::max);

    let even_balanced = kt_even + trace_sum.even == e1 + e2;
    let odd_balanced = kt_odd + trace_sum.odd == o1 + o2;
    Ok(GradedReport {
        ktilde: (kt_even, kt_odd).into(),
        kernel1: (e1, o1).into(),
        kernel2: (e2, o2).into(),
        traces1,
        traces2,
        trace_sum,
        k_inf: (ei, oi).into(),
        invariance_defect,
        kernel_defect: d1.max(d2).max(di),
        pairing_gap,
        anticommutation_defect: jd + hd,
        even_balanced,
        odd_balanced,
        warnings,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub r: f64,
    pub total_length: f64,
    pub threshold: f64,
    pub window: f64,
    pub dim_ktilde: usize,
    pub kappa1: usize,
    pub kappa2: usize,
    pub dim_lsum: usize,
    pub dim_lcap: usize,
    pub dim_k_inf: usize,
    /// Smallest `|lambda|` in the scan window; `None` when the window is empty.
    pub lambda_min_abs: Option<f64>,
    pub eigenvalues: Vec<f64>,
    pub exactness: Option<ExactnessGap>,
    pub glue_residual_max: Option<f64>,
    pub glue_injectivity: Option<f64>,
    pub graded: Option<GradedReport>,
    pub warnings: Vec<String>,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn exactness_gap(&self) -> Option<f64> {
        self.exactness.map(|e| e.gap)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LedgerVerdict {
    pub r: f64,
    /// `dim K~_r = kappa1 + kappa2 - dim(L1 + L2)`.
    pub euler: bool,
    /// `dim ker D - dim(L1 + L2) = dim(L1 ∩ L2)`.
    pub lagrangian_pair: bool,
    pub pass: bool,
}

pub fn dimension_ledger(row: &SweepRow, kernel_dim: usize) -> LedgerVerdict {
    let euler = row.error.is_none() && row.dim_ktilde + row.dim_lsum == row.kappa1 + row.kappa2;
    let lagrangian_pair = kernel_dim >= row.dim_lsum && kernel_dim - row.dim_lsum == row.dim_lcap;
    LedgerVerdict {
        r: row.r,
        euler,
        lagrangian_pair,
        pass: euler && lagrangian_pair,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub rate: f64,
    pub amplitude: f64,
    /// RMS misfit of `log y`.
    pub fit_residual: f64,
    pub points: usize,
}

/// Least squares for `log y = log A - rate x`.
pub fn fit_decay(series: &[(f64, f64)]) -> Result<DecayFit> {
    if series.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "need at least 3 points, got {}",
            series.len()
        )));
    }
    if let Some(&(x, y)) = series.iter().find(|p| !(p.1 > 0.0) || !p.1.is_finite()) {
        return Err(Error::InvalidInput(format!("non-positive value {y} at {x}")));
    }
    let n = series.len() as f64;
    let mx = series.iter().map(|p| p.0).sum::<f64>() / n;
    let my = series.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let sxx: f64 = series.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InvalidInput("abscissae must not all coincide".into()));
    }
    let sxy: f64 = series.iter().map(|p| (p.0 - mx) * (p.1.ln() - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (series
        .iter()
        .map(|p| (p.1.ln() - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(DecayFit {
        rate: -slope,
        amplitude: intercept.exp(),
        fit_residual: rms,
        points: series.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ChenVerdict {
    NotApplicable,
    Evaluated {
        /// `min_r lambda_min_abs(r) L(r)`.
        min_product: f64,
        /// Product at the largest r over its maximum.
        last_over_max: f64,
        /// Some row had no eigenvalue in its window; its window stood in.
        used_window_bound: bool,
        pass: bool,
    },
}

/// With `K_inf = 0`, `lambda_min_abs(r) L(r)` must stay bounded away from zero.
pub fn chen_bound(report: &SweepReport) -> ChenVerdict {
    let rows: Vec<&SweepRow> = report.rows.iter().filter(|r| r.error.is_none()).collect();
    if rows.is_empty() || rows.iter().any(|r| r.dim_k_inf != 0) {
        return ChenVerdict::NotApplicable;
    }
    let mut used_window_bound = false;
    let products: Vec<f64> = rows
        .iter()
        .map(|r| {
            let lam = r.lambda_min_abs.unwrap_or_else(|| {
                used_window_bound = true;
                r.window
            });
            lam * r.total_length
        })
        .collect();
    let min_product = products.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_product = products.iter().cloned().fold(0.0, f64::max);
    let last_over_max = products.last().unwrap() / max_product;
    ChenVerdict::Evaluated {
        min_product,
        last_over_max,
        used_window_bound,
        pass: min_product > 0.0 && last_over_max >= 0.5,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Fits {
    /// `lambda_min_abs` against `L_tot`.
    pub lambda_vs_length: Option<DecayFit>,
    pub exactness_gap: Option<DecayFit>,
    pub glue_residual: Option<DecayFit>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdicts {
    pub ledger: Option<LedgerVerdict>,
    /// `dim K~_r = dim K_inf` at the largest r.
    pub ktilde_matches_kinf: bool,
    /// First r from which the Euler identity holds on every later row.
    pub stabilization_r0: Option<f64>,
    /// First r from which the exactness gap decreases strictly (or stays below 1e-8).
    pub exactness_monotone_r0: Option<f64>,
    pub schedule_dominates: bool,
    pub chen: ChenVerdict,
    pub graded_balanced: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub schedule: ThresholdSchedule,
    pub gamma: f64,
    pub lambda_decay: f64,
    pub kernel_dim: usize,
    pub kappa1: usize,
    pub kappa2: usize,
    pub dim_k_inf: usize,
    pub rows: Vec<SweepRow>,
    pub fits: Fits,
    pub verdicts: Verdicts,
    pub warnings: Vec<String>,
}

/// Window `max(10 c, gamma / 2)`, or `max(10 c, 2 pi / L)` without a gap.
pub fn row_window(threshold: f64, gamma: f64, total_length: f64) -> f64 {
    if gamma.is_finite() {
        (10.0 * threshold).max(gamma / 2.0)
    } else {
        (10.0 * threshold).max(2.0 * std::f64::consts::PI / total_length)
    }
}

/// Kernels of both ends and their difference kernel; independent of r.
pub struct EndPair {
    pub k1: EndKernel,
    pub k2: EndKernel,
    pub diff: DifferenceKernel,
}

pub fn end_pair(end1: &EndModel, end2: &EndModel, opts: &SweepOptions) -> Result<EndPair> {
    let kopts = KernelOptions {
        ode_step: opts.ode_step,
        rank_tol: opts.kernel_rank_tol,
        t_cut: opts.t_cut,
    };
    let k1 = extended_kernel(end1, &kopts)?;
    let k2 = extended_kernel(end2, &kopts)?;
    let diff = difference_kernel(&k1, &k2, opts.kernel_rank_tol)?;
    Ok(EndPair { k1, k2, diff })
}

fn sweep_row(
    end1: &EndModel,
    end2: &EndModel,
    ends: &EndPair,
    schedule: &ThresholdSchedule,
    r: f64,
    opts: &SweepOptions,
) -> SweepRow {
    let threshold = schedule.threshold(r);
    let mut row = SweepRow {
        r,
        total_length: f64::NAN,
        threshold,
        window: f64::NAN,
        dim_ktilde: 0,
        kappa1: ends.k1.kappa,
        kappa2: ends.k2.kappa,
        dim_lsum: ends.diff.l_sum.dim(),
        dim_lcap: ends.diff.l_cap.dim(),
        dim_k_inf: ends.diff.dim_k_inf,
        lambda_min_abs: None,
        eigenvalues: Vec::new(),
        exactness: None,
        glue_residual_max: None,
        glue_injectivity: None,
        graded: None,
        warnings: Vec::new(),
        error: None,
    };
    if let Err(e) = fill_row(&mut row, end1, end2, ends, opts) {
        row.error = Some(e.to_string());
    }
    row
}

fn fill_row(row: &mut SweepRow, end1: &EndModel, end2: &EndModel, ends: &EndPair, opts: &SweepOptions) -> Result<()> {
    let problem = GluedProblem::assemble(end1, end2, row.r, opts.ode_step)?;
    row.total_length = problem.total_length;
    row.window = row_window(row.threshold, problem.spectral.gamma, problem.total_length);
    let eopts = EigenOptions {
        window: row.window,
        ..opts.eigen
    };
    let kt = ktilde(&problem, row.threshold, &eopts)?;
    row.warnings.extend(kt.warnings.iter().cloned());
    row.dim_ktilde = kt.dim;
    row.lambda_min_abs = kt.min_abs_lambda();
    row.eigenvalues = kt.spectrum.flat();

    let window = opts
        .split_window
        .unwrap_or_else(|| default_split_window(problem.spectral.gamma));
    let gluing = glue_basis(&problem, &ends.k1, &ends.k2, &ends.diff.k_inf)?;
    row.glue_residual_max = Some(gluing.residual);
    row.glue_injectivity = Some(gluing.injectivity);
    row.exactness = Some(exactness_gap(
        &problem,
        &ends.k1,
        &ends.k2,
        &ends.diff,
        &kt.vectors(),
        window,
    )?);
    if problem.boundary().grading.is_some() {
        let g = graded_report(&problem, &ends.k1, &ends.k2, &ends.diff, &kt, opts.kernel_rank_tol)?;
        row.warnings.extend(g.warnings.iter().cloned());
        row.graded = Some(g);
    }
    Ok(())
}

/// First r from which `pred` holds on every later row; `None` if it fails at the last row.
fn holds_from(rows: &[&SweepRow], pred: impl Fn(usize) -> bool) -> Option<f64> {
    let mut start = None;
    for i in (0..rows.len()).rev() {
        if pred(i) {
            start = Some(rows[i].r);
        } else {
            break;
        }
    }
    start
}

pub fn run_sweep(
    end1: &EndModel,
    end2: &EndModel,
    schedule: &ThresholdSchedule,
    r_list: &[f64],
    opts: &SweepOptions,
) -> Result<SweepReport> {
    if r_list.is_empty() {
        return Err(Error::InvalidInput("r list is empty".into()));
    }
    if r_list.windows(2).any(|w| !(w[1] > w[0])) || !(r_list[0] >= 1.0) {
        return Err(Error::InvalidInput("r list must be increasing with r >= 1".into()));
    }
    let ends = end_pair(end1, end2, opts)?;
    let rows: Vec<SweepRow> = par::map(opts.exec, r_list, |&r| sweep_row(end1, end2, &ends, schedule, r, opts));

    let gamma = ends.k1.spectral.gamma;
    let lambda_decay = end1.neck.lambda().min(end2.neck.lambda());
    let kernel_dim = ends.k1.spectral.kernel.dim();
    let mut warnings = Vec::new();
    for row in &rows {
        if let Some(e) = &row.error {
            warnings.push(format!("r = {}: {e}", row.r));
        }
    }
    let ok: Vec<&SweepRow> = rows.iter().filter(|r| r.error.is_none()).collect();

    let lambda_series: Vec<(f64, f64)> = ok
        .iter()
        .filter_map(|r| r.lambda_min_abs.map(|l| (r.total_length, l)))
        .filter(|p| p.1 > ZERO_EIGENVALUE)
        .collect();
    let gap_series: Vec<(f64, f64)> = ok.iter().filter_map(|r| r.exactness_gap().map(|g| (r.r, g))).collect();
    let glue_series: Vec<(f64, f64)> = ok
        .iter()
        .filter_map(|r| r.glue_residual_max.map(|g| (r.r, g)))
        .collect();
    let fits = Fits {
        lambda_vs_length: fit_decay(&lambda_series).ok(),
        exactness_gap: fit_decay(&gap_series).ok(),
        glue_residual: if ends.diff.dim_k_inf > 0 {
            fit_decay(&glue_series).ok()
        } else {
            None
        },
    };

    let last = rows.last().unwrap();
    let ledger = (last.error.is_none()).then(|| dimension_ledger(last, kernel_dim));
    let ktilde_matches_kinf = last.error.is_none() && last.dim_ktilde == last.dim_k_inf;
    if !ktilde_matches_kinf {
        warnings.push(format!(
            "dim K~_r = {} differs from dim K_inf = {} at the largest r",
            last.dim_ktilde, last.dim_k_inf
        ));
    }
    let stabilization_r0 = holds_from(&ok, |i| dimension_ledger(ok[i], kernel_dim).euler);
    let exactness_monotone_r0 = holds_from(&ok, |i| {
        let g = ok[i].exactness_gap().unwrap_or(f64::NAN);
        if g < 1e-8 {
            return true;
        }
        i + 1 >= ok.len() || ok[i + 1].exactness_gap().is_some_and(|h| h < g)
    });
    let graded_balanced = ok
        .iter()
        .map(|r| r.graded.as_ref().map(|g| g.even_balanced && g.odd_balanced))
        .collect::<Option<Vec<bool>>>()
        .filter(|v| !v.is_empty())
        .map(|v| *v.last().unwrap());

    let mut report = SweepReport {
        schedule: *schedule,
        gamma,
        lambda_decay,
        kernel_dim,
        kappa1: ends.k1.kappa,
        kappa2: ends.k2.kappa,
        dim_k_inf: ends.diff.dim_k_inf,
        rows,
        fits,
        verdicts: Verdicts {
            ledger,
            ktilde_matches_kinf,
            stabilization_r0,
            exactness_monotone_r0,
            schedule_dominates: schedule.dominates_on(r_list),
            chen: ChenVerdict::NotApplicable,
            graded_balanced,
        },
        warnings,
    };
    report.verdicts.chen = chen_bound(&report);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_exact_series() {
        let s: Vec<(f64, f64)> = (0..6).map(|i| (i as f64, 3.0 * (-1.5 * i as f64).exp())).collect();
        let f = fit_decay(&s).unwrap();
        assert!((f.rate - 1.5).abs() < 1e-12);
        assert!((f.amplitude - 3.0).abs() < 1e-12);
        assert!(f.fit_residual < 1e-12);
    }

    #[test]
    fn fit_constant_and_errors() {
        let s = [(1.0, 2.0), (2.0, 2.0), (3.0, 2.0)];
        assert!(fit_decay(&s).unwrap().rate.abs() < 1e-15);
        assert!(fit_decay(&s[..2]).is_err());
        assert!(fit_decay(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]).is_err());
    }

    #[test]
    fn fit_with_multiplicative_noise() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let s: Vec<(f64, f64)> = (0..20)
            .map(|i| {
                let r = 1.0 + 0.5 * i as f64;
                (r, 2.0 * (-0.8 * r).exp() * (1.0 + 0.01 * rng.random_range(-1.0..1.0)))
            })
            .collect();
        let f = fit_decay(&s).unwrap();
        assert!((f.rate - 0.8).abs() < 0.05 * 0.8);
    }

    #[test]
    fn schedule_domination() {
        let s = ThresholdSchedule::new(0.25, Some(0.9)).unwrap();
        assert!((s.threshold(0.5) - 0.25).abs() < 1e-15);
        assert!((s.threshold(4.0) - 0.25 / 16.0).abs() < 1e-15);
        let rs: Vec<f64> = (0..200).map(|k| s.r_min + 0.25 * k as f64).collect();
        assert!(rs.iter().all(|&r| s.threshold(r) >= (-0.9 * r).exp()));
        if s.r_min > 1.0 {
            let before = s.r_min - 0.25;
            assert!(s.threshold(before) < (-0.9 * before).exp());
        }
        let free = ThresholdSchedule::new(1.0, None).unwrap();
        assert_eq!(free.r_min, 1.0);
        assert!(ThresholdSchedule::new(0.0, None).is_err());
    }

    #[test]
    fn auto_schedule_for_builtins() {
        let m = crate::models::exponential();
        let s = ThresholdSchedule::auto(&m.end1, &m.end2, 2.0).unwrap();
        assert!((s.delta.unwrap() - 0.9).abs() < 1e-12);
        assert!(s.c0 <= 0.25 + 1e-15);
        let m = crate::models::rotation(true);
        let s = ThresholdSchedule::auto(&m.end1, &m.end2, 2.0).unwrap();
        assert!(s.delta.is_none());
        // Bulk estimate 4 pi / 14, quartered.
        assert!((s.c0 - std::f64::consts::PI / 14.0).abs() < 1e-12);
    }
}
