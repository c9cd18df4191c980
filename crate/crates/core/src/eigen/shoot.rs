//! Shooting solver. Eigenvalues are located with an integer-valued counting
//! function built from the phase of the unitary attached to the propagated
//! boundary lagrangian, then isolated by bisection.

use std::f64::consts::{FRAC_PI_4, PI, TAU};

use serde::Serialize;

use crate::ends::{propagate_frame, Chain};
use crate::error::{Error, Result};
use crate::glue::GluedProblem;
use crate::linalg::{
    arg, c, eigenvalues_general, expm, hermitian_eigen, hstack, qr_gs, singular_values, svd_sorted, CMat, CVec, C64, I,
};
use crate::par::{self, Exec};

/// Propagation data that does not depend on lambda.
#[derive(Debug, Clone)]
pub struct Shooter {
    chain: Chain,
    vp: CMat,
    vm: CMat,
    q_left: CMat,
    q_right: CMat,
    /// `a2^{-H}` and `(J Q2)^H`, so that `W - I = -i a2^{-H} (J Q2)^H Q1 a1^{-1}`.
    a2_inv_adj: CMat,
    jq2_adj: CMat,
    theta_right: f64,
}

/// Value of the counting function at one lambda.
#[derive(Debug, Clone, Serialize)]
pub struct Phase {
    pub lambda: f64,
    /// Number of eigenvalues below lambda, up to a lambda-independent offset.
    pub count: i64,
    /// Eigen-angles of `W = U2^H U1` in `[0, 2 pi)`.
    pub angles: Vec<f64>,
}

fn det_u(vp: &CMat, vm: &CMat, q: &CMat) -> C64 {
    let a = vp.adjoint() * q;
    let b = vm.adjoint() * q;
    b.determinant() / a.determinant()
}

impl Shooter {
    pub fn new(problem: &GluedProblem) -> Self {
        let (vp, vm) = problem.boundary().j_eigenbasis();
        let q_left = problem.lambda_left().basis().clone();
        let q_right = problem.lambda_right().basis().clone();
        let a2 = vp.adjoint() * &q_right;
        let a2_inv_adj = a2
            .clone()
            .try_inverse()
            .expect("lagrangian frames meet V- trivially")
            .adjoint();
        let jq2_adj = (&problem.boundary().j * &q_right).adjoint();
        let theta_right = arg(det_u(&vp, &vm, &q_right));
        Shooter {
            chain: problem.chain(),
            vp,
            vm,
            q_left,
            q_right,
            a2_inv_adj,
            jq2_adj,
            theta_right,
        }
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    /// Left frame propagated to `x = L` with the lifted phase of `det U1`.
    // Doubling `m` is followed by `continue 'refine`, which restarts the substeps.
    #[allow(clippy::mut_range_bound)]
    fn sweep(&self, lambda: f64) -> Result<(CMat, f64)> {
        let props = self.chain.propagators(lambda);
        let mut q = self.q_left.clone();
        let mut du = det_u(&self.vp, &self.vm, &q);
        let mut theta = arg(du);
        for (k, e) in props.iter().enumerate() {
            let next = e * &q;
            let dn = det_u(&self.vp, &self.vm, &next);
            let delta = arg(dn / du);
            if delta.abs() <= FRAC_PI_4 {
                theta += delta;
                du = dn;
                q = qr_gs(&next).0;
            } else {
                let gen = self.chain.generator(self.chain.potential(k), lambda);
                let h = self.chain.sign * self.chain.cells[k].h;
                let mut m = 2usize;
                'refine: loop {
                    if m > 1 << 16 {
                        return Err(Error::Numerical(format!(
                            "phase of the shooting frame is unresolved at lambda = {lambda}"
                        )));
                    }
                    let sub = expm(&(&gen * c(h / m as f64, 0.0)));
                    let (mut qs, mut ds, mut ts) = (q.clone(), du, theta);
                    for _ in 0..m {
                        let nx = &sub * &qs;
                        let dn = det_u(&self.vp, &self.vm, &nx);
                        let delta = arg(dn / ds);
                        if delta.abs() > FRAC_PI_4 {
                            m *= 2;
                            continue 'refine;
                        }
                        ts += delta;
                        ds = dn;
                        qs = qr_gs(&nx).0;
                    }
                    q = qs;
                    du = ds;
                    theta = ts;
                    break;
                }
            }
            if !q.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite shooting frame at lambda = {lambda}"
                )));
            }
        }
        Ok((q, theta))
    }

    pub fn phase(&self, lambda: f64) -> Result<Phase> {
        let (q1, theta) = self.sweep(lambda)?;
        let a1 = self.vp.adjoint() * &q1;
        let a1_inv = a1
            .try_inverse()
            .ok_or_else(|| Error::Numerical("propagated frame lost the lagrangian property".into()))?;
        let e = (&self.a2_inv_adj * (&self.jq2_adj * &q1) * a1_inv) * (-I);
        let mut angles: Vec<f64> = eigenvalues_general(&e)
            .into_iter()
            .map(|z| {
                let a = arg(c(1.0, 0.0) + z);
                if a < 0.0 {
                    a + TAU
                } else {
                    a
                }
            })
            .collect();
        angles.sort_by(f64::total_cmp);
        let s: f64 = angles.iter().sum();
        let raw = (theta - self.theta_right - s) / TAU;
        let count = raw.round();
        if (raw - count).abs() > 1e-3 {
            return Err(Error::Numerical(format!(
                "counting function is not integral at lambda = {lambda} ({raw})"
            )));
        }
        Ok(Phase {
            lambda,
            count: count as i64,
            angles,
        })
    }

    /// Singular values of `[F(lambda) Q_left | Q_right]`.
    pub fn matching(&self, lambda: f64) -> Result<Vec<f64>> {
        let (q1, _) = self.sweep(lambda)?;
        Ok(singular_values(&hstack(&[&q1, &self.q_right])))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Matching {
    pub sigma_min: f64,
    pub det_abs: f64,
    pub singular_values: Vec<f64>,
}

pub fn matching_sigma(problem: &GluedProblem, lambda: f64) -> Result<Matching> {
    let s = Shooter::new(problem).matching(lambda)?;
    Ok(Matching {
        sigma_min: s.last().copied().unwrap_or(0.0),
        det_abs: s.iter().product(),
        singular_values: s,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct EigenOptions {
    /// Eigenvalues are sought in `(-window, window]`.
    pub window: f64,
    /// Scan spacing; `min(gamma, pi / L) / 8` when absent.
    pub scan_step: Option<f64>,
    pub bisect_rel: f64,
    pub bisect_abs: f64,
    /// Largest matching singular value accepted at an eigenvalue.
    pub rank_tol: f64,
    pub resid_tol: f64,
    pub exec: Exec,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            window: 1.0,
            scan_step: None,
            bisect_rel: 1e-12,
            bisect_abs: 1e-24,
            rank_tol: 1e-6,
            resid_tol: 1e-3,
            exec: Exec::Parallel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Eigenvalue {
    pub lambda: f64,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<Eigenvalue>,
    pub window: f64,
    pub scan_step: f64,
    pub warnings: Vec<String>,
}

impl Spectrum {
    /// Eigenvalues repeated by multiplicity.
    pub fn flat(&self) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .flat_map(|e| std::iter::repeat_n(e.lambda, e.multiplicity))
            .collect()
    }
}

pub fn default_scan_step(problem: &GluedProblem) -> f64 {
    problem.spectral.gamma.min(PI / problem.total_length) / 8.0
}

fn isolate(sh: &Shooter, opts: &EigenOptions, lo: &Phase, hi: &Phase) -> Result<Vec<Eigenvalue>> {
    let n = hi.count - lo.count;
    if n <= 0 {
        return Ok(Vec::new());
    }
    let (a, b) = (lo.lambda, hi.lambda);
    let tol = (opts.bisect_rel * a.abs().min(b.abs())).max(opts.bisect_abs);
    let mid = 0.5 * (a + b);
    if b - a <= tol || mid <= a || mid >= b {
        return Ok(vec![Eigenvalue {
            lambda: mid,
            multiplicity: n as usize,
        }]);
    }
    let pm = sh.phase(mid)?;
    let mut out = isolate(sh, opts, lo, &pm)?;
    out.extend(isolate(sh, opts, &pm, hi)?);
    Ok(out)
}

pub fn find_eigenvalues(problem: &GluedProblem, opts: &EigenOptions) -> Result<Spectrum> {
    if !(opts.window > 0.0) {
        return Err(Error::InvalidInput(format!(
            "window must be positive, got {}",
            opts.window
        )));
    }
    let step = opts.scan_step.unwrap_or_else(|| default_scan_step(problem));
    if !(step > 0.0) {
        return Err(Error::InvalidInput(format!("scan step must be positive, got {step}")));
    }
    let sh = Shooter::new(problem);
    let cells = (2.0 * opts.window / step).ceil().max(1.0) as usize;
    let grid: Vec<f64> = (0..=cells)
        .map(|i| -opts.window + 2.0 * opts.window * i as f64 / cells as f64)
        .collect();
    let phases: Vec<Phase> = par::map(opts.exec, &grid, |&l| sh.phase(l))
        .into_iter()
        .collect::<Result<_>>()?;
    let mut warnings = Vec::new();
    let brackets: Vec<(usize, i64)> = (0..cells).map(|i| (i, phases[i + 1].count - phases[i].count)).collect();
    for &(i, n) in &brackets {
        if n < 0 {
            warnings.push(format!("counting function decreased on ({}, {}]", grid[i], grid[i + 1]));
        }
    }
    let active: Vec<usize> = brackets.iter().filter(|b| b.1 > 0).map(|b| b.0).collect();
    let found: Vec<Vec<Eigenvalue>> = par::map(opts.exec, &active, |&i| isolate(&sh, opts, &phases[i], &phases[i + 1]))
        .into_iter()
        .collect::<Result<_>>()?;
    let mut eigenvalues: Vec<Eigenvalue> = found.into_iter().flatten().collect();
    eigenvalues.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    Ok(Spectrum {
        eigenvalues,
        window: opts.window,
        scan_step: step,
        warnings,
    })
}

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub lambda: f64,
    pub multiplicity: usize,
    /// L2-orthonormal sections sampled at the glued nodes.
    pub vectors: Vec<Vec<CVec>>,
    /// Box-scheme residual of each vector.
    pub residuals: Vec<f64>,
    pub sigma_min: f64,
}

/// Box-scheme residual `||J du/h + (H - lambda) u_mid||` over the cells.
pub fn box_residual(chain: &Chain, lambda: f64, u: &[CVec]) -> f64 {
    let mut s = 0.0;
    for (k, cell) in chain.cells.iter().enumerate() {
        let h = cell.h;
        let hm = chain.hamiltonian(chain.potential(k));
        let avg = (&u[k] + &u[k + 1]) * c(0.5, 0.0);
        let r = &chain.j * (&u[k + 1] - &u[k]) * c(1.0 / h, 0.0) + &hm * &avg - &avg * c(lambda, 0.0);
        s += r.norm_squared() * h;
    }
    s.sqrt()
}

/// Eigenvectors at `lambda` by shooting from both ends to the mid-neck node.
pub fn eigenvector(problem: &GluedProblem, lambda: f64, multiplicity: usize, opts: &EigenOptions) -> Result<EigenPair> {
    if multiplicity == 0 {
        return Err(Error::InvalidInput("multiplicity must be positive".into()));
    }
    let chain = problem.chain();
    let mid = problem.mid_node();
    let left = chain.slice(0, mid);
    let right = chain.slice(mid, chain.cells.len()).reversed();
    let path_l = propagate_frame(problem.lambda_left().basis(), &left.propagators(lambda))?;
    let path_r = propagate_frame(problem.lambda_right().basis(), &right.propagators(lambda))?;
    let ql = path_l.frames.last().unwrap();
    let qr = path_r.frames.last().unwrap();
    let half = ql.ncols();
    let m = hstack(&[ql, &(-qr)]);
    let (_, s, v) = svd_sorted(&m);
    let n = m.ncols();
    if multiplicity > n {
        return Err(Error::InvalidInput(format!("multiplicity {multiplicity} exceeds {n}")));
    }
    let sigma = s[n - multiplicity];
    if sigma > opts.rank_tol {
        return Err(Error::NotEigenvalue {
            lambda,
            sigma_min: s[n - 1],
        });
    }
    let y = v.columns(n - multiplicity, multiplicity).into_owned();
    let yl = y.rows(0, half).into_owned();
    let yr = y.rows(half, half).into_owned();
    let sol_l = path_l.reconstruct_backward(&yl)?;
    let sol_r = path_r.reconstruct_backward(&yr)?;
    let nodes = problem.nodes();
    let raw: Vec<Vec<CVec>> = (0..multiplicity)
        .map(|i| {
            (0..nodes)
                .map(|g| {
                    if g <= mid {
                        sol_l[g].column(i).into_owned()
                    } else {
                        sol_r[nodes - 1 - g].column(i).into_owned()
                    }
                })
                .collect()
        })
        .collect();
    let vectors = l2_orthonormalize(problem, &raw)?;
    let residuals: Vec<f64> = vectors.iter().map(|u| box_residual(&chain, lambda, u)).collect();
    let tol = opts.resid_tol * (1.0 + lambda.abs());
    if let Some(&worst) = residuals.iter().max_by(|a, b| a.total_cmp(b)) {
        if worst > tol {
            return Err(Error::OdeResidual { residual: worst, tol });
        }
    }
    Ok(EigenPair {
        lambda,
        multiplicity,
        vectors,
        residuals,
        sigma_min: s[n - 1],
    })
}

/// Orthonormal recombination in the trapezoid L2 product.
pub fn l2_orthonormalize(problem: &GluedProblem, sections: &[Vec<CVec>]) -> Result<Vec<Vec<CVec>>> {
    let k = sections.len();
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut g = CMat::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            g[(i, j)] = problem.l2_inner(&sections[i], &sections[j]);
        }
    }
    let (vals, vecs) = hermitian_eigen(&g);
    if !(vals[0] > 1e-14 * vals[k - 1]) {
        return Err(Error::Numerical("dependent eigenvectors".into()));
    }
    let nodes = sections[0].len();
    Ok((0..k)
        .map(|col| {
            let scale = 1.0 / vals[col].sqrt();
            (0..nodes)
                .map(|g| {
                    let mut acc = CVec::zeros(sections[0][0].len());
                    for (i, s) in sections.iter().enumerate() {
                        acc += &s[g] * (vecs[(i, col)] * scale);
                    }
                    acc
                })
                .collect()
        })
        .collect())
}

/// `K~_r(c)`: the span of eigenvectors with `|lambda| <= c`.
#[derive(Debug, Clone)]
pub struct KTilde {
    pub threshold: f64,
    pub spectrum: Spectrum,
    pub pairs: Vec<EigenPair>,
    pub dim: usize,
    pub warnings: Vec<String>,
}

impl KTilde {
    pub fn vectors(&self) -> Vec<&Vec<CVec>> {
        self.pairs.iter().flat_map(|p| p.vectors.iter()).collect()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.pairs
            .iter()
            .flat_map(|p| std::iter::repeat_n(p.lambda, p.vectors.len()))
            .collect()
    }

    pub fn min_abs_lambda(&self) -> Option<f64> {
        self.spectrum
            .eigenvalues
            .iter()
            .map(|e| e.lambda.abs())
            .min_by(f64::total_cmp)
    }
}

pub fn ktilde(problem: &GluedProblem, threshold: f64, opts: &EigenOptions) -> Result<KTilde> {
    if threshold > opts.window {
        return Err(Error::InvalidInput(format!(
            "threshold {threshold} lies outside the scan window {}",
            opts.window
        )));
    }
    let spectrum = find_eigenvalues(problem, opts)?;
    let mut warnings = spectrum.warnings.clone();
    let inside: Vec<Eigenvalue> = spectrum
        .eigenvalues
        .iter()
        .copied()
        .filter(|e| e.lambda.abs() <= threshold)
        .collect();
    for e in &spectrum.eigenvalues {
        let tol = (opts.bisect_rel * e.lambda.abs()).max(opts.bisect_abs);
        if (e.lambda.abs() - threshold).abs() <= 10.0 * tol.max(1e-12) {
            warnings.push(format!("eigenvalue {} sits on the threshold {threshold}", e.lambda));
        }
    }
    let pairs: Vec<EigenPair> = par::map(opts.exec, &inside, |e| {
        eigenvector(problem, e.lambda, e.multiplicity, opts)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let dim = pairs.iter().map(|p| p.vectors.len()).sum();
    Ok(KTilde {
        threshold,
        spectrum,
        pairs,
        dim,
        warnings,
    })
}
