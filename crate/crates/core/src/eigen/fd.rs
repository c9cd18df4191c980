//! Finite-difference cross-check: box scheme on a uniform grid, dense
//! generalized eigenproblem solved by shift-and-invert.

use faer::linalg::solvers::Solve;
use faer::Mat;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::glue::GluedProblem;
use crate::linalg::{c, CMat, C64};

pub const FD_BUDGET: usize = 4000;

#[derive(Debug, Clone, Serialize)]
pub struct FdSpectrum {
    pub h: f64,
    pub unknowns: usize,
    pub eigenvalues: Vec<f64>,
    /// Largest imaginary part among the returned eigenvalues.
    pub max_imag: f64,
}

/// Pencil `(A, B)` of `J (u_{k+1} - u_k)/h + H (u_k + u_{k+1})/2 = lambda (u_k + u_{k+1})/2`,
/// with the end values parametrized by the boundary frames.
pub fn fd_pencil(problem: &GluedProblem, h: f64) -> Result<(Mat<C64>, Mat<C64>, f64)> {
    if !(h > 0.0) {
        return Err(Error::InvalidInput(format!("h must be positive, got {h}")));
    }
    let n = problem.n();
    let half = n / 2;
    let cells = (problem.total_length / h).round().max(1.0) as usize;
    let hh = problem.total_length / cells as f64;
    let unknowns = cells * n;
    if unknowns > FD_BUDGET {
        return Err(Error::BudgetExceeded {
            unknowns,
            budget: FD_BUDGET,
        });
    }
    let j = &problem.boundary().j;
    let jd = j * &problem.boundary().d;
    let q1 = problem.lambda_left().basis();
    let q2 = problem.lambda_right().basis();
    let mut a = Mat::<C64>::zeros(unknowns, unknowns);
    let mut b = Mat::<C64>::zeros(unknowns, unknowns);

    // Column block of node `k`, with the map from unknowns to the node value.
    let node = |k: usize| -> (usize, CMat) {
        if k == 0 {
            (0, q1.clone())
        } else if k == cells {
            (unknowns - half, q2.clone())
        } else {
            (half + (k - 1) * n, CMat::identity(n, n))
        }
    };
    for k in 0..cells {
        let mid = (k as f64 + 0.5) * hh;
        let hm = problem.potential_at(mid) - &jd;
        let lo = j * c(-1.0 / hh, 0.0) + &hm * c(0.5, 0.0);
        let hi = j * c(1.0 / hh, 0.0) + &hm * c(0.5, 0.0);
        for (node_k, block) in [(k, lo), (k + 1, hi)] {
            let (col0, embed) = node(node_k);
            let ab = &block * &embed;
            let bb = &embed * c(0.5, 0.0);
            for i in 0..n {
                for jj in 0..embed.ncols() {
                    a[(k * n + i, col0 + jj)] += ab[(i, jj)];
                    b[(k * n + i, col0 + jj)] += bb[(i, jj)];
                }
            }
        }
    }
    Ok((a, b, hh))
}

/// Eigenvalues of the box scheme with `|lambda| <= window`, ascending.
pub fn fd_oracle(problem: &GluedProblem, h: f64, window: f64) -> Result<FdSpectrum> {
    let (a, b, hh) = fd_pencil(problem, h)?;
    let unknowns = a.nrows();
    // A shift that is not itself an eigenvalue of the regression models.
    let sigma = 0.0371 * window.max(1e-3);
    let mut shifted = a.clone();
    for i in 0..unknowns {
        for j in 0..unknowns {
            shifted[(i, j)] -= b[(i, j)] * sigma;
        }
    }
    let lu = shifted.partial_piv_lu();
    let m = lu.solve(&b);
    let mu = m
        .eigenvalues()
        .map_err(|e| Error::Numerical(format!("dense eigensolver failed: {e:?}")))?;
    let mut out = Vec::new();
    let mut max_imag = 0.0f64;
    for z in mu {
        if z.norm() < 1e-300 {
            continue;
        }
        let lam = c(sigma, 0.0) + c(1.0, 0.0) / z;
        if lam.re.abs() <= window {
            max_imag = max_imag.max(lam.im.abs());
            out.push(lam.re);
        }
    }
    out.sort_by(f64::total_cmp);
    Ok(FdSpectrum {
        h: hh,
        unknowns,
        eigenvalues: out,
        max_imag,
    })
}
