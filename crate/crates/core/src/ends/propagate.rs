//! Transfer matrices for `u' = (D + J (B(t) - lambda)) u`.
//!
//! `B` is the Hermitian potential, so `A = J B` is the first-order
//! perturbation and `H = B - J D` the Hermitian part of the operator
//! `J d/dt + H`.

use crate::error::{Error, Result};
use crate::linalg::{all_finite, c, expm, hermitian_eigen, identity, qr_gs, CMat};

/// Potential on one cell: shared by a run of cells, or sampled at the midpoint.
#[derive(Debug, Clone)]
pub enum CellPotential {
    Segment(usize),
    Local(CMat),
}

#[derive(Debug, Clone)]
pub struct Cell {
    pub h: f64,
    pub potential: CellPotential,
}

/// A chain of cells traversed in one direction. `sign = -1` walks against
/// the coordinate, as on a left end.
#[derive(Debug, Clone)]
pub struct Chain {
    pub d: CMat,
    pub j: CMat,
    pub sign: f64,
    pub cells: Vec<Cell>,
    /// Hermitian potentials of the constant segments.
    pub segments: Vec<CMat>,
}

impl Chain {
    pub fn n(&self) -> usize {
        self.d.nrows()
    }

    pub fn potential(&self, k: usize) -> &CMat {
        match &self.cells[k].potential {
            CellPotential::Segment(s) => &self.segments[*s],
            CellPotential::Local(b) => b,
        }
    }

    /// `D + J (B - lambda)`.
    pub fn generator(&self, b: &CMat, lambda: f64) -> CMat {
        &self.d + &self.j * (b - identity(self.n()) * c(lambda, 0.0))
    }

    /// `H = B - J D`.
    pub fn hamiltonian(&self, b: &CMat) -> CMat {
        b - &self.j * &self.d
    }

    /// Per-cell propagators `exp(sign h M)`, one exponential per constant segment.
    pub fn propagators(&self, lambda: f64) -> Vec<CMat> {
        let mut cache: Vec<Option<(f64, CMat)>> = vec![None; self.segments.len()];
        self.cells
            .iter()
            .map(|cell| match &cell.potential {
                CellPotential::Segment(s) => {
                    if let Some((h, e)) = &cache[*s] {
                        if *h == cell.h {
                            return e.clone();
                        }
                    }
                    let b = &self.segments[*s];
                    let e = if b.iter().all(|z| *z == c(0.0, 0.0)) {
                        free_propagator(&self.d, &self.j, lambda, self.sign * cell.h)
                    } else {
                        expm(&(self.generator(b, lambda) * c(self.sign * cell.h, 0.0)))
                    };
                    cache[*s] = Some((cell.h, e.clone()));
                    e
                }
                CellPotential::Local(b) => expm(&(self.generator(b, lambda) * c(self.sign * cell.h, 0.0))),
            })
            .collect()
    }

    /// Reversed chain: same cells in the opposite order, walked the other way.
    pub fn reversed(&self) -> Chain {
        Chain {
            d: self.d.clone(),
            j: self.j.clone(),
            sign: -self.sign,
            cells: self.cells.iter().rev().cloned().collect(),
            segments: self.segments.clone(),
        }
    }

    /// Sub-chain of cells `[from, to)`.
    pub fn slice(&self, from: usize, to: usize) -> Chain {
        Chain {
            d: self.d.clone(),
            j: self.j.clone(),
            sign: self.sign,
            cells: self.cells[from..to].to_vec(),
            segments: self.segments.clone(),
        }
    }
}

/// `exp(tau (D - lambda J))` for `J^2 = -1` and `DJ + JD = 0`.
///
/// Then `M^2 = D^2 - lambda^2`, so `exp(tau M) = cosh(tau sqrt(M^2)) + sinhc(M^2) M`,
/// which keeps the small `lambda J` coupling accurate to full relative precision.
pub fn free_propagator(d: &CMat, j: &CMat, lambda: f64, tau: f64) -> CMat {
    let n = d.nrows();
    let (mu, v) = hermitian_eigen(d);
    let mut ch = CMat::zeros(n, n);
    let mut sh = CMat::zeros(n, n);
    for (k, m) in mu.iter().enumerate() {
        let q = m * m - lambda * lambda;
        let (a, b) = if q > 0.0 {
            let s = q.sqrt();
            ((tau * s).cosh(), (tau * s).sinh() / s)
        } else if q < 0.0 {
            let s = (-q).sqrt();
            ((tau * s).cos(), (tau * s).sin() / s)
        } else {
            (1.0, tau)
        };
        ch[(k, k)] = c(a, 0.0);
        sh[(k, k)] = c(b, 0.0);
    }
    let m = d - j * c(lambda, 0.0);
    &v * ch * v.adjoint() + &v * sh * v.adjoint() * m
}

/// Fundamental solution of `u' = (M(t) - lambda J) u` from `t0` to `t1` with
/// midpoint-sampled exponentials, where `M = D + A`. `t1 < t0` propagates backwards.
pub fn propagate(potential: impl Fn(f64) -> CMat, j: &CMat, lambda: f64, t0: f64, t1: f64, step: f64) -> Result<CMat> {
    if !(step > 0.0) {
        return Err(Error::InvalidInput(format!("step must be positive, got {step}")));
    }
    let len = (t1 - t0).abs();
    let m0 = potential(t0);
    let n = m0.nrows();
    if len == 0.0 {
        return Ok(identity(n));
    }
    let cells = (len / step).ceil().max(1.0) as usize;
    let h = (t1 - t0) / cells as f64;
    let mut f = identity(n);
    for k in 0..cells {
        let mid = t0 + (k as f64 + 0.5) * h;
        let m = potential(mid) - j * c(lambda, 0.0);
        f = expm(&(m * c(h, 0.0))) * f;
        if !all_finite(&f) {
            return Err(Error::Numerical(format!(
                "transfer matrix overflowed after {:.3} units; use the renormalized frame propagation",
                (k + 1) as f64 * h.abs()
            )));
        }
    }
    Ok(f)
}

/// Frames along a chain with QR renormalization after every cell.
///
/// `frames[k]` is orthonormal and `E_k frames[k] = frames[k+1] r[k]`.
#[derive(Debug, Clone)]
pub struct FramePath {
    pub frames: Vec<CMat>,
    pub r: Vec<CMat>,
}

impl FramePath {
    /// Solutions `u_k = frames[k] y_k` ending at coefficient `y_last`,
    /// reconstructed backwards through the `R` factors.
    pub fn reconstruct_backward(&self, y_last: &CMat) -> Result<Vec<CMat>> {
        let k = self.frames.len();
        let mut y = vec![CMat::zeros(0, 0); k];
        y[k - 1] = y_last.clone();
        for i in (0..k - 1).rev() {
            let next = &y[i + 1];
            let sol = self.r[i]
                .clone()
                .solve_upper_triangular(next)
                .ok_or_else(|| Error::Numerical("singular R factor in frame path".into()))?;
            y[i] = sol;
        }
        Ok(self.frames.iter().zip(&y).map(|(q, yk)| q * yk).collect())
    }
}

pub fn propagate_frame(q0: &CMat, props: &[CMat]) -> Result<FramePath> {
    let mut frames = Vec::with_capacity(props.len() + 1);
    let mut rs = Vec::with_capacity(props.len());
    frames.push(q0.clone());
    for e in props {
        let y = e * frames.last().unwrap();
        let (q, r) = qr_gs(&y);
        if !all_finite(&q) || !all_finite(&r) {
            return Err(Error::Numerical("non-finite frame after renormalization".into()));
        }
        frames.push(q);
        rs.push(r);
    }
    Ok(FramePath { frames, r: rs })
}
