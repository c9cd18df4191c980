//! The closed problem on `[0, L]` obtained by joining two ends along a neck
//! of length `2r + 3`, with the gluing map `Psi_r` and the splitting map `S_r`.
//!
//! Global coordinate `x`, side-1 coordinate `t = x - T_c1`, side-2 coordinate
//! `s = t - (2r + 3)`. Side 1 owns `t <= r + 3/2`, side 2 the rest.

use crate::boundary::{default_eig_tol, spectral_decompose, SpectralData};
use crate::ends::{Cell, CellPotential, Chain, EndGrid, EndKernel, EndModel, ExtendedSection, Lattice, Side, Tail};
use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_eigen, CMat, CVec, C64};
use crate::necks::{cutoff_derivative, eval_cutoff};
use crate::subspaces::Frame;

#[derive(Debug, Clone)]
pub struct GluedProblem {
    pub r: f64,
    pub total_length: f64,
    pub lattice: Lattice,
    pub end1: EndModel,
    pub end2: EndModel,
    pub grid1: EndGrid,
    pub grid2: EndGrid,
    /// Neck cells on each side of the midpoint.
    pub half_neck_cells: usize,
    pub spectral: SpectralData,
}

/// Which end a glued node belongs to, with its index in that end's lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeSide {
    One(usize),
    Two(usize),
}

impl GluedProblem {
    pub fn assemble(end1: &EndModel, end2: &EndModel, r: f64, ode_step: f64) -> Result<Self> {
        if !(r >= 1.0) || !r.is_finite() {
            return Err(Error::InvalidInput(format!("r must be >= 1, got {r}")));
        }
        if ((4.0 * r) - (4.0 * r).round()).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("r = {r} must be a multiple of 1/4")));
        }
        if end1.side != Side::RightInfinite || end2.side != Side::LeftInfinite {
            return Err(Error::InvalidInput(
                "end1 must be right_infinite and end2 left_infinite".into(),
            ));
        }
        let b1 = &end1.boundary;
        let b2 = &end2.boundary;
        let same = b1.n() == b2.n()
            && (&b1.d - &b2.d).norm() <= 1e-12 * (1.0 + b1.d.norm())
            && (&b1.j - &b2.j).norm() <= 1e-12
            && match (&b1.grading, &b2.grading) {
                (None, None) => true,
                (Some(x), Some(y)) => (x - y).norm() <= 1e-12,
                _ => false,
            };
        if !same {
            return Err(Error::InvalidInput("ends use different boundary models".into()));
        }
        end1.ensure_valid()?;
        end2.ensure_valid()?;
        let lattice = Lattice::new(ode_step)?;
        let spectral = spectral_decompose(b1, default_eig_tol(b1))?;
        let half_neck_cells = lattice.neck_cells(r + 1.5)?;
        Ok(GluedProblem {
            r,
            total_length: end1.cap_length + 2.0 * r + 3.0 + end2.cap_length,
            grid1: end1.grid(&lattice),
            grid2: end2.grid(&lattice),
            lattice,
            end1: end1.clone(),
            end2: end2.clone(),
            half_neck_cells,
            spectral,
        })
    }

    pub fn n(&self) -> usize {
        self.end1.n()
    }

    pub fn boundary(&self) -> &crate::boundary::BoundaryModel {
        &self.end1.boundary
    }

    pub fn cells(&self) -> usize {
        self.grid1.cap_cells + 2 * self.half_neck_cells + self.grid2.cap_cells
    }

    pub fn nodes(&self) -> usize {
        self.cells() + 1
    }

    /// Node at the middle of the neck, `x = T_c1 + r + 3/2`.
    pub fn mid_node(&self) -> usize {
        self.grid1.cap_cells + self.half_neck_cells
    }

    pub fn node_side(&self, g: usize) -> NodeSide {
        if g <= self.mid_node() {
            NodeSide::One(g)
        } else {
            NodeSide::Two(self.nodes() - 1 - g)
        }
    }

    /// Glued node of side-2 index `k`.
    pub fn node_of_side2(&self, k: usize) -> usize {
        self.nodes() - 1 - k
    }

    pub fn position(&self, g: usize) -> f64 {
        match self.node_side(g) {
            NodeSide::One(j) => self.end1.cap_length + self.grid1.position(j),
            NodeSide::Two(k) => self.end1.cap_length + 2.0 * self.r + 3.0 + self.grid2.position(k),
        }
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.nodes()).map(|g| self.position(g)).collect()
    }

    pub fn cell_length(&self, k: usize) -> f64 {
        let c1 = self.grid1.cap_cells;
        if k < c1 {
            self.grid1.h_cap
        } else if k < c1 + 2 * self.half_neck_cells {
            self.lattice.h_neck()
        } else {
            self.grid2.h_cap
        }
    }

    /// Hermitian potential `V_r(x)`.
    pub fn potential_at(&self, x: f64) -> CMat {
        let n = self.n();
        let t = x - self.end1.cap_length;
        if t < 0.0 {
            return self.end1.cap_potential.eval(t, n);
        }
        if t <= self.r + 1.5 {
            return self.cutoff_neck(&self.end1, t);
        }
        let s = t - (2.0 * self.r + 3.0);
        if s < 0.0 {
            self.cutoff_neck(&self.end2, s)
        } else {
            self.end2.cap_potential.eval(s, n)
        }
    }

    fn cutoff_neck(&self, end: &EndModel, t: f64) -> CMat {
        let eta = eval_cutoff(self.r, t);
        if eta == 0.0 || end.neck.is_zero() {
            CMat::zeros(self.n(), self.n())
        } else {
            end.neck.hermitian(&end.boundary.j, t) * c(eta, 0.0)
        }
    }

    /// Cells from `x = 0` to `x = L`.
    pub fn chain(&self) -> Chain {
        let n = self.n();
        let c1 = self.grid1.cap_cells;
        let neck_end = c1 + 2 * self.half_neck_cells;
        let segments = vec![
            self.end1.cap_potential.eval(0.0, n),
            CMat::zeros(n, n),
            self.end2.cap_potential.eval(0.0, n),
        ];
        let cells = (0..self.cells())
            .map(|k| {
                let mid = 0.5 * (self.position(k) + self.position(k + 1));
                let potential = if k < c1 {
                    if self.end1.cap_potential.is_constant() {
                        CellPotential::Segment(0)
                    } else {
                        CellPotential::Local(self.potential_at(mid))
                    }
                } else if k < neck_end {
                    let t = mid - self.end1.cap_length;
                    let local = if t <= self.r + 1.5 {
                        eval_cutoff(self.r, t) > 0.0 && !self.end1.neck.is_zero()
                    } else {
                        let s = t - (2.0 * self.r + 3.0);
                        eval_cutoff(self.r, s) > 0.0 && !self.end2.neck.is_zero()
                    };
                    if local {
                        CellPotential::Local(self.potential_at(mid))
                    } else {
                        CellPotential::Segment(1)
                    }
                } else if self.end2.cap_potential.is_constant() {
                    CellPotential::Segment(2)
                } else {
                    CellPotential::Local(self.potential_at(mid))
                };
                Cell {
                    h: self.cell_length(k),
                    potential,
                }
            })
            .collect();
        Chain {
            d: self.boundary().d.clone(),
            j: self.boundary().j.clone(),
            sign: 1.0,
            cells,
            segments,
        }
    }

    pub fn lambda_left(&self) -> &Frame {
        &self.end1.lagrangian
    }

    pub fn lambda_right(&self) -> &Frame {
        &self.end2.lagrangian
    }

    /// Trapezoid L2 product over `[0, L]`.
    pub fn l2_inner(&self, u: &[CVec], v: &[CVec]) -> C64 {
        let mut s = c(0.0, 0.0);
        for k in 0..self.cells() {
            let h = 0.5 * self.cell_length(k);
            s += (u[k].dotc(&v[k]) + u[k + 1].dotc(&v[k + 1])) * h;
        }
        s
    }

    pub fn l2_norm(&self, u: &[CVec]) -> f64 {
        self.l2_inner(u, u).re.max(0.0).sqrt()
    }

    fn check_grid(&self, k: &EndKernel, grid: &EndGrid) -> Result<()> {
        if (k.grid.h_neck - grid.h_neck).abs() > 1e-15 || k.grid.cap_cells != grid.cap_cells {
            return Err(Error::InvalidInput(
                "end kernel was computed on a different lattice".into(),
            ));
        }
        Ok(())
    }
}

/// `Psi_r` applied to one matched pair.
#[derive(Debug, Clone)]
pub struct GluedImage {
    pub values: Vec<CVec>,
    pub norm: f64,
    /// `||D_r Psi_r (u1, u2)||`.
    pub residual: f64,
}

/// Residual density samples of one side, on the band where the cutoff moves.
struct Band {
    weights: Vec<f64>,
    samples: Vec<CVec>,
}

/// Composite Simpson weights for `m` (even) cells of width `h`.
fn simpson_weights(m: usize, h: f64) -> Vec<f64> {
    (0..=m)
        .map(|i| {
            let w = if i == 0 || i == m {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * h / 3.0
        })
        .collect()
}

/// `phi' w + phi (1 - phi) A w` with `w = u - u_inf`, on `|t| in [r + 1/4, r + 3/4]`.
fn residual_band(problem: &GluedProblem, end: &EndModel, grid: &EndGrid, u: &ExtendedSection) -> Band {
    let h = problem.lattice.h_neck();
    let q = problem.lattice.per_quarter;
    let start = grid.cap_cells + ((problem.r + 0.25) * 4.0).round() as usize * q;
    let m = 2 * q;
    let weights = simpson_weights(m, h);
    let samples = (start..=start + m)
        .map(|j| {
            let depth = grid.neck_depth(j);
            let t = end.side.sign() * depth;
            let phi = eval_cutoff(problem.r, t);
            let dphi = cutoff_derivative(problem.r, t);
            let w = u.value(j, grid) - u.u_inf();
            let a = end.neck.eval(t);
            &w * c(dphi, 0.0) + (a * &w) * c(phi * (1.0 - phi), 0.0)
        })
        .collect();
    Band { weights, samples }
}

fn band_inner(a: &Band, b: &Band) -> C64 {
    a.weights
        .iter()
        .zip(a.samples.iter().zip(&b.samples))
        .map(|(w, (x, y))| x.dotc(y) * *w)
        .sum()
}

/// Trace mismatch tolerance relative to the input size.
pub const GLUE_TRACE_TOL: f64 = 1e-8;

fn glue_values(problem: &GluedProblem, u1: &ExtendedSection, u2: &ExtendedSection) -> Vec<CVec> {
    let u_inf = u1.u_inf();
    (0..problem.nodes())
        .map(|g| {
            let (end, grid, u, j) = match problem.node_side(g) {
                NodeSide::One(j) => (&problem.end1, &problem.grid1, u1, j),
                NodeSide::Two(k) => (&problem.end2, &problem.grid2, u2, k),
            };
            let depth = grid.neck_depth(j);
            if depth <= 0.0 {
                return u.value(j, grid);
            }
            let phi = eval_cutoff(problem.r, end.side.sign() * depth);
            if phi == 0.0 {
                u_inf.clone()
            } else {
                u.value(j, grid) * c(phi, 0.0) + u_inf * c(1.0 - phi, 0.0)
            }
        })
        .collect()
}

/// `Psi_r(u1, u2) = eta_r u_i + (1 - eta_r) u_inf` on each side.
pub fn glue_map(
    problem: &GluedProblem,
    k1: &EndKernel,
    k2: &EndKernel,
    u1: &ExtendedSection,
    u2: &ExtendedSection,
) -> Result<GluedImage> {
    problem.check_grid(k1, &problem.grid1)?;
    problem.check_grid(k2, &problem.grid2)?;
    let size = crate::ends::kernel::ex_norm(u1, &problem.grid1).hypot(crate::ends::kernel::ex_norm(u2, &problem.grid2));
    let mismatch = (u1.u_inf() - u2.u_inf()).norm();
    if mismatch > GLUE_TRACE_TOL * size.max(1e-300) {
        return Err(Error::TraceMismatch { mismatch });
    }
    let values = glue_values(problem, u1, u2);
    let b1 = residual_band(problem, &problem.end1, &problem.grid1, u1);
    let b2 = residual_band(problem, &problem.end2, &problem.grid2, u2);
    let residual = (band_inner(&b1, &b1).re + band_inner(&b2, &b2).re).max(0.0).sqrt();
    Ok(GluedImage {
        norm: problem.l2_norm(&values),
        values,
        residual,
    })
}

/// `Psi_r` on an orthonormal basis of `K_inf`.
#[derive(Debug, Clone)]
pub struct GlueReport {
    pub images: Vec<GluedImage>,
    /// Operator norm of `v -> D_r Psi_r v` on `K_inf`.
    pub residual: f64,
    /// Smallest singular value of `Psi_r` on `K_inf`.
    pub injectivity: f64,
}

/// Pairs `(u1, u2)` spanned by the columns of `k_inf` over the kernel bases.
pub fn k_inf_pairs(k1: &EndKernel, k2: &EndKernel, k_inf: &CMat) -> Vec<(ExtendedSection, ExtendedSection)> {
    let r1: Vec<&ExtendedSection> = k1.solutions.iter().collect();
    let r2: Vec<&ExtendedSection> = k2.solutions.iter().collect();
    (0..k_inf.ncols())
        .map(|col| {
            let a: Vec<C64> = (0..k1.kappa).map(|i| k_inf[(i, col)]).collect();
            let b: Vec<C64> = (0..k2.kappa).map(|i| k_inf[(k1.kappa + i, col)]).collect();
            (combine_or_zero(&r1, &a, k1), combine_or_zero(&r2, &b, k2))
        })
        .collect()
}

fn combine_or_zero(parts: &[&ExtendedSection], coeffs: &[C64], k: &EndKernel) -> ExtendedSection {
    if parts.is_empty() {
        let n = k.trace_map.nrows();
        ExtendedSection {
            values: vec![CVec::zeros(n)],
            tail: Tail::Decaying {
                u_inf: CVec::zeros(n),
                modes: Vec::new(),
            },
        }
    } else {
        ExtendedSection::combine(parts, coeffs)
    }
}

pub fn glue_basis(problem: &GluedProblem, k1: &EndKernel, k2: &EndKernel, k_inf: &CMat) -> Result<GlueReport> {
    let pairs = k_inf_pairs(k1, k2, k_inf);
    let mut images = Vec::with_capacity(pairs.len());
    let mut bands = Vec::with_capacity(pairs.len());
    for (u1, u2) in &pairs {
        let u1 = pad_to(u1, k1);
        let u2 = pad_to(u2, k2);
        images.push(glue_map(problem, k1, k2, &u1, &u2)?);
        bands.push((
            residual_band(problem, &problem.end1, &problem.grid1, &u1),
            residual_band(problem, &problem.end2, &problem.grid2, &u2),
        ));
    }
    let k = images.len();
    if k == 0 {
        return Ok(GlueReport {
            images,
            residual: 0.0,
            injectivity: f64::INFINITY,
        });
    }
    let mut res = CMat::zeros(k, k);
    let mut gram = CMat::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            res[(i, j)] = band_inner(&bands[i].0, &bands[j].0) + band_inner(&bands[i].1, &bands[j].1);
            gram[(i, j)] = problem.l2_inner(&images[i].values, &images[j].values);
        }
    }
    let (rv, _) = hermitian_eigen(&res);
    let (gv, _) = hermitian_eigen(&gram);
    Ok(GlueReport {
        images,
        residual: rv.last().copied().unwrap_or(0.0).max(0.0).sqrt(),
        injectivity: gv[0].max(0.0).sqrt(),
    })
}

/// Sections of an end with `kappa = 0` stand in as zero; give them the kernel's length.
fn pad_to(u: &ExtendedSection, k: &EndKernel) -> ExtendedSection {
    if u.values.len() > 1 || k.solutions.is_empty() {
        return u.clone();
    }
    let n = u.values[0].len();
    ExtendedSection {
        values: vec![CVec::zeros(n); k.solutions[0].values.len()],
        tail: u.tail.clone(),
    }
}

/// Default length over which the off-kernel part of a frozen tail counts.
pub fn default_split_window(gamma: f64) -> f64 {
    if gamma.is_finite() {
        10.0 / gamma.max(1.0)
    } else {
        0.0
    }
}

#[derive(Debug, Clone)]
pub struct SplitPair {
    pub side1: ExtendedSection,
    pub side2: ExtendedSection,
}

/// `S_r`: restrict to each side up to the slice `|t| = r` and freeze the value there.
pub fn split_map(problem: &GluedProblem, psi: &[CVec], window: f64) -> Result<SplitPair> {
    if psi.len() != problem.nodes() {
        return Err(Error::DimensionMismatch(format!(
            "section has {} nodes, grid has {}",
            psi.len(),
            problem.nodes()
        )));
    }
    let window_nodes = (window.max(0.0) / problem.lattice.h_neck()).round() as usize;
    let p0 = problem.spectral.kernel_projector();
    let j1 = problem.grid1.neck_node(problem.r)?;
    let k2 = problem.grid2.neck_node(problem.r)?;
    let freeze = |values: Vec<CVec>| {
        let u_inf = &p0 * values.last().unwrap();
        ExtendedSection {
            values,
            tail: Tail::Frozen { u_inf, window_nodes },
        }
    };
    let side1 = freeze(psi[..=j1].to_vec());
    let side2 = freeze((0..=k2).map(|k| psi[problem.node_of_side2(k)].clone()).collect());
    Ok(SplitPair { side1, side2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::BoundaryModel;
    use crate::ends::{difference_kernel, extended_kernel, CapPotential, KernelOptions};
    use crate::linalg::real_mat;
    use crate::necks::NeckPerturbation;
    use crate::subspaces::orthonormalize;

    fn j2() -> CMat {
        real_mat(2, 2, &[0.0, -1.0, 1.0, 0.0])
    }

    fn line(v: &[f64]) -> Frame {
        orthonormalize(&real_mat(2, 1, v), 1e-12)
    }

    fn end(side: Side, d: &CMat, l: &[f64], cap: f64) -> EndModel {
        EndModel {
            side,
            cap_length: cap,
            cap_potential: CapPotential::Zero,
            lagrangian: line(l),
            neck: NeckPerturbation::none(2),
            boundary: BoundaryModel::new(d.clone(), j2(), None),
        }
    }

    #[test]
    fn assembly_geometry() {
        let z = CMat::zeros(2, 2);
        let p = GluedProblem::assemble(
            &end(Side::RightInfinite, &z, &[1.0, 0.0], 1.0),
            &end(Side::LeftInfinite, &z, &[1.0, 0.0], 1.0),
            2.0,
            0.02,
        )
        .unwrap();
        assert_eq!(p.total_length, 9.0);
        assert!((p.position(p.nodes() - 1) - 9.0).abs() < 1e-12);
        assert!((p.position(p.mid_node()) - (1.0 + 3.5)).abs() < 1e-12);
        assert!(p.potential_at(4.5).norm() == 0.0);
        for g in 1..p.nodes() {
            assert!((p.position(g) - p.position(g - 1) - p.cell_length(g - 1)).abs() < 1e-12);
        }
    }

    #[test]
    fn assembly_errors() {
        let z = CMat::zeros(2, 2);
        let e1 = end(Side::RightInfinite, &z, &[1.0, 0.0], 0.0);
        let e2 = end(Side::LeftInfinite, &z, &[1.0, 0.0], 0.0);
        assert!(GluedProblem::assemble(&e1, &e2, 0.5, 0.02).is_err());
        assert!(GluedProblem::assemble(&e1, &e2, 2.1, 0.02).is_err());
        assert!(GluedProblem::assemble(&e2, &e1, 2.0, 0.02).is_err());
        let d = real_mat(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let e3 = end(Side::LeftInfinite, &d, &[1.0, 0.0], 0.0);
        assert!(GluedProblem::assemble(&e1, &e3, 2.0, 0.02).is_err());
    }

    #[test]
    fn perturbed_potential_vanishes_mid_neck() {
        let a0 = real_mat(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let mut e1 = end(Side::RightInfinite, &CMat::zeros(2, 2), &[1.0, 0.0], 1.0);
        e1.neck = NeckPerturbation::new(a0, 1.0, 0.5, &j2()).unwrap();
        let mut e2 = end(Side::LeftInfinite, &CMat::zeros(2, 2), &[1.0, 0.0], 1.0);
        e2.neck = e1.neck.clone();
        let p = GluedProblem::assemble(&e1, &e2, 2.0, 0.02).unwrap();
        for k in 0..=100 {
            let t = 2.75 + 1.5 * k as f64 / 100.0;
            assert_eq!(p.potential_at(1.0 + t).norm(), 0.0);
        }
        let v = p.potential_at(1.5);
        assert!((&v - v.adjoint()).norm() < 1e-15);
        assert!(v.norm() > 0.0);
    }

    #[test]
    fn rotation_constant_glues_exactly() {
        let z = CMat::zeros(2, 2);
        let e1 = end(Side::RightInfinite, &z, &[1.0, 0.0], 0.0);
        let e2 = end(Side::LeftInfinite, &z, &[1.0, 0.0], 0.0);
        let opts = KernelOptions::default();
        let k1 = extended_kernel(&e1, &opts).unwrap();
        let k2 = extended_kernel(&e2, &opts).unwrap();
        let dk = difference_kernel(&k1, &k2, 1e-9).unwrap();
        let p = GluedProblem::assemble(&e1, &e2, 3.0, 0.02).unwrap();
        let rep = glue_basis(&p, &k1, &k2, &dk.k_inf).unwrap();
        assert_eq!(rep.images.len(), 1);
        assert!(rep.residual < 1e-14);
        let v0 = rep.images[0].values[0].clone();
        for v in &rep.images[0].values {
            assert!((v - &v0).norm() < 1e-12);
        }

        // Splitting a constant gives back the constant extension.
        let sp = split_map(&p, &rep.images[0].values, 0.0).unwrap();
        assert!((sp.side1.u_inf() - &v0).norm() < 1e-12);
        assert!(sp.side2.values.iter().all(|v| (v - &v0).norm() < 1e-12));
    }

    #[test]
    fn exponential_glue_is_cut_off() {
        let d = real_mat(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let e1 = end(Side::RightInfinite, &d, &[0.0, 1.0], 0.0);
        let e2 = end(Side::LeftInfinite, &d, &[1.0, 0.0], 0.0);
        let opts = KernelOptions::default();
        let k1 = extended_kernel(&e1, &opts).unwrap();
        let k2 = extended_kernel(&e2, &opts).unwrap();
        let dk = difference_kernel(&k1, &k2, 1e-9).unwrap();
        let mut prev = f64::INFINITY;
        for r in [2.0, 4.0, 6.0] {
            let p = GluedProblem::assemble(&e1, &e2, r, 0.02).unwrap();
            let rep = glue_basis(&p, &k1, &k2, &dk.k_inf).unwrap();
            assert_eq!(rep.images.len(), 2);
            let mid = p.mid_node();
            for im in &rep.images {
                assert_eq!(im.values[mid].norm(), 0.0);
            }
            // Residual bounded by the size of the tail at the cut: sup |phi'| e^{-r}.
            assert!(rep.residual < 3.0 * (-r).exp(), "{}", rep.residual);
            assert!(rep.residual < prev);
            prev = rep.residual;
            assert!(rep.injectivity > 0.9);
        }
    }

    #[test]
    fn residual_matches_finite_differences() {
        let a0 = real_mat(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let mut e1 = end(Side::RightInfinite, &CMat::zeros(2, 2), &[1.0, 0.0], 1.0);
        e1.neck = NeckPerturbation::new(a0, 1.0, 0.5, &j2()).unwrap();
        let mut e2 = end(Side::LeftInfinite, &CMat::zeros(2, 2), &[1.0, 0.0], 1.0);
        e2.neck = e1.neck.clone();
        let opts = KernelOptions {
            ode_step: 0.005,
            ..KernelOptions::default()
        };
        let k1 = extended_kernel(&e1, &opts).unwrap();
        let k2 = extended_kernel(&e2, &opts).unwrap();
        let dk = difference_kernel(&k1, &k2, 1e-9).unwrap();
        let p = GluedProblem::assemble(&e1, &e2, 2.0, 0.005).unwrap();
        let rep = glue_basis(&p, &k1, &k2, &dk.k_inf).unwrap();
        let u = &rep.images[0].values;
        // Centred differences of u' - (D + V-part) u over the whole interval.
        let j = j2();
        let mut s = 0.0;
        for g in 1..p.nodes() - 1 {
            let h = p.cell_length(g);
            let du = (&u[g + 1] - &u[g - 1]) * c(0.5 / h, 0.0);
            let x = p.position(g);
            let gen = &j * p.potential_at(x);
            let r = du - gen * &u[g];
            s += r.norm_squared() * h;
        }
        let fd = s.sqrt();
        assert!(
            (fd - rep.residual).abs() < 0.05 * rep.residual + 1e-4,
            "{fd} vs {}",
            rep.residual
        );
    }
}
