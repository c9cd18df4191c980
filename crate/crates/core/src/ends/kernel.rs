//! Extended L2 kernels of one end and their asymptotic traces.

use serde::Serialize;

use super::{propagate_frame, EndGrid, EndModel, Lattice, Side};
use crate::boundary::{default_eig_tol, is_lagrangian, spectral_decompose, LagrangianCheck, SpectralData};
use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_eigen, hstack, null_space, op_norm, CMat, CVec};
use crate::subspaces::{orthonormalize, subspace_intersection, subspace_sum, Frame};

/// Behaviour of a section beyond its last sampled node.
#[derive(Debug, Clone, PartialEq)]
pub enum Tail {
    /// `u_inf + sum exp(-rate * tau) a`, with `tau` the distance past the last node.
    Decaying { u_inf: CVec, modes: Vec<(f64, CVec)> },
    /// The last value repeated forever. Its part off `ker D` counts towards the
    /// norm over `window_nodes` further nodes only.
    Frozen { u_inf: CVec, window_nodes: usize },
}

/// Section of an end sampled from the cap boundary outward, with a tail model.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedSection {
    pub values: Vec<CVec>,
    pub tail: Tail,
}

impl ExtendedSection {
    pub fn last_index(&self) -> usize {
        self.values.len() - 1
    }

    pub fn u_inf(&self) -> &CVec {
        match &self.tail {
            Tail::Decaying { u_inf, .. } | Tail::Frozen { u_inf, .. } => u_inf,
        }
    }

    /// Value at node `j`, using the tail past the sampled range.
    pub fn value(&self, j: usize, grid: &EndGrid) -> CVec {
        if j <= self.last_index() {
            return self.values[j].clone();
        }
        match &self.tail {
            Tail::Frozen { .. } => self.values[self.last_index()].clone(),
            Tail::Decaying { u_inf, modes } => {
                let tau = (j - self.last_index()) as f64 * grid.h_neck;
                let mut v = u_inf.clone();
                for (rate, a) in modes {
                    v += a * c((-rate * tau).exp(), 0.0);
                }
                v
            }
        }
    }

    /// `u - u_inf` at neck node `j`, zero past a frozen window.
    fn deviation(&self, j: usize, grid: &EndGrid) -> CVec {
        if let Tail::Frozen { u_inf, window_nodes } = &self.tail {
            if j > self.last_index() + window_nodes {
                return CVec::zeros(u_inf.len());
            }
        }
        self.value(j, grid) - self.u_inf()
    }

    /// Last node where the deviation is still sampled rather than closed-form.
    fn finite_end(&self) -> usize {
        match &self.tail {
            Tail::Decaying { .. } => self.last_index(),
            Tail::Frozen { window_nodes, .. } => self.last_index() + window_nodes,
        }
    }

    /// Linear combination of sections sharing length and tail rates.
    pub fn combine(sections: &[&ExtendedSection], coeffs: &[crate::linalg::C64]) -> ExtendedSection {
        let first = sections[0];
        let len = first.values.len();
        let n = first.values[0].len();
        let mut values = vec![CVec::zeros(n); len];
        for (s, &w) in sections.iter().zip(coeffs) {
            for (acc, v) in values.iter_mut().zip(&s.values) {
                *acc += v * w;
            }
        }
        let tail = match &first.tail {
            Tail::Decaying { modes, .. } => {
                let mut u = CVec::zeros(n);
                let mut ms: Vec<(f64, CVec)> = modes.iter().map(|(r, _)| (*r, CVec::zeros(n))).collect();
                for (s, &w) in sections.iter().zip(coeffs) {
                    u += s.u_inf() * w;
                    if let Tail::Decaying { modes, .. } = &s.tail {
                        for (acc, (_, a)) in ms.iter_mut().zip(modes) {
                            acc.1 += a * w;
                        }
                    }
                }
                Tail::Decaying { u_inf: u, modes: ms }
            }
            Tail::Frozen { window_nodes, .. } => {
                let mut u = CVec::zeros(n);
                for (s, &w) in sections.iter().zip(coeffs) {
                    u += s.u_inf() * w;
                }
                Tail::Frozen {
                    u_inf: u,
                    window_nodes: *window_nodes,
                }
            }
        };
        ExtendedSection { values, tail }
    }

    /// Pointwise image under a constant matrix.
    pub fn map(&self, m: &CMat) -> ExtendedSection {
        let tail = match &self.tail {
            Tail::Decaying { u_inf, modes } => Tail::Decaying {
                u_inf: m * u_inf,
                modes: modes.iter().map(|(r, a)| (*r, m * a)).collect(),
            },
            Tail::Frozen { u_inf, window_nodes } => Tail::Frozen {
                u_inf: m * u_inf,
                window_nodes: *window_nodes,
            },
        };
        ExtendedSection {
            values: self.values.iter().map(|v| m * v).collect(),
            tail,
        }
    }

    /// `self - sum coeffs_i parts_i` for decaying `parts`, formed from deviations
    /// so that nothing cancels. The result samples out to the last node where any
    /// input is sampled and carries the remaining decaying modes of `parts`.
    pub fn subtract(
        &self,
        parts: &[&ExtendedSection],
        coeffs: &[crate::linalg::C64],
        grid: &EndGrid,
    ) -> ExtendedSection {
        let far = parts
            .iter()
            .map(|p| p.finite_end())
            .fold(self.finite_end(), usize::max)
            .max(grid.cap_cells);
        let mut u_inf = self.u_inf().clone();
        for (p, &w) in parts.iter().zip(coeffs) {
            u_inf -= p.u_inf() * w;
        }
        let values = (0..=far)
            .map(|j| {
                let mut v = &u_inf + self.deviation(j, grid);
                for (p, &w) in parts.iter().zip(coeffs) {
                    v -= p.deviation(j, grid) * w;
                }
                v
            })
            .collect();
        let mut modes = Vec::new();
        let mut push = |s: &ExtendedSection, w: crate::linalg::C64| {
            if let Tail::Decaying { modes: ms, .. } = &s.tail {
                let tau = (far - s.last_index()) as f64 * grid.h_neck;
                for (rate, a) in ms {
                    modes.push((*rate, a * (w * (-rate * tau).exp())));
                }
            }
        };
        push(self, c(1.0, 0.0));
        for (p, &w) in parts.iter().zip(coeffs) {
            push(p, -w);
        }
        ExtendedSection {
            values,
            tail: Tail::Decaying { u_inf, modes },
        }
    }
}

/// Extended L2 inner product: full integrand on the cap, `u - u_inf` along the
/// neck, plus `<u_inf, v_inf>`. Decaying tails are integrated in closed form.
pub fn ex_inner(u: &ExtendedSection, v: &ExtendedSection, grid: &EndGrid) -> crate::linalg::C64 {
    let mut s = c(0.0, 0.0);
    let cap = grid.cap_cells;
    if cap > 0 {
        let mut acc = c(0.0, 0.0);
        for j in 0..=cap {
            let w = if j == 0 || j == cap { 0.5 } else { 1.0 };
            acc += u.value(j, grid).dotc(&v.value(j, grid)) * w;
        }
        s += acc * grid.h_cap;
    }
    let end = u.finite_end().max(v.finite_end()).max(cap);
    if end > cap {
        let mut acc = c(0.0, 0.0);
        for j in cap..=end {
            let w = if j == cap || j == end { 0.5 } else { 1.0 };
            acc += u.deviation(j, grid).dotc(&v.deviation(j, grid)) * w;
        }
        s += acc * grid.h_neck;
    }
    if let (Tail::Decaying { modes: mu, .. }, Tail::Decaying { modes: mv, .. }) = (&u.tail, &v.tail) {
        let du = (end - u.last_index()) as f64 * grid.h_neck;
        let dv = (end - v.last_index()) as f64 * grid.h_neck;
        for (ra, a) in mu {
            for (rb, b) in mv {
                let scale = (-ra * du - rb * dv).exp() / (ra + rb);
                s += a.dotc(b) * scale;
            }
        }
    }
    s + u.u_inf().dotc(v.u_inf())
}

pub fn ex_norm(u: &ExtendedSection, grid: &EndGrid) -> f64 {
    ex_inner(u, u, grid).re.max(0.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelOptions {
    pub ode_step: f64,
    pub rank_tol: f64,
    /// Cut-off depth; chosen from the decay of `A` when absent.
    pub t_cut: Option<f64>,
}

impl Default for KernelOptions {
    fn default() -> Self {
        KernelOptions {
            ode_step: 0.02,
            rank_tol: 1e-9,
            t_cut: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EndKernel {
    pub side: Side,
    pub grid: EndGrid,
    pub spectral: SpectralData,
    pub kappa: usize,
    /// Orthonormal in the extended L2 product.
    pub solutions: Vec<ExtendedSection>,
    pub traces: Frame,
    /// `n x kappa`, column `i` is the asymptotic value of solution `i`.
    pub trace_map: CMat,
    pub t_cut: f64,
    pub trace_error_bound: f64,
    /// Lagrangian check of the traces inside `ker D`.
    pub lagrangian: LagrangianCheck,
    pub unstable_residual: f64,
}

/// Depth beyond which `|A| < rank_tol * max(1, gamma)`, rounded up to 1/4.
pub fn auto_t_cut(end: &EndModel, gamma: f64, rank_tol: f64) -> f64 {
    if end.neck.is_zero() {
        return 1.0;
    }
    let g = if gamma.is_finite() { gamma.max(1.0) } else { 1.0 };
    let t = (end.neck.amplitude() / (rank_tol * g)).ln() / end.neck.lambda();
    Lattice::snap_up(t.max(1.0))
}

pub fn extended_kernel(end: &EndModel, opts: &KernelOptions) -> Result<EndKernel> {
    end.ensure_valid()?;
    let lattice = Lattice::new(opts.ode_step)?;
    let spectral = spectral_decompose(&end.boundary, default_eig_tol(&end.boundary))?;
    let t_cut = match opts.t_cut {
        Some(t) => {
            if !(t > 0.0) {
                return Err(Error::InvalidInput(format!("T_cut must be positive, got {t}")));
            }
            Lattice::snap_up(t)
        }
        None => auto_t_cut(end, spectral.gamma, opts.rank_tol),
    };
    if !end.neck.is_zero() && end.neck.scalar(t_cut) >= 1e-6 {
        return Err(Error::InvalidInput(format!(
            "T_cut = {t_cut} too small: |A(T_cut)| = {:.3e}",
            end.neck.scalar(t_cut)
        )));
    }
    let grid = end.grid(&lattice);
    let chain = end.chain(&lattice, t_cut)?;
    let props = chain.propagators(0.0);
    let path = propagate_frame(end.lagrangian.basis(), &props)?;
    let q_cut = path.frames.last().unwrap();

    let unstable = match end.side {
        Side::RightInfinite => &spectral.positive,
        Side::LeftInfinite => &spectral.negative,
    };
    let half = q_cut.ncols();
    let y_cut = if unstable.is_zero() {
        crate::linalg::identity(half)
    } else {
        let m = unstable.basis().adjoint() * q_cut;
        null_space(&m, opts.rank_tol)
    };
    let kappa = y_cut.ncols();
    let n = end.n();

    let mut solutions = Vec::with_capacity(kappa);
    let mut unstable_residual = 0.0f64;
    if kappa > 0 {
        let cols = path.reconstruct_backward(&y_cut)?;
        for i in 0..kappa {
            let values: Vec<CVec> = cols.iter().map(|m| m.column(i).into_owned()).collect();
            let last = values.last().unwrap().clone();
            let u_inf = spectral.kernel_projector() * &last;
            let mut modes = Vec::new();
            for e in spectral.modes() {
                let a = e.projector() * &last;
                let stable = match end.side {
                    Side::RightInfinite => e.value < 0.0,
                    Side::LeftInfinite => e.value > 0.0,
                };
                if stable {
                    modes.push((e.value.abs(), a));
                } else {
                    unstable_residual = unstable_residual.max(a.norm() / last.norm().max(1e-300));
                }
            }
            solutions.push(ExtendedSection {
                values,
                tail: Tail::Decaying { u_inf, modes },
            });
        }
        solutions = orthonormalize_sections(&solutions, &grid)?;
    }

    let trace_map = if kappa == 0 {
        CMat::zeros(n, 0)
    } else {
        let cols: Vec<CMat> = solutions
            .iter()
            .map(|s| CMat::from_column_slice(n, 1, s.u_inf().as_slice()))
            .collect();
        hstack(&cols.iter().collect::<Vec<_>>())
    };
    let traces = trace_frame(&trace_map, opts.rank_tol);
    let lagrangian = is_lagrangian(&traces, &spectral.kernel, &end.boundary.j)?;

    // Drift of the kernel component past T_cut plus the decaying remainder.
    let mut trace_error_bound = 0.0f64;
    for s in &solutions {
        let sup = s.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let drift = if end.neck.is_zero() {
            0.0
        } else {
            end.neck.scalar(t_cut) / end.neck.lambda() * sup
        };
        let perp = match &s.tail {
            Tail::Decaying { modes, .. } => {
                let r2: f64 = modes.iter().map(|(_, a)| a.norm_squared()).sum();
                if spectral.gamma.is_finite() {
                    (-spectral.gamma * t_cut).exp() * r2.sqrt()
                } else {
                    0.0
                }
            }
            Tail::Frozen { .. } => 0.0,
        };
        trace_error_bound = trace_error_bound.max(drift + perp);
    }

    Ok(EndKernel {
        side: end.side,
        grid,
        spectral,
        kappa,
        solutions,
        traces,
        trace_map,
        t_cut,
        trace_error_bound,
        lagrangian,
        unstable_residual,
    })
}

/// Span of the trace columns; columns below `rank_tol` in norm count as zero.
fn trace_frame(trace_map: &CMat, rank_tol: f64) -> Frame {
    let n = trace_map.nrows();
    let top = op_norm(trace_map);
    if top <= rank_tol.max(1e-12) {
        return Frame::zero(n);
    }
    orthonormalize(trace_map, (rank_tol / top).max(rank_tol))
}

/// Gram matrix in the extended product.
pub fn ex_gram(sections: &[ExtendedSection], grid: &EndGrid) -> CMat {
    let k = sections.len();
    let mut g = CMat::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let v = ex_inner(&sections[i], &sections[j], grid);
            g[(i, j)] = v;
            g[(j, i)] = v.conj();
        }
    }
    g
}

fn orthonormalize_sections(sections: &[ExtendedSection], grid: &EndGrid) -> Result<Vec<ExtendedSection>> {
    let g = ex_gram(sections, grid);
    let (vals, vecs) = hermitian_eigen(&g);
    let top = vals.last().copied().unwrap_or(0.0);
    if !(vals[0] > 1e-14 * top) {
        return Err(Error::Numerical(format!(
            "extended kernel basis is numerically dependent (Gram eigenvalues {:.3e} .. {:.3e})",
            vals[0], top
        )));
    }
    let refs: Vec<&ExtendedSection> = sections.iter().collect();
    Ok((0..sections.len())
        .map(|k| {
            let coeffs: Vec<_> = (0..sections.len())
                .map(|i| vecs[(i, k)] * c(1.0 / vals[k].sqrt(), 0.0))
                .collect();
            ExtendedSection::combine(&refs, &coeffs)
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct DifferenceKernel {
    /// Orthonormal coefficient vectors on the basis of `K1 ⊕ K2`.
    pub k_inf: CMat,
    pub dim_k_inf: usize,
    pub l_sum: Frame,
    pub l_cap: Frame,
    /// `dim K_inf = kappa1 + kappa2 - dim(L1 + L2)`.
    pub consistent: bool,
}

/// Trace mismatch below which two traces count as equal.
pub const TRACE_MATCH_TOL: f64 = 1e-6;

pub fn difference_kernel(k1: &EndKernel, k2: &EndKernel, rank_tol: f64) -> Result<DifferenceKernel> {
    let n = k1.trace_map.nrows();
    if k2.trace_map.nrows() != n || (&k1.spectral.kernel_projector() - k2.spectral.kernel_projector()).norm() > 1e-10 {
        return Err(Error::DimensionMismatch("ends over different boundary models".into()));
    }
    let delta = hstack(&[&k1.trace_map, &(-&k2.trace_map)]);
    let total = k1.kappa + k2.kappa;
    let k_inf = if total == 0 {
        CMat::zeros(0, 0)
    } else {
        null_space(&delta, TRACE_MATCH_TOL)
    };
    let l_sum = subspace_sum(&k1.traces, &k2.traces, rank_tol)?;
    let l_cap = subspace_intersection(&k1.traces, &k2.traces, rank_tol)?;
    let dim_k_inf = k_inf.ncols();
    Ok(DifferenceKernel {
        consistent: dim_k_inf + l_sum.dim() == total,
        k_inf,
        dim_k_inf,
        l_sum,
        l_cap,
    })
}
