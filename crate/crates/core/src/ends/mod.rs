//! Manifolds with one cylindrical end: a cap interval with a lagrangian
//! boundary condition, followed by a half-infinite neck.
//!
//! A right end lives on `[-T_c, 0] ∪ [0, ∞)` (cap, then neck); a left end on
//! `(-∞, 0] ∪ [0, T_c]`. Lattice indices always start at the cap boundary and
//! run outward along the neck.

pub mod kernel;
pub mod propagate;

use serde::{Deserialize, Serialize};

use crate::boundary::{lagrangian_defect_full, BoundaryModel, Violation};
use crate::error::{Error, Result};
use crate::linalg::{anticommutator, c, op_norm, CMat};
use crate::necks::NeckPerturbation;
use crate::subspaces::{gap, Frame};

pub use kernel::{
    difference_kernel, ex_inner, ex_norm, extended_kernel, DifferenceKernel, EndKernel, ExtendedSection, KernelOptions,
    Tail,
};
pub use propagate::{free_propagator, propagate, propagate_frame, Cell, CellPotential, Chain, FramePath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    RightInfinite,
    LeftInfinite,
}

impl Side {
    /// Direction of the neck in the end's own coordinate.
    pub fn sign(self) -> f64 {
        match self {
            Side::RightInfinite => 1.0,
            Side::LeftInfinite => -1.0,
        }
    }
}

/// Hermitian potential on the cap, in the end's own coordinate.
#[derive(Debug, Clone, PartialEq)]
pub enum CapPotential {
    Zero,
    Constant(CMat),
    /// Piecewise-linear through `(knot, value)` pairs, constant beyond the ends.
    Samples {
        knots: Vec<f64>,
        values: Vec<CMat>,
    },
}

impl CapPotential {
    pub fn eval(&self, t: f64, n: usize) -> CMat {
        match self {
            CapPotential::Zero => CMat::zeros(n, n),
            CapPotential::Constant(b) => b.clone(),
            CapPotential::Samples { knots, values } => {
                if t <= knots[0] {
                    return values[0].clone();
                }
                for k in 1..knots.len() {
                    if t <= knots[k] {
                        let w = (t - knots[k - 1]) / (knots[k] - knots[k - 1]);
                        return &values[k - 1] * c(1.0 - w, 0.0) + &values[k] * c(w, 0.0);
                    }
                }
                values.last().unwrap().clone()
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        !matches!(self, CapPotential::Samples { .. })
    }

    fn matrices(&self) -> Vec<&CMat> {
        match self {
            CapPotential::Zero => Vec::new(),
            CapPotential::Constant(b) => vec![b],
            CapPotential::Samples { values, .. } => values.iter().collect(),
        }
    }
}

/// Grid resolution shared by ends and glued problems.
///
/// The neck step divides 1/4, so integer and quarter-integer offsets
/// (cutoff breakpoints, freeze slices, unit slices) are nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice {
    pub ode_step: f64,
    pub per_quarter: usize,
}

impl Lattice {
    pub fn new(ode_step: f64) -> Result<Self> {
        if !(ode_step > 0.0 && ode_step <= 0.25) {
            return Err(Error::InvalidInput(format!(
                "ode step must lie in (0, 1/4], got {ode_step}"
            )));
        }
        Ok(Lattice {
            ode_step,
            per_quarter: (0.25 / ode_step - 1e-9).ceil().max(1.0) as usize,
        })
    }

    pub fn h_neck(&self) -> f64 {
        0.25 / self.per_quarter as f64
    }

    pub fn nodes_per_unit(&self) -> usize {
        4 * self.per_quarter
    }

    pub fn cap_cells(&self, cap_length: f64) -> usize {
        if cap_length == 0.0 {
            0
        } else {
            (cap_length / self.ode_step - 1e-9).ceil().max(1.0) as usize
        }
    }

    /// Number of neck cells in a length that must be a multiple of 1/4.
    pub fn neck_cells(&self, len: f64) -> Result<usize> {
        let q = len * 4.0;
        if (q - q.round()).abs() > 1e-9 || len < 0.0 {
            return Err(Error::InvalidInput(format!(
                "neck length {len} must be a non-negative multiple of 1/4"
            )));
        }
        Ok(q.round() as usize * self.per_quarter)
    }

    /// Rounds a length up to the next multiple of 1/4.
    pub fn snap_up(len: f64) -> f64 {
        (len * 4.0 - 1e-9).ceil() / 4.0
    }
}

/// Node geometry of one end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndGrid {
    pub side: Side,
    pub cap_length: f64,
    pub cap_cells: usize,
    pub h_cap: f64,
    pub h_neck: f64,
}

impl EndGrid {
    pub fn new(side: Side, cap_length: f64, lattice: &Lattice) -> Self {
        let cap_cells = lattice.cap_cells(cap_length);
        EndGrid {
            side,
            cap_length,
            cap_cells,
            h_cap: if cap_cells == 0 {
                0.0
            } else {
                cap_length / cap_cells as f64
            },
            h_neck: lattice.h_neck(),
        }
    }

    /// Distance along the neck of node `j` (negative inside the cap).
    pub fn neck_depth(&self, j: usize) -> f64 {
        if j <= self.cap_cells {
            -((self.cap_cells - j) as f64) * self.h_cap
        } else {
            (j - self.cap_cells) as f64 * self.h_neck
        }
    }

    /// Position of node `j` in the end's own coordinate.
    pub fn position(&self, j: usize) -> f64 {
        self.side.sign() * self.neck_depth(j)
    }

    /// Node at neck depth `depth >= 0`; must lie on the lattice.
    pub fn neck_node(&self, depth: f64) -> Result<usize> {
        let x = depth / self.h_neck;
        if depth < 0.0 || (x - x.round()).abs() > 1e-6 {
            return Err(Error::InvalidInput(format!("neck depth {depth} is not a lattice node")));
        }
        Ok(self.cap_cells + x.round() as usize)
    }

    pub fn cell_length(&self, k: usize) -> f64 {
        if k < self.cap_cells {
            self.h_cap
        } else {
            self.h_neck
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndModel {
    pub side: Side,
    pub cap_length: f64,
    pub cap_potential: CapPotential,
    pub lagrangian: Frame,
    pub neck: NeckPerturbation,
    pub boundary: BoundaryModel,
}

impl EndModel {
    pub fn n(&self) -> usize {
        self.boundary.n()
    }

    /// Hermitian potential `B` at a point of the end's own coordinate.
    pub fn potential_at(&self, x: f64) -> CMat {
        let depth = self.side.sign() * x;
        if depth < 0.0 {
            self.cap_potential.eval(x, self.n())
        } else {
            self.neck.hermitian(&self.boundary.j, depth)
        }
    }

    pub fn grid(&self, lattice: &Lattice) -> EndGrid {
        EndGrid::new(self.side, self.cap_length, lattice)
    }

    /// Cells from the cap boundary to neck depth `neck_len`, walked outward.
    pub fn chain(&self, lattice: &Lattice, neck_len: f64) -> Result<Chain> {
        let grid = self.grid(lattice);
        let n = self.n();
        let neck_cells = lattice.neck_cells(neck_len)?;
        let mut cells = Vec::with_capacity(grid.cap_cells + neck_cells);
        let segments = vec![self.cap_potential.eval(0.0, n), CMat::zeros(n, n)];
        for k in 0..grid.cap_cells + neck_cells {
            let h = grid.cell_length(k);
            let mid_depth = 0.5 * (grid.neck_depth(k) + grid.neck_depth(k + 1));
            let potential = if k < grid.cap_cells {
                if self.cap_potential.is_constant() {
                    CellPotential::Segment(0)
                } else {
                    CellPotential::Local(self.cap_potential.eval(self.side.sign() * mid_depth, n))
                }
            } else if self.neck.is_zero() {
                CellPotential::Segment(1)
            } else {
                CellPotential::Local(self.neck.hermitian(&self.boundary.j, mid_depth))
            };
            cells.push(Cell { h, potential });
        }
        Ok(Chain {
            d: self.boundary.d.clone(),
            j: self.boundary.j.clone(),
            sign: self.side.sign(),
            cells,
            segments,
        })
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = self.boundary.validate();
        let n = self.n();
        let push = |out: &mut Vec<Violation>, name: &str, defect: f64| {
            out.push(Violation {
                invariant: name.to_string(),
                defect,
            })
        };
        if !(self.cap_length >= 0.0) || !self.cap_length.is_finite() {
            push(&mut out, "cap length must be finite and >= 0", 1.0);
        }
        if self.lagrangian.ambient_dim() != n {
            push(&mut out, "boundary lagrangian must live in C^n", 1.0);
            return out;
        }
        if self.neck.a0().shape() != (n, n) {
            push(&mut out, "A0 must be n×n", 1.0);
            return out;
        }
        let defect = lagrangian_defect_full(&self.lagrangian, &self.boundary.j);
        if !(defect < 1e-10) {
            push(&mut out, "boundary subspace must be lagrangian", defect);
        }
        if let CapPotential::Samples { knots, values } = &self.cap_potential {
            if knots.is_empty() || knots.len() != values.len() || knots.windows(2).any(|w| w[1] <= w[0]) {
                push(&mut out, "cap samples need increasing knots, one matrix each", 1.0);
            }
        }
        for b in self.cap_potential.matrices() {
            if b.shape() != (n, n) {
                push(&mut out, "cap potential must be n×n", 1.0);
                continue;
            }
            let herm = op_norm(&(b - b.adjoint()));
            if !(herm < 1e-12 * (1.0 + b.norm())) {
                push(&mut out, "cap potential must be Hermitian", herm);
            }
        }
        if let Some(cm) = &self.boundary.grading {
            let image = self.lagrangian.map(cm, 1e-9);
            let inv = gap(&image, &self.lagrangian).unwrap_or(1.0);
            if !(inv < 1e-8) {
                push(&mut out, "graded boundary lagrangian must be C-invariant", inv);
            }
            let a = self.neck.chirality_defect(cm);
            if !(a < 1e-12) {
                push(&mut out, "A0 must commute with C", a);
            }
            for b in self.cap_potential.matrices() {
                let d = op_norm(&anticommutator(cm, b));
                if !(d < 1e-12 * (1.0 + b.norm())) {
                    push(&mut out, "cap potential must anti-commute with C", d);
                }
            }
        }
        out
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            let msg: Vec<String> = v
                .iter()
                .map(|x| format!("{} (defect {:.3e})", x.invariant, x.defect))
                .collect();
            Err(Error::InvalidInput(msg.join("; ")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::real_mat;

    #[test]
    fn lattice_hits_quarter_points() {
        let l = Lattice::new(0.02).unwrap();
        assert_eq!(l.nodes_per_unit(), 52);
        assert!((l.h_neck() - 1.0 / 52.0).abs() < 1e-15);
        assert_eq!(l.neck_cells(2.75).unwrap(), 143);
        assert!(l.neck_cells(2.3).is_err());
        assert_eq!(l.cap_cells(1.0), 50);
        assert_eq!(l.cap_cells(0.0), 0);
        assert_eq!(Lattice::snap_up(2.01), 2.25);
        assert_eq!(Lattice::snap_up(2.0), 2.0);
    }

    #[test]
    fn grid_positions() {
        let l = Lattice::new(0.05).unwrap();
        let g = EndGrid::new(Side::RightInfinite, 1.0, &l);
        assert_eq!(g.cap_cells, 20);
        assert!((g.position(0) + 1.0).abs() < 1e-15);
        assert_eq!(g.position(20), 0.0);
        assert!((g.position(25) - 0.25).abs() < 1e-15);
        let g = EndGrid::new(Side::LeftInfinite, 1.0, &l);
        assert!((g.position(0) - 1.0).abs() < 1e-15);
        assert!((g.position(25) + 0.25).abs() < 1e-15);
        assert_eq!(g.neck_node(0.5).unwrap(), 30);
    }

    #[test]
    fn cap_samples_interpolate() {
        let a = real_mat(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let b = real_mat(2, 2, &[3.0, 0.0, 0.0, 3.0]);
        let cap = CapPotential::Samples {
            knots: vec![-1.0, 0.0],
            values: vec![a, b],
        };
        assert!((cap.eval(-0.5, 2)[(0, 0)].re - 2.0).abs() < 1e-15);
        assert!((cap.eval(-3.0, 2)[(0, 0)].re - 1.0).abs() < 1e-15);
    }
}
