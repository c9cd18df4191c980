//! Neck perturbations, the cutoff profile, slice norms and checkers for the
//! decay estimates on a cylinder.

use serde::Serialize;

use crate::boundary::SpectralData;
use crate::error::{Error, Result};
use crate::linalg::{anticommutator, c, commutator, expm, op_norm, CMat, CVec, C64};

/// Separable decaying perturbation `A(t) = C_A exp(-lambda |t|) A0` with `|A0| = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeckPerturbation {
    a0: CMat,
    lambda: f64,
    amplitude: f64,
}

impl NeckPerturbation {
    /// `A0` is rescaled to unit operator norm. It must anti-commute with `J`.
    pub fn new(a0: CMat, lambda: f64, amplitude: f64, j: &CMat) -> Result<Self> {
        if a0.shape() != j.shape() {
            return Err(Error::DimensionMismatch(format!(
                "A0 is {:?}, J is {:?}",
                a0.shape(),
                j.shape()
            )));
        }
        if !(amplitude >= 0.0) || !amplitude.is_finite() {
            return Err(Error::InvalidInput(format!("amplitude must be >= 0, got {amplitude}")));
        }
        let norm = op_norm(&a0);
        if amplitude == 0.0 || norm == 0.0 {
            return Ok(Self::none(j.nrows()));
        }
        if !(lambda > 0.0) {
            return Err(Error::InvalidInput(format!("decay rate must be > 0, got {lambda}")));
        }
        let a0 = a0 / c(norm, 0.0);
        let defect = op_norm(&anticommutator(j, &a0));
        if defect >= 1e-12 {
            return Err(Error::InvalidInput(format!(
                "A0 must anti-commute with J (defect {defect:.3e})"
            )));
        }
        // B0 = -J A0 must be Hermitian.
        let b0 = -(j * &a0);
        let herm = op_norm(&(&b0 - b0.adjoint()));
        if herm >= 1e-12 {
            return Err(Error::InvalidInput(format!(
                "-J A0 must be Hermitian (defect {herm:.3e})"
            )));
        }
        Ok(NeckPerturbation { a0, lambda, amplitude })
    }

    /// The zero perturbation. Its decay rate is infinite.
    pub fn none(n: usize) -> Self {
        NeckPerturbation {
            a0: CMat::zeros(n, n),
            lambda: f64::INFINITY,
            amplitude: 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.amplitude == 0.0
    }

    pub fn a0(&self) -> &CMat {
        &self.a0
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn scalar(&self, t: f64) -> f64 {
        if self.is_zero() {
            0.0
        } else {
            self.amplitude * (-self.lambda * t.abs()).exp()
        }
    }

    pub fn eval(&self, t: f64) -> CMat {
        &self.a0 * c(self.scalar(t), 0.0)
    }

    /// `eta_r(t) A(t)`.
    pub fn with_cutoff(&self, r: f64, t: f64) -> CMat {
        &self.a0 * c(eval_cutoff(r, t) * self.scalar(t), 0.0)
    }

    /// Hermitian form `B(t) = -J A(t)`.
    pub fn hermitian(&self, j: &CMat, t: f64) -> CMat {
        -(j * self.eval(t))
    }

    /// `B0 = -J A0`.
    pub fn b0(&self, j: &CMat) -> CMat {
        -(j * &self.a0)
    }

    /// Sampled `sup_{[t, t+1]} |A|` against the bound `C_A exp(-lambda |t|)`.
    pub fn decay_check(&self, t: f64, samples: usize) -> (f64, f64) {
        let sup = (0..=samples)
            .map(|k| op_norm(&self.eval(t + k as f64 / samples as f64)))
            .fold(0.0, f64::max);
        (sup, self.scalar(t))
    }

    /// In graded runs `A0` must commute with `C` so that `B0 = -J A0` anti-commutes with it.
    pub fn chirality_defect(&self, cm: &CMat) -> f64 {
        op_norm(&commutator(cm, &self.a0))
    }
}

/// Quintic smoothstep `6x^5 - 15x^4 + 10x^3` clamped to `[0, 1]`.
pub fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * x * (x * (6.0 * x - 15.0) + 10.0)
}

fn smoothstep_prime(x: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return 0.0;
    }
    30.0 * x * x * (x - 1.0) * (x - 1.0)
}

/// Canonical cutoff: 1 on `(-inf, 1/4]`, 0 on `[3/4, inf)`.
pub fn eta(t: f64) -> f64 {
    1.0 - smoothstep((t - 0.25) / 0.5)
}

pub fn eta_prime(t: f64) -> f64 {
    -2.0 * smoothstep_prime((t - 0.25) / 0.5)
}

/// `eta_r(|t|) = eta(|t| - r)`.
pub fn eval_cutoff(r: f64, t: f64) -> f64 {
    eta(t.abs() - r)
}

/// `d/dt eta_r(|t|)`.
pub fn cutoff_derivative(r: f64, t: f64) -> f64 {
    t.signum() * eta_prime(t.abs() - r)
}

/// Uniformly sampled section of the trivial bundle over an interval.
#[derive(Debug, Clone, PartialEq)]
pub struct CylinderSection {
    pub t0: f64,
    pub h: f64,
    pub values: Vec<CVec>,
}

impl CylinderSection {
    pub fn new(t0: f64, h: f64, values: Vec<CVec>) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::InvalidInput(format!("step must be positive, got {h}")));
        }
        if values.len() < 2 {
            return Err(Error::InvalidInput("a section needs at least two nodes".into()));
        }
        Ok(CylinderSection { t0, h, values })
    }

    pub fn from_scalar(t0: f64, h: f64, values: &[C64]) -> Result<Self> {
        Self::new(t0, h, values.iter().map(|&z| CVec::from_element(1, z)).collect())
    }

    pub fn from_fn(t0: f64, h: f64, nodes: usize, f: impl Fn(f64) -> CVec) -> Result<Self> {
        Self::new(t0, h, (0..nodes).map(|k| f(t0 + k as f64 * h)).collect())
    }

    pub fn t_end(&self) -> f64 {
        self.t0 + (self.values.len() - 1) as f64 * self.h
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    /// Index of the node at `t`; `t` must lie on the grid.
    pub fn node(&self, t: f64) -> Result<usize> {
        let x = (t - self.t0) / self.h;
        let k = x.round();
        if (x - k).abs() > 1e-6 || k < 0.0 || k as usize >= self.values.len() {
            return Err(Error::InvalidInput(format!(
                "t = {t} is not a grid node of [{}, {}] with step {}",
                self.t0,
                self.t_end(),
                self.h
            )));
        }
        Ok(k as usize)
    }

    fn nodes_per_unit(&self) -> Result<usize> {
        let m = 1.0 / self.h;
        if (m - m.round()).abs() > 1e-6 {
            return Err(Error::InvalidInput(format!(
                "slice norms need 1/h to be an integer, h = {}",
                self.h
            )));
        }
        Ok(m.round() as usize)
    }

    /// `rho_t(u)`: L2 norm over `[t, t+1]`, trapezoid rule.
    pub fn slice_norm(&self, t: f64) -> Result<f64> {
        let m = self.nodes_per_unit()?;
        let k0 = self.node(t)?;
        if k0 + m >= self.values.len() {
            return Err(Error::InvalidInput(format!(
                "[{t}, {}] leaves the grid ending at {}",
                t + 1.0,
                self.t_end()
            )));
        }
        Ok(self.slice_norm_at(k0, m))
    }

    fn slice_norm_at(&self, k0: usize, m: usize) -> f64 {
        let mut s = 0.0;
        for k in k0..=k0 + m {
            let w = if k == k0 || k == k0 + m { 0.5 } else { 1.0 };
            s += w * self.values[k].norm_squared();
        }
        (s * self.h).sqrt()
    }

    /// `q_{t,L}(u) = sup { rho_s(u) : t <= s, s + 1 <= L }` over grid nodes, `L` the grid end.
    pub fn tail_sup(&self, t: f64) -> Result<f64> {
        let m = self.nodes_per_unit()?;
        let k0 = self.node(t)?;
        let last = self.values.len() - 1;
        if k0 + m > last {
            return Err(Error::InvalidInput(format!("no unit slice starts at or after t = {t}")));
        }
        Ok((k0..=last - m).map(|k| self.slice_norm_at(k, m)).fold(0.0, f64::max))
    }

    /// Pointwise image under a fixed matrix.
    pub fn map(&self, m: &CMat) -> CylinderSection {
        CylinderSection {
            t0: self.t0,
            h: self.h,
            values: self.values.iter().map(|v| m * v).collect(),
        }
    }

    pub fn at(&self, t: f64) -> Result<&CVec> {
        Ok(&self.values[self.node(t)?])
    }
}

/// Both sides of an inequality `lhs <= rhs`. `rhs_stated` is the published
/// form of the bound where it differs from the one that is asserted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Inequality {
    pub lhs: f64,
    pub rhs: f64,
    pub rhs_stated: Option<f64>,
}

impl Inequality {
    pub fn holds(&self, rel: f64) -> bool {
        self.lhs <= self.rhs * (1.0 + rel) + 1e-300
    }

    /// `(rhs - lhs) / max(rhs, lhs)`, negative when violated.
    pub fn margin(&self) -> f64 {
        let scale = self.lhs.abs().max(self.rhs.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.rhs - self.lhs) / scale
        }
    }

    pub fn stated_holds(&self, rel: f64) -> Option<bool> {
        self.rhs_stated.map(|s| self.lhs <= s * (1.0 + rel) + 1e-300)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundKind {
    /// `mu = 0`: increments bounded by the forcing.
    A1,
    /// `mu > 0`: backward bound from `t + n`.
    A2,
    /// `mu < 0`: forward bound from `t`.
    A3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OdeBounds {
    pub kind: BoundKind,
    pub bound: Inequality,
    pub ode_residual: f64,
}

/// Relative consistency tolerance for sampled solutions of `u' = mu u + f`.
pub const ODE_CONSISTENCY_TOL: f64 = 1e-5;

/// `sqrt(int_0^1 exp(-2 mu s) ds)` for `mu > 0`, the Cauchy-Schwarz constant
/// of one unit slice.
pub fn slice_constant(mu: f64) -> f64 {
    if mu == 0.0 {
        1.0
    } else {
        (-(-2.0 * mu).exp_m1() / (2.0 * mu)).sqrt()
    }
}

/// Largest scaled residual of the trapezoidal variation-of-constants step
/// `u_{k+1} = e^{hM} u_k + h/2 (e^{hM} f_k + f_{k+1})`.
fn consistency_residual(u: &CylinderSection, f: &CylinderSection, prop: &CMat) -> f64 {
    let half = c(0.5 * u.h, 0.0);
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for k in 0..u.values.len() - 1 {
        let pred = prop * &u.values[k] + (prop * &f.values[k] + &f.values[k + 1]) * half;
        worst = worst.max((&u.values[k + 1] - pred).norm());
        scale = scale.max(u.values[k].norm()).max(f.values[k].norm());
    }
    scale = scale
        .max(u.values.last().unwrap().norm())
        .max(f.values.last().unwrap().norm());
    if scale == 0.0 {
        0.0
    } else {
        worst / scale
    }
}

fn check_pair(u: &CylinderSection, f: &CylinderSection) -> Result<()> {
    if u.values.len() != f.values.len() || (u.h - f.h).abs() > 1e-14 || (u.t0 - f.t0).abs() > 1e-14 {
        return Err(Error::DimensionMismatch("u and f must share a grid".into()));
    }
    if u.dim() != f.dim() {
        return Err(Error::DimensionMismatch("u and f must have the same fibre".into()));
    }
    Ok(())
}

fn mode_bound(mu: f64, u: &CylinderSection, f: &CylinderSection, t: f64, n: usize) -> Result<(BoundKind, Inequality)> {
    let nf = n as f64;
    let rho_f = |k: f64| f.slice_norm(t + k);
    if mu == 0.0 {
        let lhs = (u.at(t)? - u.at(t + nf)?).norm();
        let mut rhs = 0.0;
        for k in 0..n {
            rhs += rho_f(k as f64)?;
        }
        // Published form: integral of q_{s,L}(f) over [t, t+n], trapezoid on the grid.
        let k0 = f.node(t)?;
        let k1 = f.node(t + nf)?;
        let mut stated = 0.0;
        for k in k0..=k1 {
            let w = if k == k0 || k == k1 { 0.5 } else { 1.0 };
            stated += w * f.tail_sup(f.t0 + k as f64 * f.h)?;
        }
        stated *= f.h;
        Ok((
            BoundKind::A1,
            Inequality {
                lhs,
                rhs,
                rhs_stated: Some(stated),
            },
        ))
    } else if mu > 0.0 {
        let lhs = u.at(t)?.norm();
        let cm = slice_constant(mu);
        let mut sum = 0.0;
        for k in 0..n {
            sum += (-(k as f64) * mu).exp() * rho_f(k as f64)?;
        }
        let decay = (-nf * mu).exp() * u.at(t + nf)?.norm();
        let stated = decay + f.tail_sup(t)? / (mu * (-(-mu).exp_m1()));
        Ok((
            BoundKind::A2,
            Inequality {
                lhs,
                rhs: decay + cm * sum,
                rhs_stated: Some(stated),
            },
        ))
    } else {
        let a = -mu;
        let lhs = u.at(t + nf)?.norm();
        let cm = slice_constant(a);
        let mut sum = 0.0;
        for k in 0..n {
            sum += (-(k as f64) * a).exp() * rho_f((n - 1 - k) as f64)?;
        }
        let decay = (-nf * a).exp() * u.at(t)?.norm();
        let stated = decay + f.tail_sup(t)? / (a * (-(-a).exp_m1()));
        Ok((
            BoundKind::A3,
            Inequality {
                lhs,
                rhs: decay + cm * sum,
                rhs_stated: Some(stated),
            },
        ))
    }
}

/// Scalar (or single-mode) decay bounds for `u' = mu u + f` on a sampled grid.
///
/// The asserted right-hand sides carry the exact Cauchy-Schwarz constant of a
/// unit slice; `rhs_stated` reports the textbook simplification.
pub fn scalar_ode_bounds(
    mu: f64,
    u: &CylinderSection,
    f: &CylinderSection,
    t: f64,
    n_steps: usize,
) -> Result<OdeBounds> {
    check_pair(u, f)?;
    let prop = crate::linalg::identity(u.dim()) * c((mu * u.h).exp(), 0.0);
    let ode_residual = consistency_residual(u, f, &prop);
    if ode_residual > ODE_CONSISTENCY_TOL {
        return Err(Error::OdeResidual {
            residual: ode_residual,
            tol: ODE_CONSISTENCY_TOL,
        });
    }
    if t + n_steps as f64 + 1.0 > u.t_end() + 1e-9 {
        return Err(Error::InvalidInput(format!(
            "t + n + 1 = {} exceeds the grid end {}",
            t + n_steps as f64 + 1.0,
            u.t_end()
        )));
    }
    let (kind, bound) = mode_bound(mu, u, f, t, n_steps)?;
    Ok(OdeBounds {
        kind,
        bound,
        ode_residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeEstimate {
    pub mu: f64,
    pub bound: Inequality,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeyEstimate {
    /// Kernel component: `|u0(t) - u0(t+n)| <= sum_k rho_{t+k}(f0)`.
    pub key1: Inequality,
    /// Per nonzero eigenvalue of `D`: bound on `rho_{t+n}(u_mu)`.
    pub modes: Vec<ModeEstimate>,
    /// `rho_{t+n}(u^perp)` against the root-sum-square of the per-mode bounds;
    /// `rhs_stated` is the aggregate `e^{-gamma n}(rho_t + rho_{t+2n}) + gamma^{-2} q_t(f)`.
    pub key2: Inequality,
    pub residual: f64,
}

/// Checks the cylinder decay estimates for `u' - D u = f`.
pub fn key_estimate_check(
    u: &CylinderSection,
    f: &CylinderSection,
    spectral: &SpectralData,
    t: f64,
    n_steps: usize,
) -> Result<KeyEstimate> {
    check_pair(u, f)?;
    if !spectral.gamma.is_finite() {
        return Err(Error::InvalidInput("key estimate needs a finite spectral gap".into()));
    }
    let nf = n_steps as f64;
    if t + 2.0 * nf + 1.0 > u.t_end() + 1e-9 {
        return Err(Error::InvalidInput(format!(
            "t + 2n + 1 = {} exceeds the grid end {}",
            t + 2.0 * nf + 1.0,
            u.t_end()
        )));
    }
    let n = u.dim();
    let mut d = CMat::zeros(n, n);
    for e in &spectral.eigenspaces {
        d += e.projector() * c(e.value, 0.0);
    }
    let residual = consistency_residual(u, f, &expm(&(&d * c(u.h, 0.0))));
    if residual > ODE_CONSISTENCY_TOL {
        return Err(Error::OdeResidual {
            residual,
            tol: ODE_CONSISTENCY_TOL,
        });
    }

    let p0 = spectral.kernel_projector();
    let (_, key1) = mode_bound(0.0, &u.map(&p0), &f.map(&p0), t, n_steps)?;

    let mut modes = Vec::new();
    let mut lhs2 = 0.0;
    let mut rhs2 = 0.0;
    for e in spectral.modes() {
        let p = e.projector();
        let um = u.map(&p);
        let fm = f.map(&p);
        let mu = e.value;
        let a = mu.abs();
        let cm = slice_constant(a);
        let geometric = -(-a).exp_m1();
        let lhs = um.slice_norm(t + nf)?;
        let rhs = if mu < 0.0 {
            (-nf * a).exp() * um.slice_norm(t)? + cm * fm.tail_sup(t)? / geometric
        } else {
            (-nf * a).exp() * um.slice_norm(t + 2.0 * nf)? + cm * fm.tail_sup(t + nf)? / geometric
        };
        lhs2 += lhs * lhs;
        rhs2 += rhs * rhs;
        modes.push(ModeEstimate {
            mu,
            bound: Inequality {
                lhs,
                rhs,
                rhs_stated: None,
            },
        });
    }
    let q = crate::linalg::identity(n) - &p0;
    let up = u.map(&q);
    let fp = f.map(&q);
    let g = spectral.gamma;
    let stated = (-g * nf).exp() * (up.slice_norm(t)? + up.slice_norm(t + 2.0 * nf)?) + fp.tail_sup(t)? / (g * g);
    Ok(KeyEstimate {
        key1,
        modes,
        key2: Inequality {
            lhs: lhs2.sqrt(),
            rhs: rhs2.sqrt(),
            rhs_stated: Some(stated),
        },
        residual,
    })
}
