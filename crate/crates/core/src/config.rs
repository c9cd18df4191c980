//! JSON experiment configuration. Complex matrices are row-major nested arrays
//! of `[re, im]` pairs.

use serde::{Deserialize, Serialize};

use crate::analysis::{SweepOptions, ThresholdSchedule};
use crate::boundary::{BoundaryModel, Violation};
use crate::eigen::EigenOptions;
use crate::ends::{CapPotential, EndModel, Side};
use crate::error::{Error, Result};
use crate::linalg::{c, CMat};
use crate::models::ModelPair;
use crate::necks::NeckPerturbation;
use crate::par::Exec;
use crate::subspaces::{orthonormalize, DEFAULT_RANK_TOL};

pub type MatrixJson = Vec<Vec<[f64; 2]>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub boundary: BoundaryConfig,
    pub end1: EndConfig,
    pub end2: EndConfig,
    #[serde(default)]
    pub sweep: SweepRange,
    #[serde(default)]
    pub threshold: ThresholdConfig,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub eigen: EigenRunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    pub n: usize,
    pub d: MatrixJson,
    pub j: MatrixJson,
    #[serde(default)]
    pub c: Option<MatrixJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapConfig {
    Zero,
    Constant(MatrixJson),
    Samples { knots: Vec<f64>, values: Vec<MatrixJson> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    pub a0: MatrixJson,
    pub lambda: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndConfig {
    pub side: Side,
    #[serde(default)]
    pub cap_length: f64,
    #[serde(default = "zero_cap")]
    pub cap_potential: CapConfig,
    /// `n x k` matrix whose columns span the boundary lagrangian.
    pub lagrangian: MatrixJson,
    #[serde(default)]
    pub perturbation: Option<PerturbationConfig>,
}

fn zero_cap() -> CapConfig {
    CapConfig::Zero
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum SweepRange {
    List { r_list: Vec<f64> },
    Range { r_min: f64, r_max: f64, step: f64 },
}

impl Default for SweepRange {
    fn default() -> Self {
        SweepRange::List {
            r_list: vec![2.0, 4.0, 6.0, 8.0],
        }
    }
}

impl SweepRange {
    pub fn values(&self) -> Result<Vec<f64>> {
        match self {
            SweepRange::List { r_list } => Ok(r_list.clone()),
            SweepRange::Range { r_min, r_max, step } => {
                if !(*step > 0.0) || !(r_max >= r_min) {
                    return Err(Error::Config(format!(
                        "sweep: need step > 0 and r_max >= r_min, got {r_min}..{r_max} step {step}"
                    )));
                }
                let count = ((r_max - r_min) / step + 1e-9).floor() as usize;
                Ok((0..=count).map(|k| r_min + k as f64 * step).collect())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AutoKeyword {
    #[serde(rename = "auto")]
    Auto,
}

/// A number or the string `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AutoOr {
    Value(f64),
    Keyword(AutoKeyword),
}

impl AutoOr {
    pub fn value(self) -> Option<f64> {
        match self {
            AutoOr::Value(v) => Some(v),
            AutoOr::Keyword(_) => None,
        }
    }
}

const AUTO: AutoOr = AutoOr::Keyword(AutoKeyword::Auto);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdConfig {
    pub c0: AutoOr,
    pub delta: AutoOr,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig { c0: AUTO, delta: AUTO }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericsConfig {
    pub ode_step: f64,
    /// `null` picks `min(gamma, pi / L) / 8`.
    pub scan_step: Option<f64>,
    pub bisect_tol: f64,
    /// Largest matching singular value accepted at an eigenvalue.
    pub rank_tol: f64,
    pub kernel_rank_tol: f64,
    pub resid_tol: f64,
    /// `null` picks `10 / max(gamma, 1)`.
    pub split_window: Option<f64>,
    /// `null` picks the depth where `|A|` falls below the kernel rank tolerance.
    pub t_cut: Option<f64>,
    pub fd_oracle: bool,
    pub fd_h: f64,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        let e = EigenOptions::default();
        NumericsConfig {
            ode_step: 0.02,
            scan_step: None,
            bisect_tol: e.bisect_rel,
            rank_tol: e.rank_tol,
            kernel_rank_tol: 1e-9,
            resid_tol: e.resid_tol,
            split_window: None,
            t_cut: None,
            fd_oracle: false,
            fd_h: 0.05,
        }
    }
}

/// Settings of the single-r `eigen` subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EigenRunConfig {
    /// `null` takes the first r of the sweep.
    pub r: Option<f64>,
    /// `null` uses `max(1, w)` with `w` the sweep's window at that r.
    pub window: Option<f64>,
    pub eigvecs: bool,
}

pub fn matrix_from_json(m: &MatrixJson, what: &str) -> Result<CMat> {
    let rows = m.len();
    let cols = m.first().map_or(0, |r| r.len());
    if m.iter().any(|r| r.len() != cols) {
        return Err(Error::Config(format!("{what}: rows have different lengths")));
    }
    if m.iter().flatten().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Config(format!("{what}: entries must be finite")));
    }
    Ok(CMat::from_fn(rows, cols, |i, j| c(m[i][j][0], m[i][j][1])))
}

pub fn matrix_to_json(m: &CMat) -> MatrixJson {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

fn square(m: &MatrixJson, n: usize, what: &str) -> Result<CMat> {
    let x = matrix_from_json(m, what)?;
    if x.shape() != (n, n) {
        return Err(Error::Config(format!(
            "{what}: expected {n}x{n}, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    Ok(x)
}

/// Everything a run needs, resolved from a config.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub end1: EndModel,
    pub end2: EndModel,
    pub r_list: Vec<f64>,
    pub threshold: ThresholdConfig,
    pub numerics: NumericsConfig,
    pub eigen: EigenRunConfig,
}

impl Experiment {
    pub fn schedule(&self) -> Result<ThresholdSchedule> {
        let auto = ThresholdSchedule::auto(&self.end1, &self.end2, self.r_list[0])?;
        let c0 = self.threshold.c0.value().unwrap_or(auto.c0);
        let delta = match self.threshold.delta {
            AutoOr::Value(d) => Some(d),
            AutoOr::Keyword(_) => auto.delta,
        };
        ThresholdSchedule::new(c0, delta)
    }

    pub fn eigen_options(&self, exec: Exec) -> EigenOptions {
        EigenOptions {
            scan_step: self.numerics.scan_step,
            bisect_rel: self.numerics.bisect_tol,
            rank_tol: self.numerics.rank_tol,
            resid_tol: self.numerics.resid_tol,
            exec,
            ..EigenOptions::default()
        }
    }

    pub fn sweep_options(&self, exec: Exec) -> SweepOptions {
        SweepOptions {
            ode_step: self.numerics.ode_step,
            kernel_rank_tol: self.numerics.kernel_rank_tol,
            t_cut: self.numerics.t_cut,
            split_window: self.numerics.split_window,
            eigen: self.eigen_options(exec),
            exec,
        }
    }

    /// Violated invariants of the boundary and both ends.
    pub fn validate(&self) -> Vec<(String, Violation)> {
        let mut out: Vec<(String, Violation)> = Vec::new();
        for (name, e) in [("end1", &self.end1), ("end2", &self.end2)] {
            out.extend(e.validate().into_iter().map(|v| (name.to_string(), v)));
        }
        if self.end1.side != Side::RightInfinite || self.end2.side != Side::LeftInfinite {
            out.push((
                "ends".into(),
                Violation {
                    invariant: "end1 must be right_infinite and end2 left_infinite".into(),
                    defect: 1.0,
                },
            ));
        }
        out
    }
}

fn end_from(cfg: &EndConfig, boundary: &BoundaryModel, what: &str) -> Result<EndModel> {
    let n = boundary.n();
    let cap_potential = match &cfg.cap_potential {
        CapConfig::Zero => CapPotential::Zero,
        CapConfig::Constant(m) => CapPotential::Constant(square(m, n, &format!("{what}.cap_potential"))?),
        CapConfig::Samples { knots, values } => CapPotential::Samples {
            knots: knots.clone(),
            values: values
                .iter()
                .enumerate()
                .map(|(k, m)| square(m, n, &format!("{what}.cap_potential.values[{k}]")))
                .collect::<Result<_>>()?,
        },
    };
    let l = matrix_from_json(&cfg.lagrangian, &format!("{what}.lagrangian"))?;
    if l.nrows() != n {
        return Err(Error::Config(format!(
            "{what}.lagrangian: expected {n} rows, got {}",
            l.nrows()
        )));
    }
    let neck = match &cfg.perturbation {
        None => NeckPerturbation::none(n),
        Some(p) => {
            let a0 = square(&p.a0, n, &format!("{what}.perturbation.a0"))?;
            NeckPerturbation::new(a0, p.lambda, p.amplitude, &boundary.j)
                .map_err(|e| Error::Config(format!("{what}.perturbation: {e}")))?
        }
    };
    Ok(EndModel {
        side: cfg.side,
        cap_length: cfg.cap_length,
        cap_potential,
        lagrangian: orthonormalize(&l, DEFAULT_RANK_TOL),
        neck,
        boundary: boundary.clone(),
    })
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::Config(format!(
                "line {} column {}: field `{path}`: {inner}",
                inner.line(),
                inner.column()
            ))
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Pretty JSON with every default written out.
    pub fn echo(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn build(&self) -> Result<Experiment> {
        let n = self.boundary.n;
        let d = square(&self.boundary.d, n, "boundary.d")?;
        let j = square(&self.boundary.j, n, "boundary.j")?;
        let grading = self
            .boundary
            .c
            .as_ref()
            .map(|m| square(m, n, "boundary.c"))
            .transpose()?;
        let boundary = BoundaryModel::new(d, j, grading);
        let r_list = self.sweep.values()?;
        if r_list.is_empty() {
            return Err(Error::Config("sweep: no r values".into()));
        }
        Ok(Experiment {
            end1: end_from(&self.end1, &boundary, "end1")?,
            end2: end_from(&self.end2, &boundary, "end2")?,
            r_list,
            threshold: self.threshold,
            numerics: self.numerics,
            eigen: self.eigen,
        })
    }

    pub fn from_pair(pair: &ModelPair, r_list: Vec<f64>) -> Self {
        let b = &pair.end1.boundary;
        let end = |e: &EndModel| EndConfig {
            side: e.side,
            cap_length: e.cap_length,
            cap_potential: match &e.cap_potential {
                CapPotential::Zero => CapConfig::Zero,
                CapPotential::Constant(m) => CapConfig::Constant(matrix_to_json(m)),
                CapPotential::Samples { knots, values } => CapConfig::Samples {
                    knots: knots.clone(),
                    values: values.iter().map(matrix_to_json).collect(),
                },
            },
            lagrangian: matrix_to_json(e.lagrangian.basis()),
            perturbation: (!e.neck.is_zero()).then(|| PerturbationConfig {
                a0: matrix_to_json(e.neck.a0()),
                lambda: e.neck.lambda(),
                amplitude: e.neck.amplitude(),
            }),
        };
        ExperimentConfig {
            boundary: BoundaryConfig {
                n: b.n(),
                d: matrix_to_json(&b.d),
                j: matrix_to_json(&b.j),
                c: b.grading.as_ref().map(matrix_to_json),
            },
            end1: end(&pair.end1),
            end2: end(&pair.end2),
            sweep: SweepRange::List { r_list },
            threshold: ThresholdConfig::default(),
            numerics: NumericsConfig::default(),
            eigen: EigenRunConfig::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models;

    #[test]
    fn round_trip_for_builtins() {
        for name in models::BUILTIN_NAMES {
            let cfg = ExperimentConfig::from_pair(&models::builtin(name).unwrap(), vec![2.0, 3.0]);
            let again = ExperimentConfig::parse(&cfg.echo()).unwrap();
            assert_eq!(cfg, again, "{name}");
            let exp = again.build().unwrap();
            assert!(exp.validate().is_empty(), "{name}");
            let m = models::builtin(name).unwrap();
            assert!((exp.end1.lagrangian.basis() - m.end1.lagrangian.basis()).norm() < 1e-15);
            assert_eq!(exp.end2.neck, m.end2.neck);
        }
    }

    #[test]
    fn defaults_are_materialized() {
        let text = r#"{
            "boundary": {"n": 2, "d": [[[0,0],[0,0]],[[0,0],[0,0]]], "j": [[[0,0],[-1,0]],[[1,0],[0,0]]]},
            "end1": {"side": "right_infinite", "lagrangian": [[[1,0]],[[0,0]]]},
            "end2": {"side": "left_infinite", "lagrangian": [[[1,0]],[[0,0]]]}
        }"#;
        let cfg = ExperimentConfig::parse(text).unwrap();
        let echo = cfg.echo();
        for key in [
            "\"ode_step\"",
            "\"r_list\"",
            "\"c0\": \"auto\"",
            "\"cap_potential\": \"zero\"",
            "\"fd_h\"",
        ] {
            assert!(echo.contains(key), "{key} missing from {echo}");
        }
        assert_eq!(ExperimentConfig::parse(&echo).unwrap(), cfg);
        let exp = cfg.build().unwrap();
        assert_eq!(exp.r_list, vec![2.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn errors_name_the_field() {
        let text = r#"{
            "boundary": {"n": 2, "d": [[[0,0],[0,0]],[[0,0],[0,0]]], "j": [[[0,0],[-1,0]],[[1,0],[0,0]]]},
            "end1": {"side": "sideways", "lagrangian": [[[1,0]],[[0,0]]]},
            "end2": {"side": "left_infinite", "lagrangian": [[[1,0]],[[0,0]]]}
        }"#;
        let msg = ExperimentConfig::parse(text).unwrap_err().to_string();
        assert!(msg.contains("end1.side") && msg.contains("line 3"), "{msg}");
        let bad_shape = text
            .replace("sideways", "right_infinite")
            .replace("\"n\": 2", "\"n\": 3");
        let msg = ExperimentConfig::parse(&bad_shape)
            .unwrap()
            .build()
            .unwrap_err()
            .to_string();
        assert!(msg.contains("boundary.d"), "{msg}");
    }

    #[test]
    fn non_skew_j_is_reported() {
        let mut cfg = ExperimentConfig::from_pair(&models::rotation(true), vec![2.0]);
        cfg.boundary.j = vec![vec![[0.0, 0.0], [1.0, 0.0]], vec![[1.0, 0.0], [0.0, 0.0]]];
        let exp = cfg.build().unwrap();
        let v = exp.validate();
        assert!(v.iter().any(|(_, x)| x.invariant.contains("J† = −J") && x.defect > 1.0));
    }

    #[test]
    fn range_and_threshold_values() {
        let r = SweepRange::Range {
            r_min: 2.0,
            r_max: 4.0,
            step: 0.5,
        };
        assert_eq!(r.values().unwrap(), vec![2.0, 2.5, 3.0, 3.5, 4.0]);
        let t: ThresholdConfig = serde_json::from_str(r#"{"c0": 0.1, "delta": "auto"}"#).unwrap();
        assert_eq!(t.c0.value(), Some(0.1));
        assert_eq!(t.delta.value(), None);
    }
}
