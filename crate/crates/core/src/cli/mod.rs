//! Command-line front end: `validate | ends | eigen | sweep | check`.
//!
//! Exit codes: 0 ok, 1 invalid config, 2 numeric failure, 3 failed check.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::analysis::{row_window, run_sweep, SweepReport, ThresholdSchedule};
use crate::boundary::LagrangianCheck;
use crate::check::{self, CheckOptions, CriterionResult};
use crate::config::{matrix_to_json, Experiment, ExperimentConfig, MatrixJson};
use crate::eigen::{eigenvector, fd_oracle, find_eigenvalues, Spectrum};
use crate::ends::{difference_kernel, extended_kernel, EndKernel, KernelOptions, Side};
use crate::error::{Error, Result};
use crate::glue::GluedProblem;
use crate::par::{self, Exec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;
pub const EXIT_CHECK: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "neckglue",
    version,
    about = "Gluing numerics for Dirac-type operators on long necks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads; 1 runs everything sequentially.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the invariants of a config and report every violation.
    Validate(ConfigArgs),
    /// Extended kernels and trace spaces of both ends; writes ends.json.
    Ends(RunArgs),
    /// Eigenvalues at a single r; writes spectrum.csv and optionally eigvecs.csv.
    Eigen(EigenArgs),
    /// Sweep over r; writes sweep.csv and report.json.
    Sweep(RunArgs),
    /// Run the built-in regression criteria.
    Check(CheckArgs),
}

#[derive(Debug, Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EigenArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Also compare against the finite-difference pencil; writes fd_spectrum.csv.
    #[arg(long)]
    fd_oracle: bool,
}

#[derive(Debug, Args)]
struct CheckArgs {
    /// Seed of the randomized suites.
    #[arg(long, default_value_t = CheckOptions::default().seed)]
    seed: u64,
    /// Writes check.json here when given.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Subset of criteria, e.g. `--only 1,3`.
    #[arg(long, value_delimiter = ',')]
    only: Vec<u8>,
}

/// Parses `argv` (including the program name), runs, and returns the exit code.
pub fn main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let exec = match cli.jobs {
        Some(1) => Exec::Sequential,
        Some(0) => {
            eprintln!("error: --jobs must be positive");
            return EXIT_INVALID;
        }
        Some(n) => {
            par::configure_threads(n);
            Exec::Parallel
        }
        None => Exec::Parallel,
    };
    let out = match cli.command {
        Command::Validate(a) => validate(&a.config),
        Command::Ends(a) => ends(&a, exec),
        Command::Eigen(a) => eigen(&a, exec),
        Command::Sweep(a) => sweep(&a, exec),
        Command::Check(a) => run_check(&a, exec),
    };
    match out {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidInput(_) | Error::Json(_) | Error::DimensionMismatch { .. } => EXIT_INVALID,
        _ => EXIT_NUMERIC,
    }
}

/// 17 significant digits, enough to round-trip every double.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

/// Loads and builds a config; `Err` carries the printed report for exit 1.
fn load(path: &Path) -> std::result::Result<(ExperimentConfig, Experiment), String> {
    let cfg = ExperimentConfig::load(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let exp = cfg.build().map_err(|e| format!("{}: {e}", path.display()))?;
    let violations = exp.validate();
    if violations.is_empty() {
        Ok((cfg, exp))
    } else {
        let mut s = format!("{}: {} violated invariant(s)\n", path.display(), violations.len());
        for (who, v) in &violations {
            let _ = writeln!(s, "  {who}: {} (defect {:.3e})", v.invariant, v.defect);
        }
        Err(s)
    }
}

macro_rules! load_or_exit {
    ($path:expr) => {
        match load($path) {
            Ok(x) => x,
            Err(msg) => {
                eprint!("{msg}");
                if !msg.ends_with('\n') {
                    eprintln!();
                }
                return Ok(EXIT_INVALID);
            }
        }
    };
}

fn validate(path: &Path) -> Result<i32> {
    let (_, exp) = load_or_exit!(path);
    println!(
        "{}: valid (n = {}, r in [{}, {}], {} values)",
        path.display(),
        exp.end1.n(),
        exp.r_list[0],
        exp.r_list[exp.r_list.len() - 1],
        exp.r_list.len()
    );
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct EndSummary {
    side: Side,
    kappa: usize,
    trace_dim: usize,
    /// Column `i` is the asymptotic value of kernel solution `i`.
    trace_map: MatrixJson,
    traces: MatrixJson,
    lagrangian: LagrangianCheck,
    t_cut: f64,
    trace_error_bound: f64,
    unstable_residual: f64,
}

impl EndSummary {
    fn new(k: &EndKernel) -> Self {
        EndSummary {
            side: k.side,
            kappa: k.kappa,
            trace_dim: k.traces.dim(),
            trace_map: matrix_to_json(&k.trace_map),
            traces: matrix_to_json(k.traces.basis()),
            lagrangian: k.lagrangian,
            t_cut: k.t_cut,
            trace_error_bound: k.trace_error_bound,
            unstable_residual: k.unstable_residual,
        }
    }
}

#[derive(Serialize)]
struct EndsReport {
    gamma: f64,
    kernel_dim: usize,
    end1: EndSummary,
    end2: EndSummary,
    dim_lsum: usize,
    dim_lcap: usize,
    dim_k_inf: usize,
    /// `dim K_inf = kappa1 + kappa2 - dim(L1 + L2)`.
    consistent: bool,
    warnings: Vec<String>,
}

fn ends(args: &RunArgs, _exec: Exec) -> Result<i32> {
    let (_, exp) = load_or_exit!(&args.config);
    let kopts = KernelOptions {
        ode_step: exp.numerics.ode_step,
        rank_tol: exp.numerics.kernel_rank_tol,
        t_cut: exp.numerics.t_cut,
    };
    let k1 = extended_kernel(&exp.end1, &kopts)?;
    let k2 = extended_kernel(&exp.end2, &kopts)?;
    let diff = difference_kernel(&k1, &k2, exp.numerics.kernel_rank_tol)?;
    let report = EndsReport {
        gamma: k1.spectral.gamma,
        kernel_dim: k1.spectral.kernel.dim(),
        end1: EndSummary::new(&k1),
        end2: EndSummary::new(&k2),
        dim_lsum: diff.l_sum.dim(),
        dim_lcap: diff.l_cap.dim(),
        dim_k_inf: diff.dim_k_inf,
        consistent: diff.consistent,
        warnings: k1.spectral.warnings.clone(),
    };
    let path = args.out.join("ends.json");
    write_atomic(&path, &to_json(&report))?;
    println!(
        "kappa1 = {}, kappa2 = {}, dim K_inf = {}, lagrangian defects {:.2e} / {:.2e} -> {}",
        k1.kappa,
        k2.kappa,
        diff.dim_k_inf,
        k1.lagrangian.defect,
        k2.lagrangian.defect,
        path.display()
    );
    Ok(EXIT_OK)
}

/// `r` and scan window of the `eigen` subcommand.
fn eigen_setup(exp: &Experiment, schedule: &ThresholdSchedule) -> Result<(f64, f64)> {
    let r = exp.eigen.r.unwrap_or(exp.r_list[0]);
    let window = match exp.eigen.window {
        Some(w) => w,
        None => {
            let problem = GluedProblem::assemble(&exp.end1, &exp.end2, r, exp.numerics.ode_step)?;
            row_window(schedule.threshold(r), problem.spectral.gamma, problem.total_length).max(1.0)
        }
    };
    Ok((r, window))
}

fn spectrum_csv(spec: &Spectrum, residuals: &[Option<f64>]) -> String {
    let mut s = String::from("lambda,multiplicity,residual\n");
    for (e, res) in spec.eigenvalues.iter().zip(residuals) {
        let _ = writeln!(s, "{},{},{}", fmt_f64(e.lambda), e.multiplicity, fmt_opt(*res));
    }
    s
}

fn eigen(args: &EigenArgs, exec: Exec) -> Result<i32> {
    let (_, exp) = load_or_exit!(&args.run.config);
    let schedule = exp.schedule()?;
    let (r, window) = eigen_setup(&exp, &schedule)?;
    let problem = GluedProblem::assemble(&exp.end1, &exp.end2, r, exp.numerics.ode_step)?;
    let opts = crate::eigen::EigenOptions {
        window,
        ..exp.eigen_options(exec)
    };
    let spec = find_eigenvalues(&problem, &opts)?;
    for w in &spec.warnings {
        eprintln!("warning: {w}");
    }
    let pairs: Vec<Result<crate::eigen::EigenPair>> = par::map(exec, &spec.eigenvalues, |e| {
        eigenvector(&problem, e.lambda, e.multiplicity, &opts)
    });
    let mut failed = false;
    let residuals: Vec<Option<f64>> = pairs
        .iter()
        .zip(&spec.eigenvalues)
        .map(|(p, e)| match p {
            Ok(p) => p.residuals.iter().cloned().reduce(f64::max),
            Err(err) => {
                eprintln!("warning: eigenvector at lambda = {}: {err}", fmt_f64(e.lambda));
                failed = true;
                None
            }
        })
        .collect();
    write_atomic(&args.run.out.join("spectrum.csv"), &spectrum_csv(&spec, &residuals))?;

    if exp.eigen.eigvecs {
        let ts = problem.positions();
        let ok: Vec<&crate::eigen::EigenPair> = pairs.iter().filter_map(|p| p.as_ref().ok()).collect();
        let n = problem.n();
        let mut s = String::from("t");
        let mut idx = 0;
        for p in &ok {
            for _ in &p.vectors {
                for k in 0..n {
                    let _ = write!(s, ",psi{idx}_{k}_re,psi{idx}_{k}_im");
                }
                idx += 1;
            }
        }
        s.push('\n');
        for (g, t) in ts.iter().enumerate() {
            s.push_str(&fmt_f64(*t));
            for p in &ok {
                for v in &p.vectors {
                    for z in v[g].iter() {
                        let _ = write!(s, ",{},{}", fmt_f64(z.re), fmt_f64(z.im));
                    }
                }
            }
            s.push('\n');
        }
        write_atomic(&args.run.out.join("eigvecs.csv"), &s)?;
    }

    if args.fd_oracle || exp.numerics.fd_oracle {
        let fd = fd_oracle(&problem, exp.numerics.fd_h, window)?;
        let flat = spec.flat();
        let mut s = String::from("lambda,nearest_shooting,difference\n");
        for &l in &fd.eigenvalues {
            let near = flat
                .iter()
                .cloned()
                .min_by(|a, b| (a - l).abs().total_cmp(&(b - l).abs()));
            let _ = writeln!(
                s,
                "{},{},{}",
                fmt_f64(l),
                fmt_opt(near),
                fmt_opt(near.map(|x| (x - l).abs()))
            );
        }
        write_atomic(&args.run.out.join("fd_spectrum.csv"), &s)?;
        println!(
            "fd oracle: h = {}, {} unknowns, {} eigenvalues in the window",
            fd.h,
            fd.unknowns,
            fd.eigenvalues.len()
        );
    }

    println!(
        "r = {r}, L = {}, window {:.4}: {} eigenvalue(s) -> {}",
        problem.total_length,
        window,
        spec.flat().len(),
        args.run.out.join("spectrum.csv").display()
    );
    Ok(if failed { EXIT_NUMERIC } else { EXIT_OK })
}

pub fn sweep_csv(report: &SweepReport) -> String {
    let mut s = String::from(
        "r,dim_ktilde,kappa1,kappa2,dim_Lsum,dim_Lcap,lambda_min_abs,exactness_gap,glue_residual_max,graded_even,graded_odd\n",
    );
    for row in &report.rows {
        let (ge, go) = row.graded.as_ref().map_or((String::new(), String::new()), |g| {
            (g.ktilde.even.to_string(), g.ktilde.odd.to_string())
        });
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            fmt_f64(row.r),
            row.dim_ktilde,
            row.kappa1,
            row.kappa2,
            row.dim_lsum,
            row.dim_lcap,
            fmt_opt(row.lambda_min_abs),
            fmt_opt(row.exactness_gap()),
            fmt_opt(row.glue_residual_max),
            ge,
            go
        );
    }
    s
}

#[derive(Serialize)]
struct SweepJson<'a> {
    /// `"pass"` when the dimension ledger holds at the largest r.
    ledger: &'static str,
    r0: R0s,
    #[serde(flatten)]
    report: &'a SweepReport,
    config: &'a ExperimentConfig,
}

#[derive(Serialize)]
struct R0s {
    stabilization: Option<f64>,
    exactness_monotone: Option<f64>,
    schedule_dominates_from: f64,
}

fn sweep(args: &RunArgs, exec: Exec) -> Result<i32> {
    let (cfg, exp) = load_or_exit!(&args.config);
    let schedule = exp.schedule()?;
    let report = run_sweep(&exp.end1, &exp.end2, &schedule, &exp.r_list, &exp.sweep_options(exec))?;
    write_atomic(&args.out.join("sweep.csv"), &sweep_csv(&report))?;
    let pass = report.verdicts.ledger.is_some_and(|l| l.pass);
    let json = SweepJson {
        ledger: if pass { "pass" } else { "fail" },
        r0: R0s {
            stabilization: report.verdicts.stabilization_r0,
            exactness_monotone: report.verdicts.exactness_monotone_r0,
            schedule_dominates_from: schedule.r_min,
        },
        report: &report,
        config: &cfg,
    };
    write_atomic(&args.out.join("report.json"), &to_json(&json))?;
    let mut failed = false;
    for row in &report.rows {
        if let Some(e) = &row.error {
            eprintln!("error at r = {}: {e}", row.r);
            failed = true;
        }
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "{} rows, dim K_inf = {}, ledger {} -> {}",
        report.rows.len(),
        report.dim_k_inf,
        json.ledger,
        args.out.join("sweep.csv").display()
    );
    Ok(if failed { EXIT_NUMERIC } else { EXIT_OK })
}

/// Wall-clock limit for the whole check.
pub const CHECK_BUDGET_SECONDS: f64 = 180.0;

#[derive(Serialize)]
struct CheckJson<'a> {
    seed: u64,
    seconds: f64,
    pass: bool,
    criteria: &'a [CriterionResult],
}

fn run_check(args: &CheckArgs, exec: Exec) -> Result<i32> {
    let opts = CheckOptions { seed: args.seed, exec };
    let ids: Vec<u8> = if args.only.is_empty() {
        (1..=check::NAMES.len() as u8).collect()
    } else {
        args.only.clone()
    };
    if let Some(bad) = ids.iter().find(|&&i| i == 0 || i as usize > check::NAMES.len()) {
        return Err(Error::InvalidInput(format!("no criterion {bad}")));
    }
    let start = Instant::now();
    let mut results = Vec::with_capacity(ids.len());
    for id in ids {
        let r = check::run_criterion(id, &opts);
        println!(
            "[{}] {} {} ({:.2} s): {}",
            r.id,
            if r.pass { "PASS" } else { "FAIL" },
            r.name,
            r.seconds,
            r.detail
        );
        results.push(r);
    }
    let seconds = start.elapsed().as_secs_f64();
    let within = seconds < CHECK_BUDGET_SECONDS;
    let pass = within && results.iter().all(|r| r.pass);
    println!(
        "{} of {} criteria passed in {seconds:.1} s (budget {CHECK_BUDGET_SECONDS} s)",
        results.iter().filter(|r| r.pass).count(),
        results.len()
    );
    if let Some(dir) = &args.out {
        let json = CheckJson {
            seed: args.seed,
            seconds,
            pass,
            criteria: &results,
        };
        write_atomic(&dir.join("check.json"), &to_json(&json))?;
    }
    Ok(if pass { EXIT_OK } else { EXIT_CHECK })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_with_17_digits() {
        for x in [0.1, std::f64::consts::PI / 11.0, -1.1205592875077343e-8, 0.0, 1e300] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("a.csv");
        write_atomic(&p, "one").unwrap();
        write_atomic(&p, "two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn bad_arguments_exit_one() {
        assert_eq!(main(["neckglue", "sweep"]), EXIT_INVALID);
        assert_eq!(main(["neckglue", "check", "--only", "12"]), EXIT_INVALID);
    }
}
