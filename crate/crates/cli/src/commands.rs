//! The five subcommands. Each writes its artifacts under the output directory
//! and maps failures to [`CliError`] exit codes.

use std::fs;
use std::path::{Path, PathBuf};

use caplp_core::audit::{embedding_csv, estimates_audit, pde_residual, reconstruct, af_inequality_check, AuditReport};
use caplp_core::continuation::StepRecord;
use caplp_core::field::{boundary_tau_identity_residual, read_csv, write_csv, CapField, CapGrid};
use caplp_core::geometry::{random_capillary_function, CapParams};
use caplp_core::rotsym::{barrier_height_check, solve_rotsym, BarrierReport, RotReport};
use caplp_core::solver::{solve_path, SolveReport};
use caplp_core::symfunc::{newton_maclaurin_check, SymEndo};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{PhiSpec, RunConfig};
use crate::error::CliError;

#[derive(Clone, Debug)]
pub struct Options {
    pub out: PathBuf,
    pub seed: u64,
    pub solution: Option<PathBuf>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn audit_failure(audit: &AuditReport) -> Option<CliError> {
    let names: Vec<&str> = audit.failures().iter().map(|r| r.name.as_str()).collect();
    (!names.is_empty()).then(|| CliError::Audit(names.join(", ")))
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    grid: String,
    phi: &'a PhiSpec,
    /// `max |s - r ell|` for manufactured data.
    reference_error: Option<f64>,
    path_lambda_min: f64,
    report: &'a SolveReport,
}

#[derive(Serialize)]
struct StallOutput<'a> {
    grid: String,
    phi: &'a PhiSpec,
    error: String,
    accepted: &'a [StepRecord],
}

/// Numbers a sweep aggregates from one solve.
#[derive(Clone, Debug, Serialize)]
pub struct SolveSummary {
    pub height: f64,
    pub path_lambda_min: f64,
    pub max_s: f64,
    pub min_s: f64,
    pub reference_error: Option<f64>,
    pub audit_failures: Vec<String>,
}

/// Solve and audit without turning audit failures into errors.
pub fn run_solve(cfg: &RunConfig, out: &Path) -> Result<SolveSummary, CliError> {
    let params = cfg.params()?;
    let grid = cfg.grid()?;
    let settings = cfg.settings();
    let phi = cfg.phi.field(grid, &params)?;
    fs::create_dir_all(out)?;
    log::info!("solving n={} k={} p={} theta={} on {}", params.n, params.k, params.p, params.theta, grid.label());
    let (s, report) = match solve_path(&phi, &params, &settings) {
        Ok(v) => v,
        Err(caplp_core::solver::SolveError::Continuation(e)) => {
            let accepted = match &e {
                caplp_core::continuation::ContinuationError::Stall { accepted, .. } => accepted.as_slice(),
                _ => &[],
            };
            let stall = StallOutput { grid: grid.label(), phi: &cfg.phi, error: e.to_string(), accepted };
            write_json(&out.join("stall.json"), &stall)?;
            return Err(CliError::Stall(e));
        }
        Err(e) => return Err(e.into()),
    };
    log::info!(
        "converged: {} steps, {} rejected, residual {:.2e}, lambda_min {:.3e}",
        report.steps.len(),
        report.rejected_steps,
        report.interior_residual.max(report.robin_residual),
        report.lambda_min
    );
    let reference_error = cfg.phi.exact_solution(grid).map(|e| s.max_abs_diff(&e));
    write_csv(&s, &out.join("solution.csv"))?;
    let output = SolveOutput {
        grid: grid.label(),
        phi: &cfg.phi,
        reference_error,
        path_lambda_min: report.path_lambda_min(),
        report: &report,
    };
    write_json(&out.join("report.json"), &output)?;
    let audit = estimates_audit(&s, &phi, &params).map_err(|e| CliError::Audit(e.to_string()))?;
    write_json(&out.join("audit.json"), &audit)?;
    let geom = reconstruct(&s).map_err(|e| CliError::Audit(e.to_string()))?;
    fs::write(out.join("embedding.csv"), embedding_csv(&geom, &s))?;
    let mut audit_failures: Vec<String> = audit.failures().iter().map(|r| r.name.clone()).collect();
    if !(report.path_lambda_min() > 0.0) {
        audit_failures.push("path_convexity".into());
    }
    Ok(SolveSummary {
        height: audit.height,
        path_lambda_min: report.path_lambda_min(),
        max_s: report.max_s,
        min_s: report.min_s,
        reference_error,
        audit_failures,
    })
}

pub fn cmd_solve(cfg: &RunConfig, opts: &Options) -> Result<SolveSummary, CliError> {
    let summary = run_solve(cfg, &opts.out)?;
    if !summary.audit_failures.is_empty() {
        return Err(CliError::Audit(summary.audit_failures.join(", ")));
    }
    Ok(summary)
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyOutput {
    pub grid: String,
    pub interior_residual: f64,
    pub robin_residual: f64,
    pub tolerance: f64,
    pub audit: AuditReport,
}

/// Residuals and audits of a stored solution.
pub fn cmd_verify(cfg: &RunConfig, opts: &Options) -> Result<VerifyOutput, CliError> {
    let params = cfg.params()?;
    let path = opts.solution.as_ref().ok_or_else(|| CliError::Config("verify needs --solution <csv>".into()))?;
    let s = read_csv(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let grid = s.grid;
    let expected = cfg.grid()?;
    if expected.n_beta != grid.n_beta || expected.n_phi != grid.n_phi || (expected.theta - grid.theta).abs() > 1e-12 {
        return Err(CliError::GridMismatch(format!("solution is {}, config expects {}", grid.label(), expected.label())));
    }
    let phi = cfg.phi.field(grid, &params)?;
    let (interior, robin) = pde_residual(&s, &phi, &params).map_err(|e| CliError::Audit(e.to_string()))?;
    let audit = estimates_audit(&s, &phi, &params).map_err(|e| CliError::Audit(e.to_string()))?;
    let tolerance = cfg.verify_tol();
    let out = VerifyOutput { grid: grid.label(), interior_residual: interior, robin_residual: robin, tolerance, audit };
    fs::create_dir_all(&opts.out)?;
    write_json(&opts.out.join("verify.json"), &out)?;
    log::info!("residuals: interior {interior:.3e}, robin {robin:.3e} (tolerance {tolerance:e})");
    if !(interior <= tolerance && robin <= tolerance) {
        return Err(CliError::Audit(format!("residual {:.3e} exceeds {tolerance:e}", interior.max(robin))));
    }
    if let Some(e) = audit_failure(&out.audit) {
        return Err(e);
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleOutput {
    pub report: RotReport,
    pub barrier: BarrierReport,
    pub audit: AuditReport,
    /// `max |s_2d - s_profile|` over the nodes of a supplied 2-D solution.
    pub gap: Option<f64>,
}

/// The 1-D profile solve for rotationally symmetric data.
pub fn cmd_oracle(cfg: &RunConfig, opts: &Options) -> Result<OracleOutput, CliError> {
    let params = cfg.params()?;
    let phi = cfg.phi.profile(&params).ok_or_else(|| CliError::NotSymmetric("file".into()))?;
    let nodes = cfg.grid.nbeta;
    if nodes < 4 {
        return Err(CliError::Range(format!("profile needs at least 4 nodes, got {nodes}")));
    }
    let gap_field = match &opts.solution {
        Some(path) => {
            let s = read_csv(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            if (s.grid.theta - params.theta).abs() > 1e-12 {
                return Err(CliError::GridMismatch(format!("solution has theta {}, config {}", s.grid.theta, params.theta)));
            }
            Some(s)
        }
        None => None,
    };
    let (profile, report) = solve_rotsym(&phi, &params, nodes, &cfg.settings()).map_err(CliError::from)?;
    let barrier = barrier_height_check(&profile, &params);
    let lifted_grid = CapGrid::new(nodes, 8, params.theta).map_err(|e| CliError::Range(e.to_string()))?;
    let lifted = CapField::from_fn(lifted_grid, |b, _| profile.value(b));
    let phi_lifted = CapField::from_fn(lifted_grid, |b, _| phi(b));
    let audit = estimates_audit(&lifted, &phi_lifted, &params).map_err(|e| CliError::Audit(e.to_string()))?;
    let gap = gap_field.map(|s| {
        let g = s.grid;
        let mut gap: f64 = 0.0;
        for i in 0..=g.n_beta {
            let v = profile.value(g.beta(i));
            for j in 0..g.n_phi {
                gap = gap.max((s.get(i, j) - v).abs());
            }
        }
        gap
    });
    fs::create_dir_all(&opts.out)?;
    fs::write(opts.out.join("profile.csv"), profile.to_csv(&params))?;
    let out = OracleOutput { report, barrier, audit, gap };
    write_json(&opts.out.join("oracle.json"), &out)?;
    if let Some(g) = gap {
        log::info!("cross-check gap {g:.3e}");
    }
    if !out.barrier.pass {
        return Err(CliError::Audit(format!("height barrier margin {:.3e}", out.barrier.margin)));
    }
    if let Some(e) = audit_failure(&out.audit) {
        return Err(e);
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub member: String,
    pub p: f64,
    pub theta: f64,
    pub exit_code: i32,
    pub message: String,
    pub summary: Option<SolveSummary>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    /// Smallest height over converged members.
    pub min_height: Option<f64>,
    pub min_path_lambda: Option<f64>,
    pub max_s: Option<f64>,
}

impl SweepOutput {
    pub fn exit_code(&self) -> i32 {
        self.rows.iter().map(|r| r.exit_code).max().unwrap_or(0)
    }
}

/// Independent solves over the `(p, theta)` lattice, one directory each.
pub fn cmd_sweep(cfg: &RunConfig, opts: &Options) -> Result<SweepOutput, CliError> {
    let members = cfg.sweep_members();
    fs::create_dir_all(&opts.out)?;
    let rows: Vec<SweepRow> = members
        .par_iter()
        .enumerate()
        .map(|(i, m)| {
            let member = format!("member_{i:03}");
            let dir = opts.out.join(&member);
            let result = run_solve(m, &dir);
            let (exit_code, message, summary) = match result {
                Ok(s) if s.audit_failures.is_empty() => (0, "ok".to_string(), Some(s)),
                Ok(s) => (3, format!("audit failed: {}", s.audit_failures.join(", ")), Some(s)),
                Err(e) => (e.code(), e.to_string(), None),
            };
            if exit_code != 0 {
                log::warn!("{member} (p={}, theta={}): {message}", m.p, m.theta);
            }
            SweepRow { member, p: m.p, theta: m.theta, exit_code, message, summary }
        })
        .collect();
    let ok: Vec<&SolveSummary> = rows.iter().filter(|r| r.exit_code == 0).filter_map(|r| r.summary.as_ref()).collect();
    let fold = |f: fn(&SolveSummary) -> f64, min: bool| {
        ok.iter().map(|s| f(s)).reduce(if min { f64::min } else { f64::max })
    };
    let out = SweepOutput {
        min_height: fold(|s| s.height, true),
        min_path_lambda: fold(|s| s.path_lambda_min, true),
        max_s: fold(|s| s.max_s, false),
        rows,
    };
    write_json(&opts.out.join("sweep_summary.json"), &out)?;
    let mut table = String::from("member,p,theta,exit_code,height,path_lambda_min,max_s,min_s\n");
    for r in &out.rows {
        let cols = match &r.summary {
            Some(s) => format!("{:.16e},{:.16e},{:.16e},{:.16e}", s.height, s.path_lambda_min, s.max_s, s.min_s),
            None => ",,,".into(),
        };
        table.push_str(&format!("{},{},{},{},{}\n", r.member, r.p, r.theta, r.exit_code, cols));
    }
    fs::write(opts.out.join("sweep_summary.csv"), table)?;
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct SelftestRecord {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SelftestOutput {
    pub seed: u64,
    pub records: Vec<SelftestRecord>,
}

/// Quick seeded checks of the calculus, the audits and a small solve.
pub fn cmd_selftest(opts: &Options) -> Result<SelftestOutput, CliError> {
    log::info!("selftest seed {}", opts.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut records = Vec::new();
    let mut push = |name: &str, value: f64, threshold: f64, pass: bool| {
        records.push(SelftestRecord { name: name.into(), value, threshold, pass });
    };

    let theta = std::f64::consts::PI / 3.0;
    let params = CapParams::new(2, 1, 1.5, theta).map_err(|e| CliError::Range(e.to_string()))?;
    let grid = CapGrid::new(16, 32, theta).map_err(|e| CliError::Range(e.to_string()))?;
    let spec = PhiSpec::CapManufactured { r: 1.3 };
    let (s, _) = solve_path(&spec.field(grid, &params)?, &params, &Default::default())?;
    let err = s.max_abs_diff(&spec.exact_solution(grid).unwrap());
    push("manufactured_cap_error", err, 5e-3, err <= 5e-3);

    let mut worst_af: f64 = 0.0;
    for _ in 0..10 {
        let a = CapField::sample(grid, &random_capillary_function(theta, 3, 0.08, &mut rng));
        let b = CapField::sample(grid, &random_capillary_function(theta, 3, 0.08, &mut rng));
        let check = af_inequality_check(&a, &b, &params).map_err(|e| CliError::Audit(e.to_string()))?;
        worst_af = worst_af.min(check.margin);
    }
    push("af_margin", worst_af, -1e-8, worst_af >= -1e-8);

    let mut decreasing = true;
    let mut last_ratio = f64::INFINITY;
    for _ in 0..3 {
        let f = random_capillary_function(theta, 3, 0.1, &mut rng);
        let coarse = boundary_tau_identity_residual(&CapField::sample(grid, &f));
        let fine = boundary_tau_identity_residual(&CapField::sample(grid.refined(2), &f));
        decreasing &= fine < coarse;
        last_ratio = last_ratio.min(coarse / fine);
    }
    push("boundary_identity_refinement_ratio", last_ratio, 1.0, decreasing);

    let mut worst_nm = f64::INFINITY;
    for _ in 0..1000 {
        let (x, y, z): (f64, f64, f64) = (rng.gen_range(0.01..3.0), rng.gen_range(0.01..3.0), rng.gen_range(-1.0..1.0));
        let a = SymEndo::from_2x2(x, z * (x * y).sqrt(), y);
        let check = newton_maclaurin_check(&a, 2).map_err(|e| CliError::Audit(e.to_string()))?;
        worst_nm = worst_nm.min(check.margin);
    }
    push("newton_maclaurin_margin", worst_nm, 0.0, worst_nm >= -1e-12);

    let out = SelftestOutput { seed: opts.seed, records };
    fs::create_dir_all(&opts.out)?;
    write_json(&opts.out.join("selftest.json"), &out)?;
    let failed: Vec<&str> = out.records.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
    if !failed.is_empty() {
        return Err(CliError::Audit(failed.join(", ")));
    }
    Ok(out)
}
