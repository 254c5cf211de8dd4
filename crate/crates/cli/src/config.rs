//! Run configuration read from TOML.

use std::path::{Path, PathBuf};

use caplp_core::continuation::Schedule;
use caplp_core::field::{read_csv, CapField, CapGrid};
use caplp_core::geometry::{ell_at, CapParams, ModelEll};
use caplp_core::solver::SolverSettings;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Solve,
    Verify,
    Oracle,
    Sweep,
    Selftest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(alias = "Nbeta")]
    pub nbeta: usize,
    #[serde(alias = "Nphi", default = "default_nphi")]
    pub nphi: usize,
}

fn default_nphi() -> usize {
    8
}

/// Data `phi` on the cap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhiSpec {
    Constant { value: f64 },
    /// `C(n,k) r^{k+1-p} ell^{1-p}`, whose solution is `r ell`.
    CapManufactured { r: f64 },
    /// `sum_m coeffs[m] cos(beta)^m`.
    RotsymExpr { coeffs: Vec<f64> },
    File { path: PathBuf },
}

impl PhiSpec {
    pub fn is_rotsym(&self) -> bool {
        !matches!(self, PhiSpec::File { .. })
    }

    /// Profile `phi(beta)` for rotationally symmetric kinds.
    pub fn profile(&self, params: &CapParams) -> Option<Box<dyn Fn(f64) -> f64 + Sync>> {
        let params = *params;
        match self.clone() {
            PhiSpec::Constant { value } => Some(Box::new(move |_| value)),
            PhiSpec::CapManufactured { r } => {
                let c = params.binom_nk() * r.powf(params.k as f64 + 1.0 - params.p);
                Some(Box::new(move |b| c * ell_at(params.theta, b).powf(1.0 - params.p)))
            }
            PhiSpec::RotsymExpr { coeffs } => {
                Some(Box::new(move |b: f64| coeffs.iter().rev().fold(0.0, |acc, a| acc * b.cos() + a)))
            }
            PhiSpec::File { .. } => None,
        }
    }

    /// Samples the data on `grid`; files must match it exactly.
    pub fn field(&self, grid: CapGrid, params: &CapParams) -> Result<CapField, CliError> {
        if let PhiSpec::CapManufactured { r } = self {
            let c = params.binom_nk() * r.powf(params.k as f64 + 1.0 - params.p);
            return Ok(CapField::sample(grid, &ModelEll { theta: grid.theta }).map(|l| c * l.powf(1.0 - params.p)));
        }
        if let Some(f) = self.profile(params) {
            return Ok(CapField::from_fn(grid, |b, _| f(b)));
        }
        let PhiSpec::File { path } = self else { unreachable!() };
        let field = read_csv(path).map_err(|e| CliError::Config(format!("phi file {}: {e}", path.display())))?;
        if field.grid.n_beta != grid.n_beta || field.grid.n_phi != grid.n_phi || (field.grid.theta - grid.theta).abs() > 1e-12 {
            return Err(CliError::GridMismatch(format!("phi file is {}, run grid is {}", field.grid.label(), grid.label())));
        }
        Ok(field)
    }

    /// Reference solution `r ell` when it is known.
    pub fn exact_solution(&self, grid: CapGrid) -> Option<CapField> {
        match self {
            PhiSpec::CapManufactured { r } => Some(CapField::sample(grid, &ModelEll { theta: grid.theta }).map(|l| r * l)),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub dt0: Option<f64>,
    pub dt_max: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub solve: Option<f64>,
    pub cone: Option<f64>,
    pub dt_min: Option<f64>,
    /// Residual threshold for `verify`.
    pub verify: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub p: Vec<f64>,
    #[serde(default)]
    pub theta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub n: usize,
    pub k: usize,
    pub p: f64,
    pub theta: f64,
    pub grid: GridSpec,
    pub phi: PhiSpec,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub sweep: Option<SweepSpec>,
}

pub const DEFAULT_VERIFY_TOL: f64 = 1e-2;

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads a config; a relative data file path is taken relative to the
    /// config's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if let PhiSpec::File { path: p } = &mut cfg.phi {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn params(&self) -> Result<CapParams, CliError> {
        CapParams::new(self.n, self.k, self.p, self.theta).map_err(|e| CliError::Range(e.to_string()))
    }

    pub fn grid(&self) -> Result<CapGrid, CliError> {
        CapGrid::new(self.grid.nbeta, self.grid.nphi, self.theta).map_err(|e| CliError::Range(e.to_string()))
    }

    pub fn settings(&self) -> SolverSettings {
        let d = SolverSettings::default();
        let s = Schedule::default();
        SolverSettings {
            tol_solve: self.tolerances.solve.unwrap_or(d.tol_solve),
            delta_cone: self.tolerances.cone.unwrap_or(d.delta_cone),
            schedule: Schedule {
                dt0: self.schedule.dt0.unwrap_or(s.dt0),
                dt_max: self.schedule.dt_max.unwrap_or(s.dt_max),
                dt_min: self.tolerances.dt_min.unwrap_or(s.dt_min),
                ..s
            },
            max_newton: d.max_newton,
        }
    }

    pub fn verify_tol(&self) -> f64 {
        self.tolerances.verify.unwrap_or(DEFAULT_VERIFY_TOL)
    }

    /// Every member of the sweep lattice, `p` varying fastest.
    pub fn sweep_members(&self) -> Vec<RunConfig> {
        let spec = self.sweep.clone().unwrap_or_default();
        let ps = if spec.p.is_empty() { vec![self.p] } else { spec.p };
        let thetas = if spec.theta.is_empty() { vec![self.theta] } else { spec.theta };
        let mut out = Vec::new();
        for &theta in &thetas {
            for &p in &ps {
                out.push(RunConfig { p, theta, sweep: None, command: Some(Command::Solve), ..self.clone() });
            }
        }
        out
    }
}

/// Parses `NbxNp`.
pub fn parse_grid(text: &str) -> Result<(usize, usize), String> {
    let (a, b) = text.split_once(['x', 'X']).ok_or_else(|| format!("grid `{text}` is not of the form NbetaxNphi"))?;
    let nb = a.trim().parse().map_err(|_| format!("bad Nbeta in `{text}`"))?;
    let np = b.trim().parse().map_err(|_| format!("bad Nphi in `{text}`"))?;
    Ok((nb, np))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
n = 2
k = 1
p = 1.5
theta = 1.0471975511965976

[grid]
Nbeta = 32
Nphi = 64

[phi]
kind = "cap_manufactured"
r = 1.3
"#;

    #[test]
    fn parses_basic_config() {
        let cfg = RunConfig::parse(BASIC).unwrap();
        assert_eq!(cfg.grid, GridSpec { nbeta: 32, nphi: 64 });
        assert_eq!(cfg.phi, PhiSpec::CapManufactured { r: 1.3 });
        assert!(cfg.params().is_ok());
        assert_eq!(cfg.settings(), SolverSettings::default());
    }

    #[test]
    fn rejects_unknown_keys_and_kinds() {
        assert!(matches!(RunConfig::parse(&format!("{BASIC}\nbogus = 1\n")), Err(CliError::Config(_))));
        let bad = BASIC.replace("cap_manufactured", "spline");
        assert!(matches!(RunConfig::parse(&bad), Err(CliError::Config(_))));
    }

    #[test]
    fn range_violation_is_reported() {
        let cfg = RunConfig::parse(&BASIC.replace("p = 1.5", "p = 3.0")).unwrap();
        assert!(matches!(cfg.params(), Err(CliError::Range(_))));
    }

    #[test]
    fn polynomial_in_cos_beta() {
        let spec = PhiSpec::RotsymExpr { coeffs: vec![1.3, -0.3] };
        let params = CapParams::new(2, 1, 1.5, 0.8).unwrap();
        let f = spec.profile(&params).unwrap();
        assert!((f(0.5) - (1.0 + 0.3 * (1.0 - 0.5f64.cos()))).abs() < 1e-15);
    }

    #[test]
    fn grid_flag() {
        assert_eq!(parse_grid("64x128"), Ok((64, 128)));
        assert!(parse_grid("64-128").is_err());
    }

    #[test]
    fn sweep_lattice_order() {
        let mut cfg = RunConfig::parse(BASIC).unwrap();
        cfg.sweep = Some(SweepSpec { p: vec![1.2, 1.5], theta: vec![0.5, 0.7] });
        let m = cfg.sweep_members();
        let pairs: Vec<(f64, f64)> = m.iter().map(|c| (c.p, c.theta)).collect();
        assert_eq!(pairs, vec![(1.2, 0.5), (1.5, 0.5), (1.2, 0.7), (1.5, 0.7)]);
    }
}
