use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;

use caplp_core::field::{read_csv, write_csv, CapField, CapGrid};
use caplp_core::geometry::{ell_at, CapParams};
use caplp_core::solver::{solve_path, SolverSettings};

fn caplp(args: &[&str]) -> i32 {
    let out = Command::new(env!("CARGO_BIN_EXE_caplp")).args(args).arg("--quiet").output().unwrap();
    out.status.code().unwrap()
}

fn config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().into()
}

fn s(p: &Path) -> String {
    p.to_str().unwrap().into()
}

const CAP: &str = "n = 2\nk = 1\np = 1.5\ntheta = 1.0471975511965976\n[grid]\nNbeta = 16\nNphi = 32\n[phi]\nkind = \"cap_manufactured\"\nr = 1.3\n";

#[test]
fn repeated_solves_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "c.toml", CAP);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(caplp(&["solve", "--config", &cfg, "--out", &s(&a)]), 0);
    assert_eq!(caplp(&["solve", "--config", &cfg, "--out", &s(&b)]), 0);
    for f in ["solution.csv", "report.json", "audit.json", "embedding.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.join("report.json")).unwrap()).unwrap();
    assert!(report["reference_error"].as_f64().unwrap() < 5e-3);
}

#[test]
fn command_can_come_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "c.toml", &format!("command = \"solve\"\n{CAP}"));
    assert_eq!(caplp(&["--config", &cfg, "--out", &s(&dir.path().join("o"))]), 0);
    let bare = config(dir.path(), "d.toml", CAP);
    assert_eq!(caplp(&["--config", &bare, "--out", &s(&dir.path().join("o"))]), 1);
}

#[test]
fn grid_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "c.toml", CAP);
    let out = dir.path().join("o");
    assert_eq!(caplp(&["solve", "--config", &cfg, "--grid", "8x16", "--out", &s(&out)]), 0);
    let sol = read_csv(&out.join("solution.csv")).unwrap();
    assert_eq!((sol.grid.n_beta, sol.grid.n_phi), (8, 16));
    assert_eq!(caplp(&["solve", "--config", &cfg, "--grid", "8by16", "--out", &s(&out)]), 1);
}

#[test]
fn single_point_sweep_matches_solve() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "c.toml", CAP);
    let sweep = config(dir.path(), "s.toml", &format!("{CAP}[sweep]\np = [1.5]\n"));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(caplp(&["solve", "--config", &cfg, "--out", &s(&a)]), 0);
    assert_eq!(caplp(&["sweep", "--config", &sweep, "--out", &s(&b)]), 0);
    assert_eq!(
        std::fs::read(a.join("solution.csv")).unwrap(),
        std::fs::read(b.join("member_000").join("solution.csv")).unwrap()
    );
}

#[test]
fn invalid_sweep_member_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = config(dir.path(), "s.toml", &format!("{CAP}[sweep]\np = [1.5, 2.5]\n"));
    let out = dir.path().join("o");
    assert_eq!(caplp(&["sweep", "--config", &sweep, "--out", &s(&out)]), 1);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("sweep_summary.json")).unwrap()).unwrap();
    let rows = summary["rows"].as_array().unwrap();
    assert_eq!(rows[0]["exit_code"], 0);
    assert_eq!(rows[1]["exit_code"], 1);
    assert!(summary["min_height"].as_f64().unwrap() > 0.0);
    assert!(std::fs::read_to_string(out.join("sweep_summary.csv")).unwrap().lines().count() == 3);
}

#[test]
fn full_field_solve_rejects_higher_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "c.toml", &CAP.replace("n = 2", "n = 3"));
    assert_eq!(caplp(&["solve", "--config", &cfg, "--out", &s(&dir.path().join("o"))]), 1);
}

fn oracle_json(out: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("oracle.json")).unwrap()).unwrap()
}

#[test]
fn oracle_recovers_manufactured_profile_in_three_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let text = "n = 3\nk = 2\np = 2.0\ntheta = 1.0\n[grid]\nNbeta = 256\n[phi]\nkind = \"cap_manufactured\"\nr = 0.8\n";
    let cfg = config(dir.path(), "c.toml", text);
    let out = dir.path().join("o");
    assert_eq!(caplp(&["oracle", "--config", &cfg, "--out", &s(&out)]), 0);
    let csv = std::fs::read_to_string(out.join("profile.csv")).unwrap();
    let mut rows = 0;
    for line in csv.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!((v[1] - 0.8 * ell_at(1.0, v[0])).abs() < 1e-4, "{line}");
        rows += 1;
    }
    assert_eq!(rows, 258);
    assert_eq!(oracle_json(&out)["barrier"]["pass"], true);
}

#[test]
fn oracle_bump_passes_audits() {
    let dir = tempfile::tempdir().unwrap();
    // 1 + 0.5 cos(beta)^8 peaks at the pole
    let text = "n = 3\nk = 2\np = 2.0\ntheta = 0.7853981633974483\n[grid]\nNbeta = 256\n[phi]\nkind = \"rotsym_expr\"\ncoeffs = [1.0, 0, 0, 0, 0, 0, 0, 0, 0.5]\n";
    let cfg = config(dir.path(), "c.toml", text);
    let out = dir.path().join("o");
    assert_eq!(caplp(&["oracle", "--config", &cfg, "--out", &s(&out)]), 0);
    let records = oracle_json(&out)["audit"]["records"].as_array().unwrap().clone();
    assert!(records.iter().all(|r| r["pass"] == true));
}

#[test]
fn oracle_reports_gap_to_a_stored_solution() {
    let dir = tempfile::tempdir().unwrap();
    let theta = PI / 4.0;
    let params = CapParams::new(2, 1, 1.5, theta).unwrap();
    let grid = CapGrid::new(32, 64, theta).unwrap();
    let (sol, _) = solve_path(&CapField::from_fn(grid, |b, _| 1.3 - 0.3 * b.cos()), &params, &SolverSettings::default()).unwrap();
    let path: PathBuf = dir.path().join("sol.csv");
    write_csv(&sol, &path).unwrap();
    let text = "n = 2\nk = 1\np = 1.5\ntheta = 0.7853981633974483\n[grid]\nNbeta = 256\nNphi = 8\n[phi]\nkind = \"rotsym_expr\"\ncoeffs = [1.3, -0.3]\n";
    let cfg = config(dir.path(), "c.toml", text);
    let out = dir.path().join("o");
    assert_eq!(caplp(&["oracle", "--config", &cfg, "--solution", &s(&path), "--out", &s(&out)]), 0);
    let gap = oracle_json(&out)["gap"].as_f64().unwrap();
    assert!(gap < 1e-3, "{gap}");
}

#[test]
fn selftest_is_seeded_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(caplp(&["selftest", "--seed", "17", "--out", &s(&a)]), 0);
    assert_eq!(caplp(&["selftest", "--seed", "17", "--out", &s(&b)]), 0);
    let ja = std::fs::read_to_string(a.join("selftest.json")).unwrap();
    assert_eq!(ja, std::fs::read_to_string(b.join("selftest.json")).unwrap());
    assert!(ja.contains("\"seed\": 17"));
}
