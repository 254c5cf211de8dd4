use std::path::PathBuf;
use std::process::ExitCode;

use caplp_cli::config::parse_grid;
use caplp_cli::{cmd_oracle, cmd_selftest, cmd_solve, cmd_sweep, cmd_verify, CliError, Command, Options, RunConfig};
use clap::Parser;

#[derive(Parser, Debug)]
#[command(name = "caplp", version, about = "Capillary L_p Christoffel-Minkowski solver and audits")]
struct Args {
    /// Command to run; defaults to `command` in the config.
    #[arg(value_enum)]
    command: Option<Command>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed for randomized checks.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Grid override, e.g. 64x128.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<(usize, usize)>,
    /// Stored solution CSV for `verify` and `oracle`.
    #[arg(long)]
    solution: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

fn run(args: Args) -> Result<String, CliError> {
    let opts = Options { out: args.out.clone(), seed: args.seed, solution: args.solution.clone() };
    let cfg = match &args.config {
        Some(path) => {
            let mut cfg = RunConfig::load(path)?;
            if let Some((nb, np)) = args.grid {
                cfg.grid.nbeta = nb;
                cfg.grid.nphi = np;
            }
            Some(cfg)
        }
        None => None,
    };
    let command = args
        .command
        .or(cfg.as_ref().and_then(|c| c.command))
        .ok_or_else(|| CliError::Config("no command given on the command line or in the config".into()))?;
    if command == Command::Selftest {
        let out = cmd_selftest(&opts)?;
        return Ok(format!("selftest passed ({} checks, seed {})", out.records.len(), out.seed));
    }
    let cfg = cfg.ok_or_else(|| CliError::Config("--config is required".into()))?;
    match command {
        Command::Solve => {
            let s = cmd_solve(&cfg, &opts)?;
            let mut msg = format!("solved: H = {:.6}, lambda_min along path = {:.3e}", s.height, s.path_lambda_min);
            if let Some(e) = s.reference_error {
                msg.push_str(&format!(", max |s - r ell| = {e:.3e}"));
            }
            Ok(msg)
        }
        Command::Verify => {
            let v = cmd_verify(&cfg, &opts)?;
            Ok(format!("verified: residuals {:.3e} / {:.3e}", v.interior_residual, v.robin_residual))
        }
        Command::Oracle => {
            let o = cmd_oracle(&cfg, &opts)?;
            let mut msg = format!("profile residual {:.3e}, height {:.6}", o.report.residual, o.barrier.height);
            if let Some(g) = o.gap {
                msg.push_str(&format!(", gap to 2-D solution {g:.3e}"));
            }
            Ok(msg)
        }
        Command::Sweep => {
            let s = cmd_sweep(&cfg, &opts)?;
            let failed = s.rows.iter().filter(|r| r.exit_code != 0).count();
            let msg = format!("sweep: {} members, {failed} failed, min H = {:?}", s.rows.len(), s.min_height);
            match s.exit_code() {
                0 => Ok(msg),
                code => Err(CliError::Sweep { code, message: msg }),
            }
        }
        Command::Selftest => unreachable!(),
    }
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = if args.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let quiet = args.quiet;
    match run(args) {
        Ok(msg) => {
            if !quiet {
                println!("{msg}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
