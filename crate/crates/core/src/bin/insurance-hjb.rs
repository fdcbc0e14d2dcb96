use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use insurance_hjb::cli::{run, RunConfig};

/// Solve the dual HJB variational inequality for optimal proportional
/// insurance and reconstruct the optimal strategy along a claim path.
#[derive(Debug, Parser)]
#[command(name = "insurance-hjb", version)]
struct Args {
    /// TOML configuration file; defaults reproduce the reference experiment.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory (overrides `output.dir`).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Skip the refined second pass.
    #[arg(long)]
    no_refine: bool,

    /// Draw Poisson claims with this seed instead of the configured list.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,

    /// Coarse grid as `N,M` (time steps, state steps).
    #[arg(long, value_name = "N,M", value_parser = parse_grid)]
    grid: Option<(usize, usize)>,

    /// Howard stopping tolerance.
    #[arg(long, value_name = "X")]
    tol: Option<f64>,
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (n, m) = s
        .split_once(',')
        .ok_or_else(|| format!("expected N,M, got `{s}`"))?;
    let n = n.trim().parse().map_err(|e| format!("time steps: {e}"))?;
    let m = m.trim().parse().map_err(|e| format!("state steps: {e}"))?;
    Ok((n, m))
}

fn config_from(args: &Args) -> insurance_hjb::Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = &args.out {
        cfg.output.dir = dir.clone();
    }
    if args.no_refine {
        cfg.grid.refine = false;
    }
    if let Some(seed) = args.seed {
        cfg.experiment.poisson_seed = Some(seed);
        cfg.experiment.claims = None;
    }
    if let Some((n, m)) = args.grid {
        cfg.grid.time_steps = n;
        cfg.grid.state_steps = m;
    }
    if let Some(tol) = args.tol {
        cfg.solver.tol = tol;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = config_from(&args).and_then(|cfg| run(&cfg).map(|out| (cfg, out)));
    match result {
        Ok((cfg, out)) => {
            let d = &out.diagnostics;
            println!(
                "solved {} x {} nodes, {} Howard iterations",
                d.grid.time_steps, d.grid.state_nodes, d.howard.total_iterations
            );
            println!("initial state: j0 = {}, y_hat = {:.6}", out.initial.j0, out.initial.y_hat);
            println!("sde residual: {:.4e}", d.sde_residual);
            for w in &d.warnings {
                println!("warning: {w}");
            }
            println!("artifacts written to {}", cfg.output.dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
