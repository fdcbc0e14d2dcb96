//! Two-pass solve, reconstruction and artifact emission.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::cli::config::RunConfig;
use crate::error::{Error, Result};
use crate::howard::{solve_backward, DiscreteSolution};
use crate::model::{expand, ModelParams};
use crate::policy::{evolve_from, find_initial_state, sde_residual, InitialState, PolicyPath};
use crate::scheme::{ControlSet, Scheme};
use crate::simulate::{integrate_primal, ClaimSchedule};

pub const SURFACE_FILE: &str = "surface.csv";
pub const PATH_FILE: &str = "path.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const THETA_PLOT_FILE: &str = "figure1_theta.dat";
pub const WEALTH_PLOT_FILE: &str = "figure2_wealth.dat";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub grid: GridReport,
    pub howard: HowardReport,
    pub complementarity: ComplementarityReport,
    pub growth: GrowthReport,
    pub initial_state: InitialReport,
    pub sde_residual: f64,
    /// `sup |integrate_primal(θ*) − X*|` over the path.
    pub primal_deviation: f64,
    pub control_sensitivity: SensitivityReport,
    pub warnings: Vec<String>,
    pub runtime_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridReport {
    pub time_steps: usize,
    pub state_nodes: usize,
    pub refined: bool,
    pub refinement_window: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HowardReport {
    pub iterations: Vec<usize>,
    pub total_iterations: usize,
    pub max_iterations: usize,
    pub max_linear_residual: f64,
}

/// Extremes of the two arguments of the discrete inequality over all
/// non-terminal nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComplementarityReport {
    pub min_pde: f64,
    pub min_obstacle: f64,
    pub max_min: f64,
}

/// Margins of `ṽ` inside `Ũ(y) + (α−β)(T−t)y ≤ ṽ ≤ Ũ(y) + (α−β+(β−δπ)₊)(T−t)y`
/// over nodes with `ỹ ∈ [0.05, 0.95]`; negative means a bound is crossed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthReport {
    pub lower_margin: f64,
    pub upper_margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InitialReport {
    pub initial_wealth: f64,
    pub j0: usize,
    pub ytilde0: f64,
    pub y_hat: f64,
    pub wealth_error: f64,
}

/// Layer-0 control minimization repeated with a control set spanning twice
/// the log-range with twice the points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensitivityReport {
    pub range: (f64, f64),
    pub count: usize,
    pub max_value_change: f64,
    pub nodes_with_new_control: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub params: ModelParams,
    pub coarse_initial: Option<InitialState>,
    pub initial: InitialState,
    pub solution: DiscreteSolution,
    pub claims: ClaimSchedule,
    pub path: PolicyPath,
    pub diagnostics: Diagnostics,
}

fn solve(cfg: &RunConfig, params: ModelParams, grid: crate::grid::Grid) -> Result<DiscreteSolution> {
    let controls = cfg.control_set(&params)?;
    let scheme = Scheme::with_jump_rule(params, grid, controls, cfg.solver.jump_rule)?;
    solve_backward(&scheme, &cfg.settings()?)
}

/// Runs the pipeline without touching the file system.
pub fn execute(cfg: &RunConfig) -> Result<RunOutput> {
    let start = Instant::now();
    let params = cfg.validate()?;
    let claims = cfg.claims(&params)?;
    let x = cfg.experiment.initial_wealth;
    let search = cfg.experiment.initial_search;

    let coarse = solve(cfg, params, cfg.coarse_grid()?)?;
    let (solution, coarse_initial) = if cfg.grid.refine {
        let init = find_initial_state(&coarse, x, search)?;
        log::info!("coarse pass: j0 = {}, ŷ = {}", init.j0, init.y_hat);
        let fine = coarse
            .grid()
            .refine_around(init.j0, cfg.grid.halfwidth, cfg.grid.fine_step)?;
        (solve(cfg, params, fine)?, Some(init))
    } else {
        (coarse, None)
    };
    let initial = find_initial_state(&solution, x, search)?;
    let path = evolve_from(&solution, &claims, initial)?;

    let mut warnings = params.warnings();
    if let Some(bad) = path.steps.iter().find(|s| !(-0.05..=1.05).contains(&s.theta)) {
        warnings.push(format!(
            "policy: theta* = {} at t = {} is outside [0, 1] beyond grid error",
            bad.theta, bad.t
        ));
    }
    let diagnostics = Diagnostics {
        grid: grid_report(&solution),
        howard: howard_report(&solution),
        complementarity: complementarity(&solution)?,
        growth: growth_margins(&solution)?,
        initial_state: InitialReport {
            initial_wealth: x,
            j0: initial.j0,
            ytilde0: solution.grid().states()[initial.j0],
            y_hat: initial.y_hat,
            wealth_error: initial.wealth_error,
        },
        sde_residual: sde_residual(&path, &params),
        primal_deviation: primal_deviation(&path, &params, &claims, &solution),
        control_sensitivity: control_sensitivity(&solution, cfg)?,
        warnings,
        runtime_seconds: start.elapsed().as_secs_f64(),
    };
    Ok(RunOutput {
        params,
        coarse_initial,
        initial,
        solution,
        claims,
        path,
        diagnostics,
    })
}

/// Runs the pipeline and writes every artifact into `cfg.output.dir`.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    let out = execute(cfg)?;
    write_artifacts(&out, &cfg.output.dir)?;
    Ok(out)
}

fn grid_report(sol: &DiscreteSolution) -> GridReport {
    let g = sol.grid();
    GridReport {
        time_steps: g.time_steps(),
        state_nodes: g.len(),
        refined: g.refinement().is_some(),
        refinement_window: g.refinement().map(|r| (r.lo, r.hi)),
    }
}

fn howard_report(sol: &DiscreteSolution) -> HowardReport {
    let iterations: Vec<usize> = sol.diagnostics().iter().map(|d| d.iterations).collect();
    HowardReport {
        total_iterations: iterations.iter().sum(),
        max_iterations: iterations.iter().copied().max().unwrap_or(0),
        max_linear_residual: sol
            .diagnostics()
            .iter()
            .map(|d| d.linear_residual)
            .fold(0.0, f64::max),
        iterations,
    }
}

pub fn complementarity(sol: &DiscreteSolution) -> Result<ComplementarityReport> {
    let scheme = sol.scheme()?;
    let mut rep = ComplementarityReport {
        min_pde: f64::INFINITY,
        min_obstacle: f64::INFINITY,
        max_min: f64::NEG_INFINITY,
    };
    for i in 0..sol.grid().time_steps() {
        let (v_next, v) = (sol.layer(i + 1), sol.layer(i));
        for j in 0..v.len() {
            let (_, pde) = scheme.pde_part(v_next, v, i, j);
            rep.min_pde = rep.min_pde.min(pde);
            let m = match scheme.obstacle_apply(v, j)? {
                Some(obs) => {
                    rep.min_obstacle = rep.min_obstacle.min(obs);
                    pde.min(obs)
                }
                None => pde,
            };
            rep.max_min = rep.max_min.max(m);
        }
    }
    Ok(rep)
}

pub fn growth_margins(sol: &DiscreteSolution) -> Result<GrowthReport> {
    let p = sol.params();
    let g = sol.grid();
    let lower_rate = p.alpha() - p.beta();
    let upper_rate = lower_rate + (p.beta() - p.delta() * p.intensity()).max(0.0);
    let mut rep = GrowthReport {
        lower_margin: f64::INFINITY,
        upper_margin: f64::INFINITY,
    };
    for (i, &t) in g.times().iter().enumerate() {
        for (j, &yt) in g.states().iter().enumerate() {
            if !(0.05..=0.95).contains(&yt) {
                continue;
            }
            let y = expand(yt)?;
            let base = p.conjugate_utility(y)?;
            let v = sol.dual_value(i, j);
            let tau = p.horizon() - t;
            rep.lower_margin = rep.lower_margin.min(v - (base + lower_rate * tau * y));
            rep.upper_margin = rep.upper_margin.min(base + upper_rate * tau * y - v);
        }
    }
    Ok(rep)
}

fn primal_deviation(path: &PolicyPath, params: &ModelParams, claims: &ClaimSchedule, sol: &DiscreteSolution) -> f64 {
    let wealth = path.wealth();
    let primal = integrate_primal(&path.theta(), params, claims, sol.grid(), wealth[0]);
    primal
        .iter()
        .zip(&wealth)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

fn control_sensitivity(sol: &DiscreteSolution, cfg: &RunConfig) -> Result<SensitivityReport> {
    let c = &cfg.controls;
    let (lmin, lmax) = (c.min.ln(), c.max.ln());
    let (mid, half) = (0.5 * (lmin + lmax), 0.5 * (lmax - lmin));
    let range = ((mid - 2.0 * half).exp(), (mid + 2.0 * half).exp());
    let count = 2 * c.count;
    let params = *sol.params();
    let wide = ControlSet::geometric(range.0, range.1, count, &params)?;
    let base = sol.scheme()?;
    let other = Scheme::with_jump_rule(params, sol.grid().clone(), wide, sol.jump_rule())?;
    let v = sol.layer(0);
    let mut max_value_change: f64 = 0.0;
    let mut nodes_with_new_control = 0;
    for j in 0..v.len() {
        let a = base.minimize_over_controls(v, 0, j);
        let b = other.minimize_over_controls(v, 0, j);
        max_value_change = max_value_change.max((a.value - b.value).abs());
        if (a.rho - b.rho).abs() > 1e-12 * a.rho {
            nodes_with_new_control += 1;
        }
    }
    Ok(SensitivityReport {
        range,
        count,
        max_value_change,
        nodes_with_new_control,
    })
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn surface_csv(sol: &DiscreteSolution) -> String {
    let g = sol.grid();
    let mut out = String::from("t,ytilde,value,rho,region\n");
    for (i, &t) in g.times().iter().enumerate() {
        for (j, &yt) in g.states().iter().enumerate() {
            let (rho, region) = if i < g.time_steps() {
                (num(sol.control(i, j)), sol.region(i, j).label())
            } else {
                (String::new(), "terminal")
            };
            let _ = writeln!(out, "{},{},{},{},{}", num(t), num(yt), num(sol.value(i, j)), rho, region);
        }
    }
    out
}

pub fn path_csv(path: &PolicyPath) -> String {
    let mut out = String::from("t,theta,wealth,z,d,y,claim\n");
    for s in &path.steps {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            num(s.t),
            num(s.theta),
            num(s.wealth),
            num(s.z),
            num(s.d),
            num(s.y),
            s.claims
        );
    }
    out
}

fn series(header: &str, rows: impl Iterator<Item = (f64, f64)>) -> String {
    let mut out = format!("# {header}\n");
    for (a, b) in rows {
        let _ = writeln!(out, "{} {}", num(a), num(b));
    }
    out
}

fn write(dir: &Path, name: &str, body: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, body).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_artifacts(out: &RunOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })?;
    write(dir, SURFACE_FILE, &surface_csv(&out.solution))?;
    write(dir, PATH_FILE, &path_csv(&out.path))?;
    let json = serde_json::to_string_pretty(&out.diagnostics).expect("diagnostics serialize");
    write(dir, DIAGNOSTICS_FILE, &(json + "\n"))?;
    let steps = &out.path.steps;
    write(dir, THETA_PLOT_FILE, &series("t theta", steps.iter().map(|s| (s.t, s.theta))))?;
    write(dir, WEALTH_PLOT_FILE, &series("t wealth", steps.iter().map(|s| (s.t, s.wealth))))?;
    Ok(())
}
