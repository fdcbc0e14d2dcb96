//! Backward induction with Howard policy iteration on each time layer.
//!
//! At layer `i` the unknown row `v` solves, node by node,
//!
//! ```text
//! min { v_next − v + min_ρ h_t (Āᵖv + e^{−rt_i} lᵖ),  B̄v } = 0
//! ```
//!
//! Policy improvement picks the control and the region (no-jump `D₁` where
//! the first argument is active, jump `D₂` where the obstacle is active) that
//! minimize the residual at the current iterate. Policy evaluation solves the
//! resulting mixed linear system: `D₁` rows are `(I − h_tĀᵖ)v = v_next +
//! h_t e^{−rt_i} lᵖ` and `D₂` rows are `B̄v = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::ModelParams;
use crate::scheme::{ControlSet, JumpRule, Scheme};

/// Region label of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    /// `D₁`: the jump-drift equation holds with equality.
    NoJump,
    /// `D₂`: the obstacle `B̄v = 0` holds with equality.
    Jump,
}

impl Region {
    pub fn label(self) -> &'static str {
        match self {
            Region::NoJump => "no_jump",
            Region::Jump => "jump",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Sup-norm change between Howard iterates below which a layer is
    /// accepted.
    pub tol: f64,
    pub max_iter: usize,
    /// When false the obstacle rows are dropped and every node is `D₁`.
    pub obstacle: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol: 1e-9,
            max_iter: 200,
            obstacle: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub time_index: usize,
    pub iterations: usize,
    /// Sup-norm change after each policy evaluation.
    pub history: Vec<f64>,
    /// Largest relative residual of the last linear solve.
    pub linear_residual: f64,
}

/// Solution of one stationary layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSolution {
    pub values: Vec<f64>,
    /// Index into the control set of the optimal control at each node.
    pub controls: Vec<usize>,
    pub regions: Vec<Region>,
    pub diagnostics: StepDiagnostics,
}

/// Full backward solve: value surface, optimal controls and regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSolution {
    params: ModelParams,
    grid: Grid,
    controls: ControlSet,
    jump_rule: JumpRule,
    /// `surface[i][j] = v̄(t_i, ỹ_j)` for `i = 0..=N`.
    surface: Vec<Vec<f64>>,
    /// Control indices for `i = 0..N` (no control on the terminal layer).
    control_index: Vec<Vec<usize>>,
    regions: Vec<Vec<Region>>,
    diagnostics: Vec<StepDiagnostics>,
}

impl DiscreteSolution {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }
    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn controls(&self) -> &ControlSet {
        &self.controls
    }
    pub fn jump_rule(&self) -> JumpRule {
        self.jump_rule
    }
    pub fn surface(&self) -> &[Vec<f64>] {
        &self.surface
    }
    pub fn layer(&self, i: usize) -> &[f64] {
        &self.surface[i]
    }
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.surface[i][j]
    }
    /// Optimal `ρ` at `(t_i, ỹ_j)`, `i < N`.
    pub fn control(&self, i: usize, j: usize) -> f64 {
        self.controls.get(self.control_index[i][j])
    }
    pub fn control_index(&self, i: usize, j: usize) -> usize {
        self.control_index[i][j]
    }
    pub fn region(&self, i: usize, j: usize) -> Region {
        self.regions[i][j]
    }
    /// Per-layer diagnostics ordered by time index.
    pub fn diagnostics(&self) -> &[StepDiagnostics] {
        &self.diagnostics
    }

    /// Dual value in the original coordinates: `ṽ(t_i, y_j) = e^{r t_i} v̄`.
    pub fn dual_value(&self, i: usize, j: usize) -> f64 {
        (self.params.r() * self.grid.times()[i]).exp() * self.surface[i][j]
    }

    /// Rebuilds the scheme this solution was computed with.
    pub fn scheme(&self) -> Result<Scheme> {
        Scheme::with_jump_rule(self.params, self.grid.clone(), self.controls.clone(), self.jump_rule)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct NodePolicy {
    control: usize,
    region: Region,
}

/// Policy improvement at iterate `v`.
fn improve(scheme: &Scheme, v_next: &[f64], v: &[f64], time_index: usize, obstacle: bool) -> Vec<NodePolicy> {
    (0..v.len())
        .map(|j| {
            let (choice, pde) = scheme.pde_part(v_next, v, time_index, j);
            let obs = if obstacle {
                scheme.obstacle_apply(v, j).expect("node in range")
            } else {
                None
            };
            let region = match obs {
                Some(b) if pde > b => Region::Jump,
                _ => Region::NoJump,
            };
            NodePolicy {
                control: choice.index,
                region,
            }
        })
        .collect()
}

/// Row-major `(row, col, value)` entries of the mixed system and its
/// right-hand side for a fixed policy.
fn assemble(
    scheme: &Scheme,
    v_next: &[f64],
    time_index: usize,
    policy: &[NodePolicy],
) -> (Vec<(usize, usize, f64)>, Vec<f64>) {
    let dt = scheme.grid().dt();
    let n = policy.len();
    let mut entries = Vec::with_capacity(5 * n);
    let mut rhs = vec![0.0; n];
    for (j, p) in policy.iter().enumerate() {
        match p.region {
            Region::NoJump => {
                let row = scheme.row(j, p.control);
                for &(col, a) in row.entries() {
                    let coef = if col == j { 1.0 - dt * a } else { -dt * a };
                    entries.push((j, col, coef));
                }
                rhs[j] = v_next[j] + dt * scheme.discounted_source(time_index, j, p.control);
            }
            Region::Jump => {
                let h = scheme.grid().spacing_below(j).expect("node 0 is never in the jump region");
                entries.push((j, j, -1.0 / h));
                entries.push((j, j - 1, 1.0 / h));
            }
        }
    }
    (entries, rhs)
}

fn residual_norm(entries: &[(usize, usize, f64)], x: &[f64], b: &[f64]) -> (Vec<f64>, f64) {
    let mut r = b.to_vec();
    for &(i, j, a) in entries {
        r[i] -= a * x[j];
    }
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let norm = r.iter().fold(0.0f64, |m, v| m.max(v.abs())) / scale;
    (r, norm)
}

/// Sparse direct solve with up to three steps of iterative refinement.
fn solve_sparse(entries: &[(usize, usize, f64)], rhs: &[f64], time_index: usize) -> Result<(Vec<f64>, f64)> {
    let n = rhs.len();
    let mut trpl = rsparse::data::Trpl::new();
    for &(i, j, a) in entries {
        trpl.append(i, j, a);
    }
    trpl.m = n;
    trpl.n = n;
    let a = trpl.to_sprs();
    let lu_solve = |b: &mut Vec<f64>| -> Result<()> {
        rsparse::lusol(&a, b, 1, 1.0).map_err(|e| Error::LinearSolve {
            time_index,
            reason: format!("{e:?}"),
        })
    };
    let mut x = rhs.to_vec();
    lu_solve(&mut x)?;
    let (mut r, mut norm) = residual_norm(entries, &x, rhs);
    for _ in 0..3 {
        if norm <= 1e-12 {
            break;
        }
        lu_solve(&mut r)?;
        for (xi, di) in x.iter_mut().zip(&r) {
            *xi += di;
        }
        (r, norm) = residual_norm(entries, &x, rhs);
    }
    if !norm.is_finite() || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::LinearSolve {
            time_index,
            reason: "non-finite solution".into(),
        });
    }
    Ok((x, norm))
}

/// Solves one stationary layer by Howard iteration, warm-started from
/// `v_next`.
pub fn solve_time_step(
    scheme: &Scheme,
    time_index: usize,
    v_next: &[f64],
    settings: &SolverSettings,
) -> Result<LayerSolution> {
    let n = scheme.grid().len();
    if v_next.len() != n {
        return Err(Error::Index {
            module: "howard",
            index: v_next.len(),
            len: n,
        });
    }
    if time_index >= scheme.grid().time_steps() {
        return Err(Error::Index {
            module: "howard",
            index: time_index,
            len: scheme.grid().time_steps(),
        });
    }
    let mut v = v_next.to_vec();
    let mut history = Vec::new();
    let mut policy = improve(scheme, v_next, &v, time_index, settings.obstacle);
    for iter in 1..=settings.max_iter {
        let (entries, rhs) = assemble(scheme, v_next, time_index, &policy);
        let (mut next, linear_residual) = solve_sparse(&entries, &rhs, time_index)?;
        // jump rows say v_j = v_{j−1}; remove the solver's rounding
        for (j, p) in policy.iter().enumerate() {
            if p.region == Region::Jump {
                next[j] = next[j - 1];
            }
        }
        let change = next
            .iter()
            .zip(&v)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        history.push(change);
        v = next;
        let next_policy = improve(scheme, v_next, &v, time_index, settings.obstacle);
        if change <= settings.tol || next_policy == policy {
            // report the policy that is optimal at the accepted iterate
            let policy = next_policy;
            return Ok(LayerSolution {
                controls: policy.iter().map(|p| p.control).collect(),
                regions: policy.iter().map(|p| p.region).collect(),
                values: v,
                diagnostics: StepDiagnostics {
                    time_index,
                    iterations: iter,
                    history,
                    linear_residual,
                },
            });
        }
        policy = next_policy;
    }
    Err(Error::NonConvergence {
        time_index,
        iterations: settings.max_iter,
        last_change: history.last().copied().unwrap_or(f64::NAN),
        history,
        last_iterate: v,
    })
}

/// Applies the terminal condition at `i = N` and solves layers `N−1..=0`.
pub fn solve_backward(scheme: &Scheme, settings: &SolverSettings) -> Result<DiscreteSolution> {
    let grid = scheme.grid();
    let params = scheme.params();
    let n_t = grid.time_steps();
    let terminal: Vec<f64> = grid
        .states()
        .iter()
        .map(|&y| params.terminal_condition(y))
        .collect::<Result<_>>()?;

    let mut surface = vec![Vec::new(); n_t + 1];
    let mut control_index = vec![Vec::new(); n_t];
    let mut regions = vec![Vec::new(); n_t];
    let mut diagnostics = Vec::with_capacity(n_t);
    surface[n_t] = terminal;
    for i in (0..n_t).rev() {
        let layer = solve_time_step(scheme, i, &surface[i + 1], settings)?;
        log::debug!(
            "layer {i}: {} Howard iterations, last change {:e}",
            layer.diagnostics.iterations,
            layer.diagnostics.history.last().copied().unwrap_or(0.0)
        );
        surface[i] = layer.values;
        control_index[i] = layer.controls;
        regions[i] = layer.regions;
        diagnostics.push(layer.diagnostics);
    }
    diagnostics.reverse();
    Ok(DiscreteSolution {
        params: *params,
        grid: grid.clone(),
        controls: scheme.controls().clone(),
        jump_rule: scheme.jump_rule(),
        surface,
        control_index,
        regions,
        diagnostics,
    })
}
