//! C ABI over the `insurance-hjb` solver.
//!
//! Solutions and paths are opaque handles owned by the caller and released
//! with the matching `*_free` function. Every fallible call returns an
//! [`IhjbStatus`]; on failure [`ihjb_last_error`] describes the error for the
//! calling thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use insurance_hjb::cli::{run, RunConfig};
use insurance_hjb::policy::{evolve_from, find_initial_state, sde_residual, InitialSearch, PolicyPath};
use insurance_hjb::{
    solve_backward, ClaimSchedule, ControlSet, DiscreteSolution, Error, Grid, JumpRule, ModelParams, Region, Scheme,
    SolverSettings,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IhjbStatus {
    Ok = 0,
    Validation = 1,
    NonConvergence = 2,
    Reconstruction = 3,
    NullPointer = 4,
    Index = 5,
    Io = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IhjbRegion {
    NoJump = 0,
    Jump = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IhjbJumpRule {
    Linear = 0,
    Nearest = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct IhjbModelParams {
    pub eta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub r: f64,
    pub delta: f64,
    pub intensity: f64,
    pub horizon: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct IhjbGridSpec {
    pub time_steps: usize,
    pub state_steps: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct IhjbSolverSpec {
    pub tol: f64,
    pub max_iter: usize,
    pub control_min: f64,
    pub control_max: f64,
    pub control_count: usize,
    pub jump_rule: IhjbJumpRule,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct IhjbPathStep {
    pub t: f64,
    pub theta: f64,
    pub wealth: f64,
    pub z: f64,
    pub d: f64,
    pub y: f64,
    pub rho: f64,
    pub claims: u32,
}

/// Opaque solved surface.
pub struct IhjbSolution {
    inner: DiscreteSolution,
}

/// Opaque reconstructed path.
pub struct IhjbPath {
    inner: PolicyPath,
    params: ModelParams,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(IhjbStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::NonConvergence { .. } | Error::LinearSolve { .. } => IhjbStatus::NonConvergence,
            Error::UnreachableWealth { .. } | Error::PathEscape { .. } => IhjbStatus::Reconstruction,
            Error::Index { .. } => IhjbStatus::Index,
            Error::Io { .. } => IhjbStatus::Io,
            _ => IhjbStatus::Validation,
        };
        Failure(status, e.to_string())
    }
}

fn null(name: &str) -> Failure {
    Failure(IhjbStatus::NullPointer, format!("ffi: `{name}` is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> IhjbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            IhjbStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("ffi: panic: {msg}"));
            IhjbStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn out<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(name))
}

fn index(i: usize, len: usize) -> Result<(), Failure> {
    if i < len {
        Ok(())
    } else {
        Err(Failure(IhjbStatus::Index, format!("ffi: index {i} out of range (len {len})")))
    }
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn ihjb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parameters of the reference experiment.
#[no_mangle]
pub extern "C" fn ihjb_reference_model() -> IhjbModelParams {
    let p = ModelParams::reference();
    IhjbModelParams {
        eta: p.eta(),
        alpha: p.alpha(),
        beta: p.beta(),
        r: p.r(),
        delta: p.delta(),
        intensity: p.intensity(),
        horizon: p.horizon(),
    }
}

/// Default solver settings: tolerance 1e-9, 200 iterations, 101 controls on
/// [1e-3, 1e3], linear jump interpolation.
#[no_mangle]
pub extern "C" fn ihjb_default_solver() -> IhjbSolverSpec {
    let s = SolverSettings::default();
    IhjbSolverSpec {
        tol: s.tol,
        max_iter: s.max_iter,
        control_min: 1e-3,
        control_max: 1e3,
        control_count: 101,
        jump_rule: IhjbJumpRule::Linear,
    }
}

/// Solves the backward problem on a uniform grid.
///
/// # Safety
/// `model`, `grid` and `solver` must point to valid structs; `out` must be
/// writable. On success `*out` owns a handle to release with
/// [`ihjb_solution_free`].
#[no_mangle]
pub unsafe extern "C" fn ihjb_solve(
    model: *const IhjbModelParams,
    grid: *const IhjbGridSpec,
    solver: *const IhjbSolverSpec,
    out_solution: *mut *mut IhjbSolution,
) -> IhjbStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let g = deref(grid, "grid")?;
        let s = deref(solver, "solver")?;
        let slot = out(out_solution, "out_solution")?;
        *slot = ptr::null_mut();
        let params = ModelParams::new(m.eta, m.alpha, m.beta, m.r, m.delta, m.intensity, m.horizon)?;
        let mesh = Grid::uniform(m.horizon, g.time_steps, g.state_steps)?;
        let controls = ControlSet::geometric(s.control_min, s.control_max, s.control_count, &params)?;
        let rule = match s.jump_rule {
            IhjbJumpRule::Linear => JumpRule::Linear,
            IhjbJumpRule::Nearest => JumpRule::Nearest,
        };
        let scheme = Scheme::with_jump_rule(params, mesh, controls, rule)?;
        let settings = SolverSettings {
            tol: s.tol,
            max_iter: s.max_iter,
            obstacle: true,
        };
        let inner = solve_backward(&scheme, &settings)?;
        *slot = Box::into_raw(Box::new(IhjbSolution { inner }));
        Ok(())
    })
}

/// # Safety
/// `solution` must be null or a handle from [`ihjb_solve`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ihjb_solution_free(solution: *mut IhjbSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// Number of time layers (`N + 1`) and state nodes.
///
/// # Safety
/// `solution` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn ihjb_solution_dims(
    solution: *const IhjbSolution,
    out_layers: *mut usize,
    out_nodes: *mut usize,
) -> IhjbStatus {
    guard(|| {
        let s = &deref(solution, "solution")?.inner;
        *out(out_layers, "out_layers")? = s.grid().time_steps() + 1;
        *out(out_nodes, "out_nodes")? = s.grid().len();
        Ok(())
    })
}

/// Time `t_i`.
///
/// # Safety
/// `solution` must be a live handle; `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ihjb_solution_time(solution: *const IhjbSolution, i: usize, out_value: *mut f64) -> IhjbStatus {
    guard(|| {
        let s = &deref(solution, "solution")?.inner;
        index(i, s.grid().times().len())?;
        *out(out_value, "out_value")? = s.grid().times()[i];
        Ok(())
    })
}

/// Compact state `ỹ_j`.
///
/// # Safety
/// `solution` must be a live handle; `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ihjb_solution_state(solution: *const IhjbSolution, j: usize, out_value: *mut f64) -> IhjbStatus {
    guard(|| {
        let s = &deref(solution, "solution")?.inner;
        index(j, s.grid().len())?;
        *out(out_value, "out_value")? = s.grid().states()[j];
        Ok(())
    })
}

/// Discounted dual value `v̄(t_i, ỹ_j)`.
///
/// # Safety
/// `solution` must be a live handle; `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ihjb_solution_value(
    solution: *const IhjbSolution,
    i: usize,
    j: usize,
    out_value: *mut f64,
) -> IhjbStatus {
    guard(|| {
        let s = &deref(solution, "solution")?.inner;
        index(i, s.grid().time_steps() + 1)?;
        index(j, s.grid().len())?;
        *out(out_value, "out_value")? = s.value(i, j);
        Ok(())
    })
}

/// Optimal control at `(t_i, ỹ_j)`, `i < N`.
///
/// # Safety
/// `solution` must be a live handle; `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ihjb_solution_control(
    solution: *const IhjbSolution,
    i: usize,
    j: usize,
    out_value: *mut f64,
) -> IhjbStatus {
    guard(|| {
        let s = &deref(solution, "solution")?.inner;
        index(i, s.grid().time_steps())?;
        index(j, s.grid().len())?;
        *out(out_value, "out_value")? = s.control(i, j);
        Ok(())
    })
}

/// Region of `(t_i, ỹ_j)`, `i < N`.
///
/// # Safety
/// `solution` must be a live handle; `out_region` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ihjb_solution_region(
    solution: *const IhjbSolution,
    i: usize,
    j: usize,
    out_region: *mut IhjbRegion,
) -> IhjbStatus {
    guard(|| {
        let s = &deref(solution, "solution")?.inner;
        index(i, s.grid().time_steps())?;
        index(j, s.grid().len())?;
        *out(out_region, "out_region")? = match s.region(i, j) {
            Region::NoJump => IhjbRegion::NoJump,
            Region::Jump => IhjbRegion::Jump,
        };
        Ok(())
    })
}

/// Copies layer `i` of the value surface into `buf`, which must hold
/// exactly as many entries as there are state nodes.
///
/// # Safety
/// `solution` must be a live handle; `buf` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn ihjb_solution_copy_layer(
    solution: *const IhjbSolution,
    i: usize,
    buf: *mut f64,
    len: usize,
) -> IhjbStatus {
    guard(|| {
        let s = &deref(solution, "solution")?.inner;
        index(i, s.grid().time_steps() + 1)?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let layer = s.layer(i);
        if len != layer.len() {
            return Err(Failure(
                IhjbStatus::Validation,
                format!("ffi: buffer holds {len} values, layer has {}", layer.len()),
            ));
        }
        std::slice::from_raw_parts_mut(buf, len).copy_from_slice(layer);
        Ok(())
    })
}

/// Reconstructs the optimal strategy and wealth from initial wealth `x`
/// along claims at `claim_times` (strictly increasing, in `(0, T]`), each of
/// the model's claim size.
///
/// # Safety
/// `solution` must be a live handle; `claim_times` must be valid for
/// `n_claims` reads (it may be null when `n_claims` is 0); `out_path` must be
/// writable. Release the path with [`ihjb_path_free`].
#[no_mangle]
pub unsafe extern "C" fn ihjb_reconstruct(
    solution: *const IhjbSolution,
    claim_times: *const f64,
    n_claims: usize,
    x: f64,
    out_path: *mut *mut IhjbPath,
) -> IhjbStatus {
    guard(|| {
        let s = &deref(solution, "solution")?.inner;
        let slot = out(out_path, "out_path")?;
        *slot = ptr::null_mut();
        let times = if n_claims == 0 {
            Vec::new()
        } else if claim_times.is_null() {
            return Err(null("claim_times"));
        } else {
            std::slice::from_raw_parts(claim_times, n_claims).to_vec()
        };
        let params = *s.params();
        let claims = ClaimSchedule::deterministic(times, params.delta(), params.horizon())?;
        let init = find_initial_state(s, x, InitialSearch::Nearest)?;
        let inner = evolve_from(s, &claims, init)?;
        *slot = Box::into_raw(Box::new(IhjbPath { inner, params }));
        Ok(())
    })
}

/// # Safety
/// `path` must be null or a handle from [`ihjb_reconstruct`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ihjb_path_free(path: *mut IhjbPath) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}

/// # Safety
/// `path` must be a live handle; `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ihjb_path_len(path: *const IhjbPath, out_len: *mut usize) -> IhjbStatus {
    guard(|| {
        *out(out_len, "out_len")? = deref(path, "path")?.inner.steps.len();
        Ok(())
    })
}

/// # Safety
/// `path` must be a live handle; `out_step` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ihjb_path_step(path: *const IhjbPath, k: usize, out_step: *mut IhjbPathStep) -> IhjbStatus {
    guard(|| {
        let steps = &deref(path, "path")?.inner.steps;
        index(k, steps.len())?;
        let s = &steps[k];
        *out(out_step, "out_step")? = IhjbPathStep {
            t: s.t,
            theta: s.theta,
            wealth: s.wealth,
            z: s.z,
            d: s.d,
            y: s.y,
            rho: s.rho,
            claims: s.claims,
        };
        Ok(())
    })
}

/// Largest one-step mismatch of the path against the wealth equation.
///
/// # Safety
/// `path` must be a live handle; `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ihjb_path_sde_residual(path: *const IhjbPath, out_value: *mut f64) -> IhjbStatus {
    guard(|| {
        let p = deref(path, "path")?;
        *out(out_value, "out_value")? = sde_residual(&p.inner, &p.params);
        Ok(())
    })
}

/// Runs the full command-line pipeline from a TOML file. `out_dir` may be
/// null to keep the configured directory.
///
/// # Safety
/// `config_path` must be a NUL-terminated UTF-8 string; `out_dir` must be
/// null or a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn ihjb_run_config(config_path: *const c_char, out_dir: *const c_char) -> IhjbStatus {
    guard(|| {
        let utf8 = |p: *const c_char, name: &str| -> Result<String, Failure> {
            CStr::from_ptr(p)
                .to_str()
                .map(str::to_owned)
                .map_err(|_| Failure(IhjbStatus::Validation, format!("ffi: `{name}` is not UTF-8")))
        };
        if config_path.is_null() {
            return Err(null("config_path"));
        }
        let mut cfg = RunConfig::load(&PathBuf::from(utf8(config_path, "config_path")?))?;
        if !out_dir.is_null() {
            cfg.output.dir = PathBuf::from(utf8(out_dir, "out_dir")?);
        }
        run(&cfg)?;
        Ok(())
    })
}
