//! TOML run configuration. Every section and key is optional; missing values
//! fall back to the reference experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::howard::SolverSettings;
use crate::model::ModelParams;
use crate::policy::InitialSearch;
use crate::scheme::{ControlSet, JumpRule};
use crate::simulate::{poisson_schedule, ClaimSchedule};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub grid: GridSection,
    pub controls: ControlSection,
    pub solver: SolverSection,
    pub experiment: ExperimentSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub eta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub r: f64,
    pub delta: f64,
    pub intensity: f64,
    pub horizon: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            eta: 0.5,
            alpha: 2.1,
            beta: 2.15,
            r: 0.05,
            delta: 1.0,
            intensity: 2.0,
            horizon: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub time_steps: usize,
    pub state_steps: usize,
    /// Second pass on a mesh refined around the initial dual state.
    pub refine: bool,
    /// Half-width of the refined window in coarse steps.
    pub halfwidth: usize,
    pub fine_step: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            time_steps: 50,
            state_steps: 100,
            refine: true,
            halfwidth: 2,
            fine_step: 1.0 / 4000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlSection {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Default for ControlSection {
    fn default() -> Self {
        ControlSection {
            min: 1e-3,
            max: 1e3,
            count: 101,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub tol: f64,
    pub max_iter: usize,
    pub jump_rule: JumpRule,
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SolverSettings::default();
        SolverSection {
            tol: s.tol,
            max_iter: s.max_iter,
            jump_rule: JumpRule::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub initial_wealth: f64,
    /// Explicit claim times; ignored when `poisson_seed` is set.
    pub claims: Option<Vec<f64>>,
    pub poisson_seed: Option<u64>,
    pub initial_search: InitialSearch,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            initial_wealth: 1.0,
            claims: None,
            poisson_seed: None,
            initial_search: InitialSearch::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out") }
    }
}

pub const DEFAULT_CLAIMS: [f64; 2] = [0.4, 0.8];

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn params(&self) -> Result<ModelParams> {
        let m = &self.model;
        ModelParams::new(m.eta, m.alpha, m.beta, m.r, m.delta, m.intensity, m.horizon)
    }

    pub fn coarse_grid(&self) -> Result<Grid> {
        Grid::uniform(self.model.horizon, self.grid.time_steps, self.grid.state_steps)
    }

    pub fn control_set(&self, params: &ModelParams) -> Result<ControlSet> {
        let c = &self.controls;
        ControlSet::geometric(c.min, c.max, c.count, params)
    }

    pub fn settings(&self) -> Result<SolverSettings> {
        let s = &self.solver;
        if !(s.tol > 0.0 && s.tol.is_finite()) {
            return Err(Error::param("howard", "tol", format!("must be > 0, got {}", s.tol)));
        }
        if s.max_iter == 0 {
            return Err(Error::param("howard", "max_iter", "must be >= 1"));
        }
        Ok(SolverSettings {
            tol: s.tol,
            max_iter: s.max_iter,
            obstacle: true,
        })
    }

    pub fn claims(&self, params: &ModelParams) -> Result<ClaimSchedule> {
        let e = &self.experiment;
        match (e.poisson_seed, &e.claims) {
            (Some(_), Some(_)) => Err(Error::Config(
                "experiment: set either `claims` or `poisson_seed`, not both".into(),
            )),
            (Some(seed), None) => poisson_schedule(params.intensity(), params.horizon(), seed, params.delta()),
            (None, claims) => ClaimSchedule::deterministic(
                claims.clone().unwrap_or_else(|| DEFAULT_CLAIMS.to_vec()),
                params.delta(),
                params.horizon(),
            ),
        }
    }

    /// Checks every block before any compute and returns the model.
    pub fn validate(&self) -> Result<ModelParams> {
        let params = self.params()?;
        let grid = self.coarse_grid()?;
        self.control_set(&params)?;
        self.settings()?;
        self.claims(&params)?;
        if self.grid.refine {
            if self.grid.halfwidth == 0 {
                return Err(Error::param("grid", "halfwidth", "must be >= 1"));
            }
            if !(self.grid.fine_step > 0.0 && self.grid.fine_step <= grid.base_step()) {
                return Err(Error::param(
                    "grid",
                    "fine_step",
                    format!("must lie in (0, {}], got {}", grid.base_step(), self.grid.fine_step),
                ));
            }
        }
        let x = self.experiment.initial_wealth;
        if !(x >= 0.0 && x.is_finite()) {
            return Err(Error::param("policy", "initial_wealth", format!("must be >= 0, got {x}")));
        }
        if params.r() * grid.dt() >= 1.0 {
            return Err(Error::param("scheme", "time_steps", "r·h_t must be < 1"));
        }
        Ok(params)
    }
}
