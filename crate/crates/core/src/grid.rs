//! Time mesh and (optionally locally refined) compact state mesh.
//!
//! Node indices are zero-based: `states()[0]` is the first interior node of
//! `(0, 1)`. The last stored node is the one whose forward neighbor is the
//! ghost node handled by the scheme's boundary rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nodes closer than this are treated as the same node when merging the
/// fine and coarse meshes.
const MERGE_EPS: f64 = 1e-12;

/// Description of a locally refined window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    /// Compact-state coordinate of the node the window is centered on.
    pub center: f64,
    /// Window half-width in units of the base spacing.
    pub halfwidth: usize,
    pub fine_step: f64,
    /// Window actually meshed, after clipping to `(0, 1)`.
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    horizon: f64,
    time_steps: usize,
    dt: f64,
    times: Vec<f64>,
    states: Vec<f64>,
    base_step: f64,
    refinement: Option<Refinement>,
}

impl Grid {
    /// Uniform mesh: `t_i = iT/N` for `i = 0..=N` and `ỹ_j = j/M` for
    /// `j = 1..M−1`.
    pub fn uniform(horizon: f64, time_steps: usize, state_steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::param("grid", "horizon", format!("must be > 0, got {horizon}")));
        }
        if time_steps < 1 {
            return Err(Error::param("grid", "time_steps", "must be >= 1"));
        }
        if state_steps < 3 {
            return Err(Error::param(
                "grid",
                "state_steps",
                format!("must be >= 3, got {state_steps}"),
            ));
        }
        let m = state_steps as f64;
        let states = (1..state_steps).map(|j| j as f64 / m).collect();
        Ok(Grid {
            horizon,
            time_steps,
            dt: horizon / time_steps as f64,
            times: Self::time_mesh(horizon, time_steps),
            states,
            base_step: 1.0 / m,
            refinement: None,
        })
    }

    /// Builds a grid from an explicit strictly increasing state sequence in
    /// `(0, 1)`.
    pub fn from_states(horizon: f64, time_steps: usize, states: Vec<f64>) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::param("grid", "horizon", format!("must be > 0, got {horizon}")));
        }
        if time_steps < 1 {
            return Err(Error::param("grid", "time_steps", "must be >= 1"));
        }
        if states.len() < 2 {
            return Err(Error::param("grid", "states", "need at least two nodes"));
        }
        if states.iter().any(|&s| !(s > 0.0 && s < 1.0)) {
            return Err(Error::param("grid", "states", "all nodes must lie in (0,1)"));
        }
        if states.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("grid", "states", "nodes must be strictly increasing"));
        }
        let base_step = states
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max);
        Ok(Grid {
            horizon,
            time_steps,
            dt: horizon / time_steps as f64,
            times: Self::time_mesh(horizon, time_steps),
            states,
            base_step,
            refinement: None,
        })
    }

    fn time_mesh(horizon: f64, n: usize) -> Vec<f64> {
        (0..=n)
            .map(|i| if i == n { horizon } else { horizon * i as f64 / n as f64 })
            .collect()
    }

    /// Returns a grid whose spacing is `fine_step` on
    /// `[ỹ_{j0} − halfwidth·p, ỹ_{j0} + halfwidth·p]` (clipped to `(0,1)`)
    /// and unchanged elsewhere; `p` is the base spacing. Coarse nodes inside
    /// the window are kept exactly.
    pub fn refine_around(&self, j0: usize, halfwidth: usize, fine_step: f64) -> Result<Self> {
        let center = *self.states.get(j0).ok_or(Error::Index {
            module: "grid",
            index: j0,
            len: self.states.len(),
        })?;
        if !(fine_step > 0.0) || fine_step > self.base_step * (1.0 + 1e-12) {
            return Err(Error::param(
                "grid",
                "fine_step",
                format!("must lie in (0, {}], got {fine_step}", self.base_step),
            ));
        }
        let half = halfwidth as f64 * self.base_step;
        let lo = center - half;
        let hi = center + half;
        let intervals = ((hi - lo) / fine_step).round().max(1.0) as usize;
        let fine: Vec<f64> = (0..=intervals)
            .map(|k| lo + (hi - lo) * k as f64 / intervals as f64)
            .filter(|&y| y > 0.5 * fine_step && y < 1.0 - 0.5 * fine_step)
            .collect();

        let mut merged: Vec<f64> = self.states.clone();
        merged.extend(fine);
        merged.sort_by(f64::total_cmp);
        let mut states: Vec<f64> = Vec::with_capacity(merged.len());
        for y in merged {
            match states.last_mut() {
                Some(last) if (y - *last).abs() <= MERGE_EPS => {
                    // prefer the coarse node's exact value
                    if self.states.contains(&y) {
                        *last = y;
                    }
                }
                _ => states.push(y),
            }
        }
        Ok(Grid {
            horizon: self.horizon,
            time_steps: self.time_steps,
            dt: self.dt,
            times: self.times.clone(),
            states,
            base_step: self.base_step,
            refinement: Some(Refinement {
                center,
                halfwidth,
                fine_step,
                lo: lo.max(0.0),
                hi: hi.min(1.0),
            }),
        })
    }

    /// Index of the stored node nearest to `yt`; ties go to the lower index
    /// and values outside the mesh hull clamp to the extreme node.
    pub fn project(&self, yt: f64) -> usize {
        let s = &self.states;
        let upper = s.partition_point(|&x| x < yt);
        if upper == 0 {
            return 0;
        }
        if upper == s.len() {
            return s.len() - 1;
        }
        let lower = upper - 1;
        if yt - s[lower] <= s[upper] - yt {
            lower
        } else {
            upper
        }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    /// Number of time steps `N`.
    pub fn time_steps(&self) -> usize {
        self.time_steps
    }
    /// Time step `h_t = T/N`.
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn times(&self) -> &[f64] {
        &self.times
    }
    pub fn states(&self) -> &[f64] {
        &self.states
    }
    pub fn len(&self) -> usize {
        self.states.len()
    }
    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
    pub fn base_step(&self) -> f64 {
        self.base_step
    }
    pub fn refinement(&self) -> Option<&Refinement> {
        self.refinement.as_ref()
    }

    /// Distance to the left neighbor, `ỹ_j − ỹ_{j−1}`; `None` at node 0.
    pub fn spacing_below(&self, j: usize) -> Option<f64> {
        (j > 0).then(|| self.states[j] - self.states[j - 1])
    }

    /// Index and spacing of the forward neighbor. The last node resolves to
    /// its ghost, which copies node `len − 2` at the mirrored distance.
    pub fn forward_neighbor(&self, j: usize) -> (usize, f64) {
        let last = self.states.len() - 1;
        if j < last {
            (j + 1, self.states[j + 1] - self.states[j])
        } else {
            (last - 1, self.states[last] - self.states[last - 1])
        }
    }

    /// Nearest time index to `t`, clamped to `0..=N`.
    pub fn nearest_time_index(&self, t: f64) -> usize {
        let i = (t / self.dt).round();
        i.clamp(0.0, self.time_steps as f64) as usize
    }

    /// Time index that a claim at time `t` acts on: the `i` with
    /// `t ∈ (t_{i−1}, t_i]`, with a small tolerance so that claims placed on
    /// a grid time land on that time.
    pub fn claim_time_index(&self, t: f64) -> usize {
        let x = t / self.dt;
        let i = if (x - x.round()).abs() <= 1e-9 * x.abs().max(1.0) {
            x.round()
        } else {
            x.ceil()
        };
        i.clamp(1.0, self.time_steps as f64) as usize
    }
}
