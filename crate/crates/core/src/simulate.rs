//! Claim schedules and the forward wealth integrator.
//!
//! Poisson schedules are drawn with ChaCha20 (`rand_chacha`) keyed by the
//! seed: the seed's little-endian bytes fill the first 8 bytes of the 32-byte
//! key, the rest are zero. Each inter-arrival gap is `−ln(u)/λ` with
//! `u = ((next_u64 >> 11) + 1) · 2^{−53}` in `(0, 1]`.

use std::fmt::Write as _;

use rand_chacha::rand_core::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum ScheduleSource {
    Deterministic,
    Poisson { intensity: f64, seed: u64 },
}

/// Claim arrival times on `(0, T]`, each of size `mark`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimSchedule {
    times: Vec<f64>,
    mark: f64,
    source: ScheduleSource,
}

impl ClaimSchedule {
    pub fn deterministic(times: Vec<f64>, mark: f64, horizon: f64) -> Result<Self> {
        Self::build(times, mark, horizon, ScheduleSource::Deterministic)
    }

    fn build(times: Vec<f64>, mark: f64, horizon: f64, source: ScheduleSource) -> Result<Self> {
        if !(mark > 0.0 && mark.is_finite()) {
            return Err(Error::param("simulate", "mark", format!("must be > 0, got {mark}")));
        }
        if let Some(&t) = times.iter().find(|&&t| !(t > 0.0 && t <= horizon)) {
            return Err(Error::param(
                "simulate",
                "claims",
                format!("claim time {t} outside (0, {horizon}]"),
            ));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("simulate", "claims", "claim times must be strictly increasing"));
        }
        Ok(ClaimSchedule { times, mark, source })
    }

    pub fn empty(mark: f64) -> Result<Self> {
        Self::build(Vec::new(), mark, 0.0, ScheduleSource::Deterministic)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }
    pub fn mark(&self) -> f64 {
        self.mark
    }
    pub fn source(&self) -> ScheduleSource {
        self.source
    }
    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Number of claims acting at each time index `0..=N`; a claim in
    /// `(t_{i−1}, t_i]` acts at `t_i`.
    pub fn counts_on(&self, grid: &Grid) -> Vec<u32> {
        let mut counts = vec![0; grid.time_steps() + 1];
        for &t in &self.times {
            counts[grid.claim_time_index(t)] += 1;
        }
        counts
    }

    /// CSV with header `time,mark`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,mark\n");
        for t in &self.times {
            let _ = writeln!(out, "{:.16e},{:.16e}", t, self.mark);
        }
        out
    }

    /// Parses [`to_csv`](Self::to_csv) output. All marks must be equal.
    pub fn from_csv(text: &str, horizon: f64) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next().map(str::trim) {
            Some("time,mark") => {}
            other => {
                return Err(Error::Config(format!(
                    "claim schedule: expected header `time,mark`, got {other:?}"
                )))
            }
        }
        let mut times = Vec::new();
        let mut mark: Option<f64> = None;
        for (n, line) in lines.enumerate() {
            let bad = || Error::Config(format!("claim schedule: malformed row {}: {line:?}", n + 2));
            let (t, m) = line.split_once(',').ok_or_else(bad)?;
            let t: f64 = t.trim().parse().map_err(|_| bad())?;
            let m: f64 = m.trim().parse().map_err(|_| bad())?;
            match mark {
                Some(prev) if prev != m => {
                    return Err(Error::Config("claim schedule: marks must all be equal".into()))
                }
                _ => mark = Some(m),
            }
            times.push(t);
        }
        match mark {
            Some(m) => Self::deterministic(times, m, horizon),
            None => Err(Error::Config("claim schedule: no rows; use an empty claim list instead".into())),
        }
    }
}

/// Poisson arrivals with rate `intensity` on `(0, horizon]`.
pub fn poisson_schedule(intensity: f64, horizon: f64, seed: u64, mark: f64) -> Result<ClaimSchedule> {
    if !(intensity > 0.0 && intensity.is_finite()) {
        return Err(Error::param("simulate", "intensity", format!("must be > 0, got {intensity}")));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::param("simulate", "horizon", format!("must be >= 0, got {horizon}")));
    }
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    let mut rng = ChaCha20Rng::from_seed(key);
    let mut times = Vec::new();
    let mut t = 0.0;
    loop {
        let u = ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        t += -u.ln() / intensity;
        if t > horizon {
            break;
        }
        // a zero gap would break strict monotonicity; u = 1 has probability 2^-53
        if times.last() != Some(&t) {
            times.push(t);
        }
    }
    ClaimSchedule::build(times, mark, horizon, ScheduleSource::Poisson { intensity, seed })
}

/// Euler accumulation of the primal wealth equation on the time grid:
/// `X_i = X_{i−1} + (α − β(1−θ_i)) h_t − θ_i · mark · (claims at t_i)`.
/// `theta[i]` is the strategy at `t_i`; the returned path has the same
/// length and starts at `x`.
pub fn integrate_primal(theta: &[f64], params: &ModelParams, claims: &ClaimSchedule, grid: &Grid, x: f64) -> Vec<f64> {
    let counts = claims.counts_on(grid);
    let dt = grid.dt();
    let mut out = Vec::with_capacity(theta.len());
    let mut w = x;
    for (i, &th) in theta.iter().enumerate() {
        if i > 0 {
            w += (params.alpha() - params.beta() * (1.0 - th)) * dt
                - th * claims.mark() * f64::from(counts[i]);
        }
        out.push(w);
    }
    out
}
