//! Model constants, CRRA utility and its convex conjugate, and the two
//! changes of variables used by the solver.
//!
//! The solver works on `v̄(t, ỹ) = e^{-rt} ṽ(t, y)` with the compact state
//! `ỹ = y / (1 + y) ∈ (0, 1)`, where `ṽ` is the dual value function and `y`
//! the dual state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Economic and utility constants of the proportional insurance problem.
///
/// Construct through [`ModelParams::new`]; the risk-aversion exponent
/// `gamma = eta / (1 - eta)` is derived once at construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    eta: f64,
    gamma: f64,
    alpha: f64,
    beta: f64,
    r: f64,
    delta: f64,
    intensity: f64,
    horizon: f64,
}

impl ModelParams {
    /// Validates and builds a parameter record.
    ///
    /// `alpha < beta` is accepted with a warning: the reference numerical
    /// experiment uses `alpha = 2.1 < beta = 2.15`.
    pub fn new(
        eta: f64,
        alpha: f64,
        beta: f64,
        r: f64,
        delta: f64,
        intensity: f64,
        horizon: f64,
    ) -> Result<Self> {
        fn finite(name: &'static str, v: f64) -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::param("model", name, format!("must be finite, got {v}")))
            }
        }
        for (name, v) in [
            ("eta", eta),
            ("alpha", alpha),
            ("beta", beta),
            ("r", r),
            ("delta", delta),
            ("intensity", intensity),
            ("horizon", horizon),
        ] {
            finite(name, v)?;
        }
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::param("model", "eta", format!("must lie in (0,1), got {eta}")));
        }
        if alpha < 0.0 {
            return Err(Error::param("model", "alpha", format!("must be >= 0, got {alpha}")));
        }
        if beta < 0.0 {
            return Err(Error::param("model", "beta", format!("must be >= 0, got {beta}")));
        }
        if r <= 0.0 {
            return Err(Error::param("model", "r", format!("must be > 0, got {r}")));
        }
        if delta <= 0.0 {
            return Err(Error::param("model", "delta", format!("must be > 0, got {delta}")));
        }
        if intensity <= 0.0 {
            return Err(Error::param(
                "model",
                "intensity",
                format!("must be > 0, got {intensity}"),
            ));
        }
        if horizon <= 0.0 {
            return Err(Error::param("model", "horizon", format!("must be > 0, got {horizon}")));
        }
        let params = ModelParams {
            eta,
            gamma: eta / (1.0 - eta),
            alpha,
            beta,
            r,
            delta,
            intensity,
            horizon,
        };
        for w in params.warnings() {
            log::warn!("{w}");
        }
        Ok(params)
    }

    /// Parameters of the reference experiment: η=0.5, α=2.1, β=2.15,
    /// r=0.05, δ=1, intensity 2, T=1.
    pub fn reference() -> Self {
        Self::new(0.5, 2.1, 2.15, 0.05, 1.0, 2.0, 1.0).expect("reference parameters are valid")
    }

    /// Cheap-reinsurance case α = β = intensity·δ (= 2), where the dual
    /// value function equals the conjugate utility.
    pub fn cheap_reinsurance() -> Self {
        Self::new(0.5, 2.0, 2.0, 0.05, 1.0, 2.0, 1.0).expect("cheap reinsurance parameters are valid")
    }

    /// Same parameters with a different horizon.
    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        Self::new(
            self.eta,
            self.alpha,
            self.beta,
            self.r,
            self.delta,
            self.intensity,
            horizon,
        )
    }

    /// Soft contract violations that do not prevent solving.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.alpha < self.beta {
            out.push(format!(
                "model: alpha ({}) < beta ({}): agent premium below reinsurance premium",
                self.alpha, self.beta
            ));
        }
        out
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn intensity(&self) -> f64 {
        self.intensity
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Control at which `(β − ρδπ)₊` switches off: `β / (δπ)`.
    pub fn kink_control(&self) -> f64 {
        self.beta / (self.delta * self.intensity)
    }

    /// Premium drift coefficient `α − β + (β − ρδπ)₊` multiplying the dual
    /// state in the running cost.
    pub fn premium_rate(&self, rho: f64) -> f64 {
        self.alpha - self.beta + (self.beta - rho * self.delta * self.intensity).max(0.0)
    }

    /// `U(x) = x^η / η`.
    pub fn utility(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::Domain(format!("utility requires wealth >= 0, got {x}")));
        }
        Ok(x.powf(self.eta) / self.eta)
    }

    /// `U'(x) = x^{η−1}` for `x > 0`.
    pub fn marginal_utility(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::Domain(format!("marginal utility requires wealth > 0, got {x}")));
        }
        Ok(x.powf(self.eta - 1.0))
    }

    /// `Ũ(y) = sup_x {U(x) − xy} = y^{−γ} / γ`.
    pub fn conjugate_utility(&self, y: f64) -> Result<f64> {
        check_dual("conjugate_utility", y)?;
        Ok(y.powf(-self.gamma) / self.gamma)
    }

    /// `I(y) = (U')^{-1}(y) = y^{1/(η−1)}`, also `−Ũ'(y)`.
    pub fn inverse_marginal(&self, y: f64) -> Result<f64> {
        check_dual("inverse_marginal", y)?;
        Ok(y.powf(1.0 / (self.eta - 1.0)))
    }

    /// Terminal layer of the transformed problem:
    /// `v̄(T, ỹ) = e^{−rT} ((1−ỹ)/ỹ)^γ / γ = e^{−rT} Ũ(ỹ/(1−ỹ))`.
    pub fn terminal_condition(&self, yt: f64) -> Result<f64> {
        if !(yt > 0.0 && yt < 1.0) {
            return Err(Error::Domain(format!(
                "terminal_condition requires compact state in (0,1), got {yt}"
            )));
        }
        Ok((-self.r * self.horizon).exp() * ((1.0 - yt) / yt).powf(self.gamma) / self.gamma)
    }
}

fn check_dual(op: &str, y: f64) -> Result<()> {
    if y > 0.0 && y.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{op} requires dual state > 0, got {y}")))
    }
}

/// `ỹ = y / (1 + y)`.
pub fn compactify(y: f64) -> Result<f64> {
    check_dual("compactify", y)?;
    Ok(y / (1.0 + y))
}

/// Inverse of [`compactify`]: `y = ỹ / (1 − ỹ)`.
pub fn expand(yt: f64) -> Result<f64> {
    if !(yt > 0.0 && yt < 1.0) {
        return Err(Error::Domain(format!("expand requires compact state in (0,1), got {yt}")));
    }
    Ok(yt / (1.0 - yt))
}

/// Compact image of the jump `y ↦ ρy`: `ρỹ / (1 + ỹ(ρ − 1))`.
pub fn jump_target(yt: f64, rho: f64) -> f64 {
    rho * yt / (1.0 + yt * (rho - 1.0))
}
