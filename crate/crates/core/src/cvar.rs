//! Portfolio loss, empirical VaR/CVaR and the softplus smoothing of `[x]^+`.
//!
//! Tail probabilities are carried as a *tail mass* `α` (e.g. 0.05), which is
//! the quantity appearing as `1/α` in `CVaR = min_a { a + E[L-a]^+ / α }`.
//! Reports label the same number as `CVaR_{1-α}` (e.g. `CVaR_0.95`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::ReturnsMatrix;
use crate::stats::{dot, sort_ascending, sorted_quantile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct TailSpec(f64);

impl TailSpec {
    pub fn new(tail_mass: f64) -> Result<Self> {
        if tail_mass > 0.0 && tail_mass < 1.0 {
            Ok(TailSpec(tail_mass))
        } else {
            Err(Error::Config(format!("tail mass {tail_mass} must lie in (0, 1)")))
        }
    }

    pub fn tail_mass(self) -> f64 {
        self.0
    }

    /// `1 - tail_mass`, the confidence level used in report labels.
    pub fn reporting_level(self) -> f64 {
        1.0 - self.0
    }

    pub fn label(self) -> String {
        format!("CVaR_{}", self.reporting_level())
    }
}

impl Default for TailSpec {
    fn default() -> Self {
        TailSpec(0.05)
    }
}

impl TryFrom<f64> for TailSpec {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        TailSpec::new(v)
    }
}

impl From<TailSpec> for f64 {
    fn from(t: TailSpec) -> f64 {
        t.0
    }
}

/// Softplus temperature `t > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SmoothingParam(f64);

impl SmoothingParam {
    pub fn new(t: f64) -> Result<Self> {
        if t > 0.0 && t.is_finite() {
            Ok(SmoothingParam(t))
        } else {
            Err(Error::Config(format!("smoothing parameter {t} must be positive")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for SmoothingParam {
    fn default() -> Self {
        SmoothingParam(1e-4)
    }
}

impl TryFrom<f64> for SmoothingParam {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        SmoothingParam::new(v)
    }
}

impl From<SmoothingParam> for f64 {
    fn from(t: SmoothingParam) -> f64 {
        t.0
    }
}

/// `-π'R`.
pub fn loss(weights: &[f64], returns: &[f64]) -> Result<f64> {
    if weights.len() != returns.len() {
        return Err(Error::arg(format!(
            "weight length {} differs from return length {}",
            weights.len(),
            returns.len()
        )));
    }
    Ok(-dot(weights, returns))
}

/// Losses of a fixed portfolio on every sample row.
pub fn portfolio_losses(weights: &[f64], r: &ReturnsMatrix) -> Result<Vec<f64>> {
    r.rows().map(|row| loss(weights, row)).collect()
}

/// `min{l : F(l) >= 1 - tail_mass}` for the empirical loss distribution.
pub fn empirical_var(losses: &[f64], tail: TailSpec) -> Result<f64> {
    if losses.is_empty() {
        return Err(Error::arg("VaR of an empty sample"));
    }
    Ok(sorted_quantile(&sort_ascending(losses), tail.reporting_level()))
}

/// Average of the worst `tail_mass` fraction of losses, the atom at the VaR
/// carrying the fractional remainder. Written as `VaR + Σ(L-VaR)^+ / (αN)`,
/// which is the same quantity without floating-point bookkeeping of the
/// fractional weight.
pub fn empirical_cvar(losses: &[f64], tail: TailSpec) -> Result<f64> {
    let var = empirical_var(losses, tail)?;
    let excess: f64 = losses.iter().map(|l| (l - var).max(0.0)).sum();
    Ok(var + excess / (tail.tail_mass() * losses.len() as f64))
}

/// `t ln(1 + exp(x/t))`, evaluated without overflow.
pub fn smooth_plus(t: SmoothingParam, x: f64) -> f64 {
    let t = t.get();
    if x > 0.0 {
        x + t * (-x / t).exp().ln_1p()
    } else {
        t * (x / t).exp().ln_1p()
    }
}

/// Logistic function `1/(1+exp(-y))`, the derivative of softplus in `x/t`.
pub(crate) fn logistic(y: f64) -> f64 {
    if y >= 0.0 {
        1.0 / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        e / (1.0 + e)
    }
}

/// `a + (1/α) mean_i smooth_plus(t, -π'R_i - a)`.
pub fn smooth_objective(
    weights: &[f64],
    threshold: f64,
    t: SmoothingParam,
    r: &ReturnsMatrix,
    tail: TailSpec,
) -> Result<f64> {
    if weights.len() != r.n_assets() {
        return Err(Error::arg(format!(
            "weight length {} differs from asset count {}",
            weights.len(),
            r.n_assets()
        )));
    }
    let total: f64 = r
        .rows()
        .map(|row| smooth_plus(t, -dot(weights, row) - threshold))
        .sum();
    Ok(threshold + total / (tail.tail_mass() * r.n_obs() as f64))
}
