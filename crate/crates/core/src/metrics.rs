//! Performance statistics of a daily return series.

use serde::{Deserialize, Serialize};

use crate::cvar::{empirical_cvar, TailSpec};
use crate::error::{Error, Result};
use crate::stats::mean;

pub const TRADING_DAYS: usize = 252;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricBundle {
    pub mean_daily: f64,
    pub std_daily: f64,
    /// Empirical CVaR of daily losses (negated returns).
    pub cvar_tail: f64,
    /// NaN when `std_daily == 0`; see `sharpe_defined`.
    pub sharpe_annualized: f64,
    pub sharpe_defined: bool,
    pub mean_over_cvar: f64,
    pub max_drawdown: f64,
    /// Sharpe over trailing windows; entry `k` covers days `k..k+252`.
    pub rolling_sharpe: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WealthPath {
    pub values: Vec<f64>,
    /// Set when some return was `<= -1`; `values` then stops at that date (0.0).
    pub bankrupt: bool,
}

/// Population standard deviation, exactly zero on a constant series.
fn std_daily(xs: &[f64]) -> f64 {
    if xs.windows(2).all(|w| w[0] == w[1]) {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

pub fn annualized_sharpe(mean_daily: f64, std_daily: f64) -> f64 {
    if std_daily == 0.0 {
        return f64::NAN;
    }
    (TRADING_DAYS as f64).sqrt() * mean_daily / std_daily
}

pub fn mean_over_cvar(mean_daily: f64, cvar: f64) -> f64 {
    if cvar == 0.0 {
        f64::NAN
    } else {
        mean_daily / cvar
    }
}

pub fn rolling_sharpe(returns: &[f64], window: usize) -> Vec<f64> {
    if window < 2 || returns.len() < window {
        return Vec::new();
    }
    returns.windows(window).map(|w| annualized_sharpe(mean(w), std_daily(w))).collect()
}

/// Largest peak-to-trough fractional decline of `wealth`.
pub fn max_drawdown(wealth: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst = 0.0f64;
    for &w in wealth {
        peak = peak.max(w);
        if peak > 0.0 {
            worst = worst.max((peak - w) / peak);
        }
    }
    worst.clamp(0.0, 1.0)
}

pub fn cumulative_wealth(returns: &[f64], initial: f64) -> WealthPath {
    let mut values = Vec::with_capacity(returns.len() + 1);
    values.push(initial);
    let mut w = initial;
    for &r in returns {
        if r <= -1.0 {
            values.push(0.0);
            return WealthPath { values, bankrupt: true };
        }
        w *= 1.0 + r;
        values.push(w);
    }
    WealthPath { values, bankrupt: false }
}

pub fn compute_metrics(returns: &[f64], tail: TailSpec) -> Result<MetricBundle> {
    if returns.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "metrics need at least 2 returns, got {}",
            returns.len()
        )));
    }
    if let Some(bad) = returns.iter().find(|r| !r.is_finite()) {
        return Err(Error::arg(format!("non-finite return {bad}")));
    }
    let mean_daily = mean(returns);
    let std = std_daily(returns);
    let losses: Vec<f64> = returns.iter().map(|r| -r).collect();
    let cvar_tail = empirical_cvar(&losses, tail)?;
    let sharpe = annualized_sharpe(mean_daily, std);
    let wealth = cumulative_wealth(returns, 1.0);
    Ok(MetricBundle {
        mean_daily,
        std_daily: std,
        cvar_tail,
        sharpe_annualized: sharpe,
        sharpe_defined: sharpe.is_finite(),
        mean_over_cvar: mean_over_cvar(mean_daily, cvar_tail),
        max_drawdown: max_drawdown(&wealth.values),
        rolling_sharpe: rolling_sharpe(returns, TRADING_DAYS),
    })
}
