//! Threshold-rebalancing simulation with linear transaction costs.
//!
//! Holdings start at the first target and then float with asset returns. At
//! the close of every day the normalized holdings are compared with the target
//! in force for the next day; when the largest relative drift strictly exceeds
//! the threshold the book is traded back to target.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::ReturnsMatrix;

/// Relative slack on the strict drift comparison, so that a drift equal to the
/// threshold in exact arithmetic does not trigger through rounding.
const DRIFT_SLACK: f64 = 1e-12;

/// Target weights keyed by the first out-of-sample day they may be traded on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySchedule {
    pub targets: Vec<(usize, Vec<f64>)>,
    /// Trailing window (days) the targets were estimated on.
    pub lookback: usize,
}

impl StrategySchedule {
    pub fn constant(weights: Vec<f64>) -> Self {
        Self { targets: vec![(0, weights)], lookback: 0 }
    }

    /// Latest target whose date is `<= day`.
    pub fn target_at(&self, day: usize) -> &[f64] {
        let k = self.targets.partition_point(|(d, _)| *d <= day);
        &self.targets[k.saturating_sub(1)].1
    }

    fn validate(&self, n_assets: usize, horizon: usize) -> Result<()> {
        let Some((first, _)) = self.targets.first() else {
            return Err(Error::arg("schedule has no targets"));
        };
        if *first != 0 {
            return Err(Error::arg(format!("first target starts on day {first}, not 0")));
        }
        for (k, (d, w)) in self.targets.iter().enumerate() {
            if w.len() != n_assets {
                return Err(Error::arg(format!(
                    "target on day {d} has {} weights for {n_assets} assets",
                    w.len()
                )));
            }
            if *d >= horizon.max(1) {
                return Err(Error::arg(format!("target day {d} outside horizon {horizon}")));
            }
            if k > 0 && *d <= self.targets[k - 1].0 {
                return Err(Error::arg("target days must be strictly increasing"));
            }
            let s: f64 = w.iter().sum();
            if !w.iter().all(|x| x.is_finite()) || (s - 1.0).abs() > 1e-6 {
                return Err(Error::arg(format!("target on day {d} sums to {s}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TcMode {
    /// No costs computed.
    Off,
    /// Costs deducted from wealth at each rebalance.
    Compound,
    /// Costs accumulated in `total_tc` only; the wealth path is cost-free.
    ReportOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BacktestOptions {
    pub threshold: f64,
    pub tc_rate: f64,
    pub tc_mode: TcMode,
}

impl Default for BacktestOptions {
    fn default() -> Self {
        Self { threshold: 0.05, tc_rate: 0.002, tc_mode: TcMode::Compound }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestResult {
    /// `wealth[0]` is the initial 1.0; `wealth[t+1]` is the value after day `t`.
    pub wealth: Vec<f64>,
    /// Days at whose close the book was traded back to target.
    pub rebalance_dates: Vec<usize>,
    pub total_tc: f64,
    pub daily_returns: Vec<f64>,
    /// Normalized holdings aligned with `wealth`.
    pub weights_path: Vec<Vec<f64>>,
}

impl BacktestResult {
    pub fn n_rebalances(&self) -> usize {
        self.rebalance_dates.len()
    }
}

/// `max_i |w_i - π_i| / |w_i|` with `w` the holdings normalized to unit value.
pub fn drift(holdings: &[f64], target: &[f64]) -> Result<f64> {
    if holdings.len() != target.len() {
        return Err(Error::arg("holdings and target differ in length"));
    }
    let total: f64 = holdings.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidState(format!("portfolio value {total} is not positive")));
    }
    let mut worst = 0.0f64;
    for (&h, &p) in holdings.iter().zip(target) {
        let w = h / total;
        let d = if w == 0.0 {
            if p == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            ((w - p) / w).abs()
        };
        worst = worst.max(d);
    }
    Ok(worst)
}

/// Linear cost of trading `holdings` to `value * target`.
pub fn rebalance_cost(holdings: &[f64], target: &[f64], tc_rate: f64) -> f64 {
    let value: f64 = holdings.iter().sum();
    tc_rate * holdings.iter().zip(target).map(|(h, p)| (h - value * p).abs()).sum::<f64>()
}

pub fn run_backtest(schedule: &StrategySchedule, r_out: &ReturnsMatrix, opts: &BacktestOptions) -> Result<BacktestResult> {
    if !(opts.threshold > 0.0) {
        return Err(Error::arg(format!("threshold must be positive, got {}", opts.threshold)));
    }
    if !(opts.tc_rate >= 0.0) || !opts.tc_rate.is_finite() {
        return Err(Error::arg(format!("tc_rate must be finite and nonnegative, got {}", opts.tc_rate)));
    }
    let n = r_out.n_assets();
    let horizon = r_out.n_obs();
    schedule.validate(n, horizon)?;

    let mut holdings = schedule.target_at(0).to_vec();
    let mut wealth = Vec::with_capacity(horizon + 1);
    let mut weights_path = Vec::with_capacity(horizon + 1);
    let mut daily_returns = Vec::with_capacity(horizon);
    let mut rebalance_dates = Vec::new();
    let mut total_tc = 0.0;
    wealth.push(1.0);
    weights_path.push(holdings.clone());

    for (t, row) in r_out.rows().enumerate() {
        holdings.iter_mut().zip(row).for_each(|(h, r)| *h *= 1.0 + r);
        let mut value: f64 = holdings.iter().sum();
        if !(value > 0.0) {
            return Err(Error::InvalidState(format!("portfolio value {value} on day {t}")));
        }
        let target = schedule.target_at(t + 1);
        if drift(&holdings, target)? > opts.threshold * (1.0 + DRIFT_SLACK) {
            let cost = match opts.tc_mode {
                TcMode::Off => 0.0,
                TcMode::Compound | TcMode::ReportOnly => rebalance_cost(&holdings, target, opts.tc_rate),
            };
            total_tc += cost;
            if opts.tc_mode == TcMode::Compound {
                value -= cost;
                if !(value > 0.0) {
                    return Err(Error::InvalidState(format!("costs exhausted wealth on day {t}")));
                }
            }
            holdings = target.iter().map(|p| value * p).collect();
            rebalance_dates.push(t);
        }
        daily_returns.push(value / wealth[t] - 1.0);
        wealth.push(value);
        weights_path.push(holdings.iter().map(|h| h / value).collect());
    }

    Ok(BacktestResult { wealth, rebalance_dates, total_tc, daily_returns, weights_path })
}
