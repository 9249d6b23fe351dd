//! Distributionally robust mean-CVaR portfolio selection over Wasserstein balls.
//!
//! The crate is organised bottom-up:
//!
//! * [`market_data`] reads price panels and turns them into return matrices.
//! * [`cvar`] holds the loss, VaR/CVaR estimators and the softplus smoothing.
//! * [`nonrobust`] solves the sample mean-CVaR LP and the smoothed
//!   equality-constrained problem whose multipliers feed radius selection.
//! * [`radius`] picks the ambiguity radius from Monte-Carlo quantiles of the
//!   asymptotic profile-function bounds.
//! * [`robust`] solves the two Wasserstein dual programs (order 1 and 2).
//! * [`baselines`] has the box-uncertainty and moment-ambiguity competitors.
//! * [`backtest`] and [`metrics`] run the threshold-rebalancing simulation
//!   and compute the reported statistics.
//! * [`oracle`] evaluates worst-case expectations by brute force on tiny
//!   instances; it is used to validate the dual programs.
//! * [`pipeline`] wires everything together for the command-line tool.

pub mod backtest;
pub mod baselines;
mod conic;
pub mod cvar;
mod error;
pub mod market_data;
pub mod metrics;
pub mod nonrobust;
pub mod oracle;
pub mod pipeline;
pub mod radius;
pub mod robust;
mod stats;

pub use error::{Error, Result};

pub use cvar::{empirical_cvar, empirical_var, loss, smooth_objective, smooth_plus, SmoothingParam, TailSpec};
pub use market_data::{compute_returns, load_prices, split, PriceSeries, ReturnsMatrix};
pub use nonrobust::{multiplier_limits, MultiplierLimits, solve_nmc, solve_smooth, Portfolio, SmoothKktState, SolveReport, SolveStatus};
pub use robust::{solve_rmc1, solve_rmc2, worst_case_cvar_value, worst_case_mean, Kappa, RobustConfig};
pub use radius::{sample_rwp_bound, select_radius, ztilde_covariance, RadiusConfig, RadiusResult};
pub use baselines::{bootstrap_gammas, solve_bmc, solve_kmc, BoxSpec, KmcOptions, MomentAmbiguity};
pub use backtest::{drift, run_backtest, BacktestOptions, BacktestResult, StrategySchedule, TcMode};
pub use metrics::{compute_metrics, cumulative_wealth, MetricBundle, WealthPath};
pub use pipeline::{cmd_backtest, cmd_compare, cmd_ingest, cmd_radius, cmd_solve, RunConfig, Strategy};
