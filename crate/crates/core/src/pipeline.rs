//! End-to-end orchestration: data loading, per-window solves, backtests and
//! report files. Every output embeds a hash of the run configuration.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backtest::{run_backtest, BacktestOptions, BacktestResult, StrategySchedule, TcMode};
use crate::baselines::{bootstrap_gammas, solve_bmc, solve_kmc, BoxSpec, KmcOptions, MomentAmbiguity};
use crate::cvar::{SmoothingParam, TailSpec};
use crate::error::{Error, Result};
use crate::market_data::{compute_returns, load_prices, split, write_prices, PriceSeries, ReturnsMatrix};
use crate::metrics::{compute_metrics, MetricBundle, TRADING_DAYS};
use crate::nonrobust::{solve_nmc, SolveReport, SolveStatus};
use crate::radius::{select_radius, RadiusConfig, RadiusResult};
use crate::robust::{solve_rmc1, solve_rmc2, worst_case_mean, Kappa, RobustConfig};

/// Fraction of the way from the lowest to the highest asset mean used as the
/// target return when none is configured.
pub const AUTO_RHO_FRACTION: f64 = 0.25;

/// Solver weights below this magnitude are treated as exact zeros before
/// they reach the drift test.
const WEIGHT_ZERO: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "NMC")]
    Nmc,
    #[serde(rename = "BMC")]
    Bmc,
    #[serde(rename = "KMC")]
    Kmc,
    #[serde(rename = "RMC1")]
    Rmc1,
    #[serde(rename = "RMC2")]
    Rmc2,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [Strategy::Nmc, Strategy::Bmc, Strategy::Kmc, Strategy::Rmc1, Strategy::Rmc2];

    /// File-name friendly code.
    pub fn code(self) -> &'static str {
        match self {
            Strategy::Nmc => "NMC",
            Strategy::Bmc => "BMC",
            Strategy::Kmc => "KMC",
            Strategy::Rmc1 => "RMC1",
            Strategy::Rmc2 => "RMC2",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Rmc1 => "RMC-1",
            Strategy::Rmc2 => "RMC-2",
            s => s.code(),
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| *c != '-' && *c != '_').collect::<String>().to_ascii_uppercase();
        Strategy::ALL
            .into_iter()
            .find(|st| st.code() == key)
            .ok_or_else(|| Error::Config(format!("unknown strategy `{s}` (expected NMC, BMC, KMC, RMC1, RMC2)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: PathBuf,
    pub output_dir: PathBuf,
    pub in_sample_len: usize,
    pub tail_mass: f64,
    /// Target return; `None` picks `AUTO_RHO_FRACTION` of the in-window mean range.
    pub rho: Option<f64>,
    /// Order used by the `radius` command; RMC1/RMC2 always use 1 and 2.
    pub kappa: Kappa,
    /// Fixed radius for the robust models instead of the selected one.
    pub delta: Option<f64>,
    pub confidence: f64,
    pub mc_samples: usize,
    pub seed: u64,
    pub smoothing_t: f64,
    pub threshold: f64,
    pub tc_rate: f64,
    pub tc_mode: TcMode,
    pub strategies: Vec<Strategy>,
    pub long_only: bool,
    pub lookback: usize,
    pub reestimate_every: usize,
    pub static_weights: bool,
    pub box_width: f64,
    pub bootstrap_samples: usize,
    pub bootstrap_level: f64,
    /// KMC's α̂ uses the confidence level rather than the tail mass
    pub kmc_alpha_is_confidence: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: PathBuf::from("data/synthetic_prices.csv"),
            output_dir: PathBuf::from("out"),
            in_sample_len: 504,
            tail_mass: 0.05,
            rho: None,
            kappa: Kappa::One,
            delta: None,
            confidence: 0.95,
            mc_samples: 10_000,
            seed: 0,
            smoothing_t: 1e-4,
            threshold: 0.05,
            tc_rate: 0.002,
            tc_mode: TcMode::Compound,
            strategies: Strategy::ALL.to_vec(),
            long_only: true,
            lookback: 504,
            reestimate_every: 21,
            static_weights: false,
            box_width: 0.5,
            bootstrap_samples: 200,
            bootstrap_level: 0.95,
            kmc_alpha_is_confidence: true,
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path.as_ref()).map_err(|e| Error::io_at(path.as_ref(), e))?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.tail()?;
        SmoothingParam::new(self.smoothing_t).map_err(|e| Error::Config(e.to_string()))?;
        self.radius_config(self.kappa, self.seed)?;
        if self.in_sample_len < 2 {
            return bad(format!("in_sample_len {} must be at least 2", self.in_sample_len));
        }
        if self.lookback < 2 {
            return bad(format!("lookback {} must be at least 2", self.lookback));
        }
        if self.reestimate_every == 0 {
            return bad("reestimate_every must be positive".into());
        }
        if !(self.threshold > 0.0) {
            return bad(format!("threshold {} must be positive", self.threshold));
        }
        if !(self.tc_rate >= 0.0 && self.tc_rate.is_finite()) {
            return bad(format!("tc_rate {} must be finite and nonnegative", self.tc_rate));
        }
        if self.strategies.is_empty() {
            return bad("no strategies requested".into());
        }
        if let Some(rho) = self.rho {
            if !rho.is_finite() {
                return bad(format!("rho {rho} must be finite"));
            }
        }
        if let Some(d) = self.delta {
            if !(d >= 0.0 && d.is_finite()) {
                return bad(format!("delta {d} must be finite and nonnegative"));
            }
        }
        if !(self.box_width >= 0.0 && self.box_width <= 1.0) {
            return bad(format!("box_width {} must lie in [0, 1]", self.box_width));
        }
        if self.bootstrap_samples == 0 || !(self.bootstrap_level > 0.0 && self.bootstrap_level < 1.0) {
            return bad("bootstrap needs samples > 0 and level in (0, 1)".into());
        }
        Ok(())
    }

    pub fn tail(&self) -> Result<TailSpec> {
        TailSpec::new(self.tail_mass)
    }

    fn radius_config(&self, kappa: Kappa, seed: u64) -> Result<RadiusConfig> {
        RadiusConfig::new(kappa, self.confidence, self.mc_samples, seed).map_err(|e| match e {
            Error::Argument(m) => Error::Config(m),
            e => e,
        })
    }

    /// The configuration as embedded in outputs; the output directory is left
    /// out so that identical runs written to different places agree.
    pub fn fingerprint(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(m) = v.as_object_mut() {
            m.remove("output_dir");
        }
        v
    }

    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(&self.fingerprint()).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

/// `min μ + AUTO_RHO_FRACTION·(max μ - min μ)` over the columns of `r`.
pub fn auto_rho(r: &ReturnsMatrix) -> f64 {
    let mu = r.column_means();
    let lo = mu.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = mu.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    lo + AUTO_RHO_FRACTION * (hi - lo)
}

/// Zeroes solver noise and renormalizes to a unit budget.
pub fn clean_weights(w: &[f64], long_only: bool) -> Vec<f64> {
    let mut out: Vec<f64> = w
        .iter()
        .map(|&x| if x.abs() < WEIGHT_ZERO || (long_only && x < 0.0) { 0.0 } else { x })
        .collect();
    let s: f64 = out.iter().sum();
    if s != 0.0 {
        out.iter_mut().for_each(|x| *x /= s);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSolve {
    pub strategy: Strategy,
    pub rho: f64,
    pub delta: Option<f64>,
    pub report: SolveReport,
    pub radius: Option<RadiusResult>,
    pub ambiguity: Option<MomentAmbiguity>,
}

fn tag(strategy: Strategy) -> impl Fn(Error) -> Error {
    move |e| match e {
        e @ (Error::Solver { .. } | Error::Strategy { .. }) => e,
        e => Error::Strategy { strategy: strategy.to_string(), source: Box::new(e) },
    }
}

/// Model inputs that do not depend on the target return.
enum Model {
    Nmc,
    Bmc(BoxSpec),
    Kmc(MomentAmbiguity, bool),
    Rmc(Kappa, f64),
}

impl Model {
    fn solve(&self, window: &ReturnsMatrix, rho: f64, tail: TailSpec, long_only: bool) -> Result<SolveReport> {
        match self {
            Model::Nmc => solve_nmc(window, rho, tail, long_only),
            Model::Bmc(bx) => solve_bmc(window, bx, rho, tail),
            Model::Kmc(amb, alpha_is_confidence) => {
                let opts = KmcOptions { long_only, alpha_is_confidence: *alpha_is_confidence };
                solve_kmc(window, amb, rho, tail, &opts)
            }
            Model::Rmc(kappa, delta) => {
                let rc = RobustConfig::new(*delta, *kappa, tail, rho, long_only)?;
                match kappa {
                    Kappa::One => solve_rmc1(window, &rc),
                    Kappa::Two => solve_rmc2(window, &rc),
                }
            }
        }
    }

    /// The mean the model guarantees for the equal-weight portfolio.
    fn equal_weight_guarantee(&self, window: &ReturnsMatrix) -> Result<f64> {
        let n = window.n_assets();
        let ew = vec![1.0 / n as f64; n];
        let nominal: Vec<f64> = window.rows().map(|row| row.iter().sum::<f64>() / n as f64).collect();
        Ok(match self {
            Model::Nmc => nominal.iter().sum::<f64>() / nominal.len() as f64,
            Model::Bmc(bx) => box_worst_mean(bx, &nominal),
            Model::Kmc(amb, _) => {
                let var: f64 = amb.sigma_hat.iter().map(|row| row.iter().sum::<f64>()).sum::<f64>() / (n * n) as f64;
                amb.mu_hat.iter().sum::<f64>() / n as f64 - (amb.gamma1 * var.max(0.0)).sqrt()
            }
            Model::Rmc(kappa, delta) => worst_case_mean(&ew, window, *delta, *kappa)?,
        })
    }
}

/// `min p'u` over the box: every probability starts at its lower bound and
/// the missing mass goes to the smallest `u` first.
fn box_worst_mean(bx: &BoxSpec, u: &[f64]) -> f64 {
    let mut p: Vec<f64> = bx.p0.iter().zip(&bx.eta_lower).map(|(p, l)| p + l).collect();
    let mut left = 1.0 - p.iter().sum::<f64>();
    let mut order: Vec<usize> = (0..u.len()).collect();
    order.sort_by(|&i, &j| u[i].total_cmp(&u[j]));
    for i in order {
        let room = bx.eta_upper[i] - bx.eta_lower[i];
        let add = room.min(left);
        p[i] += add;
        left -= add;
    }
    p.iter().zip(u).map(|(p, u)| p * u).sum()
}

/// Solves one strategy on one estimation window.
///
/// With an explicit `cfg.rho` an infeasible target is an error. With the
/// automatic target a robust model that cannot reach it falls back to the
/// mean it guarantees for the equal-weight portfolio, lowered by a thousandth
/// of the nominal mean range so the feasible set keeps an interior.
pub fn solve_window(strategy: Strategy, window: &ReturnsMatrix, cfg: &RunConfig, seed: u64) -> Result<WindowSolve> {
    let tail = cfg.tail()?;
    let nominal = cfg.rho.unwrap_or_else(|| auto_rho(window));
    let mut radius = None;
    let mut ambiguity = None;
    let mut delta = None;
    let model = match strategy {
        Strategy::Nmc => Model::Nmc,
        Strategy::Bmc => Model::Bmc(BoxSpec::uniform(window.n_obs(), cfg.box_width).map_err(tag(strategy))?),
        Strategy::Kmc => {
            let amb = bootstrap_gammas(window, cfg.bootstrap_samples, cfg.bootstrap_level, seed).map_err(tag(strategy))?;
            ambiguity = Some(amb.clone());
            Model::Kmc(amb, cfg.kmc_alpha_is_confidence)
        }
        Strategy::Rmc1 | Strategy::Rmc2 => {
            let kappa = if strategy == Strategy::Rmc1 { Kappa::One } else { Kappa::Two };
            let d = match cfg.delta {
                Some(d) => d,
                None => {
                    let t = SmoothingParam::new(cfg.smoothing_t)?;
                    let res = select_radius(window, nominal, tail, &cfg.radius_config(kappa, seed)?, t).map_err(tag(strategy))?;
                    let d = res.delta_star;
                    radius = Some(res);
                    d
                }
            };
            delta = Some(d);
            Model::Rmc(kappa, d)
        }
    };
    let mut rho = nominal;
    let mut report = model.solve(window, rho, tail, cfg.long_only).map_err(tag(strategy))?;
    if cfg.rho.is_none() && report.status == SolveStatus::Infeasible {
        let mu = window.column_means();
        let range = mu.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - mu.iter().cloned().fold(f64::INFINITY, f64::min);
        let floor = model.equal_weight_guarantee(window).map_err(tag(strategy))? - 1e-3 * range;
        if floor < rho {
            rho = floor;
            report = model.solve(window, rho, tail, cfg.long_only).map_err(tag(strategy))?;
        }
    }
    if !report.is_optimal() {
        return Err(Error::Solver {
            strategy: strategy.to_string(),
            message: format!("status {:?} at rho {rho:e} (kkt residual {:e})", report.status, report.kkt_residual),
        });
    }
    Ok(WindowSolve { strategy, rho, delta, report, radius, ambiguity })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRun {
    pub strategy: Strategy,
    pub schedule: StrategySchedule,
    /// `(day, rho, delta, objective)` for every successful re-estimation.
    pub solves: Vec<(usize, f64, Option<f64>, f64)>,
    /// Re-estimation days whose solve failed; the previous target stays in force.
    pub skipped: Vec<(usize, String)>,
}

/// Targets for the out-of-sample period starting after `cfg.in_sample_len` rows.
pub fn build_schedule(strategy: Strategy, full: &ReturnsMatrix, cfg: &RunConfig) -> Result<StrategyRun> {
    let in_len = cfg.in_sample_len;
    let horizon = full.n_obs().saturating_sub(in_len);
    if in_len == 0 || horizon == 0 {
        return Err(Error::InsufficientData(format!(
            "{} return rows leave no out-of-sample period after {in_len} in-sample rows",
            full.n_obs()
        )));
    }
    let days: Vec<usize> = if cfg.static_weights {
        vec![0]
    } else {
        (0..horizon).step_by(cfg.reestimate_every).collect()
    };
    let mut run = StrategyRun {
        strategy,
        schedule: StrategySchedule { targets: Vec::new(), lookback: cfg.lookback },
        solves: Vec::new(),
        skipped: Vec::new(),
    };
    for (k, &day) in days.iter().enumerate() {
        let end = in_len + day;
        let window = full.slice_rows(end.saturating_sub(cfg.lookback)..end)?;
        match solve_window(strategy, &window, cfg, cfg.seed.wrapping_add(k as u64)) {
            Ok(ws) => {
                let w = clean_weights(&ws.report.portfolio.weights, cfg.long_only);
                run.schedule.targets.push((day, w));
                run.solves.push((day, ws.rho, ws.delta, ws.report.objective));
            }
            Err(e) if k > 0 => run.skipped.push((day, e.to_string())),
            Err(e) => return Err(e),
        }
    }
    Ok(run)
}

/// Runs `f` over the requested strategies in parallel and returns results in
/// request order; the first failure in that order wins.
fn per_strategy<T: Send>(cfg: &RunConfig, f: impl Fn(Strategy) -> Result<T> + Sync) -> Result<Vec<T>> {
    let results: Vec<Result<T>> = cfg.strategies.par_iter().map(|&s| f(s)).collect();
    results.into_iter().collect()
}

fn load_returns(cfg: &RunConfig) -> Result<(PriceSeries, ReturnsMatrix)> {
    let prices = load_prices(&cfg.data)?;
    let r = compute_returns(&prices)?;
    Ok((prices, r))
}

// ---------------------------------------------------------------- output

struct Outputs {
    dir: PathBuf,
    hash: String,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(cfg: &RunConfig) -> Result<Self> {
        fs::create_dir_all(&cfg.output_dir)?;
        Ok(Outputs { dir: cfg.output_dir.clone(), hash: cfg.hash(), written: Vec::new() })
    }

    fn csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
        let path = self.dir.join(name);
        let mut file = BufWriter::new(File::create(&path)?);
        writeln!(file, "# config_hash: {}", self.hash)?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush()?;
        self.written.push(path);
        Ok(())
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let path = self.dir.join(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&path, text)?;
        self.written.push(path);
        Ok(())
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn date_label(r: &ReturnsMatrix, row: usize) -> String {
    r.dates().get(row).map(|d| d.to_string()).unwrap_or_else(|| row.to_string())
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    config_hash: &'a str,
    config: serde_json::Value,
    #[serde(flatten)]
    body: T,
}

fn envelope<'a, T: Serialize>(cfg: &RunConfig, hash: &'a str, body: T) -> Envelope<'a, T> {
    Envelope { config_hash: hash, config: cfg.fingerprint(), body }
}

// ---------------------------------------------------------------- commands

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub price_rows: usize,
    pub dropped_rows: usize,
    pub tickers: Vec<String>,
    pub in_sample_rows: usize,
    pub out_of_sample_rows: usize,
    pub first_date: Option<NaiveDate>,
    pub last_date: Option<NaiveDate>,
}

pub fn cmd_ingest(cfg: &RunConfig) -> Result<IngestSummary> {
    cfg.validate()?;
    let (prices, r) = load_returns(cfg)?;
    let (ins, outs) = split(&r, cfg.in_sample_len)?;
    let mut out = Outputs::new(cfg)?;
    for (name, m) in [("returns_in_sample.csv", &ins), ("returns_out_of_sample.csv", &outs)] {
        let mut header = vec!["date".to_string()];
        header.extend(m.tickers().iter().cloned());
        let rows: Vec<Vec<String>> = m
            .rows()
            .enumerate()
            .map(|(i, row)| std::iter::once(date_label(m, i)).chain(row.iter().map(|&x| num(x))).collect())
            .collect();
        out.csv(name, &header, &rows)?;
    }
    let summary = IngestSummary {
        price_rows: prices.len(),
        dropped_rows: prices.dropped_rows,
        tickers: prices.tickers().to_vec(),
        in_sample_rows: ins.n_obs(),
        out_of_sample_rows: outs.n_obs(),
        first_date: prices.dates().first().copied(),
        last_date: prices.dates().last().copied(),
    };
    let hash = out.hash.clone();
    out.json("ingest.json", &envelope(cfg, &hash, &summary))?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusOutput {
    pub rho: f64,
    pub radius: RadiusResult,
}

pub fn cmd_radius(cfg: &RunConfig) -> Result<RadiusOutput> {
    cfg.validate()?;
    let (_, r) = load_returns(cfg)?;
    let (ins, _) = split(&r, cfg.in_sample_len)?;
    let rho = cfg.rho.unwrap_or_else(|| auto_rho(&ins));
    let t = SmoothingParam::new(cfg.smoothing_t)?;
    let radius = select_radius(&ins, rho, cfg.tail()?, &cfg.radius_config(cfg.kappa, cfg.seed)?, t)?;
    let res = RadiusOutput { rho, radius };
    let mut out = Outputs::new(cfg)?;
    let hash = out.hash.clone();
    out.json("radius.json", &envelope(cfg, &hash, &res))?;
    Ok(res)
}

/// Solves every requested strategy on the in-sample window and writes one
/// `solve_<CODE>.json` per strategy.
pub fn cmd_solve(cfg: &RunConfig) -> Result<Vec<WindowSolve>> {
    cfg.validate()?;
    let (_, r) = load_returns(cfg)?;
    let (ins, _) = split(&r, cfg.in_sample_len)?;
    let solves = per_strategy(cfg, |s| solve_window(s, &ins, cfg, cfg.seed))?;
    let mut out = Outputs::new(cfg)?;
    let hash = out.hash.clone();
    for ws in &solves {
        out.json(&format!("solve_{}.json", ws.strategy.code()), &envelope(cfg, &hash, ws))?;
    }
    Ok(solves)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyOutcome {
    pub strategy: Strategy,
    pub run: StrategyRun,
    pub backtest: BacktestResult,
    pub metrics: MetricBundle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestSummary {
    pub tc_mode: TcMode,
    pub outcomes: Vec<StrategyOutcome>,
}

fn backtest_runs(runs: &[StrategyRun], out_r: &ReturnsMatrix, cfg: &RunConfig, opts: BacktestOptions) -> Result<BacktestSummary> {
    let tail = cfg.tail()?;
    let outcomes = runs
        .iter()
        .map(|run| {
            let bt = run_backtest(&run.schedule, out_r, &opts).map_err(tag(run.strategy))?;
            let metrics = compute_metrics(&bt.daily_returns, tail).map_err(tag(run.strategy))?;
            Ok(StrategyOutcome { strategy: run.strategy, run: run.clone(), backtest: bt, metrics })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BacktestSummary { tc_mode: opts.tc_mode, outcomes })
}

fn write_backtest(out: &mut Outputs, cfg: &RunConfig, full: &ReturnsMatrix, summary: &BacktestSummary, suffix: &str) -> Result<()> {
    let in_len = cfg.in_sample_len;
    let tail = cfg.tail()?;
    let dates: Vec<String> = (0..=full.n_obs() - in_len).map(|k| date_label(full, in_len + k - 1)).collect();

    for o in &summary.outcomes {
        let mut header: Vec<String> = ["date", "wealth", "daily_return", "rebalanced"].iter().map(|s| s.to_string()).collect();
        header.extend(full.tickers().iter().map(|t| format!("w_{t}")));
        let bt = &o.backtest;
        let rows: Vec<Vec<String>> = (0..bt.wealth.len())
            .map(|k| {
                let mut row = vec![
                    dates[k].clone(),
                    num(bt.wealth[k]),
                    if k == 0 { String::new() } else { num(bt.daily_returns[k - 1]) },
                    (k > 0 && bt.rebalance_dates.binary_search(&(k - 1)).is_ok()).to_string(),
                ];
                row.extend(bt.weights_path[k].iter().map(|&w| num(w)));
                row
            })
            .collect();
        out.csv(&format!("backtest_{}{suffix}.csv", o.strategy.code()), &header, &rows)?;
    }

    let mut header = vec!["date".to_string()];
    header.extend(summary.outcomes.iter().map(|o| o.strategy.to_string()));
    let wealth_rows: Vec<Vec<String>> = (0..dates.len())
        .map(|k| std::iter::once(dates[k].clone()).chain(summary.outcomes.iter().map(|o| num(o.backtest.wealth[k]))).collect())
        .collect();
    out.csv(&format!("cumulative_wealth{suffix}.csv"), &header, &wealth_rows)?;

    let n_roll = summary.outcomes.first().map_or(0, |o| o.metrics.rolling_sharpe.len());
    let roll_rows: Vec<Vec<String>> = (0..n_roll)
        .map(|k| {
            std::iter::once(dates[k + TRADING_DAYS].clone())
                .chain(summary.outcomes.iter().map(|o| num(o.metrics.rolling_sharpe[k])))
                .collect()
        })
        .collect();
    out.csv(&format!("rolling_sharpe{suffix}.csv"), &header, &roll_rows)?;

    let mut comp_header = vec!["strategy".to_string(), "day".to_string(), "date".to_string()];
    comp_header.extend(full.tickers().iter().cloned());
    let comp_rows: Vec<Vec<String>> = summary
        .outcomes
        .iter()
        .flat_map(|o| {
            let dates = &dates;
            o.run.schedule.targets.iter().map(move |(day, w)| {
                let mut row = vec![o.strategy.to_string(), day.to_string(), dates[*day].clone()];
                row.extend(w.iter().map(|&x| num(x)));
                row
            })
        })
        .collect();
    out.csv(&format!("composition{suffix}.csv"), &comp_header, &comp_rows)?;

    let metric_header: Vec<String> = [
        "strategy".to_string(),
        "mean_daily".into(),
        "std_daily".into(),
        tail.label(),
        "sharpe_annualized".into(),
        "mean_over_cvar".into(),
        "max_drawdown".into(),
        "n_rebalances".into(),
        "total_tc".into(),
        "final_wealth".into(),
    ]
    .to_vec();
    let metric_rows: Vec<Vec<String>> = summary
        .outcomes
        .iter()
        .map(|o| {
            let m = &o.metrics;
            vec![
                o.strategy.to_string(),
                num(m.mean_daily),
                num(m.std_daily),
                num(m.cvar_tail),
                num(m.sharpe_annualized),
                num(m.mean_over_cvar),
                num(m.max_drawdown),
                o.backtest.n_rebalances().to_string(),
                num(o.backtest.total_tc),
                num(*o.backtest.wealth.last().expect("wealth has a start value")),
            ]
        })
        .collect();
    out.csv(&format!("metrics{suffix}.csv"), &metric_header, &metric_rows)?;
    Ok(())
}

#[derive(Serialize)]
struct StrategyDigest<'a> {
    strategy: Strategy,
    n_targets: usize,
    solves: &'a [(usize, f64, Option<f64>, f64)],
    skipped: &'a [(usize, String)],
    n_rebalances: usize,
    total_tc: f64,
    final_wealth: f64,
    mean_daily: f64,
    std_daily: f64,
    cvar_tail: f64,
    sharpe_annualized: f64,
    mean_over_cvar: f64,
    max_drawdown: f64,
}

fn digests(summary: &BacktestSummary) -> Vec<StrategyDigest<'_>> {
    summary
        .outcomes
        .iter()
        .map(|o| StrategyDigest {
            strategy: o.strategy,
            n_targets: o.run.schedule.targets.len(),
            solves: &o.run.solves,
            skipped: &o.run.skipped,
            n_rebalances: o.backtest.n_rebalances(),
            total_tc: o.backtest.total_tc,
            final_wealth: *o.backtest.wealth.last().expect("wealth has a start value"),
            mean_daily: o.metrics.mean_daily,
            std_daily: o.metrics.std_daily,
            cvar_tail: o.metrics.cvar_tail,
            sharpe_annualized: o.metrics.sharpe_annualized,
            mean_over_cvar: o.metrics.mean_over_cvar,
            max_drawdown: o.metrics.max_drawdown,
        })
        .collect()
}

fn prepare(cfg: &RunConfig) -> Result<(ReturnsMatrix, ReturnsMatrix, Vec<StrategyRun>)> {
    cfg.validate()?;
    let (_, r) = load_returns(cfg)?;
    let (_, out_r) = split(&r, cfg.in_sample_len)?;
    let runs = per_strategy(cfg, |s| build_schedule(s, &r, cfg))?;
    Ok((r, out_r, runs))
}

fn options(cfg: &RunConfig, tc_mode: TcMode) -> BacktestOptions {
    BacktestOptions { threshold: cfg.threshold, tc_rate: cfg.tc_rate, tc_mode }
}

/// Builds the target schedules, backtests them under `cfg.tc_mode` and writes
/// per-strategy paths, figure series and the metrics table.
pub fn cmd_backtest(cfg: &RunConfig) -> Result<BacktestSummary> {
    let (r, out_r, runs) = prepare(cfg)?;
    let summary = backtest_runs(&runs, &out_r, cfg, options(cfg, cfg.tc_mode))?;
    let mut out = Outputs::new(cfg)?;
    write_backtest(&mut out, cfg, &r, &summary, "")?;
    let hash = out.hash.clone();
    #[derive(Serialize)]
    struct Body<'a> {
        tc_mode: TcMode,
        strategies: Vec<StrategyDigest<'a>>,
    }
    out.json("summary.json", &envelope(cfg, &hash, Body { tc_mode: summary.tc_mode, strategies: digests(&summary) }))?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub with_tc: BacktestSummary,
    pub without_tc: BacktestSummary,
    /// Per strategy: charged wealth never exceeds the cost-free wealth.
    pub tc_dominated: Vec<(Strategy, bool)>,
}

/// Backtests the same schedules with compounded costs and without costs.
pub fn cmd_compare(cfg: &RunConfig) -> Result<Comparison> {
    let (r, out_r, runs) = prepare(cfg)?;
    let with_tc = backtest_runs(&runs, &out_r, cfg, options(cfg, TcMode::Compound))?;
    let without_tc = backtest_runs(&runs, &out_r, cfg, options(cfg, TcMode::Off))?;
    let tc_dominated = with_tc
        .outcomes
        .iter()
        .zip(&without_tc.outcomes)
        .map(|(a, b)| (a.strategy, a.backtest.wealth.iter().zip(&b.backtest.wealth).all(|(x, y)| x <= y)))
        .collect();
    let mut out = Outputs::new(cfg)?;
    write_backtest(&mut out, cfg, &r, &with_tc, "_tc")?;
    write_backtest(&mut out, cfg, &r, &without_tc, "_no_tc")?;
    let cmp = Comparison { with_tc, without_tc, tc_dominated };
    #[derive(Serialize)]
    struct Body<'a> {
        with_tc: Vec<StrategyDigest<'a>>,
        without_tc: Vec<StrategyDigest<'a>>,
        tc_dominated: &'a [(Strategy, bool)],
    }
    let hash = out.hash.clone();
    let body = Body { with_tc: digests(&cmp.with_tc), without_tc: digests(&cmp.without_tc), tc_dominated: &cmp.tc_dominated };
    out.json("compare.json", &envelope(cfg, &hash, body))?;
    Ok(cmp)
}

// ---------------------------------------------------------------- synthetic data

/// One-factor Gaussian price panel on weekdays starting 2010-01-04.
///
/// Asset `i` has daily drift rising linearly from 1e-4 to 8e-4, market beta
/// from 0.6 to 1.3 and idiosyncratic volatility cycling through 0.6%-1.2%.
pub fn synthetic_prices(n_assets: usize, n_days: usize, seed: u64) -> Result<PriceSeries> {
    if n_assets == 0 || n_days < 3 {
        return Err(Error::arg("synthetic panel needs at least one asset and three days"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let frac = |i: usize| if n_assets == 1 { 0.0 } else { i as f64 / (n_assets - 1) as f64 };
    let drift: Vec<f64> = (0..n_assets).map(|i| 1e-4 + 7e-4 * frac(i)).collect();
    let beta: Vec<f64> = (0..n_assets).map(|i| 0.6 + 0.7 * frac(i)).collect();
    let idio: Vec<f64> = (0..n_assets).map(|i| 0.006 + 0.003 * (i % 3) as f64).collect();

    let mut dates = Vec::with_capacity(n_days);
    let mut d = NaiveDate::from_ymd_opt(2010, 1, 4).expect("valid date");
    while dates.len() < n_days {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            dates.push(d);
        }
        d = d + Days::new(1);
    }

    let mut p = vec![100.0; n_assets];
    let mut prices = Vec::with_capacity(n_days);
    prices.push(p.clone());
    for _ in 1..n_days {
        let market = 0.009 * std_normal.sample(&mut rng);
        for i in 0..n_assets {
            let r = drift[i] + beta[i] * market + idio[i] * std_normal.sample(&mut rng);
            p[i] *= 1.0 + r.max(-0.5);
        }
        prices.push(p.clone());
    }
    let tickers = (1..=n_assets).map(|i| format!("SYN{i:02}")).collect();
    PriceSeries::new(dates, tickers, prices)
}

pub fn write_synthetic(path: impl AsRef<Path>, n_assets: usize, n_days: usize, seed: u64) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let p = synthetic_prices(n_assets, n_days, seed)?;
    write_prices(&p, BufWriter::new(File::create(path)?))
}
