//! Wasserstein-robust mean-CVaR programs for transport orders 1 and 2.
//!
//! For order 1 the radius `delta` is a distance; for order 2 it is a budget
//! on the squared transport cost, so `√delta` appears in the worst-case mean.

use serde::{Deserialize, Serialize};

use crate::conic::{Affine, ConicProgram};
use crate::cvar::TailSpec;
use crate::error::{Error, Result};
use crate::market_data::ReturnsMatrix;
use crate::nonrobust::{add_long_only, budget_row, check_dims, solve_nmc, SolveReport};
use crate::stats::{dot, norm2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Kappa {
    One,
    Two,
}

impl Kappa {
    pub fn order(self) -> u8 {
        match self {
            Kappa::One => 1,
            Kappa::Two => 2,
        }
    }
}

impl TryFrom<u8> for Kappa {
    type Error = Error;
    fn try_from(k: u8) -> Result<Self> {
        match k {
            1 => Ok(Kappa::One),
            2 => Ok(Kappa::Two),
            _ => Err(Error::Config(format!("transport order must be 1 or 2, got {k}"))),
        }
    }
}

impl From<Kappa> for u8 {
    fn from(k: Kappa) -> u8 {
        k.order()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustConfig {
    pub delta: f64,
    pub kappa: Kappa,
    pub tail: TailSpec,
    pub rho: f64,
    pub long_only: bool,
}

impl RobustConfig {
    pub fn new(delta: f64, kappa: Kappa, tail: TailSpec, rho: f64, long_only: bool) -> Result<Self> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::Config(format!("radius {delta} must be a nonnegative number")));
        }
        Ok(RobustConfig {
            delta,
            kappa,
            tail,
            rho,
            long_only,
        })
    }

    fn mean_shift(&self) -> f64 {
        match self.kappa {
            Kappa::One => self.delta,
            Kappa::Two => self.delta.sqrt(),
        }
    }
}

/// `E_Q[π'R] - δ‖π‖` (order 1) or `E_Q[π'R] - √δ‖π‖` (order 2).
pub fn worst_case_mean(pi: &[f64], r: &ReturnsMatrix, delta: f64, kappa: Kappa) -> Result<f64> {
    if pi.len() != r.n_assets() {
        return Err(Error::arg("weight length differs from asset count"));
    }
    if !(delta >= 0.0) {
        return Err(Error::arg("radius must be nonnegative"));
    }
    let mean = dot(pi, &r.column_means());
    let shift = match kappa {
        Kappa::One => delta,
        Kappa::Two => delta.sqrt(),
    };
    Ok(mean - shift * norm2(pi))
}

/// Adds `μ'π - shift·w ≥ ρ` and `‖π‖ ≤ w`; returns the mean row.
fn add_worst_mean(p: &mut ConicProgram, r: &ReturnsMatrix, w: usize, shift: f64, rho: f64) -> crate::conic::RowId {
    let n = r.n_assets();
    let mu = r.column_means();
    let row = p.nonneg(
        mu.iter()
            .enumerate()
            .fold(Affine::constant(-rho).add(w, -shift), |e, (j, &m)| e.add(j, m)),
    );
    p.soc(Affine::var(w, 1.0), (0..n).map(|j| Affine::var(j, 1.0)).collect());
    row
}

/// min a + (1/α)(E_Q[-π'R - a]^+ + δ‖π‖)  s.t.  μ'π - δ‖π‖ ≥ ρ, 1'π = 1.
pub fn solve_rmc1(r: &ReturnsMatrix, cfg: &RobustConfig) -> Result<SolveReport> {
    check_dims(r)?;
    let (n, big_n) = (r.n_assets(), r.n_obs());
    let alpha = cfg.tail.tail_mass();
    let (a, u0, w) = (n, n + 1, n + 1 + big_n);
    let mut p = ConicProgram::new(n + 2 + big_n);
    p.set_cost(a, 1.0);
    for i in 0..big_n {
        p.set_cost(u0 + i, 1.0 / (alpha * big_n as f64));
    }
    p.set_cost(w, cfg.delta / alpha);
    let budget = p.eq(budget_row(n));
    for (i, row) in r.rows().enumerate() {
        p.nonneg(
            row.iter()
                .enumerate()
                .fold(Affine::var(u0 + i, 1.0).add(a, 1.0), |e, (j, &x)| e.add(j, x)),
        );
        p.nonneg(Affine::var(u0 + i, 1.0));
    }
    let mean = add_worst_mean(&mut p, r, w, cfg.delta, cfg.rho);
    if cfg.long_only {
        add_long_only(&mut p, n);
    }
    let sol = p.solve();
    let mut rep = SolveReport::from_conic("RMC1", &sol, n, a);
    rep.duals.insert("lambda1".into(), sol.dual(mean));
    rep.duals.insert("lambda2".into(), sol.dual(budget));
    Ok(rep)
}

/// min γδ + (1/N)Σ s_i  s.t.  s_i ≥ a,
/// s_i ≥ ‖π‖²/(4γα²) - (1/α)π'R_i + a(1 - 1/α), μ'π - √δ‖π‖ ≥ ρ, 1'π = 1.
///
/// The shared term `‖π‖²/(4γα²)` is carried by one epigraph variable `v`
/// with `‖π‖² ≤ 4α²γ·v`. At `δ = 0` the program is the sample LP.
pub fn solve_rmc2(r: &ReturnsMatrix, cfg: &RobustConfig) -> Result<SolveReport> {
    check_dims(r)?;
    let (n, big_n) = (r.n_assets(), r.n_obs());
    if cfg.delta == 0.0 {
        let mut rep = solve_nmc(r, cfg.rho, cfg.tail, cfg.long_only)?;
        rep.model = "RMC2".into();
        rep.duals.insert("gamma".into(), f64::INFINITY);
        return Ok(rep);
    }
    let alpha = cfg.tail.tail_mass();
    let (a, s0) = (n, n + 1);
    let (gamma, v, w) = (n + 1 + big_n, n + 2 + big_n, n + 3 + big_n);
    let mut p = ConicProgram::new(n + 4 + big_n);
    p.set_cost(gamma, cfg.delta);
    for i in 0..big_n {
        p.set_cost(s0 + i, 1.0 / big_n as f64);
    }
    let budget = p.eq(budget_row(n));
    for (i, row) in r.rows().enumerate() {
        p.nonneg(Affine::var(s0 + i, 1.0).add(a, -1.0));
        let e = row.iter().enumerate().fold(
            Affine::var(s0 + i, 1.0).add(v, -1.0).add(a, 1.0 / alpha - 1.0),
            |e, (j, &x)| e.add(j, x / alpha),
        );
        p.nonneg(e);
    }
    let k = 4.0 * alpha * alpha;
    let mut tail = vec![Affine::var(gamma, k).add(v, -1.0)];
    tail.extend((0..n).map(|j| Affine::var(j, 2.0)));
    p.soc(Affine::var(gamma, k).add(v, 1.0), tail);
    let mean = add_worst_mean(&mut p, r, w, cfg.mean_shift(), cfg.rho);
    if cfg.long_only {
        add_long_only(&mut p, n);
    }
    let sol = p.solve();
    let mut rep = SolveReport::from_conic("RMC2", &sol, n, a);
    rep.duals.insert("gamma".into(), sol.x[gamma]);
    rep.duals.insert("lambda1".into(), sol.dual(mean));
    rep.duals.insert("lambda2".into(), sol.dual(budget));
    Ok(rep)
}

/// Worst-case CVaR at the robust optimum. For order 1 the value is rebuilt
/// from `(π, a)` and the data and must agree with the solver objective.
pub fn worst_case_cvar_value(report: &SolveReport, cfg: &RobustConfig, r: &ReturnsMatrix) -> Result<f64> {
    if !report.is_optimal() {
        return Err(Error::InvalidState(format!(
            "{} report is {:?}, not optimal",
            report.model, report.status
        )));
    }
    if cfg.kappa == Kappa::One {
        let pi = &report.portfolio.weights;
        let a = report.portfolio.threshold;
        let plus: f64 = r.rows().map(|row| (-dot(pi, row) - a).max(0.0)).sum::<f64>() / r.n_obs() as f64;
        let rebuilt = a + (plus + cfg.delta * norm2(pi)) / cfg.tail.tail_mass();
        let gap = (rebuilt - report.objective).abs();
        if gap > RECONSTRUCTION_TOL * report.objective.abs().max(1.0) {
            return Err(Error::InvalidState(format!(
                "objective {} and rebuilt value {rebuilt} differ by {gap:e}",
                report.objective
            )));
        }
    }
    Ok(report.objective)
}

const RECONSTRUCTION_TOL: f64 = 1e-8;
