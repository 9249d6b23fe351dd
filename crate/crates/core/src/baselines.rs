//! Comparison models: box-uncertainty mean-CVaR (BMC) and moment-ambiguity
//! mean-risk (KMC), plus bootstrap calibration of the moment ball.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conic::{Affine, ConicProgram};
use crate::cvar::TailSpec;
use crate::error::{Error, Result};
use crate::market_data::ReturnsMatrix;
use crate::nonrobust::{add_long_only, budget_row, check_dims, SolveReport};
use crate::stats::{covariance, psd_factor, psd_pinv, sort_ascending, sorted_quantile, sym_spectral_norm};

/// Probabilities `p = p0 + η` with `1'η = 0` and `lower ≤ η ≤ upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub p0: Vec<f64>,
    pub eta_lower: Vec<f64>,
    pub eta_upper: Vec<f64>,
}

impl BoxSpec {
    pub fn new(p0: Vec<f64>, eta_lower: Vec<f64>, eta_upper: Vec<f64>) -> Result<Self> {
        let n = p0.len();
        if n == 0 || eta_lower.len() != n || eta_upper.len() != n {
            return Err(Error::arg("box vectors must be nonempty and of equal length"));
        }
        if p0.iter().any(|&p| p < 0.0) || (p0.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("nominal probabilities must be nonnegative and sum to 1".into()));
        }
        for i in 0..n {
            let (lo, hi) = (eta_lower[i], eta_upper[i]);
            if lo > 0.0 || hi < 0.0 || p0[i] + lo < -1e-12 || p0[i] + hi > 1.0 + 1e-12 {
                return Err(Error::Config(format!(
                    "box bounds [{lo}, {hi}] at {i} must bracket 0 and keep p in [0, 1]"
                )));
            }
        }
        Ok(BoxSpec { p0, eta_lower, eta_upper })
    }

    /// Uniform `p0` with symmetric bounds `±width/N`.
    pub fn uniform(n_obs: usize, width: f64) -> Result<Self> {
        let p = 1.0 / n_obs as f64;
        let w = width.abs() * p;
        BoxSpec::new(vec![p; n_obs], vec![-w; n_obs], vec![w; n_obs])
    }

    pub fn len(&self) -> usize {
        self.p0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p0.is_empty()
    }
}

/// min a + (1/α)(p0'u + η̄'ξ + η̲'ω)  over the box dual, with the worst-case
/// box mean `p0'(Rπ) + η̄'τ + η̲'ν ≥ ρ` and `0 ≤ π ≤ 1`, `1'π = 1`.
pub fn solve_bmc(r: &ReturnsMatrix, bx: &BoxSpec, rho: f64, tail: TailSpec) -> Result<SolveReport> {
    check_dims(r)?;
    let (n, big_n) = (r.n_assets(), r.n_obs());
    if bx.len() != big_n {
        return Err(Error::arg(format!("box has {} entries for {} samples", bx.len(), big_n)));
    }
    let alpha = tail.tail_mass();
    // variable layout
    let a = n;
    let zeta = n + 1;
    let u0 = n + 2;
    let z = u0 + big_n;
    let xi0 = z + 1;
    let om0 = xi0 + big_n;
    let db = om0 + big_n;
    let tau0 = db + 1;
    let nu0 = tau0 + big_n;
    let mut p = ConicProgram::new(nu0 + big_n);
    p.set_cost(zeta, 1.0);

    let budget = p.eq(budget_row(n));
    // ζ ≥ a + (1/α)(p0'u + η̄'ξ + η̲'ω)
    let mut e = Affine::var(zeta, 1.0).add(a, -1.0);
    for i in 0..big_n {
        e = e
            .add(u0 + i, -bx.p0[i] / alpha)
            .add(xi0 + i, -bx.eta_upper[i] / alpha)
            .add(om0 + i, -bx.eta_lower[i] / alpha);
    }
    p.nonneg(e);
    let mut mean = Affine::constant(-rho);
    for (i, row) in r.rows().enumerate() {
        // z + ξ_i + ω_i = u_i
        p.eq(Affine::var(z, 1.0).add(xi0 + i, 1.0).add(om0 + i, 1.0).add(u0 + i, -1.0));
        // δ + τ_i + ν_i = π'R_i
        let e = row
            .iter()
            .enumerate()
            .fold(Affine::var(db, 1.0).add(tau0 + i, 1.0).add(nu0 + i, 1.0), |e, (j, &x)| e.add(j, -x));
        p.eq(e);
        // u_i ≥ -π'R_i - a, u_i ≥ 0
        p.nonneg(
            row.iter()
                .enumerate()
                .fold(Affine::var(u0 + i, 1.0).add(a, 1.0), |e, (j, &x)| e.add(j, x)),
        );
        p.nonneg(Affine::var(u0 + i, 1.0));
        p.nonneg(Affine::var(xi0 + i, 1.0));
        p.nonneg(Affine::var(om0 + i, -1.0));
        p.nonneg(Affine::var(tau0 + i, -1.0));
        p.nonneg(Affine::var(nu0 + i, 1.0));
        for (j, &x) in row.iter().enumerate() {
            mean = mean.add(j, bx.p0[i] * x);
        }
        mean = mean.add(tau0 + i, bx.eta_upper[i]).add(nu0 + i, bx.eta_lower[i]);
    }
    let mean_row = p.nonneg(mean);
    add_long_only(&mut p, n);
    for j in 0..n {
        p.nonneg(Affine::constant(1.0).add(j, -1.0));
    }
    let sol = p.solve();
    let mut rep = SolveReport::from_conic("BMC", &sol, n, a);
    rep.duals.insert("lambda1".into(), sol.dual(mean_row));
    rep.duals.insert("lambda2".into(), sol.dual(budget));
    Ok(rep)
}

/// Mean/covariance ambiguity `(μ-μ̂)'Σ̂⁻¹(μ-μ̂) ≤ γ1`, `‖Σ - Σ̂‖₂ ≤ γ2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentAmbiguity {
    pub gamma1: f64,
    pub gamma2: f64,
    pub mu_hat: Vec<f64>,
    pub sigma_hat: Vec<Vec<f64>>,
    /// set when Σ̂ was singular and a pseudo-inverse was used
    pub singular: bool,
}

impl MomentAmbiguity {
    /// Moments of `r` with the given ball sizes.
    pub fn from_returns(r: &ReturnsMatrix, gamma1: f64, gamma2: f64) -> Result<Self> {
        if !(gamma1 >= 0.0 && gamma2 >= 0.0) {
            return Err(Error::Config("moment ball sizes must be nonnegative".into()));
        }
        let (mu, sigma) = covariance(r.rows(), r.n_assets());
        let (_, singular) = psd_pinv(&sigma);
        Ok(MomentAmbiguity {
            gamma1,
            gamma2,
            mu_hat: mu,
            sigma_hat: rows_of(&sigma),
            singular,
        })
    }
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KmcOptions {
    pub long_only: bool,
    /// use the confidence level `1 - tail_mass` (rather than the tail mass)
    /// in `α̂ = √(α/(1-α))`
    pub alpha_is_confidence: bool,
}

impl Default for KmcOptions {
    fn default() -> Self {
        KmcOptions {
            long_only: true,
            alpha_is_confidence: true,
        }
    }
}

impl KmcOptions {
    pub fn alpha_hat(&self, tail: TailSpec) -> f64 {
        let a = if self.alpha_is_confidence {
            tail.reporting_level()
        } else {
            tail.tail_mass()
        };
        (a / (1.0 - a)).sqrt()
    }
}

/// min -μ̂'π + √γ1 k + α̂ j  s.t.  √γ1 ‖Σ̂^{1/2}π‖ ≤ μ̂'π - ρ,
/// ‖(Σ̂ + γ2 I)^{1/2}π‖ ≤ j, ‖Σ̂^{1/2}π‖ ≤ k, 1'π = 1.
///
/// The model has no CVaR threshold; the report's threshold is 0.
pub fn solve_kmc(
    r: &ReturnsMatrix,
    amb: &MomentAmbiguity,
    rho: f64,
    tail: TailSpec,
    opts: &KmcOptions,
) -> Result<SolveReport> {
    check_dims(r)?;
    let n = r.n_assets();
    if amb.mu_hat.len() != n || amb.sigma_hat.len() != n {
        return Err(Error::arg("moment estimates disagree with the asset count"));
    }
    let sigma = DMatrix::from_fn(n, n, |i, j| amb.sigma_hat[i][j]);
    let (f, min_eig) = psd_factor(&sigma);
    if min_eig < -1e-10 * sigma.amax().max(1e-300) {
        return Err(Error::Covariance { min_eigenvalue: min_eig });
    }
    // rows of fᵀπ, so that ‖fᵀπ‖² = π'Σ̂π
    let sqrt_rows: Vec<Affine> = (0..n)
        .map(|k| (0..n).fold(Affine::new(), |e, j| e.add(j, f[(j, k)])))
        .collect();
    let (j_var, k_var) = (n, n + 1);
    let mut p = ConicProgram::new(n + 2);
    for (i, m) in amb.mu_hat.iter().enumerate() {
        p.set_cost(i, -m);
    }
    let g1 = amb.gamma1.sqrt();
    p.set_cost(k_var, g1);
    p.set_cost(j_var, opts.alpha_hat(tail));
    let budget = p.eq(budget_row(n));
    let mean_expr = amb
        .mu_hat
        .iter()
        .enumerate()
        .fold(Affine::constant(-rho), |e, (i, &m)| e.add(i, m));
    let mean = if amb.gamma1 == 0.0 {
        p.nonneg(mean_expr)
    } else {
        let tail_rows = sqrt_rows
            .iter()
            .map(|e| Affine {
                terms: e.terms.iter().map(|&(j, c)| (j, c * g1)).collect(),
                constant: 0.0,
            })
            .collect();
        p.soc(mean_expr, tail_rows)
    };
    let mut j_tail = sqrt_rows.clone();
    if amb.gamma2 > 0.0 {
        let g2 = amb.gamma2.sqrt();
        j_tail.extend((0..n).map(|i| Affine::var(i, g2)));
    }
    p.soc(Affine::var(j_var, 1.0), j_tail);
    p.soc(Affine::var(k_var, 1.0), sqrt_rows);
    if opts.long_only {
        add_long_only(&mut p, n);
    }
    let sol = p.solve();
    let mut rep = SolveReport::from_conic("KMC", &sol, n, n);
    rep.portfolio.threshold = 0.0;
    rep.duals.insert("mean".into(), sol.dual(mean));
    rep.duals.insert("lambda2".into(), sol.dual(budget));
    rep.duals.insert("gamma1".into(), amb.gamma1);
    rep.duals.insert("gamma2".into(), amb.gamma2);
    Ok(rep)
}

/// Percentile bootstrap for the moment ball: `γ1` and `γ2` are the `level`
/// quantiles of `(μ_b-μ̂)'Σ̂⁺(μ_b-μ̂)` and `‖Σ_b - Σ̂‖₂` over `b_count`
/// row resamples. Resample `b` draws from ChaCha stream `b` of `seed`.
pub fn bootstrap_gammas(r: &ReturnsMatrix, b_count: usize, level: f64, seed: u64) -> Result<MomentAmbiguity> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("bootstrap level {level} must lie in (0, 1)")));
    }
    if b_count == 0 {
        return Err(Error::Config("bootstrap needs at least one resample".into()));
    }
    if r.n_obs() < 2 {
        return Err(Error::InsufficientData("bootstrap needs at least two rows".into()));
    }
    let (n, big_n) = (r.n_assets(), r.n_obs());
    let (mu, sigma) = covariance(r.rows(), n);
    let (pinv, singular) = psd_pinv(&sigma);
    let mu_v = DVector::from_column_slice(&mu);
    let draws: Vec<(f64, f64)> = (0..b_count)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let idx: Vec<usize> = (0..big_n).map(|_| rng.gen_range(0..big_n)).collect();
            let (mb, sb) = covariance(idx.iter().map(|&i| r.row(i)), n);
            let d = DVector::from_column_slice(&mb) - &mu_v;
            let d1 = (d.transpose() * &pinv * &d)[(0, 0)].max(0.0);
            let d2 = sym_spectral_norm(&(sb - &sigma));
            (d1, d2)
        })
        .collect();
    let g1: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let g2: Vec<f64> = draws.iter().map(|d| d.1).collect();
    Ok(MomentAmbiguity {
        gamma1: sorted_quantile(&sort_ascending(&g1), level),
        gamma2: sorted_quantile(&sort_ascending(&g2), level),
        mu_hat: mu,
        sigma_hat: rows_of(&sigma),
        singular,
    })
}
