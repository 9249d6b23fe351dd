//! Ambiguity radius from Monte-Carlo quantiles of the asymptotic profile
//! bounds: `δ* = η_{1-δ0} / N^{κ/2}`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cvar::{SmoothingParam, TailSpec};
use crate::error::{Error, Result};
use crate::market_data::ReturnsMatrix;
use crate::nonrobust::{multiplier_limits, solve_smooth, MultiplierLimits, SolveStatus};
use crate::robust::Kappa;
use crate::stats::{dot, psd_factor, sort_ascending, sorted_quantile, symmetrize};

const BLOCK: usize = 1024;
const CLIP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusConfig {
    pub kappa: Kappa,
    pub confidence: f64,
    pub mc_samples: usize,
    pub seed: u64,
}

impl RadiusConfig {
    pub fn new(kappa: Kappa, confidence: f64, mc_samples: usize, seed: u64) -> Result<Self> {
        let cfg = RadiusConfig {
            kappa,
            confidence,
            mc_samples,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::Config(format!("confidence {} must lie in (0, 1)", self.confidence)));
        }
        if self.mc_samples < 100 {
            return Err(Error::Config(format!("mc_samples {} must be at least 100", self.mc_samples)));
        }
        Ok(())
    }
}

impl Default for RadiusConfig {
    fn default() -> Self {
        RadiusConfig {
            kappa: Kappa::One,
            confidence: 0.95,
            mc_samples: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusResult {
    pub delta_star: f64,
    pub eta_quantile: f64,
    pub lambda_hats: MultiplierLimits,
    /// order-2 bound constant; `None` for order 1
    pub c_constant: Option<f64>,
    /// set when the order-2 constant was negative and its magnitude was used
    pub c_negative: bool,
    pub covariance: Vec<Vec<f64>>,
    pub n_obs: usize,
    pub config: RadiusConfig,
}

/// `E[v vᵀ]` with `v = (1/α + |λ̂1|)|R| + |λ̂2| 1`.
pub fn ztilde_covariance(r: &ReturnsMatrix, lambda1: f64, lambda2: f64, tail: TailSpec) -> Vec<Vec<f64>> {
    let n = r.n_assets();
    let scale = 1.0 / tail.tail_mass() + lambda1.abs();
    let shift = lambda2.abs();
    let mut m = DMatrix::zeros(n, n);
    for row in r.rows() {
        let v = DVector::from_iterator(n, row.iter().map(|x| scale * x.abs() + shift));
        m.ger(1.0, &v, &v, 1.0);
    }
    m /= r.n_obs() as f64;
    symmetrize(&mut m);
    to_rows(&m)
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Draws of `‖Z‖` (order 1) or `ZᵀZ / |c|` (order 2), `Z ~ N(0, cov)`.
///
/// Samples are generated in blocks of 1024, block `b` using the ChaCha
/// stream `b` of the configured seed, so the output does not depend on the
/// number of worker threads.
pub fn sample_rwp_bound(cfg: &RadiusConfig, cov: &[Vec<f64>], c_constant: Option<f64>) -> Result<Vec<f64>> {
    cfg.validate()?;
    let n = cov.len();
    if cov.iter().any(|row| row.len() != n) {
        return Err(Error::arg("covariance must be square"));
    }
    let m = DMatrix::from_fn(n, n, |i, j| cov[i][j]);
    let (factor, min_eig) = psd_factor(&m);
    let scale = m.iter().fold(1.0f64, |a, b| a.max(b.abs()));
    if min_eig < -CLIP_TOL * scale {
        return Err(Error::Covariance { min_eigenvalue: min_eig });
    }
    let inv_c = match cfg.kappa {
        Kappa::One => 1.0,
        Kappa::Two => {
            let c = c_constant.ok_or_else(|| Error::arg("order-2 bound needs the constant c"))?;
            if c.abs() < 1e-10 {
                return Err(Error::DegenerateConstant(c));
            }
            1.0 / c.abs()
        }
    };
    let kappa = cfg.kappa;
    let blocks = cfg.mc_samples.div_ceil(BLOCK);
    let out: Vec<f64> = (0..blocks)
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
            rng.set_stream(b as u64);
            let count = BLOCK.min(cfg.mc_samples - b * BLOCK);
            let factor = &factor;
            (0..count)
                .map(move |_| {
                    let xi = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)));
                    let z = factor * xi;
                    let sq = z.norm_squared();
                    match kappa {
                        Kappa::One => sq.sqrt(),
                        Kappa::Two => sq * inv_c,
                    }
                })
                .collect::<Vec<f64>>()
        })
        .collect();
    Ok(out)
}

/// Mean of `-λ̂1 1{A>0} - (1 + αλ̂1)/α 1{A<0}` with `A = π*'R + a*`
/// (ties at zero counted as negative).
fn bound_constant(r: &ReturnsMatrix, pi: &[f64], a: f64, lambda1: f64, tail: TailSpec) -> f64 {
    let alpha = tail.tail_mass();
    let neg = -(1.0 + alpha * lambda1) / alpha;
    let total: f64 = r
        .rows()
        .map(|row| if dot(pi, row) + a > 0.0 { -lambda1 } else { neg })
        .sum();
    total / r.n_obs() as f64
}

pub fn select_radius(
    r: &ReturnsMatrix,
    rho: f64,
    tail: TailSpec,
    cfg: &RadiusConfig,
    t: SmoothingParam,
) -> Result<RadiusResult> {
    cfg.validate()?;
    let state = solve_smooth(r, rho, tail, t)?;
    if state.status != SolveStatus::Optimal {
        return Err(Error::Solver {
            strategy: "smooth".into(),
            message: format!(
                "smoothed problem did not converge (stationarity {:e})",
                state.stationarity_residual
            ),
        });
    }
    let hats = multiplier_limits(&state, r, rho, tail)?;
    let covariance = ztilde_covariance(r, hats.lambda1, hats.lambda2, tail);
    let c_constant = match cfg.kappa {
        Kappa::One => None,
        Kappa::Two => Some(bound_constant(r, &state.pi_star, state.a_star, hats.lambda1, tail)),
    };
    let samples = sample_rwp_bound(cfg, &covariance, c_constant)?;
    let eta = sorted_quantile(&sort_ascending(&samples), cfg.confidence);
    let n_obs = r.n_obs();
    let delta_star = match cfg.kappa {
        Kappa::One => eta / (n_obs as f64).sqrt(),
        Kappa::Two => eta / n_obs as f64,
    };
    Ok(RadiusResult {
        delta_star,
        eta_quantile: eta,
        lambda_hats: hats,
        c_negative: c_constant.is_some_and(|c| c < 0.0),
        c_constant,
        covariance,
        n_obs,
        config: *cfg,
    })
}
