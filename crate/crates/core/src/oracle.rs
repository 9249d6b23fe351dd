//! Brute-force worst-case expectations over a Wasserstein ball on tiny
//! instances, used to check the dual programs.
//!
//! Every atom `R_i` (mass 1/N) may send a fraction `θ` of its mass a
//! distance `m` along `-π/‖π‖`, at transport cost `(θ/N) m^κ`. The total
//! cost `Σ c_i` is bounded by `δ`. For a given per-atom cost `c` the best
//! `(θ, m)` is found analytically, which leaves a budget allocation over at
//! most three atoms; that allocation is searched on a grid of step `1e-4·δ`
//! and then refined by pairwise transfers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::robust::Kappa;
use crate::stats::{dot, norm2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TinyInstance {
    pub atoms: Vec<Vec<f64>>,
    pub delta: f64,
    pub kappa: Kappa,
}

impl TinyInstance {
    pub fn new(atoms: Vec<Vec<f64>>, delta: f64, kappa: Kappa) -> Result<Self> {
        if atoms.is_empty() || atoms.len() > 3 {
            return Err(Error::arg("tiny instances hold 1 to 3 atoms"));
        }
        let n = atoms[0].len();
        if n == 0 || n > 2 || atoms.iter().any(|a| a.len() != n) {
            return Err(Error::arg("tiny instance atoms must share a dimension of 1 or 2"));
        }
        if !(delta >= 0.0) {
            return Err(Error::arg("radius must be nonnegative"));
        }
        Ok(TinyInstance { atoms, delta, kappa })
    }

    fn n_atoms(&self) -> f64 {
        self.atoms.len() as f64
    }
}

/// Best gain from one atom with transport cost `c`, when moving a distance
/// `m` yields `scale·(m - d)^+` per unit of moved mass.
fn atom_gain(c: f64, d: f64, scale: f64, n_atoms: f64, kappa: Kappa) -> f64 {
    if c <= 0.0 || scale == 0.0 {
        return 0.0;
    }
    match kappa {
        // (θ/N)·scale·(Nc/θ - d) increases as θ → 0; its supremum is scale·c.
        Kappa::One => scale * c,
        Kappa::Two => {
            // maximize (θ/N)·scale·(sqrt(Nc/θ) - d) over θ ∈ (0, 1]
            let theta = if d > 0.0 { (n_atoms * c / (4.0 * d * d)).min(1.0) } else { 1.0 };
            (theta / n_atoms) * scale * ((n_atoms * c / theta).sqrt() - d).max(0.0)
        }
    }
}

/// Maximize `Σ gain_i(c_i)` over `c ≥ 0`, `Σ c_i = budget`, each `gain_i`
/// concave and nondecreasing.
fn allocate(budget: f64, gains: &[Box<dyn Fn(f64) -> f64 + '_>]) -> f64 {
    let k = gains.len();
    if budget <= 0.0 {
        return 0.0;
    }
    let step = 1e-4 * budget;
    let steps = 10_000usize;
    let mut alloc = vec![0.0; k];
    let mut value: Vec<f64> = gains.iter().map(|g| g(0.0)).collect();
    for _ in 0..steps {
        let (best, inc) = (0..k)
            .map(|i| (i, gains[i](alloc[i] + step) - value[i]))
            .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        alloc[best] += step;
        value[best] += inc;
    }
    // Refine: move budget between pairs while it helps, halving the step.
    let mut h = step;
    while h > budget * 1e-12 {
        let mut improved = false;
        for i in 0..k {
            for j in 0..k {
                if i == j || alloc[j] < h {
                    continue;
                }
                let before = gains[i](alloc[i]) + gains[j](alloc[j]);
                let after = gains[i](alloc[i] + h) + gains[j](alloc[j] - h);
                if after > before {
                    alloc[i] += h;
                    alloc[j] -= h;
                    improved = true;
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    (0..k).map(|i| gains[i](alloc[i])).sum()
}

/// `sup E_P[(-π'R - a)^+]` over the ball around the instance's atoms.
pub fn brute_force_worst_plus(inst: &TinyInstance, pi: &[f64], a: f64) -> f64 {
    let n_atoms = inst.n_atoms();
    let base: f64 = inst.atoms.iter().map(|r| (-dot(pi, r) - a).max(0.0)).sum::<f64>() / n_atoms;
    let norm = norm2(pi);
    if norm == 0.0 {
        return base;
    }
    let kappa = inst.kappa;
    let gains: Vec<Box<dyn Fn(f64) -> f64>> = inst
        .atoms
        .iter()
        .map(|r| {
            // distance along -π/‖π‖ before the atom enters the active region
            let d = (dot(pi, r) + a).max(0.0) / norm;
            Box::new(move |c: f64| atom_gain(c, d, norm, n_atoms, kappa)) as Box<dyn Fn(f64) -> f64>
        })
        .collect();
    base + allocate(inst.delta, &gains)
}

/// `inf E_P[π'R]` over the ball around the instance's atoms.
pub fn brute_force_worst_mean(inst: &TinyInstance, pi: &[f64]) -> f64 {
    let n_atoms = inst.n_atoms();
    let base: f64 = inst.atoms.iter().map(|r| dot(pi, r)).sum::<f64>() / n_atoms;
    let norm = norm2(pi);
    if norm == 0.0 {
        return base;
    }
    let kappa = inst.kappa;
    let gains: Vec<Box<dyn Fn(f64) -> f64>> = inst
        .atoms
        .iter()
        .map(|_| Box::new(move |c: f64| atom_gain(c, 0.0, norm, n_atoms, kappa)) as Box<dyn Fn(f64) -> f64>)
        .collect();
    base - allocate(inst.delta, &gains)
}

/// Worst-case CVaR of a fixed portfolio: `min_a a + (1/α) worst_plus(π, a)`.
/// The function of `a` is convex; golden-section search on a bracket wide
/// enough to hold every atom's loss.
pub fn brute_force_worst_cvar(inst: &TinyInstance, pi: &[f64], tail_mass: f64) -> f64 {
    let losses: Vec<f64> = inst.atoms.iter().map(|r| -dot(pi, r)).collect();
    let lo = losses.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
    let hi = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0 + inst.delta.max(inst.delta.sqrt()) * norm2(pi) * 10.0;
    let f = |a: f64| a + brute_force_worst_plus(inst, pi, a) / tail_mass;
    golden_min(f, lo, hi, 1e-10).1
}

/// Robust mean-CVaR optimum for long-only portfolios of at most two assets:
/// the weight is scanned on a grid and refined by golden-section search,
/// discarding weights whose worst-case mean falls below `rho`.
/// Returns `(weights, objective)`; `None` when no scanned weight is feasible.
pub fn brute_force_robust_objective(inst: &TinyInstance, rho: f64, tail_mass: f64) -> Option<(Vec<f64>, f64)> {
    let n = inst.atoms[0].len();
    let eval = |w: f64| -> f64 {
        let pi = if n == 1 { vec![1.0] } else { vec![w, 1.0 - w] };
        if brute_force_worst_mean(inst, &pi) < rho - 1e-12 {
            f64::INFINITY
        } else {
            brute_force_worst_cvar(inst, &pi, tail_mass)
        }
    };
    if n == 1 {
        let v = eval(1.0);
        return v.is_finite().then(|| (vec![1.0], v));
    }
    let grid = 20;
    let vals: Vec<f64> = (0..=grid).map(|k| eval(k as f64 / grid as f64)).collect();
    let (k_best, &v_best) = vals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    if !v_best.is_finite() {
        return None;
    }
    // The objective is convex in w (with +∞ outside the feasible interval),
    // so the minimizer lies within one cell of the best grid point.
    let lo = (k_best.saturating_sub(1)) as f64 / grid as f64;
    let hi = ((k_best + 1).min(grid)) as f64 / grid as f64;
    let (w, v) = golden_min(eval, lo, hi, 1e-9);
    let (w, v) = if v <= v_best { (w, v) } else { (k_best as f64 / grid as f64, v_best) };
    Some((vec![w, 1.0 - w], v))
}

fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    let x = 0.5 * (lo + hi);
    let fx = f(x);
    [(x1, f1), (x2, f2), (x, fx)]
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("three candidates")
}
