//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). A criterion listed in
//! `KNOWN_DATA_INCONSISTENT` is reported but does not fail the run; every
//! other FAIL, and an unexpected PASS of a listed one, makes the binary exit 1.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use wcvar::backtest::{rebalance_cost, TcMode};
use wcvar::metrics::{annualized_sharpe, mean_over_cvar};
use wcvar::oracle::{brute_force_robust_objective, brute_force_worst_mean, TinyInstance};
use wcvar::pipeline::{cmd_compare, RunConfig};
use wcvar::*;

type Outcome = Result<String, String>;

/// Criterion 1 cannot pass on the reference rows: one row's Mean/CVaR column
/// disagrees with its own mean and CVaR columns by 4e-4.
const KNOWN_DATA_INCONSISTENT: &[usize] = &[1];

fn tail(a: f64) -> TailSpec {
    TailSpec::new(a).unwrap()
}

fn random_returns(rng: &mut ChaCha8Rng, n_obs: usize, n: usize) -> ReturnsMatrix {
    let rows: Vec<Vec<f64>> = (0..n_obs)
        .map(|_| (0..n).map(|j| 0.002 * j as f64 + rng.gen_range(-0.03..0.03)).collect())
        .collect();
    ReturnsMatrix::from_rows(&rows).unwrap()
}

fn mean_range(r: &ReturnsMatrix) -> (f64, f64) {
    let mu = r.column_means();
    (
        mu.iter().cloned().fold(f64::INFINITY, f64::min),
        mu.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    )
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ------------------------------------------------------------------ 1

/// (start date, model, mean, std, cvar, sharpe, mean/cvar) reference rows, without
/// and then with transaction costs.
const TABLE_ROWS: [(&str, &str, f64, f64, f64, f64, f64); 50] = [
    ("2002.02.01", "NMC", 0.000414214, 0.010989046, 0.029964765, 0.598363528, 0.013823368),
    ("2002.02.01", "BMC", 0.000435181, 0.011647557, 0.031060781, 0.593111407, 0.014010626),
    ("2002.02.01", "KMC", 0.000455863, 0.012299988, 0.034368950, 0.588342707, 0.013263803),
    ("2002.02.01", "RMC-1", 0.000552188, 0.013090301, 0.035034627, 0.669634198, 0.015761207),
    ("2002.02.01", "RMC-2", 0.000553807, 0.013134099, 0.032437378, 0.669358810, 0.017073134),
    ("2004.06.01", "NMC", 0.000476001, 0.011184933, 0.033064265, 0.675577574, 0.014396253),
    ("2004.06.01", "BMC", 0.000465466, 0.011344004, 0.032089496, 0.651361896, 0.014505261),
    ("2004.06.01", "KMC", 0.000471342, 0.012952865, 0.028609607, 0.577658086, 0.016474965),
    ("2004.06.01", "RMC-1", 0.000495928, 0.011402213, 0.033977053, 0.690446884, 0.014595986),
    ("2004.06.01", "RMC-2", 0.000466915, 0.013160472, 0.036372233, 0.563205451, 0.012837134),
    ("2006.06.01", "NMC", 0.000500284, 0.009616184, 0.023153042, 0.825876164, 0.021607740),
    ("2006.06.01", "BMC", 0.000517737, 0.009946102, 0.023363066, 0.826336403, 0.022160507),
    ("2006.06.01", "KMC", 0.000548701, 0.010665874, 0.036628863, 0.816656828, 0.014980018),
    ("2006.06.01", "RMC-1", 0.000519369, 0.009652195, 0.023037725, 0.854182106, 0.022544296),
    ("2006.06.01", "RMC-2", 0.000521862, 0.010785479, 0.026042552, 0.768098063, 0.020038827),
    ("2008.08.01", "NMC", 0.000551496, 0.009087272, 0.023071616, 0.963405690, 0.023903657),
    ("2008.08.01", "BMC", 0.000584411, 0.009215616, 0.027692293, 1.006687285, 0.021103741),
    ("2008.08.01", "KMC", 0.000653984, 0.009559078, 0.069318921, 1.086055334, 0.009434422),
    ("2008.08.01", "RMC-1", 0.000737939, 0.013222184, 0.037927259, 0.885968105, 0.019456717),
    ("2008.08.01", "RMC-2", 0.000580732, 0.010365320, 0.036360908, 0.889393335, 0.015971349),
    ("2009.06.01", "NMC", 0.000469028, 0.007066659, 0.016025745, 1.053622161, 0.029267157),
    ("2009.06.01", "BMC", 0.000474973, 0.006836645, 0.015247661, 1.102876796, 0.030747243),
    ("2009.06.01", "KMC", 0.000537719, 0.007443031, 0.037543810, 1.146848850, 0.014322441),
    ("2009.06.01", "RMC-1", 0.000599987, 0.007115376, 0.016198153, 1.338581097, 0.037040495),
    ("2009.06.01", "RMC-2", 0.000627472, 0.007486768, 0.019298999, 1.330455427, 0.032513194),
    ("2002.02.01 tc", "NMC", 0.000403039, 0.010983332, 0.030077326, 0.582523783, 0.013400094),
    ("2002.02.01 tc", "BMC", 0.000423062, 0.011640696, 0.031149149, 0.576933560, 0.013581815),
    ("2002.02.01 tc", "KMC", 0.000441529, 0.012291726, 0.034512515, 0.570225580, 0.012793301),
    ("2002.02.01 tc", "RMC-1", 0.000538792, 0.013080727, 0.035105688, 0.653867770, 0.015347727),
    ("2002.02.01 tc", "RMC-2", 0.000540320, 0.013124600, 0.032480528, 0.653530297, 0.016635216),
    ("2004.06.01 tc", "NMC", 0.000469330, 0.011171314, 0.033155308, 0.666921925, 0.014155523),
    ("2004.06.01 tc", "BMC", 0.000458590, 0.011331386, 0.032185383, 0.642453959, 0.014248400),
    ("2004.06.01 tc", "KMC", 0.000465784, 0.012945511, 0.028725431, 0.571170848, 0.016215055),
    ("2004.06.01 tc", "RMC-1", 0.000489308, 0.011389217, 0.034073714, 0.682007719, 0.014360297),
    ("2004.06.01 tc", "RMC-2", 0.000461418, 0.013152442, 0.036434588, 0.556915338, 0.012664307),
    ("2006.06.01 tc", "NMC", 0.000492675, 0.009618197, 0.023242215, 0.813144297, 0.021197444),
    ("2006.06.01 tc", "BMC", 0.000510663, 0.009949806, 0.023440742, 0.814742125, 0.021785281),
    ("2006.06.01 tc", "KMC", 0.000543398, 0.010655290, 0.036826561, 0.809568805, 0.014755624),
    ("2006.06.01 tc", "RMC-1", 0.000510559, 0.009652738, 0.023128845, 0.839646198, 0.022074590),
    ("2006.06.01 tc", "RMC-2", 0.000515162, 0.010774696, 0.026043978, 0.758996643, 0.019780501),
    ("2008.08.01 tc", "NMC", 0.000546916, 0.009078253, 0.023064818, 0.956355251, 0.023712131),
    ("2008.08.01 tc", "BMC", 0.000583198, 0.009206164, 0.027685907, 1.005629031, 0.021064796),
    ("2008.08.01 tc", "KMC", 0.000652256, 0.009549088, 0.069674256, 1.084318071, 0.009361506),
    ("2008.08.01 tc", "RMC-1", 0.000739663, 0.013209766, 0.037904801, 0.888872286, 0.019513717),
    ("2008.08.01 tc", "RMC-2", 0.000578638, 0.010353592, 0.036338335, 0.887188993, 0.015923624),
    ("2009.06.01 tc", "NMC", 0.000460546, 0.007073345, 0.016076162, 1.033591132, 0.028647758),
    ("2009.06.01 tc", "BMC", 0.000465774, 0.006841371, 0.015483874, 1.080767852, 0.030081231),
    ("2009.06.01 tc", "KMC", 0.000526968, 0.007441115, 0.037741824, 1.124208648, 0.013962441),
    ("2009.06.01 tc", "RMC-1", 0.000588551, 0.007114447, 0.016233162, 1.313237698, 0.036256100),
    ("2009.06.01 tc", "RMC-2", 0.000614752, 0.007481517, 0.019297441, 1.304400901, 0.031856701),
];

fn criterion_1() -> Outcome {
    let mut bad = Vec::new();
    let mut worst = (0.0f64, 0.0f64);
    for (date, model, mean, std, cvar, sharpe, ratio) in TABLE_ROWS {
        let ds = (annualized_sharpe(mean, std) - sharpe).abs();
        let dr = (mean_over_cvar(mean, cvar) - ratio).abs();
        worst = (worst.0.max(ds), worst.1.max(dr));
        if ds > 1e-5 || dr > 1e-7 {
            bad.push(format!("{date} {model}: sharpe err {ds:.2e}, mean/cvar err {dr:.2e}"));
        }
    }
    if bad.is_empty() {
        Ok(format!("50/50 rows; max errors {:.1e} / {:.1e}", worst.0, worst.1))
    } else {
        Err(format!("{}/50 rows consistent; {}", 50 - bad.len(), bad.join("; ")))
    }
}

// ------------------------------------------------------------------ 2

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut counts = [0usize; 2];
    for (m, kappa) in [Kappa::One, Kappa::Two].into_iter().enumerate() {
        let mut attempts = 0;
        while counts[m] < 50 {
            attempts += 1;
            if attempts > 200 {
                return Err(format!("only {} comparable instances for {kappa:?}", counts[m]));
            }
            let n = rng.gen_range(1..=2);
            let big_n = rng.gen_range(1..=3);
            let atoms: Vec<Vec<f64>> = (0..big_n).map(|_| (0..n).map(|_| rng.gen_range(-0.1..0.1)).collect()).collect();
            let delta = rng.gen_range(1e-3..=0.1);
            let alpha = [0.05, 0.2, 0.5][rng.gen_range(0..3)];
            let inst = TinyInstance::new(atoms.clone(), delta, kappa).unwrap();
            // alternate a slack target and one the equal-weight portfolio only just meets
            let rho = if attempts % 2 == 0 {
                -0.5
            } else {
                let ew = vec![1.0 / n as f64; n];
                brute_force_worst_mean(&inst, &ew) - 0.02
            };
            let Some((_, oracle)) = brute_force_robust_objective(&inst, rho, alpha) else {
                continue;
            };
            let r = ReturnsMatrix::from_rows(&atoms).unwrap();
            let cfg = RobustConfig::new(delta, kappa, tail(alpha), rho, true).unwrap();
            let rep = match kappa {
                Kappa::One => solve_rmc1(&r, &cfg),
                Kappa::Two => solve_rmc2(&r, &cfg),
            }
            .map_err(|e| e.to_string())?;
            check(rep.is_optimal(), || format!("{kappa:?} status {:?} on {atoms:?}", rep.status))?;
            let err = (rep.objective - oracle).abs();
            worst = worst.max(err);
            check(err <= 1e-3, || {
                format!("{kappa:?}: dual {} vs oracle {oracle} on {atoms:?}, delta {delta}, rho {rho}", rep.objective)
            })?;
            counts[m] += 1;
        }
    }
    Ok(format!("{} RMC-1 + {} RMC-2 instances, max |dual - oracle| {worst:.1e}", counts[0], counts[1]))
}

// ------------------------------------------------------------------ 3

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for k in 0..20 {
        let n = rng.gen_range(2..=5);
        let big_n = rng.gen_range(20..=100);
        let r = random_returns(&mut rng, big_n, n);
        let (lo, hi) = mean_range(&r);
        let rho = lo + 0.3 * (hi - lo);
        let nmc = solve_nmc(&r, rho, tail(0.05), true).map_err(|e| e.to_string())?;
        let cfg = RobustConfig::new(0.0, Kappa::One, tail(0.05), rho, true).unwrap();
        let rmc = solve_rmc1(&r, &cfg).map_err(|e| e.to_string())?;
        let gap = (rmc.objective - nmc.objective).abs();
        worst = worst.max(gap);
        check(gap <= 1e-6, || format!("instance {k}: RMC-1(0) {} vs NMC {}", rmc.objective, nmc.objective))?;

        let slack = lo - 1.0;
        let base = solve_nmc(&r, slack, tail(0.05), true).map_err(|e| e.to_string())?.objective;
        let gaps: Vec<f64> = [1e-2, 1e-4, 1e-6]
            .iter()
            .map(|&d| {
                let cfg = RobustConfig::new(d, Kappa::Two, tail(0.05), slack, true).unwrap();
                solve_rmc2(&r, &cfg).map(|rep| rep.objective - base)
            })
            .collect::<Result<_>>()
            .map_err(|e| e.to_string())?;
        check(gaps.windows(2).all(|w| w[0] >= w[1] - 1e-9) && gaps[2] >= -1e-7, || {
            format!("instance {k}: RMC-2 gaps to NMC not monotone: {gaps:?}")
        })?;
        check(gaps[2] <= 0.05 * gaps[0], || format!("instance {k}: RMC-2 gaps do not shrink: {gaps:?}"))?;
    }
    Ok(format!("20 instances, max |RMC-1(0) - NMC| {worst:.1e}; RMC-2 gaps decrease to NMC"))
}

// ------------------------------------------------------------------ 4

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for kappa in [Kappa::One, Kappa::Two] {
        for _ in 0..40 {
            let n = rng.gen_range(1..=2);
            let big_n = rng.gen_range(1..=3);
            let atoms: Vec<Vec<f64>> = (0..big_n).map(|_| (0..n).map(|_| rng.gen_range(-0.1..0.1)).collect()).collect();
            let delta = rng.gen_range(0.0..=0.1);
            let pi: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let inst = TinyInstance::new(atoms.clone(), delta, kappa).unwrap();
            let r = ReturnsMatrix::from_rows(&atoms).unwrap();
            let formula = worst_case_mean(&pi, &r, delta, kappa).map_err(|e| e.to_string())?;
            let brute = brute_force_worst_mean(&inst, &pi);
            worst = worst.max((formula - brute).abs());
            check((formula - brute).abs() <= 1e-6, || format!("{kappa:?}: {formula} vs {brute}"))?;
        }
    }
    Ok(format!("80 instances, max error {worst:.1e}"))
}

// ------------------------------------------------------------------ 5

fn binding_equality_target(r: &ReturnsMatrix) -> Result<(f64, f64), String> {
    let (lo, hi) = mean_range(r);
    for frac in [0.8, 0.9, 0.95] {
        let rho = lo + frac * (hi - lo);
        let rep = solve_nmc(r, rho, tail(0.05), false).map_err(|e| e.to_string())?;
        let mean: f64 = rep.portfolio.weights.iter().zip(r.column_means()).map(|(w, m)| w * m).sum();
        if rep.is_optimal() && (mean - rho).abs() <= 1e-9 {
            return Ok((rho, rep.objective));
        }
    }
    Err("no target with a binding mean constraint".into())
}

fn criterion_5() -> Outcome {
    let mut worst_ratio = 0.0f64;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(50 + seed);
        // two years of daily data; the smoothing gap per kink point shrinks as 1/N
        let r = random_returns(&mut rng, 504, 3);
        let (rho, lp) = binding_equality_target(&r)?;
        for t in [1e-1, 1e-2, 1e-3, 1e-4, 1e-5] {
            let s = solve_smooth(&r, rho, tail(0.05), SmoothingParam::new(t).unwrap()).map_err(|e| e.to_string())?;
            let bound = t * 2f64.ln() / 0.05;
            let gap = (s.objective - lp).abs();
            worst_ratio = worst_ratio.max(gap / bound);
            check(gap <= bound, || format!("seed {seed}, t={t}: gap {gap:e} > bound {bound:e}"))?;
            if t == 1e-4 {
                check(gap < 1e-3 * lp.abs(), || format!("seed {seed}: gap {gap:e} at t=1e-4 vs objective {lp}"))?;
            }
        }
    }
    Ok(format!("5 instances x 5 temperatures, max gap/bound {worst_ratio:.3}"))
}

// ------------------------------------------------------------------ 6

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn criterion_6() -> Outcome {
    let t = SmoothingParam::new(1e-4).unwrap();
    let mut notes = Vec::new();

    let mut rng = ChaCha8Rng::seed_from_u64(60);
    let base = random_returns(&mut rng, 200, 3);
    let (lo, hi) = mean_range(&base);
    let rho = 0.5 * (lo + hi);
    for kappa in [Kappa::One, Kappa::Two] {
        let cfg = RadiusConfig::new(kappa, 0.95, 2000, 7).unwrap();
        let d1 = select_radius(&base, rho, tail(0.05), &cfg, t).map_err(|e| e.to_string())?.delta_star;
        for k in [2usize, 5] {
            let dk = select_radius(&base.replicate(k), rho, tail(0.05), &cfg, t).map_err(|e| e.to_string())?.delta_star;
            let expected = d1 * (k as f64).powf(-(kappa.order() as f64) / 2.0);
            check(((dk - expected) / expected).abs() <= 1e-9, || {
                format!("{kappa:?}, x{k}: delta* {dk:e} vs {expected:e}")
            })?;
        }
    }
    notes.push("replication exact".to_string());

    // A clearly binding target keeps the mean multiplier away from zero; near
    // zero the kappa=2 constant changes sign between samples. log(delta*) is
    // averaged over independent data sets before fitting.
    let mu = [0.0, 0.002, 0.004];
    let rho = 0.003;
    let normal = Normal::new(0.0, 0.01).unwrap();
    let sizes = [250usize, 500, 1000, 2000];
    let datasets: Vec<Vec<Vec<f64>>> = (0..5u64)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(61 + k);
            (0..2000).map(|_| mu.iter().map(|m| m + normal.sample(&mut rng)).collect()).collect()
        })
        .collect();
    let xs: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    for (kappa, (lo, hi)) in [(Kappa::One, (-0.65, -0.35)), (Kappa::Two, (-1.25, -0.75))] {
        let cfg = RadiusConfig::new(kappa, 0.95, 10_000, 11).unwrap();
        let mut avg = vec![0.0; sizes.len()];
        let mut each = Vec::new();
        for rows in &datasets {
            let mut ys = Vec::new();
            for &n in &sizes {
                let r = ReturnsMatrix::from_rows(&rows[..n]).unwrap();
                let d = select_radius(&r, rho, tail(0.05), &cfg, t).map_err(|e| e.to_string())?.delta_star;
                ys.push(d.ln());
            }
            each.push(format!("{:.2}", slope(&xs, &ys)));
            for (a, y) in avg.iter_mut().zip(&ys) {
                *a += y / datasets.len() as f64;
            }
        }
        let s = slope(&xs, &avg);
        check(s >= lo && s <= hi, || {
            format!("{kappa:?}: slope {s:.3} outside [{lo}, {hi}] (per data set {})", each.join(" "))
        })?;
        notes.push(format!("slope k={} {s:.3} (per data set {})", kappa.order(), each.join(" ")));
    }
    Ok(notes.join(", "))
}

// ------------------------------------------------------------------ 7

fn criterion_7() -> Outcome {
    let tol = |v: f64| 1e-7 * v.abs().max(1e-3);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for k in 0..4 {
        let r = random_returns(&mut rng, 60, 3);
        let (lo, _) = mean_range(&r);
        let slack = lo - 1.0;
        for kappa in [Kappa::One, Kappa::Two] {
            let mut prev = f64::NEG_INFINITY;
            for d in [0.0, 1e-4, 1e-3, 1e-2, 5e-2] {
                let cfg = RobustConfig::new(d, kappa, tail(0.05), slack, true).unwrap();
                let obj = match kappa {
                    Kappa::One => solve_rmc1(&r, &cfg),
                    Kappa::Two => solve_rmc2(&r, &cfg),
                }
                .map_err(|e| e.to_string())?
                .objective;
                check(obj >= prev - tol(obj), || format!("instance {k} {kappa:?}: {obj} < {prev} at delta {d}"))?;
                prev = obj;
            }
        }
        let kmc = |g1: f64, g2: f64| -> Result<f64> {
            let amb = MomentAmbiguity::from_returns(&r, g1, g2)?;
            Ok(solve_kmc(&r, &amb, -1.0, tail(0.05), &KmcOptions::default())?.objective)
        };
        for (name, pts) in [
            ("gamma1", [(0.0, 0.01), (0.01, 0.01), (0.05, 0.01), (0.2, 0.01)]),
            ("gamma2", [(0.01, 0.0), (0.01, 1e-4), (0.01, 1e-3), (0.01, 1e-2)]),
        ] {
            let mut prev = f64::NEG_INFINITY;
            for (g1, g2) in pts {
                let obj = kmc(g1, g2).map_err(|e| e.to_string())?;
                check(obj >= prev - tol(obj), || format!("instance {k} KMC {name}: {obj} < {prev}"))?;
                prev = obj;
            }
        }
        let mut prev = f64::NEG_INFINITY;
        for w in [0.0, 0.1, 0.3, 0.6, 1.0] {
            let bx = BoxSpec::uniform(r.n_obs(), w).unwrap();
            let obj = solve_bmc(&r, &bx, -1.0, tail(0.05)).map_err(|e| e.to_string())?.objective;
            check(obj >= prev - tol(obj), || format!("instance {k} BMC width {w}: {obj} < {prev}"))?;
            prev = obj;
        }
    }
    let normal = Normal::new(0.0004, 0.012).unwrap();
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(70 + seed);
        let rows: Vec<Vec<f64>> = (0..500).map(|_| (0..4).map(|_| normal.sample(&mut rng)).collect()).collect();
        let r = ReturnsMatrix::from_rows(&rows).unwrap();
        let sched = StrategySchedule::constant(vec![0.1, 0.2, 0.3, 0.4]);
        let counts: Vec<usize> = [0.01, 0.05, 0.2]
            .iter()
            .map(|&th| run_backtest(&sched, &r, &BacktestOptions { threshold: th, ..Default::default() }).map(|b| b.n_rebalances()))
            .collect::<Result<_>>()
            .map_err(|e| e.to_string())?;
        check(counts.windows(2).all(|w| w[0] >= w[1]), || format!("path {seed}: rebalance counts {counts:?}"))?;
    }
    Ok("robust in delta, KMC in gamma1/gamma2, BMC in width, rebalances in threshold".into())
}

// ------------------------------------------------------------------ 8

fn criterion_8() -> Outcome {
    let rows: Vec<Vec<f64>> = (0..500).map(|i| vec![0.004 * ((i % 11) as f64 - 5.0); 4]).collect();
    let r = ReturnsMatrix::from_rows(&rows).unwrap();
    let res = run_backtest(&StrategySchedule::constant(vec![0.1, 0.2, 0.3, 0.4]), &r, &BacktestOptions::default())
        .map_err(|e| e.to_string())?;
    check(res.n_rebalances() == 0 && res.total_tc == 0.0, || format!("{} rebalances on identical returns", res.n_rebalances()))?;

    let cost = rebalance_cost(&[0.6, 0.5], &[0.5, 0.5], 0.002);
    check((cost - 0.0002).abs() <= 1e-15, || format!("cost {cost:e}"))?;
    let one_day = ReturnsMatrix::from_rows(&[vec![0.2, 0.0]]).unwrap();
    let opts = BacktestOptions { tc_mode: TcMode::ReportOnly, ..Default::default() };
    let res = run_backtest(&StrategySchedule::constant(vec![0.5, 0.5]), &one_day, &opts).map_err(|e| e.to_string())?;
    check((res.total_tc - 0.0002).abs() <= 1e-15, || format!("backtest cost {:e}", res.total_tc))?;

    let normal = Normal::new(0.0003, 0.015).unwrap();
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(80 + seed);
        let rows: Vec<Vec<f64>> = (0..300).map(|_| (0..3).map(|_| normal.sample(&mut rng)).collect()).collect();
        let r = ReturnsMatrix::from_rows(&rows).unwrap();
        let sched = StrategySchedule::constant(vec![0.5, 0.3, 0.2]);
        let with = run_backtest(&sched, &r, &BacktestOptions::default()).map_err(|e| e.to_string())?;
        let without = run_backtest(&sched, &r, &BacktestOptions { tc_mode: TcMode::Off, ..Default::default() })
            .map_err(|e| e.to_string())?;
        check(with.wealth.iter().zip(&without.wealth).all(|(a, b)| a <= b), || format!("path {seed}: costs raised wealth"))?;
    }
    Ok(format!("zero rebalances, cost {cost:e}, costs never raise wealth (20 paths)"))
}

// ------------------------------------------------------------------ 9

fn criterion_9() -> Outcome {
    let mut worst = (0.0f64, 0.0f64);
    let t = SmoothingParam::new(1e-3).unwrap();
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(90 + seed);
        let n = rng.gen_range(2..=5);
        let r = random_returns(&mut rng, 80, n);
        let (lo, hi) = mean_range(&r);
        let rho = lo + rng.gen_range(0.2..0.8) * (hi - lo);
        let s = solve_smooth(&r, rho, tail(0.05), t).map_err(|e| e.to_string())?;
        check(s.stationarity_residual <= 1e-6, || format!("seed {seed}: stationarity {:e}", s.stationarity_residual))?;
        worst.0 = worst.0.max(s.stationarity_residual);

        // central differences of the smooth objective against λ1 μ + λ2 1 (and 0 in a)
        let f = |pi: &[f64], a: f64| smooth_objective(pi, a, t, &r, tail(0.05)).unwrap();
        let h = 1e-7;
        let mu = r.column_means();
        let mut fd = Vec::with_capacity(n + 1);
        let mut kkt = Vec::with_capacity(n + 1);
        for j in 0..=n {
            let (mut p, mut m) = (s.pi_star.clone(), s.pi_star.clone());
            let (mut ap, mut am) = (s.a_star, s.a_star);
            if j < n {
                p[j] += h;
                m[j] -= h;
                kkt.push(s.lambda1 * mu[j] + s.lambda2);
            } else {
                ap += h;
                am -= h;
                kkt.push(0.0);
            }
            fd.push((f(&p, ap) - f(&m, am)) / (2.0 * h));
        }
        let scale = fd.iter().fold(0.0f64, |m, g| m.max(g.abs())).max(1.0);
        let err = fd.iter().zip(&kkt).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale;
        worst.1 = worst.1.max(err);
        check(err <= 1e-5, || format!("seed {seed}: finite-difference gradient off by {err:e} (relative)"))?;
    }
    Ok(format!("10 instances, max stationarity {:.1e}, max FD mismatch {:.1e}", worst.0, worst.1))
}

// ------------------------------------------------------------------ 10

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn criterion_10() -> Outcome {
    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic_prices.csv");
    check(data.exists(), || format!("bundled data missing at {}", data.display()))?;
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut trees = Vec::new();
    for run in ["a", "b"] {
        let cfg = RunConfig { data: data.clone(), output_dir: tmp.path().join(run), seed: 42, ..RunConfig::default() };
        cmd_compare(&cfg).map_err(|e| e.to_string())?;
        trees.push(read_tree(&cfg.output_dir));
    }
    let names: Vec<&str> = trees[0].iter().map(|(n, _)| n.as_str()).collect();
    check(trees[0] == trees[1], || "outputs differ between runs".into())?;
    check(names.len() >= 10, || format!("only {} output files", names.len()))?;
    Ok(format!("{} files byte-identical across two runs", names.len()))
}

// ------------------------------------------------------------------ driver

fn main() {
    let criteria: [(usize, &str, Duration, fn() -> Outcome); 10] = [
        (1, "metric regression vs reference rows", Duration::from_secs(1), criterion_1),
        (2, "dual objectives match brute-force oracle", Duration::from_secs(120), criterion_2),
        (3, "zero-radius reduction", Duration::from_secs(60), criterion_3),
        (4, "worst-case mean formulas", Duration::from_secs(30), criterion_4),
        (5, "smoothing gap bound", Duration::from_secs(60), criterion_5),
        (6, "radius scaling", Duration::from_secs(300), criterion_6),
        (7, "monotonicity suite", Duration::from_secs(120), criterion_7),
        (8, "backtest algebra", Duration::from_secs(10), criterion_8),
        (9, "smooth solver KKT", Duration::from_secs(60), criterion_9),
        (10, "end-to-end determinism", Duration::from_secs(120), criterion_10),
    ];
    let mut failed = Vec::new();
    for (id, name, budget, f) in criteria {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(msg) if elapsed > budget => Err(format!("{msg}; took {elapsed:.1?}, budget {budget:?}")),
            o => o,
        };
        let known = KNOWN_DATA_INCONSISTENT.contains(&id);
        match &outcome {
            Ok(msg) => println!("PASS criterion {id:>2} ({name}): {msg} [{elapsed:.2?}]"),
            Err(msg) => println!("FAIL criterion {id:>2} ({name}): {msg} [{elapsed:.2?}]"),
        }
        match (outcome.is_ok(), known) {
            (false, false) => failed.push(id),
            (true, true) => {
                println!("  criterion {id} is listed as data-inconsistent but passed; update the list");
                failed.push(id);
            }
            (false, true) => println!("  criterion {id}: failure comes from the reference data itself"),
            (true, false) => {}
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria as expected");
    } else {
        println!("acceptance: unexpected results for criteria {failed:?}");
        std::process::exit(1);
    }
}
