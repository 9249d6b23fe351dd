//! Thin builder over the Clarabel interior-point solver.
//!
//! Programs are written as `min cᵀx` subject to blocks of linear equalities,
//! linear inequalities and second-order cones, each row given as an affine
//! expression in the decision variables.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

pub(crate) const SOLVER_TOL: f64 = 1e-8;

/// Affine expression `constant + Σ coef·x[idx]`.
#[derive(Debug, Clone, Default)]
pub(crate) struct Affine {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Affine {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(idx: usize, coef: f64) -> Self {
        Affine {
            terms: vec![(idx, coef)],
            constant: 0.0,
        }
    }

    pub fn add(mut self, idx: usize, coef: f64) -> Self {
        if coef != 0.0 {
            self.terms.push((idx, coef));
        }
        self
    }

    #[cfg(test)]
    pub fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Zero,
    Nonneg,
    Soc,
}

/// Row handle for reading a constraint's dual value.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RowId(usize);

#[derive(Debug)]
pub(crate) struct ConicProgram {
    n_vars: usize,
    cost: Vec<f64>,
    // Clarabel form: s = b - A x ∈ K, so each row stores A-row and b.
    rows: Vec<(Vec<(usize, f64)>, f64)>,
    blocks: Vec<(Kind, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ConicStatus {
    Solved,
    Infeasible,
    Unbounded,
    MaxIter,
}

#[derive(Debug, Clone)]
pub(crate) struct ConicSolution {
    pub status: ConicStatus,
    pub x: Vec<f64>,
    z: Vec<f64>,
    pub objective: f64,
    /// max(primal residual, dual residual, relative duality gap)
    pub residual: f64,
}

impl ConicSolution {
    pub fn dual(&self, row: RowId) -> f64 {
        self.z.get(row.0).copied().unwrap_or(f64::NAN)
    }
}

impl ConicProgram {
    pub fn new(n_vars: usize) -> Self {
        ConicProgram {
            n_vars,
            cost: vec![0.0; n_vars],
            rows: Vec::new(),
            blocks: Vec::new(),
        }
    }

    pub fn set_cost(&mut self, idx: usize, c: f64) {
        self.cost[idx] = c;
    }

    fn push_row(&mut self, kind: Kind, e: &Affine) -> RowId {
        // e(x) ∈ K  ⇔  s = b - A x with A = -terms, b = constant
        let id = RowId(self.rows.len());
        self.rows
            .push((e.terms.iter().map(|&(j, c)| (j, -c)).collect(), e.constant));
        match (kind, self.blocks.last_mut()) {
            (Kind::Zero, Some((Kind::Zero, k))) | (Kind::Nonneg, Some((Kind::Nonneg, k))) => *k += 1,
            _ => self.blocks.push((kind, 1)),
        }
        id
    }

    /// `e(x) = 0`
    pub fn eq(&mut self, e: Affine) -> RowId {
        self.push_row(Kind::Zero, &e)
    }

    /// `e(x) >= 0`
    pub fn nonneg(&mut self, e: Affine) -> RowId {
        self.push_row(Kind::Nonneg, &e)
    }

    /// `‖(e_1, …, e_k)‖₂ <= e_0`
    pub fn soc(&mut self, head: Affine, tail: Vec<Affine>) -> RowId {
        let first = RowId(self.rows.len());
        self.rows
            .push((head.terms.iter().map(|&(j, c)| (j, -c)).collect(), head.constant));
        for e in &tail {
            self.rows
                .push((e.terms.iter().map(|&(j, c)| (j, -c)).collect(), e.constant));
        }
        self.blocks.push((Kind::Soc, tail.len() + 1));
        first
    }

    pub fn solve(&self) -> ConicSolution {
        let m = self.rows.len();
        let (mut ii, mut jj, mut vv) = (Vec::new(), Vec::new(), Vec::new());
        let mut b = Vec::with_capacity(m);
        for (i, (terms, rhs)) in self.rows.iter().enumerate() {
            for &(j, c) in terms {
                ii.push(i);
                jj.push(j);
                vv.push(c);
            }
            b.push(*rhs);
        }
        let a = CscMatrix::new_from_triplets(m, self.n_vars, ii, jj, vv);
        let p = CscMatrix::zeros((self.n_vars, self.n_vars));
        let cones: Vec<SupportedConeT<f64>> = self
            .blocks
            .iter()
            .map(|&(kind, k)| match kind {
                Kind::Zero => SupportedConeT::ZeroConeT(k),
                Kind::Nonneg => SupportedConeT::NonnegativeConeT(k),
                Kind::Soc => SupportedConeT::SecondOrderConeT(k),
            })
            .collect();
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(200)
            .tol_gap_abs(SOLVER_TOL)
            .tol_gap_rel(SOLVER_TOL)
            .tol_feas(SOLVER_TOL)
            .build()
            .expect("static solver settings are valid");
        let mut solver = match DefaultSolver::new(&p, &self.cost, &a, &b, &cones, settings) {
            Ok(s) => s,
            Err(_) => {
                return ConicSolution {
                    status: ConicStatus::MaxIter,
                    x: vec![f64::NAN; self.n_vars],
                    z: vec![f64::NAN; m],
                    objective: f64::NAN,
                    residual: f64::INFINITY,
                }
            }
        };
        solver.solve();
        let sol = &solver.solution;
        let gap = (sol.obj_val - sol.obj_val_dual).abs() / sol.obj_val.abs().max(1.0);
        let residual = sol.r_prim.max(sol.r_dual).max(gap);
        let status = match sol.status {
            SolverStatus::Solved => ConicStatus::Solved,
            SolverStatus::AlmostSolved if residual <= 1e-6 => ConicStatus::Solved,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => ConicStatus::Infeasible,
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => ConicStatus::Unbounded,
            _ => ConicStatus::MaxIter,
        };
        ConicSolution {
            status,
            x: sol.x.clone(),
            z: sol.z.clone(),
            objective: sol.obj_val,
            residual,
        }
    }
}
