//! Small conic-program builder and the interior-point backend behind it.
//!
//! Problems are `minimize c^T x` over linear equalities, linear inequalities
//! and second-order cones `expr[0] >= |expr[1..]|` of affine expressions.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConicError {
    #[error("malformed conic problem: {0}")]
    Malformed(String),
    #[error("conic problem is infeasible")]
    Infeasible,
    #[error("conic problem is unbounded")]
    Unbounded,
    #[error("conic solver stopped with status {0}")]
    Failed(String),
}

/// `sum coef * x[index] + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Affine {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn constant(value: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: value,
        }
    }

    pub fn var(index: usize) -> Self {
        Self {
            terms: vec![(index, 1.0)],
            constant: 0.0,
        }
    }

    pub fn term(mut self, index: usize, coef: f64) -> Self {
        if coef != 0.0 {
            self.terms.push((index, coef));
        }
        self
    }

    pub fn plus(mut self, value: f64) -> Self {
        self.constant += value;
        self
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        for t in &mut self.terms {
            t.1 *= factor;
        }
        self.constant *= factor;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, a)| a * x[i]).sum::<f64>() + self.constant
    }
}

#[derive(Debug, Clone, Default)]
pub struct ConicProblem {
    num_vars: usize,
    objective: Vec<f64>,
    equalities: Vec<Affine>,
    inequalities: Vec<Affine>,
    cones: Vec<Vec<Affine>>,
}

impl ConicProblem {
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            objective: vec![0.0; num_vars],
            ..Self::default()
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_cones(&self) -> usize {
        self.cones.len()
    }

    /// Adds `coef * x[index]` to the minimized objective.
    pub fn minimize_term(&mut self, index: usize, coef: f64) {
        self.objective[index] += coef;
    }

    /// `expr == 0`.
    pub fn equal_zero(&mut self, expr: Affine) {
        self.equalities.push(expr);
    }

    /// `expr >= 0`.
    pub fn nonneg(&mut self, expr: Affine) {
        self.inequalities.push(expr);
    }

    /// `exprs[0] >= |(exprs[1], .., exprs[n])|`.
    pub fn second_order(&mut self, exprs: Vec<Affine>) {
        self.cones.push(exprs);
    }

    fn check(&self) -> Result<(), ConicError> {
        let bad = |e: &Affine| {
            !e.constant.is_finite()
                || e.terms
                    .iter()
                    .any(|&(i, a)| i >= self.num_vars || !a.is_finite())
        };
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(ConicError::Malformed("non-finite objective".into()));
        }
        let all = self
            .equalities
            .iter()
            .chain(&self.inequalities)
            .chain(self.cones.iter().flatten());
        if all.clone().any(bad) {
            return Err(ConicError::Malformed(
                "constraint references an unknown variable or is non-finite".into(),
            ));
        }
        if self.cones.iter().any(|c| c.is_empty()) {
            return Err(ConicError::Malformed("empty second-order cone".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// The solver met only its reduced accuracy targets.
    pub reduced_accuracy: bool,
    pub iterations: u32,
}

pub trait ConicBackend: Send + Sync {
    fn solve(&self, problem: &ConicProblem) -> Result<ConicSolution, ConicError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClarabelBackend {
    pub tolerance: f64,
    pub max_iter: u32,
}

impl Default for ClarabelBackend {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iter: 200,
        }
    }
}

impl ClarabelBackend {
    pub fn with_tolerance(tolerance: f64) -> Self {
        Self {
            tolerance,
            ..Self::default()
        }
    }
}

impl ConicBackend for ClarabelBackend {
    fn solve(&self, problem: &ConicProblem) -> Result<ConicSolution, ConicError> {
        problem.check()?;
        let n = problem.num_vars;
        let mut rows = Vec::new();
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut b = Vec::new();
        let mut cones = Vec::new();

        // Clarabel form: A x + s = b with s in K. An affine expression
        // g x + h constrained to K becomes the row -g with right side h.
        let mut push = |e: &Affine| {
            let r = b.len();
            for &(i, a) in &e.terms {
                rows.push(r);
                cols.push(i);
                vals.push(-a);
            }
            b.push(e.constant);
        };
        for e in &problem.equalities {
            push(e);
        }
        if !problem.equalities.is_empty() {
            cones.push(SupportedConeT::ZeroConeT(problem.equalities.len()));
        }
        for e in &problem.inequalities {
            push(e);
        }
        if !problem.inequalities.is_empty() {
            cones.push(SupportedConeT::NonnegativeConeT(problem.inequalities.len()));
        }
        for cone in &problem.cones {
            for e in cone {
                push(e);
            }
            cones.push(SupportedConeT::SecondOrderConeT(cone.len()));
        }
        let m = b.len();
        let a = CscMatrix::new_from_triplets(m, n, rows, cols, vals);
        let p = CscMatrix::zeros((n, n));

        // Retry once without equilibration when the first attempt stalls.
        let mut solver = None;
        for equilibrate in [true, false] {
            let settings = DefaultSettingsBuilder::default()
                .verbose(false)
                .max_iter(self.max_iter)
                .tol_feas(self.tolerance)
                .tol_gap_abs(self.tolerance)
                .tol_gap_rel(self.tolerance)
                .equilibrate_enable(equilibrate)
                .build()
                .map_err(|e| ConicError::Malformed(e.to_string()))?;
            let mut s = DefaultSolver::new(&p, &problem.objective, &a, &b, &cones, settings)
                .map_err(|e| ConicError::Malformed(e.to_string()))?;
            s.solve();
            let retry = matches!(
                s.solution.status,
                SolverStatus::NumericalError | SolverStatus::InsufficientProgress
            );
            solver = Some(s);
            if !retry {
                break;
            }
        }
        let solver = solver.expect("at least one attempt");
        let sol = &solver.solution;
        let reduced_accuracy = match sol.status {
            SolverStatus::Solved => false,
            SolverStatus::AlmostSolved => true,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                return Err(ConicError::Infeasible)
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                return Err(ConicError::Unbounded)
            }
            other => return Err(ConicError::Failed(format!("{other:?}"))),
        };
        if sol.x.iter().any(|v| !v.is_finite()) {
            return Err(ConicError::Failed("non-finite primal solution".into()));
        }
        Ok(ConicSolution {
            x: sol.x.clone(),
            objective: sol.obj_val,
            reduced_accuracy,
            iterations: sol.iterations,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_lp() {
        // max x + y  s.t. x + 2y <= 4, 3x + y <= 6, x, y >= 0  ->  (1.6, 1.2)
        let mut p = ConicProblem::new(2);
        p.minimize_term(0, -1.0);
        p.minimize_term(1, -1.0);
        p.nonneg(Affine::constant(4.0).term(0, -1.0).term(1, -2.0));
        p.nonneg(Affine::constant(6.0).term(0, -3.0).term(1, -1.0));
        p.nonneg(Affine::var(0));
        p.nonneg(Affine::var(1));
        let s = ClarabelBackend::default().solve(&p).unwrap();
        assert!((s.x[0] - 1.6).abs() < 1e-6 && (s.x[1] - 1.2).abs() < 1e-6);
        assert!((s.objective + 2.8).abs() < 1e-6);
    }

    #[test]
    fn projection_onto_disc() {
        // min t  s.t. |(x - 3, y - 4)| <= t, |(x, y)| <= 1  ->  (0.6, 0.8), t = 4
        let mut p = ConicProblem::new(3);
        p.minimize_term(2, 1.0);
        p.second_order(vec![
            Affine::var(2),
            Affine::var(0).plus(-3.0),
            Affine::var(1).plus(-4.0),
        ]);
        p.second_order(vec![Affine::constant(1.0), Affine::var(0), Affine::var(1)]);
        let s = ClarabelBackend::default().solve(&p).unwrap();
        assert!((s.x[0] - 0.6).abs() < 1e-6 && (s.x[1] - 0.8).abs() < 1e-6);
        assert!((s.x[2] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn equality_and_infeasibility() {
        let mut p = ConicProblem::new(1);
        p.minimize_term(0, 1.0);
        p.equal_zero(Affine::var(0).plus(-2.0));
        let s = ClarabelBackend::default().solve(&p).unwrap();
        assert!((s.x[0] - 2.0).abs() < 1e-7);

        p.nonneg(Affine::var(0).scaled(-1.0).plus(1.0));
        assert_eq!(ClarabelBackend::default().solve(&p), Err(ConicError::Infeasible));

        let mut q = ConicProblem::new(1);
        q.minimize_term(0, 1.0);
        assert_eq!(ClarabelBackend::default().solve(&q), Err(ConicError::Unbounded));

        let mut bad = ConicProblem::new(1);
        bad.nonneg(Affine::var(3));
        assert!(matches!(ClarabelBackend::default().solve(&bad), Err(ConicError::Malformed(_))));
    }
}
