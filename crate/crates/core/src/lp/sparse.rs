//! Sparse backend for larger problems, backed by the `minilp` revised
//! simplex. Satisfies the same solving contract as the embedded solver;
//! the dispatcher re-checks feasibility of returned points either way.

use super::{LpBackend, LpProblem, SolveStatus, VarBound};
use crate::symbolic::{Assignment, Relation, VarId};
use minilp::{ComparisonOp, OptimizationDirection, Problem, Variable};

pub struct SparseBackend;

impl LpBackend for SparseBackend {
    fn name(&self) -> &'static str {
        "sparse-simplex"
    }

    fn solve(&self, problem: &LpProblem, _feas_tol: f64, _opt_tol: f64) -> SolveStatus {
        if problem.bounds.len() != problem.num_vars {
            return SolveStatus::NumericFailure("bounds length mismatch".into());
        }
        let mut p = Problem::new(OptimizationDirection::Minimize);
        let vars: Vec<Variable> = problem
            .bounds
            .iter()
            .enumerate()
            .map(|(j, bound)| {
                let coeff = problem.objective.coeff(VarId(j as u32));
                let range = match bound {
                    VarBound::Free => (f64::NEG_INFINITY, f64::INFINITY),
                    VarBound::NonNeg => (0.0, f64::INFINITY),
                };
                p.add_var(coeff, range)
            })
            .collect();
        for c in &problem.constraints {
            let rhs = c.rhs - c.expr.constant_part();
            let op = match c.rel {
                Relation::Le => ComparisonOp::Le,
                Relation::Ge => ComparisonOp::Ge,
                Relation::Eq => ComparisonOp::Eq,
            };
            let terms: Vec<(Variable, f64)> = c
                .expr
                .terms()
                .map(|(VarId(id), coeff)| (vars[id as usize], coeff))
                .collect();
            p.add_constraint(&terms, op, rhs);
        }
        match p.solve() {
            Ok(solution) => {
                if !solution.objective().is_finite() {
                    // minilp reports some unbounded problems as an infinite optimum
                    return SolveStatus::Unbounded;
                }
                let assignment: Assignment = vars
                    .iter()
                    .enumerate()
                    .map(|(j, v)| (VarId(j as u32), solution[*v]))
                    .collect();
                let objective = match problem.objective.eval(&assignment) {
                    Ok(v) => v,
                    Err(e) => return SolveStatus::NumericFailure(format!("objective eval: {e}")),
                };
                SolveStatus::Optimal {
                    assignment,
                    objective,
                }
            }
            Err(minilp::Error::Infeasible) => SolveStatus::Infeasible,
            Err(minilp::Error::Unbounded) => SolveStatus::Unbounded,
        }
    }
}
