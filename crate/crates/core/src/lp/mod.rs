//! The repair feasibility problem with its delta-norm objective, and a
//! deterministic solving contract.
//!
//! Two interchangeable backends satisfy the contract: an embedded dense
//! two-phase simplex (the default, self-contained) and a sparse backend for
//! larger problems. `Auto` routes by problem size.

mod dump;
mod simplex;
mod sparse;

pub use dump::write_lp_format;
pub use simplex::EmbeddedSimplex;
pub use sparse::SparseBackend;

use crate::symbolic::{
    AffineExpr, Assignment, LinearConstraint, Relation, SymbolicPoint, VarId, VarRegistry, VarRole,
};
use serde::{Deserialize, Serialize};

/// Default feasibility tolerance: optimal assignments satisfy every
/// constraint with violation at most this.
pub const DEFAULT_FEAS_TOL: f64 = 1e-7;
/// Default optimality tolerance for objective cross-checks.
pub const DEFAULT_OPT_TOL: f64 = 1e-6;

/// Dense-tableau cell budget above which `Auto` routes to the sparse backend.
const DENSE_CELL_LIMIT: usize = 2_000_000;

/// Variable domain. Norm auxiliaries are non-negative; parameters are free.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarBound {
    Free,
    NonNeg,
}

/// A linear program: minimize `objective` subject to `constraints`, with
/// one bound per variable id below `num_vars`.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub num_vars: usize,
    pub bounds: Vec<VarBound>,
    pub constraints: Vec<LinearConstraint>,
    pub objective: AffineExpr,
}

impl LpProblem {
    /// Bounds derived from a registry: parameters free, auxiliaries non-negative.
    pub fn bounds_from_registry(reg: &VarRegistry) -> Vec<VarBound> {
        reg.ids()
            .map(|id| match reg.role(id) {
                VarRole::Param(_) => VarBound::Free,
                VarRole::Aux(_) => VarBound::NonNeg,
            })
            .collect()
    }
}

/// Outcome of a solve call.
#[derive(Debug, Clone, PartialEq)]
pub enum SolveStatus {
    Optimal {
        assignment: Assignment,
        objective: f64,
    },
    Infeasible,
    Unbounded,
    NumericFailure(String),
}

impl SolveStatus {
    pub fn label(&self) -> &'static str {
        match self {
            SolveStatus::Optimal { .. } => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::NumericFailure(_) => "numeric-failure",
        }
    }
}

/// The solving contract: deterministic for identical input, and `Optimal`
/// assignments satisfy every constraint within `feas_tol`.
pub trait LpBackend {
    fn name(&self) -> &'static str;
    fn solve(&self, problem: &LpProblem, feas_tol: f64, opt_tol: f64) -> SolveStatus;
}

/// Which backend a solve call uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendChoice {
    /// Embedded solver, unless the dense tableau would exceed its cell budget.
    #[default]
    Auto,
    Embedded,
    Sparse,
}

fn dense_cells(problem: &LpProblem) -> usize {
    let free = problem
        .bounds
        .iter()
        .filter(|b| **b == VarBound::Free)
        .count();
    let cols = problem.num_vars + free + 2 * problem.constraints.len();
    problem.constraints.len().saturating_mul(cols + 1)
}

/// Solves the problem with the chosen backend and independently re-checks
/// that an `Optimal` assignment satisfies every constraint within `feas_tol`.
pub fn solve(
    problem: &LpProblem,
    feas_tol: f64,
    opt_tol: f64,
    choice: BackendChoice,
) -> (SolveStatus, &'static str) {
    let use_sparse = match choice {
        BackendChoice::Embedded => false,
        BackendChoice::Sparse => true,
        BackendChoice::Auto => dense_cells(problem) > DENSE_CELL_LIMIT,
    };
    let (status, name) = if use_sparse {
        let b = SparseBackend;
        (checked(&b, problem, feas_tol, opt_tol), b.name())
    } else {
        let b = EmbeddedSimplex;
        (checked(&b, problem, feas_tol, opt_tol), b.name())
    };
    // deterministic backstop: a numeric failure of the embedded solver is
    // retried on the sparse backend before being reported
    if !use_sparse {
        if let SolveStatus::NumericFailure(_) = status {
            let b = SparseBackend;
            let retry = checked(&b, problem, feas_tol, opt_tol);
            if !matches!(retry, SolveStatus::NumericFailure(_)) {
                return (retry, "sparse-simplex (fallback)");
            }
        }
    }
    (status, name)
}

fn checked(
    backend: &dyn LpBackend,
    problem: &LpProblem,
    feas_tol: f64,
    opt_tol: f64,
) -> SolveStatus {
    match backend.solve(problem, feas_tol, opt_tol) {
        SolveStatus::Optimal {
            assignment,
            objective,
        } => match max_violation(problem, &assignment) {
            Ok(v) if v <= feas_tol => SolveStatus::Optimal {
                assignment,
                objective,
            },
            Ok(v) => SolveStatus::NumericFailure(format!(
                "backend {} returned a point violating a constraint by {v:.3e}",
                backend.name()
            )),
            Err(e) => SolveStatus::NumericFailure(format!(
                "backend {} returned an incomplete assignment: {e}",
                backend.name()
            )),
        },
        other => other,
    }
}

/// Largest constraint violation of the assignment (0 if all hold).
pub fn max_violation(
    problem: &LpProblem,
    assignment: &Assignment,
) -> Result<f64, crate::symbolic::SymError> {
    let mut worst = 0.0f64;
    for c in &problem.constraints {
        let slack = c.slack(assignment)?;
        if -slack > worst {
            worst = -slack;
        }
    }
    Ok(worst)
}

/// Builds the combined delta-norm objective for a repair solve.
///
/// The delta vector stacks every output expression minus its target value,
/// then every symbolic parameter minus its original value. One auxiliary `t`
/// bounds the L-infinity norm (`t >= d_i`, `t >= -d_i`), and one `s_i` per
/// entry bounds the L1 terms. The objective is `t + (1/n) * sum(s_i)`.
pub fn build_delta_objective(
    sym_outputs: &[SymbolicPoint],
    target_outputs: &[Vec<f64>],
    sym_params: &[(VarId, f64)],
    reg: &mut VarRegistry,
) -> Result<(AffineExpr, Vec<LinearConstraint>), String> {
    if sym_outputs.len() != target_outputs.len() {
        return Err(format!(
            "output/target count mismatch: {} vs {}",
            sym_outputs.len(),
            target_outputs.len()
        ));
    }
    let mut deltas: Vec<AffineExpr> = Vec::new();
    for (sp, tp) in sym_outputs.iter().zip(target_outputs) {
        if sp.len() != tp.len() {
            return Err(format!(
                "output width mismatch: {} vs {}",
                sp.len(),
                tp.len()
            ));
        }
        for (expr, &target) in sp.iter().zip(tp) {
            let mut d = expr.clone();
            d.add_constant(-target);
            deltas.push(d);
        }
    }
    for &(id, original) in sym_params {
        let mut d = AffineExpr::var(id);
        d.add_constant(-original);
        deltas.push(d);
    }

    let n = deltas.len();
    let t = reg.fresh(VarRole::Aux("linf"));
    let mut objective = AffineExpr::var(t);
    let mut constraints = Vec::with_capacity(4 * n);
    let weight = 1.0 / n as f64;
    for d in &deltas {
        let s = reg.fresh(VarRole::Aux("l1"));
        objective.add_term(s, weight);
        for (aux, sign) in [(t, -1.0), (t, 1.0), (s, -1.0), (s, 1.0)] {
            // aux + sign*d >= 0  encodes aux >= -sign*d
            let mut expr = AffineExpr::var(aux);
            expr.add_scaled(d, sign);
            constraints.push(LinearConstraint::new(expr, Relation::Ge, 0.0));
        }
    }
    Ok((objective, constraints))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::{VarRegistry, VarRole};

    fn reg_with(n: usize) -> (VarRegistry, Vec<VarId>) {
        let mut reg = VarRegistry::new();
        let ids = (0..n).map(|_| reg.fresh(VarRole::Aux("test"))).collect();
        (reg, ids)
    }

    /// Fixed deltas [1, -2]: optimum is t = 2, normalized L1 = 1.5, total 3.5.
    #[test]
    fn delta_objective_fixed_deltas() {
        let (mut reg, ids) = reg_with(2);
        let params = vec![(ids[0], -1.0), (ids[1], 2.0)];
        let (objective, aux) = build_delta_objective(&[], &[], &params, &mut reg).unwrap();
        assert_eq!(aux.len(), 8);
        let problem = LpProblem {
            num_vars: reg.len(),
            bounds: vec![
                VarBound::Free,
                VarBound::Free,
                VarBound::NonNeg,
                VarBound::NonNeg,
                VarBound::NonNeg,
            ],
            constraints: {
                // pin the deltas: x0 = 0 (delta 1 from original -1), x1 = 0 (delta -2)
                let mut cs = vec![
                    LinearConstraint::new(AffineExpr::var(ids[0]), Relation::Eq, 0.0),
                    LinearConstraint::new(AffineExpr::var(ids[1]), Relation::Eq, 0.0),
                ];
                cs.extend(aux.clone());
                cs
            },
            objective,
        };
        let (status, _) = solve(
            &problem,
            DEFAULT_FEAS_TOL,
            DEFAULT_OPT_TOL,
            BackendChoice::Embedded,
        );
        match status {
            SolveStatus::Optimal { objective, .. } => {
                assert!((objective - 3.5).abs() < 1e-7, "objective {objective}");
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn delta_objective_all_zero() {
        let (mut reg, ids) = reg_with(1);
        let params = vec![(ids[0], 5.0)];
        let (objective, aux) = build_delta_objective(&[], &[], &params, &mut reg).unwrap();
        let mut constraints = vec![LinearConstraint::new(
            AffineExpr::var(ids[0]),
            Relation::Eq,
            5.0,
        )];
        constraints.extend(aux);
        let problem = LpProblem {
            num_vars: reg.len(),
            bounds: vec![VarBound::Free, VarBound::NonNeg, VarBound::NonNeg],
            constraints,
            objective,
        };
        let (status, _) = solve(
            &problem,
            DEFAULT_FEAS_TOL,
            DEFAULT_OPT_TOL,
            BackendChoice::Embedded,
        );
        match status {
            SolveStatus::Optimal {
                objective,
                assignment,
            } => {
                assert!(objective.abs() < 1e-9);
                // norm auxiliaries all zero
                for id in reg.ids() {
                    if matches!(reg.role(id), VarRole::Aux("linf" | "l1")) {
                        assert!(assignment.get(id).unwrap().abs() < 1e-9);
                    }
                }
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn delta_objective_alignment_mismatch() {
        let (mut reg, _) = reg_with(1);
        let err = build_delta_objective(&[vec![]], &[], &[], &mut reg);
        assert!(err.is_err());
    }
}
