//! Embedded dense two-phase simplex.
//!
//! Classic tableau method: phase 1 minimizes artificial infeasibility, phase
//! 2 the real objective. Pivoting is Dantzig's rule with lowest-index
//! tie-breaks, falling back to Bland's rule permanently once the objective
//! stalls, which prevents cycling. All loops run in a fixed order, so
//! identical inputs produce bit-identical results.

use super::{LpBackend, LpProblem, SolveStatus, VarBound};
use crate::symbolic::{Assignment, Relation, VarId};

/// Hard cap on dense tableau cells (~512 MB of f64) before giving up.
const HARD_CELL_LIMIT: usize = 64_000_000;
/// Entering-variable threshold on reduced costs.
const COST_TOL: f64 = 1e-9;
/// Smallest acceptable pivot element.
const PIVOT_TOL: f64 = 1e-9;
/// Consecutive non-improving pivots before switching to Bland's rule.
const STALL_LIMIT: usize = 256;

pub struct EmbeddedSimplex;

impl LpBackend for EmbeddedSimplex {
    fn name(&self) -> &'static str {
        "embedded-simplex"
    }

    fn solve(&self, problem: &LpProblem, feas_tol: f64, _opt_tol: f64) -> SolveStatus {
        Tableau::build(problem).map_or_else(SolveStatus::NumericFailure, |mut t| {
            t.run(problem, feas_tol)
        })
    }
}

/// One constraint normalized to non-negative rhs: sparse terms over user
/// variables, the relation, and the scaled right-hand side.
type NormalizedRow = (Vec<(usize, f64)>, Relation, f64);

struct Tableau {
    m: usize,
    /// Structural + slack + artificial columns; index `width - 1` is the rhs.
    width: usize,
    data: Vec<f64>,
    basis: Vec<usize>,
    /// Structural column -> (user variable index, sign).
    col_source: Vec<(usize, f64)>,
    n_struct: usize,
    art_start: usize,
    cost2: Vec<f64>,
    rhs_max: f64,
}

enum PivotOutcome {
    Optimal,
    Unbounded,
    IterLimit,
}

impl Tableau {
    fn build(problem: &LpProblem) -> Result<Tableau, String> {
        let m = problem.constraints.len();

        // free variables are split internally into a positive and a negative part
        let mut col_source: Vec<(usize, f64)> = Vec::new();
        for (j, bound) in problem.bounds.iter().enumerate() {
            col_source.push((j, 1.0));
            if *bound == VarBound::Free {
                col_source.push((j, -1.0));
            }
        }
        if problem.bounds.len() != problem.num_vars {
            return Err("bounds length does not match variable count".into());
        }
        let n_struct = col_source.len();

        let mut n_slack = 0;
        let mut n_art = 0;
        let mut normalized: Vec<NormalizedRow> = Vec::with_capacity(m);
        for c in &problem.constraints {
            let mut rhs = c.rhs - c.expr.constant_part();
            let mut rel = c.rel;
            // equilibrate: divide the row by its largest coefficient magnitude
            let scale = c
                .expr
                .terms()
                .fold(0.0f64, |acc, (_, coeff)| acc.max(coeff.abs()));
            let inv_scale = if scale > 0.0 { 1.0 / scale } else { 1.0 };
            rhs *= inv_scale;
            let mut flip = inv_scale;
            if rhs < 0.0 {
                rhs = -rhs;
                flip = -inv_scale;
                rel = match rel {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
            }
            match rel {
                Relation::Le => n_slack += 1,
                Relation::Ge => {
                    n_slack += 1;
                    n_art += 1;
                }
                Relation::Eq => n_art += 1,
            }
            let terms: Vec<(usize, f64)> = c
                .expr
                .terms()
                .map(|(VarId(id), coeff)| (id as usize, flip * coeff))
                .collect();
            normalized.push((terms, rel, rhs));
        }

        let width = n_struct + n_slack + n_art + 1;
        if m.saturating_mul(width) > HARD_CELL_LIMIT {
            return Err(format!(
                "problem too large for the dense tableau ({m} rows x {width} columns)"
            ));
        }

        // structural column index per (user var, sign)
        let mut pos_col = vec![usize::MAX; problem.num_vars];
        let mut neg_col = vec![usize::MAX; problem.num_vars];
        for (col, &(var, sign)) in col_source.iter().enumerate() {
            if sign > 0.0 {
                pos_col[var] = col;
            } else {
                neg_col[var] = col;
            }
        }

        let mut data = vec![0.0; m * width];
        let mut basis = vec![0usize; m];
        let art_start = n_struct + n_slack;
        let mut next_slack = n_struct;
        let mut next_art = art_start;
        let mut rhs_max = 0.0f64;
        for (r, (terms, rel, rhs)) in normalized.iter().enumerate() {
            let row = &mut data[r * width..(r + 1) * width];
            for &(var, coeff) in terms {
                if var >= problem.num_vars {
                    return Err(format!("constraint references unknown variable v{var}"));
                }
                row[pos_col[var]] += coeff;
                if neg_col[var] != usize::MAX {
                    row[neg_col[var]] -= coeff;
                }
            }
            row[width - 1] = *rhs;
            rhs_max = rhs_max.max(*rhs);
            match rel {
                Relation::Le => {
                    row[next_slack] = 1.0;
                    basis[r] = next_slack;
                    next_slack += 1;
                }
                Relation::Ge => {
                    row[next_slack] = -1.0;
                    next_slack += 1;
                    row[next_art] = 1.0;
                    basis[r] = next_art;
                    next_art += 1;
                }
                Relation::Eq => {
                    row[next_art] = 1.0;
                    basis[r] = next_art;
                    next_art += 1;
                }
            }
        }

        // phase-2 cost over structural columns
        let mut cost2 = vec![0.0; width - 1];
        for (VarId(id), coeff) in problem.objective.terms() {
            let var = id as usize;
            if var >= problem.num_vars {
                return Err(format!("objective references unknown variable v{var}"));
            }
            cost2[pos_col[var]] += coeff;
            if neg_col[var] != usize::MAX {
                cost2[neg_col[var]] -= coeff;
            }
        }

        Ok(Tableau {
            m,
            width,
            data,
            basis,
            col_source,
            n_struct,
            art_start,
            cost2,
            rhs_max,
        })
    }

    fn run(&mut self, problem: &LpProblem, feas_tol: f64) -> SolveStatus {
        // phase 1
        if self.art_start + 1 < self.width {
            let mut cost1 = vec![0.0; self.width - 1];
            for c in cost1.iter_mut().skip(self.art_start) {
                *c = 1.0;
            }
            let (outcome, obj) = self.pivot_loop(&cost1, self.width - 1);
            match outcome {
                PivotOutcome::Optimal => {}
                PivotOutcome::Unbounded => {
                    return SolveStatus::NumericFailure(
                        "phase-1 objective unbounded (internal error)".into(),
                    )
                }
                PivotOutcome::IterLimit => {
                    return SolveStatus::NumericFailure("phase-1 iteration limit reached".into())
                }
            }
            if obj > feas_tol * (1.0 + self.rhs_max) {
                return SolveStatus::Infeasible;
            }
            self.drive_out_artificials();
        }

        // phase 2: artificial columns are locked out of the pricing step
        let cost2 = self.cost2.clone();
        let (outcome, _) = self.pivot_loop(&cost2, self.art_start);
        match outcome {
            PivotOutcome::Optimal => {}
            PivotOutcome::Unbounded => return SolveStatus::Unbounded,
            PivotOutcome::IterLimit => {
                return SolveStatus::NumericFailure("phase-2 iteration limit reached".into())
            }
        }

        // map structural values back to user variables
        let mut values = vec![0.0; problem.num_vars];
        for (r, &b) in self.basis.iter().enumerate() {
            if b < self.n_struct {
                let (var, sign) = self.col_source[b];
                values[var] += sign * self.data[r * self.width + self.width - 1];
            }
        }
        let assignment: Assignment = (0..problem.num_vars)
            .map(|j| (VarId(j as u32), values[j]))
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

    /// Runs simplex iterations for the given cost vector; columns at or past
    /// `enter_limit` never enter the basis. Returns the outcome and the final
    /// objective value.
    fn pivot_loop(&mut self, cost: &[f64], enter_limit: usize) -> (PivotOutcome, f64) {
        let width = self.width;
        // reduced costs by eliminating basic columns from the cost row
        let mut d = cost.to_vec();
        let mut obj = 0.0;
        for (r, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                let row = &self.data[r * width..(r + 1) * width];
                for (dj, rj) in d.iter_mut().zip(row.iter()) {
                    *dj -= cb * rj;
                }
                obj += cb * row[width - 1];
            }
        }

        let max_iters = 2_000 + 40 * (self.m + width);
        let mut bland = false;
        let mut stall = 0usize;
        for _ in 0..max_iters {
            // entering column
            let mut enter = usize::MAX;
            if bland {
                for (j, &dj) in d.iter().enumerate().take(enter_limit) {
                    if dj < -COST_TOL {
                        enter = j;
                        break;
                    }
                }
            } else {
                let mut best = -COST_TOL;
                for (j, &dj) in d.iter().enumerate().take(enter_limit) {
                    if dj < best {
                        best = dj;
                        enter = j;
                    }
                }
            }
            if enter == usize::MAX {
                return (PivotOutcome::Optimal, obj);
            }

            // two-pass ratio test: find the minimal ratio, then pick the row.
            // In Bland mode ties break toward the smallest basis index (the
            // anti-cycling guarantee); otherwise toward the largest pivot
            // element for numerical stability.
            let mut best_ratio = f64::INFINITY;
            for r in 0..self.m {
                let a = self.data[r * width + enter];
                if a > PIVOT_TOL {
                    best_ratio = best_ratio.min(self.data[r * width + width - 1] / a);
                }
            }
            if best_ratio == f64::INFINITY {
                return (PivotOutcome::Unbounded, obj);
            }
            let ratio_cut = best_ratio + 1e-9 * (1.0 + best_ratio.abs());
            let mut pivot_row = usize::MAX;
            let mut best_pivot = 0.0f64;
            for r in 0..self.m {
                let a = self.data[r * width + enter];
                if a > PIVOT_TOL && self.data[r * width + width - 1] / a <= ratio_cut {
                    let better = if bland {
                        pivot_row == usize::MAX || self.basis[r] < self.basis[pivot_row]
                    } else {
                        a > best_pivot
                    };
                    if better {
                        best_pivot = a;
                        pivot_row = r;
                    }
                }
            }
            let best_ratio = {
                let a = self.data[pivot_row * width + enter];
                self.data[pivot_row * width + width - 1] / a
            };

            let delta = d[enter] * best_ratio;
            self.pivot(pivot_row, enter, &mut d);
            obj += delta;

            if delta > -1e-12 {
                stall += 1;
                if stall >= STALL_LIMIT {
                    bland = true;
                }
            } else {
                stall = 0;
            }
        }
        (PivotOutcome::IterLimit, obj)
    }

    fn pivot(&mut self, r: usize, enter: usize, d: &mut [f64]) {
        let width = self.width;
        let pivot = self.data[r * width + enter];
        let inv = 1.0 / pivot;
        for v in self.data[r * width..(r + 1) * width].iter_mut() {
            *v *= inv;
        }
        self.data[r * width + enter] = 1.0;

        let (head, rest) = self.data.split_at_mut(r * width);
        let (prow, tail) = rest.split_at_mut(width);
        let eliminate = |row: &mut [f64]| {
            let f = row[enter];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * p;
                }
                row[enter] = 0.0;
            }
        };
        for row in head.chunks_exact_mut(width) {
            eliminate(row);
        }
        for row in tail.chunks_exact_mut(width) {
            eliminate(row);
        }
        let f = d[enter];
        if f != 0.0 {
            for (v, p) in d.iter_mut().zip(prow.iter()) {
                *v -= f * p;
            }
            d[enter] = 0.0;
        }
        // clamp tiny negative right-hand sides introduced by elimination
        for row in self.data.chunks_exact_mut(width) {
            let rhs = &mut row[width - 1];
            if *rhs < 0.0 && *rhs > -1e-11 {
                *rhs = 0.0;
            }
        }
        self.basis[r] = enter;
    }

    /// After phase 1, pivots leftover artificials out of the basis where a
    /// well-conditioned pivot exists. Rows that admit none are redundant
    /// (all-zero after elimination) and stay inert.
    fn drive_out_artificials(&mut self) {
        let width = self.width;
        for r in 0..self.m {
            if self.basis[r] >= self.art_start {
                let mut d_unused = vec![0.0; width - 1];
                let mut best = 0usize;
                let mut best_mag = 0.0f64;
                for j in 0..self.art_start {
                    let mag = self.data[r * width + j].abs();
                    if mag > best_mag {
                        best_mag = mag;
                        best = j;
                    }
                }
                // a tiny pivot here would poison the whole tableau
                if best_mag > 1e-7 {
                    self.pivot(r, best, &mut d_unused);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{solve, BackendChoice, DEFAULT_FEAS_TOL, DEFAULT_OPT_TOL};
    use crate::symbolic::{AffineExpr, LinearConstraint, Relation};

    fn var(id: u32) -> AffineExpr {
        AffineExpr::var(VarId(id))
    }

    fn abs_value_problem() -> LpProblem {
        // minimize t subject to t >= x - 3, t >= 3 - x, x free
        let mut c1 = var(0); // t - x >= -3
        c1.add_scaled(&var(1), -1.0);
        let mut c2 = var(0); // t + x >= 3
        c2.add_scaled(&var(1), 1.0);
        LpProblem {
            num_vars: 2,
            bounds: vec![VarBound::NonNeg, VarBound::Free],
            constraints: vec![
                LinearConstraint::new(c1, Relation::Ge, -3.0),
                LinearConstraint::new(c2, Relation::Ge, 3.0),
            ],
            objective: var(0),
        }
    }

    #[test]
    fn minimizes_absolute_deviation() {
        let (status, _) = solve(
            &abs_value_problem(),
            DEFAULT_FEAS_TOL,
            DEFAULT_OPT_TOL,
            BackendChoice::Embedded,
        );
        match status {
            SolveStatus::Optimal {
                assignment,
                objective,
            } => {
                assert!(objective.abs() < 1e-9);
                assert!((assignment.get(VarId(1)).unwrap() - 3.0).abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn detects_infeasible() {
        let p = LpProblem {
            num_vars: 1,
            bounds: vec![VarBound::Free],
            constraints: vec![
                LinearConstraint::new(var(0), Relation::Ge, 1.0),
                LinearConstraint::new(var(0), Relation::Le, 0.0),
            ],
            objective: var(0),
        };
        let (status, _) = solve(
            &p,
            DEFAULT_FEAS_TOL,
            DEFAULT_OPT_TOL,
            BackendChoice::Embedded,
        );
        assert_eq!(status, SolveStatus::Infeasible);
    }

    #[test]
    fn detects_unbounded() {
        let mut objective = AffineExpr::constant(0.0);
        objective.add_term(VarId(0), -1.0);
        let p = LpProblem {
            num_vars: 1,
            bounds: vec![VarBound::Free],
            constraints: vec![LinearConstraint::new(var(0), Relation::Ge, 0.0)],
            objective,
        };
        let (status, _) = solve(
            &p,
            DEFAULT_FEAS_TOL,
            DEFAULT_OPT_TOL,
            BackendChoice::Embedded,
        );
        assert_eq!(status, SolveStatus::Unbounded);
    }

    #[test]
    fn equality_constraints() {
        // minimize x + y subject to x + 2y = 4, x - y = 1  => unique point
        let mut e1 = var(0);
        e1.add_scaled(&var(1), 2.0);
        let mut e2 = var(0);
        e2.add_scaled(&var(1), -1.0);
        let mut objective = var(0);
        objective.add_scaled(&var(1), 1.0);
        let p = LpProblem {
            num_vars: 2,
            bounds: vec![VarBound::Free, VarBound::Free],
            constraints: vec![
                LinearConstraint::new(e1, Relation::Eq, 4.0),
                LinearConstraint::new(e2, Relation::Eq, 1.0),
            ],
            objective,
        };
        let (status, _) = solve(
            &p,
            DEFAULT_FEAS_TOL,
            DEFAULT_OPT_TOL,
            BackendChoice::Embedded,
        );
        match status {
            SolveStatus::Optimal { assignment, .. } => {
                assert!((assignment.get(VarId(0)).unwrap() - 2.0).abs() < 1e-9);
                assert!((assignment.get(VarId(1)).unwrap() - 1.0).abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn deterministic_bit_for_bit() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        // a medium random feasible problem
        let n = 30usize;
        let mut constraints = Vec::new();
        for _ in 0..60 {
            let mut e = AffineExpr::constant(0.0);
            for j in 0..n {
                if rng.gen_bool(0.3) {
                    e.add_term(VarId(j as u32), rng.gen_range(-2.0..2.0));
                }
            }
            constraints.push(LinearConstraint::new(
                e,
                Relation::Le,
                rng.gen_range(0.5..5.0),
            ));
        }
        let mut objective = AffineExpr::constant(0.0);
        for j in 0..n {
            objective.add_term(VarId(j as u32), rng.gen_range(-1.0..1.0));
        }
        // box the variables so the problem stays bounded
        for j in 0..n {
            constraints.push(LinearConstraint::new(var(j as u32), Relation::Le, 10.0));
            constraints.push(LinearConstraint::new(var(j as u32), Relation::Ge, -10.0));
        }
        let p = LpProblem {
            num_vars: n,
            bounds: vec![VarBound::Free; n],
            constraints,
            objective,
        };
        let (s1, _) = solve(
            &p,
            DEFAULT_FEAS_TOL,
            DEFAULT_OPT_TOL,
            BackendChoice::Embedded,
        );
        let (s2, _) = solve(
            &p,
            DEFAULT_FEAS_TOL,
            DEFAULT_OPT_TOL,
            BackendChoice::Embedded,
        );
        assert_eq!(s1, s2);
        match (s1, s2) {
            (
                SolveStatus::Optimal {
                    assignment: a1,
                    objective: o1,
                },
                SolveStatus::Optimal {
                    assignment: a2,
                    objective: o2,
                },
            ) => {
                assert_eq!(o1.to_bits(), o2.to_bits());
                for (x, y) in a1.iter().zip(a2.iter()) {
                    assert_eq!(x.1.to_bits(), y.1.to_bits());
                }
            }
            _ => panic!("expected optimal"),
        }
    }
}
