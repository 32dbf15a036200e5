//! Affine expressions over parameter variables, linear formulas, and
//! conditional symbolic forward execution.
//!
//! A conditional activation pins its symbolic input to one linear piece of
//! the activation function, choosing the piece from a concrete reference
//! value. Executing a network slice this way yields output expressions that
//! are affine in the slice's first-layer weights and all its biases, plus a
//! linear formula under which those expressions are exact.

use std::collections::BTreeMap;

use crate::nn::{activate, ActivationKind, Network, ParamAddress, ParamKind, Point, VPolytope};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Coefficients smaller than this are dropped when expressions are combined,
/// keeping the LP matrices sparse.
const MIN_COEFF: f64 = 1e-15;

#[derive(Debug, Error, PartialEq)]
pub enum SymError {
    #[error("variable v{} is unbound in the assignment", (.0).0)]
    UnboundVariable(VarId),
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },
}

/// Opaque handle for a symbolic variable, unique within one registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub u32);

/// What a variable stands for.
#[derive(Debug, Clone, PartialEq)]
pub enum VarRole {
    /// A network parameter under repair.
    Param(ParamAddress),
    /// A solver auxiliary (norm encodings and the like).
    Aux(&'static str),
}

/// Allocates variables and records the role behind each id.
#[derive(Debug, Default)]
pub struct VarRegistry {
    roles: Vec<VarRole>,
}

impl VarRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fresh(&mut self, role: VarRole) -> VarId {
        let id = VarId(self.roles.len() as u32);
        self.roles.push(role);
        id
    }

    pub fn len(&self) -> usize {
        self.roles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roles.is_empty()
    }

    pub fn role(&self, id: VarId) -> &VarRole {
        &self.roles[id.0 as usize]
    }

    pub fn ids(&self) -> impl Iterator<Item = VarId> + '_ {
        (0..self.roles.len()).map(|i| VarId(i as u32))
    }
}

/// A (partial) valuation of variables.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    values: BTreeMap<VarId, f64>,
}

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, id: VarId, value: f64) {
        self.values.insert(id, value);
    }

    pub fn get(&self, id: VarId) -> Option<f64> {
        self.values.get(&id).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (VarId, f64)> + '_ {
        self.values.iter().map(|(&k, &v)| (k, v))
    }
}

impl FromIterator<(VarId, f64)> for Assignment {
    fn from_iter<T: IntoIterator<Item = (VarId, f64)>>(iter: T) -> Self {
        Assignment {
            values: iter.into_iter().collect(),
        }
    }
}

/// Sparse affine expression `sum(coeff_i * var_i) + constant`.
///
/// The algebra deliberately has no expression-times-expression operation, so
/// every value constructed here stays affine in the registry's variables.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AffineExpr {
    terms: BTreeMap<VarId, f64>,
    constant: f64,
}

impl AffineExpr {
    pub fn constant(c: f64) -> Self {
        AffineExpr {
            terms: BTreeMap::new(),
            constant: c,
        }
    }

    pub fn var(id: VarId) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(id, 1.0);
        AffineExpr {
            terms,
            constant: 0.0,
        }
    }

    pub fn add_term(&mut self, id: VarId, coeff: f64) {
        let entry = self.terms.entry(id).or_insert(0.0);
        *entry += coeff;
        if entry.abs() < MIN_COEFF {
            self.terms.remove(&id);
        }
    }

    pub fn add_constant(&mut self, c: f64) {
        self.constant += c;
    }

    /// Adds `scale * other` to this expression.
    pub fn add_scaled(&mut self, other: &AffineExpr, scale: f64) {
        for (&id, &coeff) in &other.terms {
            self.add_term(id, scale * coeff);
        }
        self.constant += scale * other.constant;
    }

    pub fn coeff(&self, id: VarId) -> f64 {
        self.terms.get(&id).copied().unwrap_or(0.0)
    }

    pub fn constant_part(&self) -> f64 {
        self.constant
    }

    pub fn terms(&self) -> impl Iterator<Item = (VarId, f64)> + '_ {
        self.terms.iter().map(|(&k, &v)| (k, v))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, a: &Assignment) -> Result<f64, SymError> {
        let mut acc = self.constant;
        for (&id, &coeff) in &self.terms {
            let v = a.get(id).ok_or(SymError::UnboundVariable(id))?;
            acc += coeff * v;
        }
        Ok(acc)
    }
}

/// Comparison in a linear constraint. Strict relations are represented by
/// their non-strict counterparts; see the conditional activations for how
/// the strict ReLU branch is relaxed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

/// Normal-form constraint `expr <relation> rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub expr: AffineExpr,
    pub rel: Relation,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn new(expr: AffineExpr, rel: Relation, rhs: f64) -> Self {
        LinearConstraint { expr, rel, rhs }
    }

    /// Signed slack under the assignment; negative means violated.
    /// For equalities the slack is `-|lhs - rhs|`.
    pub fn slack(&self, a: &Assignment) -> Result<f64, SymError> {
        let lhs = self.expr.eval(a)?;
        Ok(match self.rel {
            Relation::Le => self.rhs - lhs,
            Relation::Ge => lhs - self.rhs,
            Relation::Eq => -(lhs - self.rhs).abs(),
        })
    }
}

/// Conjunction of linear constraints. The empty formula is `true`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearFormula {
    pub conjuncts: Vec<LinearConstraint>,
}

impl LinearFormula {
    pub fn top() -> Self {
        Self::default()
    }

    pub fn push(&mut self, c: LinearConstraint) {
        self.conjuncts.push(c);
    }

    pub fn extend(&mut self, other: LinearFormula) {
        self.conjuncts.extend(other.conjuncts);
    }

    pub fn len(&self) -> usize {
        self.conjuncts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conjuncts.is_empty()
    }

    /// True iff every conjunct holds with slack at least `-tol`.
    pub fn satisfies(&self, a: &Assignment, tol: f64) -> Result<bool, SymError> {
        for c in &self.conjuncts {
            if c.slack(a)? < -tol {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// A vector of affine expressions; the symbolic counterpart of a `Point`.
pub type SymbolicPoint = Vec<AffineExpr>;

/// Evaluates a symbolic point under an assignment.
pub fn eval_point(p: &[AffineExpr], a: &Assignment) -> Result<Point, SymError> {
    p.iter().map(|e| e.eval(a)).collect()
}

fn check_dims(x: usize, reference: usize, context: &'static str) -> Result<(), SymError> {
    if x != reference {
        return Err(SymError::DimensionMismatch {
            expected: x,
            got: reference,
            context,
        });
    }
    Ok(())
}

/// Conditional ReLU: each component is pinned to the piece containing its
/// reference value. `margin` tightens the pieces to `>= margin` / `<= -margin`;
/// at 0 the strict "< 0" branch is relaxed to "<= 0", which is sound because
/// both pieces agree at the boundary.
pub fn cond_relu(
    x: &[AffineExpr],
    reference: &[f64],
    margin: f64,
) -> Result<(SymbolicPoint, LinearFormula), SymError> {
    check_dims(x.len(), reference.len(), "cond_relu")?;
    let mut out = Vec::with_capacity(x.len());
    let mut formula = LinearFormula::top();
    for (expr, &r) in x.iter().zip(reference) {
        if r >= 0.0 {
            out.push(expr.clone());
            formula.push(LinearConstraint::new(expr.clone(), Relation::Ge, margin));
        } else {
            out.push(AffineExpr::constant(0.0));
            formula.push(LinearConstraint::new(expr.clone(), Relation::Le, -margin));
        }
    }
    Ok((out, formula))
}

/// Conditional Hardswish: references with `r >= 0` (including the curved
/// middle region) steer to the identity piece `x >= 3`, negative references
/// to the zero piece `x <= -3`.
pub fn cond_hardswish(
    x: &[AffineExpr],
    reference: &[f64],
    margin: f64,
) -> Result<(SymbolicPoint, LinearFormula), SymError> {
    check_dims(x.len(), reference.len(), "cond_hardswish")?;
    let mut out = Vec::with_capacity(x.len());
    let mut formula = LinearFormula::top();
    for (expr, &r) in x.iter().zip(reference) {
        if r >= 0.0 {
            out.push(expr.clone());
            formula.push(LinearConstraint::new(
                expr.clone(),
                Relation::Ge,
                3.0 + margin,
            ));
        } else {
            out.push(AffineExpr::constant(0.0));
            formula.push(LinearConstraint::new(
                expr.clone(),
                Relation::Le,
                -3.0 - margin,
            ));
        }
    }
    Ok((out, formula))
}

/// Conditional identity: one global linear piece, no constraints.
pub fn cond_identity(
    x: &[AffineExpr],
    reference: &[f64],
) -> Result<(SymbolicPoint, LinearFormula), SymError> {
    check_dims(x.len(), reference.len(), "cond_identity")?;
    Ok((x.to_vec(), LinearFormula::top()))
}

/// How the shared reference point of a polytope is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefStrategy {
    #[default]
    FirstVertex,
    Centroid,
}

impl RefStrategy {
    /// Deterministically maps a polytope to a concrete reference point.
    pub fn calc_ref(&self, p: &VPolytope) -> Point {
        match self {
            RefStrategy::FirstVertex => p.vertices()[0].clone(),
            RefStrategy::Centroid => {
                let dim = p.dim();
                let mut c = vec![0.0; dim];
                for v in p.vertices() {
                    for (ci, vi) in c.iter_mut().zip(v) {
                        *ci += vi;
                    }
                }
                let n = p.num_vertices() as f64;
                for ci in c.iter_mut() {
                    *ci /= n;
                }
                c
            }
        }
    }
}

/// A network slice prepared for symbolic execution: one variable per entry
/// of the first layer's weights and per entry of every bias; later-layer
/// weights stay concrete. Parameter addresses are recorded relative to the
/// enclosing network via `layer_offset`.
#[derive(Debug)]
pub struct SymbolicSlice {
    slice: Network,
    layer_offset: usize,
    weight_vars: Vec<Vec<VarId>>,
    bias_vars: Vec<Vec<VarId>>,
}

impl SymbolicSlice {
    /// Allocates symbolic variables for the slice. Variable order is fixed:
    /// first-layer weights row-major, then biases layer by layer.
    pub fn build(slice: &Network, layer_offset: usize, reg: &mut VarRegistry) -> Self {
        let first = slice.layer(0);
        let weight_vars: Vec<Vec<VarId>> = (0..first.n_in())
            .map(|row| {
                (0..first.n_out())
                    .map(|col| {
                        reg.fresh(VarRole::Param(ParamAddress {
                            layer: layer_offset,
                            kind: ParamKind::Weight { row, col },
                        }))
                    })
                    .collect()
            })
            .collect();
        let bias_vars: Vec<Vec<VarId>> = slice
            .layers()
            .iter()
            .enumerate()
            .map(|(l, layer)| {
                (0..layer.n_out())
                    .map(|col| {
                        reg.fresh(VarRole::Param(ParamAddress {
                            layer: layer_offset + l,
                            kind: ParamKind::Bias { col },
                        }))
                    })
                    .collect()
            })
            .collect();
        SymbolicSlice {
            slice: slice.clone(),
            layer_offset,
            weight_vars,
            bias_vars,
        }
    }

    pub fn slice(&self) -> &Network {
        &self.slice
    }

    pub fn layer_offset(&self) -> usize {
        self.layer_offset
    }

    pub fn weight_vars(&self) -> &[Vec<VarId>] {
        &self.weight_vars
    }

    pub fn bias_vars(&self) -> &[Vec<VarId>] {
        &self.bias_vars
    }

    /// The symbolic first-layer weight matrix as expressions.
    pub fn weight_exprs(&self) -> Vec<Vec<AffineExpr>> {
        self.weight_vars
            .iter()
            .map(|row| row.iter().map(|&id| AffineExpr::var(id)).collect())
            .collect()
    }

    /// All symbolic parameters with their current concrete values, in
    /// variable-id order.
    pub fn param_vars_with_originals(&self) -> Vec<(VarId, f64)> {
        let first = self.slice.layer(0);
        let mut out = Vec::new();
        for (row, vars) in self.weight_vars.iter().enumerate() {
            for (col, &id) in vars.iter().enumerate() {
                out.push((id, first.weights[row][col]));
            }
        }
        for (l, vars) in self.bias_vars.iter().enumerate() {
            for (col, &id) in vars.iter().enumerate() {
                out.push((id, self.slice.layer(l).bias[col]));
            }
        }
        out
    }

    /// Writes assigned parameter values back into a copy of the slice.
    pub fn apply(&self, a: &Assignment) -> Result<Network, SymError> {
        let mut net = self.slice.clone();
        for (id, _) in self.param_vars_with_originals() {
            let value = a.get(id).ok_or(SymError::UnboundVariable(id))?;
            let addr = match self.role_of(id) {
                Some(addr) => addr,
                None => continue,
            };
            let local = ParamAddress {
                layer: addr.layer - self.layer_offset,
                kind: addr.kind,
            };
            net.set_param(&local, value);
        }
        Ok(net)
    }

    fn role_of(&self, id: VarId) -> Option<ParamAddress> {
        let first = self.slice.layer(0);
        for (row, vars) in self.weight_vars.iter().enumerate() {
            if let Some(col) = vars.iter().position(|&v| v == id) {
                debug_assert!(row < first.n_in());
                return Some(ParamAddress {
                    layer: self.layer_offset,
                    kind: ParamKind::Weight { row, col },
                });
            }
        }
        for (l, vars) in self.bias_vars.iter().enumerate() {
            if let Some(col) = vars.iter().position(|&v| v == id) {
                return Some(ParamAddress {
                    layer: self.layer_offset + l,
                    kind: ParamKind::Bias { col },
                });
            }
        }
        None
    }

    /// Conditional symbolic execution of a concrete input point against a
    /// concrete reference point. The first layer multiplies the input into
    /// the symbolic weights; later layers use frozen concrete weights and
    /// symbolic biases. The reference is traced through the original
    /// parameters and selects the activation piece at every layer.
    pub fn forward_point(
        &self,
        x: &[f64],
        reference: &[f64],
        margin: f64,
    ) -> Result<(SymbolicPoint, LinearFormula), SymError> {
        check_dims(self.slice.input_width(), x.len(), "forward_point input")?;
        check_dims(
            self.slice.input_width(),
            reference.len(),
            "forward_point reference",
        )?;

        let mut formula = LinearFormula::top();
        let mut ref_cur = reference.to_vec();
        let mut sym_cur: SymbolicPoint = Vec::new();

        for (l, layer) in self.slice.layers().iter().enumerate() {
            // symbolic pre-activation
            let mut pre: SymbolicPoint = Vec::with_capacity(layer.n_out());
            for col in 0..layer.n_out() {
                let mut expr = AffineExpr::var(self.bias_vars[l][col]);
                if l == 0 {
                    for (row, &xi) in x.iter().enumerate() {
                        if xi.abs() >= MIN_COEFF {
                            expr.add_term(self.weight_vars[row][col], xi);
                        }
                    }
                } else {
                    for (row, sym) in sym_cur.iter().enumerate() {
                        let w = layer.weights[row][col];
                        if w.abs() >= MIN_COEFF {
                            expr.add_scaled(sym, w);
                        }
                    }
                }
                pre.push(expr);
            }
            // concrete reference pre-activation through original parameters
            let mut ref_pre = layer.bias.clone();
            for (row, &ri) in ref_cur.iter().enumerate() {
                for (o, w) in ref_pre.iter_mut().zip(&layer.weights[row]) {
                    *o += ri * w;
                }
            }
            let (post, layer_formula) = match layer.activation {
                ActivationKind::Identity => cond_identity(&pre, &ref_pre)?,
                ActivationKind::Relu => cond_relu(&pre, &ref_pre, margin)?,
                ActivationKind::Hardswish => cond_hardswish(&pre, &ref_pre, margin)?,
            };
            formula.extend(layer_formula);
            sym_cur = post;
            for r in ref_pre.iter_mut() {
                *r = activate(layer.activation, *r);
            }
            ref_cur = ref_pre;
        }
        Ok((sym_cur, formula))
    }

    /// Conditional symbolic execution of every vertex of a polytope with one
    /// shared reference point, so all vertices are pinned to the same
    /// activation pieces.
    pub fn forward_polytope(
        &self,
        p: &VPolytope,
        strategy: RefStrategy,
        margin: f64,
    ) -> Result<(Vec<SymbolicPoint>, LinearFormula), SymError> {
        let reference = strategy.calc_ref(p);
        let mut outputs = Vec::with_capacity(p.num_vertices());
        let mut formula = LinearFormula::top();
        for vertex in p.vertices() {
            let (sym, f) = self.forward_point(vertex, &reference, margin)?;
            outputs.push(sym);
            formula.extend(f);
        }
        Ok((outputs, formula))
    }
}

/// Assignment holding every symbolic parameter at its original value.
pub fn original_assignment(slice: &SymbolicSlice) -> Assignment {
    slice.param_vars_with_originals().into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo::overview::{net1, poly_low};
    use crate::nn::forward;

    fn v(n: u32) -> VarId {
        VarId(n)
    }

    #[test]
    fn eval_simple() {
        let mut e = AffineExpr::constant(3.0);
        e.add_term(v(1), 2.0);
        let mut a = Assignment::new();
        a.set(v(1), -1.0);
        assert_eq!(e.eval(&a).unwrap(), 1.0);

        let c = AffineExpr::constant(42.5);
        assert_eq!(c.eval(&Assignment::new()).unwrap(), 42.5);

        let unbound = AffineExpr::var(v(9));
        assert_eq!(
            unbound.eval(&Assignment::new()),
            Err(SymError::UnboundVariable(v(9)))
        );
    }

    #[test]
    fn tiny_coefficients_are_dropped() {
        let mut e = AffineExpr::var(v(0));
        e.add_term(v(0), -1.0);
        assert_eq!(e.num_terms(), 0);
        e.add_term(v(1), 1e-16);
        assert_eq!(e.num_terms(), 0);
    }

    #[test]
    fn satisfies_with_tolerance() {
        let top = LinearFormula::top();
        assert!(top.satisfies(&Assignment::new(), 0.0).unwrap());

        let mut f = LinearFormula::top();
        f.push(LinearConstraint::new(
            AffineExpr::var(v(0)),
            Relation::Ge,
            1.0,
        ));
        let mut a = Assignment::new();
        a.set(v(0), 1.0 - 1e-9);
        assert!(!f.satisfies(&a, 0.0).unwrap());
        assert!(f.satisfies(&a, 1e-8).unwrap());
    }

    #[test]
    fn cond_relu_splits_by_reference() {
        let x = vec![AffineExpr::var(v(0)), AffineExpr::var(v(1))];
        let (out, formula) = cond_relu(&x, &[5.0, -2.0], 0.0).unwrap();
        assert_eq!(out[0], AffineExpr::var(v(0)));
        assert_eq!(out[1], AffineExpr::constant(0.0));
        assert_eq!(formula.len(), 2);
        assert_eq!(formula.conjuncts[0].rel, Relation::Ge);
        assert_eq!(formula.conjuncts[0].rhs, 0.0);
        assert_eq!(formula.conjuncts[1].rel, Relation::Le);
        assert_eq!(formula.conjuncts[1].expr, AffineExpr::var(v(1)));
    }

    #[test]
    fn cond_relu_all_nonnegative_reference_keeps_inputs() {
        let x = vec![AffineExpr::var(v(0)), AffineExpr::var(v(1))];
        let (out, formula) = cond_relu(&x, &[0.0, 7.0], 0.0).unwrap();
        assert_eq!(out, x);
        assert!(formula
            .conjuncts
            .iter()
            .all(|c| c.rel == Relation::Ge && c.rhs == 0.0));
    }

    #[test]
    fn cond_relu_off_branch_matches_concrete_relu() {
        let mut e = AffineExpr::constant(1.0);
        e.add_term(v(1), 3.0);
        let (out, formula) = cond_relu(&[e.clone()], &[-0.5], 0.0).unwrap();
        assert_eq!(out[0], AffineExpr::constant(0.0));
        let mut a = Assignment::new();
        a.set(v(1), -1.0);
        // 3*(-1) + 1 = -2 <= 0, so the formula holds and relu(-2) = 0 = out
        assert!(formula.satisfies(&a, 0.0).unwrap());
        assert_eq!(
            out[0].eval(&a).unwrap(),
            activate(ActivationKind::Relu, -2.0)
        );
    }

    #[test]
    fn cond_hardswish_pieces() {
        let x = vec![AffineExpr::var(v(0)), AffineExpr::var(v(1))];
        let (out, formula) = cond_hardswish(&x, &[5.0, -2.0], 0.0).unwrap();
        assert_eq!(out[0], AffineExpr::var(v(0)));
        assert_eq!(out[1], AffineExpr::constant(0.0));
        assert_eq!(formula.conjuncts[0].rel, Relation::Ge);
        assert_eq!(formula.conjuncts[0].rhs, 3.0);
        assert_eq!(formula.conjuncts[1].rel, Relation::Le);
        assert_eq!(formula.conjuncts[1].rhs, -3.0);
    }

    #[test]
    fn cond_hardswish_agrees_on_feasible_assignments() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let refs = [rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)];
            let x = vec![AffineExpr::var(v(0)), AffineExpr::var(v(1))];
            let (out, formula) = cond_hardswish(&x, &refs, 0.0).unwrap();
            // sample a feasible assignment directly from the pinned pieces
            let mut a = Assignment::new();
            for (i, &r) in refs.iter().enumerate() {
                let val = if r >= 0.0 {
                    rng.gen_range(3.0..20.0)
                } else {
                    rng.gen_range(-20.0..-3.0)
                };
                a.set(v(i as u32), val);
            }
            assert!(formula.satisfies(&a, 0.0).unwrap());
            for (o, xi) in out.iter().zip(&x) {
                let concrete = activate(ActivationKind::Hardswish, xi.eval(&a).unwrap());
                assert!((o.eval(&a).unwrap() - concrete).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cond_identity_is_transparent() {
        let x = vec![AffineExpr::var(v(0))];
        let (out, formula) = cond_identity(&x, &[-100.0]).unwrap();
        assert_eq!(out, x);
        assert!(formula.is_empty());

        let wide = vec![
            AffineExpr::var(v(0)),
            AffineExpr::var(v(1)),
            AffineExpr::constant(2.0),
        ];
        let (out, formula) = cond_identity(&wide, &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(out, wide);
        assert!(formula.is_empty());
        assert!(cond_identity(&wide, &[1.0]).is_err());
    }

    #[test]
    fn symbolic_slice_variable_counts() {
        let net = net1();
        let mut reg = VarRegistry::new();
        let full = SymbolicSlice::build(&net.slice(0, 2).unwrap(), 0, &mut reg);
        assert_eq!(full.weight_vars().iter().map(|r| r.len()).sum::<usize>(), 3);
        assert_eq!(full.bias_vars().iter().map(|r| r.len()).sum::<usize>(), 4);
        assert_eq!(reg.len(), 7);

        let mut reg = VarRegistry::new();
        let second = SymbolicSlice::build(&net.slice(1, 2).unwrap(), 1, &mut reg);
        assert_eq!(
            second.weight_vars().iter().map(|r| r.len()).sum::<usize>(),
            3
        );
        assert_eq!(second.bias_vars().iter().map(|r| r.len()).sum::<usize>(), 1);

        let single = Network::new(vec![crate::nn::Layer {
            weights: vec![vec![2.0]],
            bias: vec![0.0],
            activation: ActivationKind::Relu,
        }])
        .unwrap();
        let mut reg = VarRegistry::new();
        let s = SymbolicSlice::build(&single, 0, &mut reg);
        assert_eq!(reg.len(), 2);
        assert_eq!(s.param_vars_with_originals().len(), 2);
    }

    use crate::nn::Network;

    #[test]
    fn conditional_forward_reproduces_walkthrough_expressions() {
        // slice = whole two-layer demo network, input -1.5, reference -1.5
        let net = net1();
        let mut reg = VarRegistry::new();
        let sym = SymbolicSlice::build(&net, 0, &mut reg);
        let (out, formula) = sym.forward_point(&[-1.5], &[-1.5], 0.0).unwrap();

        // w00 w01 w02 are vars 0..3, biases b00 b01 b02 vars 3..6, b10 var 6
        assert_eq!(out.len(), 1);
        let expr = &out[0];
        assert_eq!(expr.coeff(v(0)), -0.75); // -1.5 * 0.5 through the kept neuron
        assert_eq!(expr.coeff(v(3)), 0.5);
        assert_eq!(expr.coeff(v(6)), 1.0);
        assert_eq!(expr.num_terms(), 3);
        assert_eq!(expr.constant_part(), 0.0);

        // three activation conjuncts for the first layer, none for identity
        assert_eq!(formula.len(), 3);
        assert_eq!(formula.conjuncts[0].rel, Relation::Ge);
        assert_eq!(formula.conjuncts[0].expr.coeff(v(0)), -1.5);
        assert_eq!(formula.conjuncts[0].expr.coeff(v(3)), 1.0);
        assert_eq!(formula.conjuncts[1].rel, Relation::Le);
        assert_eq!(formula.conjuncts[2].rel, Relation::Le);

        // at the original parameters: value 0.25 and the formula holds exactly
        let orig = original_assignment(&sym);
        assert_eq!(expr.eval(&orig).unwrap(), 0.25);
        assert!(formula.satisfies(&orig, 0.0).unwrap());

        // flipping w00 to +2 breaks the first conjunct
        let mut flipped = orig.clone();
        flipped.set(v(0), 2.0);
        assert!(!formula.satisfies(&flipped, 0.0).unwrap());
    }

    #[test]
    fn conditional_forward_second_point() {
        let net = net1();
        let mut reg = VarRegistry::new();
        let sym = SymbolicSlice::build(&net, 0, &mut reg);
        let (out, _) = sym.forward_point(&[-0.5], &[-0.5], 0.0).unwrap();
        assert_eq!(out[0].coeff(v(0)), -0.25);
        assert_eq!(out[0].coeff(v(3)), 0.5);
        assert_eq!(out[0].coeff(v(6)), 1.0);
    }

    #[test]
    fn conditional_forward_polytope_shares_reference() {
        let net = net1();
        let mut reg = VarRegistry::new();
        let sym = SymbolicSlice::build(&net, 0, &mut reg);
        let (outs, formula) = sym
            .forward_polytope(&poly_low(), RefStrategy::FirstVertex, 0.0)
            .unwrap();
        assert_eq!(outs.len(), 2);
        assert_eq!(outs[0][0].coeff(v(0)), -0.75);
        assert_eq!(outs[1][0].coeff(v(0)), -0.25);
        // both vertices produce one row of three activation conjuncts
        assert_eq!(formula.len(), 6);
        // second vertex's conjuncts use its own coordinates
        assert_eq!(formula.conjuncts[3].expr.coeff(v(0)), -0.5);
        assert_eq!(formula.conjuncts[3].rel, Relation::Ge);

        // a singleton polytope behaves exactly like forward_point
        let single = VPolytope::singleton(vec![-1.5]);
        let (outs_single, f_single) = sym
            .forward_polytope(&single, RefStrategy::FirstVertex, 0.0)
            .unwrap();
        let (point_out, point_f) = sym.forward_point(&[-1.5], &[-1.5], 0.0).unwrap();
        assert_eq!(outs_single[0], point_out);
        assert_eq!(f_single, point_f);
    }

    #[test]
    fn forward_polytope_is_deterministic() {
        let net = net1();
        let mut reg1 = VarRegistry::new();
        let sym1 = SymbolicSlice::build(&net, 0, &mut reg1);
        let r1 = sym1
            .forward_polytope(&poly_low(), RefStrategy::Centroid, 0.0)
            .unwrap();
        let mut reg2 = VarRegistry::new();
        let sym2 = SymbolicSlice::build(&net, 0, &mut reg2);
        let r2 = sym2
            .forward_polytope(&poly_low(), RefStrategy::Centroid, 0.0)
            .unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn centroid_reference() {
        let p = VPolytope::new(vec![vec![1.0, 0.0], vec![3.0, 2.0]]).unwrap();
        assert_eq!(RefStrategy::Centroid.calc_ref(&p), vec![2.0, 1.0]);
        assert_eq!(RefStrategy::FirstVertex.calc_ref(&p), vec![1.0, 0.0]);
    }

    #[test]
    fn symbolic_agrees_with_concrete_on_relu_networks() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let net = crate::gen::random_mixed_network(
                &mut rng,
                4,
                8,
                &[ActivationKind::Relu, ActivationKind::Identity],
            );
            let x: Vec<f64> = (0..net.input_width())
                .map(|_| rng.gen_range(-2.0..2.0))
                .collect();
            let mut reg = VarRegistry::new();
            let sym = SymbolicSlice::build(&net, 0, &mut reg);
            let (out, formula) = sym.forward_point(&x, &x, 0.0).unwrap();
            let orig = original_assignment(&sym);
            let sym_val = eval_point(&out, &orig).unwrap();
            let concrete = forward(&net, &x).unwrap();
            for (s, c) in sym_val.iter().zip(&concrete) {
                assert!((s - c).abs() <= 1e-9, "symbolic {s} vs concrete {c}");
            }
            assert!(formula.satisfies(&orig, 0.0).unwrap());
        }
    }
}
