//! Repair orchestration: prefix shifts that make the network locally linear
//! on every specification polytope, followed by a final solve that asserts
//! the output formulas, all as linear programs over a symbolic suffix.
//!
//! Every returned network is re-verified independently before it leaves this
//! module; an unverifiable result is reported as an error, never returned.

use std::path::PathBuf;
use std::time::Instant;

use crate::lp::{
    build_delta_objective, solve, write_lp_format, BackendChoice, LpProblem, SolveStatus,
    DEFAULT_FEAS_TOL, DEFAULT_OPT_TOL,
};
use crate::nn::{
    forward, forward_polytope, param_diff, same_architecture, Mode, Network, ParamAddress, Point,
    VPolytope,
};
use crate::symbolic::{
    AffineExpr, LinearConstraint, RefStrategy, Relation, SymbolicSlice, VarRegistry, VarRole,
};
use crate::verify;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One row of an output formula: `coeffs . y <rel> rhs` over the network
/// outputs `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecRow {
    pub coeffs: Vec<f64>,
    pub rel: Relation,
    pub rhs: f64,
}

/// Signed slack of a formula row at a concrete output; negative is violated.
pub fn psi_slack(row: &SpecRow, out: &[f64]) -> f64 {
    let lhs: f64 = row.coeffs.iter().zip(out).map(|(c, y)| c * y).sum();
    match row.rel {
        Relation::Le => row.rhs - lhs,
        Relation::Ge => lhs - row.rhs,
        Relation::Eq => -(lhs - row.rhs).abs(),
    }
}

/// The linear formula a polytope's outputs must satisfy: either raw rows
/// over the output variables, or a classification constraint that desugars
/// into margin rows against every other label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormula {
    Raw(Vec<SpecRow>),
    Classify {
        label: usize,
        mode: Mode,
        margin: f64,
    },
}

impl OutputFormula {
    /// The formula as rows over `width` outputs. `argmax` becomes
    /// `y_label >= y_j + margin` for every other `j`; `argmin` the mirror.
    pub fn rows(&self, width: usize) -> Vec<SpecRow> {
        match self {
            OutputFormula::Raw(rows) => rows.clone(),
            OutputFormula::Classify {
                label,
                mode,
                margin,
            } => {
                let mut rows = Vec::with_capacity(width.saturating_sub(1));
                for j in 0..width {
                    if j == *label {
                        continue;
                    }
                    let mut coeffs = vec![0.0; width];
                    coeffs[*label] = 1.0;
                    coeffs[j] = -1.0;
                    let (rel, rhs) = match mode {
                        Mode::Argmax => (Relation::Ge, *margin),
                        Mode::Argmin => (Relation::Le, -*margin),
                    };
                    rows.push(SpecRow { coeffs, rel, rhs });
                }
                rows
            }
        }
    }
}

/// A band `lo <= y_0 <= hi` for single-output networks.
pub fn band_spec(lo: f64, hi: f64) -> OutputFormula {
    OutputFormula::Raw(vec![
        SpecRow {
            coeffs: vec![1.0],
            rel: Relation::Ge,
            rhs: lo,
        },
        SpecRow {
            coeffs: vec![1.0],
            rel: Relation::Le,
            rhs: hi,
        },
    ])
}

/// One polytope paired with its output formula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecItem {
    pub polytope: VPolytope,
    pub psi: OutputFormula,
}

/// A V-polytope repair specification. Pointwise specifications are items
/// whose polytopes are singletons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairSpec {
    pub items: Vec<SpecItem>,
}

/// The shift schedule: `(k_i, l_i)` pairs, each meaning "make the prefix
/// `[0, l_i)` locally linear by re-solving weights of layer `k_i` and biases
/// of layers `k_i..l_i`".
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Partition(pub Vec<(usize, usize)>);

impl Partition {
    pub fn empty() -> Self {
        Partition(Vec::new())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairConfig {
    pub ref_strategy: RefStrategy,
    /// Margin by which activation pins avoid their piece boundary; keeps the
    /// repaired network certifiable under the exact linearity check.
    pub strict_margin: f64,
    /// Default classification margin when a spec omits one.
    pub classify_margin: f64,
    pub feas_tol: f64,
    pub opt_tol: f64,
    pub backend: BackendChoice,
    /// Directory receiving one LP-format dump per solve, when set.
    pub dump_dir: Option<PathBuf>,
    /// Re-check the local-linearity precondition before each solve.
    pub debug_recheck: bool,
    pub verify_samples: usize,
    pub verify_tol: f64,
    pub seed: u64,
}

impl Default for RepairConfig {
    fn default() -> Self {
        RepairConfig {
            ref_strategy: RefStrategy::FirstVertex,
            strict_margin: 1e-6,
            classify_margin: 1e-4,
            feas_tol: DEFAULT_FEAS_TOL,
            opt_tol: DEFAULT_OPT_TOL,
            backend: BackendChoice::Auto,
            dump_dir: None,
            debug_recheck: cfg!(debug_assertions),
            verify_samples: verify::DEFAULT_SAMPLES,
            verify_tol: verify::DEFAULT_TOL,
            seed: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum RepairError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("repair is infeasible at stage {stage}")]
    Infeasible { stage: String },
    #[error("numeric failure at stage {stage}: {message}")]
    Numeric { stage: String, message: String },
    #[error("repaired network failed independent verification; refusing to return it")]
    Unverified(Box<verify::VerifyReport>),
}

impl RepairError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RepairError::Invalid(_) => 1,
            RepairError::Infeasible { .. } => 2,
            RepairError::Unverified(_) => 3,
            RepairError::Numeric { .. } => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditEntry {
    pub address: ParamAddress,
    pub old: f64,
    pub new: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub label: String,
    /// Index of the symbolic weight layer of this solve.
    pub k: usize,
    /// One past the last layer touched by this solve.
    pub slice_end: usize,
    pub status: String,
    /// Feasibility rows: activation pins plus spec rows.
    pub constraints: usize,
    /// Norm-encoding auxiliary rows.
    pub aux_constraints: usize,
    pub variables: usize,
    /// Total output neurons across the symbolic suffix layers.
    pub symbolic_suffix_neurons: usize,
    pub objective: Option<f64>,
    pub backend: String,
    pub solve_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairReport {
    pub version: String,
    pub status: String,
    pub partition: Partition,
    pub k: usize,
    pub ref_strategy: RefStrategy,
    pub strict_margin: f64,
    pub classify_margin: f64,
    pub feas_tol: f64,
    pub opt_tol: f64,
    pub verify_tol: f64,
    pub verify_samples: usize,
    pub seed: u64,
    pub backend_choice: BackendChoice,
    pub stages: Vec<StageReport>,
    /// Feasibility rows summed over all solves.
    pub constraint_count: usize,
    pub aux_constraint_count: usize,
    pub variable_count: usize,
    /// Objective value of the final (spec-asserting) solve.
    pub objective: Option<f64>,
    pub total_ms: f64,
    pub edits: Vec<EditEntry>,
    pub verified: Option<bool>,
}

impl RepairReport {
    fn new(partition: &Partition, k: usize, cfg: &RepairConfig) -> Self {
        RepairReport {
            version: crate::VERSION.to_string(),
            status: "pending".into(),
            partition: partition.clone(),
            k,
            ref_strategy: cfg.ref_strategy,
            strict_margin: cfg.strict_margin,
            classify_margin: cfg.classify_margin,
            feas_tol: cfg.feas_tol,
            opt_tol: cfg.opt_tol,
            verify_tol: cfg.verify_tol,
            verify_samples: cfg.verify_samples,
            seed: cfg.seed,
            backend_choice: cfg.backend,
            stages: Vec::new(),
            constraint_count: 0,
            aux_constraint_count: 0,
            variable_count: 0,
            objective: None,
            total_ms: 0.0,
            edits: Vec::new(),
            verified: None,
        }
    }

    fn absorb(&mut self, stage: StageReport) {
        self.constraint_count += stage.constraints;
        self.aux_constraint_count += stage.aux_constraints;
        self.variable_count += stage.variables;
        self.stages.push(stage);
    }
}

/// A finished repair run: the result plus its report, which is present for
/// every run, success or failure.
#[derive(Debug)]
pub struct RepairOutcome {
    pub result: Result<Network, RepairError>,
    pub report: RepairReport,
}

/// Checks the shift schedule against the network and polytopes:
/// (a) `0 <= k_i < l_i <= L` for every pair, (b) the prefix before the first
/// pair is locally linear for every polytope, (c) consecutive pairs satisfy
/// `k_{i+1} <= l_i`, (d) the final repair layer satisfies `k <= l_{n-1}`.
/// An empty schedule instead requires the prefix `[0, k)` itself to be
/// locally linear for every polytope.
pub fn validate_partition(
    net: &Network,
    partition: &Partition,
    k: usize,
    polys: &[VPolytope],
) -> Result<(), String> {
    let len = net.len();
    if k >= len {
        return Err(format!("repair layer k={k} out of range for {len} layers"));
    }
    for p in polys {
        if p.dim() != net.input_width() {
            return Err(format!(
                "polytope dimension {} does not match network input width {}",
                p.dim(),
                net.input_width()
            ));
        }
    }
    let prefix_linear = |end: usize| -> Result<(), String> {
        if end == 0 {
            return Ok(());
        }
        let prefix = net.slice(0, end).expect("validated range");
        for (i, p) in polys.iter().enumerate() {
            let check = verify::is_locally_linear(&prefix, p).map_err(|e| e.to_string())?;
            if !check.locally_linear {
                let w = check.witness.expect("mixed witness");
                return Err(format!(
                    "prefix [0, {end}) is not locally linear for polytope {i}: \
                     layer {} neuron {} spans [{:.6}, {:.6}]",
                    w.layer, w.neuron, w.min_pre, w.max_pre
                ));
            }
        }
        Ok(())
    };
    if partition.0.is_empty() {
        return prefix_linear(k);
    }
    for (i, &(ki, li)) in partition.0.iter().enumerate() {
        if ki >= li || li > len {
            return Err(format!(
                "partition pair {i} = ({ki}, {li}) violates 0 <= k_i < l_i <= {len}"
            ));
        }
    }
    for w in partition.0.windows(2) {
        let ((_, l_prev), (k_next, _)) = (w[0], w[1]);
        if k_next > l_prev {
            return Err(format!(
                "consecutive pairs ({}, {}) then ({}, {}) violate k_i+1 <= l_i",
                w[0].0, w[0].1, w[1].0, w[1].1
            ));
        }
    }
    let (_, l_last) = *partition.0.last().expect("nonempty");
    if k > l_last {
        return Err(format!(
            "repair layer k={k} exceeds the last shifted layer l={l_last}"
        ));
    }
    let (k0, _) = partition.0[0];
    prefix_linear(k0)
}

/// A failed solve: the error plus the stage report describing it.
pub type StageFailure = Box<(RepairError, StageReport)>;

/// One LP solve: forwards every polytope through the frozen prefix
/// `[0, k)`, executes the suffix `[k, L)` symbolically, conjoins the
/// activation pins with the spec rows (`psis = None` is the pure shift),
/// minimizes the delta norm against `net_og`'s outputs on the original
/// polytopes, and writes the solution into a copy of `net`.
pub fn shift_and_assert(
    net: &Network,
    net_og: &Network,
    polys: &[VPolytope],
    psis: Option<&[OutputFormula]>,
    k: usize,
    cfg: &RepairConfig,
    label: &str,
) -> Result<(Network, StageReport), StageFailure> {
    let t0 = Instant::now();
    let mut stage = StageReport {
        label: label.to_string(),
        k,
        slice_end: net.len(),
        status: "pending".into(),
        constraints: 0,
        aux_constraints: 0,
        variables: 0,
        symbolic_suffix_neurons: 0,
        objective: None,
        backend: String::new(),
        solve_ms: 0.0,
    };
    let fail = |e: RepairError, mut s: StageReport, t0: Instant| {
        s.status = match &e {
            RepairError::Infeasible { .. } => "infeasible".into(),
            RepairError::Numeric { .. } => "numeric-failure".into(),
            _ => "invalid".into(),
        };
        s.solve_ms = t0.elapsed().as_secs_f64() * 1e3;
        Err(Box::new((e, s)))
    };

    let len = net.len();
    if k >= len {
        return fail(
            RepairError::Invalid(format!("k={k} out of range for {len} layers")),
            stage,
            t0,
        );
    }
    if net_og.len() != len
        || net_og.input_width() != net.input_width()
        || net_og.output_width() != net.output_width()
    {
        return fail(
            RepairError::Invalid("original and current networks disagree in shape".into()),
            stage,
            t0,
        );
    }
    if let Some(psis) = psis {
        if psis.len() != polys.len() {
            return fail(
                RepairError::Invalid("one output formula required per polytope".into()),
                stage,
                t0,
            );
        }
    }
    if cfg.debug_recheck && k > 0 {
        let prefix = net.slice(0, k).expect("k < len");
        for (i, p) in polys.iter().enumerate() {
            match verify::is_locally_linear(&prefix, p) {
                Ok(check) if check.locally_linear => {}
                Ok(_) => {
                    return fail(
                        RepairError::Invalid(format!(
                            "prefix [0, {k}) is not locally linear for polytope {i}"
                        )),
                        stage,
                        t0,
                    )
                }
                Err(e) => return fail(RepairError::Invalid(e.to_string()), stage, t0),
            }
        }
    }

    // forward the polytopes through the frozen prefix
    let forwarded: Vec<VPolytope> = if k == 0 {
        polys.to_vec()
    } else {
        let prefix = net.slice(0, k).expect("k < len");
        match polys
            .iter()
            .map(|p| forward_polytope(&prefix, p))
            .collect::<Result<Vec<_>, _>>()
        {
            Ok(f) => f,
            Err(e) => return fail(RepairError::Invalid(e.to_string()), stage, t0),
        }
    };

    // symbolic suffix
    let suffix = net.slice(k, len).expect("k < len");
    stage.symbolic_suffix_neurons = suffix.layers().iter().map(|l| l.n_out()).sum();
    let mut reg = VarRegistry::new();
    let sym = SymbolicSlice::build(&suffix, k, &mut reg);

    let mut constraints: Vec<LinearConstraint> = Vec::new();
    let mut sym_outputs: Vec<crate::symbolic::SymbolicPoint> = Vec::new();
    let mut per_poly_outputs: Vec<std::ops::Range<usize>> = Vec::new();
    for poly in &forwarded {
        let (outs, formula) = match sym.forward_polytope(poly, cfg.ref_strategy, cfg.strict_margin)
        {
            Ok(r) => r,
            Err(e) => return fail(RepairError::Invalid(e.to_string()), stage, t0),
        };
        constraints.extend(formula.conjuncts);
        let start = sym_outputs.len();
        sym_outputs.extend(outs);
        per_poly_outputs.push(start..sym_outputs.len());
    }

    // spec rows applied to every vertex's symbolic output
    if let Some(psis) = psis {
        let width = net.output_width();
        for (psi, range) in psis.iter().zip(&per_poly_outputs) {
            let rows = psi.rows(width);
            for sym_point in &sym_outputs[range.clone()] {
                for row in &rows {
                    if row.coeffs.len() != width {
                        return fail(
                            RepairError::Invalid(format!(
                                "spec row has {} coefficients for {} outputs",
                                row.coeffs.len(),
                                width
                            )),
                            stage,
                            t0,
                        );
                    }
                    let mut expr = AffineExpr::constant(0.0);
                    for (c, e) in row.coeffs.iter().zip(sym_point) {
                        if *c != 0.0 {
                            expr.add_scaled(e, *c);
                        }
                    }
                    constraints.push(LinearConstraint::new(expr, row.rel, row.rhs));
                }
            }
        }
    }
    stage.constraints = constraints.len();

    // delta targets: the original network's outputs on the original polytopes
    let mut targets: Vec<Point> = Vec::with_capacity(sym_outputs.len());
    for poly in polys {
        for vertex in poly.vertices() {
            match forward(net_og, vertex) {
                Ok(out) => targets.push(out),
                Err(e) => return fail(RepairError::Invalid(e.to_string()), stage, t0),
            }
        }
    }
    let params = sym.param_vars_with_originals();
    let (objective, aux) = match build_delta_objective(&sym_outputs, &targets, &params, &mut reg) {
        Ok(r) => r,
        Err(e) => return fail(RepairError::Invalid(e), stage, t0),
    };
    stage.aux_constraints = aux.len();
    constraints.extend(aux);

    let problem = LpProblem {
        num_vars: reg.len(),
        bounds: LpProblem::bounds_from_registry(&reg),
        constraints,
        objective,
    };
    stage.variables = reg.len();

    if let Some(dir) = &cfg.dump_dir {
        let slug: String = label
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
            .collect();
        let path = dir.join(format!("{slug}.lp"));
        if let Err(e) = std::fs::create_dir_all(dir)
            .and_then(|_| std::fs::File::create(&path))
            .and_then(|mut f| write_lp_format(&mut f, &problem))
        {
            return fail(
                RepairError::Numeric {
                    stage: label.into(),
                    message: format!("failed to dump LP to {}: {e}", path.display()),
                },
                stage,
                t0,
            );
        }
    }

    let (status, backend) = solve(&problem, cfg.feas_tol, cfg.opt_tol, cfg.backend);
    stage.backend = backend.to_string();
    stage.solve_ms = t0.elapsed().as_secs_f64() * 1e3;
    match status {
        SolveStatus::Optimal {
            assignment,
            objective,
        } => {
            stage.status = "optimal".into();
            stage.objective = Some(objective);
            let mut updated = net.clone();
            for (id, _) in &params {
                if let VarRole::Param(addr) = reg.role(*id) {
                    let value = assignment.get(*id).expect("solver binds every variable");
                    updated.set_param(addr, value);
                }
            }
            Ok((updated, stage))
        }
        SolveStatus::Infeasible => fail(
            RepairError::Infeasible {
                stage: label.into(),
            },
            stage,
            t0,
        ),
        SolveStatus::Unbounded => fail(
            RepairError::Numeric {
                stage: label.into(),
                message: "objective reported unbounded; the delta norm is bounded below, \
                          so this indicates a solver fault"
                    .into(),
            },
            stage,
            t0,
        ),
        SolveStatus::NumericFailure(message) => fail(
            RepairError::Numeric {
                stage: label.into(),
                message,
            },
            stage,
            t0,
        ),
    }
}

/// The full repair: validates the shift schedule, shifts each prefix
/// `[0, l_i)` with an empty spec so it becomes locally linear on every
/// polytope, asserts the real spec at layer `k`, and independently
/// re-verifies the candidate before returning it.
pub fn vpolytope_repair(
    net: &Network,
    spec: &RepairSpec,
    partition: &Partition,
    k: usize,
    cfg: &RepairConfig,
) -> RepairOutcome {
    let t0 = Instant::now();
    let mut report = RepairReport::new(partition, k, cfg);
    let finish = |result: Result<Network, RepairError>, mut report: RepairReport| {
        report.total_ms = t0.elapsed().as_secs_f64() * 1e3;
        report.status = match &result {
            Ok(_) => "optimal".into(),
            Err(e) => match e {
                RepairError::Invalid(_) => "invalid".into(),
                RepairError::Infeasible { .. } => "infeasible".into(),
                RepairError::Numeric { .. } => "numeric-failure".into(),
                RepairError::Unverified(_) => "unverified".into(),
            },
        };
        RepairOutcome { result, report }
    };

    if spec.items.is_empty() {
        report.verified = Some(true);
        return finish(Ok(net.clone()), report);
    }
    let polys: Vec<VPolytope> = spec.items.iter().map(|i| i.polytope.clone()).collect();
    let psis: Vec<OutputFormula> = spec.items.iter().map(|i| i.psi.clone()).collect();

    if let Err(msg) = validate_partition(net, partition, k, &polys) {
        return finish(Err(RepairError::Invalid(msg)), report);
    }

    let mut ret = net.clone();
    for (i, &(ki, li)) in partition.0.iter().enumerate() {
        let sliced = ret.slice(0, li).expect("validated partition");
        let og_sliced = net.slice(0, li).expect("validated partition");
        let label = format!("shift{i}[{ki}:{li})");
        match shift_and_assert(&sliced, &og_sliced, &polys, None, ki, cfg, &label) {
            Ok((new_prefix, stage)) => {
                report.absorb(stage);
                ret.splice(0, &new_prefix).expect("same shapes");
            }
            Err(failure) => {
                let (e, stage) = *failure;
                report.absorb(stage);
                return finish(Err(e), report);
            }
        }
    }

    let candidate = match shift_and_assert(&ret, net, &polys, Some(&psis), k, cfg, "assert") {
        Ok((candidate, stage)) => {
            report.objective = stage.objective;
            report.absorb(stage);
            candidate
        }
        Err(failure) => {
            let (e, stage) = *failure;
            report.absorb(stage);
            return finish(Err(e), report);
        }
    };

    // independent certification gate: every item must be analytically covered
    let vreport = verify::check_polytope(
        &candidate,
        spec,
        cfg.verify_samples,
        cfg.verify_tol,
        cfg.seed,
    );
    report.verified = Some(vreport.all_certified);
    if !vreport.all_certified {
        return finish(Err(RepairError::Unverified(Box::new(vreport))), report);
    }

    debug_assert!(same_architecture(net, &candidate));
    report.edits = param_diff(net, &candidate)
        .into_iter()
        .map(|(address, old, new)| EditEntry { address, old, new })
        .collect();
    finish(Ok(candidate), report)
}

/// Pointwise repair: each point becomes a singleton polytope and the shift
/// schedule is empty (single points are trivially within one linear piece).
pub fn pointwise_repair(
    net: &Network,
    points: &[Point],
    psis: &[OutputFormula],
    k: usize,
    cfg: &RepairConfig,
) -> RepairOutcome {
    let spec = RepairSpec {
        items: points
            .iter()
            .zip(psis)
            .map(|(p, psi)| SpecItem {
                polytope: VPolytope::singleton(p.clone()),
                psi: psi.clone(),
            })
            .collect(),
    };
    vpolytope_repair(net, &spec, &Partition::empty(), k, cfg)
}
