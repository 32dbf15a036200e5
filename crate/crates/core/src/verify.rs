//! Independent checking: exact local-linearity of a slice over a V-polytope,
//! affine-map extraction, and certification that a network satisfies a
//! repair specification on entire convex hulls.
//!
//! The linearity decision is layer-inductive and sample-free. While the
//! slice is affine on the hull, every pre-activation is an affine function
//! of the input, so its extremes over the hull are attained at vertices and
//! piece membership is decided by vertex signs alone. The first neuron whose
//! vertex pre-activations span two pieces stops the induction.

use crate::nn::{activate, forward, ActivationKind, Network, Point, VPolytope};
use crate::repair::{psi_slack, OutputFormula, RepairSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// The affine piece a neuron is confined to over the hull.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NeuronPiece {
    /// Identity activation: one global piece.
    Identity,
    /// Pass-through piece (ReLU `x >= 0`, hardswish `x >= 3`).
    Active,
    /// Zero piece (ReLU `x <= 0`, hardswish `x <= -3`).
    Inactive,
    /// All vertex pre-activations coincide, so the neuron is constant on the
    /// hull even inside hardswish's curved region.
    Constant(f64),
}

impl NeuronPiece {
    /// The piece as `post = scale * pre + offset`.
    fn coeffs(&self) -> (f64, f64) {
        match *self {
            NeuronPiece::Identity | NeuronPiece::Active => (1.0, 0.0),
            NeuronPiece::Inactive => (0.0, 0.0),
            NeuronPiece::Constant(v) => (0.0, v),
        }
    }
}

/// Witness of a neuron whose vertex pre-activations span two linear pieces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixedNeuron {
    pub layer: usize,
    pub neuron: usize,
    pub min_pre: f64,
    pub max_pre: f64,
}

/// Outcome of the local-linearity decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearityCheck {
    pub locally_linear: bool,
    /// Piece assignment per layer, complete only when locally linear.
    pub pieces: Vec<Vec<NeuronPiece>>,
    pub witness: Option<MixedNeuron>,
}

/// Decides exactly whether the slice agrees with a single affine map on the
/// hull of `p`, reporting the per-layer piece assignment or the first mixed
/// neuron. Closed pieces share their boundary: a ReLU neuron with some
/// vertices exactly at 0 and the rest positive still counts as linear.
pub fn is_locally_linear(
    slice: &Network,
    p: &VPolytope,
) -> Result<LinearityCheck, crate::nn::NnError> {
    if p.dim() != slice.input_width() {
        return Err(crate::nn::NnError::DimensionMismatch {
            expected: slice.input_width(),
            got: p.dim(),
            context: "is_locally_linear polytope",
        });
    }
    let mut cur: Vec<Point> = p.vertices().to_vec();
    let mut pieces: Vec<Vec<NeuronPiece>> = Vec::with_capacity(slice.len());
    for (l, layer) in slice.layers().iter().enumerate() {
        let pre: Vec<Point> = cur
            .iter()
            .map(|v| {
                let mut out = layer.bias.clone();
                for (i, &vi) in v.iter().enumerate() {
                    for (o, w) in out.iter_mut().zip(&layer.weights[i]) {
                        *o += vi * w;
                    }
                }
                out
            })
            .collect();
        let mut layer_pieces = Vec::with_capacity(layer.n_out());
        for j in 0..layer.n_out() {
            let mut min_pre = f64::INFINITY;
            let mut max_pre = f64::NEG_INFINITY;
            for row in &pre {
                min_pre = min_pre.min(row[j]);
                max_pre = max_pre.max(row[j]);
            }
            let piece = match layer.activation {
                ActivationKind::Identity => NeuronPiece::Identity,
                ActivationKind::Relu => {
                    if min_pre >= 0.0 {
                        NeuronPiece::Active
                    } else if max_pre <= 0.0 {
                        NeuronPiece::Inactive
                    } else {
                        pieces.push(layer_pieces);
                        return Ok(LinearityCheck {
                            locally_linear: false,
                            pieces,
                            witness: Some(MixedNeuron {
                                layer: l,
                                neuron: j,
                                min_pre,
                                max_pre,
                            }),
                        });
                    }
                }
                ActivationKind::Hardswish => {
                    if min_pre >= 3.0 {
                        NeuronPiece::Active
                    } else if max_pre <= -3.0 {
                        NeuronPiece::Inactive
                    } else if min_pre == max_pre {
                        NeuronPiece::Constant(activate(ActivationKind::Hardswish, min_pre))
                    } else {
                        pieces.push(layer_pieces);
                        return Ok(LinearityCheck {
                            locally_linear: false,
                            pieces,
                            witness: Some(MixedNeuron {
                                layer: l,
                                neuron: j,
                                min_pre,
                                max_pre,
                            }),
                        });
                    }
                }
            };
            layer_pieces.push(piece);
        }
        pieces.push(layer_pieces);
        cur = pre
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|v| activate(layer.activation, v))
                    .collect()
            })
            .collect();
    }
    Ok(LinearityCheck {
        locally_linear: true,
        pieces,
        witness: None,
    })
}

/// An affine map `x -> x A + b` with `A` of shape `n_in x n_out`.
pub type AffineMap = (Vec<Vec<f64>>, Vec<f64>);

/// Composes the per-layer pieces into a single affine map. Errors with the
/// mixed-neuron witness when the slice is not locally linear on the polytope.
pub fn local_linear_map(slice: &Network, p: &VPolytope) -> Result<AffineMap, Box<MixedNeuron>> {
    let check = is_locally_linear(slice, p).map_err(|_| {
        Box::new(MixedNeuron {
            layer: 0,
            neuron: 0,
            min_pre: f64::NAN,
            max_pre: f64::NAN,
        })
    })?;
    if !check.locally_linear {
        return Err(Box::new(check.witness.expect("witness present when mixed")));
    }
    let n_in = slice.input_width();
    // identity map
    let mut a: Vec<Vec<f64>> = (0..n_in)
        .map(|i| (0..n_in).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut b = vec![0.0; n_in];
    for (layer, layer_pieces) in slice.layers().iter().zip(&check.pieces) {
        let n_out = layer.n_out();
        let mut a_next: Vec<Vec<f64>> = vec![vec![0.0; n_out]; n_in];
        let mut b_next = vec![0.0; n_out];
        for (j, piece) in layer_pieces.iter().enumerate() {
            let (scale, offset) = piece.coeffs();
            for i in 0..n_in {
                let mut acc = 0.0;
                for (k, row) in layer.weights.iter().enumerate() {
                    acc += a[i][k] * row[j];
                }
                a_next[i][j] = scale * acc;
            }
            let mut acc = layer.bias[j];
            for (k, &bk) in b.iter().enumerate() {
                acc += bk * layer.weights[k][j];
            }
            b_next[j] = scale * acc + offset;
        }
        a = a_next;
        b = b_next;
    }
    Ok((a, b))
}

/// Applies an affine map in the row-vector convention.
pub fn apply_affine(a: &[Vec<f64>], b: &[f64], x: &[f64]) -> Vec<f64> {
    let mut out = b.to_vec();
    for (i, &xi) in x.iter().enumerate() {
        for (o, w) in out.iter_mut().zip(&a[i]) {
            *o += xi * w;
        }
    }
    out
}

/// How a spec item was established (or not).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ItemStatus {
    /// Vertices pass and the network is locally linear on the polytope, so
    /// the hull is covered analytically.
    Certified,
    /// Vertices and random hull samples pass, but the network is not locally
    /// linear on the polytope, so no analytic certificate exists.
    SampledOnly,
    Failed,
}

/// A concrete point violating the item's formula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub input: Point,
    pub output: Point,
    /// Index of the violated formula row.
    pub row: usize,
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemReport {
    pub index: usize,
    pub status: ItemStatus,
    pub locally_linear: bool,
    pub mixed_neuron: Option<MixedNeuron>,
    pub vertices_checked: usize,
    pub samples_checked: usize,
    /// Worst violation seen anywhere (0 when clean).
    pub worst_violation: f64,
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub version: String,
    pub tol: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub items: Vec<ItemReport>,
    /// Every item certified.
    pub all_certified: bool,
    /// Every item certified or sampled-clean.
    pub passed: bool,
}

/// Default verification tolerance on formula slack.
pub const DEFAULT_TOL: f64 = 1e-6;
/// Default random hull samples per polytope.
pub const DEFAULT_SAMPLES: usize = 256;

/// Checks each item of the spec: (1) the formula at every vertex, (2) exact
/// local linearity over the polytope — together these certify the hull —
/// and (3) the formula at `n_samples` random convex combinations of the
/// vertices as an independent spot-check.
pub fn check_polytope(
    net: &Network,
    spec: &RepairSpec,
    n_samples: usize,
    tol: f64,
    seed: u64,
) -> VerifyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::with_capacity(spec.items.len());
    for (index, item) in spec.items.iter().enumerate() {
        let rows = item.psi.rows(net.output_width());
        let mut worst: Option<Witness> = None;
        let mut worst_violation = 0.0f64;
        let mut record = |input: &Point, output: &Point, row: usize, violation: f64| {
            if violation > worst_violation {
                worst_violation = violation;
                worst = Some(Witness {
                    input: input.clone(),
                    output: output.clone(),
                    row,
                    violation,
                });
            }
        };

        let mut clean = true;
        for vertex in item.polytope.vertices() {
            let out = forward(net, vertex).expect("spec and network widths agree");
            for (ri, row) in rows.iter().enumerate() {
                let violation = -psi_slack(row, &out);
                if violation > tol {
                    clean = false;
                }
                if violation > 0.0 {
                    record(vertex, &out, ri, violation);
                }
            }
        }

        let lin = is_locally_linear(net, &item.polytope).expect("spec and network widths agree");

        let n_vertices = item.polytope.num_vertices();
        for _ in 0..n_samples {
            // Dirichlet(1,..,1) weights: uniform over the vertex-weight simplex
            let mut weights: Vec<f64> = (0..n_vertices)
                .map(|_| -f64::ln(1.0 - rng.gen::<f64>()))
                .collect();
            let total: f64 = weights.iter().sum();
            for w in weights.iter_mut() {
                *w /= total;
            }
            let mut x = vec![0.0; item.polytope.dim()];
            for (w, v) in weights.iter().zip(item.polytope.vertices()) {
                for (xi, vi) in x.iter_mut().zip(v) {
                    *xi += w * vi;
                }
            }
            let out = forward(net, &x).expect("sample in input space");
            for (ri, row) in rows.iter().enumerate() {
                let violation = -psi_slack(row, &out);
                if violation > tol {
                    clean = false;
                }
                if violation > 0.0 {
                    record(&x, &out, ri, violation);
                }
            }
        }

        let status = if clean && lin.locally_linear {
            ItemStatus::Certified
        } else if clean {
            ItemStatus::SampledOnly
        } else {
            ItemStatus::Failed
        };
        items.push(ItemReport {
            index,
            status,
            locally_linear: lin.locally_linear,
            mixed_neuron: lin.witness,
            vertices_checked: n_vertices,
            samples_checked: n_samples,
            worst_violation,
            witness: worst,
        });
    }
    let all_certified = items.iter().all(|i| i.status == ItemStatus::Certified);
    let passed = items.iter().all(|i| i.status != ItemStatus::Failed);
    VerifyReport {
        version: crate::VERSION.to_string(),
        tol,
        n_samples,
        seed,
        items,
        all_certified,
        passed,
    }
}

/// Pointwise check: each formula evaluated on the forward output of its
/// point. Points are singleton polytopes, so passing items are certified.
pub fn check_pointwise(
    net: &Network,
    points: &[Point],
    psis: &[OutputFormula],
    tol: f64,
) -> VerifyReport {
    let spec = RepairSpec {
        items: points
            .iter()
            .zip(psis)
            .map(|(p, psi)| crate::repair::SpecItem {
                polytope: VPolytope::singleton(p.clone()),
                psi: psi.clone(),
            })
            .collect(),
    };
    check_polytope(net, &spec, 0, tol, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo::overview::{net1, net3, net4, net5, poly_high, poly_low};
    use crate::nn::VPolytope;
    use crate::repair::{band_spec, SpecItem};

    #[test]
    fn linearity_matches_walkthrough() {
        let n1 = net1();
        assert!(is_locally_linear(&n1, &poly_low()).unwrap().locally_linear);
        let high = is_locally_linear(&n1, &poly_high()).unwrap();
        assert!(!high.locally_linear);
        let w = high.witness.unwrap();
        assert_eq!(w.layer, 0);
        // segments from the input-output plot
        for (a, b) in [(-2.0, 0.0), (0.0, 2.0), (2.0, 4.0)] {
            let p = VPolytope::new(vec![vec![a], vec![b]]).unwrap();
            assert!(
                is_locally_linear(&n1, &p).unwrap().locally_linear,
                "{a}..{b}"
            );
        }
        for (a, b) in [(-1.0, 1.0), (1.5, 3.0)] {
            let p = VPolytope::new(vec![vec![a], vec![b]]).unwrap();
            assert!(!is_locally_linear(&n1, &p).unwrap().locally_linear);
        }
        // the shifted network is locally linear on both polytopes
        let n4 = net4();
        assert!(is_locally_linear(&n4, &poly_low()).unwrap().locally_linear);
        assert!(is_locally_linear(&n4, &poly_high()).unwrap().locally_linear);
    }

    #[test]
    fn singleton_is_always_linear() {
        let p = VPolytope::singleton(vec![0.7]);
        assert!(is_locally_linear(&net1(), &p).unwrap().locally_linear);

        // hardswish neuron with a reference in the curved region: a singleton
        // still admits an affine restriction (a constant)
        let net = crate::nn::Network::new(vec![crate::nn::Layer {
            weights: vec![vec![1.0]],
            bias: vec![0.0],
            activation: crate::nn::ActivationKind::Hardswish,
        }])
        .unwrap();
        let p = VPolytope::singleton(vec![1.7]);
        let check = is_locally_linear(&net, &p).unwrap();
        assert!(check.locally_linear);
        assert_eq!(
            check.pieces[0][0],
            NeuronPiece::Constant(activate(ActivationKind::Hardswish, 1.7))
        );
        let (a, b) = local_linear_map(&net, &p).unwrap();
        let out = apply_affine(&a, &b, &[1.7]);
        assert!((out[0] - activate(ActivationKind::Hardswish, 1.7)).abs() < 1e-12);
    }

    #[test]
    fn linear_map_matches_plot_segment() {
        // on the low segment the demo net computes f(x) = -0.5x - 0.5
        let (a, b) = local_linear_map(&net1(), &poly_low()).unwrap();
        assert_eq!(a.len(), 1);
        assert!((a[0][0] - -0.5).abs() < 1e-12);
        assert!((b[0] - -0.5).abs() < 1e-12);
        let out = apply_affine(&a, &b, &[-1.5]);
        assert!((out[0] - 0.25).abs() < 1e-12);
        let out = apply_affine(&a, &b, &[-0.5]);
        assert!((out[0] - -0.25).abs() < 1e-12);
    }

    #[test]
    fn linear_map_identity_only_slice() {
        use crate::nn::{ActivationKind, Layer, Network};
        let net = Network::new(vec![
            Layer {
                weights: vec![vec![1.0, 2.0], vec![0.5, -1.0]],
                bias: vec![0.1, 0.2],
                activation: ActivationKind::Identity,
            },
            Layer {
                weights: vec![vec![-1.0], vec![3.0]],
                bias: vec![0.5],
                activation: ActivationKind::Identity,
            },
        ])
        .unwrap();
        let p = VPolytope::new(vec![vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let (a, b) = local_linear_map(&net, &p).unwrap();
        // product of the weight matrices and accumulated bias
        assert!((a[0][0] - (-1.0 + 2.0 * 3.0)).abs() < 1e-12);
        assert!((a[1][0] - (-0.5 - 3.0)).abs() < 1e-12);
        assert!((b[0] - (-0.1 + 0.2 * 3.0 + 0.5)).abs() < 1e-12);
        for x in [[0.3, 0.9], [0.0, 1.0]] {
            let direct = forward(&net, &x).unwrap();
            let mapped = apply_affine(&a, &b, &x);
            assert!((direct[0] - mapped[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn linear_map_interior_agreement_random() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut linear_cases = 0;
        while linear_cases < 40 {
            let net = crate::gen::random_mixed_network(
                &mut rng,
                3,
                6,
                &[
                    ActivationKind::Relu,
                    ActivationKind::Identity,
                    ActivationKind::Hardswish,
                ],
            );
            let dim = net.input_width();
            let center: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n_vertices = rng.gen_range(1..5);
            let p = crate::gen::point_cloud(&mut rng, &center, 0.05, n_vertices);
            let Ok((a, b)) = local_linear_map(&net, &p) else {
                continue;
            };
            linear_cases += 1;
            for _ in 0..100 {
                // random convex combination of the vertices
                let mut weights: Vec<f64> = (0..p.num_vertices())
                    .map(|_| rng.gen_range(0.0..1.0f64))
                    .collect();
                let s: f64 = weights.iter().sum::<f64>().max(1e-9);
                weights.iter_mut().for_each(|w| *w /= s);
                let mut x = vec![0.0; dim];
                for (w, v) in weights.iter().zip(p.vertices()) {
                    for (xi, vi) in x.iter_mut().zip(v) {
                        *xi += w * vi;
                    }
                }
                let direct = forward(&net, &x).unwrap();
                let mapped = apply_affine(&a, &b, &x);
                for (d, m) in direct.iter().zip(&mapped) {
                    assert!((d - m).abs() <= 1e-9, "direct {d} mapped {m}");
                }
            }
        }
    }

    #[test]
    fn check_polytope_classifies_demo_networks() {
        let spec = RepairSpec {
            items: vec![
                SpecItem {
                    polytope: poly_low(),
                    psi: band_spec(-0.1, 0.1),
                },
                SpecItem {
                    polytope: poly_high(),
                    psi: band_spec(0.0, 0.4),
                },
            ],
        };
        // the repaired network is certified on both items
        let report = check_polytope(&net5(), &spec, 256, DEFAULT_TOL, 7);
        assert!(report.all_certified, "{report:?}");

        // the vertices-only repair fails on the second item with a witness
        // near input 2 where the output exceeds the 0.4 bound
        let report = check_polytope(&net3(), &spec, 4096, DEFAULT_TOL, 7);
        assert_eq!(report.items[0].status, ItemStatus::Certified);
        assert_eq!(report.items[1].status, ItemStatus::Failed);
        let witness = report.items[1].witness.as_ref().unwrap();
        assert!((witness.output[0] - 0.532).abs() < 1e-3, "{witness:?}");
        assert!(!report.passed);

        // the original network fails the tight band at the vertices
        let spec1 = RepairSpec {
            items: vec![SpecItem {
                polytope: poly_low(),
                psi: band_spec(-0.1, 0.1),
            }],
        };
        let report = check_polytope(&net1(), &spec1, 16, DEFAULT_TOL, 7);
        assert_eq!(report.items[0].status, ItemStatus::Failed);
        // violation at the vertex: 0.25 against the 0.1 bound
        assert!((report.items[0].worst_violation - 0.15).abs() < 1e-9);
    }

    #[test]
    fn pointwise_checks() {
        let points = vec![vec![-1.5], vec![-0.5]];
        let psis = vec![band_spec(-0.1, 0.1), band_spec(-0.1, 0.1)];
        assert!(
            check_pointwise(&crate::demo::overview::net2(), &points, &psis, DEFAULT_TOL).passed
        );
        assert!(!check_pointwise(&net1(), &points, &psis, DEFAULT_TOL).passed);
        let empty = check_pointwise(&net1(), &[], &[], DEFAULT_TOL);
        assert!(empty.passed && empty.all_certified);
    }

    #[test]
    fn decision_is_deterministic() {
        let a = is_locally_linear(&net1(), &poly_high()).unwrap();
        let b = is_locally_linear(&net1(), &poly_high()).unwrap();
        assert_eq!(a, b);
    }

    /// A certified verdict survives a 10^4-sample statistical spot-check.
    #[test]
    fn certificates_hold_on_fresh_samples() {
        use rand::{Rng, SeedableRng};
        let spec = RepairSpec {
            items: vec![
                SpecItem {
                    polytope: poly_low(),
                    psi: band_spec(-0.1, 0.1),
                },
                SpecItem {
                    polytope: poly_high(),
                    psi: band_spec(0.0, 0.4),
                },
            ],
        };
        let net = net5();
        let report = check_polytope(&net, &spec, 64, DEFAULT_TOL, 41);
        assert!(report.all_certified);
        let mut rng = ChaCha8Rng::seed_from_u64(0xf2e5);
        for item in &spec.items {
            let rows = match &item.psi {
                crate::repair::OutputFormula::Raw(rows) => rows.clone(),
                other => other.rows(net.output_width()),
            };
            for _ in 0..10_000 {
                let mut weights: Vec<f64> = (0..item.polytope.num_vertices())
                    .map(|_| -f64::ln(1.0 - rng.gen::<f64>()))
                    .collect();
                let total: f64 = weights.iter().sum();
                weights.iter_mut().for_each(|w| *w /= total);
                let mut x = vec![0.0; item.polytope.dim()];
                for (w, v) in weights.iter().zip(item.polytope.vertices()) {
                    for (xi, vi) in x.iter_mut().zip(v) {
                        *xi += w * vi;
                    }
                }
                let out = forward(&net, &x).unwrap();
                for row in &rows {
                    assert!(crate::repair::psi_slack(row, &out) >= -DEFAULT_TOL);
                }
            }
        }
    }
}
