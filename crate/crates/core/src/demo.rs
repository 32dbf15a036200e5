//! Built-in demo scenarios: a two-layer walkthrough family of toy networks
//! plus desk-scale harnesses for box-polytope repairs.

use crate::gen;
use crate::nn::{arg_extreme, forward, ActivationKind, Mode, Network};
use crate::repair::{
    band_spec, pointwise_repair, vpolytope_repair, OutputFormula, Partition, RepairConfig,
    RepairReport, RepairSpec, SpecItem,
};
use crate::verify::{check_pointwise, check_polytope, ItemStatus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub mod overview {
    //! A family of hand-sized two-layer networks used throughout the demos
    //! and golden tests: `net1` is the buggy original, `net2` a pointwise
    //! repair of it, `net3` a vertices-only repair that misses hull points,
    //! `net4` a shifted variant that is locally linear on the demo polytopes,
    //! and `net5` a full polytope repair.

    use crate::nn::{ActivationKind, Layer, Network, VPolytope};

    fn two_layer(w0: [f64; 3], b0: [f64; 3], w1: [f64; 3], b1: f64) -> Network {
        Network::new(vec![
            Layer {
                weights: vec![w0.to_vec()],
                bias: b0.to_vec(),
                activation: ActivationKind::Relu,
            },
            Layer {
                weights: vec![vec![w1[0]], vec![w1[1]], vec![w1[2]]],
                bias: vec![b1],
                activation: ActivationKind::Identity,
            },
        ])
        .expect("demo network is well-formed")
    }

    /// Original buggy network: 1 input, 3 ReLU neurons, 1 identity output.
    pub fn net1() -> Network {
        two_layer([-1.0, 1.0, 0.5], [0.0, -2.0, 0.0], [0.5, -0.5, 1.0], -0.5)
    }

    /// Pointwise repair of `net1`: outputs 0.1 at -1.5 and -0.1 at -0.5.
    pub fn net2() -> Network {
        two_layer([-0.4, 1.0, 0.5], [0.0, -2.0, 0.0], [0.5, -0.5, 1.0], -0.2)
    }

    /// Vertices-only repair of `net1`; violates the band spec inside the
    /// second segment (output 0.532 at input 2).
    pub fn net3() -> Network {
        two_layer([-0.4, 1.0, 0.366], [0.0, -2.0, 0.0], [0.5, -0.5, 1.0], -0.2)
    }

    /// Shift of `net1` that is locally linear on both demo polytopes.
    pub fn net4() -> Network {
        two_layer(
            [-1.0, 0.75, 1.0 / 3.0],
            [0.0, -2.25, 0.0],
            [0.5, -0.5, 1.0],
            -0.5,
        )
    }

    /// Second-layer repair of `net4` satisfying the full polytope spec.
    pub fn net5() -> Network {
        two_layer(
            [-1.0, 0.75, 1.0 / 3.0],
            [0.0, -2.25, 0.0],
            [0.2, -0.5, 0.6],
            -0.2,
        )
    }

    /// The repair segment `{[-1.5], [-0.5]}`.
    pub fn poly_low() -> VPolytope {
        VPolytope::new(vec![vec![-1.5], vec![-0.5]]).unwrap()
    }

    /// The repair segment `{[1.5], [3]}`.
    pub fn poly_high() -> VPolytope {
        VPolytope::new(vec![vec![1.5], vec![3.0]]).unwrap()
    }

    /// The two-polytope band specification used by the walkthrough:
    /// outputs in `[-0.1, 0.1]` on the low segment and `[0, 0.4]` on the
    /// high one.
    pub fn band_items() -> crate::repair::RepairSpec {
        crate::repair::RepairSpec {
            items: vec![
                crate::repair::SpecItem {
                    polytope: poly_low(),
                    psi: crate::repair::band_spec(-0.1, 0.1),
                },
                crate::repair::SpecItem {
                    polytope: poly_high(),
                    psi: crate::repair::band_spec(0.0, 0.4),
                },
            ],
        }
    }
}

/// One pass/fail line of a demo run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DemoCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DemoReport {
    pub scenario: String,
    pub checks: Vec<DemoCheck>,
}

impl DemoReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(DemoCheck {
            name: name.to_string(),
            passed,
            detail,
        });
    }
}

/// The two-layer walkthrough, end to end: forward golden values, a failing
/// check on the original, a pointwise repair, a full polytope repair, the
/// rejection of the vertices-only repair, and certification of the
/// hand-built final network.
pub fn run_overview() -> DemoReport {
    let mut report = DemoReport {
        scenario: "paper-overview".into(),
        checks: Vec::new(),
    };
    let cfg = RepairConfig::default();
    let n1 = overview::net1();

    let y4 = forward(&n1, &[4.0]).unwrap()[0];
    let y15 = forward(&n1, &[-1.5]).unwrap()[0];
    report.push(
        "forward golden values",
        y4 == 0.5 && y15 == 0.25,
        format!("f(4) = {y4}, f(-1.5) = {y15}"),
    );

    let points = vec![vec![-1.5], vec![-0.5]];
    let band = vec![band_spec(-0.1, 0.1), band_spec(-0.1, 0.1)];
    let original_fails = !check_pointwise(&n1, &points, &band, 1e-6).passed;
    report.push(
        "original violates the band at both points",
        original_fails,
        format!("outputs {} and {}", y15, forward(&n1, &[-0.5]).unwrap()[0]),
    );

    let outcome = pointwise_repair(&n1, &points, &band, 0, &cfg);
    let (ok, detail) = match &outcome.result {
        Ok(net) => {
            let a = forward(net, &[-1.5]).unwrap()[0];
            let b = forward(net, &[-0.5]).unwrap()[0];
            let within = a.abs() <= 0.1 + 1e-6 && b.abs() <= 0.1 + 1e-6;
            (within, format!("repaired outputs {a:.6} and {b:.6}"))
        }
        Err(e) => (false, e.to_string()),
    };
    report.push("pointwise repair lands in the band", ok, detail);

    let spec = overview::band_items();
    let outcome = vpolytope_repair(&n1, &spec, &Partition(vec![(0, 1)]), 1, &cfg);
    let (ok, detail) = match &outcome.result {
        Ok(net) => {
            let v = check_polytope(net, &spec, 1024, 1e-6, 1);
            (
                v.all_certified,
                format!("objective {:?}", outcome.report.objective),
            )
        }
        Err(e) => (false, e.to_string()),
    };
    report.push("polytope repair is verify-certified", ok, detail);

    let v3 = check_polytope(&overview::net3(), &spec, 4096, 1e-6, 1);
    let witness_ok = v3.items[1].status == ItemStatus::Failed
        && v3.items[1]
            .witness
            .as_ref()
            .is_some_and(|w| (w.output[0] - 0.532).abs() < 1e-3);
    report.push(
        "vertices-only repair is rejected with a witness",
        witness_ok,
        format!(
            "worst output {:?} exceeds 0.4",
            v3.items[1].witness.as_ref().map(|w| w.output[0])
        ),
    );

    let v5 = check_polytope(&overview::net5(), &spec, 1024, 1e-6, 1);
    report.push(
        "hand-built final network is certified",
        v5.all_certified,
        format!(
            "outputs {:?} and {:?}",
            forward(&overview::net5(), &[1.5]).unwrap(),
            forward(&overview::net5(), &[3.0]).unwrap()
        ),
    );

    report
}

/// The desk-scale box-repair instance mirroring an aircraft-advisory
/// controller: 5 inputs, 7 layers of width 16, argmin classification,
/// repaired over `n_boxes` disjoint 5-D boxes of 32 vertices each.
pub fn acas_desk_instance(seed: u64, n_boxes: usize) -> (Network, RepairSpec, Partition, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = [5, 16, 16, 16, 16, 16, 16, 5];
    let acts = [
        ActivationKind::Relu,
        ActivationKind::Relu,
        ActivationKind::Relu,
        ActivationKind::Relu,
        ActivationKind::Relu,
        ActivationKind::Relu,
        ActivationKind::Identity,
    ];
    let net = gen::random_network(&mut rng, &dims, &acts, 1.5);
    let half_width = 0.025;
    let centers = gen::disjoint_box_centers(&mut rng, n_boxes, 5, half_width);
    let items = centers
        .iter()
        .map(|center| {
            let polytope = gen::box_polytope(center, half_width, &[0, 1, 2, 3, 4]);
            let label = arg_extreme(&forward(&net, center).unwrap(), Mode::Argmin);
            SpecItem {
                polytope,
                psi: OutputFormula::Classify {
                    label,
                    mode: Mode::Argmin,
                    margin: 1e-3,
                },
            }
        })
        .collect();
    let partition = Partition(vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6)]);
    (net, RepairSpec { items }, partition, 6)
}

#[derive(Debug)]
pub struct AcasDeskOutcome {
    pub demo: DemoReport,
    pub repair_report: RepairReport,
    pub repaired: Option<Network>,
    pub samples_checked: usize,
    pub sample_violations: usize,
}

/// Runs the advisory-controller analog: repair all boxes, certify each one,
/// then spot-check `samples_per_box` random interior points per box for
/// classification violations.
pub fn run_acas_desk(seed: u64, samples_per_box: usize) -> AcasDeskOutcome {
    let mut demo = DemoReport {
        scenario: "acas-desk".into(),
        checks: Vec::new(),
    };
    let (net, spec, partition, k) = acas_desk_instance(seed, 24);
    let cfg = RepairConfig::default();
    let outcome = vpolytope_repair(&net, &spec, &partition, k, &cfg);
    let mut samples_checked = 0;
    let mut sample_violations = 0;
    match &outcome.result {
        Ok(repaired) => {
            demo.push(
                "repair succeeds over all boxes",
                true,
                format!(
                    "{} boxes, {} constraint rows, {:.1} ms",
                    spec.items.len(),
                    outcome.report.constraint_count,
                    outcome.report.total_ms
                ),
            );
            let v = check_polytope(repaired, &spec, 256, cfg.verify_tol, seed);
            demo.push(
                "every box is certified",
                v.all_certified,
                format!(
                    "{} certified of {}",
                    v.items
                        .iter()
                        .filter(|i| i.status == ItemStatus::Certified)
                        .count(),
                    v.items.len()
                ),
            );
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            for item in &spec.items {
                let OutputFormula::Classify { label, mode, .. } = item.psi else {
                    continue;
                };
                let dim = item.polytope.dim();
                let verts = item.polytope.vertices();
                for _ in 0..samples_per_box {
                    // uniform point inside the box: the vertex set is an
                    // axis-aligned box, so sample each coordinate range
                    let mut x = vec![0.0; dim];
                    for d in 0..dim {
                        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                        for v in verts {
                            lo = lo.min(v[d]);
                            hi = hi.max(v[d]);
                        }
                        x[d] = rng.gen_range(lo..=hi);
                    }
                    let out = forward(repaired, &x).unwrap();
                    samples_checked += 1;
                    if arg_extreme(&out, mode) != label {
                        sample_violations += 1;
                    }
                }
            }
            demo.push(
                "interior samples classify to the pinned label",
                sample_violations == 0,
                format!("{sample_violations} violations in {samples_checked} samples"),
            );
        }
        Err(e) => {
            demo.push("repair succeeds over all boxes", false, e.to_string());
        }
    }
    AcasDeskOutcome {
        demo,
        repaired: outcome.result.ok(),
        repair_report: outcome.report,
        samples_checked,
        sample_violations,
    }
}

/// The d-dimensional robustness instance: a 16-input network, one box
/// polytope perturbing the first `d` coordinates by `epsilon`, and an
/// argmax-invariance formula pinning the original label.
pub fn robustbox_instance(d: usize, seed: u64) -> (Network, RepairSpec, Partition, usize) {
    assert!((1..=16).contains(&d), "d must be in 1..=16");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = [16, 3, 2];
    let acts = [ActivationKind::Relu, ActivationKind::Identity];
    let net = gen::random_network(&mut rng, &dims, &acts, 1.5);
    let center: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let epsilon = 0.1;
    let perturbed: Vec<usize> = (0..d).collect();
    let polytope = gen::box_polytope(&center, epsilon, &perturbed);
    let label = arg_extreme(&forward(&net, &center).unwrap(), Mode::Argmax);
    let spec = RepairSpec {
        items: vec![SpecItem {
            polytope,
            psi: OutputFormula::Classify {
                label,
                mode: Mode::Argmax,
                margin: 1e-4,
            },
        }],
    };
    (net, spec, Partition(vec![(0, 1)]), 1)
}

#[derive(Debug)]
pub struct RobustBoxOutcome {
    pub demo: DemoReport,
    pub repair_report: RepairReport,
    pub repaired: Option<Network>,
    pub constraint_count: usize,
    pub expected_count: usize,
}

/// Runs the d-dimensional robustness analog and checks that the measured
/// constraint count matches `2^d x suffix-neurons x (1 + spec rows)`.
pub fn run_robustbox(d: usize, seed: u64) -> RobustBoxOutcome {
    let mut demo = DemoReport {
        scenario: format!("robustbox-desk (d={d})"),
        checks: Vec::new(),
    };
    let (net, spec, partition, k) = robustbox_instance(d, seed);
    let cfg = RepairConfig::default();
    let outcome = vpolytope_repair(&net, &spec, &partition, k, &cfg);
    let vertices = 1usize << d;
    let spec_rows = spec.items[0].psi.rows(net.output_width()).len();
    let suffix_neurons = outcome
        .report
        .stages
        .last()
        .map_or(0, |s| s.symbolic_suffix_neurons);
    let expected_count = vertices * suffix_neurons * (1 + spec_rows);
    let constraint_count = outcome.report.constraint_count;
    match &outcome.result {
        Ok(repaired) => {
            demo.push(
                "repair succeeds on the box",
                true,
                format!("{vertices} vertices, {constraint_count} constraint rows"),
            );
            let v = check_polytope(repaired, &spec, 256, cfg.verify_tol, seed);
            demo.push(
                "box is certified",
                v.all_certified,
                format!("status {:?}", v.items[0].status),
            );
            let within = (constraint_count as f64 - expected_count as f64).abs()
                <= 0.05 * expected_count as f64;
            demo.push(
                "constraint count matches the vertex scaling model",
                within,
                format!("measured {constraint_count}, model {expected_count}"),
            );
        }
        Err(e) => {
            demo.push("repair succeeds on the box", false, e.to_string());
        }
    }
    RobustBoxOutcome {
        demo,
        repaired: outcome.result.ok(),
        repair_report: outcome.report,
        constraint_count,
        expected_count,
    }
}
