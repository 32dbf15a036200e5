//! Seeded generators for networks, box polytopes and datasets, used by the
//! demo scenarios and the test suites.

use crate::nn::{ActivationKind, Layer, Network, Point, VPolytope};
use rand::Rng;

/// A random network with the given layer widths (`dims.len() == acts.len() + 1`)
/// and per-layer activations. Weights are uniform in `[-scale, scale] / sqrt(n_in)`,
/// biases uniform in `[-scale, scale] / 2`.
pub fn random_network<R: Rng>(
    rng: &mut R,
    dims: &[usize],
    acts: &[ActivationKind],
    scale: f64,
) -> Network {
    assert_eq!(dims.len(), acts.len() + 1);
    let mut layers = Vec::with_capacity(acts.len());
    for (l, &act) in acts.iter().enumerate() {
        let (n_in, n_out) = (dims[l], dims[l + 1]);
        let w_scale = scale / (n_in as f64).sqrt();
        let weights = (0..n_in)
            .map(|_| {
                (0..n_out)
                    .map(|_| rng.gen_range(-w_scale..=w_scale))
                    .collect()
            })
            .collect();
        let bias = (0..n_out)
            .map(|_| rng.gen_range(-scale / 2.0..=scale / 2.0))
            .collect();
        layers.push(Layer {
            weights,
            bias,
            activation: act,
        });
    }
    Network::new(layers).expect("generated layers are shape-consistent")
}

/// A random network with random depth/widths and activations sampled from the
/// given pool (last layer is always identity, as in a regression/logit head).
pub fn random_mixed_network<R: Rng>(
    rng: &mut R,
    max_layers: usize,
    max_width: usize,
    pool: &[ActivationKind],
) -> Network {
    let n_layers = rng.gen_range(1..=max_layers);
    let mut dims = Vec::with_capacity(n_layers + 1);
    for _ in 0..=n_layers {
        dims.push(rng.gen_range(1..=max_width));
    }
    let mut acts: Vec<ActivationKind> = (0..n_layers)
        .map(|_| pool[rng.gen_range(0..pool.len())])
        .collect();
    if let Some(last) = acts.last_mut() {
        *last = ActivationKind::Identity;
    }
    random_network(rng, &dims, &acts, 1.5)
}

/// The axis-aligned box `center +- half_width` restricted to the coordinates
/// in `dims`, as a V-polytope with `2^dims.len()` vertices. Coordinates not in
/// `dims` stay fixed at the center value.
pub fn box_polytope(center: &[f64], half_width: f64, dims: &[usize]) -> VPolytope {
    assert!(dims.len() < 24, "box vertex count would overflow");
    let n = 1usize << dims.len();
    let mut vertices = Vec::with_capacity(n);
    for mask in 0..n {
        let mut v = center.to_vec();
        for (bit, &d) in dims.iter().enumerate() {
            let sign = if mask >> bit & 1 == 1 { 1.0 } else { -1.0 };
            v[d] += sign * half_width;
        }
        vertices.push(v);
    }
    VPolytope::new(vertices).expect("box vertices are consistent")
}

/// `count` random box centers in `[-1, 1]^dim` whose boxes of the given
/// half-width are pairwise disjoint (separated by at least one half-width).
pub fn disjoint_box_centers<R: Rng>(
    rng: &mut R,
    count: usize,
    dim: usize,
    half_width: f64,
) -> Vec<Point> {
    let min_gap = 3.0 * half_width;
    let mut centers: Vec<Point> = Vec::with_capacity(count);
    let mut attempts = 0;
    while centers.len() < count {
        attempts += 1;
        assert!(attempts < 100_000, "could not place disjoint boxes");
        let c: Point = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ok = centers.iter().all(|existing| {
            existing
                .iter()
                .zip(&c)
                .any(|(a, b)| (a - b).abs() >= min_gap)
        });
        if ok {
            centers.push(c);
        }
    }
    centers
}

/// A random cloud of `count` points around `center` with the given radius.
pub fn point_cloud<R: Rng>(rng: &mut R, center: &[f64], radius: f64, count: usize) -> VPolytope {
    let vertices = (0..count)
        .map(|_| {
            center
                .iter()
                .map(|&c| c + rng.gen_range(-radius..=radius))
                .collect()
        })
        .collect();
    VPolytope::new(vertices).expect("cloud vertices are consistent")
}

/// Shifts hardswish-layer biases so that every hardswish pre-activation at
/// `x` lands on a linear piece (`|pre| >= 3.5`). On the curved middle region
/// no linear piece reproduces the activation, so conditional execution with
/// reference `x` is only exact at the original parameters after this nudge.
pub fn steer_hardswish_linear(net: &Network, x: &[f64]) -> Network {
    let mut layers: Vec<Layer> = net.layers().to_vec();
    let mut cur = x.to_vec();
    for layer in layers.iter_mut() {
        let mut pre = layer.bias.clone();
        for (i, &xi) in cur.iter().enumerate() {
            for (p, w) in pre.iter_mut().zip(&layer.weights[i]) {
                *p += xi * w;
            }
        }
        if layer.activation == ActivationKind::Hardswish {
            for (j, p) in pre.iter_mut().enumerate() {
                if p.abs() < 3.5 {
                    let target = if *p >= 0.0 { 3.5 } else { -3.5 };
                    layer.bias[j] += target - *p;
                    *p = target;
                }
            }
        }
        cur = pre
            .into_iter()
            .map(|v| crate::nn::activate(layer.activation, v))
            .collect();
    }
    Network::new(layers).expect("bias shifts preserve shapes")
}

/// Random labelled rows for metrics tests: features in `[-1, 1]^dim`,
/// labels uniform below `num_classes`.
pub fn random_rows<R: Rng>(
    rng: &mut R,
    count: usize,
    dim: usize,
    num_classes: usize,
) -> Vec<(Point, usize)> {
    (0..count)
        .map(|_| {
            let x = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            (x, rng.gen_range(0..num_classes))
        })
        .collect()
}
