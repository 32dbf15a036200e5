//! Fully-connected networks with identity, ReLU and Hardswish activations:
//! representation, concrete execution, slicing and parameter addressing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A concrete input or intermediate value, as a row vector.
pub type Point = Vec<f64>;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("invalid slice range [{l0}, {l1}) for network of {len} layers")]
    SliceRange { l0: usize, l1: usize, len: usize },
    #[error("polytope must have at least one vertex")]
    EmptyPolytope,
}

/// Activation function tag. Each kind is applied component-wise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Identity,
    Relu,
    Hardswish,
}

/// Applies a scalar activation: identity, `max(x, 0)`, or hardswish
/// (0 for `x <= -3`, `x` for `x >= 3`, `x*(x+3)/6` in between).
pub fn activate(kind: ActivationKind, x: f64) -> f64 {
    match kind {
        ActivationKind::Identity => x,
        ActivationKind::Relu => {
            if x >= 0.0 {
                x
            } else {
                0.0
            }
        }
        ActivationKind::Hardswish => {
            if x <= -3.0 {
                0.0
            } else if x >= 3.0 {
                x
            } else {
                x * (x + 3.0) / 6.0
            }
        }
    }
}

/// One fully-connected layer: `y = activation(x W + b)` with `W` of shape
/// `n_in x n_out` (row-major) and `b` of length `n_out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub activation: ActivationKind,
}

impl Layer {
    pub fn n_in(&self) -> usize {
        self.weights.len()
    }

    pub fn n_out(&self) -> usize {
        self.bias.len()
    }

    fn validate(&self, index: usize) -> Result<(), NnError> {
        if self.weights.is_empty() {
            return Err(NnError::InvalidNetwork(format!(
                "layer {index}: empty weight matrix"
            )));
        }
        for row in &self.weights {
            if row.len() != self.bias.len() {
                return Err(NnError::InvalidNetwork(format!(
                    "layer {index}: weight row length {} != bias length {}",
                    row.len(),
                    self.bias.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(NnError::InvalidNetwork(format!(
                    "layer {index}: non-finite weight"
                )));
            }
        }
        if self.bias.iter().any(|v| !v.is_finite()) {
            return Err(NnError::InvalidNetwork(format!(
                "layer {index}: non-finite bias"
            )));
        }
        Ok(())
    }
}

/// A feedforward network: an ordered, shape-consistent list of layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<Layer>,
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::InvalidNetwork("no layers".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            layer.validate(i)?;
        }
        for i in 0..layers.len() - 1 {
            if layers[i].n_out() != layers[i + 1].n_in() {
                return Err(NnError::InvalidNetwork(format!(
                    "layer {} outputs {} values but layer {} expects {}",
                    i,
                    layers[i].n_out(),
                    i + 1,
                    layers[i + 1].n_in()
                )));
            }
        }
        Ok(Network { layers })
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer(&self, l: usize) -> &Layer {
        &self.layers[l]
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].n_in()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].n_out()
    }

    /// Layers `l0..l1` as an independent network. Requires `0 <= l0 < l1 <= len`.
    pub fn slice(&self, l0: usize, l1: usize) -> Result<Network, NnError> {
        if l0 >= l1 || l1 > self.layers.len() {
            return Err(NnError::SliceRange {
                l0,
                l1,
                len: self.layers.len(),
            });
        }
        Ok(Network {
            layers: self.layers[l0..l1].to_vec(),
        })
    }

    /// Replaces layers `l0..l0 + replacement.len()` with the given layers.
    /// Shapes must match the layers being replaced.
    pub fn splice(&mut self, l0: usize, replacement: &Network) -> Result<(), NnError> {
        let l1 = l0 + replacement.len();
        if l1 > self.layers.len() {
            return Err(NnError::SliceRange {
                l0,
                l1,
                len: self.layers.len(),
            });
        }
        for (off, layer) in replacement.layers.iter().enumerate() {
            let old = &self.layers[l0 + off];
            if old.n_in() != layer.n_in() || old.n_out() != layer.n_out() {
                return Err(NnError::InvalidNetwork(format!(
                    "splice shape mismatch at layer {}",
                    l0 + off
                )));
            }
            self.layers[l0 + off] = layer.clone();
        }
        Ok(())
    }

    pub fn param(&self, addr: &ParamAddress) -> Option<f64> {
        let layer = self.layers.get(addr.layer)?;
        match addr.kind {
            ParamKind::Weight { row, col } => layer.weights.get(row)?.get(col).copied(),
            ParamKind::Bias { col } => layer.bias.get(col).copied(),
        }
    }

    pub fn set_param(&mut self, addr: &ParamAddress, value: f64) {
        let layer = &mut self.layers[addr.layer];
        match addr.kind {
            ParamKind::Weight { row, col } => layer.weights[row][col] = value,
            ParamKind::Bias { col } => layer.bias[col] = value,
        }
    }
}

/// Addresses a single scalar parameter of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamAddress {
    pub layer: usize,
    pub kind: ParamKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Weight { row: usize, col: usize },
    Bias { col: usize },
}

/// Pre-activation of one layer: `x W + b`.
fn affine(layer: &Layer, x: &[f64]) -> Vec<f64> {
    let mut out = layer.bias.clone();
    for (i, xi) in x.iter().enumerate() {
        let row = &layer.weights[i];
        for (o, w) in out.iter_mut().zip(row.iter()) {
            *o += xi * w;
        }
    }
    out
}

/// Runs the network on a point, layer by layer in a fixed evaluation order.
pub fn forward(net: &Network, x: &[f64]) -> Result<Point, NnError> {
    if x.len() != net.input_width() {
        return Err(NnError::DimensionMismatch {
            expected: net.input_width(),
            got: x.len(),
            context: "forward input",
        });
    }
    let mut cur = x.to_vec();
    for layer in net.layers() {
        let mut pre = affine(layer, &cur);
        for v in pre.iter_mut() {
            *v = activate(layer.activation, *v);
        }
        cur = pre;
    }
    Ok(cur)
}

/// Like [`forward`], returning every layer's `(pre_activation, post_activation)`.
pub fn forward_trace(net: &Network, x: &[f64]) -> Result<Vec<(Point, Point)>, NnError> {
    if x.len() != net.input_width() {
        return Err(NnError::DimensionMismatch {
            expected: net.input_width(),
            got: x.len(),
            context: "forward_trace input",
        });
    }
    let mut cur = x.to_vec();
    let mut trace = Vec::with_capacity(net.len());
    for layer in net.layers() {
        let pre = affine(layer, &cur);
        let post: Vec<f64> = pre.iter().map(|&v| activate(layer.activation, v)).collect();
        cur = post.clone();
        trace.push((pre, post));
    }
    Ok(trace)
}

/// A bounded convex polytope given by its vertices. Duplicates are kept;
/// they do not change the hull and preserve vertex indexing in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VPolytope {
    vertices: Vec<Point>,
}

impl VPolytope {
    pub fn new(vertices: Vec<Point>) -> Result<Self, NnError> {
        let first = vertices.first().ok_or(NnError::EmptyPolytope)?;
        let dim = first.len();
        for v in &vertices {
            if v.len() != dim {
                return Err(NnError::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                    context: "polytope vertex",
                });
            }
            if v.iter().any(|c| !c.is_finite()) {
                return Err(NnError::InvalidNetwork("non-finite vertex".into()));
            }
        }
        Ok(VPolytope { vertices })
    }

    pub fn singleton(point: Point) -> Self {
        VPolytope {
            vertices: vec![point],
        }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn dim(&self) -> usize {
        self.vertices[0].len()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }
}

/// Maps every vertex through the network; vertex order is preserved.
pub fn forward_polytope(net: &Network, p: &VPolytope) -> Result<VPolytope, NnError> {
    let vertices = p
        .vertices()
        .iter()
        .map(|v| forward(net, v))
        .collect::<Result<Vec<_>, _>>()?;
    VPolytope::new(vertices)
}

/// Classification convention for reading a label off an output vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Argmax,
    Argmin,
}

/// Index of the extreme output under `mode`; ties break to the lowest index.
pub fn arg_extreme(out: &[f64], mode: Mode) -> usize {
    let mut best = 0;
    for (i, &v) in out.iter().enumerate().skip(1) {
        let better = match mode {
            Mode::Argmax => v > out[best],
            Mode::Argmin => v < out[best],
        };
        if better {
            best = i;
        }
    }
    best
}

/// True iff both networks have the same layer count, shapes and activations.
pub fn same_architecture(a: &Network, b: &Network) -> bool {
    a.len() == b.len()
        && a.layers().iter().zip(b.layers()).all(|(la, lb)| {
            la.n_in() == lb.n_in() && la.n_out() == lb.n_out() && la.activation == lb.activation
        })
}

/// All parameters whose values differ between two same-architecture networks.
pub fn param_diff(a: &Network, b: &Network) -> Vec<(ParamAddress, f64, f64)> {
    let mut diffs = Vec::new();
    for (l, (la, lb)) in a.layers().iter().zip(b.layers()).enumerate() {
        for (r, (ra, rb)) in la.weights.iter().zip(&lb.weights).enumerate() {
            for (c, (&va, &vb)) in ra.iter().zip(rb).enumerate() {
                if va != vb {
                    diffs.push((
                        ParamAddress {
                            layer: l,
                            kind: ParamKind::Weight { row: r, col: c },
                        },
                        va,
                        vb,
                    ));
                }
            }
        }
        for (c, (&va, &vb)) in la.bias.iter().zip(&lb.bias).enumerate() {
            if va != vb {
                diffs.push((
                    ParamAddress {
                        layer: l,
                        kind: ParamKind::Bias { col: c },
                    },
                    va,
                    vb,
                ));
            }
        }
    }
    diffs
}
