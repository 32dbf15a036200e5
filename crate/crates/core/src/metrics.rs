//! Accuracy, drawdown and generalization over labelled datasets.

use crate::nn::{arg_extreme, forward, Mode, Network, Point};
use serde::{Deserialize, Serialize};

/// Labelled rows plus the classification convention used to read predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub rows: Vec<(Point, usize)>,
    pub mode: Mode,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Fraction of rows whose predicted label (ties break to the lowest index)
/// equals the recorded label. The empty dataset counts as vacuously 1.0.
pub fn accuracy(net: &Network, ds: &Dataset) -> f64 {
    if ds.rows.is_empty() {
        return 1.0;
    }
    let mut correct = 0usize;
    for (x, label) in &ds.rows {
        assert!(
            *label < net.output_width(),
            "label {label} out of range for {} outputs",
            net.output_width()
        );
        let out = forward(net, x).expect("dataset row width matches the network");
        if arg_extreme(&out, ds.mode) == *label {
            correct += 1;
        }
    }
    correct as f64 / ds.rows.len() as f64
}

/// Accuracy lost by `repaired` relative to `original`. Lower is better.
pub fn drawdown(original: &Network, repaired: &Network, ds: &Dataset) -> f64 {
    accuracy(original, ds) - accuracy(repaired, ds)
}

/// Accuracy gained by `repaired` relative to `original`. Higher is better.
pub fn generalization(original: &Network, repaired: &Network, ds: &Dataset) -> f64 {
    accuracy(repaired, ds) - accuracy(original, ds)
}
