//! File formats: networks and specs as JSON, datasets as CSV, reports as
//! JSON. Floating-point values are serialized in their shortest round-trip
//! representation, so saving and reloading reproduces every parameter
//! bit-exactly.

use std::fs;
use std::path::Path;

use crate::metrics::Dataset;
use crate::nn::{ActivationKind, Layer, Mode, Network, Point, VPolytope};
use crate::repair::{OutputFormula, Partition, RepairSpec, SpecItem, SpecRow};
use crate::symbolic::Relation;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid {what}: {message}")]
    Invalid { what: &'static str, message: String },
}

fn invalid(what: &'static str, message: impl Into<String>) -> IoError {
    IoError::Invalid {
        what,
        message: message.into(),
    }
}

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    activation: String,
}

fn activation_from_tag(tag: &str) -> Result<ActivationKind, IoError> {
    match tag {
        "identity" => Ok(ActivationKind::Identity),
        "relu" => Ok(ActivationKind::Relu),
        "hardswish" => Ok(ActivationKind::Hardswish),
        other => Err(invalid(
            "network",
            format!("unknown activation tag {other:?}"),
        )),
    }
}

fn activation_tag(kind: ActivationKind) -> &'static str {
    match kind {
        ActivationKind::Identity => "identity",
        ActivationKind::Relu => "relu",
        ActivationKind::Hardswish => "hardswish",
    }
}

pub fn load_network(path: &Path) -> Result<Network, IoError> {
    let text = fs::read_to_string(path)?;
    let file: NetworkFile = serde_json::from_str(&text)?;
    let layers = file
        .layers
        .into_iter()
        .map(|l| {
            Ok(Layer {
                weights: l.weights,
                bias: l.bias,
                activation: activation_from_tag(&l.activation)?,
            })
        })
        .collect::<Result<Vec<_>, IoError>>()?;
    Network::new(layers).map_err(|e| invalid("network", e.to_string()))
}

pub fn save_network(path: &Path, net: &Network) -> Result<(), IoError> {
    let file = NetworkFile {
        layers: net
            .layers()
            .iter()
            .map(|l| LayerFile {
                weights: l.weights.clone(),
                bias: l.bias.clone(),
                activation: activation_tag(l.activation).to_string(),
            })
            .collect(),
    };
    fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct SpecFile {
    items: Vec<SpecItemFile>,
}

#[derive(Serialize, Deserialize)]
struct SpecItemFile {
    polytope: Vec<Vec<f64>>,
    psi: PsiFile,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum PsiFile {
    Raw(Vec<SpecRowFile>),
    Classify {
        label: usize,
        mode: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        margin: Option<f64>,
    },
}

#[derive(Serialize, Deserialize)]
struct SpecRowFile {
    coeffs: Vec<f64>,
    rel: String,
    rhs: f64,
}

fn relation_from_tag(tag: &str) -> Result<Relation, IoError> {
    match tag {
        "<=" => Ok(Relation::Le),
        ">=" => Ok(Relation::Ge),
        "=" => Ok(Relation::Eq),
        other => Err(invalid("spec", format!("unknown relation {other:?}"))),
    }
}

fn relation_tag(rel: Relation) -> &'static str {
    match rel {
        Relation::Le => "<=",
        Relation::Ge => ">=",
        Relation::Eq => "=",
    }
}

fn mode_from_tag(tag: &str) -> Result<Mode, IoError> {
    match tag {
        "argmax" => Ok(Mode::Argmax),
        "argmin" => Ok(Mode::Argmin),
        other => Err(invalid("spec", format!("unknown mode {other:?}"))),
    }
}

/// Loads a repair spec. Classification items without an explicit margin use
/// `default_margin`.
pub fn load_spec(path: &Path, default_margin: f64) -> Result<RepairSpec, IoError> {
    let text = fs::read_to_string(path)?;
    let file: SpecFile = serde_json::from_str(&text)?;
    let items = file
        .items
        .into_iter()
        .map(|item| {
            let polytope = VPolytope::new(item.polytope)
                .map_err(|e| invalid("spec", format!("polytope: {e}")))?;
            let psi = match item.psi {
                PsiFile::Raw(rows) => OutputFormula::Raw(
                    rows.into_iter()
                        .map(|r| {
                            Ok(SpecRow {
                                coeffs: r.coeffs,
                                rel: relation_from_tag(&r.rel)?,
                                rhs: r.rhs,
                            })
                        })
                        .collect::<Result<Vec<_>, IoError>>()?,
                ),
                PsiFile::Classify {
                    label,
                    mode,
                    margin,
                } => OutputFormula::Classify {
                    label,
                    mode: mode_from_tag(&mode)?,
                    margin: margin.unwrap_or(default_margin),
                },
            };
            Ok(SpecItem { polytope, psi })
        })
        .collect::<Result<Vec<_>, IoError>>()?;
    Ok(RepairSpec { items })
}

pub fn save_spec(path: &Path, spec: &RepairSpec) -> Result<(), IoError> {
    let file = SpecFile {
        items: spec
            .items
            .iter()
            .map(|item| SpecItemFile {
                polytope: item.polytope.vertices().to_vec(),
                psi: match &item.psi {
                    OutputFormula::Raw(rows) => PsiFile::Raw(
                        rows.iter()
                            .map(|r| SpecRowFile {
                                coeffs: r.coeffs.clone(),
                                rel: relation_tag(r.rel).to_string(),
                                rhs: r.rhs,
                            })
                            .collect(),
                    ),
                    OutputFormula::Classify {
                        label,
                        mode,
                        margin,
                    } => PsiFile::Classify {
                        label: *label,
                        mode: match mode {
                            Mode::Argmax => "argmax".to_string(),
                            Mode::Argmin => "argmin".to_string(),
                        },
                        margin: Some(*margin),
                    },
                },
            })
            .collect(),
    };
    fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

/// Loads a CSV dataset with header `f0,...,f{d-1},label`.
pub fn load_dataset(path: &Path, mode: Mode) -> Result<Dataset, IoError> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let width = headers.len().saturating_sub(1);
    if width == 0 || headers.get(width) != Some("label") {
        return Err(invalid("dataset", "expected header f0,...,f{d-1},label"));
    }
    for (i, h) in headers.iter().take(width).enumerate() {
        if h != format!("f{i}") {
            return Err(invalid(
                "dataset",
                format!("expected column f{i}, found {h:?}"),
            ));
        }
    }
    let mut rows: Vec<(Point, usize)> = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() != width + 1 {
            return Err(invalid("dataset", "row width differs from header"));
        }
        let mut features = Vec::with_capacity(width);
        for v in record.iter().take(width) {
            let x: f64 = v
                .parse()
                .map_err(|e| invalid("dataset", format!("bad feature {v:?}: {e}")))?;
            if !x.is_finite() {
                return Err(invalid("dataset", "non-finite feature"));
            }
            features.push(x);
        }
        let label: usize = record
            .get(width)
            .unwrap()
            .parse()
            .map_err(|e| invalid("dataset", format!("bad label: {e}")))?;
        rows.push((features, label));
    }
    Ok(Dataset { rows, mode })
}

pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<(), IoError> {
    let mut writer = csv::Writer::from_path(path)?;
    let width = ds.rows.first().map_or(0, |(x, _)| x.len());
    let mut header: Vec<String> = (0..width).map(|i| format!("f{i}")).collect();
    header.push("label".to_string());
    writer.write_record(&header)?;
    for (x, label) in &ds.rows {
        let mut record: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        record.push(label.to_string());
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Writes any serializable report as pretty JSON.
pub fn save_report<T: Serialize>(path: &Path, report: &T) -> Result<(), IoError> {
    fs::write(path, serde_json::to_string_pretty(report)?)?;
    Ok(())
}

/// Parses a shift schedule of the form `"k0:l0,k1:l1,..."`; the empty string
/// is the empty schedule.
pub fn parse_partition(text: &str) -> Result<Partition, IoError> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Ok(Partition::empty());
    }
    let mut pairs = Vec::new();
    for part in trimmed.split(',') {
        let (k, l) = part
            .split_once(':')
            .ok_or_else(|| invalid("partition", format!("expected k:l, found {part:?}")))?;
        let k = k
            .trim()
            .parse()
            .map_err(|e| invalid("partition", format!("bad index {k:?}: {e}")))?;
        let l = l
            .trim()
            .parse()
            .map_err(|e| invalid("partition", format!("bad index {l:?}: {e}")))?;
        pairs.push((k, l));
    }
    Ok(Partition(pairs))
}
