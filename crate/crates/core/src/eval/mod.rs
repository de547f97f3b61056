//! Correspondence accuracy, geodesic error curves, mIoU and ablation sweeps.

mod sweep;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{geodesic_distances, is_connected, one_ring, Mesh};
use crate::model::{ModelParams, ModelSpec};
use crate::scalar::Scalar;
use crate::trainer::Sample;

pub use sweep::{ablation_sweep, train_and_evaluate, Architecture, SweepAxis, SweepRow, SweepTask};

fn check_lengths(pred: usize, gt: usize) -> Result<()> {
    if pred != gt {
        return Err(Error::LengthMismatch { what: "predictions vs ground truth", left: pred, right: gt });
    }
    if pred == 0 {
        return Err(Error::InvalidArgument("no predictions to evaluate".into()));
    }
    Ok(())
}

/// Fraction of exact matches.
pub fn correspondence_accuracy(predictions: &[usize], ground_truth: &[usize]) -> Result<f64> {
    check_lengths(predictions.len(), ground_truth.len())?;
    let hits = predictions.iter().zip(ground_truth).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Mean per-node accuracy of `params` over `samples`.
pub fn evaluate_accuracy<T: Scalar>(spec: &ModelSpec, params: &ModelParams<T>, samples: &[Sample<T>]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples to evaluate".into()));
    }
    crate::trainer::mean_accuracy(spec, params, samples)
}

/// Cumulative fraction of predictions within each distance threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurve {
    pub points: Vec<(f64, f64)>,
}

/// Geodesic distance on `reference` between predicted and true vertices.
pub fn geodesic_errors<T: Scalar>(predictions: &[usize], ground_truth: &[usize], reference: &Mesh<T>) -> Result<Vec<f64>> {
    check_lengths(predictions.len(), ground_truth.len())?;
    let n = reference.n_vertices();
    if let Some(&bad) = predictions.iter().chain(ground_truth).find(|&&v| v >= n) {
        return Err(Error::IndexOutOfRange { index: bad, len: n, line: 0 });
    }
    if !is_connected(&one_ring(reference)) {
        return Err(Error::Disconnected);
    }
    let mut cache: HashMap<usize, Vec<T>> = HashMap::new();
    let mut errors = Vec::with_capacity(predictions.len());
    for (&p, &g) in predictions.iter().zip(ground_truth) {
        if p == g {
            errors.push(0.0);
            continue;
        }
        if let std::collections::hash_map::Entry::Vacant(e) = cache.entry(g) {
            e.insert(geodesic_distances(reference, g)?);
        }
        errors.push(cache[&g][p].as_f64());
    }
    Ok(errors)
}

/// Error CDF at the given thresholds (sorted ascending in the output).
pub fn geodesic_error_curve<T: Scalar>(
    predictions: &[usize],
    ground_truth: &[usize],
    reference: &Mesh<T>,
    thresholds: &[f64],
) -> Result<ErrorCurve> {
    let errors = geodesic_errors(predictions, ground_truth, reference)?;
    Ok(error_curve(&errors, thresholds))
}

/// CDF of precomputed errors at the given thresholds.
pub fn error_curve(errors: &[f64], thresholds: &[f64]) -> ErrorCurve {
    let mut th = thresholds.to_vec();
    th.sort_by(f64::total_cmp);
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len().max(1) as f64;
    let points = th
        .into_iter()
        .map(|t| (t, sorted.partition_point(|&e| e <= t) as f64 / n))
        .collect();
    ErrorCurve { points }
}

/// Per-part IoU over the category's parts and their mean.
///
/// A part absent from both prediction and ground truth scores 1.
pub fn miou(predictions: &[usize], ground_truth: &[usize], parts: &[usize]) -> Result<(Vec<f64>, f64)> {
    check_lengths(predictions.len(), ground_truth.len())?;
    if parts.is_empty() {
        return Err(Error::InvalidArgument("category has no parts".into()));
    }
    if let Some(&bad) = predictions.iter().chain(ground_truth).find(|l| !parts.contains(l)) {
        return Err(Error::LabelOutsideCategory { label: bad });
    }
    let ious: Vec<f64> = parts
        .iter()
        .map(|&p| {
            let (mut inter, mut union) = (0usize, 0usize);
            for (&a, &b) in predictions.iter().zip(ground_truth) {
                let (x, y) = (a == p, b == p);
                inter += (x && y) as usize;
                union += (x || y) as usize;
            }
            if union == 0 { 1.0 } else { inter as f64 / union as f64 }
        })
        .collect();
    let mean = ious.iter().sum::<f64>() / ious.len() as f64;
    Ok((ious, mean))
}

/// Mean of per-shape mIoU values, each shape weighted equally.
pub fn overall_miou(shape_mious: &[f64]) -> Result<f64> {
    if shape_mious.is_empty() {
        return Err(Error::InvalidArgument("no shapes".into()));
    }
    Ok(shape_mious.iter().sum::<f64>() / shape_mious.len() as f64)
}
