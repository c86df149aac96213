//! FAR/FRR sweeps, DET curves, EER and FRR at a target FAR.
//!
//! Scores are distances: a comparison is accepted when its distance is at
//! most the threshold.

mod report;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use report::{write_det_csv, CombinationReport, EvalReport, ReportMetadata, DEFAULT_FAR_TARGET};

/// Operating point at one threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetPoint {
    #[serde(with = "report::signed_infinity")]
    pub threshold: f64,
    /// Fraction of impostor distances `<= threshold`.
    pub far: f64,
    /// Fraction of genuine distances `> threshold`.
    pub frr: f64,
}

fn sorted(name: &str, values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::InvalidInput(format!("{name} score list is empty")));
    }
    if let Some(v) = values.iter().find(|v| v.is_nan()) {
        return Err(Error::InvalidInput(format!("{name} score list contains {v}")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// One point per distinct observed distance, bracketed by a `-inf`
/// threshold (FAR 0, FRR 1) and a `+inf` threshold (FAR 1, FRR 0).
pub fn det_curve(genuine: &[f64], impostor: &[f64]) -> Result<Vec<DetPoint>> {
    let g = sorted("genuine", genuine)?;
    let i = sorted("impostor", impostor)?;
    let (ng, ni) = (g.len() as f64, i.len() as f64);
    let mut thresholds: Vec<f64> = g.iter().chain(&i).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let mut points = Vec::with_capacity(thresholds.len() + 2);
    points.push(DetPoint {
        threshold: f64::NEG_INFINITY,
        far: 0.0,
        frr: 1.0,
    });
    for t in thresholds {
        let accepted_impostors = i.partition_point(|&d| d <= t);
        let accepted_genuine = g.partition_point(|&d| d <= t);
        points.push(DetPoint {
            threshold: t,
            far: accepted_impostors as f64 / ni,
            frr: (g.len() - accepted_genuine) as f64 / ng,
        });
    }
    points.push(DetPoint {
        threshold: f64::INFINITY,
        far: 1.0,
        frr: 0.0,
    });
    Ok(points)
}

/// Rate where the DET polyline crosses FAR = FRR.
///
/// Between the last point with FAR < FRR and the first with FAR ≥ FRR the
/// curve is interpolated linearly. A run of points with FAR = FRR shares one
/// rate, which is returned.
pub fn eer(genuine: &[f64], impostor: &[f64]) -> Result<f64> {
    Ok(eer_from_curve(&det_curve(genuine, impostor)?))
}

pub fn eer_from_curve(points: &[DetPoint]) -> f64 {
    let k = points.iter().position(|p| p.far >= p.frr).unwrap_or(points.len() - 1);
    let cur = points[k];
    if cur.far == cur.frr || k == 0 {
        return cur.far;
    }
    let prev = points[k - 1];
    let (df, dr) = (cur.far - prev.far, cur.frr - prev.frr);
    let lambda = (prev.frr - prev.far) / (df - dr);
    prev.far + lambda * df
}

/// FRR at the largest threshold whose FAR does not exceed `far_target`.
pub fn frr_at_far(genuine: &[f64], impostor: &[f64], far_target: f64) -> Result<f64> {
    if !(far_target > 0.0 && far_target <= 1.0) {
        return Err(Error::InvalidInput(format!("FAR target must lie in (0, 1], got {far_target}")));
    }
    Ok(frr_at_far_from_curve(&det_curve(genuine, impostor)?, far_target))
}

pub fn frr_at_far_from_curve(points: &[DetPoint], far_target: f64) -> f64 {
    points
        .iter()
        .rev()
        .find(|p| p.far <= far_target)
        .map_or(1.0, |p| p.frr)
}
