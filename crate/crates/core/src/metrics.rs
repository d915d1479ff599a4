//! Relative pose error and absolute trajectory error.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Trajectory;
use crate::geometry::{umeyama_align, AlignmentResult, GeometryError, Pose};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("trajectory lengths differ: ground truth {gt}, estimate {est}")]
    LengthMismatch { gt: usize, est: usize },
    #[error("delta {delta} must be in 1..{n}")]
    DeltaTooLarge { delta: usize, n: usize },
    #[error("no samples to summarize")]
    EmptySamples,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub rmse: f64,
    pub mean: f64,
    pub median: f64,
    pub count: usize,
}

/// RMSE, mean and lower-middle median, reduced in input order.
pub fn summarize(samples: &[f64]) -> Result<MetricSummary, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::EmptySamples);
    }
    let n = samples.len() as f64;
    let sum_sq: f64 = samples.iter().map(|s| s * s).sum();
    let sum: f64 = samples.iter().sum();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(MetricSummary {
        rmse: (sum_sq / n).sqrt(),
        mean: sum / n,
        median: sorted[(sorted.len() - 1) / 2],
        count: samples.len(),
    })
}

/// How the per-frame error transform is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RpeForm {
    /// `(Q_i⁻¹ Q_{i+Δ})⁻¹ (P_i⁻¹ P_{i+Δ})`, zero for identical trajectories.
    #[default]
    Canonical,
    /// `(Q_i⁻¹ Q_{i+Δ}) (P_i⁻¹ P_{i+Δ})`, a plain product of the relative motions.
    Printed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RpeSample {
    /// Meters.
    pub translation: f64,
    /// Degrees.
    pub rotation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpeReport {
    pub delta: usize,
    pub translational: MetricSummary,
    pub rotational: MetricSummary,
    pub per_frame: Vec<RpeSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AteReport {
    pub alignment: AlignmentResult,
    pub translational: MetricSummary,
    pub per_frame: Vec<f64>,
}

fn check_lengths(gt: usize, est: usize) -> Result<(), MetricsError> {
    if gt != est {
        return Err(MetricsError::LengthMismatch { gt, est });
    }
    Ok(())
}

pub fn rpe(gt: &Trajectory, est: &Trajectory, delta: usize) -> Result<RpeReport, MetricsError> {
    rpe_poses(&gt.poses(), &est.poses(), delta, RpeForm::Canonical)
}

pub fn rpe_poses(gt: &[Pose], est: &[Pose], delta: usize, form: RpeForm) -> Result<RpeReport, MetricsError> {
    check_lengths(gt.len(), est.len())?;
    let n = gt.len();
    if delta == 0 || delta >= n {
        return Err(MetricsError::DeltaTooLarge { delta, n });
    }
    let per_frame: Vec<RpeSample> = (0..n - delta)
        .into_par_iter()
        .map(|i| {
            let q_rel = gt[i].inverse() * gt[i + delta];
            let p_rel = est[i].inverse() * est[i + delta];
            let e = match form {
                // same product, arranged so that equal relative motions cancel exactly
                RpeForm::Canonical => Pose::new(
                    conj_mul(q_rel.rotation(), p_rel.rotation()),
                    q_rel.rotation().inverse() * (p_rel.translation() - q_rel.translation()),
                ),
                RpeForm::Printed => q_rel * p_rel,
            };
            RpeSample {
                translation: e.translation().norm(),
                rotation: e.rotation_angle().to_degrees(),
            }
        })
        .collect();
    let trans: Vec<f64> = per_frame.iter().map(|s| s.translation).collect();
    let rot: Vec<f64> = per_frame.iter().map(|s| s.rotation).collect();
    Ok(RpeReport {
        delta,
        translational: summarize(&trans)?,
        rotational: summarize(&rot)?,
        per_frame,
    })
}

/// `a⁻¹ b`, written out so that `a == b` yields a zero vector part exactly.
fn conj_mul(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let (aw, av) = (a.w, a.imag());
    let (bw, bv) = (b.w, b.imag());
    let w = aw * bw + av.dot(&bv);
    let v = bv * aw - av * bw - av.cross(&bv);
    UnitQuaternion::new_unchecked(Quaternion::from_parts(w, v))
}

pub fn ate(gt: &Trajectory, est: &Trajectory) -> Result<AteReport, MetricsError> {
    ate_poses(&gt.poses(), &est.poses())
}

pub fn ate_poses(gt: &[Pose], est: &[Pose]) -> Result<AteReport, MetricsError> {
    check_lengths(gt.len(), est.len())?;
    let reference: Vec<Vector3<f64>> = gt.iter().map(|p| *p.translation()).collect();
    let source: Vec<Vector3<f64>> = est.iter().map(|p| *p.translation()).collect();
    let alignment = umeyama_align(&reference, &source)?;
    let s = alignment.transform;
    let per_frame: Vec<f64> = gt
        .par_iter()
        .zip(est)
        .map(|(q, p)| (s.transform_point(p.translation()) - q.translation()).norm())
        .collect();
    Ok(AteReport {
        alignment,
        translational: summarize(&per_frame)?,
        per_frame,
    })
}

/// Frame offset closest to `seconds` given the mean frame period, at least 1.
pub fn delta_for_seconds(timestamps: &[f64], seconds: f64) -> Option<usize> {
    if timestamps.len() < 2 || !(seconds > 0.0) {
        return None;
    }
    let span = timestamps[timestamps.len() - 1] - timestamps[0];
    if !(span > 0.0) {
        return None;
    }
    let period = span / (timestamps.len() - 1) as f64;
    Some(((seconds / period).round() as usize).max(1))
}
