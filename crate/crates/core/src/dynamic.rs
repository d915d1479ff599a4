//! Moving-object decision for detected boxes and whole-box masking.
//!
//! Per frame pair: corners are detected on the previous frame and tracked
//! into the current one; a background motion model is fit on tracks lying
//! outside every target box; a track is dynamic when its displacement
//! deviates from the model by more than `threshold1` pixels; a box is moving
//! when its dynamic-track count exceeds the cutoff derived from the
//! `threshold2` policy. Moving boxes are masked in full.

use nalgebra::{Matrix3, Point2, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{BoundingBox, FrameDetections, GrayImage, Mask};
use crate::flow::{detect_corners, track_pyr_lk, FlowConfig, FlowError, FlowTrack};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectError {
    #[error("insufficient background tracks: {found} outside boxes, {needed} needed")]
    InsufficientBackground { found: usize, needed: usize },
    #[error("degenerate background motion fit: {0}")]
    DegenerateFit(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionModelKind {
    Translation,
    Affine,
}

/// Image-space model of the flow induced by camera motion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackgroundMotionModel {
    Translation {
        dx: f64,
        dy: f64,
    },
    /// `cur = [[a0, a1], [a3, a4]] · prev + [a2, a5]`
    Affine {
        params: [f64; 6],
    },
}

impl BackgroundMotionModel {
    pub fn identity() -> Self {
        BackgroundMotionModel::Translation { dx: 0.0, dy: 0.0 }
    }

    pub fn kind(&self) -> MotionModelKind {
        match self {
            BackgroundMotionModel::Translation { .. } => MotionModelKind::Translation,
            BackgroundMotionModel::Affine { .. } => MotionModelKind::Affine,
        }
    }

    /// Displacement the model predicts for a point at `p` in the previous frame.
    pub fn predict(&self, p: Point2<f64>) -> Vector2<f64> {
        match *self {
            BackgroundMotionModel::Translation { dx, dy } => Vector2::new(dx, dy),
            BackgroundMotionModel::Affine { params: a } => Vector2::new(
                a[0] * p.x + a[1] * p.y + a[2] - p.x,
                a[3] * p.x + a[4] * p.y + a[5] - p.y,
            ),
        }
    }

    fn residual(&self, t: &FlowTrack) -> f64 {
        let prev = t.prev.cast::<f64>();
        let d = t.displacement().cast::<f64>();
        (d - self.predict(prev)).norm()
    }
}

fn outside_all(p: &Point2<f32>, boxes: &[BoundingBox]) -> bool {
    let (x, y) = (p.x as f64, p.y as f64);
    !boxes.iter().any(|b| b.contains(x, y))
}

fn fit_translation(tracks: &[&FlowTrack]) -> BackgroundMotionModel {
    let n = tracks.len() as f64;
    let sum = tracks
        .iter()
        .fold(Vector2::<f64>::zeros(), |acc, t| acc + t.displacement().cast::<f64>());
    BackgroundMotionModel::Translation {
        dx: sum.x / n,
        dy: sum.y / n,
    }
}

fn fit_affine(tracks: &[&FlowTrack]) -> Result<BackgroundMotionModel, DetectError> {
    // centre coordinates for conditioning
    let n = tracks.len() as f64;
    let c = tracks
        .iter()
        .fold(Vector2::<f64>::zeros(), |acc, t| acc + t.prev.coords.cast::<f64>())
        / n;
    let mut ata = Matrix3::<f64>::zeros();
    let mut atx = Vector3::<f64>::zeros();
    let mut aty = Vector3::<f64>::zeros();
    for t in tracks {
        let p = t.prev.coords.cast::<f64>() - c;
        let q = t.cur.coords.cast::<f64>() - c;
        let row = Vector3::new(p.x, p.y, 1.0);
        ata += row * row.transpose();
        atx += row * q.x;
        aty += row * q.y;
    }
    let chol = ata
        .cholesky()
        .ok_or_else(|| DetectError::DegenerateFit("background points are collinear".into()))?;
    let sx = chol.solve(&atx);
    let sy = chol.solve(&aty);
    let lin = nalgebra::Matrix2::new(sx[0], sx[1], sy[0], sy[1]);
    let det = lin.determinant();
    if !(det > 0.0) || !det.is_finite() {
        return Err(DetectError::DegenerateFit(format!(
            "affine determinant {det} is not positive"
        )));
    }
    // undo centring: q + c = L (p - c) + s + c  =>  offset = s + c - L c
    let offset = Vector2::new(sx[2], sy[2]) + c - lin * c;
    Ok(BackgroundMotionModel::Affine {
        params: [lin[(0, 0)], lin[(0, 1)], offset.x, lin[(1, 0)], lin[(1, 1)], offset.y],
    })
}

fn fit(kind: MotionModelKind, tracks: &[&FlowTrack]) -> Result<BackgroundMotionModel, DetectError> {
    match kind {
        MotionModelKind::Translation => Ok(fit_translation(tracks)),
        MotionModelKind::Affine => fit_affine(tracks),
    }
}

fn min_tracks(kind: MotionModelKind) -> usize {
    match kind {
        MotionModelKind::Translation => 1,
        MotionModelKind::Affine => 3,
    }
}

/// Least-squares background model on tracked points outside all `boxes`,
/// with one pass of outlier rejection (residual > 3× median) and a refit.
pub fn estimate_background_motion(
    tracks: &[FlowTrack],
    boxes: &[BoundingBox],
    kind: MotionModelKind,
) -> Result<BackgroundMotionModel, DetectError> {
    let background: Vec<&FlowTrack> = tracks
        .iter()
        .filter(|t| t.tracked && outside_all(&t.cur, boxes))
        .collect();
    let needed = min_tracks(kind);
    if background.len() < needed {
        return Err(DetectError::InsufficientBackground {
            found: background.len(),
            needed,
        });
    }
    let model = fit(kind, &background)?;

    let residuals: Vec<f64> = background.iter().map(|t| model.residual(t)).collect();
    let mut sorted = residuals.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[(sorted.len() - 1) / 2];
    let cutoff = (3.0 * median).max(1e-6);
    let inliers: Vec<&FlowTrack> = background
        .iter()
        .zip(&residuals)
        .filter(|(_, r)| **r <= cutoff)
        .map(|(t, _)| *t)
        .collect();
    if inliers.len() < needed || inliers.len() == background.len() {
        return Ok(model);
    }
    fit(kind, &inliers).or(Ok(model))
}

/// Per-point decision. `is_dynamic` is `None` for untracked points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointFlag {
    pub index: usize,
    pub is_dynamic: Option<bool>,
    pub residual: f64,
}

pub fn classify_points(tracks: &[FlowTrack], model: &BackgroundMotionModel, threshold1: f64) -> Vec<PointFlag> {
    tracks
        .iter()
        .enumerate()
        .map(|(index, t)| {
            if !t.tracked {
                return PointFlag {
                    index,
                    is_dynamic: None,
                    residual: 0.0,
                };
            }
            let residual = model.residual(t);
            PointFlag {
                index,
                is_dynamic: Some(residual > threshold1),
                residual,
            }
        })
        .collect()
}

/// How many dynamic points make a box move.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Threshold2Policy {
    pub fraction: f64,
    pub absolute_min: usize,
}

impl Default for Threshold2Policy {
    fn default() -> Self {
        Self {
            fraction: 0.25,
            absolute_min: 5,
        }
    }
}

impl Threshold2Policy {
    /// A box moves iff its dynamic count is strictly greater than this.
    pub fn cutoff(&self, total: usize) -> usize {
        let by_min = self.absolute_min.saturating_sub(1);
        let by_fraction = ((self.fraction * total as f64).ceil() as usize).saturating_sub(1);
        by_min.max(by_fraction)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxVerdict {
    pub index: usize,
    pub dynamic_count: usize,
    pub total_count: usize,
    pub is_moving: bool,
    /// Too few tracked points to judge; such boxes default to moving.
    pub undecidable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicVerdict {
    pub per_point: Vec<PointFlag>,
    pub per_box: Vec<BoxVerdict>,
}

/// Counts dynamic points per box using boundary-inclusive membership on
/// current-frame positions.
pub fn classify_boxes(
    boxes: &[BoundingBox],
    flags: &[PointFlag],
    points: &[Point2<f32>],
    policy: &Threshold2Policy,
) -> DynamicVerdict {
    let per_box = boxes
        .iter()
        .enumerate()
        .map(|(index, b)| {
            let (mut total, mut dynamic) = (0usize, 0usize);
            for f in flags {
                let Some(is_dyn) = f.is_dynamic else { continue };
                let p = points[f.index];
                if b.contains(p.x as f64, p.y as f64) {
                    total += 1;
                    dynamic += usize::from(is_dyn);
                }
            }
            let undecidable = total < policy.absolute_min;
            BoxVerdict {
                index,
                dynamic_count: dynamic,
                total_count: total,
                is_moving: undecidable || dynamic > policy.cutoff(total),
                undecidable,
            }
        })
        .collect();
    DynamicVerdict {
        per_point: flags.to_vec(),
        per_box,
    }
}

/// Union of the full rectangles of every moving box.
pub fn build_mask(width: usize, height: usize, verdict: &DynamicVerdict, boxes: &[BoundingBox]) -> Mask {
    let mut mask = Mask::empty(width, height);
    for v in verdict.per_box.iter().filter(|v| v.is_moving) {
        let Some(b) = boxes.get(v.index) else { continue };
        let (x0, x1, y0, y1) = b.pixel_span(width, height);
        for y in y0..y1 {
            for x in x0..x1 {
                mask.set(x, y, true);
            }
        }
    }
    mask
}

/// Whether points are judged on raw displacement or on deviation from the
/// background model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionMode {
    Compensated,
    RawDisplacement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectConfig {
    /// Pixels.
    pub threshold1: f64,
    pub threshold2: Threshold2Policy,
    pub model: MotionModelKind,
    pub mode: DecisionMode,
    /// Detection classes considered potentially moving.
    pub target_classes: Vec<String>,
    pub flow: FlowConfig,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            threshold1: 1.0,
            threshold2: Threshold2Policy::default(),
            model: MotionModelKind::Affine,
            mode: DecisionMode::Compensated,
            target_classes: vec!["person".to_string()],
            flow: FlowConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub timestamp: f64,
    /// Target-class boxes, in detection order.
    pub boxes: Vec<BoundingBox>,
    /// Index of each target box in the frame's full detection list.
    pub source_indices: Vec<usize>,
    /// `None` when no model could be fit and every box fell back to moving.
    pub model: Option<BackgroundMotionModel>,
    pub tracks: Vec<FlowTrack>,
    pub verdict: DynamicVerdict,
    pub mask: Mask,
}

impl FrameResult {
    pub fn record(&self) -> VerdictRecord {
        VerdictRecord {
            t: self.timestamp,
            boxes: self
                .verdict
                .per_box
                .iter()
                .map(|v| BoxRecord {
                    idx: self.source_indices[v.index],
                    count: v.dynamic_count,
                    total: v.total_count,
                    moving: v.is_moving,
                })
                .collect(),
        }
    }
}

/// One line of the verdict log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub t: f64,
    pub boxes: Vec<BoxRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxRecord {
    pub idx: usize,
    pub count: usize,
    pub total: usize,
    pub moving: bool,
}

fn target_boxes(det: &FrameDetections, cfg: &DetectConfig) -> (Vec<BoundingBox>, Vec<usize>) {
    det.boxes
        .iter()
        .enumerate()
        .filter(|(_, b)| cfg.target_classes.contains(&b.class_label))
        .map(|(i, b)| (b.clone(), i))
        .unzip()
}

/// Every target box flagged moving, as for a frame without a usable history.
pub fn fail_safe_frame(cur: &GrayImage, det: &FrameDetections, cfg: &DetectConfig) -> FrameResult {
    let (boxes, source_indices) = target_boxes(det, cfg);
    let verdict = DynamicVerdict {
        per_point: Vec::new(),
        per_box: (0..boxes.len())
            .map(|index| BoxVerdict {
                index,
                dynamic_count: 0,
                total_count: 0,
                is_moving: true,
                undecidable: true,
            })
            .collect(),
    };
    let mask = build_mask(cur.width(), cur.height(), &verdict, &boxes);
    FrameResult {
        timestamp: det.timestamp,
        boxes,
        source_indices,
        model: None,
        tracks: Vec::new(),
        verdict,
        mask,
    }
}

/// Runs the full decision for one consecutive frame pair.
pub fn process_frame(
    prev: &GrayImage,
    cur: &GrayImage,
    det: &FrameDetections,
    cfg: &DetectConfig,
) -> Result<FrameResult, DetectError> {
    let corners = detect_corners(prev, &cfg.flow);
    let tracks = track_pyr_lk(prev, cur, &corners, &cfg.flow)?;
    let (boxes, source_indices) = target_boxes(det, cfg);

    let model = match cfg.mode {
        DecisionMode::RawDisplacement => Some(BackgroundMotionModel::identity()),
        DecisionMode::Compensated => estimate_background_motion(&tracks, &boxes, cfg.model)
            .or_else(|_| estimate_background_motion(&tracks, &boxes, MotionModelKind::Translation))
            .ok(),
    };
    let Some(model) = model else {
        let mut res = fail_safe_frame(cur, det, cfg);
        res.tracks = tracks;
        return Ok(res);
    };

    let flags = classify_points(&tracks, &model, cfg.threshold1);
    let points: Vec<Point2<f32>> = tracks.iter().map(|t| t.cur).collect();
    let verdict = classify_boxes(&boxes, &flags, &points, &cfg.threshold2);
    let mask = build_mask(cur.width(), cur.height(), &verdict, &boxes);
    Ok(FrameResult {
        timestamp: det.timestamp,
        boxes,
        source_indices,
        model: Some(model),
        tracks,
        verdict,
        mask,
    })
}

/// Processes `frames[k-1] → frames[k]` for every `k ≥ 1` in parallel; the
/// first frame gets the fail-safe verdict. `detections[k]` belongs to
/// `frames[k]`. Output order follows input order.
pub fn process_sequence(
    frames: &[GrayImage],
    detections: &[FrameDetections],
    cfg: &DetectConfig,
) -> Result<Vec<FrameResult>, DetectError> {
    assert_eq!(frames.len(), detections.len(), "one detection record per frame");
    (0..frames.len())
        .into_par_iter()
        .map(|k| {
            if k == 0 {
                Ok(fail_safe_frame(&frames[0], &detections[0], cfg))
            } else {
                process_frame(&frames[k - 1], &frames[k], &detections[k], cfg)
            }
        })
        .collect()
}
