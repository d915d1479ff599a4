//! TUM RGB-D style trajectories and image indexes, timestamp association,
//! JSON-lines detections, and binary PGM images/masks.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Pose;

/// Default maximum timestamp gap (seconds) when pairing two streams.
pub const DEFAULT_MAX_DIFF: f64 = 0.02;

/// Tolerance added to gap comparisons, well below TUM's microsecond precision.
const TIMESTAMP_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatasetError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: timestamp {current} does not increase (previous {previous})")]
    Order { line: usize, previous: f64, current: f64 },
    #[error("bad image format: {0}")]
    Format(String),
}

impl DatasetError {
    pub fn line(&self) -> Option<usize> {
        match self {
            DatasetError::Parse { line, .. } | DatasetError::Order { line, .. } => Some(*line),
            DatasetError::Format(_) => None,
        }
    }

    fn parse(line: usize, reason: impl Into<String>) -> Self {
        DatasetError::Parse {
            line,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StampedPose {
    pub timestamp: f64,
    pub pose: Pose,
}

/// Timestamp-ordered sequence of poses.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    entries: Vec<StampedPose>,
}

impl Trajectory {
    /// Fails with [`DatasetError::Order`] (line = 1-based entry index) if the
    /// timestamps are not strictly increasing.
    pub fn new(entries: Vec<StampedPose>) -> Result<Self, DatasetError> {
        for (i, w) in entries.windows(2).enumerate() {
            if !(w[1].timestamp > w[0].timestamp) {
                return Err(DatasetError::Order {
                    line: i + 2,
                    previous: w[0].timestamp,
                    current: w[1].timestamp,
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[StampedPose] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.timestamp).collect()
    }

    pub fn poses(&self) -> Vec<Pose> {
        self.entries.iter().map(|e| e.pose).collect()
    }

    /// Keeps only the entries at `indices` (which must be increasing).
    pub fn select(&self, indices: impl IntoIterator<Item = usize>) -> Trajectory {
        Trajectory {
            entries: indices.into_iter().map(|i| self.entries[i]).collect(),
        }
    }
}

fn parse_f64(field: &str, line: usize, what: &str) -> Result<f64, DatasetError> {
    let v: f64 = field
        .parse()
        .map_err(|_| DatasetError::parse(line, format!("{what}: cannot parse {field:?} as a number")))?;
    if !v.is_finite() {
        return Err(DatasetError::parse(line, format!("{what}: non-finite value")));
    }
    Ok(v)
}

/// Parses `timestamp tx ty tz qx qy qz qw` lines; `#` comments and blank
/// lines are skipped.
pub fn parse_trajectory(text: &str) -> Result<Trajectory, DatasetError> {
    let mut entries: Vec<StampedPose> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|f| !f.is_empty())
            .collect();
        if fields.len() != 8 {
            return Err(DatasetError::parse(
                line,
                format!(
                    "expected 8 fields (timestamp tx ty tz qx qy qz qw), found {}",
                    fields.len()
                ),
            ));
        }
        const NAMES: [&str; 8] = ["timestamp", "tx", "ty", "tz", "qx", "qy", "qz", "qw"];
        let mut v = [0.0; 8];
        for (k, f) in fields.iter().enumerate() {
            v[k] = parse_f64(f, line, NAMES[k])?;
        }
        let pose = Pose::from_wxyz(v[7], v[4], v[5], v[6], Vector3::new(v[1], v[2], v[3]))
            .ok_or_else(|| DatasetError::parse(line, "zero quaternion"))?;
        if let Some(prev) = entries.last() {
            if !(v[0] > prev.timestamp) {
                return Err(DatasetError::Order {
                    line,
                    previous: prev.timestamp,
                    current: v[0],
                });
            }
        }
        entries.push(StampedPose { timestamp: v[0], pose });
    }
    Ok(Trajectory { entries })
}

/// Canonical TUM serialization (shortest round-trip float formatting).
pub fn write_trajectory(traj: &Trajectory) -> String {
    let mut out = String::from("# timestamp tx ty tz qx qy qz qw\n");
    for e in traj.entries() {
        let t = e.pose.translation();
        let [w, x, y, z] = e.pose.wxyz();
        let _ = writeln!(out, "{} {} {} {} {} {} {} {}", e.timestamp, t.x, t.y, t.z, x, y, z, w);
    }
    out
}

/// One entry of a TUM image index (`rgb.txt` / `depth.txt`).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageIndexEntry {
    pub timestamp: f64,
    pub path: String,
}

pub fn parse_image_index(text: &str) -> Result<Vec<ImageIndexEntry>, DatasetError> {
    let mut out: Vec<ImageIndexEntry> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let mut it = content.split_whitespace();
        let (Some(ts), Some(path), None) = (it.next(), it.next(), it.next()) else {
            return Err(DatasetError::parse(line, "expected `timestamp path`"));
        };
        let timestamp = parse_f64(ts, line, "timestamp")?;
        if let Some(prev) = out.last() {
            if !(timestamp > prev.timestamp) {
                return Err(DatasetError::Order {
                    line,
                    previous: prev.timestamp,
                    current: timestamp,
                });
            }
        }
        out.push(ImageIndexEntry {
            timestamp,
            path: path.to_string(),
        });
    }
    Ok(out)
}

pub fn write_image_index(entries: &[ImageIndexEntry]) -> String {
    let mut out = String::from("# timestamp filename\n");
    for e in entries {
        let _ = writeln!(out, "{} {}", e.timestamp, e.path);
    }
    out
}

/// Greedy nearest-timestamp matching of two ascending streams.
///
/// Candidate pairs with `|a_i − b_j| ≤ max_diff` are accepted in order of
/// increasing gap; a pair is skipped if either element is already matched or
/// if it would cross an accepted pair. The result is sorted by `a` index and
/// is monotone in both indices.
pub fn associate(a: &[f64], b: &[f64], max_diff: f64) -> Vec<(usize, usize)> {
    // decimal timestamps: 0.02 must admit 1.02 - 1.0
    let max_diff = max_diff + TIMESTAMP_SLACK;
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, &ta) in a.iter().enumerate() {
        let lo = b.partition_point(|&tb| tb < ta - max_diff);
        for (j, &tb) in b.iter().enumerate().skip(lo) {
            let diff = (ta - tb).abs();
            if tb > ta + max_diff {
                break;
            }
            if diff <= max_diff {
                candidates.push((diff, i, j));
            }
        }
    }
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));

    let mut accepted: BTreeMap<usize, usize> = BTreeMap::new();
    let mut used_b: HashSet<usize> = HashSet::new();
    for (_, i, j) in candidates {
        if accepted.contains_key(&i) || used_b.contains(&j) {
            continue;
        }
        if let Some((_, &jp)) = accepted.range(..i).next_back() {
            if jp > j {
                continue;
            }
        }
        if let Some((_, &jn)) = accepted.range(i + 1..).next() {
            if jn < j {
                continue;
            }
        }
        accepted.insert(i, j);
        used_b.insert(j);
    }
    accepted.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundingBox {
    #[serde(rename = "cls")]
    pub class_label: String,
    pub score: f64,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    /// Boundary-inclusive point membership.
    pub fn contains(&self, px: f64, py: f64) -> bool {
        px >= self.x && px <= self.x + self.w && py >= self.y && py <= self.y + self.h
    }

    /// Pixel columns/rows `[x0, x1) × [y0, y1)` covered by the box, limited
    /// to a `width × height` raster.
    pub fn pixel_span(&self, width: usize, height: usize) -> (usize, usize, usize, usize) {
        let clampf = |v: f64, hi: usize| v.max(0.0).min(hi as f64) as usize;
        let x0 = clampf(self.x.floor(), width);
        let y0 = clampf(self.y.floor(), height);
        let x1 = clampf((self.x + self.w).ceil(), width);
        let y1 = clampf((self.y + self.h).ceil(), height);
        (x0, x1.max(x0), y0, y1.max(y0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameDetections {
    #[serde(rename = "t")]
    pub timestamp: f64,
    pub boxes: Vec<BoundingBox>,
}

impl FrameDetections {
    /// Intersects every box with the image rectangle. Boxes that end up with
    /// no area are dropped. Returns the number of boxes changed or dropped.
    pub fn clamp_to(&mut self, width: usize, height: usize) -> usize {
        let (wf, hf) = (width as f64, height as f64);
        let mut events = 0;
        self.boxes.retain_mut(|b| {
            let x0 = b.x.max(0.0);
            let y0 = b.y.max(0.0);
            let x1 = (b.x + b.w).min(wf);
            let y1 = (b.y + b.h).min(hf);
            if x0 != b.x || y0 != b.y || x1 != b.x + b.w || y1 != b.y + b.h {
                events += 1;
                if x1 <= x0 || y1 <= y0 {
                    return false;
                }
                b.x = x0;
                b.y = y0;
                b.w = x1 - x0;
                b.h = y1 - y0;
            }
            true
        });
        events
    }
}

/// Parses JSON-lines detections; records are returned ordered by timestamp.
pub fn parse_detections(text: &str) -> Result<Vec<FrameDetections>, DatasetError> {
    let mut frames = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.trim();
        if content.is_empty() {
            continue;
        }
        let frame: FrameDetections =
            serde_json::from_str(content).map_err(|e| DatasetError::parse(line, e.to_string()))?;
        if !frame.timestamp.is_finite() {
            return Err(DatasetError::parse(line, "non-finite timestamp"));
        }
        for (k, b) in frame.boxes.iter().enumerate() {
            if !(b.w > 0.0 && b.h > 0.0) {
                return Err(DatasetError::parse(
                    line,
                    format!("box {k}: width and height must be positive"),
                ));
            }
            if !(0.0..=1.0).contains(&b.score) {
                return Err(DatasetError::parse(
                    line,
                    format!("box {k}: score {} outside [0, 1]", b.score),
                ));
            }
            if !(b.x.is_finite() && b.y.is_finite()) {
                return Err(DatasetError::parse(line, format!("box {k}: non-finite corner")));
            }
        }
        frames.push(frame);
    }
    frames.sort_by(|a: &FrameDetections, b| a.timestamp.total_cmp(&b.timestamp));
    Ok(frames)
}

pub fn write_detections(frames: &[FrameDetections]) -> String {
    let mut out = String::new();
    for f in frames {
        out.push_str(&serde_json::to_string(f).expect("detections serialize"));
        out.push('\n');
    }
    out
}

/// Clamps every frame to the image and returns the total clamp-event count.
pub fn clamp_detections(frames: &mut [FrameDetections], width: usize, height: usize) -> usize {
    frames.iter_mut().map(|f| f.clamp_to(width, height)).sum()
}

/// Row-major 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, DatasetError> {
        if pixels.len() != width * height {
            return Err(DatasetError::Format(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self { width, height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }
}

/// Per-pixel mask, `true` = masked (dynamic).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, DatasetError> {
        if bits.len() != width * height {
            return Err(DatasetError::Format(format!(
                "{} bits for a {width}x{height} mask",
                bits.len()
            )));
        }
        Ok(Self { width, height, bits })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }
}

struct PgmHeader {
    width: usize,
    height: usize,
    maxval: usize,
    data_offset: usize,
}

fn parse_pgm_header(bytes: &[u8]) -> Result<PgmHeader, DatasetError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(DatasetError::Format("missing P5 magic".into()));
    }
    let mut pos = 2;
    let mut values = [0usize; 3];
    for v in values.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|c| *c != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|c| c.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err(DatasetError::Format("truncated or malformed header".into()));
        }
        let s = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *v = s
            .parse()
            .map_err(|_| DatasetError::Format(format!("header value {s} out of range")))?;
    }
    match bytes.get(pos) {
        Some(c) if c.is_ascii_whitespace() => pos += 1,
        _ => return Err(DatasetError::Format("missing whitespace after header".into())),
    }
    let [width, height, maxval] = values;
    if width == 0 || height == 0 {
        return Err(DatasetError::Format(format!("invalid dimensions {width}x{height}")));
    }
    if maxval == 0 || maxval > 255 {
        return Err(DatasetError::Format(format!("unsupported maxval {maxval}")));
    }
    Ok(PgmHeader {
        width,
        height,
        maxval,
        data_offset: pos,
    })
}

/// Decodes a binary (P5) 8-bit PGM.
pub fn read_gray_image(bytes: &[u8]) -> Result<GrayImage, DatasetError> {
    let h = parse_pgm_header(bytes)?;
    let n = h
        .width
        .checked_mul(h.height)
        .ok_or_else(|| DatasetError::Format("dimensions overflow".into()))?;
    let data = &bytes[h.data_offset..];
    if data.len() < n {
        return Err(DatasetError::Format(format!(
            "expected {n} pixel bytes, found {}",
            data.len()
        )));
    }
    if let Some(v) = data[..n].iter().find(|v| **v as usize > h.maxval) {
        return Err(DatasetError::Format(format!(
            "pixel value {v} exceeds maxval {}",
            h.maxval
        )));
    }
    GrayImage::new(h.width, h.height, data[..n].to_vec())
}

pub fn write_gray_image(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

/// Encodes a mask as P5 with 0 = keep and 255 = masked.
pub fn write_mask(mask: &Mask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width, mask.height).into_bytes();
    out.extend(mask.bits.iter().map(|b| if *b { 255u8 } else { 0 }));
    out
}

/// Any nonzero pixel reads back as masked.
pub fn read_mask(bytes: &[u8]) -> Result<Mask, DatasetError> {
    let img = read_gray_image(bytes)?;
    Ok(Mask {
        width: img.width,
        height: img.height,
        bits: img.pixels.iter().map(|v| *v != 0).collect(),
    })
}
