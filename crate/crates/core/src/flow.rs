//! Shi–Tomasi corner selection and sparse pyramidal Lucas–Kanade tracking.

use nalgebra::{Point2, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::GrayImage;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("invalid flow config: {0}")]
    InvalidConfig(String),
    #[error("image size mismatch: {prev_w}x{prev_h} vs {cur_w}x{cur_h}")]
    DimensionMismatch {
        prev_w: usize,
        prev_h: usize,
        cur_w: usize,
        cur_h: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub max_corners: usize,
    /// Fraction of the strongest corner response a candidate must reach.
    pub quality_level: f64,
    /// Minimum pixel distance between returned corners.
    pub min_distance: f64,
    /// Total pyramid levels including the full-resolution one.
    pub pyramid_levels: usize,
    /// Odd LK window side, in pixels.
    pub window: usize,
    pub max_iterations: usize,
    /// Per-iteration step (pixels) below which LK stops.
    pub epsilon: f64,
    /// Floor on the per-pixel minimum eigenvalue of the LK gradient matrix.
    pub min_eigen: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            max_corners: 1250,
            quality_level: 0.01,
            min_distance: 7.0,
            pyramid_levels: 3,
            window: 21,
            max_iterations: 30,
            epsilon: 0.01,
            min_eigen: 1e-2,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<(), FlowError> {
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(FlowError::InvalidConfig(format!(
                "window must be odd and >= 3, got {}",
                self.window
            )));
        }
        if self.pyramid_levels < 1 {
            return Err(FlowError::InvalidConfig("pyramid_levels must be >= 1".into()));
        }
        if !(self.quality_level > 0.0 && self.quality_level < 1.0) {
            return Err(FlowError::InvalidConfig(format!(
                "quality_level must lie in (0, 1), got {}",
                self.quality_level
            )));
        }
        if !(self.min_distance >= 0.0) || !(self.epsilon > 0.0) || !(self.min_eigen >= 0.0) {
            return Err(FlowError::InvalidConfig(
                "min_distance, epsilon and min_eigen must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// A feature point followed from the previous frame into the current one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowTrack {
    pub prev: Point2<f32>,
    pub cur: Point2<f32>,
    pub tracked: bool,
    pub residual: f32,
}

impl FlowTrack {
    pub fn displacement(&self) -> Vector2<f32> {
        self.cur - self.prev
    }
}

/// Single-channel float raster with clamp-to-edge access.
#[derive(Debug, Clone)]
pub(crate) struct Plane {
    w: usize,
    h: usize,
    data: Vec<f32>,
}

impl Plane {
    fn from_gray(img: &GrayImage) -> Self {
        Plane {
            w: img.width(),
            h: img.height(),
            data: img.pixels().iter().map(|v| *v as f32).collect(),
        }
    }

    #[inline]
    fn at(&self, x: isize, y: isize) -> f32 {
        let xi = x.clamp(0, self.w as isize - 1) as usize;
        let yi = y.clamp(0, self.h as isize - 1) as usize;
        self.data[yi * self.w + xi]
    }

    /// Fills `out` (row-major, `side × side`) with bilinear samples on the
    /// integer lattice anchored at `(x0, y0)`. All samples share the same
    /// fractional weights.
    fn sample_patch(&self, x0: f32, y0: f32, side: usize, out: &mut [f32]) {
        let fx = x0.floor();
        let fy = y0.floor();
        let ax = x0 - fx;
        let ay = y0 - fy;
        let (w00, w10, w01, w11) = ((1.0 - ax) * (1.0 - ay), ax * (1.0 - ay), (1.0 - ax) * ay, ax * ay);
        let (bx, by) = (fx as isize, fy as isize);
        let (w, h, side_i) = (self.w as isize, self.h as isize, side as isize);
        let inside = bx >= 0 && by >= 0 && bx + side_i < w && by + side_i < h;
        for r in 0..side {
            let y = by + r as isize;
            let row = &mut out[r * side..(r + 1) * side];
            if inside {
                let base0 = y as usize * self.w + bx as usize;
                let base1 = base0 + self.w;
                for (c, o) in row.iter_mut().enumerate() {
                    let i = base0 + c;
                    let j = base1 + c;
                    *o = w00 * self.data[i] + w10 * self.data[i + 1] + w01 * self.data[j] + w11 * self.data[j + 1];
                }
            } else {
                for (c, o) in row.iter_mut().enumerate() {
                    let x = bx + c as isize;
                    *o = w00 * self.at(x, y)
                        + w10 * self.at(x + 1, y)
                        + w01 * self.at(x, y + 1)
                        + w11 * self.at(x + 1, y + 1);
                }
            }
        }
    }

    /// 5-tap binomial blur followed by 2× decimation.
    fn pyr_down(&self) -> Plane {
        const K: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
        let (w, h) = (self.w, self.h);
        let nw = w.div_ceil(2);
        let nh = h.div_ceil(2);
        // horizontal pass only at kept columns
        let mut tmp = vec![0.0f32; nw * h];
        for y in 0..h {
            for nx in 0..nw {
                let x = (nx * 2) as isize;
                let mut acc = 0.0;
                for (k, kv) in K.iter().enumerate() {
                    acc += kv * self.at(x + k as isize - 2, y as isize);
                }
                tmp[y * nw + nx] = acc;
            }
        }
        let mut data = vec![0.0f32; nw * nh];
        for ny in 0..nh {
            let y = (ny * 2) as isize;
            for nx in 0..nw {
                let mut acc = 0.0;
                for (k, kv) in K.iter().enumerate() {
                    let yy = (y + k as isize - 2).clamp(0, h as isize - 1) as usize;
                    acc += kv * tmp[yy * nw + nx];
                }
                data[ny * nw + nx] = acc;
            }
        }
        Plane { w: nw, h: nh, data }
    }
}

fn build_pyramid(img: &GrayImage, levels: usize) -> Vec<Plane> {
    let mut pyr = vec![Plane::from_gray(img)];
    while pyr.len() < levels {
        let next = pyr.last().expect("non-empty").pyr_down();
        pyr.push(next);
    }
    pyr
}

/// Minimum-eigenvalue (Shi–Tomasi) response map using Sobel gradients and a
/// 3×3 structure-tensor window.
fn min_eigen_response(img: &GrayImage) -> Vec<f32> {
    let p = Plane::from_gray(img);
    let (w, h) = (p.w, p.h);
    let mut ixx = vec![0.0f32; w * h];
    let mut ixy = vec![0.0f32; w * h];
    let mut iyy = vec![0.0f32; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (p.at(x + 1, y - 1) + 2.0 * p.at(x + 1, y) + p.at(x + 1, y + 1))
                - (p.at(x - 1, y - 1) + 2.0 * p.at(x - 1, y) + p.at(x - 1, y + 1));
            let gy = (p.at(x - 1, y + 1) + 2.0 * p.at(x, y + 1) + p.at(x + 1, y + 1))
                - (p.at(x - 1, y - 1) + 2.0 * p.at(x, y - 1) + p.at(x + 1, y - 1));
            let (gx, gy) = (gx / 8.0, gy / 8.0);
            let i = y as usize * w + x as usize;
            ixx[i] = gx * gx;
            ixy[i] = gx * gy;
            iyy[i] = gy * gy;
        }
    }
    let box3 = |src: &[f32]| -> Vec<f32> {
        let at =
            |x: isize, y: isize| src[y.clamp(0, h as isize - 1) as usize * w + x.clamp(0, w as isize - 1) as usize];
        let mut out = vec![0.0f32; w * h];
        for y in 0..h as isize {
            for x in 0..w as isize {
                let mut s = 0.0;
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        s += at(x + dx, y + dy);
                    }
                }
                out[y as usize * w + x as usize] = s;
            }
        }
        out
    };
    let (sxx, sxy, syy) = (box3(&ixx), box3(&ixy), box3(&iyy));
    sxx.iter()
        .zip(&sxy)
        .zip(&syy)
        .map(|((a, b), c)| {
            let half_tr = 0.5 * (a + c);
            let diff = 0.5 * (a - c);
            (half_tr - (diff * diff + b * b).sqrt()).max(0.0)
        })
        .collect()
}

/// Strongest well-separated Shi–Tomasi corners, strongest first.
pub fn detect_corners(img: &GrayImage, cfg: &FlowConfig) -> Vec<Point2<f32>> {
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 || cfg.max_corners == 0 {
        return Vec::new();
    }
    let resp = min_eigen_response(img);
    let max = resp.iter().copied().fold(0.0f32, f32::max);
    if max <= 1e-6 {
        return Vec::new();
    }
    let thresh = (cfg.quality_level as f32) * max;

    let mut candidates: Vec<(f32, usize, usize)> = Vec::new();
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let v = resp[y * w + x];
            if v <= thresh {
                continue;
            }
            let mut is_max = true;
            'nb: for dy in [-1isize, 0, 1] {
                for dx in [-1isize, 0, 1] {
                    let n = resp[(y as isize + dy) as usize * w + (x as isize + dx) as usize];
                    if n > v {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                candidates.push((v, x, y));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.2.cmp(&b.2)).then(a.1.cmp(&b.1)));

    let min_d = cfg.min_distance;
    let cell = min_d.max(1.0);
    let gw = (w as f64 / cell).ceil() as usize + 1;
    let gh = (h as f64 / cell).ceil() as usize + 1;
    let mut grid: Vec<Vec<(f64, f64)>> = vec![Vec::new(); gw * gh];
    let mut out = Vec::new();
    for (_, x, y) in candidates {
        let (xf, yf) = (x as f64, y as f64);
        let cx = (xf / cell) as usize;
        let cy = (yf / cell) as usize;
        let mut ok = true;
        if min_d > 0.0 {
            'search: for gy in cy.saturating_sub(1)..=(cy + 1).min(gh - 1) {
                for gx in cx.saturating_sub(1)..=(cx + 1).min(gw - 1) {
                    for &(px, py) in &grid[gy * gw + gx] {
                        if (px - xf).powi(2) + (py - yf).powi(2) < min_d * min_d {
                            ok = false;
                            break 'search;
                        }
                    }
                }
            }
        }
        if ok {
            grid[cy * gw + cx].push((xf, yf));
            out.push(Point2::new(x as f32, y as f32));
            if out.len() >= cfg.max_corners {
                break;
            }
        }
    }
    out
}

/// Tracks `points` from `prev` into `cur`, coarse to fine. Results are in
/// input order.
pub fn track_pyr_lk(
    prev: &GrayImage,
    cur: &GrayImage,
    points: &[Point2<f32>],
    cfg: &FlowConfig,
) -> Result<Vec<FlowTrack>, FlowError> {
    cfg.validate()?;
    if prev.width() != cur.width() || prev.height() != cur.height() {
        return Err(FlowError::DimensionMismatch {
            prev_w: prev.width(),
            prev_h: prev.height(),
            cur_w: cur.width(),
            cur_h: cur.height(),
        });
    }
    let (prev_pyr, cur_pyr) = rayon::join(
        || build_pyramid(prev, cfg.pyramid_levels),
        || build_pyramid(cur, cfg.pyramid_levels),
    );
    Ok(points
        .par_iter()
        .map(|p| track_point(*p, &prev_pyr, &cur_pyr, cfg))
        .collect())
}

fn track_point(p: Point2<f32>, prev_pyr: &[Plane], cur_pyr: &[Plane], cfg: &FlowConfig) -> FlowTrack {
    let win = cfg.window;
    let half = (win / 2) as f32;
    let n = win * win;
    let ext = win + 2;
    let mut ext_patch = vec![0.0f32; ext * ext];
    let mut tmpl = vec![0.0f32; n];
    let mut gx = vec![0.0f32; n];
    let mut gy = vec![0.0f32; n];
    let mut warped = vec![0.0f32; n];
    let eps = cfg.epsilon as f32;
    let lost = FlowTrack {
        prev: p,
        cur: p,
        tracked: false,
        residual: 0.0,
    };

    let mut guess = Vector2::<f32>::zeros();
    let mut residual = 0.0f32;
    for level in (0..prev_pyr.len()).rev() {
        let scale = 1.0 / (1u32 << level) as f32;
        let pl = p.coords * scale;
        let (prev_l, cur_l) = (&prev_pyr[level], &cur_pyr[level]);

        prev_l.sample_patch(pl.x - half - 1.0, pl.y - half - 1.0, ext, &mut ext_patch);
        let (mut sxx, mut sxy, mut syy) = (0.0f32, 0.0f32, 0.0f32);
        for r in 0..win {
            for c in 0..win {
                let e = (r + 1) * ext + (c + 1);
                let i = r * win + c;
                tmpl[i] = ext_patch[e];
                gx[i] = 0.5 * (ext_patch[e + 1] - ext_patch[e - 1]);
                gy[i] = 0.5 * (ext_patch[e + ext] - ext_patch[e - ext]);
                sxx += gx[i] * gx[i];
                sxy += gx[i] * gy[i];
                syy += gy[i] * gy[i];
            }
        }
        let det = sxx * syy - sxy * sxy;
        let min_eig = 0.5 * (sxx + syy) - (0.25 * (sxx - syy).powi(2) + sxy * sxy).sqrt();
        if min_eig / (n as f32) < cfg.min_eigen as f32 || det <= f32::EPSILON {
            if level == 0 {
                return lost;
            }
            guess *= 2.0;
            continue;
        }

        let mut v = Vector2::<f32>::zeros();
        let (wl, hl) = (cur_l.w as f32, cur_l.h as f32);
        for _ in 0..cfg.max_iterations {
            let q = pl + guess + v;
            if !(q.x >= 0.0 && q.y >= 0.0 && q.x <= wl - 1.0 && q.y <= hl - 1.0) {
                if level == 0 {
                    return lost;
                }
                v = Vector2::zeros();
                break;
            }
            cur_l.sample_patch(q.x - half, q.y - half, win, &mut warped);
            let (mut bx, mut by) = (0.0f32, 0.0f32);
            for i in 0..n {
                let diff = tmpl[i] - warped[i];
                bx += diff * gx[i];
                by += diff * gy[i];
            }
            let step = Vector2::new((syy * bx - sxy * by) / det, (sxx * by - sxy * bx) / det);
            v += step;
            if step.norm() < eps {
                break;
            }
        }

        if level > 0 {
            guess = 2.0 * (guess + v);
        } else {
            guess += v;
            let q = pl + guess;
            if !(q.x >= 0.0 && q.y >= 0.0 && q.x <= wl - 1.0 && q.y <= hl - 1.0) {
                return lost;
            }
            cur_l.sample_patch(q.x - half, q.y - half, win, &mut warped);
            residual = tmpl.iter().zip(&warped).map(|(a, b)| (a - b) * (a - b)).sum();
        }
    }
    FlowTrack {
        prev: p,
        cur: p + guess,
        tracked: true,
        residual,
    }
}
