use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::grid::OccupancyGrid;
use super::PlanningError;

/// Wraps to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

pub fn angle_diff(a: f64, b: f64) -> f64 {
    wrap_angle(a - b).abs()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VfhConfig {
    pub sectors: usize,
    /// Meters.
    pub window_radius: f64,
    pub robot_radius: f64,
    pub safety_margin: f64,
    /// Magnitude of a fully certain cell at the robot position.
    pub density_peak: f64,
    pub tau_low: f64,
    pub tau_high: f64,
    /// Valley width, in sectors, from which a valley counts as wide.
    pub s_max: usize,
    /// Weights on the distance to target, current heading and previous choice.
    pub mu: [f64; 3],
    /// Cells at or above this certainty limit the turning range.
    pub occupied_threshold: f64,
}

impl Default for VfhConfig {
    fn default() -> Self {
        Self {
            sectors: 72,
            window_radius: 2.0,
            robot_radius: 0.25,
            safety_margin: 0.1,
            density_peak: 1000.0,
            tau_low: 2000.0,
            tau_high: 4000.0,
            s_max: 16,
            mu: [5.0, 2.0, 2.0],
            occupied_threshold: 0.5,
        }
    }
}

impl VfhConfig {
    pub fn validate(&self) -> Result<(), PlanningError> {
        if self.sectors < 4 {
            return Err(PlanningError::InvalidConfig("at least 4 sectors required".into()));
        }
        if !(self.window_radius > 0.0) {
            return Err(PlanningError::InvalidConfig("window_radius must be positive".into()));
        }
        if self.tau_low > self.tau_high {
            return Err(PlanningError::InvalidThresholds {
                low: self.tau_low,
                high: self.tau_high,
            });
        }
        Ok(())
    }

    pub fn enlarged_radius(&self) -> f64 {
        self.robot_radius + self.safety_margin
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistogramStage {
    Primary,
    Binary,
    Masked,
}

/// Sector `k` is centred on world angle `k · 2π / n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarHistogram {
    pub sectors: Vec<f64>,
    pub stage: HistogramStage,
}

impl PolarHistogram {
    pub fn zeros(n: usize, stage: HistogramStage) -> Self {
        Self {
            sectors: vec![0.0; n],
            stage,
        }
    }

    pub fn len(&self) -> usize {
        self.sectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sectors.is_empty()
    }

    pub fn sector_width(&self) -> f64 {
        TAU / self.sectors.len() as f64
    }

    pub fn sector_angle(&self, k: usize) -> f64 {
        wrap_angle(k as f64 * self.sector_width())
    }

    /// Sector whose centre is nearest to `angle`.
    pub fn sector_of(&self, angle: f64) -> usize {
        let n = self.sectors.len();
        ((angle.rem_euclid(TAU) / self.sector_width()).round() as usize) % n
    }

    pub fn is_free(&self, k: usize) -> bool {
        self.sectors[k] == 0.0
    }
}

/// Robot pose in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

/// Adds `magnitude` to every sector overlapping `[direction − spread, direction + spread]`.
fn add_span(hist: &mut PolarHistogram, direction: f64, spread: f64, magnitude: f64) {
    let n = hist.len();
    let alpha = hist.sector_width();
    let reach = spread + alpha / 2.0;
    if reach >= PI {
        for s in hist.sectors.iter_mut() {
            *s += magnitude;
        }
        return;
    }
    let lo = ((direction - reach) / alpha).floor() as i64;
    let hi = ((direction + reach) / alpha).ceil() as i64;
    for k in lo..=hi {
        let idx = k.rem_euclid(n as i64) as usize;
        if angle_diff(idx as f64 * alpha, direction) < reach {
            hist.sectors[idx] += magnitude;
        }
    }
}

/// Certainty-weighted obstacle density around the robot, with each cell
/// enlarged by the robot radius plus safety margin.
pub fn build_polar_histogram(grid: &OccupancyGrid, robot: Pose2, cfg: &VfhConfig) -> PolarHistogram {
    let mut hist = PolarHistogram::zeros(cfg.sectors, HistogramStage::Primary);
    let r = cfg.window_radius;
    let a = cfg.density_peak;
    let b = a / (r * r);
    let rs = cfg.enlarged_radius();
    let res = grid.resolution();
    let c0 = (((robot.x - r) / res).floor().max(0.0)) as usize;
    let r0 = (((robot.y - r) / res).floor().max(0.0)) as usize;
    let c1 = (((robot.x + r) / res).ceil().max(0.0) as usize).min(grid.width());
    let r1 = (((robot.y + r) / res).ceil().max(0.0) as usize).min(grid.height());
    for row in r0..r1 {
        for col in c0..c1 {
            let c = grid.get((col, row));
            if c <= 0.0 {
                continue;
            }
            let (cx, cy) = grid.cell_center((col, row));
            let (dx, dy) = (cx - robot.x, cy - robot.y);
            let d = dx.hypot(dy);
            if d >= r {
                continue;
            }
            let m = c * c * (a - b * d * d);
            let spread = if d <= rs { PI / 2.0 } else { (rs / d).asin() };
            add_span(&mut hist, dy.atan2(dx), spread, m);
        }
    }
    hist
}

/// Hysteresis thresholding: above `tau_high` blocks, below `tau_low` frees,
/// in between keeps the previous value (blocked when there is none).
pub fn binarize_histogram(
    primary: &PolarHistogram,
    previous: Option<&PolarHistogram>,
    tau_low: f64,
    tau_high: f64,
) -> Result<PolarHistogram, PlanningError> {
    if tau_low > tau_high {
        return Err(PlanningError::InvalidThresholds {
            low: tau_low,
            high: tau_high,
        });
    }
    let sectors = primary
        .sectors
        .iter()
        .enumerate()
        .map(|(k, &d)| {
            if d > tau_high {
                1.0
            } else if d < tau_low {
                0.0
            } else {
                previous.and_then(|p| p.sectors.get(k).copied()).unwrap_or(1.0)
            }
        })
        .collect();
    Ok(PolarHistogram {
        sectors,
        stage: HistogramStage::Binary,
    })
}

/// Angular limits, relative to the robot heading, reachable without
/// touching an obstacle on the left or right turning circle. `None` means
/// that side is unconstrained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurnLimits {
    pub left: Option<f64>,
    pub right: Option<f64>,
}

impl TurnLimits {
    pub fn allows(&self, relative: f64) -> bool {
        self.left.is_none_or(|l| relative < l) && self.right.is_none_or(|r| relative > r)
    }
}

pub fn turn_limits(robot: Pose2, min_turn_radius: f64, obstacles: &[(f64, f64)], cfg: &VfhConfig) -> TurnLimits {
    let r = min_turn_radius.max(0.0);
    let (s, c) = robot.theta.sin_cos();
    let left_c = (robot.x - r * s, robot.y + r * c);
    let right_c = (robot.x + r * s, robot.y - r * c);
    let reach = r + cfg.enlarged_radius();
    let mut limits = TurnLimits {
        left: None,
        right: None,
    };
    for &(ox, oy) in obstacles {
        let rel = wrap_angle((oy - robot.y).atan2(ox - robot.x) - robot.theta);
        if rel >= 0.0 && (ox - left_c.0).hypot(oy - left_c.1) < reach {
            limits.left = Some(limits.left.map_or(rel, |l: f64| l.min(rel)));
        }
        if rel <= 0.0 && (ox - right_c.0).hypot(oy - right_c.1) < reach {
            limits.right = Some(limits.right.map_or(rel, |l: f64| l.max(rel)));
        }
    }
    limits
}

/// Centres of cells within the active window at or above the occupancy threshold.
pub fn window_obstacles(grid: &OccupancyGrid, robot: Pose2, cfg: &VfhConfig) -> Vec<(f64, f64)> {
    let r = cfg.window_radius;
    let res = grid.resolution();
    let c0 = (((robot.x - r) / res).floor().max(0.0)) as usize;
    let r0 = (((robot.y - r) / res).floor().max(0.0)) as usize;
    let c1 = (((robot.x + r) / res).ceil().max(0.0) as usize).min(grid.width());
    let r1 = (((robot.y + r) / res).ceil().max(0.0) as usize).min(grid.height());
    let mut out = Vec::new();
    for row in r0..r1 {
        for col in c0..c1 {
            if grid.get((col, row)) < cfg.occupied_threshold {
                continue;
            }
            let (cx, cy) = grid.cell_center((col, row));
            if (cx - robot.x).hypot(cy - robot.y) < r {
                out.push((cx, cy));
            }
        }
    }
    out
}

/// Blocks every sector outside the turning limits; never frees a sector.
pub fn mask_histogram(
    binary: &PolarHistogram,
    robot: Pose2,
    min_turn_radius: f64,
    obstacles: &[(f64, f64)],
    cfg: &VfhConfig,
) -> PolarHistogram {
    let limits = turn_limits(robot, min_turn_radius, obstacles, cfg);
    let sectors = (0..binary.len())
        .map(|k| {
            let rel = wrap_angle(binary.sector_angle(k) - robot.theta);
            if binary.sectors[k] != 0.0 || !limits.allows(rel) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    PolarHistogram {
        sectors,
        stage: HistogramStage::Masked,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteeringDecision {
    /// World-frame radians; meaningless when `blocked`.
    pub heading: f64,
    /// First sector and width of the chosen valley.
    pub valley: (usize, usize),
    pub blocked: bool,
}

/// Maximal circular runs of free sectors as `(start, width)`. A fully free
/// histogram is one valley `(0, n)`.
pub fn valleys(hist: &PolarHistogram) -> Vec<(usize, usize)> {
    let n = hist.len();
    let Some(anchor) = (0..n).find(|&k| !hist.is_free(k)) else {
        return if n == 0 { Vec::new() } else { vec![(0, n)] };
    };
    let mut out = Vec::new();
    let mut i = 1;
    while i <= n {
        let k = (anchor + i) % n;
        if hist.is_free(k) {
            let start = k;
            let mut width = 0;
            while i <= n && hist.is_free((anchor + i) % n) {
                width += 1;
                i += 1;
            }
            out.push((start, width));
        } else {
            i += 1;
        }
    }
    out.sort_unstable();
    out
}

/// Candidate headings for one valley.
pub fn valley_candidates(hist: &PolarHistogram, valley: (usize, usize), target: f64, s_max: usize) -> Vec<f64> {
    let n = hist.len();
    let alpha = hist.sector_width();
    let (start, width) = valley;
    if width == n {
        return vec![target];
    }
    let base = start as f64 * alpha;
    if width >= s_max {
        let half = (s_max / 2) as f64;
        let right = half;
        let left = (width - 1) as f64 - half;
        let mut out = vec![wrap_angle(base + right * alpha), wrap_angle(base + left * alpha)];
        let t = (target - base).rem_euclid(TAU) / alpha;
        if t >= right && t <= left {
            out.push(target);
        }
        out
    } else {
        vec![wrap_angle(base + (width - 1) as f64 / 2.0 * alpha)]
    }
}

pub fn candidate_cost(candidate: f64, target: f64, heading: f64, previous: f64, mu: [f64; 3]) -> f64 {
    mu[0] * angle_diff(candidate, target)
        + mu[1] * angle_diff(candidate, heading)
        + mu[2] * angle_diff(candidate, previous)
}

/// Chooses the cheapest candidate over all valleys. `previous` defaults to
/// the current heading.
pub fn select_steering(
    masked: &PolarHistogram,
    target: f64,
    heading: f64,
    previous: Option<f64>,
    cfg: &VfhConfig,
) -> SteeringDecision {
    // (cost, gap to target, sector, direction, valley)
    type Ranked = (f64, f64, usize, f64, (usize, usize));
    let prev = previous.unwrap_or(heading);
    let mut best: Option<Ranked> = None;
    for v in valleys(masked) {
        for c in valley_candidates(masked, v, target, cfg.s_max) {
            let cost = candidate_cost(c, target, heading, prev, cfg.mu);
            let key = (cost, angle_diff(c, target), masked.sector_of(c));
            let better = match &best {
                None => true,
                Some((bc, bt, bs, _, _)) => key
                    .0
                    .total_cmp(bc)
                    .then(key.1.total_cmp(bt))
                    .then(key.2.cmp(bs))
                    .is_lt(),
            };
            if better {
                best = Some((key.0, key.1, key.2, c, v));
            }
        }
    }
    match best {
        Some((_, _, _, c, v)) => SteeringDecision {
            heading: c,
            valley: v,
            blocked: false,
        },
        None => SteeringDecision {
            heading,
            valley: (0, 0),
            blocked: true,
        },
    }
}

/// Per-robot steering memory: the last binary histogram and heading choice.
#[derive(Debug, Clone, Default)]
pub struct VfhState {
    pub previous_binary: Option<PolarHistogram>,
    pub previous_choice: Option<f64>,
}

impl VfhState {
    pub fn steer(
        &mut self,
        grid: &OccupancyGrid,
        robot: Pose2,
        min_turn_radius: f64,
        target: f64,
        cfg: &VfhConfig,
    ) -> Result<SteeringDecision, PlanningError> {
        let primary = build_polar_histogram(grid, robot, cfg);
        let binary = binarize_histogram(&primary, self.previous_binary.as_ref(), cfg.tau_low, cfg.tau_high)?;
        let obstacles = window_obstacles(grid, robot, cfg);
        let masked = mask_histogram(&binary, robot, min_turn_radius, &obstacles, cfg);
        let decision = select_steering(&masked, target, robot.theta, self.previous_choice, cfg);
        self.previous_binary = Some(binary);
        if !decision.blocked {
            self.previous_choice = Some(decision.heading);
        }
        Ok(decision)
    }
}
