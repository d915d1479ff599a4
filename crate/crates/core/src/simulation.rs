//! Deterministic 2-D world with static and moving obstacles and a unicycle
//! robot driven by A* waypoints and VFH+ steering.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::planning::{
    astar, wrap_angle, Cell, OccupancyGrid, PlanningError, Pose2, SteeringDecision, VfhConfig, VfhState,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid world: {0}")]
    InvalidWorld(String),
    #[error("scene placement failed: {0}")]
    PlacementFailure(String),
    #[error(transparent)]
    Planning(#[from] PlanningError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    Circle { cx: f64, cy: f64, r: f64 },
}

impl Shape {
    /// Euclidean distance from a point to the shape, zero inside.
    pub fn distance(&self, px: f64, py: f64) -> f64 {
        match *self {
            Shape::Rect { x0, y0, x1, y1 } => {
                let dx = (x0 - px).max(0.0).max(px - x1);
                let dy = (y0 - py).max(0.0).max(py - y1);
                dx.hypot(dy)
            }
            Shape::Circle { cx, cy, r } => ((px - cx).hypot(py - cy) - r).max(0.0),
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Shape {
        match *self {
            Shape::Rect { x0, y0, x1, y1 } => Shape::Rect {
                x0: x0 + dx,
                y0: y0 + dy,
                x1: x1 + dx,
                y1: y1 + dy,
            },
            Shape::Circle { cx, cy, r } => Shape::Circle {
                cx: cx + dx,
                cy: cy + dy,
                r,
            },
        }
    }

    /// `(xmin, ymin, xmax, ymax)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        match *self {
            Shape::Rect { x0, y0, x1, y1 } => (x0, y0, x1, y1),
            Shape::Circle { cx, cy, r } => (cx - r, cy - r, cx + r, cy + r),
        }
    }

    fn is_valid(&self) -> bool {
        match *self {
            Shape::Rect { x0, y0, x1, y1 } => x0 < x1 && y0 < y1,
            Shape::Circle { r, .. } => r > 0.0,
        }
    }
}

/// An obstacle moving at constant speed around a closed waypoint loop. The
/// shape is given relative to the mover's reference point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mover {
    pub shape: Shape,
    pub waypoints: Vec<(f64, f64)>,
    /// m/s.
    pub speed: f64,
    /// Arc-length offset along the loop at t = 0, meters.
    #[serde(default)]
    pub phase: f64,
}

impl Mover {
    pub fn loop_length(&self) -> f64 {
        let n = self.waypoints.len();
        (0..n)
            .map(|i| {
                let (a, b) = (self.waypoints[i], self.waypoints[(i + 1) % n]);
                (b.0 - a.0).hypot(b.1 - a.1)
            })
            .sum()
    }

    pub fn position_at(&self, t: f64) -> (f64, f64) {
        let n = self.waypoints.len();
        let total = self.loop_length();
        if n == 0 {
            return (0.0, 0.0);
        }
        if total <= 0.0 {
            return self.waypoints[0];
        }
        let mut s = (self.phase + self.speed * t).rem_euclid(total);
        for i in 0..n {
            let (a, b) = (self.waypoints[i], self.waypoints[(i + 1) % n]);
            let len = (b.0 - a.0).hypot(b.1 - a.1);
            if s <= len && len > 0.0 {
                let f = s / len;
                return (a.0 + f * (b.0 - a.0), a.1 + f * (b.1 - a.1));
            }
            s -= len;
        }
        self.waypoints[0]
    }

    pub fn shape_at(&self, t: f64) -> Shape {
        let (x, y) = self.position_at(t);
        self.shape.translated(x, y)
    }
}

/// World spanning `[0, width] × [0, height]` meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub bounds: (f64, f64),
    pub static_obstacles: Vec<Shape>,
    pub movers: Vec<Mover>,
    pub start: Pose2,
    pub goal: (f64, f64),
    pub goal_radius: f64,
}

impl World {
    pub fn validate(&self, robot_radius: f64) -> Result<(), SimError> {
        let (w, h) = self.bounds;
        if !(w > 0.0 && h > 0.0) {
            return Err(SimError::InvalidWorld("bounds must be positive".into()));
        }
        let inside = |x: f64, y: f64| x >= 0.0 && y >= 0.0 && x <= w && y <= h;
        if !inside(self.goal.0, self.goal.1) {
            return Err(SimError::InvalidWorld("goal outside bounds".into()));
        }
        for s in &self.static_obstacles {
            let (x0, y0, x1, y1) = s.bounds();
            if !s.is_valid() || !inside(x0, y0) || !inside(x1, y1) {
                return Err(SimError::InvalidWorld(format!(
                    "obstacle {s:?} invalid or outside bounds"
                )));
            }
            if s.distance(self.goal.0, self.goal.1) <= 0.0 {
                return Err(SimError::InvalidWorld("goal inside an obstacle".into()));
            }
        }
        for m in &self.movers {
            if m.waypoints.is_empty() || !m.shape.is_valid() || !(m.speed >= 0.0) {
                return Err(SimError::InvalidWorld(
                    "mover needs waypoints, a valid shape and speed ≥ 0".into(),
                ));
            }
        }
        if self.clearance(self.start.x, self.start.y, robot_radius, 0.0) <= 0.0 {
            return Err(SimError::InvalidWorld("start pose is in collision".into()));
        }
        Ok(())
    }

    /// Signed gap between the robot disc and the nearest obstacle or boundary
    /// at time `t`; `≤ 0` is a collision.
    pub fn clearance(&self, x: f64, y: f64, radius: f64, t: f64) -> f64 {
        let (w, h) = self.bounds;
        let mut d = x.min(y).min(w - x).min(h - y);
        for s in &self.static_obstacles {
            d = d.min(s.distance(x, y));
        }
        for m in &self.movers {
            d = d.min(m.shape_at(t).distance(x, y));
        }
        d - radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub w: f64,
    pub radius: f64,
}

impl RobotState {
    pub fn at_rest(pose: Pose2, radius: f64) -> Self {
        Self {
            x: pose.x,
            y: pose.y,
            theta: pose.theta,
            v: 0.0,
            w: 0.0,
            radius,
        }
    }

    pub fn pose(&self) -> Pose2 {
        Pose2 {
            x: self.x,
            y: self.y,
            theta: self.theta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Seconds.
    pub dt: f64,
    pub v_max: f64,
    pub w_max: f64,
    /// m/s².
    pub a_max: f64,
    /// rad/s².
    pub alpha_max: f64,
    pub robot_radius: f64,
    /// Grid cell size, meters.
    pub resolution: f64,
    /// Heading gain.
    pub k_w: f64,
    /// Distance between consecutive A* waypoints, meters.
    pub waypoint_spacing: f64,
    /// Consecutive blocked steps that force a replan.
    pub replan_blocked_steps: usize,
    /// Static-obstacle distance below which speed is scaled down, meters.
    pub slow_distance: f64,
    /// Longest travel between collision checks, meters.
    pub max_substep: f64,
    /// Seconds of predicted mover motion stamped into the local map.
    pub mover_horizon: f64,
    pub max_steps: usize,
    pub vfh: VfhConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            v_max: 0.8,
            w_max: 1.5,
            a_max: 1.0,
            alpha_max: 4.0,
            robot_radius: 0.25,
            resolution: 0.1,
            k_w: 2.0,
            waypoint_spacing: 0.5,
            replan_blocked_steps: 3,
            slow_distance: 0.8,
            max_substep: 0.05,
            mover_horizon: 1.5,
            max_steps: 2400,
            vfh: VfhConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("dt", self.dt),
            ("v_max", self.v_max),
            ("w_max", self.w_max),
            ("a_max", self.a_max),
            ("alpha_max", self.alpha_max),
            ("robot_radius", self.robot_radius),
            ("resolution", self.resolution),
            ("waypoint_spacing", self.waypoint_spacing),
            ("max_substep", self.max_substep),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SimError::InvalidWorld(format!("{name} must be positive, got {v}")));
            }
        }
        self.vfh.validate()?;
        Ok(())
    }
}

/// Applies acceleration then speed limits to `(v_cmd, w_cmd)`, integrates the
/// unicycle in substeps of at most `max_substep` meters and reports whether
/// the disc touched anything during the step. `t` is the time at the start.
pub fn step(world: &World, robot: &RobotState, command: (f64, f64), t: f64, cfg: &SimConfig) -> (RobotState, bool) {
    let dt = cfg.dt;
    let dv = cfg.a_max * dt;
    let dw = cfg.alpha_max * dt;
    let v = command.0.clamp(robot.v - dv, robot.v + dv).clamp(-cfg.v_max, cfg.v_max);
    let w = command.1.clamp(robot.w - dw, robot.w + dw).clamp(-cfg.w_max, cfg.w_max);
    let n = ((v.abs() * dt / cfg.max_substep).ceil() as usize).max(1);
    let h = dt / n as f64;
    let mut next = RobotState { v, w, ..*robot };
    let mut collided = false;
    for i in 1..=n {
        next.x += v * next.theta.cos() * h;
        next.y += v * next.theta.sin() * h;
        next.theta = wrap_angle(next.theta + w * h);
        if world.clearance(next.x, next.y, next.radius, t + i as f64 * h) <= 0.0 {
            collided = true;
            break;
        }
    }
    (next, collided)
}

/// Cells within half a cell of a shape, and a one-cell ring along the bounds.
pub fn rasterize_static(world: &World, resolution: f64) -> Result<OccupancyGrid, SimError> {
    let w = (world.bounds.0 / resolution).ceil() as usize;
    let h = (world.bounds.1 / resolution).ceil() as usize;
    let mut grid = OccupancyGrid::new(w, h, resolution)?;
    for r in 0..h {
        for c in 0..w {
            if r == 0 || c == 0 || r + 1 == h || c + 1 == w {
                grid.set((c, r), 1.0);
            }
        }
    }
    for s in &world.static_obstacles {
        stamp(&mut grid, s);
    }
    Ok(grid)
}

pub fn stamp(grid: &mut OccupancyGrid, shape: &Shape) {
    let res = grid.resolution();
    let (x0, y0, x1, y1) = shape.bounds();
    let c0 = ((x0 / res).floor() - 1.0).max(0.0) as usize;
    let r0 = ((y0 / res).floor() - 1.0).max(0.0) as usize;
    let c1 = (((x1 / res).ceil() + 1.0).max(0.0) as usize).min(grid.width());
    let r1 = (((y1 / res).ceil() + 1.0).max(0.0) as usize).min(grid.height());
    for r in r0..r1 {
        for c in c0..c1 {
            let (cx, cy) = grid.cell_center((c, r));
            if shape.distance(cx, cy) <= res / 2.0 {
                grid.set((c, r), 1.0);
            }
        }
    }
}

fn nearest_free(grid: &OccupancyGrid, cell: Cell, threshold: f64) -> Option<Cell> {
    let max_r = grid.width().max(grid.height()) as isize;
    let (c, r) = (cell.0 as isize, cell.1 as isize);
    for ring in 0..max_r {
        let mut best: Option<(isize, Cell)> = None;
        for dr in -ring..=ring {
            for dc in -ring..=ring {
                if dr.abs().max(dc.abs()) != ring {
                    continue;
                }
                let (nc, nr) = (c + dc, r + dr);
                if nc < 0 || nr < 0 || nc as usize >= grid.width() || nr as usize >= grid.height() {
                    continue;
                }
                let cand = (nc as usize, nr as usize);
                if grid.get(cand) < threshold {
                    let d2 = dc * dc + dr * dr;
                    if best.is_none_or(|(bd, _)| d2 < bd) {
                        best = Some((d2, cand));
                    }
                }
            }
        }
        if let Some((_, cand)) = best {
            return Some(cand);
        }
    }
    None
}

/// A* on the inflated grid between the free cells nearest to `from` and
/// `goal`; returns world waypoints ending at `goal`.
pub fn plan_waypoints(
    grid: &OccupancyGrid,
    from: (f64, f64),
    goal: (f64, f64),
    cfg: &SimConfig,
) -> Result<Vec<(f64, f64)>, SimError> {
    let thr = cfg.vfh.occupied_threshold;
    let inflated = grid.inflate(cfg.robot_radius + cfg.vfh.safety_margin, thr);
    let cell_of = |p: (f64, f64)| {
        let c = ((p.0 / grid.resolution()).floor().max(0.0) as usize).min(grid.width() - 1);
        let r = ((p.1 / grid.resolution()).floor().max(0.0) as usize).min(grid.height() - 1);
        (c, r)
    };
    let s = nearest_free(&inflated, cell_of(from), thr).ok_or(PlanningError::NoPath)?;
    let g = nearest_free(&inflated, cell_of(goal), thr).ok_or(PlanningError::NoPath)?;
    let path = astar(&inflated, s, g, thr)?;
    let stride = ((cfg.waypoint_spacing / grid.resolution()).round() as usize).max(1);
    let mut wps: Vec<(f64, f64)> = path
        .cells
        .iter()
        .skip(stride)
        .step_by(stride)
        .map(|&c| grid.cell_center(c))
        .collect();
    wps.push(goal);
    Ok(wps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Reached,
    Collided,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub outcome: Outcome,
    pub steps: usize,
    /// Meters.
    pub path_length: f64,
    pub min_clearance: f64,
    pub replans: usize,
    pub final_distance: f64,
}

/// One line of the step log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub w: f64,
    pub heading: f64,
    pub blocked: bool,
    pub replanned: bool,
}

/// Applies seed-dependent phase offsets to every mover.
pub fn seeded_world(world: &World, seed: u64) -> World {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = world.clone();
    for m in &mut out.movers {
        let len = m.loop_length();
        if len > 0.0 {
            m.phase += rng.gen_range(0.0..len);
        }
    }
    out
}

fn command_for(decision: &SteeringDecision, robot: &RobotState, target: f64, near: f64, cfg: &SimConfig) -> (f64, f64) {
    if decision.blocked {
        return (
            0.0,
            (cfg.k_w * wrap_angle(target - robot.theta)).clamp(-cfg.w_max, cfg.w_max),
        );
    }
    let err = wrap_angle(decision.heading - robot.theta);
    let w = (cfg.k_w * err).clamp(-cfg.w_max, cfg.w_max);
    let mut v = cfg.v_max * err.cos().max(0.0);
    if decision.valley.1 < cfg.vfh.s_max {
        v *= (decision.valley.1 as f64 / cfg.vfh.s_max as f64).max(0.5);
    }
    v *= ((near - robot.radius) / cfg.slow_distance).clamp(0.25, 1.0);
    (v, w)
}

/// Runs one episode; the seed only shifts mover phases.
pub fn run_episode(world: &World, cfg: &SimConfig, seed: u64) -> Result<(EpisodeResult, Vec<StepRecord>), SimError> {
    cfg.validate()?;
    world.validate(cfg.robot_radius)?;
    let world = seeded_world(world, seed);
    let static_grid = rasterize_static(&world, cfg.resolution)?;
    let grid_at = |t: f64| {
        let mut g = static_grid.clone();
        let n = (cfg.mover_horizon / cfg.dt).ceil() as usize;
        for m in &world.movers {
            for i in 0..=n {
                stamp(&mut g, &m.shape_at(t + i as f64 * cfg.dt));
            }
        }
        g
    };

    let mut robot = RobotState::at_rest(world.start, cfg.robot_radius);
    let mut waypoints = plan_waypoints(&static_grid, (robot.x, robot.y), world.goal, cfg)?;
    let mut wp = 0usize;
    let mut vfh = VfhState::default();
    let mut blocked_run = 0usize;
    let mut log = Vec::new();
    let mut result = EpisodeResult {
        outcome: Outcome::Timeout,
        steps: 0,
        path_length: 0.0,
        min_clearance: world.clearance(robot.x, robot.y, robot.radius, 0.0),
        replans: 0,
        final_distance: (robot.x - world.goal.0).hypot(robot.y - world.goal.1),
    };

    for k in 0..cfg.max_steps {
        let t = k as f64 * cfg.dt;
        let grid = grid_at(t);
        while wp + 1 < waypoints.len() && dist((robot.x, robot.y), waypoints[wp]) < cfg.waypoint_spacing {
            wp += 1;
        }
        let mut replanned = false;
        if blocked_run >= cfg.replan_blocked_steps
            || dist((robot.x, robot.y), waypoints[wp]) > 2.0 * cfg.waypoint_spacing
        {
            // movers included; fall back to the static map if they seal the way
            waypoints = plan_waypoints(&grid, (robot.x, robot.y), world.goal, cfg)
                .or_else(|_| plan_waypoints(&static_grid, (robot.x, robot.y), world.goal, cfg))?;
            wp = 0;
            while wp + 1 < waypoints.len() && dist((robot.x, robot.y), waypoints[wp]) < cfg.waypoint_spacing {
                wp += 1;
            }
            blocked_run = 0;
            replanned = true;
            result.replans += 1;
        }

        let (tx, ty) = waypoints[wp];
        let target = (ty - robot.y).atan2(tx - robot.x);
        let min_turn = robot.v.abs() / cfg.w_max;
        let decision = vfh.steer(&grid, robot.pose(), min_turn, target, &cfg.vfh)?;
        blocked_run = if decision.blocked { blocked_run + 1 } else { 0 };
        let near = nearest_obstacle(&static_grid, &robot, cfg.slow_distance + robot.radius);
        let cmd = command_for(&decision, &robot, target, near, cfg);

        let (next, collided) = step(&world, &robot, cmd, t, cfg);
        result.path_length += dist((robot.x, robot.y), (next.x, next.y));
        robot = next;
        result.steps = k + 1;
        let t_next = t + cfg.dt;
        result.min_clearance = result
            .min_clearance
            .min(world.clearance(robot.x, robot.y, robot.radius, t_next));
        result.final_distance = dist((robot.x, robot.y), world.goal);
        log.push(StepRecord {
            t: t_next,
            x: robot.x,
            y: robot.y,
            theta: robot.theta,
            v: robot.v,
            w: robot.w,
            heading: decision.heading,
            blocked: decision.blocked,
            replanned,
        });
        if collided {
            result.outcome = Outcome::Collided;
            result.min_clearance = result.min_clearance.min(0.0);
            break;
        }
        if result.final_distance <= world.goal_radius {
            result.outcome = Outcome::Reached;
            break;
        }
    }
    Ok((result, log))
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

fn nearest_obstacle(grid: &OccupancyGrid, robot: &RobotState, cap: f64) -> f64 {
    let res = grid.resolution();
    let k = (cap / res).ceil() as isize;
    let Some((c, r)) = grid.world_to_cell(robot.x, robot.y) else {
        return 0.0;
    };
    let mut best = cap;
    for dr in -k..=k {
        for dc in -k..=k {
            let (nc, nr) = (c as isize + dc, r as isize + dr);
            if nc < 0 || nr < 0 || nc as usize >= grid.width() || nr as usize >= grid.height() {
                continue;
            }
            if grid.get((nc as usize, nr as usize)) >= 0.5 {
                let (cx, cy) = grid.cell_center((nc as usize, nr as usize));
                best = best.min((cx - robot.x).hypot(cy - robot.y));
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneParams {
    pub n_obstacles: usize,
    pub n_movers: usize,
    pub bounds: (f64, f64),
    /// Meters between the goal point and the nearest static obstacle.
    pub min_goal_clearance: f64,
    pub goal_radius: f64,
    pub robot_radius: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            n_obstacles: 10,
            n_movers: 2,
            bounds: (10.0, 10.0),
            min_goal_clearance: 1.0,
            goal_radius: 0.3,
            robot_radius: 0.25,
        }
    }
}

const PLACEMENT_TRIES: usize = 2000;
const START_CLEARANCE: f64 = 1.0;

/// Rejection-samples a scene. When obstacles are requested, the first one is
/// placed with its surface exactly `min_goal_clearance` from the goal; the
/// rest keep at least that clearance.
pub fn generate_scene(seed: u64, params: &SceneParams) -> Result<World, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = params.bounds;
    if !(w >= 4.0 && h >= 4.0) {
        return Err(SimError::PlacementFailure("bounds must be at least 4 m × 4 m".into()));
    }
    let start = Pose2 {
        x: rng.gen_range(0.8..1.5),
        y: rng.gen_range(1.0..h - 1.0),
        theta: 0.0,
    };
    let goal = (rng.gen_range(w - 2.5..w - 1.0), rng.gen_range(1.0..h - 1.0));
    let start_goal = dist((start.x, start.y), goal);
    let cfg = SimConfig {
        robot_radius: params.robot_radius,
        ..SimConfig::default()
    };

    for _ in 0..PLACEMENT_TRIES {
        let mut obstacles: Vec<Shape> = Vec::new();
        let mut tries = 0;
        while obstacles.len() < params.n_obstacles && tries < PLACEMENT_TRIES {
            tries += 1;
            let shape = if obstacles.is_empty() {
                near_goal_obstacle(&mut rng, goal, params.min_goal_clearance)
            } else {
                random_obstacle(&mut rng, w, h)
            };
            let (x0, y0, x1, y1) = shape.bounds();
            let inside = x0 >= 0.1 && y0 >= 0.1 && x1 <= w - 0.1 && y1 <= h - 0.1;
            if inside
                && shape.distance(start.x, start.y) >= START_CLEARANCE
                && shape.distance(goal.0, goal.1) >= params.min_goal_clearance - 1e-9
            {
                obstacles.push(shape);
            }
        }
        if obstacles.len() < params.n_obstacles {
            continue;
        }
        let movers = (0..params.n_movers)
            .map(|_| random_mover(&mut rng, w, h, (start.x, start.y), goal))
            .collect();
        let world = World {
            bounds: params.bounds,
            static_obstacles: obstacles,
            movers,
            start,
            goal,
            goal_radius: params.goal_radius,
        };
        let grid = rasterize_static(&world, cfg.resolution)?;
        if world.validate(params.robot_radius).is_ok()
            && start_goal > 2.0
            && plan_waypoints(&grid, (start.x, start.y), goal, &cfg).is_ok()
        {
            return Ok(world);
        }
    }
    Err(SimError::PlacementFailure(format!(
        "no valid scene after {PLACEMENT_TRIES} attempts"
    )))
}

fn near_goal_obstacle(rng: &mut ChaCha8Rng, goal: (f64, f64), clearance: f64) -> Shape {
    let dir = rng.gen_range(-PI..PI);
    let (s, c) = dir.sin_cos();
    if rng.gen_bool(0.5) {
        let r = rng.gen_range(0.2..0.5);
        let d = clearance + r;
        Shape::Circle {
            cx: goal.0 + d * c,
            cy: goal.1 + d * s,
            r,
        }
    } else {
        // nearest face perpendicular to the dominant axis of `dir`
        let (hw, hh) = (rng.gen_range(0.15..0.5), rng.gen_range(0.15..0.5));
        if c.abs() >= s.abs() {
            let cx = goal.0 + c.signum() * (clearance + hw);
            let cy = goal.1 + rng.gen_range(-hh..hh);
            Shape::Rect {
                x0: cx - hw,
                y0: cy - hh,
                x1: cx + hw,
                y1: cy + hh,
            }
        } else {
            let cy = goal.1 + s.signum() * (clearance + hh);
            let cx = goal.0 + rng.gen_range(-hw..hw);
            Shape::Rect {
                x0: cx - hw,
                y0: cy - hh,
                x1: cx + hw,
                y1: cy + hh,
            }
        }
    }
}

fn random_obstacle(rng: &mut ChaCha8Rng, w: f64, h: f64) -> Shape {
    if rng.gen_bool(0.5) {
        let r = rng.gen_range(0.2..0.5);
        Shape::Circle {
            cx: rng.gen_range(r..w - r),
            cy: rng.gen_range(r..h - r),
            r,
        }
    } else {
        let (sw, sh) = (rng.gen_range(0.3..1.0), rng.gen_range(0.3..1.0));
        let (x0, y0) = (rng.gen_range(0.0..w - sw), rng.gen_range(0.0..h - sh));
        Shape::Rect {
            x0,
            y0,
            x1: x0 + sw,
            y1: y0 + sh,
        }
    }
}

fn random_mover(rng: &mut ChaCha8Rng, w: f64, h: f64, start: (f64, f64), goal: (f64, f64)) -> Mover {
    // back-and-forth across the field, away from start and goal
    loop {
        let vertical = rng.gen_bool(0.5);
        let (a, b) = if vertical {
            let x = rng.gen_range(3.0..w - 3.0);
            ((x, 1.0), (x, h - 1.0))
        } else {
            let y = rng.gen_range(1.5..h - 1.5);
            ((2.5, y), (w - 3.0, y))
        };
        let seg = |p: (f64, f64)| point_segment_distance(p, a, b);
        if seg(start) > 1.2 && seg(goal) > 1.2 {
            return Mover {
                shape: Shape::Circle {
                    cx: 0.0,
                    cy: 0.0,
                    r: rng.gen_range(0.2..0.3),
                },
                waypoints: vec![a, b],
                speed: rng.gen_range(0.2..0.4),
                phase: 0.0,
            };
        }
    }
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    dist(p, (a.0 + t * dx, a.1 + t * dy))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open_world() -> World {
        World {
            bounds: (10.0, 6.0),
            static_obstacles: vec![],
            movers: vec![],
            start: Pose2 {
                x: 1.0,
                y: 3.0,
                theta: 0.0,
            },
            goal: (6.0, 3.0),
            goal_radius: 0.3,
        }
    }

    #[test]
    fn shape_distances() {
        let r = Shape::Rect {
            x0: 0.0,
            y0: 0.0,
            x1: 2.0,
            y1: 1.0,
        };
        assert_eq!(r.distance(1.0, 0.5), 0.0);
        assert_eq!(r.distance(5.0, 0.5), 3.0);
        assert_eq!(r.distance(5.0, 5.0), 5.0);
        let c = Shape::Circle {
            cx: 0.0,
            cy: 0.0,
            r: 1.0,
        };
        assert_eq!(c.distance(3.0, 0.0), 2.0);
        assert_eq!(c.distance(0.5, 0.0), 0.0);
    }

    #[test]
    fn mover_loop() {
        let m = Mover {
            shape: Shape::Circle {
                cx: 0.0,
                cy: 0.0,
                r: 0.2,
            },
            waypoints: vec![(0.0, 0.0), (2.0, 0.0)],
            speed: 1.0,
            phase: 0.0,
        };
        assert_eq!(m.loop_length(), 4.0);
        assert_eq!(m.position_at(0.5), (0.5, 0.0));
        assert_eq!(m.position_at(3.0), (1.0, 0.0));
        assert_eq!(m.position_at(4.5), (0.5, 0.0));
    }

    #[test]
    fn idle_robot_stays_put() {
        let w = open_world();
        let r = RobotState::at_rest(w.start, 0.25);
        let (n, hit) = step(&w, &r, (0.0, 0.0), 0.0, &SimConfig::default());
        assert_eq!(n, r);
        assert!(!hit);
    }

    #[test]
    fn straight_motion_closed_form() {
        let cfg = SimConfig {
            dt: 0.1,
            v_max: 1.0,
            ..SimConfig::default()
        };
        let w = open_world();
        let r = RobotState {
            v: 1.0,
            ..RobotState::at_rest(w.start, 0.25)
        };
        let (n, hit) = step(&w, &r, (1.0, 0.0), 0.0, &cfg);
        assert!(!hit);
        assert!((n.x - r.x - 0.1).abs() < 1e-12);
        assert_eq!(n.y, r.y);
        assert_eq!(n.theta, 0.0);
    }

    #[test]
    fn limits_are_applied() {
        let cfg = SimConfig::default();
        let w = open_world();
        let r = RobotState::at_rest(w.start, 0.25);
        let (n, _) = step(&w, &r, (5.0, -9.0), 0.0, &cfg);
        assert!((n.v - cfg.a_max * cfg.dt).abs() < 1e-15);
        assert!((n.w + cfg.alpha_max * cfg.dt).abs() < 1e-15);
        let fast = RobotState { v: 0.8, w: 1.5, ..r };
        let (n, _) = step(&w, &fast, (5.0, 5.0), 0.0, &cfg);
        assert_eq!((n.v, n.w), (cfg.v_max, cfg.w_max));
    }

    #[test]
    fn invalid_worlds() {
        let mut w = open_world();
        w.static_obstacles.push(Shape::Circle {
            cx: 6.0,
            cy: 3.0,
            r: 0.5,
        });
        assert!(matches!(
            run_episode(&w, &SimConfig::default(), 0),
            Err(SimError::InvalidWorld(_))
        ));
        let mut w = open_world();
        w.static_obstacles.push(Shape::Circle {
            cx: 1.0,
            cy: 3.1,
            r: 0.2,
        });
        assert!(matches!(w.validate(0.25), Err(SimError::InvalidWorld(_))));
    }

    #[test]
    fn raster_has_walls() {
        let g = rasterize_static(&open_world(), 0.1).unwrap();
        assert_eq!((g.width(), g.height()), (100, 60));
        assert_eq!(g.get((0, 30)), 1.0);
        assert_eq!(g.get((50, 30)), 0.0);
    }
}
