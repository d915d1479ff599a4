use devnav_core::planning::Pose2;
use devnav_core::simulation::{
    generate_scene, run_episode, step, Mover, Outcome, RobotState, SceneParams, Shape, SimConfig, SimError, World,
};

fn open_world(goal: (f64, f64)) -> World {
    World {
        bounds: (10.0, 6.0),
        static_obstacles: vec![],
        movers: vec![],
        start: Pose2 {
            x: 1.0,
            y: 3.0,
            theta: 0.0,
        },
        goal,
        goal_radius: 0.3,
    }
}

#[test]
fn empty_world_straight_run() {
    let world = open_world((6.0, 3.0));
    let (res, log) = run_episode(&world, &SimConfig::default(), 0).unwrap();
    assert_eq!(res.outcome, Outcome::Reached);
    assert!(res.final_distance <= world.goal_radius);
    // the episode ends on entering the goal disc
    assert!(
        res.path_length >= 5.0 - world.goal_radius && res.path_length <= 5.5,
        "{}",
        res.path_length
    );
    assert_eq!(log.len(), res.steps);
}

#[test]
fn goal_inside_obstacle_is_rejected() {
    let mut world = open_world((6.0, 3.0));
    world.static_obstacles.push(Shape::Rect {
        x0: 5.5,
        y0: 2.5,
        x1: 6.5,
        y1: 3.5,
    });
    assert!(matches!(
        run_episode(&world, &SimConfig::default(), 0),
        Err(SimError::InvalidWorld(_))
    ));
}

#[test]
fn wall_collision_matches_closed_form() {
    let cfg = SimConfig::default();
    let wall = Shape::Rect {
        x0: 3.0,
        y0: 0.5,
        x1: 3.2,
        y1: 5.5,
    };
    let mut world = open_world((8.0, 3.0));
    world.static_obstacles.push(wall);
    let mut robot = RobotState {
        v: cfg.v_max,
        ..RobotState::at_rest(world.start, cfg.robot_radius)
    };
    let travel = cfg.v_max * cfg.dt;
    let expected = (1..)
        .find(|&k| wall.distance(1.0 + travel * k as f64, 3.0) - cfg.robot_radius <= 0.0)
        .unwrap();
    let mut hit_at = None;
    for k in 1..200 {
        let (next, hit) = step(&world, &robot, (cfg.v_max, 0.0), (k - 1) as f64 * cfg.dt, &cfg);
        robot = next;
        if hit {
            hit_at = Some(k);
            break;
        }
    }
    assert_eq!(hit_at, Some(expected));
}

#[test]
fn thin_wall_is_not_tunnelled() {
    let cfg = SimConfig {
        dt: 0.1,
        v_max: 1.0,
        ..SimConfig::default()
    };
    let mut world = open_world((8.0, 3.0));
    world.static_obstacles.push(Shape::Rect {
        x0: 2.0,
        y0: 0.5,
        x1: 2.001,
        y1: 5.5,
    });
    let mut robot = RobotState {
        v: 1.0,
        radius: 0.01,
        ..RobotState::at_rest(world.start, 0.01)
    };
    let mut hit = false;
    for k in 0..30 {
        let (next, h) = step(&world, &robot, (1.0, 0.0), k as f64 * 0.1, &cfg);
        robot = next;
        if h {
            hit = true;
            break;
        }
    }
    assert!(hit);
    assert!(robot.x < 2.1);
}

fn corridor() -> World {
    World {
        bounds: (10.0, 3.0),
        static_obstacles: vec![],
        movers: vec![Mover {
            shape: Shape::Circle {
                cx: 0.0,
                cy: 0.0,
                r: 0.25,
            },
            waypoints: vec![(5.0, 0.5), (5.0, 2.5)],
            speed: 0.3,
            phase: 0.0,
        }],
        start: Pose2 {
            x: 1.0,
            y: 1.5,
            theta: 0.0,
        },
        goal: (9.0, 1.5),
        goal_radius: 0.3,
    }
}

#[test]
fn corridor_with_crossing_mover() {
    let world = corridor();
    let cfg = SimConfig::default();
    let (a, log_a) = run_episode(&world, &cfg, 7).unwrap();
    let (b, log_b) = run_episode(&world, &cfg, 7).unwrap();
    assert_eq!(a.outcome, Outcome::Reached);
    assert!(a.min_clearance > 0.0);
    assert_eq!(a, b);
    assert_eq!(log_a, log_b);
    let other = run_episode(&world, &cfg, 8).unwrap().1;
    assert_ne!(log_a, other);
}

#[test]
fn scene_generation() {
    let empty = generate_scene(
        3,
        &SceneParams {
            n_obstacles: 0,
            n_movers: 0,
            ..SceneParams::default()
        },
    )
    .unwrap();
    assert!(empty.static_obstacles.is_empty() && empty.movers.is_empty());
    assert_eq!(
        generate_scene(5, &SceneParams::default()),
        generate_scene(5, &SceneParams::default())
    );

    for seed in 0..100 {
        let params = SceneParams::default();
        let w = generate_scene(seed, &params).unwrap();
        assert_eq!(w.static_obstacles.len(), params.n_obstacles);
        assert_eq!(w.movers.len(), params.n_movers);
        let clearance = w
            .static_obstacles
            .iter()
            .map(|s| s.distance(w.goal.0, w.goal.1))
            .fold(f64::INFINITY, f64::min);
        assert!(clearance >= 1.0 - 1e-9, "seed {seed}: {clearance}");
        assert!(w.validate(params.robot_radius).is_ok());
    }
}

#[test]
fn outcome_invariants() {
    let cfg = SimConfig {
        max_steps: 600,
        ..SimConfig::default()
    };
    for seed in 0..12 {
        let w = generate_scene(seed, &SceneParams::default()).unwrap();
        let (r, log) = run_episode(&w, &cfg, seed).unwrap();
        match r.outcome {
            Outcome::Reached => assert!(r.final_distance <= w.goal_radius),
            Outcome::Collided => assert!(r.min_clearance <= 0.0),
            Outcome::Timeout => assert_eq!(r.steps, cfg.max_steps),
        }
        assert_eq!(log.len(), r.steps);
        for rec in &log {
            assert!(rec.v.abs() <= cfg.v_max && rec.w.abs() <= cfg.w_max);
        }
    }
}
