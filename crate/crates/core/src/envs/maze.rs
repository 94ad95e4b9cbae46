//! Continuous maze with unicycle kinematics and a ray-cast RGB-depth sensor.
//!
//! The robot is a point. Moves are resolved one axis at a time and clamped to
//! the face of whatever they would penetrate, so contact slides along walls
//! and obstacles instead of stopping.

use std::f64::consts::{FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};

use super::scene::{Box2, Scene};
use super::{ActionSpec, Environment, Step};
use crate::error::{Error, Result};
use crate::net::Action;
use crate::numerics::Rng;

/// Rectangle from which an obstacle center is drawn uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Region {
    fn sample(&self, rng: &mut Rng) -> (f64, f64) {
        (
            rng.uniform_range(self.x.0, self.x.1),
            rng.uniform_range(self.y.0, self.y.1),
        )
    }
}

/// Ray fan geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sensor {
    pub rays: usize,
    /// Total field of view in radians.
    pub fov: f64,
    pub max_range: f64,
}

impl Default for Sensor {
    fn default() -> Self {
        Self {
            rays: 17,
            fov: PI / 2.0,
            max_range: 15.0,
        }
    }
}

impl Sensor {
    /// Ray angle relative to the heading; index 0 is the rightmost ray.
    pub fn offset(&self, k: usize) -> f64 {
        if self.rays == 1 {
            0.0
        } else {
            -self.fov / 2.0 + self.fov * k as f64 / (self.rays - 1) as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MazeConfig {
    pub arena: f64,
    pub start: (f64, f64),
    pub heading: f64,
    pub goal: (f64, f64),
    pub speed: f64,
    pub dt: f64,
    pub horizon: usize,
    pub omega_max: f64,
    pub sensor: Sensor,
    pub obstacle_size: f64,
    pub red_region: Region,
    pub blue_region: Region,
    pub wall_color: [f64; 3],
    pub red: [f64; 3],
    pub blue: [f64; 3],
    /// Palette for the unseen-colors test: walls, red-region box, blue-region box.
    pub unseen_colors: [[f64; 3]; 3],
    /// Depth readings are divided by this before reaching the policy.
    pub depth_scale: f64,
    pub train_mazes: usize,
    pub test_mazes: usize,
}

impl Default for MazeConfig {
    fn default() -> Self {
        Self {
            arena: 10.0,
            start: (1.0, 1.0),
            heading: FRAC_PI_4,
            goal: (9.0, 9.0),
            speed: 2.0,
            dt: 0.1,
            horizon: 80,
            omega_max: PI,
            sensor: Sensor::default(),
            obstacle_size: 1.0,
            red_region: Region {
                x: (2.5, 4.5),
                y: (2.5, 4.5),
            },
            blue_region: Region {
                x: (5.5, 7.5),
                y: (5.5, 7.5),
            },
            wall_color: [0.5, 0.5, 0.5],
            red: [1.0, 0.0, 0.0],
            blue: [0.0, 0.0, 1.0],
            unseen_colors: [[0.9, 0.8, 0.1], [0.1, 0.8, 0.2], [0.7, 0.2, 0.8]],
            depth_scale: 1.0,
            train_mazes: 250,
            test_mazes: 20,
        }
    }
}

impl MazeConfig {
    pub fn obs_dim(&self) -> usize {
        4 * self.sensor.rays
    }

    /// Draws one maze: a red box in the red region and a blue box in the blue
    /// region, in that order.
    pub fn sample_scene(&self, rng: &mut Rng) -> Scene {
        let red = self.red_region.sample(rng);
        let blue = self.blue_region.sample(rng);
        Scene {
            arena: self.arena,
            start: self.start,
            heading: self.heading,
            goal: self.goal,
            wall_color: self.wall_color,
            obstacles: vec![
                Box2::centered(red, self.obstacle_size, self.red),
                Box2::centered(blue, self.obstacle_size, self.blue),
            ],
        }
    }

    pub fn swap_obstacle_colors(&self, mut scene: Scene) -> Scene {
        if scene.obstacles.len() >= 2 {
            let c0 = scene.obstacles[0].color;
            scene.obstacles[0].color = scene.obstacles[1].color;
            scene.obstacles[1].color = c0;
        }
        scene
    }

    pub fn recolor_unseen(&self, mut scene: Scene) -> Scene {
        let [wall, a, b] = self.unseen_colors;
        scene.wall_color = wall;
        for (i, o) in scene.obstacles.iter_mut().enumerate() {
            o.color = if i == 0 { a } else { b };
        }
        scene
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MazeState {
    pub position: (f64, f64),
    pub heading: f64,
}

/// What a single ray saw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub color: [f64; 3],
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RayObservation {
    pub rays: Vec<Ray>,
}

impl RayObservation {
    /// `[r, g, b, depth]` per ray, rays in sensor order.
    pub fn flatten(&self, depth_scale: f64) -> Vec<f64> {
        self.rays
            .iter()
            .flat_map(|r| [r.color[0], r.color[1], r.color[2], r.depth / depth_scale])
            .collect()
    }
}

/// Distance along `dir` from `origin` to the entry face of `b`, if the ray
/// hits it. Origins inside or on the box return 0 when heading inward.
fn ray_box(origin: (f64, f64), dir: (f64, f64), b: &Box2) -> Option<f64> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for (o, d, lo, hi) in [
        (origin.0, dir.0, b.min.0, b.max.0),
        (origin.1, dir.1, b.min.1, b.max.1),
    ] {
        if d.abs() < 1e-15 {
            if o <= lo || o >= hi {
                return None;
            }
        } else {
            let t1 = (lo - o) / d;
            let t2 = (hi - o) / d;
            t_near = t_near.max(t1.min(t2));
            t_far = t_far.min(t1.max(t2));
        }
    }
    if t_near < t_far && t_far > 0.0 {
        Some(t_near.max(0.0))
    } else {
        None
    }
}

/// Distance from an inside point to the arena boundary along `dir`.
fn ray_arena(origin: (f64, f64), dir: (f64, f64), side: f64) -> f64 {
    let mut t = f64::INFINITY;
    for (o, d) in [(origin.0, dir.0), (origin.1, dir.1)] {
        if d > 1e-15 {
            t = t.min((side - o) / d);
        } else if d < -1e-15 {
            t = t.min(-o / d);
        }
    }
    t.max(0.0)
}

/// Casts the sensor fan from `state` against the walls and obstacles of `scene`.
pub fn ray_cast(scene: &Scene, state: &MazeState, sensor: &Sensor) -> RayObservation {
    let rays = (0..sensor.rays)
        .map(|k| {
            let angle = state.heading + sensor.offset(k);
            let dir = (angle.cos(), angle.sin());
            let mut depth = ray_arena(state.position, dir, scene.arena);
            let mut color = scene.wall_color;
            for b in &scene.obstacles {
                if let Some(t) = ray_box(state.position, dir, b) {
                    if t < depth {
                        depth = t;
                        color = b.color;
                    }
                }
            }
            Ray {
                color,
                depth: depth.min(sensor.max_range),
            }
        })
        .collect();
    RayObservation { rays }
}

/// Single maze instance.
#[derive(Debug, Clone)]
pub struct MazeEnv {
    config: MazeConfig,
    scene: Scene,
    state: MazeState,
    initial_distance: f64,
    t: usize,
}

impl MazeEnv {
    pub fn new(config: MazeConfig, scene: Scene) -> Self {
        let state = MazeState {
            position: scene.start,
            heading: scene.heading,
        };
        let initial_distance = dist(scene.start, scene.goal).max(1e-12);
        Self {
            config,
            scene,
            state,
            initial_distance,
            t: 0,
        }
    }

    pub fn state(&self) -> MazeState {
        self.state
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn config(&self) -> &MazeConfig {
        &self.config
    }

    pub fn observe(&self) -> Vec<f64> {
        ray_cast(&self.scene, &self.state, &self.config.sensor).flatten(self.config.depth_scale)
    }

    /// Moves from the current position by `delta`, sliding on contact.
    fn advance(&self, delta: (f64, f64)) -> (f64, f64) {
        let side = self.scene.arena;
        let (x, y) = self.state.position;

        let mut nx = (x + delta.0).clamp(0.0, side);
        for b in &self.scene.obstacles {
            if b.contains((nx, y)) {
                nx = if delta.0 > 0.0 { b.min.0 } else { b.max.0 };
            }
        }
        let mut ny = (y + delta.1).clamp(0.0, side);
        for b in &self.scene.obstacles {
            if b.contains((nx, ny)) {
                ny = if delta.1 > 0.0 { b.min.1 } else { b.max.1 };
            }
        }
        (nx, ny)
    }
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

impl Environment for MazeEnv {
    fn obs_dim(&self) -> usize {
        self.config.obs_dim()
    }

    fn action_spec(&self) -> ActionSpec {
        ActionSpec::ContinuousScalar
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn reset(&mut self, _rng: &mut Rng) -> Vec<f64> {
        self.state = MazeState {
            position: self.scene.start,
            heading: self.scene.heading,
        };
        self.t = 0;
        self.observe()
    }

    fn cost(&self) -> f64 {
        dist(self.state.position, self.scene.goal) / self.initial_distance
    }

    fn step(&mut self, action: Action) -> Result<Step> {
        if self.t >= self.config.horizon {
            return Err(Error::HorizonExceeded {
                calls: self.t + 1,
                horizon: self.config.horizon,
            });
        }
        let omega = match action {
            Action::Continuous(w) if w.is_finite() => w.clamp(-self.config.omega_max, self.config.omega_max),
            Action::Continuous(w) => return Err(Error::InvalidAction(format!("angular velocity {w}"))),
            Action::Discrete(_) => {
                return Err(Error::InvalidAction("maze takes a continuous action".into()))
            }
        };
        let heading = wrap_angle(self.state.heading + omega * self.config.dt);
        let reach = self.config.speed * self.config.dt;
        self.state.heading = heading;
        self.state.position = self.advance((reach * heading.cos(), reach * heading.sin()));
        self.t += 1;
        Ok(Step {
            observation: self.observe(),
            cost: self.cost(),
            done: self.t == self.config.horizon,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty_scene() -> Scene {
        Scene {
            arena: 10.0,
            start: (1.0, 1.0),
            heading: 0.0,
            goal: (9.0, 9.0),
            wall_color: [0.5, 0.5, 0.5],
            obstacles: vec![],
        }
    }

    /// Marches along each ray in tiny increments until it leaves the arena or
    /// enters an obstacle.
    fn ray_cast_marching(scene: &Scene, state: &MazeState, sensor: &Sensor, step: f64) -> RayObservation {
        let rays = (0..sensor.rays)
            .map(|k| {
                let a = state.heading + sensor.offset(k);
                let (dx, dy) = (a.cos(), a.sin());
                let mut s = 0.0;
                loop {
                    let p = (state.position.0 + s * dx, state.position.1 + s * dy);
                    if s >= sensor.max_range {
                        return Ray {
                            color: scene.wall_color,
                            depth: sensor.max_range,
                        };
                    }
                    if p.0 < 0.0 || p.0 > scene.arena || p.1 < 0.0 || p.1 > scene.arena {
                        return Ray {
                            color: scene.wall_color,
                            depth: s,
                        };
                    }
                    if let Some(b) = scene.obstacles.iter().find(|b| {
                        b.min.0 <= p.0 && p.0 <= b.max.0 && b.min.1 <= p.1 && p.1 <= b.max.1
                    }) {
                        return Ray {
                            color: b.color,
                            depth: s,
                        };
                    }
                    s += step;
                }
            })
            .collect();
        RayObservation { rays }
    }

    #[test]
    fn straight_line_five_steps() {
        let mut env = MazeEnv::new(MazeConfig::default(), empty_scene());
        env.reset(&mut Rng::new(0));
        for _ in 0..5 {
            env.step(Action::Continuous(0.0)).unwrap();
        }
        let p = env.state().position;
        assert!((p.0 - 2.0).abs() < 1e-12 && (p.1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn head_on_wall_depth() {
        let scene = empty_scene();
        let state = MazeState {
            position: (7.0, 4.0),
            heading: 0.0,
        };
        let obs = ray_cast(&scene, &state, &Sensor::default());
        let center = obs.rays[8];
        assert!((center.depth - 3.0).abs() < 1e-12);
        assert_eq!(center.color, scene.wall_color);
        // 45° off center in a square room: 3/cos45
        assert!((obs.rays[0].depth - 3.0 * 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn corner_depths_bounded_by_diagonal() {
        let scene = empty_scene();
        let state = MazeState {
            position: (0.0, 0.0),
            heading: FRAC_PI_4,
        };
        for r in ray_cast(&scene, &state, &Sensor::default()).rays {
            assert!(r.depth <= 10.0 * 2f64.sqrt() + 1e-9);
        }
    }

    #[test]
    fn rays_span_the_field_of_view() {
        let s = Sensor::default();
        assert!((s.offset(0) + FRAC_PI_4).abs() < 1e-15);
        assert!((s.offset(16) - FRAC_PI_4).abs() < 1e-15);
        assert_eq!(s.offset(8), 0.0);
    }

    #[test]
    fn obstacle_hit_reports_its_color() {
        let mut scene = empty_scene();
        scene.obstacles.push(Box2::centered((4.0, 1.0), 1.0, [1.0, 0.0, 0.0]));
        let state = MazeState {
            position: (1.0, 1.0),
            heading: 0.0,
        };
        let center = ray_cast(&scene, &state, &Sensor::default()).rays[8];
        assert!((center.depth - 2.5).abs() < 1e-12);
        assert_eq!(center.color, [1.0, 0.0, 0.0]);
    }

    #[test]
    fn matches_marching_oracle_on_random_scenes() {
        let config = MazeConfig::default();
        let mut rng = Rng::new(77);
        for _ in 0..12 {
            let scene = config.sample_scene(&mut rng);
            let state = loop {
                let p = (rng.uniform_range(0.0, 10.0), rng.uniform_range(0.0, 10.0));
                if scene.obstacles.iter().all(|b| !b.contains(p)) {
                    break MazeState {
                        position: p,
                        heading: rng.uniform_range(-PI, PI),
                    };
                }
            };
            let fast = ray_cast(&scene, &state, &config.sensor);
            let slow = ray_cast_marching(&scene, &state, &config.sensor, 1e-4);
            for (a, b) in fast.rays.iter().zip(&slow.rays) {
                assert!((a.depth - b.depth).abs() < 1e-3, "{} vs {}", a.depth, b.depth);
                if (a.depth - b.depth).abs() < 5e-4 {
                    assert_eq!(a.color, b.color);
                }
            }
        }
    }

    #[test]
    fn recoloring_leaves_depths_alone() {
        let config = MazeConfig::default();
        let mut rng = Rng::new(5);
        let scene = config.sample_scene(&mut rng);
        let state = MazeState {
            position: (1.0, 1.0),
            heading: FRAC_PI_4,
        };
        let base = ray_cast(&scene, &state, &config.sensor);
        let swapped = ray_cast(&config.swap_obstacle_colors(scene.clone()), &state, &config.sensor);
        let fresh = ray_cast(&config.recolor_unseen(scene), &state, &config.sensor);
        for ((a, b), c) in base.rays.iter().zip(&swapped.rays).zip(&fresh.rays) {
            assert_eq!(a.depth, b.depth);
            assert_eq!(a.depth, c.depth);
            if a.color == config.wall_color {
                assert_eq!(a.color, b.color);
            }
        }
    }

    #[test]
    fn slides_along_obstacle_face() {
        let mut scene = empty_scene();
        scene.obstacles.push(Box2::centered((3.0, 3.0), 2.0, [1.0, 0.0, 0.0]));
        scene.start = (1.5, 2.5);
        scene.heading = 0.3;
        let mut env = MazeEnv::new(MazeConfig::default(), scene);
        env.reset(&mut Rng::new(0));
        for _ in 0..20 {
            env.step(Action::Continuous(0.0)).unwrap();
            let p = env.state().position;
            assert!(!env.scene().obstacles[0].contains(p));
        }
        // blocked in x at the face, still climbing in y
        let p = env.state().position;
        assert_eq!(p.0, 2.0);
        assert!(p.1 > 3.0);
    }

    #[test]
    fn stays_in_arena() {
        let config = MazeConfig::default();
        let mut rng = Rng::new(11);
        for _ in 0..20 {
            let scene = config.sample_scene(&mut rng);
            let mut env = MazeEnv::new(config.clone(), scene);
            env.reset(&mut rng);
            for _ in 0..config.horizon {
                let w = rng.uniform_range(-10.0, 10.0);
                env.step(Action::Continuous(w)).unwrap();
                let p = env.state().position;
                assert!((0.0..=10.0).contains(&p.0) && (0.0..=10.0).contains(&p.1));
                assert!(env.scene().obstacles.iter().all(|b| !b.contains(p)));
            }
            assert!(env.step(Action::Continuous(0.0)).is_err());
        }
    }

    #[test]
    fn rejects_bad_actions() {
        let mut env = MazeEnv::new(MazeConfig::default(), empty_scene());
        env.reset(&mut Rng::new(0));
        assert!(env.step(Action::Continuous(f64::NAN)).is_err());
        assert!(env.step(Action::Discrete(1)).is_err());
    }

    #[test]
    fn cost_normalized_at_start() {
        let env = MazeEnv::new(MazeConfig::default(), empty_scene());
        assert!((env.cost() - 1.0).abs() < 1e-15);
        assert_eq!(env.observe().len(), 68);
    }
}
