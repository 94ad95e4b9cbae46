//! Episodic environments behind one interface.
//!
//! Every environment exposes the cost of its current state through
//! [`Environment::cost`]; an episode of horizon `T` takes `T` actions and
//! visits `T + 1` states, so its total cost is `Σ_{t=0}^{T} c_t`.

mod grid;
mod maze;
mod scene;
mod toy;

pub use grid::{GridAction, GridConfig, GridNav, GridState};
pub use maze::{ray_cast, MazeConfig, MazeEnv, MazeState, Ray, RayObservation, Region, Sensor};
pub use scene::{read_scenes, write_scenes, Box2, Scene, SCENE_MAGIC};
pub use toy::ToyMdp;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::net::Action;
use crate::numerics::{derive_seed, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionSpec {
    Categorical(usize),
    ContinuousScalar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub observation: Vec<f64>,
    /// Cost of the state reached by this step.
    pub cost: f64,
    pub done: bool,
}

pub trait Environment: Send {
    fn obs_dim(&self) -> usize;
    fn action_spec(&self) -> ActionSpec;
    fn horizon(&self) -> usize;
    /// Starts a new episode and returns the first observation.
    fn reset(&mut self, rng: &mut Rng) -> Vec<f64>;
    /// Cost of the current state; finite and non-negative.
    fn cost(&self) -> f64;
    /// Applies one action. Calling more than `horizon()` times after a
    /// reset, or after `done`, is an error.
    fn step(&mut self, action: Action) -> Result<Step>;
}

/// Which fixed set of environment instances to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Train,
    Test,
    TestSwappedColors,
    TestNewColors,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Train,
        Variant::Test,
        Variant::TestSwappedColors,
        Variant::TestNewColors,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Train => "train",
            Variant::Test => "test",
            Variant::TestSwappedColors => "test_swapped_colors",
            Variant::TestNewColors => "test_new_colors",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::UnknownVariant(s.to_owned()))
    }
}

/// Environment family and its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvKind {
    Grid(GridConfig),
    Maze(MazeConfig),
    Toy(ToyMdp),
}

/// A fixed, ordered set of environment instances.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvSuite {
    Grid(GridConfig),
    Maze { config: MazeConfig, scenes: Vec<Scene> },
    Toy(ToyMdp),
}

impl EnvSuite {
    pub fn len(&self) -> usize {
        match self {
            EnvSuite::Maze { scenes, .. } => scenes.len(),
            _ => 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn instance(&self, index: usize) -> Box<dyn Environment> {
        match self {
            EnvSuite::Grid(c) => Box::new(GridNav::new(c.clone())),
            EnvSuite::Maze { config, scenes } => {
                Box::new(MazeEnv::new(config.clone(), scenes[index % scenes.len()].clone()))
            }
            EnvSuite::Toy(m) => Box::new(m.clone()),
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.instance(0).obs_dim()
    }

    pub fn action_spec(&self) -> ActionSpec {
        self.instance(0).action_spec()
    }

    pub fn horizon(&self) -> usize {
        self.instance(0).horizon()
    }

    pub fn scenes(&self) -> Option<&[Scene]> {
        match self {
            EnvSuite::Maze { scenes, .. } => Some(scenes),
            _ => None,
        }
    }
}

/// Builds the instance set for `variant` from `suite_seed`.
///
/// Maze training scenes and test scenes come from separate streams; the three
/// test variants share geometry and differ only in colors.
pub fn make_env_suite(kind: &EnvKind, variant: Variant, suite_seed: u64) -> Result<EnvSuite> {
    match kind {
        EnvKind::Grid(c) => match variant {
            Variant::Train | Variant::Test => Ok(EnvSuite::Grid(c.clone())),
            v => Err(Error::UnknownVariant(format!("{v} (grid has no color variants)"))),
        },
        EnvKind::Toy(m) => match variant {
            Variant::Train | Variant::Test => Ok(EnvSuite::Toy(m.clone())),
            v => Err(Error::UnknownVariant(format!("{v} (toy MDP has no color variants)"))),
        },
        EnvKind::Maze(c) => {
            let scenes = match variant {
                Variant::Train => {
                    let mut rng = Rng::new(derive_seed(suite_seed, &[0]));
                    (0..c.train_mazes).map(|_| c.sample_scene(&mut rng)).collect()
                }
                v => {
                    let mut rng = Rng::new(derive_seed(suite_seed, &[1]));
                    (0..c.test_mazes)
                        .map(|_| {
                            let s = c.sample_scene(&mut rng);
                            match v {
                                Variant::TestSwappedColors => c.swap_obstacle_colors(s),
                                Variant::TestNewColors => c.recolor_unseen(s),
                                _ => s,
                            }
                        })
                        .collect()
                }
            };
            Ok(EnvSuite::Maze {
                config: c.clone(),
                scenes,
            })
        }
    }
}
