use serde::{Deserialize, Serialize};

use super::{ActionSpec, Environment, Step};
use crate::error::{Error, Result};
use crate::net::Action;
use crate::numerics::Rng;

/// The five grid moves, in network output order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridAction {
    Up,
    Right,
    Down,
    Left,
    Stop,
}

impl GridAction {
    pub const ALL: [GridAction; 5] = [
        GridAction::Up,
        GridAction::Right,
        GridAction::Down,
        GridAction::Left,
        GridAction::Stop,
    ];

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::InvalidAction(format!("grid action index {i}")))
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// `(Δrow, Δcol)`; rows grow downward.
    pub fn delta(self) -> (i64, i64) {
        match self {
            GridAction::Up => (-1, 0),
            GridAction::Right => (0, 1),
            GridAction::Down => (1, 0),
            GridAction::Left => (0, -1),
            GridAction::Stop => (0, 0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GridAction::Up => "up",
            GridAction::Right => "right",
            GridAction::Down => "down",
            GridAction::Left => "left",
            GridAction::Stop => "stop",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub rows: i64,
    pub cols: i64,
    pub start: (i64, i64),
    pub goal: (i64, i64),
    pub horizon: usize,
    /// Encode the goal indicator as `[not at goal, at goal]` instead of a
    /// single 0/1 value, so the first memory update sees a nonzero input.
    pub one_hot_observation: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            rows: 7,
            cols: 7,
            start: (5, 1),
            goal: (1, 5),
            horizon: 8,
            one_hot_observation: false,
        }
    }
}

impl GridConfig {
    pub fn obs_dim(&self) -> usize {
        if self.one_hot_observation {
            2
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridState {
    pub position: (i64, i64),
}

/// Goal-reaching on a grid with a goal-indicator observation.
#[derive(Debug, Clone)]
pub struct GridNav {
    config: GridConfig,
    state: GridState,
    t: usize,
    done: bool,
}

impl GridNav {
    pub fn new(config: GridConfig) -> Self {
        let state = GridState {
            position: config.start,
        };
        Self {
            config,
            state,
            t: 0,
            done: false,
        }
    }

    pub fn state(&self) -> GridState {
        self.state
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn at_goal(&self) -> bool {
        self.state.position == self.config.goal
    }

    fn observe(&self) -> Vec<f64> {
        let g = if self.at_goal() { 1.0 } else { 0.0 };
        if self.config.one_hot_observation {
            vec![1.0 - g, g]
        } else {
            vec![g]
        }
    }

    fn manhattan(a: (i64, i64), b: (i64, i64)) -> i64 {
        (a.0 - b.0).abs() + (a.1 - b.1).abs()
    }
}

impl Environment for GridNav {
    fn obs_dim(&self) -> usize {
        self.config.obs_dim()
    }

    fn action_spec(&self) -> ActionSpec {
        ActionSpec::Categorical(5)
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn reset(&mut self, _rng: &mut Rng) -> Vec<f64> {
        self.state.position = self.config.start;
        self.t = 0;
        self.done = self.config.horizon == 0;
        self.observe()
    }

    fn cost(&self) -> f64 {
        let initial = Self::manhattan(self.config.start, self.config.goal).max(1);
        Self::manhattan(self.state.position, self.config.goal) as f64 / initial as f64
    }

    fn step(&mut self, action: Action) -> Result<Step> {
        if self.done || self.t >= self.config.horizon {
            return Err(Error::HorizonExceeded {
                calls: self.t + 1,
                horizon: self.config.horizon,
            });
        }
        let a = match action {
            Action::Discrete(i) => GridAction::from_index(i)?,
            Action::Continuous(_) => {
                return Err(Error::InvalidAction("grid takes discrete actions".into()))
            }
        };
        let stop_at_goal = a == GridAction::Stop && self.at_goal();
        let (dr, dc) = a.delta();
        let (r, c) = self.state.position;
        self.state.position = (
            (r + dr).clamp(0, self.config.rows - 1),
            (c + dc).clamp(0, self.config.cols - 1),
        );
        self.t += 1;
        self.done = self.t == self.config.horizon || stop_at_goal;
        Ok(Step {
            observation: self.observe(),
            cost: self.cost(),
            done: self.done,
        })
    }
}
