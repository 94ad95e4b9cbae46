//! Small stochastic MDP whose trajectories can be enumerated exactly.

use super::{ActionSpec, Environment, Step};
use crate::error::{Error, Result};
use crate::net::Action;
use crate::numerics::Rng;

/// Two states, two actions, one-hot state observations.
#[derive(Debug, Clone)]
pub struct ToyMdp {
    /// Probability of starting in each state.
    pub initial: [f64; 2],
    /// `transition[s][a][s']`.
    pub transition: [[[f64; 2]; 2]; 2],
    pub state_cost: [f64; 2],
    pub horizon: usize,
    state: usize,
    t: usize,
    rng: Rng,
}

impl Default for ToyMdp {
    fn default() -> Self {
        Self::new(
            [0.6, 0.4],
            [[[0.8, 0.2], [0.3, 0.7]], [[0.5, 0.5], [0.1, 0.9]]],
            [1.0, 0.25],
            2,
        )
    }
}

/// Compares the model, not the episode in progress.
impl PartialEq for ToyMdp {
    fn eq(&self, other: &Self) -> bool {
        self.initial == other.initial
            && self.transition == other.transition
            && self.state_cost == other.state_cost
            && self.horizon == other.horizon
    }
}

impl ToyMdp {
    pub fn new(
        initial: [f64; 2],
        transition: [[[f64; 2]; 2]; 2],
        state_cost: [f64; 2],
        horizon: usize,
    ) -> Self {
        Self {
            initial,
            transition,
            state_cost,
            horizon,
            state: 0,
            t: 0,
            rng: Rng::new(0),
        }
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn observation(state: usize) -> Vec<f64> {
        let mut y = vec![0.0; 2];
        y[state] = 1.0;
        y
    }

    fn draw(&mut self, p: [f64; 2]) -> usize {
        usize::from(self.rng.uniform() >= p[0])
    }
}

impl Environment for ToyMdp {
    fn obs_dim(&self) -> usize {
        2
    }

    fn action_spec(&self) -> ActionSpec {
        ActionSpec::Categorical(2)
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        self.rng = Rng::new(rng.next_u64());
        self.t = 0;
        self.state = self.draw(self.initial);
        Self::observation(self.state)
    }

    fn cost(&self) -> f64 {
        self.state_cost[self.state]
    }

    fn step(&mut self, action: Action) -> Result<Step> {
        if self.t >= self.horizon {
            return Err(Error::HorizonExceeded {
                calls: self.t + 1,
                horizon: self.horizon,
            });
        }
        let a = match action {
            Action::Discrete(a) if a < 2 => a,
            other => return Err(Error::InvalidAction(format!("{other:?}"))),
        };
        self.state = self.draw(self.transition[self.state][a]);
        self.t += 1;
        Ok(Step {
            observation: Self::observation(self.state),
            cost: self.cost(),
            done: self.t == self.horizon,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transition_frequencies() {
        let mut m = ToyMdp::default();
        let mut rng = Rng::new(4);
        let n = 100_000;
        let mut from0_a1_to1 = 0;
        let mut trials = 0;
        for _ in 0..n {
            m.reset(&mut rng);
            if m.state() == 0 {
                trials += 1;
                m.step(Action::Discrete(1)).unwrap();
                from0_a1_to1 += m.state();
            }
        }
        let p = from0_a1_to1 as f64 / trials as f64;
        assert!((p - 0.7).abs() < 0.01);
        assert!((trials as f64 / n as f64 - 0.6).abs() < 0.01);
    }

    #[test]
    fn horizon_and_actions_enforced() {
        let mut m = ToyMdp::default();
        m.reset(&mut Rng::new(0));
        assert!(m.step(Action::Discrete(2)).is_err());
        m.step(Action::Discrete(0)).unwrap();
        assert!(m.step(Action::Discrete(0)).unwrap().done);
        assert!(m.step(Action::Discrete(0)).is_err());
    }
}
