use rayon::prelude::*;

use crate::envs::{ActionSpec, EnvSuite, Environment};
use crate::error::{Error, Result};
use crate::net::{Action, ForwardTape, PolicyNet};
use crate::numerics::Rng;

/// How actions are chosen from the policy distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionMode {
    Sample,
    /// Distribution mode: argmax for categorical, mean for Gaussian.
    Greedy,
}

/// One episode.
///
/// Step `t` holds the network input, `m_t`, `u_t` and its log-probability;
/// `costs` has one more entry than `actions` since the state reached by the
/// last action is costed too.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub env_index: usize,
    /// Network inputs (observation, plus previous action when augmented).
    pub inputs: Vec<Vec<f64>>,
    pub memories: Vec<Vec<f64>>,
    pub actions: Vec<Action>,
    pub log_probs: Vec<f64>,
    pub costs: Vec<f64>,
    pub total_cost: f64,
    /// Observation of the state the episode ended in.
    pub final_observation: Vec<f64>,
    /// Forward caches, dropped once the gradient has been accumulated.
    pub tape: ForwardTape,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Cost of the last visited state.
    pub fn final_cost(&self) -> f64 {
        *self.costs.last().expect("at least the initial state is costed")
    }

    /// Length, finiteness and total-cost consistency.
    pub fn check(&self) -> Result<()> {
        let n = self.actions.len();
        let lengths_ok = self.inputs.len() == n
            && self.memories.len() == n
            && self.log_probs.len() == n
            && self.costs.len() == n + 1
            && (self.tape.is_empty() || self.tape.len() == n);
        if !lengths_ok {
            return Err(Error::InvalidSpec("trajectory fields have inconsistent lengths".into()));
        }
        if self.log_probs.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFinite("trajectory log-probability".into()));
        }
        let sum: f64 = self.costs.iter().sum();
        if sum != self.total_cost {
            return Err(Error::InvalidSpec(format!(
                "total cost {} differs from summed costs {sum}",
                self.total_cost
            )));
        }
        Ok(())
    }
}

/// Width of the previous-action block appended to observations.
pub fn action_augment_dim(spec: ActionSpec) -> usize {
    match spec {
        ActionSpec::Categorical(k) => k,
        ActionSpec::ContinuousScalar => 1,
    }
}

/// Network input width for an environment, with or without the previous action.
pub fn policy_input_dim(obs_dim: usize, spec: ActionSpec, augment_action: bool) -> usize {
    obs_dim + if augment_action { action_augment_dim(spec) } else { 0 }
}

fn encode_action(spec: ActionSpec, action: Option<Action>) -> Vec<f64> {
    match spec {
        ActionSpec::Categorical(k) => {
            let mut v = vec![0.0; k];
            if let Some(Action::Discrete(i)) = action {
                v[i] = 1.0;
            }
            v
        }
        ActionSpec::ContinuousScalar => match action {
            Some(Action::Continuous(x)) => vec![x],
            _ => vec![0.0],
        },
    }
}

/// Runs one episode of `env` under `net`.
pub fn rollout(
    net: &PolicyNet,
    env: &mut dyn Environment,
    env_index: usize,
    rng: &mut Rng,
    mode: ActionMode,
    augment_action: bool,
) -> Result<Trajectory> {
    let spec = env.action_spec();
    let horizon = env.horizon();
    let mut y = env.reset(rng);
    let mut costs = vec![env.cost()];
    let mut tape = ForwardTape::new();
    let mut m = net.initial_memory();
    let mut prev: Option<Action> = None;
    let mut traj = Trajectory {
        env_index,
        inputs: Vec::with_capacity(horizon),
        memories: Vec::with_capacity(horizon),
        actions: Vec::with_capacity(horizon),
        log_probs: Vec::with_capacity(horizon),
        costs: Vec::new(),
        total_cost: 0.0,
        final_observation: Vec::new(),
        tape: ForwardTape::new(),
    };

    for _ in 0..horizon {
        let mut input = y;
        if augment_action {
            input.extend(encode_action(spec, prev));
        }
        let out = net.forward_step(&input, &m, &mut tape)?;
        let dist = net.step_dist(tape.steps().last().expect("just pushed"));
        let action = match mode {
            ActionMode::Sample => dist.sample(rng)?,
            ActionMode::Greedy => dist.mode(),
        };
        let lp = dist.log_prob(action)?;
        if !lp.is_finite() {
            return Err(Error::NonFinite(format!("log π of {action:?}")));
        }
        let step = env.step(action)?;
        traj.inputs.push(input);
        traj.memories.push(out.memory.clone());
        traj.actions.push(action);
        traj.log_probs.push(lp);
        costs.push(step.cost);
        m = out.memory;
        prev = Some(action);
        y = step.observation;
        if step.done {
            break;
        }
    }
    traj.total_cost = costs.iter().sum();
    traj.costs = costs;
    traj.final_observation = y;
    traj.tape = tape;
    Ok(traj)
}

/// Random stream for rollout `index` of `epoch`; independent of how rollouts
/// are scheduled over threads.
pub fn rollout_rng(seed: u64, epoch: u64, index: u64) -> Rng {
    Rng::derived(seed, &[epoch, index])
}

/// Rollout `index` of `epoch`: picks a suite instance and runs it.
pub fn seeded_rollout(
    net: &PolicyNet,
    suite: &EnvSuite,
    seed: u64,
    epoch: u64,
    index: u64,
    mode: ActionMode,
    augment_action: bool,
) -> Result<Trajectory> {
    let mut rng = rollout_rng(seed, epoch, index);
    let env_index = if suite.len() > 1 {
        rng.index(suite.len())
    } else {
        0
    };
    let mut env = suite.instance(env_index);
    rollout(net, env.as_mut(), env_index, &mut rng, mode, augment_action)
}

/// `n` independent sampled episodes, each on a suite instance drawn at
/// random. Results are ordered by rollout index and do not depend on the
/// number of worker threads.
pub fn collect_rollouts(
    net: &PolicyNet,
    suite: &EnvSuite,
    n: usize,
    seed: u64,
    epoch: u64,
    augment_action: bool,
) -> Result<Vec<Trajectory>> {
    if n == 0 {
        return Err(Error::Config("need at least one rollout".into()));
    }
    (0..n as u64)
        .into_par_iter()
        .map(|i| seeded_rollout(net, suite, seed, epoch, i, ActionMode::Sample, augment_action))
        .collect()
}
