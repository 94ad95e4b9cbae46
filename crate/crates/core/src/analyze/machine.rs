//! Moore machines read off discrete-memory policies.
//!
//! A machine state is the argmax index of the memory vector. Transitions are
//! labelled by the observation that produced the next memory, and each state
//! carries the argmax action emitted from it.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use crate::envs::{EnvSuite, Environment};
use crate::error::{Error, Result};
use crate::net::{argmax, Action, PolicyNet};
use crate::numerics::Rng;
use crate::train::{rollout, ActionMode, Trajectory};

/// Memory argmax probability below which a step is reported as ambiguous.
pub const CONFIDENCE_WARNING: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MachineState {
    Start,
    Memory(usize),
    Terminal,
}

impl fmt::Display for MachineState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MachineState::Start => f.write_str("S"),
            MachineState::Memory(i) => write!(f, "m{i}"),
            MachineState::Terminal => f.write_str("T"),
        }
    }
}

/// Observation rendered as a transition label, e.g. `0` or `0.5,1`.
pub fn observation_label(y: &[f64]) -> String {
    y.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MooreMachine {
    /// Memory state → emitted action index.
    pub action_label: BTreeMap<usize, usize>,
    /// `(state, observation label)` → next state.
    pub transitions: BTreeMap<(MachineState, String), MachineState>,
    /// Smallest memory argmax probability seen while extracting.
    pub min_confidence: f64,
}

impl MooreMachine {
    /// Memory states, excluding Start and Terminal.
    pub fn num_states(&self) -> usize {
        self.action_label.len()
    }

    pub fn states(&self) -> Vec<usize> {
        self.action_label.keys().copied().collect()
    }

    fn insert_transition(&mut self, from: MachineState, obs: String, to: MachineState) -> Result<()> {
        match self.transitions.get(&(from, obs.clone())) {
            Some(&prev) if prev != to => Err(Error::NondeterministicTransition {
                state: from.to_string(),
                observation: obs,
                first: prev.to_string(),
                second: to.to_string(),
            }),
            Some(_) => Ok(()),
            None => {
                self.transitions.insert((from, obs), to);
                Ok(())
            }
        }
    }

    /// Adds one greedy episode. The final state links to Terminal only when
    /// the episode ended at zero cost.
    pub fn absorb(&mut self, traj: &Trajectory, obs_dim: usize) -> Result<()> {
        let mut state = MachineState::Start;
        for t in 0..traj.len() {
            let m = &traj.memories[t];
            let idx = argmax(m);
            self.min_confidence = self.min_confidence.min(m[idx]);
            let next = MachineState::Memory(idx);
            let obs = observation_label(&traj.inputs[t][..obs_dim]);
            self.insert_transition(state, obs, next)?;
            let action = match traj.actions[t] {
                Action::Discrete(a) => a,
                Action::Continuous(_) => {
                    return Err(Error::InvalidAction(
                        "machine extraction needs discrete actions".into(),
                    ))
                }
            };
            match self.action_label.get(&idx) {
                Some(&a) if a != action => {
                    return Err(Error::NondeterministicTransition {
                        state: next.to_string(),
                        observation: "<action>".into(),
                        first: a.to_string(),
                        second: action.to_string(),
                    })
                }
                _ => {
                    self.action_label.insert(idx, action);
                }
            }
            state = next;
        }
        if traj.final_cost() == 0.0 {
            let obs = observation_label(&traj.final_observation[..obs_dim]);
            self.insert_transition(state, obs, MachineState::Terminal)?;
        }
        Ok(())
    }

    /// Graphviz description: one node per state (memory states labelled with
    /// their action) and one edge per transition.
    pub fn write_dot<W: Write>(&self, mut w: W, action_names: &[&str]) -> Result<()> {
        writeln!(w, "digraph moore {{")?;
        writeln!(w, "  rankdir=LR;")?;
        writeln!(w, "  S [shape=point];")?;
        writeln!(w, "  T [shape=doublecircle];")?;
        for (&s, &a) in &self.action_label {
            let name = action_names.get(a).copied().unwrap_or("?");
            writeln!(w, "  m{s} [label=\"m{s} / {name}\"];")?;
        }
        for ((from, obs), to) in &self.transitions {
            writeln!(w, "  {from} -> {to} [label=\"{obs}\"];")?;
        }
        writeln!(w, "}}")?;
        Ok(())
    }

    /// Runs the machine itself on `env` and returns the actions it emits.
    pub fn execute(&self, env: &mut dyn Environment, rng: &mut Rng) -> Result<Vec<Action>> {
        let mut y = env.reset(rng);
        let obs_dim = env.obs_dim();
        let mut state = MachineState::Start;
        let mut actions = Vec::new();
        for _ in 0..env.horizon() {
            let key = (state, observation_label(&y[..obs_dim]));
            state = *self.transitions.get(&key).ok_or_else(|| {
                Error::InvalidSpec(format!("machine has no transition from {} on {}", key.0, key.1))
            })?;
            let a = match state {
                MachineState::Memory(i) => self.action_label[&i],
                _ => break,
            };
            let step = env.step(Action::Discrete(a))?;
            actions.push(Action::Discrete(a));
            y = step.observation;
            if step.done {
                break;
            }
        }
        Ok(actions)
    }
}

/// Greedy rollouts of `net` over the suite's instances, folded into one
/// machine. Fails if the policy is not machine-like.
pub fn extract_moore_machine(
    net: &PolicyNet,
    suite: &EnvSuite,
    n_rollouts: usize,
    augment_action: bool,
    seed: u64,
) -> Result<MooreMachine> {
    let mut machine = MooreMachine {
        min_confidence: 1.0,
        ..MooreMachine::default()
    };
    for i in 0..n_rollouts.max(1) {
        let idx = i % suite.len();
        let mut env = suite.instance(idx);
        let obs_dim = env.obs_dim();
        let mut rng = Rng::derived(seed, &[i as u64]);
        let traj = rollout(net, env.as_mut(), idx, &mut rng, ActionMode::Greedy, augment_action)?;
        machine.absorb(&traj, obs_dim)?;
    }
    if machine.min_confidence < CONFIDENCE_WARNING {
        log::warn!(
            "memory argmax probability fell to {:.3}; machine states may be ambiguous",
            machine.min_confidence
        );
    }
    Ok(machine)
}
