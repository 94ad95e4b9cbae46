use super::{log_beta_softmax, Action, HeadKind, PolicyNet, MIN_STD};
use crate::error::{shape_err, Error, Result};
use crate::numerics::{log_prob_gaussian, sample_categorical, sample_gaussian, Rng};

/// Activations cached for one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCache {
    /// `[y_t, m_{t-1}]`
    pub input: Vec<f64>,
    /// Pre-activation of every layer.
    pub pre: Vec<Vec<f64>>,
    /// Post-activation of every layer; `post[memory_layer]` is `m_t`.
    pub post: Vec<Vec<f64>>,
}

/// Per-time-step caches for backpropagation through time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ForwardTape {
    steps: Vec<StepCache>,
}

impl ForwardTape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[StepCache] {
        &self.steps
    }

    pub fn clear(&mut self) {
        self.steps.clear();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub memory: Vec<f64>,
    /// Softmax probabilities (categorical) or `(mean, pre_std)` (Gaussian).
    pub dist_params: Vec<f64>,
}

/// Action distribution produced by the head.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionDist {
    Categorical { probs: Vec<f64>, log_probs: Vec<f64> },
    Gaussian { mean: f64, std: f64 },
}

impl ActionDist {
    pub fn sample(&self, rng: &mut Rng) -> Result<Action> {
        match self {
            ActionDist::Categorical { probs, .. } => {
                sample_categorical(rng, probs).map(Action::Discrete)
            }
            ActionDist::Gaussian { mean, std } => {
                sample_gaussian(rng, *mean, *std).map(Action::Continuous)
            }
        }
    }

    /// Most likely action (argmax, lowest index on ties; or the mean).
    pub fn mode(&self) -> Action {
        match self {
            ActionDist::Categorical { probs, .. } => Action::Discrete(argmax(probs)),
            ActionDist::Gaussian { mean, .. } => Action::Continuous(*mean),
        }
    }

    pub fn log_prob(&self, action: Action) -> Result<f64> {
        match (self, action) {
            (ActionDist::Categorical { log_probs, .. }, Action::Discrete(i)) => log_probs
                .get(i)
                .copied()
                .ok_or_else(|| Error::InvalidAction(format!("index {i} of {}", log_probs.len()))),
            (ActionDist::Gaussian { mean, std }, Action::Continuous(x)) => {
                log_prob_gaussian(x, *mean, *std)
            }
            (d, a) => Err(Error::InvalidAction(format!("{a:?} for {d:?}"))),
        }
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl PolicyNet {
    /// Runs one time step, appending its activations to `tape`.
    ///
    /// The time index for a time-varying memory layer is `tape.len()`.
    pub fn forward_step(
        &self,
        y: &[f64],
        m_prev: &[f64],
        tape: &mut ForwardTape,
    ) -> Result<StepOutput> {
        if y.len() != self.input_dim {
            return Err(shape_err("forward_step input", self.input_dim, y.len()));
        }
        if m_prev.len() != self.memory_dim() {
            return Err(shape_err("forward_step memory", self.memory_dim(), m_prev.len()));
        }
        let t = tape.len();
        if self.is_time_varying() && t >= self.memory_steps {
            return Err(Error::HorizonExceeded {
                calls: t + 1,
                horizon: self.memory_steps,
            });
        }

        let mut input = Vec::with_capacity(y.len() + m_prev.len());
        input.extend_from_slice(y);
        input.extend_from_slice(m_prev);

        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (l, spec) in self.layers.iter().enumerate() {
            let x = if l == 0 { &input } else { &post[l - 1] };
            let mut z = self.params[self.weight_slot(l, t)].matvec(x)?;
            if let Some(b) = self.bias(l) {
                z.iter_mut().zip(b.as_slice()).for_each(|(z, b)| *z += b);
            }
            post.push(spec.activation.forward(&z));
            pre.push(z);
        }

        let out = StepOutput {
            memory: post[self.n_recurrent - 1].clone(),
            dist_params: post.last().cloned().unwrap_or_default(),
        };
        tape.steps.push(StepCache { input, pre, post });
        Ok(out)
    }

    /// Action distribution of a cached step.
    pub fn step_dist(&self, step: &StepCache) -> ActionDist {
        let out = step.post.last().expect("nonempty layers");
        match self.head_kind {
            HeadKind::Categorical => {
                let beta = self
                    .layers
                    .last()
                    .and_then(|l| l.activation.softmax_beta())
                    .unwrap_or(1.0);
                ActionDist::Categorical {
                    probs: out.clone(),
                    log_probs: log_beta_softmax(step.pre.last().expect("nonempty"), beta),
                }
            }
            HeadKind::Gaussian => ActionDist::Gaussian {
                mean: out[0],
                std: softplus(out[1]) + MIN_STD,
            },
        }
    }

    /// `Σ_t log π(u_t | m_t)` over a tape.
    pub fn tape_log_prob(&self, tape: &ForwardTape, actions: &[Action]) -> Result<f64> {
        if tape.len() != actions.len() {
            return Err(shape_err("tape_log_prob", tape.len(), actions.len()));
        }
        tape.steps()
            .iter()
            .zip(actions)
            .map(|(s, &a)| self.step_dist(s).log_prob(a))
            .sum()
    }

    /// Replays a whole input sequence from the initial memory.
    pub fn replay(&self, inputs: &[Vec<f64>]) -> Result<ForwardTape> {
        let mut tape = ForwardTape::new();
        let mut m = self.initial_memory();
        for y in inputs {
            m = self.forward_step(y, &m, &mut tape)?.memory;
        }
        Ok(tape)
    }
}
