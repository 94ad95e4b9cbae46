//! Recurrent policy networks.
//!
//! A [`PolicyNet`] is a stack of fully connected layers split in two parts.
//! The recurrent part maps `[y_t, m_{t-1}]` to the memory state `m_t`; its
//! last layer is the *memory layer* and its incoming weight matrix is `W_m`.
//! The head maps `m_t` to the parameters of the action distribution.
//!
//! All parameters live in one flat `Vec<Matrix>` (weights, then bias column,
//! layer by layer) so optimizers and gradients share a single layout.

mod activation;
mod bptt;
mod checkpoint;
mod forward;

pub use activation::{beta_softmax, log_beta_softmax, Activation};
pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use forward::{ActionDist, ForwardTape, StepCache, StepOutput};
pub(crate) use forward::argmax;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

/// Floor added to the softplus standard deviation of the Gaussian head.
pub const MIN_STD: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
    pub bias: bool,
}

impl LayerSpec {
    pub fn new(input_dim: usize, output_dim: usize, activation: Activation) -> Self {
        Self {
            input_dim,
            output_dim,
            activation,
            bias: true,
        }
    }

    pub fn without_bias(mut self) -> Self {
        self.bias = false;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    /// Two outputs `(mean, pre_std)` for a scalar action, std = softplus(pre_std) + [`MIN_STD`].
    Gaussian,
    /// Final softmax layer over discrete actions.
    Categorical,
}

/// An action sampled from (or scored under) the policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(f64),
}

#[derive(Debug, Clone, PartialEq)]
struct LayerSlots {
    /// One slot per time step for a time-varying memory layer, otherwise one.
    weights: Vec<usize>,
    bias: Option<usize>,
}

/// Recurrent memory map plus policy head with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    input_dim: usize,
    layers: Vec<LayerSpec>,
    slots: Vec<LayerSlots>,
    n_recurrent: usize,
    head_kind: HeadKind,
    memory_steps: usize,
    /// Memory dimension set in `m_{-1}`; `None` starts from the zero vector.
    start_state: Option<usize>,
    params: Vec<Matrix>,
}

impl PolicyNet {
    /// Builds a network with all parameters zero.
    ///
    /// `input_dim` is the width of the (possibly action-augmented) observation;
    /// the first layer must take `input_dim + D` inputs where `D` is the memory
    /// width. `memory_steps > 1` gives the memory layer one weight matrix per
    /// time step.
    pub fn zeros(
        input_dim: usize,
        layers: Vec<LayerSpec>,
        n_recurrent: usize,
        head_kind: HeadKind,
        memory_steps: usize,
    ) -> Result<Self> {
        validate(input_dim, &layers, n_recurrent, head_kind, memory_steps)?;
        let mut params = Vec::new();
        let mut slots = Vec::with_capacity(layers.len());
        for (l, spec) in layers.iter().enumerate() {
            let copies = if l + 1 == n_recurrent { memory_steps } else { 1 };
            let weights = (0..copies)
                .map(|_| {
                    params.push(Matrix::zeros(spec.output_dim, spec.input_dim));
                    params.len() - 1
                })
                .collect();
            let bias = spec.bias.then(|| {
                params.push(Matrix::zeros(spec.output_dim, 1));
                params.len() - 1
            });
            slots.push(LayerSlots { weights, bias });
        }
        Ok(Self {
            input_dim,
            layers,
            slots,
            n_recurrent,
            head_kind,
            memory_steps,
            start_state: None,
            params,
        })
    }

    /// Builds a network with weights uniform in `±1/√fan_in` and zero biases.
    pub fn init(
        input_dim: usize,
        layers: Vec<LayerSpec>,
        n_recurrent: usize,
        head_kind: HeadKind,
        memory_steps: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut net = Self::zeros(input_dim, layers, n_recurrent, head_kind, memory_steps)?;
        for l in 0..net.layers.len() {
            let bound = 1.0 / (net.layers[l].input_dim as f64).sqrt();
            for &slot in &net.slots[l].weights {
                for w in net.params[slot].as_mut_slice() {
                    *w = rng.uniform_range(-bound, bound);
                }
            }
        }
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Width `D` of the memory state.
    pub fn memory_dim(&self) -> usize {
        self.layers[self.n_recurrent - 1].output_dim
    }

    pub fn memory_layer_index(&self) -> usize {
        self.n_recurrent - 1
    }

    pub fn n_recurrent(&self) -> usize {
        self.n_recurrent
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn head_kind(&self) -> HeadKind {
        self.head_kind
    }

    pub fn memory_steps(&self) -> usize {
        self.memory_steps
    }

    pub fn is_time_varying(&self) -> bool {
        self.memory_steps > 1
    }

    /// Number of discrete actions, `None` for a Gaussian head.
    pub fn num_actions(&self) -> Option<usize> {
        match self.head_kind {
            HeadKind::Categorical => self.layers.last().map(|l| l.output_dim),
            HeadKind::Gaussian => None,
        }
    }

    pub fn params(&self) -> &[Matrix] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Matrix] {
        &mut self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(Matrix::len).sum()
    }

    /// Zero tensors matching the parameter layout.
    pub fn zero_grads(&self) -> Vec<Matrix> {
        self.params
            .iter()
            .map(|p| Matrix::zeros(p.rows(), p.cols()))
            .collect()
    }

    /// Parameter index of layer `layer`'s weight used at time step `t`.
    pub fn weight_slot(&self, layer: usize, t: usize) -> usize {
        let w = &self.slots[layer].weights;
        w[t.min(w.len() - 1)]
    }

    pub fn weight_slots(&self, layer: usize) -> &[usize] {
        &self.slots[layer].weights
    }

    pub fn bias_slot(&self, layer: usize) -> Option<usize> {
        self.slots[layer].bias
    }

    pub fn weight(&self, layer: usize) -> &Matrix {
        &self.params[self.slots[layer].weights[0]]
    }

    pub fn weight_mut(&mut self, layer: usize) -> &mut Matrix {
        let slot = self.slots[layer].weights[0];
        &mut self.params[slot]
    }

    pub fn bias(&self, layer: usize) -> Option<&Matrix> {
        self.slots[layer].bias.map(|s| &self.params[s])
    }

    pub fn bias_mut(&mut self, layer: usize) -> Option<&mut Matrix> {
        self.slots[layer].bias.map(move |s| &mut self.params[s])
    }

    /// Parameter indices of the memory layer's incoming weights (`W_m`, or
    /// the per-step matrices of a time-varying memory layer).
    pub fn memory_weight_slots(&self) -> &[usize] {
        &self.slots[self.n_recurrent - 1].weights
    }

    pub fn memory_weights(&self) -> Vec<&Matrix> {
        self.memory_weight_slots()
            .iter()
            .map(|&s| &self.params[s])
            .collect()
    }

    /// `W_m` for a time-invariant network; the first step's matrix otherwise.
    pub fn memory_weight(&self) -> &Matrix {
        self.weight(self.n_recurrent - 1)
    }

    pub fn memory_weight_mut(&mut self) -> &mut Matrix {
        self.weight_mut(self.n_recurrent - 1)
    }

    /// Starts every episode from the one-hot memory `e_k` instead of zero.
    pub fn with_start_state(mut self, start: Option<usize>) -> Result<Self> {
        if let Some(k) = start {
            if k >= self.memory_dim() {
                return Err(Error::InvalidSpec(format!(
                    "start state {k} outside memory width {}",
                    self.memory_dim()
                )));
            }
        }
        self.start_state = start;
        Ok(self)
    }

    pub fn start_state(&self) -> Option<usize> {
        self.start_state
    }

    /// `m_{-1}`.
    pub fn initial_memory(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.memory_dim()];
        if let Some(k) = self.start_state {
            m[k] = 1.0;
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(Matrix::is_finite)
    }

    /// Rebuilds a network around new layer specs and parameters (same slot rules).
    pub(crate) fn with_layers_and_params(
        &self,
        layers: Vec<LayerSpec>,
        params: Vec<Matrix>,
    ) -> Result<Self> {
        let mut net = Self::zeros(
            self.input_dim,
            layers,
            self.n_recurrent,
            self.head_kind,
            self.memory_steps,
        )?;
        if net.params.len() != params.len()
            || net
                .params
                .iter()
                .zip(&params)
                .any(|(a, b)| a.shape() != b.shape())
        {
            return Err(Error::InvalidSpec(
                "parameter tensors do not match layer specs".into(),
            ));
        }
        net.params = params;
        net.start_state = self.start_state;
        Ok(net)
    }
}

fn validate(
    input_dim: usize,
    layers: &[LayerSpec],
    n_recurrent: usize,
    head_kind: HeadKind,
    memory_steps: usize,
) -> Result<()> {
    let bad = |msg: String| Err(Error::InvalidSpec(msg));
    if n_recurrent == 0 || n_recurrent >= layers.len() {
        return bad(format!(
            "need at least one recurrent and one head layer, got {n_recurrent} of {}",
            layers.len()
        ));
    }
    if memory_steps == 0 {
        return bad("memory_steps must be at least 1".into());
    }
    if let Some(l) = layers.iter().find(|l| l.input_dim == 0 || l.output_dim == 0) {
        return bad(format!("zero-width layer {l:?}"));
    }
    let memory_dim = layers[n_recurrent - 1].output_dim;
    if layers[0].input_dim != input_dim + memory_dim {
        return bad(format!(
            "first layer takes {} inputs, expected input {input_dim} + memory {memory_dim}",
            layers[0].input_dim
        ));
    }
    for w in layers.windows(2) {
        if w[1].input_dim != w[0].output_dim {
            return bad(format!(
                "layer chain broken: {} outputs feed {} inputs",
                w[0].output_dim, w[1].input_dim
            ));
        }
    }
    if n_recurrent >= 2 && layers[n_recurrent - 2].activation != Activation::Tanh {
        return bad("the layer feeding the memory layer must use tanh".into());
    }
    let last = layers.last().expect("nonempty");
    match head_kind {
        HeadKind::Categorical if last.activation.softmax_beta().is_none() => {
            bad("categorical head must end in softmax".into())
        }
        HeadKind::Categorical if last.output_dim < 2 => {
            bad("categorical head needs at least two actions".into())
        }
        HeadKind::Gaussian if last.activation != Activation::Linear || last.output_dim != 2 => {
            bad("gaussian head must end in a linear layer with 2 outputs".into())
        }
        _ => Ok(()),
    }
}
