//! Backpropagation through time for the REINFORCE score `Σ_t ∇ log π(u_t | m_t)`.

use super::forward::sigmoid;
use super::{Action, ActionDist, ForwardTape, HeadKind, PolicyNet};
use crate::error::{shape_err, Error, Result};
use crate::numerics::Matrix;

impl PolicyNet {
    /// Gradient of `Σ_t log π(u_t | m_t)` with respect to every parameter,
    /// flowing through the recurrence back to `t = 0`.
    pub fn bptt_logprob_grad(&self, tape: &ForwardTape, actions: &[Action]) -> Result<Vec<Matrix>> {
        let mut grads = self.zero_grads();
        self.accumulate_logprob_grad(tape, actions, None, 1.0, &mut grads)?;
        Ok(grads)
    }

    /// Gradient of `Σ_t w_t log π(u_t | m_t)`.
    pub fn bptt_weighted_logprob_grad(
        &self,
        tape: &ForwardTape,
        actions: &[Action],
        weights: &[f64],
    ) -> Result<Vec<Matrix>> {
        let mut grads = self.zero_grads();
        self.accumulate_logprob_grad(tape, actions, Some(weights), 1.0, &mut grads)?;
        Ok(grads)
    }

    /// Adds `scale · ∇ Σ_t w_t log π(u_t | m_t)` into `grads` (`w_t = 1` when
    /// `weights` is `None`).
    pub fn accumulate_logprob_grad(
        &self,
        tape: &ForwardTape,
        actions: &[Action],
        weights: Option<&[f64]>,
        scale: f64,
        grads: &mut [Matrix],
    ) -> Result<()> {
        let steps = tape.steps();
        if steps.len() != actions.len() {
            return Err(shape_err("bptt actions", steps.len(), actions.len()));
        }
        if let Some(w) = weights {
            if w.len() != steps.len() {
                return Err(shape_err("bptt weights", steps.len(), w.len()));
            }
        }
        if grads.len() != self.params.len() {
            return Err(shape_err("bptt grads", self.params.len(), grads.len()));
        }

        let n_layers = self.layers.len();
        let memory_layer = self.n_recurrent - 1;
        let mut carry = vec![0.0; self.memory_dim()];

        for t in (0..steps.len()).rev() {
            let step = &steps[t];
            let w = scale * weights.map_or(1.0, |w| w[t]);
            let mut dz = self.head_output_grad(step, actions[t], w)?;

            for l in (0..n_layers).rev() {
                let x = if l == 0 { &step.input } else { &step.post[l - 1] };
                let slot = self.weight_slot(l, t);
                grads[slot].add_outer(1.0, &dz, x)?;
                if let Some(b) = self.slots[l].bias {
                    grads[b]
                        .as_mut_slice()
                        .iter_mut()
                        .zip(&dz)
                        .for_each(|(g, d)| *g += d);
                }

                let dx = self.params[slot].matvec_t(&dz)?;
                if l == 0 {
                    carry.copy_from_slice(&dx[self.input_dim..]);
                    break;
                }
                let mut da = dx;
                if l - 1 == memory_layer {
                    da.iter_mut().zip(&carry).for_each(|(a, c)| *a += c);
                }
                let below = l - 1;
                dz = self.layers[below].activation.backward(
                    &step.pre[below],
                    &step.post[below],
                    &da,
                );
            }
        }
        Ok(())
    }

    /// `w · ∂ log π(u | ·) / ∂z` for the pre-activation of the final layer.
    fn head_output_grad(&self, step: &super::StepCache, action: Action, w: f64) -> Result<Vec<f64>> {
        match (self.head_kind, action) {
            (HeadKind::Categorical, Action::Discrete(u)) => {
                let probs = step.post.last().expect("nonempty");
                if u >= probs.len() {
                    return Err(Error::InvalidAction(format!("index {u} of {}", probs.len())));
                }
                let beta = self
                    .layers
                    .last()
                    .and_then(|l| l.activation.softmax_beta())
                    .unwrap_or(1.0);
                Ok(probs
                    .iter()
                    .enumerate()
                    .map(|(i, &p)| w * beta * (f64::from(u8::from(i == u)) - p))
                    .collect())
            }
            (HeadKind::Gaussian, Action::Continuous(x)) => {
                let ActionDist::Gaussian { mean, std } = self.step_dist(step) else {
                    unreachable!("gaussian head");
                };
                let pre_std = step.post.last().expect("nonempty")[1];
                let diff = x - mean;
                let d_mean = diff / (std * std);
                let d_std = diff * diff / (std * std * std) - 1.0 / std;
                Ok(vec![w * d_mean, w * d_std * sigmoid(pre_std)])
            }
            (_, a) => Err(Error::InvalidAction(format!(
                "{a:?} does not match {:?} head",
                self.head_kind
            ))),
        }
    }
}
