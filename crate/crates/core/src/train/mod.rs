//! REINFORCE training with the optional ℓ2,1 memory penalty (λ = 0 gives
//! the plain policy-gradient baseline).

mod estimator;
mod rollout;

pub use estimator::{estimate_gradient, trajectory_score, VarianceReduction, CHUNK};
pub use rollout::{
    action_augment_dim, collect_rollouts, policy_input_dim, rollout, rollout_rng, seeded_rollout,
    ActionMode, Trajectory,
};

use std::fmt;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amr::{amr_penalty, memory_saliency};
use crate::envs::EnvSuite;
use crate::error::{Error, Result};
use crate::net::{ForwardTape, PolicyNet};
use crate::numerics::{derive_seed, AdamState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// When set, the learning rate falls linearly from `learning_rate` at
    /// the first epoch to this value at the last one.
    pub final_learning_rate: Option<f64>,
    /// Weight of the ℓ2,1 memory penalty; zero trains the plain baseline.
    pub lambda: f64,
    pub max_epochs: usize,
    pub rollouts_per_epoch: usize,
    pub seed: u64,
    pub variance_reduction: VarianceReduction,
    /// Epochs per moving-average window; zero disables early stopping.
    pub convergence_window: usize,
    /// Stop when consecutive window averages of the objective differ by
    /// less than this fraction.
    pub convergence_tol: f64,
    /// Saliency cutoff used for the logged retained-dimension count.
    pub cutoff_ratio: f64,
    /// Append the previous action to each observation.
    pub augment_action: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-1,
            final_learning_rate: None,
            lambda: 1e-1,
            max_epochs: 300,
            rollouts_per_epoch: 100,
            seed: 0,
            variance_reduction: VarianceReduction::Off,
            convergence_window: 50,
            convergence_tol: 1e-4,
            cutoff_ratio: crate::amr::DEFAULT_CUTOFF_RATIO,
            augment_action: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if let Some(lr) = self.final_learning_rate {
            if !(lr >= 0.0 && lr.is_finite()) {
                return bad("final_learning_rate must be non-negative");
            }
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be non-negative");
        }
        if self.rollouts_per_epoch == 0 {
            return bad("rollouts_per_epoch must be at least 1");
        }
        if !(self.cutoff_ratio >= 0.0 && self.cutoff_ratio <= 1.0) {
            return bad("cutoff_ratio must lie in [0, 1]");
        }
        if !(self.convergence_tol >= 0.0) {
            return bad("convergence_tol must be non-negative");
        }
        Ok(())
    }

    /// Learning rate for the update after `epoch`.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        match self.final_learning_rate {
            Some(end) if self.max_epochs > 1 => {
                let frac = epoch.min(self.max_epochs - 1) as f64 / (self.max_epochs - 1) as f64;
                self.learning_rate + (end - self.learning_rate) * frac
            }
            _ => self.learning_rate,
        }
    }
}

/// One epoch's log record; statistics refer to the parameters that
/// generated the epoch's rollouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mean_cost: f64,
    pub std_cost: f64,
    pub mean_final_cost: f64,
    pub penalty: f64,
    /// `mean_cost + penalty`
    pub objective: f64,
    pub retained_dims: usize,
    pub max_saliency: f64,
    pub grad_norm: f64,
    /// Largest saliency values, descending (at most 15).
    pub top_saliency: Vec<f64>,
    pub wall_time: f64,
}

impl EpochMetrics {
    pub const CSV_HEADER: &'static str =
        "epoch,mean_cost,std_cost,mean_final_cost,penalty,objective,retained_dims,max_saliency,grad_norm";

    /// CSV fields matching [`Self::CSV_HEADER`]; timing is left out so the
    /// file is reproducible.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.mean_cost,
            self.std_cost,
            self.mean_final_cost,
            self.penalty,
            self.objective,
            self.retained_dims,
            self.max_saliency,
            self.grad_norm
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters after the last update.
    pub net: PolicyNet,
    /// Parameters of the epoch with the lowest objective.
    pub best_net: PolicyNet,
    pub best_epoch: usize,
    pub metrics: Vec<EpochMetrics>,
    pub converged: bool,
}

/// Training stopped on a non-finite value. `net` holds the parameters of
/// the failing epoch for inspection.
#[derive(Debug)]
pub struct TrainFailure {
    pub error: Error,
    pub epoch: usize,
    pub net: PolicyNet,
    pub metrics: Vec<EpochMetrics>,
}

impl fmt::Display for TrainFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "training failed at epoch {}: {}", self.epoch, self.error)
    }
}

impl std::error::Error for TrainFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn window_converged(objective: &[f64], window: usize, tol: f64) -> bool {
    let n = objective.len();
    if window == 0 || n < 2 * window {
        return false;
    }
    let recent = objective[n - window..].iter().sum::<f64>() / window as f64;
    let before = objective[n - 2 * window..n - window].iter().sum::<f64>() / window as f64;
    (recent - before).abs() <= tol * before.abs().max(f64::MIN_POSITIVE)
}

/// Rollouts and summed gradient terms for one epoch. Trajectory tapes are
/// dropped once their chunk has been reduced.
fn run_epoch(
    net: &PolicyNet,
    suite: &EnvSuite,
    config: &TrainConfig,
    epoch: u64,
) -> Result<(Vec<Trajectory>, Vec<crate::numerics::Matrix>)> {
    let n = config.rollouts_per_epoch;
    let n_chunks = n.div_ceil(CHUNK);
    let parts = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut trajs = (c * CHUNK..((c + 1) * CHUNK).min(n))
                .map(|i| {
                    seeded_rollout(
                        net,
                        suite,
                        config.seed,
                        epoch,
                        i as u64,
                        ActionMode::Sample,
                        config.augment_action,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let sums = estimator::chunk_sums(net, &trajs, config.variance_reduction)?;
            for t in &mut trajs {
                t.tape = ForwardTape::new();
            }
            Ok((trajs, sums))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut trajs = Vec::with_capacity(n);
    let mut chunks = Vec::with_capacity(n_chunks);
    for (t, s) in parts {
        trajs.extend(t);
        chunks.push(s);
    }
    let grad = estimator::combine(net, chunks, config.lambda)?;
    Ok((trajs, grad))
}

/// Runs AMR-PG from `net` until `max_epochs` or the objective plateaus.
/// `on_epoch` sees each epoch's metrics and the parameters that produced them.
pub fn train(
    net: PolicyNet,
    suite: &EnvSuite,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics, &PolicyNet),
) -> std::result::Result<TrainOutcome, TrainFailure> {
    let fail = |error, epoch, net: &PolicyNet, metrics: &[EpochMetrics]| TrainFailure {
        error,
        epoch,
        net: net.clone(),
        metrics: metrics.to_vec(),
    };
    if let Err(e) = config.validate() {
        return Err(fail(e, 0, &net, &[]));
    }

    let mut net = net;
    let mut adam = AdamState::new(config.learning_rate, net.params());
    let mut metrics: Vec<EpochMetrics> = Vec::new();
    let mut objective = Vec::new();
    let mut best: Option<(f64, usize, PolicyNet)> = None;
    let mut converged = false;
    let started = Instant::now();

    for epoch in 0..config.max_epochs {
        let (trajs, grad) = match run_epoch(&net, suite, config, epoch as u64) {
            Ok(r) => r,
            Err(e) => return Err(fail(e, epoch, &net, &metrics)),
        };
        let costs: Vec<f64> = trajs.iter().map(|t| t.total_cost).collect();
        let finals: Vec<f64> = trajs.iter().map(Trajectory::final_cost).collect();
        let (mean_cost, std_cost) = mean_std(&costs);
        let penalty = amr_penalty(&net, config.lambda);
        let saliency = memory_saliency(&net, config.cutoff_ratio);
        let grad_norm = grad
            .iter()
            .map(|g| g.as_slice().iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt();
        let m = EpochMetrics {
            epoch,
            mean_cost,
            std_cost,
            mean_final_cost: mean_std(&finals).0,
            penalty,
            objective: mean_cost + penalty,
            retained_dims: saliency.retained.len(),
            max_saliency: saliency.max_saliency(),
            grad_norm,
            top_saliency: saliency.ranked().into_iter().take(15).collect(),
            wall_time: started.elapsed().as_secs_f64(),
        };
        on_epoch(&m, &net);
        objective.push(m.objective);
        metrics.push(m);

        if !grad_norm.is_finite() || !mean_cost.is_finite() {
            return Err(fail(
                Error::NonFinite(format!("gradient or cost at epoch {epoch}")),
                epoch,
                &net,
                &metrics,
            ));
        }
        if best.as_ref().is_none_or(|(b, _, _)| objective[epoch] < *b) {
            best = Some((objective[epoch], epoch, net.clone()));
        }

        let before = net.clone();
        adam.learning_rate = config.learning_rate_at(epoch);
        if let Err(e) = adam.step(net.params_mut(), &grad) {
            return Err(fail(e, epoch, &before, &metrics));
        }
        if !net.is_finite() {
            return Err(fail(
                Error::NonFinite(format!("parameters after update at epoch {epoch}")),
                epoch,
                &before,
                &metrics,
            ));
        }
        if window_converged(&objective, config.convergence_window, config.convergence_tol) {
            converged = true;
            break;
        }
    }

    let (best_net, best_epoch) = match best {
        Some((_, e, n)) => (n, e),
        None => (net.clone(), 0),
    };
    Ok(TrainOutcome {
        net,
        best_net,
        best_epoch,
        metrics,
        converged,
    })
}

/// Trains a reduced network without the penalty for `epochs` epochs.
pub fn finetune_reduced(
    net: PolicyNet,
    suite: &EnvSuite,
    config: &TrainConfig,
    epochs: usize,
    on_epoch: impl FnMut(&EpochMetrics, &PolicyNet),
) -> std::result::Result<TrainOutcome, TrainFailure> {
    let config = TrainConfig {
        lambda: 0.0,
        max_epochs: epochs,
        seed: derive_seed(config.seed, &[u64::from_le_bytes(*b"finetune")]),
        ..config.clone()
    };
    train(net, suite, &config, on_epoch)
}
