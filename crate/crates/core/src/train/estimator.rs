use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rollout::Trajectory;
use crate::amr::add_amr_penalty_grad;
use crate::error::{Error, Result};
use crate::net::PolicyNet;
use crate::numerics::Matrix;

/// Rollouts per reduction chunk. Sums are formed inside a chunk in rollout
/// order and chunks are combined in chunk order, so the result does not
/// depend on the thread count.
pub const CHUNK: usize = 8;

/// How trajectory costs weight the score function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceReduction {
    /// `(Σ_t ∇ log π)(Σ_t c_t)`.
    #[default]
    Off,
    /// Each `∇ log π(u_t)` weighted by the costs of the states after it.
    RewardToGo,
    /// Batch-mean total cost subtracted from every trajectory's total cost.
    MeanBaseline,
}

impl std::str::FromStr for VarianceReduction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(Self::Off),
            "reward_to_go" => Ok(Self::RewardToGo),
            "mean_baseline" => Ok(Self::MeanBaseline),
            _ => Err(Error::Config(format!("unknown variance reduction `{s}`"))),
        }
    }
}

/// Per-chunk partial sums: `weighted = Σ_n w_n·g_n` and, for the mean
/// baseline, `plain = Σ_n g_n`.
pub(crate) struct ChunkSums {
    pub weighted: Vec<Matrix>,
    pub plain: Option<Vec<Matrix>>,
    pub cost_sum: f64,
    pub count: usize,
}

/// `Σ_t ∇ log π(u_t | m_t)` for one trajectory.
pub fn trajectory_score(net: &PolicyNet, traj: &Trajectory) -> Result<Vec<Matrix>> {
    net.bptt_logprob_grad(&traj.tape, &traj.actions)
}

fn reward_to_go(costs: &[f64]) -> Vec<f64> {
    // action t leads to state t + 1
    let mut w = vec![0.0; costs.len() - 1];
    let mut acc = 0.0;
    for t in (0..w.len()).rev() {
        acc += costs[t + 1];
        w[t] = acc;
    }
    w
}

pub(crate) fn chunk_sums(
    net: &PolicyNet,
    trajs: &[Trajectory],
    vr: VarianceReduction,
) -> Result<ChunkSums> {
    let mut weighted = net.zero_grads();
    let mut plain = matches!(vr, VarianceReduction::MeanBaseline).then(|| net.zero_grads());
    let mut cost_sum = 0.0;
    for tr in trajs {
        if tr.tape.len() != tr.actions.len() {
            return Err(Error::InvalidSpec("trajectory tape was dropped".into()));
        }
        cost_sum += tr.total_cost;
        match vr {
            VarianceReduction::Off => {
                net.accumulate_logprob_grad(&tr.tape, &tr.actions, None, tr.total_cost, &mut weighted)?
            }
            VarianceReduction::RewardToGo => {
                let w = reward_to_go(&tr.costs[..=tr.actions.len()]);
                net.accumulate_logprob_grad(&tr.tape, &tr.actions, Some(&w), 1.0, &mut weighted)?
            }
            VarianceReduction::MeanBaseline => {
                let g = trajectory_score(net, tr)?;
                let p = plain.as_mut().expect("allocated for baseline");
                for ((wv, pv), gv) in weighted.iter_mut().zip(p.iter_mut()).zip(&g) {
                    wv.add_scaled(tr.total_cost, gv)?;
                    pv.add_scaled(1.0, gv)?;
                }
            }
        }
    }
    Ok(ChunkSums {
        weighted,
        plain,
        cost_sum,
        count: trajs.len(),
    })
}

/// Folds chunk sums (in order) into the batch estimate and adds the penalty
/// gradient.
pub(crate) fn combine(net: &PolicyNet, chunks: Vec<ChunkSums>, lambda: f64) -> Result<Vec<Matrix>> {
    let n: usize = chunks.iter().map(|c| c.count).sum();
    if n == 0 {
        return Err(Error::Config("gradient estimate needs at least one trajectory".into()));
    }
    let mean_cost = chunks.iter().map(|c| c.cost_sum).sum::<f64>() / n as f64;
    let mut grad = net.zero_grads();
    for c in &chunks {
        for (g, w) in grad.iter_mut().zip(&c.weighted) {
            g.add_scaled(1.0, w)?;
        }
        if let Some(p) = &c.plain {
            for (g, pv) in grad.iter_mut().zip(p) {
                g.add_scaled(-mean_cost, pv)?;
            }
        }
    }
    for g in &mut grad {
        g.scale(1.0 / n as f64);
    }
    add_amr_penalty_grad(net, lambda, &mut grad);
    Ok(grad)
}

/// Empirical REINFORCE gradient of the expected total cost plus the penalty
/// gradient `λ ∇‖W_m‖_{2,1}`.
pub fn estimate_gradient(
    net: &PolicyNet,
    trajectories: &[Trajectory],
    lambda: f64,
    vr: VarianceReduction,
) -> Result<Vec<Matrix>> {
    if trajectories.is_empty() {
        return Err(Error::Config("gradient estimate needs at least one trajectory".into()));
    }
    let chunks = trajectories
        .par_chunks(CHUNK)
        .map(|c| chunk_sums(net, c, vr))
        .collect::<Result<Vec<_>>>()?;
    combine(net, chunks, lambda)
}
