//! Independent reference computations shared by integration tests: random
//! small networks, central finite differences, and the exact policy gradient
//! of the toy MDP by trajectory enumeration.

#![allow(dead_code)]

use amr_core::amr::{amr_penalty, amr_penalty_grad, stacked_memory_weights};
use amr_core::envs::{Environment, ToyMdp};
use amr_core::net::{Action, Activation, HeadKind, LayerSpec, PolicyNet};
use amr_core::numerics::{row_norms, Matrix, Rng};
use amr_core::train::{estimate_gradient, rollout, rollout_rng, trajectory_score, ActionMode, VarianceReduction};

pub const DELTA: f64 = 1e-6;

pub const ACTIVATIONS: [Activation; 6] = [
    Activation::Tanh,
    Activation::Elu,
    Activation::Softmax,
    Activation::BetaSoftmax(4.0),
    Activation::BetaSoftmax(100.0),
    Activation::Linear,
];

pub struct Case {
    pub net: PolicyNet,
    pub inputs: Vec<Vec<f64>>,
    pub actions: Vec<Action>,
}

fn dim(rng: &mut Rng) -> usize {
    1 + rng.index(6)
}

/// Random architecture with every dimension at most 6 and 1 to 5 steps.
/// Activations cycle with `k` so each appears in every position across a
/// batch; even `k` gets a categorical head, odd `k` a Gaussian one.
pub fn random_case(k: usize, rng: &mut Rng) -> Case {
    let head = if k.is_multiple_of(2) { HeadKind::Categorical } else { HeadKind::Gaussian };
    let input_dim = dim(rng);
    let memory_dim = 1 + dim(rng).min(5);
    let horizon = 1 + rng.index(5);
    let memory_steps = if k.is_multiple_of(3) { horizon } else { 1 };

    let act = |j: usize| ACTIVATIONS[(k + j) % ACTIVATIONS.len()];
    let mut layers = Vec::new();
    let mut width = input_dim + memory_dim;
    let hidden = rng.index(3);
    for j in 0..hidden {
        let w = dim(rng);
        // the layer feeding the memory layer is always tanh
        let a = if j + 1 == hidden { Activation::Tanh } else { act(j) };
        layers.push(LayerSpec::new(width, w, a));
        width = w;
    }
    let mut memory = LayerSpec::new(width, memory_dim, act(2));
    memory.bias = rng.uniform() < 0.5;
    layers.push(memory);
    let n_recurrent = layers.len();
    width = memory_dim;
    for j in 0..rng.index(2) {
        let w = dim(rng);
        layers.push(LayerSpec::new(width, w, act(3 + j)));
        width = w;
    }
    layers.push(match head {
        HeadKind::Categorical => LayerSpec::new(width, 2 + rng.index(5), Activation::Softmax),
        HeadKind::Gaussian => LayerSpec::new(width, 2, Activation::Linear),
    });

    let mut net = PolicyNet::init(input_dim, layers, n_recurrent, head, memory_steps, rng).unwrap();
    for p in net.params_mut() {
        for v in p.as_mut_slice() {
            *v += 0.5 * rng.standard_normal();
        }
    }
    let inputs: Vec<Vec<f64>> = (0..horizon)
        .map(|_| (0..input_dim).map(|_| rng.standard_normal()).collect())
        .collect();
    let tape = net.replay(&inputs).unwrap();
    let actions = tape
        .steps()
        .iter()
        .map(|s| net.step_dist(s).sample(rng).unwrap())
        .collect();
    Case { net, inputs, actions }
}

pub fn log_prob(net: &PolicyNet, inputs: &[Vec<f64>], actions: &[Action]) -> f64 {
    let tape = net.replay(inputs).unwrap();
    net.tape_log_prob(&tape, actions).unwrap()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)` over all parameter entries.
pub fn relative_error(a: &[Matrix], b: &[Matrix]) -> f64 {
    let (mut diff, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        for (&u, &v) in x.as_slice().iter().zip(y.as_slice()) {
            diff += (u - v) * (u - v);
            na += u * u;
            nb += v * v;
        }
    }
    let scale = na.max(nb).sqrt();
    if scale == 0.0 {
        0.0
    } else {
        diff.sqrt() / scale
    }
}

pub fn central_difference(net: &PolicyNet, f: impl Fn(&PolicyNet) -> f64) -> Vec<Matrix> {
    let mut probe = net.clone();
    let mut out = net.zero_grads();
    for (slot, g) in out.iter_mut().enumerate() {
        for i in 0..g.len() {
            let v = probe.params()[slot].as_slice()[i];
            probe.params_mut()[slot].as_mut_slice()[i] = v + DELTA;
            let up = f(&probe);
            probe.params_mut()[slot].as_mut_slice()[i] = v - DELTA;
            let down = f(&probe);
            probe.params_mut()[slot].as_mut_slice()[i] = v;
            g.as_mut_slice()[i] = (up - down) / (2.0 * DELTA);
        }
    }
    out
}

/// Worst BPTT-vs-finite-difference relative error over `nets` random cases.
pub fn worst_logprob_gradient_error(nets: usize, seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    (0..nets)
        .map(|k| {
            let case = random_case(k, &mut rng);
            let tape = case.net.replay(&case.inputs).unwrap();
            let analytic = case.net.bptt_logprob_grad(&tape, &case.actions).unwrap();
            let numeric = central_difference(&case.net, |n| log_prob(n, &case.inputs, &case.actions));
            relative_error(&analytic, &numeric)
        })
        .fold(0.0, f64::max)
}

/// Worst penalty-gradient relative error, skipping nets with a memory row
/// norm within `10·DELTA` of the kink. Returns `(worst, nets checked)`.
pub fn worst_penalty_gradient_error(nets: usize, seed: u64) -> (f64, usize) {
    let mut rng = Rng::new(seed);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for k in 0..nets {
        let case = random_case(k, &mut rng);
        let lambda = 0.1 + rng.uniform();
        if row_norms(&stacked_memory_weights(&case.net)).iter().any(|&r| r <= 10.0 * DELTA) {
            continue;
        }
        let analytic = amr_penalty_grad(&case.net, lambda);
        let numeric = central_difference(&case.net, |n| amr_penalty(n, lambda));
        worst = worst.max(relative_error(&analytic, &numeric));
        checked += 1;
    }
    (worst, checked)
}

/// Recurrent policy for the toy MDP: one-hot state in, 2 tanh memory units,
/// 2-way softmax out, with random weights.
pub fn toy_policy(seed: u64) -> PolicyNet {
    let mut rng = Rng::new(seed);
    let mut net = PolicyNet::init(
        2,
        vec![
            LayerSpec::new(4, 2, Activation::Tanh),
            LayerSpec::new(2, 2, Activation::Softmax),
        ],
        1,
        HeadKind::Categorical,
        1,
        &mut rng,
    )
    .unwrap();
    for p in net.params_mut() {
        for v in p.as_mut_slice() {
            *v += 0.7 * rng.standard_normal();
        }
    }
    net
}

/// Probability of picking `a` after observing `history`.
fn action_prob(net: &PolicyNet, history: &[Vec<f64>], a: usize) -> f64 {
    let tape = net.replay(history).unwrap();
    net.step_dist(tape.steps().last().unwrap())
        .log_prob(Action::Discrete(a))
        .unwrap()
        .exp()
}

/// Expected total cost `Σ_τ p(τ) Σ_t c(s_t)` by enumerating every state and
/// action sequence.
pub fn toy_expected_cost(net: &PolicyNet, mdp: &ToyMdp) -> f64 {
    fn go(net: &PolicyNet, mdp: &ToyMdp, states: &mut Vec<usize>, p: f64) -> f64 {
        let s = *states.last().unwrap();
        if states.len() == mdp.horizon + 1 {
            return p * states.iter().map(|&s| mdp.state_cost[s]).sum::<f64>();
        }
        let history: Vec<Vec<f64>> = states.iter().map(|&s| ToyMdp::observation(s)).collect();
        let mut total = 0.0;
        for a in 0..2 {
            let pa = action_prob(net, &history, a);
            for next in 0..2 {
                states.push(next);
                total += go(net, mdp, states, p * pa * mdp.transition[s][a][next]);
                states.pop();
            }
        }
        total
    }
    (0..2)
        .map(|s0| go(net, mdp, &mut vec![s0], mdp.initial[s0]))
        .sum()
}

/// Exact policy gradient: finite differences of the enumerated expectation.
pub fn toy_exact_gradient(net: &PolicyNet, mdp: &ToyMdp) -> Vec<Matrix> {
    central_difference(net, |n| toy_expected_cost(n, mdp))
}

/// Monte Carlo gradient over `n` sampled episodes.
pub struct McGradient {
    /// What `estimate_gradient` returned.
    pub estimate: Vec<f64>,
    /// Per-sample mean of `C(τ)·∇ log π(τ)`, computed here.
    pub mean: Vec<f64>,
    /// Standard error of `mean`.
    pub std_error: Vec<f64>,
}

pub fn toy_mc_gradient(net: &PolicyNet, mdp: &ToyMdp, n: usize, seed: u64, vr: VarianceReduction) -> McGradient {
    let trajs: Vec<_> = (0..n)
        .map(|i| {
            let mut env: Box<dyn Environment> = Box::new(mdp.clone());
            let mut rng = rollout_rng(seed, 0, i as u64);
            rollout(net, env.as_mut(), 0, &mut rng, ActionMode::Sample, false).unwrap()
        })
        .collect();
    let flat = |g: &[Matrix]| g.iter().flat_map(|m| m.as_slice().to_vec()).collect::<Vec<f64>>();
    let estimate = flat(&estimate_gradient(net, &trajs, 0.0, vr).unwrap());
    let dim = estimate.len();
    let (mut sum, mut sq) = (vec![0.0; dim], vec![0.0; dim]);
    for t in &trajs {
        let g = flat(&trajectory_score(net, t).unwrap());
        for j in 0..dim {
            let x = t.total_cost * g[j];
            sum[j] += x;
            sq[j] += x * x;
        }
    }
    let nf = n as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
    let std_error = sq
        .iter()
        .zip(&mean)
        .map(|(q, m)| ((q / nf - m * m).max(0.0) * nf / (nf - 1.0) / nf).sqrt())
        .collect();
    McGradient { estimate, mean, std_error }
}
