//! Active memory reduction: the ℓ2,1 penalty on the memory layer's incoming
//! weights, memory saliency, and hard removal of cut memory dimensions.
//!
//! For a time-varying memory layer the per-step matrices are stacked side by
//! side, so one row of the stacked matrix holds every weight feeding memory
//! dimension `i` at any step.

use std::io::Write;

use crate::error::{Error, Result};
use crate::net::PolicyNet;
use crate::numerics::{l21_norm, l21_subgradient, Matrix, RowNorm};

/// Default ratio below which a dimension's saliency counts as negligible
/// relative to the largest one.
pub const DEFAULT_CUTOFF_RATIO: f64 = 1e-2;

/// `[W_m0 W_m1 ...]`, or `W_m` itself for a time-invariant memory layer.
pub fn stacked_memory_weights(net: &PolicyNet) -> Matrix {
    let parts = net.memory_weights();
    let rows = parts[0].rows();
    let cols: usize = parts.iter().map(|p| p.cols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    for i in 0..rows {
        let row = out.row_mut(i);
        let mut at = 0;
        for p in &parts {
            row[at..at + p.cols()].copy_from_slice(p.row(i));
            at += p.cols();
        }
    }
    out
}

/// `λ ‖W̄_m‖_{2,1}`.
pub fn amr_penalty(net: &PolicyNet, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    lambda * l21_norm(&stacked_memory_weights(net))
}

/// Gradient of [`amr_penalty`] laid out like `net.params()`; every tensor
/// other than the memory weights is zero.
pub fn amr_penalty_grad(net: &PolicyNet, lambda: f64) -> Vec<Matrix> {
    let mut grads = net.zero_grads();
    add_amr_penalty_grad(net, lambda, &mut grads);
    grads
}

/// Adds the penalty gradient into an existing gradient list.
pub fn add_amr_penalty_grad(net: &PolicyNet, lambda: f64, grads: &mut [Matrix]) {
    if lambda == 0.0 {
        return;
    }
    let sub = l21_subgradient(&stacked_memory_weights(net));
    let mut at = 0;
    for &slot in net.memory_weight_slots() {
        let g = &mut grads[slot];
        let cols = g.cols();
        for i in 0..g.rows() {
            for (gv, sv) in g.row_mut(i).iter_mut().zip(&sub.row(i)[at..at + cols]) {
                *gv += lambda * sv;
            }
        }
        at += cols;
    }
}

/// Per-dimension memory saliency and the dimensions that survive the cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyReport {
    /// `Σ_j |W_m(i, j)|`; for a time-varying layer, the largest such sum
    /// over the per-step matrices.
    pub saliency: Vec<f64>,
    /// Ascending indices with `saliency[i] ≥ cutoff_ratio · max saliency`.
    pub retained: Vec<usize>,
    pub cutoff_ratio: f64,
}

impl SaliencyReport {
    pub fn from_saliency(saliency: Vec<f64>, cutoff_ratio: f64) -> Self {
        let threshold = cutoff_ratio * saliency.iter().fold(0.0f64, |m, &s| m.max(s));
        let retained = saliency
            .iter()
            .enumerate()
            .filter(|(_, &s)| s >= threshold)
            .map(|(i, _)| i)
            .collect();
        Self {
            saliency,
            retained,
            cutoff_ratio,
        }
    }

    pub fn max_saliency(&self) -> f64 {
        self.saliency.iter().fold(0.0, |m: f64, &s| m.max(s))
    }

    /// Absolute saliency below which a dimension is cut.
    pub fn threshold(&self) -> f64 {
        self.cutoff_ratio * self.max_saliency()
    }

    pub fn is_retained(&self, i: usize) -> bool {
        self.retained.binary_search(&i).is_ok()
    }

    /// Saliency values sorted in decreasing order.
    pub fn ranked(&self) -> Vec<f64> {
        let mut s = self.saliency.clone();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    /// Sum of saliency over cut dimensions.
    pub fn cut_saliency(&self) -> f64 {
        self.saliency
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.is_retained(*i))
            .map(|(_, s)| s)
            .sum()
    }

    /// `dimension,saliency,retained` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "dimension,saliency,retained")?;
        for (i, s) in self.saliency.iter().enumerate() {
            writeln!(w, "{i},{s:e},{}", u8::from(self.is_retained(i)))?;
        }
        Ok(())
    }
}

pub fn memory_saliency(net: &PolicyNet, cutoff_ratio: f64) -> SaliencyReport {
    let mut saliency = vec![0.0f64; net.memory_dim()];
    for w in net.memory_weights() {
        for (s, row) in saliency.iter_mut().zip(w.row_iter()) {
            *s = s.max(RowNorm::L1.of(row));
        }
    }
    SaliencyReport::from_saliency(saliency, cutoff_ratio)
}

/// Removes the memory dimensions not in `report.retained`.
///
/// Deletes the cut rows of the memory weights and bias, the matching
/// recurrent-feedback columns of the first layer, and the matching columns
/// of the first head layer. When the cut rows are exactly zero and the
/// memory activation maps zero to zero, the reduced network reproduces the
/// original action distribution. A network's start dimension is always
/// kept, since the first step reads it even if no row writes to it.
pub fn hard_reduce(net: &PolicyNet, report: &SaliencyReport) -> Result<PolicyNet> {
    if report.retained.is_empty() {
        return Err(Error::EmptyRetained);
    }
    let d = net.memory_dim();
    if report.saliency.len() != d || report.retained.iter().any(|&i| i >= d) {
        return Err(Error::InvalidSpec(format!(
            "saliency report for {} dimensions applied to memory width {d}",
            report.saliency.len()
        )));
    }
    // the start dimension feeds the first step even when nothing writes to it
    let mut keep = report.retained.clone();
    if let Some(s) = net.start_state() {
        if !keep.contains(&s) {
            keep.push(s);
            keep.sort_unstable();
        }
    }
    let keep = &keep;
    let k = net.memory_layer_index();
    let input_dim = net.input_dim();
    let first_cols: Vec<usize> = (0..input_dim)
        .chain(keep.iter().map(|&i| input_dim + i))
        .collect();

    let mut layers = net.layers().to_vec();
    layers[0].input_dim = first_cols.len();
    layers[k].output_dim = keep.len();
    layers[k + 1].input_dim = keep.len();

    let mut params = Vec::with_capacity(net.params().len());
    for l in 0..layers.len() {
        for &slot in net.weight_slots(l) {
            let mut w = net.params()[slot].clone();
            if l == 0 {
                w = w.select_cols(&first_cols);
            }
            if l == k {
                w = w.select_rows(keep);
            }
            if l == k + 1 {
                w = w.select_cols(keep);
            }
            params.push(w);
        }
        if let Some(slot) = net.bias_slot(l) {
            let b = &net.params()[slot];
            params.push(if l == k { b.select_rows(keep) } else { b.clone() });
        }
    }
    let start = net.start_state().map(|s| keep.iter().position(|&i| i == s).expect("kept above"));
    net.with_layers_and_params(layers, params)?.with_start_state(start)
}
