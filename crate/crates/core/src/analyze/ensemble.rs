use std::io::Write;

use rayon::prelude::*;

use super::eval::{mean_std, EvalReport};
use crate::amr::SaliencyReport;
use crate::error::{Error, Result};

/// What one seed's train-and-evaluate run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub saliency: SaliencyReport,
    pub eval: Option<EvalReport>,
    /// Moore machine size, for discrete-memory policies.
    pub num_states: Option<usize>,
}

/// Across-seed statistics for one evaluation variant, computed over the
/// per-seed means.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleVariant {
    pub variant: String,
    pub seeds: usize,
    pub mean_cost: f64,
    pub std_cost: f64,
    pub mean_final_distance: f64,
    pub std_final_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleReport {
    pub runs: Vec<SeedRun>,
    pub failures: Vec<(u64, String)>,
    /// Saliency sorted descending per seed, then averaged rank by rank.
    pub saliency_rank_mean: Vec<f64>,
    pub saliency_rank_std: Vec<f64>,
    pub variants: Vec<EnsembleVariant>,
}

impl EnsembleReport {
    pub fn from_runs(runs: Vec<SeedRun>, failures: Vec<(u64, String)>) -> Self {
        let ranked: Vec<Vec<f64>> = runs.iter().map(|r| r.saliency.ranked()).collect();
        let depth = ranked.iter().map(Vec::len).min().unwrap_or(0);
        let (saliency_rank_mean, saliency_rank_std) = (0..depth)
            .map(|k| mean_std(&ranked.iter().map(|r| r[k]).collect::<Vec<_>>()))
            .unzip();

        let mut names: Vec<String> = Vec::new();
        for r in &runs {
            for s in r.eval.iter().flat_map(|e| &e.summaries) {
                if !names.contains(&s.variant) {
                    names.push(s.variant.clone());
                }
            }
        }
        let variants = names
            .into_iter()
            .map(|v| {
                let per_seed: Vec<_> = runs
                    .iter()
                    .filter_map(|r| r.eval.as_ref()?.summaries.iter().find(|s| s.variant == v))
                    .collect();
                let (mean_cost, std_cost) =
                    mean_std(&per_seed.iter().map(|s| s.mean_cost).collect::<Vec<_>>());
                let (mean_final_distance, std_final_distance) =
                    mean_std(&per_seed.iter().map(|s| s.mean_final_distance).collect::<Vec<_>>());
                EnsembleVariant {
                    variant: v,
                    seeds: per_seed.len(),
                    mean_cost,
                    std_cost,
                    mean_final_distance,
                    std_final_distance,
                }
            })
            .collect();

        Self {
            runs,
            failures,
            saliency_rank_mean,
            saliency_rank_std,
            variants,
        }
    }

    /// `rank,mean,std` for the `top` largest saliency ranks.
    pub fn write_saliency_csv<W: Write>(&self, mut w: W, top: usize) -> Result<()> {
        writeln!(w, "rank,mean,std")?;
        for (k, (m, s)) in self
            .saliency_rank_mean
            .iter()
            .zip(&self.saliency_rank_std)
            .take(top)
            .enumerate()
        {
            writeln!(w, "{},{m},{s}", k + 1)?;
        }
        Ok(())
    }

    pub fn write_variants_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "variant,seeds,mean_cost,std_cost,mean_final_distance,std_final_distance")?;
        for v in &self.variants {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                v.variant, v.seeds, v.mean_cost, v.std_cost, v.mean_final_distance, v.std_final_distance
            )?;
        }
        Ok(())
    }

    /// Histogram of Moore machine sizes: `(states, seeds)`.
    pub fn state_counts(&self) -> Vec<(usize, usize)> {
        let mut counts = std::collections::BTreeMap::new();
        for n in self.runs.iter().filter_map(|r| r.num_states) {
            *counts.entry(n).or_insert(0) += 1;
        }
        counts.into_iter().collect()
    }
}

/// Runs `run` for every seed (in parallel); failed seeds are recorded and
/// the rest are aggregated.
pub fn seed_ensemble<F>(seeds: &[u64], run: F) -> Result<EnsembleReport>
where
    F: Fn(u64) -> Result<SeedRun> + Sync,
{
    if seeds.is_empty() {
        return Err(Error::Config("seed list is empty".into()));
    }
    let results: Vec<(u64, Result<SeedRun>)> = seeds.par_iter().map(|&s| (s, run(s))).collect();
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (s, r) in results {
        match r {
            Ok(r) => runs.push(r),
            Err(e) => {
                log::error!("seed {s} failed: {e}");
                failures.push((s, e.to_string()));
            }
        }
    }
    Ok(EnsembleReport::from_runs(runs, failures))
}
