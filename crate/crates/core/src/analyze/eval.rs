use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envs::{make_env_suite, EnvKind, Variant};
use crate::error::Result;
use crate::net::PolicyNet;
use crate::numerics::Rng;
use crate::train::{rollout, ActionMode};

/// One evaluated episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub variant: String,
    pub episode: usize,
    pub env_index: usize,
    pub total_cost: f64,
    /// Final distance to the goal over the initial distance.
    pub final_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: String,
    pub episodes: usize,
    pub mean_cost: f64,
    pub std_cost: f64,
    pub mean_final_distance: f64,
    pub std_final_distance: f64,
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub summaries: Vec<VariantSummary>,
    pub episodes: Vec<EpisodeRecord>,
}

impl EvalReport {
    /// Summaries recomputed from the episode records, variants in order of
    /// first appearance.
    pub fn from_records(episodes: Vec<EpisodeRecord>) -> Self {
        let mut order: Vec<String> = Vec::new();
        for e in &episodes {
            if !order.contains(&e.variant) {
                order.push(e.variant.clone());
            }
        }
        let summaries = order
            .into_iter()
            .map(|v| {
                let rows: Vec<&EpisodeRecord> = episodes.iter().filter(|e| e.variant == v).collect();
                let costs: Vec<f64> = rows.iter().map(|e| e.total_cost).collect();
                let dists: Vec<f64> = rows.iter().map(|e| e.final_distance).collect();
                let (mean_cost, std_cost) = mean_std(&costs);
                let (mean_final_distance, std_final_distance) = mean_std(&dists);
                VariantSummary {
                    variant: v,
                    episodes: rows.len(),
                    mean_cost,
                    std_cost,
                    mean_final_distance,
                    std_final_distance,
                }
            })
            .collect();
        Self {
            summaries,
            episodes,
        }
    }

    pub fn summary(&self, variant: Variant) -> Option<&VariantSummary> {
        self.summaries.iter().find(|s| s.variant == variant.as_str())
    }

    pub fn write_summary_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "variant,episodes,mean_cost,std_cost,mean_final_distance,std_final_distance")?;
        for s in &self.summaries {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                s.variant, s.episodes, s.mean_cost, s.std_cost, s.mean_final_distance, s.std_final_distance
            )?;
        }
        Ok(())
    }

    pub fn write_episodes_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "variant,episode,env_index,total_cost,final_distance")?;
        for e in &self.episodes {
            writeln!(
                w,
                "{},{},{},{},{}",
                e.variant, e.episode, e.env_index, e.total_cost, e.final_distance
            )?;
        }
        Ok(())
    }

    /// Fixed-width table, one row per variant.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<22} {:>18} {:>18}", "variant", "cost", "final dist.");
        for s in &self.summaries {
            let _ = writeln!(
                out,
                "{:<22} {:>18} {:>18}",
                s.variant,
                format!("{:.2} ± {:.2}", s.mean_cost, s.std_cost),
                format!("{:.3} ± {:.3}", s.mean_final_distance, s.std_final_distance)
            );
        }
        out
    }
}

/// Evaluation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSpec {
    pub suite_seed: u64,
    pub episodes: usize,
    pub mode: ActionMode,
    pub augment_action: bool,
    /// Seed for action sampling; episode `i` uses the same stream in every
    /// variant so comparisons are paired.
    pub seed: u64,
}

/// Runs `spec.episodes` episodes per variant. Episode `i` uses suite
/// instance `i mod len`, so variants that share geometry are compared
/// maze by maze.
pub fn evaluate(net: &PolicyNet, kind: &EnvKind, variants: &[Variant], spec: &EvalSpec) -> Result<EvalReport> {
    let mut records = Vec::new();
    for &v in variants {
        let suite = make_env_suite(kind, v, spec.suite_seed)?;
        let rows = (0..spec.episodes)
            .into_par_iter()
            .map(|i| {
                let idx = i % suite.len();
                let mut env = suite.instance(idx);
                let mut rng = Rng::derived(spec.seed, &[i as u64]);
                let t = rollout(net, env.as_mut(), idx, &mut rng, spec.mode, spec.augment_action)?;
                Ok(EpisodeRecord {
                    variant: v.as_str().to_owned(),
                    episode: i,
                    env_index: idx,
                    total_cost: t.total_cost,
                    final_distance: t.final_cost(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        records.extend(rows);
    }
    Ok(EvalReport::from_records(records))
}
