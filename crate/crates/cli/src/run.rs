//! Run directories and the pipelines behind each CLI verb.
//!
//! ```text
//! <run>/config.snapshot      exact config used, re-parseable
//! <run>/checkpoints/         seed-<s>-{final,best,reduced,diagnostic}.ckpt
//! <run>/metrics.csv          per-epoch metrics, sorted by seed then epoch
//! <run>/metrics.ndjson       the same records plus timing, as they happen
//! <run>/suites/              maze scene files per variant
//! <run>/reports/             evaluation, saliency and machine outputs
//! <run>/plots/               SVG charts drawn from the report CSVs
//! <run>/FAILED               present when any seed failed
//! ```

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use amr_core::amr::{hard_reduce, memory_saliency};
use amr_core::analyze::{
    evaluate, extract_moore_machine, EnsembleReport, EvalReport, EvalSpec, MooreMachine, SeedRun,
};
use amr_core::envs::{make_env_suite, write_scenes, EnvSuite, Variant};
use amr_core::net::{read_checkpoint, write_checkpoint, PolicyNet};
use amr_core::numerics::{derive_seed, Rng};
use amr_core::train::{finetune_reduced, train, ActionMode, EpochMetrics, TrainFailure, TrainOutcome};
use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;

use crate::config::{EnvConfig, ExperimentConfig};

/// Stream coordinate for network initialization.
const INIT_STREAM: u64 = 0x696e6974;
/// Stream coordinate for evaluation sampling.
const EVAL_STREAM: u64 = 0x6576616c;

#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    /// Creates `<base>/<name>-<unix seconds>` (with a numeric suffix if taken).
    pub fn create_timestamped(base: &Path, name: &str) -> Result<Self> {
        let secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let mut root = base.join(format!("{name}-{secs}"));
        let mut k = 1;
        while root.exists() {
            root = base.join(format!("{name}-{secs}-{k}"));
            k += 1;
        }
        Self::create_at(&root)
    }

    pub fn create_at(root: &Path) -> Result<Self> {
        for sub in ["checkpoints", "suites", "reports", "plots"] {
            fs::create_dir_all(root.join(sub))
                .with_context(|| format!("creating {}", root.join(sub).display()))?;
        }
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    /// An existing run; fails if it has no config snapshot.
    pub fn open(root: &Path) -> Result<Self> {
        let run = Self {
            root: root.to_path_buf(),
        };
        if !run.snapshot().is_file() {
            bail!("missing {}", run.snapshot().display());
        }
        Ok(run)
    }

    pub fn snapshot(&self) -> PathBuf {
        self.root.join("config.snapshot")
    }

    pub fn checkpoint(&self, seed: u64, tag: &str) -> PathBuf {
        self.root.join("checkpoints").join(format!("seed-{seed}-{tag}.ckpt"))
    }

    pub fn metrics_csv(&self) -> PathBuf {
        self.root.join("metrics.csv")
    }

    pub fn metrics_ndjson(&self) -> PathBuf {
        self.root.join("metrics.ndjson")
    }

    pub fn suite_file(&self, variant: Variant) -> PathBuf {
        self.root.join("suites").join(format!("{variant}.scenes"))
    }

    pub fn report(&self, name: &str) -> PathBuf {
        self.root.join("reports").join(name)
    }

    pub fn plot(&self, name: &str) -> PathBuf {
        self.root.join("plots").join(name)
    }

    pub fn failed_marker(&self) -> PathBuf {
        self.root.join("FAILED")
    }

    pub fn config(&self) -> Result<ExperimentConfig> {
        Ok(ExperimentConfig::load(&self.snapshot())?)
    }

    pub fn load_net(&self, seed: u64, tag: &str) -> Result<PolicyNet> {
        let path = self.checkpoint(seed, tag);
        let f = File::open(&path).with_context(|| format!("missing {}", path.display()))?;
        read_checkpoint(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
    }

    fn save_net(&self, seed: u64, tag: &str, net: &PolicyNet) -> Result<()> {
        let path = self.checkpoint(seed, tag);
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(f);
        write_checkpoint(net, &mut w)?;
        w.flush()?;
        Ok(())
    }
}

/// Freshly initialized network for `seed`.
pub fn init_net(cfg: &ExperimentConfig, seed: u64) -> Result<PolicyNet> {
    let mut rng = Rng::derived(seed, &[INIT_STREAM]);
    Ok(cfg.net.build(&cfg.env, cfg.train.augment_action, &mut rng)?)
}

pub fn train_suite(cfg: &ExperimentConfig) -> Result<EnvSuite> {
    Ok(make_env_suite(&cfg.env.kind(), Variant::Train, cfg.suite_seed)?)
}

/// Initializes and trains one seed without touching the file system.
pub fn train_seed(
    cfg: &ExperimentConfig,
    seed: u64,
    on_epoch: impl FnMut(&EpochMetrics, &PolicyNet),
) -> Result<std::result::Result<TrainOutcome, TrainFailure>> {
    let net = init_net(cfg, seed)?;
    let suite = train_suite(cfg)?;
    Ok(train(net, &suite, &cfg.train_for(seed), on_epoch))
}

pub fn eval_spec(cfg: &ExperimentConfig, seed: u64, episodes: usize, deterministic: bool) -> EvalSpec {
    EvalSpec {
        suite_seed: cfg.suite_seed,
        episodes,
        mode: if deterministic {
            ActionMode::Greedy
        } else {
            ActionMode::Sample
        },
        augment_action: cfg.train.augment_action,
        seed: derive_seed(seed, &[EVAL_STREAM]),
    }
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_suites(cfg: &ExperimentConfig, run: &RunDir) -> Result<()> {
    if let EnvConfig::Maze(_) = cfg.env {
        let mut variants = vec![Variant::Train];
        variants.extend(cfg.eval.variants()?);
        for v in Variant::ALL.into_iter().filter(|v| variants.contains(v)) {
            let suite = make_env_suite(&cfg.env.kind(), v, cfg.suite_seed)?;
            let scenes = suite.scenes().unwrap_or_default();
            write_file(&run.suite_file(v), |w| Ok(write_scenes(scenes, w)?))?;
        }
    }
    Ok(())
}

fn ndjson_line(seed: u64, m: &EpochMetrics) -> String {
    let mut v = serde_json::to_value(m).expect("metrics serialize");
    v["seed"] = seed.into();
    v.to_string()
}

/// Outcome of `train` across seeds.
#[derive(Debug)]
pub struct TrainSummary {
    pub run: RunDir,
    pub failed_seeds: Vec<(u64, String)>,
}

/// Trains every seed of `cfg` into `run`.
pub fn train_run(cfg: &ExperimentConfig, run: &RunDir) -> Result<TrainSummary> {
    fs::write(run.snapshot(), cfg.to_toml())?;
    write_suites(cfg, run)?;
    let suite = train_suite(cfg)?;
    let ndjson = Mutex::new(BufWriter::new(File::create(run.metrics_ndjson())?));

    let results: Vec<(u64, Vec<EpochMetrics>, Option<String>)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let net = match init_net(cfg, seed) {
                Ok(n) => n,
                Err(e) => return (seed, Vec::new(), Some(format!("{e:#}"))),
            };
            let outcome = train(net, &suite, &cfg.train_for(seed), |m, _| {
                let mut w = ndjson.lock().expect("metrics writer poisoned");
                let _ = writeln!(w, "{}", ndjson_line(seed, m));
            });
            match outcome {
                Ok(out) => {
                    log::info!(
                        "seed {seed}: {} epochs, best epoch {}, converged {}",
                        out.metrics.len(),
                        out.best_epoch,
                        out.converged
                    );
                    let saved = run
                        .save_net(seed, "final", &out.net)
                        .and_then(|_| run.save_net(seed, "best", &out.best_net));
                    (seed, out.metrics, saved.err().map(|e| format!("{e:#}")))
                }
                Err(fail) => {
                    log::error!("seed {seed}: {fail}");
                    let _ = run.save_net(seed, "diagnostic", &fail.net);
                    (seed, fail.metrics, Some(format!("{} (epoch {})", fail.error, fail.epoch)))
                }
            }
        })
        .collect();
    ndjson.into_inner().expect("metrics writer poisoned").flush()?;

    let mut rows: Vec<(u64, EpochMetrics)> = Vec::new();
    let mut failed = Vec::new();
    for (seed, ms, err) in results {
        rows.extend(ms.into_iter().map(|m| (seed, m)));
        if let Some(e) = err {
            failed.push((seed, e));
        }
    }
    rows.sort_by_key(|(s, m)| (*s, m.epoch));
    write_file(&run.metrics_csv(), |w| {
        writeln!(w, "seed,{}", EpochMetrics::CSV_HEADER)?;
        for (s, m) in &rows {
            writeln!(w, "{s},{}", m.csv_row())?;
        }
        Ok(())
    })?;
    if !failed.is_empty() {
        failed.sort();
        let text: Vec<String> = failed.iter().map(|(s, e)| format!("seed {s}: {e}")).collect();
        fs::write(run.failed_marker(), text.join("\n") + "\n")?;
    }
    Ok(TrainSummary {
        run: run.clone(),
        failed_seeds: failed,
    })
}

fn write_eval(run: &RunDir, stem: &str, report: &EvalReport) -> Result<()> {
    write_file(&run.report(&format!("{stem}.csv")), |w| Ok(report.write_summary_csv(w)?))?;
    write_file(&run.report(&format!("{stem}-episodes.csv")), |w| {
        Ok(report.write_episodes_csv(w)?)
    })
}

/// Options shared by `eval` and `analyze`.
#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub seeds: Vec<u64>,
    pub variants: Vec<Variant>,
    pub episodes: usize,
    pub deterministic: bool,
    /// Checkpoint tag: `final`, `best` or `reduced`.
    pub checkpoint: String,
}

impl EvalOptions {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            seeds: cfg.seeds.clone(),
            variants: cfg.eval.variants()?,
            episodes: cfg.eval.episodes,
            deterministic: cfg.eval.deterministic,
            checkpoint: "final".into(),
        })
    }
}

/// Evaluates one seed's checkpoint over the requested variants.
pub fn eval_seed(cfg: &ExperimentConfig, net: &PolicyNet, seed: u64, opts: &EvalOptions) -> Result<EvalReport> {
    let spec = eval_spec(cfg, seed, opts.episodes, opts.deterministic);
    Ok(evaluate(net, &cfg.env.kind(), &opts.variants, &spec)?)
}

/// `eval`: per-seed summaries plus the across-seed table.
pub fn eval_run(run: &RunDir, opts: &EvalOptions) -> Result<EnsembleReport> {
    let cfg = run.config()?;
    let report = amr_core::analyze::seed_ensemble(&opts.seeds, |seed| {
        let net = run.load_net(seed, &opts.checkpoint).map_err(core_err)?;
        let eval = eval_seed(&cfg, &net, seed, opts).map_err(core_err)?;
        write_eval(run, &format!("eval-{}-seed-{seed}", opts.checkpoint), &eval).map_err(core_err)?;
        Ok(SeedRun {
            seed,
            saliency: memory_saliency(&net, cfg.train.cutoff_ratio),
            eval: Some(eval),
            num_states: None,
        })
    })?;
    write_file(&run.report(&format!("eval-{}.csv", opts.checkpoint)), |w| {
        Ok(report.write_variants_csv(w)?)
    })?;
    Ok(report)
}

fn core_err(e: anyhow::Error) -> amr_core::Error {
    amr_core::Error::Config(format!("{e:#}"))
}

/// Number of greedy rollouts used to build a machine.
fn machine_rollouts(suite: &EnvSuite) -> usize {
    suite.len().max(1)
}

/// Greedy machine for one seed's checkpoint.
pub fn machine_for(cfg: &ExperimentConfig, net: &PolicyNet, seed: u64) -> Result<MooreMachine> {
    let suite = train_suite(cfg)?;
    Ok(extract_moore_machine(
        net,
        &suite,
        machine_rollouts(&suite),
        cfg.train.augment_action,
        derive_seed(seed, &[EVAL_STREAM, 1]),
    )?)
}

/// `extract-machine`: writes one DOT file per seed and returns the sizes.
pub fn extract_machines(run: &RunDir, seeds: &[u64], checkpoint: &str) -> Result<Vec<(u64, usize)>> {
    let cfg = run.config()?;
    if !cfg.net.discrete_memory() {
        bail!("machine extraction needs a softmax memory activation");
    }
    let names = cfg.env.action_names();
    let mut sizes = Vec::new();
    for &seed in seeds {
        let net = run.load_net(seed, checkpoint)?;
        let machine = machine_for(&cfg, &net, seed).with_context(|| format!("seed {seed}"))?;
        write_file(&run.report(&format!("machine-{checkpoint}-seed-{seed}.dot")), |w| {
            Ok(machine.write_dot(w, &names)?)
        })?;
        sizes.push((seed, machine.num_states()));
    }
    Ok(sizes)
}

/// `analyze`: saliency ranks, evaluation and machine sizes across seeds.
pub fn analyze_run(run: &RunDir, opts: &EvalOptions) -> Result<EnsembleReport> {
    let cfg = run.config()?;
    let discrete = cfg.net.discrete_memory();
    let names = cfg.env.action_names();
    let report = amr_core::analyze::seed_ensemble(&opts.seeds, |seed| {
        let net = run.load_net(seed, &opts.checkpoint).map_err(core_err)?;
        let saliency = memory_saliency(&net, cfg.train.cutoff_ratio);
        write_file(&run.report(&format!("saliency-{}-seed-{seed}.csv", opts.checkpoint)), |w| {
            Ok(saliency.write_csv(w)?)
        })
        .map_err(core_err)?;
        let eval = if opts.variants.is_empty() {
            None
        } else {
            Some(eval_seed(&cfg, &net, seed, opts).map_err(core_err)?)
        };
        let num_states = if discrete {
            match machine_for(&cfg, &net, seed) {
                Ok(m) => {
                    write_file(&run.report(&format!("machine-{}-seed-{seed}.dot", opts.checkpoint)), |w| {
                        Ok(m.write_dot(w, &names)?)
                    })
                    .map_err(core_err)?;
                    Some(m.num_states())
                }
                Err(e) => {
                    log::warn!("seed {seed}: no machine: {e:#}");
                    None
                }
            }
        } else {
            None
        };
        Ok(SeedRun {
            seed,
            saliency,
            eval,
            num_states,
        })
    })?;
    let tag = &opts.checkpoint;
    write_file(&run.report(&format!("saliency-ranks-{tag}.csv")), |w| {
        Ok(report.write_saliency_csv(w, 15)?)
    })?;
    write_file(&run.report(&format!("variants-{tag}.csv")), |w| Ok(report.write_variants_csv(w)?))?;
    write_file(&run.report(&format!("state-counts-{tag}.csv")), |w| {
        writeln!(w, "states,seeds")?;
        for (n, c) in report.state_counts() {
            writeln!(w, "{n},{c}")?;
        }
        Ok(())
    })?;
    Ok(report)
}

/// One seed's hard reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct ReduceRecord {
    pub seed: u64,
    pub memory_dim: usize,
    pub retained: usize,
    pub cost_before: f64,
    pub cost_after_cut: f64,
    pub cost_after_finetune: f64,
}

/// `reduce`: cuts non-salient memory dimensions from each seed's final
/// network, fine-tunes without the penalty and compares test cost.
pub fn reduce_run(run: &RunDir, seeds: &[u64], epochs: usize) -> Result<Vec<ReduceRecord>> {
    let cfg = run.config()?;
    let suite = train_suite(&cfg)?;
    let opts = EvalOptions {
        seeds: seeds.to_vec(),
        variants: vec![Variant::Test],
        episodes: cfg.eval.episodes,
        deterministic: cfg.eval.deterministic,
        checkpoint: "final".into(),
    };
    let cost = |net: &PolicyNet, seed: u64| -> Result<f64> {
        let r = eval_seed(&cfg, net, seed, &opts)?;
        r.summary(Variant::Test)
            .map(|s| s.mean_cost)
            .ok_or_else(|| anyhow!("no test summary"))
    };
    let records = seeds
        .par_iter()
        .map(|&seed| -> Result<ReduceRecord> {
            let net = run.load_net(seed, "final")?;
            let report = memory_saliency(&net, cfg.train.cutoff_ratio);
            let reduced = hard_reduce(&net, &report)?;
            let cost_before = cost(&net, seed)?;
            let cost_after_cut = cost(&reduced, seed)?;
            let tuned = match finetune_reduced(reduced, &suite, &cfg.train_for(seed), epochs, |_, _| {}) {
                Ok(out) => out.net,
                Err(fail) => bail!("seed {seed}: fine-tuning: {fail}"),
            };
            run.save_net(seed, "reduced", &tuned)?;
            Ok(ReduceRecord {
                seed,
                memory_dim: net.memory_dim(),
                retained: tuned.memory_dim(),
                cost_before,
                cost_after_cut,
                cost_after_finetune: cost(&tuned, seed)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_file(&run.report("reduce.csv"), |w| {
        writeln!(w, "seed,memory_dim,retained,cost_before,cost_after_cut,cost_after_finetune")?;
        for r in &records {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.seed, r.memory_dim, r.retained, r.cost_before, r.cost_after_cut, r.cost_after_finetune
            )?;
        }
        Ok(())
    })?;
    Ok(records)
}
