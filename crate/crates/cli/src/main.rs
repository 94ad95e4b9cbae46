//! `amrpg`: train, evaluate and analyze AMR policy-gradient experiments.
//!
//! Exit status: 0 on success, 2 for configuration or usage errors, 3 for
//! runtime failures (including any diverged seed).

use std::path::PathBuf;
use std::process::ExitCode;

use amr_cli::config::{ConfigError, ExperimentConfig};
use amr_cli::plot::plot_run;
use amr_cli::run::{analyze_run, eval_run, extract_machines, reduce_run, train_run, EvalOptions, RunDir};
use amr_core::envs::Variant;
use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "amrpg", version, about = "Policy gradient with automatic memory reduction")]
struct Cli {
    /// Worker threads for rollouts (results do not depend on this).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Log more (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of a config into a new run directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Train only this seed.
        #[arg(long, conflicts_with = "seeds")]
        seed: Option<u64>,
        /// Comma-separated seeds replacing the config's list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Override the epoch budget.
        #[arg(long)]
        epochs: Option<usize>,
        /// Run directory (default: <output_dir>/<name>-<unix seconds>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate trained checkpoints on environment variants.
    Eval(EvalArgs),
    /// Saliency, evaluation and machine sizes aggregated across seeds.
    Analyze(EvalArgs),
    /// Write the Moore machine of each seed as a DOT graph.
    ExtractMachine {
        run: PathBuf,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long, default_value = "final")]
        checkpoint: String,
    },
    /// Cut non-salient memory dimensions and fine-tune the remainder.
    Reduce {
        run: PathBuf,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Fine-tuning epochs (default from the config).
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Draw SVG charts from the run's CSV files.
    Plot { run: PathBuf },
}

#[derive(Args)]
struct EvalArgs {
    run: PathBuf,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Comma-separated variants (train, test, test_swapped_colors, test_new_colors).
    #[arg(long, value_delimiter = ',')]
    variants: Option<Vec<String>>,
    #[arg(long)]
    episodes: Option<usize>,
    /// Take the most likely action instead of sampling.
    #[arg(long)]
    deterministic: bool,
    /// Checkpoint to load: final, best or reduced.
    #[arg(long, default_value = "final")]
    checkpoint: String,
}

impl EvalArgs {
    fn options(&self, cfg: &ExperimentConfig) -> Result<EvalOptions> {
        let mut o = EvalOptions::from_config(cfg)?;
        if let Some(s) = &self.seeds {
            o.seeds = s.clone();
        }
        if let Some(v) = &self.variants {
            o.variants = v
                .iter()
                .map(|s| s.parse::<Variant>().map_err(|e| ConfigError::Invalid(e.to_string())))
                .collect::<Result<_, _>>()?;
        }
        if let Some(n) = self.episodes {
            o.episodes = n;
        }
        o.deterministic |= self.deterministic;
        o.checkpoint = self.checkpoint.clone();
        Ok(o)
    }
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    match cli.command {
        Command::Train {
            config,
            seed,
            seeds,
            epochs,
            out,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            if let Some(s) = seeds {
                cfg.seeds = s;
            }
            if let Some(e) = epochs {
                cfg.train.max_epochs = e;
            }
            cfg.validate()?;
            let dir = match out {
                Some(p) => RunDir::create_at(&p)?,
                None => RunDir::create_timestamped(&PathBuf::from(&cfg.output_dir), &cfg.name)?,
            };
            let summary = train_run(&cfg, &dir)?;
            println!("{}", dir.root.display());
            for (s, e) in &summary.failed_seeds {
                eprintln!("seed {s} failed: {e}");
            }
            Ok(summary.failed_seeds.is_empty())
        }
        Command::Eval(args) => {
            let dir = RunDir::open(&args.run)?;
            let opts = args.options(&dir.config()?)?;
            let report = eval_run(&dir, &opts)?;
            for r in &report.runs {
                if let Some(e) = &r.eval {
                    println!("seed {}\n{}", r.seed, e.table());
                }
            }
            print_variants(&report);
            Ok(report.failures.is_empty())
        }
        Command::Analyze(args) => {
            let dir = RunDir::open(&args.run)?;
            let opts = args.options(&dir.config()?)?;
            let report = analyze_run(&dir, &opts)?;
            print_variants(&report);
            println!("saliency by rank (mean ± std):");
            for (k, (m, s)) in report.saliency_rank_mean.iter().zip(&report.saliency_rank_std).take(15).enumerate() {
                println!("  {:>2}: {m:.4e} ± {s:.2e}", k + 1);
            }
            let counts = report.state_counts();
            if !counts.is_empty() {
                println!("machine states: seeds");
                for (n, c) in counts {
                    println!("  {n}: {c}");
                }
            }
            Ok(report.failures.is_empty())
        }
        Command::ExtractMachine { run, seeds, checkpoint } => {
            let dir = RunDir::open(&run)?;
            let seeds = seeds.unwrap_or(dir.config()?.seeds);
            for (s, n) in extract_machines(&dir, &seeds, &checkpoint)? {
                println!("seed {s}: {n} states");
            }
            Ok(true)
        }
        Command::Reduce { run, seeds, epochs } => {
            let dir = RunDir::open(&run)?;
            let cfg = dir.config()?;
            let seeds = seeds.unwrap_or(cfg.seeds.clone());
            let records = reduce_run(&dir, &seeds, epochs.unwrap_or(cfg.reduce.finetune_epochs))?;
            for r in records {
                println!(
                    "seed {}: {} -> {} dims, test cost {:.3} / cut {:.3} / tuned {:.3}",
                    r.seed, r.memory_dim, r.retained, r.cost_before, r.cost_after_cut, r.cost_after_finetune
                );
            }
            Ok(true)
        }
        Command::Plot { run } => {
            let dir = RunDir::open(&run)?;
            for p in plot_run(&dir)? {
                println!("{}", p.display());
            }
            Ok(true)
        }
    }
}

fn print_variants(report: &amr_core::analyze::EnsembleReport) {
    println!("{:<22} {:>6} {:>20} {:>20}", "variant", "seeds", "cost", "final dist.");
    for v in &report.variants {
        println!(
            "{:<22} {:>6} {:>20} {:>20}",
            v.variant,
            v.seeds,
            format!("{:.2} ± {:.2}", v.mean_cost, v.std_cost),
            format!("{:.3} ± {:.3}", v.mean_final_distance, v.std_final_distance)
        );
    }
    for (s, e) in &report.failures {
        eprintln!("seed {s} failed: {e}");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
