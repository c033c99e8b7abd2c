use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use apaa_core::harness::{
    aggregate, read_metrics, run_experiment, train_generators, train_models, verify_properties, AggregateRow,
    ExperimentConfig, InteractionConfig,
};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "apaa", version, about = "Scaled-gradient adversarial attack experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train (or load) every model in the config and write checkpoints.
    TrainModel(Common),
    /// Train the generator of an adaptive attack for every seed.
    TrainGenerator {
        #[command(flatten)]
        common: Common,
        /// Name of the adaptive attack entry.
        #[arg(long, default_value = "apaa-a")]
        attack: String,
    },
    /// Run the attack matrix.
    Attack(Common),
    /// Attack matrix plus an ε-sweep.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated budgets on the 0-255 scale.
        #[arg(long, value_delimiter = ',')]
        epsilons: Option<Vec<f64>>,
    },
    /// Attack matrix plus sampled interaction histograms.
    Interaction {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pairs: Option<usize>,
        #[arg(long)]
        subsets: Option<usize>,
        /// Test examples analysed per cell.
        #[arg(long)]
        interaction_examples: Option<usize>,
        #[arg(long)]
        bins: Option<usize>,
    },
    /// Check gradients, coefficient recurrences, Shapley identities and
    /// attack invariants.
    VerifyProps {
        /// Ten times fewer samples.
        #[arg(long)]
        quick: bool,
        /// Also write the results as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Summarize a finished run's metrics.csv over seeds.
    Report {
        /// Output directory of an earlier run.
        dir: PathBuf,
    },
}

/// Config file plus overrides for its top-level fields.
#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long, short)]
    config: PathBuf,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Attack only the first N test examples.
    #[arg(long)]
    examples: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    sources: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    targets: Option<Vec<String>>,
    #[arg(long)]
    targeted: bool,
    /// Write trained models and generators next to the report.
    #[arg(long)]
    save_models: bool,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(&self.config)
            .with_context(|| format!("reading {}", self.config.display()))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", self.config.display()))?;
        if let Some(d) = &self.output_dir {
            cfg.output_dir = d.clone();
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = s.clone();
        }
        if let Some(e) = self.epsilon {
            cfg.epsilon = e;
        }
        if let Some(t) = self.steps {
            cfg.steps = t;
        }
        if self.examples.is_some() {
            cfg.examples = self.examples;
        }
        if let Some(s) = &self.sources {
            cfg.sources = s.clone();
        }
        if let Some(t) = &self.targets {
            cfg.targets = t.clone();
        }
        cfg.targeted |= self.targeted;
        cfg.save_models |= self.save_models;
        Ok(cfg)
    }
}

fn print_table(rows: &[AggregateRow]) {
    println!(
        "{:<18} {:<14} {:<14} {:>5} {:>8} {:>8} {:>8} {:>8}",
        "method", "source", "target", "seeds", "asr", "asr_min", "mad", "rmsd"
    );
    for r in rows {
        println!(
            "{:<18} {:<14} {:<14} {:>5} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            r.method, r.source, r.target, r.seeds, r.asr_mean, r.asr_min, r.mad_mean, r.rmsd_mean
        );
    }
}

fn run(cfg: &ExperimentConfig) -> Result<()> {
    let report = run_experiment(cfg)?;
    print_table(&aggregate(&report.rows));
    let medians = apaa_core::harness::interaction_medians(&report.interaction);
    for (method, m) in &medians {
        println!("interaction median {method}: {m:.6e}");
    }
    eprintln!("wrote {}", cfg.output_dir.display());
    Ok(())
}

fn report(dir: &Path) -> Result<()> {
    let rows = read_metrics(&dir.join("metrics.csv"))?;
    print_table(&aggregate(&rows));
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::TrainModel(common) => {
            let cfg = common.load()?;
            for m in train_models(&cfg)? {
                println!(
                    "seed {} {:<12} {:<14} {:<10} train {:.4} test {:.4}",
                    m.seed, m.name, m.kind, m.origin, m.train_accuracy, m.test_accuracy
                );
            }
        }
        Command::TrainGenerator { common, attack } => {
            let cfg = common.load()?;
            for p in train_generators(&cfg, &attack)? {
                println!("{}", p.display());
            }
        }
        Command::Attack(common) => {
            let mut cfg = common.load()?;
            cfg.sweep = None;
            cfg.interaction = None;
            run(&cfg)?;
        }
        Command::Sweep { common, epsilons } => {
            let mut cfg = common.load()?;
            let mut sweep = cfg.sweep.take().unwrap_or_default();
            if let Some(e) = epsilons {
                sweep.epsilons = e;
            }
            cfg.sweep = Some(sweep);
            cfg.interaction = None;
            run(&cfg)?;
        }
        Command::Interaction {
            common,
            pairs,
            subsets,
            interaction_examples,
            bins,
        } => {
            let mut cfg = common.load()?;
            let mut ic: InteractionConfig = cfg.interaction.take().unwrap_or_default();
            ic.pairs = pairs.unwrap_or(ic.pairs);
            ic.subsets = subsets.unwrap_or(ic.subsets);
            ic.examples = interaction_examples.unwrap_or(ic.examples);
            ic.bins = bins.unwrap_or(ic.bins);
            cfg.interaction = Some(ic);
            cfg.sweep = None;
            run(&cfg)?;
        }
        Command::VerifyProps { quick, json } => {
            let checks = verify_properties(quick)?;
            for c in &checks {
                println!("{} {:<24} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if let Some(path) = json {
                std::fs::write(&path, serde_json::to_string_pretty(&checks)?)?;
            }
            if checks.iter().any(|c| !c.passed) {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Report { dir } => {
            if !dir.is_dir() {
                bail!("{} is not a directory", dir.display());
            }
            report(&dir)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
