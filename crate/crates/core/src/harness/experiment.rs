//! Attack matrices, budget sweeps and interaction passes driven by one
//! JSON-serializable config.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::io::{load_cifar_binary, load_idx};
use super::metrics::{compute_metrics, Metrics};
use super::report::{
    emit_report, histogram_rows, ExampleRow, ExperimentReport, GammaSelection, GeneratorStats, GridPoint, InteractionRow,
    MetricsRow, ModelRecord, SweepRow,
};
use super::synth::{synth_dataset, SynthKind};
use crate::attacks::{run_attack, AttackConfig, AttackResult, Method, StepRule};
use crate::error::{Error, Result};
use crate::generator::{run_attack_adaptive, train_generator, GeneratorTrainConfig, ScalingFactorGenerator};
use crate::interaction::{expected_interaction_sampled, PerturbationGame};
use crate::models::{accuracy, train_classifier, Classifier, DifferentiableModel, LabeledDataset, ModelSpec, TrainConfig};
use crate::numerics::{derive_seed, norm_linf, ImageShape, SeededRng};

pub const DEFAULT_SWEEP: [f64; 7] = [1.0, 2.0, 4.0, 6.0, 8.0, 12.0, 16.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetSource {
    /// Train and test splits drawn from one generated pool (train first).
    Synthetic {
        generator: SynthKind,
        image_shape: ImageShape,
        train: usize,
        test: usize,
        #[serde(default)]
        seed: u64,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
    /// CIFAR-10 binary batches; training batches are concatenated.
    Cifar { train: Vec<PathBuf>, test: PathBuf },
}

impl DatasetSource {
    /// `(train, test)` splits.
    pub fn load(&self) -> Result<(LabeledDataset, LabeledDataset)> {
        match self {
            DatasetSource::Synthetic {
                generator,
                image_shape,
                train,
                test,
                seed,
            } => {
                let all = synth_dataset(*generator, train + test, *image_shape, *seed)?;
                Ok(all.split_at(*train))
            }
            DatasetSource::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
            } => Ok((load_idx(train_images, train_labels)?, load_idx(test_images, test_labels)?)),
            DatasetSource::Cifar { train, test } => {
                let test = load_cifar_binary(test)?;
                let mut examples = Vec::new();
                for path in train {
                    examples.extend(load_cifar_binary(path)?.examples().iter().cloned());
                }
                let train = LabeledDataset::new(examples, test.image_shape(), test.num_classes())?;
                Ok((train, test))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub name: String,
    pub spec: ModelSpec,
    /// Trainer settings; the seed is combined with each run seed.
    #[serde(default)]
    pub train: TrainConfig,
    /// Load this checkpoint instead of training. `{seed}` expands to the run
    /// seed.
    #[serde(default)]
    pub checkpoint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GammaChoice {
    Fixed { gamma: f64 },
    /// Pick γ on the validation split: highest white-box ASR, ties to lower
    /// MAD. With `mad_below`, only values whose validation MAD is below that
    /// method's are admissible; if none is, the lowest-MAD value wins.
    Grid {
        values: Vec<f64>,
        #[serde(default)]
        mad_below: Option<Method>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeneratorSource {
    /// Train per run seed on the training split. `epsilon` and `steps` must
    /// match the experiment's.
    Train {
        config: GeneratorTrainConfig,
        pool: Vec<String>,
    },
    /// `{seed}` expands to the run seed.
    Checkpoint { path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AttackSpec {
    /// A named recipe; scaled methods need `gamma`.
    Method {
        method: Method,
        #[serde(default)]
        gamma: Option<GammaChoice>,
        #[serde(default)]
        name: Option<String>,
    },
    Custom { name: String, config: AttackConfig },
    Adaptive {
        #[serde(default)]
        name: Option<String>,
        generator: GeneratorSource,
    },
}

impl AttackSpec {
    pub fn name(&self) -> String {
        match self {
            AttackSpec::Method { method, name, .. } => name.clone().unwrap_or_else(|| method.name().to_string()),
            AttackSpec::Custom { name, .. } => name.clone(),
            AttackSpec::Adaptive { name, .. } => name.clone().unwrap_or_else(|| "apaa-a".to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(default = "default_sweep")]
    pub epsilons: Vec<f64>,
    /// Attack names to sweep; empty means all.
    #[serde(default)]
    pub attacks: Vec<String>,
}

fn default_sweep() -> Vec<f64> {
    DEFAULT_SWEEP.to_vec()
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            epsilons: default_sweep(),
            attacks: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionConfig {
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    #[serde(default = "default_subsets")]
    pub subsets: usize,
    /// Leading test examples whose perturbations are analysed.
    #[serde(default = "default_interaction_examples")]
    pub examples: usize,
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Attack names to analyse; empty means all.
    #[serde(default)]
    pub attacks: Vec<String>,
}

fn default_pairs() -> usize {
    100
}

fn default_subsets() -> usize {
    20
}

fn default_interaction_examples() -> usize {
    200
}

fn default_bins() -> usize {
    20
}

impl Default for InteractionConfig {
    fn default() -> Self {
        Self {
            pairs: default_pairs(),
            subsets: default_subsets(),
            examples: default_interaction_examples(),
            bins: default_bins(),
            attacks: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub models: Vec<ModelEntry>,
    pub attacks: Vec<AttackSpec>,
    /// Gradient sources; `a+b` attacks the ensemble of `a` and `b`.
    pub sources: Vec<String>,
    pub targets: Vec<String>,
    pub epsilon: f64,
    pub steps: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Attack the first `n` test examples only.
    #[serde(default)]
    pub examples: Option<usize>,
    /// Trailing training examples held out for γ selection.
    #[serde(default)]
    pub validation: usize,
    /// Target label `(y + 1) mod K` instead of an untargeted attack.
    #[serde(default)]
    pub targeted: bool,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub interaction: Option<InteractionConfig>,
    /// Write trained models and generators under `output_dir`.
    #[serde(default)]
    pub save_models: bool,
    pub output_dir: PathBuf,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn source_members(source: &str) -> impl Iterator<Item = &str> {
    source.split('+').map(str::trim)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.attacks.is_empty() {
            return Err(Error::config("experiment needs at least one attack"));
        }
        if self.targets.is_empty() {
            return Err(Error::config("experiment needs at least one target"));
        }
        if self.sources.is_empty() {
            return Err(Error::config("experiment needs at least one source"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("experiment needs at least one seed"));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::config("epsilon must be ≥ 0"));
        }
        if self.steps < 1 {
            return Err(Error::config("steps must be ≥ 1"));
        }
        let mut names = BTreeSet::new();
        for m in &self.models {
            if !names.insert(m.name.as_str()) {
                return Err(Error::config(format!("duplicate model name {:?}", m.name)));
            }
        }
        let known = |n: &str| {
            if names.contains(n) {
                Ok(())
            } else {
                Err(Error::config(format!("unknown model {n:?}")))
            }
        };
        for s in &self.sources {
            source_members(s).try_for_each(known)?;
        }
        self.targets.iter().try_for_each(|t| known(t))?;
        let mut attack_names = BTreeSet::new();
        for a in &self.attacks {
            if !attack_names.insert(a.name()) {
                return Err(Error::config(format!("duplicate attack name {:?}", a.name())));
            }
            match a {
                AttackSpec::Method { method, gamma, .. } => {
                    match gamma {
                        None if method.is_scaled() => {
                            return Err(Error::config(format!("{} needs a gamma choice", method.name())))
                        }
                        Some(GammaChoice::Grid { values, .. }) => {
                            if values.is_empty() || values.iter().any(|g| !(*g > 0.0)) {
                                return Err(Error::config("gamma grid needs positive values"));
                            }
                            if self.validation == 0 {
                                return Err(Error::config("gamma grid needs a validation split"));
                            }
                        }
                        Some(GammaChoice::Fixed { gamma }) if !(*gamma > 0.0) => {
                            return Err(Error::config("gamma must be positive"));
                        }
                        _ => {}
                    }
                    method.config(self.epsilon, self.steps, 1.0).validate()?;
                }
                AttackSpec::Custom { config, .. } => {
                    config.validate()?;
                    if matches!(config.step_rule, StepRule::Adaptive { .. }) {
                        return Err(Error::config("use an adaptive attack entry for generator steps"));
                    }
                }
                AttackSpec::Adaptive { generator, .. } => {
                    if self.targeted {
                        return Err(Error::config("adaptive attacks are untargeted"));
                    }
                    if let GeneratorSource::Train { config, pool } = generator {
                        config.validate()?;
                        if config.steps != self.steps || config.epsilon != self.epsilon {
                            return Err(Error::config(
                                "generator training epsilon/steps must match the experiment",
                            ));
                        }
                        pool.iter().try_for_each(|p| known(p))?;
                    }
                }
            }
        }
        let selected = |list: &[String]| {
            list.iter().try_for_each(|n| {
                if attack_names.contains(n) {
                    Ok(())
                } else {
                    Err(Error::config(format!("unknown attack {n:?}")))
                }
            })
        };
        if let Some(s) = &self.sweep {
            selected(&s.attacks)?;
            if s.epsilons.iter().any(|e| !(*e >= 0.0)) {
                return Err(Error::config("sweep epsilons must be ≥ 0"));
            }
        }
        if let Some(i) = &self.interaction {
            selected(&i.attacks)?;
            if i.pairs < 1 || i.subsets < 1 || i.bins < 1 {
                return Err(Error::config("interaction pairs, subsets and bins must be ≥ 1"));
            }
        }
        Ok(())
    }

    fn included(list: &[String], name: &str) -> bool {
        list.is_empty() || list.iter().any(|n| n == name)
    }
}

fn expand_seed(template: &str, seed: u64) -> PathBuf {
    PathBuf::from(template.replace("{seed}", &seed.to_string()))
}

fn load_existing<T>(path: &Path, load: impl Fn(&Path) -> Result<T>) -> Result<T> {
    if !path.exists() {
        return Err(Error::Missing { path: path.to_path_buf() });
    }
    load(path)
}

/// How one (attack, source) cell produces adversarial examples.
enum Runner<'g> {
    Config(AttackConfig),
    Adaptive { generator: &'g ScalingFactorGenerator, epsilon: f64 },
}

impl<'g> Runner<'g> {
    fn at_epsilon(&self, epsilon: f64) -> Runner<'g> {
        match self {
            Runner::Config(c) => {
                let mut c = c.clone();
                if let StepRule::Sign { alpha } = &mut c.step_rule {
                    *alpha = if c.epsilon > 0.0 {
                        *alpha * epsilon / c.epsilon
                    } else {
                        epsilon / c.steps.max(1) as f64
                    }
                    .max(f64::MIN_POSITIVE);
                }
                c.epsilon = epsilon;
                Runner::Config(c)
            }
            Runner::Adaptive { generator, .. } => Runner::Adaptive {
                generator: *generator,
                epsilon,
            },
        }
    }

    fn gamma(&self) -> Option<f64> {
        match self {
            Runner::Config(c) => match c.step_rule {
                StepRule::FixedScale { gamma } => Some(gamma),
                _ => None,
            },
            Runner::Adaptive { .. } => None,
        }
    }

    /// One result per example, in dataset order.
    fn run(
        &self,
        sources: &[&dyn Classifier],
        targets: &[&dyn Classifier],
        data: &[crate::models::Example],
        image: ImageShape,
        target_label: &(dyn Fn(usize) -> Option<usize> + Sync),
        rng: &SeededRng,
    ) -> Result<Vec<AttackResult>> {
        data.par_iter()
            .enumerate()
            .map(|(i, ex)| match self {
                Runner::Config(c) => {
                    let cfg = match target_label(ex.label) {
                        Some(t) => c.clone().targeted_at(t),
                        None => c.clone(),
                    };
                    run_attack(sources, targets, &ex.pixels, image, ex.label, &cfg, &mut rng.fork(i as u64))
                }
                Runner::Adaptive { generator, epsilon } => run_attack_adaptive(
                    generator,
                    sources,
                    targets,
                    &ex.pixels,
                    ex.label,
                    *epsilon,
                    generator.steps(),
                ),
            })
            .collect()
    }
}

fn cell_metrics(
    data: &[crate::models::Example],
    results: &[AttackResult],
    target: &dyn Classifier,
    target_label: &(dyn Fn(usize) -> Option<usize> + Sync),
    targeted: bool,
) -> Result<Metrics> {
    let originals: Vec<Vec<f64>> = data.iter().map(|e| e.pixels.clone()).collect();
    let adversarials: Vec<Vec<f64>> = results.iter().map(|r| r.adversarial.clone()).collect();
    let predictions = adversarials
        .par_iter()
        .map(|a| target.predict(a))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = data.iter().map(|e| e.label).collect();
    let goals: Vec<usize> = labels.iter().map(|&y| target_label(y).unwrap_or(y)).collect();
    compute_metrics(&originals, &adversarials, &predictions, &labels, targeted, targeted.then_some(&goals[..]))
}

fn model_refs<'a>(models: &'a [(String, DifferentiableModel)], names: impl Iterator<Item = &'a str>) -> Vec<&'a dyn Classifier> {
    names
        .map(|n| {
            let (_, m) = models.iter().find(|(name, _)| name == n).expect("names validated");
            m as &dyn Classifier
        })
        .collect()
}

/// Validation pass over a γ grid for one source.
#[allow(clippy::too_many_arguments)]
fn select_gamma(
    method: Method,
    values: &[f64],
    mad_below: Option<Method>,
    sources: &[&dyn Classifier],
    val: &LabeledDataset,
    cfg: &ExperimentConfig,
    target_label: &(dyn Fn(usize) -> Option<usize> + Sync),
    rng: &SeededRng,
) -> Result<(f64, Vec<GridPoint>, Option<f64>)> {
    let image = val.image_shape();
    let score = |c: AttackConfig, key: u64| -> Result<(f64, f64)> {
        let res = Runner::Config(c).run(sources, sources, val.examples(), image, target_label, &rng.fork(key))?;
        let mut asr = 0.0;
        let mut mad = 0.0;
        for &s in sources {
            let m = cell_metrics(val.examples(), &res, s, target_label, cfg.targeted)?;
            asr += m.asr;
            mad = m.mad; // identical for every target
        }
        Ok((asr / sources.len() as f64, mad))
    };
    let reference = match mad_below {
        Some(m) => Some(score(m.config(cfg.epsilon, cfg.steps, 1.0), u64::MAX)?.1),
        None => None,
    };
    let mut table = Vec::with_capacity(values.len());
    for (k, &g) in values.iter().enumerate() {
        let (asr, mad) = score(method.config(cfg.epsilon, cfg.steps, g), k as u64)?;
        table.push(GridPoint { gamma: g, asr, mad });
    }
    let admissible: Vec<&GridPoint> = table.iter().filter(|p| reference.is_none_or(|r| p.mad < r)).collect();
    let best = if admissible.is_empty() {
        table.iter().min_by(|a, b| a.mad.total_cmp(&b.mad).then(a.gamma.total_cmp(&b.gamma)))
    } else {
        admissible.into_iter().max_by(|a, b| {
            a.asr
                .total_cmp(&b.asr)
                .then(b.mad.total_cmp(&a.mad))
                .then(b.gamma.total_cmp(&a.gamma))
        })
    };
    Ok((best.expect("non-empty grid").gamma, table, reference))
}

/// Partial results survive an error so they can still be written.
#[derive(Default)]
struct Collected {
    report: ExperimentReport,
}

/// Runs every configured stage for every seed, writes the report under
/// `cfg.output_dir` and returns it. If a stage fails, whatever finished is
/// still written (with `"complete": false` in the summary) before the error
/// is returned.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut acc = Collected::default();
    let outcome = run_stages(cfg, &mut acc);
    let complete = outcome.is_ok();
    acc.report.summary = summary(cfg, &acc.report, complete);
    if complete || !acc.report.rows.is_empty() {
        let written = emit_report(&acc.report, &cfg.output_dir);
        outcome?;
        written?;
    } else {
        outcome?;
    }
    Ok(acc.report)
}

fn run_stages(cfg: &ExperimentConfig, acc: &mut Collected) -> Result<()> {
    let (train, val, test_all) = splits(cfg)?;
    let test = match cfg.examples {
        Some(n) => test_all.take(n),
        None => test_all,
    };
    if test.is_empty() {
        return Err(Error::config("no test examples to attack"));
    }
    let image = test.image_shape();
    let classes = test.num_classes();
    let targeted = cfg.targeted;
    let target_label = move |y: usize| targeted.then_some((y + 1) % classes);
    let report = &mut acc.report;

    for &seed in &cfg.seeds {
        let models = prepare_models(cfg, &train, &test, seed, report)?;
        let targets = model_refs(&models, cfg.targets.iter().map(String::as_str));

        for (ai, attack) in cfg.attacks.iter().enumerate() {
            let name = attack.name();
            let generator = match attack {
                AttackSpec::Adaptive { generator, .. } => {
                    Some(prepare_generator(cfg, generator, &name, &models, &train, seed)?)
                }
                _ => None,
            };
            for (si, source) in cfg.sources.iter().enumerate() {
                let sources = model_refs(&models, source_members(source));
                let stream = derive_seed(ai as u64, si as u64);
                let runner = match attack {
                    AttackSpec::Method { method, gamma, .. } => {
                        let g = match gamma {
                            None => 1.0,
                            Some(GammaChoice::Fixed { gamma }) => *gamma,
                            Some(GammaChoice::Grid { values, mad_below }) => {
                                let rng = SeededRng::new(seed, derive_seed(stream, 1));
                                let (g, table, reference_mad) =
                                    select_gamma(*method, values, *mad_below, &sources, &val, cfg, &target_label, &rng)?;
                                report.gammas.push(GammaSelection {
                                    seed,
                                    attack: name.clone(),
                                    source: source.clone(),
                                    gamma: g,
                                    reference_mad,
                                    grid: table,
                                });
                                g
                            }
                        };
                        Runner::Config(method.config(cfg.epsilon, cfg.steps, g))
                    }
                    AttackSpec::Custom { config, .. } => Runner::Config(config.clone()).at_epsilon(cfg.epsilon),
                    AttackSpec::Adaptive { .. } => Runner::Adaptive {
                        generator: generator.as_ref().expect("prepared above"),
                        epsilon: cfg.epsilon,
                    },
                };
                let rng = SeededRng::new(seed, derive_seed(stream, 0));
                let results = runner.run(&sources, &targets, test.examples(), image, &target_label, &rng)?;
                if let Runner::Adaptive { .. } = runner {
                    report.generators.push(GeneratorStats::from_results(seed, &name, source, &results));
                }
                record_cell(cfg, report, seed, &name, source, runner.gamma(), &test, &results, &targets, &target_label)?;

                if let Some(ic) = &cfg.interaction {
                    if ExperimentConfig::included(&ic.attacks, &name) {
                        let model = sources[0];
                        let n = ic.examples.min(test.len());
                        let irng = SeededRng::new(seed, derive_seed(stream, 2));
                        let rows = (0..n)
                            .into_par_iter()
                            .map(|i| {
                                let ex = &test.examples()[i];
                                let delta: Vec<f64> =
                                    results[i].adversarial.iter().zip(&ex.pixels).map(|(a, x)| a - x).collect();
                                let game = PerturbationGame {
                                    model,
                                    x: &ex.pixels,
                                    delta: &delta,
                                    label: ex.label,
                                };
                                let est = expected_interaction_sampled(&game, ic.pairs, ic.subsets, &mut irng.fork(i as u64))?;
                                Ok(InteractionRow {
                                    seed,
                                    method: name.clone(),
                                    source: source.clone(),
                                    example_id: i,
                                    value: est.value,
                                    std_error: est.std_error,
                                })
                            })
                            .collect::<Result<Vec<_>>>()?;
                        report.interaction.extend(rows);
                    }
                }

                if let Some(sc) = &cfg.sweep {
                    if ExperimentConfig::included(&sc.attacks, &name) {
                        for (ei, &eps) in sc.epsilons.iter().enumerate() {
                            let r = runner.at_epsilon(eps);
                            let srng = SeededRng::new(seed, derive_seed(stream, 3 + ei as u64));
                            let res = r.run(&sources, &targets, test.examples(), image, &target_label, &srng)?;
                            for (ti, target) in targets.iter().enumerate() {
                                let m = cell_metrics(test.examples(), &res, *target, &target_label, cfg.targeted)?;
                                report.sweep.push(SweepRow {
                                    seed,
                                    method: name.clone(),
                                    source: source.clone(),
                                    target: cfg.targets[ti].clone(),
                                    epsilon: eps,
                                    asr: m.asr,
                                    mad: m.mad,
                                    rmsd: m.rmsd,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    if let Some(ic) = &cfg.interaction {
        report.histograms = histogram_rows(&report.interaction, ic.bins)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn record_cell(
    cfg: &ExperimentConfig,
    report: &mut ExperimentReport,
    seed: u64,
    name: &str,
    source: &str,
    gamma: Option<f64>,
    test: &LabeledDataset,
    results: &[AttackResult],
    targets: &[&dyn Classifier],
    target_label: &(dyn Fn(usize) -> Option<usize> + Sync),
) -> Result<()> {
    for (ti, target) in targets.iter().enumerate() {
        let m = cell_metrics(test.examples(), results, *target, target_label, cfg.targeted)?;
        report.rows.push(MetricsRow {
            seed,
            method: name.to_string(),
            source: source.to_string(),
            target: cfg.targets[ti].clone(),
            asr: m.asr,
            mad: m.mad,
            rmsd: m.rmsd,
            epsilon: cfg.epsilon,
            steps: cfg.steps,
            gamma,
            examples: m.examples,
        });
    }
    for (i, (r, ex)) in results.iter().zip(test.examples()).enumerate() {
        let delta: Vec<f64> = r.adversarial.iter().zip(&ex.pixels).map(|(a, x)| a - x).collect();
        let n = delta.len().max(1) as f64;
        let mad = delta.iter().map(|d| d.abs()).sum::<f64>() / n;
        let rmsd = (delta.iter().map(|d| d * d).sum::<f64>() / n).sqrt();
        for (ti, ok) in r.success.iter().enumerate() {
            report.examples.push(ExampleRow {
                seed,
                example_id: i,
                method: name.to_string(),
                source: source.to_string(),
                target: cfg.targets[ti].clone(),
                success: *ok,
                linf: norm_linf(&delta),
                mad,
                rmsd,
                steps_used: r.steps_used,
            });
        }
    }
    Ok(())
}

fn prepare_models(
    cfg: &ExperimentConfig,
    train: &LabeledDataset,
    test: &LabeledDataset,
    seed: u64,
    report: &mut ExperimentReport,
) -> Result<Vec<(String, DifferentiableModel)>> {
    let mut out = Vec::with_capacity(cfg.models.len());
    for entry in &cfg.models {
        let (model, origin) = match &entry.checkpoint {
            Some(template) => {
                let path = expand_seed(template, seed);
                let m = load_existing(&path, DifferentiableModel::load)?;
                if m.input_len() != test.image_shape().len() || m.num_classes() != test.num_classes() {
                    return Err(Error::config(format!(
                        "checkpoint {} does not match the dataset",
                        path.display()
                    )));
                }
                (m, "checkpoint")
            }
            None => {
                let tc = TrainConfig {
                    seed: derive_seed(entry.train.seed, seed),
                    ..entry.train
                };
                (train_classifier(train, entry.spec, &tc)?.0, "trained")
            }
        };
        if cfg.save_models && origin == "trained" {
            let dir = cfg.output_dir.join("models");
            std::fs::create_dir_all(&dir)?;
            model.save(&dir.join(format!("{}-seed{seed}.ckpt", entry.name)))?;
        }
        report.models.push(ModelRecord {
            seed,
            name: entry.name.clone(),
            kind: model.kind().to_string(),
            origin: origin.to_string(),
            train_accuracy: accuracy(&model, train)?,
            test_accuracy: accuracy(&model, test)?,
        });
        out.push((entry.name.clone(), model));
    }
    Ok(out)
}

fn prepare_generator(
    cfg: &ExperimentConfig,
    source: &GeneratorSource,
    name: &str,
    models: &[(String, DifferentiableModel)],
    train: &LabeledDataset,
    seed: u64,
) -> Result<ScalingFactorGenerator> {
    let generator = match source {
        GeneratorSource::Checkpoint { path } => {
            load_existing(&expand_seed(path, seed), ScalingFactorGenerator::load)?
        }
        GeneratorSource::Train { config, pool } => {
            let pool = model_refs(models, pool.iter().map(String::as_str));
            let gc = GeneratorTrainConfig {
                seed: derive_seed(config.seed, seed),
                ..config.clone()
            };
            let g = train_generator(train, &pool, &gc)?;
            if cfg.save_models {
                let dir = cfg.output_dir.join("generators");
                std::fs::create_dir_all(&dir)?;
                g.save(&dir.join(format!("{name}-seed{seed}.ckpt")))?;
            }
            g
        }
    };
    if generator.steps() != cfg.steps || generator.image() != train.image_shape() {
        return Err(Error::config(format!(
            "generator for {name} was built for {} steps on {:?}",
            generator.steps(),
            generator.image()
        )));
    }
    Ok(generator)
}

/// Training split, validation split (tail of the training data), test split.
fn splits(cfg: &ExperimentConfig) -> Result<(LabeledDataset, LabeledDataset, LabeledDataset)> {
    let (train_all, test) = cfg.dataset.load()?;
    let cut = train_all.len().checked_sub(cfg.validation).ok_or_else(|| {
        Error::config(format!(
            "validation split of {} exceeds {} training examples",
            cfg.validation,
            train_all.len()
        ))
    })?;
    let (train, val) = train_all.split_at(cut);
    Ok((train, val, test))
}

/// Trains (or loads) every model for every seed and saves checkpoints under
/// `output_dir/models`.
pub fn train_models(cfg: &ExperimentConfig) -> Result<Vec<ModelRecord>> {
    cfg.validate()?;
    let (train, _, test) = splits(cfg)?;
    let cfg = ExperimentConfig {
        save_models: true,
        ..cfg.clone()
    };
    let mut report = ExperimentReport::default();
    for &seed in &cfg.seeds {
        prepare_models(&cfg, &train, &test, seed, &mut report)?;
    }
    Ok(report.models)
}

/// Trains the generator of the adaptive attack `attack` for every seed,
/// saving it under `output_dir/generators`. Returns the checkpoint paths.
pub fn train_generators(cfg: &ExperimentConfig, attack: &str) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let source = cfg
        .attacks
        .iter()
        .find_map(|a| match a {
            AttackSpec::Adaptive {
                generator: g @ GeneratorSource::Train { .. },
                ..
            } if a.name() == attack => Some(g),
            _ => None,
        })
        .ok_or_else(|| Error::config(format!("no trainable adaptive attack named {attack:?}")))?;
    let (train, _, test) = splits(cfg)?;
    let cfg = ExperimentConfig {
        save_models: true,
        ..cfg.clone()
    };
    let mut paths = Vec::new();
    for &seed in &cfg.seeds {
        let models = prepare_models(&cfg, &train, &test, seed, &mut ExperimentReport::default())?;
        prepare_generator(&cfg, source, attack, &models, &train, seed)?;
        paths.push(cfg.output_dir.join("generators").join(format!("{attack}-seed{seed}.ckpt")));
    }
    Ok(paths)
}

fn summary(cfg: &ExperimentConfig, report: &ExperimentReport, complete: bool) -> serde_json::Value {
    serde_json::json!({
        "complete": complete,
        "config": cfg,
        "seeds": cfg.seeds,
        "conventions": {
            "asr": "fraction of all evaluated examples meeting the attack goal, including examples the target already misclassified",
            "mad": "mean |adversarial - clean| over every pixel of every evaluated example, 0-255 scale",
            "rmsd": "square root of the mean squared pixel difference over the same pixels",
        },
        "models": report.models,
        "gammas": report.gammas,
        "generators": report.generators,
        "aggregate": super::report::aggregate(&report.rows),
        "interaction_medians": super::report::interaction_medians(&report.interaction),
    })
}
