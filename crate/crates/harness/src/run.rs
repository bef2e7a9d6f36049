//! Per-seed data construction and the `train` / `ablate` commands.

use std::borrow::Cow;
use std::path::{Path, PathBuf};

use gae_core::data::{
    build_longtail, load_csv, load_idx, stratified_split, synth_gaussians, Dataset,
    GaussianMixture, TestSize,
};
use gae_core::gae::{save_audit_log, GaeStats};
use gae_core::metrics::{mean, EvalMetrics};
use gae_core::model::Model;
use gae_core::train::{ablate_k, dedup_k, evaluate, EpochMetrics, Phase, TrainConfig, Trainer};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{
    ExperimentConfig, SourceKind, DEFAULT_SPLIT_FRACTION, DEFAULT_SYNTH_N_MAX,
    DEFAULT_SYNTH_TEST_PER_CLASS,
};
use crate::error::{HarnessError, Result};

pub const RESOLVED_CONFIG: &str = "config.resolved.toml";
pub const METRICS_FILE: &str = "metrics.json";
pub const AUDIT_LOG: &str = "gae_audit.jsonl";
pub const WARMUP_CHECKPOINT: &str = "model.warmup.ckpt";
pub const FINAL_CHECKPOINT: &str = "model.final.ckpt";
pub const ABLATION_TABLE: &str = "ablation.csv";
pub const ABLATION_GAE_TABLE: &str = "ablation_gae.csv";

/// Offset separating the synthetic test draw from the training draw.
const TEST_STREAM: u64 = 0x7e57_0000_0000;

/// Command-line overrides shared by every command.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed_override: Option<u64>,
    /// Worker threads for independent seeds; `None` lets rayon decide.
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Baseline,
    Guided,
}

impl Mode {
    pub fn dir_name(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Guided => "guided",
        }
    }
}

enum Source {
    Mixture(GaussianMixture),
    Real { pool: Dataset, test: Dataset },
}

/// A validated experiment with every default resolved and its data loaded.
pub struct Experiment {
    pub config: ExperimentConfig,
    source: Source,
}

fn absolute(p: &Path) -> Result<PathBuf> {
    std::path::absolute(p).map_err(|e| HarnessError::io(p, e))
}

fn with_classes(data: Dataset, num_classes: usize) -> Result<Dataset> {
    if data.num_classes() == num_classes {
        return Ok(data);
    }
    Ok(Dataset::new(
        data.dim(),
        num_classes,
        data.features().to_vec(),
        data.labels().to_vec(),
    )?)
}

impl Experiment {
    pub fn from_path(path: &Path, opts: &RunOptions) -> Result<Self> {
        Self::prepare(ExperimentConfig::load(path)?, opts)
    }

    pub fn prepare(mut config: ExperimentConfig, opts: &RunOptions) -> Result<Self> {
        if let Some(out) = &opts.out {
            config.out_dir = out.clone();
        }
        if let Some(seed) = opts.seed_override {
            config.seeds = vec![seed];
        }
        config.validate()?;
        config.out_dir = absolute(&config.out_dir)?;
        let d = &mut config.dataset;
        for p in [
            &mut d.images,
            &mut d.labels,
            &mut d.test_images,
            &mut d.test_labels,
            &mut d.csv,
            &mut d.test_csv,
        ]
        .into_iter()
        .flatten()
        {
            *p = absolute(p)?;
        }

        let source = match d.source {
            SourceKind::Synthetic => {
                let c = d.num_classes.expect("checked by validate");
                let mixture = match (&d.means, &d.stds) {
                    (Some(m), Some(s)) => GaussianMixture::new(m.clone(), s.clone())?,
                    _ => GaussianMixture::circle(c)?,
                };
                d.n_max.get_or_insert(DEFAULT_SYNTH_N_MAX);
                d.test_per_class.get_or_insert(DEFAULT_SYNTH_TEST_PER_CLASS);
                Source::Mixture(mixture)
            }
            SourceKind::Idx | SourceKind::Csv => {
                let (train, test) = if d.source == SourceKind::Idx {
                    let train = load_idx(d.images.as_ref().unwrap(), d.labels.as_ref().unwrap())?;
                    let test = match (&d.test_images, &d.test_labels) {
                        (Some(i), Some(l)) => Some(load_idx(i, l)?),
                        _ => None,
                    };
                    (train, test)
                } else {
                    let train = load_csv(d.csv.as_ref().unwrap(), d.num_classes)?;
                    let test = d
                        .test_csv
                        .as_ref()
                        .map(|p| load_csv(p, d.num_classes))
                        .transpose()?;
                    (train, test)
                };
                let classes = d
                    .num_classes
                    .unwrap_or(0)
                    .max(train.num_classes())
                    .max(test.as_ref().map_or(0, Dataset::num_classes));
                if d.num_classes.is_some_and(|c| c < classes) {
                    return Err(HarnessError::Config(format!(
                        "dataset.num_classes = {} but labels go up to {}",
                        d.num_classes.unwrap(),
                        classes - 1
                    )));
                }
                d.num_classes = Some(classes);
                let train = with_classes(train, classes)?;
                let (pool, test) = match test {
                    Some(test) => {
                        if test.dim() != train.dim() {
                            return Err(HarnessError::Config(format!(
                                "test features have dimension {}, training features {}",
                                test.dim(),
                                train.dim()
                            )));
                        }
                        (train, with_classes(test, classes)?)
                    }
                    None => {
                        let smallest = train.class_counts().into_iter().min().unwrap_or(0);
                        let per_class = *d.test_per_class.get_or_insert(
                            ((DEFAULT_SPLIT_FRACTION * smallest as f64).floor() as usize).max(1),
                        );
                        stratified_split(&train, TestSize::PerClass(per_class), d.seed)?
                    }
                };
                let smallest = pool.class_counts().into_iter().min().unwrap_or(0);
                d.n_max.get_or_insert(smallest);
                Source::Real { pool, test }
            }
        };
        config.dataset.longtail_spec()?;
        config.model.hidden = Some(config.model_spec(1, 2).hidden);
        Ok(Self { config, source })
    }

    pub fn out_dir(&self) -> &Path {
        &self.config.out_dir
    }

    pub fn run_dir(&self, seed: u64, mode: Mode) -> PathBuf {
        self.out_dir().join(format!("seed-{seed}")).join(mode.dir_name())
    }

    /// Seed for the long-tail draw of one run.
    pub fn data_seed(&self, seed: u64) -> u64 {
        self.config.dataset.seed.wrapping_add(seed)
    }

    /// Long-tailed training set and balanced test set for one seed.
    pub fn datasets(&self, seed: u64) -> Result<(Dataset, Cow<'_, Dataset>)> {
        let spec = self.config.dataset.longtail_spec()?;
        let s = self.data_seed(seed);
        Ok(match &self.source {
            Source::Mixture(mixture) => {
                let train = synth_gaussians(mixture, &spec, s)?.data;
                let per_class = self.config.dataset.test_per_class.unwrap_or(DEFAULT_SYNTH_TEST_PER_CLASS);
                let test = mixture.sample_balanced(per_class, s.wrapping_add(TEST_STREAM))?;
                (train, Cow::Owned(test))
            }
            Source::Real { pool, test } => (build_longtail(pool, &spec, s)?.data, Cow::Borrowed(test)),
        })
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.config.train.clone()
        }
    }

    pub fn initial_model(&self, seed: u64, train: &Dataset) -> Result<Model> {
        let spec = self.config.model_spec(train.dim(), train.num_classes());
        Ok(Model::init(spec, seed)?)
    }

    pub fn write_resolved(&self) -> Result<PathBuf> {
        let dir = self.out_dir();
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let path = dir.join(RESOLVED_CONFIG);
        write_file(&path, self.config.to_toml()?.as_bytes())?;
        Ok(path)
    }

    /// Map `job` over `items` on a pool of `threads` workers, keeping input order.
    pub fn parallel<I, O, F>(threads: Option<usize>, items: &[I], job: F) -> Result<Vec<O>>
    where
        I: Sync,
        O: Send,
        F: Fn(&I) -> Result<O> + Sync,
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.unwrap_or(0))
            .build()
            .map_err(|e| HarnessError::Config(format!("--threads: {e}")))?;
        pool.install(|| items.par_iter().map(&job).collect())
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

/// Everything recorded about one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub mode: Mode,
    pub seed: u64,
    pub model: String,
    pub class_counts: Vec<usize>,
    pub head_classes: Vec<usize>,
    pub tail_classes: Vec<usize>,
    pub epochs: Vec<EpochMetrics>,
    pub gae: Vec<GaeStats>,
    pub final_eval: EvalMetrics,
    pub head_recall: Option<f64>,
    pub tail_recall: Option<f64>,
}

impl MetricsFile {
    pub fn gae_series(&self) -> Vec<usize> {
        self.epochs
            .iter()
            .filter(|e| e.phase == Phase::Guided)
            .map(|e| e.gae_count)
            .collect()
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| HarnessError::Artifact {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("metrics serialize");
        bytes.push(b'\n');
        write_file(path, &bytes)
    }
}

/// Train one seed in one mode and write its artifacts.
pub fn run_single(exp: &Experiment, seed: u64, mode: Mode) -> Result<MetricsFile> {
    let (train, test) = exp.datasets(seed)?;
    let cfg = exp.train_config(seed);
    let model = exp.initial_model(seed, &train)?;
    let dir = exp.run_dir(seed, mode);
    std::fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;

    let describe = model.spec().describe();
    let mut trainer = Trainer::new(model, &train, cfg.clone())?;
    for epoch in 0..cfg.epochs {
        if mode == Mode::Guided && epoch == cfg.warmup_epochs {
            trainer.model().save(&dir.join(WARMUP_CHECKPOINT))?;
        }
        let phase = match mode {
            Mode::Guided if epoch >= cfg.warmup_epochs => Phase::Guided,
            _ => Phase::Ce,
        };
        trainer.run_epoch(phase)?;
    }
    if mode == Mode::Guided && cfg.warmup_epochs == cfg.epochs {
        trainer.model().save(&dir.join(WARMUP_CHECKPOINT))?;
    }
    let partition = trainer.partition().clone();
    let (model, run) = trainer.into_parts();
    model.save(&dir.join(FINAL_CHECKPOINT))?;
    if mode == Mode::Guided {
        save_audit_log(&dir.join(AUDIT_LOG), &run.gae)?;
    }
    let final_eval = evaluate(&model, &test)?;
    let head_classes = partition.head_classes();
    let tail_classes = partition.tail_classes();
    let metrics = MetricsFile {
        mode,
        seed,
        model: describe,
        class_counts: train.class_counts(),
        head_recall: final_eval.mean_recall(&head_classes),
        tail_recall: final_eval.mean_recall(&tail_classes),
        head_classes,
        tail_classes,
        epochs: run.epochs,
        gae: run.gae,
        final_eval,
    };
    metrics.write(&dir.join(METRICS_FILE))?;
    Ok(metrics)
}

pub fn cmd_train(config: &Path, modes: &[Mode], opts: &RunOptions) -> Result<Vec<MetricsFile>> {
    let exp = Experiment::from_path(config, opts)?;
    train_experiment(&exp, modes, opts.threads)
}

pub fn train_experiment(
    exp: &Experiment,
    modes: &[Mode],
    threads: Option<usize>,
) -> Result<Vec<MetricsFile>> {
    if modes.is_empty() {
        return Err(HarnessError::Config("choose --baseline and/or --guided".into()));
    }
    exp.write_resolved()?;
    let jobs: Vec<(u64, Mode)> = exp
        .config
        .seeds
        .iter()
        .flat_map(|&s| modes.iter().map(move |&m| (s, m)))
        .collect();
    Experiment::parallel(threads, &jobs, |&(seed, mode)| run_single(exp, seed, mode))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRecord {
    pub k: usize,
    pub seed: u64,
    pub accuracy: f64,
    /// Guided epochs only, in order.
    pub gae_series: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub k_values: Vec<usize>,
    /// Set when repeated k values were dropped.
    pub deduplicated: bool,
    pub records: Vec<AblationRecord>,
}

impl AblationTable {
    pub fn mean_accuracy(&self, k: usize) -> Option<f64> {
        mean(self.records.iter().filter(|r| r.k == k).map(|r| r.accuracy))
    }

    /// Seed-averaged GAE count of every guided epoch for `k`.
    pub fn mean_gae_series(&self, k: usize) -> Vec<f64> {
        let rows: Vec<&AblationRecord> = self.records.iter().filter(|r| r.k == k).collect();
        let len = rows.iter().map(|r| r.gae_series.len()).min().unwrap_or(0);
        (0..len)
            .map(|i| mean(rows.iter().map(|r| r.gae_series[i] as f64)).unwrap_or(0.0))
            .collect()
    }
}

pub fn cmd_ablate(config: &Path, k_values: &[usize], opts: &RunOptions) -> Result<AblationTable> {
    let exp = Experiment::from_path(config, opts)?;
    ablate_experiment(&exp, k_values, opts.threads)
}

pub fn ablate_experiment(
    exp: &Experiment,
    k_values: &[usize],
    threads: Option<usize>,
) -> Result<AblationTable> {
    let (k_values, deduplicated) = dedup_k(k_values);
    if k_values.is_empty() {
        return Err(HarnessError::Config("--k needs at least one value".into()));
    }
    if k_values.contains(&0) {
        return Err(HarnessError::Config("--k values must be >= 1".into()));
    }
    exp.write_resolved()?;
    let per_seed = Experiment::parallel(threads, &exp.config.seeds, |&seed| {
        let (train, test) = exp.datasets(seed)?;
        let model = exp.initial_model(seed, &train)?;
        let rows = ablate_k(model, &train, &test, &exp.train_config(seed), &k_values)?;
        Ok(rows
            .into_iter()
            .map(|row| AblationRecord {
                k: row.k,
                seed,
                accuracy: row.accuracy,
                gae_series: row.gae_series,
            })
            .collect::<Vec<_>>())
    })?;
    let mut records: Vec<AblationRecord> = per_seed.into_iter().flatten().collect();
    // k-major, seeds in configured order
    records.sort_by_key(|r| k_values.iter().position(|&k| k == r.k));
    let table = AblationTable {
        k_values,
        deduplicated,
        records,
    };
    write_ablation(exp.out_dir(), &table, exp.config.train.warmup_epochs)?;
    Ok(table)
}

fn csv_error(path: &Path, e: csv::Error) -> HarnessError {
    HarnessError::Artifact {
        path: path.to_path_buf(),
        detail: e.to_string(),
    }
}

fn write_ablation(dir: &Path, table: &AblationTable, warmup: usize) -> Result<()> {
    let path = dir.join(ABLATION_TABLE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
    w.write_record(["k", "seed", "accuracy", "mean"])
        .map_err(|e| csv_error(&path, e))?;
    for r in &table.records {
        let m = table.mean_accuracy(r.k).unwrap_or(f64::NAN);
        w.write_record([r.k.to_string(), r.seed.to_string(), r.accuracy.to_string(), m.to_string()])
            .map_err(|e| csv_error(&path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(&path, e))?;

    let path = dir.join(ABLATION_GAE_TABLE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
    w.write_record(["k", "seed", "epoch", "gae_count"])
        .map_err(|e| csv_error(&path, e))?;
    for r in &table.records {
        for (i, count) in r.gae_series.iter().enumerate() {
            w.write_record([
                r.k.to_string(),
                r.seed.to_string(),
                (warmup + i).to_string(),
                count.to_string(),
            ])
            .map_err(|e| csv_error(&path, e))?;
        }
    }
    w.flush().map_err(|e| HarnessError::io(&path, e))
}
