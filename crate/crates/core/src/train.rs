//! Plain cross-entropy training and GAE-guided fine-tuning.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attack::{batch_attack, AttackConfig};
use crate::autodiff::{Tape, Tensor};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gae::{partition_classes, select_gaes, AcceptRule, ClassPartition, GaeStats, PartitionRule};
use crate::metrics::EvalMetrics;
use crate::model::Model;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Multiply the rate by `gamma` every `every` epochs.
    StepDecay { every: usize, gamma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Leading epochs of plain cross-entropy before guidance starts.
    pub warmup_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub schedule: LrSchedule,
    /// Weight of the guiding loss; 0 disables guidance entirely.
    pub lambda_cross: f64,
    pub attack: AttackConfig,
    pub partition: PartitionRule,
    pub accept: AcceptRule,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            warmup_epochs: 20,
            batch_size: 64,
            learning_rate: 0.1,
            momentum: 0.9,
            schedule: LrSchedule::Constant,
            lambda_cross: 1.0,
            attack: AttackConfig::for_vectors(3),
            partition: PartitionRule::BelowMeanCount,
            accept: AcceptRule::HeadOnly,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.warmup_epochs > self.epochs {
            return bad(format!(
                "warmup_epochs ({}) exceeds epochs ({})",
                self.warmup_epochs, self.epochs
            ));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.lambda_cross >= 0.0 && self.lambda_cross.is_finite()) {
            return bad(format!("lambda_cross must be >= 0, got {}", self.lambda_cross));
        }
        if let LrSchedule::StepDecay { every, gamma } = self.schedule {
            if every == 0 || !(gamma > 0.0) {
                return bad("step decay needs every > 0 and gamma > 0".into());
            }
        }
        self.attack.validate()
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::StepDecay { every, gamma } => {
                self.learning_rate * gamma.powi((epoch / every) as i32)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Ce,
    Guided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub phase: Phase,
    pub learning_rate: f64,
    /// Mean minibatch cross-entropy on the training data.
    pub train_loss: f64,
    /// Mean guiding loss over minibatches that produced GAEs.
    pub cross_loss: Option<f64>,
    pub gae_count: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunMetrics {
    pub epochs: Vec<EpochMetrics>,
    /// GAE tallies for each guided epoch.
    pub gae: Vec<GaeStats>,
    pub final_eval: Option<EvalMetrics>,
}

impl RunMetrics {
    /// GAE count of every guided epoch, in order.
    pub fn gae_series(&self) -> Vec<usize> {
        self.epochs
            .iter()
            .filter(|e| e.phase == Phase::Guided)
            .map(|e| e.gae_count)
            .collect()
    }
}

/// Resumable minibatch SGD over one dataset.
#[derive(Debug, Clone)]
pub struct Trainer<'a> {
    data: &'a Dataset,
    cfg: TrainConfig,
    counts: Vec<usize>,
    partition: ClassPartition,
    model: Model,
    velocity: Vec<Vec<f64>>,
    rng: ChaCha8Rng,
    epoch: usize,
    metrics: RunMetrics,
}

impl<'a> Trainer<'a> {
    pub fn new(model: Model, data: &'a Dataset, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if data.is_empty() {
            return Err(Error::InvalidConfig("training set is empty".into()));
        }
        if data.dim() != model.input_dim() || data.num_classes() != model.num_classes() {
            return Err(Error::ShapeMismatch {
                op: "train",
                lhs: vec![data.dim(), data.num_classes()],
                rhs: vec![model.input_dim(), model.num_classes()],
            });
        }
        let counts = data.class_counts();
        let partition = partition_classes(&counts, &cfg.partition)?;
        let velocity = model.params().iter().map(|p| vec![0.0; p.len()]).collect();
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Self {
            data,
            cfg,
            counts,
            partition,
            model,
            velocity,
            rng,
            epoch: 0,
            metrics: RunMetrics::default(),
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn metrics(&self) -> &RunMetrics {
        &self.metrics
    }

    pub fn partition(&self) -> &ClassPartition {
        &self.partition
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// Replace the attack used by later guided epochs.
    pub fn set_attack(&mut self, attack: AttackConfig) -> Result<()> {
        attack.validate()?;
        self.cfg.attack = attack;
        Ok(())
    }

    pub fn into_parts(self) -> (Model, RunMetrics) {
        (self.model, self.metrics)
    }

    /// One pass over the shuffled training set.
    pub fn run_epoch(&mut self, phase: Phase) -> Result<&EpochMetrics> {
        let epoch = self.epoch;
        let diverged = |e: Error| match e {
            Error::NonFinite { op } => Error::Divergence {
                epoch,
                detail: format!("non-finite value in {op}"),
            },
            other => other,
        };
        let guided = phase == Phase::Guided && self.cfg.lambda_cross > 0.0;
        let lr = self.cfg.lr_at(epoch);
        let mut order: Vec<usize> = (0..self.data.len()).collect();
        order.shuffle(&mut self.rng);

        let mut stats = GaeStats::new(epoch, self.counts.len());
        let (mut loss_sum, mut batches) = (0.0, 0usize);
        let (mut cross_sum, mut cross_batches) = (0.0, 0usize);

        for batch in order.chunks(self.cfg.batch_size) {
            let (x, labels) = self.data.batch(batch);
            let mut tape = Tape::new();
            let params = self.model.bind(&mut tape, true);
            let xv = tape.constant(x);
            let logits = self.model.forward(&mut tape, &params, xv).map_err(diverged)?;
            let ce = tape.cross_entropy(logits, &labels).map_err(diverged)?;
            let mut loss = ce;

            if guided {
                let tail: Vec<usize> = batch
                    .iter()
                    .copied()
                    .filter(|&i| self.partition.is_tail(self.data.labels()[i]))
                    .collect();
                if !tail.is_empty() {
                    let (tx, ty) = self.data.batch(&tail);
                    let traces =
                        batch_attack(&self.model, &tx, &ty, &self.cfg.attack).map_err(diverged)?;
                    let gaes = select_gaes(&traces, &self.partition, &self.counts, self.cfg.accept)?;
                    stats.record(&gaes);
                    if !gaes.is_empty() {
                        for g in &gaes.members {
                            assert!(
                                g.label == g.source_class && self.partition.is_tail(g.label),
                                "guiding label must be the original tail label"
                            );
                        }
                        let gx = Tensor::new(vec![gaes.len(), self.data.dim()], gaes.features())?;
                        let gv = tape.constant(gx);
                        let gz = self.model.forward(&mut tape, &params, gv).map_err(diverged)?;
                        let cross = tape.cross_entropy(gz, &gaes.labels()).map_err(diverged)?;
                        cross_sum += tape.value(cross).item().unwrap();
                        cross_batches += 1;
                        let weighted = tape.scale(cross, self.cfg.lambda_cross).map_err(diverged)?;
                        loss = tape.add(ce, weighted).map_err(diverged)?;
                    }
                }
            }

            loss_sum += tape.value(ce).item().unwrap();
            batches += 1;
            let grads = tape.backward(loss)?;
            self.sgd_step(&params, &grads, lr);
        }

        let train_loss = loss_sum / batches as f64;
        if !train_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                detail: "training loss is not finite".into(),
            });
        }
        if phase == Phase::Guided {
            self.metrics.gae.push(stats.clone());
        }
        self.metrics.epochs.push(EpochMetrics {
            epoch,
            phase,
            learning_rate: lr,
            train_loss,
            cross_loss: (cross_batches > 0).then(|| cross_sum / cross_batches as f64),
            gae_count: stats.count,
        });
        self.epoch += 1;
        Ok(self.metrics.epochs.last().unwrap())
    }

    fn sgd_step(
        &mut self,
        params: &[crate::autodiff::Var],
        grads: &crate::autodiff::Gradients,
        lr: f64,
    ) {
        let momentum = self.cfg.momentum;
        for ((p, var), vel) in self
            .model
            .params_mut()
            .iter_mut()
            .zip(params)
            .zip(&mut self.velocity)
        {
            let g = grads.get(*var).expect("parameters are grad leaves");
            for ((w, v), &dw) in p.data_mut().iter_mut().zip(vel.iter_mut()).zip(g.data()) {
                *v = momentum * *v + dw;
                *w -= lr * *v;
            }
        }
    }
}

/// Minibatch SGD on cross-entropy for `cfg.epochs` epochs.
pub fn train_ce(model: Model, data: &Dataset, cfg: &TrainConfig) -> Result<(Model, RunMetrics)> {
    let mut trainer = Trainer::new(model, data, cfg.clone())?;
    for _ in 0..cfg.epochs {
        trainer.run_epoch(Phase::Ce)?;
    }
    Ok(trainer.into_parts())
}

/// `warmup_epochs` of plain cross-entropy, then cross-entropy plus the
/// weighted guiding loss on GAEs regenerated from every minibatch.
pub fn train_guided(model: Model, data: &Dataset, cfg: &TrainConfig) -> Result<(Model, RunMetrics)> {
    let mut trainer = Trainer::new(model, data, cfg.clone())?;
    for epoch in 0..cfg.epochs {
        let phase = if epoch < cfg.warmup_epochs {
            Phase::Ce
        } else {
            Phase::Guided
        };
        trainer.run_epoch(phase)?;
    }
    Ok(trainer.into_parts())
}

/// Top-1 metrics on a (class-balanced) test set.
pub fn evaluate(model: &Model, test: &Dataset) -> Result<EvalMetrics> {
    let mut predicted = Vec::with_capacity(test.len());
    let all: Vec<usize> = (0..test.len()).collect();
    for chunk in all.chunks(1024) {
        let (x, _) = test.batch(chunk);
        predicted.extend(model.classify(&x)?);
    }
    Ok(EvalMetrics::from_predictions(
        model.num_classes(),
        test.labels(),
        &predicted,
    ))
}

/// Remove repeated k values, keeping first occurrences. The flag reports
/// whether anything was dropped.
pub fn dedup_k(k_values: &[usize]) -> (Vec<usize>, bool) {
    let mut out: Vec<usize> = Vec::with_capacity(k_values.len());
    for &k in k_values {
        if !out.contains(&k) {
            out.push(k);
        }
    }
    let dropped = out.len() != k_values.len();
    (out, dropped)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub k: usize,
    pub accuracy: f64,
    pub gae_series: Vec<usize>,
    pub eval: EvalMetrics,
}

/// One guided run per distinct `k`, everything else fixed.
///
/// The warmup phase does not depend on `k`, so it runs once and every `k`
/// continues from a copy of the same trainer state.
pub fn ablate_k(
    model: Model,
    data: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
    k_values: &[usize],
) -> Result<Vec<AblationRow>> {
    let (ks, _) = dedup_k(k_values);
    if ks.is_empty() {
        return Err(Error::InvalidConfig("k_values is empty".into()));
    }
    let mut warm = Trainer::new(model, data, cfg.clone())?;
    for _ in 0..cfg.warmup_epochs {
        warm.run_epoch(Phase::Ce)?;
    }
    ks.iter()
        .map(|&k| {
            let mut trainer = warm.clone();
            trainer.set_attack(AttackConfig { k, ..cfg.attack })?;
            for _ in cfg.warmup_epochs..cfg.epochs {
                trainer.run_epoch(Phase::Guided)?;
            }
            let (model, metrics) = trainer.into_parts();
            let eval = evaluate(&model, test)?;
            Ok(AblationRow {
                k,
                accuracy: eval.accuracy,
                gae_series: metrics.gae_series(),
                eval,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_gaussians, GaussianMixture, LongTailSpec};
    use crate::model::ModelSpec;

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 4,
            warmup_epochs: 2,
            batch_size: 16,
            ..TrainConfig::default()
        }
    }

    fn longtail(rho: f64) -> Dataset {
        let spec = LongTailSpec::new(4, 60, rho).unwrap();
        synth_gaussians(&GaussianMixture::circle(4).unwrap(), &spec, 1)
            .unwrap()
            .data
    }

    #[test]
    fn zero_epochs_leave_model_unchanged() {
        let data = longtail(0.1);
        let model = Model::init(ModelSpec::mlp(2, &[8], 4), 3).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            warmup_epochs: 0,
            ..small_cfg()
        };
        let (trained, metrics) = train_ce(model.clone(), &data, &cfg).unwrap();
        assert_eq!(trained, model);
        assert!(metrics.epochs.is_empty());
    }

    #[test]
    fn config_validation() {
        let mut cfg = small_cfg();
        cfg.warmup_epochs = 5;
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig {
            lambda_cross: -1.0,
            ..small_cfg()
        };
        assert!(cfg.validate().is_err());
        assert!(small_cfg().validate().is_ok());
    }

    #[test]
    fn step_decay_schedule() {
        let cfg = TrainConfig {
            schedule: LrSchedule::StepDecay { every: 10, gamma: 0.1 },
            learning_rate: 1.0,
            ..small_cfg()
        };
        assert_eq!(cfg.lr_at(9), 1.0);
        assert!((cfg.lr_at(10) - 0.1).abs() < 1e-15);
        assert!((cfg.lr_at(25) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn mismatched_model_is_rejected() {
        let data = longtail(0.1);
        let model = Model::init(ModelSpec::logistic(3, 4), 0).unwrap();
        assert!(train_ce(model, &data, &small_cfg()).is_err());
    }

    #[test]
    fn lambda_zero_matches_ce_bitwise() {
        let data = longtail(0.1);
        let model = Model::init(ModelSpec::mlp(2, &[8], 4), 3).unwrap();
        let (ce, _) = train_ce(model.clone(), &data, &small_cfg()).unwrap();
        let cfg = TrainConfig {
            lambda_cross: 0.0,
            ..small_cfg()
        };
        let (guided, metrics) = train_guided(model, &data, &cfg).unwrap();
        assert_eq!(ce.to_checkpoint_bytes(), guided.to_checkpoint_bytes());
        assert!(metrics.gae_series().iter().all(|&c| c == 0));
    }

    #[test]
    fn divergence_is_reported_with_epoch() {
        let data = longtail(0.1);
        let model = Model::init(ModelSpec::mlp(2, &[8], 4), 3).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e200,
            momentum: 0.0,
            ..small_cfg()
        };
        match train_ce(model, &data, &cfg) {
            Err(Error::Divergence { epoch, .. }) => assert!(epoch < cfg.epochs),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn dedup_keeps_first_occurrence() {
        assert_eq!(dedup_k(&[3, 1, 3, 9, 1]), (vec![3, 1, 9], true));
        assert_eq!(dedup_k(&[3]), (vec![3], false));
    }

    #[test]
    fn single_k_ablation_has_one_row() {
        let data = longtail(0.1);
        let test = GaussianMixture::circle(4).unwrap().sample_balanced(20, 5).unwrap();
        let model = Model::init(ModelSpec::mlp(2, &[8], 4), 3).unwrap();
        let rows = ablate_k(model, &data, &test, &small_cfg(), &[3]).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].k, 3);
        assert_eq!(rows[0].gae_series.len(), 2);
    }
}
