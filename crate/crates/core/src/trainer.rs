//! The AggMatch training step and loop, with FixMatch and supervised-only
//! baselines sharing the same machinery.
//!
//! Pseudo labels and their confidences are treated as constants: gradients
//! flow only through the supervised branch and the strong-view forward pass.

use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aggregation::{aggregate_with_pools, AggregationConfig, CandidatePool, ClassTermOrientation, PreparedQuery, Query};
use crate::confidence::{vote, ConfidenceMode};
use crate::data::{AugmentationSpec, BatchSpec, BatchStream, LabeledBatch, LabeledSet, UnlabeledBatch, UnlabeledSet};
use crate::error::{param_err, Error, Result};
use crate::model::{Architecture, ForwardOutput, Gradients, ModelState, MomentumState};
use crate::numerics::{cross_entropy, hard_label, sharpen, ClassDistribution};
use crate::queue::{ClassBalancedQueue, EntrySource, QueueEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Aggmatch,
    Fixmatch,
    Supervised,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Aggmatch => "aggmatch",
            Method::Fixmatch => "fixmatch",
            Method::Supervised => "supervised",
        }
    }
}

/// Target form of FixMatch pseudo labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    #[default]
    Hard,
    /// Sharpened with the configured temperature.
    Soft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub method: Method,
    pub iterations: u64,
    pub lr: f64,
    /// `λ`, weight of the unsupervised loss.
    pub unsup_weight: f64,
    /// `T`.
    pub sharpen_temperature: f64,
    /// `τ`, shared by the queue gate and the FixMatch gate.
    pub threshold: f64,
    /// `τ_sim`.
    pub sim_temperature: f64,
    /// `λ_sim`.
    pub class_weight: f64,
    pub class_term: ClassTermOrientation,
    /// `λ_m`.
    pub momentum: f64,
    /// `L`, entries per class.
    pub queue_capacity: usize,
    /// `M`.
    pub subsets: usize,
    /// `B`.
    pub labeled_batch: usize,
    /// `μ`.
    pub unlabeled_ratio: usize,
    pub confidence: ConfidenceMode,
    pub store_labeled_onehot: bool,
    pub fixmatch_labels: LabelMode,
    pub eval_every: u64,
    /// Number of unlabeled items scored for pseudo-label precision and recall.
    pub probe_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::Aggmatch,
            iterations: 5000,
            lr: 0.03,
            unsup_weight: 1.0,
            sharpen_temperature: 0.5,
            threshold: 0.95,
            sim_temperature: 0.05,
            class_weight: 0.5,
            class_term: ClassTermOrientation::NegativeDistance,
            momentum: 0.999,
            queue_capacity: 256,
            subsets: 8,
            labeled_batch: 32,
            unlabeled_ratio: 3,
            confidence: ConfidenceMode::Weighting,
            store_labeled_onehot: false,
            fixmatch_labels: LabelMode::Hard,
            eval_every: 100,
            probe_size: 512,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Batch, queue and schedule sizes for long large-scale runs.
    pub fn large_scale() -> Self {
        Self {
            iterations: 1 << 20,
            queue_capacity: 2048,
            subsets: 64,
            labeled_batch: 64,
            unlabeled_ratio: 7,
            eval_every: 1024,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sharpen_temperature", self.sharpen_temperature),
            ("sim_temperature", self.sim_temperature),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return param_err(format!("train.{name} must be positive, got {v}"));
            }
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return param_err(format!("train.lr must be non-negative, got {}", self.lr));
        }
        if !(self.unsup_weight >= 0.0) || !self.unsup_weight.is_finite() {
            return param_err(format!("train.unsup_weight must be non-negative, got {}", self.unsup_weight));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return param_err(format!("train.threshold must lie in (0, 1], got {}", self.threshold));
        }
        if !(0.0..=1.0).contains(&self.momentum) {
            return param_err(format!("train.momentum must lie in [0, 1], got {}", self.momentum));
        }
        for (name, v) in [
            ("queue_capacity", self.queue_capacity),
            ("subsets", self.subsets),
            ("labeled_batch", self.labeled_batch),
            ("eval_every", self.eval_every as usize),
        ] {
            if v == 0 {
                return param_err(format!("train.{name} must be positive"));
            }
        }
        if self.subsets > self.queue_capacity {
            return param_err(format!(
                "train.subsets ({}) cannot exceed train.queue_capacity ({})",
                self.subsets, self.queue_capacity
            ));
        }
        self.aggregation().validate()?;
        self.confidence.validate()
    }

    pub fn aggregation(&self) -> AggregationConfig {
        AggregationConfig {
            temperature: self.sim_temperature,
            class_weight: self.class_weight,
            orientation: self.class_term,
        }
    }

    pub fn batch_spec(&self) -> BatchSpec {
        let ratio = if self.method == Method::Supervised { 0 } else { self.unlabeled_ratio };
        BatchSpec { labeled_batch: self.labeled_batch, unlabeled_ratio: ratio }
    }
}

/// A pseudo-label target and its loss weight.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabel {
    pub target: ClassDistribution,
    pub confidence: f64,
}

/// Everything observed during one training step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    /// 1-based index of the completed step.
    pub iteration: u64,
    pub loss_sup: f64,
    pub loss_unsup: f64,
    /// `loss_sup + λ·loss_unsup`.
    pub loss: f64,
    /// Mean pseudo-label confidence over the unlabeled batch; NaN without one.
    pub mean_confidence: f64,
    pub queue_fill: Vec<usize>,
    pub enqueued: usize,
    pub rejected: usize,
    /// Whether AggMatch fell back to FixMatch pseudo labels this step.
    pub warmup: bool,
}

/// Metrics from one evaluation pass.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalMetrics {
    pub test_accuracy: f64,
    pub per_class_accuracy: Vec<f64>,
    /// Correct counted pseudo labels over counted ones; NaN when none counted.
    pub pl_precision: f64,
    /// Correct counted pseudo labels over all probed items.
    pub pl_recall: f64,
    /// Precision with every pseudo label weighted by its confidence.
    pub pl_weighted_precision: f64,
    pub mean_confidence: f64,
    pub pl_counted: usize,
}

/// Pseudo labels count toward precision and recall at this confidence.
pub const COUNT_CONFIDENCE: f64 = 0.5;

const INIT_STREAM: u64 = 0;
const LABELED_STREAM: u64 = 1;
const UNLABELED_STREAM: u64 = 2;
const PARTITION_STREAM: u64 = 3;
const EVAL_STREAM: u64 = 4;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// `(1/B)·Σ CE(onehot(y), p(x))`.
pub fn supervised_loss(model: &ModelState, batch: &LabeledBatch) -> Result<f64> {
    if batch.views.is_empty() {
        return param_err("supervised loss of an empty batch");
    }
    let mut total = 0.0;
    for (x, &y) in batch.views.iter().zip(&batch.labels) {
        let out = model.forward(x)?;
        total += cross_entropy(&ClassDistribution::one_hot(y, out.distribution.classes())?, &out.distribution);
    }
    Ok(total / batch.views.len() as f64)
}

/// `(1/n)·Σ c_b·CE(q_b, p(strong_b))`.
pub fn unsupervised_loss(model: &ModelState, strong: &[Vec<f64>], pseudo: &[PseudoLabel]) -> Result<f64> {
    if strong.len() != pseudo.len() {
        return Err(Error::LengthMismatch { expected: strong.len(), actual: pseudo.len() });
    }
    if strong.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (x, pl) in strong.iter().zip(pseudo) {
        if pl.confidence == 0.0 {
            continue;
        }
        total += pl.confidence * cross_entropy(&pl.target, &model.forward(x)?.distribution);
    }
    Ok(total / strong.len() as f64)
}

/// FixMatch pseudo label from the weak-view prediction.
pub fn fixmatch_pseudo(p_weak: &ClassDistribution, threshold: f64, mode: LabelMode, temperature: f64) -> Result<PseudoLabel> {
    let confidence = if p_weak.max_prob() >= threshold { 1.0 } else { 0.0 };
    let target = match mode {
        LabelMode::Hard => hard_label(p_weak).1,
        LabelMode::Soft => sharpen(p_weak, temperature)?,
    };
    Ok(PseudoLabel { target, confidence })
}

/// Aggregated pseudo label of one query against per-subset candidate pools.
pub fn aggmatch_pseudo(
    query: &PreparedQuery,
    pools: &[CandidatePool],
    aggregation: &AggregationConfig,
    confidence: &ConfidenceMode,
    temperature: f64,
) -> Result<PseudoLabel> {
    let hypotheses = aggregate_with_pools(query, pools, aggregation)?;
    let votes = vote(&hypotheses)?;
    let mean = crate::aggregation::mean_aggregate(&hypotheses)?;
    Ok(PseudoLabel { target: sharpen(&mean, temperature)?, confidence: confidence.confidence(&votes) })
}

/// Model, momentum model, queue and random streams of one run.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    model: ModelState,
    momentum: MomentumState,
    queue: ClassBalancedQueue,
    labeled: LabeledSet,
    unlabeled: UnlabeledSet,
    batches: BatchStream,
    partition_rng: ChaCha8Rng,
    iteration: u64,
}

impl Trainer {
    /// Ground truth attached to `unlabeled` is dropped here; pass it to
    /// [`Trainer::evaluate`] instead.
    pub fn new(
        config: TrainConfig,
        arch: Architecture,
        augmentation: AugmentationSpec,
        labeled: LabeledSet,
        unlabeled: &UnlabeledSet,
    ) -> Result<Self> {
        config.validate()?;
        let dim = labeled.instances().first().map_or(0, Vec::len);
        if arch.input_dim != dim {
            return Err(Error::LengthMismatch { expected: arch.input_dim, actual: dim });
        }
        if arch.classes != labeled.classes() {
            return Err(Error::LengthMismatch { expected: arch.classes, actual: labeled.classes() });
        }
        if !unlabeled.is_empty() && unlabeled.instances()[0].len() != dim {
            return Err(Error::LengthMismatch { expected: dim, actual: unlabeled.instances()[0].len() });
        }
        let unlabeled = unlabeled.without_eval_labels();
        let model = ModelState::init(arch, &mut stream(config.seed, INIT_STREAM));
        let momentum = MomentumState::from_model(&model);
        let queue = ClassBalancedQueue::new(labeled.classes(), config.queue_capacity, config.threshold)?
            .with_labeled_onehot(config.store_labeled_onehot);
        let batches = BatchStream::new(
            config.batch_spec(),
            augmentation,
            &labeled,
            &unlabeled,
            stream(config.seed, LABELED_STREAM),
            stream(config.seed, UNLABELED_STREAM),
        )?;
        let partition_rng = stream(config.seed, PARTITION_STREAM);
        Ok(Self { config, model, momentum, queue, labeled, unlabeled, batches, partition_rng, iteration: 0 })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn model(&self) -> &ModelState {
        &self.model
    }

    pub fn momentum(&self) -> &MomentumState {
        &self.momentum
    }

    pub fn queue(&self) -> &ClassBalancedQueue {
        &self.queue
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Draws the next batches and trains on them.
    pub fn train_step(&mut self) -> Result<StepReport> {
        let labeled_batch = self.batches.next_labeled(&self.labeled);
        let unlabeled_batch = self.batches.next_unlabeled(&self.unlabeled);
        self.train_step_on(&labeled_batch, &unlabeled_batch)
    }

    /// One step on given batches.
    pub fn train_step_on(&mut self, lb: &LabeledBatch, ub: &UnlabeledBatch) -> Result<StepReport> {
        if lb.views.is_empty() {
            return param_err("labeled batch is empty");
        }
        let mut grads = self.model.gradients();
        let loss_sup = self.accumulate_supervised(lb, &mut grads)?;

        let (pseudo, enqueued, rejected, warmup) = match self.config.method {
            Method::Supervised => (Vec::new(), 0, 0, false),
            Method::Fixmatch => {
                let pseudo = ub
                    .weak
                    .iter()
                    .map(|x| {
                        let p = self.model.forward(x)?.distribution;
                        fixmatch_pseudo(&p, self.config.threshold, self.config.fixmatch_labels, self.config.sharpen_temperature)
                    })
                    .collect::<Result<Vec<_>>>()?;
                (pseudo, 0, 0, false)
            }
            Method::Aggmatch => self.aggmatch_targets(lb, ub)?,
        };

        let loss_unsup = self.accumulate_unsupervised(&ub.strong[..pseudo.len()], &pseudo, &mut grads)?;
        let loss = loss_sup + self.config.unsup_weight * loss_unsup;
        let mean_confidence = if pseudo.is_empty() {
            f64::NAN
        } else {
            pseudo.iter().map(|p| p.confidence).sum::<f64>() / pseudo.len() as f64
        };
        if !loss.is_finite() {
            return Err(Error::NonFinite(self.diagnostic(lb, ub, loss_sup, loss_unsup)));
        }

        self.model.sgd_step(&grads, self.config.lr)?;
        if self.config.method == Method::Aggmatch {
            self.momentum.update(&self.model, self.config.momentum)?;
        }
        self.iteration += 1;
        Ok(StepReport {
            iteration: self.iteration,
            loss_sup,
            loss_unsup,
            loss,
            mean_confidence,
            queue_fill: self.queue.fill(),
            enqueued,
            rejected,
            warmup,
        })
    }

    fn accumulate_supervised(&self, lb: &LabeledBatch, grads: &mut Gradients) -> Result<f64> {
        let b = lb.views.len() as f64;
        let mut total = 0.0;
        for (x, &y) in lb.views.iter().zip(&lb.labels) {
            let out = self.model.forward(x)?;
            let target = ClassDistribution::one_hot(y, out.distribution.classes())?;
            total += cross_entropy(&target, &out.distribution);
            let d: Vec<f64> = out.distribution.iter().zip(target.iter()).map(|(p, t)| (p - t) / b).collect();
            self.model.backward_and_accumulate(&out, &d, None, grads)?;
        }
        Ok(total / b)
    }

    fn accumulate_unsupervised(&self, strong: &[Vec<f64>], pseudo: &[PseudoLabel], grads: &mut Gradients) -> Result<f64> {
        if strong.is_empty() {
            return Ok(0.0);
        }
        let n = strong.len() as f64;
        let lambda = self.config.unsup_weight;
        let mut total = 0.0;
        for (x, pl) in strong.iter().zip(pseudo) {
            if pl.confidence == 0.0 {
                continue;
            }
            let out = self.model.forward(x)?;
            total += pl.confidence * cross_entropy(&pl.target, &out.distribution);
            if lambda == 0.0 {
                continue;
            }
            let scale = lambda * pl.confidence / n;
            let d: Vec<f64> = out.distribution.iter().zip(pl.target.iter()).map(|(p, q)| scale * (p - q)).collect();
            self.model.backward_and_accumulate(&out, &d, None, grads)?;
        }
        Ok(total / n)
    }

    /// Enqueue, partition, aggregate and vote; returns the pseudo labels and
    /// the gate's admit/reject counts.
    fn aggmatch_targets(&mut self, lb: &LabeledBatch, ub: &UnlabeledBatch) -> Result<(Vec<PseudoLabel>, usize, usize, bool)> {
        let weak: Vec<ForwardOutput> = ub.weak.iter().map(|x| self.model.forward(x)).collect::<Result<_>>()?;
        let step = self.iteration;
        let (mut enqueued, mut rejected) = (0, 0);
        for x in &ub.weak {
            let m = self.momentum.model().forward(x)?;
            if self.queue.enqueue_unlabeled(QueueEntry::new(m.feature, m.distribution, EntrySource::Unlabeled, step)) {
                enqueued += 1;
            } else {
                rejected += 1;
            }
        }
        for (x, &y) in lb.views.iter().zip(&lb.labels) {
            let m = self.momentum.model().forward(x)?;
            self.queue.enqueue_labeled(QueueEntry::new(m.feature, m.distribution, EntrySource::Labeled, step), y)?;
        }

        let cfg = &self.config;
        if !self.queue.ready(cfg.subsets) {
            let pseudo = weak
                .iter()
                .map(|o| fixmatch_pseudo(&o.distribution, cfg.threshold, LabelMode::Soft, cfg.sharpen_temperature))
                .collect::<Result<_>>()?;
            return Ok((pseudo, enqueued, rejected, true));
        }
        let partition = self.queue.partition(cfg.subsets, &mut self.partition_rng)?;
        let pools = CandidatePool::from_partition(&partition)?;
        let aggregation = cfg.aggregation();
        let pseudo = weak
            .into_iter()
            .map(|o| {
                let q = PreparedQuery::new(&Query { feature: o.feature, distribution: o.distribution });
                aggmatch_pseudo(&q, &pools, &aggregation, &cfg.confidence, cfg.sharpen_temperature)
            })
            .collect::<Result<_>>()?;
        Ok((pseudo, enqueued, rejected, false))
    }

    fn diagnostic(&self, lb: &LabeledBatch, ub: &UnlabeledBatch, loss_sup: f64, loss_unsup: f64) -> String {
        let range = |views: &[Vec<f64>]| {
            views.iter().flatten().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
        };
        let (llo, lhi) = range(&lb.views);
        let (ulo, uhi) = range(&ub.strong);
        format!(
            "non-finite loss at step {}: loss_sup={loss_sup} loss_unsup={loss_unsup}\n\
             labeled batch: {} items, labels {:?}, input range [{llo}, {lhi}]\n\
             unlabeled batch: {} items, strong input range [{ulo}, {uhi}]\n\
             queue fill per class: {:?}\n\
             model parameters finite: {}",
            self.iteration + 1,
            lb.views.len(),
            lb.labels,
            ub.len(),
            self.queue.fill(),
            self.model.is_finite(),
        )
    }

    /// Pseudo labels the current state would assign to clean inputs, using
    /// a partition stream derived from the seed and iteration so that
    /// evaluation never perturbs training.
    pub fn probe_pseudo_labels(&self, inputs: &[Vec<f64>]) -> Result<Vec<PseudoLabel>> {
        let cfg = &self.config;
        let outputs: Vec<ForwardOutput> = inputs.iter().map(|x| self.model.forward(x)).collect::<Result<_>>()?;
        match cfg.method {
            Method::Aggmatch if self.queue.ready(cfg.subsets) => {
                let mut rng = stream(cfg.seed ^ self.iteration.wrapping_mul(0x9E37_79B9_7F4A_7C15), EVAL_STREAM);
                let partition = self.queue.partition(cfg.subsets, &mut rng)?;
                let pools = CandidatePool::from_partition(&partition)?;
                let aggregation = cfg.aggregation();
                outputs
                    .into_iter()
                    .map(|o| {
                        let q = PreparedQuery::new(&Query { feature: o.feature, distribution: o.distribution });
                        aggmatch_pseudo(&q, &pools, &aggregation, &cfg.confidence, cfg.sharpen_temperature)
                    })
                    .collect()
            }
            Method::Aggmatch => outputs
                .iter()
                .map(|o| fixmatch_pseudo(&o.distribution, cfg.threshold, LabelMode::Soft, cfg.sharpen_temperature))
                .collect(),
            Method::Fixmatch | Method::Supervised => outputs
                .iter()
                .map(|o| fixmatch_pseudo(&o.distribution, cfg.threshold, cfg.fixmatch_labels, cfg.sharpen_temperature))
                .collect(),
        }
    }

    /// Test accuracy under `θ`, plus pseudo-label quality on an evenly
    /// strided probe of the unlabeled set.
    pub fn evaluate(&self, test: &LabeledSet, unlabeled: &UnlabeledSet) -> Result<EvalMetrics> {
        let (test_accuracy, per_class_accuracy) = accuracy(&self.model, test)?;
        let mut metrics = EvalMetrics {
            test_accuracy,
            per_class_accuracy,
            pl_precision: f64::NAN,
            pl_recall: f64::NAN,
            pl_weighted_precision: f64::NAN,
            mean_confidence: f64::NAN,
            pl_counted: 0,
        };
        let Some(truth) = unlabeled.eval_labels() else {
            return Ok(metrics);
        };
        let n = unlabeled.len().min(self.config.probe_size);
        if n == 0 {
            return Ok(metrics);
        }
        let idx: Vec<usize> = (0..n).map(|i| i * unlabeled.len() / n).collect();
        let inputs: Vec<Vec<f64>> = idx.iter().map(|&i| unlabeled.instances()[i].clone()).collect();
        let pseudo = self.probe_pseudo_labels(&inputs)?;
        let truth: Vec<usize> = idx.iter().map(|&i| truth[i]).collect();
        let quality = pseudo_label_quality(&pseudo, &truth);
        metrics.pl_precision = quality.precision;
        metrics.pl_recall = quality.recall;
        metrics.pl_weighted_precision = quality.weighted_precision;
        metrics.mean_confidence = quality.mean_confidence;
        metrics.pl_counted = quality.counted;
        Ok(metrics)
    }

    /// Runs the remaining iterations, evaluating every `eval_every` steps and
    /// after the last one. `observe` sees every step and any evaluation.
    pub fn fit<F>(&mut self, test: &LabeledSet, unlabeled: &UnlabeledSet, mut observe: F) -> Result<EvalMetrics>
    where
        F: FnMut(&StepReport, Option<&EvalMetrics>) -> Result<()>,
    {
        let mut last = None;
        while self.iteration < self.config.iterations {
            let report = self.train_step()?;
            let due = report.iteration % self.config.eval_every == 0 || report.iteration == self.config.iterations;
            let metrics = if due { Some(self.evaluate(test, unlabeled)?) } else { None };
            observe(&report, metrics.as_ref())?;
            if metrics.is_some() {
                last = metrics;
            }
        }
        match last {
            Some(m) => Ok(m),
            None => self.evaluate(test, unlabeled),
        }
    }

    /// Saves `θ`, `θ_m`, the queue and the step counter.
    pub fn write_checkpoint<W: Write>(&self, out: &mut W) -> Result<()> {
        Checkpoint::write(out, self.iteration, &self.model, &self.momentum, &self.queue)
    }
}

/// Overall and per-class accuracy; classes absent from `set` report NaN.
pub fn accuracy(model: &ModelState, set: &LabeledSet) -> Result<(f64, Vec<f64>)> {
    let classes = set.classes();
    let mut correct = vec![0usize; classes];
    let mut total = vec![0usize; classes];
    for (x, &y) in set.instances().iter().zip(set.labels()) {
        total[y] += 1;
        if model.forward(x)?.distribution.argmax() == y {
            correct[y] += 1;
        }
    }
    let n: usize = total.iter().sum();
    let overall = if n == 0 { f64::NAN } else { correct.iter().sum::<usize>() as f64 / n as f64 };
    let per_class = correct.iter().zip(&total).map(|(&c, &t)| if t == 0 { f64::NAN } else { c as f64 / t as f64 }).collect();
    Ok((overall, per_class))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoLabelQuality {
    pub precision: f64,
    pub recall: f64,
    pub weighted_precision: f64,
    pub mean_confidence: f64,
    pub counted: usize,
}

/// A pseudo label counts when its confidence reaches [`COUNT_CONFIDENCE`].
pub fn pseudo_label_quality(pseudo: &[PseudoLabel], truth: &[usize]) -> PseudoLabelQuality {
    let mut counted = 0;
    let mut correct = 0;
    let mut weight = 0.0;
    let mut weighted_correct = 0.0;
    for (pl, &y) in pseudo.iter().zip(truth) {
        let right = pl.target.argmax() == y;
        weight += pl.confidence;
        if right {
            weighted_correct += pl.confidence;
        }
        if pl.confidence >= COUNT_CONFIDENCE {
            counted += 1;
            correct += right as usize;
        }
    }
    let n = pseudo.len().min(truth.len());
    PseudoLabelQuality {
        precision: if counted == 0 { f64::NAN } else { correct as f64 / counted as f64 },
        recall: if n == 0 { f64::NAN } else { correct as f64 / n as f64 },
        weighted_precision: if weight == 0.0 { f64::NAN } else { weighted_correct / weight },
        mean_confidence: if n == 0 { f64::NAN } else { weight / n as f64 },
        counted,
    }
}

/// Saved state of a run, enough to dump features, attention and the queue.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub iteration: u64,
    pub model: ModelState,
    pub momentum: MomentumState,
    pub queue: ClassBalancedQueue,
}

const CHECKPOINT_MAGIC: &str = "AGGMATCH-CHECKPOINT v1";

impl Checkpoint {
    fn write<W: Write>(
        out: &mut W,
        iteration: u64,
        model: &ModelState,
        momentum: &MomentumState,
        queue: &ClassBalancedQueue,
    ) -> Result<()> {
        writeln!(out, "{CHECKPOINT_MAGIC}")?;
        writeln!(out, "iteration {iteration}")?;
        model.write_to(out)?;
        momentum.write_to(out)?;
        queue.write_to(out)
    }

    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<()> {
        Self::write(out, self.iteration, &self.model, &self.momentum, &self.queue)
    }

    pub fn read_from<R: BufRead>(input: &mut R) -> Result<Self> {
        let mut lines = crate::model::LineReader::new(input);
        let magic = lines.next_line()?;
        if magic != CHECKPOINT_MAGIC {
            return Err(lines.error(format!("expected `{CHECKPOINT_MAGIC}`, found `{magic}`")));
        }
        let it = lines.keyed_usizes("iteration")?;
        let [iteration] = it[..] else {
            return Err(lines.error("malformed iteration line".into()));
        };
        drop(lines);
        let model = ModelState::read_from(input)?;
        let momentum = MomentumState::read_from(input)?;
        let queue = ClassBalancedQueue::read_from(input)?;
        Ok(Self { iteration: iteration as u64, model, momentum, queue })
    }
}
