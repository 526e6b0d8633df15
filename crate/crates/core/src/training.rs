//! Mini-batch training with AdamW, global-norm gradient clipping and early
//! stopping on dev loss, plus the two baselines and multi-seed aggregation.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::{MetricsReport, TrainedArtifact};
use crate::encoders::{init_label_table, EncoderState, LabelEmbeddingTable, TableProvenance, TokenizedInput};
use crate::error::{Error, Result};
use crate::evaluation::evaluate_model;
use crate::losses::{total_loss_grad, BatchTensors, Hierarchy, LossComponents, TotalLossOptions};
use crate::model::{Model, ModelGrads, ModelKind};
use crate::types::{
    DatasetSplits, ExperimentConfig, LabelEncoderKind, LossToggles, RelationInstance, RelationTaxonomy, SplitName,
};

/// RNG stream for per-epoch batch shuffling.
pub const SHUFFLE_STREAM: u64 = 1;

/// Decoupled-weight-decay Adam over a fixed list of flat parameter buffers.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        AdamW {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) {
        assert_eq!(params.len(), grads.len());
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = grads.iter().map(|g| vec![0.0; g.len()]).collect();
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (b, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[b], &mut self.v[b]);
            for i in 0..p.len() {
                p[i] -= self.lr * self.weight_decay * p[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Scales the buffers so their joint L2 norm is at most `max_norm`.
/// Returns `(norm before, norm after)`.
pub fn clip_grad_norm(grads: &mut [&mut [f64]], max_norm: f64) -> (f64, f64) {
    let total = grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if total > max_norm {
        let coef = max_norm / (total + 1e-6);
        for g in grads.iter_mut() {
            g.iter_mut().for_each(|v| *v *= coef);
        }
        (total, total * coef)
    } else {
        (total, total)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpochOutcome {
    Improved,
    NoImprovement,
    Stop,
}

/// Early-stopping bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub epoch: usize,
    pub best_val_loss: f64,
    pub best_epoch: usize,
    pub patience: usize,
    pub patience_left: usize,
    pub rng_seed: u64,
}

impl TrainState {
    pub fn new(patience: usize, rng_seed: u64) -> Self {
        TrainState {
            epoch: 0,
            best_val_loss: f64::INFINITY,
            best_epoch: 0,
            patience,
            patience_left: patience,
            rng_seed,
        }
    }

    /// Records the dev loss of the next epoch (epochs count from 1).
    pub fn observe(&mut self, val_loss: f64) -> EpochOutcome {
        self.epoch += 1;
        if val_loss < self.best_val_loss {
            self.best_val_loss = val_loss;
            self.best_epoch = self.epoch;
            self.patience_left = self.patience;
            EpochOutcome::Improved
        } else {
            self.patience_left = self.patience_left.saturating_sub(1);
            if self.patience_left == 0 {
                EpochOutcome::Stop
            } else {
                EpochOutcome::NoImprovement
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub icl: Option<f64>,
    pub lcl: Option<f64>,
    pub lec: Option<f64>,
    pub ice: Option<f64>,
    pub hier: Option<f64>,
    pub total: f64,
    pub grad_norm: f64,
    pub clipped_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
    pub dev_accuracy: f64,
    pub improved: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

/// What is being trained: the joint model or one of the baselines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSpec {
    pub kind: ModelKind,
    pub toggles: LossToggles,
    pub learning_rate: f64,
    pub label_encoder_kind: LabelEncoderKind,
}

impl RunSpec {
    /// The joint model as configured. ICE-only toggles make it the
    /// classification baseline.
    pub fn from_config(config: &ExperimentConfig) -> Self {
        if !config.loss_toggles.uses_label_table() {
            return Self::classifier_baseline(config);
        }
        RunSpec {
            kind: ModelKind::LabelEmbedding,
            toggles: config.loss_toggles,
            learning_rate: config.learning_rate,
            label_encoder_kind: config.label_encoder_kind,
        }
    }

    pub fn classifier_baseline(config: &ExperimentConfig) -> Self {
        RunSpec {
            kind: ModelKind::ClassifierBaseline,
            toggles: LossToggles::ICE_ONLY,
            learning_rate: config.baseline_learning_rate,
            label_encoder_kind: config.label_encoder_kind,
        }
    }

    /// Cross-entropy over softmax(cos / τ), i.e. the instance-centred term alone.
    pub fn labelemb_baseline(config: &ExperimentConfig) -> Self {
        RunSpec {
            kind: ModelKind::LabelEmbBaseline,
            toggles: LossToggles {
                icl: true,
                lcl: false,
                lec: false,
                ice: false,
            },
            learning_rate: config.learning_rate,
            label_encoder_kind: config.label_encoder_kind,
        }
    }
}

struct Trainer<'a> {
    config: &'a ExperimentConfig,
    spec: RunSpec,
    hierarchy: Option<Hierarchy>,
}

impl Trainer<'_> {
    fn options(&self) -> TotalLossOptions<'_> {
        TotalLossOptions {
            lcl_include_positives: self.config.lcl_include_positives,
            hierarchy: self
                .hierarchy
                .as_ref()
                .map(|h| (h, self.config.hier_penalties.as_slice())),
        }
    }

    /// Loss components and, when `grads` is given, accumulated gradients.
    fn batch(
        &self,
        model: &Model,
        inputs: &[&TokenizedInput],
        labels: &[usize],
        grads: Option<&mut ModelGrads>,
    ) -> Result<LossComponents> {
        let caches: Vec<_> = inputs.iter().map(|t| model.encoder.forward(t)).collect();
        let mut reprs = Array2::zeros((inputs.len(), model.encoder.dim()));
        for (i, c) in caches.iter().enumerate() {
            reprs.row_mut(i).assign(&c.output());
        }
        let logits = self
            .spec
            .toggles
            .ice
            .then(|| reprs.dot(&model.head_w.t()) + &model.head_b);
        let batch = BatchTensors::new(reprs.view(), labels, model.table.view(), self.config.temperature)?;
        let out = total_loss_grad(&batch, logits.as_ref().map(|l| l.view()), self.spec.toggles, self.options())?;
        if let Some(grads) = grads {
            let mut d_reprs = out.d_inputs;
            if let Some(d_logits) = &out.d_logits {
                grads.head_w += &d_logits.t().dot(&reprs);
                grads.head_b += &d_logits.sum_axis(Axis(0));
                d_reprs += &d_logits.dot(&model.head_w);
            }
            grads.table += &out.d_table;
            for (i, cache) in caches.iter().enumerate() {
                model.encoder.backward(cache, d_reprs.row(i), &mut grads.encoder);
            }
        }
        Ok(out.components)
    }

    /// Size-weighted mean total loss over fixed-order batches.
    fn dataset_loss(&self, model: &Model, inputs: &[TokenizedInput], labels: &[usize]) -> Result<f64> {
        let mut sum = 0.0;
        for (chunk_in, chunk_lab) in inputs.chunks(self.config.batch_size).zip(labels.chunks(self.config.batch_size)) {
            let refs: Vec<&TokenizedInput> = chunk_in.iter().collect();
            sum += self.batch(model, &refs, chunk_lab, None)?.total * chunk_in.len() as f64;
        }
        Ok(sum / inputs.len() as f64)
    }

    fn update(&self, model: &mut Model, grads: &mut ModelGrads, opt: &mut AdamW) -> (f64, f64) {
        let train_table = self.spec.toggles.uses_label_table();
        let train_head = self.spec.toggles.ice;
        let train_encoder = !self.config.freeze_input_encoder;
        let mut grad_bufs: Vec<&mut [f64]> = if train_encoder {
            grads.encoder.buffers_mut()
        } else {
            Vec::new()
        };
        if train_table {
            grad_bufs.push(grads.table.as_slice_mut().expect("standard layout"));
        }
        if train_head {
            grad_bufs.push(grads.head_w.as_slice_mut().expect("standard layout"));
            grad_bufs.push(grads.head_b.as_slice_mut().expect("standard layout"));
        }
        let norms = clip_grad_norm(&mut grad_bufs, self.config.grad_clip_norm);
        let grad_views: Vec<&[f64]> = grad_bufs.into_iter().map(|g| &*g).collect();
        let mut params: Vec<&mut [f64]> = if train_encoder {
            model.encoder.buffers_mut()
        } else {
            Vec::new()
        };
        if train_table {
            params.push(model.table.as_slice_mut().expect("standard layout"));
        }
        if train_head {
            params.push(model.head_w.as_slice_mut().expect("standard layout"));
            params.push(model.head_b.as_slice_mut().expect("standard layout"));
        }
        opt.step(params, grad_views);
        norms
    }
}

fn check_finite(c: &LossComponents, epoch: usize, step: usize) -> Result<()> {
    if c.total.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged(format!(
            "non-finite loss at epoch {epoch}, step {step}: icl={:?} lcl={:?} lec={:?} ice={:?} hier={:?}",
            c.icl, c.lcl, c.lec, c.ice, c.hier
        )))
    }
}

fn initial_table(
    taxonomy: &RelationTaxonomy,
    spec: &RunSpec,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<LabelEmbeddingTable> {
    init_label_table(taxonomy, spec.label_encoder_kind, config, seed)
}

/// Trains one model with one seed.
pub fn train_with_spec(
    config: &ExperimentConfig,
    spec: RunSpec,
    splits: &DatasetSplits,
    taxonomy: &RelationTaxonomy,
    seed: u64,
) -> Result<TrainedArtifact> {
    config.validate()?;
    if splits.train.is_empty() {
        return Err(Error::Empty("training split".into()));
    }
    if splits.dev.is_empty() {
        return Err(Error::Empty("dev split".into()));
    }
    for inst in splits.train.iter().chain(&splits.dev).chain(&splits.test) {
        inst.validate(taxonomy.k())?;
    }
    let hierarchy = if spec.kind == ModelKind::LabelEmbedding && spec.label_encoder_kind == LabelEncoderKind::Hierarchy {
        Some(Hierarchy::from_taxonomy(taxonomy)?)
    } else {
        None
    };
    let trainer = Trainer {
        config,
        spec,
        hierarchy,
    };

    let encoder = EncoderState::pretrained(&config.encoder_checkpoint, config.vocab_size, config.dim)?;
    let table = if spec.kind == ModelKind::ClassifierBaseline {
        Array2::zeros((taxonomy.k(), config.dim))
    } else {
        initial_table(taxonomy, &spec, config, seed)?.matrix
    };
    let mut model = Model::new(spec.kind, encoder, table, config, seed);

    let train_inputs: Vec<TokenizedInput> = splits.train.iter().map(|i| model.tokenize(i)).collect();
    let train_labels: Vec<usize> = splits.train.iter().map(|i| i.label).collect();
    let dev_inputs: Vec<TokenizedInput> = splits.dev.iter().map(|i| model.tokenize(i)).collect();
    let dev_labels: Vec<usize> = splits.dev.iter().map(|i| i.label).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SHUFFLE_STREAM);
    let mut opt = AdamW::new(spec.learning_rate, config.weight_decay);
    let mut state = TrainState::new(config.early_stop_patience, seed);
    let mut log = TrainingLog::default();
    let mut best = model.clone();
    let mut order: Vec<usize> = (0..train_inputs.len()).collect();
    let mut step = 0usize;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            step += 1;
            let inputs: Vec<&TokenizedInput> = chunk.iter().map(|&i| &train_inputs[i]).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| train_labels[i]).collect();
            let mut grads = model.zero_grads();
            let comps = trainer.batch(&model, &inputs, &labels, Some(&mut grads))?;
            check_finite(&comps, epoch, step)?;
            let (grad_norm, clipped_norm) = trainer.update(&mut model, &mut grads, &mut opt);
            epoch_loss += comps.total * chunk.len() as f64;
            log.steps.push(StepRecord {
                step,
                epoch,
                icl: comps.icl,
                lcl: comps.lcl,
                lec: comps.lec,
                ice: comps.ice,
                hier: comps.hier,
                total: comps.total,
                grad_norm,
                clipped_norm,
            });
        }
        let dev_loss = trainer.dataset_loss(&model, &dev_inputs, &dev_labels)?;
        if !dev_loss.is_finite() {
            return Err(Error::Diverged(format!("non-finite dev loss after epoch {epoch}")));
        }
        let dev_preds = model.predict(&splits.dev)?;
        let dev_accuracy =
            dev_preds.iter().zip(&dev_labels).filter(|(p, g)| p == g).count() as f64 / dev_labels.len() as f64;
        let outcome = state.observe(dev_loss);
        log::info!("seed {seed} epoch {epoch}: dev loss {dev_loss:.6}, dev accuracy {dev_accuracy:.4}");
        log.epochs.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / train_inputs.len() as f64,
            dev_loss,
            dev_accuracy,
            improved: outcome == EpochOutcome::Improved,
        });
        if outcome == EpochOutcome::Improved {
            best = model.clone();
        }
        if outcome == EpochOutcome::Stop {
            break;
        }
    }

    let model = best;
    let eval_split = if splits.test.is_empty() { SplitName::Dev } else { SplitName::Test };
    let (eval, _) = evaluate_model(&model, splits, eval_split, config.proxy_split)?;
    let metrics = MetricsReport {
        eval,
        epochs_run: state.epoch,
        best_epoch: state.best_epoch,
        best_dev_loss: state.best_val_loss,
        max_clipped_norm: log.steps.iter().map(|s| s.clipped_norm).fold(0.0, f64::max),
        toggles: spec.toggles,
        model_kind: spec.kind,
    };
    let label_table = LabelEmbeddingTable::new(
        model.label_rows().clone(),
        taxonomy.clone(),
        TableProvenance {
            encoder_kind: spec.label_encoder_kind,
            input_encoder: config.encoder_checkpoint.clone(),
            classifier_head: spec.kind == ModelKind::ClassifierBaseline,
        },
    )?;
    let mut stored_config = config.clone();
    stored_config.loss_toggles = spec.toggles;
    Ok(TrainedArtifact {
        config: stored_config,
        taxonomy: taxonomy.clone(),
        label_table,
        model,
        metrics,
        seed,
        log,
    })
}

/// The joint model as configured, first seed.
pub fn train(config: &ExperimentConfig, splits: &DatasetSplits, taxonomy: &RelationTaxonomy) -> Result<TrainedArtifact> {
    train_with_spec(config, RunSpec::from_config(config), splits, taxonomy, config.seeds[0])
}

pub fn train_baseline_classifier(
    config: &ExperimentConfig,
    splits: &DatasetSplits,
    taxonomy: &RelationTaxonomy,
) -> Result<TrainedArtifact> {
    train_with_spec(config, RunSpec::classifier_baseline(config), splits, taxonomy, config.seeds[0])
}

pub fn train_baseline_labelemb(
    config: &ExperimentConfig,
    splits: &DatasetSplits,
    taxonomy: &RelationTaxonomy,
) -> Result<TrainedArtifact> {
    train_with_spec(config, RunSpec::labelemb_baseline(config), splits, taxonomy, config.seeds[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(MeanStd { mean, std })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub metrics: Option<MetricsReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub runs: Vec<SeedOutcome>,
    pub accuracy: Option<MeanStd>,
    pub macro_f1: Option<MeanStd>,
    pub leq: Option<MeanStd>,
    pub single_run: bool,
    pub failed_seeds: Vec<u64>,
}

impl AggregateReport {
    pub fn from_outcomes(runs: Vec<SeedOutcome>) -> Self {
        let ok: Vec<&MetricsReport> = runs.iter().filter_map(|r| r.metrics.as_ref()).collect();
        let col = |f: fn(&MetricsReport) -> f64| MeanStd::of(&ok.iter().map(|m| f(m)).collect::<Vec<_>>());
        AggregateReport {
            accuracy: col(|m| m.eval.accuracy),
            macro_f1: col(|m| m.eval.macro_f1),
            leq: col(|m| m.eval.leq),
            single_run: ok.len() == 1,
            failed_seeds: runs.iter().filter(|r| r.metrics.is_none()).map(|r| r.seed).collect(),
            runs,
        }
    }
}

pub struct MultiSeedRun {
    pub artifacts: Vec<TrainedArtifact>,
    pub report: AggregateReport,
}

/// Trains one model per configured seed, in parallel, and aggregates metrics.
/// A failing seed is reported, not fatal.
pub fn run_multi_seed(
    config: &ExperimentConfig,
    spec: RunSpec,
    splits: &DatasetSplits,
    taxonomy: &RelationTaxonomy,
) -> Result<MultiSeedRun> {
    config.validate()?;
    let results: Vec<(u64, Result<TrainedArtifact>)> = config
        .seeds
        .par_iter()
        .map(|&seed| (seed, train_with_spec(config, spec, splits, taxonomy, seed)))
        .collect();
    let mut artifacts = Vec::new();
    let mut outcomes = Vec::new();
    for (seed, res) in results {
        match res {
            Ok(a) => {
                outcomes.push(SeedOutcome {
                    seed,
                    metrics: Some(a.metrics.clone()),
                    error: None,
                });
                artifacts.push(a);
            }
            Err(e) => {
                log::error!("seed {seed} failed: {e}");
                outcomes.push(SeedOutcome {
                    seed,
                    metrics: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    Ok(MultiSeedRun {
        artifacts,
        report: AggregateReport::from_outcomes(outcomes),
    })
}

/// Artifact with the highest LEQ, used for cross-framework mapping.
pub fn best_leq_artifact(artifacts: &[TrainedArtifact]) -> Option<&TrainedArtifact> {
    artifacts
        .iter()
        .max_by(|a, b| a.metrics.eval.leq.total_cmp(&b.metrics.eval.leq).then(b.seed.cmp(&a.seed)))
}

/// Groups instances by label, for tests and diagnostics.
pub fn labels_of(instances: &[RelationInstance]) -> Vec<usize> {
    instances.iter().map(|i| i.label).collect()
}
