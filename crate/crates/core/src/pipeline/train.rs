//! Training loop, evaluation and the loss-weight sweep.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::{ModalityMode, RunConfig};
use super::data::{assemble_batch, check_samples, Dataset, InputNorm};
use super::metrics::{ClassCounts, DepthCounts, DepthMetrics, MulticlassMetrics};
use super::parallel::{parallel_map, worker_threads};
use super::report::{HeadKind, MetricsReport};
use crate::augmentation::{spatial_transform, AugmentedSample, SpatialParams};
use crate::dataset::Split;
use crate::engine::{
    adam_step, restore_params, AdamConfig, AdamState, Checkpoint, ParamStore, Tape, Tensor, Var,
};
use crate::error::{Error, Result};
use crate::model::{loss_binary_depth, loss_multiclass, Head, PtFusion, Targets};
use crate::rng::stream;

/// Mean losses of one epoch. The validation loss is absent when the
/// validation split is empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLosses {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

/// A trained (or checkpoint-restored) network with everything needed to run
/// it on new samples.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub config: RunConfig,
    pub model: PtFusion,
    pub norm: InputNorm,
    pub curves: Vec<EpochLosses>,
    /// Epoch whose parameters were retained; `None` without training.
    pub best_epoch: Option<usize>,
    pub optimizer_step: u64,
    /// Dataset the model was trained on, when known.
    pub dataset_dir: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointExtra {
    run: RunConfig,
    #[serde(default)]
    dataset_dir: Option<PathBuf>,
    norm: InputNorm,
    curves: Vec<EpochLosses>,
    best_epoch: Option<usize>,
}

impl TrainedModel {
    /// A freshly initialised network with normalisation fitted on `fit_on`.
    pub fn untrained(config: &RunConfig, fit_on: &[AugmentedSample]) -> Result<Self> {
        config.validate()?;
        let mut model = PtFusion::new(config.model.clone(), config.seed)?;
        freeze_disabled_branch(&mut model.store, config.modality);
        Ok(TrainedModel {
            config: config.settings(),
            norm: InputNorm::fit(fit_on)?,
            model,
            curves: Vec::new(),
            best_epoch: None,
            optimizer_step: 0,
            dataset_dir: config.dataset_dir.clone(),
        })
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let extra = CheckpointExtra {
            run: self.config.settings(),
            dataset_dir: self.dataset_dir.clone(),
            norm: self.norm.clone(),
            curves: self.curves.clone(),
            best_epoch: self.best_epoch,
        };
        Ok(Checkpoint {
            seed: self.config.seed,
            optimizer_step: self.optimizer_step,
            extra: serde_json::to_value(extra)?,
            store: self.model.store.clone(),
        })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let extra: CheckpointExtra = serde_json::from_value(ckpt.extra.clone())?;
        let mut model = PtFusion::new(extra.run.model.clone(), extra.run.seed)?;
        restore_params(&mut model.store, &ckpt.store)?;
        freeze_disabled_branch(&mut model.store, extra.run.modality);
        Ok(TrainedModel {
            config: extra.run,
            model,
            norm: extra.norm,
            curves: extra.curves,
            best_epoch: extra.best_epoch,
            optimizer_step: ckpt.optimizer_step,
            dataset_dir: extra.dataset_dir,
        })
    }

    pub fn head_kind(&self) -> HeadKind {
        HeadKind::of(&self.config.model.head)
    }

    fn loss(&self, tape: &mut Tape, samples: &[&AugmentedSample]) -> Result<Var> {
        let (pca, tsr, targets) = assemble_batch(samples, &self.norm, self.config.modality)?;
        let p = tape.constant(pca);
        let t = tape.constant(tsr);
        let preds = self.model.forward(tape, p, t)?;
        model_loss(tape, &self.model, &preds, &targets)
    }

    /// Pixel-averaged loss over `samples` without augmentation.
    pub fn mean_loss(&self, samples: &[AugmentedSample]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("no samples for loss".into()));
        }
        let refs: Vec<&AugmentedSample> = samples.iter().collect();
        let mut total = 0.0;
        for batch in refs.chunks(self.config.batch_size) {
            let mut tape = Tape::new();
            let l = self.loss(&mut tape, batch)?;
            total += tape.value(l).item() * batch.len() as f64;
        }
        Ok(total / samples.len() as f64)
    }

    /// Label map (argmax or defect threshold) and, for the depth head, the
    /// depth map in millimetres.
    pub fn predict(&self, sample: &AugmentedSample) -> Result<SamplePrediction> {
        let (pca, tsr, _) = assemble_batch(&[sample], &self.norm, self.config.modality)?;
        let (logits, depth) = self.model.predict(pca, tsr)?;
        let shape = logits.shape();
        let plane = shape.h * shape.w;
        let labels = if shape.c == 1 {
            // sigmoid(z) >= 0.5 exactly when z >= 0
            logits.data().iter().map(|&z| u8::from(z >= 0.0)).collect()
        } else {
            (0..plane)
                .map(|i| {
                    let mut best = 0;
                    for c in 1..shape.c {
                        if logits.data()[c * plane + i] > logits.data()[best * plane + i] {
                            best = c;
                        }
                    }
                    best as u8
                })
                .collect()
        };
        Ok(SamplePrediction {
            name: sample.name(),
            n_y: shape.h,
            n_x: shape.w,
            labels,
            depth_mm: depth.map(Tensor::into_data),
        })
    }
}

fn model_loss(
    tape: &mut Tape,
    model: &PtFusion,
    preds: &crate::model::Predictions,
    targets: &Targets,
) -> Result<Var> {
    match model.config.head {
        Head::Multiclass { .. } => loss_multiclass(tape, preds, targets),
        Head::BinaryDepth { .. } => loss_binary_depth(tape, preds, targets, model.config.lambda),
    }
}

/// Single-modality runs train only the enabled encoder branch.
fn freeze_disabled_branch(store: &mut ParamStore, mode: ModalityMode) {
    match mode {
        ModalityMode::Fused => {}
        ModalityMode::PcaOnly => {
            store.set_trainable("tsr.", false);
        }
        ModalityMode::TsrOnly => {
            store.set_trainable("pca.", false);
        }
    }
}

/// Trains on `data.train`, scoring each epoch on `data.val` (or on the
/// training loss when there is no validation split) and keeping the
/// parameters of the best epoch.
pub fn train(config: &RunConfig, data: &Dataset) -> Result<TrainedModel> {
    config.validate()?;
    data.check(&config.model)?;
    let mut tm = TrainedModel::untrained(config, &data.train)?;
    let mut adam = AdamState::new(&tm.model.store, AdamConfig::default());
    let mut best: Option<(f64, ParamStore)> = None;
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let seed = config.seed;
    for epoch in 0..config.epochs {
        let ep = epoch.to_string();
        order.sort_unstable();
        order.shuffle(&mut stream(seed, &["shuffle", &ep]));
        let mut total = 0.0;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let augmented: Vec<AugmentedSample>;
            let batch: Vec<&AugmentedSample> = if config.spatial_augmentation {
                let mut rng = stream(seed, &["spatial", &ep, &b.to_string()]);
                let ranges = &config.augmentation.spatial;
                augmented = idx
                    .iter()
                    .map(|&i| {
                        let p = SpatialParams::draw(ranges, &mut rng);
                        spatial_transform(&data.train[i], &p, ranges, false)
                    })
                    .collect::<Result<_>>()?;
                augmented.iter().collect()
            } else {
                idx.iter().map(|&i| &data.train[i]).collect()
            };
            let mut tape = Tape::new();
            let loss = tm.loss(&mut tape, &batch)?;
            total += tape.value(loss).item() * batch.len() as f64;
            tape.backward(loss, &mut tm.model.store)?;
            adam_step(&mut tm.model.store, &mut adam, config.lr);
        }
        let train_loss = total / data.train.len() as f64;
        let val_loss = if data.val.is_empty() {
            None
        } else {
            Some(tm.mean_loss(&data.val)?)
        };
        if !(train_loss.is_finite() && val_loss.is_none_or(f64::is_finite)) {
            return Err(Error::NonFinite(epoch));
        }
        tm.curves.push(EpochLosses {
            epoch,
            train_loss,
            val_loss,
        });
        let score = val_loss.unwrap_or(train_loss);
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((score, tm.model.store.clone()));
            tm.best_epoch = Some(epoch);
        }
    }
    if let Some((_, store)) = best {
        tm.model.store = store;
    }
    tm.optimizer_step = adam.step;
    Ok(tm)
}

/// Predicted labels and depth of one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePrediction {
    pub name: String,
    pub n_y: usize,
    pub n_x: usize,
    pub labels: Vec<u8>,
    pub depth_mm: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub predictions: Vec<SamplePrediction>,
}

/// Runs the network on every sample (in parallel, read-only weights) and
/// pools pixel counts over the split. `expect` rejects a checkpoint whose
/// head does not produce the requested metrics.
pub fn evaluate(
    tm: &TrainedModel,
    samples: &[AugmentedSample],
    split: Split,
    expect: Option<HeadKind>,
) -> Result<Evaluation> {
    let head = tm.head_kind();
    if let Some(want) = expect {
        if want != head {
            return Err(Error::InvalidArgument(format!(
                "checkpoint has a {} head but {} metrics were requested",
                head.name(),
                want.name()
            )));
        }
    }
    check_samples(samples, &tm.config.model)?;
    let predictions = parallel_map(samples, worker_threads(), |s| tm.predict(s))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut report = MetricsReport::new(&tm.config, split, samples.len());
    report.curves = tm.curves.clone();
    report.best_epoch = tm.best_epoch;
    match tm.config.model.head {
        Head::Multiclass { classes } => {
            let mut counts = ClassCounts::new(classes);
            for (s, p) in samples.iter().zip(&predictions) {
                counts.add(&p.labels, &s.gt.class_mask)?;
            }
            report.set_multiclass(MulticlassMetrics::from_counts(&counts));
        }
        Head::BinaryDepth { .. } => {
            let mut counts = DepthCounts::default();
            for (s, p) in samples.iter().zip(&predictions) {
                let gt_depth: Vec<f64> = s.gt.depth_map.iter().map(|&d| f64::from(d)).collect();
                let depth = p
                    .depth_mm
                    .as_deref()
                    .ok_or_else(|| Error::Invariant("depth head produced no depth".into()))?;
                counts.add(&p.labels, depth, &s.gt.class_mask, &gt_depth)?;
            }
            report.set_binary_depth(DepthMetrics::from_counts(&counts));
        }
    }
    report.validate()?;
    Ok(Evaluation {
        report,
        predictions,
    })
}

/// The split reported after training: test, else validation, else train.
pub fn report_split(data: &Dataset) -> Split {
    [Split::Test, Split::Val]
        .into_iter()
        .find(|&s| !data.split(s).is_empty())
        .unwrap_or(Split::Train)
}

/// Trains and evaluates one binary/depth model per loss weight, all with
/// the same seed.
pub fn sweep_lambda(
    config: &RunConfig,
    data: &Dataset,
    grid: &[f64],
) -> Result<Vec<(f64, Evaluation)>> {
    if !matches!(config.model.head, Head::BinaryDepth { .. }) {
        return Err(Error::InvalidArgument(
            "lambda sweep needs a binary_depth head".into(),
        ));
    }
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty lambda grid".into()));
    }
    let split = report_split(data);
    grid.iter()
        .map(|&lambda| {
            let mut cfg = config.clone();
            cfg.model.lambda = lambda;
            let tm = train(&cfg, data)?;
            Ok((lambda, evaluate(&tm, data.split(split), split, None)?))
        })
        .collect()
}
