//! Network inputs: per-channel normalisation fitted on the training split
//! and batch assembly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModalityMode;
use super::parallel::parallel_map;
use crate::augmentation::{
    augment_dataset, load_augmented_split, unaugmented, AugmentationConfig, AugmentedSample,
};
use crate::dataset::{default_counts, split_dataset, DatasetEntry, DatasetIndex, Split};
use crate::io::{create_dir, load_ground_truth, load_sequence, save_ground_truth, save_sequence};
use crate::sequence::{GroundTruth, ThermalSequence};
use crate::engine::{Shape, Tensor};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Targets};

/// Compressed samples of the three splits.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub train: Vec<AugmentedSample>,
    pub val: Vec<AugmentedSample>,
    pub test: Vec<AugmentedSample>,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self> {
        Ok(Dataset {
            train: load_augmented_split(dir, Split::Train)?,
            val: load_augmented_split(dir, Split::Val)?,
            test: load_augmented_split(dir, Split::Test)?,
        })
    }

    pub fn split(&self, split: Split) -> &[AugmentedSample] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn from_samples(samples: impl IntoIterator<Item = (Split, AugmentedSample)>) -> Self {
        let mut d = Dataset::default();
        for (split, s) in samples {
            match split {
                Split::Train => d.train.push(s),
                Split::Val => d.val.push(s),
                Split::Test => d.test.push(s),
            }
        }
        d
    }

    /// Checks every sample against the model's channel counts and depth.
    pub fn check(&self, model: &ModelConfig) -> Result<()> {
        if self.train.is_empty() {
            return Err(Error::InvalidArgument("training split is empty".into()));
        }
        check_samples(self.train.iter().chain(&self.val).chain(&self.test), model)
    }
}

/// Verifies channel counts, image sizes and labels against `model`.
pub fn check_samples<'a>(
    samples: impl IntoIterator<Item = &'a AugmentedSample>,
    model: &ModelConfig,
) -> Result<()> {
    for s in samples {
        if s.pca.components() != model.pca_channels || s.tsr.coefficients() != model.tsr_channels {
            return Err(Error::Shape(format!(
                "sample {} has {} PCA / {} TSR channels, model expects {} / {}",
                s.name(),
                s.pca.components(),
                s.tsr.coefficients(),
                model.pca_channels,
                model.tsr_channels
            )));
        }
        if (s.pca.n_y, s.pca.n_x) != (s.gt.n_y, s.gt.n_x)
            || (s.tsr.n_y, s.tsr.n_x) != (s.gt.n_y, s.gt.n_x)
        {
            return Err(Error::Shape(format!(
                "sample {} has mismatched sizes",
                s.name()
            )));
        }
        model.check_input(s.gt.n_y, s.gt.n_x)?;
        if let crate::model::Head::Multiclass { classes } = model.head {
            if let Some(&l) = s.gt.class_mask.iter().find(|&&l| l as usize >= classes) {
                return Err(Error::LabelOutOfRange {
                    label: l as usize,
                    classes,
                });
            }
        }
    }
    Ok(())
}

/// Per-channel affine normalisation of both modalities. PCA images are
/// first divided by `sqrt(n_frames - 1)`, which removes their dependence on
/// sequence length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputNorm {
    pub pca_mean: Vec<f64>,
    pub pca_std: Vec<f64>,
    pub tsr_mean: Vec<f64>,
    pub tsr_std: Vec<f64>,
}

fn pca_scale(s: &AugmentedSample) -> f64 {
    1.0 / ((s.pca.n_frames.max(2) - 1) as f64).sqrt()
}

fn channel_stats<'a>(
    channels: usize,
    planes: impl Iterator<Item = (usize, &'a [f32], f64)> + Clone,
) -> (Vec<f64>, Vec<f64>) {
    let mut sum = vec![0.0; channels];
    let mut count = vec![0usize; channels];
    for (c, plane, scale) in planes.clone() {
        sum[c] += plane.iter().map(|&v| f64::from(v) * scale).sum::<f64>();
        count[c] += plane.len();
    }
    let mean: Vec<f64> = sum.iter().zip(&count).map(|(s, &n)| s / n as f64).collect();
    let mut sq = vec![0.0; channels];
    for (c, plane, scale) in planes {
        sq[c] += plane
            .iter()
            .map(|&v| (f64::from(v) * scale - mean[c]).powi(2))
            .sum::<f64>();
    }
    let std = sq
        .iter()
        .zip(&count)
        .map(|(s, &n)| {
            let sd = (s / n as f64).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, std)
}

impl InputNorm {
    pub fn identity(pca_channels: usize, tsr_channels: usize) -> Self {
        InputNorm {
            pca_mean: vec![0.0; pca_channels],
            pca_std: vec![1.0; pca_channels],
            tsr_mean: vec![0.0; tsr_channels],
            tsr_std: vec![1.0; tsr_channels],
        }
    }

    pub fn fit(samples: &[AugmentedSample]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidArgument("no samples to fit normalisation".into()))?;
        let (j, k) = (first.pca.components(), first.tsr.coefficients());
        let pca = samples
            .iter()
            .flat_map(|s| (0..j).map(move |c| (c, s.pca.channel(c), pca_scale(s))));
        let tsr = samples
            .iter()
            .flat_map(|s| (0..k).map(move |c| (c, s.tsr.channel(c), 1.0)));
        let (pca_mean, pca_std) = channel_stats(j, pca);
        let (tsr_mean, tsr_std) = channel_stats(k, tsr);
        Ok(InputNorm {
            pca_mean,
            pca_std,
            tsr_mean,
            tsr_std,
        })
    }

    /// Normalised `(pca, tsr)` channel-major planes of one sample, with the
    /// disabled modality zeroed.
    pub fn inputs(&self, s: &AugmentedSample, mode: ModalityMode) -> (Vec<f64>, Vec<f64>) {
        let scale = pca_scale(s);
        fn plane(ch: &[f32], scale: f64, mean: f64, std: f64) -> impl Iterator<Item = f64> + '_ {
            ch.iter().map(move |&v| (f64::from(v) * scale - mean) / std)
        }
        let pca = if mode == ModalityMode::TsrOnly {
            vec![0.0; s.pca.channels.len()]
        } else {
            (0..s.pca.components())
                .flat_map(|c| plane(s.pca.channel(c), scale, self.pca_mean[c], self.pca_std[c]))
                .collect()
        };
        let tsr = if mode == ModalityMode::PcaOnly {
            vec![0.0; s.tsr.channels.len()]
        } else {
            (0..s.tsr.coefficients())
                .flat_map(|c| plane(s.tsr.channel(c), 1.0, self.tsr_mean[c], self.tsr_std[c]))
                .collect()
        };
        (pca, tsr)
    }
}

/// Stacked network inputs and flattened targets for a batch.
pub fn assemble_batch(
    samples: &[&AugmentedSample],
    norm: &InputNorm,
    mode: ModalityMode,
) -> Result<(Tensor, Tensor, Targets)> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
    let (h, w) = (first.gt.n_y, first.gt.n_x);
    let (j, k) = (first.pca.components(), first.tsr.coefficients());
    let mut pca = Vec::with_capacity(samples.len() * j * h * w);
    let mut tsr = Vec::with_capacity(samples.len() * k * h * w);
    for s in samples {
        if (s.gt.n_y, s.gt.n_x) != (h, w) {
            return Err(Error::Shape("batch mixes image sizes".into()));
        }
        let (p, t) = norm.inputs(s, mode);
        pca.extend(p);
        tsr.extend(t);
    }
    let n = samples.len();
    let gts: Vec<_> = samples.iter().map(|s| &s.gt).collect();
    Ok((
        Tensor::from_vec(Shape::new(n, j, h, w), pca)?,
        Tensor::from_vec(Shape::new(n, k, h, w), tsr)?,
        Targets::from_ground_truth(&gts),
    ))
}

/// Counts for an index of `n` entries: the fixed default when one exists,
/// otherwise roughly 70/15/15 with at least one training entry.
pub fn proportional_counts(n: usize) -> (usize, usize, usize) {
    if let Some(c) = default_counts(n) {
        return c;
    }
    let val = (n as f64 * 0.15).round() as usize;
    let test = (n as f64 * 0.15).round() as usize;
    let (val, test) = if val + test >= n {
        (0, n.saturating_sub(1).min(test))
    } else {
        (val, test)
    };
    (n - val - test, val, test)
}

/// Writes sequences and ground truth as `<id>.ptseq` plus ground-truth
/// files, and an index assigning `counts` entries per split.
pub fn write_raw_dataset(
    dir: &Path,
    items: &[(ThermalSequence, GroundTruth)],
    counts: (usize, usize, usize),
    seed: u64,
) -> Result<DatasetIndex> {
    create_dir(dir)?;
    let mut index = DatasetIndex::default();
    for (seq, gt) in items {
        let id = seq.id().to_string();
        save_sequence(seq, dir.join(format!("{id}.ptseq")))?;
        save_ground_truth(gt, dir, &id)?;
        index.entries.push(DatasetEntry {
            id: id.clone(),
            sequence: format!("{id}.ptseq").into(),
            ground_truth: id.into(),
            split: None,
        });
    }
    let index = split_dataset(&index, counts, seed)?;
    index.save(dir)?;
    Ok(index)
}

/// Loads every indexed sequence with its ground truth and split.
pub fn load_raw_dataset(dir: &Path) -> Result<Vec<(Split, ThermalSequence, GroundTruth)>> {
    let index = DatasetIndex::load(dir)?;
    index
        .entries
        .iter()
        .map(|e| {
            let split = e.split.ok_or_else(|| {
                Error::InvalidArgument(format!("entry {} has no split assignment", e.id))
            })?;
            let mut seq = load_sequence(dir.join(&e.sequence))?;
            seq.set_id(e.id.clone());
            let gt = load_ground_truth(dir, &e.ground_truth.to_string_lossy())?;
            if (gt.n_y, gt.n_x) != (seq.n_y(), seq.n_x()) {
                return Err(Error::Shape(format!(
                    "ground truth of {} does not match its sequence",
                    e.id
                )));
            }
            Ok((split, seq, gt))
        })
        .collect()
}

/// Same output and order as [`augment_dataset`], computed `threads`
/// sequences at a time.
pub fn augment_parallel<'a>(
    items: &'a [(Split, ThermalSequence, GroundTruth)],
    config: &'a AugmentationConfig,
    threads: usize,
) -> impl Iterator<Item = Result<(Split, AugmentedSample)>> + 'a {
    items.chunks(threads.max(1)).flat_map(move |chunk| {
        parallel_map(chunk, threads, |item| {
            augment_dataset(std::slice::from_ref(item), config).collect::<Vec<_>>()
        })
        .into_iter()
        .flatten()
    })
}

/// Un-augmented compression of every sequence, keeping its split.
pub fn preprocess_parallel<'a>(
    items: &'a [(Split, ThermalSequence, GroundTruth)],
    config: &'a AugmentationConfig,
    threads: usize,
) -> impl Iterator<Item = Result<(Split, AugmentedSample)>> + 'a {
    items.chunks(threads.max(1)).flat_map(move |chunk| {
        parallel_map(chunk, threads, |(split, seq, gt)| {
            unaugmented(seq, gt, config).map(|s| (*split, s))
        })
    })
}
