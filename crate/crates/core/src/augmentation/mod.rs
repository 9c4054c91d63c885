//! Spatiotemporal augmentation: segment-wise frame resampling with additive
//! noise (applied before compression), and paired affine transforms of the
//! compressed tensors (applied per training step).

mod spatial;
mod store;
mod temporal;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use spatial::{spatial_transform, SpatialParams};
pub use store::{load_augmented_split, write_augmented_dataset, AugmentManifest, ManifestEntry};
pub use temporal::{
    add_gaussian_noise, sample_segment_indices, segment_bounds, segment_sample, select_frames,
};

use crate::compression::{compress, PcaTensor, TsrTensor, DEFAULT_PCA_COMPONENTS, DEFAULT_TSR_DEGREE};
use crate::dataset::Split;
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::sequence::{GroundTruth, ThermalSequence};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpatialRanges {
    pub rotation_deg: f64,
    pub translate_frac: f64,
    pub shear_deg: f64,
    pub flip_h_prob: f64,
    pub flip_v_prob: f64,
}

impl Default for SpatialRanges {
    fn default() -> Self {
        SpatialRanges {
            rotation_deg: 15.0,
            translate_frac: 0.10,
            shear_deg: 10.0,
            flip_h_prob: 0.5,
            flip_v_prob: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationConfig {
    pub n_segments: usize,
    /// Replicas generated per training/validation sequence.
    pub factor: usize,
    pub noise_variance: f64,
    pub spatial: SpatialRanges,
    pub pca_components: usize,
    pub tsr_degree: usize,
    pub seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            n_segments: 100,
            factor: 500,
            noise_variance: 0.005,
            spatial: SpatialRanges::default(),
            pca_components: DEFAULT_PCA_COMPONENTS,
            tsr_degree: DEFAULT_TSR_DEGREE,
            seed: 0,
        }
    }
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_segments == 0 || self.factor == 0 {
            return Err(Error::InvalidArgument(
                "n_segments and factor must be at least 1".into(),
            ));
        }
        if !(self.noise_variance.is_finite() && self.noise_variance >= 0.0) {
            return Err(Error::InvalidArgument("noise variance must be >= 0".into()));
        }
        let s = &self.spatial;
        if [s.rotation_deg, s.translate_frac, s.shear_deg]
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
            || ![s.flip_h_prob, s.flip_v_prob]
                .iter()
                .all(|p| (0.0..=1.0).contains(p))
        {
            return Err(Error::InvalidArgument("invalid spatial ranges".into()));
        }
        Ok(())
    }
}

/// Everything needed to regenerate an augmented sample from its source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_id: String,
    pub replica: usize,
    /// Source frames kept, in order.
    pub frame_indices: Vec<usize>,
    /// Seed of the noise stream; `None` for un-augmented samples.
    pub noise_seed: Option<u64>,
    pub noise_variance: f64,
    #[serde(default)]
    pub spatial: Option<SpatialParams>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedSample {
    pub pca: PcaTensor,
    pub tsr: TsrTensor,
    pub gt: GroundTruth,
    pub provenance: Provenance,
}

impl AugmentedSample {
    /// Name used for files of this sample.
    pub fn name(&self) -> String {
        format!("{}_r{:04}", self.provenance.source_id, self.provenance.replica)
    }
}

/// Draws the temporal part of replica `replica` of `seq`.
pub fn draw_provenance(
    seq: &ThermalSequence,
    replica: usize,
    config: &AugmentationConfig,
) -> Result<Provenance> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
        config.seed,
        &["replica", seq.id(), &replica.to_string()],
    ));
    let frame_indices = sample_segment_indices(seq.n_t(), config.n_segments, &mut rng)?;
    let noise_seed: u64 = rng.random();
    Ok(Provenance {
        source_id: seq.id().to_string(),
        replica,
        frame_indices,
        noise_seed: Some(noise_seed),
        noise_variance: config.noise_variance,
        spatial: None,
    })
}

/// Rebuilds a sample from its provenance: frame selection, then noise, then
/// compression, then (if recorded) the spatial transform.
pub fn regenerate(
    seq: &ThermalSequence,
    gt: &GroundTruth,
    provenance: &Provenance,
    config: &AugmentationConfig,
) -> Result<AugmentedSample> {
    if provenance.source_id != seq.id() {
        return Err(Error::InvalidArgument(format!(
            "provenance for {} applied to {}",
            provenance.source_id,
            seq.id()
        )));
    }
    let sampled = select_frames(seq, &provenance.frame_indices)?;
    let noisy = match provenance.noise_seed {
        Some(s) => add_gaussian_noise(
            &sampled,
            provenance.noise_variance,
            &mut ChaCha8Rng::seed_from_u64(s),
        )?,
        None => sampled,
    };
    let m = compress(&noisy, config.pca_components, config.tsr_degree)?;
    let sample = AugmentedSample {
        pca: m.pca,
        tsr: m.tsr,
        gt: gt.clone(),
        provenance: Provenance {
            spatial: None,
            ..provenance.clone()
        },
    };
    match provenance.spatial {
        Some(p) => spatial_transform(&sample, &p, &config.spatial, false),
        None => Ok(sample),
    }
}

/// Direct compression of the full source sequence.
pub fn unaugmented(
    seq: &ThermalSequence,
    gt: &GroundTruth,
    config: &AugmentationConfig,
) -> Result<AugmentedSample> {
    let provenance = Provenance {
        source_id: seq.id().to_string(),
        replica: 0,
        frame_indices: (0..seq.n_t()).collect(),
        noise_seed: None,
        noise_variance: 0.0,
        spatial: None,
    };
    regenerate(seq, gt, &provenance, config)
}

/// `config.factor` temporally augmented replicas of one sequence.
pub fn augment_sequence<'a>(
    seq: &'a ThermalSequence,
    gt: &'a GroundTruth,
    config: &'a AugmentationConfig,
) -> impl Iterator<Item = Result<AugmentedSample>> + 'a {
    (0..config.factor).map(move |r| {
        let prov = draw_provenance(seq, r, config)?;
        regenerate(seq, gt, &prov, config)
    })
}

/// Augments train/val entries `factor` times each and passes test entries
/// through un-augmented. Order follows `items`, replicas ascending.
pub fn augment_dataset<'a>(
    items: &'a [(Split, ThermalSequence, GroundTruth)],
    config: &'a AugmentationConfig,
) -> impl Iterator<Item = Result<(Split, AugmentedSample)>> + 'a {
    items.iter().flat_map(move |(split, seq, gt)| {
        let split = *split;
        let it: Box<dyn Iterator<Item = Result<AugmentedSample>> + 'a> = match split {
            Split::Test => Box::new(std::iter::once_with(move || unaugmented(seq, gt, config))),
            Split::Train | Split::Val => Box::new(augment_sequence(seq, gt, config)),
        };
        it.map(move |r| r.map(|s| (split, s)))
    })
}
