//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thermofuse_core::augmentation::{AugmentedSample, Provenance};
use thermofuse_core::compression::{PcaTensor, TsrTensor, LOG_EPSILON};
use thermofuse_core::dataset::Split;
use thermofuse_core::pipeline::Dataset;
use thermofuse_core::rng::stream;
use thermofuse_core::GroundTruth;

pub const SEPARATED_DEPTHS_MM: [f64; 4] = [0.5, 1.0, 1.5, 2.0];

/// Layout of a modality-separated dataset.
#[derive(Clone, Copy, Debug)]
pub struct SeparatedSpec {
    pub size: usize,
    pub counts: (usize, usize, usize),
    /// Std of the noise on the informative channel of each modality.
    pub signal_noise: f64,
    pub seed: u64,
}

impl Default for SeparatedSpec {
    fn default() -> Self {
        SeparatedSpec {
            size: 32,
            counts: (160, 32, 32),
            signal_noise: 0.25,
            seed: 7,
        }
    }
}

/// One image with 1 to 3 non-overlapping disks sharing a single depth
/// class. PCA channel 0 marks the disks, TSR channel 0 carries the image's
/// depth as a spatially uniform level; every other channel is seeded noise.
/// Location is therefore visible only to the PCA branch and depth only to
/// the TSR branch.
pub fn separated_sample(spec: &SeparatedSpec, index: usize) -> AugmentedSample {
    let n = spec.size;
    let mut rng = stream(spec.seed, &["separated", &index.to_string()]);
    let class = rng.random_range(0..SEPARATED_DEPTHS_MM.len());
    let depth = SEPARATED_DEPTHS_MM[class];
    let count = rng.random_range(1..=3);
    let mut disks: Vec<(f64, f64, f64)> = Vec::new();
    let mut attempts = 0;
    while disks.len() < count && attempts < 200 {
        attempts += 1;
        let r = rng.random_range(0.1..0.18) * n as f64;
        let lo = r + 1.0;
        let cy = rng.random_range(lo..n as f64 - 1.0 - lo);
        let cx = rng.random_range(lo..n as f64 - 1.0 - lo);
        if disks
            .iter()
            .all(|&(y, x, s)| ((y - cy).powi(2) + (x - cx).powi(2)).sqrt() > r + s + 1.0)
        {
            disks.push((cy, cx, r));
        }
    }
    let inside = |y: usize, x: usize| {
        disks.iter().any(|&(cy, cx, r)| {
            (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2) <= r * r
        })
    };
    let mut mask = vec![0u8; n * n];
    let mut depth_map = vec![0f32; n * n];
    for y in 0..n {
        for x in 0..n {
            if inside(y, x) {
                mask[y * n + x] = class as u8 + 1;
                depth_map[y * n + x] = depth as f32;
            }
        }
    }
    let mut noise = |sd: f64| -> f32 {
        let z: f64 = StandardNormal.sample(&mut rng);
        (sd * z) as f32
    };
    let channels = 3;
    let mut pca = Vec::with_capacity(channels * n * n);
    pca.extend(mask.iter().map(|&m| f32::from(u8::from(m > 0)) + noise(spec.signal_noise)));
    for _ in 1..channels {
        pca.extend((0..n * n).map(|_| noise(1.0)));
    }
    let level = ((depth - 1.25) / 0.5) as f32;
    let mut tsr = Vec::with_capacity(channels * n * n);
    tsr.extend((0..n * n).map(|_| level + noise(spec.signal_noise)));
    for _ in 1..channels {
        tsr.extend((0..n * n).map(|_| noise(1.0)));
    }
    let mut class_depths = vec![0.0];
    class_depths.extend(SEPARATED_DEPTHS_MM);
    AugmentedSample {
        pca: PcaTensor {
            n_y: n,
            n_x: n,
            channels: pca,
            singular_values: vec![1.0; channels],
            n_frames: 2,
        },
        tsr: TsrTensor {
            n_y: n,
            n_x: n,
            degree: channels - 1,
            channels: tsr,
            reference_time_s: 1.0,
            epsilon: LOG_EPSILON,
        },
        gt: GroundTruth {
            n_y: n,
            n_x: n,
            class_mask: mask,
            depth_map,
            class_depths,
        },
        provenance: Provenance {
            source_id: format!("sep_{index:04}"),
            replica: 0,
            frame_indices: Vec::new(),
            noise_seed: None,
            noise_variance: 0.0,
            spatial: None,
        },
    }
}

pub fn separated_dataset(spec: &SeparatedSpec) -> Dataset {
    let (tr, va, te) = spec.counts;
    Dataset::from_samples((0..tr + va + te).map(|i| {
        let split = if i < tr {
            Split::Train
        } else if i < tr + va {
            Split::Val
        } else {
            Split::Test
        };
        (split, separated_sample(spec, i))
    }))
}

/// MAE of the best location-aware, depth-blind predictor: exact zeros on
/// sound pixels and the median class depth on defect pixels, for classes
/// drawn uniformly. Scaled by the defect pixel fraction of `samples`.
pub fn depth_blind_floor_mm(samples: &[AugmentedSample]) -> f64 {
    let mut d = SEPARATED_DEPTHS_MM.to_vec();
    d.sort_by(f64::total_cmp);
    let median = 0.5 * (d[d.len() / 2 - 1] + d[d.len() / 2]);
    let spread = d.iter().map(|v| (v - median).abs()).sum::<f64>() / d.len() as f64;
    let (defect, total) = samples.iter().fold((0usize, 0usize), |(a, b), s| {
        (
            a + s.gt.class_mask.iter().filter(|&&c| c > 0).count(),
            b + s.gt.class_mask.len(),
        )
    });
    spread * defect as f64 / total as f64
}
