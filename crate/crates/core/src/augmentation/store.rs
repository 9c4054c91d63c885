//! Directory layout of an augmented dataset:
//!
//! ```text
//! out/manifest.json
//! out/{train,val,test}/<name>_pca.ptmod
//! out/{train,val,test}/<name>_tsr.ptmod
//! out/{train,val,test}/<name>_mask.pgm, _depth.pfm, _classes.json
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AugmentationConfig, AugmentedSample, Provenance};
use crate::dataset::Split;
use crate::error::Result;
use crate::io::{
    create_dir, load_ground_truth, load_modality, read_json, save_ground_truth, save_modality,
    write_json, ModalityFile,
};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub split: Split,
    pub name: String,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentManifest {
    pub config: AugmentationConfig,
    pub entries: Vec<ManifestEntry>,
}

pub fn write_augmented_dataset<I>(
    samples: I,
    config: &AugmentationConfig,
    out: &Path,
) -> Result<AugmentManifest>
where
    I: IntoIterator<Item = Result<(Split, AugmentedSample)>>,
{
    for split in [Split::Train, Split::Val, Split::Test] {
        create_dir(&out.join(split.name()))?;
    }
    let mut entries = Vec::new();
    for item in samples {
        let (split, sample) = item?;
        let dir = out.join(split.name());
        let name = sample.name();
        save_modality(
            &ModalityFile::Pca {
                id: name.clone(),
                tensor: sample.pca.clone(),
            },
            dir.join(format!("{name}_pca.ptmod")),
        )?;
        save_modality(
            &ModalityFile::Tsr {
                id: name.clone(),
                tensor: sample.tsr.clone(),
            },
            dir.join(format!("{name}_tsr.ptmod")),
        )?;
        save_ground_truth(&sample.gt, &dir, &name)?;
        entries.push(ManifestEntry {
            split,
            name,
            provenance: sample.provenance,
        });
    }
    let manifest = AugmentManifest {
        config: config.clone(),
        entries,
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn load_augmented_split(dir: &Path, split: Split) -> Result<Vec<AugmentedSample>> {
    let manifest: AugmentManifest = read_json(&dir.join(MANIFEST_FILE))?;
    let sub = dir.join(split.name());
    manifest
        .entries
        .into_iter()
        .filter(|e| e.split == split)
        .map(|e| {
            Ok(AugmentedSample {
                pca: load_modality(sub.join(format!("{}_pca.ptmod", e.name)))?.into_pca()?,
                tsr: load_modality(sub.join(format!("{}_tsr.ptmod", e.name)))?.into_tsr()?,
                gt: load_ground_truth(&sub, &e.name)?,
                provenance: e.provenance,
            })
        })
        .collect()
}
