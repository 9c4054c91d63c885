//! Dataset index and train/validation/test assignment.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_json, write_json};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub id: String,
    /// PTSEQ1 file, relative to the index file.
    pub sequence: PathBuf,
    /// Ground-truth stem: `<stem>_mask.pgm`, `<stem>_depth.pfm`,
    /// `<stem>_classes.json`.
    pub ground_truth: PathBuf,
    #[serde(default)]
    pub split: Option<Split>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub entries: Vec<DatasetEntry>,
}

/// Counts used when an index of 38 sequences is split without explicit
/// counts.
pub const DEFAULT_SPLIT_38: (usize, usize, usize) = (26, 6, 6);

pub const INDEX_FILE: &str = "index.json";

impl DatasetIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &DatasetEntry> {
        self.entries.iter().filter(move |e| e.split == Some(split))
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        (
            self.in_split(Split::Train).count(),
            self.in_split(Split::Val).count(),
            self.in_split(Split::Test).count(),
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        read_json(&dir.join(INDEX_FILE))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(INDEX_FILE), self)
    }
}

/// Default counts for an index of `n` entries, if one is defined.
pub fn default_counts(n: usize) -> Option<(usize, usize, usize)> {
    (n == 38).then_some(DEFAULT_SPLIT_38)
}

/// Seeded random assignment of exactly `counts` entries to each split.
pub fn split_dataset(
    index: &DatasetIndex,
    counts: (usize, usize, usize),
    seed: u64,
) -> Result<DatasetIndex> {
    let (train, val, test) = counts;
    if train + val + test != index.len() {
        return Err(Error::InvalidArgument(format!(
            "split counts {train}+{val}+{test} do not sum to {} entries",
            index.len()
        )));
    }
    let mut order: Vec<usize> = (0..index.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = index.clone();
    for (rank, &i) in order.iter().enumerate() {
        out.entries[i].split = Some(if rank < train {
            Split::Train
        } else if rank < train + val {
            Split::Val
        } else {
            Split::Test
        });
    }
    Ok(out)
}
