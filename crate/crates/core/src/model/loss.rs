use super::Predictions;
use crate::engine::{Tape, Var};
use crate::error::{Error, Result};
use crate::sequence::GroundTruth;

/// Flattened per-pixel targets of a batch, batch-major then row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Targets {
    pub labels: Vec<u8>,
    pub binary: Vec<f64>,
    pub depth: Vec<f64>,
}

impl Targets {
    pub fn from_ground_truth(gts: &[&GroundTruth]) -> Self {
        let mut t = Targets {
            labels: Vec::new(),
            binary: Vec::new(),
            depth: Vec::new(),
        };
        for gt in gts {
            t.labels.extend_from_slice(&gt.class_mask);
            t.binary
                .extend(gt.class_mask.iter().map(|&c| if c > 0 { 1.0 } else { 0.0 }));
            t.depth.extend(gt.depth_map.iter().map(|&d| f64::from(d)));
        }
        t
    }
}

/// Pixel-averaged softmax cross-entropy of the class logits.
pub fn loss_multiclass(tape: &mut Tape, preds: &Predictions, targets: &Targets) -> Result<Var> {
    match *preds {
        Predictions::Multiclass { logits } => tape.softmax_ce(logits, &targets.labels),
        Predictions::BinaryDepth { .. } => Err(Error::InvalidArgument(
            "multiclass loss needs a multiclass head".into(),
        )),
    }
}

/// Pixel-averaged BCE on the defect logit plus `lambda` times the
/// pixel-averaged L1 depth error.
pub fn loss_binary_depth(
    tape: &mut Tape,
    preds: &Predictions,
    targets: &Targets,
    lambda: f64,
) -> Result<Var> {
    match *preds {
        Predictions::BinaryDepth { logits, depth } => {
            let bce = tape.bce_logits(logits, &targets.binary)?;
            let l1 = tape.l1(depth, &targets.depth)?;
            let weighted = tape.affine(l1, lambda, 0.0);
            tape.add(bce, weighted)
        }
        Predictions::Multiclass { .. } => Err(Error::InvalidArgument(
            "binary/depth loss needs a binary_depth head".into(),
        )),
    }
}
