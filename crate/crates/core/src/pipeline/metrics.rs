//! Segmentation and depth metrics, pooled over every pixel of a split.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-class pixel counts accumulated across samples.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: Vec<u64>,
    pub fp: Vec<u64>,
    pub fn_: Vec<u64>,
}

impl ClassCounts {
    pub fn new(classes: usize) -> Self {
        ClassCounts {
            tp: vec![0; classes],
            fp: vec![0; classes],
            fn_: vec![0; classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.tp.len()
    }

    pub fn add(&mut self, pred: &[u8], gt: &[u8]) -> Result<()> {
        if pred.len() != gt.len() {
            return Err(Error::Shape(format!(
                "{} predicted labels vs {} ground-truth labels",
                pred.len(),
                gt.len()
            )));
        }
        let c = self.classes();
        for (&p, &g) in pred.iter().zip(gt) {
            for &l in &[p, g] {
                if l as usize >= c {
                    return Err(Error::LabelOutOfRange {
                        label: l as usize,
                        classes: c,
                    });
                }
            }
            if p == g {
                self.tp[p as usize] += 1;
            } else {
                self.fp[p as usize] += 1;
                self.fn_[g as usize] += 1;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ClassCounts) {
        for c in 0..self.classes() {
            self.tp[c] += other.tp[c];
            self.fp[c] += other.fp[c];
            self.fn_[c] += other.fn_[c];
        }
    }

    /// Classes missing from both prediction and ground truth.
    pub fn absent(&self) -> Vec<usize> {
        (0..self.classes())
            .filter(|&c| self.tp[c] + self.fp[c] + self.fn_[c] == 0)
            .collect()
    }

    fn ratio(&self, c: usize, num: u64, den: u64) -> f64 {
        if den > 0 {
            num as f64 / den as f64
        } else if self.tp[c] + self.fp[c] + self.fn_[c] == 0 {
            1.0
        } else {
            0.0
        }
    }

    pub fn iou(&self, c: usize) -> f64 {
        self.ratio(c, self.tp[c], self.tp[c] + self.fp[c] + self.fn_[c])
    }

    pub fn recall(&self, c: usize) -> f64 {
        self.ratio(c, self.tp[c], self.tp[c] + self.fn_[c])
    }

    pub fn precision(&self, c: usize) -> f64 {
        self.ratio(c, self.tp[c], self.tp[c] + self.fp[c])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MulticlassMetrics {
    pub miou: f64,
    pub recall: f64,
    pub precision: f64,
    pub per_class_iou: Vec<f64>,
    pub per_class_recall: Vec<f64>,
    pub per_class_precision: Vec<f64>,
    pub absent_classes: Vec<usize>,
}

impl MulticlassMetrics {
    /// Macro averages over classes; a class absent from both prediction and
    /// ground truth scores 1.
    pub fn from_counts(counts: &ClassCounts) -> Self {
        let c = counts.classes();
        let per = |f: &dyn Fn(usize) -> f64| (0..c).map(f).collect::<Vec<_>>();
        let per_class_iou = per(&|k| counts.iou(k));
        let per_class_recall = per(&|k| counts.recall(k));
        let per_class_precision = per(&|k| counts.precision(k));
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        MulticlassMetrics {
            miou: mean(&per_class_iou),
            recall: mean(&per_class_recall),
            precision: mean(&per_class_precision),
            per_class_iou,
            per_class_recall,
            per_class_precision,
            absent_classes: counts.absent(),
        }
    }
}

pub fn metrics_multiclass(pred: &[u8], gt: &[u8], classes: usize) -> Result<MulticlassMetrics> {
    let mut counts = ClassCounts::new(classes);
    counts.add(pred, gt)?;
    Ok(MulticlassMetrics::from_counts(&counts))
}

/// Pooled binary-mask and depth statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthCounts {
    pub mask: ClassCounts,
    pub abs_error_sum_mm: f64,
    pub pixels: u64,
}

impl Default for DepthCounts {
    fn default() -> Self {
        DepthCounts {
            mask: ClassCounts::new(2),
            abs_error_sum_mm: 0.0,
            pixels: 0,
        }
    }
}

impl DepthCounts {
    pub fn add(
        &mut self,
        pred_mask: &[u8],
        pred_depth: &[f64],
        gt_mask: &[u8],
        gt_depth: &[f64],
    ) -> Result<()> {
        let n = gt_mask.len();
        if pred_mask.len() != n || pred_depth.len() != n || gt_depth.len() != n {
            return Err(Error::Shape(format!(
                "binary/depth inputs of lengths {}, {}, {}, {}",
                pred_mask.len(),
                pred_depth.len(),
                n,
                gt_depth.len()
            )));
        }
        let binary = |m: &[u8]| m.iter().map(|&v| u8::from(v > 0)).collect::<Vec<_>>();
        self.mask.add(&binary(pred_mask), &binary(gt_mask))?;
        self.abs_error_sum_mm += pred_depth
            .iter()
            .zip(gt_depth)
            .map(|(p, g)| (p - g).abs())
            .sum::<f64>();
        self.pixels += n as u64;
        Ok(())
    }

    pub fn merge(&mut self, other: &DepthCounts) {
        self.mask.merge(&other.mask);
        self.abs_error_sum_mm += other.abs_error_sum_mm;
        self.pixels += other.pixels;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthMetrics {
    /// IoU of the defect class.
    pub iou: f64,
    pub mae_mm: f64,
    /// IoU of background and defect.
    pub per_class_iou: Vec<f64>,
    pub absent_classes: Vec<usize>,
}

impl DepthMetrics {
    pub fn from_counts(counts: &DepthCounts) -> Self {
        DepthMetrics {
            iou: counts.mask.iou(1),
            mae_mm: if counts.pixels == 0 {
                0.0
            } else {
                counts.abs_error_sum_mm / counts.pixels as f64
            },
            per_class_iou: vec![counts.mask.iou(0), counts.mask.iou(1)],
            absent_classes: counts.mask.absent(),
        }
    }
}

/// Defect IoU (any nonzero label counts as defect) and MAE over all pixels.
pub fn metrics_binary_depth(
    pred_mask: &[u8],
    pred_depth: &[f64],
    gt_mask: &[u8],
    gt_depth: &[f64],
) -> Result<DepthMetrics> {
    let mut counts = DepthCounts::default();
    counts.add(pred_mask, pred_depth, gt_mask, gt_depth)?;
    Ok(DepthMetrics::from_counts(&counts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(pred: &[u8], gt: &[u8], classes: usize) -> (f64, f64, f64) {
        let (mut miou, mut rec, mut prec) = (0.0, 0.0, 0.0);
        for c in 0..classes as u8 {
            let p: Vec<bool> = pred.iter().map(|&v| v == c).collect();
            let g: Vec<bool> = gt.iter().map(|&v| v == c).collect();
            let inter = p.iter().zip(&g).filter(|(a, b)| **a && **b).count();
            let union = p.iter().zip(&g).filter(|(a, b)| **a || **b).count();
            let np = p.iter().filter(|&&a| a).count();
            let ng = g.iter().filter(|&&a| a).count();
            let frac = |n: usize, d: usize| {
                if d > 0 {
                    n as f64 / d as f64
                } else if union == 0 {
                    1.0
                } else {
                    0.0
                }
            };
            miou += frac(inter, union);
            rec += frac(inter, ng);
            prec += frac(inter, np);
        }
        let c = classes as f64;
        (miou / c, rec / c, prec / c)
    }

    #[test]
    fn multiclass_matches_counting_oracle() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let pred: Vec<u8> = (0..256).map(|_| r.random_range(0..4)).collect();
            let gt: Vec<u8> = (0..256).map(|_| r.random_range(0..4)).collect();
            let m = metrics_multiclass(&pred, &gt, 4).unwrap();
            assert_eq!((m.miou, m.recall, m.precision), brute(&pred, &gt, 4));
        }
    }

    #[test]
    fn multiclass_edge_cases() {
        let gt = [0u8, 1, 2, 2, 0, 1];
        let m = metrics_multiclass(&gt, &gt, 4).unwrap();
        assert_eq!((m.miou, m.recall, m.precision), (1.0, 1.0, 1.0));
        assert_eq!(m.absent_classes, vec![3]);
        let pred = [1u8, 0, 0, 1];
        let gt = [0u8, 1, 1, 0];
        let m = metrics_multiclass(&pred, &gt, 2).unwrap();
        assert_eq!(m.per_class_iou, vec![0.0, 0.0]);
        assert!(metrics_multiclass(&pred, &gt[..3], 2).is_err());
        assert!(metrics_multiclass(&[2], &[0], 2).is_err());
    }

    #[test]
    fn binary_depth_oracle_and_edges() {
        let mut r = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let pm: Vec<u8> = (0..256).map(|_| r.random_range(0..2)).collect();
            let gm: Vec<u8> = (0..256).map(|_| r.random_range(0..5)).collect();
            let pd: Vec<f64> = (0..256).map(|_| r.random_range(0.0..2.5)).collect();
            let gd: Vec<f64> = (0..256).map(|_| r.random_range(0.0..2.5)).collect();
            let m = metrics_binary_depth(&pm, &pd, &gm, &gd).unwrap();
            let inter = (0..256).filter(|&i| pm[i] > 0 && gm[i] > 0).count();
            let union = (0..256).filter(|&i| pm[i] > 0 || gm[i] > 0).count();
            assert_eq!(m.iou, inter as f64 / union as f64);
            let mae = (0..256).map(|i| (pd[i] - gd[i]).abs()).sum::<f64>() / 256.0;
            assert!((m.mae_mm - mae).abs() <= 1e-12);
        }
        let gm = [0u8, 3, 3, 0];
        let gd = [0.0, 1.5, 1.5, 0.0];
        let m = metrics_binary_depth(&gm, &gd, &gm, &gd).unwrap();
        assert_eq!((m.iou, m.mae_mm), (1.0, 0.0));
        // A power-of-two offset keeps the sum exact.
        let shifted: Vec<f64> = gd.iter().map(|d| d + 0.125).collect();
        let m = metrics_binary_depth(&gm, &shifted, &gm, &gd).unwrap();
        assert_eq!(m.mae_mm, 0.125);
        let shifted: Vec<f64> = gd.iter().map(|d| d + 0.1).collect();
        let m = metrics_binary_depth(&gm, &shifted, &gm, &gd).unwrap();
        assert!((m.mae_mm - 0.1).abs() < 1e-15);
        let m = metrics_binary_depth(&[0, 1, 1, 0], &gd, &[1, 0, 0, 1], &gd).unwrap();
        assert_eq!(m.iou, 0.0);
    }

    #[test]
    fn pooling_equals_concatenation() {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<u8> = (0..64).map(|_| r.random_range(0..3)).collect();
        let b: Vec<u8> = (0..64).map(|_| r.random_range(0..3)).collect();
        let mut pooled = ClassCounts::new(3);
        pooled.add(&a[..32], &b[..32]).unwrap();
        let mut rest = ClassCounts::new(3);
        rest.add(&a[32..], &b[32..]).unwrap();
        pooled.merge(&rest);
        let mut whole = ClassCounts::new(3);
        whole.add(&a, &b).unwrap();
        assert_eq!(pooled, whole);
    }
}
