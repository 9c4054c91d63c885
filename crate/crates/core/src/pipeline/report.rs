//! Metrics reports and run artifacts: `metrics.json`, `curves.csv`,
//! predicted masks (PGM) and depth maps (PFM), and CSV tables.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ModalityMode, RunConfig};
use super::metrics::{DepthMetrics, MulticlassMetrics};
use super::train::{EpochLosses, Evaluation, SamplePrediction};
use crate::dataset::Split;
use crate::error::{Error, Result};
use crate::io::{create_dir, encode_pfm, encode_pgm, read_json, write, write_json};
use crate::model::{FusionMode, Head};

pub const METRICS_FILE: &str = "metrics.json";
pub const CURVES_FILE: &str = "curves.csv";
pub const ABLATION_FILE: &str = "ablation.csv";
pub const PREDICTIONS_DIR: &str = "predictions";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    Multiclass,
    BinaryDepth,
}

impl HeadKind {
    pub fn of(head: &Head) -> Self {
        match head {
            Head::Multiclass { .. } => HeadKind::Multiclass,
            Head::BinaryDepth { .. } => HeadKind::BinaryDepth,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HeadKind::Multiclass => "multiclass",
            HeadKind::BinaryDepth => "binary_depth",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "multiclass" => Ok(HeadKind::Multiclass),
            "binary_depth" => Ok(HeadKind::BinaryDepth),
            other => Err(Error::InvalidArgument(format!("unknown head {other:?}"))),
        }
    }
}

/// Evaluation of one model on one split. Multiclass runs fill `miou`,
/// `recall` and `precision`; binary/depth runs fill `iou` and `mae_mm`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub variant: String,
    pub split: Split,
    pub head: HeadKind,
    pub modality: ModalityMode,
    pub fusion: FusionMode,
    pub samples: usize,
    pub per_class_iou: Vec<f64>,
    /// Classes missing from both prediction and ground truth (scored 1).
    pub absent_classes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub miou: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_class_recall: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_class_precision: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iou: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mae_mm: Option<f64>,
    pub curves: Vec<EpochLosses>,
    pub best_epoch: Option<usize>,
    pub seed: u64,
    pub config_digest: String,
    /// Effective run settings without filesystem paths.
    pub config: RunConfig,
}

impl MetricsReport {
    /// An empty report for `config` on `split`.
    pub fn new(config: &RunConfig, split: Split, samples: usize) -> Self {
        MetricsReport {
            variant: config.variant(),
            split,
            head: HeadKind::of(&config.model.head),
            modality: config.modality,
            fusion: config.model.fusion,
            samples,
            per_class_iou: Vec::new(),
            absent_classes: Vec::new(),
            miou: None,
            recall: None,
            precision: None,
            per_class_recall: None,
            per_class_precision: None,
            iou: None,
            mae_mm: None,
            curves: Vec::new(),
            best_epoch: None,
            seed: config.seed,
            config_digest: config.digest(),
            config: config.settings(),
        }
    }

    pub fn set_multiclass(&mut self, m: MulticlassMetrics) {
        self.miou = Some(m.miou);
        self.recall = Some(m.recall);
        self.precision = Some(m.precision);
        self.per_class_iou = m.per_class_iou;
        self.per_class_recall = Some(m.per_class_recall);
        self.per_class_precision = Some(m.per_class_precision);
        self.absent_classes = m.absent_classes;
    }

    pub fn set_binary_depth(&mut self, m: DepthMetrics) {
        self.iou = Some(m.iou);
        self.mae_mm = Some(m.mae_mm);
        self.per_class_iou = m.per_class_iou;
        self.absent_classes = m.absent_classes;
    }

    /// Checks value ranges and that the fields match the head.
    pub fn validate(&self) -> Result<()> {
        let rate = |v: f64| (0.0..=1.0).contains(&v);
        let bad = |what: &str| Err(Error::Invariant(format!("report field {what} out of range")));
        let classes = match self.config.model.head {
            Head::Multiclass { classes } => classes,
            Head::BinaryDepth { .. } => 2,
        };
        if self.per_class_iou.len() != classes || !self.per_class_iou.iter().all(|&v| rate(v)) {
            return bad("per_class_iou");
        }
        match self.head {
            HeadKind::Multiclass => {
                for (name, v) in [
                    ("miou", self.miou),
                    ("recall", self.recall),
                    ("precision", self.precision),
                ] {
                    if !v.is_some_and(rate) {
                        return bad(name);
                    }
                }
                let max = self.per_class_iou.iter().copied().fold(0.0, f64::max);
                if self.miou.is_some_and(|m| m > max + 1e-12) {
                    return bad("miou");
                }
            }
            HeadKind::BinaryDepth => {
                if !self.iou.is_some_and(rate) {
                    return bad("iou");
                }
                if !self.mae_mm.is_some_and(|m| m.is_finite() && m >= 0.0) {
                    return bad("mae_mm");
                }
            }
        }
        Ok(())
    }

    /// Headline metric: mIoU for multiclass, defect IoU for binary/depth.
    pub fn headline_iou(&self) -> f64 {
        self.miou.or(self.iou).unwrap_or(0.0)
    }
}

/// Serialized `metrics.json` payload.
pub fn metrics_json(report: &MetricsReport) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(report)?;
    out.push(b'\n');
    Ok(out)
}

pub fn curves_csv(curves: &[EpochLosses]) -> String {
    let mut s = String::from("epoch,train_loss,val_loss\n");
    for c in curves {
        let val = c.val_loss.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{}", c.epoch, c.train_loss, val);
    }
    s
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// One row per report: inputs, fusion and the metrics of both head kinds
/// (blank where not applicable).
pub fn ablation_csv(reports: &[MetricsReport]) -> String {
    let mut s = String::from(
        "variant,modality,fusion,head,split,samples,miou,recall,precision,iou,mae_mm\n",
    );
    for r in reports {
        let fusion = match r.fusion {
            FusionMode::EafgAedb => "eafg_aedb",
            FusionMode::ConcatBaseline => "concat_baseline",
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.variant,
            r.modality.name(),
            fusion,
            r.head.name(),
            r.split.name(),
            r.samples,
            opt(r.miou),
            opt(r.recall),
            opt(r.precision),
            opt(r.iou),
            opt(r.mae_mm)
        );
    }
    s
}

/// `(lambda, IoU, MAE)` rows of a loss-weight sweep.
pub fn lambda_csv(rows: &[(f64, MetricsReport)]) -> String {
    let mut s = String::from("lambda,iou,mae_mm\n");
    for (lambda, r) in rows {
        let _ = writeln!(s, "{},{},{}", lambda, opt(r.iou), opt(r.mae_mm));
    }
    s
}

fn save_prediction(dir: &Path, p: &SamplePrediction) -> Result<()> {
    write(
        &dir.join(format!("{}_mask.pgm", p.name)),
        &encode_pgm(p.n_x, p.n_y, &p.labels)?,
    )?;
    if let Some(depth) = &p.depth_mm {
        let d: Vec<f32> = depth.iter().map(|&v| v as f32).collect();
        write(
            &dir.join(format!("{}_depth.pfm", p.name)),
            &encode_pfm(p.n_x, p.n_y, &d)?,
        )?;
    }
    Ok(())
}

/// Writes `metrics.json`, `curves.csv` and per-sample predictions into
/// `outdir`.
pub fn write_evaluation(outdir: &Path, eval: &Evaluation) -> Result<()> {
    create_dir(outdir)?;
    write(&outdir.join(METRICS_FILE), &metrics_json(&eval.report)?)?;
    write(
        &outdir.join(CURVES_FILE),
        curves_csv(&eval.report.curves).as_bytes(),
    )?;
    let pred_dir = outdir.join(PREDICTIONS_DIR);
    create_dir(&pred_dir)?;
    for p in &eval.predictions {
        save_prediction(&pred_dir, p)?;
    }
    Ok(())
}

pub fn load_report(path: &Path) -> Result<MetricsReport> {
    read_json(path)
}

/// Every `metrics.json` directly inside `dir` or one level below, sorted
/// by path.
pub fn find_reports(dir: &Path) -> Result<Vec<(PathBuf, MetricsReport)>> {
    let mut paths = Vec::new();
    let top = dir.join(METRICS_FILE);
    if top.is_file() {
        paths.push(top);
    }
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let candidate = entry.path().join(METRICS_FILE);
        if candidate.is_file() {
            paths.push(candidate);
        }
    }
    paths.sort();
    paths
        .into_iter()
        .map(|p| Ok((p.clone(), load_report(&p)?)))
        .collect()
}

/// Writes the ablation table and a combined `reports.json`.
pub fn write_summary(reports: &[MetricsReport], outdir: &Path) -> Result<()> {
    create_dir(outdir)?;
    write(&outdir.join(ABLATION_FILE), ablation_csv(reports).as_bytes())?;
    write_json(&outdir.join("reports.json"), &reports)
}
