//! Dual-encoder fusion network.
//!
//! Two residual encoders (PCA and TSR inputs) share an architecture but not
//! weights. Their features are fused per level, either by a sigmoid gate
//! computed from the PCA features or, for the ablation baseline, by
//! concatenation and a 1×1 reduction. The decoder walks back up, gating the
//! upsampled decoder state with a single-channel attention map before a
//! residual block sets the level's channel count.

mod config;
mod loss;


use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{FusionMode, Head, ModelConfig};
pub use loss::{loss_binary_depth, loss_multiclass, Targets};

use crate::engine::{glorot_uniform, ParamId, ParamStore, Parameter, Shape, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

/// Weight and bias of one convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvIds {
    pub w: ParamId,
    pub b: ParamId,
}

/// `relu(conv → relu → conv (x) + shortcut(x))`; the shortcut is a 1×1
/// convolution when the channel count changes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ResidualBlock {
    pub conv1: ConvIds,
    pub conv2: ConvIds,
    pub shortcut: Option<ConvIds>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fuser {
    /// 1×1 gate kernel with as many outputs as inputs.
    Gate(ConvIds),
    /// 1×1 reduction of the concatenated features.
    Concat(ConvIds),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decoder {
    Attention {
        wd: ConvIds,
        wf: ConvIds,
        psi: ConvIds,
        block: ResidualBlock,
    },
    Concat {
        reduce: ConvIds,
        block: ResidualBlock,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadIds {
    Multiclass { classes: ConvIds },
    BinaryDepth { logit: ConvIds, depth: ConvIds },
}

/// Output handles of a forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Predictions {
    /// `C`-channel class logits.
    Multiclass { logits: Var },
    /// One-channel defect logit and depth in millimetres.
    BinaryDepth { logits: Var, depth: Var },
}

impl Predictions {
    pub fn logits(&self) -> Var {
        match *self {
            Predictions::Multiclass { logits } | Predictions::BinaryDepth { logits, .. } => logits,
        }
    }
}

/// Intermediate values of one attention decoding step.
#[derive(Clone, Copy, Debug)]
pub struct AedbTrace {
    pub upsampled: Var,
    pub psi: Var,
    pub gated: Var,
    pub out: Var,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PtFusion {
    pub config: ModelConfig,
    pub store: ParamStore,
    /// Per level: (PCA block, TSR block).
    pub encoders: Vec<(ResidualBlock, ResidualBlock)>,
    pub fusers: Vec<Fuser>,
    /// Decoder step producing level `m`, for `m = 0..M-1` (0-based).
    pub decoders: Vec<Decoder>,
    pub head: HeadIds,
}

struct Builder {
    store: ParamStore,
    rng: ChaCha8Rng,
}

impl Builder {
    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize) -> Result<ConvIds> {
        let w = glorot_uniform(
            format!("{name}.w"),
            Shape::new(cout, cin, k, k),
            cin * k * k,
            cout * k * k,
            &mut self.rng,
        )?;
        let w = self.store.push(w);
        let b = self.store.push(Parameter::new(
            format!("{name}.b"),
            Tensor::zeros(Shape::new(1, cout, 1, 1)),
        ));
        Ok(ConvIds { w, b })
    }

    fn block(&mut self, name: &str, cin: usize, cout: usize, k: usize) -> Result<ResidualBlock> {
        Ok(ResidualBlock {
            conv1: self.conv(&format!("{name}.conv1"), cin, cout, k)?,
            conv2: self.conv(&format!("{name}.conv2"), cout, cout, k)?,
            shortcut: if cin == cout {
                None
            } else {
                Some(self.conv(&format!("{name}.shortcut"), cin, cout, 1)?)
            },
        })
    }
}

fn attention_channels(filters: usize) -> usize {
    (filters / 2).max(1)
}

impl PtFusion {
    /// Builds the network with Glorot-uniform kernels and zero biases.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut b = Builder {
            store: ParamStore::new(),
            rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, &["model-init"])),
        };
        let k = config.kernel;
        let f = &config.filters;
        let mut encoders = Vec::new();
        for (branch, cin0) in [("pca", config.pca_channels), ("tsr", config.tsr_channels)] {
            for m in 0..f.len() {
                let cin = if m == 0 { cin0 } else { f[m - 1] };
                let blk = b.block(&format!("{branch}.l{}", m + 1), cin, f[m], k)?;
                if branch == "pca" {
                    encoders.push((blk, blk));
                } else {
                    encoders[m].1 = blk;
                }
            }
        }
        let mut fusers = Vec::new();
        for (m, &fm) in f.iter().enumerate() {
            let name = format!("fuse.l{}", m + 1);
            fusers.push(match config.fusion {
                FusionMode::EafgAedb => Fuser::Gate(b.conv(&format!("{name}.gate"), fm, fm, 1)?),
                FusionMode::ConcatBaseline => {
                    Fuser::Concat(b.conv(&format!("{name}.reduce"), 2 * fm, fm, 1)?)
                }
            });
        }
        let mut decoders = Vec::new();
        for m in 0..f.len() - 1 {
            let name = format!("dec.l{}", m + 1);
            let (fm, up) = (f[m], f[m + 1]);
            decoders.push(match config.fusion {
                FusionMode::EafgAedb => {
                    let att = attention_channels(fm);
                    Decoder::Attention {
                        wd: b.conv(&format!("{name}.wd"), up, att, 1)?,
                        wf: b.conv(&format!("{name}.wf"), fm, att, 1)?,
                        psi: b.conv(&format!("{name}.psi"), att, 1, 1)?,
                        block: b.block(&format!("{name}.block"), up, fm, k)?,
                    }
                }
                FusionMode::ConcatBaseline => Decoder::Concat {
                    reduce: b.conv(&format!("{name}.reduce"), up + fm, fm, 1)?,
                    block: b.block(&format!("{name}.block"), fm, fm, k)?,
                },
            });
        }
        let head = match config.head {
            Head::Multiclass { classes } => HeadIds::Multiclass {
                classes: b.conv("head.classes", f[0], classes, 1)?,
            },
            Head::BinaryDepth { .. } => HeadIds::BinaryDepth {
                logit: b.conv("head.logit", f[0], 1, 1)?,
                depth: b.conv("head.depth", f[0], 1, 1)?,
            },
        };
        Ok(PtFusion {
            config,
            store: b.store,
            encoders,
            fusers,
            decoders,
            head,
        })
    }

    pub fn levels(&self) -> usize {
        self.config.filters.len()
    }

    pub fn conv(&self, tape: &mut Tape, c: ConvIds, x: Var) -> Result<Var> {
        let w = tape.param(&self.store, c.w);
        let b = tape.param(&self.store, c.b);
        tape.conv2d(x, w, Some(b))
    }

    pub fn residual_block(&self, tape: &mut Tape, blk: &ResidualBlock, x: Var) -> Result<Var> {
        let h = self.conv(tape, blk.conv1, x)?;
        let h = tape.relu(h);
        let h = self.conv(tape, blk.conv2, h)?;
        let s = match blk.shortcut {
            Some(c) => self.conv(tape, c, x)?,
            None => x,
        };
        let sum = tape.add(h, s)?;
        Ok(tape.relu(sum))
    }

    /// Per-level `(F_pca, F_tsr)` features; level 1 has no pooling.
    pub fn encode(&self, tape: &mut Tape, pca: Var, tsr: Var) -> Result<Vec<(Var, Var)>> {
        let (ps, ts) = (tape.shape(pca), tape.shape(tsr));
        if ps.c != self.config.pca_channels || ts.c != self.config.tsr_channels {
            return Err(Error::Shape(format!(
                "inputs {ps} / {ts}, model expects {} PCA and {} TSR channels",
                self.config.pca_channels, self.config.tsr_channels
            )));
        }
        if ps.with_channels(0) != ts.with_channels(0) {
            return Err(Error::Shape(format!("PCA input {ps} vs TSR input {ts}")));
        }
        self.config.check_input(ps.h, ps.w)?;
        let (mut fp, mut ft) = (pca, tsr);
        let mut feats = Vec::with_capacity(self.levels());
        for (m, (bp, bt)) in self.encoders.iter().enumerate() {
            if m > 0 {
                fp = tape.max_pool2(fp)?;
                ft = tape.max_pool2(ft)?;
            }
            fp = self.residual_block(tape, bp, fp)?;
            ft = self.residual_block(tape, bt, ft)?;
            feats.push((fp, ft));
        }
        Ok(feats)
    }

    /// `α ⊗ Fp + (1 − α) ⊗ Ft` with `α = sigmoid(1×1(Fp))`.
    pub fn eafg(&self, tape: &mut Tape, gate: ConvIds, fp: Var, ft: Var) -> Result<Var> {
        if tape.shape(fp) != tape.shape(ft) {
            return Err(Error::Shape(format!(
                "fusion inputs {} vs {}",
                tape.shape(fp),
                tape.shape(ft)
            )));
        }
        let z = self.conv(tape, gate, fp)?;
        let alpha = tape.sigmoid(z);
        // Evaluated as Ft + α(Fp − Ft) so that Fp = Ft returns Ft exactly.
        let neg = tape.affine(ft, -1.0, 0.0);
        let diff = tape.add(fp, neg)?;
        let step = tape.mul(alpha, diff)?;
        tape.add(ft, step)
    }

    /// Fuses the level-`m` (0-based) feature pair.
    pub fn fuse(&self, tape: &mut Tape, m: usize, fp: Var, ft: Var) -> Result<Var> {
        match self.fusers[m] {
            Fuser::Gate(g) => self.eafg(tape, g, fp, ft),
            Fuser::Concat(c) => {
                let cat = tape.concat(fp, ft)?;
                self.conv(tape, c, cat)
            }
        }
    }

    fn upsample_to(&self, tape: &mut Tape, d_prev: Var, target: Shape) -> Result<Var> {
        let ds = tape.shape(d_prev);
        if (ds.h, ds.w) == (target.h, target.w) {
            Ok(d_prev)
        } else if (2 * ds.h, 2 * ds.w) == (target.h, target.w) {
            Ok(tape.upsample2(d_prev))
        } else {
            Err(Error::Shape(format!(
                "decoder state {ds} cannot reach resolution of {target}"
            )))
        }
    }

    /// Attention decoding step producing level `m` (0-based) from the
    /// decoder state one level below and the fused level-`m` features.
    pub fn aedb(&self, tape: &mut Tape, m: usize, d_prev: Var, fused: Var) -> Result<AedbTrace> {
        let Decoder::Attention { wd, wf, psi, block } = self.decoders[m] else {
            return Err(Error::InvalidArgument("model has no attention decoder".into()));
        };
        let u = self.upsample_to(tape, d_prev, tape.shape(fused))?;
        let d1 = self.conv(tape, wd, u)?;
        let f1 = self.conv(tape, wf, fused)?;
        let s = tape.add(d1, f1)?;
        let s = tape.relu(s);
        let z = self.conv(tape, psi, s)?;
        let gate = tape.sigmoid(z);
        let gated = tape.mul_channel(u, gate)?;
        let out = self.residual_block(tape, &block, gated)?;
        Ok(AedbTrace {
            upsampled: u,
            psi: gate,
            gated,
            out,
        })
    }

    pub fn decode(&self, tape: &mut Tape, m: usize, d_prev: Var, fused: Var) -> Result<Var> {
        match self.decoders[m] {
            Decoder::Attention { .. } => Ok(self.aedb(tape, m, d_prev, fused)?.out),
            Decoder::Concat { reduce, block } => {
                let u = self.upsample_to(tape, d_prev, tape.shape(fused))?;
                let cat = tape.concat(u, fused)?;
                let r = self.conv(tape, reduce, cat)?;
                self.residual_block(tape, &block, r)
            }
        }
    }

    pub fn forward(&self, tape: &mut Tape, pca: Var, tsr: Var) -> Result<Predictions> {
        let feats = self.encode(tape, pca, tsr)?;
        let top = self.levels() - 1;
        let (fp, ft) = feats[top];
        let mut d = self.fuse(tape, top, fp, ft)?;
        for m in (0..top).rev() {
            let (fp, ft) = feats[m];
            let fused = self.fuse(tape, m, fp, ft)?;
            d = self.decode(tape, m, d, fused)?;
        }
        match (self.head, &self.config.head) {
            (HeadIds::Multiclass { classes }, _) => Ok(Predictions::Multiclass {
                logits: self.conv(tape, classes, d)?,
            }),
            (HeadIds::BinaryDepth { logit, depth }, Head::BinaryDepth { d_max_mm }) => {
                let logits = self.conv(tape, logit, d)?;
                let z = self.conv(tape, depth, d)?;
                let s = tape.sigmoid(z);
                Ok(Predictions::BinaryDepth {
                    logits,
                    depth: tape.affine(s, *d_max_mm, 0.0),
                })
            }
            _ => Err(Error::Invariant("head weights do not match config".into())),
        }
    }

    /// Forward pass on constant inputs, returning plain tensors.
    pub fn predict(&self, pca: Tensor, tsr: Tensor) -> Result<(Tensor, Option<Tensor>)> {
        let mut tape = Tape::new();
        let p = tape.constant(pca);
        let t = tape.constant(tsr);
        let out = self.forward(&mut tape, p, t)?;
        Ok(match out {
            Predictions::Multiclass { logits } => (tape.value(logits).clone(), None),
            Predictions::BinaryDepth { logits, depth } => (
                tape.value(logits).clone(),
                Some(tape.value(depth).clone()),
            ),
        })
    }
}
