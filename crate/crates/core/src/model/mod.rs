//! Full encoder–bottleneck–decoder network with the stem bridge.

mod checkpoint;
mod count;
mod loss;

pub use checkpoint::{read_config_sidecar, sidecar_path, Checkpoint, CHECKPOINT_MAGIC};
pub use count::{decision_deltas, flop_count, model_flops, param_breakdown, DecisionDelta, FlopReport, LayerFlops};
pub use loss::{one_hot, seg_loss, seg_loss_parts};

use std::fmt::Write as _;

use crate::autodiff::Var;
use crate::blocks::{DecoderStem, EncoderStem, Fcsb, FgmlpOptions, KernelGen, TransformerBlock, Waff};
use crate::error::{FeError, Result};
use crate::layers::{Conv, LayerNorm};
use crate::nn::ConvSpec;
use crate::params::{Builder, Ctx, ParamStore};
use crate::spectral::{masks::validate_cutoffs, DEFAULT_CUTOFFS};

/// Network depth: input extents must be divisible by this.
pub const DOWNSAMPLE: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub n_classes: usize,
    /// Base width C; stages run at C, 2C, 4C and the bottleneck at 8C.
    pub base_channels: usize,
    /// Blocks per stage: encoder 0..3, bottleneck, decoder at 4C, 2C, C.
    pub depths: [usize; 7],
    pub mlp_ratio: usize,
    pub cutoffs: (f64, f64),
    pub lowpass_k: usize,
    pub dropout: f64,
    pub kernel_gen: KernelGen,
    pub waff_per_subband: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            in_channels: 1,
            n_classes: 16,
            base_channels: 64,
            depths: [2; 7],
            mlp_ratio: 4,
            cutoffs: DEFAULT_CUTOFFS,
            lowpass_k: 3,
            dropout: 0.0,
            kernel_gen: KernelGen::Grouped,
            waff_per_subband: false,
            seed: 0,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| FeError::Config(format!("bad value {v:?} for key {key}")))
}

impl ModelConfig {
    /// Desk-scale configuration: width `c`, one block per stage.
    pub fn toy(c: usize, n_classes: usize) -> Self {
        ModelConfig { base_channels: c, n_classes, depths: [1; 7], ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.base_channels;
        if c == 0 || c % 4 != 0 {
            return Err(FeError::Config(format!("base_channels {c} must be a positive multiple of 4")));
        }
        if self.in_channels == 0 || self.n_classes == 0 {
            return Err(FeError::Config("in_channels and n_classes must be positive".into()));
        }
        if self.mlp_ratio == 0 {
            return Err(FeError::Config("mlp_ratio must be positive".into()));
        }
        if self.lowpass_k % 2 == 0 {
            return Err(FeError::Config(format!("lowpass_k {} must be odd", self.lowpass_k)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(FeError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        validate_cutoffs(self.cutoffs).map_err(|e| FeError::Config(e.to_string()))
    }

    pub fn mlp_options(&self) -> FgmlpOptions {
        FgmlpOptions {
            mlp_ratio: self.mlp_ratio,
            k: self.lowpass_k,
            dropout: self.dropout,
            kernel_gen: self.kernel_gen,
            ..Default::default()
        }
    }

    /// Sets one `key=value` field. Returns `Ok(false)` for keys this record
    /// does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "in_channels" => self.in_channels = parse(key, value)?,
            "n_classes" => self.n_classes = parse(key, value)?,
            "base_channels" => self.base_channels = parse(key, value)?,
            "depths" => {
                let v: Vec<usize> = value.split(',').map(|s| parse(key, s)).collect::<Result<_>>()?;
                self.depths = match v.len() {
                    1 => [v[0]; 7],
                    7 => v.try_into().unwrap(),
                    n => return Err(FeError::Config(format!("depths needs 1 or 7 values, got {n}"))),
                };
            }
            "mlp_ratio" => self.mlp_ratio = parse(key, value)?,
            "cutoffs" => {
                let v: Vec<f64> = value.split(',').map(|s| parse(key, s)).collect::<Result<_>>()?;
                if v.len() != 2 {
                    return Err(FeError::Config("cutoffs needs two values r1,r2".into()));
                }
                self.cutoffs = (v[0], v[1]);
            }
            "lowpass_k" => self.lowpass_k = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "kernel_gen" => {
                self.kernel_gen = match value.trim() {
                    "grouped" => KernelGen::Grouped,
                    "dense" => KernelGen::Dense,
                    v => return Err(FeError::Config(format!("kernel_gen must be grouped or dense, got {v}"))),
                }
            }
            "waff_per_subband" => self.waff_per_subband = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Plain-text `key=value` lines accepted by [`ModelConfig::set`].
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let depths: Vec<String> = self.depths.iter().map(|d| d.to_string()).collect();
        let kg = match self.kernel_gen {
            KernelGen::Grouped => "grouped",
            KernelGen::Dense => "dense",
        };
        writeln!(s, "in_channels={}", self.in_channels).unwrap();
        writeln!(s, "n_classes={}", self.n_classes).unwrap();
        writeln!(s, "base_channels={}", self.base_channels).unwrap();
        writeln!(s, "depths={}", depths.join(",")).unwrap();
        writeln!(s, "mlp_ratio={}", self.mlp_ratio).unwrap();
        // {:?} keeps every digit of the cutoffs, so the file round-trips.
        writeln!(s, "cutoffs={:?},{:?}", self.cutoffs.0, self.cutoffs.1).unwrap();
        writeln!(s, "lowpass_k={}", self.lowpass_k).unwrap();
        writeln!(s, "dropout={:?}", self.dropout).unwrap();
        writeln!(s, "kernel_gen={kg}").unwrap();
        writeln!(s, "waff_per_subband={}", self.waff_per_subband).unwrap();
        writeln!(s, "seed={}", self.seed).unwrap();
        s
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| FeError::Config(format!("line {}: expected key=value", n + 1)))?;
            if !cfg.set(k.trim(), v)? {
                return Err(FeError::Config(format!("unknown key {}", k.trim())));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Expected (name, shape) after each stage for a batch-1 input.
    pub fn stage_schedule(&self, extents: [usize; 3]) -> Vec<(String, Vec<usize>)> {
        let c = self.base_channels;
        let at = |ch: usize, s: usize| vec![1, ch, extents[0] / s, extents[1] / s, extents[2] / s];
        vec![
            ("stem.x1".into(), at(c / 2, 2)),
            ("stem.x2".into(), at(c, 4)),
            ("enc0".into(), at(c, 4)),
            ("enc1".into(), at(2 * c, 8)),
            ("enc2".into(), at(4 * c, 16)),
            ("bottleneck".into(), at(8 * c, 32)),
            ("dec2".into(), at(4 * c, 16)),
            ("dec1".into(), at(2 * c, 8)),
            ("dec0".into(), at(c, 4)),
            ("logits".into(), at(self.n_classes, 1)),
        ]
    }
}

/// Stride-2 3³ conv doubling channels, then channel layer norm.
#[derive(Clone, Debug)]
pub struct PatchMerge {
    pub conv: Conv,
    pub norm: LayerNorm,
}

#[derive(Clone, Debug)]
pub struct EncoderStage {
    pub blocks: Vec<TransformerBlock>,
    pub merge: PatchMerge,
}

#[derive(Clone, Debug)]
pub struct DecoderStage {
    /// Stride-2 transposed 2³ conv halving channels.
    pub expand: Conv,
    pub fuse: Waff,
    pub blocks: Vec<TransformerBlock>,
}

#[derive(Clone, Debug)]
pub struct FeFormer {
    pub cfg: ModelConfig,
    pub stem: EncoderStem,
    pub encoder: Vec<EncoderStage>,
    pub bottleneck: Vec<TransformerBlock>,
    /// Deepest first (4C, 2C, C).
    pub decoder: Vec<DecoderStage>,
    pub bridge: Fcsb,
    pub head: DecoderStem,
}

fn blocks(b: &mut Builder, name: &str, n: usize, c: usize, cfg: &ModelConfig) -> Result<Vec<TransformerBlock>> {
    (0..n)
        .map(|i| TransformerBlock::new(b, &format!("{name}.block{i}"), c, cfg.cutoffs, cfg.mlp_options()))
        .collect()
}

impl FeFormer {
    /// Builds the network and its deterministically initialized parameters.
    pub fn build(cfg: &ModelConfig) -> Result<(FeFormer, ParamStore)> {
        cfg.validate()?;
        let c = cfg.base_channels;
        let mut b = Builder::new(cfg.seed);
        let stem = EncoderStem::new(&mut b, "stem", cfg.in_channels, c)?;
        let mut encoder = Vec::new();
        for i in 0..3 {
            let w = c << i;
            let name = format!("enc{i}");
            encoder.push(EncoderStage {
                blocks: blocks(&mut b, &name, cfg.depths[i], w, cfg)?,
                merge: PatchMerge {
                    conv: Conv::new(&mut b, &format!("{name}.merge.conv"), ConvSpec::strided(w, 2 * w, 3, 2, 1), true)?,
                    norm: LayerNorm::new(&mut b, &format!("{name}.merge.norm"), 2 * w)?,
                },
            });
        }
        let bottleneck = blocks(&mut b, "bottleneck", cfg.depths[3], 8 * c, cfg)?;
        let mut decoder = Vec::new();
        for (j, i) in [2usize, 1, 0].into_iter().enumerate() {
            let w = c << i;
            let name = format!("dec{i}");
            decoder.push(DecoderStage {
                expand: Conv::new(&mut b, &format!("{name}.expand"), ConvSpec::upsampling(2 * w, w, 2, 2), true)?,
                fuse: Waff::new(&mut b, &format!("{name}.waff"), cfg.waff_per_subband)?,
                blocks: blocks(&mut b, &name, cfg.depths[4 + j], w, cfg)?,
            });
        }
        let bridge = Fcsb::new(&mut b, "bridge", c)?;
        let head = DecoderStem::new(&mut b, "head", c, cfg.n_classes)?;
        let model = FeFormer { cfg: cfg.clone(), stem, encoder, bottleneck, decoder, bridge, head };
        Ok((model, b.finish()))
    }

    pub fn check_input(&self, shape: &[usize]) -> Result<()> {
        if shape.len() != 5 || shape[1] != self.cfg.in_channels {
            return Err(FeError::Shape(format!(
                "expected (B, {}, D, H, W) input, got {:?}",
                self.cfg.in_channels, shape
            )));
        }
        if let Some(&e) = shape[2..].iter().find(|&&e| e == 0 || e % DOWNSAMPLE != 0) {
            return Err(FeError::Shape(format!(
                "spatial extent {e} is not divisible by {DOWNSAMPLE} (every extent must be a positive multiple of {DOWNSAMPLE})"
            )));
        }
        Ok(())
    }

    /// Logits (B, n_classes, D, H, W). Stage shapes are recorded in `ctx`.
    pub fn forward(&self, ctx: &Ctx, x: &Var) -> Result<Var> {
        self.check_input(x.shape())?;
        let stage = |name: &str, v: &Var| -> Result<()> {
            v.ensure_finite(name)?;
            ctx.trace(name, v.shape());
            Ok(())
        };
        let (x1, x2) = self.stem.forward(ctx, x)?;
        stage("stem.x1", &x1)?;
        stage("stem.x2", &x2)?;
        let mut h = x2.clone();
        let mut skips = Vec::new();
        for (i, s) in self.encoder.iter().enumerate() {
            for blk in &s.blocks {
                h = blk.forward(ctx, &h)?;
            }
            stage(&format!("enc{i}"), &h)?;
            skips.push(h.clone());
            h = s.merge.norm.forward_channels(ctx, &s.merge.conv.forward(ctx, &h)?)?;
        }
        for blk in &self.bottleneck {
            h = blk.forward(ctx, &h)?;
        }
        stage("bottleneck", &h)?;
        for (s, i) in self.decoder.iter().zip([2usize, 1, 0]) {
            let up = s.expand.forward(ctx, &h)?;
            h = s.fuse.forward(ctx, &skips[i], &up)?;
            for blk in &s.blocks {
                h = blk.forward(ctx, &h)?;
            }
            stage(&format!("dec{i}"), &h)?;
        }
        let (b1, b2) = self.bridge.forward(ctx, &x1, &x2)?;
        stage("bridge.x1", &b1)?;
        stage("bridge.x2", &b2)?;
        let logits = self.head.forward(ctx, &h, Some((&b1, &b2)))?;
        stage("logits", &logits)?;
        Ok(logits)
    }

    /// Every transformer block in forward order.
    pub fn all_blocks(&self) -> Vec<&TransformerBlock> {
        let mut v: Vec<&TransformerBlock> = Vec::new();
        for s in &self.encoder {
            v.extend(&s.blocks);
        }
        v.extend(&self.bottleneck);
        for s in &self.decoder {
            v.extend(&s.blocks);
        }
        v
    }
}

/// Per-voxel argmax over the class axis of (B, K, D, H, W) logits.
pub fn argmax_labels(logits: &crate::tensor::Tensor) -> Result<Vec<usize>> {
    let [b, k, d, h, w] = logits.dims5()?;
    let vol = d * h * w;
    let x = logits.data();
    let mut out = vec![0; b * vol];
    for bi in 0..b {
        for v in 0..vol {
            let mut best = 0;
            for c in 1..k {
                if x[(bi * k + c) * vol + v] > x[(bi * k + best) * vol + v] {
                    best = c;
                }
            }
            out[bi * vol + v] = best;
        }
    }
    Ok(out)
}
