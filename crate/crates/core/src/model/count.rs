//! Parameter and FLOP accounting.
//!
//! FLOPs are `2·MACs` for convolutions and linear maps plus `5·N·log2(N)`
//! per FFT and channel. Normalizations, activations, softmax, pooling,
//! Haar transforms and other elementwise work are not counted.

use indexmap::IndexMap;

use super::{FeFormer, ModelConfig};
use crate::blocks::{KernelGen, TransformerBlock};
use crate::error::Result;
use crate::layers::{Conv, ConvBnAct};
use crate::nn::conv_macs;
use crate::params::ParamStore;
use crate::spectral::fft_flops;

/// Learnable values per top-level module (the name up to the first dot),
/// in store order. BN running statistics are buffers and never counted.
pub fn param_breakdown(store: &ParamStore) -> IndexMap<String, usize> {
    let mut out: IndexMap<String, usize> = IndexMap::new();
    for (_, name, p) in store.iter() {
        let top = name.split('.').next().unwrap_or(name);
        *out.entry(top.to_string()).or_default() += p.value.numel();
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecisionDelta {
    pub decision: &'static str,
    pub chosen: &'static str,
    pub alternative: &'static str,
    /// Change in parameter count if the alternative were used instead.
    pub delta: i64,
}

fn decoder_stem_params(c: usize, h: usize, n_classes: usize) -> i64 {
    // conv3 c→h, then tconv3 h→h, conv3 h→h, tconv3 h→h; each with bias and BN affine, then the 1×1 head.
    let conv = |i: usize, o: usize| 27 * i * o + o + 2 * o;
    (conv(c, h) + 3 * conv(h, h) + h * n_classes + n_classes) as i64
}

/// Parameter deltas of the architectural choices left open by the model
/// description, all relative to `cfg` as built.
pub fn decision_deltas(cfg: &ModelConfig) -> Vec<DecisionDelta> {
    let c = cfg.base_channels;
    let k3 = cfg.lowpass_k.pow(3);
    // (width, block count) per stage.
    let stages: Vec<(usize, usize)> = vec![
        (c, cfg.depths[0] + cfg.depths[6]),
        (2 * c, cfg.depths[1] + cfg.depths[5]),
        (4 * c, cfg.depths[2] + cfg.depths[4]),
        (8 * c, cfg.depths[3]),
    ];
    let per_block = |f: &dyn Fn(usize) -> i64| -> i64 { stages.iter().map(|&(w, n)| n as i64 * f(w)).sum() };
    let kg_dense = per_block(&|w| (w / 4 * w * k3) as i64);
    let kg_grouped = per_block(&|w| (w * k3) as i64);
    let waff_one = (2 * 343 + 2) as i64;
    let mut rows = vec![
        DecisionDelta {
            decision: "mlp kernel generator",
            chosen: if cfg.kernel_gen == KernelGen::Grouped { "grouped 1x1 (C/4 groups)" } else { "dense 1x1" },
            alternative: if cfg.kernel_gen == KernelGen::Grouped { "dense 1x1" } else { "grouped 1x1 (C/4 groups)" },
            delta: if cfg.kernel_gen == KernelGen::Grouped { kg_dense - kg_grouped } else { kg_grouped - kg_dense },
        },
        DecisionDelta {
            decision: "wavelet fusion weights",
            chosen: if cfg.waff_per_subband { "one conv per subband" } else { "shared across subbands" },
            alternative: if cfg.waff_per_subband { "shared across subbands" } else { "one conv per subband" },
            delta: if cfg.waff_per_subband { -3 * 7 * waff_one } else { 3 * 7 * waff_one },
        },
        DecisionDelta {
            decision: "attention output projection",
            chosen: "none",
            alternative: "CxC linear after the value product",
            delta: per_block(&|w| (w * w + w) as i64),
        },
        DecisionDelta {
            decision: "attention heads",
            chosen: "1",
            alternative: "h heads splitting the same projections",
            delta: 0,
        },
    ];
    // Transposed 2³ conv 2w→w against trilinear upsampling + 1x1 conv 2w→w.
    let expand = |w: usize, k: usize| (2 * w * w * k + w) as i64;
    rows.push(DecisionDelta {
        decision: "patch expanding",
        chosen: "transposed conv 2^3 stride 2",
        alternative: "trilinear x2 + 1x1 conv",
        delta: [c, 2 * c, 4 * c].iter().map(|&w| expand(w, 1) - expand(w, 8)).sum(),
    });
    rows.push(DecisionDelta {
        decision: "decoder stem width",
        chosen: "C/2",
        alternative: "C/4",
        delta: decoder_stem_params(c, c / 4, cfg.n_classes) - decoder_stem_params(c, c / 2, cfg.n_classes),
    });
    rows
}

#[derive(Clone, Debug, Default)]
pub struct LayerFlops {
    pub name: String,
    pub macs: f64,
    pub fft_flops: f64,
}

impl LayerFlops {
    pub fn flops(&self) -> f64 {
        2.0 * self.macs + self.fft_flops
    }
}

#[derive(Clone, Debug, Default)]
pub struct FlopReport {
    pub layers: Vec<LayerFlops>,
}

impl FlopReport {
    pub fn macs(&self) -> f64 {
        self.layers.iter().map(|l| l.macs).sum()
    }

    pub fn fft_flops(&self) -> f64 {
        self.layers.iter().map(|l| l.fft_flops).sum()
    }

    pub fn total(&self) -> f64 {
        2.0 * self.macs() + self.fft_flops()
    }

    fn push(&mut self, name: String, macs: f64, fft_flops: f64) {
        self.layers.push(LayerFlops { name, macs, fft_flops });
    }

    fn conv(&mut self, name: &str, conv: &Conv, e: [usize; 3]) -> Result<[usize; 3]> {
        self.push(name.to_string(), conv_macs(&conv.spec, e)?, 0.0);
        conv.spec.output_extents(e)
    }

    fn conv_bn(&mut self, name: &str, l: &ConvBnAct, e: [usize; 3]) -> Result<[usize; 3]> {
        self.conv(name, &l.conv, e)
    }

    fn block(&mut self, name: &str, blk: &TransformerBlock, e: [usize; 3]) -> Result<()> {
        let v: usize = e.iter().product();
        let vf = v as f64;
        let a = &blk.attn;
        let c = a.channels as f64;
        self.conv(&format!("{name}.attn.dw"), &a.dw, e)?;
        self.push(format!("{name}.attn.qkv"), 3.0 * c * c * vf, 0.0);
        // fft(Q), fft(K), ifft of the product.
        self.push(format!("{name}.attn.scores"), 0.0, 3.0 * c * fft_flops(v));
        let r = a.fc1.cout as f64;
        self.push(format!("{name}.attn.recal"), 3.0 * c * r + r * c, c * fft_flops(v));
        let m = &blk.mlp;
        let hidden = m.lin1.cout as f64;
        self.push(format!("{name}.mlp.lin"), 2.0 * c * hidden * vf, 0.0);
        self.conv(&format!("{name}.mlp.kg1"), &m.kg1, [1, 1, 1])?;
        self.conv(&format!("{name}.mlp.kg2"), &m.kg2, [1, 1, 1])?;
        self.push(format!("{name}.mlp.lowpass"), c * m.opts.k.pow(3) as f64 * vf, 0.0);
        self.conv(&format!("{name}.mlp.modulator"), &m.modulator, e)?;
        Ok(())
    }
}

/// Per-layer analytic FLOPs of `model` on a batch-1 input of `extents`.
pub fn model_flops(model: &FeFormer, extents: [usize; 3]) -> Result<FlopReport> {
    let mut r = FlopReport::default();
    let mut e = extents;
    let mut x1_ext = e;
    for (i, pair) in model.stem.layers.iter().enumerate() {
        e = r.conv_bn(&format!("stem.embed{i}.down"), &pair[0], e)?;
        e = r.conv_bn(&format!("stem.embed{i}.conv"), &pair[1], e)?;
        if i == 0 {
            x1_ext = e;
        }
    }
    let x2_ext = e;
    for (i, s) in model.encoder.iter().enumerate() {
        for (j, blk) in s.blocks.iter().enumerate() {
            r.block(&format!("enc{i}.block{j}"), blk, e)?;
        }
        e = r.conv(&format!("enc{i}.merge"), &s.merge.conv, e)?;
    }
    for (j, blk) in model.bottleneck.iter().enumerate() {
        r.block(&format!("bottleneck.block{j}"), blk, e)?;
    }
    for (s, i) in model.decoder.iter().zip([2usize, 1, 0]) {
        e = r.conv(&format!("dec{i}.expand"), &s.expand, e)?;
        let half = [e[0] / 2, e[1] / 2, e[2] / 2];
        let per_band = conv_macs(&s.fuse.fuse[0].spec, half)?;
        r.push(format!("dec{i}.waff"), 8.0 * per_band, 0.0);
        for (j, blk) in s.blocks.iter().enumerate() {
            r.block(&format!("dec{i}.block{j}"), blk, e)?;
        }
    }
    let b = &model.bridge;
    let h = (b.channels / 2) as f64;
    let (v1, v2): (usize, usize) = (x1_ext.iter().product(), x2_ext.iter().product());
    r.conv("bridge.spconv", &b.spconv, x2_ext)?;
    r.conv("bridge.restore", &b.restore, x2_ext)?;
    r.push("bridge.spectrum".into(), 0.0, 2.0 * h * fft_flops(v2));
    r.push("bridge.cross".into(), 3.0 * h * h * v1 as f64, 3.0 * h * fft_flops(v1));
    let hd = &model.head;
    for (i, pair) in hd.layers.iter().enumerate() {
        e = r.conv_bn(&format!("head.proj{i}.conv"), &pair[0], e)?;
        e = r.conv_bn(&format!("head.proj{i}.up"), &pair[1], e)?;
    }
    r.conv("head.head", &hd.head, e)?;
    Ok(r)
}

/// Analytic FLOPs of the network described by `cfg` on `extents`.
pub fn flop_count(cfg: &ModelConfig, extents: [usize; 3]) -> Result<FlopReport> {
    let (model, _) = FeFormer::build(cfg)?;
    model_flops(&model, extents)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::Linear;
    use crate::nn::ConvSpec;
    use crate::params::Builder;

    #[test]
    fn small_counts() {
        let mut b = Builder::new(0);
        Linear::new(&mut b, "lin", 3, 4).unwrap();
        assert_eq!(b.finish().param_count(), 16);
        let mut b = Builder::new(0);
        Conv::new(&mut b, "dw", ConvSpec::depthwise(64, 7), true).unwrap();
        assert_eq!(b.finish().param_count(), 22_016);
    }

    #[test]
    fn unit_flop_counts() {
        // Two output channels, each summing two products, at 8 voxels.
        assert_eq!(conv_macs(&ConvSpec::same(2, 2, 1), [2, 2, 2]).unwrap(), 32.0);
        assert_eq!(fft_flops(512), 23_040.0);
    }

    #[test]
    fn breakdown_sums_to_total() {
        let (_, store) = FeFormer::build(&ModelConfig::toy(8, 3)).unwrap();
        let bd = param_breakdown(&store);
        assert_eq!(bd.values().sum::<usize>(), store.param_count());
        let keys: Vec<&str> = bd.keys().map(|s| s.as_str()).collect();
        assert_eq!(keys, ["stem", "enc0", "enc1", "enc2", "bottleneck", "dec2", "dec1", "dec0", "bridge", "head"]);
    }

    #[test]
    fn deltas_match_rebuilt_models() {
        let base = ModelConfig { depths: [1, 2, 1, 1, 2, 1, 1], ..ModelConfig::toy(8, 3) };
        let count = |cfg: &ModelConfig| FeFormer::build(cfg).unwrap().1.param_count() as i64;
        let n0 = count(&base);
        let rows = decision_deltas(&base);
        let dense = ModelConfig { kernel_gen: KernelGen::Dense, ..base.clone() };
        assert_eq!(rows[0].delta, count(&dense) - n0);
        assert_eq!(decision_deltas(&dense)[0].delta, n0 - count(&dense));
        let per_band = ModelConfig { waff_per_subband: true, ..base.clone() };
        assert_eq!(rows[1].delta, count(&per_band) - n0);
    }

    #[test]
    fn totals_match_closed_form() {
        // (C, classes, extent, depth) → (MACs, FFT FLOPs) from a separate closed-form tally.
        for (c, k, e, d, macs, fft) in [
            (8, 3, 32, 1, 15_420_078.0, 4_884_480.0),
            (4, 2, 32, 1, 5_901_966.0, 2_442_240.0),
            (64, 16, 96, 2, 20_754_588_740.0, 2_151_061_007.9425936),
        ] {
            let cfg = ModelConfig { depths: [d; 7], ..ModelConfig::toy(c, k) };
            let rep = flop_count(&cfg, [e; 3]).unwrap();
            assert_eq!(rep.macs(), macs, "C={c}");
            assert!((rep.fft_flops() - fft).abs() < 1e-6 * fft, "C={c}");
        }
    }
}
