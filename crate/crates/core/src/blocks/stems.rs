//! Convolutional stems and the frequency bridge between them.

use crate::autodiff::Var;
use crate::error::{FeError, Result};
use crate::layers::{BatchNorm, Conv, ConvBnAct, Linear};
use crate::nn::{softmax_spatial, upsample_trilinear, Activation, ConvSpec};
use crate::params::{Builder, Ctx};

use super::fdsa::freq_attention_scores;

/// Two patch-embedding layers, each a stride-2 and a stride-1 3³ conv.
#[derive(Clone, Debug)]
pub struct EncoderStem {
    pub layers: [[ConvBnAct; 2]; 2],
}

impl EncoderStem {
    pub fn new(b: &mut Builder, name: &str, cin: usize, c: usize) -> Result<Self> {
        let h = c / 2;
        let g = Activation::Gelu;
        let mk = |b: &mut Builder, i: usize, from: usize, to: usize| -> Result<[ConvBnAct; 2]> {
            Ok([
                ConvBnAct::new(b, &format!("{name}.embed{i}.down"), ConvSpec::strided(from, to, 3, 2, 1), g)?,
                ConvBnAct::new(b, &format!("{name}.embed{i}.conv"), ConvSpec::same(to, to, 3), g)?,
            ])
        };
        Ok(EncoderStem { layers: [mk(b, 0, cin, h)?, mk(b, 1, h, c)?] })
    }

    /// Returns (X1 at 1/2 resolution, X2 at 1/4 resolution).
    pub fn forward(&self, ctx: &Ctx, x: &Var) -> Result<(Var, Var)> {
        let [_, _, d, h, w] = x.value().dims5()?;
        if let Some(&bad) = [d, h, w].iter().find(|&&e| e % 4 != 0) {
            return Err(FeError::Shape(format!("stem input extent {bad} is not divisible by 4")));
        }
        let run = |layer: &[ConvBnAct; 2], x: &Var| -> Result<Var> { layer[1].forward(ctx, &layer[0].forward(ctx, x)?) };
        let x1 = run(&self.layers[0], x)?;
        let x2 = run(&self.layers[1], &x1)?;
        Ok((x1, x2))
    }
}

/// Bridge from the encoder stem to the decoder stem.
#[derive(Clone, Debug)]
pub struct Fcsb {
    pub channels: usize,
    pub spconv: Conv,
    pub spbn: BatchNorm,
    pub restore: Conv,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
}

impl Fcsb {
    pub fn new(b: &mut Builder, name: &str, c: usize) -> Result<Self> {
        if c % 2 != 0 {
            return Err(FeError::Config(format!("bridge width {c} must be even")));
        }
        let h = c / 2;
        Ok(Fcsb {
            channels: c,
            spconv: Conv::new(b, &format!("{name}.spconv"), ConvSpec::same(c, c, 1), true)?,
            spbn: BatchNorm::new(b, &format!("{name}.spbn"), c)?,
            restore: Conv::new(b, &format!("{name}.restore"), ConvSpec::same(h, c, 1), true)?,
            q: Linear::new(b, &format!("{name}.q"), h, h)?,
            k: Linear::new(b, &format!("{name}.k"), h, h)?,
            v: Linear::new(b, &format!("{name}.v"), h, h)?,
        })
    }

    /// Global path over half of X2's channels: spectrum → 1×1×1 conv on the
    /// stacked real/imaginary planes → back to space → channel restore.
    pub fn spectral_path(&self, ctx: &Ctx, x: &Var) -> Result<Var> {
        let [b, h, d, hh, w] = x.value().dims5()?;
        // [2, B, C/2, ...] → (B, 2·C/2, ...) with the real planes first.
        let spec = x.fft3()?.permute(&[1, 0, 2, 3, 4, 5]).reshape(&[b, 2 * h, d, hh, w]);
        let y = self.spconv.forward(ctx, &spec)?;
        let y = self.spbn.forward(ctx, &y)?.relu();
        let y = y.reshape(&[b, 2, h, d, hh, w]).permute(&[1, 0, 2, 3, 4, 5]);
        let back = y.ifft3_complex()?;
        let im = back.complex_imag();
        ctx.note_dropped_imag(im.value().sum_sq());
        self.restore.forward(ctx, &back.complex_real())
    }

    /// Cross-scale attention: queries and keys from X1, values from the
    /// upsampled half of X2.
    pub fn cross_path(&self, ctx: &Ctx, x1: &Var, x2_half: &Var) -> Result<Var> {
        let [_, _, d, h, w] = x1.value().dims5()?;
        let up = upsample_trilinear(x2_half, [d, h, w])?;
        let q = self.q.forward_channels(ctx, x1)?;
        let k = self.k.forward_channels(ctx, x1)?;
        let v = self.v.forward_channels(ctx, &up)?;
        Ok(softmax_spatial(&freq_attention_scores(&q, &k)?)?.mul(&v))
    }

    /// Returns (X̂1, X̂2).
    pub fn forward(&self, ctx: &Ctx, x1: &Var, x2: &Var) -> Result<(Var, Var)> {
        let c = self.channels;
        let [_, c2, ..] = x2.value().dims5()?;
        let [_, c1, ..] = x1.value().dims5()?;
        if c2 != c || c1 != c / 2 {
            return Err(FeError::Shape(format!("bridge of width {c} got X1 {:?}, X2 {:?}", x1.shape(), x2.shape())));
        }
        let first = x2.narrow(1, 0, c / 2);
        let second = x2.narrow(1, c / 2, c / 2);
        let x2_hat = self.spectral_path(ctx, &second)?;
        let x1_hat = self.cross_path(ctx, x1, &first)?;
        Ok((x1_hat, x2_hat))
    }
}

/// Two projection layers (3³ conv, then stride-2 transposed 3³ conv) and
/// the 1×1×1 classification head.
#[derive(Clone, Debug)]
pub struct DecoderStem {
    pub layers: [[ConvBnAct; 2]; 2],
    pub head: Conv,
}

impl DecoderStem {
    pub fn new(b: &mut Builder, name: &str, c: usize, n_classes: usize) -> Result<Self> {
        let h = c / 2;
        let g = Activation::Gelu;
        let mk = |b: &mut Builder, i: usize, from: usize| -> Result<[ConvBnAct; 2]> {
            Ok([
                ConvBnAct::new(b, &format!("{name}.proj{i}.conv"), ConvSpec::same(from, h, 3), g)?,
                ConvBnAct::new(b, &format!("{name}.proj{i}.up"), ConvSpec::upsampling(h, h, 3, 2), g)?,
            ])
        };
        Ok(DecoderStem {
            layers: [mk(b, 0, c)?, mk(b, 1, h)?],
            head: Conv::new(b, &format!("{name}.head"), ConvSpec::same(h, n_classes, 1), true)?,
        })
    }

    /// `bridge` is (X̂1, X̂2); `None` runs the plain stem.
    pub fn forward(&self, ctx: &Ctx, x: &Var, bridge: Option<(&Var, &Var)>) -> Result<Var> {
        let run = |layer: &[ConvBnAct; 2], x: &Var| -> Result<Var> { layer[1].forward(ctx, &layer[0].forward(ctx, x)?) };
        let add = |x: Var, extra: Option<&Var>| -> Result<Var> {
            match extra {
                Some(e) if e.shape() != x.shape() => {
                    Err(FeError::Shape(format!("bridge feature {:?} vs stem {:?}", e.shape(), x.shape())))
                }
                Some(e) => Ok(x.add(e)),
                None => Ok(x),
            }
        };
        let x = add(x.clone(), bridge.map(|b| b.1))?;
        let x = run(&self.layers[0], &x)?;
        let x = add(x, bridge.map(|b| b.0))?;
        let x = run(&self.layers[1], &x)?;
        self.head.forward(ctx, &x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{finite_difference_check, FdSampling};
    use crate::params::ParamStore;
    use crate::tensor::Tensor;

    fn noise(shape: &[usize], seed: u64) -> Tensor {
        let mut s = seed;
        Tensor::from_fn(shape, |_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    struct Parts {
        enc: EncoderStem,
        bridge: Fcsb,
        dec: DecoderStem,
    }

    fn build(c: usize, classes: usize) -> (Parts, ParamStore) {
        let mut b = Builder::new(11);
        let p = Parts {
            enc: EncoderStem::new(&mut b, "enc", 1, c).unwrap(),
            bridge: Fcsb::new(&mut b, "fcsb", c).unwrap(),
            dec: DecoderStem::new(&mut b, "dec", c, classes).unwrap(),
        };
        (p, b.finish())
    }

    #[test]
    fn encoder_shapes() {
        let (p, store) = build(8, 2);
        let ctx = Ctx::new(&store, None, true, 0);
        let (x1, x2) = p.enc.forward(&ctx, &Var::constant(noise(&[1, 1, 8, 8, 8], 1))).unwrap();
        assert_eq!(x1.shape(), &[1, 4, 4, 4, 4]);
        assert_eq!(x2.shape(), &[1, 8, 2, 2, 2]);
        assert!(p.enc.forward(&ctx, &Var::constant(Tensor::zeros(&[1, 1, 6, 8, 8]))).is_err());
    }

    #[test]
    fn bridge_shapes_and_zeros() {
        let (p, store) = build(8, 2);
        let ctx = Ctx::new(&store, None, true, 0);
        let (x1, x2) = (noise(&[1, 4, 4, 4, 4], 2), noise(&[1, 8, 2, 2, 2], 3));
        let (h1, h2) = p.bridge.forward(&ctx, &Var::constant(x1), &Var::constant(x2)).unwrap();
        assert_eq!(h1.shape(), &[1, 4, 4, 4, 4]);
        assert_eq!(h2.shape(), &[1, 8, 2, 2, 2]);
        let (z1, z2) = p
            .bridge
            .forward(&ctx, &Var::constant(Tensor::zeros(&[1, 4, 4, 4, 4])), &Var::constant(Tensor::zeros(&[1, 8, 2, 2, 2])))
            .unwrap();
        assert_eq!(z1.value().max_abs(), 0.0);
        assert_eq!(z2.value().max_abs(), 0.0);
    }

    #[test]
    fn zero_value_projection_silences_cross_path() {
        let (p, mut store) = build(8, 2);
        *store.get_mut(p.bridge.v.weight) = Tensor::zeros(&[4, 4]);
        let ctx = Ctx::new(&store, None, true, 0);
        let y = p
            .bridge
            .cross_path(&ctx, &Var::constant(noise(&[1, 4, 4, 4, 4], 4)), &Var::constant(noise(&[1, 4, 2, 2, 2], 5)))
            .unwrap();
        assert_eq!(y.value().max_abs(), 0.0);
    }

    #[test]
    fn decoder_shapes_and_zero_logits() {
        let (p, store) = build(8, 3);
        let ctx = Ctx::new(&store, None, true, 0);
        let x = Var::constant(noise(&[1, 8, 2, 2, 2], 6));
        let h1 = Var::constant(noise(&[1, 4, 4, 4, 4], 7));
        let h2 = Var::constant(noise(&[1, 8, 2, 2, 2], 8));
        let y = p.dec.forward(&ctx, &x, Some((&h1, &h2))).unwrap();
        assert_eq!(y.shape(), &[1, 3, 8, 8, 8]);
        let z = p.dec.forward(&ctx, &Var::constant(Tensor::zeros(&[1, 8, 2, 2, 2])), None).unwrap();
        assert_eq!(z.value().max_abs(), 0.0);
        assert!(p.dec.forward(&ctx, &x, Some((&h2, &h2))).is_err());
    }

    #[test]
    fn zero_bridge_equals_plain_stem() {
        let (p, store) = build(8, 3);
        let ctx = Ctx::new(&store, None, true, 0);
        let x = Var::constant(noise(&[1, 8, 2, 2, 2], 9));
        let z1 = Var::constant(Tensor::zeros(&[1, 4, 4, 4, 4]));
        let z2 = Var::constant(Tensor::zeros(&[1, 8, 2, 2, 2]));
        let a = p.dec.forward(&ctx, &x, Some((&z1, &z2))).unwrap();
        let b = p.dec.forward(&ctx, &x, None).unwrap();
        assert_eq!(a.value(), b.value());
    }

    #[test]
    fn stem_and_bridge_gradients() {
        let (p, mut store) = build(8, 2);
        store.jitter(3, 0.05);
        let sp = p.bridge.spconv.weight;
        let inputs = [noise(&[1, 1, 8, 8, 8], 10), store.get(sp).clone()];
        let r = finite_difference_check(
            |v| {
                let ctx = Ctx::new(&store, None, true, 0);
                ctx.bind(sp, v[1].clone());
                let (x1, x2) = p.enc.forward(&ctx, &v[0])?;
                let (h1, h2) = p.bridge.forward(&ctx, &x1, &x2)?;
                let y = p.dec.forward(&ctx, &x2, Some((&h1, &h2)))?;
                Ok(y.mul(&y).sum_all())
            },
            &inputs,
            1e-5,
            1e-4,
            FdSampling::Random { count: 200, seed: 4 },
        )
        .unwrap();
        assert!(r.passed, "{r:?}");
    }
}
