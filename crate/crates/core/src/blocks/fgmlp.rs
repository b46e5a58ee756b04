//! Frequency-decomposed gating MLP.
//!
//! Channel expansion with a multiplicative ReLU6 gate, compression, then an
//! input-adaptive low-pass split into low/high parts that are recombined with
//! two sigmoid spatial maps.

use crate::autodiff::Var;
use crate::error::{FeError, Result};
use crate::layers::{Conv, Linear};
use crate::nn::{dropout, dynamic_depthwise_conv, pool, Activation, ConvSpec, Pool};
use crate::params::{Builder, Ctx};

/// Layout of the second kernel-generator convolution (C/4 → C·k³).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelGen {
    /// One group per reduced channel: each of the C/4 units emits the
    /// kernels of 4 channels.
    Grouped,
    /// Every reduced unit feeds every kernel tap.
    Dense,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FgmlpOptions {
    pub mlp_ratio: usize,
    /// Low-pass kernel extent (odd).
    pub k: usize,
    pub dropout: f64,
    pub kernel_gen: KernelGen,
    pub gate: Activation,
}

impl Default for FgmlpOptions {
    fn default() -> Self {
        FgmlpOptions { mlp_ratio: 4, k: 3, dropout: 0.0, kernel_gen: KernelGen::Grouped, gate: Activation::Relu6 }
    }
}

#[derive(Clone, Debug)]
pub struct Fgmlp {
    pub channels: usize,
    pub opts: FgmlpOptions,
    pub lin1: Linear,
    pub lin2: Linear,
    pub kg1: Conv,
    pub kg2: Conv,
    pub modulator: Conv,
}

impl Fgmlp {
    pub fn new(b: &mut Builder, name: &str, channels: usize, opts: FgmlpOptions) -> Result<Self> {
        let c = channels;
        if c % 4 != 0 || c == 0 {
            return Err(FeError::Config(format!("MLP width {c} must be a positive multiple of 4")));
        }
        if opts.k % 2 == 0 {
            return Err(FeError::Config(format!("low-pass kernel extent {} must be odd", opts.k)));
        }
        let hidden = opts.mlp_ratio * c;
        let k3 = opts.k.pow(3);
        let kg2_spec = match opts.kernel_gen {
            KernelGen::Grouped => ConvSpec::same(c / 4, c * k3, 1).with_groups(c / 4),
            KernelGen::Dense => ConvSpec::same(c / 4, c * k3, 1),
        };
        Ok(Fgmlp {
            channels,
            opts,
            lin1: Linear::new(b, &format!("{name}.lin1"), c, hidden)?,
            lin2: Linear::new(b, &format!("{name}.lin2"), hidden, c)?,
            kg1: Conv::new(b, &format!("{name}.kg1"), ConvSpec::same(c, c / 4, 1), true)?,
            kg2: Conv::new(b, &format!("{name}.kg2"), kg2_spec, true)?,
            modulator: Conv::new(b, &format!("{name}.modulator"), ConvSpec::depthwise(2, 7), true)?,
        })
    }

    /// Per-(batch, channel) smoothing kernels (B, C, k³), each a probability
    /// vector.
    pub fn lowpass_kernels(&self, ctx: &Ctx, x_out: &Var) -> Result<Var> {
        let [b, c, ..] = x_out.value().dims5()?;
        let g = pool(Pool::GlobalAvgSpatial, x_out)?;
        let h = self.kg1.forward(ctx, &g)?.gelu();
        let k = self.kg2.forward(ctx, &h)?;
        Ok(k.reshape(&[b, c, self.opts.k.pow(3)]).softmax_axis(2))
    }

    /// Splits `x_out` with `kernels` and recombines the parts with the
    /// modulator maps.
    pub fn modulate(&self, ctx: &Ctx, x_out: &Var, kernels: &Var) -> Result<Var> {
        let (low, high) = self.split(x_out, kernels)?;
        let (w1, w2) = self.selection_maps(ctx, &low.add(&high))?;
        Ok(w1.mul(&low).add(&w2.mul(&high)))
    }

    /// (X_low, X_high) with X_low + X_high = x_out.
    pub fn split(&self, x_out: &Var, kernels: &Var) -> Result<(Var, Var)> {
        let low = dynamic_depthwise_conv(x_out, kernels, self.opts.k)?;
        let high = x_out.sub(&low);
        Ok((low, high))
    }

    /// Two (B, 1, D, H, W) sigmoid maps from channel-average and channel-max
    /// descriptors.
    pub fn selection_maps(&self, ctx: &Ctx, x: &Var) -> Result<(Var, Var)> {
        let desc = Var::concat(&[pool(Pool::AvgOverChannels, x)?, pool(Pool::MaxOverChannels, x)?], 1);
        let w = self.modulator.forward(ctx, &desc)?.sigmoid();
        Ok((w.narrow(1, 0, 1), w.narrow(1, 1, 1)))
    }

    pub fn forward(&self, ctx: &Ctx, x: &Var) -> Result<Var> {
        let [_, c, ..] = x.value().dims5()?;
        if c != self.channels {
            return Err(FeError::Shape(format!("MLP built for {} channels, got {c}", self.channels)));
        }
        let p = self.opts.dropout;
        let xl = x.permute(&[0, 2, 3, 4, 1]);
        let h = self.lin1.forward(ctx, &xl)?.gelu();
        let gated = h.mul(&self.opts.gate.apply(&h));
        let gated = ctx.with_rng(|r| dropout(&gated, p, ctx.training, r))?;
        let out = self.lin2.forward(ctx, &gated)?;
        let out = ctx.with_rng(|r| dropout(&out, p, ctx.training, r))?;
        let x_out = out.permute(&[0, 4, 1, 2, 3]);
        let kernels = self.lowpass_kernels(ctx, &x_out)?;
        self.modulate(ctx, &x_out, &kernels)
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

    fn build(c: usize, seed: u64) -> (Fgmlp, ParamStore) {
        let mut b = Builder::new(seed);
        let m = Fgmlp::new(&mut b, "mlp", c, FgmlpOptions::default()).unwrap();
        (m, b.finish())
    }

    fn zero(store: &mut ParamStore, conv: &Conv) {
        *store.get_mut(conv.weight) = Tensor::zeros(store.get(conv.weight).shape());
        if let Some(b) = conv.bias {
            *store.get_mut(b) = Tensor::zeros(store.get(b).shape());
        }
    }

    #[test]
    fn zero_generator_gives_uniform_kernels() {
        let (m, mut store) = build(8, 0);
        zero(&mut store, &m.kg2);
        let ctx = Ctx::new(&store, None, false, 0);
        let k = m.lowpass_kernels(&ctx, &Var::constant(noise(&[2, 8, 4, 4, 4], 1))).unwrap();
        assert_eq!(k.shape(), &[2, 8, 27]);
        assert!(k.value().data().iter().all(|&v| (v - 1.0 / 27.0).abs() < 1e-15));
    }

    #[test]
    fn kernels_are_probability_vectors() {
        let (m, mut store) = build(8, 1);
        store.jitter(2, 1.0);
        let ctx = Ctx::new(&store, None, false, 0);
        let k = m.lowpass_kernels(&ctx, &Var::constant(noise(&[2, 8, 4, 4, 4], 3))).unwrap();
        for row in k.value().data().chunks(27) {
            assert!(row.iter().all(|&v| v >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_kernel_keeps_constants_in_the_interior() {
        let (m, _) = build(4, 0);
        let x = Var::constant(Tensor::full(&[1, 4, 5, 5, 5], 2.0));
        let k = Var::constant(Tensor::full(&[1, 4, 27], 1.0 / 27.0));
        let (low, high) = m.split(&x, &k).unwrap();
        // Zero padding lets the border leak; the interior keeps DC gain 1.
        assert!((low.value().at(&[0, 2, 2, 2, 2]) - 2.0).abs() < 1e-14);
        assert!(high.value().at(&[0, 1, 1, 3, 2]).abs() < 1e-14);
        let sum = low.add(&high);
        assert!(sum.value().max_abs_diff(x.value()) < 1e-15);
    }

    #[test]
    fn zero_modulator_halves() {
        let (m, mut store) = build(4, 2);
        zero(&mut store, &m.modulator);
        let ctx = Ctx::new(&store, None, false, 0);
        let x = noise(&[1, 4, 4, 4, 4], 4);
        let k = Var::constant(Tensor::full(&[1, 4, 27], 1.0 / 27.0));
        let y = m.modulate(&ctx, &Var::constant(x.clone()), &k).unwrap();
        assert!(y.value().max_abs_diff(&x.scale(0.5)) < 1e-14);
    }

    #[test]
    fn saturated_modulator_restores_input() {
        let (m, mut store) = build(4, 3);
        zero(&mut store, &m.modulator);
        *store.get_mut(m.modulator.bias.unwrap()) = Tensor::full(&[2], 20.0);
        let ctx = Ctx::new(&store, None, false, 0);
        let x = noise(&[1, 4, 4, 4, 4], 5);
        let k = m.lowpass_kernels(&ctx, &Var::constant(x.clone())).unwrap();
        let y = m.modulate(&ctx, &Var::constant(x.clone()), &k).unwrap();
        assert!(y.value().max_abs_diff(&x) < 1e-6);
    }

    #[test]
    fn selection_maps_in_unit_interval() {
        let (m, mut store) = build(4, 4);
        store.jitter(5, 0.3);
        let ctx = Ctx::new(&store, None, false, 0);
        let (w1, w2) = m.selection_maps(&ctx, &Var::constant(noise(&[1, 4, 4, 4, 4], 6))).unwrap();
        assert!(w1.value().data().iter().chain(w2.value().data()).all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn shape_and_zero_input() {
        let (m, store) = build(8, 5);
        let ctx = Ctx::new(&store, None, false, 0);
        let y = m.forward(&ctx, &Var::constant(noise(&[1, 8, 4, 4, 4], 7))).unwrap();
        assert_eq!(y.shape(), &[1, 8, 4, 4, 4]);
        let z = m.forward(&ctx, &Var::constant(Tensor::zeros(&[1, 8, 4, 4, 4]))).unwrap();
        assert_eq!(z.value().max_abs(), 0.0);
    }

    #[test]
    fn dense_generator_is_wider() {
        let mut b = Builder::new(0);
        let opts = FgmlpOptions { kernel_gen: KernelGen::Dense, ..Default::default() };
        let m = Fgmlp::new(&mut b, "mlp", 8, opts).unwrap();
        assert_eq!(b.store.get(m.kg2.weight).shape(), &[216, 2, 1, 1, 1]);
        let (g, store) = build(8, 0);
        assert_eq!(store.get(g.kg2.weight).shape(), &[216, 1, 1, 1, 1]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (m, mut store) = build(4, 6);
        store.jitter(7, 0.5);
        let (kg2, modw) = (m.kg2.weight, m.modulator.weight);
        let inputs = [noise(&[1, 4, 4, 4, 4], 8), store.get(kg2).clone(), store.get(modw).clone()];
        // A random readout; a plain sum hides the kernels behind their unit DC gain.
        let readout = Var::constant(noise(&[1, 4, 4, 4, 4], 9));
        let r = finite_difference_check(
            |v| {
                let ctx = Ctx::new(&store, None, false, 0);
                ctx.bind(kg2, v[1].clone());
                ctx.bind(modw, v[2].clone());
                Ok(m.forward(&ctx, &v[0])?.mul(&readout).sum_all())
            },
            &inputs,
            1e-5,
            1e-4,
            FdSampling::Random { count: 200, seed: 2 },
        )
        .unwrap();
        assert!(r.passed, "{r:?}");
    }
}
