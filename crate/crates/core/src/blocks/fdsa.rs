//! Frequency-enhanced dynamic self-attention.
//!
//! Depthwise 7³ conv → per-voxel Q/K/V projections → attention score as a
//! spectral product (a circular convolution of Q and K) → spatial softmax
//! gating of V → channel recalibration from low/mid/high band magnitudes.

use crate::autodiff::Var;
use crate::error::{FeError, Result};
use crate::layers::{Conv, Linear};
use crate::nn::{softmax_spatial, ConvSpec};
use crate::params::{Builder, Ctx};
use crate::spectral::{band_masks, masks::validate_cutoffs};

/// Relative imaginary residue above which a real-valued inverse transform
/// is treated as a convention bug.
pub const RESIDUE_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct Fdsa {
    pub channels: usize,
    pub cutoffs: (f64, f64),
    pub dw: Conv,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub fc1: Linear,
    pub fc2: Linear,
}

/// `ifft3(fft3(q) ⊙ fft3(k))`, i.e. the per-(b, c) circular convolution of
/// `q` and `k`. Fails when the inverse leaves an imaginary residue.
pub fn freq_attention_scores(q: &Var, k: &Var) -> Result<Var> {
    if q.shape() != k.shape() {
        return Err(FeError::Shape(format!("Q {:?} vs K {:?}", q.shape(), k.shape())));
    }
    let y = q.fft3()?.complex_mul(&k.fft3()?)?.ifft3_complex()?;
    let re = y.complex_real();
    let im = y.complex_imag();
    let residue = im.value().max_abs();
    let rel = residue / re.value().max_abs().max(1e-300);
    if residue > 0.0 && rel > RESIDUE_TOL {
        return Err(FeError::ImaginaryResidue { residue: rel, tol: RESIDUE_TOL });
    }
    Ok(re)
}

/// Band-mean spectral magnitudes `[z_low; z_mid; z_high]` as (B, 3C).
/// An empty band contributes zeros.
pub fn band_descriptors(x: &Var, cutoffs: (f64, f64)) -> Result<Var> {
    let [b, c, d, h, w] = x.value().dims5()?;
    let masks = band_masks([d, h, w], cutoffs)?;
    let mag = x.fft3()?.complex_abs()?;
    let parts: Vec<Var> = masks
        .bands()
        .iter()
        .map(|m| mag.masked_spatial_mean(m))
        .collect::<Result<_>>()?;
    Ok(Var::concat(&parts, 1).reshape(&[b, 3 * c]))
}

impl Fdsa {
    pub fn new(b: &mut Builder, name: &str, channels: usize, cutoffs: (f64, f64)) -> Result<Self> {
        validate_cutoffs(cutoffs)?;
        if (3 * channels) % 4 != 0 {
            return Err(FeError::Config(format!("attention width {channels}: 3C must be divisible by 4")));
        }
        let c = channels;
        let r = 3 * c / 4;
        Ok(Fdsa {
            channels,
            cutoffs,
            dw: Conv::new(b, &format!("{name}.dw"), ConvSpec::depthwise(c, 7), true)?,
            q: Linear::new(b, &format!("{name}.q"), c, c)?,
            k: Linear::new(b, &format!("{name}.k"), c, c)?,
            v: Linear::new(b, &format!("{name}.v"), c, c)?,
            fc1: Linear::new(b, &format!("{name}.fc1"), 3 * c, r)?,
            fc2: Linear::new(b, &format!("{name}.fc2"), r, c)?,
        })
    }

    /// Channel weights `w ∈ (0, 1)^(B×C)` from the band descriptors.
    pub fn recalibration_weights(&self, ctx: &Ctx, x: &Var) -> Result<Var> {
        let z = band_descriptors(x, self.cutoffs)?;
        Ok(self.fc2.forward(ctx, &self.fc1.forward(ctx, &z)?.relu())?.sigmoid())
    }

    pub fn recalibrate(&self, ctx: &Ctx, x: &Var) -> Result<Var> {
        let [b, c, ..] = x.value().dims5()?;
        let w = self.recalibration_weights(ctx, x)?;
        Ok(x.mul(&w.reshape(&[b, c, 1, 1, 1])))
    }

    pub fn forward(&self, ctx: &Ctx, x: &Var) -> Result<Var> {
        let [_, c, ..] = x.value().dims5()?;
        if c != self.channels {
            return Err(FeError::Shape(format!("attention built for {} channels, got {c}", self.channels)));
        }
        let xs = self.dw.forward(ctx, x)?;
        let xl = xs.permute(&[0, 2, 3, 4, 1]);
        let back = |v: Var| v.permute(&[0, 4, 1, 2, 3]);
        let q = back(self.q.forward(ctx, &xl)?);
        let k = back(self.k.forward(ctx, &xl)?);
        let v = back(self.v.forward(ctx, &xl)?);
        let scores = freq_attention_scores(&q, &k)?;
        let attended = softmax_spatial(&scores)?.mul(&v);
        self.recalibrate(ctx, &attended)
    }
}
