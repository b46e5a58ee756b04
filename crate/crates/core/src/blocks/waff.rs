//! Wavelet-guided adaptive fusion of a skip connection with upsampled
//! decoder features, one selection per Haar subband.

use crate::autodiff::Var;
use crate::error::{FeError, Result};
use crate::layers::Conv;
use crate::nn::{pool, ConvSpec, Pool};
use crate::params::{Builder, Ctx};

#[derive(Clone, Debug)]
pub struct Waff {
    /// Depthwise 7³ over the (average, max) descriptor pair, shared by all
    /// 8 subbands unless built per band.
    pub fuse: Vec<Conv>,
}

impl Waff {
    pub fn new(b: &mut Builder, name: &str, per_subband: bool) -> Result<Self> {
        let fuse = if per_subband {
            (0..8)
                .map(|k| Conv::new(b, &format!("{name}.fuse{k}"), ConvSpec::depthwise(2, 7), true))
                .collect::<Result<_>>()?
        } else {
            vec![Conv::new(b, &format!("{name}.fuse"), ConvSpec::depthwise(2, 7), true)?]
        };
        Ok(Waff { fuse })
    }

    /// `w1⊙a + w2⊙b` with (w1, w2) from pooling the 2C stacked channels.
    pub fn fuse_pair(&self, ctx: &Ctx, conv: &Conv, a: &Var, b: &Var) -> Result<Var> {
        if a.shape() != b.shape() {
            return Err(FeError::Shape(format!("fusing {:?} with {:?}", a.shape(), b.shape())));
        }
        let both = Var::concat(&[a.clone(), b.clone()], 1);
        let desc = Var::concat(&[pool(Pool::AvgOverChannels, &both)?, pool(Pool::MaxOverChannels, &both)?], 1);
        let w = conv.forward(ctx, &desc)?.sigmoid();
        Ok(w.narrow(1, 0, 1).mul(a).add(&w.narrow(1, 1, 1).mul(b)))
    }

    /// Fuses `skip` (encoder) with `up` (decoder) in the Haar domain.
    pub fn forward(&self, ctx: &Ctx, skip: &Var, up: &Var) -> Result<Var> {
        if skip.shape() != up.shape() {
            return Err(FeError::Shape(format!("skip {:?} vs upsampled {:?}", skip.shape(), up.shape())));
        }
        let [b, c, d, h, w] = skip.value().dims5()?;
        let (sa, sb) = (skip.dwt3()?, up.dwt3()?);
        let half = [d / 2, h / 2, w / 2];
        let fused = if self.fuse.len() == 1 {
            // All subbands share the selection conv, so fold them into the batch.
            let fold = |v: &Var| v.reshape(&[8 * b, c, half[0], half[1], half[2]]);
            self.fuse_pair(ctx, &self.fuse[0], &fold(&sa), &fold(&sb))?
                .reshape(&[8, b, c, half[0], half[1], half[2]])
        } else {
            let bands: Vec<Var> = (0..8)
                .map(|k| self.fuse_pair(ctx, &self.fuse[k], &sa.select0(k), &sb.select0(k)))
                .collect::<Result<_>>()?;
            Var::stack0(&bands)
        };
        fused.idwt3()
    }
}
