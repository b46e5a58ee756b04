//! Parameterized layers bound to a [`ParamStore`].

use crate::autodiff::Var;
use crate::error::{FeError, Result};
use crate::nn::{self, Activation, BnMode, ConvSpec, BN_EPS, LN_EPS};
use crate::params::{BufferId, Builder, Ctx, Init, ParamId};

#[derive(Clone, Debug)]
pub struct Conv {
    pub spec: ConvSpec,
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Conv {
    pub fn new(b: &mut Builder, name: &str, spec: ConvSpec, bias: bool) -> Result<Self> {
        spec.validate()?;
        let weight = b.param(
            &format!("{name}.weight"),
            &spec.weight_shape(),
            Init::KaimingNormal { fan_in: spec.fan_in() },
        )?;
        let bias = if bias {
            Some(b.param(&format!("{name}.bias"), &[spec.out_channels], Init::Zeros)?)
        } else {
            None
        };
        Ok(Conv { spec, weight, bias })
    }

    pub fn forward(&self, ctx: &Ctx, x: &Var) -> Result<Var> {
        let b = self.bias.map(|id| ctx.param(id));
        nn::conv3d(x, &self.spec, &ctx.param(self.weight), b.as_ref())
    }
}

/// `x·W + b` over the trailing axis; `W` is (Cin, Cout).
#[derive(Clone, Debug)]
pub struct Linear {
    pub cin: usize,
    pub cout: usize,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new(b: &mut Builder, name: &str, cin: usize, cout: usize) -> Result<Self> {
        Ok(Linear {
            cin,
            cout,
            weight: b.param(&format!("{name}.weight"), &[cin, cout], Init::TruncNormal { std: 0.02 })?,
            bias: b.param(&format!("{name}.bias"), &[cout], Init::Zeros)?,
        })
    }

    pub fn forward(&self, ctx: &Ctx, x: &Var) -> Result<Var> {
        if x.shape().last() != Some(&self.cin) {
            return Err(FeError::Shape(format!("linear expects trailing {}, got {:?}", self.cin, x.shape())));
        }
        Ok(x.linear(&ctx.param(self.weight), Some(&ctx.param(self.bias))))
    }

    /// Applies the map per voxel of a (B, C, D, H, W) map.
    pub fn forward_channels(&self, ctx: &Ctx, x: &Var) -> Result<Var> {
        x.value().dims5()?;
        Ok(self.forward(ctx, &x.permute(&[0, 2, 3, 4, 1]))?.permute(&[0, 4, 1, 2, 3]))
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(b: &mut Builder, name: &str, c: usize) -> Result<Self> {
        Ok(LayerNorm {
            gamma: b.param(&format!("{name}.weight"), &[c], Init::Ones)?,
            beta: b.param(&format!("{name}.bias"), &[c], Init::Zeros)?,
        })
    }

    /// Normalizes the channel axis of a (B, C, D, H, W) map.
    pub fn forward_channels(&self, ctx: &Ctx, x: &Var) -> Result<Var> {
        nn::layer_norm_channels(x, &ctx.param(self.gamma), &ctx.param(self.beta), LN_EPS)
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running: BufferId,
}

impl BatchNorm {
    pub fn new(b: &mut Builder, name: &str, c: usize) -> Result<Self> {
        Ok(BatchNorm {
            gamma: b.param(&format!("{name}.weight"), &[c], Init::Ones)?,
            beta: b.param(&format!("{name}.bias"), &[c], Init::Zeros)?,
            running: b.buffer(&format!("{name}.running"), c)?,
        })
    }

    pub fn forward(&self, ctx: &Ctx, x: &Var) -> Result<Var> {
        let mode = if ctx.training { BnMode::Train } else { BnMode::Eval(ctx.buffer(self.running)) };
        let (y, stats) = nn::batch_norm(x, &ctx.param(self.gamma), &ctx.param(self.beta), mode, BN_EPS)?;
        if let Some(s) = stats {
            ctx.record_bn(self.running, s);
        }
        Ok(y)
    }
}

/// Convolution → batch norm → activation.
#[derive(Clone, Debug)]
pub struct ConvBnAct {
    pub conv: Conv,
    pub bn: BatchNorm,
    pub act: Activation,
}

impl ConvBnAct {
    pub fn new(b: &mut Builder, name: &str, spec: ConvSpec, act: Activation) -> Result<Self> {
        Ok(ConvBnAct {
            conv: Conv::new(b, &format!("{name}.conv"), spec, true)?,
            bn: BatchNorm::new(b, &format!("{name}.bn"), spec.out_channels)?,
            act,
        })
    }

    pub fn forward(&self, ctx: &Ctx, x: &Var) -> Result<Var> {
        let y = self.bn.forward(ctx, &self.conv.forward(ctx, x)?)?;
        Ok(self.act.apply(&y))
    }
}
