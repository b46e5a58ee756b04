//! The four frequency blocks and the transformer block built from them.

pub mod fdsa;
pub mod fgmlp;
pub mod stems;
pub mod waff;

pub use fdsa::{band_descriptors, freq_attention_scores, Fdsa};
pub use fgmlp::{Fgmlp, FgmlpOptions, KernelGen};
pub use stems::{DecoderStem, EncoderStem, Fcsb};
pub use waff::Waff;

use crate::autodiff::Var;
use crate::error::Result;
use crate::layers::LayerNorm;
use crate::params::{Builder, Ctx};

/// `x + FDSA(LN(x))`, then `x + FGMLP(LN(x))`.
#[derive(Clone, Debug)]
pub struct TransformerBlock {
    pub ln1: LayerNorm,
    pub attn: Fdsa,
    pub ln2: LayerNorm,
    pub mlp: Fgmlp,
}

impl TransformerBlock {
    pub fn new(b: &mut Builder, name: &str, c: usize, cutoffs: (f64, f64), mlp: FgmlpOptions) -> Result<Self> {
        Ok(TransformerBlock {
            ln1: LayerNorm::new(b, &format!("{name}.ln1"), c)?,
            attn: Fdsa::new(b, &format!("{name}.attn"), c, cutoffs)?,
            ln2: LayerNorm::new(b, &format!("{name}.ln2"), c)?,
            mlp: Fgmlp::new(b, &format!("{name}.mlp"), c, mlp)?,
        })
    }

    pub fn forward(&self, ctx: &Ctx, x: &Var) -> Result<Var> {
        let x = x.add(&self.attn.forward(ctx, &self.ln1.forward_channels(ctx, x)?)?);
        Ok(x.add(&self.mlp.forward(ctx, &self.ln2.forward_channels(ctx, &x)?)?))
    }
}
