//! Segmentation objective: voxel cross-entropy plus soft Dice.

use crate::autodiff::Var;
use crate::error::{FeError, Result};
use crate::tensor::Tensor;

pub const DICE_EPS: f64 = 1e-5;

/// One-hot (B, K, D, H, W) encoding of flat labels laid out as (B, D, H, W).
pub fn one_hot(labels: &[usize], shape: [usize; 5]) -> Result<Tensor> {
    let [b, k, d, h, w] = shape;
    let vol = d * h * w;
    if labels.len() != b * vol {
        return Err(FeError::Shape(format!("{} labels for {} voxels", labels.len(), b * vol)));
    }
    let mut t = Tensor::zeros(&shape);
    let td = t.data_mut();
    for (i, &l) in labels.iter().enumerate() {
        if l >= k {
            return Err(FeError::Invalid(format!("label {l} at voxel {i} is outside [0, {k})")));
        }
        td[((i / vol) * k + l) * vol + i % vol] = 1.0;
    }
    Ok(t)
}

/// (cross-entropy, dice loss) as separate scalars.
pub fn seg_loss_parts(logits: &Var, labels: &[usize]) -> Result<(Var, Var)> {
    let dims = logits.value().dims5()?;
    let g = Var::constant(one_hot(labels, dims)?);
    let voxels = (dims[0] * dims[2] * dims[3] * dims[4]) as f64;
    let ce = logits.log_softmax_axis(1).mul(&g).sum_all().scale(-1.0 / voxels);
    let p = logits.softmax_axis(1);
    let axes = [0, 2, 3, 4];
    let inter = p.mul(&g).sum_axes(&axes).scale(2.0).add_scalar(DICE_EPS);
    let denom = p.sum_axes(&axes).add(&g.sum_axes(&axes)).add_scalar(DICE_EPS);
    let dice = inter.div(&denom).mean_all().neg().add_scalar(1.0);
    Ok((ce, dice))
}

/// `CE + (1 − mean_k dice_k)`, sums running over batch and space.
pub fn seg_loss(logits: &Var, labels: &[usize]) -> Result<Var> {
    let (ce, dice) = seg_loss_parts(logits, labels)?;
    Ok(ce.add(&dice))
}
