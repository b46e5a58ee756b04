//! Layer and batch normalization.

use crate::autodiff::Var;
use crate::error::{FeError, Result};
use crate::tensor::Tensor;

pub const LN_EPS: f64 = 1e-6;
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Normalizes `n_groups` groups of `len` values, where value `j` of group `i`
/// sits at `idx(i, j)`. Returns (x̂, 1/σ per group).
fn normalize(
    x: &[f64],
    n_groups: usize,
    len: usize,
    eps: f64,
    idx: impl Fn(usize, usize) -> usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut xhat = vec![0.0; x.len()];
    let mut inv_std = vec![0.0; n_groups];
    let mut means = vec![0.0; n_groups];
    let mut vars = vec![0.0; n_groups];
    for i in 0..n_groups {
        let mean = (0..len).map(|j| x[idx(i, j)]).sum::<f64>() / len as f64;
        let var = (0..len).map(|j| (x[idx(i, j)] - mean).powi(2)).sum::<f64>() / len as f64;
        let is = 1.0 / (var + eps).sqrt();
        for j in 0..len {
            let o = idx(i, j);
            xhat[o] = (x[o] - mean) * is;
        }
        inv_std[i] = is;
        means[i] = mean;
        vars[i] = var;
    }
    (xhat, inv_std, means, vars)
}

/// dx = (1/σ)(dx̂ − mean(dx̂) − x̂·mean(dx̂·x̂)) within each group.
fn normalize_backward(
    dxhat: &[f64],
    xhat: &[f64],
    inv_std: &[f64],
    len: usize,
    idx: impl Fn(usize, usize) -> usize,
) -> Vec<f64> {
    let mut dx = vec![0.0; dxhat.len()];
    for (i, &is) in inv_std.iter().enumerate() {
        let (mut m1, mut m2) = (0.0, 0.0);
        for j in 0..len {
            let o = idx(i, j);
            m1 += dxhat[o];
            m2 += dxhat[o] * xhat[o];
        }
        m1 /= len as f64;
        m2 /= len as f64;
        for j in 0..len {
            let o = idx(i, j);
            dx[o] = is * (dxhat[o] - m1 - xhat[o] * m2);
        }
    }
    dx
}

/// Layer norm over the trailing (channel) axis with affine `gamma`, `beta` of
/// shape (C). Population variance.
pub fn layer_norm(x: &Var, gamma: &Var, beta: &Var, eps: f64) -> Result<Var> {
    let shape = x.shape().to_vec();
    let c = *shape.last().ok_or_else(|| FeError::Shape("layer norm of a scalar".into()))?;
    if c == 0 || gamma.shape() != [c] || beta.shape() != [c] {
        return Err(FeError::Shape(format!(
            "layer norm over {c} channels with γ {:?}, β {:?}",
            gamma.shape(),
            beta.shape()
        )));
    }
    let rows = x.numel() / c;
    let idx = move |i: usize, j: usize| i * c + j;
    let (xhat, inv_std, _, _) = normalize(x.value().data(), rows, c, eps, idx);
    let (g, b) = (gamma.value().data(), beta.value().data());
    let y: Vec<f64> = xhat.iter().enumerate().map(|(o, v)| v * g[o % c] + b[o % c]).collect();
    let gv = gamma.shared_value();
    Ok(Var::from_op(Tensor::from_parts(shape.clone(), y), &[x, gamma, beta], move |gy, need| {
        let gd = gy.data();
        let gamma = gv.data();
        let gx = need[0].then(|| {
            let dxhat: Vec<f64> = gd.iter().enumerate().map(|(o, v)| v * gamma[o % c]).collect();
            Tensor::from_parts(shape, normalize_backward(&dxhat, &xhat, &inv_std, c, idx))
        });
        let ggamma = need[1].then(|| {
            let mut acc = vec![0.0; c];
            for (o, v) in gd.iter().enumerate() {
                acc[o % c] += v * xhat[o];
            }
            Tensor::from_parts(vec![c], acc)
        });
        let gbeta = need[2].then(|| {
            let mut acc = vec![0.0; c];
            for (o, v) in gd.iter().enumerate() {
                acc[o % c] += v;
            }
            Tensor::from_parts(vec![c], acc)
        });
        vec![gx, ggamma, gbeta]
    }))
}

/// Layer norm over the channel axis of a (B, C, D, H, W) map.
pub fn layer_norm_channels(x: &Var, gamma: &Var, beta: &Var, eps: f64) -> Result<Var> {
    x.value().dims5()?;
    let y = layer_norm(&x.permute(&[0, 2, 3, 4, 1]), gamma, beta, eps)?;
    Ok(y.permute(&[0, 4, 1, 2, 3]))
}

/// Running statistics of a batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BnRunning {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    /// Number of training batches folded in; 0 means "never populated".
    pub tracked: u64,
}

impl BnRunning {
    pub fn new(c: usize) -> Self {
        BnRunning { mean: vec![0.0; c], var: vec![1.0; c], tracked: 0 }
    }

    /// `r ← (1 − m)·r + m·batch`, with the unbiased batch variance.
    pub fn update(&mut self, stats: &BnBatchStats, momentum: f64) {
        for (r, b) in self.mean.iter_mut().zip(&stats.mean) {
            *r = (1.0 - momentum) * *r + momentum * b;
        }
        for (r, b) in self.var.iter_mut().zip(&stats.var_unbiased) {
            *r = (1.0 - momentum) * *r + momentum * b;
        }
        self.tracked += 1;
    }
}

/// Per-channel statistics of one training batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BnBatchStats {
    pub mean: Vec<f64>,
    pub var_unbiased: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub enum BnMode<'a> {
    Train,
    Eval(&'a BnRunning),
}

/// Batch norm of a (B, C, D, H, W) map. Training mode normalizes with batch
/// statistics and returns them so the caller can update running stats.
pub fn batch_norm(
    x: &Var,
    gamma: &Var,
    beta: &Var,
    mode: BnMode,
    eps: f64,
) -> Result<(Var, Option<BnBatchStats>)> {
    let [b, c, d, h, w] = x.value().dims5()?;
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(FeError::Shape(format!("batch norm γ/β must be [{c}]")));
    }
    let vol = d * h * w;
    match mode {
        BnMode::Eval(run) => {
            if run.tracked == 0 {
                return Err(FeError::Invalid("batch norm in eval mode without running statistics".into()));
            }
            if run.mean.len() != c {
                return Err(FeError::Shape(format!("running stats for {} channels, input has {c}", run.mean.len())));
            }
            let shift: Vec<f64> = (0..c).map(|i| -run.mean[i] / (run.var[i] + eps).sqrt()).collect();
            let shift_v = Var::constant(Tensor::from_parts(vec![1, c, 1, 1, 1], shift));
            // y = γ·(x − μ)/σ + β, keeping γ and β differentiable.
            let inv: Vec<f64> = (0..c).map(|i| 1.0 / (run.var[i] + eps).sqrt()).collect();
            let xn = x
                .mul(&Var::constant(Tensor::from_parts(vec![1, c, 1, 1, 1], inv)))
                .add(&shift_v);
            let y = xn.mul(&gamma.reshape(&[1, c, 1, 1, 1])).add(&beta.reshape(&[1, c, 1, 1, 1]));
            Ok((y, None))
        }
        BnMode::Train => {
            let m = b * vol;
            if m < 2 {
                return Err(FeError::Invalid(format!("batch norm training needs >= 2 values per channel, got {m}")));
            }
            let idx = move |ch: usize, j: usize| ((j / vol) * c + ch) * vol + j % vol;
            let (xhat, inv_std, means, vars) = normalize(x.value().data(), c, m, eps, idx);
            let stats = BnBatchStats {
                mean: means,
                var_unbiased: vars.iter().map(|v| v * m as f64 / (m - 1) as f64).collect(),
            };
            let (g, bt) = (gamma.value().data(), beta.value().data());
            let ch_of = move |o: usize| (o / vol) % c;
            let y: Vec<f64> = xhat.iter().enumerate().map(|(o, v)| v * g[ch_of(o)] + bt[ch_of(o)]).collect();
            let gv = gamma.shared_value();
            let shape = x.shape().to_vec();
            let out = Var::from_op(Tensor::from_parts(shape.clone(), y), &[x, gamma, beta], move |gy, need| {
                let gd = gy.data();
                let gamma = gv.data();
                let gx = need[0].then(|| {
                    let dxhat: Vec<f64> = gd.iter().enumerate().map(|(o, v)| v * gamma[ch_of(o)]).collect();
                    Tensor::from_parts(shape, normalize_backward(&dxhat, &xhat, &inv_std, m, idx))
                });
                let per_channel = |f: &dyn Fn(usize) -> f64| {
                    let mut acc = vec![0.0; c];
                    for o in 0..gd.len() {
                        acc[ch_of(o)] += f(o);
                    }
                    Tensor::from_parts(vec![c], acc)
                };
                let ggamma = need[1].then(|| per_channel(&|o| gd[o] * xhat[o]));
                let gbeta = need[2].then(|| per_channel(&|o| gd[o]));
                vec![gx, ggamma, gbeta]
            });
            Ok((out, Some(stats)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{finite_difference_check, FdSampling};

    fn noise(shape: &[usize], seed: u64) -> Tensor {
        let mut s = seed;
        Tensor::from_fn(shape, |_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    fn c(t: Tensor) -> Var {
        Var::constant(t)
    }

    #[test]
    fn layer_norm_hand_values() {
        let y = layer_norm(&c(Tensor::new(&[1, 2], vec![1.0, 3.0]).unwrap()), &c(Tensor::ones(&[2])), &c(Tensor::zeros(&[2])), LN_EPS)
            .unwrap();
        assert!((y.value().data()[0] + 1.0).abs() < 1e-5);
        assert!((y.value().data()[1] - 1.0).abs() < 1e-5);
        let flat = layer_norm(&c(Tensor::full(&[3, 4], 2.0)), &c(Tensor::ones(&[4])), &c(Tensor::zeros(&[4])), LN_EPS).unwrap();
        assert!(flat.value().max_abs() < 1e-12);
    }

    #[test]
    fn layer_norm_beta_shift() {
        let x = noise(&[5, 3], 1);
        let g = noise(&[3], 2);
        let bshift = Tensor::new(&[3], vec![0.5, -1.0, 2.0]).unwrap();
        let y0 = layer_norm(&c(x.clone()), &c(g.clone()), &c(Tensor::zeros(&[3])), LN_EPS).unwrap();
        let y1 = layer_norm(&c(x), &c(g), &c(bshift.clone()), LN_EPS).unwrap();
        let d = Tensor::from_fn(&[5, 3], |i| y1.value().at(i) - y0.value().at(i) - bshift.data()[i[1]]);
        assert!(d.max_abs() < 1e-12);
    }

    #[test]
    fn layer_norm_gradients() {
        let r = finite_difference_check(
            |v| Ok(layer_norm(&v[0], &v[1], &v[2], LN_EPS)?.sigmoid().sum_all()),
            &[noise(&[4, 5], 3), noise(&[5], 4), noise(&[5], 5)],
            1e-5,
            1e-4,
            FdSampling::All,
        )
        .unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn channel_layer_norm_normalizes_channels() {
        let x = noise(&[1, 4, 2, 2, 2], 6);
        let y = layer_norm_channels(&c(x), &c(Tensor::ones(&[4])), &c(Tensor::zeros(&[4])), LN_EPS).unwrap();
        for v in 0..8 {
            let s: f64 = (0..4).map(|ch| y.value().data()[ch * 8 + v]).sum();
            assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn batch_norm_hand_values() {
        let x = Tensor::new(&[2, 1, 1, 1, 1], vec![0.0, 2.0]).unwrap();
        let (y, stats) = batch_norm(&c(x), &c(Tensor::ones(&[1])), &c(Tensor::zeros(&[1])), BnMode::Train, BN_EPS).unwrap();
        assert!((y.value().data()[0] + 1.0).abs() < 1e-5);
        assert!((y.value().data()[1] - 1.0).abs() < 1e-5);
        let stats = stats.unwrap();
        assert_eq!(stats.mean, vec![1.0]);
        assert_eq!(stats.var_unbiased, vec![2.0]);
        let mut run = BnRunning::new(1);
        run.update(&stats, BN_MOMENTUM);
        assert!((run.mean[0] - 0.1).abs() < 1e-15);
        assert!((run.var[0] - 1.1).abs() < 1e-15);
    }

    #[test]
    fn batch_norm_identity_and_zero_gamma() {
        // Per channel: values ±1, already zero-mean unit-variance.
        let x = Tensor::from_fn(&[1, 2, 2, 2, 2], |i| if (i[2] + i[3] + i[4]) % 2 == 0 { 1.0 } else { -1.0 });
        let (y, _) = batch_norm(&c(x.clone()), &c(Tensor::ones(&[2])), &c(Tensor::zeros(&[2])), BnMode::Train, BN_EPS).unwrap();
        assert!(y.value().max_abs_diff(&x) < 1e-5);
        let beta = Tensor::new(&[2], vec![0.3, -0.7]).unwrap();
        let (y, _) = batch_norm(&c(noise(&[2, 2, 2, 2, 2], 7)), &c(Tensor::zeros(&[2])), &c(beta), BnMode::Train, BN_EPS).unwrap();
        for (o, v) in y.value().data().iter().enumerate() {
            assert_eq!(*v, if (o / 8) % 2 == 0 { 0.3 } else { -0.7 });
        }
    }

    #[test]
    fn batch_norm_eval_needs_stats() {
        let x = c(noise(&[1, 2, 2, 2, 2], 8));
        let run = BnRunning::new(2);
        assert!(batch_norm(&x, &c(Tensor::ones(&[2])), &c(Tensor::zeros(&[2])), BnMode::Eval(&run), BN_EPS).is_err());
        let run = BnRunning { mean: vec![1.0, -1.0], var: vec![4.0, 1.0], tracked: 3 };
        let (y, stats) = batch_norm(&x, &c(Tensor::ones(&[2])), &c(Tensor::zeros(&[2])), BnMode::Eval(&run), 0.0).unwrap();
        assert!(stats.is_none());
        let v = x.value().at(&[0, 0, 1, 0, 1]);
        assert!((y.value().at(&[0, 0, 1, 0, 1]) - (v - 1.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn batch_norm_gradients() {
        let r = finite_difference_check(
            |v| {
                let (y, _) = batch_norm(&v[0], &v[1], &v[2], BnMode::Train, BN_EPS)?;
                Ok(y.gelu().mul(&v[0]).sum_all())
            },
            &[noise(&[2, 3, 2, 1, 2], 9), noise(&[3], 10), noise(&[3], 11)],
            1e-5,
            1e-4,
            FdSampling::All,
        )
        .unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn batch_norm_rejects_single_value() {
        let x = c(Tensor::zeros(&[1, 1, 1, 1, 1]));
        assert!(batch_norm(&x, &c(Tensor::ones(&[1])), &c(Tensor::zeros(&[1])), BnMode::Train, BN_EPS).is_err());
    }
}
