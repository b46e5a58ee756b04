//! Activations, spatial softmax, pooling, resampling and dropout.

use rand::Rng;

use crate::autodiff::Var;
use crate::error::{FeError, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Gelu,
    Relu,
    Relu6,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: &Var) -> Var {
        match self {
            Activation::Gelu => x.gelu(),
            Activation::Relu => x.relu(),
            Activation::Relu6 => x.relu6(),
            Activation::Sigmoid => x.sigmoid(),
        }
    }
}

/// Softmax over the flattened D·H·W axis, separately per (batch, channel).
pub fn softmax_spatial(x: &Var) -> Result<Var> {
    let [b, c, d, h, w] = x.value().dims5()?;
    Ok(x.reshape(&[b, c, d * h * w]).softmax_axis(2).reshape(&[b, c, d, h, w]))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pool {
    /// (B, C, D, H, W) → (B, C, 1, 1, 1)
    GlobalAvgSpatial,
    /// (B, C, D, H, W) → (B, 1, D, H, W)
    AvgOverChannels,
    MaxOverChannels,
}

pub fn pool(kind: Pool, x: &Var) -> Result<Var> {
    x.value().dims5()?;
    Ok(match kind {
        Pool::GlobalAvgSpatial => x.mean_axes(&[2, 3, 4]),
        Pool::AvgOverChannels => x.mean_axes(&[1]),
        Pool::MaxOverChannels => x.max_axis(1),
    })
}

/// Source index pair and weight of the second one for linear resampling
/// with half-pixel centres.
fn linear_taps(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(n_in - 1);
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

/// Trilinear resize of a (B, C, D, H, W) map, half-pixel centres
/// (`align_corners = false`), edge-clamped.
pub fn upsample_trilinear(x: &Var, out: [usize; 3]) -> Result<Var> {
    let [b, c, d, h, w] = x.value().dims5()?;
    if out.iter().any(|&e| e == 0) {
        return Err(FeError::Shape(format!("resize to {:?}", out)));
    }
    let taps = [linear_taps(d, out[0]), linear_taps(h, out[1]), linear_taps(w, out[2])];
    let (vin, vout) = (d * h * w, out.iter().product::<usize>());
    // Visits (output offset, input offset, weight) for the 8 corners.
    let visit = move |mut f: Box<dyn FnMut(usize, usize, f64) + '_>| {
        for s in 0..b * c {
            for (z, &(z0, z1, tz)) in taps[0].iter().enumerate() {
                for (y, &(y0, y1, ty)) in taps[1].iter().enumerate() {
                    for (xx, &(x0, x1, tx)) in taps[2].iter().enumerate() {
                        let o = s * vout + (z * out[1] + y) * out[2] + xx;
                        for (iz, wz) in [(z0, 1.0 - tz), (z1, tz)] {
                            for (iy, wy) in [(y0, 1.0 - ty), (y1, ty)] {
                                for (ix, wx) in [(x0, 1.0 - tx), (x1, tx)] {
                                    let wgt = wz * wy * wx;
                                    if wgt != 0.0 {
                                        f(o, s * vin + (iz * h + iy) * w + ix, wgt);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    };
    let src = x.value().data();
    let mut y = vec![0.0; b * c * vout];
    visit(Box::new(|o, i, wgt| y[o] += wgt * src[i]));
    let in_shape = x.shape().to_vec();
    Ok(Var::from_op(Tensor::from_parts(vec![b, c, out[0], out[1], out[2]], y), &[x], move |g, _| {
        let gd = g.data();
        let mut gx = vec![0.0; b * c * vin];
        visit(Box::new(|o, i, wgt| gx[i] += wgt * gd[o]));
        vec![Some(Tensor::from_parts(in_shape, gx))]
    }))
}

/// Inverted dropout: zeroes each value with probability `p` and scales the
/// survivors by 1/(1−p). Identity when `p == 0` or outside training.
pub fn dropout<R: Rng>(x: &Var, p: f64, training: bool, rng: &mut R) -> Result<Var> {
    if !(0.0..1.0).contains(&p) {
        return Err(FeError::Invalid(format!("dropout probability {p} outside [0, 1)")));
    }
    if !training || p == 0.0 {
        return Ok(x.clone());
    }
    let keep = 1.0 / (1.0 - p);
    let mask = Tensor::from_fn(x.shape(), |_| if rng.gen::<f64>() < p { 0.0 } else { keep });
    Ok(x.mul(&Var::constant(mask)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{finite_difference_check, FdSampling};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn noise(shape: &[usize], seed: u64) -> Tensor {
        let mut s = seed;
        Tensor::from_fn(shape, |_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    fn scalar_act(a: Activation, v: f64) -> f64 {
        a.apply(&Var::constant(Tensor::scalar(v))).value().data()[0]
    }

    #[test]
    fn activation_values() {
        assert_eq!(scalar_act(Activation::Relu6, 7.0), 6.0);
        assert_eq!(scalar_act(Activation::Relu6, -1.0), 0.0);
        assert_eq!(scalar_act(Activation::Sigmoid, 0.0), 0.5);
        assert_eq!(scalar_act(Activation::Gelu, 0.0), 0.0);
        assert!((scalar_act(Activation::Gelu, 10.0) - 10.0).abs() < 1e-6);
        assert_eq!(scalar_act(Activation::Relu, -2.0), 0.0);
    }

    #[test]
    fn activation_gradients() {
        for a in [Activation::Gelu, Activation::Relu, Activation::Relu6, Activation::Sigmoid] {
            // Keep samples away from the ReLU kinks at 0 and 6.
            let x = Tensor::new(&[6], vec![-2.3, -0.7, 0.4, 1.9, 5.2, 7.1]).unwrap();
            let r = finite_difference_check(|v| Ok(a.apply(&v[0]).sum_all()), &[x], 1e-6, 1e-4, FdSampling::All)
                .unwrap();
            assert!(r.passed, "{a:?}: {r:?}");
        }
    }

    #[test]
    fn spatial_softmax_properties() {
        let u = softmax_spatial(&Var::constant(Tensor::full(&[1, 2, 2, 2, 2], 3.0))).unwrap();
        assert!(u.value().data().iter().all(|&v| (v - 0.125).abs() < 1e-15));
        let x = noise(&[2, 3, 2, 3, 2], 1);
        let s = softmax_spatial(&Var::constant(x.clone())).unwrap();
        for chunk in s.value().data().chunks(12) {
            assert!((chunk.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let shifted = softmax_spatial(&Var::constant(x.map(|v| v + 40.0))).unwrap();
        assert!(shifted.value().max_abs_diff(s.value()) < 1e-12);
        let r = finite_difference_check(
            |v| Ok(softmax_spatial(&v[0])?.mul(&v[0]).sum_all()),
            &[x],
            1e-5,
            1e-4,
            FdSampling::All,
        )
        .unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn pools() {
        let k = Var::constant(Tensor::full(&[1, 3, 2, 2, 2], 1.5));
        for p in [Pool::GlobalAvgSpatial, Pool::AvgOverChannels, Pool::MaxOverChannels] {
            assert!(pool(p, &k).unwrap().value().data().iter().all(|&v| v == 1.5));
        }
        let x = Var::constant(Tensor::new(&[1, 3, 1, 1, 1], vec![1.0, 5.0, 3.0]).unwrap());
        assert_eq!(pool(Pool::MaxOverChannels, &x).unwrap().value().data(), &[5.0]);
        assert_eq!(pool(Pool::AvgOverChannels, &x).unwrap().value().data(), &[3.0]);
        let mut delta = Tensor::zeros(&[1, 1, 2, 2, 2]);
        delta.set(&[0, 0, 1, 0, 1], 8.0);
        let g = pool(Pool::GlobalAvgSpatial, &Var::constant(delta)).unwrap();
        assert_eq!(g.shape(), &[1, 1, 1, 1, 1]);
        assert_eq!(g.value().data(), &[1.0]);
    }

    #[test]
    fn pool_gradients() {
        // Distinct values, so no ties for the max.
        let x = Tensor::from_fn(&[1, 3, 2, 1, 2], |i| (i[1] * 7 + i[2] * 3 + i[4]) as f64 * 0.37 % 2.1);
        for p in [Pool::GlobalAvgSpatial, Pool::AvgOverChannels, Pool::MaxOverChannels] {
            let r = finite_difference_check(
                |v| Ok(pool(p, &v[0])?.sigmoid().sum_all()),
                &[x.clone()],
                1e-6,
                1e-4,
                FdSampling::All,
            )
            .unwrap();
            assert!(r.passed, "{p:?}: {r:?}");
        }
    }

    #[test]
    fn trilinear_oracle_1d() {
        // Along W only: [0, 1] → 4 points at half-pixel centres.
        // src = (o + .5)/2 − .5 → [-.25→0, .25, .75, 1.25→clamp] → [0, .25, .75, 1].
        let x = Var::constant(Tensor::new(&[1, 1, 1, 1, 2], vec![0.0, 1.0]).unwrap());
        let y = upsample_trilinear(&x, [1, 1, 4]).unwrap();
        assert_eq!(y.value().data(), &[0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn trilinear_preserves_constants_and_identity() {
        let c = Var::constant(Tensor::full(&[1, 2, 2, 3, 2], -0.8));
        let y = upsample_trilinear(&c, [4, 6, 4]).unwrap();
        assert!(y.value().data().iter().all(|&v| (v + 0.8).abs() < 1e-15));
        let x = noise(&[1, 2, 2, 3, 2], 3);
        let same = upsample_trilinear(&Var::constant(x.clone()), [2, 3, 2]).unwrap();
        assert!(same.value().max_abs_diff(&x) < 1e-15);
        let r = finite_difference_check(
            |v| Ok(upsample_trilinear(&v[0], [4, 6, 4])?.gelu().sum_all()),
            &[x],
            1e-5,
            1e-4,
            FdSampling::All,
        )
        .unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn dropout_behaviour() {
        let x = Var::constant(Tensor::ones(&[1000]));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(dropout(&x, 0.3, false, &mut rng).unwrap().value(), x.value());
        let y = dropout(&x, 0.5, true, &mut rng).unwrap();
        assert!(y.value().data().iter().all(|&v| v == 0.0 || v == 2.0));
        let kept = y.value().data().iter().filter(|&&v| v > 0.0).count();
        assert!((400..600).contains(&kept));
        assert!(dropout(&x, 1.0, true, &mut rng).is_err());
    }
}
