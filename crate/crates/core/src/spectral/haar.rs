//! Single-level orthonormal 3-D Haar analysis and synthesis.
//!
//! Along each axis the pair (a, b) at positions (2i, 2i+1) maps to
//! L = (a + b)/√2 and H = (a − b)/√2. Subband keys list the axes in
//! (D, H, W) order, so `LLH` is high-pass along W only.

use std::sync::atomic::{AtomicBool, Ordering};

use crate::error::{FeError, Result};
use crate::tensor::Tensor;

pub const SUBBAND_KEYS: [&str; 8] = ["LLL", "LLH", "LHL", "LHH", "HLL", "HLH", "HHL", "HHH"];

static SABOTAGE_SYNTHESIS_SIGN: AtomicBool = AtomicBool::new(false);

/// Negative-control hook: flips the detail sign used by synthesis so the
/// round trip breaks. Only the verification command uses this.
pub fn set_synthesis_sign_sabotage(on: bool) {
    SABOTAGE_SYNTHESIS_SIGN.store(on, Ordering::SeqCst);
}

/// The 8 subbands of one tensor, each at half resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct SubbandSet {
    /// Indexed by `4·d + 2·h + w`, 1 meaning high-pass along that axis.
    pub bands: [Tensor; 8],
    pub source_shape: Vec<usize>,
}

impl SubbandSet {
    pub fn get(&self, key: &str) -> Option<&Tensor> {
        SUBBAND_KEYS.iter().position(|k| *k == key).map(|i| &self.bands[i])
    }

    pub fn energy(&self) -> f64 {
        self.bands.iter().map(Tensor::sum_sq).sum()
    }
}

fn half_shape(shape: &[usize]) -> Result<Vec<usize>> {
    let n = shape.len();
    if n < 3 {
        return Err(FeError::Shape(format!("Haar transform needs >= 3 axes, got {:?}", shape)));
    }
    let mut out = shape.to_vec();
    for e in &mut out[n - 3..] {
        if *e % 2 != 0 {
            return Err(FeError::OddExtent(*e));
        }
        *e /= 2;
    }
    Ok(out)
}

#[inline]
fn sign(band_bit: usize, pos: usize, flip: bool) -> f64 {
    if band_bit == 1 && pos == 1 {
        if flip {
            1.0
        } else {
            -1.0
        }
    } else {
        1.0
    }
}

/// Core block transform on raw buffers. `src` holds full-resolution volumes,
/// `bands` the 8 half-resolution planes; `analysis` picks the direction.
fn haar_blocks(full: &[usize], src: &mut [f64], bands: &mut [Vec<f64>], analysis: bool, flip: bool) {
    let n = full.len();
    let (d, h, w) = (full[n - 3], full[n - 2], full[n - 1]);
    let (hd, hh, hw) = (d / 2, h / 2, w / 2);
    let batch: usize = full[..n - 3].iter().product();
    let norm = 1.0 / 8f64.sqrt();
    let mut block = [0.0f64; 8];
    for b in 0..batch {
        let vol = b * d * h * w;
        let hvol = b * hd * hh * hw;
        for z in 0..hd {
            for y in 0..hh {
                for x in 0..hw {
                    let ho = hvol + (z * hh + y) * hw + x;
                    let at = |p: usize| {
                        let (dz, dy, dx) = (p >> 2, (p >> 1) & 1, p & 1);
                        vol + ((2 * z + dz) * h + 2 * y + dy) * w + 2 * x + dx
                    };
                    if analysis {
                        for (p, v) in block.iter_mut().enumerate() {
                            *v = src[at(p)];
                        }
                        for (k, band) in bands.iter_mut().enumerate() {
                            let mut acc = 0.0;
                            for (p, v) in block.iter().enumerate() {
                                acc += sign(k >> 2, p >> 2, false)
                                    * sign((k >> 1) & 1, (p >> 1) & 1, false)
                                    * sign(k & 1, p & 1, false)
                                    * v;
                            }
                            band[ho] = acc * norm;
                        }
                    } else {
                        for (k, v) in block.iter_mut().enumerate() {
                            *v = bands[k][ho];
                        }
                        for p in 0..8 {
                            let mut acc = 0.0;
                            for (k, v) in block.iter().enumerate() {
                                acc += sign(k >> 2, p >> 2, flip)
                                    * sign((k >> 1) & 1, (p >> 1) & 1, flip)
                                    * sign(k & 1, p & 1, flip)
                                    * v;
                            }
                            src[at(p)] = acc * norm;
                        }
                    }
                }
            }
        }
    }
}

/// Analysis over the last three axes, batched over the leading ones.
pub fn dwt3_haar(x: &Tensor) -> Result<SubbandSet> {
    let half = half_shape(x.shape())?;
    let m: usize = half.iter().product();
    let mut bands: Vec<Vec<f64>> = (0..8).map(|_| vec![0.0; m]).collect();
    let mut src = x.data().to_vec();
    haar_blocks(x.shape(), &mut src, &mut bands, true, false);
    let bands: Vec<Tensor> = bands.into_iter().map(|b| Tensor::from_parts(half.clone(), b)).collect();
    Ok(SubbandSet { bands: bands.try_into().unwrap(), source_shape: x.shape().to_vec() })
}

pub fn idwt3_haar(s: &SubbandSet) -> Result<Tensor> {
    let half = half_shape(&s.source_shape)?;
    for (k, b) in s.bands.iter().enumerate() {
        if b.shape() != half.as_slice() {
            return Err(FeError::Shape(format!(
                "band {} has shape {:?}, expected {:?}",
                SUBBAND_KEYS[k],
                b.shape(),
                half
            )));
        }
    }
    let mut bands: Vec<Vec<f64>> = s.bands.iter().map(|b| b.data().to_vec()).collect();
    let mut out = vec![0.0; s.source_shape.iter().product()];
    let flip = SABOTAGE_SYNTHESIS_SIGN.load(Ordering::SeqCst);
    haar_blocks(&s.source_shape, &mut out, &mut bands, false, flip);
    Ok(Tensor::from_parts(s.source_shape.clone(), out))
}

/// Analysis with the bands stacked on a new leading axis of 8.
pub(crate) fn dwt3_stacked(x: &Tensor) -> Result<Tensor> {
    let s = dwt3_haar(x)?;
    let mut shape = vec![8];
    shape.extend_from_slice(s.bands[0].shape());
    let data = s.bands.iter().flat_map(|b| b.data().iter().copied()).collect();
    Ok(Tensor::from_parts(shape, data))
}

pub(crate) fn idwt3_stacked(bands: &Tensor) -> Result<Tensor> {
    if bands.shape().first() != Some(&8) {
        return Err(FeError::Shape(format!("stacked subbands need leading 8, got {:?}", bands.shape())));
    }
    let half = bands.shape()[1..].to_vec();
    let m: usize = half.iter().product();
    let n = half.len();
    if n < 3 {
        return Err(FeError::Shape(format!("stacked subbands {:?}", bands.shape())));
    }
    let mut source = half.clone();
    for e in &mut source[n - 3..] {
        *e *= 2;
    }
    let parts: Vec<Tensor> = (0..8)
        .map(|k| Tensor::from_parts(half.clone(), bands.data()[k * m..(k + 1) * m].to_vec()))
        .collect();
    idwt3_haar(&SubbandSet { bands: parts.try_into().unwrap(), source_shape: source })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(shape: &[usize], seed: u64) -> Tensor {
        let mut s = seed;
        Tensor::from_fn(shape, |_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    #[test]
    fn constant_lands_in_lll() {
        let v = 1.7;
        let s = dwt3_haar(&Tensor::full(&[4, 4, 4], v)).unwrap();
        let expect = 2.0 * 2f64.sqrt() * v;
        assert!(s.get("LLL").unwrap().data().iter().all(|&c| (c - expect).abs() < 1e-12));
        for k in 1..8 {
            assert!(s.bands[k].data().iter().all(|&c| c.abs() < 1e-12), "{}", SUBBAND_KEYS[k]);
        }
    }

    #[test]
    fn impulse_spreads_evenly() {
        let mut x = Tensor::zeros(&[2, 2, 2]);
        x.set(&[0, 0, 0], 1.0);
        let s = dwt3_haar(&x).unwrap();
        for b in &s.bands {
            assert_eq!(b.shape(), &[1, 1, 1]);
            assert!((b.data()[0].abs() - 0.353553).abs() < 1e-6);
        }
    }

    #[test]
    fn detail_sign_is_first_minus_second() {
        // a = 0 at the even W index, b = 1 at the odd one: LLH ∝ (a - b) < 0.
        let mut x = Tensor::zeros(&[2, 2, 2]);
        x.set(&[0, 0, 1], 1.0);
        let s = dwt3_haar(&x).unwrap();
        assert!(s.get("LLH").unwrap().data()[0] < 0.0);
        assert!(s.get("LHL").unwrap().data()[0] > 0.0);
    }

    #[test]
    fn llh_is_high_along_w() {
        // Alternating along W only: all energy in LLH.
        let x = Tensor::from_fn(&[2, 2, 4], |i| if i[2] % 2 == 0 { 1.0 } else { -1.0 });
        let s = dwt3_haar(&x).unwrap();
        for (k, b) in s.bands.iter().enumerate() {
            let e = b.sum_sq();
            if k == 1 {
                assert!((e - x.sum_sq()).abs() < 1e-12);
            } else {
                assert!(e < 1e-24);
            }
        }
    }

    #[test]
    fn round_trip_and_energy() {
        let x = noise(&[2, 3, 8, 8, 8], 5);
        let s = dwt3_haar(&x).unwrap();
        assert!(((s.energy() - x.sum_sq()) / x.sum_sq()).abs() < 1e-12);
        assert!(idwt3_haar(&s).unwrap().max_abs_diff(&x) < 1e-10);
    }

    #[test]
    fn zeroing_lll_removes_block_means() {
        let x = noise(&[4, 4, 4], 11);
        let mut s = dwt3_haar(&x).unwrap();
        s.bands[0] = Tensor::zeros(s.bands[0].shape());
        let y = idwt3_haar(&s).unwrap();
        let oracle = Tensor::from_fn(&[4, 4, 4], |i| {
            let (bz, by, bx) = (i[0] / 2 * 2, i[1] / 2 * 2, i[2] / 2 * 2);
            let mut m = 0.0;
            for dz in 0..2 {
                for dy in 0..2 {
                    for dx in 0..2 {
                        m += x.at(&[bz + dz, by + dy, bx + dx]);
                    }
                }
            }
            x.at(i) - m / 8.0
        });
        assert!(y.max_abs_diff(&oracle) < 1e-12);
    }

    #[test]
    fn lowpass_only_reconstructs_constant() {
        let x = Tensor::full(&[4, 2, 6], -0.4);
        let mut s = dwt3_haar(&x).unwrap();
        for k in 1..8 {
            s.bands[k] = Tensor::zeros(s.bands[k].shape());
        }
        assert!(idwt3_haar(&s).unwrap().max_abs_diff(&x) < 1e-15);
    }

    #[test]
    fn rejects_odd_and_inconsistent() {
        assert_eq!(dwt3_haar(&Tensor::zeros(&[4, 3, 4])), Err(FeError::OddExtent(3)));
        let mut s = dwt3_haar(&Tensor::zeros(&[4, 4, 4])).unwrap();
        s.bands[3] = Tensor::zeros(&[1, 2, 2]);
        assert!(idwt3_haar(&s).is_err());
    }

    #[test]
    fn inner_products_preserved() {
        let (a, b) = (noise(&[6, 4, 2], 1), noise(&[6, 4, 2], 2));
        let (sa, sb) = (dwt3_haar(&a).unwrap(), dwt3_haar(&b).unwrap());
        let ip: f64 = sa.bands.iter().zip(&sb.bands).map(|(x, y)| x.dot(y)).sum();
        assert!((ip - a.dot(&b)).abs() < 1e-10);
    }
}
