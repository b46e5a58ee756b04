//! Hard radial partition of the spectrum grid into low, mid and high bands.

use crate::error::{FeError, Result};
use crate::tensor::ComplexTensor;

pub const DEFAULT_CUTOFFS: (f64, f64) = (1.0 / 3.0, 2.0 / 3.0);

/// 0/1 masks over a (D, H, W) spectrum in unshifted FFT ordering.
#[derive(Clone, Debug, PartialEq)]
pub struct BandMasks {
    pub extents: [usize; 3],
    pub cutoffs: (f64, f64),
    pub low: Vec<f64>,
    pub mid: Vec<f64>,
    pub high: Vec<f64>,
}

/// Signed frequency of FFT bin `k` out of `n`, in [-0.5, 0.5).
pub fn signed_frequency(k: usize, n: usize) -> f64 {
    if 2 * k < n {
        k as f64 / n as f64
    } else {
        (k as f64 - n as f64) / n as f64
    }
}

/// Normalized radius of a bin: 0 at DC, 1 at the (-1/2, -1/2, -1/2) corner.
pub fn bin_radius(idx: [usize; 3], extents: [usize; 3]) -> f64 {
    let mut s = 0.0;
    for a in 0..3 {
        let f = signed_frequency(idx[a], extents[a]) / 0.5;
        s += f * f;
    }
    s.sqrt() / 3f64.sqrt()
}

pub fn validate_cutoffs((r1, r2): (f64, f64)) -> Result<()> {
    if !(r1 > 0.0 && r1 < r2 && r2 <= 1.0) {
        return Err(FeError::Invalid(format!("band cutoffs need 0 < r1 < r2 <= 1, got ({r1}, {r2})")));
    }
    Ok(())
}

pub fn band_masks(extents: [usize; 3], cutoffs: (f64, f64)) -> Result<BandMasks> {
    validate_cutoffs(cutoffs)?;
    if extents.iter().any(|&e| e == 0) {
        return Err(FeError::Invalid(format!("empty extents {:?}", extents)));
    }
    let [d, h, w] = extents;
    let n = d * h * w;
    let (mut low, mut mid, mut high) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let r = bin_radius([z, y, x], extents);
                let o = (z * h + y) * w + x;
                if r <= cutoffs.0 {
                    low[o] = 1.0;
                } else if r <= cutoffs.1 {
                    mid[o] = 1.0;
                } else {
                    high[o] = 1.0;
                }
            }
        }
    }
    Ok(BandMasks { extents, cutoffs, low, mid, high })
}

impl BandMasks {
    pub fn bands(&self) -> [&[f64]; 3] {
        [&self.low, &self.mid, &self.high]
    }

    /// Number of bins in each band.
    pub fn counts(&self) -> [usize; 3] {
        self.bands().map(|m| m.iter().filter(|&&v| v != 0.0).count())
    }
}

/// Splits a spectrum into its masked low, mid and high parts.
pub fn band_decompose(s: &ComplexTensor, m: &BandMasks) -> Result<[ComplexTensor; 3]> {
    let shape = s.shape();
    let n = shape.len();
    if n < 3 || [shape[n - 3], shape[n - 2], shape[n - 1]] != m.extents {
        return Err(FeError::Shape(format!("spectrum {:?} vs masks {:?}", shape, m.extents)));
    }
    let vol = m.extents.iter().product::<usize>();
    let part = |mask: &[f64]| {
        let mut out = ComplexTensor::zeros(shape);
        for (i, (re, im)) in s.re.iter().zip(&s.im).enumerate() {
            let k = mask[i % vol];
            out.re[i] = re * k;
            out.im[i] = im * k;
        }
        out
    };
    Ok([part(&m.low), part(&m.mid), part(&m.high)])
}
