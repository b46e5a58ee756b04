//! 3-D discrete Fourier transform over the last three axes.
//!
//! Convention: unnormalized forward transform, `1/(D·H·W)` on the inverse.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{FeError, Result};
use crate::tensor::{ComplexTensor, Tensor};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

/// True when `n` factors into 2, 3 and 5 only.
pub fn is_supported_extent(n: usize) -> bool {
    if n == 0 {
        return false;
    }
    let mut m = n;
    for f in [2, 3, 5] {
        while m % f == 0 {
            m /= f;
        }
    }
    m == 1
}

fn check_extents(shape: &[usize]) -> Result<[usize; 3]> {
    let n = shape.len();
    if n < 3 {
        return Err(FeError::Shape(format!("FFT needs at least 3 axes, got {:?}", shape)));
    }
    let ext = [shape[n - 3], shape[n - 2], shape[n - 1]];
    for e in ext {
        if !is_supported_extent(e) {
            return Err(FeError::FftExtent(e));
        }
    }
    Ok(ext)
}

/// In-place transform of every (D, H, W) volume in `buf`.
fn transform(buf: &mut [Complex<f64>], [d, h, w]: [usize; 3], inverse: bool) {
    let vol = d * h * w;
    if vol == 0 {
        return;
    }
    if w > 1 {
        plan(w, inverse).process(buf);
    }
    let mut line = Vec::new();
    if h > 1 {
        let f = plan(h, inverse);
        line.resize(h, Complex::default());
        for v in buf.chunks_mut(vol) {
            for z in 0..d {
                for x in 0..w {
                    for y in 0..h {
                        line[y] = v[(z * h + y) * w + x];
                    }
                    f.process(&mut line);
                    for y in 0..h {
                        v[(z * h + y) * w + x] = line[y];
                    }
                }
            }
        }
    }
    if d > 1 {
        let f = plan(d, inverse);
        line.resize(d, Complex::default());
        let plane = h * w;
        for v in buf.chunks_mut(vol) {
            for p in 0..plane {
                for z in 0..d {
                    line[z] = v[z * plane + p];
                }
                f.process(&mut line);
                for z in 0..d {
                    v[z * plane + p] = line[z];
                }
            }
        }
    }
}

fn run(shape: &[usize], re: &[f64], im: Option<&[f64]>, inverse: bool) -> Result<ComplexTensor> {
    let ext = check_extents(shape)?;
    let mut buf: Vec<Complex<f64>> = match im {
        Some(im) => re.iter().zip(im).map(|(&a, &b)| Complex::new(a, b)).collect(),
        None => re.iter().map(|&a| Complex::new(a, 0.0)).collect(),
    };
    transform(&mut buf, ext, inverse);
    let scale = if inverse { 1.0 / (ext[0] * ext[1] * ext[2]) as f64 } else { 1.0 };
    let (re, im) = buf.into_iter().map(|c| (c.re * scale, c.im * scale)).unzip();
    ComplexTensor::new(shape, re, im)
}

/// Forward transform of a real tensor, batched over leading axes.
pub fn fft3(x: &Tensor) -> Result<ComplexTensor> {
    run(x.shape(), x.data(), None, false)
}

pub fn fft3_complex(x: &ComplexTensor) -> Result<ComplexTensor> {
    run(x.shape(), &x.re, Some(&x.im), false)
}

/// Normalized inverse transform with complex output.
pub fn ifft3_complex(s: &ComplexTensor) -> Result<ComplexTensor> {
    run(s.shape(), &s.re, Some(&s.im), true)
}

/// Normalized inverse transform; returns the real plane and the largest
/// absolute imaginary value that was dropped.
pub fn ifft3(s: &ComplexTensor) -> Result<(Tensor, f64)> {
    let c = ifft3_complex(s)?;
    let residue = c.im.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok((c.real(), residue))
}

/// Like [`ifft3`] but fails when the imaginary residue exceeds `tol`
/// relative to the largest real magnitude.
pub fn ifft3_real(s: &ComplexTensor, tol: f64) -> Result<Tensor> {
    let (re, residue) = ifft3(s)?;
    let scale = re.max_abs().max(1e-300);
    let rel = residue / scale;
    if residue > 0.0 && rel > tol {
        return Err(FeError::ImaginaryResidue { residue: rel, tol });
    }
    Ok(re)
}

/// Model cost of one transform over `voxels` points, in real floating-point
/// operations (`5 N log2 N`).
pub fn fft_flops(voxels: usize) -> f64 {
    if voxels <= 1 {
        return 0.0;
    }
    let n = voxels as f64;
    5.0 * n * n.log2()
}
