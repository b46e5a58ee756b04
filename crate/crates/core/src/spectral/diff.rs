//! Differentiable spectral operations.
//!
//! Complex values travel through the tape as real tensors with a leading axis
//! of 2 (real plane, imaginary plane).
//!
//! Backward rules, with `g = ∂L/∂Re y + i·∂L/∂Im y` the upstream gradient:
//! - forward FFT `y = F x`: `∂L/∂x = F^H g`, i.e. the *unnormalized* inverse
//!   transform of `g` (`N · ifft3(g)`); real inputs keep its real part.
//! - inverse FFT `y = F^{-1} s = F^H s / N`: `∂L/∂s = F g / N`.
//! - product `y = a·b`: `∂L/∂a = g·conj(b)`, `∂L/∂b = g·conj(a)`.
//!
//! Finite-difference checks in the tests pin these conventions.

use std::rc::Rc;

use super::fft::{fft3, fft3_complex, ifft3_complex};
use super::haar::{dwt3_stacked, idwt3_stacked};
use crate::autodiff::Var;
use crate::error::{FeError, Result};
use crate::tensor::{ComplexTensor, Tensor};

fn vol_of(shape: &[usize]) -> f64 {
    let n = shape.len();
    (shape[n - 3] * shape[n - 2] * shape[n - 1]) as f64
}

fn scale_complex(c: &mut ComplexTensor, s: f64) {
    c.re.iter_mut().chain(c.im.iter_mut()).for_each(|v| *v *= s);
}

impl Var {
    /// Forward FFT of a real tensor; output is stacked complex `[2, ...]`.
    pub fn fft3(&self) -> Result<Var> {
        let spec = fft3(self.value())?;
        Ok(Var::from_op(spec.to_stacked(), &[self], |g, _| {
            let gc = ComplexTensor::from_stacked(g).unwrap();
            let mut back = ifft3_complex(&gc).unwrap();
            scale_complex(&mut back, vol_of(gc.shape()));
            vec![Some(back.real())]
        }))
    }

    /// Forward FFT of a stacked complex tensor.
    pub fn fft3_complex(&self) -> Result<Var> {
        let spec = fft3_complex(&ComplexTensor::from_stacked(self.value())?)?;
        Ok(Var::from_op(spec.to_stacked(), &[self], |g, _| {
            let gc = ComplexTensor::from_stacked(g).unwrap();
            let mut back = ifft3_complex(&gc).unwrap();
            scale_complex(&mut back, vol_of(gc.shape()));
            vec![Some(back.to_stacked())]
        }))
    }

    /// Normalized inverse FFT of a stacked complex tensor, complex output.
    pub fn ifft3_complex(&self) -> Result<Var> {
        let out = ifft3_complex(&ComplexTensor::from_stacked(self.value())?)?;
        Ok(Var::from_op(out.to_stacked(), &[self], |g, _| {
            let gc = ComplexTensor::from_stacked(g).unwrap();
            let mut back = fft3_complex(&gc).unwrap();
            scale_complex(&mut back, 1.0 / vol_of(gc.shape()));
            vec![Some(back.to_stacked())]
        }))
    }

    /// Real plane of a stacked complex tensor.
    pub fn complex_real(&self) -> Var {
        self.select0(0)
    }

    pub fn complex_imag(&self) -> Var {
        self.select0(1)
    }

    /// Elementwise complex product of two stacked complex tensors.
    pub fn complex_mul(&self, other: &Var) -> Result<Var> {
        let a = ComplexTensor::from_stacked(self.value())?;
        let b = ComplexTensor::from_stacked(other.value())?;
        let y = a.mul(&b)?;
        let (a, b) = (Rc::new(a), Rc::new(b));
        Ok(Var::from_op(y.to_stacked(), &[self, other], move |g, need| {
            let gc = ComplexTensor::from_stacked(g).unwrap();
            let conj_mul = |z: &ComplexTensor| {
                let mut out = ComplexTensor::zeros(z.shape());
                for i in 0..z.numel() {
                    let (gr, gi) = (gc.re[i], gc.im[i]);
                    let (zr, zi) = (z.re[i], -z.im[i]);
                    out.re[i] = gr * zr - gi * zi;
                    out.im[i] = gr * zi + gi * zr;
                }
                out.to_stacked()
            };
            vec![need[0].then(|| conj_mul(&b)), need[1].then(|| conj_mul(&a))]
        }))
    }

    /// Complex modulus of a stacked complex tensor. The gradient at a zero
    /// bin is taken as 0.
    pub fn complex_abs(&self) -> Result<Var> {
        let c = Rc::new(ComplexTensor::from_stacked(self.value())?);
        let mag: Vec<f64> = c.re.iter().zip(&c.im).map(|(a, b)| a.hypot(*b)).collect();
        let mag = Rc::new(Tensor::new(c.shape(), mag)?);
        let m2 = mag.clone();
        Ok(Var::from_op((*mag).clone(), &[self], move |g, _| {
            let n = c.numel();
            let mut out = vec![0.0; 2 * n];
            for i in 0..n {
                let m = m2.data()[i];
                if m > 0.0 {
                    out[i] = g.data()[i] * c.re[i] / m;
                    out[n + i] = g.data()[i] * c.im[i] / m;
                }
            }
            let mut shape = vec![2];
            shape.extend_from_slice(c.shape());
            vec![Some(Tensor::from_parts(shape, out))]
        }))
    }

    /// Haar analysis; output stacks the 8 subbands on a new leading axis.
    pub fn dwt3(&self) -> Result<Var> {
        let out = dwt3_stacked(self.value())?;
        Ok(Var::from_op(out, &[self], |g, _| vec![Some(idwt3_stacked(g).unwrap())]))
    }

    /// Haar synthesis from 8 stacked subbands.
    pub fn idwt3(&self) -> Result<Var> {
        let out = idwt3_stacked(self.value())?;
        Ok(Var::from_op(out, &[self], |g, _| vec![Some(dwt3_stacked(g).unwrap())]))
    }

    /// Mean over the support of a (D, H, W) mask for every leading index.
    /// An empty support yields 0.
    pub fn masked_spatial_mean(&self, mask: &[f64]) -> Result<Var> {
        let shape = self.shape().to_vec();
        let n = shape.len();
        if n < 3 || mask.len() != vol_of(&shape) as usize {
            return Err(FeError::Shape(format!("mask of {} bins vs {:?}", mask.len(), shape)));
        }
        let vol = mask.len();
        let count = mask.iter().filter(|&&m| m != 0.0).count();
        let inv = if count == 0 { 0.0 } else { 1.0 / count as f64 };
        let lead = shape[..n - 3].to_vec();
        let x = self.value().data();
        let vals: Vec<f64> = x
            .chunks(vol)
            .map(|v| v.iter().zip(mask).map(|(a, m)| a * m).sum::<f64>() * inv)
            .collect();
        let mask = mask.to_vec();
        Ok(Var::from_op(Tensor::from_parts(lead, vals), &[self], move |g, _| {
            let mut out = Vec::with_capacity(g.numel() * vol);
            for &gv in g.data() {
                out.extend(mask.iter().map(|m| gv * m * inv));
            }
            vec![Some(Tensor::from_parts(shape, out))]
        }))
    }
}
