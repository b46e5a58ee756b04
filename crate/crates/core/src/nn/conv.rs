//! Direct 3-D convolution: cross-correlation, grouped, strided, transposed.
//!
//! All three passes share one geometry. The "wide" side is the input of a
//! regular convolution (the output of a transposed one) and the "narrow" side
//! its counterpart; weights are laid out `(narrow channels, wide channels /
//! groups, k, k, k)`, which is the regular layout `(Cout, Cin/g, ..)` and
//! the transposed layout `(Cin, Cout/g, ..)` at the same time.

use crate::autodiff::Var;
use crate::error::{FeError, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: [usize; 3],
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
    pub transposed: bool,
    /// Extra extent added on the high side of a transposed output.
    pub output_padding: usize,
}

impl ConvSpec {
    /// Stride-1 convolution with "same" padding `⌊k/2⌋`.
    pub fn same(cin: usize, cout: usize, k: usize) -> Self {
        ConvSpec {
            in_channels: cin,
            out_channels: cout,
            kernel: [k; 3],
            stride: 1,
            padding: k / 2,
            groups: 1,
            transposed: false,
            output_padding: 0,
        }
    }

    pub fn depthwise(c: usize, k: usize) -> Self {
        ConvSpec { groups: c, ..Self::same(c, c, k) }
    }

    pub fn strided(cin: usize, cout: usize, k: usize, stride: usize, padding: usize) -> Self {
        ConvSpec { stride, padding, ..Self::same(cin, cout, k) }
    }

    /// Transposed convolution that multiplies spatial extents by `stride`.
    pub fn upsampling(cin: usize, cout: usize, k: usize, stride: usize) -> Self {
        // out = (in - 1)·s - 2p + k + op = in·s  when 2p - op = k - s.
        let (padding, output_padding) = if (k + stride) % 2 == 0 {
            ((k - stride) / 2, 0)
        } else {
            ((k - stride + 1) / 2, 1)
        };
        ConvSpec {
            in_channels: cin,
            out_channels: cout,
            kernel: [k; 3],
            stride,
            padding,
            groups: 1,
            transposed: true,
            output_padding,
        }
    }

    pub fn with_groups(self, groups: usize) -> Self {
        ConvSpec { groups, ..self }
    }

    pub fn is_depthwise(&self) -> bool {
        self.groups == self.in_channels && self.in_channels == self.out_channels
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        let [a, b, c] = self.kernel;
        if self.transposed {
            vec![self.in_channels, self.out_channels / self.groups, a, b, c]
        } else {
            vec![self.out_channels, self.in_channels / self.groups, a, b, c]
        }
    }

    pub fn weight_count(&self) -> usize {
        self.weight_shape().iter().product()
    }

    /// Fan-in of one output unit.
    pub fn fan_in(&self) -> usize {
        let k: usize = self.kernel.iter().product();
        if self.transposed {
            // Each output voxel sees in_channels/groups · k³ / stride³ inputs on
            // average; the conventional count ignores the stride.
            self.out_channels / self.groups * k
        } else {
            self.in_channels / self.groups * k
        }
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.groups;
        if g == 0 || self.in_channels % g != 0 || self.out_channels % g != 0 {
            return Err(FeError::Invalid(format!(
                "channels {}→{} not divisible by groups {}",
                self.in_channels, self.out_channels, g
            )));
        }
        if self.stride == 0 || self.kernel.iter().any(|&k| k == 0) {
            return Err(FeError::Invalid(format!("degenerate conv {:?}", self)));
        }
        if self.output_padding > 0 && (!self.transposed || self.output_padding >= self.stride) {
            return Err(FeError::Invalid("output padding needs a transposed conv and must be below the stride".into()));
        }
        Ok(())
    }

    pub fn output_extents(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let mut out = [0; 3];
        for a in 0..3 {
            let (i, k, s, p) = (input[a] as isize, self.kernel[a] as isize, self.stride as isize, self.padding as isize);
            let o = if self.transposed {
                (i - 1) * s - 2 * p + k + self.output_padding as isize
            } else {
                let span = i + 2 * p - k;
                if span < 0 {
                    -1
                } else {
                    span / s + 1
                }
            };
            if i <= 0 || o <= 0 {
                return Err(FeError::Shape(format!("conv {:?} on extents {:?} yields nothing", self, input)));
            }
            out[a] = o as usize;
        }
        Ok(out)
    }
}

struct Geometry {
    batch: usize,
    narrow_c: usize,
    wide_c: usize,
    groups: usize,
    k: [usize; 3],
    stride: usize,
    pad: usize,
    narrow: [usize; 3],
    wide: [usize; 3],
}

impl Geometry {
    fn wide_len(&self) -> usize {
        self.batch * self.wide_c * self.wide.iter().product::<usize>()
    }

    fn narrow_len(&self) -> usize {
        self.batch * self.narrow_c * self.narrow.iter().product::<usize>()
    }

    /// Valid narrow-side range along one axis for kernel tap `kk`.
    fn range(&self, axis: usize, kk: usize) -> (usize, usize) {
        let (s, p) = (self.stride as isize, self.pad as isize);
        let wide = self.wide[axis] as isize;
        let narrow = self.narrow[axis] as isize;
        let kk = kk as isize;
        // wide index = o·s + kk − p must lie in [0, wide).
        let lo = (p - kk + s - 1).div_euclid(s).max(0);
        let hi = ((wide - 1 + p - kk).div_euclid(s) + 1).min(narrow);
        (lo as usize, hi.max(lo) as usize)
    }

    /// Visits every (narrow row, wide row, weight index, narrow x-range, wide x start)
    /// tuple of the correlation.
    fn for_each_row(&self, mut f: impl FnMut(usize, usize, usize, usize, usize, usize)) {
        let [nd, nh, nw] = self.narrow;
        let [wd, wh, ww] = self.wide;
        let [kd, kh, kw] = self.k;
        let ncg = self.narrow_c / self.groups;
        let wcg = self.wide_c / self.groups;
        let s = self.stride;
        for b in 0..self.batch {
            for nc in 0..self.narrow_c {
                let grp = nc / ncg;
                for wl in 0..wcg {
                    let wc = grp * wcg + wl;
                    let nbase = (b * self.narrow_c + nc) * nd * nh * nw;
                    let wbase = (b * self.wide_c + wc) * wd * wh * ww;
                    for a in 0..kd {
                        let (z0, z1) = self.range(0, a);
                        for bb in 0..kh {
                            let (y0, y1) = self.range(1, bb);
                            for c in 0..kw {
                                let (x0, x1) = self.range(2, c);
                                if x0 >= x1 {
                                    continue;
                                }
                                let widx = (((nc * wcg + wl) * kd + a) * kh + bb) * kw + c;
                                for z in z0..z1 {
                                    let iz = z * s + a - self.pad;
                                    for y in y0..y1 {
                                        let iy = y * s + bb - self.pad;
                                        let nrow = nbase + (z * nh + y) * nw;
                                        let wrow = wbase + (iz * wh + iy) * ww;
                                        f(nrow, wrow, widx, x0, x1, x0 * s + c - self.pad);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// narrow += correlate(wide, w)
    fn gather(&self, wide: &[f64], w: &[f64], narrow: &mut [f64]) {
        let s = self.stride;
        self.for_each_row(|nrow, wrow, widx, x0, x1, wx0| {
            let wv = w[widx];
            if wv == 0.0 {
                return;
            }
            let out = &mut narrow[nrow + x0..nrow + x1];
            if s == 1 {
                let src = &wide[wrow + wx0..wrow + wx0 + (x1 - x0)];
                for (o, &v) in out.iter_mut().zip(src) {
                    *o += wv * v;
                }
            } else {
                for (j, o) in out.iter_mut().enumerate() {
                    *o += wv * wide[wrow + wx0 + j * s];
                }
            }
        });
    }

    /// wide += adjoint of the correlation applied to narrow.
    fn scatter(&self, narrow: &[f64], w: &[f64], wide: &mut [f64]) {
        let s = self.stride;
        self.for_each_row(|nrow, wrow, widx, x0, x1, wx0| {
            let wv = w[widx];
            if wv == 0.0 {
                return;
            }
            let src = &narrow[nrow + x0..nrow + x1];
            if s == 1 {
                let out = &mut wide[wrow + wx0..wrow + wx0 + (x1 - x0)];
                for (o, &v) in out.iter_mut().zip(src) {
                    *o += wv * v;
                }
            } else {
                for (j, &v) in src.iter().enumerate() {
                    wide[wrow + wx0 + j * s] += wv * v;
                }
            }
        });
    }

    /// gw += Σ narrow · wide over all positions.
    fn weight_grad(&self, narrow: &[f64], wide: &[f64], gw: &mut [f64]) {
        let s = self.stride;
        self.for_each_row(|nrow, wrow, widx, x0, x1, wx0| {
            let a = &narrow[nrow + x0..nrow + x1];
            let acc: f64 = if s == 1 {
                a.iter().zip(&wide[wrow + wx0..wrow + wx0 + (x1 - x0)]).map(|(p, q)| p * q).sum()
            } else {
                a.iter().enumerate().map(|(j, p)| p * wide[wrow + wx0 + j * s]).sum()
            };
            gw[widx] += acc;
        });
    }
}

fn geometry(spec: &ConvSpec, batch: usize, input: [usize; 3], output: [usize; 3]) -> Geometry {
    let (narrow_c, wide_c, narrow, wide) = if spec.transposed {
        (spec.in_channels, spec.out_channels, input, output)
    } else {
        (spec.out_channels, spec.in_channels, output, input)
    };
    Geometry {
        batch,
        narrow_c,
        wide_c,
        groups: spec.groups,
        k: spec.kernel,
        stride: spec.stride,
        pad: spec.padding,
        narrow,
        wide,
    }
}

/// Adds `bias[c]` to every voxel of channel `c`.
fn add_bias(y: &mut [f64], bias: &[f64], batch: usize, vol: usize) {
    let c = bias.len();
    for b in 0..batch {
        for (ch, &bv) in bias.iter().enumerate() {
            let base = (b * c + ch) * vol;
            y[base..base + vol].iter_mut().for_each(|v| *v += bv);
        }
    }
}

fn bias_grad(g: &[f64], batch: usize, c: usize, vol: usize) -> Vec<f64> {
    let mut out = vec![0.0; c];
    for b in 0..batch {
        for (ch, o) in out.iter_mut().enumerate() {
            let base = (b * c + ch) * vol;
            *o += g[base..base + vol].iter().sum::<f64>();
        }
    }
    out
}

/// Differentiable 3-D convolution of `x` (B, Cin, D, H, W).
pub fn conv3d(x: &Var, spec: &ConvSpec, weight: &Var, bias: Option<&Var>) -> Result<Var> {
    spec.validate()?;
    let [b, c, d, h, w] = x.value().dims5()?;
    if c != spec.in_channels {
        return Err(FeError::Shape(format!("conv expects {} input channels, got {}", spec.in_channels, c)));
    }
    if weight.shape() != spec.weight_shape().as_slice() {
        return Err(FeError::Shape(format!(
            "conv weight {:?}, expected {:?}",
            weight.shape(),
            spec.weight_shape()
        )));
    }
    if let Some(bv) = bias {
        if bv.shape() != [spec.out_channels] {
            return Err(FeError::Shape(format!("conv bias {:?}", bv.shape())));
        }
    }
    let input = [d, h, w];
    let output = spec.output_extents(input)?;
    let geo = geometry(spec, b, input, output);
    let out_vol: usize = output.iter().product();
    let mut y = vec![0.0; b * spec.out_channels * out_vol];
    if spec.transposed {
        geo.scatter(x.value().data(), weight.value().data(), &mut y);
    } else {
        geo.gather(x.value().data(), weight.value().data(), &mut y);
    }
    if let Some(bv) = bias {
        add_bias(&mut y, bv.value().data(), b, out_vol);
    }
    let out_shape = vec![b, spec.out_channels, output[0], output[1], output[2]];
    let xv = x.shared_value();
    let wv = weight.shared_value();
    let transposed = spec.transposed;
    let out_c = spec.out_channels;
    let mut parents = vec![x, weight];
    if let Some(bv) = bias {
        parents.push(bv);
    }
    Ok(Var::from_op(Tensor::from_parts(out_shape, y), &parents, move |g, need| {
        let gd = g.data();
        let gx = need[0].then(|| {
            let mut gx = vec![0.0; xv.numel()];
            if transposed {
                geo.gather(gd, wv.data(), &mut gx);
            } else {
                geo.scatter(gd, wv.data(), &mut gx);
            }
            Tensor::from_parts(xv.shape().to_vec(), gx)
        });
        let gw = need[1].then(|| {
            let mut gw = vec![0.0; wv.numel()];
            if transposed {
                geo.weight_grad(xv.data(), gd, &mut gw);
            } else {
                geo.weight_grad(gd, xv.data(), &mut gw);
            }
            Tensor::from_parts(wv.shape().to_vec(), gw)
        });
        let mut out = vec![gx, gw];
        if need.len() == 3 {
            out.push(need[2].then(|| Tensor::from_parts(vec![out_c], bias_grad(gd, b, out_c, out_vol))));
        }
        debug_assert_eq!(geo.wide_len() + geo.narrow_len(), xv.numel() + g.numel());
        out
    }))
}

/// Depthwise convolution whose k³ kernel differs per (batch, channel).
/// `kernels` is (B, C, k³); stride 1, zero padding ⌊k/2⌋.
pub fn dynamic_depthwise_conv(x: &Var, kernels: &Var, k: usize) -> Result<Var> {
    let [b, c, d, h, w] = x.value().dims5()?;
    let k3 = k * k * k;
    if kernels.shape() != [b, c, k3] {
        return Err(FeError::Shape(format!("dynamic kernels {:?}, expected {:?}", kernels.shape(), [b, c, k3])));
    }
    let vol = d * h * w;
    // Each (b, c) slice is a single-channel, single-batch correlation.
    let geo = Geometry {
        batch: 1,
        narrow_c: 1,
        wide_c: 1,
        groups: 1,
        k: [k; 3],
        stride: 1,
        pad: k / 2,
        narrow: [d, h, w],
        wide: [d, h, w],
    };
    let xv = x.shared_value();
    let kv = kernels.shared_value();
    let mut y = vec![0.0; xv.numel()];
    for s in 0..b * c {
        geo.gather(
            &xv.data()[s * vol..(s + 1) * vol],
            &kv.data()[s * k3..(s + 1) * k3],
            &mut y[s * vol..(s + 1) * vol],
        );
    }
    Ok(Var::from_op(Tensor::from_parts(xv.shape().to_vec(), y), &[x, kernels], move |g, need| {
        let gd = g.data();
        let gx = need[0].then(|| {
            let mut gx = vec![0.0; xv.numel()];
            for s in 0..b * c {
                geo.scatter(&gd[s * vol..(s + 1) * vol], &kv.data()[s * k3..(s + 1) * k3], &mut gx[s * vol..(s + 1) * vol]);
            }
            Tensor::from_parts(xv.shape().to_vec(), gx)
        });
        let gk = need[1].then(|| {
            let mut gk = vec![0.0; kv.numel()];
            for s in 0..b * c {
                geo.weight_grad(&gd[s * vol..(s + 1) * vol], &xv.data()[s * vol..(s + 1) * vol], &mut gk[s * k3..(s + 1) * k3]);
            }
            Tensor::from_parts(kv.shape().to_vec(), gk)
        });
        vec![gx, gk]
    }))
}

/// Multiply-accumulate count of one convolution (bias excluded).
pub fn conv_macs(spec: &ConvSpec, input: [usize; 3]) -> Result<f64> {
    let k: usize = spec.kernel.iter().product();
    let per_voxel = (spec.in_channels / spec.groups * spec.out_channels * k) as f64;
    // Regular: every output voxel sums Cin/g·k³ products per output channel.
    // Transposed: every input voxel scatters Cout/g·k³ products per input channel.
    if spec.transposed {
        Ok(per_voxel * input.iter().product::<usize>() as f64)
    } else {
        let out = spec.output_extents(input)?;
        Ok(per_voxel * out.iter().product::<usize>() as f64)
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

    /// Sliding-window oracle for regular (non-transposed) convolution.
    fn naive(x: &Tensor, w: &Tensor, bias: Option<&Tensor>, spec: &ConvSpec) -> Tensor {
        let [b, _, d, h, ww] = x.dims5().unwrap();
        let o = spec.output_extents([d, h, ww]).unwrap();
        let cig = spec.in_channels / spec.groups;
        let cog = spec.out_channels / spec.groups;
        let [kd, kh, kw] = spec.kernel;
        Tensor::from_fn(&[b, spec.out_channels, o[0], o[1], o[2]], |i| {
            let (bb, oc, z, y, xx) = (i[0], i[1], i[2], i[3], i[4]);
            let g = oc / cog;
            let mut acc = bias.map_or(0.0, |t| t.data()[oc]);
            for ic in 0..cig {
                for a in 0..kd {
                    for c in 0..kh {
                        for e in 0..kw {
                            let iz = (z * spec.stride + a) as isize - spec.padding as isize;
                            let iy = (y * spec.stride + c) as isize - spec.padding as isize;
                            let ix = (xx * spec.stride + e) as isize - spec.padding as isize;
                            if iz < 0 || iy < 0 || ix < 0 || iz >= d as isize || iy >= h as isize || ix >= ww as isize {
                                continue;
                            }
                            acc += w.at(&[oc, ic, a, c, e])
                                * x.at(&[bb, g * cig + ic, iz as usize, iy as usize, ix as usize]);
                        }
                    }
                }
            }
            acc
        })
    }

    #[test]
    fn identity_1x1() {
        let x = noise(&[1, 3, 2, 3, 4], 1);
        let spec = ConvSpec::same(3, 3, 1);
        let w = Tensor::from_fn(&spec.weight_shape(), |i| (i[0] == i[1]) as u8 as f64);
        let y = conv3d(&Var::constant(x.clone()), &spec, &Var::constant(w), Some(&Var::constant(Tensor::zeros(&[3]))))
            .unwrap();
        assert_eq!(y.value(), &x);
    }

    #[test]
    fn ones_kernel_counts_neighbours() {
        let spec = ConvSpec::same(1, 1, 3);
        let y = conv3d(
            &Var::constant(Tensor::ones(&[1, 1, 4, 4, 4])),
            &spec,
            &Var::constant(Tensor::ones(&[1, 1, 3, 3, 3])),
            None,
        )
        .unwrap();
        assert_eq!(y.value().at(&[0, 0, 1, 2, 1]), 27.0);
        assert_eq!(y.value().at(&[0, 0, 0, 0, 0]), 8.0);
    }

    #[test]
    fn matches_sliding_window_oracle() {
        let specs = [
            ConvSpec::same(2, 3, 3),
            ConvSpec::strided(2, 4, 3, 2, 1),
            ConvSpec::depthwise(2, 7),
            ConvSpec::same(4, 2, 3).with_groups(2),
            ConvSpec::strided(2, 2, 2, 2, 0),
        ];
        for (i, spec) in specs.iter().enumerate() {
            let x = noise(&[1, spec.in_channels, 4, 4, 4], 10 + i as u64);
            let w = noise(&spec.weight_shape(), 20 + i as u64);
            let b = noise(&[spec.out_channels], 30 + i as u64);
            let fast = conv3d(&Var::constant(x.clone()), spec, &Var::constant(w.clone()), Some(&Var::constant(b.clone())))
                .unwrap();
            let slow = naive(&x, &w, Some(&b), spec);
            assert!(fast.value().max_abs_diff(&slow) < 1e-12, "spec {i}");
        }
    }

    #[test]
    fn transposed_is_adjoint() {
        for (fwd, seed) in [(ConvSpec::strided(3, 2, 3, 2, 1), 1u64), (ConvSpec::strided(4, 2, 2, 2, 0), 2)] {
            let x = noise(&[2, fwd.in_channels, 4, 4, 4], seed);
            let w = noise(&fwd.weight_shape(), seed + 10);
            let y = conv3d(&Var::constant(x.clone()), &fwd, &Var::constant(w.clone()), None).unwrap();
            let r = noise(y.shape(), seed + 20);
            let tspec = ConvSpec {
                in_channels: fwd.out_channels,
                out_channels: fwd.in_channels,
                transposed: true,
                output_padding: (4 + 2 * fwd.padding - fwd.kernel[0]) % fwd.stride,
                ..fwd
            };
            let xt = conv3d(&Var::constant(r.clone()), &tspec, &Var::constant(w), None).unwrap();
            assert_eq!(xt.shape(), x.shape());
            let lhs = y.value().dot(&r);
            let rhs = x.dot(xt.value());
            assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn upsampling_doubles_extents() {
        for k in [2, 3] {
            let spec = ConvSpec::upsampling(2, 3, k, 2);
            assert_eq!(spec.output_extents([3, 4, 5]).unwrap(), [6, 8, 10]);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let specs = [
            ConvSpec::strided(2, 3, 3, 2, 1),
            ConvSpec::depthwise(2, 7),
            ConvSpec::upsampling(2, 2, 3, 2),
        ];
        for (i, spec) in specs.iter().enumerate() {
            let x = noise(&[1, spec.in_channels, 4, 4, 4], 40 + i as u64);
            let w = noise(&spec.weight_shape(), 50 + i as u64);
            let b = noise(&[spec.out_channels], 60 + i as u64);
            let spec = *spec;
            let r = finite_difference_check(
                |v| Ok(conv3d(&v[0], &spec, &v[1], Some(&v[2]))?.relu6().sum_all()),
                &[x, w, b],
                1e-5,
                1e-4,
                FdSampling::Random { count: 150, seed: i as u64 },
            )
            .unwrap();
            assert!(r.passed, "spec {i}: {r:?}");
        }
    }

    #[test]
    fn dynamic_depthwise_matches_static() {
        let x = noise(&[2, 3, 4, 4, 4], 7);
        let kern = noise(&[2, 3, 27], 8);
        let y = dynamic_depthwise_conv(&Var::constant(x.clone()), &Var::constant(kern.clone()), 3).unwrap();
        for b in 0..2 {
            let xb = Tensor::from_fn(&[1, 3, 4, 4, 4], |i| x.at(&[b, i[1], i[2], i[3], i[4]]));
            let wb = Tensor::from_fn(&[3, 1, 3, 3, 3], |i| kern.at(&[b, i[0], i[2] * 9 + i[3] * 3 + i[4]]));
            let yb = naive(&xb, &wb, None, &ConvSpec::depthwise(3, 3));
            let got = Tensor::from_fn(&[1, 3, 4, 4, 4], |i| y.value().at(&[b, i[1], i[2], i[3], i[4]]));
            assert!(got.max_abs_diff(&yb) < 1e-12);
        }
        let r = finite_difference_check(
            |v| Ok(dynamic_depthwise_conv(&v[0], &v[1], 3)?.mul(&v[0]).sum_all()),
            &[x, kern],
            1e-5,
            1e-4,
            FdSampling::Random { count: 120, seed: 1 },
        )
        .unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn rejects_bad_specs() {
        let x = Var::constant(Tensor::zeros(&[1, 3, 4, 4, 4]));
        let spec = ConvSpec::same(3, 4, 3).with_groups(2);
        assert!(conv3d(&x, &spec, &Var::constant(Tensor::zeros(&[4, 1, 3, 3, 3])), None).is_err());
        let spec = ConvSpec::same(2, 2, 3);
        assert!(conv3d(&x, &spec, &Var::constant(Tensor::zeros(&spec.weight_shape())), None).is_err());
        let big = ConvSpec::strided(3, 3, 5, 1, 0);
        let tiny = Var::constant(Tensor::zeros(&[1, 3, 2, 2, 2]));
        assert!(conv3d(&tiny, &big, &Var::constant(Tensor::zeros(&big.weight_shape())), None).is_err());
    }

    #[test]
    fn mac_counts() {
        let spec = ConvSpec::same(2, 2, 1);
        assert_eq!(conv_macs(&spec, [2, 2, 2]).unwrap(), 32.0);
    }
}
