//! Elementwise, reduction and shape operations with their backward rules.

use super::Var;
use crate::tensor::{strides_of, Tensor};

fn broadcast_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    assert_eq!(a.len(), b.len(), "broadcast needs equal rank: {:?} vs {:?}", a, b);
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            assert!(x == y || x == 1 || y == 1, "cannot broadcast {:?} with {:?}", a, b);
            x.max(y)
        })
        .collect()
}

/// Strides of `shape` viewed inside `out`, with zero stride on broadcast axes.
fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let s = strides_of(shape);
    shape
        .iter()
        .zip(out)
        .zip(s)
        .map(|((&d, &o), st)| if d == 1 && o != 1 { 0 } else { st })
        .collect()
}

/// Visits every index of `out` as (flat output index, offset into a, offset into b).
fn for_each_broadcast(out: &[usize], sa: &[usize], sb: &[usize], mut f: impl FnMut(usize, usize, usize)) {
    let n: usize = out.iter().product();
    if n == 0 {
        return;
    }
    let rank = out.len();
    if rank == 0 {
        f(0, 0, 0);
        return;
    }
    let inner = out[rank - 1];
    let (ia, ib) = (sa[rank - 1], sb[rank - 1]);
    let mut idx = vec![0usize; rank - 1];
    let (mut oa, mut ob) = (0usize, 0usize);
    let mut flat = 0usize;
    loop {
        for k in 0..inner {
            f(flat + k, oa + k * ia, ob + k * ib);
        }
        flat += inner;
        if flat >= n {
            break;
        }
        for ax in (0..rank - 1).rev() {
            idx[ax] += 1;
            oa += sa[ax];
            ob += sb[ax];
            if idx[ax] < out[ax] {
                break;
            }
            oa -= sa[ax] * out[ax];
            ob -= sb[ax] * out[ax];
            idx[ax] = 0;
        }
    }
}

/// Sums `g` over the axes where `shape` has extent 1 but `g` does not.
pub(crate) fn reduce_to_shape(g: &Tensor, shape: &[usize]) -> Tensor {
    if g.shape() == shape {
        return g.clone();
    }
    let mut out = Tensor::zeros(shape);
    let st = broadcast_strides(shape, g.shape());
    let zero = vec![0; shape.len()];
    let od = out.data_mut();
    let gd = g.data();
    for_each_broadcast(g.shape(), &st, &zero, |i, o, _| od[o] += gd[i]);
    out
}

fn binary(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    if a.shape() == b.shape() {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        return Tensor::from_parts(a.shape().to_vec(), data);
    }
    let out = broadcast_shape(a.shape(), b.shape());
    let sa = broadcast_strides(a.shape(), &out);
    let sb = broadcast_strides(b.shape(), &out);
    let mut data = vec![0.0; out.iter().product()];
    let (ad, bd) = (a.data(), b.data());
    for_each_broadcast(&out, &sa, &sb, |i, oa, ob| data[i] = f(ad[oa], bd[ob]));
    Tensor::from_parts(out, data)
}

fn unary(x: &Var, f: impl Fn(f64) -> f64, df: impl Fn(f64, f64) -> f64 + 'static) -> Var {
    let value = x.value().map(f);
    let xv = x.shared_value();
    let yv = std::rc::Rc::new(value.clone());
    Var::from_op(value, &[x], move |g, _| {
        let data = g
            .data()
            .iter()
            .zip(xv.data())
            .zip(yv.data())
            .map(|((&g, &x), &y)| g * df(x, y))
            .collect();
        vec![Some(Tensor::from_parts(g.shape().to_vec(), data))]
    })
}

pub(crate) fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn normalize_axes(axes: &[usize], rank: usize) -> Vec<bool> {
    let mut m = vec![false; rank];
    for &a in axes {
        assert!(a < rank, "axis {} out of range for rank {}", a, rank);
        m[a] = true;
    }
    m
}

/// Splits a shape around `axis` into (outer, extent, inner) block sizes.
fn split_at_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Var {
    pub fn add(&self, other: &Var) -> Var {
        let value = binary(self.value(), other.value(), |a, b| a + b);
        let (sa, sb) = (self.shape().to_vec(), other.shape().to_vec());
        Var::from_op(value, &[self, other], move |g, need| {
            vec![
                need[0].then(|| reduce_to_shape(g, &sa)),
                need[1].then(|| reduce_to_shape(g, &sb)),
            ]
        })
    }

    pub fn sub(&self, other: &Var) -> Var {
        let value = binary(self.value(), other.value(), |a, b| a - b);
        let (sa, sb) = (self.shape().to_vec(), other.shape().to_vec());
        Var::from_op(value, &[self, other], move |g, need| {
            vec![
                need[0].then(|| reduce_to_shape(g, &sa)),
                need[1].then(|| reduce_to_shape(&g.scale(-1.0), &sb)),
            ]
        })
    }

    pub fn mul(&self, other: &Var) -> Var {
        let value = binary(self.value(), other.value(), |a, b| a * b);
        let (a, b) = (self.shared_value(), other.shared_value());
        Var::from_op(value, &[self, other], move |g, need| {
            vec![
                need[0].then(|| reduce_to_shape(&binary(g, &b, |x, y| x * y), a.shape())),
                need[1].then(|| reduce_to_shape(&binary(g, &a, |x, y| x * y), b.shape())),
            ]
        })
    }

    pub fn div(&self, other: &Var) -> Var {
        let value = binary(self.value(), other.value(), |a, b| a / b);
        let (a, b) = (self.shared_value(), other.shared_value());
        Var::from_op(value, &[self, other], move |g, need| {
            let ga = need[0].then(|| reduce_to_shape(&binary(g, &b, |x, y| x / y), a.shape()));
            let gb = need[1].then(|| {
                let q = binary(&a, &b, |x, y| -x / (y * y));
                reduce_to_shape(&binary(g, &q, |x, y| x * y), b.shape())
            });
            vec![ga, gb]
        })
    }

    pub fn neg(&self) -> Var {
        self.scale(-1.0)
    }

    pub fn scale(&self, s: f64) -> Var {
        Var::from_op(self.value().scale(s), &[self], move |g, _| vec![Some(g.scale(s))])
    }

    pub fn add_scalar(&self, s: f64) -> Var {
        Var::from_op(self.value().map(|v| v + s), &[self], |g, _| vec![Some(g.clone())])
    }

    pub fn exp(&self) -> Var {
        unary(self, f64::exp, |_, y| y)
    }

    pub fn ln(&self) -> Var {
        unary(self, f64::ln, |x, _| 1.0 / x)
    }

    pub fn relu(&self) -> Var {
        unary(self, |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn relu6(&self) -> Var {
        unary(self, |x| x.clamp(0.0, 6.0), |x, _| if x > 0.0 && x < 6.0 { 1.0 } else { 0.0 })
    }

    pub fn sigmoid(&self) -> Var {
        unary(self, sigmoid_scalar, |_, y| y * (1.0 - y))
    }

    /// Exact GELU, x·Φ(x).
    pub fn gelu(&self) -> Var {
        unary(self, gelu_scalar, |x, _| gelu_grad(x))
    }

    pub fn sum_all(&self) -> Var {
        let shape = self.shape().to_vec();
        Var::from_op(Tensor::scalar(self.value().sum()), &[self], move |g, _| {
            vec![Some(Tensor::full(&shape, g.data()[0]))]
        })
    }

    pub fn mean_all(&self) -> Var {
        let n = self.numel() as f64;
        self.sum_all().scale(1.0 / n)
    }

    /// Sum over `axes`, keeping them with extent 1.
    pub fn sum_axes(&self, axes: &[usize]) -> Var {
        let mask = normalize_axes(axes, self.shape().len());
        let out_shape: Vec<usize> = self
            .shape()
            .iter()
            .zip(&mask)
            .map(|(&d, &m)| if m { 1 } else { d })
            .collect();
        let value = reduce_to_shape(self.value(), &out_shape);
        let in_shape = self.shape().to_vec();
        Var::from_op(value, &[self], move |g, _| {
            let zero = Tensor::zeros(&in_shape);
            vec![Some(binary(&zero, g, |_, y| y))]
        })
    }

    pub fn mean_axes(&self, axes: &[usize]) -> Var {
        let count: usize = axes.iter().map(|&a| self.shape()[a]).product();
        self.sum_axes(axes).scale(1.0 / count as f64)
    }

    /// Maximum along `axis`, kept with extent 1. The gradient goes to the
    /// first maximal element.
    pub fn max_axis(&self, axis: usize) -> Var {
        let shape = self.shape().to_vec();
        let (outer, n, inner) = split_at_axis(&shape, axis);
        let x = self.value().data();
        let mut vals = vec![f64::NEG_INFINITY; outer * inner];
        let mut arg = vec![0usize; outer * inner];
        for o in 0..outer {
            for k in 0..n {
                let base = (o * n + k) * inner;
                for i in 0..inner {
                    let v = x[base + i];
                    if v > vals[o * inner + i] {
                        vals[o * inner + i] = v;
                        arg[o * inner + i] = base + i;
                    }
                }
            }
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = 1;
        Var::from_op(Tensor::from_parts(out_shape, vals), &[self], move |g, _| {
            let mut gx = Tensor::zeros(&shape);
            let gd = gx.data_mut();
            for (j, &a) in arg.iter().enumerate() {
                gd[a] += g.data()[j];
            }
            vec![Some(gx)]
        })
    }

    /// Softmax along `axis` with max subtraction.
    pub fn softmax_axis(&self, axis: usize) -> Var {
        let shape = self.shape().to_vec();
        let (outer, n, inner) = split_at_axis(&shape, axis);
        let x = self.value().data();
        let mut y = vec![0.0; x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| (o * n + k) * inner + i;
                let m = (0..n).map(|k| x[at(k)]).fold(f64::NEG_INFINITY, f64::max);
                let mut s = 0.0;
                for k in 0..n {
                    let e = (x[at(k)] - m).exp();
                    y[at(k)] = e;
                    s += e;
                }
                for k in 0..n {
                    y[at(k)] /= s;
                }
            }
        }
        let yt = std::rc::Rc::new(Tensor::from_parts(shape.clone(), y));
        let ys = yt.clone();
        Var::from_op((*yt).clone(), &[self], move |g, _| {
            let (y, gd) = (ys.data(), g.data());
            let mut gx = vec![0.0; y.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |k: usize| (o * n + k) * inner + i;
                    let dot: f64 = (0..n).map(|k| y[at(k)] * gd[at(k)]).sum();
                    for k in 0..n {
                        gx[at(k)] = y[at(k)] * (gd[at(k)] - dot);
                    }
                }
            }
            vec![Some(Tensor::from_parts(shape, gx))]
        })
    }

    pub fn log_softmax_axis(&self, axis: usize) -> Var {
        let shape = self.shape().to_vec();
        let (outer, n, inner) = split_at_axis(&shape, axis);
        let x = self.value().data();
        let mut y = vec![0.0; x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| (o * n + k) * inner + i;
                let m = (0..n).map(|k| x[at(k)]).fold(f64::NEG_INFINITY, f64::max);
                let lse = m + (0..n).map(|k| (x[at(k)] - m).exp()).sum::<f64>().ln();
                for k in 0..n {
                    y[at(k)] = x[at(k)] - lse;
                }
            }
        }
        let yt = Tensor::from_parts(shape.clone(), y);
        let ys = std::rc::Rc::new(yt.clone());
        Var::from_op(yt, &[self], move |g, _| {
            let (y, gd) = (ys.data(), g.data());
            let mut gx = vec![0.0; y.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |k: usize| (o * n + k) * inner + i;
                    let s: f64 = (0..n).map(|k| gd[at(k)]).sum();
                    for k in 0..n {
                        gx[at(k)] = gd[at(k)] - y[at(k)].exp() * s;
                    }
                }
            }
            vec![Some(Tensor::from_parts(shape, gx))]
        })
    }

    pub fn reshape(&self, shape: &[usize]) -> Var {
        let value = self.value().reshape(shape).expect("reshape changes element count");
        let orig = self.shape().to_vec();
        Var::from_op(value, &[self], move |g, _| vec![Some(g.reshape(&orig).unwrap())])
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Var {
        let value = permute_tensor(self.value(), perm);
        let mut inv = vec![0; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        Var::from_op(value, &[self], move |g, _| vec![Some(permute_tensor(g, &inv))])
    }

    /// Slice `[start, start+len)` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Var {
        let shape = self.shape().to_vec();
        assert!(start + len <= shape[axis], "narrow out of range");
        let (outer, n, inner) = split_at_axis(&shape, axis);
        let x = self.value().data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * n + start) * inner;
            data.extend_from_slice(&x[base..base + len * inner]);
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        Var::from_op(Tensor::from_parts(out_shape, data), &[self], move |g, _| {
            let mut gx = vec![0.0; shape.iter().product()];
            for o in 0..outer {
                let base = (o * n + start) * inner;
                gx[base..base + len * inner].copy_from_slice(&g.data()[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(Tensor::from_parts(shape, gx))]
        })
    }

    /// Concatenation along `axis`; all other extents must agree.
    pub fn concat(parts: &[Var], axis: usize) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let first = parts[0].shape().to_vec();
        for p in parts {
            assert_eq!(p.shape().len(), first.len());
            for (ax, (&a, &b)) in p.shape().iter().zip(&first).enumerate() {
                assert!(ax == axis || a == b, "concat extents differ: {:?} vs {:?}", p.shape(), first);
            }
        }
        let lens: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let total: usize = lens.iter().sum();
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (p, &l) in parts.iter().zip(&lens) {
                data.extend_from_slice(&p.value().data()[o * l * inner..(o + 1) * l * inner]);
            }
        }
        let mut out_shape = first.clone();
        out_shape[axis] = total;
        let in_shapes: Vec<Vec<usize>> = parts.iter().map(|p| p.shape().to_vec()).collect();
        let refs: Vec<&Var> = parts.iter().collect();
        Var::from_op(Tensor::from_parts(out_shape, data), &refs, move |g, need| {
            let mut grads: Vec<Vec<f64>> =
                in_shapes.iter().map(|s| Vec::with_capacity(s.iter().product())).collect();
            let gd = g.data();
            let mut off = 0;
            for _ in 0..outer {
                for (gp, &l) in grads.iter_mut().zip(&lens) {
                    gp.extend_from_slice(&gd[off..off + l * inner]);
                    off += l * inner;
                }
            }
            grads
                .into_iter()
                .zip(in_shapes)
                .zip(need)
                .map(|((d, s), &n)| n.then(|| Tensor::from_parts(s, d)))
                .collect()
        })
    }

    /// Stacks equally shaped values along a new leading axis.
    pub fn stack0(parts: &[Var]) -> Var {
        let reshaped: Vec<Var> = parts
            .iter()
            .map(|p| {
                let mut s = vec![1];
                s.extend_from_slice(p.shape());
                p.reshape(&s)
            })
            .collect();
        Var::concat(&reshaped, 0)
    }

    /// Index `i` of the leading axis, with that axis removed.
    pub fn select0(&self, i: usize) -> Var {
        let s = self.shape()[1..].to_vec();
        self.narrow(0, i, 1).reshape(&s)
    }

    /// `x · W + b` over the trailing axis. `w` is (Cin, Cout), `b` is (Cout).
    pub fn linear(&self, w: &Var, b: Option<&Var>) -> Var {
        let cin = *self.shape().last().expect("linear on scalar");
        let (wi, cout) = (w.shape()[0], w.shape()[1]);
        assert_eq!(cin, wi, "linear: input width {} vs weight {:?}", cin, w.shape());
        let rows = self.numel() / cin;
        let xv = self.shared_value();
        let wv = w.shared_value();
        let mut y = vec![0.0; rows * cout];
        matmul_acc(xv.data(), wv.data(), &mut y, rows, cin, cout);
        let mut out_shape = self.shape().to_vec();
        *out_shape.last_mut().unwrap() = cout;
        let yt = Tensor::from_parts(out_shape, y);
        let xw = Var::from_op(yt, &[self, w], move |g, need| {
            let gx = need[0].then(|| {
                let mut gx = vec![0.0; rows * cin];
                for r in 0..rows {
                    let gr = &g.data()[r * cout..(r + 1) * cout];
                    let out = &mut gx[r * cin..(r + 1) * cin];
                    for (i, o) in out.iter_mut().enumerate() {
                        let wr = &wv.data()[i * cout..(i + 1) * cout];
                        *o = wr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    }
                }
                Tensor::from_parts(xv.shape().to_vec(), gx)
            });
            let gw = need[1].then(|| {
                let mut gw = vec![0.0; cin * cout];
                for r in 0..rows {
                    let gr = &g.data()[r * cout..(r + 1) * cout];
                    let xr = &xv.data()[r * cin..(r + 1) * cin];
                    for (i, &xi) in xr.iter().enumerate() {
                        if xi != 0.0 {
                            for (o, &gg) in gw[i * cout..(i + 1) * cout].iter_mut().zip(gr) {
                                *o += xi * gg;
                            }
                        }
                    }
                }
                Tensor::from_parts(vec![cin, cout], gw)
            });
            vec![gx, gw]
        });
        match b {
            Some(b) => {
                let mut bs = vec![1; xw.shape().len()];
                *bs.last_mut().unwrap() = cout;
                xw.add(&b.reshape(&bs))
            }
            None => xw,
        }
    }
}

/// `y[r, :] += x[r, :] · w` for row-major x (rows, cin), w (cin, cout).
pub(crate) fn matmul_acc(x: &[f64], w: &[f64], y: &mut [f64], rows: usize, cin: usize, cout: usize) {
    for r in 0..rows {
        let yr = &mut y[r * cout..(r + 1) * cout];
        for i in 0..cin {
            let xi = x[r * cin + i];
            if xi == 0.0 {
                continue;
            }
            for (o, &wv) in yr.iter_mut().zip(&w[i * cout..(i + 1) * cout]) {
                *o += xi * wv;
            }
        }
    }
}

pub(crate) fn permute_tensor(t: &Tensor, perm: &[usize]) -> Tensor {
    let shape = t.shape();
    assert_eq!(perm.len(), shape.len(), "permutation rank");
    let in_strides = t.strides();
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let zero = vec![0; perm.len()];
    let mut data = vec![0.0; t.numel()];
    let src = t.data();
    for_each_broadcast(&out_shape, &src_strides, &zero, |i, o, _| data[i] = src[o]);
    Tensor::from_parts(out_shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;

    fn t(shape: &[usize], v: &[f64]) -> Tensor {
        Tensor::new(shape, v.to_vec()).unwrap()
    }

    #[test]
    fn broadcast_mul_and_reduce() {
        let tape = Tape::new();
        let a = tape.leaf(t(&[2, 3], &[1., 2., 3., 4., 5., 6.]));
        let b = tape.leaf(t(&[2, 1], &[10., 100.]));
        let y = a.mul(&b);
        assert_eq!(y.value().data(), &[10., 20., 30., 400., 500., 600.]);
        let g = tape.backward(&y.sum_all()).unwrap();
        assert_eq!(g.get(&b).unwrap().data(), &[6., 15.]);
        assert_eq!(g.get(&a).unwrap().data(), &[10., 10., 10., 100., 100., 100.]);
    }

    #[test]
    fn permute_roundtrip() {
        let x = Tensor::from_fn(&[2, 3, 4], |i| (i[0] * 100 + i[1] * 10 + i[2]) as f64);
        let p = permute_tensor(&x, &[2, 0, 1]);
        assert_eq!(p.shape(), &[4, 2, 3]);
        assert_eq!(p.at(&[3, 1, 2]), 123.0);
        assert_eq!(permute_tensor(&p, &[1, 2, 0]), x);
    }

    #[test]
    fn narrow_concat_inverse() {
        let x = Var::constant(Tensor::from_fn(&[2, 5, 3], |i| (i[0] * 100 + i[1] * 10 + i[2]) as f64));
        let a = x.narrow(1, 0, 2);
        let b = x.narrow(1, 2, 3);
        assert_eq!(a.value().at(&[1, 1, 2]), 112.0);
        assert_eq!(Var::concat(&[a, b], 1).value(), x.value());
    }

    #[test]
    fn sigmoid_at_zero() {
        assert_eq!(sigmoid_scalar(0.0), 0.5);
        assert!((sigmoid_scalar(-800.0)).is_finite());
    }

    #[test]
    fn activations_trivia() {
        let x = Var::constant(t(&[2], &[7.0, -1.0]));
        assert_eq!(x.relu6().value().data(), &[6.0, 0.0]);
        assert_eq!(gelu_scalar(0.0), 0.0);
        assert!((gelu_scalar(10.0) - 10.0).abs() < 1e-6);
    }

    #[test]
    fn softmax_sums_to_one_and_shift_invariant() {
        let x = Var::constant(t(&[2, 3], &[1., 2., 3., -4., 0., 9.]));
        let y = x.softmax_axis(1);
        for r in 0..2 {
            let s: f64 = (0..3).map(|k| y.value().at(&[r, k])).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        let y2 = x.add_scalar(123.0).softmax_axis(1);
        assert!(y.value().max_abs_diff(y2.value()) < 1e-12);
    }

    #[test]
    fn max_axis_picks_max() {
        let x = Var::constant(t(&[1, 3, 1], &[1., 5., 3.]));
        assert_eq!(x.max_axis(1).value().data(), &[5.0]);
        assert_eq!(x.mean_axes(&[1]).value().data(), &[3.0]);
    }

    #[test]
    fn linear_identity_and_constant() {
        let x = Var::constant(Tensor::from_fn(&[2, 3], |i| (i[0] * 3 + i[1]) as f64));
        let eye = Var::constant(Tensor::from_fn(&[3, 3], |i| (i[0] == i[1]) as u8 as f64));
        assert_eq!(x.linear(&eye, None).value(), x.value());
        let zero = Var::constant(Tensor::zeros(&[3, 2]));
        let b = Var::constant(t(&[2], &[4.0, 4.0]));
        assert!(x.linear(&zero, Some(&b)).value().data().iter().all(|&v| v == 4.0));
    }
}
