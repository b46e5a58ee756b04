//! Named numerical properties with brute-force or closed-form oracles.

use std::f64::consts::{PI, SQRT_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Var;
use crate::blocks::freq_attention_scores;
use crate::nn::{conv3d, pool, softmax_spatial, upsample_trilinear, ConvSpec, Pool};
use crate::spectral::{band_masks, dwt3_haar, fft3, fft3_complex, idwt3_haar, ifft3_complex, DEFAULT_CUTOFFS};
use crate::tensor::{ComplexTensor, Tensor};

/// `Ok(detail)` on success, `Err(detail)` on failure.
pub type Verdict = std::result::Result<String, String>;

pub struct Property {
    pub name: &'static str,
    pub tags: &'static [&'static str],
    pub run: fn(&mut ChaCha8Rng) -> Verdict,
}

#[derive(Clone, Debug)]
pub struct PropertyOutcome {
    pub name: &'static str,
    pub tags: &'static [&'static str],
    pub passed: bool,
    pub detail: String,
}

pub const SPECTRAL_SIZES: [usize; 3] = [2, 4, 8];

pub fn properties() -> Vec<Property> {
    vec![
        Property { name: "fft.matches_dft", tags: &["fft"], run: fft_matches_dft },
        Property { name: "fft.round_trip", tags: &["fft"], run: fft_round_trip },
        Property { name: "fft.parseval", tags: &["fft"], run: fft_parseval },
        Property { name: "fft.conv_theorem", tags: &["fft", "conv"], run: fft_conv_theorem },
        Property { name: "fft.delta_is_flat", tags: &["fft"], run: fft_delta_flat },
        Property { name: "fft.hermitian_symmetry", tags: &["fft"], run: fft_hermitian },
        Property { name: "fft.linearity", tags: &["fft"], run: fft_linearity },
        Property { name: "fft.shift_theorem", tags: &["fft"], run: fft_shift },
        Property { name: "attention.delta_key_is_identity", tags: &["fft", "attention"], run: attention_delta_key },
        Property { name: "mask.partition", tags: &["mask"], run: mask_partition },
        Property { name: "mask.dc_in_low", tags: &["mask"], run: mask_dc_low },
        Property { name: "mask.conjugate_symmetric", tags: &["mask"], run: mask_symmetric },
        Property { name: "dwt.round_trip", tags: &["dwt"], run: dwt_round_trip },
        Property { name: "dwt.energy", tags: &["dwt"], run: dwt_energy },
        Property { name: "dwt.constant_subbands", tags: &["dwt"], run: dwt_constant },
        Property { name: "dwt.matches_pairwise_filter", tags: &["dwt"], run: dwt_pairwise },
        Property { name: "softmax.sums_to_one", tags: &["softmax"], run: softmax_sums },
        Property { name: "softmax.shift_invariant", tags: &["softmax"], run: softmax_shift },
        Property { name: "softmax.constant_is_uniform", tags: &["softmax"], run: softmax_constant },
        Property { name: "pool.global_average", tags: &["pool"], run: pool_global },
        Property { name: "pool.channel_average", tags: &["pool"], run: pool_channel_avg },
        Property { name: "pool.channel_max", tags: &["pool"], run: pool_channel_max },
        Property { name: "conv.matches_direct_sum", tags: &["conv"], run: conv_direct },
        Property { name: "conv.transposed_is_adjoint", tags: &["conv"], run: conv_adjoint },
        Property { name: "resample.constant_preserved", tags: &["resample"], run: upsample_constant },
    ]
}

/// Runs every property tagged `filter` or whose name starts with it.
pub fn run_properties(filter: Option<&str>, seed: u64) -> Vec<PropertyOutcome> {
    properties()
        .into_iter()
        .filter(|p| filter.map_or(true, |f| p.tags.contains(&f) || p.name.starts_with(f)))
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (passed, detail) = match (p.run)(&mut rng) {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            PropertyOutcome { name: p.name, tags: p.tags, passed, detail }
        })
        .collect()
}

fn within(what: &str, err: f64, tol: f64) -> Verdict {
    if err <= tol {
        Ok(format!("{what} {err:.3e} <= {tol:.0e}"))
    } else {
        Err(format!("{what} {err:.3e} > {tol:.0e}"))
    }
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

fn cube(n: usize) -> [usize; 5] {
    [1, 1, n, n, n]
}

fn complex_diff(a: &ComplexTensor, b: &ComplexTensor) -> f64 {
    a.re.iter()
        .zip(&b.re)
        .chain(a.im.iter().zip(&b.im))
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn dft3(x: &Tensor) -> ComplexTensor {
    let [d, h, w] = x.spatial().unwrap();
    let n = d * h * w;
    let lead = x.numel() / n;
    let (mut re, mut im) = (vec![0.0; x.numel()], vec![0.0; x.numel()]);
    for l in 0..lead {
        let src = &x.data()[l * n..(l + 1) * n];
        for k in 0..n {
            let (kz, ky, kx) = (k / (h * w), (k / w) % h, k % w);
            let (mut sr, mut si) = (0.0, 0.0);
            for (j, &v) in src.iter().enumerate() {
                let (z, y, xx) = (j / (h * w), (j / w) % h, j % w);
                let ph = -2.0 * PI
                    * ((kz * z) as f64 / d as f64 + (ky * y) as f64 / h as f64 + (kx * xx) as f64 / w as f64);
                sr += v * ph.cos();
                si += v * ph.sin();
            }
            re[l * n + k] = sr;
            im[l * n + k] = si;
        }
    }
    ComplexTensor::new(x.shape(), re, im).unwrap()
}

/// Per-(b, c) circular convolution by direct summation.
pub fn circular_conv_brute(q: &Tensor, k: &Tensor) -> Tensor {
    let [b, c, d, h, w] = q.dims5().unwrap();
    let mut out = Tensor::zeros(q.shape());
    for bb in 0..b {
        for cc in 0..c {
            for z in 0..d {
                for y in 0..h {
                    for x in 0..w {
                        let mut s = 0.0;
                        for i in 0..d {
                            for j in 0..h {
                                for l in 0..w {
                                    s += q.at(&[bb, cc, i, j, l])
                                        * k.at(&[bb, cc, (z + d - i) % d, (y + h - j) % h, (x + w - l) % w]);
                                }
                            }
                        }
                        out.set(&[bb, cc, z, y, x], s);
                    }
                }
            }
        }
    }
    out
}

fn fft_matches_dft(rng: &mut ChaCha8Rng) -> Verdict {
    let mut worst = 0.0f64;
    for shape in [[1, 2, 4, 4, 4], [1, 1, 2, 4, 8]] {
        let x = uniform(rng, &shape);
        worst = worst.max(complex_diff(&fft3(&x).map_err(fail)?, &dft3(&x)));
    }
    within("max abs err vs direct DFT", worst, 1e-10)
}

fn fft_round_trip(rng: &mut ChaCha8Rng) -> Verdict {
    let mut worst = 0.0f64;
    for n in SPECTRAL_SIZES {
        let re = uniform(rng, &cube(n));
        let im = uniform(rng, &cube(n));
        let x = ComplexTensor::new(&cube(n), re.into_data(), im.into_data()).map_err(fail)?;
        let back = ifft3_complex(&fft3_complex(&x).map_err(fail)?).map_err(fail)?;
        worst = worst.max(complex_diff(&back, &x));
    }
    within("max abs round-trip err", worst, 1e-10)
}

fn fft_parseval(rng: &mut ChaCha8Rng) -> Verdict {
    let mut worst = 0.0f64;
    for n in SPECTRAL_SIZES {
        let x = uniform(rng, &cube(n));
        let e = x.sum_sq();
        let s = fft3(&x).map_err(fail)?.norm_sq() / x.numel() as f64;
        worst = worst.max((s - e).abs() / e);
    }
    within("relative energy err", worst, 1e-10)
}

pub fn conv_theorem_case(rng: &mut ChaCha8Rng, n: usize) -> Result<f64, String> {
    let b = rng.gen_range(1..=2);
    let c = rng.gen_range(1..=2);
    let q = uniform(rng, &[b, c, n, n, n]);
    let k = uniform(rng, &[b, c, n, n, n]);
    let got = freq_attention_scores(&Var::constant(q.clone()), &Var::constant(k.clone())).map_err(fail)?;
    Ok(got.value().max_abs_diff(&circular_conv_brute(&q, &k)))
}

fn fft_conv_theorem(rng: &mut ChaCha8Rng) -> Verdict {
    let mut worst = 0.0f64;
    for n in [4, 8] {
        for _ in 0..100 {
            worst = worst.max(conv_theorem_case(rng, n)?);
        }
    }
    within("max abs err over 100 cases per size", worst, 1e-10)
}

fn fft_delta_flat(_: &mut ChaCha8Rng) -> Verdict {
    let mut x = Tensor::zeros(&cube(4));
    x.data_mut()[0] = 1.0;
    let s = fft3(&x).map_err(fail)?;
    let err = s.re.iter().map(|v| (v - 1.0).abs()).chain(s.im.iter().map(|v| v.abs())).fold(0.0, f64::max);
    within("max deviation from 1", err, 1e-15)
}

fn fft_hermitian(rng: &mut ChaCha8Rng) -> Verdict {
    let n = 8;
    let x = uniform(rng, &cube(n));
    let s = fft3(&x).map_err(fail)?;
    let mut worst = 0.0f64;
    for i in 0..n * n * n {
        let (z, y, w) = (i / (n * n), (i / n) % n, i % n);
        let j = (((n - z) % n) * n + (n - y) % n) * n + (n - w) % n;
        worst = worst.max((s.re[i] - s.re[j]).abs()).max((s.im[i] + s.im[j]).abs());
    }
    within("max asymmetry", worst, 1e-12)
}

fn fft_linearity(rng: &mut ChaCha8Rng) -> Verdict {
    let (a, b) = (uniform(rng, &cube(4)), uniform(rng, &cube(4)));
    let (alpha, beta) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
    let mix = a.zip_map(&b, |x, y| alpha * x + beta * y).map_err(fail)?;
    let (fa, fb) = (fft3(&a).map_err(fail)?, fft3(&b).map_err(fail)?);
    let lin = ComplexTensor::new(
        fa.shape(),
        fa.re.iter().zip(&fb.re).map(|(x, y)| alpha * x + beta * y).collect(),
        fa.im.iter().zip(&fb.im).map(|(x, y)| alpha * x + beta * y).collect(),
    )
    .map_err(fail)?;
    within("max abs err", complex_diff(&fft3(&mix).map_err(fail)?, &lin), 1e-12)
}

fn fft_shift(rng: &mut ChaCha8Rng) -> Verdict {
    let n = 8;
    let x = uniform(rng, &cube(n));
    // y[z, h, w] = x[z, h, w - 1 mod n]
    let y = Tensor::from_fn(&cube(n), |i| x.at(&[0, 0, i[2], i[3], (i[4] + n - 1) % n]));
    let (sx, sy) = (fft3(&x).map_err(fail)?, fft3(&y).map_err(fail)?);
    let mut worst = 0.0f64;
    for i in 0..n * n * n {
        let ph = -2.0 * PI * (i % n) as f64 / n as f64;
        let (c, s) = (ph.cos(), ph.sin());
        let (er, ei) = (sx.re[i] * c - sx.im[i] * s, sx.re[i] * s + sx.im[i] * c);
        worst = worst.max((sy.re[i] - er).abs()).max((sy.im[i] - ei).abs());
    }
    within("max abs err", worst, 1e-12)
}

fn attention_delta_key(rng: &mut ChaCha8Rng) -> Verdict {
    let q = uniform(rng, &[2, 3, 4, 4, 4]);
    let k = Tensor::from_fn(q.shape(), |i| (i[2] + i[3] + i[4] == 0) as u8 as f64);
    let got = freq_attention_scores(&Var::constant(q.clone()), &Var::constant(k)).map_err(fail)?;
    within("max abs err", got.value().max_abs_diff(&q), 1e-14)
}

fn mask_partition(_: &mut ChaCha8Rng) -> Verdict {
    for n in SPECTRAL_SIZES {
        let m = band_masks([n; 3], DEFAULT_CUTOFFS).map_err(fail)?;
        let [l, md, h] = m.bands();
        for i in 0..n * n * n {
            let vals = [l[i], md[i], h[i]];
            if vals.iter().any(|&v| v != 0.0 && v != 1.0) || vals.iter().sum::<f64>() != 1.0 {
                return Err(format!("{n}^3 bin {i}: masks {vals:?}"));
            }
        }
    }
    Ok("every bin in exactly one band at 2^3, 4^3, 8^3".into())
}

fn mask_dc_low(_: &mut ChaCha8Rng) -> Verdict {
    for n in SPECTRAL_SIZES {
        let m = band_masks([n; 3], DEFAULT_CUTOFFS).map_err(fail)?;
        if m.low[0] != 1.0 {
            return Err(format!("DC bin not low at {n}^3"));
        }
    }
    Ok("DC bin low at 2^3, 4^3, 8^3".into())
}

fn mask_symmetric(_: &mut ChaCha8Rng) -> Verdict {
    for n in SPECTRAL_SIZES {
        let m = band_masks([n; 3], DEFAULT_CUTOFFS).map_err(fail)?;
        for band in m.bands() {
            for i in 0..n * n * n {
                let (z, y, w) = (i / (n * n), (i / n) % n, i % n);
                let j = (((n - z) % n) * n + (n - y) % n) * n + (n - w) % n;
                if band[i] != band[j] {
                    return Err(format!("{n}^3 bins {i} and {j} differ"));
                }
            }
        }
    }
    Ok("masks match at f and -f".into())
}

fn dwt_round_trip(rng: &mut ChaCha8Rng) -> Verdict {
    let mut worst = 0.0f64;
    for shape in [[1, 1, 2, 2, 2], [2, 3, 4, 4, 4], [1, 2, 8, 4, 6]] {
        let x = uniform(rng, &shape);
        let back = idwt3_haar(&dwt3_haar(&x).map_err(fail)?).map_err(fail)?;
        worst = worst.max(back.max_abs_diff(&x));
    }
    within("max abs round-trip err", worst, 1e-10)
}

fn dwt_energy(rng: &mut ChaCha8Rng) -> Verdict {
    let mut worst = 0.0f64;
    for n in [2, 4, 8] {
        let x = uniform(rng, &[1, 2, n, n, n]);
        let e = x.sum_sq();
        worst = worst.max((dwt3_haar(&x).map_err(fail)?.energy() - e).abs() / e);
    }
    within("relative energy err", worst, 1e-12)
}

fn dwt_constant(rng: &mut ChaCha8Rng) -> Verdict {
    let v = rng.gen_range(-3.0..3.0);
    let s = dwt3_haar(&Tensor::full(&[1, 1, 4, 4, 4], v)).map_err(fail)?;
    let mut worst = s.bands[0].data().iter().map(|x| (x - 2.0 * SQRT_2 * v).abs()).fold(0.0, f64::max);
    for band in &s.bands[1..] {
        worst = worst.max(band.max_abs());
    }
    within("max deviation from (2√2·v, 0, ..)", worst, 1e-12)
}

fn dwt_pairwise(rng: &mut ChaCha8Rng) -> Verdict {
    let x = uniform(rng, &[1, 1, 4, 4, 4]);
    let s = dwt3_haar(&x).map_err(fail)?;
    let mut worst = 0.0f64;
    for (k, band) in s.bands.iter().enumerate() {
        // Bits of k, high to low, select high-pass along D, H, W.
        let hi = [k & 4 != 0, k & 2 != 0, k & 1 != 0];
        for o in 0..8 {
            let (z, y, w) = (o / 4, (o / 2) % 2, o % 2);
            let mut acc = 0.0;
            for t in 0..8 {
                let off = [t / 4, (t / 2) % 2, t % 2];
                let sign: f64 = (0..3).map(|a| if hi[a] && off[a] == 1 { -1.0 } else { 1.0 }).product();
                acc += sign * x.at(&[0, 0, 2 * z + off[0], 2 * y + off[1], 2 * w + off[2]]);
            }
            worst = worst.max((band.at(&[0, 0, z, y, w]) - acc / (2.0 * SQRT_2)).abs());
        }
    }
    within("max abs err vs explicit 2x2x2 filters", worst, 1e-14)
}

fn softmax_sums(rng: &mut ChaCha8Rng) -> Verdict {
    let x = uniform(rng, &[2, 3, 4, 4, 4]).scale(20.0);
    let p = softmax_spatial(&Var::constant(x)).map_err(fail)?;
    let mut worst = 0.0f64;
    for chunk in p.value().data().chunks(64) {
        worst = worst.max((chunk.iter().sum::<f64>() - 1.0).abs());
        if chunk.iter().any(|&v| v < 0.0) {
            return Err("negative probability".into());
        }
    }
    within("max |sum - 1|", worst, 1e-13)
}

fn softmax_shift(rng: &mut ChaCha8Rng) -> Verdict {
    let x = uniform(rng, &[1, 2, 4, 4, 4]);
    let shifted = x.map(|v| v + 123.0);
    let a = softmax_spatial(&Var::constant(x)).map_err(fail)?;
    let b = softmax_spatial(&Var::constant(shifted)).map_err(fail)?;
    within("max abs err", a.value().max_abs_diff(b.value()), 1e-14)
}

fn softmax_constant(rng: &mut ChaCha8Rng) -> Verdict {
    let v = rng.gen_range(-5.0..5.0);
    let p = softmax_spatial(&Var::constant(Tensor::full(&[1, 1, 4, 4, 4], v))).map_err(fail)?;
    within("max deviation from 1/64", p.value().data().iter().map(|x| (x - 1.0 / 64.0).abs()).fold(0.0, f64::max), 1e-16)
}

fn pool_global(rng: &mut ChaCha8Rng) -> Verdict {
    let x = uniform(rng, &[2, 3, 2, 4, 2]);
    let p = pool(Pool::GlobalAvgSpatial, &Var::constant(x.clone())).map_err(fail)?;
    let mut worst = 0.0f64;
    for (i, chunk) in x.data().chunks(16).enumerate() {
        worst = worst.max((p.value().data()[i] - chunk.iter().sum::<f64>() / 16.0).abs());
    }
    within("max abs err", worst, 1e-15)
}

fn channel_oracle(rng: &mut ChaCha8Rng, kind: Pool, f: fn(&[f64]) -> f64) -> Verdict {
    let x = uniform(rng, &[2, 3, 2, 2, 2]);
    let p = pool(kind, &Var::constant(x.clone())).map_err(fail)?;
    let mut worst = 0.0f64;
    for b in 0..2 {
        for s in 0..8 {
            let vals: Vec<f64> = (0..3).map(|c| x.data()[(b * 3 + c) * 8 + s]).collect();
            worst = worst.max((p.value().data()[b * 8 + s] - f(&vals)).abs());
        }
    }
    within("max abs err", worst, 1e-15)
}

fn pool_channel_avg(rng: &mut ChaCha8Rng) -> Verdict {
    channel_oracle(rng, Pool::AvgOverChannels, |v| v.iter().sum::<f64>() / v.len() as f64)
}

fn pool_channel_max(rng: &mut ChaCha8Rng) -> Verdict {
    channel_oracle(rng, Pool::MaxOverChannels, |v| v.iter().cloned().fold(f64::MIN, f64::max))
}

fn conv_direct(rng: &mut ChaCha8Rng) -> Verdict {
    let spec = ConvSpec::strided(2, 3, 3, 2, 1);
    let x = uniform(rng, &[1, 2, 5, 4, 6]);
    let wt = uniform(rng, &spec.weight_shape());
    let y = conv3d(&Var::constant(x.clone()), &spec, &Var::constant(wt.clone()), None).map_err(fail)?;
    let [_, co, od, oh, ow] = y.value().dims5().map_err(fail)?;
    let mut worst = 0.0f64;
    for o in 0..co {
        for z in 0..od {
            for yy in 0..oh {
                for xx in 0..ow {
                    let mut s = 0.0;
                    for ci in 0..2 {
                        for a in 0..3 {
                            for b in 0..3 {
                                for c in 0..3 {
                                    let (iz, iy, ix) = (2 * z + a, 2 * yy + b, 2 * xx + c);
                                    if iz < 1 || iy < 1 || ix < 1 || iz > 5 || iy > 4 || ix > 6 {
                                        continue;
                                    }
                                    s += wt.at(&[o, ci, a, b, c]) * x.at(&[0, ci, iz - 1, iy - 1, ix - 1]);
                                }
                            }
                        }
                    }
                    worst = worst.max((y.value().at(&[0, o, z, yy, xx]) - s).abs());
                }
            }
        }
    }
    within("max abs err vs direct sum", worst, 1e-13)
}

fn conv_adjoint(rng: &mut ChaCha8Rng) -> Verdict {
    // <conv(x), y> = <x, conv^T(y)> with one shared weight tensor.
    let down = ConvSpec::strided(2, 3, 2, 2, 0);
    let up = ConvSpec::upsampling(3, 2, 2, 2);
    let wt = uniform(rng, &down.weight_shape());
    let x = uniform(rng, &[1, 2, 4, 4, 4]);
    let y = uniform(rng, &[1, 3, 2, 2, 2]);
    let cx = conv3d(&Var::constant(x.clone()), &down, &Var::constant(wt.clone()), None).map_err(fail)?;
    let ty = conv3d(&Var::constant(y.clone()), &up, &Var::constant(wt), None).map_err(fail)?;
    let (l, r) = (cx.value().dot(&y), x.dot(ty.value()));
    within("inner-product mismatch", (l - r).abs() / l.abs().max(1.0), 1e-13)
}

fn upsample_constant(rng: &mut ChaCha8Rng) -> Verdict {
    let v = rng.gen_range(-2.0..2.0);
    let y = upsample_trilinear(&Var::constant(Tensor::full(&[1, 2, 2, 3, 4], v)), [4, 7, 8]).map_err(fail)?;
    within("max deviation", y.value().data().iter().map(|x| (x - v).abs()).fold(0.0, f64::max), 1e-15)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_properties_pass() {
        let out = run_properties(None, 0);
        assert!(out.len() >= 20);
        for o in &out {
            assert!(o.passed, "{}: {}", o.name, o.detail);
        }
    }

    #[test]
    fn filter_selects_by_tag() {
        let out = run_properties(Some("fft"), 0);
        assert!(out.iter().all(|o| o.tags.contains(&"fft")));
        assert_eq!(out.len(), 9);
    }
}
