//! Wall-clock comparison of spectral attention against dense pairwise
//! attention over all voxels.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Var;
use crate::blocks::freq_attention_scores;
use crate::error::Result;
use crate::nn::softmax_spatial;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub size: usize,
    pub freq_ms: f64,
    pub pairwise_ms: f64,
}

/// `softmax(ifft(fft q ⊙ fft k)) ⊙ v`, the token mixing inside the
/// frequency attention block.
pub fn freq_attention(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<Tensor> {
    let s = freq_attention_scores(&Var::constant(q.clone()), &Var::constant(k.clone()))?;
    Ok(softmax_spatial(&s)?.mul(&Var::constant(v.clone())).value().clone())
}

/// Scaled dot-product attention with every voxel as a token of C features.
/// Rows of the N×N score matrix are formed one at a time.
pub fn pairwise_attention(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<Tensor> {
    let [b, c, d, h, w] = q.dims5()?;
    let n = d * h * w;
    let scale = 1.0 / (c as f64).sqrt();
    let mut out = Tensor::zeros(q.shape());
    // Token-major copies: [b][token][channel].
    let tok = |t: &Tensor| -> Vec<f64> {
        let mut o = vec![0.0; b * n * c];
        for bb in 0..b {
            for cc in 0..c {
                for i in 0..n {
                    o[(bb * n + i) * c + cc] = t.data()[(bb * c + cc) * n + i];
                }
            }
        }
        o
    };
    let (qt, kt, vt) = (tok(q), tok(k), tok(v));
    let mut row = vec![0.0; n];
    let mut acc = vec![0.0; c];
    for bb in 0..b {
        for i in 0..n {
            let qi = &qt[(bb * n + i) * c..(bb * n + i + 1) * c];
            let mut mx = f64::NEG_INFINITY;
            for (j, r) in row.iter_mut().enumerate() {
                let kj = &kt[(bb * n + j) * c..(bb * n + j + 1) * c];
                *r = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
                mx = mx.max(*r);
            }
            let mut z = 0.0;
            for r in row.iter_mut() {
                *r = (*r - mx).exp();
                z += *r;
            }
            acc.iter_mut().for_each(|a| *a = 0.0);
            for (j, r) in row.iter().enumerate() {
                let vj = &vt[(bb * n + j) * c..(bb * n + j + 1) * c];
                for (a, x) in acc.iter_mut().zip(vj) {
                    *a += r * x;
                }
            }
            for (cc, a) in acc.iter().enumerate() {
                out.data_mut()[(bb * c + cc) * n + i] = a / z;
            }
        }
    }
    Ok(out)
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Shortest span one timed sample should cover; quick calls are repeated
/// within a sample so timer and scheduler noise stay small.
const MIN_SAMPLE_MS: f64 = 20.0;

/// Calls per sample so that one sample lasts about `MIN_SAMPLE_MS`.
fn calibrate(f: &mut dyn FnMut() -> Result<Tensor>) -> Result<usize> {
    let start = Instant::now();
    std::hint::black_box(f()?);
    let once = start.elapsed().as_secs_f64() * 1e3;
    Ok(((MIN_SAMPLE_MS / once.max(1e-6)).ceil() as usize).clamp(1, 10_000))
}

fn sample_ms(f: &mut dyn FnMut() -> Result<Tensor>, reps: usize) -> Result<f64> {
    let start = Instant::now();
    for _ in 0..reps {
        std::hint::black_box(f()?);
    }
    Ok(start.elapsed().as_secs_f64() * 1e3 / reps as f64)
}

/// Median per-call times over `runs` samples for a (1, channels, s, s, s)
/// input at each size. Samples are taken round-robin over sizes and
/// methods so slow drift in machine speed hits every entry alike.
pub fn attention_bench(sizes: &[usize], channels: usize, runs: usize, seed: u64) -> Result<Vec<BenchRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<[Tensor; 3]> = sizes
        .iter()
        .map(|&s| [0; 3].map(|_| Tensor::from_fn(&[1, channels, s, s, s], |_| rng.gen_range(-1.0..1.0))))
        .collect();
    let mut jobs: Vec<Box<dyn FnMut() -> Result<Tensor> + '_>> = Vec::new();
    for [q, k, v] in &inputs {
        jobs.push(Box::new(move || freq_attention(q, k, v)));
        jobs.push(Box::new(move || pairwise_attention(q, k, v)));
    }
    let reps: Vec<usize> = jobs.iter_mut().map(|f| calibrate(f.as_mut())).collect::<Result<_>>()?;
    let mut times = vec![Vec::with_capacity(runs); jobs.len()];
    for _ in 0..runs {
        for (j, f) in jobs.iter_mut().enumerate() {
            times[j].push(sample_ms(f.as_mut(), reps[j])?);
        }
    }
    Ok(sizes
        .iter()
        .enumerate()
        .map(|(i, &size)| BenchRow {
            size,
            freq_ms: median(&mut times[2 * i]),
            pairwise_ms: median(&mut times[2 * i + 1]),
        })
        .collect())
}

pub fn bench_tsv(rows: &[BenchRow], model_flops: f64) -> String {
    let mut s = String::from("size\tvoxels\tfreq_attention_ms\tpairwise_attention_ms\tmodel_flops\n");
    for r in rows {
        s += &format!("{}\t{}\t{:.4}\t{:.4}\t{:.0}\n", r.size, r.size.pow(3), r.freq_ms, r.pairwise_ms, model_flops);
    }
    s
}
