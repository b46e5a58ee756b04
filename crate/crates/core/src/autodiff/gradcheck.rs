use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Tape, Var};
use crate::error::{FeError, Result};
use crate::tensor::Tensor;

/// Which coordinates of the inputs get perturbed.
#[derive(Clone, Copy, Debug)]
pub enum FdSampling {
    All,
    /// `count` distinct coordinates drawn uniformly over all inputs.
    Random { count: usize, seed: u64 },
}

#[derive(Clone, Debug)]
pub struct FdReport {
    pub max_rel_err: f64,
    /// (input index, flat coordinate) of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub checked: usize,
    pub tol: f64,
    pub passed: bool,
}

/// Compares reverse-mode gradients of a scalar closure against central
/// differences `(f(x+h) - f(x-h)) / 2h`.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn finite_difference_check<F>(
    f: F,
    inputs: &[Tensor],
    h: f64,
    tol: f64,
    sampling: FdSampling,
) -> Result<FdReport>
where
    F: Fn(&[Var]) -> Result<Var>,
{
    if h <= 0.0 || h.is_nan() {
        return Err(FeError::Invalid(format!("finite-difference step must be positive, got {h}")));
    }
    if inputs.iter().any(|t| !t.is_finite()) {
        return Err(FeError::Invalid("finite-difference inputs must be finite".into()));
    }

    let tape = Tape::new();
    let leaves: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&leaves)?;
    if out.numel() != 1 {
        return Err(FeError::Invalid(format!("closure must reduce to a scalar, got {:?}", out.shape())));
    }
    let grads = tape.backward(&out)?;
    let analytic: Vec<Tensor> = leaves.iter().map(|l| grads.get(l).cloned().unwrap()).collect();
    drop(grads);

    let sizes: Vec<usize> = inputs.iter().map(Tensor::numel).collect();
    let total: usize = sizes.iter().sum();
    let coords: Vec<usize> = match sampling {
        FdSampling::All => (0..total).collect(),
        FdSampling::Random { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut v = rand::seq::index::sample(&mut rng, total, count.min(total)).into_vec();
            v.sort_unstable();
            v
        }
    };

    let eval = |which: usize, coord: usize, delta: f64| -> Result<f64> {
        let vars: Vec<Var> = inputs
            .iter()
            .enumerate()
            .map(|(i, t)| {
                if i == which {
                    let mut p = t.clone();
                    p.data_mut()[coord] += delta;
                    Var::constant(p)
                } else {
                    Var::constant(t.clone())
                }
            })
            .collect();
        let v = f(&vars)?.value().item()?;
        if !v.is_finite() {
            return Err(FeError::NonFinite(format!("perturbed evaluation at input {which}, coordinate {coord}")));
        }
        Ok(v)
    };

    let mut report = FdReport {
        max_rel_err: 0.0,
        worst: None,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        checked: 0,
        tol,
        passed: true,
    };
    for flat in coords {
        let mut which = 0;
        let mut coord = flat;
        while coord >= sizes[which] {
            coord -= sizes[which];
            which += 1;
        }
        let numeric = (eval(which, coord, h)? - eval(which, coord, -h)?) / (2.0 * h);
        let a = analytic[which].data()[coord];
        let denom = a.abs().max(numeric.abs()).max(1e-8);
        let rel = (a - numeric).abs() / denom;
        report.checked += 1;
        if rel > report.max_rel_err || report.worst.is_none() {
            report.max_rel_err = rel;
            report.worst = Some((which, coord));
            report.worst_analytic = a;
            report.worst_numeric = numeric;
        }
    }
    report.passed = report.max_rel_err <= tol;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_is_exact() {
        let x = Tensor::from_fn(&[3, 2], |i| i[0] as f64 - i[1] as f64 * 0.3);
        let r = finite_difference_check(|v| Ok(v[0].sum_all()), &[x], 1e-5, 1e-6, FdSampling::All).unwrap();
        assert!(r.passed);
        assert!(r.max_rel_err < 1e-9);
        assert_eq!(r.checked, 6);
    }

    #[test]
    fn sigmoid_at_zero_is_quarter() {
        let x = Tensor::zeros(&[1]);
        let r = finite_difference_check(|v| Ok(v[0].sigmoid().sum_all()), &[x], 1e-5, 1e-6, FdSampling::All)
            .unwrap();
        assert!(r.passed);
        assert!((r.worst_analytic - 0.25).abs() < 1e-15);
        assert!((r.worst_numeric - 0.25).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_step_and_non_scalar() {
        let x = Tensor::zeros(&[2]);
        assert!(finite_difference_check(|v| Ok(v[0].sum_all()), &[x.clone()], 0.0, 1e-6, FdSampling::All).is_err());
        assert!(finite_difference_check(|v| Ok(v[0].clone()), &[x], 1e-5, 1e-6, FdSampling::All).is_err());
    }

    #[test]
    fn propagates_closure_errors() {
        let x = Tensor::zeros(&[2]);
        let r = finite_difference_check(
            |_| Err(FeError::Invalid("boom".into())),
            &[x],
            1e-5,
            1e-6,
            FdSampling::All,
        );
        assert!(r.is_err());
    }

    #[test]
    fn non_finite_perturbation_is_an_error() {
        // ln(x) at x = 1e-6 with h = 1e-5 evaluates ln of a negative number.
        let x = Tensor::full(&[1], 1e-6);
        let r = finite_difference_check(|v| Ok(v[0].ln().sum_all()), &[x], 1e-5, 1e-6, FdSampling::All);
        assert!(matches!(r, Err(FeError::NonFinite(_))));
    }

    #[test]
    fn random_sampling_counts() {
        let x = Tensor::from_fn(&[10, 10], |i| (i[0] * 10 + i[1]) as f64 * 0.01);
        let r = finite_difference_check(
            |v| Ok(v[0].mul(&v[0]).sum_all()),
            &[x],
            1e-5,
            1e-6,
            FdSampling::Random { count: 17, seed: 3 },
        )
        .unwrap();
        assert_eq!(r.checked, 17);
        assert!(r.passed);
    }
}
