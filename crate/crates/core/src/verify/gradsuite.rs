//! Finite-difference checks of each block and the toy model at small shapes.

use std::fmt;
use std::str::FromStr;

use crate::autodiff::{finite_difference_check, FdReport, FdSampling, Var};
use crate::blocks::{DecoderStem, EncoderStem, Fcsb, Fdsa, Fgmlp, FgmlpOptions, Waff};
use crate::error::{FeError, Result};
use crate::model::{FeFormer, ModelConfig};
use crate::params::{Builder, Ctx};
use crate::spectral::DEFAULT_CUTOFFS;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradModule {
    Fdsa,
    Fgmlp,
    Waff,
    Fcsb,
    Model,
}

impl GradModule {
    pub const ALL: [GradModule; 5] =
        [GradModule::Fdsa, GradModule::Fgmlp, GradModule::Waff, GradModule::Fcsb, GradModule::Model];

    pub fn name(self) -> &'static str {
        match self {
            GradModule::Fdsa => "fdsa",
            GradModule::Fgmlp => "fgmlp",
            GradModule::Waff => "waff",
            GradModule::Fcsb => "fcsb",
            GradModule::Model => "model",
        }
    }

    /// Pass threshold on the max relative error.
    pub fn default_tol(self) -> f64 {
        match self {
            GradModule::Model => 1e-3,
            _ => 1e-4,
        }
    }
}

impl fmt::Display for GradModule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GradModule {
    type Err = FeError;

    fn from_str(s: &str) -> Result<Self> {
        GradModule::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| FeError::Config(format!("unknown module {s:?}; expected fdsa, fgmlp, waff, fcsb or model")))
    }
}

#[derive(Clone, Debug)]
pub struct GradResult {
    pub module: GradModule,
    /// Names of the checked inputs, indexed like `report.worst`.
    pub inputs: Vec<String>,
    pub report: FdReport,
}

impl GradResult {
    /// "input[coord]" of the worst coordinate.
    pub fn worst_site(&self) -> String {
        match self.report.worst {
            Some((i, c)) => format!("{}[{c}]", self.inputs[i]),
            None => "-".into(),
        }
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.report.max_rel_err <= tol
    }
}

fn noise(shape: &[usize], seed: u64) -> Tensor {
    let mut s = seed;
    Tensor::from_fn(shape, |_| {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    })
}

fn names(first: &[&str], params: &[&str]) -> Vec<String> {
    first.iter().chain(params).map(|s| s.to_string()).collect()
}

/// Runs the check for `module`; `seed` varies the inputs and sampled
/// coordinates. The report's own `passed` uses the module's default tol.
pub fn gradcheck_module(module: GradModule, seed: u64) -> Result<GradResult> {
    let s = seed.wrapping_mul(1000);
    let tol = module.default_tol();
    let (inputs, report) = match module {
        GradModule::Fdsa => {
            let mut b = Builder::new(3);
            let m = Fdsa::new(&mut b, "fdsa", 4, DEFAULT_CUTOFFS)?;
            let mut store = b.finish();
            store.jitter(4, 0.1);
            let (dw, fc1) = (m.dw.weight, m.fc1.weight);
            let inputs = [noise(&[1, 4, 4, 4, 4], 7 + s), store.get(dw).clone(), store.get(fc1).clone()];
            let r = finite_difference_check(
                |v| {
                    let ctx = Ctx::new(&store, None, false, 0);
                    ctx.bind(dw, v[1].clone());
                    ctx.bind(fc1, v[2].clone());
                    Ok(m.forward(&ctx, &v[0])?.sum_all())
                },
                &inputs,
                1e-5,
                tol,
                FdSampling::Random { count: 200, seed: 1 + s },
            )?;
            (names(&["x"], &[store.name(dw), store.name(fc1)]), r)
        }
        GradModule::Fgmlp => {
            let mut b = Builder::new(6);
            let m = Fgmlp::new(&mut b, "mlp", 4, FgmlpOptions::default())?;
            let mut store = b.finish();
            store.jitter(7, 0.5);
            let (kg2, modw) = (m.kg2.weight, m.modulator.weight);
            let inputs = [noise(&[1, 4, 4, 4, 4], 8 + s), store.get(kg2).clone(), store.get(modw).clone()];
            // A plain sum would hide the kernels behind their unit DC gain.
            let readout = Var::constant(noise(&[1, 4, 4, 4, 4], 9 + s));
            let r = finite_difference_check(
                |v| {
                    let ctx = Ctx::new(&store, None, false, 0);
                    ctx.bind(kg2, v[1].clone());
                    ctx.bind(modw, v[2].clone());
                    Ok(m.forward(&ctx, &v[0])?.mul(&readout).sum_all())
                },
                &inputs,
                1e-4,
                tol,
                FdSampling::Random { count: 200, seed: 2 + s },
            )?;
            (names(&["x"], &[store.name(kg2), store.name(modw)]), r)
        }
        GradModule::Waff => {
            let mut b = Builder::new(0);
            let m = Waff::new(&mut b, "waff", false)?;
            let mut store = b.finish();
            store.jitter(2, 0.1);
            let fw = m.fuse[0].weight;
            let inputs = [noise(&[1, 2, 4, 4, 4], 12 + s), noise(&[1, 2, 4, 4, 4], 13 + s), store.get(fw).clone()];
            let r = finite_difference_check(
                |v| {
                    let ctx = Ctx::new(&store, None, false, 0);
                    ctx.bind(fw, v[2].clone());
                    Ok(m.forward(&ctx, &v[0], &v[1])?.sum_all())
                },
                &inputs,
                1e-5,
                tol,
                FdSampling::Random { count: 250, seed: 3 + s },
            )?;
            (names(&["skip", "up"], &[store.name(fw)]), r)
        }
        GradModule::Fcsb => {
            let mut b = Builder::new(11);
            let enc = EncoderStem::new(&mut b, "enc", 1, 8)?;
            let bridge = Fcsb::new(&mut b, "fcsb", 8)?;
            let dec = DecoderStem::new(&mut b, "dec", 8, 2)?;
            let mut store = b.finish();
            store.jitter(3, 0.05);
            let sp = bridge.spconv.weight;
            let inputs = [noise(&[1, 1, 8, 8, 8], 10 + s), store.get(sp).clone()];
            // f is near 1e3, so h = 1e-5 leaves rounding errors near 1e-4 relative.
            let r = finite_difference_check(
                |v| {
                    let ctx = Ctx::new(&store, None, true, 0);
                    ctx.bind(sp, v[1].clone());
                    let (x1, x2) = enc.forward(&ctx, &v[0])?;
                    let (h1, h2) = bridge.forward(&ctx, &x1, &x2)?;
                    let y = dec.forward(&ctx, &x2, Some((&h1, &h2)))?;
                    Ok(y.mul(&y).sum_all())
                },
                &inputs,
                1e-4,
                tol,
                FdSampling::Random { count: 200, seed: 4 + s },
            )?;
            (names(&["x"], &[store.name(sp)]), r)
        }
        GradModule::Model => {
            let cfg = ModelConfig::toy(4, 2);
            let (model, mut store) = FeFormer::build(&cfg)?;
            store.jitter(3, 0.05);
            let pnames = ["enc0.block0.attn.dw.weight", "dec1.waff.fuse.weight", "bridge.spconv.weight", "head.head.weight"];
            let ids: Vec<_> = pnames
                .iter()
                .map(|n| store.id(n).ok_or_else(|| FeError::Invalid(format!("model has no {n}"))))
                .collect::<Result<_>>()?;
            let mut inputs = vec![noise(&[1, 1, 32, 32, 32], 4 + s)];
            inputs.extend(ids.iter().map(|&id| store.get(id).clone()));
            // Zero-mean random readout: summing the logits instead gives f near
            // 1e4, whose rounding swamps gradients near 1e-4.
            let readout = Var::constant(noise(&[1, 2, 32, 32, 32], 6 + s));
            let r = finite_difference_check(
                |v| {
                    let ctx = Ctx::new(&store, None, true, 0);
                    for (id, var) in ids.iter().zip(&v[1..]) {
                        ctx.bind(*id, var.clone());
                    }
                    Ok(model.forward(&ctx, &v[0])?.mul(&readout).sum_all())
                },
                &inputs,
                1e-4,
                tol,
                FdSampling::Random { count: 200, seed: 5 + s },
            )?;
            (names(&["x"], &pnames), r)
        }
    };
    Ok(GradResult { module, inputs, report })
}
