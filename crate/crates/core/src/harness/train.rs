//! Desk-scale training loop over synthetic phantoms.

use std::fmt::Write as _;

use super::{apply_augment, dice_metric, hd95_metric, poly_lr, AugmentDraw, Hd95, OptimState, Phantom, PolySchedule};
use crate::autodiff::{Tape, Var};
use crate::error::{FeError, Result};
use crate::model::{argmax_labels, seg_loss, Checkpoint, FeFormer, ModelConfig};
use crate::params::{Ctx, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub steps: usize,
    pub batch_size: usize,
    pub n_phantoms: usize,
    pub extent: usize,
    pub schedule: PolySchedule,
    pub weight_decay: f64,
    /// Evaluate every this many steps (and after the last one); 0 disables
    /// intermediate evaluation.
    pub eval_every: usize,
    pub augment: bool,
    /// Seeds phantom generation, batch augmentation and dropout.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::toy(8, 3),
            steps: 300,
            batch_size: 4,
            n_phantoms: 4,
            extent: 32,
            schedule: PolySchedule { lr0: 1e-2, ..PolySchedule::default() },
            weight_decay: 0.01,
            eval_every: 50,
            augment: false,
            seed: 0,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| FeError::Config(format!("bad value {v:?} for key {key}")))
}

impl TrainConfig {
    /// Sets one field, delegating unknown keys to the model record.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "steps" => self.steps = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "n_phantoms" => self.n_phantoms = parse(key, value)?,
            "extent" => self.extent = parse(key, value)?,
            "lr0" => self.schedule.lr0 = parse(key, value)?,
            "lr_min" => self.schedule.lr_min = parse(key, value)?,
            "lr_power" => self.schedule.power = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "eval_every" => self.eval_every = parse(key, value)?,
            "augment" => self.augment = parse(key, value)?,
            "train_seed" => self.seed = parse(key, value)?,
            _ => return self.model.set(key, value),
        }
        Ok(true)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch_size == 0 || self.n_phantoms == 0 {
            return Err(FeError::Config("batch_size and n_phantoms must be positive".into()));
        }
        if self.extent == 0 || self.extent % 32 != 0 {
            return Err(FeError::Config(format!("extent {} must be a positive multiple of 32", self.extent)));
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| FeError::Config(format!("line {}: expected key=value", n + 1)))?;
            if !cfg.set(k.trim(), v)? {
                return Err(FeError::Config(format!("unknown key {}", k.trim())));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv(&self) -> String {
        let mut s = self.model.to_kv();
        let s_ = &mut s;
        writeln!(s_, "steps={}", self.steps).unwrap();
        writeln!(s_, "batch_size={}", self.batch_size).unwrap();
        writeln!(s_, "n_phantoms={}", self.n_phantoms).unwrap();
        writeln!(s_, "extent={}", self.extent).unwrap();
        writeln!(s_, "lr0={:?}", self.schedule.lr0).unwrap();
        writeln!(s_, "lr_min={:?}", self.schedule.lr_min).unwrap();
        writeln!(s_, "lr_power={:?}", self.schedule.power).unwrap();
        writeln!(s_, "weight_decay={:?}", self.weight_decay).unwrap();
        writeln!(s_, "eval_every={}", self.eval_every).unwrap();
        writeln!(s_, "augment={}", self.augment).unwrap();
        writeln!(s_, "train_seed={}", self.seed).unwrap();
        s
    }
}

/// SplitMix64 finalizer, used to derive independent per-step seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// Mean Dice per class over the evaluated phantoms.
    pub dice: Vec<f64>,
    /// Mean HD95 per foreground class over non-failing phantoms (index 0 is
    /// background and left at 0), with the failure count per class.
    pub hd95: Vec<f64>,
    pub hd95_failures: Vec<usize>,
}

impl EvalReport {
    pub fn mean_foreground_dice(&self) -> f64 {
        let fg = &self.dice[1..];
        fg.iter().sum::<f64>() / fg.len() as f64
    }

    pub fn mean_foreground_hd95(&self) -> f64 {
        let fg = &self.hd95[1..];
        fg.iter().sum::<f64>() / fg.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HistoryRow {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub dice: Option<Vec<f64>>,
}

pub fn history_tsv(rows: &[HistoryRow], n_classes: usize) -> String {
    let mut s = String::from("step\tlr\tloss");
    for c in 0..n_classes {
        write!(s, "\tdice_{c}").unwrap();
    }
    s.push('\n');
    for r in rows {
        write!(s, "{}\t{:e}\t{:.17e}", r.step, r.lr, r.loss).unwrap();
        for c in 0..n_classes {
            match &r.dice {
                Some(d) => write!(s, "\t{:.4}", d[c]).unwrap(),
                None => s.push_str("\t-"),
            }
        }
        s.push('\n');
    }
    s
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub model: FeFormer,
    pub store: ParamStore,
    pub optim: OptimState,
    pub phantoms: Vec<Phantom>,
    pub history: Vec<HistoryRow>,
}

impl Trainer {
    pub fn new(cfg: &TrainConfig, phantoms: Vec<Phantom>) -> Result<Self> {
        cfg.validate()?;
        if phantoms.is_empty() {
            return Err(FeError::Invalid("no training phantoms".into()));
        }
        let (model, store) = FeFormer::build(&cfg.model)?;
        let optim = OptimState::new(&store, cfg.schedule.lr0, cfg.weight_decay);
        Ok(Trainer { cfg: cfg.clone(), model, store, optim, phantoms, history: Vec::new() })
    }

    /// Restores parameters, buffers and optimizer state; the next step
    /// continues exactly where the saved run stopped.
    pub fn resume(cfg: &TrainConfig, phantoms: Vec<Phantom>, ck: &Checkpoint) -> Result<Self> {
        let mut t = Trainer::new(cfg, phantoms)?;
        ck.restore_into(&mut t.store)?;
        t.optim.load_from(ck, &t.store)?;
        Ok(t)
    }

    pub fn step_index(&self) -> usize {
        self.optim.step as usize
    }

    fn batch(&self, t: usize) -> Result<(Tensor, Vec<usize>)> {
        let e = self.cfg.extent;
        let vol = e * e * e;
        let b = self.cfg.batch_size;
        let mut data = Vec::with_capacity(b * vol);
        let mut labels = Vec::with_capacity(b * vol);
        for j in 0..b {
            let p = &self.phantoms[(t * b + j) % self.phantoms.len()];
            if self.cfg.augment {
                let a = apply_augment(p, &AugmentDraw::sample(mix_seed(self.cfg.seed, (t * b + j) as u64)));
                data.extend_from_slice(a.volume.data());
                labels.extend_from_slice(&a.labels);
            } else {
                data.extend_from_slice(p.volume.data());
                labels.extend_from_slice(&p.labels);
            }
        }
        Ok((Tensor::new(&[b, 1, e, e, e], data)?, labels))
    }

    /// One optimization step; returns the loss before the update.
    pub fn step(&mut self) -> Result<f64> {
        let t = self.step_index();
        let lr = poly_lr(t.min(self.cfg.steps), self.cfg.steps.max(1), &self.cfg.schedule)?;
        let (x, labels) = self.batch(t)?;
        let tape = Tape::new();
        let ctx = Ctx::new(&self.store, Some(tape.clone()), true, mix_seed(self.cfg.seed ^ 0xD5, t as u64));
        let logits = self.model.forward(&ctx, &Var::constant(x))?;
        let loss = seg_loss(&logits, &labels)?;
        let lv = loss.value().item()?;
        if !lv.is_finite() {
            return Err(FeError::NonFinite(format!("loss at step {t}")));
        }
        let mut grads = tape.backward(&loss)?;
        let g = ctx.gradients(&mut grads);
        let bn = ctx.take_bn_updates();
        drop(ctx);
        self.optim.lr = lr;
        super::adamw_step(&mut self.store, &g, &mut self.optim)?;
        self.store.apply_bn_updates(&bn);
        self.history.push(HistoryRow { step: t, lr, loss: lv, dice: None });
        Ok(lv)
    }

    pub fn predict(&self, volume: &Tensor) -> Result<Vec<usize>> {
        let ctx = Ctx::new(&self.store, None, false, 0);
        argmax_labels(self.model.forward(&ctx, &Var::constant(volume.clone()))?.value())
    }

    pub fn evaluate(&self) -> Result<EvalReport> {
        let k = self.cfg.model.n_classes;
        let e = self.cfg.extent;
        let mut dice = vec![0.0; k];
        let mut hd = vec![0.0; k];
        let mut hd_n = vec![0usize; k];
        let mut fails = vec![0usize; k];
        for p in &self.phantoms {
            let pred = self.predict(&p.volume)?;
            for c in 0..k {
                dice[c] += dice_metric(&pred, &p.labels, c) / self.phantoms.len() as f64;
                if c > 0 {
                    match hd95_metric(&pred, &p.labels, [e; 3], c, [1.0; 3]) {
                        Hd95::Millimeters(v) => {
                            hd[c] += v;
                            hd_n[c] += 1;
                        }
                        Hd95::Failure => fails[c] += 1,
                    }
                }
            }
        }
        for c in 1..k {
            hd[c] = if hd_n[c] > 0 { hd[c] / hd_n[c] as f64 } else { f64::INFINITY };
        }
        Ok(EvalReport { dice, hd95: hd, hd95_failures: fails })
    }

    /// Runs until `cfg.steps`, evaluating on schedule. Returns the final
    /// evaluation (None when no step ran).
    pub fn run(&mut self, on_step: impl FnMut(&HistoryRow)) -> Result<Option<EvalReport>> {
        self.run_until(self.cfg.steps, on_step)
    }

    /// Like [`Trainer::run`] but stops once `stop` steps (clamped to
    /// `cfg.steps`) have been taken in total.
    pub fn run_until(&mut self, stop: usize, mut on_step: impl FnMut(&HistoryRow)) -> Result<Option<EvalReport>> {
        let mut last = None;
        while self.step_index() < stop.min(self.cfg.steps) {
            self.step()?;
            let done = self.step_index();
            let every = self.cfg.eval_every;
            if done == self.cfg.steps || (every > 0 && done % every == 0) {
                let rep = self.evaluate()?;
                self.history.last_mut().unwrap().dice = Some(rep.dice.clone());
                last = Some(rep);
            }
            on_step(self.history.last().unwrap());
        }
        Ok(last)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::from_store(&self.store);
        self.optim.save_into(&mut ck, &self.store);
        ck
    }
}

pub struct TrainOutcome {
    pub history: Vec<HistoryRow>,
    pub checkpoint: Checkpoint,
    pub final_eval: Option<EvalReport>,
}

/// Trains `cfg.steps` steps from a fresh initialization.
pub fn train_toy(cfg: &TrainConfig, phantoms: Vec<Phantom>) -> Result<TrainOutcome> {
    let mut t = Trainer::new(cfg, phantoms)?;
    let final_eval = t.run(|_| {})?;
    Ok(TrainOutcome { checkpoint: t.checkpoint(), history: t.history, final_eval })
}
