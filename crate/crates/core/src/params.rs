//! Named parameter storage, deterministic initialization and the per-pass
//! binding context.

use std::cell::{Cell, RefCell};

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{Grads, Tape, Var};
use crate::error::{FeError, Result};
use crate::nn::{BnBatchStats, BnRunning, BN_MOMENTUM};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BufferId(pub usize);

/// How a parameter was initialized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Normal(0, std) resampled until within ±2·std.
    TruncNormal { std: f64 },
    /// Normal(0, √(2 / fan_in)).
    KaimingNormal { fan_in: usize },
    Zeros,
    Ones,
    Loaded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub init: Init,
}

/// Ordered name → tensor map; iteration order is insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: IndexMap<String, Param>,
    buffers: IndexMap<String, BnRunning>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor, init: Init) -> Result<ParamId> {
        if self.params.contains_key(name) {
            return Err(FeError::Invalid(format!("duplicate parameter name {name}")));
        }
        let (i, _) = self.params.insert_full(name.to_string(), Param { value, init });
        Ok(ParamId(i))
    }

    pub fn insert_buffer(&mut self, name: &str, run: BnRunning) -> Result<BufferId> {
        if self.buffers.contains_key(name) {
            return Err(FeError::Invalid(format!("duplicate buffer name {name}")));
        }
        let (i, _) = self.buffers.insert_full(name.to_string(), run);
        Ok(BufferId(i))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        self.params.get_index(id.0).map(|(k, _)| k.as_str()).unwrap()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.params.get_index_of(name).map(ParamId)
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name).map(|p| &p.value)
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name).map(|p| &mut p.value)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Param)> {
        self.params.iter().enumerate().map(|(i, (k, p))| (ParamId(i), k.as_str(), p))
    }

    pub fn buffer(&self, id: BufferId) -> &BnRunning {
        &self.buffers[id.0]
    }

    pub fn buffer_mut(&mut self, id: BufferId) -> &mut BnRunning {
        &mut self.buffers[id.0]
    }

    pub fn buffers(&self) -> impl Iterator<Item = (BufferId, &str, &BnRunning)> {
        self.buffers.iter().enumerate().map(|(i, (k, b))| (BufferId(i), k.as_str(), b))
    }

    pub fn buffer_by_name_mut(&mut self, name: &str) -> Option<&mut BnRunning> {
        self.buffers.get_mut(name)
    }

    pub fn n_buffers(&self) -> usize {
        self.buffers.len()
    }

    /// Number of learnable scalars.
    pub fn param_count(&self) -> usize {
        self.params.values().map(|p| p.value.numel()).sum()
    }

    /// Adds uniform noise in ±`scale` to every parameter; makes zero-initialized
    /// biases and unit norm gains generic for gradient checks.
    pub fn jitter(&mut self, seed: u64, scale: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in self.params.values_mut() {
            p.value.data_mut().iter_mut().for_each(|v| *v += scale * (2.0 * rng.gen::<f64>() - 1.0));
        }
    }

    /// Folds one pass worth of batch statistics into the running buffers.
    pub fn apply_bn_updates(&mut self, updates: &[(BufferId, BnBatchStats)]) {
        for (id, stats) in updates {
            self.buffers[id.0].update(stats, BN_MOMENTUM);
        }
    }
}

/// Seeded initializer used while constructing a model.
pub struct Builder {
    pub store: ParamStore,
    rng: ChaCha8Rng,
}

impl Builder {
    pub fn new(seed: u64) -> Self {
        Builder { store: ParamStore::new(), rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn param(&mut self, name: &str, shape: &[usize], init: Init) -> Result<ParamId> {
        let rng = &mut self.rng;
        let value = match init {
            Init::TruncNormal { std } => Tensor::from_fn(shape, |_| loop {
                let z: f64 = StandardNormal.sample(rng);
                if z.abs() <= 2.0 {
                    break z * std;
                }
            }),
            Init::KaimingNormal { fan_in } => {
                let std = (2.0 / fan_in.max(1) as f64).sqrt();
                Tensor::from_fn(shape, |_| {
                    let z: f64 = StandardNormal.sample(rng);
                    z * std
                })
            }
            Init::Zeros | Init::Loaded => Tensor::zeros(shape),
            Init::Ones => Tensor::ones(shape),
        };
        self.store.insert(name, value, init)
    }

    pub fn buffer(&mut self, name: &str, channels: usize) -> Result<BufferId> {
        self.store.insert_buffer(name, BnRunning::new(channels))
    }

    pub fn finish(self) -> ParamStore {
        self.store
    }
}

/// Per-pass state: binds parameters to the tape on first use, records batch
/// statistics, stage shapes and the imaginary energy dropped by real-part
/// extractions.
pub struct Ctx<'s> {
    store: &'s ParamStore,
    tape: Option<Tape>,
    bound: RefCell<Vec<Option<Var>>>,
    pub training: bool,
    bn_updates: RefCell<Vec<(BufferId, BnBatchStats)>>,
    rng: RefCell<ChaCha8Rng>,
    trace: RefCell<Vec<(String, Vec<usize>)>>,
    dropped_imag: Cell<f64>,
}

impl<'s> Ctx<'s> {
    /// `tape = None` evaluates without recording anything.
    pub fn new(store: &'s ParamStore, tape: Option<Tape>, training: bool, seed: u64) -> Self {
        Ctx {
            store,
            tape,
            bound: RefCell::new(vec![None; store.len()]),
            training,
            bn_updates: RefCell::new(Vec::new()),
            rng: RefCell::new(ChaCha8Rng::seed_from_u64(seed)),
            trace: RefCell::new(Vec::new()),
            dropped_imag: Cell::new(0.0),
        }
    }

    pub fn store(&self) -> &ParamStore {
        self.store
    }

    pub fn tape(&self) -> Option<&Tape> {
        self.tape.as_ref()
    }

    pub fn param(&self, id: ParamId) -> Var {
        let mut bound = self.bound.borrow_mut();
        bound[id.0]
            .get_or_insert_with(|| {
                let v = self.store.get(id).clone();
                match &self.tape {
                    Some(t) => t.leaf(v),
                    None => Var::constant(v),
                }
            })
            .clone()
    }

    /// Substitutes an external variable for a parameter (used by gradient
    /// checks that perturb weights).
    pub fn bind(&self, id: ParamId, var: Var) {
        self.bound.borrow_mut()[id.0] = Some(var);
    }

    pub fn buffer(&self, id: BufferId) -> &BnRunning {
        self.store.buffer(id)
    }

    pub fn record_bn(&self, id: BufferId, stats: BnBatchStats) {
        self.bn_updates.borrow_mut().push((id, stats));
    }

    pub fn take_bn_updates(&self) -> Vec<(BufferId, BnBatchStats)> {
        std::mem::take(&mut *self.bn_updates.borrow_mut())
    }

    pub fn with_rng<T>(&self, f: impl FnOnce(&mut ChaCha8Rng) -> T) -> T {
        f(&mut self.rng.borrow_mut())
    }

    pub fn uniform(&self) -> f64 {
        self.rng.borrow_mut().gen()
    }

    pub fn trace(&self, what: &str, shape: &[usize]) {
        self.trace.borrow_mut().push((what.to_string(), shape.to_vec()));
    }

    pub fn take_trace(&self) -> Vec<(String, Vec<usize>)> {
        std::mem::take(&mut *self.trace.borrow_mut())
    }

    pub fn note_dropped_imag(&self, energy: f64) {
        self.dropped_imag.set(self.dropped_imag.get() + energy);
    }

    /// Total squared imaginary magnitude discarded so far.
    pub fn dropped_imag(&self) -> f64 {
        self.dropped_imag.get()
    }

    /// Gradient of every parameter in store order; `None` for parameters the
    /// pass never touched.
    pub fn gradients(&self, grads: &mut Grads) -> Vec<Option<Tensor>> {
        self.bound
            .borrow()
            .iter()
            .map(|b| b.as_ref().and_then(|v| grads.take(v)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builder_is_deterministic() {
        let make = || {
            let mut b = Builder::new(7);
            b.param("a", &[3, 4], Init::TruncNormal { std: 0.02 }).unwrap();
            b.param("b", &[5], Init::KaimingNormal { fan_in: 5 }).unwrap();
            b.finish()
        };
        assert_eq!(make(), make());
        let s = make();
        assert!(s.by_name("a").unwrap().data().iter().all(|v| v.abs() <= 0.04));
        assert_eq!(s.param_count(), 17);
        assert_eq!(s.name(ParamId(1)), "b");
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut b = Builder::new(0);
        b.param("w", &[1], Init::Zeros).unwrap();
        assert!(b.param("w", &[1], Init::Zeros).is_err());
    }

    #[test]
    fn ctx_binds_once_and_collects_grads() {
        let mut b = Builder::new(0);
        let id = b.param("w", &[2], Init::Ones).unwrap();
        let unused = b.param("u", &[2], Init::Ones).unwrap();
        let store = b.finish();
        let tape = Tape::new();
        let ctx = Ctx::new(&store, Some(tape.clone()), true, 0);
        let loss = ctx.param(id).mul(&ctx.param(id)).sum_all();
        let mut g = tape.backward(&loss).unwrap();
        let grads = ctx.gradients(&mut g);
        assert_eq!(grads[id.0].as_ref().unwrap().data(), &[2.0, 2.0]);
        assert!(grads[unused.0].is_none());
    }
}
