//! AdamW and the polynomial learning-rate schedule.

use crate::error::{FeError, Result};
use crate::model::Checkpoint;
use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct OptimState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl OptimState {
    pub fn new(store: &ParamStore, lr: f64, weight_decay: f64) -> Self {
        let zeros: Vec<Tensor> = store.iter().map(|(_, _, p)| Tensor::zeros(p.value.shape())).collect();
        OptimState { m: zeros.clone(), v: zeros, step: 0, lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay }
    }

    /// Adds `optim.m.*`, `optim.v.*` and `optim.step` entries.
    pub fn save_into(&self, ck: &mut Checkpoint, store: &ParamStore) {
        for ((_, name, _), (m, v)) in store.iter().zip(self.m.iter().zip(&self.v)) {
            ck.insert(&format!("optim.m.{name}"), m.clone());
            ck.insert(&format!("optim.v.{name}"), v.clone());
        }
        ck.insert("optim.step", Tensor::new(&[1], vec![self.step as f64]).unwrap());
    }

    /// Restores moments and step; `lr` and hyperparameters stay as given.
    pub fn load_from(&mut self, ck: &Checkpoint, store: &ParamStore) -> Result<()> {
        for (i, (_, name, p)) in store.iter().enumerate() {
            for (prefix, dst) in [("m", &mut self.m[i]), ("v", &mut self.v[i])] {
                let key = format!("optim.{prefix}.{name}");
                let t = ck.get(&key).ok_or_else(|| FeError::Format(format!("checkpoint has no {key}")))?;
                if t.shape() != p.value.shape() {
                    return Err(FeError::Format(format!("{key}: shape {:?} vs {:?}", t.shape(), p.value.shape())));
                }
                *dst = t.clone();
            }
        }
        let step = ck.get("optim.step").ok_or_else(|| FeError::Format("checkpoint has no optim.step".into()))?;
        self.step = step.data()[0] as u64;
        Ok(())
    }
}

/// One AdamW update with decoupled weight decay. `grads` is in store order.
pub fn adamw_step(store: &mut ParamStore, grads: &[Option<Tensor>], st: &mut OptimState) -> Result<()> {
    if grads.len() != store.len() || st.m.len() != store.len() {
        return Err(FeError::Invalid(format!(
            "{} gradients and {} moment slots for {} parameters",
            grads.len(),
            st.m.len(),
            store.len()
        )));
    }
    let ids: Vec<_> = store.iter().map(|(id, _, _)| id).collect();
    for (i, g) in grads.iter().enumerate() {
        if g.is_none() {
            return Err(FeError::MissingGradient(store.name(ids[i]).to_string()));
        }
    }
    st.step += 1;
    let t = st.step as i32;
    let bc1 = 1.0 - st.beta1.powi(t);
    let bc2 = 1.0 - st.beta2.powi(t);
    let (lr, wd, b1, b2, eps) = (st.lr, st.weight_decay, st.beta1, st.beta2, st.eps);
    for (i, id) in ids.into_iter().enumerate() {
        let g = grads[i].as_ref().unwrap();
        let theta = store.get_mut(id);
        if g.shape() != theta.shape() {
            return Err(FeError::Shape(format!("gradient {:?} for parameter {:?}", g.shape(), theta.shape())));
        }
        let (m, v) = (st.m[i].data_mut(), st.v[i].data_mut());
        for (j, p) in theta.data_mut().iter_mut().enumerate() {
            let gj = g.data()[j];
            m[j] = b1 * m[j] + (1.0 - b1) * gj;
            v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
            *p -= lr * wd * *p;
            *p -= lr * (m[j] / bc1) / ((v[j] / bc2).sqrt() + eps);
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolySchedule {
    pub lr0: f64,
    pub lr_min: f64,
    pub power: f64,
}

impl Default for PolySchedule {
    fn default() -> Self {
        PolySchedule { lr0: 1e-3, lr_min: 3e-5, power: 0.9 }
    }
}

/// `lr_min + (lr0 − lr_min)·(1 − step/total)^power`.
pub fn poly_lr(step: usize, total: usize, s: &PolySchedule) -> Result<f64> {
    if step > total || total == 0 {
        return Err(FeError::Invalid(format!("schedule step {step} outside [0, {total}]")));
    }
    let frac = 1.0 - step as f64 / total as f64;
    Ok(s.lr_min + (s.lr0 - s.lr_min) * frac.powf(s.power))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Init;

    fn scalar_store(v: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("theta", Tensor::new(&[1], vec![v]).unwrap(), Init::Loaded).unwrap();
        s
    }

    #[test]
    fn zero_grads_without_decay_leave_params() {
        let mut s = scalar_store(0.7);
        let mut st = OptimState::new(&s, 0.1, 0.0);
        for _ in 0..3 {
            adamw_step(&mut s, &[Some(Tensor::zeros(&[1]))], &mut st).unwrap();
        }
        assert_eq!(s.by_name("theta").unwrap().data()[0], 0.7);
    }

    #[test]
    fn first_step_is_lr_sized() {
        let mut s = scalar_store(0.0);
        let mut st = OptimState::new(&s, 0.1, 0.0);
        adamw_step(&mut s, &[Some(Tensor::new(&[1], vec![1.0]).unwrap())], &mut st).unwrap();
        let got = s.by_name("theta").unwrap().data()[0];
        assert!((got - (-0.1 / (1.0 + 1e-8))).abs() < 1e-16);
    }

    #[test]
    fn decay_only_shrinks_geometrically() {
        let mut s = scalar_store(2.0);
        let mut st = OptimState::new(&s, 0.1, 0.01);
        for _ in 0..5 {
            adamw_step(&mut s, &[Some(Tensor::zeros(&[1]))], &mut st).unwrap();
        }
        let expect = 2.0 * (1.0f64 - 0.1 * 0.01).powi(5);
        assert!((s.by_name("theta").unwrap().data()[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn missing_gradient_names_parameter() {
        let mut s = scalar_store(1.0);
        let mut st = OptimState::new(&s, 0.1, 0.0);
        let err = adamw_step(&mut s, &[None], &mut st).unwrap_err();
        assert_eq!(err, FeError::MissingGradient("theta".into()));
        assert_eq!(st.step, 0);
    }

    #[test]
    fn schedule_values() {
        let s = PolySchedule::default();
        assert_eq!(poly_lr(0, 100, &s).unwrap(), 1e-3);
        assert!((poly_lr(100, 100, &s).unwrap() - 3e-5).abs() < 1e-18);
        let mid = 3e-5 + 9.7e-4 * 0.5f64.powf(0.9);
        assert!((poly_lr(50, 100, &s).unwrap() - mid).abs() < 1e-18);
        assert!((mid - 5.498e-4).abs() < 1e-7);
        assert!(poly_lr(101, 100, &s).is_err());
        let lrs: Vec<f64> = (0..=100).map(|t| poly_lr(t, 100, &s).unwrap()).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
    }
}
