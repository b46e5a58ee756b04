//! Reverse-mode differentiation.
//!
//! A [`Tape`] records every operation whose inputs trace back to one of its
//! leaves. Values live in [`Var`]s; the tape only keeps parent links and the
//! backward closures (which capture whatever activations they need), so a
//! forward pass without a tape retains nothing.

mod gradcheck;
mod ops;

pub use gradcheck::{finite_difference_check, FdReport, FdSampling};

use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::rc::Rc;

use crate::error::{FeError, Result};
use crate::tensor::Tensor;

/// Backward rule: receives the upstream gradient and a per-parent "needs
/// gradient" mask, returns one gradient (or `None`) per parent.
pub type BackwardFn = Box<dyn FnOnce(&Tensor, &[bool]) -> Vec<Option<Tensor>>>;

struct Node {
    parents: Vec<Option<usize>>,
    backward: Option<BackwardFn>,
    shape: Vec<usize>,
    leaf: bool,
}

struct TapeInner {
    nodes: RefCell<Vec<Node>>,
    consumed: Cell<bool>,
}

/// Append-only operation record. Nodes are pushed in evaluation order, so the
/// sequence is topologically sorted by construction.
#[derive(Clone)]
pub struct Tape {
    inner: Rc<TapeInner>,
}

#[derive(Clone)]
struct NodeRef {
    tape: Rc<TapeInner>,
    id: usize,
}

/// A tensor value, optionally linked to a tape node.
#[derive(Clone)]
pub struct Var {
    value: Rc<Tensor>,
    node: Option<NodeRef>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            inner: Rc::new(TapeInner { nodes: RefCell::new(Vec::new()), consumed: Cell::new(false) }),
        }
    }

    /// Registers a differentiable leaf.
    pub fn leaf(&self, value: Tensor) -> Var {
        let mut nodes = self.inner.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node { parents: Vec::new(), backward: None, shape: value.shape().to_vec(), leaf: true });
        Var { value: Rc::new(value), node: Some(NodeRef { tape: self.inner.clone(), id }) }
    }

    pub fn len(&self) -> usize {
        self.inner.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sweeps the tape once from `loss` back to the leaves.
    ///
    /// Every leaf registered before `loss` receives a gradient (zeros when it
    /// does not influence the loss). The tape is consumed.
    pub fn backward(&self, loss: &Var) -> Result<Grads> {
        if loss.value.numel() != 1 {
            return Err(FeError::Backward(format!("loss must be scalar, got shape {:?}", loss.shape())));
        }
        let root = match &loss.node {
            Some(n) if Rc::ptr_eq(&n.tape, &self.inner) => n.id,
            _ => return Err(FeError::Backward("loss is not recorded on this tape".into())),
        };
        if self.inner.consumed.replace(true) {
            return Err(FeError::Backward("tape already consumed; double backward is not supported".into()));
        }
        let mut nodes = self.inner.nodes.borrow_mut();
        let mut grads: Vec<Option<Tensor>> = (0..=root).map(|_| None).collect();
        grads[root] = Some(Tensor::ones(loss.shape()));
        let mut out = HashMap::new();
        for id in (0..=root).rev() {
            let node = &mut nodes[id];
            if node.leaf {
                let g = grads[id].take().unwrap_or_else(|| Tensor::zeros(&node.shape));
                out.insert(id, g);
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let Some(back) = node.backward.take() else { continue };
            let needs: Vec<bool> = node.parents.iter().map(|p| p.is_some()).collect();
            let parent_grads = back(&g, &needs);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            let parents = node.parents.clone();
            for (p, pg) in parents.into_iter().zip(parent_grads) {
                if let (Some(pid), Some(pg)) = (p, pg) {
                    debug_assert_eq!(pg.shape(), nodes[pid].shape.as_slice(), "gradient shape");
                    match &mut grads[pid] {
                        Some(acc) => acc.add_assign(&pg),
                        slot => *slot = Some(pg),
                    }
                }
            }
        }
        Ok(Grads { tape: self.inner.clone(), by_node: out })
    }
}

/// Gradients of the leaves of one consumed tape.
pub struct Grads {
    tape: Rc<TapeInner>,
    by_node: HashMap<usize, Tensor>,
}

impl Grads {
    pub fn get(&self, leaf: &Var) -> Option<&Tensor> {
        let n = leaf.node.as_ref()?;
        if !Rc::ptr_eq(&n.tape, &self.tape) {
            return None;
        }
        self.by_node.get(&n.id)
    }

    pub fn take(&mut self, leaf: &Var) -> Option<Tensor> {
        let n = leaf.node.as_ref()?;
        if !Rc::ptr_eq(&n.tape, &self.tape) {
            return None;
        }
        self.by_node.remove(&n.id)
    }
}

impl Var {
    /// A value with no tape attachment.
    pub fn constant(value: Tensor) -> Var {
        Var { value: Rc::new(value), node: None }
    }

    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn shared_value(&self) -> Rc<Tensor> {
        self.value.clone()
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn numel(&self) -> usize {
        self.value.numel()
    }

    pub fn requires_grad(&self) -> bool {
        self.node.is_some()
    }

    pub fn tape(&self) -> Option<Tape> {
        self.node.as_ref().map(|n| Tape { inner: n.tape.clone() })
    }

    /// Detached copy of the value.
    pub fn detach(&self) -> Var {
        Var { value: self.value.clone(), node: None }
    }

    /// Records an operation. When no parent is on a tape the backward rule is
    /// dropped and the result is a constant.
    pub fn from_op<F>(value: Tensor, parents: &[&Var], backward: F) -> Var
    where
        F: FnOnce(&Tensor, &[bool]) -> Vec<Option<Tensor>> + 'static,
    {
        let tape = parents.iter().find_map(|p| p.node.as_ref().map(|n| n.tape.clone()));
        let Some(tape) = tape else {
            return Var::constant(value);
        };
        let parent_ids = parents
            .iter()
            .map(|p| {
                p.node.as_ref().map(|n| {
                    assert!(Rc::ptr_eq(&n.tape, &tape), "operands recorded on different tapes");
                    n.id
                })
            })
            .collect();
        let mut nodes = tape.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            parents: parent_ids,
            backward: Some(Box::new(backward)),
            shape: value.shape().to_vec(),
            leaf: false,
        });
        drop(nodes);
        Var { value: Rc::new(value), node: Some(NodeRef { tape, id }) }
    }

    /// Errors when the value holds NaN or infinity; `what` names the producer.
    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.value.is_finite() {
            Ok(())
        } else {
            Err(FeError::NonFinite(what.to_string()))
        }
    }
}

impl std::fmt::Debug for Var {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("shape", &self.shape())
            .field("requires_grad", &self.requires_grad())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gives_ones() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::from_fn(&[2, 3], |i| (i[0] + i[1]) as f64));
        let loss = x.sum_all();
        let g = tape.backward(&loss).unwrap();
        assert_eq!(g.get(&x).unwrap(), &Tensor::ones(&[2, 3]));
    }

    #[test]
    fn square_gives_twice_x() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::new(&[2], vec![1.0, -2.0]).unwrap());
        let loss = x.mul(&x).sum_all();
        let g = tape.backward(&loss).unwrap();
        assert_eq!(g.get(&x).unwrap().data(), &[2.0, -4.0]);
    }

    #[test]
    fn rejects_non_scalar_loss() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::ones(&[2]));
        assert!(matches!(tape.backward(&x.scale(2.0)), Err(FeError::Backward(_))));
    }

    #[test]
    fn rejects_detached_loss() {
        let tape = Tape::new();
        let _x = tape.leaf(Tensor::ones(&[2]));
        let c = Var::constant(Tensor::ones(&[2])).sum_all();
        assert!(tape.backward(&c).is_err());
        let other = Tape::new();
        let y = other.leaf(Tensor::ones(&[1])).sum_all();
        assert!(tape.backward(&y).is_err());
    }

    #[test]
    fn double_backward_is_an_error() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::ones(&[3]));
        let loss = x.sum_all();
        tape.backward(&loss).unwrap();
        assert!(tape.backward(&loss).is_err());
    }

    #[test]
    fn unused_leaf_gets_zero_gradient() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::ones(&[2]));
        let y = tape.leaf(Tensor::ones(&[4]));
        let g = tape.backward(&x.sum_all()).unwrap();
        assert_eq!(g.get(&y).unwrap(), &Tensor::zeros(&[4]));
    }

    #[test]
    fn fan_out_accumulates() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::new(&[1], vec![3.0]).unwrap());
        let loss = x.add(&x).add(&x.mul(&x)).sum_all();
        let g = tape.backward(&loss).unwrap();
        assert_eq!(g.get(&x).unwrap().data(), &[8.0]);
    }
}
