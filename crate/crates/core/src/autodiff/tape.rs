//! Dynamic reverse-mode tape.
//!
//! Every forward pass records onto a fresh [`Tape`]. Nodes are appended in
//! creation order, so a node's parents always have smaller ids and walking the
//! ids backwards is a valid reverse topological order. A tape is confined to
//! the thread that built it.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use super::params::{ParamGrads, ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Maps the upstream gradient to one optional gradient per parent. The mask
/// says which parents actually need one.
pub(crate) type BackwardFn<T> = Box<dyn Fn(&Tensor<T>, &[bool]) -> Vec<Option<Tensor<T>>>>;

struct Node<T: Real> {
    parents: Vec<usize>,
    backward: Option<BackwardFn<T>>,
    requires_grad: bool,
}

pub struct Tape<T: Real> {
    nodes: RefCell<Vec<Node<T>>>,
    params: RefCell<HashMap<ParamId, Var<T>>>,
}

/// Handle to a value recorded on a tape.
pub struct Var<T: Real> {
    id: usize,
    value: Rc<Tensor<T>>,
    requires_grad: bool,
}

impl<T: Real> Clone for Var<T> {
    fn clone(&self) -> Self {
        Self {
            id: self.id,
            value: Rc::clone(&self.value),
            requires_grad: self.requires_grad,
        }
    }
}

impl<T: Real> std::fmt::Debug for Var<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.value.shape())
            .finish()
    }
}

impl<T: Real> Var<T> {
    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub(crate) fn value_rc(&self) -> Rc<Tensor<T>> {
        Rc::clone(&self.value)
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn rows(&self) -> usize {
        self.value.rows()
    }

    pub fn cols(&self) -> usize {
        self.value.cols()
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            params: RefCell::new(HashMap::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor<T>, node: Node<T>) -> Var<T> {
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = node.requires_grad;
        nodes.push(node);
        Var {
            id: nodes.len() - 1,
            value: Rc::new(value),
            requires_grad,
        }
    }

    /// A value that never receives a gradient.
    pub fn constant(&self, value: Tensor<T>) -> Var<T> {
        self.push(
            value,
            Node {
                parents: Vec::new(),
                backward: None,
                requires_grad: false,
            },
        )
    }

    /// A free leaf whose gradient is reported by [`Tape::backward`].
    pub fn variable(&self, value: Tensor<T>) -> Var<T> {
        self.push(
            value,
            Node {
                parents: Vec::new(),
                backward: None,
                requires_grad: true,
            },
        )
    }

    /// Registers a stored parameter as a leaf. Repeated calls with the same id
    /// return the same node, so a parameter used twice gets one summed gradient.
    pub fn param(&self, store: &ParamStore<T>, id: ParamId) -> Var<T> {
        if let Some(v) = self.params.borrow().get(&id) {
            return v.clone();
        }
        let v = self.variable(store.value(id).clone());
        self.params.borrow_mut().insert(id, v.clone());
        v
    }

    /// Records the result of an operation. `backward` is dropped when no
    /// parent requires a gradient.
    pub(crate) fn record(
        &self,
        value: Tensor<T>,
        parents: &[&Var<T>],
        backward: BackwardFn<T>,
    ) -> Var<T> {
        let requires_grad = parents.iter().any(|p| p.requires_grad);
        self.push(
            value,
            Node {
                parents: parents.iter().map(|p| p.id).collect(),
                backward: requires_grad.then_some(backward),
                requires_grad,
            },
        )
    }

    /// Reverse sweep from a one-element loss.
    pub fn backward(&self, loss: &Var<T>) -> Result<Gradients<T>> {
        if loss.value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss.shape()
            )));
        }
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Tensor<T>>> = Vec::new();
        grads.resize_with(nodes.len(), || None);
        grads[loss.id] = Some(Tensor::full(loss.shape(), T::one()));

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            let Some(backward) = &node.backward else {
                continue;
            };
            let Some(g) = grads[id].take() else {
                continue;
            };
            let mask: Vec<bool> = node
                .parents
                .iter()
                .map(|&p| nodes[p].requires_grad)
                .collect();
            let parent_grads = backward(&g, &mask);
            for ((&p, pg), need) in node.parents.iter().zip(parent_grads).zip(&mask) {
                let (Some(pg), true) = (pg, *need) else {
                    continue;
                };
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&pg)?,
                    slot => *slot = Some(pg),
                }
            }
        }
        let params = self
            .params
            .borrow()
            .iter()
            .map(|(&pid, v)| (pid, v.id))
            .collect();
        Ok(Gradients { grads, params })
    }
}

/// Gradients of a scalar loss with respect to the leaves of a tape.
pub struct Gradients<T: Real> {
    grads: Vec<Option<Tensor<T>>>,
    params: Vec<(ParamId, usize)>,
}

impl<T: Real> Gradients<T> {
    /// Gradient for a leaf; `None` when the leaf did not influence the loss.
    pub fn wrt(&self, v: &Var<T>) -> Option<&Tensor<T>> {
        self.grads.get(v.id).and_then(Option::as_ref)
    }

    /// Collects the gradients of every registered parameter, indexed by id.
    pub fn param_grads(&self, store: &ParamStore<T>) -> ParamGrads<T> {
        let mut out = ParamGrads::empty(store.len());
        for &(pid, node) in &self.params {
            if let Some(g) = &self.grads[node] {
                out.set(pid, g.clone());
            }
        }
        out
    }
}
