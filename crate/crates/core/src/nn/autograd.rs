//! Reverse-mode differentiation over a dynamically built graph.
//!
//! Every op returns a [`Var`]. Nodes only keep their parents (and the closure
//! that maps an output gradient to parent gradients) when some ancestor is a
//! trainable parameter, so a pass over constant weights frees intermediates as
//! soon as they go out of scope.

use std::collections::{HashMap, HashSet};
use std::rc::Rc;

use crate::nn::tensor::Tensor;

/// Maps the gradient of a node's output to gradients of its parents. The flag
/// slice says which parents actually need one.
pub(crate) type BackwardFn = Box<dyn Fn(&Tensor, &[bool]) -> Vec<Option<Tensor>>>;

struct Node {
    value: Tensor,
    parents: Vec<Var>,
    backward: Option<BackwardFn>,
    param: Option<usize>,
}

#[derive(Clone)]
pub struct Var(Rc<Node>);

impl std::fmt::Debug for Var {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var({:?}, grad={})", self.0.value, self.requires_grad())
    }
}

impl Var {
    pub fn constant(value: Tensor) -> Var {
        Var(Rc::new(Node {
            value,
            parents: Vec::new(),
            backward: None,
            param: None,
        }))
    }

    /// A trainable leaf; its gradient is reported under `id`.
    pub fn param(value: Tensor, id: usize) -> Var {
        Var(Rc::new(Node {
            value,
            parents: Vec::new(),
            backward: None,
            param: Some(id),
        }))
    }

    pub(crate) fn from_op(value: Tensor, parents: Vec<Var>, backward: BackwardFn) -> Var {
        if parents.iter().any(Var::requires_grad) {
            Var(Rc::new(Node {
                value,
                parents,
                backward: Some(backward),
                param: None,
            }))
        } else {
            Var::constant(value)
        }
    }

    pub fn value(&self) -> &Tensor {
        &self.0.value
    }

    pub fn shape(&self) -> &[usize] {
        self.0.value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.param.is_some() || self.0.backward.is_some()
    }

    fn key(&self) -> usize {
        Rc::as_ptr(&self.0) as usize
    }
}

/// Parameter gradients keyed by parameter id.
#[derive(Debug, Default, Clone)]
pub struct Gradients {
    by_param: HashMap<usize, Tensor>,
}

impl Gradients {
    pub fn get(&self, id: usize) -> Option<&Tensor> {
        self.by_param.get(&id)
    }

    /// Gradient of a stored parameter.
    pub fn of(&self, id: crate::nn::ParamId) -> Option<&Tensor> {
        self.get(id.0)
    }

    pub fn len(&self) -> usize {
        self.by_param.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_param.is_empty()
    }
}

/// Back-propagates from a scalar `output`, seeding its gradient with 1.
pub fn backward(output: &Var) -> Gradients {
    assert_eq!(output.value().numel(), 1, "backward needs a scalar output");
    let mut grads = Gradients::default();
    if !output.requires_grad() {
        return grads;
    }

    // Post-order DFS gives parents before children; walk it in reverse.
    let mut order: Vec<Var> = Vec::new();
    let mut visited: HashSet<usize> = HashSet::new();
    let mut stack: Vec<(Var, bool)> = vec![(output.clone(), false)];
    while let Some((var, expanded)) = stack.pop() {
        if expanded {
            order.push(var);
            continue;
        }
        if !visited.insert(var.key()) {
            continue;
        }
        stack.push((var.clone(), true));
        for parent in &var.0.parents {
            if parent.requires_grad() && !visited.contains(&parent.key()) {
                stack.push((parent.clone(), false));
            }
        }
    }

    let mut pending: HashMap<usize, Tensor> = HashMap::new();
    pending.insert(output.key(), Tensor::full(output.shape(), 1.0));
    for var in order.iter().rev() {
        let Some(grad) = pending.remove(&var.key()) else {
            continue;
        };
        if let Some(id) = var.0.param {
            match grads.by_param.get_mut(&id) {
                Some(acc) => acc.add_assign(&grad),
                None => {
                    grads.by_param.insert(id, grad);
                }
            }
            continue;
        }
        let Some(backward_fn) = &var.0.backward else {
            continue;
        };
        let needs: Vec<bool> = var.0.parents.iter().map(Var::requires_grad).collect();
        let parent_grads = backward_fn(&grad, &needs);
        debug_assert_eq!(parent_grads.len(), var.0.parents.len());
        for ((parent, g), need) in var.0.parents.iter().zip(parent_grads).zip(needs) {
            let (Some(g), true) = (g, need) else {
                continue;
            };
            debug_assert_eq!(g.shape(), parent.shape(), "gradient shape mismatch");
            match pending.get_mut(&parent.key()) {
                Some(acc) => acc.add_assign(&g),
                None => {
                    pending.insert(parent.key(), g);
                }
            }
        }
    }
    grads
}
