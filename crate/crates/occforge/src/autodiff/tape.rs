//! Wengert tape: dense f64 tensors with reverse-mode differentiation.
//!
//! Every forward op appends a node holding its output data and a backward
//! closure mapping the output cotangent to per-parent cotangents. Nodes are
//! appended in execution order, so parents always precede their consumers
//! and a single reverse sweep implements the chain rule.

use std::cell::RefCell;
use std::rc::Rc;

use crate::{Error, Result};

/// Backward rule: output cotangent -> one cotangent per parent.
pub(crate) type BackFn = Box<dyn Fn(&[f64]) -> Vec<Vec<f64>>>;

pub(crate) struct Node {
    pub data: Vec<f64>,
    // Kept for debugging dumps; tensors carry their own copy of the shape.
    #[allow(dead_code)]
    pub shape: Vec<usize>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
    pub parents: Vec<usize>,
    pub backward: Option<BackFn>,
    #[allow(dead_code)]
    pub op: &'static str,
}

/// Recording context for one forward/backward pass. Cheap to clone (shared).
#[derive(Clone)]
pub struct Tape {
    inner: Rc<RefCell<Vec<Node>>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { inner: Rc::new(RefCell::new(Vec::new())) }
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn same_tape(&self, other: &Tape) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    fn push(&self, node: Node) -> usize {
        let mut nodes = self.inner.borrow_mut();
        nodes.push(node);
        nodes.len() - 1
    }

    /// A tensor that participates in no gradient flow.
    pub fn constant(&self, data: Vec<f64>, shape: &[usize]) -> Tensor {
        self.make(data, shape.to_vec(), false, "constant")
    }

    pub fn scalar(&self, value: f64) -> Tensor {
        self.constant(vec![value], &[1])
    }

    /// A leaf tensor; with `requires_grad` its gradient is populated by `backward`.
    pub fn leaf(&self, data: Vec<f64>, shape: &[usize], requires_grad: bool) -> Tensor {
        self.make(data, shape.to_vec(), requires_grad, "leaf")
    }

    fn make(&self, data: Vec<f64>, shape: Vec<usize>, requires_grad: bool, op: &'static str) -> Tensor {
        assert_eq!(
            data.len(),
            shape.iter().product::<usize>(),
            "tensor data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        check_finite(op, &data);
        let id = self.push(Node {
            data,
            shape: shape.clone(),
            requires_grad,
            grad: None,
            parents: Vec::new(),
            backward: None,
            op,
        });
        Tensor { tape: self.clone(), id, shape }
    }

    /// Record the output of `op`. `back` receives the output cotangent and
    /// must return one cotangent buffer per parent, in order.
    pub(crate) fn record(
        &self,
        op: &'static str,
        data: Vec<f64>,
        shape: Vec<usize>,
        parents: &[&Tensor],
        back: impl Fn(&[f64]) -> Vec<Vec<f64>> + 'static,
    ) -> Tensor {
        assert_eq!(
            data.len(),
            shape.iter().product::<usize>(),
            "op `{}` output length {} does not match shape {:?}",
            op,
            data.len(),
            shape
        );
        check_finite(op, &data);
        for p in parents {
            assert!(self.same_tape(&p.tape), "op `{}` mixes tensors from different tapes", op);
        }
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        let (parent_ids, backward): (Vec<usize>, Option<BackFn>) = if requires_grad {
            (parents.iter().map(|p| p.id).collect(), Some(Box::new(back)))
        } else {
            (Vec::new(), None)
        };
        let id = self.push(Node {
            data,
            shape: shape.clone(),
            requires_grad,
            grad: None,
            parents: parent_ids,
            backward,
            op,
        });
        Tensor { tape: self.clone(), id, shape }
    }

    /// Reverse sweep from a scalar output. Populates `grad` on every
    /// reachable tensor that requires one.
    pub fn backward(&self, output: &Tensor) -> Result<()> {
        if output.len() != 1 {
            return Err(Error::Shape(format!(
                "backward expects a scalar output, got shape {:?}",
                output.shape()
            )));
        }
        let mut nodes = self.inner.borrow_mut();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[output.id] = Some(vec![1.0]);
        for i in (0..=output.id).rev() {
            let Some(g) = grads[i].take() else { continue };
            {
                let node = &nodes[i];
                if let Some(back) = &node.backward {
                    let parent_grads = back(&g);
                    assert_eq!(
                        parent_grads.len(),
                        node.parents.len(),
                        "op `{}` backward returned {} grads for {} parents",
                        node.op,
                        parent_grads.len(),
                        node.parents.len()
                    );
                    for (p, pg) in node.parents.iter().zip(parent_grads) {
                        let pn = &nodes[*p];
                        if !pn.requires_grad && pn.backward.is_none() {
                            continue;
                        }
                        assert_eq!(pg.len(), pn.data.len(), "op `{}` backward grad length mismatch", node.op);
                        match &mut grads[*p] {
                            Some(acc) => {
                                for (a, b) in acc.iter_mut().zip(&pg) {
                                    *a += *b;
                                }
                            }
                            slot => *slot = Some(pg),
                        }
                    }
                }
            }
            if nodes[i].requires_grad {
                nodes[i].grad = Some(g);
            }
        }
        Ok(())
    }
}

fn check_finite(op: &str, data: &[f64]) {
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        panic!("non-finite value {} at index {} in output of op `{}`", data[pos], pos, op);
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone)]
pub struct Tensor {
    pub(crate) tape: Tape,
    pub(crate) id: usize,
    pub(crate) shape: Vec<usize>,
}

impl Tensor {
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.inner.borrow()[self.id].requires_grad
    }

    /// Copy of the stored values.
    pub fn data(&self) -> Vec<f64> {
        self.tape.inner.borrow()[self.id].data.clone()
    }

    /// Borrow the stored values without copying.
    pub fn with_data<R>(&self, f: impl FnOnce(&[f64]) -> R) -> R {
        f(&self.tape.inner.borrow()[self.id].data)
    }

    /// Gradient populated by the last `backward` call, if any.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.tape.inner.borrow()[self.id].grad.clone()
    }

    /// Value of a scalar tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.len(), 1, "item() on non-scalar tensor of shape {:?}", self.shape);
        self.tape.inner.borrow()[self.id].data[0]
    }

    /// Same data, cut off from gradient flow.
    pub fn detach(&self) -> Tensor {
        self.tape.constant(self.data(), &self.shape)
    }
}
