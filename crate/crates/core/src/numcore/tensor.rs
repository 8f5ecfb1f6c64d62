//! Tensor storage and the reverse-mode engine.

use std::cell::{Cell, RefCell};
use std::collections::HashSet;
use std::rc::Rc;

use super::Scalar;
use crate::error::{Error, Result};

thread_local! {
    static NEXT_NODE_ID: Cell<u64> = const { Cell::new(0) };
}

fn next_id() -> u64 {
    NEXT_NODE_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

/// Given the output gradient, produce one gradient per parent (same
/// shapes as the parents, in order).
pub(crate) type BackwardFn<S> = Box<dyn Fn(&[S]) -> Vec<Vec<S>>>;

pub(crate) struct Node<S: Scalar> {
    pub(crate) id: u64,
    pub(crate) shape: Vec<usize>,
    pub(crate) values: Vec<S>,
    pub(crate) requires_grad: bool,
    pub(crate) grad: RefCell<Option<Vec<S>>>,
    pub(crate) parents: Vec<Tensor<S>>,
    pub(crate) backward: Option<BackwardFn<S>>,
}

/// A dense tensor; cheap to clone (shared node).
pub struct Tensor<S: Scalar> {
    pub(crate) node: Rc<Node<S>>,
}

impl<S: Scalar> Clone for Tensor<S> {
    fn clone(&self) -> Self {
        Tensor {
            node: Rc::clone(&self.node),
        }
    }
}

impl<S: Scalar> std::fmt::Debug for Tensor<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.node.shape)
            .field("requires_grad", &self.node.requires_grad)
            .finish()
    }
}

fn len_of(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<S: Scalar> Tensor<S> {
    fn build(
        shape: Vec<usize>,
        values: Vec<S>,
        requires_grad: bool,
        parents: Vec<Tensor<S>>,
        backward: Option<BackwardFn<S>>,
    ) -> Self {
        debug_assert_eq!(len_of(&shape), values.len());
        Tensor {
            node: Rc::new(Node {
                id: next_id(),
                shape,
                values,
                requires_grad,
                grad: RefCell::new(None),
                parents,
                backward,
            }),
        }
    }

    /// A tensor that does not participate in differentiation.
    pub fn constant(shape: Vec<usize>, values: Vec<S>) -> Self {
        assert_eq!(
            len_of(&shape),
            values.len(),
            "constant: {} values for shape {:?}",
            values.len(),
            shape
        );
        Self::build(shape, values, false, Vec::new(), None)
    }

    /// A leaf tensor that accumulates gradients.
    pub fn leaf(shape: Vec<usize>, values: Vec<S>) -> Self {
        assert_eq!(
            len_of(&shape),
            values.len(),
            "leaf: {} values for shape {:?}",
            values.len(),
            shape
        );
        Self::build(shape, values, true, Vec::new(), None)
    }

    pub fn scalar(value: S) -> Self {
        Self::constant(vec![], vec![value])
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = len_of(&shape);
        Self::constant(shape, vec![S::zero(); n])
    }

    /// Internal constructor for op results.
    pub(crate) fn from_op(
        shape: Vec<usize>,
        values: Vec<S>,
        parents: Vec<Tensor<S>>,
        backward: BackwardFn<S>,
    ) -> Self {
        let requires_grad = parents.iter().any(|p| p.node.requires_grad);
        if requires_grad {
            Self::build(shape, values, true, parents, Some(backward))
        } else {
            // Constant subgraph: drop the history so it can be freed.
            Self::build(shape, values, false, Vec::new(), None)
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.node.shape
    }

    pub fn len(&self) -> usize {
        self.node.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node.values.is_empty()
    }

    pub fn values(&self) -> &[S] {
        &self.node.values
    }

    pub fn requires_grad(&self) -> bool {
        self.node.requires_grad
    }

    /// Value of a scalar (rank-0 or single-element) tensor.
    pub fn item(&self) -> S {
        assert_eq!(self.len(), 1, "item() on tensor of len {}", self.len());
        self.node.values[0]
    }

    /// Number of rows / columns of a rank-2 tensor.
    pub fn rows(&self) -> usize {
        self.node.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.node.shape[1]
    }

    /// Row `r` of a rank-2 tensor as a slice.
    pub fn row(&self, r: usize) -> &[S] {
        let c = self.cols();
        &self.node.values[r * c..(r + 1) * c]
    }

    /// Accumulated gradient, if backward has reached this tensor.
    pub fn grad(&self) -> Option<Vec<S>> {
        self.node.grad.borrow().clone()
    }

    pub fn clear_grad(&self) {
        *self.node.grad.borrow_mut() = None;
    }

    fn accumulate_grad(&self, delta: &[S]) {
        let mut slot = self.node.grad.borrow_mut();
        match slot.as_mut() {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(delta) {
                    *gi = *gi + *di;
                }
            }
            None => *slot = Some(delta.to_vec()),
        }
    }

    /// Reverse-mode pass from a scalar loss. Gradients accumulate into
    /// every reachable tensor with `requires_grad`; leaves keep them
    /// until [`Tensor::clear_grad`].
    pub fn backward(&self) -> Result<()> {
        if self.len() != 1 {
            return Err(Error::Shape {
                op: "backward (loss must be scalar)",
                lhs: self.node.shape.clone(),
                rhs: vec![],
            });
        }
        if !self.item().is_finite() {
            return Err(Error::Numerical(format!(
                "backward on non-finite loss {}",
                self.item()
            )));
        }
        if !self.node.requires_grad {
            return Ok(());
        }

        // Post-order over the requires-grad subgraph: parents first.
        let mut order: Vec<Tensor<S>> = Vec::new();
        let mut visited: HashSet<u64> = HashSet::new();
        let mut stack: Vec<(Tensor<S>, usize)> = vec![(self.clone(), 0)];
        while let Some((t, child_idx)) = stack.pop() {
            if child_idx == 0
                && !visited.insert(t.node.id) {
                    continue;
                }
            let parents = &t.node.parents;
            if let Some(p) = parents.get(child_idx) {
                stack.push((t.clone(), child_idx + 1));
                if p.node.requires_grad && !visited.contains(&p.node.id) {
                    stack.push((p.clone(), 0));
                }
            } else {
                order.push(t);
            }
        }

        self.accumulate_grad(&[S::one()]);

        // Reverse topological order: consumers before producers.
        for t in order.iter().rev() {
            let Some(backward) = t.node.backward.as_ref() else {
                continue;
            };
            let grad = t.node.grad.borrow().clone();
            let Some(grad) = grad else { continue };
            let parent_grads = backward(&grad);
            debug_assert_eq!(parent_grads.len(), t.node.parents.len());
            for (parent, pg) in t.node.parents.iter().zip(parent_grads) {
                if parent.node.requires_grad {
                    debug_assert_eq!(pg.len(), parent.len());
                    parent.accumulate_grad(&pg);
                }
            }
            // Interior gradients are not needed once propagated.
            if t.node.id != self.node.id {
                *t.node.grad.borrow_mut() = None;
            }
        }
        Ok(())
    }
}

/// Boolean tensor used for attention masking.
#[derive(Debug, Clone)]
pub struct Mask {
    pub shape: Vec<usize>,
    /// `true` = masked out (receives exactly zero probability).
    pub masked: Vec<bool>,
}

impl Mask {
    pub fn new(shape: Vec<usize>, masked: Vec<bool>) -> Self {
        assert_eq!(len_of(&shape), masked.len());
        Mask { shape, masked }
    }

    /// All entries visible.
    pub fn none(shape: Vec<usize>) -> Self {
        let n = len_of(&shape);
        Mask {
            shape,
            masked: vec![false; n],
        }
    }
}
