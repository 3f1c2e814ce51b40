//! Reverse-mode automatic differentiation.
//!
//! A [`Var`] wraps a [`Tensor`] value. Operations on vars that require gradients
//! record their parents and a backward closure; [`Var::backward`] walks the
//! recorded graph in reverse topological order. Only leaf vars created with
//! [`Var::parameter`] keep gradients, and those accumulate across calls until
//! [`Var::zero_grad`].

mod ops;

pub use ops::*;

use std::cell::{Ref, RefCell};
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::hash::{DefaultHasher, Hasher};
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{shape_err, Result};
use crate::tensor::{Shape, Tensor};

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

/// Maps the upstream gradient to one gradient per parent (`None` when a
/// parent does not need one).
pub(crate) type BackwardFn = Box<dyn Fn(&BackwardCtx<'_>) -> Vec<Option<Tensor>>>;

pub(crate) struct BackwardCtx<'a> {
    pub grad: &'a Tensor,
    pub inputs: Vec<&'a Tensor>,
    pub output: &'a Tensor,
    pub needs: Vec<bool>,
}

struct Node {
    id: u64,
    value: Tensor,
    requires_grad: bool,
    grad: RefCell<Option<Tensor>>,
    parents: Vec<Var>,
    backward: Option<BackwardFn>,
}

/// A tensor value tracked for reverse-mode differentiation. Cloning is cheap.
#[derive(Clone)]
pub struct Var(Rc<Node>);

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("shape", &self.shape())
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

impl Var {
    fn make(value: Tensor, requires_grad: bool, parents: Vec<Var>, backward: Option<BackwardFn>) -> Self {
        Var(Rc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            value,
            requires_grad,
            grad: RefCell::new(None),
            parents,
            backward,
        }))
    }

    /// An untracked value.
    pub fn constant(value: Tensor) -> Self {
        Self::make(value, false, Vec::new(), None)
    }

    /// A leaf whose gradient is kept after [`Var::backward`].
    pub fn parameter(value: Tensor) -> Self {
        Self::make(value, true, Vec::new(), None)
    }

    /// Records the result of an operation. The graph edge is dropped when no
    /// parent needs a gradient.
    pub(crate) fn from_op(value: Tensor, parents: Vec<Var>, backward: BackwardFn) -> Self {
        debug_assert!(value.all_finite() || parents.iter().any(|p| !p.value().all_finite()));
        if parents.iter().any(Var::requires_grad) {
            Self::make(value, true, parents, Some(backward))
        } else {
            Self::constant(value)
        }
    }

    pub fn value(&self) -> &Tensor {
        &self.0.value
    }

    pub fn shape(&self) -> Shape {
        self.0.value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.backward.is_none()
    }

    /// Accumulated gradient of a parameter leaf.
    pub fn grad(&self) -> Option<Ref<'_, Tensor>> {
        Ref::filter_map(self.0.grad.borrow(), Option::as_ref).ok()
    }

    pub fn zero_grad(&self) {
        self.0.grad.replace(None);
    }

    /// Populates the gradient of every parameter leaf reachable from this
    /// scalar.
    pub fn backward(&self) -> Result<()> {
        if !self.value().is_scalar() {
            return Err(shape_err!("backward needs a scalar loss, got {}", self.shape()));
        }
        if !self.requires_grad() {
            return Ok(());
        }
        let order = self.topological_order();
        let mut grads: HashMap<u64, Tensor> = HashMap::new();
        grads.insert(self.0.id, Tensor::ones(self.shape()));

        for node in order.iter().rev() {
            let Some(grad) = grads.remove(&node.0.id) else {
                continue;
            };
            match &node.0.backward {
                None => {
                    let mut slot = node.0.grad.borrow_mut();
                    match slot.as_mut() {
                        Some(acc) => acc.add_assign(&grad),
                        None => *slot = Some(grad),
                    }
                }
                Some(f) => {
                    let ctx = BackwardCtx {
                        grad: &grad,
                        inputs: node.0.parents.iter().map(Var::value).collect(),
                        output: node.value(),
                        needs: node.0.parents.iter().map(Var::requires_grad).collect(),
                    };
                    let parent_grads = f(&ctx);
                    debug_assert_eq!(parent_grads.len(), node.0.parents.len());
                    for (parent, g) in node.0.parents.iter().zip(parent_grads) {
                        let Some(g) = g else { continue };
                        if !parent.requires_grad() {
                            continue;
                        }
                        debug_assert_eq!(g.shape(), parent.shape());
                        match grads.get_mut(&parent.0.id) {
                            Some(acc) => acc.add_assign(&g),
                            None => {
                                grads.insert(parent.0.id, g);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Post-order over nodes that require gradients: every node appears after
    /// all of its parents.
    fn topological_order(&self) -> Vec<Var> {
        let mut order = Vec::new();
        let mut visited = HashSet::new();
        let mut stack: Vec<(Var, usize)> = vec![(self.clone(), 0)];
        visited.insert(self.0.id);
        while let Some((node, next)) = stack.pop() {
            if next < node.0.parents.len() {
                let parent = node.0.parents[next].clone();
                stack.push((node, next + 1));
                if parent.requires_grad() && visited.insert(parent.0.id) {
                    stack.push((parent, 0));
                }
            } else {
                order.push(node);
            }
        }
        order
    }
}

impl Drop for Node {
    // Long chains would otherwise recurse once per node when the graph is freed.
    fn drop(&mut self) {
        let mut pending: Vec<Var> = std::mem::take(&mut self.parents);
        while let Some(var) = pending.pop() {
            if let Ok(mut node) = Rc::try_unwrap(var.0) {
                pending.append(&mut node.parents);
            }
        }
    }
}

thread_local! {
    static BRANCHES: RefCell<Option<DefaultHasher>> = const { RefCell::new(None) };
}

/// Runs `f` and fingerprints every branch the piecewise-smooth ops (relu,
/// clamp, absolute values) take while it runs. Two evaluations with equal
/// signatures lie on the same smooth piece of the computation, which is what
/// a finite-difference probe needs to be meaningful.
pub fn branch_signature<T>(f: impl FnOnce() -> T) -> (T, u64) {
    let outer = BRANCHES.with(|b| b.replace(Some(DefaultHasher::new())));
    let value = f();
    let hasher = BRANCHES.with(|b| b.replace(outer)).expect("recorder installed above");
    (value, hasher.finish())
}

/// Feeds the position of each value relative to a breakpoint into the active
/// recorder, if any.
pub(crate) fn record_branches(values: impl Iterator<Item = f64>, breakpoint: f64) {
    BRANCHES.with(|b| {
        if let Some(h) = b.borrow_mut().as_mut() {
            for v in values {
                h.write_i8(match v.partial_cmp(&breakpoint) {
                    Some(std::cmp::Ordering::Less) => -1,
                    Some(std::cmp::Ordering::Greater) => 1,
                    _ => 0,
                });
            }
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec_tensor(v: &[f64]) -> Tensor {
        Tensor::from_vec(Shape::new(1, 1, 1, v.len()), v.to_vec()).unwrap()
    }

    #[test]
    fn grad_of_sum_is_ones() {
        let x = Var::parameter(vec_tensor(&[1.0, -2.0, 3.5]));
        sum(&x).backward().unwrap();
        assert_eq!(x.grad().unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn grad_of_mean_square() {
        let v = [0.5, -1.5, 2.0, 4.0];
        let x = Var::parameter(vec_tensor(&v));
        mean(&square(&x)).backward().unwrap();
        let g = x.grad().unwrap();
        for (gi, xi) in g.data().iter().zip(v) {
            assert!((gi - 2.0 * xi / 4.0).abs() < 1e-15);
        }
    }

    #[test]
    fn repeated_backward_accumulates_and_zero_grad_resets() {
        let x = Var::parameter(vec_tensor(&[1.0, 2.0]));
        let loss = sum(&mul(&x, &x).unwrap());
        loss.backward().unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap().data(), &[4.0, 8.0]);
        x.zero_grad();
        assert!(x.grad().is_none());
    }

    #[test]
    fn non_scalar_backward_is_rejected() {
        let x = Var::parameter(vec_tensor(&[1.0, 2.0]));
        let y = scale(&x, 2.0);
        assert!(matches!(y.backward(), Err(crate::Error::Shape(_))));
    }

    #[test]
    fn shared_subexpressions_accumulate() {
        // loss = sum(x * y + x), dx = y + 1, dy = x
        let x = Var::parameter(vec_tensor(&[2.0]));
        let y = Var::parameter(vec_tensor(&[5.0]));
        let loss = sum(&add(&mul(&x, &y).unwrap(), &x).unwrap());
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap().data(), &[6.0]);
        assert_eq!(y.grad().unwrap().data(), &[2.0]);
    }

    #[test]
    fn constants_do_not_record_graph() {
        let a = Var::constant(vec_tensor(&[1.0]));
        let b = add(&a, &a).unwrap();
        assert!(!b.requires_grad());
        assert!(b.is_leaf());
    }

    #[test]
    fn deep_chains_drop_without_overflow() {
        let x = Var::parameter(vec_tensor(&[1.0]));
        let mut y = x.clone();
        for _ in 0..200_000 {
            y = scale(&y, 1.0);
        }
        drop(y);
    }
}
