//! Reverse-mode automatic differentiation at desk scale.
//!
//! Everything is 64-bit floats in row-major order. A [`Tensor`] is a cheap
//! shared handle; forward operations live on [`Tape`], which records each
//! primitive together with its backward rule. Calling [`Tape::backward`] on a
//! scalar loss walks the record in reverse and accumulates gradients into the
//! `grad` field of every tensor on the path.
//!
//! Execution is single-threaded and deterministic: the same seed and the same
//! call sequence reproduce results bit for bit.

mod adamw;
pub mod rng;
mod tape;

pub use adamw::{AdamW, AdamWConfig, AdamWState};
pub use rng::Rng;
pub use tape::Tape;

use std::cell::{Ref, RefCell};
use std::rc::Rc;

use crate::error::{Error, Result};

/// Train/eval switch; dropout is the identity in eval mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug)]
struct TensorData {
    shape: Vec<usize>,
    values: Vec<f64>,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
    /// Output of a recorded op; gradient must flow through it during backward.
    from_op: bool,
}

/// Shared handle to an n-dimensional array of f64 values.
#[derive(Debug, Clone)]
pub struct Tensor(Rc<RefCell<TensorData>>);

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>, requires_grad: bool) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            values.len(),
            "shape {:?} does not match value count {}",
            shape,
            values.len()
        );
        debug_assert!(
            values.iter().all(|v| v.is_finite()),
            "non-finite value in new tensor"
        );
        Tensor(Rc::new(RefCell::new(TensorData {
            shape,
            values,
            requires_grad,
            grad: None,
            from_op: false,
        })))
    }

    /// Constant (non-trainable) tensor.
    pub fn constant(shape: Vec<usize>, values: Vec<f64>) -> Self {
        Tensor::new(shape, values, false)
    }

    /// Trainable parameter tensor.
    pub fn param(shape: Vec<usize>, values: Vec<f64>) -> Self {
        Tensor::new(shape, values, true)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor::new(shape, vec![0.0; n], false)
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::new(vec![], vec![value], false)
    }

    /// i.i.d. normal(0, std^2) entries, trainable.
    pub fn randn(rng: &mut Rng, shape: Vec<usize>, std: f64) -> Self {
        let n = shape.iter().product();
        let values = (0..n).map(|_| rng.next_normal() * std).collect();
        Tensor::new(shape, values, true)
    }

    /// Truncated normal init: resample anything beyond two standard deviations.
    pub fn trunc_normal(rng: &mut Rng, shape: Vec<usize>, std: f64) -> Self {
        let n = shape.iter().product();
        let values = (0..n)
            .map(|_| loop {
                let z = rng.next_normal();
                if z.abs() <= 2.0 {
                    return z * std;
                }
            })
            .collect();
        Tensor::new(shape, values, true)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.0.borrow().shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.0.borrow().values.len()
    }

    pub fn values(&self) -> Ref<'_, Vec<f64>> {
        Ref::map(self.0.borrow(), |d| &d.values)
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.borrow().values.clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        let d = self.0.borrow();
        assert_eq!(d.values.len(), 1, "item() on tensor of shape {:?}", d.shape);
        d.values[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.0.borrow().requires_grad
    }

    pub fn set_requires_grad(&self, flag: bool) {
        self.0.borrow_mut().requires_grad = flag;
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.borrow().grad.clone()
    }

    pub(crate) fn mark_from_op(&self) {
        self.0.borrow_mut().from_op = true;
    }

    pub(crate) fn is_from_op(&self) -> bool {
        self.0.borrow().from_op
    }

    pub fn clear_grad(&self) {
        self.0.borrow_mut().grad = None;
    }

    /// Overwrite values in place (optimizer updates). Shape must match.
    pub fn set_values(&self, values: &[f64]) -> Result<()> {
        let mut d = self.0.borrow_mut();
        if d.values.len() != values.len() {
            return Err(Error::Dimension {
                op: "set_values",
                lhs: d.shape.clone(),
                rhs: vec![values.len()],
            });
        }
        d.values.copy_from_slice(values);
        Ok(())
    }

    pub(crate) fn accumulate_grad(&self, contribution: &[f64]) {
        let mut d = self.0.borrow_mut();
        match &mut d.grad {
            Some(g) => {
                for (gi, ci) in g.iter_mut().zip(contribution) {
                    *gi += ci;
                }
            }
            None => d.grad = Some(contribution.to_vec()),
        }
    }

    pub(crate) fn ensure_zero_grad(&self) {
        let mut d = self.0.borrow_mut();
        if d.grad.is_none() {
            let n = d.values.len();
            d.grad = Some(vec![0.0; n]);
        }
    }

    /// Same underlying storage?
    pub fn ptr_eq(&self, other: &Tensor) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }

    pub(crate) fn debug_check_finite(&self, op: &'static str) {
        debug_assert!(
            self.0.borrow().values.iter().all(|v| v.is_finite()),
            "{op}: produced a non-finite value"
        );
        let _ = op;
    }
}

/// Row-major strides for a shape.
pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// i.i.d. standard normal samples of the given shape.
pub fn sample_gaussian(rng: &mut Rng, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    let values = (0..n).map(|_| rng.next_normal()).collect();
    Tensor::constant(shape, values)
}

/// Zero the gradients of a parameter list.
pub fn zero_grads(params: &[Tensor]) {
    for p in params {
        p.clear_grad();
    }
}
