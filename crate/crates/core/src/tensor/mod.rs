//! Dense tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is a shared handle to a dense row-major buffer plus an
//! optional gradient buffer. Operations live in [`ops`] and [`nn`]; when run
//! against a recording [`Tape`] they register backward closures that are
//! replayed in reverse by [`Tape::backward`].

pub mod nn;
pub mod ops;
pub mod tape;

use std::cell::{Ref, RefCell, RefMut};
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use tape::Tape;

struct Inner<S: Scalar> {
    shape: Vec<usize>,
    data: Vec<S>,
    requires_grad: bool,
    grad: Option<Vec<S>>,
}

/// Shared handle to a dense N-dimensional array of scalars.
pub struct TensorBase<S: Scalar> {
    inner: Rc<RefCell<Inner<S>>>,
}

impl<S: Scalar> Clone for TensorBase<S> {
    fn clone(&self) -> Self {
        TensorBase {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<S: Scalar> std::fmt::Debug for TensorBase<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let inner = self.inner.borrow();
        f.debug_struct("Tensor")
            .field("shape", &inner.shape)
            .field("requires_grad", &inner.requires_grad)
            .finish()
    }
}

impl<S: Scalar> TensorBase<S> {
    pub fn from_vec(shape: &[usize], data: Vec<S>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::dim(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Self::new_raw(shape.to_vec(), data, false))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Self::new_raw(shape.to_vec(), vec![S::zero(); n], false)
    }

    pub fn full(shape: &[usize], value: S) -> Self {
        let n: usize = shape.iter().product();
        Self::new_raw(shape.to_vec(), vec![value; n], false)
    }

    pub fn scalar(value: S) -> Self {
        Self::new_raw(vec![], vec![value], false)
    }

    pub fn eye(n: usize) -> Self {
        let mut data = vec![S::zero(); n * n];
        for i in 0..n {
            data[i * n + i] = S::one();
        }
        Self::new_raw(vec![n, n], data, false)
    }

    pub(crate) fn new_raw(shape: Vec<usize>, data: Vec<S>, requires_grad: bool) -> Self {
        TensorBase {
            inner: Rc::new(RefCell::new(Inner {
                shape,
                data,
                requires_grad,
                grad: None,
            })),
        }
    }

    pub fn requires_grad(self, yes: bool) -> Self {
        {
            let mut inner = self.inner.borrow_mut();
            inner.requires_grad = yes;
            inner.grad = None;
        }
        self
    }

    pub fn is_requires_grad(&self) -> bool {
        self.inner.borrow().requires_grad
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.borrow().shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.inner.borrow().data.len()
    }

    pub fn data(&self) -> Ref<'_, [S]> {
        Ref::map(self.inner.borrow(), |i| i.data.as_slice())
    }

    pub fn data_mut(&self) -> RefMut<'_, Vec<S>> {
        RefMut::map(self.inner.borrow_mut(), |i| &mut i.data)
    }

    pub fn to_vec(&self) -> Vec<S> {
        self.inner.borrow().data.clone()
    }

    /// Scalar value of a 1-element tensor.
    pub fn item(&self) -> S {
        let inner = self.inner.borrow();
        assert_eq!(inner.data.len(), 1, "item() on non-scalar tensor");
        inner.data[0]
    }

    pub fn grad(&self) -> Option<Vec<S>> {
        self.inner.borrow().grad.clone()
    }

    pub fn zero_grad(&self) {
        self.inner.borrow_mut().grad = None;
    }

    /// Accumulate `delta` into the gradient buffer, allocating it on demand.
    pub(crate) fn accumulate_grad(&self, delta: &[S]) {
        let mut inner = self.inner.borrow_mut();
        debug_assert_eq!(delta.len(), inner.data.len());
        match inner.grad.as_mut() {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(delta) {
                    *gi += *di;
                }
            }
            None => inner.grad = Some(delta.to_vec()),
        }
    }

    /// Accumulate `delta` into `grad[offset..offset+delta.len()]`.
    pub(crate) fn accumulate_grad_at(&self, offset: usize, delta: &[S]) {
        let mut inner = self.inner.borrow_mut();
        let n = inner.data.len();
        debug_assert!(offset + delta.len() <= n);
        let g = inner.grad.get_or_insert_with(|| vec![S::zero(); n]);
        for (gi, di) in g[offset..offset + delta.len()].iter_mut().zip(delta) {
            *gi += *di;
        }
    }

    pub(crate) fn grad_or_none(&self) -> Option<Vec<S>> {
        self.inner.borrow().grad.clone()
    }

    pub(crate) fn set_grad(&self, g: Vec<S>) {
        self.inner.borrow_mut().grad = Some(g);
    }

    /// True when all stored values are finite.
    pub fn all_finite(&self) -> bool {
        self.inner.borrow().data.iter().all(|v| v.is_finite())
    }

    /// Detached copy sharing no storage with `self`.
    pub fn detach_copy(&self) -> Self {
        let inner = self.inner.borrow();
        Self::new_raw(inner.shape.clone(), inner.data.clone(), false)
    }
}

pub(crate) fn check_same_shape<S: Scalar>(
    op: &str,
    a: &TensorBase<S>,
    b: &TensorBase<S>,
) -> Result<()> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa != sb {
        return Err(Error::dim(format!("{op}: shapes {sa:?} and {sb:?} differ")));
    }
    Ok(())
}
