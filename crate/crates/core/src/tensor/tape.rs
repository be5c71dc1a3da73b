//! Computation tape for reverse-mode differentiation.

use std::cell::{Cell, RefCell};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::TensorBase;

type BackwardFn = Box<dyn Fn()>;

/// Ordered record of operations; replaying it backwards propagates gradients
/// from a scalar loss to every `requires_grad` tensor reachable on the tape.
pub struct Tape<S: Scalar> {
    nodes: RefCell<Vec<BackwardFn>>,
    recording: bool,
    consumed: Cell<bool>,
    _marker: std::marker::PhantomData<S>,
}

impl<S: Scalar> Tape<S> {
    /// Recording tape for training.
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            recording: true,
            consumed: Cell::new(false),
            _marker: std::marker::PhantomData,
        }
    }

    /// Non-recording tape for inference; ops run forward only.
    pub fn inference() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            recording: false,
            consumed: Cell::new(false),
            _marker: std::marker::PhantomData,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    pub(crate) fn record(&self, f: BackwardFn) {
        if self.recording {
            self.nodes.borrow_mut().push(f);
        }
    }

    /// Whether an op's output should track gradients.
    pub(crate) fn track(&self, inputs: &[&TensorBase<S>]) -> bool {
        self.recording && inputs.iter().any(|t| t.is_requires_grad())
    }

    /// Run reverse-mode accumulation from scalar `loss`.
    ///
    /// Fails on a non-scalar loss, on a loss detached from the tape, and on a
    /// second call without [`Tape::reset`].
    pub fn backward(&self, loss: &TensorBase<S>) -> Result<()> {
        if loss.numel() != 1 {
            return Err(Error::Autodiff(format!(
                "backward requires a scalar loss, got shape {:?}",
                loss.shape()
            )));
        }
        if self.consumed.get() {
            return Err(Error::Autodiff(
                "backward called twice without reset".into(),
            ));
        }
        if !loss.is_requires_grad() || (self.recording && self.nodes.borrow().is_empty()) {
            return Err(Error::Autodiff(
                "loss is detached from the tape (no gradient path)".into(),
            ));
        }
        self.consumed.set(true);
        loss.set_grad(vec![S::one()]);
        for node in self.nodes.borrow().iter().rev() {
            node();
        }
        Ok(())
    }

    /// Discard recorded nodes so the tape can be reused for the next step.
    pub fn reset(&self) {
        self.nodes.borrow_mut().clear();
        self.consumed.set(false);
    }
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}
