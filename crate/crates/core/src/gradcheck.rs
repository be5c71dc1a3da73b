//! Central finite-difference gradient verification.
//!
//! The checker perturbs individual parameter entries and compares the
//! resulting loss slope with the analytic gradient from the tape. It is the
//! independent oracle for every differentiable operation in the crate and
//! also backs the `gradcheck` CLI subcommand.

use crate::scalar::Scalar;
use crate::tensor::{Tape, TensorBase};

/// Result of checking one parameter entry.
#[derive(Debug, Clone)]
pub struct GradCheckEntry {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

/// Relative error with an absolute floor so near-zero gradients compare
/// on an absolute scale.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / denom
}

/// Check the gradient of `loss_fn` with respect to selected entries of the
/// named tensors.
///
/// `loss_fn` must rebuild the computation from scratch on the given tape and
/// return the scalar loss. `picks` lists (tensor index, element index) pairs
/// to probe; the step is the standard central-difference `h`.
pub fn check_gradients<S, F>(
    params: &[(String, TensorBase<S>)],
    picks: &[(usize, usize)],
    h: f64,
    mut loss_fn: F,
) -> Vec<GradCheckEntry>
where
    S: Scalar,
    F: FnMut(&Tape<S>) -> TensorBase<S>,
{
    // analytic pass
    for (_, p) in params {
        p.zero_grad();
    }
    let tape = Tape::new();
    let loss = loss_fn(&tape);
    tape.backward(&loss).expect("gradcheck backward");

    let analytic: Vec<f64> = picks
        .iter()
        .map(|&(ti, ei)| {
            params[ti]
                .1
                .grad()
                .map(|g| g[ei].to_f64_lossy())
                .unwrap_or(0.0)
        })
        .collect();

    // numeric pass per probed entry
    let mut entries = Vec::with_capacity(picks.len());
    for (pick, &an) in picks.iter().zip(&analytic) {
        let (ti, ei) = *pick;
        let tensor = &params[ti].1;
        let orig = tensor.data()[ei];

        tensor.data_mut()[ei] = orig + S::c(h);
        let plus = {
            let t = Tape::inference();
            loss_fn(&t).item().to_f64_lossy()
        };
        tensor.data_mut()[ei] = orig - S::c(h);
        let minus = {
            let t = Tape::inference();
            loss_fn(&t).item().to_f64_lossy()
        };
        tensor.data_mut()[ei] = orig;

        let numeric = (plus - minus) / (2.0 * h);
        entries.push(GradCheckEntry {
            tensor: params[ti].0.clone(),
            index: ei,
            analytic: an,
            numeric,
            rel_err: relative_error(an, numeric),
        });
    }
    entries
}

/// Largest relative error across entries.
pub fn max_rel_err(entries: &[GradCheckEntry]) -> f64 {
    entries.iter().map(|e| e.rel_err).fold(0.0, f64::max)
}
