//! Differentiable tensor operations.
//!
//! Every op runs its forward pass eagerly and, when the tape is recording and
//! any input tracks gradients, registers a backward closure on the tape.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sparse::CsrMatrix;

use super::{check_same_shape, Tape, TensorBase};

fn make_output<S: Scalar>(
    tape: &Tape<S>,
    inputs: &[&TensorBase<S>],
    shape: Vec<usize>,
    data: Vec<S>,
) -> (TensorBase<S>, bool) {
    let tracked = tape.track(inputs);
    (TensorBase::new_raw(shape, data, tracked), tracked)
}

/// Elementwise a + b.
pub fn add<S: Scalar>(
    tape: &Tape<S>,
    a: &TensorBase<S>,
    b: &TensorBase<S>,
) -> Result<TensorBase<S>> {
    check_same_shape("add", a, b)?;
    let data = a
        .data()
        .iter()
        .zip(b.data().iter())
        .map(|(&x, &y)| x + y)
        .collect();
    let (out, tracked) = make_output(tape, &[a, b], a.shape(), data);
    if tracked {
        let (a, b, o) = (a.clone(), b.clone(), out.clone());
        tape.record(Box::new(move || {
            let Some(g) = o.grad_or_none() else { return };
            if a.is_requires_grad() {
                a.accumulate_grad(&g);
            }
            if b.is_requires_grad() {
                b.accumulate_grad(&g);
            }
        }));
    }
    Ok(out)
}

/// Elementwise a - b.
pub fn sub<S: Scalar>(
    tape: &Tape<S>,
    a: &TensorBase<S>,
    b: &TensorBase<S>,
) -> Result<TensorBase<S>> {
    check_same_shape("sub", a, b)?;
    let data = a
        .data()
        .iter()
        .zip(b.data().iter())
        .map(|(&x, &y)| x - y)
        .collect();
    let (out, tracked) = make_output(tape, &[a, b], a.shape(), data);
    if tracked {
        let (a, b, o) = (a.clone(), b.clone(), out.clone());
        tape.record(Box::new(move || {
            let Some(g) = o.grad_or_none() else { return };
            if a.is_requires_grad() {
                a.accumulate_grad(&g);
            }
            if b.is_requires_grad() {
                let neg: Vec<S> = g.iter().map(|&v| -v).collect();
                b.accumulate_grad(&neg);
            }
        }));
    }
    Ok(out)
}

/// Elementwise a * b (Hadamard).
pub fn mul<S: Scalar>(
    tape: &Tape<S>,
    a: &TensorBase<S>,
    b: &TensorBase<S>,
) -> Result<TensorBase<S>> {
    check_same_shape("mul", a, b)?;
    let data = a
        .data()
        .iter()
        .zip(b.data().iter())
        .map(|(&x, &y)| x * y)
        .collect();
    let (out, tracked) = make_output(tape, &[a, b], a.shape(), data);
    if tracked {
        let (a, b, o) = (a.clone(), b.clone(), out.clone());
        tape.record(Box::new(move || {
            let Some(g) = o.grad_or_none() else { return };
            if a.is_requires_grad() {
                let da: Vec<S> = g
                    .iter()
                    .zip(b.data().iter())
                    .map(|(&gi, &bi)| gi * bi)
                    .collect();
                a.accumulate_grad(&da);
            }
            if b.is_requires_grad() {
                let db: Vec<S> = g
                    .iter()
                    .zip(a.data().iter())
                    .map(|(&gi, &ai)| gi * ai)
                    .collect();
                b.accumulate_grad(&db);
            }
        }));
    }
    Ok(out)
}

/// k * a for a constant k.
pub fn scale<S: Scalar>(tape: &Tape<S>, a: &TensorBase<S>, k: S) -> TensorBase<S> {
    let data = a.data().iter().map(|&x| k * x).collect();
    let (out, tracked) = make_output(tape, &[a], a.shape(), data);
    if tracked {
        let (a, o) = (a.clone(), out.clone());
        tape.record(Box::new(move || {
            let Some(g) = o.grad_or_none() else { return };
            let da: Vec<S> = g.iter().map(|&v| k * v).collect();
            a.accumulate_grad(&da);
        }));
    }
    out
}

/// Matrix product of 2-D tensors [m,k] x [k,n].
pub fn matmul<S: Scalar>(
    tape: &Tape<S>,
    a: &TensorBase<S>,
    b: &TensorBase<S>,
) -> Result<TensorBase<S>> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
        return Err(Error::dim(format!(
            "matmul: incompatible shapes {sa:?} and {sb:?}"
        )));
    }
    let (m, k, n) = (sa[0], sa[1], sb[1]);
    let mut data = vec![S::zero(); m * n];
    {
        let ad = a.data();
        let bd = b.data();
        for i in 0..m {
            for kk in 0..k {
                let av = ad[i * k + kk];
                if av == S::zero() {
                    continue;
                }
                let brow = &bd[kk * n..(kk + 1) * n];
                let orow = &mut data[i * n..(i + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    }
    let (out, tracked) = make_output(tape, &[a, b], vec![m, n], data);
    if tracked {
        let (a, b, o) = (a.clone(), b.clone(), out.clone());
        tape.record(Box::new(move || {
            let Some(g) = o.grad_or_none() else { return };
            if a.is_requires_grad() {
                // dA = G . B^T
                let bd = b.data();
                let mut da = vec![S::zero(); m * k];
                for i in 0..m {
                    let grow = &g[i * n..(i + 1) * n];
                    for kk in 0..k {
                        let brow = &bd[kk * n..(kk + 1) * n];
                        let mut acc = S::zero();
                        for (gv, bv) in grow.iter().zip(brow) {
                            acc += *gv * *bv;
                        }
                        da[i * k + kk] = acc;
                    }
                }
                a.accumulate_grad(&da);
            }
            if b.is_requires_grad() {
                // dB = A^T . G
                let ad = a.data();
                let mut db = vec![S::zero(); k * n];
                for i in 0..m {
                    let grow = &g[i * n..(i + 1) * n];
                    for kk in 0..k {
                        let av = ad[i * k + kk];
                        if av == S::zero() {
                            continue;
                        }
                        let drow = &mut db[kk * n..(kk + 1) * n];
                        for (d, gv) in drow.iter_mut().zip(grow) {
                            *d += av * *gv;
                        }
                    }
                }
                b.accumulate_grad(&db);
            }
        }));
    }
    Ok(out)
}

/// x + bias broadcast over the last axis.
pub fn add_bias<S: Scalar>(
    tape: &Tape<S>,
    x: &TensorBase<S>,
    bias: &TensorBase<S>,
) -> Result<TensorBase<S>> {
    let (sx, sb) = (x.shape(), bias.shape());
    let c = *sx.last().ok_or_else(|| Error::dim("add_bias: 0-d input"))?;
    if sb != vec![c] {
        return Err(Error::dim(format!(
            "add_bias: bias shape {sb:?} does not match last axis of {sx:?}"
        )));
    }
    let bd = bias.to_vec();
    let data: Vec<S> = x
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| v + bd[i % c])
        .collect();
    let (out, tracked) = make_output(tape, &[x, bias], sx, data);
    if tracked {
        let (x, bias, o) = (x.clone(), bias.clone(), out.clone());
        tape.record(Box::new(move || {
            let Some(g) = o.grad_or_none() else { return };
            if x.is_requires_grad() {
                x.accumulate_grad(&g);
            }
            if bias.is_requires_grad() {
                let mut db = vec![S::zero(); c];
                for (i, &gv) in g.iter().enumerate() {
                    db[i % c] += gv;
                }
                bias.accumulate_grad(&db);
            }
        }));
    }
    Ok(out)
}

/// max(0, x) elementwise; subgradient at 0 is 0.
pub fn relu<S: Scalar>(tape: &Tape<S>, x: &TensorBase<S>) -> TensorBase<S> {
    let data: Vec<S> = x
        .data()
        .iter()
        .map(|&v| if v > S::zero() { v } else { S::zero() })
        .collect();
    let (out, tracked) = make_output(tape, &[x], x.shape(), data);
    if tracked {
        let (x, o) = (x.clone(), out.clone());
        tape.record(Box::new(move || {
            let Some(g) = o.grad_or_none() else { return };
            let dx: Vec<S> = g
                .iter()
                .zip(x.data().iter())
                .map(|(&gv, &xv)| if xv > S::zero() { gv } else { S::zero() })
                .collect();
            x.accumulate_grad(&dx);
        }));
    }
    out
}

/// View with a new shape of the same element count (data copied).
pub fn reshape<S: Scalar>(
    tape: &Tape<S>,
    x: &TensorBase<S>,
    new_shape: &[usize],
) -> Result<TensorBase<S>> {
    let n: usize = new_shape.iter().product();
    if n != x.numel() {
        return Err(Error::dim(format!(
            "reshape: {:?} -> {:?} changes element count",
            x.shape(),
            new_shape
        )));
    }
    let (out, tracked) = make_output(tape, &[x], new_shape.to_vec(), x.to_vec());
    if tracked {
        let (x, o) = (x.clone(), out.clone());
        tape.record(Box::new(move || {
            let Some(g) = o.grad_or_none() else { return };
            x.accumulate_grad(&g);
        }));
    }
    Ok(out)
}

/// Concatenate along the last axis; all leading axes must agree.
pub fn concat_last<S: Scalar>(tape: &Tape<S>, parts: &[TensorBase<S>]) -> Result<TensorBase<S>> {
    if parts.is_empty() {
        return Err(Error::dim("concat_last: no inputs"));
    }
    let lead: Vec<usize> = {
        let s = parts[0].shape();
        s[..s.len() - 1].to_vec()
    };
    let mut widths = Vec::with_capacity(parts.len());
    for p in parts {
        let s = p.shape();
        if s[..s.len() - 1] != lead[..] {
            return Err(Error::dim(format!(
                "concat_last: leading dims differ ({:?} vs {:?})",
                s, lead
            )));
        }
        widths.push(*s.last().unwrap());
    }
    let rows: usize = lead.iter().product();
    let total: usize = widths.iter().sum();
    let mut data = vec![S::zero(); rows * total];
    let mut offset = 0usize;
    for (p, &w) in parts.iter().zip(&widths) {
        let pd = p.data();
        for r in 0..rows {
            data[r * total + offset..r * total + offset + w].copy_from_slice(&pd[r * w..(r + 1) * w]);
        }
        offset += w;
    }
    let mut shape = lead.clone();
    shape.push(total);
    let refs: Vec<&TensorBase<S>> = parts.iter().collect();
    let (out, tracked) = make_output(tape, &refs, shape, data);
    if tracked {
        let parts: Vec<TensorBase<S>> = parts.to_vec();
        let widths = widths.clone();
        let o = out.clone();
        tape.record(Box::new(move || {
            let Some(g) = o.grad_or_none() else { return };
            let mut offset = 0usize;
            for (p, &w) in parts.iter().zip(&widths) {
                if p.is_requires_grad() {
                    let mut dp = vec![S::zero(); rows * w];
                    for r in 0..rows {
                        dp[r * w..(r + 1) * w]
                            .copy_from_slice(&g[r * total + offset..r * total + offset + w]);
                    }
                    p.accumulate_grad(&dp);
                }
                offset += w;
            }
        }));
    }
    Ok(out)
}

/// Sum of all elements as a scalar tensor.
pub fn sum_all<S: Scalar>(tape: &Tape<S>, x: &TensorBase<S>) -> TensorBase<S> {
    let s: S = x.data().iter().copied().sum();
    let (out, tracked) = make_output(tape, &[x], vec![], vec![s]);
    if tracked {
        let (x, o) = (x.clone(), out.clone());
        tape.record(Box::new(move || {
            let Some(g) = o.grad_or_none() else { return };
            let dx = vec![g[0]; x.numel()];
            x.accumulate_grad(&dx);
        }));
    }
    out
}

/// Select block `k` along the first axis: [k0, rest..] -> [rest..].
pub fn index_block<S: Scalar>(
    tape: &Tape<S>,
    x: &TensorBase<S>,
    k: usize,
) -> Result<TensorBase<S>> {
    let s = x.shape();
    if s.is_empty() || k >= s[0] {
        return Err(Error::dim(format!("index_block: index {k} in shape {s:?}")));
    }
    let block: usize = s[1..].iter().product();
    let data = x.data()[k * block..(k + 1) * block].to_vec();
    let (out, tracked) = make_output(tape, &[x], s[1..].to_vec(), data);
    if tracked {
        let (x, o) = (x.clone(), out.clone());
        tape.record(Box::new(move || {
            let Some(g) = o.grad_or_none() else { return };
            x.accumulate_grad_at(k * block, &g);
        }));
    }
    Ok(out)
}

/// y = A x with a constant sparse A and dense x of shape [A.cols, f].
pub fn sparse_apply<S: Scalar>(
    tape: &Tape<S>,
    a: &Rc<CsrMatrix<S>>,
    x: &TensorBase<S>,
) -> Result<TensorBase<S>> {
    let s = x.shape();
    if s.len() != 2 || s[0] != a.cols() {
        return Err(Error::dim(format!(
            "sparse_apply: matrix is {}x{}, features are {s:?}",
            a.rows(),
            a.cols()
        )));
    }
    let f = s[1];
    let data = a.mat_features(&x.data(), f);
    let (out, tracked) = make_output(tape, &[x], vec![a.rows(), f], data);
    if tracked {
        let (x, o) = (x.clone(), out.clone());
        let a = Rc::clone(a);
        tape.record(Box::new(move || {
            let Some(g) = o.grad_or_none() else { return };
            let mut dx = vec![S::zero(); a.cols() * f];
            a.add_transpose_mat_features(&g, f, &mut dx);
            x.accumulate_grad(&dx);
        }));
    }
    Ok(out)
}

/// Mean absolute deviation over all elements; subgradient 0 at exact ties.
pub fn l1_loss<S: Scalar>(
    tape: &Tape<S>,
    pred: &TensorBase<S>,
    truth: &TensorBase<S>,
) -> Result<TensorBase<S>> {
    check_same_shape("l1_loss", pred, truth)?;
    let n = pred.numel();
    let inv = S::one() / S::from_usize(n).unwrap();
    let s: S = pred
        .data()
        .iter()
        .zip(truth.data().iter())
        .map(|(&p, &t)| (p - t).abs())
        .sum();
    let (out, tracked) = make_output(tape, &[pred, truth], vec![], vec![s * inv]);
    if tracked {
        let (pred, truth, o) = (pred.clone(), truth.clone(), out.clone());
        tape.record(Box::new(move || {
            let Some(g) = o.grad_or_none() else { return };
            if pred.is_requires_grad() {
                let dp: Vec<S> = pred
                    .data()
                    .iter()
                    .zip(truth.data().iter())
                    .map(|(&p, &t)| {
                        let d = p - t;
                        if d > S::zero() {
                            g[0] * inv
                        } else if d < S::zero() {
                            -(g[0] * inv)
                        } else {
                            S::zero()
                        }
                    })
                    .collect();
                pred.accumulate_grad(&dp);
            }
        }));
    }
    Ok(out)
}

/// Affine map input . weight + bias for a 2-D input [n, d_in].
pub fn fully_connected<S: Scalar>(
    tape: &Tape<S>,
    input: &TensorBase<S>,
    weight: &TensorBase<S>,
    bias: &TensorBase<S>,
) -> Result<TensorBase<S>> {
    let y = matmul(tape, input, weight)?;
    add_bias(tape, &y, bias)
}
