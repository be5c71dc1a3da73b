//! Convolution, pooling and batch normalization on NHWC tensors.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{Tape, TensorBase};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// No padding; output dim (H - K)/S + 1.
    Valid,
    /// Zero padding so the output dim is ceil(H/S).
    Same,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    Max,
    Average,
}

fn shape4(t: &TensorBase<impl Scalar>, what: &str) -> Result<[usize; 4]> {
    let s = t.shape();
    if s.len() != 4 {
        return Err(Error::dim(format!("{what}: expected 4-D NHWC, got {s:?}")));
    }
    Ok([s[0], s[1], s[2], s[3]])
}

fn out_dim(input: usize, k: usize, stride: usize, padding: Padding) -> Result<(usize, usize)> {
    match padding {
        Padding::Valid => {
            if input < k {
                return Err(Error::dim(format!(
                    "window {k} exceeds input extent {input}"
                )));
            }
            Ok(((input - k) / stride + 1, 0))
        }
        Padding::Same => {
            let out = input.div_ceil(stride);
            let pad_total = ((out - 1) * stride + k).saturating_sub(input);
            Ok((out, pad_total / 2))
        }
    }
}

/// Cross-correlation of an NHWC input with a [Cin, K, K, Cout] kernel.
pub fn conv2d<S: Scalar>(
    tape: &Tape<S>,
    input: &TensorBase<S>,
    kernel: &TensorBase<S>,
    stride: usize,
    padding: Padding,
) -> Result<TensorBase<S>> {
    let [n, h, w, cin] = shape4(input, "conv2d input")?;
    let ks = kernel.shape();
    if ks.len() != 4 || ks[1] != ks[2] {
        return Err(Error::dim(format!(
            "conv2d kernel: expected [Cin,K,K,Cout], got {ks:?}"
        )));
    }
    let (kcin, k, cout) = (ks[0], ks[1], ks[3]);
    if kcin != cin {
        return Err(Error::dim(format!(
            "conv2d: input has {cin} channels but kernel expects {kcin}"
        )));
    }
    if k < 1 || stride < 1 {
        return Err(Error::dim("conv2d: kernel size and stride must be >= 1"));
    }
    let (ho, pad_h) = out_dim(h, k, stride, padding)?;
    let (wo, pad_w) = out_dim(w, k, stride, padding)?;

    let mut data = vec![S::zero(); n * ho * wo * cout];
    {
        let ind = input.data();
        let kd = kernel.data();
        for b in 0..n {
            for oh in 0..ho {
                for ow in 0..wo {
                    let orow =
                        &mut data[((b * ho + oh) * wo + ow) * cout..((b * ho + oh) * wo + ow + 1) * cout];
                    for kh in 0..k {
                        let ih = (oh * stride + kh) as isize - pad_h as isize;
                        if ih < 0 || ih as usize >= h {
                            continue;
                        }
                        for kw in 0..k {
                            let iw = (ow * stride + kw) as isize - pad_w as isize;
                            if iw < 0 || iw as usize >= w {
                                continue;
                            }
                            let ibase = ((b * h + ih as usize) * w + iw as usize) * cin;
                            for ci in 0..cin {
                                let v = ind[ibase + ci];
                                if v == S::zero() {
                                    continue;
                                }
                                let kbase = ((ci * k + kh) * k + kw) * cout;
                                let krow = &kd[kbase..kbase + cout];
                                for (o, &kv) in orow.iter_mut().zip(krow) {
                                    *o += v * kv;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let tracked = tape.track(&[input, kernel]);
    let out = TensorBase::new_raw(vec![n, ho, wo, cout], data, tracked);
    if tracked {
        let (input, kernel, o) = (input.clone(), kernel.clone(), out.clone());
        tape.record(Box::new(move || {
            let Some(g) = o.grad_or_none() else { return };
            let want_in = input.is_requires_grad();
            let want_ker = kernel.is_requires_grad();
            let mut din = vec![S::zero(); n * h * w * cin];
            let mut dker = vec![S::zero(); cin * k * k * cout];
            let ind = input.data();
            let kd = kernel.data();
            for b in 0..n {
                for oh in 0..ho {
                    for ow in 0..wo {
                        let grow = &g[((b * ho + oh) * wo + ow) * cout
                            ..((b * ho + oh) * wo + ow + 1) * cout];
                        for kh in 0..k {
                            let ih = (oh * stride + kh) as isize - pad_h as isize;
                            if ih < 0 || ih as usize >= h {
                                continue;
                            }
                            for kw in 0..k {
                                let iw = (ow * stride + kw) as isize - pad_w as isize;
                                if iw < 0 || iw as usize >= w {
                                    continue;
                                }
                                let ibase = ((b * h + ih as usize) * w + iw as usize) * cin;
                                for ci in 0..cin {
                                    let kbase = ((ci * k + kh) * k + kw) * cout;
                                    if want_in {
                                        let krow = &kd[kbase..kbase + cout];
                                        let mut acc = S::zero();
                                        for (&gv, &kv) in grow.iter().zip(krow) {
                                            acc += gv * kv;
                                        }
                                        din[ibase + ci] += acc;
                                    }
                                    if want_ker {
                                        let v = ind[ibase + ci];
                                        if v != S::zero() {
                                            let krow = &mut dker[kbase..kbase + cout];
                                            for (dk, &gv) in krow.iter_mut().zip(grow) {
                                                *dk += v * gv;
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            drop(ind);
            drop(kd);
            if want_in {
                input.accumulate_grad(&din);
            }
            if want_ker {
                kernel.accumulate_grad(&dker);
            }
        }));
    }
    Ok(out)
}

/// Pooling with an explicit stride; the common form uses stride == K.
pub fn pool2d_strided<S: Scalar>(
    tape: &Tape<S>,
    input: &TensorBase<S>,
    k: usize,
    stride: usize,
    mode: PoolMode,
    padding: Padding,
) -> Result<TensorBase<S>> {
    let [n, h, w, c] = shape4(input, "pool2d input")?;
    if (k > h || k > w) && padding == Padding::Valid {
        return Err(Error::dim(format!(
            "pool2d: window {k} exceeds input {h}x{w}"
        )));
    }
    let (ho, pad_h) = out_dim(h, k, stride, padding)?;
    let (wo, pad_w) = out_dim(w, k, stride, padding)?;

    let mut data = vec![S::zero(); n * ho * wo * c];
    // argmax element index per output cell (max mode only)
    let mut argmax = vec![0usize; if mode == PoolMode::Max { data.len() } else { 0 }];
    // count of in-bounds cells per output cell (average mode only)
    let mut counts = vec![0usize; if mode == PoolMode::Average { data.len() / c } else { 0 }];
    {
        let ind = input.data();
        for b in 0..n {
            for oh in 0..ho {
                for ow in 0..wo {
                    let obase = ((b * ho + oh) * wo + ow) * c;
                    match mode {
                        PoolMode::Max => {
                            let mut best = vec![S::neg_infinity(); c];
                            let mut besti = vec![usize::MAX; c];
                            for kh in 0..k {
                                let ih = (oh * stride + kh) as isize - pad_h as isize;
                                if ih < 0 || ih as usize >= h {
                                    continue;
                                }
                                for kw in 0..k {
                                    let iw = (ow * stride + kw) as isize - pad_w as isize;
                                    if iw < 0 || iw as usize >= w {
                                        continue;
                                    }
                                    let ibase = ((b * h + ih as usize) * w + iw as usize) * c;
                                    for ci in 0..c {
                                        let v = ind[ibase + ci];
                                        // first index in row-major scan wins ties
                                        if v > best[ci] {
                                            best[ci] = v;
                                            besti[ci] = ibase + ci;
                                        }
                                    }
                                }
                            }
                            for ci in 0..c {
                                data[obase + ci] = best[ci];
                                argmax[obase + ci] = besti[ci];
                            }
                        }
                        PoolMode::Average => {
                            let mut cnt = 0usize;
                            for kh in 0..k {
                                let ih = (oh * stride + kh) as isize - pad_h as isize;
                                if ih < 0 || ih as usize >= h {
                                    continue;
                                }
                                for kw in 0..k {
                                    let iw = (ow * stride + kw) as isize - pad_w as isize;
                                    if iw < 0 || iw as usize >= w {
                                        continue;
                                    }
                                    cnt += 1;
                                    let ibase = ((b * h + ih as usize) * w + iw as usize) * c;
                                    for ci in 0..c {
                                        data[obase + ci] += ind[ibase + ci];
                                    }
                                }
                            }
                            let invc = S::one() / S::from_usize(cnt.max(1)).unwrap();
                            for ci in 0..c {
                                data[obase + ci] *= invc;
                            }
                            counts[obase / c] = cnt.max(1);
                        }
                    }
                }
            }
        }
    }
    let tracked = tape.track(&[input]);
    let out = TensorBase::new_raw(vec![n, ho, wo, c], data, tracked);
    if tracked {
        let (input, o) = (input.clone(), out.clone());
        tape.record(Box::new(move || {
            let Some(g) = o.grad_or_none() else { return };
            let mut din = vec![S::zero(); n * h * w * c];
            match mode {
                PoolMode::Max => {
                    for (gi, &src) in g.iter().zip(&argmax) {
                        if src != usize::MAX {
                            din[src] += *gi;
                        }
                    }
                }
                PoolMode::Average => {
                    for b in 0..n {
                        for oh in 0..ho {
                            for ow in 0..wo {
                                let ocell = (b * ho + oh) * wo + ow;
                                let share =
                                    S::one() / S::from_usize(counts[ocell]).unwrap();
                                for kh in 0..k {
                                    let ih = (oh * stride + kh) as isize - pad_h as isize;
                                    if ih < 0 || ih as usize >= h {
                                        continue;
                                    }
                                    for kw in 0..k {
                                        let iw = (ow * stride + kw) as isize - pad_w as isize;
                                        if iw < 0 || iw as usize >= w {
                                            continue;
                                        }
                                        let ibase =
                                            ((b * h + ih as usize) * w + iw as usize) * c;
                                        for ci in 0..c {
                                            din[ibase + ci] += g[ocell * c + ci] * share;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            input.accumulate_grad(&din);
        }));
    }
    Ok(out)
}

/// K x K pooling moving with stride K (non-overlapping windows).
pub fn pool2d<S: Scalar>(
    tape: &Tape<S>,
    input: &TensorBase<S>,
    k: usize,
    mode: PoolMode,
) -> Result<TensorBase<S>> {
    pool2d_strided(tape, input, k, k, mode, Padding::Valid)
}

pub struct BatchNormState<S: Scalar> {
    pub running_mean: TensorBase<S>,
    pub running_var: TensorBase<S>,
}

impl<S: Scalar> BatchNormState<S> {
    pub fn new(channels: usize) -> Self {
        BatchNormState {
            running_mean: TensorBase::zeros(&[channels]),
            running_var: TensorBase::full(&[channels], S::one()),
        }
    }
}

/// Batch normalization over the N, H, W axes of an NHWC tensor.
///
/// Train mode normalizes with batch statistics and folds them into the
/// running estimates with momentum; infer mode normalizes with the running
/// estimates only.
#[allow(clippy::too_many_arguments)]
pub fn batch_norm<S: Scalar>(
    tape: &Tape<S>,
    input: &TensorBase<S>,
    gamma: &TensorBase<S>,
    beta: &TensorBase<S>,
    state: &BatchNormState<S>,
    eps: S,
    momentum: S,
    train: bool,
) -> Result<TensorBase<S>> {
    let [n, h, w, c] = shape4(input, "batch_norm input")?;
    if gamma.shape() != vec![c] || beta.shape() != vec![c] {
        return Err(Error::dim(format!(
            "batch_norm: gamma/beta must have shape [{c}]"
        )));
    }
    if eps <= S::zero() {
        return Err(Error::config("batch_norm: eps must be positive"));
    }
    let m = n * h * w;
    let inv_m = S::one() / S::from_usize(m).unwrap();

    let (mean, var) = if train {
        let ind = input.data();
        let mut mean = vec![S::zero(); c];
        for cell in 0..m {
            for ci in 0..c {
                mean[ci] += ind[cell * c + ci];
            }
        }
        for v in mean.iter_mut() {
            *v *= inv_m;
        }
        let mut var = vec![S::zero(); c];
        for cell in 0..m {
            for ci in 0..c {
                let d = ind[cell * c + ci] - mean[ci];
                var[ci] += d * d;
            }
        }
        for v in var.iter_mut() {
            *v *= inv_m;
        }
        drop(ind);
        // fold into running statistics
        {
            let mut rm = state.running_mean.data_mut();
            let mut rv = state.running_var.data_mut();
            for ci in 0..c {
                rm[ci] = momentum * rm[ci] + (S::one() - momentum) * mean[ci];
                rv[ci] = momentum * rv[ci] + (S::one() - momentum) * var[ci];
            }
        }
        (mean, var)
    } else {
        (state.running_mean.to_vec(), state.running_var.to_vec())
    };

    let inv_std: Vec<S> = var.iter().map(|&v| S::one() / (v + eps).sqrt()).collect();
    let gd = gamma.to_vec();
    let bd = beta.to_vec();
    let mut data = vec![S::zero(); m * c];
    {
        let ind = input.data();
        for cell in 0..m {
            for ci in 0..c {
                let xhat = (ind[cell * c + ci] - mean[ci]) * inv_std[ci];
                data[cell * c + ci] = xhat * gd[ci] + bd[ci];
            }
        }
    }
    let tracked = tape.track(&[input, gamma, beta]);
    let out = TensorBase::new_raw(vec![n, h, w, c], data, tracked);
    if tracked {
        let (input, gamma, beta, o) = (input.clone(), gamma.clone(), beta.clone(), out.clone());
        tape.record(Box::new(move || {
            let Some(g) = o.grad_or_none() else { return };
            let ind = input.data();
            let gd = gamma.to_vec();
            let mut dbeta = vec![S::zero(); c];
            let mut dgamma = vec![S::zero(); c];
            for cell in 0..m {
                for ci in 0..c {
                    let xhat = (ind[cell * c + ci] - mean[ci]) * inv_std[ci];
                    dbeta[ci] += g[cell * c + ci];
                    dgamma[ci] += g[cell * c + ci] * xhat;
                }
            }
            if input.is_requires_grad() {
                let mut din = vec![S::zero(); m * c];
                if train {
                    for cell in 0..m {
                        for ci in 0..c {
                            let xhat = (ind[cell * c + ci] - mean[ci]) * inv_std[ci];
                            din[cell * c + ci] = gd[ci]
                                * inv_std[ci]
                                * (g[cell * c + ci]
                                    - dbeta[ci] * inv_m
                                    - xhat * dgamma[ci] * inv_m);
                        }
                    }
                } else {
                    for cell in 0..m {
                        for ci in 0..c {
                            din[cell * c + ci] = g[cell * c + ci] * gd[ci] * inv_std[ci];
                        }
                    }
                }
                drop(ind);
                input.accumulate_grad(&din);
            }
            if gamma.is_requires_grad() {
                gamma.accumulate_grad(&dgamma);
            }
            if beta.is_requires_grad() {
                beta.accumulate_grad(&dbeta);
            }
        }));
    }
    Ok(out)
}

/// Replicate a single-channel NHWC image across three channels.
pub fn tile_channels<S: Scalar>(tape: &Tape<S>, image: &TensorBase<S>) -> Result<TensorBase<S>> {
    let [n, h, w, c] = shape4(image, "tile_channels input")?;
    if c != 1 {
        return Err(Error::dim(format!(
            "tile_channels: expected single channel, got {c}"
        )));
    }
    let src = image.data();
    let mut data = vec![S::zero(); n * h * w * 3];
    for (i, &v) in src.iter().enumerate() {
        data[i * 3] = v;
        data[i * 3 + 1] = v;
        data[i * 3 + 2] = v;
    }
    drop(src);
    let tracked = tape.track(&[image]);
    let out = TensorBase::new_raw(vec![n, h, w, 3], data, tracked);
    if tracked {
        let (image, o) = (image.clone(), out.clone());
        tape.record(Box::new(move || {
            let Some(g) = o.grad_or_none() else { return };
            let din: Vec<S> = g.chunks(3).map(|ch| ch[0] + ch[1] + ch[2]).collect();
            image.accumulate_grad(&din);
        }));
    }
    Ok(out)
}
