//! Forward and backward passes for every layer kind.
//!
//! Layout is channels-last `[N, H, W, C]`. Convolutions run stride 1 and
//! go through im2col + a small matmul; samples are processed in parallel
//! and reduced in index order, so results do not depend on thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::Padding;
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvDims {
    pub out_h: usize,
    pub out_w: usize,
    /// zero-padding applied before the first row/column
    pub pad_top: usize,
    pub pad_left: usize,
}

fn conv_dims(h: usize, w: usize, kh: usize, kw: usize, padding: Padding) -> Result<ConvDims> {
    match padding {
        Padding::Same => Ok(ConvDims {
            out_h: h,
            out_w: w,
            pad_top: (kh - 1) / 2,
            pad_left: (kw - 1) / 2,
        }),
        Padding::Valid => {
            if h < kh || w < kw {
                return Err(Error::shape(format!(
                    "kernel {kh}x{kw} larger than input {h}x{w}"
                )));
            }
            Ok(ConvDims {
                out_h: h - kh + 1,
                out_w: w - kw + 1,
                pad_top: 0,
                pad_left: 0,
            })
        }
    }
}

fn expect_rank(t: &Tensor<impl Element>, rank: usize, what: &str) -> Result<()> {
    if t.rank() != rank {
        return Err(Error::shape(format!(
            "{what} has rank {} (shape {:?}), expected {rank}",
            t.rank(),
            t.shape
        )));
    }
    Ok(())
}

/// im2col for one sample: rows = out_h*out_w, cols = kh*kw*cin.
fn fill_col<T: Element>(
    x: &[T],
    h: usize,
    w: usize,
    cin: usize,
    kh: usize,
    kw: usize,
    dims: ConvDims,
    col: &mut [T],
) {
    let k = kh * kw * cin;
    for oi in 0..dims.out_h {
        for oj in 0..dims.out_w {
            let row = (oi * dims.out_w + oj) * k;
            for a in 0..kh {
                let ii = (oi + a).wrapping_sub(dims.pad_top);
                let dst = row + a * kw * cin;
                if ii >= h {
                    col[dst..dst + kw * cin].fill(T::zero());
                    continue;
                }
                for b in 0..kw {
                    let jj = (oj + b).wrapping_sub(dims.pad_left);
                    let dst = dst + b * cin;
                    if jj >= w {
                        col[dst..dst + cin].fill(T::zero());
                    } else {
                        let src = (ii * w + jj) * cin;
                        col[dst..dst + cin].copy_from_slice(&x[src..src + cin]);
                    }
                }
            }
        }
    }
}

/// `out[m x n] += a[m x k] * b[k x n]`
fn matmul_acc<T: Element>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// Standard 2D convolution: `x [N,H,W,Cin] * w [kh,kw,Cin,Cout] + b [Cout]`.
pub fn conv2d_forward<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    padding: Padding,
) -> Result<Tensor<T>> {
    expect_rank(x, 4, "conv input")?;
    expect_rank(w, 4, "conv weights")?;
    let (n, h, width, cin) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let (kh, kw, wcin, cout) = (w.shape[0], w.shape[1], w.shape[2], w.shape[3]);
    if wcin != cin {
        return Err(Error::shape(format!(
            "conv weights expect {wcin} input channels, got {cin}"
        )));
    }
    if b.shape != [cout] {
        return Err(Error::shape(format!(
            "conv bias shape {:?}, expected [{cout}]",
            b.shape
        )));
    }
    let dims = conv_dims(h, width, kh, kw, padding)?;
    let k = kh * kw * cin;
    let rows = dims.out_h * dims.out_w;
    let sample_in = h * width * cin;
    let sample_out = rows * cout;

    let out_samples: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|s| {
            let mut col = vec![T::zero(); rows * k];
            fill_col(
                &x.data[s * sample_in..(s + 1) * sample_in],
                h,
                width,
                cin,
                kh,
                kw,
                dims,
                &mut col,
            );
            let mut y = vec![T::zero(); sample_out];
            for r in 0..rows {
                y[r * cout..(r + 1) * cout].copy_from_slice(&b.data);
            }
            matmul_acc(&col, &w.data, &mut y, rows, k, cout);
            y
        })
        .collect();

    let mut data = Vec::with_capacity(n * sample_out);
    for y in out_samples {
        data.extend(y);
    }
    Tensor::from_vec(&[n, dims.out_h, dims.out_w, cout], data)
}

/// Gradients of `conv2d_forward` w.r.t. input, weights and bias.
pub fn conv2d_backward<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    padding: Padding,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (n, h, width, cin) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let (kh, kw, _, cout) = (w.shape[0], w.shape[1], w.shape[2], w.shape[3]);
    let dims = conv_dims(h, width, kh, kw, padding)?;
    let k = kh * kw * cin;
    let rows = dims.out_h * dims.out_w;
    let sample_in = h * width * cin;
    let sample_out = rows * cout;
    if dy.shape != [n, dims.out_h, dims.out_w, cout] {
        return Err(Error::shape(format!(
            "conv upstream gradient shape {:?}, expected {:?}",
            dy.shape,
            [n, dims.out_h, dims.out_w, cout]
        )));
    }

    // w transposed to [cout, k] for the input gradient
    let mut wt = vec![T::zero(); k * cout];
    for p in 0..k {
        for c in 0..cout {
            wt[c * k + p] = w.data[p * cout + c];
        }
    }

    let per_sample: Vec<(Vec<T>, Vec<T>, Vec<T>)> = (0..n)
        .into_par_iter()
        .map(|s| {
            let xs = &x.data[s * sample_in..(s + 1) * sample_in];
            let dys = &dy.data[s * sample_out..(s + 1) * sample_out];
            let mut col = vec![T::zero(); rows * k];
            fill_col(xs, h, width, cin, kh, kw, dims, &mut col);

            // dW += col^T * dy
            let mut dw = vec![T::zero(); k * cout];
            for r in 0..rows {
                let crow = &col[r * k..(r + 1) * k];
                let drow = &dys[r * cout..(r + 1) * cout];
                for (p, &cv) in crow.iter().enumerate() {
                    if cv == T::zero() {
                        continue;
                    }
                    let dwrow = &mut dw[p * cout..(p + 1) * cout];
                    for (o, &dv) in dwrow.iter_mut().zip(drow) {
                        *o += cv * dv;
                    }
                }
            }

            let mut db = vec![T::zero(); cout];
            for r in 0..rows {
                for c in 0..cout {
                    db[c] += dys[r * cout + c];
                }
            }

            // dcol = dy * w^T, then scatter back (col2im)
            let mut dcol = vec![T::zero(); rows * k];
            matmul_acc(dys, &wt, &mut dcol, rows, cout, k);
            let mut dx = vec![T::zero(); sample_in];
            for oi in 0..dims.out_h {
                for oj in 0..dims.out_w {
                    let row = (oi * dims.out_w + oj) * k;
                    for a in 0..kh {
                        let ii = (oi + a).wrapping_sub(dims.pad_top);
                        if ii >= h {
                            continue;
                        }
                        for b in 0..kw {
                            let jj = (oj + b).wrapping_sub(dims.pad_left);
                            if jj >= width {
                                continue;
                            }
                            let src = row + (a * kw + b) * cin;
                            let dst = (ii * width + jj) * cin;
                            for c in 0..cin {
                                dx[dst + c] += dcol[src + c];
                            }
                        }
                    }
                }
            }
            (dx, dw, db)
        })
        .collect();

    let mut dx = Tensor::zeros(&x.shape);
    let mut dw = Tensor::zeros(&w.shape);
    let mut db = Tensor::zeros(&[cout]);
    for (s, (sdx, sdw, sdb)) in per_sample.into_iter().enumerate() {
        dx.data[s * sample_in..(s + 1) * sample_in].copy_from_slice(&sdx);
        for (o, v) in dw.data.iter_mut().zip(sdw) {
            *o += v;
        }
        for (o, v) in db.data.iter_mut().zip(sdb) {
            *o += v;
        }
    }
    Ok((dx, dw, db))
}

/// Depthwise convolution: each channel convolved with its own
/// `kh x kw` kernel; channel count preserved.
pub fn depthwise_conv2d_forward<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    padding: Padding,
) -> Result<Tensor<T>> {
    expect_rank(x, 4, "depthwise input")?;
    expect_rank(w, 3, "depthwise weights")?;
    let (n, h, width, c) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let (kh, kw, wc) = (w.shape[0], w.shape[1], w.shape[2]);
    if wc != c {
        return Err(Error::shape(format!(
            "depthwise weights expect {wc} channels, got {c}"
        )));
    }
    if let Some(b) = bias {
        if b.shape != [c] {
            return Err(Error::shape(format!(
                "depthwise bias shape {:?}, expected [{c}]",
                b.shape
            )));
        }
    }
    let dims = conv_dims(h, width, kh, kw, padding)?;
    let sample_in = h * width * c;
    let sample_out = dims.out_h * dims.out_w * c;

    let out_samples: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|s| {
            let xs = &x.data[s * sample_in..(s + 1) * sample_in];
            let mut y = vec![T::zero(); sample_out];
            for oi in 0..dims.out_h {
                for oj in 0..dims.out_w {
                    let orow = (oi * dims.out_w + oj) * c;
                    if let Some(b) = bias {
                        y[orow..orow + c].copy_from_slice(&b.data);
                    }
                    for a in 0..kh {
                        let ii = (oi + a).wrapping_sub(dims.pad_top);
                        if ii >= h {
                            continue;
                        }
                        for bcol in 0..kw {
                            let jj = (oj + bcol).wrapping_sub(dims.pad_left);
                            if jj >= width {
                                continue;
                            }
                            let src = (ii * width + jj) * c;
                            let wrow = (a * kw + bcol) * c;
                            for ch in 0..c {
                                y[orow + ch] += xs[src + ch] * w.data[wrow + ch];
                            }
                        }
                    }
                }
            }
            y
        })
        .collect();

    let mut data = Vec::with_capacity(n * sample_out);
    for y in out_samples {
        data.extend(y);
    }
    Tensor::from_vec(&[n, dims.out_h, dims.out_w, c], data)
}

/// Gradients of the depthwise convolution; bias gradient is returned
/// whether or not a bias was used in the forward pass.
pub fn depthwise_conv2d_backward<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    padding: Padding,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (n, h, width, c) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let (kh, kw, _) = (w.shape[0], w.shape[1], w.shape[2]);
    let dims = conv_dims(h, width, kh, kw, padding)?;
    if dy.shape != [n, dims.out_h, dims.out_w, c] {
        return Err(Error::shape(format!(
            "depthwise upstream gradient shape {:?}, expected {:?}",
            dy.shape,
            [n, dims.out_h, dims.out_w, c]
        )));
    }
    let sample_in = h * width * c;
    let sample_out = dims.out_h * dims.out_w * c;

    let per_sample: Vec<(Vec<T>, Vec<T>, Vec<T>)> = (0..n)
        .into_par_iter()
        .map(|s| {
            let xs = &x.data[s * sample_in..(s + 1) * sample_in];
            let dys = &dy.data[s * sample_out..(s + 1) * sample_out];
            let mut dx = vec![T::zero(); sample_in];
            let mut dw = vec![T::zero(); kh * kw * c];
            let mut db = vec![T::zero(); c];
            for oi in 0..dims.out_h {
                for oj in 0..dims.out_w {
                    let orow = (oi * dims.out_w + oj) * c;
                    for ch in 0..c {
                        db[ch] += dys[orow + ch];
                    }
                    for a in 0..kh {
                        let ii = (oi + a).wrapping_sub(dims.pad_top);
                        if ii >= h {
                            continue;
                        }
                        for bcol in 0..kw {
                            let jj = (oj + bcol).wrapping_sub(dims.pad_left);
                            if jj >= width {
                                continue;
                            }
                            let src = (ii * width + jj) * c;
                            let wrow = (a * kw + bcol) * c;
                            for ch in 0..c {
                                let g = dys[orow + ch];
                                dx[src + ch] += g * w.data[wrow + ch];
                                dw[wrow + ch] += g * xs[src + ch];
                            }
                        }
                    }
                }
            }
            (dx, dw, db)
        })
        .collect();

    let mut dx = Tensor::zeros(&x.shape);
    let mut dw = Tensor::zeros(&w.shape);
    let mut db = Tensor::zeros(&[c]);
    for (s, (sdx, sdw, sdb)) in per_sample.into_iter().enumerate() {
        dx.data[s * sample_in..(s + 1) * sample_in].copy_from_slice(&sdx);
        for (o, v) in dw.data.iter_mut().zip(sdw) {
            *o += v;
        }
        for (o, v) in db.data.iter_mut().zip(sdb) {
            *o += v;
        }
    }
    Ok((dx, dw, db))
}

/// Depthwise-separable convolution: depthwise (no bias) composed with a
/// 1x1 pointwise convolution carrying the bias. Exactly that composition,
/// bit for bit.
pub fn separable_conv2d_forward<T: Element>(
    x: &Tensor<T>,
    depthwise_w: &Tensor<T>,
    pointwise_w: &Tensor<T>,
    bias: &Tensor<T>,
    padding: Padding,
) -> Result<Tensor<T>> {
    let mid = depthwise_conv2d_forward(x, depthwise_w, None, padding)?;
    conv2d_forward(&mid, pointwise_w, bias, Padding::Valid)
}

pub fn separable_conv2d_backward<T: Element>(
    x: &Tensor<T>,
    depthwise_w: &Tensor<T>,
    pointwise_w: &Tensor<T>,
    padding: Padding,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>, Tensor<T>)> {
    let mid = depthwise_conv2d_forward(x, depthwise_w, None, padding)?;
    let (dmid, dpw, db) = conv2d_backward(&mid, pointwise_w, Padding::Valid, dy)?;
    let (dx, ddw, _unused_bias) = depthwise_conv2d_backward(x, depthwise_w, padding, &dmid)?;
    Ok((dx, ddw, dpw, db))
}

/// 2x2 max pooling with stride 2; trailing odd row/column dropped.
/// Returns the pooled tensor and flat argmax indices into the input.
pub fn maxpool2d_forward<T: Element>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    expect_rank(x, 4, "pool input")?;
    let (n, h, w, c) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    if h < 2 || w < 2 {
        return Err(Error::shape(format!("cannot 2x2-pool a {h}x{w} input")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut y = Tensor::zeros(&[n, oh, ow, c]);
    let mut argmax = vec![0usize; n * oh * ow * c];
    for s in 0..n {
        for oi in 0..oh {
            for oj in 0..ow {
                for ch in 0..c {
                    let mut best = T::neg_infinity();
                    let mut best_idx = 0;
                    for a in 0..2 {
                        for b in 0..2 {
                            let idx = ((s * h + 2 * oi + a) * w + 2 * oj + b) * c + ch;
                            if x.data[idx] > best {
                                best = x.data[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    let out_idx = ((s * oh + oi) * ow + oj) * c + ch;
                    y.data[out_idx] = best;
                    argmax[out_idx] = best_idx;
                }
            }
        }
    }
    Ok((y, argmax))
}

pub fn maxpool2d_backward<T: Element>(
    input_shape: &[usize],
    argmax: &[usize],
    dy: &Tensor<T>,
) -> Result<Tensor<T>> {
    if argmax.len() != dy.numel() {
        return Err(Error::shape("pool argmax does not match upstream gradient"));
    }
    let mut dx = Tensor::zeros(input_shape);
    for (&idx, &g) in argmax.iter().zip(&dy.data) {
        dx.data[idx] += g;
    }
    Ok(dx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Infer,
}

/// Cache retained by the batch-norm forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct BnCache<T: Element> {
    pub xhat: Tensor<T>,
    pub inv_std: Vec<T>,
}

/// Batch normalization over `(N, H, W)` per channel.
///
/// Train mode normalizes by batch statistics and updates the running
/// statistics in place as `r <- momentum * r + (1 - momentum) * batch`;
/// infer mode uses the running statistics.
#[allow(clippy::too_many_arguments)]
pub fn batchnorm_forward<T: Element>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &mut Tensor<T>,
    running_var: &mut Tensor<T>,
    mode: BnMode,
    momentum: f64,
    eps: f64,
) -> Result<(Tensor<T>, Option<BnCache<T>>)> {
    expect_rank(x, 4, "batch-norm input")?;
    let (n, h, w, c) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    if gamma.shape != [c] || beta.shape != [c] {
        return Err(Error::shape(format!(
            "batch-norm affine params must be [{c}], got {:?}/{:?}",
            gamma.shape, beta.shape
        )));
    }
    let m = n * h * w;
    let eps = T::from_f64(eps);

    match mode {
        BnMode::Train => {
            if m < 2 {
                return Err(Error::Numeric(
                    "batch-norm in train mode needs at least 2 values per channel".into(),
                ));
            }
            let m_t = T::from_f64(m as f64);
            let mut mean = vec![T::zero(); c];
            for (i, &v) in x.data.iter().enumerate() {
                mean[i % c] += v;
            }
            for v in &mut mean {
                *v /= m_t;
            }
            let mut var = vec![T::zero(); c];
            for (i, &v) in x.data.iter().enumerate() {
                let d = v - mean[i % c];
                var[i % c] += d * d;
            }
            for v in &mut var {
                *v /= m_t;
            }

            let mom = T::from_f64(momentum);
            let one_m = T::one() - mom;
            for ch in 0..c {
                running_mean.data[ch] = mom * running_mean.data[ch] + one_m * mean[ch];
                running_var.data[ch] = mom * running_var.data[ch] + one_m * var[ch];
            }

            let inv_std: Vec<T> = var.iter().map(|&v| (v + eps).sqrt().recip()).collect();
            let mut xhat = Tensor::zeros(&x.shape);
            let mut y = Tensor::zeros(&x.shape);
            for (i, &v) in x.data.iter().enumerate() {
                let ch = i % c;
                let xh = (v - mean[ch]) * inv_std[ch];
                xhat.data[i] = xh;
                y.data[i] = gamma.data[ch] * xh + beta.data[ch];
            }
            Ok((y, Some(BnCache { xhat, inv_std })))
        }
        BnMode::Infer => {
            let inv_std: Vec<T> = running_var
                .data
                .iter()
                .map(|&v| (v + eps).sqrt().recip())
                .collect();
            let mut y = Tensor::zeros(&x.shape);
            for (i, &v) in x.data.iter().enumerate() {
                let ch = i % c;
                y.data[i] = gamma.data[ch] * (v - running_mean.data[ch]) * inv_std[ch] + beta.data[ch];
            }
            Ok((y, None))
        }
    }
}

pub fn batchnorm_backward<T: Element>(
    cache: &BnCache<T>,
    gamma: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let c = gamma.shape[0];
    let m = dy.numel() / c;
    let m_t = T::from_f64(m as f64);

    let mut dgamma = Tensor::zeros(&[c]);
    let mut dbeta = Tensor::zeros(&[c]);
    let mut sum_dxhat = vec![T::zero(); c];
    let mut sum_dxhat_xhat = vec![T::zero(); c];
    for (i, &g) in dy.data.iter().enumerate() {
        let ch = i % c;
        let xh = cache.xhat.data[i];
        dbeta.data[ch] += g;
        dgamma.data[ch] += g * xh;
        let dxhat = g * gamma.data[ch];
        sum_dxhat[ch] += dxhat;
        sum_dxhat_xhat[ch] += dxhat * xh;
    }

    let mut dx = Tensor::zeros(&dy.shape);
    for (i, &g) in dy.data.iter().enumerate() {
        let ch = i % c;
        let dxhat = g * gamma.data[ch];
        let xh = cache.xhat.data[i];
        dx.data[i] =
            cache.inv_std[ch] * (dxhat - (sum_dxhat[ch] + xh * sum_dxhat_xhat[ch]) / m_t);
    }
    Ok((dx, dgamma, dbeta))
}

pub fn relu_forward<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn relu_backward<T: Element>(x: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    Tensor {
        shape: dy.shape.clone(),
        data: x
            .data
            .iter()
            .zip(&dy.data)
            .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
            .collect(),
    }
}

/// `y = x W + b` with `x [N, In]`, `w [In, Out]`.
pub fn dense_forward<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
) -> Result<Tensor<T>> {
    expect_rank(x, 2, "dense input")?;
    expect_rank(w, 2, "dense weights")?;
    let (n, input) = (x.shape[0], x.shape[1]);
    let (win, wout) = (w.shape[0], w.shape[1]);
    if win != input {
        return Err(Error::shape(format!(
            "dense weights expect {win} inputs, got {input}"
        )));
    }
    let mut y = Tensor::zeros(&[n, wout]);
    for s in 0..n {
        y.data[s * wout..(s + 1) * wout].copy_from_slice(&b.data);
    }
    matmul_acc(&x.data, &w.data, &mut y.data, n, input, wout);
    Ok(y)
}

pub fn dense_backward<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (n, input) = (x.shape[0], x.shape[1]);
    let wout = w.shape[1];
    if dy.shape != [n, wout] {
        return Err(Error::shape("dense upstream gradient shape mismatch"));
    }
    // dW = x^T dy
    let mut dw = Tensor::zeros(&w.shape);
    for s in 0..n {
        for p in 0..input {
            let xv = x.data[s * input + p];
            if xv == T::zero() {
                continue;
            }
            for o in 0..wout {
                dw.data[p * wout + o] += xv * dy.data[s * wout + o];
            }
        }
    }
    let mut db = Tensor::zeros(&[wout]);
    for s in 0..n {
        for o in 0..wout {
            db.data[o] += dy.data[s * wout + o];
        }
    }
    // dx = dy W^T
    let mut dx = Tensor::zeros(&x.shape);
    for s in 0..n {
        for o in 0..wout {
            let g = dy.data[s * wout + o];
            if g == T::zero() {
                continue;
            }
            for p in 0..input {
                dx.data[s * input + p] += g * w.data[p * wout + o];
            }
        }
    }
    Ok((dx, dw, db))
}

/// Row-wise softmax with max subtraction.
pub fn softmax<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    expect_rank(x, 2, "softmax input")?;
    let k = x.shape[1];
    let mut y = Tensor::zeros(&x.shape);
    for (row, out) in x.data.chunks_exact(k).zip(y.data.chunks_exact_mut(k)) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for (o, &v) in out.iter_mut().zip(row) {
            *o = (v - max).exp();
            sum += *o;
        }
        for o in out.iter_mut() {
            *o /= sum;
        }
    }
    Ok(y)
}

/// Mean categorical cross-entropy; probabilities are clamped to
/// `[1e-7, 1 - 1e-7]` before the log.
pub fn cross_entropy_loss<T: Element>(probs: &Tensor<T>, labels: &Tensor<T>) -> Result<f64> {
    if probs.shape != labels.shape {
        return Err(Error::shape(format!(
            "probs {:?} vs labels {:?}",
            probs.shape, labels.shape
        )));
    }
    let k = probs.shape[1];
    let n = probs.shape[0];
    let mut total = 0.0;
    for (row, lab) in probs.data.chunks_exact(k).zip(labels.data.chunks_exact(k)) {
        let sum: f64 = row.iter().map(|v| Element::as_f64(*v)).sum();
        if (sum - 1.0).abs() > 1e-5 {
            return Err(Error::Numeric(format!("probability row sums to {sum}")));
        }
        let mut ones = 0;
        let mut p_true = 0.0;
        for (&p, &y) in row.iter().zip(lab) {
            let y = y.as_f64();
            if y == 1.0 {
                ones += 1;
                p_true = p.as_f64();
            } else if y != 0.0 {
                return Err(Error::validation("labels must be one-hot"));
            }
        }
        if ones != 1 {
            return Err(Error::validation("labels must be one-hot"));
        }
        total -= p_true.clamp(1e-7, 1.0 - 1e-7).ln();
    }
    Ok(total / n as f64)
}
