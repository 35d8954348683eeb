//! Forward and backward kernels for the operator set the graphs use.
//!
//! Activations are batch x height x width x channels. Convolution weights are
//! [kh, kw, c_in, c_out], depthwise weights [k, k, c], dense weights
//! [c_in, c_out]. Convolution is cross-correlation with zero same-padding:
//! the output spatial extent is ceil(input / stride).

use crate::archgraph::same_padding;
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};
use rand::Rng;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Shape(msg()))
    }
}

/// 2D convolution with same padding. `x`: [b, h, w, c_in], `w`: [kh, kw, c_in, c_out].
pub fn conv2d_forward<T: Element>(x: &Tensor<T>, w: &Tensor<T>, stride: usize) -> Result<Tensor<T>> {
    check(x.shape().len() == 4, || format!("conv input must be rank 4, got {:?}", x.shape()))?;
    check(w.shape().len() == 4, || format!("conv weights must be rank 4, got {:?}", w.shape()))?;
    let (batch, ih, iw, ci) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    let (kh, kw, wci, co) = (w.dim(0), w.dim(1), w.dim(2), w.dim(3));
    check(ci == wci, || format!("conv channel mismatch: input has {ci}, weights expect {wci}"))?;
    let (oh, ph) = same_padding(ih, kh, stride);
    let (ow, pw) = same_padding(iw, kw, stride);

    let mut y = Tensor::zeros(vec![batch, oh, ow, co]);
    let xd = x.data();
    let wd = w.data();
    let yd = y.data_mut();
    let mut acc = vec![T::zero(); co];
    for b in 0..batch {
        for out_r in 0..oh {
            for out_c in 0..ow {
                acc.fill(T::zero());
                for kr in 0..kh {
                    let in_r = (out_r * stride + kr) as isize - ph as isize;
                    if in_r < 0 || in_r >= ih as isize {
                        continue;
                    }
                    for kc in 0..kw {
                        let in_c = (out_c * stride + kc) as isize - pw as isize;
                        if in_c < 0 || in_c >= iw as isize {
                            continue;
                        }
                        let x_base = ((b * ih + in_r as usize) * iw + in_c as usize) * ci;
                        let w_base = (kr * kw + kc) * ci * co;
                        for c_in in 0..ci {
                            let xv = xd[x_base + c_in];
                            let w_row = &wd[w_base + c_in * co..w_base + (c_in + 1) * co];
                            for (a, &wv) in acc.iter_mut().zip(w_row) {
                                *a = *a + xv * wv;
                            }
                        }
                    }
                }
                let y_base = ((b * oh + out_r) * ow + out_c) * co;
                yd[y_base..y_base + co].copy_from_slice(&acc);
            }
        }
    }
    Ok(y)
}

/// Gradients of [`conv2d_forward`] with respect to input and weights.
pub fn conv2d_backward<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    stride: usize,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (batch, ih, iw, ci) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    let (kh, kw, _, co) = (w.dim(0), w.dim(1), w.dim(2), w.dim(3));
    let (oh, ph) = same_padding(ih, kh, stride);
    let (ow, pw) = same_padding(iw, kw, stride);
    check(dy.shape() == [batch, oh, ow, co], || {
        format!("conv grad shape {:?} does not match output [{batch}, {oh}, {ow}, {co}]", dy.shape())
    })?;

    let mut dx = Tensor::zeros(x.shape().to_vec());
    let mut dw = Tensor::zeros(w.shape().to_vec());
    let xd = x.data();
    let wd = w.data();
    let dyd = dy.data();
    let dxd = dx.data_mut();
    let dwd = dw.data_mut();
    for b in 0..batch {
        for out_r in 0..oh {
            for out_c in 0..ow {
                let dy_base = ((b * oh + out_r) * ow + out_c) * co;
                let dy_row = &dyd[dy_base..dy_base + co];
                for kr in 0..kh {
                    let in_r = (out_r * stride + kr) as isize - ph as isize;
                    if in_r < 0 || in_r >= ih as isize {
                        continue;
                    }
                    for kc in 0..kw {
                        let in_c = (out_c * stride + kc) as isize - pw as isize;
                        if in_c < 0 || in_c >= iw as isize {
                            continue;
                        }
                        let x_base = ((b * ih + in_r as usize) * iw + in_c as usize) * ci;
                        let w_base = (kr * kw + kc) * ci * co;
                        for c_in in 0..ci {
                            let xv = xd[x_base + c_in];
                            let w_row = &wd[w_base + c_in * co..w_base + (c_in + 1) * co];
                            let dw_row = &mut dwd[w_base + c_in * co..w_base + (c_in + 1) * co];
                            let mut dxv = T::zero();
                            for c_out in 0..co {
                                let g = dy_row[c_out];
                                dw_row[c_out] = dw_row[c_out] + xv * g;
                                dxv = dxv + w_row[c_out] * g;
                            }
                            dxd[x_base + c_in] = dxd[x_base + c_in] + dxv;
                        }
                    }
                }
            }
        }
    }
    Ok((dx, dw))
}

/// Depthwise convolution: one k x k filter per channel. `w`: [k, k, c].
pub fn depthwise_forward<T: Element>(x: &Tensor<T>, w: &Tensor<T>, stride: usize) -> Result<Tensor<T>> {
    check(x.shape().len() == 4, || format!("depthwise input must be rank 4, got {:?}", x.shape()))?;
    check(w.shape().len() == 3, || format!("depthwise weights must be rank 3, got {:?}", w.shape()))?;
    let (batch, ih, iw, c) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    let (kh, kw, wc) = (w.dim(0), w.dim(1), w.dim(2));
    check(c == wc, || format!("depthwise channel mismatch: input has {c}, weights expect {wc}"))?;
    let (oh, ph) = same_padding(ih, kh, stride);
    let (ow, pw) = same_padding(iw, kw, stride);

    let mut y = Tensor::zeros(vec![batch, oh, ow, c]);
    let xd = x.data();
    let wd = w.data();
    let yd = y.data_mut();
    for b in 0..batch {
        for out_r in 0..oh {
            for out_c in 0..ow {
                let y_base = ((b * oh + out_r) * ow + out_c) * c;
                for kr in 0..kh {
                    let in_r = (out_r * stride + kr) as isize - ph as isize;
                    if in_r < 0 || in_r >= ih as isize {
                        continue;
                    }
                    for kc in 0..kw {
                        let in_c = (out_c * stride + kc) as isize - pw as isize;
                        if in_c < 0 || in_c >= iw as isize {
                            continue;
                        }
                        let x_base = ((b * ih + in_r as usize) * iw + in_c as usize) * c;
                        let w_base = (kr * kw + kc) * c;
                        for ch in 0..c {
                            yd[y_base + ch] = yd[y_base + ch] + xd[x_base + ch] * wd[w_base + ch];
                        }
                    }
                }
            }
        }
    }
    Ok(y)
}

/// Gradients of [`depthwise_forward`].
pub fn depthwise_backward<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    stride: usize,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (batch, ih, iw, c) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    let (kh, kw, _) = (w.dim(0), w.dim(1), w.dim(2));
    let (oh, ph) = same_padding(ih, kh, stride);
    let (ow, pw) = same_padding(iw, kw, stride);
    check(dy.shape() == [batch, oh, ow, c], || {
        format!("depthwise grad shape {:?} does not match output [{batch}, {oh}, {ow}, {c}]", dy.shape())
    })?;

    let mut dx = Tensor::zeros(x.shape().to_vec());
    let mut dw = Tensor::zeros(w.shape().to_vec());
    let xd = x.data();
    let wd = w.data();
    let dyd = dy.data();
    let dxd = dx.data_mut();
    let dwd = dw.data_mut();
    for b in 0..batch {
        for out_r in 0..oh {
            for out_c in 0..ow {
                let dy_base = ((b * oh + out_r) * ow + out_c) * c;
                for kr in 0..kh {
                    let in_r = (out_r * stride + kr) as isize - ph as isize;
                    if in_r < 0 || in_r >= ih as isize {
                        continue;
                    }
                    for kc in 0..kw {
                        let in_c = (out_c * stride + kc) as isize - pw as isize;
                        if in_c < 0 || in_c >= iw as isize {
                            continue;
                        }
                        let x_base = ((b * ih + in_r as usize) * iw + in_c as usize) * c;
                        let w_base = (kr * kw + kc) * c;
                        for ch in 0..c {
                            let g = dyd[dy_base + ch];
                            dwd[w_base + ch] = dwd[w_base + ch] + xd[x_base + ch] * g;
                            dxd[x_base + ch] = dxd[x_base + ch] + wd[w_base + ch] * g;
                        }
                    }
                }
            }
        }
    }
    Ok((dx, dw))
}

/// Per-channel statistics a batch-norm forward pass normalized with.
#[derive(Debug, Clone)]
pub struct BnCache<T> {
    pub mean: Vec<T>,
    pub inv_std: Vec<T>,
    /// True when the stats came from the batch (training); false when they
    /// are running stats (eval), which the backward treats as constants.
    pub from_batch: bool,
}

/// Per-channel mean and population variance over all leading dimensions.
pub fn channel_moments<T: Element>(x: &Tensor<T>, channels: usize) -> (Vec<T>, Vec<T>) {
    let n = x.scalar_count() / channels;
    let mut mean = vec![T::zero(); channels];
    for row in x.data().chunks_exact(channels) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m = *m + v;
        }
    }
    let inv_n = T::from_f64(1.0 / n as f64);
    for m in mean.iter_mut() {
        *m = *m * inv_n;
    }
    let mut var = vec![T::zero(); channels];
    for row in x.data().chunks_exact(channels) {
        for ((v, &xv), &m) in var.iter_mut().zip(row).zip(&mean) {
            let d = xv - m;
            *v = *v + d * d;
        }
    }
    for v in var.iter_mut() {
        *v = *v * inv_n;
    }
    (mean, var)
}

fn bn_apply<T: Element>(
    x: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    mean: &[T],
    inv_std: &[T],
) -> Tensor<T> {
    let channels = gamma.len();
    let mut y = Tensor::zeros(x.shape().to_vec());
    for (yrow, xrow) in y.data_mut().chunks_exact_mut(channels).zip(x.data().chunks_exact(channels)) {
        for c in 0..channels {
            yrow[c] = gamma[c] * (xrow[c] - mean[c]) * inv_std[c] + beta[c];
        }
    }
    y
}

/// Training-mode batch norm: normalize with batch statistics.
pub fn batch_norm_train<T: Element>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: f64,
) -> Result<(Tensor<T>, BnCache<T>)> {
    let channels = gamma.scalar_count();
    check(x.shape().last() == Some(&channels), || {
        format!("batch_norm expects {channels} channels, input is {:?}", x.shape())
    })?;
    check(x.dim(0) >= 2, || {
        format!("batch_norm needs batch size >= 2 in train mode, got {}", x.dim(0))
    })?;
    let (mean, var) = channel_moments(x, channels);
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + T::from_f64(eps)).sqrt()).collect();
    let y = bn_apply(x, gamma.data(), beta.data(), &mean, &inv_std);
    Ok((y, BnCache { mean, inv_std, from_batch: true }))
}

/// Eval-mode batch norm: normalize with running statistics.
pub fn batch_norm_eval<T: Element>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    run_mean: &Tensor<T>,
    run_var: &Tensor<T>,
    eps: f64,
) -> Result<(Tensor<T>, BnCache<T>)> {
    let channels = gamma.scalar_count();
    check(x.shape().last() == Some(&channels), || {
        format!("batch_norm expects {channels} channels, input is {:?}", x.shape())
    })?;
    let mean = run_mean.data().to_vec();
    let inv_std: Vec<T> = run_var
        .data()
        .iter()
        .map(|&v| T::one() / (v + T::from_f64(eps)).sqrt())
        .collect();
    let y = bn_apply(x, gamma.data(), beta.data(), &mean, &inv_std);
    Ok((y, BnCache { mean, inv_std, from_batch: false }))
}

/// Gradients of batch norm. With batch statistics the normalizers depend on
/// the input; with running statistics they are constants.
pub fn batch_norm_backward<T: Element>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    cache: &BnCache<T>,
    dy: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let channels = gamma.scalar_count();
    let n = x.scalar_count() / channels;
    let inv_n = T::from_f64(1.0 / n as f64);

    let mut dgamma = vec![T::zero(); channels];
    let mut dbeta = vec![T::zero(); channels];
    for (xrow, dyrow) in x.data().chunks_exact(channels).zip(dy.data().chunks_exact(channels)) {
        for c in 0..channels {
            let xhat = (xrow[c] - cache.mean[c]) * cache.inv_std[c];
            dgamma[c] = dgamma[c] + dyrow[c] * xhat;
            dbeta[c] = dbeta[c] + dyrow[c];
        }
    }

    let mut dx = Tensor::zeros(x.shape().to_vec());
    if cache.from_batch {
        // dx = gamma * inv_std * (dy - mean(dy) - xhat * mean(dy * xhat))
        let dxd = dx.data_mut();
        for ((dxrow, xrow), dyrow) in dxd
            .chunks_exact_mut(channels)
            .zip(x.data().chunks_exact(channels))
            .zip(dy.data().chunks_exact(channels))
        {
            for c in 0..channels {
                let xhat = (xrow[c] - cache.mean[c]) * cache.inv_std[c];
                let centered = dyrow[c] - dbeta[c] * inv_n - xhat * dgamma[c] * inv_n;
                dxrow[c] = gamma.data()[c] * cache.inv_std[c] * centered;
            }
        }
    } else {
        let dxd = dx.data_mut();
        for (dxrow, dyrow) in dxd.chunks_exact_mut(channels).zip(dy.data().chunks_exact(channels)) {
            for c in 0..channels {
                dxrow[c] = gamma.data()[c] * cache.inv_std[c] * dyrow[c];
            }
        }
    }
    let dgamma = Tensor::new(vec![channels], dgamma).expect("shape");
    let dbeta = Tensor::new(vec![channels], dbeta).expect("shape");
    (dx, dgamma, dbeta)
}

/// Updates running stats by exponential moving average with the given momentum.
pub fn update_running_stats<T: Element>(
    run_mean: &mut Tensor<T>,
    run_var: &mut Tensor<T>,
    batch_mean: &[T],
    batch_var: &[T],
    momentum: f64,
) {
    let m = T::from_f64(momentum);
    let one_minus = T::one() - m;
    for (r, &b) in run_mean.data_mut().iter_mut().zip(batch_mean) {
        *r = m * *r + one_minus * b;
    }
    for (r, &b) in run_var.data_mut().iter_mut().zip(batch_var) {
        *r = m * *r + one_minus * b;
    }
}

pub fn relu_forward<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    let mut y = x.clone();
    for v in y.data_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    y
}

/// Subgradient at 0 is 0.
pub fn relu_backward<T: Element>(x: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let mut dx = dy.clone();
    for (g, &v) in dx.data_mut().iter_mut().zip(x.data()) {
        if v <= T::zero() {
            *g = T::zero();
        }
    }
    dx
}

/// Mean over the spatial dimensions: [b, h, w, c] -> [b, c].
pub fn global_avg_pool_forward<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    check(x.shape().len() == 4, || format!("pool input must be rank 4, got {:?}", x.shape()))?;
    let (batch, h, w, c) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    let inv = T::from_f64(1.0 / (h * w) as f64);
    let mut y = Tensor::zeros(vec![batch, c]);
    let yd = y.data_mut();
    for b in 0..batch {
        let y_base = b * c;
        for row in x.data()[b * h * w * c..(b + 1) * h * w * c].chunks_exact(c) {
            for ch in 0..c {
                yd[y_base + ch] = yd[y_base + ch] + row[ch];
            }
        }
        for ch in 0..c {
            yd[y_base + ch] = yd[y_base + ch] * inv;
        }
    }
    Ok(y)
}

pub fn global_avg_pool_backward<T: Element>(x_shape: &[usize], dy: &Tensor<T>) -> Tensor<T> {
    let (batch, h, w, c) = (x_shape[0], x_shape[1], x_shape[2], x_shape[3]);
    let inv = T::from_f64(1.0 / (h * w) as f64);
    let mut dx = Tensor::zeros(x_shape.to_vec());
    let dxd = dx.data_mut();
    for b in 0..batch {
        let dy_row = &dy.data()[b * c..(b + 1) * c];
        for row in dxd[b * h * w * c..(b + 1) * h * w * c].chunks_exact_mut(c) {
            for ch in 0..c {
                row[ch] = dy_row[ch] * inv;
            }
        }
    }
    dx
}

/// Fully connected layer: y = x w + bias. `x`: [b, c_in], `w`: [c_in, c_out].
pub fn dense_forward<T: Element>(x: &Tensor<T>, w: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (batch, ci) = (x.dim(0), x.dim(1));
    let (wci, co) = (w.dim(0), w.dim(1));
    check(ci == wci, || format!("dense input width {ci} does not match weights {wci}"))?;
    let mut y = Tensor::zeros(vec![batch, co]);
    let yd = y.data_mut();
    for b in 0..batch {
        let y_row = &mut yd[b * co..(b + 1) * co];
        y_row.copy_from_slice(bias.data());
        for i in 0..ci {
            let xv = x.data()[b * ci + i];
            let w_row = &w.data()[i * co..(i + 1) * co];
            for (yv, &wv) in y_row.iter_mut().zip(w_row) {
                *yv = *yv + xv * wv;
            }
        }
    }
    Ok(y)
}

pub fn dense_backward<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (batch, ci) = (x.dim(0), x.dim(1));
    let co = w.dim(1);
    let mut dx = Tensor::zeros(vec![batch, ci]);
    let mut dw = Tensor::zeros(vec![ci, co]);
    let mut db = Tensor::zeros(vec![co]);
    for b in 0..batch {
        let dy_row = &dy.data()[b * co..(b + 1) * co];
        for (dbv, &g) in db.data_mut().iter_mut().zip(dy_row) {
            *dbv = *dbv + g;
        }
        for i in 0..ci {
            let xv = x.data()[b * ci + i];
            let w_row = &w.data()[i * co..(i + 1) * co];
            let mut acc = T::zero();
            {
                let dw_row = &mut dw.data_mut()[i * co..(i + 1) * co];
                for o in 0..co {
                    dw_row[o] = dw_row[o] + xv * dy_row[o];
                    acc = acc + w_row[o] * dy_row[o];
                }
            }
            dx.data_mut()[b * ci + i] = acc;
        }
    }
    (dx, dw, db)
}

/// Row-wise softmax, numerically stable.
pub fn softmax_forward<T: Element>(logits: &Tensor<T>) -> Tensor<T> {
    let classes = *logits.shape().last().expect("softmax input has a class axis");
    let mut y = logits.clone();
    for row in y.data_mut().chunks_exact_mut(classes) {
        let max = row.iter().cloned().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
    y
}

/// Mean cross-entropy of softmax(logits) against integer labels, with the
/// gradient with respect to the logits. Uses the log-sum-exp form.
pub fn softmax_cross_entropy<T: Element>(
    logits: &Tensor<T>,
    labels: &[u32],
) -> Result<(f64, Tensor<T>)> {
    let (batch, classes) = (logits.dim(0), logits.dim(1));
    check(labels.len() == batch, || {
        format!("{} labels for a batch of {batch}", labels.len())
    })?;
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= classes) {
        return Err(Error::InvalidConfig(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    let mut dlogits = Tensor::zeros(vec![batch, classes]);
    let inv_b = T::from_f64(1.0 / batch as f64);
    let mut loss = 0.0f64;
    for b in 0..batch {
        let row = &logits.data()[b * classes..(b + 1) * classes];
        let max = row.iter().cloned().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for &v in row {
            sum = sum + (v - max).exp();
        }
        let lse = max + sum.ln();
        loss += (lse - row[labels[b] as usize]).as_f64();
        let drow = &mut dlogits.data_mut()[b * classes..(b + 1) * classes];
        for (c, dv) in drow.iter_mut().enumerate() {
            let p = (row[c] - lse).exp();
            let indicator = if c == labels[b] as usize { T::one() } else { T::zero() };
            *dv = (p - indicator) * inv_b;
        }
    }
    Ok((loss / batch as f64, dlogits))
}

/// Concatenate along the channel axis. Inputs must agree on batch and spatial dims.
pub fn concat_forward<T: Element>(inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = inputs[0];
    let (batch, h, w) = (first.dim(0), first.dim(1), first.dim(2));
    let mut channels = 0;
    for t in inputs {
        check(t.dim(0) == batch && t.dim(1) == h && t.dim(2) == w, || {
            format!("concat spatial mismatch: {:?} vs {:?}", t.shape(), first.shape())
        })?;
        channels += t.dim(3);
    }
    let mut y = Tensor::zeros(vec![batch, h, w, channels]);
    let yd = y.data_mut();
    for pos in 0..batch * h * w {
        let mut offset = pos * channels;
        for t in inputs {
            let c = t.dim(3);
            yd[offset..offset + c].copy_from_slice(&t.data()[pos * c..(pos + 1) * c]);
            offset += c;
        }
    }
    Ok(y)
}

pub fn concat_backward<T: Element>(widths: &[usize], dy: &Tensor<T>) -> Vec<Tensor<T>> {
    let (batch, h, w, channels) = (dy.dim(0), dy.dim(1), dy.dim(2), dy.dim(3));
    let mut grads: Vec<Tensor<T>> = widths
        .iter()
        .map(|&c| Tensor::zeros(vec![batch, h, w, c]))
        .collect();
    for pos in 0..batch * h * w {
        let mut offset = pos * channels;
        for (g, &c) in grads.iter_mut().zip(widths) {
            g.data_mut()[pos * c..(pos + 1) * c].copy_from_slice(&dy.data()[offset..offset + c]);
            offset += c;
        }
    }
    grads
}

/// Weighted sum of identically shaped tensors.
pub fn weighted_sum_forward<T: Element>(inputs: &[&Tensor<T>], weights: &[T]) -> Result<Tensor<T>> {
    let first = inputs[0];
    for t in inputs {
        check(t.shape() == first.shape(), || {
            format!("additive combine shape mismatch: {:?} vs {:?}", t.shape(), first.shape())
        })?;
    }
    let mut y = Tensor::zeros(first.shape().to_vec());
    let yd = y.data_mut();
    for (t, &wv) in inputs.iter().zip(weights) {
        for (acc, &v) in yd.iter_mut().zip(t.data()) {
            *acc = *acc + wv * v;
        }
    }
    Ok(y)
}

pub fn weighted_sum_backward<T: Element>(weights: &[T], dy: &Tensor<T>) -> Vec<Tensor<T>> {
    weights
        .iter()
        .map(|&wv| {
            let mut g = dy.clone();
            for v in g.data_mut() {
                *v = *v * wv;
            }
            g
        })
        .collect()
}

/// Uniform sample from the (k-1)-simplex: normalized unit exponentials.
pub fn simplex_weights<T: Element>(rng: &mut impl Rng, k: usize) -> Vec<T> {
    let draws: Vec<f64> = (0..k)
        .map(|_| {
            let u: f64 = rng.gen_range(0.0..1.0);
            -(1.0 - u).ln()
        })
        .collect();
    let total: f64 = draws.iter().sum();
    draws.iter().map(|&d| T::from_f64(d / total)).collect()
}

/// Equal eval-mode weights 1/k.
pub fn equal_weights<T: Element>(k: usize) -> Vec<T> {
    vec![T::from_f64(1.0 / k as f64); k]
}
