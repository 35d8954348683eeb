//! Independent oracles shared by the integration and acceptance suites.
//!
//! Nothing here calls back into the engine's convolution or gradient code:
//! the convolutions are plain nested loops and the gradients come from
//! central finite differences, so they can referee the real implementations.

#![allow(dead_code)]

use blocksearch::tensor::Tensor;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn seeded(shape: Vec<usize>, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// Same-padding geometry, derived independently: out = ceil(in/stride), the
/// total pad splits with the smaller half leading.
fn pad_geometry(input: usize, kernel: usize, stride: usize) -> (usize, isize) {
    let out = input.div_ceil(stride);
    let needed = (out - 1) * stride + kernel;
    let total = needed.saturating_sub(input);
    (out, (total / 2) as isize)
}

/// Direct six-nested-loop convolution (batch, row, col, out-channel, kernel
/// row, kernel col, in-channel).
pub fn naive_conv2d(x: &Tensor<f64>, w: &Tensor<f64>, stride: usize) -> Tensor<f64> {
    let (batch, ih, iw, ci) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    let (kh, kw, _, co) = (w.dim(0), w.dim(1), w.dim(2), w.dim(3));
    let (oh, ph) = pad_geometry(ih, kh, stride);
    let (ow, pw) = pad_geometry(iw, kw, stride);
    let mut y = Tensor::zeros(vec![batch, oh, ow, co]);
    for b in 0..batch {
        for orow in 0..oh {
            for ocol in 0..ow {
                for oc in 0..co {
                    let mut acc = 0.0;
                    for kr in 0..kh {
                        for kc in 0..kw {
                            let ir = (orow * stride + kr) as isize - ph;
                            let ic = (ocol * stride + kc) as isize - pw;
                            if ir < 0 || ic < 0 || ir >= ih as isize || ic >= iw as isize {
                                continue;
                            }
                            for icn in 0..ci {
                                let xv = x.data()[x.at4(b, ir as usize, ic as usize, icn)];
                                let wi = ((kr * kw + kc) * ci + icn) * co + oc;
                                acc += xv * w.data()[wi];
                            }
                        }
                    }
                    let yi = y.at4(b, orow, ocol, oc);
                    y.data_mut()[yi] = acc;
                }
            }
        }
    }
    y
}

/// Direct per-channel convolution.
pub fn naive_depthwise(x: &Tensor<f64>, w: &Tensor<f64>, stride: usize) -> Tensor<f64> {
    let (batch, ih, iw, c) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    let (kh, kw, _) = (w.dim(0), w.dim(1), w.dim(2));
    let (oh, ph) = pad_geometry(ih, kh, stride);
    let (ow, pw) = pad_geometry(iw, kw, stride);
    let mut y = Tensor::zeros(vec![batch, oh, ow, c]);
    for b in 0..batch {
        for orow in 0..oh {
            for ocol in 0..ow {
                for ch in 0..c {
                    let mut acc = 0.0;
                    for kr in 0..kh {
                        for kc in 0..kw {
                            let ir = (orow * stride + kr) as isize - ph;
                            let ic = (ocol * stride + kc) as isize - pw;
                            if ir < 0 || ic < 0 || ir >= ih as isize || ic >= iw as isize {
                                continue;
                            }
                            let xv = x.data()[x.at4(b, ir as usize, ic as usize, ch)];
                            acc += xv * w.data()[(kr * kw + kc) * c + ch];
                        }
                    }
                    let yi = y.at4(b, orow, ocol, ch);
                    y.data_mut()[yi] = acc;
                }
            }
        }
    }
    y
}

pub fn max_abs_diff(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape(), "comparing different shapes");
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Relative error normalized to the loss scale (matches the gradient
/// checker's definition).
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1.0_f64.max(a.abs()).max(b.abs())
}

pub const FD_STEP: f64 = 1e-5;

/// Central finite differences of a scalar function at `x`, elementwise.
pub fn fd_gradient(f: &mut dyn FnMut(&Tensor<f64>) -> f64, x: &Tensor<f64>) -> Tensor<f64> {
    let mut grad = Tensor::zeros(x.shape().to_vec());
    let mut probe = x.clone();
    for i in 0..x.scalar_count() {
        let original = probe.data()[i];
        probe.data_mut()[i] = original + FD_STEP;
        let plus = f(&probe);
        probe.data_mut()[i] = original - FD_STEP;
        let minus = f(&probe);
        probe.data_mut()[i] = original;
        grad.data_mut()[i] = (plus - minus) / (2.0 * FD_STEP);
    }
    grad
}

/// Max relative error between an analytic gradient and finite differences.
pub fn fd_compare(
    f: &mut dyn FnMut(&Tensor<f64>) -> f64,
    x: &Tensor<f64>,
    analytic: &Tensor<f64>,
) -> f64 {
    let fd = fd_gradient(f, x);
    analytic
        .data()
        .iter()
        .zip(fd.data())
        .map(|(&a, &b)| rel_err(a, b))
        .fold(0.0, f64::max)
}

/// Weighted-sum scalarization: loss = sum(y * r) for a fixed random r, whose
/// gradient with respect to y is exactly r.
pub fn scalarize(y: &Tensor<f64>, r: &Tensor<f64>) -> f64 {
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

/// Runs every operator's finite-difference check once for a seed; returns
/// (operator name, max relative error) pairs.
pub fn op_gradient_checks(seed: u64) -> Vec<(String, f64)> {
    use blocksearch::engine::ops;

    let mut results = Vec::new();
    let mut record = |name: &str, err: f64| results.push((name.to_string(), err));

    // conv2d: weights and input, stride 1 and 2.
    for (case, stride) in [(0u64, 1usize), (1, 2)] {
        let x = seeded(vec![2, 5, 5, 2], 100 + seed * 31 + case);
        let w = seeded(vec![3, 3, 2, 3], 200 + seed * 31 + case);
        let y = ops::conv2d_forward(&x, &w, stride).unwrap();
        let r = seeded(y.shape().to_vec(), 300 + seed * 31 + case);
        let (dx, dw) = ops::conv2d_backward(&x, &w, stride, &r).unwrap();
        let err_w = fd_compare(
            &mut |wp| scalarize(&ops::conv2d_forward(&x, wp, stride).unwrap(), &r),
            &w,
            &dw,
        );
        let err_x = fd_compare(
            &mut |xp| scalarize(&ops::conv2d_forward(xp, &w, stride).unwrap(), &r),
            &x,
            &dx,
        );
        record(&format!("conv2d_s{stride}/dw"), err_w);
        record(&format!("conv2d_s{stride}/dx"), err_x);
    }

    // depthwise
    {
        let x = seeded(vec![2, 4, 4, 3], 400 + seed);
        let w = seeded(vec![3, 3, 3], 500 + seed);
        let y = ops::depthwise_forward(&x, &w, 1).unwrap();
        let r = seeded(y.shape().to_vec(), 600 + seed);
        let (dx, dw) = ops::depthwise_backward(&x, &w, 1, &r).unwrap();
        record(
            "depthwise/dw",
            fd_compare(&mut |wp| scalarize(&ops::depthwise_forward(&x, wp, 1).unwrap(), &r), &w, &dw),
        );
        record(
            "depthwise/dx",
            fd_compare(&mut |xp| scalarize(&ops::depthwise_forward(xp, &w, 1).unwrap(), &r), &x, &dx),
        );
    }

    // batch norm (training statistics)
    {
        let x = seeded(vec![4, 3, 3, 2], 700 + seed);
        let gamma = seeded(vec![2], 800 + seed);
        let beta = seeded(vec![2], 900 + seed);
        let eps = blocksearch::engine::BN_EPSILON;
        let (y, cache) = ops::batch_norm_train(&x, &gamma, &beta, eps).unwrap();
        let r = seeded(y.shape().to_vec(), 1000 + seed);
        let dy = r.clone();
        let (dx, dgamma, dbeta) = ops::batch_norm_backward(&x, &gamma, &cache, &dy);
        record(
            "batch_norm/dx",
            fd_compare(
                &mut |xp| scalarize(&ops::batch_norm_train(xp, &gamma, &beta, eps).unwrap().0, &r),
                &x,
                &dx,
            ),
        );
        record(
            "batch_norm/dgamma",
            fd_compare(
                &mut |gp| scalarize(&ops::batch_norm_train(&x, gp, &beta, eps).unwrap().0, &r),
                &gamma,
                &dgamma,
            ),
        );
        record(
            "batch_norm/dbeta",
            fd_compare(
                &mut |bp| scalarize(&ops::batch_norm_train(&x, &gamma, bp, eps).unwrap().0, &r),
                &beta,
                &dbeta,
            ),
        );
    }

    // dense
    {
        let x = seeded(vec![3, 5], 1100 + seed);
        let w = seeded(vec![5, 4], 1200 + seed);
        let b = seeded(vec![4], 1300 + seed);
        let y = ops::dense_forward(&x, &w, &b).unwrap();
        let r = seeded(y.shape().to_vec(), 1400 + seed);
        let (dx, dw, db) = ops::dense_backward(&x, &w, &r);
        record(
            "dense/dw",
            fd_compare(&mut |wp| scalarize(&ops::dense_forward(&x, wp, &b).unwrap(), &r), &w, &dw),
        );
        record(
            "dense/db",
            fd_compare(&mut |bp| scalarize(&ops::dense_forward(&x, &w, bp).unwrap(), &r), &b, &db),
        );
        record(
            "dense/dx",
            fd_compare(&mut |xp| scalarize(&ops::dense_forward(xp, &w, &b).unwrap(), &r), &x, &dx),
        );
    }

    // global average pool
    {
        let x = seeded(vec![2, 4, 4, 3], 1500 + seed);
        let y = ops::global_avg_pool_forward(&x).unwrap();
        let r = seeded(y.shape().to_vec(), 1600 + seed);
        let dx = ops::global_avg_pool_backward(x.shape(), &r);
        record(
            "global_avg_pool/dx",
            fd_compare(&mut |xp| scalarize(&ops::global_avg_pool_forward(xp).unwrap(), &r), &x, &dx),
        );
    }

    // relu, keeping inputs away from the kink at 0
    {
        let mut x = seeded(vec![4, 8], 1700 + seed);
        for v in x.data_mut() {
            if v.abs() < 0.1 {
                *v += 0.2_f64.copysign(*v + 0.05);
            }
        }
        let y = ops::relu_forward(&x);
        let r = seeded(y.shape().to_vec(), 1800 + seed);
        let dx = ops::relu_backward(&x, &r);
        record(
            "relu/dx",
            fd_compare(&mut |xp| scalarize(&ops::relu_forward(xp), &r), &x, &dx),
        );
    }

    // combiners
    {
        let a = seeded(vec![2, 3, 3, 2], 1900 + seed);
        let b = seeded(vec![2, 3, 3, 2], 2000 + seed);
        let weights = [0.3, 0.7];
        let y = ops::weighted_sum_forward(&[&a, &b], &weights).unwrap();
        let r = seeded(y.shape().to_vec(), 2100 + seed);
        let grads = ops::weighted_sum_backward(&weights, &r);
        record(
            "weighted_sum/dx0",
            fd_compare(
                &mut |ap| scalarize(&ops::weighted_sum_forward(&[ap, &b], &weights).unwrap(), &r),
                &a,
                &grads[0],
            ),
        );
        let yc = ops::concat_forward(&[&a, &b]).unwrap();
        let rc = seeded(yc.shape().to_vec(), 2200 + seed);
        let parts = ops::concat_backward(&[2, 2], &rc);
        record(
            "concat/dx0",
            fd_compare(
                &mut |ap| scalarize(&ops::concat_forward(&[ap, &b]).unwrap(), &rc),
                &a,
                &parts[0],
            ),
        );
    }

    // softmax cross-entropy: the loss is its own scalarization
    {
        let logits = seeded(vec![4, 5], 2300 + seed);
        let labels = [0u32, 2, 4, 1];
        let (_, dlogits) = ops::softmax_cross_entropy(&logits, &labels).unwrap();
        record(
            "softmax_xent/dlogits",
            fd_compare(
                &mut |lp| ops::softmax_cross_entropy(lp, &labels).unwrap().0,
                &logits,
                &dlogits,
            ),
        );
    }

    results
}
