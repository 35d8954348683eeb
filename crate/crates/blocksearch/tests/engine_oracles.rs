//! Convolution and gradient oracles: the engine kernels against independent
//! naive-loop implementations and central finite differences.

mod support;

use blocksearch::archgraph::{build_architecture, MacroConfig};
use blocksearch::blockspace::BlockConfig;
use blocksearch::engine::gradcheck::grad_check;
use blocksearch::engine::ops;
use blocksearch::tensor::Tensor;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

#[test]
fn conv2d_matches_the_naive_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let kernels = [1usize, 3, 5];
    let mut cases = 0;
    for &kh in &kernels {
        for &kw in &kernels {
            for stride in [1usize, 2] {
                for _ in 0..3 {
                    let h = rng.gen_range(2..=8);
                    let w = rng.gen_range(2..=8);
                    let ci = rng.gen_range(1..=4);
                    let co = rng.gen_range(1..=4);
                    let b = rng.gen_range(1..=2);
                    let x = support::seeded(vec![b, h, w, ci], rng.gen());
                    let wt = support::seeded(vec![kh, kw, ci, co], rng.gen());
                    let fast = ops::conv2d_forward(&x, &wt, stride).unwrap();
                    let slow = support::naive_conv2d(&x, &wt, stride);
                    let diff = support::max_abs_diff(&fast, &slow);
                    assert!(
                        diff <= 1e-12,
                        "conv {kh}x{kw} s{stride} on {b}x{h}x{w}x{ci}->{co}: diff {diff}"
                    );
                    cases += 1;
                }
            }
        }
    }
    assert!(cases >= 54);
}

#[test]
fn depthwise_matches_the_naive_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for &k in &[1usize, 3, 5] {
        for stride in [1usize, 2] {
            for _ in 0..3 {
                let h = rng.gen_range(2..=8);
                let w = rng.gen_range(2..=8);
                let c = rng.gen_range(1..=4);
                let x = support::seeded(vec![1, h, w, c], rng.gen());
                let wt = support::seeded(vec![k, k, c], rng.gen());
                let fast = ops::depthwise_forward(&x, &wt, stride).unwrap();
                let slow = support::naive_depthwise(&x, &wt, stride);
                let diff = support::max_abs_diff(&fast, &slow);
                assert!(diff <= 1e-12, "depthwise {k} s{stride}: diff {diff}");
            }
        }
    }
}

#[test]
fn every_operator_gradient_matches_finite_differences_across_seeds() {
    // 20 seeds x full operator suite; convolutions are linear so their
    // finite differences are essentially exact, batch norm is the loosest.
    for seed in 0..20 {
        for (name, err) in support::op_gradient_checks(seed) {
            let bound = if name.starts_with("batch_norm") { 1e-5 } else { 1e-6 };
            assert!(err < bound, "seed {seed}: {name} error {err:.3e} exceeds {bound:.0e}");
        }
    }
}

#[test]
fn full_network_gradients_match_finite_differences_at_depth() {
    // Three stages at initial_filters 8: the widest verification-mode net.
    let block: BlockConfig = "conv(5)|conv(1)|sp_conv(3)|sp_conv(3)+add_det".parse().unwrap();
    let mc = MacroConfig::new(3, 1, 8, (8, 8, 3), 4).unwrap();
    let graph = Arc::new(build_architecture(&block, &mc).unwrap());
    let input = support::seeded(vec![4, 8, 8, 3], 77);
    let report = grad_check(&graph, &input, &[0, 1, 2, 3], 79).unwrap();
    assert!(
        report.max_rel_error < 1e-4,
        "max rel error {} at {}",
        report.max_rel_error,
        report.worst_param
    );
}

#[test]
fn single_dense_layer_gradient_is_nearly_exact() {
    // Near-linear case: logits are affine in the weights.
    let x = support::seeded(vec![4, 6], 3);
    let w = support::seeded(vec![6, 3], 4);
    let b = support::seeded(vec![3], 5);
    let labels = [0u32, 1, 2, 1];
    let (_, dlogits) = ops::softmax_cross_entropy(&ops::dense_forward(&x, &w, &b).unwrap(), &labels).unwrap();
    let (_, dw, _) = ops::dense_backward(&x, &w, &dlogits);
    let err = support::fd_compare(
        &mut |wp| {
            ops::softmax_cross_entropy(&ops::dense_forward(&x, wp, &b).unwrap(), &labels)
                .unwrap()
                .0
        },
        &w,
        &dw,
    );
    assert!(err < 1e-8, "dense-layer loss gradient error {err:.3e}");
}

#[test]
fn forward_equals_inferred_shapes_and_stays_finite_under_stochastic_combines() {
    let block: BlockConfig = "conv(3)|sp_conv(5)|rc_conv(3)|conv(1)+add_stc".parse().unwrap();
    let mc = MacroConfig::new(2, 2, 8, (8, 8, 3), 4).unwrap();
    let graph = Arc::new(build_architecture(&block, &mc).unwrap());
    let mut exec = blocksearch::engine::Executor::<f64>::new(graph.clone(), 11);
    let input = support::seeded(vec![4, 8, 8, 3], 13);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..5 {
        let trace = exec.forward_train(&input, &mut rng, true).unwrap();
        let probs = exec.probabilities(&trace);
        for row in probs.data().chunks_exact(4) {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn eval_purity_is_bitwise_after_training_updates() {
    let block: BlockConfig = "conv(3)|sp_conv(3)+add_stc".parse().unwrap();
    let mc = MacroConfig::new(1, 1, 8, (8, 8, 3), 2).unwrap();
    let graph = Arc::new(build_architecture(&block, &mc).unwrap());
    let mut exec = blocksearch::engine::Executor::<f32>::new(graph, 19);
    let input: Tensor<f32> = support::seeded(vec![4, 8, 8, 3], 23).cast();
    let labels = [0u32, 1, 0, 1];
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for _ in 0..3 {
        let trace = exec.forward_train(&input, &mut rng, true).unwrap();
        exec.backward(&trace, &labels).unwrap();
        exec.sgd_step(0.05, 0.9, 0.001).unwrap();
    }
    let a = exec.forward_eval(&input).unwrap();
    let b = exec.forward_eval(&input).unwrap();
    assert_eq!(
        exec.probabilities(&a).data(),
        exec.probabilities(&b).data(),
        "eval mode must be a pure function"
    );
}
