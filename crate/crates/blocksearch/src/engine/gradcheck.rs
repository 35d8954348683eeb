//! Full-network gradient verification against central finite differences.
//!
//! Runs in 64-bit with frozen stochastic combiner weights so both the
//! analytic pass and every finite-difference evaluation see the same
//! deterministic function.

use super::Executor;
use crate::archgraph::ArchGraph;
use crate::error::Result;
use crate::tensor::Tensor;
use rayon::prelude::*;
use std::sync::Arc;

/// Step for central differences.
pub const FD_STEP: f64 = 1e-5;

/// Outcome of a gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// max over parameters of |analytic - fd| / max(1, |analytic|, |fd|).
    pub max_rel_error: f64,
    /// Parameter tensor and element index where the maximum occurred.
    pub worst_param: String,
    pub checked_params: usize,
}

/// Relative error normalized to the loss scale: small true gradients are
/// compared near-absolutely instead of amplifying finite-difference noise.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1.0_f64.max(a.abs()).max(b.abs())
}

/// Compares every parameter gradient of the softmax cross-entropy loss
/// against central finite differences.
pub fn grad_check(
    graph: &Arc<ArchGraph>,
    input: &Tensor<f64>,
    labels: &[u32],
    seed: u64,
) -> Result<GradCheckReport> {
    let mut exec = Executor::<f64>::new(graph.clone(), seed);
    let mut rng = crate::rng::rng_for(seed, 1, crate::rng::Stream::Train);
    let stc = exec.sample_stc_weights(&mut rng);

    let trace = exec.forward_train_frozen(input, &stc)?;
    exec.backward(&trace, labels)?;

    let analytic: Vec<(usize, usize, f64)> = exec
        .store()
        .entries()
        .iter()
        .enumerate()
        .flat_map(|(ei, e)| {
            e.grad
                .data()
                .iter()
                .enumerate()
                .map(move |(xi, &g)| (ei, xi, g))
        })
        .collect();

    let chunk = analytic.len().div_ceil(rayon::current_num_threads().max(1) * 4).max(1);
    let results: Vec<Result<(f64, usize, usize)>> = analytic
        .par_chunks(chunk)
        .map(|chunk_items| {
            let mut local = exec.clone();
            let mut worst = (0.0f64, 0usize, 0usize);
            for &(ei, xi, g) in chunk_items {
                let original = local.store().entries()[ei].value.data()[xi];
                local.store_mut().entries_mut()[ei].value.data_mut()[xi] = original + FD_STEP;
                let plus = {
                    let t = local.forward_train_frozen(input, &stc)?;
                    local.loss(&t, labels)?
                };
                local.store_mut().entries_mut()[ei].value.data_mut()[xi] = original - FD_STEP;
                let minus = {
                    let t = local.forward_train_frozen(input, &stc)?;
                    local.loss(&t, labels)?
                };
                local.store_mut().entries_mut()[ei].value.data_mut()[xi] = original;
                let fd = (plus - minus) / (2.0 * FD_STEP);
                let err = relative_error(g, fd);
                if err > worst.0 {
                    worst = (err, ei, xi);
                }
            }
            Ok(worst)
        })
        .collect();

    let mut max_rel_error = 0.0;
    let mut worst = (0usize, 0usize);
    for r in results {
        let (err, ei, xi) = r?;
        if err > max_rel_error {
            max_rel_error = err;
            worst = (ei, xi);
        }
    }
    let worst_param = format!("{}[{}]", exec.store().entries()[worst.0].name, worst.1);
    Ok(GradCheckReport { max_rel_error, worst_param, checked_params: analytic.len() })
}
