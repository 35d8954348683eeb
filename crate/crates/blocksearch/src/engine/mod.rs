//! Differentiable execution of compiled graphs.
//!
//! An [`Executor`] owns the parameters, gradients, and momentum buffers for
//! one graph and runs forward and backward passes over it. One trial owns one
//! executor; eval-mode passes take `&self` so read-only executors can be
//! shared.

pub mod checkpoint;
pub mod gradcheck;
pub mod ops;

use crate::archgraph::{ArchGraph, LayerKind};
use crate::blockspace::CombinerKind;
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};
use ops::BnCache;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::collections::BTreeMap;
use std::sync::Arc;

/// Batch-norm epsilon.
pub const BN_EPSILON: f64 = 1e-5;
/// Exponential moving average momentum for batch-norm running stats.
pub const BN_MOMENTUM: f64 = 0.9;

/// Which parameter a store entry holds; controls weight decay (dense bias is
/// exempt) and checkpoint naming.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    ConvWeight,
    DepthwiseWeight,
    Gamma,
    Beta,
    DenseWeight,
    DenseBias,
}

impl ParamRole {
    pub fn decays(self) -> bool {
        !matches!(self, ParamRole::DenseBias)
    }

    fn suffix(self) -> &'static str {
        match self {
            ParamRole::ConvWeight | ParamRole::DepthwiseWeight | ParamRole::DenseWeight => "w",
            ParamRole::Gamma => "gamma",
            ParamRole::Beta => "beta",
            ParamRole::DenseBias => "b",
        }
    }
}

/// One trainable tensor with its gradient and momentum buffer.
#[derive(Debug, Clone)]
pub struct ParamEntry<T> {
    pub name: String,
    pub node: usize,
    pub role: ParamRole,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub momentum: Tensor<T>,
}

/// Running statistics of one batch-norm node (not trainable).
#[derive(Debug, Clone)]
pub struct BnState<T> {
    pub name: String,
    pub node: usize,
    pub run_mean: Tensor<T>,
    pub run_var: Tensor<T>,
}

/// All parameters of one instantiated graph.
#[derive(Debug, Clone)]
pub struct ParamStore<T> {
    entries: Vec<ParamEntry<T>>,
    bn_states: Vec<BnState<T>>,
}

impl<T: Element> ParamStore<T> {
    pub fn entries(&self) -> &[ParamEntry<T>] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [ParamEntry<T>] {
        &mut self.entries
    }

    pub fn bn_states(&self) -> &[BnState<T>] {
        &self.bn_states
    }

    pub fn bn_states_mut(&mut self) -> &mut [BnState<T>] {
        &mut self.bn_states
    }

    /// Total number of trainable scalars (running stats excluded).
    pub fn param_element_count(&self) -> u64 {
        self.entries.iter().map(|e| e.value.scalar_count() as u64).sum()
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            for g in e.grad.data_mut() {
                *g = T::zero();
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Binding {
    None,
    /// Conv, stem conv, or depthwise weight.
    Weight(usize),
    Bn { gamma: usize, beta: usize, state: usize },
    Dense { w: usize, b: usize },
}

/// Per-node context saved by a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
enum Aux<T> {
    None,
    Bn(BnCache<T>),
    Stc(Vec<T>),
}

/// Execution mode. Training normalizes with batch statistics and draws
/// stochastic combiner weights; eval uses running statistics and equal
/// weights, and is a pure function of (parameters, input).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// All activations and per-node context from one forward pass.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    input: Tensor<T>,
    activations: Vec<Tensor<T>>,
    aux: Vec<Aux<T>>,
}

impl<T: Element> Trace<T> {
    pub fn activation(&self, node: usize) -> &Tensor<T> {
        &self.activations[node]
    }

    /// Stochastic combiner weights drawn by this pass, keyed by node id.
    pub fn stc_weights(&self) -> BTreeMap<usize, Vec<T>> {
        self.aux
            .iter()
            .enumerate()
            .filter_map(|(id, aux)| match aux {
                Aux::Stc(w) => Some((id, w.clone())),
                _ => None,
            })
            .collect()
    }
}

/// Argmax accuracy of probability (or logit) rows against labels.
pub fn accuracy<T: Element>(scores: &Tensor<T>, labels: &[u32]) -> f64 {
    let classes = scores.dim(1);
    let mut correct = 0usize;
    for (row, &label) in scores.data().chunks_exact(classes).zip(labels) {
        let mut best = 0usize;
        for (c, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = c;
            }
        }
        if best == label as usize {
            correct += 1;
        }
    }
    correct as f64 / labels.len() as f64
}

/// Owns one graph's parameters and executes it.
#[derive(Debug, Clone)]
pub struct Executor<T> {
    graph: Arc<ArchGraph>,
    store: ParamStore<T>,
    bindings: Vec<Binding>,
}

impl<T: Element> Executor<T> {
    /// Instantiates parameters for the graph: fan-in-scaled Gaussians
    /// (variance 2 / fan_in) for convolution and dense weights, gamma 1,
    /// beta 0, bias 0, running mean 0, running variance 1.
    pub fn new(graph: Arc<ArchGraph>, seed: u64) -> Self {
        let mut rng = crate::rng::rng_for(seed, 0, crate::rng::Stream::Train);
        let mut entries = Vec::new();
        let mut bn_states = Vec::new();
        let mut bindings = Vec::with_capacity(graph.nodes().len());

        let mut gaussian = |shape: Vec<usize>, fan_in: usize| -> Tensor<T> {
            let std = (2.0 / fan_in as f64).sqrt();
            Tensor::from_fn(shape, |_| {
                let z: f64 = rng.sample(StandardNormal);
                T::from_f64(z * std)
            })
        };

        for node in graph.nodes() {
            let binding = match node.kind {
                LayerKind::StemConv { kernel, c_in, c_out, .. }
                | LayerKind::Conv { kernel, c_in, c_out, .. } => {
                    let value = gaussian(vec![kernel.0, kernel.1, c_in, c_out], kernel.0 * kernel.1 * c_in);
                    entries.push(ParamEntry {
                        name: format!("{}.{}", node.name, ParamRole::ConvWeight.suffix()),
                        node: node.id,
                        role: ParamRole::ConvWeight,
                        grad: Tensor::zeros(value.shape().to_vec()),
                        momentum: Tensor::zeros(value.shape().to_vec()),
                        value,
                    });
                    Binding::Weight(entries.len() - 1)
                }
                LayerKind::DepthwiseConv { kernel, channels, .. } => {
                    let value = gaussian(vec![kernel, kernel, channels], kernel * kernel);
                    entries.push(ParamEntry {
                        name: format!("{}.{}", node.name, ParamRole::DepthwiseWeight.suffix()),
                        node: node.id,
                        role: ParamRole::DepthwiseWeight,
                        grad: Tensor::zeros(value.shape().to_vec()),
                        momentum: Tensor::zeros(value.shape().to_vec()),
                        value,
                    });
                    Binding::Weight(entries.len() - 1)
                }
                LayerKind::BatchNorm { channels } => {
                    entries.push(ParamEntry {
                        name: format!("{}.gamma", node.name),
                        node: node.id,
                        role: ParamRole::Gamma,
                        value: Tensor::filled(vec![channels], T::one()),
                        grad: Tensor::zeros(vec![channels]),
                        momentum: Tensor::zeros(vec![channels]),
                    });
                    let gamma = entries.len() - 1;
                    entries.push(ParamEntry {
                        name: format!("{}.beta", node.name),
                        node: node.id,
                        role: ParamRole::Beta,
                        value: Tensor::zeros(vec![channels]),
                        grad: Tensor::zeros(vec![channels]),
                        momentum: Tensor::zeros(vec![channels]),
                    });
                    let beta = entries.len() - 1;
                    bn_states.push(BnState {
                        name: node.name.clone(),
                        node: node.id,
                        run_mean: Tensor::zeros(vec![channels]),
                        run_var: Tensor::filled(vec![channels], T::one()),
                    });
                    Binding::Bn { gamma, beta, state: bn_states.len() - 1 }
                }
                LayerKind::Dense { c_in, c_out } => {
                    let value = gaussian(vec![c_in, c_out], c_in);
                    entries.push(ParamEntry {
                        name: format!("{}.w", node.name),
                        node: node.id,
                        role: ParamRole::DenseWeight,
                        grad: Tensor::zeros(value.shape().to_vec()),
                        momentum: Tensor::zeros(value.shape().to_vec()),
                        value,
                    });
                    let w = entries.len() - 1;
                    entries.push(ParamEntry {
                        name: format!("{}.b", node.name),
                        node: node.id,
                        role: ParamRole::DenseBias,
                        value: Tensor::zeros(vec![c_out]),
                        grad: Tensor::zeros(vec![c_out]),
                        momentum: Tensor::zeros(vec![c_out]),
                    });
                    Binding::Dense { w, b: w + 1 }
                }
                _ => Binding::None,
            };
            bindings.push(binding);
        }

        Executor { graph, store: ParamStore { entries, bn_states }, bindings }
    }

    pub fn graph(&self) -> &Arc<ArchGraph> {
        &self.graph
    }

    pub fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    fn entry(&self, idx: usize) -> &ParamEntry<T> {
        &self.store.entries[idx]
    }

    /// Ids and branch counts of stochastic-add combine nodes.
    pub fn stc_nodes(&self) -> Vec<(usize, usize)> {
        self.graph
            .nodes()
            .iter()
            .filter(|n| matches!(n.kind, LayerKind::Combine { kind: CombinerKind::AddStc }))
            .map(|n| (n.id, n.inputs.len()))
            .collect()
    }

    /// Draws one set of simplex weights per stochastic combine node.
    pub fn sample_stc_weights(&self, rng: &mut ChaCha8Rng) -> BTreeMap<usize, Vec<T>> {
        self.stc_nodes()
            .into_iter()
            .map(|(id, k)| (id, ops::simplex_weights(rng, k)))
            .collect()
    }

    /// Eval-mode forward: running batch-norm stats, equal combiner weights.
    /// Pure in (parameters, input).
    pub fn forward_eval(&self, input: &Tensor<T>) -> Result<Trace<T>> {
        let (trace, _) = self.run_forward(input, Mode::Eval, None)?;
        Ok(trace)
    }

    /// Training-mode forward. Samples stochastic combiner weights from `rng`
    /// and, when `update_stats` is set, folds the batch statistics into the
    /// running batch-norm stats.
    pub fn forward_train(
        &mut self,
        input: &Tensor<T>,
        rng: &mut ChaCha8Rng,
        update_stats: bool,
    ) -> Result<Trace<T>> {
        let stc = self.sample_stc_weights(rng);
        let (trace, updates) = self.run_forward(input, Mode::Train, Some(&stc))?;
        if update_stats {
            for (state_idx, mean, var) in updates {
                let state = &mut self.store.bn_states[state_idx];
                ops::update_running_stats(&mut state.run_mean, &mut state.run_var, &mean, &var, BN_MOMENTUM);
            }
        }
        Ok(trace)
    }

    /// Training-mode forward with fixed stochastic combiner weights and no
    /// running-stat updates. Deterministic; used by the gradient checker.
    pub fn forward_train_frozen(
        &self,
        input: &Tensor<T>,
        stc: &BTreeMap<usize, Vec<T>>,
    ) -> Result<Trace<T>> {
        let (trace, _) = self.run_forward(input, Mode::Train, Some(stc))?;
        Ok(trace)
    }

    #[allow(clippy::type_complexity)]
    fn run_forward(
        &self,
        input: &Tensor<T>,
        mode: Mode,
        stc: Option<&BTreeMap<usize, Vec<T>>>,
    ) -> Result<(Trace<T>, Vec<(usize, Vec<T>, Vec<T>)>)> {
        input.ensure_finite("network input")?;
        let nodes = self.graph.nodes();
        let mut activations: Vec<Tensor<T>> = Vec::with_capacity(nodes.len());
        let mut aux: Vec<Aux<T>> = Vec::with_capacity(nodes.len());
        let mut stat_updates = Vec::new();

        for node in nodes {
            let (out, node_aux) = {
                let arg = |slot: usize| -> &Tensor<T> {
                    if node.inputs.is_empty() {
                        input
                    } else {
                        &activations[node.inputs[slot]]
                    }
                };
                match &node.kind {
                    LayerKind::StemConv { stride, .. } | LayerKind::Conv { stride, .. } => {
                        let Binding::Weight(w) = self.bindings[node.id] else {
                            unreachable!("conv node without weight binding")
                        };
                        (ops::conv2d_forward(arg(0), &self.entry(w).value, *stride)?, Aux::None)
                    }
                    LayerKind::DepthwiseConv { stride, .. } => {
                        let Binding::Weight(w) = self.bindings[node.id] else {
                            unreachable!("depthwise node without weight binding")
                        };
                        (ops::depthwise_forward(arg(0), &self.entry(w).value, *stride)?, Aux::None)
                    }
                    LayerKind::BatchNorm { .. } => {
                        let Binding::Bn { gamma, beta, state } = self.bindings[node.id] else {
                            unreachable!("bn node without binding")
                        };
                        let gamma_t = &self.entry(gamma).value;
                        let beta_t = &self.entry(beta).value;
                        match mode {
                            Mode::Train => {
                                let x = arg(0);
                                let (y, cache) = ops::batch_norm_train(x, gamma_t, beta_t, BN_EPSILON)?;
                                let channels = gamma_t.scalar_count();
                                let (mean, var) = ops::channel_moments(x, channels);
                                stat_updates.push((state, mean, var));
                                (y, Aux::Bn(cache))
                            }
                            Mode::Eval => {
                                let st = &self.store.bn_states[state];
                                let (y, cache) = ops::batch_norm_eval(
                                    arg(0),
                                    gamma_t,
                                    beta_t,
                                    &st.run_mean,
                                    &st.run_var,
                                    BN_EPSILON,
                                )?;
                                (y, Aux::Bn(cache))
                            }
                        }
                    }
                    LayerKind::Relu => (ops::relu_forward(arg(0)), Aux::None),
                    LayerKind::Combine { kind } => {
                        let tensors: Vec<&Tensor<T>> = (0..node.inputs.len()).map(arg).collect();
                        match kind {
                            CombinerKind::Concat => (ops::concat_forward(&tensors)?, Aux::None),
                            CombinerKind::AddDet => {
                                let ones = vec![T::one(); tensors.len()];
                                (ops::weighted_sum_forward(&tensors, &ones)?, Aux::None)
                            }
                            CombinerKind::AddStc => {
                                let weights = match (mode, stc) {
                                    (Mode::Train, Some(map)) => map
                                        .get(&node.id)
                                        .cloned()
                                        .ok_or_else(|| {
                                            Error::Runtime(format!(
                                                "no stochastic weights supplied for node {} ({})",
                                                node.id, node.name
                                            ))
                                        })?,
                                    _ => ops::equal_weights(tensors.len()),
                                };
                                let y = ops::weighted_sum_forward(&tensors, &weights)?;
                                (y, Aux::Stc(weights))
                            }
                        }
                    }
                    LayerKind::ResidualAdd => {
                        let tensors = [arg(0), arg(1)];
                        (ops::weighted_sum_forward(&tensors, &[T::one(), T::one()])?, Aux::None)
                    }
                    LayerKind::GlobalAvgPool => (ops::global_avg_pool_forward(arg(0))?, Aux::None),
                    LayerKind::Dense { .. } => {
                        let Binding::Dense { w, b } = self.bindings[node.id] else {
                            unreachable!("dense node without binding")
                        };
                        (ops::dense_forward(arg(0), &self.entry(w).value, &self.entry(b).value)?, Aux::None)
                    }
                    LayerKind::Softmax => (ops::softmax_forward(arg(0)), Aux::None),
                }
            };
            out.ensure_finite(&format!("node {} ({})", node.id, node.name))?;
            activations.push(out);
            aux.push(node_aux);
        }

        let trace = Trace { input: input.clone(), activations, aux };
        Ok((trace, stat_updates))
    }

    fn logits_node(&self) -> usize {
        let softmax = self.graph.nodes().last().expect("graph has nodes");
        debug_assert!(matches!(softmax.kind, LayerKind::Softmax));
        softmax.inputs[0]
    }

    /// Softmax output of a completed pass.
    pub fn probabilities<'t>(&self, trace: &'t Trace<T>) -> &'t Tensor<T> {
        &trace.activations[self.graph.nodes().len() - 1]
    }

    /// Mean cross-entropy loss of a completed pass.
    pub fn loss(&self, trace: &Trace<T>, labels: &[u32]) -> Result<f64> {
        let (loss, _) = ops::softmax_cross_entropy(&trace.activations[self.logits_node()], labels)?;
        Ok(loss)
    }

    /// Computes the loss and writes parameter gradients into the store
    /// (replacing previous contents). Returns the loss.
    pub fn backward(&mut self, trace: &Trace<T>, labels: &[u32]) -> Result<f64> {
        self.store.zero_grads();
        let nodes = self.graph.nodes();
        let logits = self.logits_node();
        let (loss, dlogits) = ops::softmax_cross_entropy(&trace.activations[logits], labels)?;

        let mut grads: Vec<Option<Tensor<T>>> = vec![None; nodes.len()];
        grads[logits] = Some(dlogits);

        fn accumulate<T: Element>(slot: &mut Option<Tensor<T>>, t: Tensor<T>) {
            match slot {
                None => *slot = Some(t),
                Some(acc) => {
                    for (a, &v) in acc.data_mut().iter_mut().zip(t.data()) {
                        *a = *a + v;
                    }
                }
            }
        }

        for node in nodes.iter().rev() {
            if matches!(node.kind, LayerKind::Softmax) {
                continue; // the loss gradient seeds directly at the logits
            }
            let Some(dy) = grads[node.id].take() else {
                continue;
            };
            let input_act = |slot: usize| -> &Tensor<T> {
                if node.inputs.is_empty() {
                    &trace.input
                } else {
                    &trace.activations[node.inputs[slot]]
                }
            };
            match &node.kind {
                LayerKind::StemConv { stride, .. } | LayerKind::Conv { stride, .. } => {
                    let Binding::Weight(w) = self.bindings[node.id] else { unreachable!() };
                    let (dx, dw) =
                        ops::conv2d_backward(input_act(0), &self.store.entries[w].value, *stride, &dy)?;
                    for (g, &v) in self.store.entries[w].grad.data_mut().iter_mut().zip(dw.data()) {
                        *g = *g + v;
                    }
                    if !node.inputs.is_empty() {
                        accumulate(&mut grads[node.inputs[0]], dx);
                    }
                }
                LayerKind::DepthwiseConv { stride, .. } => {
                    let Binding::Weight(w) = self.bindings[node.id] else { unreachable!() };
                    let (dx, dw) =
                        ops::depthwise_backward(input_act(0), &self.store.entries[w].value, *stride, &dy)?;
                    for (g, &v) in self.store.entries[w].grad.data_mut().iter_mut().zip(dw.data()) {
                        *g = *g + v;
                    }
                    if !node.inputs.is_empty() {
                        accumulate(&mut grads[node.inputs[0]], dx);
                    }
                }
                LayerKind::BatchNorm { .. } => {
                    let Binding::Bn { gamma, beta, .. } = self.bindings[node.id] else { unreachable!() };
                    let Aux::Bn(cache) = &trace.aux[node.id] else {
                        return Err(Error::Runtime(format!(
                            "trace is missing batch-norm context for node {}",
                            node.id
                        )));
                    };
                    let (dx, dgamma, dbeta) =
                        ops::batch_norm_backward(input_act(0), &self.store.entries[gamma].value, cache, &dy);
                    for (g, &v) in self.store.entries[gamma].grad.data_mut().iter_mut().zip(dgamma.data()) {
                        *g = *g + v;
                    }
                    for (g, &v) in self.store.entries[beta].grad.data_mut().iter_mut().zip(dbeta.data()) {
                        *g = *g + v;
                    }
                    accumulate(&mut grads[node.inputs[0]], dx);
                }
                LayerKind::Relu => {
                    let dx = ops::relu_backward(input_act(0), &dy);
                    accumulate(&mut grads[node.inputs[0]], dx);
                }
                LayerKind::Combine { kind } => {
                    let parts = match kind {
                        CombinerKind::Concat => {
                            let widths: Vec<usize> =
                                node.inputs.iter().map(|&i| trace.activations[i].dim(3)).collect();
                            ops::concat_backward(&widths, &dy)
                        }
                        CombinerKind::AddDet => {
                            ops::weighted_sum_backward(&vec![T::one(); node.inputs.len()], &dy)
                        }
                        CombinerKind::AddStc => {
                            let Aux::Stc(weights) = &trace.aux[node.id] else {
                                return Err(Error::Runtime(format!(
                                    "trace is missing combiner weights for node {}",
                                    node.id
                                )));
                            };
                            ops::weighted_sum_backward(weights, &dy)
                        }
                    };
                    for (&input, part) in node.inputs.iter().zip(parts) {
                        accumulate(&mut grads[input], part);
                    }
                }
                LayerKind::ResidualAdd => {
                    accumulate(&mut grads[node.inputs[0]], dy.clone());
                    accumulate(&mut grads[node.inputs[1]], dy);
                }
                LayerKind::GlobalAvgPool => {
                    let dx = ops::global_avg_pool_backward(input_act(0).shape(), &dy);
                    accumulate(&mut grads[node.inputs[0]], dx);
                }
                LayerKind::Dense { .. } => {
                    let Binding::Dense { w, b } = self.bindings[node.id] else { unreachable!() };
                    let (dx, dw, db) = ops::dense_backward(input_act(0), &self.store.entries[w].value, &dy);
                    for (g, &v) in self.store.entries[w].grad.data_mut().iter_mut().zip(dw.data()) {
                        *g = *g + v;
                    }
                    for (g, &v) in self.store.entries[b].grad.data_mut().iter_mut().zip(db.data()) {
                        *g = *g + v;
                    }
                    accumulate(&mut grads[node.inputs[0]], dx);
                }
                LayerKind::Softmax => unreachable!(),
            }
        }

        for e in &self.store.entries {
            e.grad.ensure_finite(&format!("gradient of {}", e.name))?;
        }
        Ok(loss)
    }

    /// One momentum-SGD update from the stored gradients:
    /// v <- mu v + g + lambda w (dense bias exempt from decay), w <- w - lr v.
    pub fn sgd_step(&mut self, lr: f64, momentum: f64, weight_decay: f64) -> Result<()> {
        let lr = T::from_f64(lr);
        let mu = T::from_f64(momentum);
        for e in &mut self.store.entries {
            let lambda = if e.role.decays() { T::from_f64(weight_decay) } else { T::zero() };
            for ((w, &g), v) in e
                .value
                .data_mut()
                .iter_mut()
                .zip(e.grad.data())
                .zip(e.momentum.data_mut())
            {
                *v = mu * *v + g + lambda * *w;
                *w = *w - lr * *v;
            }
            e.value.ensure_finite(&format!("update of {}", e.name))?;
        }
        Ok(())
    }
}
