//! Top-k ensembles and block-component occurrence statistics.
//!
//! An ensemble averages the softmax outputs of its members; the prediction is
//! the argmax of the mean. The component histogram counts every branch
//! operation and combiner across all searched configs and across the top-k
//! subset, next to the expected top-k counts under random selection.

use crate::archgraph::build_architecture;
use crate::blockspace::{BlockConfig, BranchOp, CombinerKind};
use crate::datasets::LabeledImageSet;
use crate::engine::{accuracy, checkpoint, Executor};
use crate::error::{Error, Result};
use crate::manifest::RunManifest;
use crate::search::{select_top_k, TrialRecord};
use crate::tensor::Tensor;
use crate::trainer::preprocess_batch;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

const EVAL_BATCH: usize = 256;

/// One ensemble member: which trial, which checkpoint, which block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMember {
    pub trial_index: usize,
    pub config: BlockConfig,
    /// Checkpoint path relative to the run directory.
    pub checkpoint: String,
    pub val_acc: f64,
}

/// Persistable description of a top-k ensemble, bound to its run by the
/// manifest hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub manifest_hash: String,
    pub members: Vec<EnsembleMember>,
}

impl EnsembleSpec {
    /// Selects the top-k successful trials of a run. Returns the spec and
    /// whether k exceeded the available trials.
    pub fn from_records(manifest: &RunManifest, records: &[TrialRecord], k: usize) -> Result<(Self, bool)> {
        let (top, clamped) = select_top_k(records, k)?;
        let mut members = Vec::with_capacity(top.len());
        for record in top {
            let checkpoint = record.checkpoint.clone().ok_or_else(|| {
                Error::State(format!("trial {} has no checkpoint to ensemble", record.index))
            })?;
            members.push(EnsembleMember {
                trial_index: record.index,
                config: record.config.clone(),
                checkpoint,
                val_acc: record.best_val_acc,
            });
        }
        Ok((EnsembleSpec { manifest_hash: manifest.config_hash(), members }, clamped))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Runtime(format!("serializing ensemble spec: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading ensemble spec {}", path.display()), e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("ensemble spec {}: {e}", path.display())))
    }

    /// Instantiates every member from its checkpoint. Fails if the spec was
    /// built for a different run or any member's class count disagrees.
    pub fn load_members(&self, manifest: &RunManifest) -> Result<Vec<Executor<f32>>> {
        if self.manifest_hash != manifest.config_hash() {
            return Err(Error::State(
                "ensemble spec belongs to a different run (manifest hash mismatch)".into(),
            ));
        }
        if self.members.is_empty() {
            return Err(Error::InvalidConfig("ensemble has no members".into()));
        }
        let mut executors = Vec::with_capacity(self.members.len());
        for member in &self.members {
            let graph = Arc::new(build_architecture(&member.config, &manifest.search.macro_config)?);
            let mut exec = Executor::<f32>::new(graph, 0);
            checkpoint::load(&mut exec, &manifest.out_dir.join(&member.checkpoint))?;
            executors.push(exec);
        }
        Ok(executors)
    }
}

/// Arithmetic mean of the members' softmax outputs on one preprocessed batch.
///
/// Members run in 32-bit, where a softmax row only sums to 1 within rounding;
/// each member row is renormalized in f64 before averaging so the result rows
/// are exact probability distributions.
pub fn ensemble_predict(members: &[Executor<f32>], batch: &Tensor<f32>) -> Result<Tensor<f64>> {
    if members.is_empty() {
        return Err(Error::InvalidConfig("ensemble has no members".into()));
    }
    let classes = members[0].graph().macro_config().num_classes();
    for m in members {
        if m.graph().macro_config().num_classes() != classes {
            return Err(Error::Shape(format!(
                "ensemble member class counts disagree: {} vs {classes}",
                m.graph().macro_config().num_classes()
            )));
        }
    }
    let mut mean: Tensor<f64> = Tensor::zeros(vec![batch.dim(0), classes]);
    for member in members {
        let trace = member.forward_eval(batch)?;
        let probs = member.probabilities(&trace);
        for (acc_row, row) in mean
            .data_mut()
            .chunks_exact_mut(classes)
            .zip(probs.data().chunks_exact(classes))
        {
            let sum: f64 = row.iter().map(|&v| v as f64).sum();
            for (acc, &p) in acc_row.iter_mut().zip(row) {
                *acc += p as f64 / sum;
            }
        }
    }
    let count = members.len() as f64;
    for v in mean.data_mut() {
        *v /= count;
    }
    Ok(mean)
}

/// Top-1 accuracy and percent error rate on a split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub accuracy: f64,
    pub error_rate_pct: f64,
    pub examples: usize,
}

/// Evaluates an arbitrary batch-probability predictor over a whole split.
pub fn evaluate_with(
    mut predict: impl FnMut(&Tensor<f32>) -> Result<Tensor<f64>>,
    set: &LabeledImageSet,
    mean: &Tensor<f32>,
) -> Result<EvalMetrics> {
    if set.is_empty() {
        return Err(Error::InvalidConfig("cannot evaluate an empty split".into()));
    }
    let indices: Vec<usize> = (0..set.len()).collect();
    let mut correct_weighted = 0.0f64;
    for chunk in indices.chunks(EVAL_BATCH) {
        let (raw, labels) = set.gather(chunk);
        let batch = preprocess_batch(&raw, mean, false, false, false, None)?;
        let probs = predict(&batch)?;
        correct_weighted += accuracy(&probs, &labels) * labels.len() as f64;
    }
    let acc = correct_weighted / set.len() as f64;
    Ok(EvalMetrics { accuracy: acc, error_rate_pct: (1.0 - acc) * 100.0, examples: set.len() })
}

/// Evaluates one model.
pub fn evaluate_model(exec: &Executor<f32>, set: &LabeledImageSet, mean: &Tensor<f32>) -> Result<EvalMetrics> {
    evaluate_with(
        |batch| {
            let trace = exec.forward_eval(batch)?;
            Ok(exec.probabilities(&trace).cast::<f64>())
        },
        set,
        mean,
    )
}

/// Evaluates an ensemble.
pub fn evaluate_ensemble(
    members: &[Executor<f32>],
    set: &LabeledImageSet,
    mean: &Tensor<f32>,
) -> Result<EvalMetrics> {
    evaluate_with(|batch| ensemble_predict(members, batch), set, mean)
}

/// One histogram bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub component: String,
    pub count_all: u64,
    pub count_top: u64,
    /// count_all * |top| / |configs|: what the top-k would hold if selected
    /// at random.
    pub expected_top: f64,
}

/// Occurrence counts of every branch operation and combiner, over all configs
/// and over the top subset.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentHistogram {
    pub ops: Vec<HistogramRow>,
    pub combiners: Vec<HistogramRow>,
}

impl ComponentHistogram {
    pub fn rows(&self) -> impl Iterator<Item = &HistogramRow> {
        self.ops.iter().chain(self.combiners.iter())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("component,count_all,count_top,expected_top\n");
        for row in self.rows() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.component, row.count_all, row.count_top, row.expected_top
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

/// Counts each component over all configs and over the top subset. Every
/// canonical bucket is present even at count zero.
pub fn component_histogram(configs: &[BlockConfig], top: &[BlockConfig]) -> Result<ComponentHistogram> {
    if configs.is_empty() {
        return Err(Error::InvalidConfig("component histogram needs at least one config".into()));
    }
    let ratio = top.len() as f64 / configs.len() as f64;

    let count_ops = |set: &[BlockConfig], op: BranchOp| -> u64 {
        set.iter()
            .flat_map(|c| c.branches())
            .filter(|&&b| b == op)
            .count() as u64
    };
    let count_combiner = |set: &[BlockConfig], kind: CombinerKind| -> u64 {
        set.iter().filter(|c| c.combiner() == kind).count() as u64
    };

    let ops = BranchOp::all()
        .into_iter()
        .map(|op| {
            let count_all = count_ops(configs, op);
            HistogramRow {
                component: op.to_string(),
                count_all,
                count_top: count_ops(top, op),
                expected_top: count_all as f64 * ratio,
            }
        })
        .collect();
    let combiners = CombinerKind::ALL
        .into_iter()
        .map(|kind| {
            let count_all = count_combiner(configs, kind);
            HistogramRow {
                component: kind.to_string(),
                count_all,
                count_top: count_combiner(top, kind),
                expected_top: count_all as f64 * ratio,
            }
        })
        .collect();
    Ok(ComponentHistogram { ops, combiners })
}
