//! Training one architecture under the fixed protocol.
//!
//! Momentum SGD on the softmax cross-entropy loss, minibatch size 128,
//! initial learning rate 0.1 halved every 25 epochs, momentum 0.9, weight
//! decay 0.001, up to 500 epochs with early stopping after 50 epochs without
//! a new best validation accuracy. Preprocessing subtracts the per-pixel
//! training mean; training batches additionally get a random 4-pixel-pad crop
//! and a horizontal flip where the dataset profile allows it.

use crate::archgraph::ArchGraph;
use crate::datasets::{DataSplits, DatasetProfile, LabeledImageSet};
use crate::engine::{accuracy, checkpoint, Executor};
use crate::error::{Error, Result};
use crate::rng::{rng_for, Stream};
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

const CROP_PAD: usize = 4;
const EVAL_BATCH: usize = 256;

/// Training protocol parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr_initial: f64,
    pub lr_drop_every_epochs: usize,
    pub lr_drop_factor: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub early_stop_patience_epochs: usize,
    pub augment_crop: bool,
    pub augment_flip: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            lr_initial: 0.1,
            lr_drop_every_epochs: 25,
            lr_drop_factor: 0.5,
            momentum: 0.9,
            weight_decay: 0.001,
            max_epochs: 500,
            early_stop_patience_epochs: 50,
            augment_crop: true,
            augment_flip: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::InvalidConfig(
                "batch size must be at least 2 (batch norm needs it)".into(),
            ));
        }
        if self.lr_initial <= 0.0 {
            return Err(Error::InvalidConfig("initial learning rate must be positive".into()));
        }
        if self.lr_drop_every_epochs == 0 {
            return Err(Error::InvalidConfig("learning-rate drop interval must be positive".into()));
        }
        if !(0.0 < self.lr_drop_factor && self.lr_drop_factor < 1.0) {
            return Err(Error::InvalidConfig("learning-rate drop factor must be in (0, 1)".into()));
        }
        if self.momentum < 0.0 || self.weight_decay < 0.0 {
            return Err(Error::InvalidConfig("momentum and weight decay must be non-negative".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidConfig("max epochs must be at least 1".into()));
        }
        if self.early_stop_patience_epochs > self.max_epochs {
            return Err(Error::InvalidConfig("patience cannot exceed max epochs".into()));
        }
        Ok(())
    }

    /// Restrict augmentation to what the dataset profile allows (digits are
    /// never flipped, for example).
    pub fn for_profile(&self, profile: &DatasetProfile) -> TrainConfig {
        let mut cfg = self.clone();
        cfg.augment_crop = cfg.augment_crop && profile.augment_crop;
        cfg.augment_flip = cfg.augment_flip && profile.augment_flip;
        cfg
    }

    /// Apply overrides from a compact spec like `epochs=30,batch=64,lr=0.05`.
    pub fn with_spec(&self, spec: &str) -> Result<TrainConfig> {
        let mut cfg = self.clone();
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("train spec item \"{part}\" is not key=value")))?;
            let value = value.trim();
            let num = |what: &str| -> Result<usize> {
                value.parse().map_err(|_| Error::Parse(format!("{what} \"{value}\" is not an integer")))
            };
            let float = |what: &str| -> Result<f64> {
                value.parse().map_err(|_| Error::Parse(format!("{what} \"{value}\" is not a number")))
            };
            let flag = |what: &str| -> Result<bool> {
                match value {
                    "on" | "true" | "1" => Ok(true),
                    "off" | "false" | "0" => Ok(false),
                    other => Err(Error::Parse(format!("{what} \"{other}\" is not on/off"))),
                }
            };
            match key.trim() {
                "batch" | "batch_size" => cfg.batch_size = num("batch size")?,
                "lr" | "lr_initial" => cfg.lr_initial = float("learning rate")?,
                "lr_drop_every" => cfg.lr_drop_every_epochs = num("drop interval")?,
                "lr_drop_factor" => cfg.lr_drop_factor = float("drop factor")?,
                "momentum" => cfg.momentum = float("momentum")?,
                "weight_decay" | "wd" => cfg.weight_decay = float("weight decay")?,
                "epochs" | "max_epochs" => cfg.max_epochs = num("epoch count")?,
                "patience" => cfg.early_stop_patience_epochs = num("patience")?,
                "crop" => cfg.augment_crop = flag("crop")?,
                "flip" => cfg.augment_flip = flag("flip")?,
                "seed" => {
                    cfg.seed = value
                        .parse()
                        .map_err(|_| Error::Parse(format!("seed \"{value}\" is not an integer")))?
                }
                other => return Err(Error::Parse(format!("unknown train spec key \"{other}\""))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Step-decay schedule: lr_initial * factor^floor(epoch / interval).
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    cfg.lr_initial * cfg.lr_drop_factor.powi((epoch / cfg.lr_drop_every_epochs) as i32)
}

/// One epoch's metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

/// Why training ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StopReason {
    /// No validation improvement for the full patience window.
    EarlyStopped,
    MaxEpochs,
    /// Loss or an update went non-finite; the trial scores zero.
    Diverged { reason: String },
}

/// Outcome of one training run.
#[derive(Debug, Clone)]
pub struct TrainResult {
    pub history: Vec<EpochStats>,
    pub best_val_acc: f64,
    pub best_epoch: usize,
    pub stop: StopReason,
    pub wall_secs: f64,
    pub checkpoint: Option<PathBuf>,
}

impl TrainResult {
    pub fn epochs_run(&self) -> usize {
        self.history.len()
    }
}

/// Tracks the best validation accuracy and decides when patience runs out.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: Option<usize>,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping { patience, best: f64::NEG_INFINITY, best_epoch: None }
    }

    /// Records one epoch; returns whether it set a new best.
    pub fn observe(&mut self, epoch: usize, val_acc: f64) -> bool {
        if val_acc > self.best {
            self.best = val_acc;
            self.best_epoch = Some(epoch);
            true
        } else {
            false
        }
    }

    /// True exactly `patience` epochs after the best epoch.
    pub fn should_stop(&self, epoch: usize) -> bool {
        matches!(self.best_epoch, Some(best) if epoch - best >= self.patience)
    }

    pub fn best(&self) -> (f64, Option<usize>) {
        (self.best, self.best_epoch)
    }
}

/// Flips one image buffer (h x w x c) left-right in place. Involutive.
pub fn flip_horizontal(img: &mut [f32], _h: usize, w: usize, c: usize) {
    for row in img.chunks_exact_mut(w * c) {
        for x in 0..w / 2 {
            for ch in 0..c {
                row.swap(x * c + ch, (w - 1 - x) * c + ch);
            }
        }
    }
}

/// Zero-pads by `CROP_PAD` on each side and crops back to h x w at the given
/// offsets (0..=2*CROP_PAD each).
fn crop_shifted(img: &[f32], h: usize, w: usize, c: usize, dy: usize, dx: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; h * w * c];
    for y in 0..h {
        let src_y = y + dy;
        if src_y < CROP_PAD || src_y >= h + CROP_PAD {
            continue;
        }
        for x in 0..w {
            let src_x = x + dx;
            if src_x < CROP_PAD || src_x >= w + CROP_PAD {
                continue;
            }
            let src = ((src_y - CROP_PAD) * w + (src_x - CROP_PAD)) * c;
            let dst = (y * w + x) * c;
            out[dst..dst + c].copy_from_slice(&img[src..src + c]);
        }
    }
    out
}

/// Mean subtraction always; random crop and horizontal flip only in train
/// mode and only where the flags allow. `rng` must be given in train mode.
pub fn preprocess_batch(
    batch: &Tensor<f32>,
    mean: &Tensor<f32>,
    train_mode: bool,
    crop: bool,
    flip: bool,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<Tensor<f32>> {
    let (n, h, w, c) = (batch.dim(0), batch.dim(1), batch.dim(2), batch.dim(3));
    if mean.shape() != [h, w, c] {
        return Err(Error::Shape(format!(
            "mean image shape {:?} does not match batch images {h}x{w}x{c}",
            mean.shape()
        )));
    }
    let stride = h * w * c;
    let mut out = batch.clone();
    for img in out.data_mut().chunks_exact_mut(stride) {
        for (v, &m) in img.iter_mut().zip(mean.data()) {
            *v -= m;
        }
    }
    if train_mode && (crop || flip) {
        let Some(rng) = rng.as_mut() else {
            return Err(Error::Runtime("train-mode preprocessing needs a random stream".into()));
        };
        for i in 0..n {
            let img = &mut out.data_mut()[i * stride..(i + 1) * stride];
            if crop {
                let dy = rng.gen_range(0..=2 * CROP_PAD);
                let dx = rng.gen_range(0..=2 * CROP_PAD);
                let shifted = crop_shifted(img, h, w, c, dy, dx);
                img.copy_from_slice(&shifted);
            }
            if flip && rng.gen_range(0.0..1.0) < 0.5 {
                flip_horizontal(img, h, w, c);
            }
        }
    }
    Ok(out)
}

/// Where a training run writes its artifacts.
#[derive(Debug, Clone)]
pub struct TrainSink {
    pub metrics_path: PathBuf,
    pub checkpoint_path: PathBuf,
}

/// Validation accuracy of the executor's current parameters.
pub fn evaluate_split(exec: &Executor<f32>, set: &LabeledImageSet, mean: &Tensor<f32>) -> Result<f64> {
    let mut correct_weighted = 0.0f64;
    let indices: Vec<usize> = (0..set.len()).collect();
    for chunk in indices.chunks(EVAL_BATCH) {
        let (batch, labels) = set.gather(chunk);
        let batch = preprocess_batch(&batch, mean, false, false, false, None)?;
        let trace = exec.forward_eval(&batch)?;
        correct_weighted += accuracy(exec.probabilities(&trace), &labels) * labels.len() as f64;
    }
    Ok(correct_weighted / set.len() as f64)
}

/// Trains one compiled architecture on prepared splits.
///
/// The test split is never read. A divergence (non-finite loss or update)
/// ends the run with [`StopReason::Diverged`] instead of an error so a
/// surrounding search can continue. The checkpoint on disk always holds the
/// parameters of the best validation epoch.
pub fn train_model(
    graph: &Arc<ArchGraph>,
    splits: &DataSplits,
    cfg: &TrainConfig,
    sink: Option<&TrainSink>,
) -> Result<TrainResult> {
    cfg.validate()?;
    if splits.val.is_empty() {
        return Err(Error::InvalidConfig("validation split is empty".into()));
    }
    let started = Instant::now();
    let mut exec = Executor::<f32>::new(graph.clone(), cfg.seed);
    let mut stopper = EarlyStopping::new(cfg.early_stop_patience_epochs);
    let mut history: Vec<EpochStats> = Vec::new();

    let mut metrics = match sink {
        Some(sink) => {
            let file = File::create(&sink.metrics_path)
                .map_err(|e| Error::io(format!("creating {}", sink.metrics_path.display()), e))?;
            let mut w = BufWriter::new(file);
            writeln!(w, "epoch,lr,train_loss,train_acc,val_acc")
                .map_err(|e| Error::io("writing metrics header", e))?;
            Some(w)
        }
        None => None,
    };

    let finish = |history: Vec<EpochStats>,
                  stopper: &EarlyStopping,
                  stop: StopReason,
                  checkpoint: Option<PathBuf>| {
        let (best, best_epoch) = stopper.best();
        TrainResult {
            best_val_acc: if best.is_finite() { best } else { 0.0 },
            best_epoch: best_epoch.unwrap_or(0),
            history,
            stop,
            wall_secs: started.elapsed().as_secs_f64(),
            checkpoint,
        }
    };

    let mut checkpoint_path = None;
    for epoch in 0..cfg.max_epochs {
        let lr = lr_at(epoch, cfg);
        let mut epoch_rng = rng_for(cfg.seed, epoch as u64 + 1, Stream::Train);
        let mut order: Vec<usize> = (0..splits.train.len()).collect();
        order.shuffle(&mut epoch_rng);

        let mut loss_sum = 0.0f64;
        let mut acc_sum = 0.0f64;
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue; // batch norm cannot normalize a single example
            }
            let (raw, labels) = splits.train.gather(chunk);
            let batch = preprocess_batch(
                &raw,
                &splits.mean,
                true,
                cfg.augment_crop,
                cfg.augment_flip,
                Some(&mut epoch_rng),
            )?;
            let step = (|| -> Result<(f64, f64)> {
                let trace = exec.forward_train(&batch, &mut epoch_rng, true)?;
                let loss = exec.backward(&trace, &labels)?;
                let acc = accuracy(exec.probabilities(&trace), &labels);
                exec.sgd_step(lr, cfg.momentum, cfg.weight_decay)?;
                Ok((loss, acc))
            })();
            match step {
                Ok((loss, acc)) => {
                    loss_sum += loss * chunk.len() as f64;
                    acc_sum += acc * chunk.len() as f64;
                    seen += chunk.len();
                }
                Err(Error::NonFinite(context)) => {
                    let reason = format!("epoch {epoch}: non-finite values in {context}");
                    return Ok(finish(history, &stopper, StopReason::Diverged { reason }, checkpoint_path));
                }
                Err(other) => return Err(other),
            }
        }

        let val_acc = evaluate_split(&exec, &splits.val, &splits.mean)?;
        let stats = EpochStats {
            epoch,
            lr,
            train_loss: if seen > 0 { loss_sum / seen as f64 } else { f64::NAN },
            train_acc: if seen > 0 { acc_sum / seen as f64 } else { 0.0 },
            val_acc,
        };
        if let Some(w) = metrics.as_mut() {
            writeln!(
                w,
                "{},{},{},{},{}",
                stats.epoch, stats.lr, stats.train_loss, stats.train_acc, stats.val_acc
            )
            .and_then(|_| w.flush())
            .map_err(|e| Error::io("writing metrics line", e))?;
        }
        history.push(stats);

        if stopper.observe(epoch, val_acc) {
            if let Some(sink) = sink {
                checkpoint::save(exec.store(), &graph.description_hash(), &sink.checkpoint_path)?;
                checkpoint_path = Some(sink.checkpoint_path.clone());
            }
        }
        if stopper.should_stop(epoch) {
            return Ok(finish(history, &stopper, StopReason::EarlyStopped, checkpoint_path));
        }
    }
    Ok(finish(history, &stopper, StopReason::MaxEpochs, checkpoint_path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archgraph::{build_architecture, MacroConfig};
    use crate::blockspace::BlockConfig;
    use crate::datasets::{synth_dataset, SynthSpec};
    use rand_chacha::rand_core::SeedableRng;

    fn easy_splits() -> DataSplits {
        let spec = SynthSpec { classes: 2, size: 8, per_class: 40, difficulty: 0.0, seed: 5 };
        let (train, val, test) = synth_dataset(&spec).unwrap();
        let mean = crate::datasets::compute_pixel_mean(&train);
        DataSplits { train, val, test, mean }
    }

    fn tiny_graph(classes: usize) -> Arc<ArchGraph> {
        let block: BlockConfig = "conv(3)|sp_conv(3)+add_det".parse().unwrap();
        let mc = MacroConfig::new(1, 1, 8, (8, 8, 3), classes).unwrap();
        Arc::new(build_architecture(&block, &mc).unwrap())
    }

    #[test]
    fn lr_schedule_matches_step_decay_exactly() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_at(0, &cfg), 0.1);
        assert_eq!(lr_at(24, &cfg), 0.1);
        assert_eq!(lr_at(25, &cfg), 0.05);
        assert_eq!(lr_at(50, &cfg), 0.025);
        assert_eq!(lr_at(99, &cfg), 0.1 * 0.5f64.powi(3));
        // Non-increasing everywhere.
        for e in 1..300 {
            assert!(lr_at(e, &cfg) <= lr_at(e - 1, &cfg));
        }
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        assert!(TrainConfig { batch_size: 1, ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { lr_initial: 0.0, ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { lr_drop_factor: 1.0, ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { lr_drop_factor: 0.0, ..ok.clone() }.validate().is_err());
        assert!(
            TrainConfig { early_stop_patience_epochs: 501, max_epochs: 500, ..ok.clone() }
                .validate()
                .is_err()
        );
    }

    #[test]
    fn train_spec_overrides() {
        let cfg = TrainConfig::default().with_spec("epochs=30,batch=64,lr=0.05,patience=10").unwrap();
        assert_eq!(cfg.max_epochs, 30);
        assert_eq!(cfg.batch_size, 64);
        assert_eq!(cfg.lr_initial, 0.05);
        assert_eq!(cfg.early_stop_patience_epochs, 10);
        assert!(TrainConfig::default().with_spec("nope=1").is_err());
        assert!(TrainConfig::default().with_spec("epochs=0").is_err());
    }

    #[test]
    fn early_stopping_halts_exactly_patience_after_best() {
        let mut stop = EarlyStopping::new(50);
        assert!(stop.observe(0, 0.1));
        assert!(stop.observe(3, 0.8));
        for epoch in 4..53 {
            assert!(!stop.observe(epoch, 0.5));
            assert!(!stop.should_stop(epoch), "epoch {epoch} must not stop yet");
        }
        assert!(!stop.observe(53, 0.5));
        assert!(stop.should_stop(53), "patience 50 with best at 3 stops at epoch 53");
    }

    #[test]
    fn flip_is_an_involution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut img: Vec<f32> = (0..5 * 7 * 3).map(|_| rng.gen_range(0.0..1.0)).collect();
        let original = img.clone();
        flip_horizontal(&mut img, 5, 7, 3);
        assert_ne!(img, original);
        flip_horizontal(&mut img, 5, 7, 3);
        assert_eq!(img, original);
    }

    #[test]
    fn preprocessed_training_mean_is_zero() {
        let splits = easy_splits();
        let all: Vec<usize> = (0..splits.train.len()).collect();
        let (batch, _) = splits.train.gather(&all);
        let processed = preprocess_batch(&batch, &splits.mean, false, false, false, None).unwrap();
        let stride = splits.mean.scalar_count();
        let mut acc = vec![0.0f64; stride];
        for img in processed.data().chunks_exact(stride) {
            for (a, &v) in acc.iter_mut().zip(img) {
                *a += v as f64;
            }
        }
        let n = splits.train.len() as f64;
        for (i, a) in acc.iter().enumerate() {
            assert!((a / n).abs() < 1e-6, "pixel {i} residual mean {}", a / n);
        }
    }

    #[test]
    fn eval_mode_preprocessing_only_subtracts_the_mean() {
        let splits = easy_splits();
        let (batch, _) = splits.train.gather(&[0, 1]);
        let a = preprocess_batch(&batch, &splits.mean, false, true, true, None).unwrap();
        let b = preprocess_batch(&batch, &splits.mean, false, false, false, None).unwrap();
        assert_eq!(a.data(), b.data(), "flags are inert outside train mode");
    }

    #[test]
    fn profile_restrictions_disable_flip_for_digits() {
        let profile = crate::datasets::DatasetProfile::svhn("/tmp/svhn".into());
        let cfg = TrainConfig::default().for_profile(&profile);
        assert!(!cfg.augment_flip);
        assert!(cfg.augment_crop);
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let splits = easy_splits();
        let graph = tiny_graph(2);
        let cfg = TrainConfig {
            max_epochs: 3,
            early_stop_patience_epochs: 3,
            batch_size: 16,
            lr_initial: 0.02,
            seed: 9,
            ..TrainConfig::default()
        };
        let a = train_model(&graph, &splits, &cfg, None).unwrap();
        let b = train_model(&graph, &splits, &cfg, None).unwrap();
        assert_eq!(a.history, b.history, "identical seeds must give identical histories");
    }

    #[test]
    fn training_learns_the_easy_task_quickly() {
        let splits = easy_splits();
        let graph = tiny_graph(2);
        let cfg = TrainConfig {
            max_epochs: 50,
            early_stop_patience_epochs: 50,
            batch_size: 16,
            lr_initial: 0.05,
            seed: 4,
            ..TrainConfig::default()
        };
        let result = train_model(&graph, &splits, &cfg, None).unwrap();
        let perfect_train = result.history.iter().find(|e| e.train_acc == 1.0);
        assert!(
            perfect_train.is_some_and(|e| e.epoch < 50),
            "expected 100% train accuracy before epoch 50: {:?}",
            result.history.last()
        );
        assert!(result.best_val_acc >= 0.95, "best val {}", result.best_val_acc);
        // Invariant: the recorded best is the max of the history.
        let max_val = result.history.iter().map(|e| e.val_acc).fold(0.0, f64::max);
        assert_eq!(result.best_val_acc, max_val);
        assert_eq!(splits.test.read_count(), 0, "training must never read the test split");
    }

    #[test]
    fn saturated_accuracy_stops_exactly_after_patience() {
        let splits = easy_splits();
        let graph = tiny_graph(2);
        let cfg = TrainConfig {
            max_epochs: 100,
            early_stop_patience_epochs: 5,
            batch_size: 16,
            lr_initial: 0.05,
            seed: 4,
            ..TrainConfig::default()
        };
        let result = train_model(&graph, &splits, &cfg, None).unwrap();
        assert_eq!(result.stop, StopReason::EarlyStopped);
        let last_epoch = result.history.last().unwrap().epoch;
        assert_eq!(
            last_epoch,
            result.best_epoch + cfg.early_stop_patience_epochs,
            "stop must land exactly patience epochs after the best epoch"
        );
    }

    #[test]
    fn divergent_learning_rate_marks_the_run_failed() {
        let splits = easy_splits();
        let graph = tiny_graph(2);
        let cfg = TrainConfig {
            max_epochs: 5,
            early_stop_patience_epochs: 5,
            batch_size: 16,
            lr_initial: 1e25,
            seed: 4,
            ..TrainConfig::default()
        };
        let result = train_model(&graph, &splits, &cfg, None).unwrap();
        match result.stop {
            StopReason::Diverged { reason } => {
                assert!(reason.contains("non-finite"), "{reason}");
            }
            other => panic!("expected divergence, got {other:?}"),
        }
        assert_eq!(result.best_val_acc, 0.0);
    }

    #[test]
    fn sink_writes_metrics_and_best_checkpoint() {
        let splits = easy_splits();
        let graph = tiny_graph(2);
        let dir = tempfile::tempdir().unwrap();
        let sink = TrainSink {
            metrics_path: dir.path().join("metrics.csv"),
            checkpoint_path: dir.path().join("model.ckpt"),
        };
        let cfg = TrainConfig {
            max_epochs: 3,
            early_stop_patience_epochs: 3,
            batch_size: 16,
            lr_initial: 0.05,
            seed: 8,
            ..TrainConfig::default()
        };
        let result = train_model(&graph, &splits, &cfg, Some(&sink)).unwrap();
        let metrics = std::fs::read_to_string(&sink.metrics_path).unwrap();
        let mut lines = metrics.lines();
        assert_eq!(lines.next(), Some("epoch,lr,train_loss,train_acc,val_acc"));
        assert_eq!(lines.count(), result.history.len());
        assert_eq!(result.checkpoint.as_deref(), Some(sink.checkpoint_path.as_path()));

        // The checkpoint restores the best-epoch parameters.
        let mut restored = Executor::<f32>::new(graph.clone(), 12345);
        checkpoint::load(&mut restored, &sink.checkpoint_path).unwrap();
        let acc = evaluate_split(&restored, &splits.val, &splits.mean).unwrap();
        assert!((acc - result.best_val_acc).abs() < 1e-9, "restored {acc} vs best {}", result.best_val_acc);
    }
}
