//! The end-to-end random search: sample, build, train, record.
//!
//! Block configs for all trials are derived upfront from (master seed, trial
//! index), so the sampled sequence is independent of execution order and
//! parallelism. Completed trials append to a line-delimited log keyed by
//! trial index; a resumed search verifies the manifest hash, keeps finished
//! records untouched, and runs only what is missing.

use crate::archgraph::build_architecture;
use crate::blockspace::{BlockConfig, SearchSpace};
use crate::datasets::DataSplits;
use crate::error::{Error, Result};
use crate::manifest::RunManifest;
use crate::rng::{derive_seed, rng_for, Stream};
use crate::trainer::{train_model, StopReason, TrainSink};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::fs::OpenOptions;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

/// How many times a duplicate config is redrawn before being accepted as-is.
const DUPLICATE_RESAMPLE_LIMIT: usize = 100;

/// Parameters of one search run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub trials: usize,
    pub top_k: usize,
    pub space: SearchSpace,
    #[serde(rename = "macro")]
    pub macro_config: crate::archgraph::MacroConfig,
    pub train: crate::trainer::TrainConfig,
    pub master_seed: u64,
    pub parallelism: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            trials: 50,
            top_k: 10,
            space: SearchSpace::default(),
            macro_config: crate::archgraph::MacroConfig::default(),
            train: crate::trainer::TrainConfig::default(),
            master_seed: 0,
            parallelism: 1,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trial count must be at least 1".into()));
        }
        if self.top_k == 0 {
            return Err(Error::InvalidConfig("top_k must be at least 1".into()));
        }
        if self.parallelism == 0 {
            return Err(Error::InvalidConfig("parallelism must be at least 1".into()));
        }
        self.train.validate()
    }
}

/// Outcome status of a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Ok,
    Failed,
}

/// One completed trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub config: BlockConfig,
    pub canonical: BlockConfig,
    pub seed: u64,
    pub param_count: u64,
    pub mac_count: u64,
    pub status: TrialStatus,
    pub best_val_acc: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub stop: String,
    pub wall_secs: f64,
    /// Checkpoint path relative to the run directory, when one was written.
    pub checkpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum LogLine {
    Header { version: u32, config_hash: String },
    Trial(TrialRecord),
}

/// Samples the config for every trial index. Duplicates (by canonical form)
/// are redrawn from the trial's own stream up to a fixed limit, then kept.
/// Pure function of (space, master seed, trial count).
pub fn sample_trial_configs(space: &SearchSpace, master_seed: u64, trials: usize) -> Vec<BlockConfig> {
    let mut seen: HashSet<String> = HashSet::new();
    let mut configs = Vec::with_capacity(trials);
    for index in 0..trials {
        let mut rng = rng_for(master_seed, index as u64, Stream::Sample);
        let mut config = space.sample(&mut rng);
        let mut attempts = 0;
        while seen.contains(&config.canonicalize().to_string()) && attempts < DUPLICATE_RESAMPLE_LIMIT {
            config = space.sample(&mut rng);
            attempts += 1;
        }
        seen.insert(config.canonicalize().to_string());
        configs.push(config);
    }
    configs
}

/// Derived training seed of one trial.
pub fn trial_seed(master_seed: u64, index: usize) -> u64 {
    derive_seed(master_seed, index as u64, Stream::Train)
}

/// Running maximum of validation accuracy by trial index.
pub fn best_score_curve(records: &[TrialRecord]) -> Vec<(usize, f64)> {
    let mut best = f64::NEG_INFINITY;
    records
        .iter()
        .map(|r| {
            best = best.max(r.best_val_acc);
            (r.index, best)
        })
        .collect()
}

/// Writes the best-score curve as two-column CSV.
pub fn write_curve_csv(path: &Path, curve: &[(usize, f64)]) -> Result<()> {
    let mut out = String::from("trial_index,best_val_acc\n");
    for (index, acc) in curve {
        out.push_str(&format!("{index},{acc}\n"));
    }
    std::fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// The k best successful trials by validation accuracy, ties broken by the
/// lower trial index. Returns whether k exceeded the available records.
pub fn select_top_k(records: &[TrialRecord], k: usize) -> Result<(Vec<&TrialRecord>, bool)> {
    if k == 0 {
        return Err(Error::InvalidConfig("top-k must be at least 1".into()));
    }
    let mut ok: Vec<&TrialRecord> = records.iter().filter(|r| r.status == TrialStatus::Ok).collect();
    if ok.is_empty() {
        return Err(Error::Runtime("no successful trials to select from".into()));
    }
    ok.sort_by(|a, b| {
        b.best_val_acc
            .total_cmp(&a.best_val_acc)
            .then_with(|| a.index.cmp(&b.index))
    });
    let clamped = k > ok.len();
    ok.truncate(k);
    Ok((ok, clamped))
}

/// Parses a trial log, verifying the header hash. A malformed final line is
/// treated as a torn write from a crash and ignored; malformed earlier lines
/// mean real corruption.
pub fn read_trial_log(path: &Path, expected_hash: &str) -> Result<BTreeMap<usize, TrialRecord>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading trial log {}", path.display()), e))?;
    let lines: Vec<&str> = text.lines().collect();
    let mut records = BTreeMap::new();
    if lines.is_empty() {
        return Err(Error::State(format!("trial log {} is empty", path.display())));
    }
    for (i, line) in lines.iter().enumerate() {
        let parsed: std::result::Result<LogLine, _> = serde_json::from_str(line);
        match parsed {
            Ok(LogLine::Header { version, config_hash }) => {
                if i != 0 {
                    return Err(Error::State(format!(
                        "trial log {}: unexpected header on line {}",
                        path.display(),
                        i + 1
                    )));
                }
                if version != crate::manifest::MANIFEST_VERSION {
                    return Err(Error::State(format!(
                        "trial log {}: unsupported version {version}",
                        path.display()
                    )));
                }
                if config_hash != expected_hash {
                    return Err(Error::State(format!(
                        "trial log {} belongs to a different search configuration \
                         (hash {} vs {}); refusing to resume",
                        path.display(),
                        &config_hash[..config_hash.len().min(12)],
                        &expected_hash[..12]
                    )));
                }
            }
            Ok(LogLine::Trial(record)) => {
                if i == 0 {
                    return Err(Error::State(format!(
                        "trial log {} is missing its header line",
                        path.display()
                    )));
                }
                records.insert(record.index, record);
            }
            Err(e) => {
                if i + 1 == lines.len() {
                    // Torn final line from an interrupted append; redo that trial.
                    continue;
                }
                return Err(Error::State(format!(
                    "trial log {} is corrupt on line {}: {e}",
                    path.display(),
                    i + 1
                )));
            }
        }
    }
    Ok(records)
}

fn run_one_trial(
    manifest: &RunManifest,
    splits: &DataSplits,
    index: usize,
    config: &BlockConfig,
) -> TrialRecord {
    let seed = trial_seed(manifest.search.master_seed, index);
    let canonical = config.canonicalize();
    let mut record = TrialRecord {
        index,
        config: config.clone(),
        canonical,
        seed,
        param_count: 0,
        mac_count: 0,
        status: TrialStatus::Failed,
        best_val_acc: 0.0,
        best_epoch: 0,
        epochs_run: 0,
        stop: String::new(),
        wall_secs: 0.0,
        checkpoint: None,
        failure: None,
    };

    let attempt = (|| -> Result<()> {
        let graph = std::sync::Arc::new(build_architecture(config, &manifest.search.macro_config)?);
        record.param_count = graph.count_params();
        record.mac_count = graph.count_macs();

        let trial_dir = manifest.trial_dir(index);
        std::fs::create_dir_all(&trial_dir)
            .map_err(|e| Error::io(format!("creating {}", trial_dir.display()), e))?;
        let sink = TrainSink {
            metrics_path: trial_dir.join("metrics.csv"),
            checkpoint_path: trial_dir.join("checkpoint.ckpt"),
        };

        let mut train_cfg = manifest.search.train.for_profile(&manifest.dataset);
        train_cfg.seed = seed;
        let result = train_model(&graph, splits, &train_cfg, Some(&sink))?;

        record.best_epoch = result.best_epoch;
        record.epochs_run = result.epochs_run();
        record.wall_secs = result.wall_secs;
        record.checkpoint = result.checkpoint.as_ref().map(|p| {
            p.strip_prefix(&manifest.out_dir)
                .unwrap_or(p)
                .to_string_lossy()
                .into_owned()
        });
        match result.stop {
            StopReason::Diverged { reason } => {
                record.status = TrialStatus::Failed;
                record.best_val_acc = 0.0;
                record.stop = "diverged".into();
                record.failure = Some(reason);
            }
            stop => {
                record.status = TrialStatus::Ok;
                record.best_val_acc = result.best_val_acc;
                record.stop = match stop {
                    StopReason::EarlyStopped => "early_stopped".into(),
                    StopReason::MaxEpochs => "max_epochs".into(),
                    StopReason::Diverged { .. } => unreachable!(),
                };
            }
        }
        Ok(())
    })();

    if let Err(e) = attempt {
        record.status = TrialStatus::Failed;
        record.best_val_acc = 0.0;
        record.stop = "error".into();
        record.failure = Some(e.to_string());
    }
    record
}

/// Runs (or resumes) the search described by a manifest. Returns all trial
/// records ordered by index and writes the best-score curve CSV.
///
/// `jobs` overrides the manifest's parallelism when given. With any
/// parallelism, the sampled configs and per-trial results are identical:
/// every trial depends only on (master seed, trial index).
pub fn run_search(manifest: &RunManifest, resume: bool, jobs: Option<usize>) -> Result<Vec<TrialRecord>> {
    manifest.validate()?;
    std::fs::create_dir_all(&manifest.out_dir)
        .map_err(|e| Error::io(format!("creating {}", manifest.out_dir.display()), e))?;
    let hash = manifest.config_hash();
    let log_path = manifest.trials_log_path();

    let mut records: BTreeMap<usize, TrialRecord> = BTreeMap::new();
    if log_path.exists() {
        if !resume {
            return Err(Error::State(format!(
                "{} already exists; resume the run instead of restarting it",
                log_path.display()
            )));
        }
        records = read_trial_log(&log_path, &hash)?;
    }

    let manifest_path = manifest.manifest_path();
    if !manifest_path.exists() {
        manifest.save(&manifest_path)?;
    }

    let configs = sample_trial_configs(&manifest.search.space, manifest.search.master_seed, manifest.search.trials);
    for record in records.values() {
        match configs.get(record.index) {
            Some(expected) if *expected == record.config => {}
            _ => {
                return Err(Error::State(format!(
                    "trial {} in the log does not match the config this manifest would sample; \
                     the log belongs to a different run",
                    record.index
                )))
            }
        }
    }

    let pending: Vec<usize> = (0..manifest.search.trials).filter(|i| !records.contains_key(i)).collect();

    if !pending.is_empty() {
        let splits = manifest.dataset.prepare()?;
        let log_file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(|e| Error::io(format!("opening {}", log_path.display()), e))?;
        let mut writer = BufWriter::new(log_file);
        if records.is_empty() {
            let header = LogLine::Header { version: crate::manifest::MANIFEST_VERSION, config_hash: hash };
            serde_json::to_writer(&mut writer, &header)
                .map_err(|e| Error::Runtime(format!("serializing log header: {e}")))?;
            writer
                .write_all(b"\n")
                .and_then(|_| writer.flush())
                .map_err(|e| Error::io("writing log header", e))?;
        }
        let log = Mutex::new(writer);

        let parallelism = jobs.unwrap_or(manifest.search.parallelism).max(1);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .build()
            .map_err(|e| Error::Runtime(format!("building thread pool: {e}")))?;

        let new_records: Vec<Result<TrialRecord>> = pool.install(|| {
            pending
                .par_iter()
                .map(|&index| {
                    let record = run_one_trial(manifest, &splits, index, &configs[index]);
                    let mut writer = log.lock().expect("log writer lock");
                    serde_json::to_writer(&mut *writer, &LogLine::Trial(record.clone()))
                        .map_err(|e| Error::Runtime(format!("serializing trial record: {e}")))?;
                    writer
                        .write_all(b"\n")
                        .and_then(|_| writer.flush())
                        .map_err(|e| Error::io("appending trial record", e))?;
                    Ok(record)
                })
                .collect()
        });
        for record in new_records {
            let record = record?;
            records.insert(record.index, record);
        }
    }

    let ordered: Vec<TrialRecord> = records.into_values().collect();
    write_curve_csv(&manifest.curve_path(), &best_score_curve(&ordered))?;
    Ok(ordered)
}
