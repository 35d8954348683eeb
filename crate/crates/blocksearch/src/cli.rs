//! The `blocksearch` command-line interface.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/configuration error,
//! 3 runtime failure. The `BLOCKSEARCH_OUT_ROOT` environment variable
//! provides the default output root when `--out` is omitted.

use crate::archgraph::{build_architecture, MacroConfig};
use crate::blockspace::{BlockConfig, SearchSpace};
use crate::datasets::DatasetProfile;
use crate::engine::{checkpoint, Executor};
use crate::ensemble::{component_histogram, evaluate_ensemble, evaluate_model, EnsembleSpec};
use crate::error::{Error, Result};
use crate::manifest::RunManifest;
use crate::search::{read_trial_log, run_search, sample_trial_configs, TrialRecord};
use crate::trainer::{train_model, TrainConfig, TrainSink};
use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::sync::Arc;

const OUT_ROOT_ENV: &str = "BLOCKSEARCH_OUT_ROOT";

#[derive(Parser)]
#[command(
    name = "blocksearch",
    about = "Random search over residual CNN building blocks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print sampled block configs, one per line.
    Sample {
        /// Space spec, e.g. "b=4,ops=*,combiners=*" (empty = full space).
        #[arg(long, default_value = "")]
        space: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// How many configs to sample.
        #[arg(short = 'n', long = "count", default_value_t = 1)]
        count: usize,
    },
    /// Compile a block config and print the graph with parameter and MAC totals.
    Describe {
        /// Block config, e.g. "conv(5)|sp_conv(1)|sp_conv(3)|rc_conv(3)+add_det".
        #[arg(long)]
        config: String,
        /// Macro spec, e.g. "stages=3,n=4,filters=96,input=32x32x3,classes=10".
        #[arg(long = "macro", default_value = "")]
        macro_spec: String,
    },
    /// Train one block config on a dataset and report test metrics.
    Train {
        #[arg(long)]
        config: String,
        /// Dataset spec, e.g. "synthetic:classes=4,size=16,per_class=100".
        #[arg(long)]
        dataset: String,
        /// Output directory (defaults to $BLOCKSEARCH_OUT_ROOT/train).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Macro overrides; input shape and classes adapt to the dataset.
        #[arg(long = "macro", default_value = "")]
        macro_spec: String,
        /// Training overrides, e.g. "epochs=30,batch=64,lr=0.05".
        #[arg(long = "train", default_value = "")]
        train_spec: String,
    },
    /// Run (or resume) the random search described by a manifest.
    Search {
        #[arg(long)]
        manifest: PathBuf,
        /// Continue from an existing trial log.
        #[arg(long)]
        resume: bool,
        /// Concurrent trials (overrides the manifest's parallelism).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Build the top-k ensemble of a finished run and report test metrics.
    Ensemble {
        #[arg(long = "run-dir")]
        run_dir: PathBuf,
        #[arg(long = "top-k", default_value_t = 10)]
        top_k: usize,
    },
    /// Export the block-component histogram of a finished run.
    Analyze {
        #[arg(long = "run-dir")]
        run_dir: PathBuf,
    },
}

fn default_out(subdir: &str) -> Result<PathBuf> {
    match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) => Ok(PathBuf::from(root).join(subdir)),
        None => Err(Error::InvalidConfig(format!(
            "no --out given and {OUT_ROOT_ENV} is not set"
        ))),
    }
}

fn load_run(run_dir: &Path) -> Result<(RunManifest, Vec<TrialRecord>)> {
    let mut manifest = RunManifest::load(&run_dir.join("manifest"))?;
    // The run directory may have been moved since the search ran.
    manifest.out_dir = run_dir.to_path_buf();
    let records = read_trial_log(&manifest.trials_log_path(), &manifest.config_hash())?;
    Ok((manifest, records.into_values().collect()))
}

fn cmd_sample(space: &str, seed: u64, count: usize) -> Result<()> {
    let space = SearchSpace::parse_spec(space)?;
    for config in sample_trial_configs(&space, seed, count) {
        println!("{config}");
    }
    Ok(())
}

fn cmd_describe(config: &str, macro_spec: &str) -> Result<()> {
    let block: BlockConfig = config.parse()?;
    let macro_cfg = MacroConfig::parse_spec(macro_spec)?;
    let graph = build_architecture(&block, &macro_cfg)?;
    print!("{}", graph.describe());
    Ok(())
}

fn cmd_train(
    config: &str,
    dataset: &str,
    out: Option<PathBuf>,
    macro_spec: &str,
    train_spec: &str,
) -> Result<()> {
    let block: BlockConfig = config.parse()?;
    let profile = DatasetProfile::parse_spec(dataset)?;
    let macro_cfg = MacroConfig::parse_spec(macro_spec)?
        .with_input(profile.input_shape(), profile.num_classes())?;
    let train_cfg = TrainConfig::default()
        .with_spec(train_spec)?
        .for_profile(&profile);

    let out_dir = match out {
        Some(dir) => dir,
        None => default_out("train")?,
    };
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| Error::io(format!("creating {}", out_dir.display()), e))?;

    let graph = Arc::new(build_architecture(&block, &macro_cfg)?);
    println!("block {block}");
    println!("params {}", graph.count_params());
    println!("macs {}", graph.count_macs());

    let splits = profile.prepare()?;
    let sink = TrainSink {
        metrics_path: out_dir.join("metrics.csv"),
        checkpoint_path: out_dir.join("checkpoint.ckpt"),
    };
    let result = train_model(&graph, &splits, &train_cfg, Some(&sink))?;
    println!(
        "trained epochs {} stop {:?} best_val_acc {:.4} best_epoch {} wall_secs {:.1}",
        result.epochs_run(),
        result.stop,
        result.best_val_acc,
        result.best_epoch,
        result.wall_secs
    );

    match result.checkpoint {
        Some(ckpt) => {
            let mut best = Executor::<f32>::new(graph.clone(), 0);
            checkpoint::load(&mut best, &ckpt)?;
            let metrics = evaluate_model(&best, &splits.test, &splits.mean)?;
            println!(
                "test_acc {:.4} test_error_pct {:.2}",
                metrics.accuracy, metrics.error_rate_pct
            );
            println!("checkpoint {}", ckpt.display());
            Ok(())
        }
        None => Err(Error::Runtime(
            "training produced no checkpoint (all epochs diverged)".into(),
        )),
    }
}

fn cmd_search(manifest_path: &Path, resume: bool, jobs: Option<usize>) -> Result<()> {
    let manifest = RunManifest::load(manifest_path)?;
    let records = run_search(&manifest, resume, jobs)?;
    let ok = records.iter().filter(|r| r.status == crate::search::TrialStatus::Ok).count();
    let best = records
        .iter()
        .map(|r| r.best_val_acc)
        .fold(f64::NEG_INFINITY, f64::max);
    println!(
        "search complete: {} trials ({} ok), best val acc {:.4}",
        records.len(),
        ok,
        best
    );
    println!("trial log {}", manifest.trials_log_path().display());
    println!("curve {}", manifest.curve_path().display());
    Ok(())
}

fn cmd_ensemble(run_dir: &Path, top_k: usize) -> Result<()> {
    let (manifest, records) = load_run(run_dir)?;
    let (spec, clamped) = EnsembleSpec::from_records(&manifest, &records, top_k)?;
    if clamped {
        eprintln!(
            "warning: only {} successful trials available for top-{top_k}",
            spec.members.len()
        );
    }
    let spec_path = run_dir.join("ensemble.json");
    spec.save(&spec_path)?;

    let members = spec.load_members(&manifest)?;
    let splits = manifest.dataset.prepare()?;
    let single = evaluate_model(&members[0], &splits.test, &splits.mean)?;
    let ensemble = evaluate_ensemble(&members, &splits.test, &splits.mean)?;
    println!("members {}", members.len());
    println!(
        "single  test_acc {:.4} test_error_pct {:.2}",
        single.accuracy, single.error_rate_pct
    );
    println!(
        "ensemble test_acc {:.4} test_error_pct {:.2}",
        ensemble.accuracy, ensemble.error_rate_pct
    );
    println!("spec {}", spec_path.display());
    Ok(())
}

fn cmd_analyze(run_dir: &Path) -> Result<()> {
    let (manifest, records) = load_run(run_dir)?;
    let all: Vec<BlockConfig> = records.iter().map(|r| r.config.clone()).collect();
    let (top, _) = crate::search::select_top_k(&records, manifest.search.top_k)?;
    let top_configs: Vec<BlockConfig> = top.iter().map(|r| r.config.clone()).collect();
    let histogram = component_histogram(&all, &top_configs)?;
    let csv_path = run_dir.join("components.csv");
    histogram.write_csv(&csv_path)?;
    print!("{}", histogram.to_csv());
    eprintln!("written to {}", csv_path.display());
    Ok(())
}

/// Parses argv and runs one command; returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::Sample { space, seed, count } => cmd_sample(space, *seed, *count),
        Command::Describe { config, macro_spec } => cmd_describe(config, macro_spec),
        Command::Train { config, dataset, out, macro_spec, train_spec } => {
            cmd_train(config, dataset, out.clone(), macro_spec, train_spec)
        }
        Command::Search { manifest, resume, jobs } => cmd_search(manifest, *resume, *jobs),
        Command::Ensemble { run_dir, top_k } => cmd_ensemble(run_dir, *top_k),
        Command::Analyze { run_dir } => cmd_analyze(run_dir),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
