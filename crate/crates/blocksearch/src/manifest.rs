//! The run manifest: everything a search run needs, in one JSON file.
//!
//! A run directory is laid out as
//!
//! ```text
//! <out>/manifest            copy of the manifest that started the run
//! <out>/trials.log          one JSON record per line, crash-safe append
//! <out>/curve.csv           trial_index,best_val_acc
//! <out>/trials/trial_NNN/   metrics.csv and checkpoint.ckpt per trial
//! ```

use crate::datasets::DatasetProfile;
use crate::error::{Error, Result};
use crate::search::SearchConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const MANIFEST_VERSION: u32 = 1;

/// Search configuration plus dataset identity and output location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub search: SearchConfig,
    pub dataset: DatasetProfile,
    pub out_dir: PathBuf,
}

impl RunManifest {
    pub fn new(search: SearchConfig, dataset: DatasetProfile, out_dir: PathBuf) -> Self {
        RunManifest { version: MANIFEST_VERSION, search, dataset, out_dir }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::InvalidConfig(format!(
                "manifest version {} is not supported (expected {MANIFEST_VERSION})",
                self.version
            )));
        }
        self.search.validate()?;
        let macro_input = self.search.macro_config.input_shape();
        let data_input = self.dataset.input_shape();
        if macro_input != data_input {
            return Err(Error::InvalidConfig(format!(
                "macro config expects input {}x{}x{} but the dataset provides {}x{}x{}",
                macro_input.0, macro_input.1, macro_input.2, data_input.0, data_input.1, data_input.2
            )));
        }
        if self.search.macro_config.num_classes() != self.dataset.num_classes() {
            return Err(Error::InvalidConfig(format!(
                "macro config has {} classes but the dataset has {}",
                self.search.macro_config.num_classes(),
                self.dataset.num_classes()
            )));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading manifest {}", path.display()), e))?;
        let manifest: RunManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("manifest {}: {e}", path.display())))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Runtime(format!("serializing manifest: {e}")))?;
        std::fs::write(path, text)
            .map_err(|e| Error::io(format!("writing manifest {}", path.display()), e))
    }

    /// Hash of the run-defining content (search config and dataset identity;
    /// the output directory may move without breaking resume).
    pub fn config_hash(&self) -> String {
        #[derive(Serialize)]
        struct Identity<'a> {
            version: u32,
            search: &'a SearchConfig,
            dataset: &'a DatasetProfile,
        }
        let json = serde_json::to_string(&Identity {
            version: self.version,
            search: &self.search,
            dataset: &self.dataset,
        })
        .expect("manifest identity serializes");
        let digest = Sha256::digest(json.as_bytes());
        let mut hex = String::with_capacity(64);
        for byte in digest {
            let _ = write!(hex, "{byte:02x}");
        }
        hex
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.out_dir.join("manifest")
    }

    pub fn trials_log_path(&self) -> PathBuf {
        self.out_dir.join("trials.log")
    }

    pub fn curve_path(&self) -> PathBuf {
        self.out_dir.join("curve.csv")
    }

    pub fn trial_dir(&self, index: usize) -> PathBuf {
        self.out_dir.join("trials").join(format!("trial_{index:03}"))
    }
}
