//! Experiment configuration files.

use std::path::{Path, PathBuf};

use pepi_core::federation::{Method, TrainHyper};
use pepi_core::pepi::ArchSpec;
use pepi_core::topology::TopologySchedule;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Mnist,
    Synth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Full,
    Desk,
}

/// Training examples per client under the desk preset.
pub const DESK_TRAIN_PER_CLIENT: usize = 1600;
/// Test examples per client under the desk preset.
pub const DESK_TEST_PER_CLIENT: usize = 400;
/// Training epochs under the desk preset.
pub const DESK_EPOCHS: u32 = 10;
/// Mini-batch size under the desk preset; keeps the number of SGD steps per
/// epoch close to the full setting despite the smaller client data sets.
pub const DESK_TRAIN_BATCH: usize = 50;

/// One experiment. Every field has a default, unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: Method,
    pub dataset: DatasetKind,
    /// Directory with the four IDX files (MNIST only).
    pub data_dir: PathBuf,
    /// Topology schedule; relative paths resolve against the config file.
    pub schedule: PathBuf,
    /// `None` uses every sample of the client's partition.
    pub train_per_client: Option<usize>,
    pub test_per_client: Option<usize>,
    /// Synthetic data only: samples generated before partitioning.
    pub synth_train: usize,
    pub synth_test: usize,
    pub snr_db: f64,
    pub lr: f64,
    pub lr_decay: f64,
    pub train_batch: usize,
    pub test_batch: usize,
    /// Total training epochs across all training slots.
    pub epochs: u32,
    pub test_every: u32,
    /// Optional bound on the global L2 norm of each mini-batch gradient.
    pub clip_norm: Option<f64>,
    pub seed: u64,
    pub out: PathBuf,
    /// Defaults to the MNIST architecture, or a small one for synthetic data.
    pub arch: Option<ArchSpec>,
    pub parallel: bool,
    /// Overrides applied by `--preset desk`.
    pub desk: DeskOverrides,
}

/// Settings the desk preset substitutes for the full ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeskOverrides {
    pub train_per_client: usize,
    pub test_per_client: usize,
    pub epochs: u32,
    pub train_batch: Option<usize>,
}

impl Default for DeskOverrides {
    fn default() -> Self {
        Self {
            train_per_client: DESK_TRAIN_PER_CLIENT,
            test_per_client: DESK_TEST_PER_CLIENT,
            epochs: DESK_EPOCHS,
            train_batch: Some(DESK_TRAIN_BATCH),
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let hyper = TrainHyper::default();
        Self {
            method: Method::Proposed,
            dataset: DatasetKind::Mnist,
            data_dir: PathBuf::from("data/mnist-subset"),
            schedule: PathBuf::from("ts1.json"),
            train_per_client: None,
            test_per_client: None,
            synth_train: 1000,
            synth_test: 250,
            snr_db: -10.0,
            lr: hyper.lr,
            lr_decay: hyper.lr_decay,
            train_batch: hyper.train_batch,
            test_batch: hyper.test_batch,
            epochs: 20,
            test_every: hyper.test_every,
            clip_norm: hyper.clip_norm,
            seed: 1,
            out: PathBuf::from("runs/default"),
            arch: None,
            parallel: false,
            desk: DeskOverrides::default(),
        }
    }
}

/// A config file together with the bytes it was parsed from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub raw: Vec<u8>,
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<LoadedConfig> {
        let raw = std::fs::read(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let text = std::str::from_utf8(&raw).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let config = Self::from_json(text)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedConfig { config, raw, base_dir })
    }

    pub fn apply_preset(&mut self, preset: Preset) {
        if preset == Preset::Desk {
            self.train_per_client = Some(self.desk.train_per_client);
            self.test_per_client = Some(self.desk.test_per_client);
            self.epochs = self.desk.epochs;
            if let Some(b) = self.desk.train_batch {
                self.train_batch = b;
            }
        }
    }

    pub fn hyper(&self) -> TrainHyper {
        TrainHyper {
            lr: self.lr,
            lr_decay: self.lr_decay,
            train_batch: self.train_batch,
            test_batch: self.test_batch,
            local_epochs_per_round: 1,
            test_every: self.test_every,
            clip_norm: self.clip_norm,
        }
    }

    pub fn arch(&self) -> ArchSpec {
        self.arch.clone().unwrap_or_else(|| match self.dataset {
            DatasetKind::Mnist => ArchSpec::mnist(),
            DatasetKind::Synth => synth_arch(),
        })
    }

    /// Checks that do not need the schedule or the data.
    pub fn validate(&self) -> Result<()> {
        self.hyper().validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.arch().validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.epochs == 0 {
            return Err(CliError::Config("epochs must be >= 1".into()));
        }
        if !self.snr_db.is_finite() {
            return Err(CliError::Config("snr_db must be finite".into()));
        }
        if self.dataset == DatasetKind::Synth && (self.synth_train == 0 || self.synth_test == 0) {
            return Err(CliError::Config("synth_train and synth_test must be >= 1".into()));
        }
        Ok(())
    }

    /// Loads the schedule and stretches its training slots to `epochs` rounds.
    pub fn load_schedule(&self, base_dir: &Path) -> Result<TopologySchedule> {
        let path = resolve(base_dir, &self.schedule);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Config(format!("cannot read schedule {}: {e}", path.display())))?;
        let schedule = TopologySchedule::from_json(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        schedule.with_training_rounds(self.epochs).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Method-specific constraints against the schedule.
    pub fn check_method(&self, method: Method, schedule: &TopologySchedule) -> Result<()> {
        if method == Method::Baseline1 && schedule.client_count() != 1 {
            return Err(CliError::Config(format!(
                "baseline1 trains one client without neighbours; the schedule has {} clients",
                schedule.client_count()
            )));
        }
        Ok(())
    }
}

/// 16x16 single-channel input: 16 -> 12 -> 6 -> 2 -> 1 with 8 channels.
pub fn synth_arch() -> ArchSpec {
    ArchSpec { in_channels: 1, side: 16, conv_channels: vec![4, 8], hidden: vec![16], classes: 4 }
}

pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
