//! Builds the per-client multi-view data shared by every method of a run.

use std::path::Path;
use std::sync::Arc;

use pepi_core::data::{load_idx, partition_disjoint, synth_blobs, Dataset, MultiViewDataset, NoiseSpec};
use pepi_core::federation::ClientData;
use pepi_core::seed::{derive_seed, rng_for};
use pepi_core::topology::TopologySchedule;

use crate::config::{resolve, DatasetKind, ExperimentConfig};
use crate::error::{CliError, Result};

const STREAM_SYNTH: u64 = 0x5e;
const STREAM_PARTITION: u64 = 0x9a;
const STREAM_NOISE: u64 = 0x4e;

/// Separation of the synthetic class means, in units of the blob noise.
const SYNTH_SEPARATION: f64 = 4.0;

/// `(train, test)` pools before partitioning.
pub fn load_source(cfg: &ExperimentConfig, base_dir: &Path) -> Result<(Dataset, Dataset)> {
    match cfg.dataset {
        DatasetKind::Mnist => {
            let dir = resolve(base_dir, &cfg.data_dir);
            let train = load_idx(dir.join("train-images-idx3-ubyte"), dir.join("train-labels-idx1-ubyte"))?;
            let test = load_idx(dir.join("t10k-images-idx3-ubyte"), dir.join("t10k-labels-idx1-ubyte"))?;
            Ok((train, test))
        }
        DatasetKind::Synth => {
            let arch = cfg.arch();
            let dim = arch.side * arch.side * arch.in_channels;
            let make = |n, tag| synth_blobs(arch.classes, dim, SYNTH_SEPARATION, 1.0, n, &mut rng_for(cfg.seed, &[STREAM_SYNTH, tag]));
            Ok((make(cfg.synth_train, 0)?, make(cfg.synth_test, 1)?))
        }
    }
}

fn split(pool: &Dataset, clients: usize, per_client: Option<usize>, seed: u64, what: &str) -> Result<Vec<Dataset>> {
    let parts = partition_disjoint(pool, clients, seed)?;
    parts
        .into_iter()
        .map(|p| match per_client {
            Some(n) if n > p.len() => Err(CliError::Config(format!(
                "{what}: {n} samples per client requested but only {} available",
                p.len()
            ))),
            Some(n) => Ok(p.take(n)),
            None => Ok(p),
        })
        .collect()
}

/// Disjoint partitions of both pools, each sample expanded to as many noisy
/// views as the largest neighbourhood in the schedule.
pub fn prepare_clients(cfg: &ExperimentConfig, schedule: &TopologySchedule, base_dir: &Path) -> Result<Vec<ClientData>> {
    let (train, test) = load_source(cfg, base_dir)?;
    let n = schedule.client_count();
    let views = schedule.max_scale().max(1);
    let noise = NoiseSpec::new(cfg.snr_db);
    let train_parts = split(&train, n, cfg.train_per_client, derive_seed(cfg.seed, &[STREAM_PARTITION, 0]), "train")?;
    let test_parts = split(&test, n, cfg.test_per_client, derive_seed(cfg.seed, &[STREAM_PARTITION, 1]), "test")?;
    train_parts
        .iter()
        .zip(&test_parts)
        .enumerate()
        .map(|(i, (tr, te))| {
            let i = i as u64;
            let train = MultiViewDataset::prepare(tr, views, &noise, derive_seed(cfg.seed, &[STREAM_NOISE, i, 0]))?;
            let test = MultiViewDataset::prepare(te, views, &noise, derive_seed(cfg.seed, &[STREAM_NOISE, i, 1]))?;
            Ok(ClientData { train: Arc::new(train), test: Arc::new(test) })
        })
        .collect()
}
