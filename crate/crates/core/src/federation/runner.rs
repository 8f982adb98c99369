use std::sync::Arc;

use rayon::prelude::*;

use crate::data::MultiViewDataset;
use crate::error::{Error, Result};
use crate::federation::{aggregate, evaluate, local_train, ClientState, GlobalParams, Method, Network, TrainHyper};
use crate::metrics::{MetricRow, MetricsLog};
use crate::pepi::ArchSpec;
use crate::seed::rng_for;
use crate::topology::{validate_schedule, SlotMode, TopologySchedule};

/// Stream tag for the shared initial model.
const INIT_STREAM: u64 = 0x1_0000;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub method: Method,
    pub arch: ArchSpec,
    pub hyper: TrainHyper,
    pub seed: u64,
    /// Train the clients of a round on the rayon pool. Results do not depend on it.
    pub parallel: bool,
}

/// Prepared train/test sets of one client.
#[derive(Debug, Clone)]
pub struct ClientData {
    pub train: Arc<MultiViewDataset>,
    pub test: Arc<MultiViewDataset>,
}

/// A client whose model scale changed between two slots.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub slot_index: usize,
    pub client: usize,
    pub from_k: usize,
    pub to_k: usize,
    /// Whether the trainable parameters were bit-identical across the rescale.
    pub params_identical: bool,
}

/// Global parameters at the end of a slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotCheckpoint {
    pub slot_index: usize,
    pub label: String,
    pub params: GlobalParams,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub log: MetricsLog,
    pub transitions: Vec<Transition>,
    pub checkpoints: Vec<SlotCheckpoint>,
    pub trainable_params: usize,
}

fn check_inputs(cfg: &RunConfig, schedule: &TopologySchedule, data: &[ClientData]) -> Result<usize> {
    cfg.hyper.validate()?;
    cfg.arch.validate()?;
    validate_schedule(schedule).map_err(|v| {
        Error::Config(v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))
    })?;
    let n = schedule.client_count();
    if data.len() != n {
        return Err(Error::Config(format!("schedule has {n} clients but {} data sets were given", data.len())));
    }
    if cfg.method == Method::Baseline1 && n != 1 {
        return Err(Error::Config(format!("baseline1 trains a single isolated client, got {n}")));
    }
    let needed = cfg.method.model_scale(schedule.max_scale()).max(1);
    let pixels = cfg.arch.side * cfg.arch.side * cfg.arch.in_channels;
    for (i, d) in data.iter().enumerate() {
        for set in [&d.train, &d.test] {
            if set.views() < needed {
                return Err(Error::Precondition(format!(
                    "client {i}: data has {} views, the schedule needs {needed}",
                    set.views()
                )));
            }
            if set.pixels() != pixels || set.classes() != cfg.arch.classes {
                return Err(Error::Precondition(format!("client {i}: data does not match the architecture")));
            }
        }
        if d.test.is_empty() {
            return Err(Error::Precondition(format!("client {i}: empty test set")));
        }
    }
    Ok(needed)
}

/// Run a federated experiment over every slot of `schedule`.
///
/// Each round: active clients receive the global parameters, train locally,
/// the server averages the uploads weighted by sample count. Accuracy and loss
/// on each client's test set are logged every `test_every` epochs and at the
/// last round of every slot; inference slots evaluate every round and never
/// train.
pub fn run_schedule(cfg: &RunConfig, schedule: &TopologySchedule, data: &[ClientData]) -> Result<RunReport> {
    let max_views = check_inputs(cfg, schedule, data)?;
    let init = Network::new(cfg.method, &cfg.arch, max_views, &mut rng_for(cfg.seed, &[INIT_STREAM]))?;
    let trainable_params = init.trainable_params();
    let mut global = init.to_params();
    let mut clients: Vec<ClientState> = data
        .iter()
        .enumerate()
        .map(|(id, d)| ClientState {
            id,
            name: schedule.client_name(id),
            active: false,
            model: init.clone(),
            train: Arc::clone(&d.train),
            test: Arc::clone(&d.test),
        })
        .collect();
    let mut seen = vec![false; clients.len()];
    let mut log = MetricsLog::new();
    let mut transitions = Vec::new();
    let mut checkpoints = Vec::new();
    let mut round = 0u32;
    let mut epoch = 0u32;
    let local_epochs = cfg.hyper.local_epochs_per_round;

    for (slot_index, slot) in schedule.slots.iter().enumerate() {
        for c in clients.iter_mut() {
            let q = schedule.query(c.id, slot_index)?;
            c.active = q.active;
            if !q.active {
                continue;
            }
            let to_k = cfg.method.model_scale(q.scale_k);
            let from_k = c.model.scale();
            if from_k != to_k {
                let before = c.model.to_params();
                c.model.rescale(to_k)?;
                if seen[c.id] {
                    let params_identical = before.bit_identical(&c.model.to_params());
                    transitions.push(Transition { slot_index, client: c.id, from_k, to_k, params_identical });
                }
            }
            seen[c.id] = true;
        }

        for r in 0..slot.rounds {
            let last = r + 1 == slot.rounds;
            if cfg.method.aggregates() {
                for c in clients.iter_mut().filter(|c| c.active) {
                    c.model.load_params(&global)?;
                }
            }
            let training = slot.mode == SlotMode::Train;
            let mut train_loss = vec![None; clients.len()];
            if training {
                let (hyper, seed) = (&cfg.hyper, cfg.seed);
                let mut active: Vec<&mut ClientState> = clients.iter_mut().filter(|c| c.active).collect();
                let step = |c: &mut &mut ClientState| local_train(c, local_epochs, hyper, epoch, seed, round);
                let results: Vec<_> = if cfg.parallel {
                    active.par_iter_mut().map(step).collect::<Result<_>>()?
                } else {
                    active.iter_mut().map(step).collect::<Result<_>>()?
                };
                let mut updates = Vec::with_capacity(results.len());
                for (update, stats) in results {
                    train_loss[update.client_id] = Some(stats.mean_loss);
                    updates.push(update);
                }
                if !updates.is_empty() {
                    global = aggregate(&updates)?;
                    if cfg.method.aggregates() {
                        for c in clients.iter_mut().filter(|c| c.active) {
                            c.model.load_params(&global)?;
                        }
                    }
                }
                epoch += local_epochs;
            }
            let due = !training || last || epoch.is_multiple_of(cfg.hyper.test_every);
            if due {
                let evaluated: Vec<(usize, f64, f64)> = {
                    let active: Vec<&ClientState> = clients.iter().filter(|c| c.active).collect();
                    let eval = |c: &&ClientState| evaluate(&c.model, &c.test).map(|(a, l)| (c.id, a, l));
                    if cfg.parallel {
                        active.par_iter().map(eval).collect::<Result<_>>()?
                    } else {
                        active.iter().map(eval).collect::<Result<_>>()?
                    }
                };
                for (id, acc, loss) in evaluated {
                    let mut values = vec![("accuracy", acc), ("loss", loss)];
                    if let Some(tl) = train_loss[id] {
                        values.push(("train_loss", tl));
                    }
                    for (metric, value) in values {
                        log.push(MetricRow {
                            method: cfg.method.as_str().to_string(),
                            slot_index,
                            slot: slot.label.clone(),
                            round,
                            epoch,
                            client_index: id,
                            client: clients[id].name.clone(),
                            metric: metric.to_string(),
                            value,
                        })?;
                    }
                }
            }
            round += 1;
        }
        checkpoints.push(SlotCheckpoint { slot_index, label: slot.label.clone(), params: global.clone() });
    }
    Ok(RunReport { log, transitions, checkpoints, trainable_params })
}
