//! Subcommand implementations.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use pepi_core::federation::{run_schedule, save_checkpoint, ClientData, Method, Network, RunConfig, RunReport};
use pepi_core::metrics::MetricsLog;
use pepi_core::pepi::{count_parameters, ScaledModel};
use pepi_core::seed::rng_for;
use pepi_core::topology::{AdjacencyMatrix, ClientList, Slot, TopologySchedule};
use serde::Serialize;

use crate::config::{resolve, ExperimentConfig, LoadedConfig, Preset};
use crate::dataset::prepare_clients;
use crate::error::{CliError, Result};
use crate::output::{final_mean_accuracy, sha256_hex, write_accuracy_svg, write_manifest, write_metrics_csv, Manifest, MethodRun};

#[derive(Debug, Parser)]
#[command(name = "pepi", version, about = "Federated learning with scalable PE/PI networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Preset::Full)]
    pub preset: Preset,
    /// Overrides the config's output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Prepare the per-client multi-view data and cache it under `<out>/data`.
    GenData(CommonArgs),
    /// Train one method over the schedule.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        method: Option<Method>,
    },
    /// Train all four methods on identical data and seeds.
    Compare(CommonArgs),
    /// Trainable and effective parameter counts per method and scale.
    ParamCount {
        #[command(flatten)]
        common: CommonArgs,
        /// Largest scale to report (defaults to the schedule's maximum).
        #[arg(long)]
        max_k: Option<usize>,
    },
    /// Check a config and its schedule without training.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        method: Option<Method>,
    },
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::GenData(c) | Command::Compare(c) => c,
            Command::Train { common, .. } | Command::ParamCount { common, .. } | Command::Validate { common, .. } => common,
        }
    }
}

/// A loaded, preset-adjusted config with its schedule.
struct Prepared {
    loaded: LoadedConfig,
    schedule: TopologySchedule,
    out: PathBuf,
    preset: Preset,
    config_path: PathBuf,
}

impl Prepared {
    fn cfg(&self) -> &ExperimentConfig {
        &self.loaded.config
    }

    fn manifest(&self, command: &str, methods: Vec<MethodRun>, files: Vec<String>) -> Manifest {
        Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_path: self.config_path.display().to_string(),
            config_sha256: sha256_hex(&self.loaded.raw),
            preset: format!("{:?}", self.preset).to_lowercase(),
            seed: self.cfg().seed,
            clients: self.schedule.client_count(),
            epochs: self.cfg().epochs,
            methods,
            files,
        }
    }

    fn run_config(&self, method: Method) -> RunConfig {
        let cfg = self.cfg();
        RunConfig { method, arch: cfg.arch(), hyper: cfg.hyper(), seed: cfg.seed, parallel: cfg.parallel }
    }
}

fn prepare(common: &CommonArgs, method: Option<Method>) -> Result<Prepared> {
    let mut loaded = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        loaded.config.seed = seed;
    }
    if let Some(m) = method {
        loaded.config.method = m;
    }
    loaded.config.apply_preset(common.preset);
    loaded.config.validate()?;
    let schedule = loaded.config.load_schedule(&loaded.base_dir)?;
    let out = common.out.clone().unwrap_or_else(|| resolve(&loaded.base_dir, &loaded.config.out));
    Ok(Prepared { loaded, schedule, out, preset: common.preset, config_path: common.config.clone() })
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|source| CliError::Write { path: path.to_path_buf(), source })
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run_command<I, T>(argv: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
            let _ = e.print();
            std::process::exit(0);
        }
        _ => CliError::Config(e.to_string()),
    })?;
    execute(&cli.command)
}

pub fn execute(command: &Command) -> Result<()> {
    match command {
        Command::GenData(common) => gen_data(&prepare(common, None)?),
        Command::Train { common, method } => train(&prepare(common, *method)?),
        Command::Compare(common) => compare(&prepare(common, None)?),
        Command::ParamCount { common, max_k } => param_count(&prepare(common, None)?, *max_k),
        Command::Validate { common, method } => validate(&prepare(common, *method)?),
    }
    .map_err(|e| {
        if let CliError::Config(msg) = &e {
            CliError::Config(format!("{}: {msg}", command.common().config.display()))
        } else {
            e
        }
    })
}

fn gen_data(p: &Prepared) -> Result<()> {
    let data = prepare_clients(p.cfg(), &p.schedule, &p.loaded.base_dir)?;
    let dir = p.out.join("data");
    create_dir(&dir)?;
    let mut files = Vec::new();
    for (i, d) in data.iter().enumerate() {
        let name = p.schedule.client_name(i);
        for (split, set) in [("train", &d.train), ("test", &d.test)] {
            let file = format!("data/{name}-{split}.pepd");
            set.save(p.out.join(&file))?;
            files.push(file);
        }
        println!("{name}: {} train / {} test samples, {} views", d.train.len(), d.test.len(), d.train.views());
    }
    files.push("manifest.json".into());
    write_manifest(&p.manifest("gen-data", Vec::new(), files), &p.out.join("manifest.json"))
}

fn slot_file(method: &str, slot_index: usize, label: &str) -> String {
    format!("checkpoints/{method}-slot{slot_index}-{label}.pepi")
}

fn save_report_checkpoints(out: &Path, prefix: &str, report: &RunReport, files: &mut Vec<String>) -> Result<()> {
    create_dir(&out.join("checkpoints"))?;
    for c in &report.checkpoints {
        let file = slot_file(prefix, c.slot_index, &c.label);
        save_checkpoint(&c.params, out.join(&file))?;
        files.push(file);
    }
    Ok(())
}

/// Single-client schedule following client `i`'s activity, with no links.
fn isolated_schedule(schedule: &TopologySchedule, i: usize) -> Result<TopologySchedule> {
    let slots = schedule
        .slots
        .iter()
        .map(|s| {
            let adjacency = AdjacencyMatrix::from_rows(&[[s.adjacency.entry(i, i)]])?;
            Ok(Slot { label: s.label.clone(), rounds: s.rounds, adjacency, mode: s.mode })
        })
        .collect::<pepi_core::Result<Vec<_>>>()?;
    Ok(TopologySchedule { clients: ClientList::Names(vec![schedule.client_name(i)]), slots })
}

/// Runs one method; baseline1 runs each client of a multi-client schedule in isolation.
fn run_method(p: &Prepared, method: Method, data: &[ClientData], files: &mut Vec<String>) -> Result<(MetricsLog, MethodRun)> {
    let start = Instant::now();
    let rc = p.run_config(method);
    let n = p.schedule.client_count();
    let (log, trainable) = if method == Method::Baseline1 && n > 1 {
        let mut log = MetricsLog::new();
        let mut trainable = 0;
        for (i, d) in data.iter().enumerate() {
            let solo = isolated_schedule(&p.schedule, i)?;
            let report = run_schedule(&rc, &solo, std::slice::from_ref(d))?;
            save_report_checkpoints(&p.out, &format!("{method}-{}", p.schedule.client_name(i)), &report, files)?;
            trainable = report.trainable_params;
            for mut row in report.log.rows().iter().cloned() {
                row.client_index = i;
                log.push(row)?;
            }
        }
        (log, trainable)
    } else {
        p.cfg().check_method(method, &p.schedule)?;
        let report = run_schedule(&rc, &p.schedule, data)?;
        save_report_checkpoints(&p.out, method.as_str(), &report, files)?;
        for t in &report.transitions {
            println!(
                "{method}: client {} rescaled K {} -> {} at slot {} (parameters preserved: {})",
                p.schedule.client_name(t.client),
                t.from_k,
                t.to_k,
                t.slot_index,
                t.params_identical
            );
        }
        (report.log, report.trainable_params)
    };
    let run = MethodRun {
        method: method.to_string(),
        trainable_params: trainable,
        wall_seconds: start.elapsed().as_secs_f64(),
        final_mean_accuracy: final_mean_accuracy(log.rows()),
    };
    if let Some(acc) = run.final_mean_accuracy {
        println!("{method}: final mean accuracy {acc:.4} ({:.1}s)", run.wall_seconds);
    }
    Ok((log, run))
}

fn write_outputs(p: &Prepared, command: &str, log: &MetricsLog, runs: Vec<MethodRun>, mut files: Vec<String>) -> Result<()> {
    write_metrics_csv(log, &p.out.join("metrics.csv"))?;
    write_accuracy_svg(log, &p.out.join("accuracy.svg"))?;
    files.extend(["metrics.csv".to_string(), "accuracy.svg".to_string(), "manifest.json".to_string()]);
    write_manifest(&p.manifest(command, runs, files), &p.out.join("manifest.json"))
}

fn train(p: &Prepared) -> Result<()> {
    let method = p.cfg().method;
    p.cfg().check_method(method, &p.schedule)?;
    let data = prepare_clients(p.cfg(), &p.schedule, &p.loaded.base_dir)?;
    create_dir(&p.out)?;
    let mut files = Vec::new();
    let (log, run) = run_method(p, method, &data, &mut files)?;
    write_outputs(p, "train", &log, vec![run], files)
}

fn compare(p: &Prepared) -> Result<()> {
    let data = prepare_clients(p.cfg(), &p.schedule, &p.loaded.base_dir)?;
    create_dir(&p.out)?;
    let mut files = Vec::new();
    let mut log = MetricsLog::new();
    let mut runs = Vec::new();
    for method in Method::ALL {
        let (l, run) = run_method(p, method, &data, &mut files)?;
        log.extend(l);
        runs.push(run);
    }
    write_outputs(p, "compare", &log, runs, files)
}

#[derive(Debug, Clone, Serialize)]
struct ParamCountRow {
    method: String,
    k: usize,
    trainable: u64,
    pepi_trainable_weights: Option<u64>,
    pepi_effective_weights: Option<u64>,
    weight_ratio: Option<f64>,
}

fn param_count(p: &Prepared, max_k: Option<usize>) -> Result<()> {
    let arch = p.cfg().arch();
    let max_k = max_k.unwrap_or_else(|| p.schedule.max_scale()).max(1);
    let mut rows = Vec::new();
    for method in Method::ALL {
        for k in 1..=max_k {
            let scale = method.model_scale(k);
            let row = match method {
                Method::Baseline3 => {
                    let net = Network::new(method, &arch, max_k, &mut rng_for(0, &[]))?;
                    ParamCountRow {
                        method: method.to_string(),
                        k,
                        trainable: net.trainable_params() as u64,
                        pepi_trainable_weights: None,
                        pepi_effective_weights: None,
                        weight_ratio: None,
                    }
                }
                _ => {
                    let model = ScaledModel::<f32>::new(&arch, scale, &mut rng_for(0, &[]))?;
                    let r = count_parameters(&model, scale);
                    ParamCountRow {
                        method: method.to_string(),
                        k,
                        trainable: r.trainable,
                        pepi_trainable_weights: Some(r.pepi_trainable_weights),
                        pepi_effective_weights: Some(r.pepi_effective_weights),
                        weight_ratio: Some(r.weight_ratio()),
                    }
                }
            };
            rows.push(row);
        }
    }
    println!("{:<10} {:>2} {:>10} {:>12} {:>12} {:>8}", "method", "K", "trainable", "pepi_train", "pepi_eff", "ratio");
    for r in &rows {
        let opt = |v: Option<u64>| v.map_or("-".to_string(), |v| v.to_string());
        println!(
            "{:<10} {:>2} {:>10} {:>12} {:>12} {:>8}",
            r.method,
            r.k,
            r.trainable,
            opt(r.pepi_trainable_weights),
            opt(r.pepi_effective_weights),
            r.weight_ratio.map_or("-".to_string(), |v| format!("{v:.2}"))
        );
    }
    create_dir(&p.out)?;
    let path = p.out.join("param_count.json");
    let text = serde_json::to_string_pretty(&rows).expect("rows serialize");
    std::fs::write(&path, text + "\n").map_err(|source| CliError::Write { path, source })?;
    write_manifest(&p.manifest("param-count", Vec::new(), vec!["param_count.json".into(), "manifest.json".into()]), &p.out.join("manifest.json"))
}

fn validate(p: &Prepared) -> Result<()> {
    p.cfg().check_method(p.cfg().method, &p.schedule)?;
    println!(
        "ok: {} clients, {} slots, {} training rounds, max K {}",
        p.schedule.client_count(),
        p.schedule.slots.len(),
        p.schedule.training_rounds(),
        p.schedule.max_scale()
    );
    for (s, slot) in p.schedule.slots.iter().enumerate() {
        let ks: Vec<String> = (0..p.schedule.client_count())
            .map(|i| p.schedule.query(i, s).map(|q| q.scale_k.to_string()))
            .collect::<pepi_core::Result<_>>()?;
        println!("  {} ({:?}, {} rounds): K = ({})", slot.label, slot.mode, slot.rounds, ks.join(","));
    }
    Ok(())
}
