//! The subcommands of `soelsim`. Each returns the text it prints.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use soel_core::RandomSource;
use soel_data::{generate_synthetic_family, knn_episode_accuracy, MetaDataset, Partition};
use soel_diff::{check_smoothed_network, GradCheckSetup};
use soel_meta::deploy::evaluation_episode;
use soel_meta::{
    export_json, import_json, load_checkpoint, meta_test, save_checkpoint, Checkpoint, MetaModel, MetricsRow, Trainer, TrainingCheckpoint,
    TrialSummary,
};

use crate::config::{DatasetSource, ExperimentConfig};
use crate::demo::run_single_neuron_demo;
use crate::error::{CliError, Result};

/// Stream id of the class split drawn for manifests without one.
const SPLIT_STREAM: u64 = 0x2001;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    MetaTrain,
    MetaTest,
    GradCheck,
    KnnBaseline,
    /// Binary checkpoint to JSON.
    Export {
        output: PathBuf,
    },
    /// JSON to binary checkpoint.
    Import {
        output: PathBuf,
    },
    Demo,
}

pub fn run_experiment(cmd: &Command, cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<String> {
    match cmd {
        Command::MetaTrain => meta_train(cfg, checkpoint),
        Command::MetaTest => run_meta_test(cfg, checkpoint),
        Command::GradCheck => grad_check(cfg),
        Command::KnnBaseline => knn_baseline(cfg),
        Command::Export { output } => export(checkpoint, output),
        Command::Import { output } => import(checkpoint, output),
        Command::Demo => demo(cfg),
    }
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<MetaDataset> {
    Ok(match &cfg.dataset {
        DatasetSource::Synthetic => generate_synthetic_family(&cfg.synthetic, cfg.data_seed)?,
        DatasetSource::Manifest(path) => {
            if !path.is_file() {
                return Err(CliError::MissingManifest(path.clone()));
            }
            let rng = RandomSource::new(cfg.data_seed, SPLIT_STREAM);
            MetaDataset::from_manifest(path, &cfg.binning, cfg.synthetic.split, &rng)?
        }
    })
}

fn require(path: Option<&Path>) -> Result<&Path> {
    let path = path.ok_or_else(|| CliError::Usage("--checkpoint PATH is required".into()))?;
    if !path.is_file() {
        return Err(CliError::MissingCheckpoint(path.to_path_buf()));
    }
    Ok(path)
}

pub fn read_checkpoint(path: Option<&Path>) -> Result<Checkpoint> {
    Ok(load_checkpoint(require(path)?)?)
}

fn check_fits(model: &MetaModel, ds: &MetaDataset, way: usize) -> Result<()> {
    if model.config.inputs != ds.inputs() {
        return Err(CliError::Config(format!(
            "the model expects {} inputs but the dataset has {}",
            model.config.inputs,
            ds.inputs()
        )));
    }
    if model.config.outputs != way {
        return Err(CliError::Config(format!(
            "the model has {} outputs but eval.way = {way}",
            model.config.outputs
        )));
    }
    Ok(())
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn save(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    save_checkpoint(path, ckpt)?;
    Ok(())
}

/// Trains from scratch, or resumes from a checkpoint that carries training
/// state. Writes `metrics.csv`, `last.ckpt` (resumable), `model.ckpt` (the
/// best validated model) and `config.txt` under the output directory.
pub fn meta_train(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<String> {
    let ds = load_dataset(cfg)?;
    create_dir(&cfg.out)?;
    let (mut trainer, resumed) = match checkpoint {
        None => {
            let model = MetaModel::init(cfg.model.clone(), cfg.seed)?;
            (Trainer::new(model, cfg.outer.clone(), cfg.seed, cfg.eval.shot)?, false)
        }
        Some(_) => {
            let ck = read_checkpoint(checkpoint)?;
            let t = ck
                .training
                .ok_or_else(|| CliError::BadInput("the checkpoint has no training state to resume".into()))?;
            let mut outer = t.outer;
            outer.iterations = cfg.outer.iterations;
            (Trainer::resume(ck.model, outer, t.seed, t.shot, t.state)?, true)
        }
    };
    check_fits(&trainer.model, &ds, trainer.model.config.outputs)?;
    write_file(&cfg.out.join("config.txt"), cfg.to_text())?;

    let metrics_path = cfg.out.join("metrics.csv");
    let fresh = !resumed || !metrics_path.is_file();
    let mut metrics = fs::OpenOptions::new()
        .create(true)
        .append(!fresh)
        .write(true)
        .truncate(fresh)
        .open(&metrics_path)
        .map_err(|e| CliError::io(&metrics_path, e))?;
    let io = |e| CliError::io(&metrics_path, e);
    if fresh {
        writeln!(metrics, "{}", MetricsRow::CSV_HEADER).map_err(io)?;
    }
    let last = cfg.out.join("last.ckpt");
    let snapshot = |t: &Trainer| Checkpoint {
        model: t.model.clone(),
        training: Some(TrainingCheckpoint {
            outer: t.outer.clone(),
            seed: t.seed,
            shot: t.shot,
            state: t.state.clone(),
        }),
    };
    while trainer.state.iteration < trainer.outer.iterations {
        let row = trainer.step(&ds)?;
        writeln!(metrics, "{}", row.to_csv()).map_err(io)?;
        if row.val_acc.is_some() {
            metrics.flush().map_err(io)?;
            save(&last, &snapshot(&trainer))?;
        }
    }
    save(&last, &snapshot(&trainer))?;
    let best = trainer.best_model()?;
    save(
        &cfg.out.join("model.ckpt"),
        &Checkpoint {
            model: best,
            training: None,
        },
    )?;

    let mut out = format!("trained {} iterations\n", trainer.state.iteration);
    match &trainer.state.best {
        Some(b) => writeln!(out, "best validation accuracy {:.4} at iteration {}", b.val_acc, b.iteration),
        None => writeln!(out, "no validation run; keeping the last model"),
    }
    .expect("write to string");
    writeln!(out, "model written to {}", cfg.out.join("model.ckpt").display()).expect("write to string");
    Ok(out)
}

pub fn format_summary(name: &str, s: &TrialSummary, cfg: &ExperimentConfig) -> String {
    format!(
        "{name} accuracy {:.4} ± {:.4} over {} trials ({}-way {}-shot, {} queries)\n",
        s.mean, s.std, cfg.eval.trials, cfg.eval.way, cfg.eval.shot, cfg.eval.queries
    )
}

/// Deployed accuracy on meta-test episodes. Per-trial accuracies go to
/// `meta_test.csv`.
pub fn run_meta_test(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<String> {
    let model = read_checkpoint(checkpoint)?.model;
    let ds = load_dataset(cfg)?;
    check_fits(&model, &ds, cfg.eval.way)?;
    let summary = meta_test(&model, &ds, Partition::Test, &cfg.eval, cfg.seed)?;
    create_dir(&cfg.out)?;
    let mut csv = String::from("trial,accuracy\n");
    for (i, a) in summary.accuracies.iter().enumerate() {
        writeln!(csv, "{i},{a}").expect("write to string");
    }
    write_file(&cfg.out.join("meta_test.csv"), csv)?;
    Ok(format_summary("meta-test", &summary, cfg))
}

/// 1-NN on spike counts over the same episodes as `meta-test`.
pub fn knn_summary(cfg: &ExperimentConfig, ds: &MetaDataset) -> Result<TrialSummary> {
    let acc = (0..cfg.eval.trials)
        .into_par_iter()
        .map(|i| {
            let (ep, _) = evaluation_episode(ds, Partition::Test, &cfg.eval, cfg.seed, i)?;
            Ok(knn_episode_accuracy(&ep, 1)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(TrialSummary::from_accuracies(acc))
}

pub fn knn_baseline(cfg: &ExperimentConfig) -> Result<String> {
    let ds = load_dataset(cfg)?;
    Ok(format_summary("knn", &knn_summary(cfg, &ds)?, cfg))
}

pub fn grad_check(cfg: &ExperimentConfig) -> Result<String> {
    let setup = GradCheckSetup {
        seed: cfg.seed,
        ..GradCheckSetup::default()
    };
    let (plain, meta) = check_smoothed_network(&setup)?;
    Ok(format!(
        "gradient max relative error {:.3e} over {} weights\nmeta-gradient max relative error {:.3e} over {} weights\n",
        plain.max_rel_error, plain.checked, meta.max_rel_error, meta.checked
    ))
}

pub fn export(checkpoint: Option<&Path>, output: &Path) -> Result<String> {
    let model = read_checkpoint(checkpoint)?.model;
    write_file(output, export_json(&model))?;
    Ok(format!("exported to {}\n", output.display()))
}

pub fn import(input: Option<&Path>, output: &Path) -> Result<String> {
    let path = require(input)?;
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let model = import_json(&text)?;
    save(output, &Checkpoint { model, training: None })?;
    Ok(format!("imported to {}\n", output.display()))
}

pub fn demo(cfg: &ExperimentConfig) -> Result<String> {
    let r = run_single_neuron_demo(&cfg.demo, cfg.seed)?;
    create_dir(&cfg.out)?;
    let path = cfg.out.join("demo.csv");
    write_file(&path, r.to_csv())?;
    let status = match r.converged_after {
        Some(w) => format!("converged after {w} windows"),
        None => format!("not converged within {} windows", cfg.demo.max_windows),
    };
    Ok(format!(
        "{status}; {} weight writes, {} in quiet windows; trajectory written to {}\n",
        r.weight_writes,
        r.quiet_window_writes,
        path.display()
    ))
}
