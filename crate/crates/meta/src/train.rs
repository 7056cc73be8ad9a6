//! Outer loop: ADAM over batches of few-shot tasks with validation-based
//! model selection.

use std::time::Instant;

use soel_core::RandomSource;
use soel_data::{build_episode, MetaDataset, Partition};

use crate::adam::{adam_step, AdamState};
use crate::config::OuterLoopConfig;
use crate::deploy::{meta_test, EvalSettings};
use crate::error::{Error, Result};
use crate::model::MetaModel;
use crate::outer::{outer_loss, TaskRounding};
use crate::streams;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub iteration: u64,
    /// Summed mean-query loss over the batch.
    pub loss: f64,
    /// Query accuracy of the recorded training forwards.
    pub train_acc: f64,
    pub val_acc: Option<f64>,
    pub grad_norm: f64,
    pub inner_updates: u64,
    pub wall_ms: f64,
}

impl MetricsRow {
    pub const CSV_HEADER: &'static str = "iteration,loss,train_acc,val_acc,grad_norm,inner_updates,wall_ms";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.3}",
            self.iteration,
            self.loss,
            self.train_acc,
            self.val_acc.map(|v| v.to_string()).unwrap_or_default(),
            self.grad_norm,
            self.inner_updates,
            self.wall_ms
        )
    }
}

/// Best validated weights so far.
#[derive(Debug, Clone, PartialEq)]
pub struct BestSnapshot {
    pub iteration: u64,
    pub val_acc: f64,
    pub params: Vec<Vec<f64>>,
}

/// Everything besides the current weights needed to resume training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub adam: AdamState,
    /// Completed iterations.
    pub iteration: u64,
    pub best: Option<BestSnapshot>,
}

impl TrainState {
    pub fn new(model: &MetaModel) -> Self {
        let shapes: Vec<usize> = model.net.layers().iter().map(|l| l.weights.shadow().len()).collect();
        Self {
            adam: AdamState::new(&shapes),
            iteration: 0,
            best: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: MetaModel,
    pub outer: OuterLoopConfig,
    /// Seed of episode sampling and training rounding.
    pub seed: u64,
    pub shot: usize,
    pub state: TrainState,
}

impl Trainer {
    pub fn new(model: MetaModel, outer: OuterLoopConfig, seed: u64, shot: usize) -> Result<Self> {
        let state = TrainState::new(&model);
        Self::resume(model, outer, seed, shot, state)
    }

    pub fn resume(model: MetaModel, outer: OuterLoopConfig, seed: u64, shot: usize, state: TrainState) -> Result<Self> {
        outer.validate()?;
        if shot == 0 {
            return Err(Error::Config("shot must be at least 1".into()));
        }
        if !state.adam.matches(&model.params()) {
            return Err(Error::Config("training state does not match the model".into()));
        }
        Ok(Self {
            model,
            outer,
            seed,
            shot,
            state,
        })
    }

    fn val_settings(&self) -> EvalSettings {
        EvalSettings {
            way: self.model.net.outputs(),
            shot: self.shot,
            queries: self.outer.val_queries,
            trials: self.outer.val_episodes,
        }
    }

    /// Deployed accuracy on the fixed validation episodes.
    pub fn validate(&self, ds: &MetaDataset) -> Result<f64> {
        Ok(meta_test(&self.model, ds, Partition::Val, &self.val_settings(), self.seed)?.mean)
    }

    /// One outer iteration.
    pub fn step(&mut self, ds: &MetaDataset) -> Result<MetricsRow> {
        let start = Instant::now();
        let it = self.state.iteration;
        let root = RandomSource::new(self.seed, streams::TRAIN).substream(it);
        let way = self.model.net.outputs();
        let tasks = (0..self.outer.meta_batch)
            .map(|b| {
                let task = root.substream(b as u64);
                let ep = build_episode(ds, Partition::Train, way, self.shot, self.outer.train_queries, &task.substream(2))?;
                Ok((ep, TaskRounding::from_task(&task)))
            })
            .collect::<Result<Vec<_>>>()?;
        let batch = outer_loss(&self.model, &tasks)?;
        let total = batch.bundle;
        if !total.is_finite() {
            return Err(Error::Config(format!("non-finite gradient at iteration {it}")));
        }
        let grad_norm = total.grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();

        let mut params = self.model.params();
        let scheme = self.model.config.scheme;
        let clamp = self
            .model
            .config
            .quantize
            .then(|| (f64::from(scheme.min()), f64::from(scheme.max())));
        let step_cfg = OuterLoopConfig {
            lr: self.outer.lr_at(it),
            ..self.outer.clone()
        };
        adam_step(&mut params, &total.grads, &mut self.state.adam, &step_cfg, clamp);
        self.model.set_params(&params)?;
        self.model.requantize()?;
        self.state.iteration += 1;
        self.model.provenance.iteration = self.state.iteration;

        let mut val_acc = None;
        if self.outer.val_every > 0 && self.state.iteration % self.outer.val_every == 0 {
            let v = self.validate(ds)?;
            val_acc = Some(v);
            if self.state.best.as_ref().is_none_or(|b| v > b.val_acc) {
                self.state.best = Some(BestSnapshot {
                    iteration: self.state.iteration,
                    val_acc: v,
                    params,
                });
            }
        }
        Ok(MetricsRow {
            iteration: self.state.iteration,
            loss: total.loss,
            train_acc: batch.accuracy,
            val_acc,
            grad_norm,
            inner_updates: batch.inner_updates,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    }

    /// Runs until `outer.iterations` iterations are complete.
    pub fn run(&mut self, ds: &MetaDataset, mut on_row: impl FnMut(&MetricsRow) -> Result<()>) -> Result<()> {
        while self.state.iteration < self.outer.iterations {
            let row = self.step(ds)?;
            on_row(&row)?;
        }
        Ok(())
    }

    /// The best validated model, or the current one without validation.
    pub fn best_model(&self) -> Result<MetaModel> {
        let mut m = self.model.clone();
        if let Some(b) = &self.state.best {
            m.set_params(&b.params)?;
            m.requantize()?;
            m.provenance.iteration = b.iteration;
        }
        Ok(m)
    }
}
