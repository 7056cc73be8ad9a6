//! Recording of one few-shot task: inner-loop adaptation on the training
//! shots followed by the query loss.

use soel_core::RandomSource;
use soel_data::Episode;
use soel_diff::{add_ce, record_sample, GradientBundle, InnerLearning, NodeId, Tape, WeightNodes};

use crate::error::Result;
use crate::model::MetaModel;

/// Rounding sources of a recorded task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskRounding {
    /// Initial rounding of every layer (`substream(k)` for layer `k`).
    pub weights: RandomSource,
    /// Re-rounding after inner-loop updates (`substream(epoch)`).
    pub learning: RandomSource,
}

impl TaskRounding {
    /// Both sources derived from one task stream.
    pub fn from_task(task: &RandomSource) -> Self {
        Self {
            weights: task.substream(0),
            learning: task.substream(1),
        }
    }
}

#[derive(Debug)]
pub struct TaskRecord {
    pub tape: Tape,
    /// Mean query cross-entropy.
    pub loss: NodeId,
    pub query_counts: Vec<Vec<f64>>,
    pub inner_updates: usize,
}

impl TaskRecord {
    pub fn loss_value(&self) -> f64 {
        self.tape.scalar(self.loss)
    }

    /// Query accuracy of the recorded forward (ties go to the lowest index).
    pub fn query_accuracy(&self, episode: &Episode) -> f64 {
        let correct = self
            .query_counts
            .iter()
            .zip(&episode.test)
            .filter(|(c, s)| argmax(c) == s.label() as usize)
            .count();
        correct as f64 / episode.test.len().max(1) as f64
    }

    pub fn gradients(&self) -> Result<GradientBundle> {
        Ok(self.tape.backward(self.loss)?)
    }
}

/// Index of the first maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Runs `inner.steps` passes of SOEL over the training shots (in output order),
/// then the queries without learning, and records the mean query loss.
pub fn record_task(model: &MetaModel, episode: &Episode, rounding: &TaskRounding) -> Result<TaskRecord> {
    let cfg = &model.config;
    let diff = cfg.diff_config();
    let mut tape = Tape::new();
    let mut nodes = WeightNodes::register(&mut tape, &model.net, &diff, &rounding.weights)?;
    let mut epoch = 0u64;
    let mut inner_updates = 0;
    for _ in 0..cfg.inner.steps {
        for s in &episode.train {
            let mut learning = InnerLearning {
                soel: &cfg.soel,
                alpha: cfg.inner.alpha,
                label: s.label() as usize,
                epoch: &mut epoch,
                rounding: rounding.learning,
            };
            let rec = record_sample(&mut tape, &model.net, &mut nodes, s, &diff, Some(&mut learning))?;
            inner_updates += rec.row_updates;
        }
    }
    let mut loss = None;
    let mut query_counts = Vec::with_capacity(episode.test.len());
    for s in &episode.test {
        let rec = record_sample(&mut tape, &model.net, &mut nodes, s, &diff, None)?;
        query_counts.push(tape.value(rec.counts).to_vec());
        loss = Some(add_ce(&mut tape, loss, rec.counts, s.label() as usize, &diff)?);
    }
    let n = episode.test.len().max(1) as f64;
    let loss = match loss {
        Some(l) => tape.affine(l, 1.0 / n, vec![0.0])?,
        None => tape.constant(vec![0.0]),
    };
    Ok(TaskRecord {
        tape,
        loss,
        query_counts,
        inner_updates,
    })
}

/// Summed outer loss and gradients over a batch of tasks.
#[derive(Debug, Clone)]
pub struct BatchGradient {
    pub bundle: GradientBundle,
    /// Mean recorded query accuracy over the tasks.
    pub accuracy: f64,
    pub inner_updates: u64,
}

/// Records every task (in parallel) and reduces their gradients in task
/// order.
pub fn outer_loss(model: &MetaModel, tasks: &[(Episode, TaskRounding)]) -> Result<BatchGradient> {
    use rayon::prelude::*;
    let parts = tasks
        .par_iter()
        .map(|(ep, rounding)| {
            let rec = record_task(model, ep, rounding)?;
            Ok((rec.gradients()?, rec.query_accuracy(ep), rec.inner_updates as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    let shapes: Vec<(usize, usize)> = model.net.layers().iter().map(|l| l.weights.shape()).collect();
    let mut bundle = GradientBundle::zeros(&shapes);
    let mut accuracy = 0.0;
    let mut inner_updates = 0;
    for (g, a, u) in &parts {
        bundle.accumulate(g)?;
        accuracy += a;
        inner_updates += u;
    }
    Ok(BatchGradient {
        bundle,
        accuracy: accuracy / parts.len().max(1) as f64,
        inner_updates,
    })
}
