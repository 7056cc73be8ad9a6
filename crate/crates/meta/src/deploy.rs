//! Deployment: the meta-trained network runs on the simulated chip and
//! adapts with the on-chip SOEL program only.

use soel_core::plasticity::{learning_epoch_step, EpochInputs, SoelConfig, SoelState, UpdateRule};
use soel_core::snn::{Arithmetic, FixedPoint, Layer, NetworkTopology, Simulator};
use soel_core::{BinnedSample, QuantizationScheme, RandomSource, WeightMatrix, WeightView};
use soel_data::{build_episode, Episode, MetaDataset, Partition};

use crate::error::{Error, Result};
use crate::model::MetaModel;
use crate::streams;

/// A network loaded onto the chip together with its learning program.
#[derive(Debug, Clone)]
pub struct DeployedNetwork {
    sim: Simulator,
    soel: SoelConfig,
    rule: UpdateRule,
    quant: Option<QuantizationScheme>,
    state: SoelState,
}

/// Outcome of one inference.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub counts: Vec<u32>,
    pub label: usize,
    /// More than one output shared the maximum count.
    pub tie: bool,
}

impl DeployedNetwork {
    /// Builds the deployed network. With quantization enabled only the
    /// integer image of the weights is transferred; otherwise the shadow
    /// weights run unquantized.
    pub fn from_model(model: &MetaModel) -> Result<Self> {
        let cfg = &model.config;
        let view = if cfg.quantize { WeightView::Quantized } else { WeightView::Shadow };
        let layers = model
            .net
            .layers()
            .iter()
            .map(|l| {
                let weights = if cfg.quantize {
                    WeightMatrix::from_quantized(l.weights.rows(), l.weights.cols(), l.weights.quantized().to_vec())?
                } else {
                    WeightMatrix::from_shadow(l.weights.rows(), l.weights.cols(), l.weights.shadow().to_vec())?
                };
                Ok(Layer {
                    neuron: l.neuron,
                    weights,
                    plastic: l.plastic,
                })
            })
            .collect::<soel_core::Result<Vec<_>>>()?;
        let net = NetworkTopology::new(layers)?;
        let arithmetic = if cfg.integer_state {
            Arithmetic::Fixed(FixedPoint { frac_bits: cfg.frac_bits })
        } else {
            Arithmetic::Real
        };
        let outputs = net.outputs();
        if net.plastic_layer() != Some(net.layers().len() - 1) {
            return Err(Error::Config("deployment requires a plastic output layer".into()));
        }
        let soel = SoelConfig {
            eta: cfg.inner.alpha * cfg.soel.eta,
            ..cfg.soel
        };
        Ok(Self {
            sim: Simulator::new(net, view, arithmetic)?,
            soel,
            rule: UpdateRule::Direct,
            quant: cfg.quantize.then_some(cfg.scheme),
            state: SoelState::new(outputs),
        })
    }

    pub fn with_rule(mut self, rule: UpdateRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn network(&self) -> &NetworkTopology {
        self.sim.network()
    }

    pub fn learning_state(&self) -> &SoelState {
        &self.state
    }

    /// Runs one sample from blank state. With a label the learning program
    /// adapts the plastic layer; the rounding of epoch `n` uses
    /// `rounding.substream(n)`.
    pub fn present(&mut self, sample: &BinnedSample, label: Option<usize>, rounding: &RandomSource) -> Result<Prediction> {
        self.sim.reset_state();
        self.state.reset_window();
        let plastic = self.sim.trace_layer().expect("deployed network has a plastic layer");
        let mut counts = vec![0u32; self.network().outputs()];
        for t in 0..sample.steps() {
            let out = self.sim.step(sample.active(t))?.to_vec();
            for &i in &out {
                counts[i as usize] += 1;
            }
            let (traces, pre, w) = self.sim.plastic_parts().expect("plastic layer exists");
            let inputs = EpochInputs {
                out_spikes: &out,
                pre_spikes: pre,
                traces,
                label,
                blank: false,
            };
            let quant = self.quant.as_ref().map(|s| (s, rounding));
            let outcome = learning_epoch_step(&mut self.state, &inputs, &self.soel, &self.rule, w, quant)?;
            if outcome.weight_writes > 0 {
                self.sim.refresh_layer(plastic);
            }
        }
        let (label, tie) = readout(&counts);
        Ok(Prediction { counts, label, tie })
    }
}

impl DeployedNetwork {
    /// On-chip adaptation: `steps` passes over the labeled shots.
    pub fn inner_adapt(&mut self, train: &[BinnedSample], steps: usize, rounding: &RandomSource) -> Result<()> {
        for _ in 0..steps {
            for s in train {
                self.present(s, Some(s.label() as usize), rounding)?;
            }
        }
        Ok(())
    }
}

/// Argmax with ties resolved to the lowest index.
pub fn readout(counts: &[u32]) -> (usize, bool) {
    let max = counts.iter().copied().max().unwrap_or(0);
    let first = counts.iter().position(|&c| c == max).unwrap_or(0);
    let tie = counts.iter().filter(|&&c| c == max).count() > 1;
    (first, tie)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub accuracy: f64,
    /// Correct queries per output.
    pub per_class_correct: Vec<usize>,
    pub per_class_total: Vec<usize>,
    /// Rows updated by the learning program during adaptation.
    pub inner_updates: u64,
    pub weight_writes: u64,
    pub ties: usize,
    pub predictions: Vec<Prediction>,
}

/// Adapts a fresh deployment of `model` on the episode's training shots
/// (`inner.steps` passes) and classifies its queries.
pub fn run_episode(model: &MetaModel, episode: &Episode, rounding: &RandomSource) -> Result<EpisodeResult> {
    let mut dep = DeployedNetwork::from_model(model)?;
    dep.inner_adapt(&episode.train, model.config.inner.steps, rounding)?;
    let inner_updates = dep.state.row_updates;
    let weight_writes = dep.state.weight_writes;
    let way = episode.way;
    let mut per_class_correct = vec![0; way];
    let mut per_class_total = vec![0; way];
    let mut predictions = Vec::with_capacity(episode.test.len());
    let mut ties = 0;
    for s in &episode.test {
        let p = dep.present(s, None, rounding)?;
        let truth = s.label() as usize;
        per_class_total[truth] += 1;
        if p.label == truth {
            per_class_correct[truth] += 1;
        }
        ties += usize::from(p.tie);
        predictions.push(p);
    }
    let correct: usize = per_class_correct.iter().sum();
    Ok(EpisodeResult {
        accuracy: correct as f64 / episode.test.len().max(1) as f64,
        per_class_correct,
        per_class_total,
        inner_updates,
        weight_writes,
        ties,
        predictions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSettings {
    pub way: usize,
    pub shot: usize,
    pub queries: usize,
    pub trials: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            way: 5,
            shot: 1,
            queries: 10,
            trials: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSummary {
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over trials.
    pub std: f64,
    pub inner_updates: u64,
    pub ties: usize,
}

impl TrialSummary {
    pub fn from_accuracies(accuracies: Vec<f64>) -> Self {
        let n = accuracies.len().max(1) as f64;
        let mean = accuracies.iter().sum::<f64>() / n;
        let var = accuracies.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
        Self {
            accuracies,
            mean,
            std: var.sqrt(),
            inner_updates: 0,
            ties: 0,
        }
    }
}

/// Episode `i` of an evaluation and the rounding its deployment uses.
pub fn evaluation_episode(ds: &MetaDataset, part: Partition, eval: &EvalSettings, seed: u64, i: usize) -> Result<(Episode, RandomSource)> {
    let stream = match part {
        Partition::Train => streams::TRAIN_EVAL,
        Partition::Val => streams::VAL,
        Partition::Test => streams::TEST,
    };
    let root = RandomSource::new(seed, stream).substream(i as u64);
    let ep = build_episode(ds, part, eval.way, eval.shot, eval.queries, &root.substream(0))?;
    Ok((ep, root.substream(1)))
}

/// Independent deployments over `eval.trials` episodes of `part`, run in
/// parallel and reported in trial order.
pub fn meta_test(model: &MetaModel, ds: &MetaDataset, part: Partition, eval: &EvalSettings, seed: u64) -> Result<TrialSummary> {
    use rayon::prelude::*;
    if eval.way != model.net.outputs() {
        return Err(Error::Config(format!(
            "{}-way evaluation needs {} outputs, model has {}",
            eval.way,
            eval.way,
            model.net.outputs()
        )));
    }
    let results = (0..eval.trials)
        .into_par_iter()
        .map(|i| {
            let (ep, rounding) = evaluation_episode(ds, part, eval, seed, i)?;
            run_episode(model, &ep, &rounding)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut summary = TrialSummary::from_accuracies(results.iter().map(|r| r.accuracy).collect());
    summary.inner_updates = results.iter().map(|r| r.inner_updates).sum();
    summary.ties = results.iter().map(|r| r.ties).sum();
    Ok(summary)
}
