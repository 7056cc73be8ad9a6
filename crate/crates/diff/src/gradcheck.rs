//! Finite-difference verification of tape gradients.

use soel_core::plasticity::SoelConfig;
use soel_core::snn::{NetworkTopology, NeuronConfig, ResetMode};
use soel_core::{BinnedSample, RandomSource, WeightMatrix};

use crate::error::{Error, Result};
use crate::surrogate::{SurrogateConfig, SurrogateKind};
use crate::tape::{NodeId, Tape};
use crate::unroll::{add_ce, forward_record, record_sample, DiffConfig, ForwardMode, InnerLearning, WeightNodes};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Location `(param, index)` of the worst entry.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
}

/// Relative error with an absolute floor so that entries whose true gradient
/// vanishes are judged on the absolute scale `floor`.
pub fn rel_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Compares the tape gradient of `record(params)` against central
/// differences at `count` weights drawn uniformly (with replacement) from
/// all parameters.
pub fn grad_check<F>(record: F, params: &[Vec<f64>], eps: f64, count: usize, floor: f64, rng: &RandomSource) -> Result<GradCheckReport>
where
    F: Fn(&[Vec<f64>]) -> Result<(Tape, NodeId)>,
{
    let total: usize = params.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(Error::IncompleteTape("no parameters to check".into()));
    }
    let (tape, root) = record(params)?;
    let grads = tape.backward(root)?;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
    };
    let mut probe = params.to_vec();
    for n in 0..count {
        let mut flat = (rng.uniform_at(n as u64) * total as f64) as usize;
        let mut k = 0;
        while flat >= params[k].len() {
            flat -= params[k].len();
            k += 1;
        }
        let x = params[k][flat];
        probe[k][flat] = x + eps;
        let (t1, r1) = record(&probe)?;
        probe[k][flat] = x - eps;
        let (t2, r2) = record(&probe)?;
        probe[k][flat] = x;
        let numeric = (t1.scalar(r1) - t2.scalar(r2)) / (2.0 * eps);
        let analytic = grads.grads[k][flat];
        let err = rel_error(analytic, numeric, floor);
        if err >= report.max_rel_error {
            report.max_rel_error = err;
            report.worst = (k, flat);
            report.analytic = analytic;
            report.numeric = numeric;
        }
        report.checked += 1;
    }
    Ok(report)
}

/// The smoothed-forward check network and its data.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckSetup {
    pub inputs: usize,
    pub hidden: usize,
    pub outputs: usize,
    pub steps: usize,
    pub samples: usize,
    pub input_rate: f64,
    pub eps: f64,
    pub weights_checked: usize,
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckSetup {
    fn default() -> Self {
        Self {
            inputs: 16,
            hidden: 16,
            outputs: 5,
            steps: 20,
            samples: 3,
            input_rate: 0.3,
            eps: 1e-4,
            weights_checked: 120,
            floor: 1e-8,
            seed: 7,
        }
    }
}

pub struct GradCheckProblem {
    pub net: NetworkTopology,
    pub samples: Vec<BinnedSample>,
    pub cfg: DiffConfig,
    pub soel: SoelConfig,
    pub alpha: f64,
}

impl GradCheckSetup {
    /// A two-layer net with unit thresholds, smoothed spikes and no
    /// quantization, plus random input spike trains.
    pub fn problem(&self) -> Result<GradCheckProblem> {
        let root = RandomSource::new(self.seed, 0);
        let neuron = NeuronConfig {
            alpha_u: 0.5,
            alpha_v: 0.75,
            threshold: 1.0,
            reset: ResetMode::Hard,
        };
        let w1 = WeightMatrix::random_normal(self.hidden, self.inputs, 0.4, 0.6, &root.substream(1))?;
        let w2 = WeightMatrix::random_normal(self.outputs, self.hidden, 0.3, 0.6, &root.substream(2))?;
        let net = NetworkTopology::feedforward(vec![neuron; 2], vec![w1, w2])?;
        let mut samples = Vec::new();
        let src = root.substream(3);
        let mut draw = 0u64;
        for s in 0..self.samples {
            let frames = (0..self.steps)
                .map(|_| {
                    (0..self.inputs as u32)
                        .filter(|_| {
                            draw += 1;
                            src.uniform_at(draw) < self.input_rate
                        })
                        .collect()
                })
                .collect();
            samples.push(BinnedSample::from_frames(1, 1, self.inputs, frames, (s % self.outputs) as u32)?);
        }
        let cfg = DiffConfig {
            surrogate: SurrogateConfig {
                kind: SurrogateKind::Sigmoid,
                slope: 4.0,
                normalized: true,
                ..SurrogateConfig::default()
            },
            mode: ForwardMode::Smoothed,
            quantize: None,
            logit_scale: 1.0,
            ..DiffConfig::default()
        };
        let soel = SoelConfig {
            theta: 0.5,
            eta: 1.0,
            window: 10,
            offset: 64,
            target_spikes: 4,
            off_target_spikes: 0,
        };
        Ok(GradCheckProblem {
            net,
            samples,
            cfg,
            soel,
            alpha: 0.3,
        })
    }
}

impl GradCheckProblem {
    pub fn params(&self) -> Vec<Vec<f64>> {
        self.net.layers().iter().map(|l| l.weights.shadow().to_vec()).collect()
    }

    fn with_params(&self, params: &[Vec<f64>]) -> Result<NetworkTopology> {
        let mut net = self.net.clone();
        for (layer, p) in net.layers_mut().iter_mut().zip(params) {
            let w = &layer.weights;
            layer.weights = WeightMatrix::from_shadow(w.rows(), w.cols(), p.clone())?;
        }
        Ok(net)
    }

    /// Summed cross-entropy of all samples, no adaptation.
    pub fn record_plain(&self, params: &[Vec<f64>]) -> Result<(Tape, NodeId)> {
        forward_record(&self.with_params(params)?, &self.samples, &self.cfg, &RandomSource::new(0, 0))
    }

    /// One inner pass of SOEL on the first sample, then cross-entropy of the
    /// adapted net on the remaining samples.
    pub fn record_meta(&self, params: &[Vec<f64>]) -> Result<(Tape, NodeId)> {
        let net = self.with_params(params)?;
        let mut tape = Tape::new();
        let rounding = RandomSource::new(0, 0);
        let mut nodes = WeightNodes::register(&mut tape, &net, &self.cfg, &rounding)?;
        let mut epoch = 0;
        let (train, test) = self.samples.split_first().expect("at least two samples");
        let mut learning = InnerLearning {
            soel: &self.soel,
            alpha: self.alpha,
            label: train.label() as usize,
            epoch: &mut epoch,
            rounding,
        };
        record_sample(&mut tape, &net, &mut nodes, train, &self.cfg, Some(&mut learning))?;
        let mut loss = None;
        for s in test {
            let rec = record_sample(&mut tape, &net, &mut nodes, s, &self.cfg, None)?;
            loss = Some(add_ce(&mut tape, loss, rec.counts, s.label() as usize, &self.cfg)?);
        }
        let loss = loss.ok_or_else(|| Error::IncompleteTape("no query samples".into()))?;
        Ok((tape, loss))
    }
}

/// Runs the plain and the meta-gradient checks of `setup`.
pub fn check_smoothed_network(setup: &GradCheckSetup) -> Result<(GradCheckReport, GradCheckReport)> {
    let problem = setup.problem()?;
    let params = problem.params();
    let rng = RandomSource::new(setup.seed, 99);
    let plain = grad_check(
        |p| problem.record_plain(p),
        &params,
        setup.eps,
        setup.weights_checked,
        setup.floor,
        &rng,
    )?;
    let meta = grad_check(
        |p| problem.record_meta(p),
        &params,
        setup.eps,
        setup.weights_checked,
        setup.floor,
        &rng.substream(1),
    )?;
    Ok((plain, meta))
}
