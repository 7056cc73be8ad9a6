//! Recording of network forwards, with optional in-sample SOEL adaptation,
//! onto a [`Tape`].

use soel_core::plasticity::SoelConfig;
use soel_core::quant::QuantizationScheme;
use soel_core::snn::{NetworkTopology, ResetMode};
use soel_core::{BinnedSample, RandomSource};

use crate::error::{check_shape, Result};
use crate::surrogate::SurrogateConfig;
use crate::tape::{NodeId, Tape};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    /// Heaviside spikes; the surrogate is used only in the backward pass.
    Hard,
    /// Spikes replaced by `sigma(k (v - threshold))` with the surrogate's
    /// slope, so the whole forward is differentiable.
    Smoothed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffConfig {
    pub surrogate: SurrogateConfig,
    pub mode: ForwardMode,
    /// Stops gradients through the reset term.
    pub detach_reset: bool,
    /// Treats inner-loop updates as constants (first-order MAML).
    pub first_order: bool,
    /// Logits are spike counts times this factor.
    pub logit_scale: f64,
    /// Quantize weights in the forward (straight-through backward).
    pub quantize: Option<QuantizationScheme>,
}

impl Default for DiffConfig {
    fn default() -> Self {
        Self {
            surrogate: SurrogateConfig::default(),
            mode: ForwardMode::Hard,
            detach_reset: false,
            first_order: false,
            logit_scale: 0.5,
            quantize: Some(QuantizationScheme::default()),
        }
    }
}

/// Weight nodes of every layer.
///
/// `params` are the differentiable shadow leaves, `effective` the (possibly
/// quantized) values the forward uses and `accum` the full-precision
/// accumulator that in-sample updates add to. With quantization the
/// accumulator starts from the quantized weights, as on a chip that only
/// stores the integer image.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightNodes {
    pub params: Vec<NodeId>,
    pub accum: Vec<NodeId>,
    pub effective: Vec<NodeId>,
}

impl WeightNodes {
    /// Registers layer `k`'s shadow weights as parameter `k`. With
    /// quantization, layer `k` is rounded with `rounding.substream(k)`.
    pub fn register(tape: &mut Tape, net: &NetworkTopology, cfg: &DiffConfig, rounding: &RandomSource) -> Result<Self> {
        let mut params = Vec::new();
        let mut effective = Vec::new();
        for (k, layer) in net.layers().iter().enumerate() {
            let w = &layer.weights;
            let leaf = tape.leaf(k, w.rows(), w.cols(), w.shadow().to_vec())?;
            params.push(leaf);
            effective.push(match cfg.quantize {
                Some(scheme) => tape.quantize(leaf, scheme, rounding.substream(k as u64))?,
                None => leaf,
            });
        }
        Ok(Self {
            params,
            accum: effective.clone(),
            effective,
        })
    }
}

/// In-sample plasticity applied while recording.
#[derive(Debug)]
pub struct InnerLearning<'a> {
    pub soel: &'a SoelConfig,
    /// Inner-loop rate; the applied update is `alpha * eta * e * p`.
    pub alpha: f64,
    /// Output index that receives `target_spikes`.
    pub label: usize,
    /// Running count of window boundaries; selects the rounding substream
    /// of each re-quantization.
    pub epoch: &'a mut u64,
    pub rounding: RandomSource,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRecord {
    /// Output spike counts over the whole sample.
    pub counts: NodeId,
    /// Rows that received at least one nonzero weight change.
    pub row_updates: usize,
}

/// Records one sample from zero state. Weights of the plastic layer in
/// `nodes` advance if `learning` is given.
pub fn record_sample(
    tape: &mut Tape,
    net: &NetworkTopology,
    nodes: &mut WeightNodes,
    sample: &BinnedSample,
    cfg: &DiffConfig,
    mut learning: Option<&mut InnerLearning<'_>>,
) -> Result<SampleRecord> {
    check_shape("sample inputs", net.inputs(), sample.inputs())?;
    let layers = net.layers();
    let depth = layers.len();
    check_shape("weight nodes", depth, nodes.effective.len())?;
    let plastic = match &learning {
        Some(l) => {
            if l.label >= net.outputs() {
                return Err(soel_core::Error::LabelOutOfRange {
                    label: l.label,
                    outputs: net.outputs(),
                }
                .into());
            }
            if net.plastic_layer() != Some(depth - 1) {
                return Err(soel_core::Error::Config("inner-loop learning requires the output layer to be plastic".into()).into());
            }
            Some(depth - 1)
        }
        None => None,
    };

    let mut u: Vec<NodeId> = layers.iter().map(|l| tape.constant(vec![0.0; l.outputs()])).collect();
    let mut v = u.clone();
    let mut trace = plastic.map(|k| {
        let z = tape.constant(vec![0.0; layers[k].inputs()]);
        (z, z)
    });
    let mut total: Option<NodeId> = None;
    let mut window: Option<NodeId> = None;
    let mut row_updates = 0;

    for t in 0..sample.steps() {
        let active = sample.active(t);
        let mut prev: Option<NodeId> = None;
        for (k, layer) in layers.iter().enumerate() {
            let n = &layer.neuron;
            let cols = layer.inputs();
            if plastic == Some(k) {
                let x = match prev {
                    Some(s) => s,
                    None => {
                        let mut dense = vec![0.0; cols];
                        for &j in active {
                            dense[j as usize] = 1.0;
                        }
                        tape.constant(dense)
                    }
                };
                let (q, p) = trace.expect("trace exists for the plastic layer");
                let q = tape.lin(n.alpha_u, q, 1.0 - n.alpha_u, x)?;
                let p = tape.lin(n.alpha_v, p, 1.0 - n.alpha_v, q)?;
                trace = Some((q, p));
            }
            let drive = match prev {
                None => tape.sparse_matvec(nodes.effective[k], cols, active)?,
                Some(s) => tape.matvec(nodes.effective[k], s)?,
            };
            u[k] = tape.lin(n.alpha_u, u[k], 1.0 - n.alpha_u, drive)?;
            let vv = tape.lin(n.alpha_v, v[k], 1.0 - n.alpha_v, u[k])?;
            let s = match cfg.mode {
                ForwardMode::Hard => tape.spike(vv, n.threshold, cfg.surrogate)?,
                ForwardMode::Smoothed => tape.soft_spike(vv, n.threshold, cfg.surrogate.abs_slope(n.threshold))?,
            };
            let sr = if cfg.detach_reset { tape.detach(s) } else { s };
            v[k] = match n.reset {
                ResetMode::Hard => tape.hard_reset(vv, sr, cfg.detach_reset)?,
                ResetMode::Soft => tape.lin(1.0, vv, -n.threshold, sr)?,
            };
            prev = Some(s);
        }
        let out = prev.expect("network has at least one layer");
        total = Some(match total {
            Some(c) => tape.add(c, out)?,
            None => out,
        });

        let Some(l) = learning.as_deref_mut() else { continue };
        window = Some(match window {
            Some(c) => tape.add(c, out)?,
            None => out,
        });
        if (t + 1) % l.soel.window != 0 {
            continue;
        }
        let k = depth - 1;
        let epoch = *l.epoch;
        *l.epoch += 1;
        let counts = window.take().expect("window has at least one step");
        let targets: Vec<f64> = (0..net.outputs())
            .map(|i| {
                f64::from(if i == l.label {
                    l.soel.target_spikes
                } else {
                    l.soel.off_target_spikes
                })
            })
            .collect();
        let e = tape.affine(counts, -1.0, targets)?;
        let mask: Vec<bool> = tape.value(e).iter().map(|&x| x != 0.0 && x.abs() >= l.soel.theta).collect();
        if !mask.contains(&true) {
            continue;
        }
        let (_, p) = trace.expect("trace exists for the plastic layer");
        let (e, p) = if cfg.first_order {
            (tape.detach(e), tape.detach(p))
        } else {
            (e, p)
        };
        let eg = tape.mask(e, mask)?;
        let delta = tape.outer(eg, p, l.alpha * l.soel.eta)?;
        let cols = layers[k].inputs();
        row_updates += tape.value(delta).chunks(cols).filter(|r| r.iter().any(|&d| d != 0.0)).count();
        let accum = tape.add(nodes.accum[k], delta)?;
        nodes.effective[k] = match cfg.quantize {
            Some(scheme) => tape.requantize(
                accum,
                nodes.effective[k],
                delta,
                layers[k].inputs(),
                scheme,
                l.rounding.substream(epoch),
            )?,
            None => accum,
        };
        nodes.accum[k] = accum;
    }
    Ok(SampleRecord {
        counts: total.expect("sample has at least one step"),
        row_updates,
    })
}

/// Adds `-log softmax(logit_scale * counts)[label]` to `acc`.
pub fn add_ce(tape: &mut Tape, acc: Option<NodeId>, counts: NodeId, label: usize, cfg: &DiffConfig) -> Result<NodeId> {
    let l = tape.softmax_ce(counts, cfg.logit_scale, label)?;
    Ok(match acc {
        Some(a) => tape.add(a, l)?,
        None => l,
    })
}

/// Records the plain (non-adapting) forward of `samples` and their summed
/// cross-entropy, each sample's label being its output index.
pub fn forward_record(
    net: &NetworkTopology,
    samples: &[BinnedSample],
    cfg: &DiffConfig,
    rounding: &RandomSource,
) -> Result<(Tape, NodeId)> {
    let mut tape = Tape::new();
    let mut nodes = WeightNodes::register(&mut tape, net, cfg, rounding)?;
    let mut loss = None;
    for s in samples {
        let rec = record_sample(&mut tape, net, &mut nodes, s, cfg, None)?;
        loss = Some(add_ce(&mut tape, loss, rec.counts, s.label() as usize, cfg)?);
    }
    let loss = match loss {
        Some(l) => l,
        None => tape.constant(vec![0.0]),
    };
    Ok((tape, loss))
}
