use crate::error::{check_dim, Error, Result};
use crate::sample::BinnedSample;
use crate::snn::{step_cuba_layer, update_presyn_trace, FixedLayerState, FixedPoint, LayerState, NeuronConfig, TraceState};
use crate::weights::{WeightMatrix, WeightView};

/// One fully connected layer: weights from the previous layer, the neuron
/// model of its post-synaptic population, and whether it is plastic.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub neuron: NeuronConfig,
    pub weights: WeightMatrix,
    pub plastic: bool,
}

impl Layer {
    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }
}

/// A feed-forward stack of CUBA-LIF layers.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    layers: Vec<Layer>,
}

impl NetworkTopology {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            check_dim("adjacent layer sizes", pair[0].outputs(), pair[1].inputs())?;
        }
        for layer in &layers {
            layer.neuron.validate()?;
        }
        Ok(Self { layers })
    }

    /// Layers with the given weights where only the final layer is plastic.
    pub fn feedforward(neurons: Vec<NeuronConfig>, weights: Vec<WeightMatrix>) -> Result<Self> {
        check_dim("neuron configs per layer", weights.len(), neurons.len())?;
        let n = weights.len();
        let layers = neurons
            .into_iter()
            .zip(weights)
            .enumerate()
            .map(|(k, (neuron, weights))| Layer {
                neuron,
                weights,
                plastic: k + 1 == n,
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn outputs(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    /// `[inputs, layer_1, ..., layer_n]`.
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.inputs())
            .chain(self.layers.iter().map(Layer::outputs))
            .collect()
    }

    /// Index of the last plastic layer, if any.
    pub fn plastic_layer(&self) -> Option<usize> {
        self.layers.iter().rposition(|l| l.plastic)
    }
}

/// How neuron state is represented during simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arithmetic {
    Real,
    Fixed(FixedPoint),
}

/// Stateful step-by-step simulator. Owns its network so that plasticity can
/// modify weights between steps; call [`Simulator::refresh_layer`] after any
/// weight write.
#[derive(Debug, Clone)]
pub struct Simulator {
    net: NetworkTopology,
    view: WeightView,
    arithmetic: Arithmetic,
    dense: Vec<Vec<f64>>,
    real: Vec<LayerState>,
    fixed: Vec<FixedLayerState>,
    spikes: Vec<Vec<u32>>,
    trace: Option<(usize, TraceState)>,
}

impl Simulator {
    pub fn new(net: NetworkTopology, view: WeightView, arithmetic: Arithmetic) -> Result<Self> {
        if matches!(arithmetic, Arithmetic::Fixed(_)) && view == WeightView::Shadow {
            return Err(Error::Config("integer arithmetic requires the quantized weight view".into()));
        }
        let dense = match arithmetic {
            Arithmetic::Real => net.layers.iter().map(|l| l.weights.dense(view)).collect(),
            Arithmetic::Fixed(_) => Vec::new(),
        };
        let real = net.layers.iter().map(|l| LayerState::new(l.outputs())).collect();
        let fixed = match arithmetic {
            Arithmetic::Real => Vec::new(),
            Arithmetic::Fixed(fp) => net
                .layers
                .iter()
                .map(|l| FixedLayerState::new(l.outputs(), &l.neuron, fp))
                .collect::<Result<_>>()?,
        };
        let trace = net.plastic_layer().map(|k| (k, TraceState::new(net.layers[k].inputs())));
        let spikes = vec![Vec::new(); net.layers.len()];
        Ok(Self {
            net,
            view,
            arithmetic,
            dense,
            real,
            fixed,
            spikes,
            trace,
        })
    }

    pub fn network(&self) -> &NetworkTopology {
        &self.net
    }

    pub fn into_network(self) -> NetworkTopology {
        self.net
    }

    pub fn view(&self) -> WeightView {
        self.view
    }

    /// Mutable weights of `layer`; the caller must refresh afterwards.
    pub fn weights_mut(&mut self, layer: usize) -> &mut WeightMatrix {
        &mut self.net.layers[layer].weights
    }

    pub fn refresh_layer(&mut self, layer: usize) {
        if self.arithmetic == Arithmetic::Real {
            self.dense[layer] = self.net.layers[layer].weights.dense(self.view);
        }
    }

    /// Zeroes all neuron state and traces.
    pub fn reset_state(&mut self) {
        self.real.iter_mut().for_each(LayerState::reset);
        self.fixed.iter_mut().for_each(FixedLayerState::reset);
        self.spikes.iter_mut().for_each(Vec::clear);
        if let Some((_, tr)) = &mut self.trace {
            tr.reset();
        }
    }

    /// Pre-synaptic traces of the plastic layer.
    pub fn trace(&self) -> Option<&TraceState> {
        self.trace.as_ref().map(|(_, t)| t)
    }

    pub fn trace_layer(&self) -> Option<usize> {
        self.trace.as_ref().map(|(k, _)| *k)
    }

    /// Spikes emitted by `layer` in the last step.
    pub fn layer_spikes(&self, layer: usize) -> &[u32] {
        &self.spikes[layer]
    }

    /// Split borrow of the plastic layer: its pre-synaptic traces, the input
    /// spikes it saw in the last step and its weights. Refresh the layer after
    /// writing the weights.
    pub fn plastic_parts(&mut self) -> Option<(&TraceState, &[u32], &mut WeightMatrix)> {
        let (k, tr) = self.trace.as_ref()?;
        let pre: &[u32] = if *k == 0 { &[] } else { &self.spikes[*k - 1] };
        Some((tr, pre, &mut self.net.layers[*k].weights))
    }

    /// Input spikes seen by `layer` in the last step (`layer == 0` is not
    /// tracked and returns an empty slice).
    pub fn presyn_spikes(&self, layer: usize) -> &[u32] {
        if layer == 0 {
            &[]
        } else {
            &self.spikes[layer - 1]
        }
    }

    /// Advances one 1 ms frame through all layers and returns the output
    /// layer's spikes.
    pub fn step(&mut self, input: &[u32]) -> Result<&[u32]> {
        let n = self.net.layers.len();
        for k in 0..n {
            let layer = &self.net.layers[k];
            let cols = layer.inputs();
            let pre: &[u32] = if k == 0 { input } else { &self.spikes[k - 1] };
            if let Some((tk, tr)) = &mut self.trace {
                if *tk == k {
                    update_presyn_trace(tr, pre, layer.neuron.alpha_u, layer.neuron.alpha_v)?;
                }
            }
            let out = match self.arithmetic {
                Arithmetic::Real => step_cuba_layer(&mut self.real[k], pre, &self.dense[k], cols, &layer.neuron)?,
                Arithmetic::Fixed(_) => self.fixed[k].step(pre, layer.weights.quantized(), cols)?,
            };
            self.spikes[k] = out;
        }
        Ok(&self.spikes[n - 1])
    }
}

/// Output of [`run_network`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkRecord {
    /// Output-layer spike indices for every step.
    pub output_spikes: Vec<Vec<u32>>,
    /// Output spike counts per completed or partial window.
    pub window_counts: Vec<Vec<u32>>,
    /// Output spike counts over the whole sample.
    pub total_counts: Vec<u32>,
    /// Plastic-layer pre-synaptic traces at each window boundary.
    pub trace_snapshots: Vec<TraceState>,
    /// Plastic-layer pre-synaptic traces after the last step.
    pub final_trace: Option<TraceState>,
}

/// Runs `sample` through a fresh copy of `net` from zero state.
pub fn run_network(net: &NetworkTopology, sample: &BinnedSample, window: usize, view: WeightView) -> Result<NetworkRecord> {
    check_dim("sample inputs", net.inputs(), sample.inputs())?;
    if sample.steps() == 0 {
        return Err(Error::Config("sample has no time steps".into()));
    }
    if window == 0 {
        return Err(Error::Config("window must be at least one step".into()));
    }
    let outputs = net.outputs();
    let mut sim = Simulator::new(net.clone(), view, Arithmetic::Real)?;
    let mut record = NetworkRecord {
        output_spikes: Vec::with_capacity(sample.steps()),
        window_counts: Vec::new(),
        total_counts: vec![0; outputs],
        trace_snapshots: Vec::new(),
        final_trace: None,
    };
    let mut counts = vec![0u32; outputs];
    for t in 0..sample.steps() {
        let out = sim.step(sample.active(t))?.to_vec();
        for &i in &out {
            counts[i as usize] += 1;
            record.total_counts[i as usize] += 1;
        }
        record.output_spikes.push(out);
        let boundary = (t + 1) % window == 0;
        if boundary || t + 1 == sample.steps() {
            record.window_counts.push(std::mem::replace(&mut counts, vec![0; outputs]));
        }
        if boundary {
            if let Some(tr) = sim.trace() {
                record.trace_snapshots.push(tr.clone());
            }
        }
    }
    record.final_trace = sim.trace().cloned();
    Ok(record)
}
