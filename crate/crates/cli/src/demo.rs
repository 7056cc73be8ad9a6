//! Single plastic neuron regulated to a target spike count per window.

use std::fmt::Write as _;

use soel_core::plasticity::{learning_epoch_step, EpochInputs, SoelConfig, SoelState, UpdateRule};
use soel_core::rng::next_unit;
use soel_core::snn::{Arithmetic, Layer, NetworkTopology, NeuronConfig, Simulator};
use soel_core::{QuantizationScheme, RandomSource, WeightMatrix, WeightView};

#[derive(Debug, Clone, PartialEq)]
pub struct DemoConfig {
    pub inputs: usize,
    /// Poisson firing probability of each input per step.
    pub rate: f64,
    pub initial_weight: f64,
    pub neuron: NeuronConfig,
    pub soel: SoelConfig,
    pub quantize: bool,
    pub max_windows: usize,
    /// Consecutive quiet windows that count as converged.
    pub stable_windows: usize,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            inputs: 200,
            rate: 0.2,
            initial_weight: 0.0,
            neuron: NeuronConfig::default(),
            soel: SoelConfig {
                theta: 2.0,
                eta: 2.0,
                window: 20,
                offset: 64,
                target_spikes: 2,
                off_target_spikes: 0,
            },
            quantize: true,
            max_windows: 100,
            stable_windows: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemoStep {
    pub step: usize,
    pub input_spikes: usize,
    pub output_spike: bool,
    /// Mean synaptic weight (deployed view).
    pub weight: f64,
    /// Post-trace value written at the last epoch boundary.
    pub encoded_error: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoResult {
    pub trajectory: Vec<DemoStep>,
    /// Gated error of every completed window.
    pub window_errors: Vec<f64>,
    /// Spike count of every completed window.
    pub window_counts: Vec<u32>,
    /// Number of windows completed when the quiet run was first sustained.
    pub converged_after: Option<usize>,
    pub weight_writes: u64,
    /// Weight writes that happened in windows whose error was gated to zero.
    pub quiet_window_writes: u64,
}

impl DemoResult {
    pub const CSV_HEADER: &'static str = "step,input_spikes,output_spike,weight,encoded_error";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for s in &self.trajectory {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                s.step,
                s.input_spikes,
                u8::from(s.output_spike),
                s.weight,
                s.encoded_error
            );
        }
        out
    }
}

/// Drives one plastic neuron with Poisson input until the error stays below
/// `theta` for `stable_windows` windows or `max_windows` have passed.
pub fn run_single_neuron_demo(cfg: &DemoConfig, seed: u64) -> soel_core::Result<DemoResult> {
    cfg.neuron.validate()?;
    cfg.soel.validate()?;
    let scheme = QuantizationScheme::default();
    let root = RandomSource::new(seed, 0xDE);
    let mut w = WeightMatrix::from_shadow(1, cfg.inputs, vec![cfg.initial_weight; cfg.inputs])?;
    w.quantize(&scheme, &root.substream(0))?;
    let view = if cfg.quantize { WeightView::Quantized } else { WeightView::Shadow };
    let net = NetworkTopology::new(vec![Layer {
        neuron: cfg.neuron,
        weights: w,
        plastic: true,
    }])?;
    let mut sim = Simulator::new(net, view, Arithmetic::Real)?;
    let mut state = SoelState::new(1);
    let learning_rng = root.substream(1);
    let quant = cfg.quantize.then_some((&scheme, &learning_rng));
    let mut input_gen = root.substream(2).rng();

    let mut result = DemoResult {
        trajectory: Vec::new(),
        window_errors: Vec::new(),
        window_counts: Vec::new(),
        converged_after: None,
        weight_writes: 0,
        quiet_window_writes: 0,
    };
    let mut quiet_run = 0;
    let mut count = 0;
    let mut step = 0;
    while result.window_errors.len() < cfg.max_windows {
        let active: Vec<u32> = (0..cfg.inputs as u32).filter(|_| next_unit(&mut input_gen) < cfg.rate).collect();
        let fired = !sim.step(&active)?.is_empty();
        count += u32::from(fired);
        let (traces, pre, weights) = sim.plastic_parts().expect("the neuron is plastic");
        let inputs = EpochInputs {
            out_spikes: if fired { &[0] } else { &[] },
            pre_spikes: pre,
            traces,
            label: Some(0),
            blank: false,
        };
        let outcome = learning_epoch_step(&mut state, &inputs, &cfg.soel, &UpdateRule::Direct, weights, quant)?;
        let weight = match view {
            WeightView::Quantized => weights.quantized().iter().map(|&q| f64::from(q)).sum::<f64>(),
            WeightView::Shadow => weights.shadow().iter().sum::<f64>(),
        } / cfg.inputs as f64;
        if outcome.weight_writes > 0 {
            sim.refresh_layer(0);
        }
        result.trajectory.push(DemoStep {
            step,
            input_spikes: active.len(),
            output_spike: fired,
            weight,
            encoded_error: state.last_encoded[0],
        });
        step += 1;
        if !outcome.boundary {
            continue;
        }
        let e = outcome.errors[0];
        result.window_errors.push(e);
        result.window_counts.push(count);
        count = 0;
        result.weight_writes += outcome.weight_writes as u64;
        if e == 0.0 {
            result.quiet_window_writes += outcome.weight_writes as u64;
            quiet_run += 1;
            if quiet_run >= cfg.stable_windows {
                result.converged_after = Some(result.window_errors.len());
                break;
            }
        } else {
            quiet_run = 0;
        }
    }
    Ok(result)
}
