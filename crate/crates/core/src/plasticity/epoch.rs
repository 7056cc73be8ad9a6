//! The learning-epoch program run by the embedded processor.
//!
//! Every step the output spikes are counted. At the end of each window of
//! `cfg.window` steps:
//!
//! * during blank time, `0` is written to every post-trace and nothing learns;
//! * without a label the network only infers;
//! * otherwise each output neuron's gated error is offset-encoded into its
//!   post-trace and the plastic rows are updated from the pre-synaptic traces.
//!
//! Deltas accumulate on the shadow view; only the touched entries are
//! stochastically re-rounded into the quantized view.

use crate::error::{Error, Result};
use crate::plasticity::rule::{Bindings, SumOfProductsRule};
use crate::plasticity::soel::{compute_window_error, encode_posttrace, soel_update_into, SoelConfig};
use crate::quant::QuantizationScheme;
use crate::rng::{next_unit, RandomSource};
use crate::snn::TraceState;
use crate::weights::WeightMatrix;

/// How a row update is computed from traces and the encoded error.
#[derive(Debug, Clone, PartialEq)]
pub enum UpdateRule {
    /// Hand-written `eta * p * (y - c)`.
    Direct,
    /// A programmable rule evaluated per synapse.
    SumOfProducts(SumOfProductsRule),
}

/// Running counters of the learning program.
#[derive(Debug, Clone, PartialEq)]
pub struct SoelState {
    pub spike_counter: Vec<u32>,
    pub steps_into_window: usize,
    pub last_encoded: Vec<u32>,
    /// Number of epoch boundaries seen so far.
    pub epochs: u64,
    /// Total synaptic weight writes so far.
    pub weight_writes: u64,
    /// Total row updates (neurons whose error passed the gate) so far.
    pub row_updates: u64,
}

impl SoelState {
    pub fn new(outputs: usize) -> Self {
        Self {
            spike_counter: vec![0; outputs],
            steps_into_window: 0,
            last_encoded: vec![0; outputs],
            epochs: 0,
            weight_writes: 0,
            row_updates: 0,
        }
    }

    /// Clears the window counters (used between samples).
    pub fn reset_window(&mut self) {
        self.spike_counter.fill(0);
        self.steps_into_window = 0;
    }
}

/// Per-step inputs of [`learning_epoch_step`].
#[derive(Debug, Clone, Copy)]
pub struct EpochInputs<'a> {
    /// Output neurons that spiked this step.
    pub out_spikes: &'a [u32],
    /// Pre-synaptic neurons of the plastic layer that spiked this step.
    pub pre_spikes: &'a [u32],
    /// Pre-synaptic traces of the plastic layer after this step.
    pub traces: &'a TraceState,
    pub label: Option<usize>,
    pub blank: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpochOutcome {
    /// True if this step closed a learning window.
    pub boundary: bool,
    /// Gated errors per output neuron at the boundary (empty otherwise).
    pub errors: Vec<f64>,
    pub updated_rows: Vec<usize>,
    pub weight_writes: usize,
}

/// Advances the learning program by one simulation step.
///
/// `quant` selects deployment mode: touched weights are re-rounded onto the
/// grid with draws from a per-epoch substream. Without it only the shadow
/// view changes.
pub fn learning_epoch_step(
    state: &mut SoelState,
    inputs: &EpochInputs<'_>,
    cfg: &SoelConfig,
    rule: &UpdateRule,
    w: &mut WeightMatrix,
    quant: Option<(&QuantizationScheme, &RandomSource)>,
) -> Result<EpochOutcome> {
    let outputs = state.spike_counter.len();
    if w.rows() != outputs {
        return Err(Error::DimensionMismatch {
            context: "plastic layer rows",
            expected: outputs,
            got: w.rows(),
        });
    }
    if inputs.traces.len() != w.cols() {
        return Err(Error::DimensionMismatch {
            context: "plastic layer traces",
            expected: w.cols(),
            got: inputs.traces.len(),
        });
    }
    if let Some(label) = inputs.label {
        if label >= outputs {
            return Err(Error::LabelOutOfRange { label, outputs });
        }
    }
    for &i in inputs.out_spikes {
        state.spike_counter[i as usize] += 1;
    }
    state.steps_into_window += 1;
    if state.steps_into_window < cfg.window {
        return Ok(EpochOutcome::default());
    }

    let epoch = state.epochs;
    state.epochs += 1;
    let mut outcome = EpochOutcome {
        boundary: true,
        ..EpochOutcome::default()
    };
    match (inputs.blank, inputs.label) {
        (true, _) | (false, None) => {
            state.last_encoded.fill(0);
        }
        (false, Some(label)) => {
            let cols = w.cols();
            let mut dw = vec![0.0; cols];
            let mut pre_spiking = vec![false; cols];
            for &j in inputs.pre_spikes {
                if let Some(flag) = pre_spiking.get_mut(j as usize) {
                    *flag = true;
                }
            }
            let epoch_rng = quant.map(|(_, rng)| rng.substream(epoch));
            for i in 0..outputs {
                let target = if i == label { cfg.target_spikes } else { cfg.off_target_spikes };
                let e = compute_window_error(target, state.spike_counter[i], cfg.theta);
                let y = encode_posttrace(e, cfg.offset)?;
                state.last_encoded[i] = y;
                outcome.errors.push(e);
                match rule {
                    UpdateRule::Direct => {
                        if y == 0 {
                            continue;
                        }
                        soel_update_into(&mut dw, &inputs.traces.p, y, cfg.eta, cfg.offset);
                    }
                    UpdateRule::SumOfProducts(r) => {
                        for j in 0..cols {
                            let ctx = Bindings {
                                pre_trace: Some(inputs.traces.p[j]),
                                post_trace: Some(f64::from(y)),
                                pre_spike: Some(if pre_spiking[j] { 1.0 } else { 0.0 }),
                                post_spike: Some(if y != 0 { 1.0 } else { 0.0 }),
                            };
                            dw[j] = r.eval(&ctx)?;
                        }
                    }
                }
                let writes = apply_row(w, i, &dw, quant.map(|(s, _)| s), epoch_rng.as_ref())?;
                if writes > 0 {
                    outcome.updated_rows.push(i);
                    outcome.weight_writes += writes;
                }
            }
        }
    }
    state.row_updates += outcome.updated_rows.len() as u64;
    state.weight_writes += outcome.weight_writes as u64;
    state.reset_window();
    Ok(outcome)
}

fn apply_row(
    w: &mut WeightMatrix,
    row: usize,
    dw: &[f64],
    scheme: Option<&QuantizationScheme>,
    rng: Option<&RandomSource>,
) -> Result<usize> {
    let cols = w.cols();
    let base = row * cols;
    let mut writes = 0;
    for (j, &d) in dw.iter().enumerate() {
        if d != 0.0 {
            w.shadow_mut()[base + j] += d;
            writes += 1;
        }
    }
    if writes == 0 {
        return Ok(0);
    }
    if let (Some(scheme), Some(rng)) = (scheme, rng) {
        let mut gen = rng.rng_at((base) as u64);
        for (j, &d) in dw.iter().enumerate() {
            let u = next_unit(&mut gen);
            if d != 0.0 {
                let x = w.shadow()[base + j];
                w.quantized_mut()[base + j] = scheme.round_with(x, u)?;
            }
        }
    }
    Ok(writes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs<'a>(out: &'a [u32], tr: &'a TraceState, label: Option<usize>, blank: bool) -> EpochInputs<'a> {
        EpochInputs {
            out_spikes: out,
            pre_spikes: &[],
            traces: tr,
            label,
            blank,
        }
    }

    fn cfg(window: usize) -> SoelConfig {
        SoelConfig {
            theta: 1.0,
            eta: 2.0,
            window,
            offset: 64,
            target_spikes: 10,
            off_target_spikes: 0,
        }
    }

    #[test]
    fn mid_window_only_accumulates() {
        let mut st = SoelState::new(2);
        let tr = TraceState {
            q: vec![1.0; 3],
            p: vec![1.0; 3],
        };
        let mut w = WeightMatrix::zeros(2, 3);
        let out = learning_epoch_step(
            &mut st,
            &inputs(&[1], &tr, Some(0), false),
            &cfg(20),
            &UpdateRule::Direct,
            &mut w,
            None,
        )
        .unwrap();
        assert!(!out.boundary);
        assert_eq!(st.spike_counter, vec![0, 1]);
        assert_eq!(st.steps_into_window, 1);
        assert_eq!(w, WeightMatrix::zeros(2, 3));
    }

    #[test]
    fn blank_window_writes_zero_post_traces() {
        let mut st = SoelState::new(2);
        st.last_encoded = vec![70, 60];
        let tr = TraceState {
            q: vec![1.0; 3],
            p: vec![0.5; 3],
        };
        let mut w = WeightMatrix::zeros(2, 3);
        for _ in 0..4 {
            learning_epoch_step(
                &mut st,
                &inputs(&[], &tr, Some(0), true),
                &cfg(4),
                &UpdateRule::Direct,
                &mut w,
                None,
            )
            .unwrap();
        }
        assert_eq!(st.last_encoded, vec![0, 0]);
        assert_eq!(w, WeightMatrix::zeros(2, 3));
        assert_eq!(st.weight_writes, 0);
    }

    #[test]
    fn unlabeled_window_only_infers() {
        let mut st = SoelState::new(2);
        let tr = TraceState {
            q: vec![1.0; 3],
            p: vec![0.5; 3],
        };
        let mut w = WeightMatrix::zeros(2, 3);
        let out = learning_epoch_step(&mut st, &inputs(&[0], &tr, None, false), &cfg(1), &UpdateRule::Direct, &mut w, None).unwrap();
        assert!(out.boundary);
        assert!(out.updated_rows.is_empty());
        assert_eq!(st.spike_counter, vec![0, 0]);
    }

    #[test]
    fn silent_labeled_neuron_potentiates_its_row_only() {
        let mut st = SoelState::new(3);
        let tr = TraceState {
            q: vec![0.0; 4],
            p: vec![0.25, 0.0, 0.5, 0.1],
        };
        let mut w = WeightMatrix::zeros(3, 4);
        let mut last = EpochOutcome::default();
        for _ in 0..20 {
            last = learning_epoch_step(
                &mut st,
                &inputs(&[], &tr, Some(1), false),
                &cfg(20),
                &UpdateRule::Direct,
                &mut w,
                None,
            )
            .unwrap();
        }
        assert!(last.boundary);
        assert_eq!(last.updated_rows, vec![1]);
        assert_eq!(st.last_encoded, vec![0, 74, 0]);
        assert_eq!(w.shadow_row(0), &[0.0; 4]);
        assert_eq!(w.shadow_row(2), &[0.0; 4]);
        // dw = eta * p * 10
        assert_eq!(w.shadow_row(1), &[5.0, 0.0, 10.0, 2.0]);
        // silent pre-neuron is not written
        assert_eq!(last.weight_writes, 3);
    }

    #[test]
    fn quantized_writes_stay_on_grid() {
        let scheme = QuantizationScheme::default();
        let mut st = SoelState::new(1);
        let tr = TraceState {
            q: vec![0.0; 3],
            p: vec![0.37, 0.9, 0.01],
        };
        let mut w = WeightMatrix::from_quantized(1, 3, vec![250, -2, 0]).unwrap();
        let rng = RandomSource::new(4, 0);
        for _ in 0..20 {
            learning_epoch_step(
                &mut st,
                &inputs(&[], &tr, Some(0), false),
                &cfg(1),
                &UpdateRule::Direct,
                &mut w,
                Some((&scheme, &rng)),
            )
            .unwrap();
        }
        assert!(w.quantized_on_grid(&scheme));
        assert_eq!(w.quantized()[0], 254);
    }

    #[test]
    fn label_out_of_range() {
        let mut st = SoelState::new(2);
        let tr = TraceState::new(1);
        let mut w = WeightMatrix::zeros(2, 1);
        let err = learning_epoch_step(
            &mut st,
            &inputs(&[], &tr, Some(2), false),
            &cfg(5),
            &UpdateRule::Direct,
            &mut w,
            None,
        );
        assert_eq!(err, Err(Error::LabelOutOfRange { label: 2, outputs: 2 }));
    }

    #[test]
    fn rule_engine_matches_direct_update() {
        let tr = TraceState {
            q: vec![0.0; 5],
            p: vec![0.3, 0.0, 0.71, 0.05, 0.9],
        };
        let c = cfg(3);
        let rules = [
            UpdateRule::Direct,
            UpdateRule::SumOfProducts(SumOfProductsRule::soel(c.eta, c.offset)),
        ];
        let mut results = Vec::new();
        for rule in &rules {
            let mut st = SoelState::new(3);
            let mut w = WeightMatrix::zeros(3, 5);
            for t in 0..30 {
                let out: Vec<u32> = if t % 2 == 0 { vec![0, 2] } else { vec![2] };
                learning_epoch_step(&mut st, &inputs(&out, &tr, Some(t % 3), false), &c, rule, &mut w, None).unwrap();
            }
            results.push((w, st.weight_writes));
        }
        assert_eq!(results[0], results[1]);
    }
}
