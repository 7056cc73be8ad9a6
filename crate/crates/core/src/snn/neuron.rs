use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ResetMode {
    /// Membrane potential is set to zero after a spike.
    Hard,
    /// The threshold is subtracted from the membrane potential after a spike.
    Soft,
}

impl ResetMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ResetMode::Hard => "hard",
            ResetMode::Soft => "soft",
        }
    }
}

impl std::str::FromStr for ResetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(ResetMode::Hard),
            "soft" => Ok(ResetMode::Soft),
            other => Err(Error::Config(format!("unknown reset mode `{other}`"))),
        }
    }
}

/// Per-layer neuron parameters. Decays are per 1 ms step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronConfig {
    pub alpha_u: f64,
    pub alpha_v: f64,
    pub threshold: f64,
    pub reset: ResetMode,
}

impl Default for NeuronConfig {
    fn default() -> Self {
        Self {
            alpha_u: 0.75,
            alpha_v: 0.875,
            threshold: 64.0,
            reset: ResetMode::Hard,
        }
    }
}

impl NeuronConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha_u) {
            return Err(Error::Config(format!("alpha_u must be in [0, 1), got {}", self.alpha_u)));
        }
        if !(0.0..1.0).contains(&self.alpha_v) {
            return Err(Error::Config(format!("alpha_v must be in [0, 1), got {}", self.alpha_v)));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::Config(format!("threshold must be positive, got {}", self.threshold)));
        }
        Ok(())
    }
}

/// Dynamic state of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub s: Vec<bool>,
}

impl LayerState {
    pub fn new(neurons: usize) -> Self {
        Self {
            u: vec![0.0; neurons],
            v: vec![0.0; neurons],
            s: vec![false; neurons],
        }
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn reset(&mut self) {
        self.u.fill(0.0);
        self.v.fill(0.0);
        self.s.fill(false);
    }

    /// Indices of neurons that spiked in the last step.
    pub fn spiking(&self) -> Vec<u32> {
        self.s.iter().enumerate().filter(|(_, &s)| s).map(|(i, _)| i as u32).collect()
    }
}

/// Advances `state` by one step given the active pre-synaptic inputs and a
/// row-major `(neurons, cols)` weight slice. Returns the indices of neurons
/// that spiked.
pub fn step_cuba_layer(
    state: &mut LayerState,
    active_inputs: &[u32],
    weights: &[f64],
    cols: usize,
    cfg: &NeuronConfig,
) -> Result<Vec<u32>> {
    let rows = state.len();
    check_dim("layer weights", rows * cols, weights.len())?;
    if let Some(&j) = active_inputs.iter().max() {
        if j as usize >= cols {
            return Err(Error::DimensionMismatch {
                context: "layer input spikes",
                expected: cols,
                got: j as usize + 1,
            });
        }
    }
    let gain_u = 1.0 - cfg.alpha_u;
    let gain_v = 1.0 - cfg.alpha_v;
    let mut spikes = Vec::new();
    for i in 0..rows {
        let row = &weights[i * cols..(i + 1) * cols];
        let mut drive = 0.0;
        for &j in active_inputs {
            drive += row[j as usize];
        }
        let u = cfg.alpha_u * state.u[i] + gain_u * drive;
        let v = cfg.alpha_v * state.v[i] + gain_v * u;
        let fired = v >= cfg.threshold;
        state.u[i] = u;
        state.s[i] = fired;
        state.v[i] = if fired {
            spikes.push(i as u32);
            match cfg.reset {
                ResetMode::Hard => 0.0,
                ResetMode::Soft => v - cfg.threshold,
            }
        } else {
            v
        };
    }
    Ok(spikes)
}
