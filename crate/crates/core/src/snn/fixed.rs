//! Integer neuron-state arithmetic.
//!
//! Decays restricted to `alpha = 1 - 2^-k` become `x - (x >> k)`, and input
//! gains `(1 - alpha)` become `>> k`. States carry `frac_bits` fractional bits.

use crate::error::{check_dim, Error, Result};
use crate::snn::{NeuronConfig, ResetMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedPoint {
    pub frac_bits: u32,
}

impl Default for FixedPoint {
    fn default() -> Self {
        Self { frac_bits: 12 }
    }
}

impl FixedPoint {
    /// Shift `k` such that `alpha == 1 - 2^-k` exactly (`alpha == 0` gives 0).
    pub fn decay_shift(alpha: f64) -> Result<u32> {
        if alpha == 0.0 {
            return Ok(0);
        }
        for k in 1..=30u32 {
            if 1.0 - alpha == (-(k as f64)).exp2() {
                return Ok(k);
            }
        }
        Err(Error::Config(format!(
            "decay {alpha} is not of the form 1 - 2^-k and cannot be run in integer mode"
        )))
    }
}

/// Integer-mode counterpart of [`crate::snn::LayerState`].
#[derive(Debug, Clone, PartialEq)]
pub struct FixedLayerState {
    pub u: Vec<i64>,
    pub v: Vec<i64>,
    pub s: Vec<bool>,
    shift_u: u32,
    shift_v: u32,
    threshold: i64,
    reset: ResetMode,
    frac_bits: u32,
}

impl FixedLayerState {
    pub fn new(neurons: usize, cfg: &NeuronConfig, fp: FixedPoint) -> Result<Self> {
        cfg.validate()?;
        if fp.frac_bits > 24 {
            return Err(Error::Config(format!("too many fractional bits: {}", fp.frac_bits)));
        }
        Ok(Self {
            u: vec![0; neurons],
            v: vec![0; neurons],
            s: vec![false; neurons],
            shift_u: FixedPoint::decay_shift(cfg.alpha_u)?,
            shift_v: FixedPoint::decay_shift(cfg.alpha_v)?,
            threshold: (cfg.threshold * (1u64 << fp.frac_bits) as f64).round() as i64,
            reset: cfg.reset,
            frac_bits: fp.frac_bits,
        })
    }

    pub fn reset(&mut self) {
        self.u.fill(0);
        self.v.fill(0);
        self.s.fill(false);
    }

    /// Membrane potential of neuron `i` in real units.
    pub fn potential(&self, i: usize) -> f64 {
        self.v[i] as f64 / (1u64 << self.frac_bits) as f64
    }

    /// One step with integer weights; returns spiking neuron indices.
    pub fn step(&mut self, active_inputs: &[u32], weights: &[i16], cols: usize) -> Result<Vec<u32>> {
        let rows = self.v.len();
        check_dim("layer weights", rows * cols, weights.len())?;
        if let Some(&j) = active_inputs.iter().max() {
            check_dim("layer input spikes", cols, (j as usize + 1).max(cols))?;
        }
        let mut spikes = Vec::new();
        for i in 0..rows {
            let row = &weights[i * cols..(i + 1) * cols];
            let drive: i64 = active_inputs.iter().map(|&j| i64::from(row[j as usize])).sum();
            let u = self.u[i] - (self.u[i] >> self.shift_u) + ((drive << self.frac_bits) >> self.shift_u);
            let v = self.v[i] - (self.v[i] >> self.shift_v) + (u >> self.shift_v);
            let fired = v >= self.threshold;
            self.u[i] = u;
            self.s[i] = fired;
            self.v[i] = if fired {
                spikes.push(i as u32);
                match self.reset {
                    ResetMode::Hard => 0,
                    ResetMode::Soft => v - self.threshold,
                }
            } else {
                v
            };
        }
        Ok(spikes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snn::{step_cuba_layer, LayerState};
    use rand::Rng;

    #[test]
    fn decay_shift_detection() {
        assert_eq!(FixedPoint::decay_shift(0.75).unwrap(), 2);
        assert_eq!(FixedPoint::decay_shift(0.875).unwrap(), 3);
        assert_eq!(FixedPoint::decay_shift(0.0).unwrap(), 0);
        assert!(FixedPoint::decay_shift(0.8).is_err());
    }

    #[test]
    fn instant_dynamics_match_real_mode_exactly() {
        let cfg = NeuronConfig {
            alpha_u: 0.0,
            alpha_v: 0.0,
            threshold: 10.0,
            reset: ResetMode::Hard,
        };
        let mut st = FixedLayerState::new(1, &cfg, FixedPoint::default()).unwrap();
        assert_eq!(st.step(&[0], &[20], 1).unwrap(), vec![0]);
        assert_eq!(st.v[0], 0);
        st.step(&[0], &[6], 1).unwrap();
        assert_eq!(st.potential(0), 6.0);
    }

    #[test]
    fn tracks_real_arithmetic() {
        let cfg = NeuronConfig {
            threshold: 30.0,
            ..NeuronConfig::default()
        };
        let (rows, cols) = (8, 16);
        let mut gen = crate::rng::RandomSource::new(3, 0).rng();
        let w: Vec<i16> = (0..rows * cols).map(|_| 2 * gen.random_range(-10i16..=20)).collect();
        let wf: Vec<f64> = w.iter().map(|&x| f64::from(x)).collect();
        let mut fixed = FixedLayerState::new(rows, &cfg, FixedPoint { frac_bits: 16 }).unwrap();
        let mut real = LayerState::new(rows);
        let mut agree = 0;
        let steps = 200;
        for _ in 0..steps {
            let active: Vec<u32> = (0..cols as u32).filter(|_| gen.random_bool(0.3)).collect();
            let a = fixed.step(&active, &w, cols).unwrap();
            let b = step_cuba_layer(&mut real, &active, &wf, cols, &cfg).unwrap();
            if a == b {
                agree += 1;
            }
        }
        assert!(agree as f64 / steps as f64 > 0.9, "only {agree}/{steps} steps agree");
    }
}
