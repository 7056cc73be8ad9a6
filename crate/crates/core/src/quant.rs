//! Fixed-point weight quantization with unbiased stochastic rounding.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::rng::{next_unit, RandomSource};
use crate::weights::WeightMatrix;

/// Integer grid that deployed weights live on.
///
/// The default is the 8-bit signed mantissa with a step of two, i.e. the set
/// `{-256, -254, ..., 252, 254}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantizationScheme {
    step: i32,
    min: i32,
    max: i32,
    bits: u8,
}

impl Default for QuantizationScheme {
    fn default() -> Self {
        Self {
            step: 2,
            min: -256,
            max: 254,
            bits: 8,
        }
    }
}

impl QuantizationScheme {
    pub fn new(step: i32, min: i32, max: i32, bits: u8) -> Result<Self> {
        if step <= 0 {
            return Err(Error::Config(format!("quantization step must be positive, got {step}")));
        }
        if min % step != 0 || max % step != 0 {
            return Err(Error::Config(format!(
                "quantization range [{min}, {max}] is not aligned to step {step}"
            )));
        }
        if min >= max {
            return Err(Error::Config(format!("empty quantization range [{min}, {max}]")));
        }
        if min < i32::from(i16::MIN) || max > i32::from(i16::MAX) {
            return Err(Error::Config("quantization range exceeds 16-bit storage".into()));
        }
        Ok(Self { step, min, max, bits })
    }

    pub fn step(&self) -> i32 {
        self.step
    }

    pub fn min(&self) -> i32 {
        self.min
    }

    pub fn max(&self) -> i32 {
        self.max
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    /// Rounds `x` to a bracketing multiple of the step using the uniform draw
    /// `u` in `[0, 1)`, then clamps into range.
    pub fn round_with(&self, x: f64, u: f64) -> Result<i16> {
        let r = round_to_step(x, self.step, u)?;
        Ok(r.clamp(self.min as i64, self.max as i64) as i16)
    }

    /// True if `q` is representable on this grid.
    pub fn contains(&self, q: i32) -> bool {
        q >= self.min && q <= self.max && q % self.step == 0
    }
}

fn round_to_step(x: f64, step: i32, u: f64) -> Result<i64> {
    if !x.is_finite() {
        return Err(Error::InvalidValue(x));
    }
    let step_f = f64::from(step);
    let lower = (x / step_f).floor() * step_f;
    let frac = (x - lower) / step_f;
    let rounded = if u < frac { lower + step_f } else { lower };
    // `as` saturates for values beyond the i64 range; clamping follows anyway.
    Ok(rounded as i64)
}

/// Stochastically rounds `x` to one of the two nearest even integers, picking
/// each with probability proportional to proximity. Exact multiples of two
/// are returned unchanged. Exactly one draw is consumed from `rng`.
pub fn stochastic_round_even(x: f64, rng: &mut impl RngCore) -> Result<i64> {
    let u = next_unit(rng);
    round_to_step(x, 2, u)
}

/// Re-derives the quantized view of `w` from its shadow view.
///
/// Element `k` (row-major) uses draw `k` of `rng`, so the result depends only
/// on the shadow values and the random source.
pub fn quantize_weights(w: &mut WeightMatrix, scheme: &QuantizationScheme, rng: &RandomSource) -> Result<()> {
    let mut gen = rng.rng();
    let (shadow, quantized) = w.views_mut();
    for (q, &x) in quantized.iter_mut().zip(shadow.iter()) {
        let u = next_unit(&mut gen);
        *q = scheme.round_with(x, u)?;
    }
    Ok(())
}
