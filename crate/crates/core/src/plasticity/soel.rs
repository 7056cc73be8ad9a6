use crate::error::{Error, Result};

/// Plasticity hyper-parameters. Spike targets are per window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoelConfig {
    /// Error threshold: windows with `|e| < theta` do not learn.
    pub theta: f64,
    /// Learning rate.
    pub eta: f64,
    /// Learning-epoch interval in steps.
    pub window: usize,
    /// Post-trace offset constant.
    pub offset: i32,
    /// Target count of the labeled neuron per window.
    pub target_spikes: i32,
    /// Target count of every other output neuron per window.
    pub off_target_spikes: i32,
}

impl Default for SoelConfig {
    fn default() -> Self {
        Self {
            theta: 1.0,
            eta: 1.0,
            window: 20,
            offset: 64,
            target_spikes: 2,
            off_target_spikes: 0,
        }
    }
}

impl SoelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta >= 0.0) {
            return Err(Error::Config(format!("theta must be non-negative, got {}", self.theta)));
        }
        if !self.eta.is_finite() {
            return Err(Error::Config(format!("eta must be finite, got {}", self.eta)));
        }
        if !(1..=63).contains(&self.window) {
            return Err(Error::Config(format!("window must be in 1..=63, got {}", self.window)));
        }
        let window = self.window as i64;
        for target in [self.target_spikes, self.off_target_spikes] {
            let target = i64::from(target);
            if target < 0 || target > window {
                return Err(Error::Config(format!("spike target {target} outside 0..={window}")));
            }
            // e ranges over [target - window, target].
            let worst = target.max(window - target);
            if i64::from(self.offset) <= worst {
                return Err(Error::Config(format!(
                    "offset {} too small: errors reach {worst} and would encode to a non-positive post-trace",
                    self.offset
                )));
            }
        }
        Ok(())
    }
}

/// Gated window error: `target - count` when its magnitude reaches `theta`,
/// otherwise zero.
pub fn compute_window_error(target: i32, count: u32, theta: f64) -> f64 {
    let e = f64::from(target) - f64::from(count);
    if e.abs() >= theta {
        e
    } else {
        0.0
    }
}

/// Offset-encodes a gated error for the post-trace. Zero stays zero and means
/// "no learning".
pub fn encode_posttrace(e_gated: f64, offset: i32) -> Result<u32> {
    if !e_gated.is_finite() {
        return Err(Error::InvalidValue(e_gated));
    }
    if e_gated == 0.0 {
        return Ok(0);
    }
    let y = (f64::from(offset) + e_gated).round();
    if y < 1.0 || y > f64::from(u32::MAX) {
        return Err(Error::Config(format!(
            "offset {offset} cannot encode error {e_gated} as a positive post-trace"
        )));
    }
    Ok(y as u32)
}

/// Inverse of [`encode_posttrace`]; `None` for the no-learning sentinel.
pub fn decode_posttrace(y: u32, offset: i32) -> Option<i64> {
    (y != 0).then(|| i64::from(y) - i64::from(offset))
}

/// `dw_j = eta * p_j * (y - c)`, or all zeros when `y == 0`.
pub fn soel_update(p: &[f64], y_encoded: u32, eta: f64, offset: i32) -> Vec<f64> {
    let mut dw = vec![0.0; p.len()];
    soel_update_into(&mut dw, p, y_encoded, eta, offset);
    dw
}

/// Writes the update of [`soel_update`] into `dw`.
pub fn soel_update_into(dw: &mut [f64], p: &[f64], y_encoded: u32, eta: f64, offset: i32) {
    if y_encoded == 0 {
        dw.fill(0.0);
        return;
    }
    let err = (i64::from(y_encoded) - i64::from(offset)) as f64;
    for (d, &pj) in dw.iter_mut().zip(p) {
        *d = eta * pj * err;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_error_examples() {
        assert_eq!(compute_window_error(10, 7, 2.0), 3.0);
        assert_eq!(compute_window_error(10, 9, 2.0), 0.0);
        assert_eq!(compute_window_error(3, 8, 2.0), -5.0);
        assert_eq!(compute_window_error(2, 2, 0.0), 0.0);
    }

    #[test]
    fn encoding_examples() {
        assert_eq!(encode_posttrace(3.0, 32).unwrap(), 35);
        assert_eq!(encode_posttrace(0.0, 32).unwrap(), 0);
        let y = encode_posttrace(-5.0, 32).unwrap();
        assert_eq!(y, 27);
        assert_eq!(decode_posttrace(y, 32), Some(-5));
        assert_eq!(decode_posttrace(0, 32), None);
        assert!(encode_posttrace(-40.0, 32).is_err());
        assert!(encode_posttrace(-32.0, 32).is_err());
    }

    #[test]
    fn update_examples() {
        assert_eq!(soel_update(&[0.3, 0.9], 0, 1.0, 32), vec![0.0, 0.0]);
        assert_eq!(soel_update(&[0.5], 35, 1.0, 32), vec![1.5]);
        assert_eq!(soel_update(&[0.0], 35, 1.0, 32), vec![0.0]);
    }

    #[test]
    fn config_validation() {
        assert!(SoelConfig::default().validate().is_ok());
        let too_wide = SoelConfig {
            window: 64,
            ..SoelConfig::default()
        };
        assert!(too_wide.validate().is_err());
        let small_offset = SoelConfig {
            offset: 20,
            ..SoelConfig::default()
        };
        assert!(small_offset.validate().is_err());
    }
}
