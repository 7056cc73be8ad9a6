//! Pseudo-derivatives of the spike threshold.

use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurrogateKind {
    Boxcar,
    Sigmoid,
}

impl SurrogateKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SurrogateKind::Boxcar => "boxcar",
            SurrogateKind::Sigmoid => "sigmoid",
        }
    }
}

impl fmt::Display for SurrogateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SurrogateKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "boxcar" => Ok(SurrogateKind::Boxcar),
            "sigmoid" | "sigmoid-derivative" => Ok(SurrogateKind::Sigmoid),
            _ => Err(format!("unknown surrogate `{s}` (expected boxcar or sigmoid)")),
        }
    }
}

/// Shape of the spike pseudo-derivative.
///
/// With `normalized` set, `width` is measured in units of the threshold and
/// `slope` per unit of threshold, so one config suits layers with different
/// thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateConfig {
    pub kind: SurrogateKind,
    pub width: f64,
    pub slope: f64,
    pub normalized: bool,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            kind: SurrogateKind::Boxcar,
            width: 1.0,
            slope: 4.0,
            normalized: true,
        }
    }
}

impl SurrogateConfig {
    pub fn boxcar(width: f64) -> Self {
        Self {
            kind: SurrogateKind::Boxcar,
            width,
            normalized: false,
            ..Self::default()
        }
    }

    pub fn sigmoid(slope: f64) -> Self {
        Self {
            kind: SurrogateKind::Sigmoid,
            slope,
            normalized: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> soel_core::Result<()> {
        let ok = match self.kind {
            SurrogateKind::Boxcar => self.width > 0.0 && self.width.is_finite(),
            SurrogateKind::Sigmoid => self.slope > 0.0 && self.slope.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(soel_core::Error::Config(format!(
                "surrogate {} needs a positive finite {}",
                self.kind,
                if self.kind == SurrogateKind::Boxcar { "width" } else { "slope" }
            )))
        }
    }

    /// Absolute boxcar width at `threshold`.
    pub fn abs_width(&self, threshold: f64) -> f64 {
        if self.normalized {
            self.width * threshold
        } else {
            self.width
        }
    }

    /// Absolute sigmoid slope at `threshold`.
    pub fn abs_slope(&self, threshold: f64) -> f64 {
        if self.normalized {
            self.slope / threshold
        } else {
            self.slope
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `sigma(slope * (v - threshold))`, the smoothed spike.
pub fn soft_spike(v: f64, threshold: f64, slope: f64) -> f64 {
    sigmoid(slope * (v - threshold))
}

/// Pseudo-derivative of the spike with respect to the potential `v`.
pub fn surrogate_derivative(v: f64, threshold: f64, cfg: &SurrogateConfig) -> f64 {
    match cfg.kind {
        SurrogateKind::Boxcar => {
            let w = cfg.abs_width(threshold);
            if (v - threshold).abs() <= w / 2.0 {
                1.0 / w
            } else {
                0.0
            }
        }
        SurrogateKind::Sigmoid => {
            let k = cfg.abs_slope(threshold);
            let s = soft_spike(v, threshold, k);
            k * s * (1.0 - s)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boxcar_peaks_at_threshold() {
        assert_eq!(surrogate_derivative(3.0, 3.0, &SurrogateConfig::boxcar(1.0)), 1.0);
        assert_eq!(surrogate_derivative(3.5, 3.0, &SurrogateConfig::boxcar(1.0)), 1.0);
        assert_eq!(surrogate_derivative(2.0, 3.0, &SurrogateConfig::boxcar(0.5)), 0.0);
    }

    #[test]
    fn boxcar_vanishes_outside_support() {
        let cfg = SurrogateConfig::boxcar(0.3);
        assert_eq!(surrogate_derivative(1.0 + 10.0 * 0.3, 1.0, &cfg), 0.0);
        assert_eq!(surrogate_derivative(1.0 - 10.0 * 0.3, 1.0, &cfg), 0.0);
    }

    #[test]
    fn sigmoid_midpoint_is_quarter_slope() {
        for k in [0.5, 1.0, 7.0] {
            let d = surrogate_derivative(64.0, 64.0, &SurrogateConfig::sigmoid(k));
            assert!((d - k / 4.0).abs() < 1e-15);
        }
    }

    #[test]
    fn normalized_units_scale_with_threshold() {
        let cfg = SurrogateConfig::default();
        assert_eq!(surrogate_derivative(64.0, 64.0, &cfg), 1.0 / 64.0);
        assert_eq!(surrogate_derivative(96.0, 64.0, &cfg), 1.0 / 64.0);
        assert_eq!(surrogate_derivative(97.0, 64.0, &cfg), 0.0);
    }

    #[test]
    fn sigmoid_is_stable_far_from_threshold() {
        let cfg = SurrogateConfig::sigmoid(10.0);
        for v in [-1e6, 1e6] {
            let d = surrogate_derivative(v, 0.0, &cfg);
            assert!(d.is_finite() && d >= 0.0);
        }
    }

    #[test]
    fn validation() {
        assert!(SurrogateConfig::boxcar(0.0).validate().is_err());
        assert!(SurrogateConfig::sigmoid(-1.0).validate().is_err());
        assert!(SurrogateConfig::default().validate().is_ok());
    }
}
