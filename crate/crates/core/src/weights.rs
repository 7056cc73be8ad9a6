//! Dual-view synaptic weights.

use rand_distr::{Distribution, Normal};

use crate::error::{check_dim, Error, Result};
use crate::quant::{quantize_weights, QuantizationScheme};
use crate::rng::RandomSource;

/// Which view of a [`WeightMatrix`] a simulation reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightView {
    /// Full-precision shadow values.
    Shadow,
    /// The integer image deployed on hardware.
    Quantized,
}

/// Row-major `(post, pre)` weight matrix with a full-precision shadow view and
/// its quantized integer image.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    rows: usize,
    cols: usize,
    shadow: Vec<f64>,
    quantized: Vec<i16>,
}

impl WeightMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            shadow: vec![0.0; rows * cols],
            quantized: vec![0; rows * cols],
        }
    }

    /// Builds from shadow values. The quantized view starts at zero until
    /// [`WeightMatrix::quantize`] is called.
    pub fn from_shadow(rows: usize, cols: usize, shadow: Vec<f64>) -> Result<Self> {
        check_dim("weight matrix data", rows * cols, shadow.len())?;
        Ok(Self {
            rows,
            cols,
            shadow,
            quantized: vec![0; rows * cols],
        })
    }

    /// Builds both views explicitly (checkpoint loading).
    pub fn from_parts(rows: usize, cols: usize, shadow: Vec<f64>, quantized: Vec<i16>) -> Result<Self> {
        check_dim("weight matrix shadow data", rows * cols, shadow.len())?;
        check_dim("weight matrix quantized data", rows * cols, quantized.len())?;
        Ok(Self {
            rows,
            cols,
            shadow,
            quantized,
        })
    }

    /// Deployment image: only integer weights are known, and the shadow view
    /// is initialised from them exactly.
    pub fn from_quantized(rows: usize, cols: usize, quantized: Vec<i16>) -> Result<Self> {
        check_dim("weight matrix quantized data", rows * cols, quantized.len())?;
        let shadow = quantized.iter().map(|&q| f64::from(q)).collect();
        Ok(Self {
            rows,
            cols,
            shadow,
            quantized,
        })
    }

    /// Gaussian initialisation of the shadow view.
    pub fn random_normal(rows: usize, cols: usize, mean: f64, std: f64, rng: &RandomSource) -> Result<Self> {
        let normal = Normal::new(mean, std).map_err(|e| Error::Config(format!("weight init: {e}")))?;
        let mut gen = rng.rng();
        let shadow = (0..rows * cols).map(|_| normal.sample(&mut gen)).collect();
        Self::from_shadow(rows, cols, shadow)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn shadow(&self) -> &[f64] {
        &self.shadow
    }

    pub fn shadow_mut(&mut self) -> &mut [f64] {
        &mut self.shadow
    }

    pub fn quantized(&self) -> &[i16] {
        &self.quantized
    }

    pub fn quantized_mut(&mut self) -> &mut [i16] {
        &mut self.quantized
    }

    pub(crate) fn views_mut(&mut self) -> (&[f64], &mut [i16]) {
        (&self.shadow, &mut self.quantized)
    }

    pub fn shadow_row(&self, row: usize) -> &[f64] {
        &self.shadow[row * self.cols..(row + 1) * self.cols]
    }

    pub fn quantized_row(&self, row: usize) -> &[i16] {
        &self.quantized[row * self.cols..(row + 1) * self.cols]
    }

    /// Recomputes the quantized view from the shadow view.
    pub fn quantize(&mut self, scheme: &QuantizationScheme, rng: &RandomSource) -> Result<()> {
        quantize_weights(self, scheme, rng)
    }

    /// Dense `f64` copy of the requested view.
    pub fn dense(&self, view: WeightView) -> Vec<f64> {
        match view {
            WeightView::Shadow => self.shadow.clone(),
            WeightView::Quantized => self.quantized.iter().map(|&q| f64::from(q)).collect(),
        }
    }

    /// True when every quantized entry lies on the scheme's grid.
    pub fn quantized_on_grid(&self, scheme: &QuantizationScheme) -> bool {
        self.quantized.iter().all(|&q| scheme.contains(i32::from(q)))
    }
}
