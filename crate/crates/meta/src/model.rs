//! Meta-learned network: configuration, shadow weights and their
//! quantized image.

use soel_core::snn::{Layer, NetworkTopology};
use soel_core::{RandomSource, WeightMatrix};

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::streams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provenance {
    pub seed: u64,
    /// Outer iterations applied to the weights.
    pub iteration: u64,
    /// Seed of the rounding that produced the quantized view.
    pub rounding_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaModel {
    pub config: ModelConfig,
    pub net: NetworkTopology,
    pub provenance: Provenance,
}

impl MetaModel {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let sizes = config.sizes();
        let depth = sizes.len() - 1;
        let root = RandomSource::new(seed, streams::INIT);
        let mut weights = Vec::with_capacity(depth);
        for k in 0..depth {
            let (mean, std) = if k == 0 {
                (config.init.input_mean, config.init.input_std)
            } else if k + 1 == depth {
                (config.init.output_mean, config.init.output_std)
            } else {
                (config.init.hidden_mean, config.init.hidden_std)
            };
            let mut w = WeightMatrix::random_normal(sizes[k + 1], sizes[k], mean, std, &root.substream(k as u64))?;
            if k + 1 == depth && config.init.output_tied {
                let cols = sizes[k];
                let shadow = w.shadow_mut();
                let first = shadow[..cols].to_vec();
                shadow.chunks_mut(cols).for_each(|row| row.copy_from_slice(&first));
            }
            weights.push(w);
        }
        let mut model = Self::from_weights(
            config,
            weights,
            Provenance {
                seed,
                iteration: 0,
                rounding_seed: seed,
            },
        )?;
        model.requantize()?;
        Ok(model)
    }

    /// Assembles a model from weight matrices (both views kept as given).
    pub fn from_weights(config: ModelConfig, weights: Vec<WeightMatrix>, provenance: Provenance) -> Result<Self> {
        config.validate()?;
        let sizes = config.sizes();
        if weights.len() + 1 != sizes.len() {
            return Err(Error::Config(format!(
                "expected {} weight matrices, got {}",
                sizes.len() - 1,
                weights.len()
            )));
        }
        for (k, w) in weights.iter().enumerate() {
            if w.shape() != (sizes[k + 1], sizes[k]) {
                return Err(Error::Config(format!(
                    "layer {k} weights are {}x{}, expected {}x{}",
                    w.rows(),
                    w.cols(),
                    sizes[k + 1],
                    sizes[k]
                )));
            }
        }
        let depth = weights.len();
        let layers = weights
            .into_iter()
            .enumerate()
            .map(|(k, weights)| Layer {
                neuron: if k + 1 == depth { config.output_neuron() } else { config.neuron },
                weights,
                plastic: config.inner.plastic_layers.contains(&k),
            })
            .collect();
        Ok(Self {
            net: NetworkTopology::new(layers)?,
            config,
            provenance,
        })
    }

    pub fn depth(&self) -> usize {
        self.net.layers().len()
    }

    pub fn params(&self) -> Vec<Vec<f64>> {
        self.net.layers().iter().map(|l| l.weights.shadow().to_vec()).collect()
    }

    /// Replaces the shadow weights; the quantized view is left stale until
    /// [`MetaModel::requantize`].
    pub fn set_params(&mut self, params: &[Vec<f64>]) -> Result<()> {
        if params.len() != self.depth() {
            return Err(Error::Config(format!(
                "expected {} parameter blocks, got {}",
                self.depth(),
                params.len()
            )));
        }
        for (layer, p) in self.net.layers_mut().iter_mut().zip(params) {
            let w = layer.weights.shadow_mut();
            if w.len() != p.len() {
                return Err(Error::Config(format!(
                    "parameter block has {} entries, expected {}",
                    p.len(),
                    w.len()
                )));
            }
            w.copy_from_slice(p);
        }
        Ok(())
    }

    /// Source of the quantized view: layer `k` is rounded with its
    /// `substream(k)`.
    pub fn rounding(&self) -> RandomSource {
        RandomSource::new(self.provenance.rounding_seed, streams::ROUNDING)
    }

    /// Re-rounds every layer's shadow weights onto the grid.
    pub fn requantize(&mut self) -> Result<()> {
        let scheme = self.config.scheme;
        let rounding = self.rounding();
        for (k, layer) in self.net.layers_mut().iter_mut().enumerate() {
            layer.weights.quantize(&scheme, &rounding.substream(k as u64))?;
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.net.layers().iter().map(|l| l.weights.rows() * l.weights.cols()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig {
            inputs: 12,
            hidden: vec![6],
            outputs: 3,
            inner: crate::config::InnerLoopConfig {
                alpha: 1.0,
                steps: 1,
                plastic_layers: vec![1],
            },
            ..ModelConfig::default()
        }
    }

    #[test]
    fn init_is_deterministic_and_on_grid() {
        let a = MetaModel::init(small(), 5).unwrap();
        let b = MetaModel::init(small(), 5).unwrap();
        let c = MetaModel::init(small(), 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.params(), c.params());
        let scheme = a.config.scheme;
        assert!(a.net.layers().iter().all(|l| l.weights.quantized_on_grid(&scheme)));
        assert!(a.net.layers()[1].plastic && !a.net.layers()[0].plastic);
        assert_eq!(a.parameter_count(), 12 * 6 + 6 * 3);
    }

    #[test]
    fn set_params_checks_shapes() {
        let mut m = MetaModel::init(small(), 1).unwrap();
        let mut p = m.params();
        p[0][0] = 3.5;
        m.set_params(&p).unwrap();
        assert_eq!(m.net.layers()[0].weights.shadow()[0], 3.5);
        p[1].pop();
        assert!(m.set_params(&p).is_err());
    }
}
