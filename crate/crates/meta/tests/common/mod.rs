#![allow(dead_code)]

use soel_core::snn::ResetMode;
use soel_data::{generate_synthetic_family, MetaDataset, SyntheticConfig};
use soel_meta::{InnerLoopConfig, MetaModel, ModelConfig, OuterLoopConfig};

pub fn small_family() -> MetaDataset {
    let cfg = SyntheticConfig {
        classes: 32,
        samples_per_class: 8,
        grid: 16,
        steps: 60,
        parts: 10,
        parts_per_class: 3,
        jitter: 0.5,
        max_distractors: 3,
        ..SyntheticConfig::default()
    };
    generate_synthetic_family(&cfg, 11).unwrap()
}

pub fn small_config(reset: ResetMode, quantize: bool) -> ModelConfig {
    let mut c = ModelConfig {
        inputs: 2 * 16 * 16,
        hidden: vec![24],
        outputs: 5,
        quantize,
        inner: InnerLoopConfig {
            alpha: 1.0,
            steps: 1,
            plastic_layers: vec![1],
        },
        ..ModelConfig::default()
    };
    c.neuron.reset = reset;
    c
}

pub fn small_model(reset: ResetMode, quantize: bool, seed: u64) -> MetaModel {
    MetaModel::init(small_config(reset, quantize), seed).unwrap()
}

pub fn small_outer() -> OuterLoopConfig {
    OuterLoopConfig {
        meta_batch: 2,
        iterations: 4,
        train_queries: 1,
        val_every: 2,
        val_episodes: 3,
        val_queries: 2,
        ..OuterLoopConfig::default()
    }
}
