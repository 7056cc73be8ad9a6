//! Model, inner-loop and outer-loop configuration, with their flat
//! `key = value` forms.

use soel_core::plasticity::SoelConfig;
use soel_core::snn::{FixedPoint, NeuronConfig, ResetMode};
use soel_core::QuantizationScheme;
use soel_diff::{DiffConfig, ForwardMode, SurrogateConfig, SurrogateKind};

use crate::error::{Error, Result};
use crate::settings::{join_list, Settings};

#[derive(Debug, Clone, PartialEq)]
pub struct InnerLoopConfig {
    /// Scales the SOEL update: `w <- w + alpha * eta * e * p`.
    pub alpha: f64,
    /// Passes over the training shots.
    pub steps: usize,
    pub plastic_layers: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuterLoopConfig {
    pub lr: f64,
    /// Learning rate at the last iteration; the rate follows a half cosine
    /// from `lr` down to this value.
    pub lr_final: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub meta_batch: usize,
    pub iterations: u64,
    /// Query samples per class in meta-training episodes.
    pub train_queries: usize,
    /// Validate every this many iterations (0 disables validation).
    pub val_every: u64,
    pub val_episodes: usize,
    pub val_queries: usize,
}

impl Default for OuterLoopConfig {
    fn default() -> Self {
        Self {
            lr: 0.3,
            lr_final: 0.3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            meta_batch: 8,
            iterations: 2000,
            train_queries: 2,
            val_every: 250,
            val_episodes: 20,
            val_queries: 10,
        }
    }
}

impl OuterLoopConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return Err(Error::Config("outer.beta1 and outer.beta2 must lie in (0, 1)".into()));
        }
        if !(self.lr_final >= 0.0 && self.lr_final <= self.lr) {
            return Err(Error::Config("outer.lr_final must lie in [0, outer.lr]".into()));
        }
        if !(self.lr > 0.0 && self.eps > 0.0) || self.meta_batch == 0 || self.train_queries == 0 {
            return Err(Error::Config(
                "outer.lr, outer.eps, outer.meta_batch and outer.train_queries must be positive".into(),
            ));
        }
        if self.val_every > 0 && (self.val_episodes == 0 || self.val_queries == 0) {
            return Err(Error::Config("validation needs outer.val_episodes and outer.val_queries".into()));
        }
        Ok(())
    }

    pub const KEYS: &'static [&'static str] = &[
        "outer.lr",
        "outer.lr_final",
        "outer.beta1",
        "outer.beta2",
        "outer.eps",
        "outer.meta_batch",
        "outer.iterations",
        "outer.train_queries",
        "outer.val_every",
        "outer.val_episodes",
        "outer.val_queries",
    ];

    /// Learning rate of the step that completes iteration `it + 1`.
    pub fn lr_at(&self, it: u64) -> f64 {
        if self.iterations <= 1 {
            return self.lr;
        }
        let f = (it.min(self.iterations - 1)) as f64 / (self.iterations - 1) as f64;
        self.lr_final + 0.5 * (self.lr - self.lr_final) * (1.0 + (std::f64::consts::PI * f).cos())
    }

    pub fn write(&self, s: &mut Settings) {
        s.set("outer.lr", self.lr);
        s.set("outer.lr_final", self.lr_final);
        s.set("outer.beta1", self.beta1);
        s.set("outer.beta2", self.beta2);
        s.set("outer.eps", self.eps);
        s.set("outer.meta_batch", self.meta_batch);
        s.set("outer.iterations", self.iterations);
        s.set("outer.train_queries", self.train_queries);
        s.set("outer.val_every", self.val_every);
        s.set("outer.val_episodes", self.val_episodes);
        s.set("outer.val_queries", self.val_queries);
    }

    pub fn apply(&mut self, s: &Settings) -> Result<()> {
        s.read("outer.lr", &mut self.lr)?;
        s.read("outer.lr_final", &mut self.lr_final)?;
        s.read("outer.beta1", &mut self.beta1)?;
        s.read("outer.beta2", &mut self.beta2)?;
        s.read("outer.eps", &mut self.eps)?;
        s.read("outer.meta_batch", &mut self.meta_batch)?;
        s.read("outer.iterations", &mut self.iterations)?;
        s.read("outer.train_queries", &mut self.train_queries)?;
        s.read("outer.val_every", &mut self.val_every)?;
        s.read("outer.val_episodes", &mut self.val_episodes)?;
        s.read("outer.val_queries", &mut self.val_queries)?;
        self.validate()
    }
}

/// Normal initialization `N(mean, std)` per layer group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitConfig {
    pub input_mean: f64,
    pub input_std: f64,
    pub hidden_mean: f64,
    pub hidden_std: f64,
    pub output_mean: f64,
    pub output_std: f64,
    /// All output rows start as copies of the first one.
    pub output_tied: bool,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            input_mean: 8.0,
            input_std: 24.0,
            hidden_mean: 10.0,
            hidden_std: 24.0,
            output_mean: 3.0,
            output_std: 8.0,
            output_tied: true,
        }
    }
}

/// Everything needed to rebuild and run a model, apart from its weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub inputs: usize,
    pub hidden: Vec<usize>,
    pub outputs: usize,
    /// Dynamics of every layer; the output layer may override the threshold.
    pub neuron: NeuronConfig,
    pub output_threshold: f64,
    pub soel: SoelConfig,
    pub inner: InnerLoopConfig,
    pub surrogate: SurrogateConfig,
    pub mode: ForwardMode,
    pub detach_reset: bool,
    pub first_order: bool,
    pub logit_scale: f64,
    pub quantize: bool,
    pub scheme: QuantizationScheme,
    /// Integer neuron-state arithmetic in deployment.
    pub integer_state: bool,
    pub frac_bits: u32,
    pub init: InitConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let hidden = vec![128];
        Self {
            inputs: 2 * 32 * 32,
            inner: InnerLoopConfig {
                alpha: 1.0,
                steps: 2,
                plastic_layers: vec![hidden.len()],
            },
            hidden,
            outputs: 5,
            neuron: NeuronConfig::default(),
            output_threshold: NeuronConfig::default().threshold,
            soel: SoelConfig {
                eta: 8.0,
                ..SoelConfig::default()
            },
            surrogate: SurrogateConfig {
                kind: SurrogateKind::Sigmoid,
                ..SurrogateConfig::default()
            },
            mode: ForwardMode::Hard,
            detach_reset: false,
            first_order: false,
            logit_scale: 0.5,
            quantize: true,
            scheme: QuantizationScheme::default(),
            integer_state: false,
            frac_bits: FixedPoint::default().frac_bits,
            init: InitConfig::default(),
        }
    }
}

fn parse_mode(s: &str) -> std::result::Result<ForwardMode, String> {
    match s {
        "hard" => Ok(ForwardMode::Hard),
        "smoothed" => Ok(ForwardMode::Smoothed),
        _ => Err(format!("unknown forward mode `{s}` (expected hard or smoothed)")),
    }
}

fn mode_str(m: ForwardMode) -> &'static str {
    match m {
        ForwardMode::Hard => "hard",
        ForwardMode::Smoothed => "smoothed",
    }
}

impl ModelConfig {
    pub const KEYS: &'static [&'static str] = &[
        "model.inputs",
        "model.hidden",
        "model.outputs",
        "neuron.alpha_u",
        "neuron.alpha_v",
        "neuron.threshold",
        "neuron.reset",
        "output.threshold",
        "soel.theta",
        "soel.eta",
        "soel.window",
        "soel.offset",
        "soel.target",
        "soel.off_target",
        "inner.alpha",
        "inner.steps",
        "inner.plastic_layers",
        "surrogate.kind",
        "surrogate.width",
        "surrogate.slope",
        "surrogate.normalized",
        "diff.mode",
        "diff.detach_reset",
        "diff.first_order",
        "diff.logit_scale",
        "quant.enabled",
        "quant.step",
        "quant.min",
        "quant.max",
        "quant.bits",
        "deploy.integer_state",
        "deploy.frac_bits",
        "init.input_mean",
        "init.input_std",
        "init.hidden_mean",
        "init.hidden_std",
        "init.output_mean",
        "init.output_std",
        "init.output_tied",
    ];

    pub fn write(&self, s: &mut Settings) {
        s.set("model.inputs", self.inputs);
        s.set("model.hidden", join_list(&self.hidden));
        s.set("model.outputs", self.outputs);
        s.set("neuron.alpha_u", self.neuron.alpha_u);
        s.set("neuron.alpha_v", self.neuron.alpha_v);
        s.set("neuron.threshold", self.neuron.threshold);
        s.set("neuron.reset", self.neuron.reset.as_str());
        s.set("output.threshold", self.output_threshold);
        s.set("soel.theta", self.soel.theta);
        s.set("soel.eta", self.soel.eta);
        s.set("soel.window", self.soel.window);
        s.set("soel.offset", self.soel.offset);
        s.set("soel.target", self.soel.target_spikes);
        s.set("soel.off_target", self.soel.off_target_spikes);
        s.set("inner.alpha", self.inner.alpha);
        s.set("inner.steps", self.inner.steps);
        s.set("inner.plastic_layers", join_list(&self.inner.plastic_layers));
        s.set("surrogate.kind", self.surrogate.kind.as_str());
        s.set("surrogate.width", self.surrogate.width);
        s.set("surrogate.slope", self.surrogate.slope);
        s.set("surrogate.normalized", self.surrogate.normalized);
        s.set("diff.mode", mode_str(self.mode));
        s.set("diff.detach_reset", self.detach_reset);
        s.set("diff.first_order", self.first_order);
        s.set("diff.logit_scale", self.logit_scale);
        s.set("quant.enabled", self.quantize);
        s.set("quant.step", self.scheme.step());
        s.set("quant.min", self.scheme.min());
        s.set("quant.max", self.scheme.max());
        s.set("quant.bits", self.scheme.bits());
        s.set("deploy.integer_state", self.integer_state);
        s.set("deploy.frac_bits", self.frac_bits);
        s.set("init.input_mean", self.init.input_mean);
        s.set("init.input_std", self.init.input_std);
        s.set("init.hidden_mean", self.init.hidden_mean);
        s.set("init.hidden_std", self.init.hidden_std);
        s.set("init.output_mean", self.init.output_mean);
        s.set("init.output_std", self.init.output_std);
        s.set("init.output_tied", self.init.output_tied);
    }

    pub fn to_settings(&self) -> Settings {
        let mut s = Settings::new();
        self.write(&mut s);
        s
    }

    /// Overrides the fields named in `s` and validates the result.
    pub fn apply(&mut self, s: &Settings) -> Result<()> {
        let hidden_before = self.hidden.len();
        s.read("model.inputs", &mut self.inputs)?;
        s.read_list("model.hidden", &mut self.hidden)?;
        s.read("model.outputs", &mut self.outputs)?;
        s.read("neuron.alpha_u", &mut self.neuron.alpha_u)?;
        s.read("neuron.alpha_v", &mut self.neuron.alpha_v)?;
        s.read("neuron.threshold", &mut self.neuron.threshold)?;
        s.read("neuron.reset", &mut self.neuron.reset)?;
        s.read("output.threshold", &mut self.output_threshold)?;
        s.read("soel.theta", &mut self.soel.theta)?;
        s.read("soel.eta", &mut self.soel.eta)?;
        s.read("soel.window", &mut self.soel.window)?;
        s.read("soel.offset", &mut self.soel.offset)?;
        s.read("soel.target", &mut self.soel.target_spikes)?;
        s.read("soel.off_target", &mut self.soel.off_target_spikes)?;
        s.read("inner.alpha", &mut self.inner.alpha)?;
        s.read("inner.steps", &mut self.inner.steps)?;
        if s.get("inner.plastic_layers").is_some() {
            s.read_list("inner.plastic_layers", &mut self.inner.plastic_layers)?;
        } else if self.hidden.len() != hidden_before {
            self.inner.plastic_layers = vec![self.hidden.len()];
        }
        s.read("surrogate.kind", &mut self.surrogate.kind)?;
        s.read("surrogate.width", &mut self.surrogate.width)?;
        s.read("surrogate.slope", &mut self.surrogate.slope)?;
        s.read("surrogate.normalized", &mut self.surrogate.normalized)?;
        if let Some(m) = s.get("diff.mode") {
            self.mode = parse_mode(m).map_err(Error::Config)?;
        }
        s.read("diff.detach_reset", &mut self.detach_reset)?;
        s.read("diff.first_order", &mut self.first_order)?;
        s.read("diff.logit_scale", &mut self.logit_scale)?;
        s.read("quant.enabled", &mut self.quantize)?;
        let (mut step, mut min, mut max, mut bits) = (self.scheme.step(), self.scheme.min(), self.scheme.max(), self.scheme.bits());
        s.read("quant.step", &mut step)?;
        s.read("quant.min", &mut min)?;
        s.read("quant.max", &mut max)?;
        s.read("quant.bits", &mut bits)?;
        self.scheme = QuantizationScheme::new(step, min, max, bits)?;
        s.read("deploy.integer_state", &mut self.integer_state)?;
        s.read("deploy.frac_bits", &mut self.frac_bits)?;
        s.read("init.input_mean", &mut self.init.input_mean)?;
        s.read("init.input_std", &mut self.init.input_std)?;
        s.read("init.hidden_mean", &mut self.init.hidden_mean)?;
        s.read("init.hidden_std", &mut self.init.hidden_std)?;
        s.read("init.output_mean", &mut self.init.output_mean)?;
        s.read("init.output_std", &mut self.init.output_std)?;
        s.read("init.output_tied", &mut self.init.output_tied)?;
        self.validate()
    }

    pub fn from_settings(s: &Settings) -> Result<Self> {
        let mut c = Self::default();
        c.apply(s)?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs == 0 || self.outputs == 0 || self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        self.neuron.validate()?;
        self.output_neuron().validate()?;
        self.soel.validate()?;
        self.surrogate.validate()?;
        if !(self.inner.alpha.is_finite()) || self.inner.steps == 0 {
            return Err(Error::Config("inner.alpha must be finite and inner.steps at least 1".into()));
        }
        if self.inner.plastic_layers != [self.hidden.len()] {
            return Err(Error::Config(format!(
                "only the output layer (index {}) can be plastic, got inner.plastic_layers = {}",
                self.hidden.len(),
                join_list(&self.inner.plastic_layers)
            )));
        }
        if !(self.logit_scale > 0.0 && self.logit_scale.is_finite()) {
            return Err(Error::Config("diff.logit_scale must be positive".into()));
        }
        if self.integer_state {
            if !self.quantize {
                return Err(Error::Config("deploy.integer_state requires quant.enabled".into()));
            }
            FixedPoint::decay_shift(self.neuron.alpha_u)?;
            FixedPoint::decay_shift(self.neuron.alpha_v)?;
        }
        Ok(())
    }

    pub fn output_neuron(&self) -> NeuronConfig {
        NeuronConfig {
            threshold: self.output_threshold,
            ..self.neuron
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.inputs];
        s.extend(&self.hidden);
        s.push(self.outputs);
        s
    }

    pub fn diff_config(&self) -> DiffConfig {
        DiffConfig {
            surrogate: self.surrogate,
            mode: self.mode,
            detach_reset: self.detach_reset,
            first_order: self.first_order,
            logit_scale: self.logit_scale,
            quantize: self.quantize.then_some(self.scheme),
        }
    }

    pub fn reset_mode(&self) -> ResetMode {
        self.neuron.reset
    }

    pub fn set_reset_mode(&mut self, reset: ResetMode) {
        self.neuron.reset = reset;
    }

    pub fn uses_sigmoid(&self) -> bool {
        self.surrogate.kind == SurrogateKind::Sigmoid
    }
}
