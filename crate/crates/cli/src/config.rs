//! Experiment configuration: a flat `key = value` document.
//!
//! Values are resolved from, in increasing precedence: built-in defaults, the
//! `--config` file, `SOELSIM_*` environment variables and command-line flags.
//! An environment variable names a key in upper case with `__` for `.`, e.g.
//! `SOELSIM_SOEL__THETA=2` sets `soel.theta`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use soel_data::{BinningConfig, SyntheticConfig};
use soel_meta::{EvalSettings, ModelConfig, OuterLoopConfig, Settings};

use crate::demo::DemoConfig;
use crate::error::{CliError, Result};

pub const ENV_PREFIX: &str = "SOELSIM_";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DatasetSource {
    Synthetic,
    Manifest(PathBuf),
}

impl fmt::Display for DatasetSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetSource::Synthetic => f.write_str("synthetic"),
            DatasetSource::Manifest(p) => write!(f, "manifest:{}", p.display()),
        }
    }
}

impl FromStr for DatasetSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.split_once(':') {
            None if s == "synthetic" => Ok(DatasetSource::Synthetic),
            Some(("manifest", p)) if !p.is_empty() => Ok(DatasetSource::Manifest(PathBuf::from(p))),
            _ => Err(format!("expected `synthetic` or `manifest:PATH`, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: PathBuf,
    /// Worker threads for episode parallelism; 0 uses every core.
    pub workers: usize,
    pub dataset: DatasetSource,
    /// Seed of the synthetic family and of the manifest class split.
    pub data_seed: u64,
    pub synthetic: SyntheticConfig,
    pub binning: BinningConfig,
    pub model: ModelConfig,
    pub outer: OuterLoopConfig,
    pub eval: EvalSettings,
    pub demo: DemoConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let synthetic = SyntheticConfig::default();
        let binning = BinningConfig {
            grid: synthetic.grid,
            steps: synthetic.steps,
            ..BinningConfig::default()
        };
        let mut cfg = Self {
            seed: 0,
            out: PathBuf::from("runs"),
            workers: 0,
            dataset: DatasetSource::Synthetic,
            data_seed: 1,
            synthetic,
            binning,
            model: ModelConfig::default(),
            outer: OuterLoopConfig::default(),
            eval: EvalSettings::default(),
            demo: DemoConfig::default(),
        };
        cfg.derive_shapes();
        cfg
    }
}

const KEYS: &[&str] = &[
    "seed",
    "out",
    "workers",
    "data.source",
    "data.seed",
    "data.classes",
    "data.samples",
    "data.channels",
    "data.grid",
    "data.steps",
    "data.parts",
    "data.parts_per_class",
    "data.rate",
    "data.jitter",
    "data.max_shift",
    "data.max_delay",
    "data.max_distractors",
    "data.split",
    "data.dt_us",
    "data.merge_polarity",
    "eval.way",
    "eval.shot",
    "eval.queries",
    "eval.trials",
    "demo.inputs",
    "demo.rate",
    "demo.initial_weight",
    "demo.theta",
    "demo.eta",
    "demo.window",
    "demo.target",
    "demo.quantize",
    "demo.max_windows",
    "demo.stable_windows",
];

fn config_err(e: soel_meta::Error) -> CliError {
    CliError::Config(e.to_string())
}

impl ExperimentConfig {
    /// Every key accepted in a configuration document.
    pub fn keys() -> Vec<&'static str> {
        let mut k = KEYS.to_vec();
        k.extend(ModelConfig::KEYS);
        k.extend(OuterLoopConfig::KEYS);
        k
    }

    /// Input and output sizes of the model follow the data and the task
    /// width unless they are given explicitly.
    fn derive_shapes(&mut self) {
        self.model.inputs = self.data_inputs();
        self.model.outputs = self.eval.way;
    }

    /// Input channels times grid cells of the configured data source.
    pub fn data_inputs(&self) -> usize {
        match self.dataset {
            DatasetSource::Synthetic => self.synthetic.channels * self.synthetic.grid * self.synthetic.grid,
            DatasetSource::Manifest(_) => self.binning.channels() * self.binning.grid * self.binning.grid,
        }
    }

    pub fn to_settings(&self) -> Settings {
        let mut s = Settings::new();
        s.set("seed", self.seed);
        s.set("out", self.out.display());
        s.set("workers", self.workers);
        s.set("data.source", &self.dataset);
        s.set("data.seed", self.data_seed);
        let d = &self.synthetic;
        s.set("data.classes", d.classes);
        s.set("data.samples", d.samples_per_class);
        s.set("data.channels", d.channels);
        s.set("data.grid", d.grid);
        s.set("data.steps", d.steps);
        s.set("data.parts", d.parts);
        s.set("data.parts_per_class", d.parts_per_class);
        s.set("data.rate", d.rate);
        s.set("data.jitter", d.jitter);
        s.set("data.max_shift", d.max_shift);
        s.set("data.max_delay", d.max_delay);
        s.set("data.max_distractors", d.max_distractors);
        s.set("data.split", soel_meta::settings::join_list(&d.split));
        s.set("data.dt_us", self.binning.dt_us);
        s.set("data.merge_polarity", self.binning.merge_polarity);
        s.set("eval.way", self.eval.way);
        s.set("eval.shot", self.eval.shot);
        s.set("eval.queries", self.eval.queries);
        s.set("eval.trials", self.eval.trials);
        let m = &self.demo;
        s.set("demo.inputs", m.inputs);
        s.set("demo.rate", m.rate);
        s.set("demo.initial_weight", m.initial_weight);
        s.set("demo.theta", m.soel.theta);
        s.set("demo.eta", m.soel.eta);
        s.set("demo.window", m.soel.window);
        s.set("demo.target", m.soel.target_spikes);
        s.set("demo.quantize", m.quantize);
        s.set("demo.max_windows", m.max_windows);
        s.set("demo.stable_windows", m.stable_windows);
        self.model.write(&mut s);
        self.outer.write(&mut s);
        s
    }

    /// Canonical text form; parsing it back yields the same configuration.
    pub fn to_text(&self) -> String {
        self.to_settings().to_text()
    }

    pub fn from_settings(s: &Settings) -> Result<Self> {
        s.reject_unknown(&Self::keys()).map_err(config_err)?;
        let mut c = Self::default();
        let rd = |r: soel_meta::Result<()>| r.map_err(config_err);
        rd(s.read("seed", &mut c.seed))?;
        rd(s.read("out", &mut c.out))?;
        rd(s.read("workers", &mut c.workers))?;
        if let Some(v) = s.get("data.source") {
            c.dataset = v.parse().map_err(|e| CliError::Config(format!("`data.source`: {e}")))?;
        }
        rd(s.read("data.seed", &mut c.data_seed))?;
        let d = &mut c.synthetic;
        rd(s.read("data.classes", &mut d.classes))?;
        rd(s.read("data.samples", &mut d.samples_per_class))?;
        rd(s.read("data.channels", &mut d.channels))?;
        rd(s.read("data.grid", &mut d.grid))?;
        rd(s.read("data.steps", &mut d.steps))?;
        rd(s.read("data.parts", &mut d.parts))?;
        rd(s.read("data.parts_per_class", &mut d.parts_per_class))?;
        rd(s.read("data.rate", &mut d.rate))?;
        rd(s.read("data.jitter", &mut d.jitter))?;
        rd(s.read("data.max_shift", &mut d.max_shift))?;
        rd(s.read("data.max_delay", &mut d.max_delay))?;
        rd(s.read("data.max_distractors", &mut d.max_distractors))?;
        let mut split = d.split.to_vec();
        rd(s.read_list("data.split", &mut split))?;
        d.split = split
            .try_into()
            .map_err(|_| CliError::Config("`data.split` needs three ratios".into()))?;
        c.binning.grid = d.grid;
        c.binning.steps = d.steps;
        rd(s.read("data.dt_us", &mut c.binning.dt_us))?;
        rd(s.read("data.merge_polarity", &mut c.binning.merge_polarity))?;
        rd(s.read("eval.way", &mut c.eval.way))?;
        rd(s.read("eval.shot", &mut c.eval.shot))?;
        rd(s.read("eval.queries", &mut c.eval.queries))?;
        rd(s.read("eval.trials", &mut c.eval.trials))?;
        let m = &mut c.demo;
        rd(s.read("demo.inputs", &mut m.inputs))?;
        rd(s.read("demo.rate", &mut m.rate))?;
        rd(s.read("demo.initial_weight", &mut m.initial_weight))?;
        rd(s.read("demo.theta", &mut m.soel.theta))?;
        rd(s.read("demo.eta", &mut m.soel.eta))?;
        rd(s.read("demo.window", &mut m.soel.window))?;
        rd(s.read("demo.target", &mut m.soel.target_spikes))?;
        rd(s.read("demo.quantize", &mut m.quantize))?;
        rd(s.read("demo.max_windows", &mut m.max_windows))?;
        rd(s.read("demo.stable_windows", &mut m.stable_windows))?;
        c.derive_shapes();
        rd(c.model.apply(s))?;
        rd(c.outer.apply(s))?;
        c.validate()?;
        Ok(c)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_settings(&Settings::parse(text).map_err(config_err)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate().map_err(config_err)?;
        self.outer.validate().map_err(config_err)?;
        if let DatasetSource::Synthetic = self.dataset {
            self.synthetic.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        if self.model.inputs != self.data_inputs() {
            return Err(CliError::Config(format!(
                "model.inputs = {} but the data has {} inputs",
                self.model.inputs,
                self.data_inputs()
            )));
        }
        if self.model.outputs != self.eval.way {
            return Err(CliError::Config(format!(
                "model.outputs = {} but eval.way = {}",
                self.model.outputs, self.eval.way
            )));
        }
        let e = &self.eval;
        if e.way == 0 || e.shot == 0 || e.queries == 0 || e.trials == 0 {
            return Err(CliError::Config(
                "eval.way, eval.shot, eval.queries and eval.trials must be positive".into(),
            ));
        }
        self.demo.neuron.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.demo.soel.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.demo.rate) || self.demo.inputs == 0 || self.demo.stable_windows == 0 {
            return Err(CliError::Config(
                "demo.rate must lie in [0, 1]; demo.inputs and demo.stable_windows must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Merges the layers in precedence order and resolves the result.
    pub fn resolve(file: Option<&Path>, env: impl IntoIterator<Item = (String, String)>, flags: &Settings) -> Result<Self> {
        let mut merged = Settings::new();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let s = Settings::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            for (k, v) in s.iter() {
                merged.set(k, v);
            }
        }
        let mut env: Vec<(String, String)> = env.into_iter().collect();
        env.sort();
        for (name, value) in env {
            if let Some(rest) = name.strip_prefix(ENV_PREFIX) {
                merged.set(&env_key(rest), value);
            }
        }
        for (k, v) in flags.iter() {
            merged.set(k, v);
        }
        Self::from_settings(&merged)
    }
}

/// Maps the part after [`ENV_PREFIX`] to a configuration key.
pub fn env_key(name: &str) -> String {
    name.to_ascii_lowercase().replace("__", ".")
}
