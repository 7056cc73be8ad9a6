//! Checkpoints: a sectioned little-endian binary container and a JSON
//! export of the same content.
//!
//! Layout: `SOELCKPT`, `u32` version, then sections of `u32` tag, `u64`
//! payload length and payload. Unknown tags are skipped on load.

use std::path::Path;

use serde_json::{json, Map, Value};
use soel_core::WeightMatrix;

use crate::adam::AdamState;
use crate::config::{ModelConfig, OuterLoopConfig};
use crate::error::{Error, Result};
use crate::model::{MetaModel, Provenance};
use crate::settings::Settings;
use crate::train::{BestSnapshot, TrainState};

const MAGIC: &[u8; 8] = b"SOELCKPT";
const VERSION: u32 = 1;
const TAG_CONFIG: u32 = 1;
const TAG_TOPOLOGY: u32 = 2;
const TAG_SHADOW: u32 = 3;
const TAG_QUANTIZED: u32 = 4;
const TAG_PROVENANCE: u32 = 5;
const TAG_TRAINING: u32 = 6;

/// State needed to continue meta-training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingCheckpoint {
    pub outer: OuterLoopConfig,
    pub seed: u64,
    pub shot: usize,
    pub state: TrainState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: MetaModel,
    pub training: Option<TrainingCheckpoint>,
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, x: u8) {
        self.0.push(x);
    }
    fn u32(&mut self, x: u32) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn u64(&mut self, x: u64) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn f64(&mut self, x: f64) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn f64s(&mut self, xs: &[f64]) {
        self.u64(xs.len() as u64);
        xs.iter().for_each(|&x| self.f64(x));
    }
    fn text(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn section(&mut self, tag: u32, payload: Writer) {
        self.u32(tag);
        self.u64(payload.0.len() as u64);
        self.0.extend(payload.0);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("length overflows".into()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len()?;
        if n > (self.buf.len() - self.pos) / 8 {
            return Err(Error::Checkpoint("array length exceeds payload".into()));
        }
        (0..n).map(|_| self.f64()).collect()
    }
    fn text(&mut self) -> Result<String> {
        let n = self.len()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Checkpoint("text is not UTF-8".into()))
    }
}

fn write_training(t: &TrainingCheckpoint) -> Writer {
    let mut w = Writer::default();
    let mut outer = Settings::new();
    t.outer.write(&mut outer);
    w.text(&outer.to_text());
    w.u64(t.seed);
    w.u64(t.shot as u64);
    w.u64(t.state.iteration);
    w.u64(t.state.adam.t);
    w.u64(t.state.adam.m.len() as u64);
    for (m, v) in t.state.adam.m.iter().zip(&t.state.adam.v) {
        w.f64s(m);
        w.f64s(v);
    }
    match &t.state.best {
        None => w.u8(0),
        Some(b) => {
            w.u8(1);
            w.u64(b.iteration);
            w.f64(b.val_acc);
            w.u64(b.params.len() as u64);
            b.params.iter().for_each(|p| w.f64s(p));
        }
    }
    w
}

fn read_training(r: &mut Reader<'_>) -> Result<TrainingCheckpoint> {
    let mut outer = OuterLoopConfig::default();
    outer.apply(&Settings::parse(&r.text()?)?)?;
    let seed = r.u64()?;
    let shot = r.len()?;
    let iteration = r.u64()?;
    let t = r.u64()?;
    let blocks = r.len()?;
    let mut m = Vec::new();
    let mut v = Vec::new();
    for _ in 0..blocks {
        m.push(r.f64s()?);
        v.push(r.f64s()?);
    }
    let best = match r.u8()? {
        0 => None,
        1 => {
            let iteration = r.u64()?;
            let val_acc = r.f64()?;
            let n = r.len()?;
            let params = (0..n).map(|_| r.f64s()).collect::<Result<_>>()?;
            Some(BestSnapshot {
                iteration,
                val_acc,
                params,
            })
        }
        x => return Err(Error::Checkpoint(format!("bad best-snapshot flag {x}"))),
    };
    Ok(TrainingCheckpoint {
        outer,
        seed,
        shot,
        state: TrainState {
            adam: AdamState { t, m, v },
            iteration,
            best,
        },
    })
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let model = &self.model;
        let mut out = Writer::default();
        out.0.extend_from_slice(MAGIC);
        out.u32(VERSION);

        let mut s = Writer::default();
        s.text(&model.config.to_settings().to_text());
        out.section(TAG_CONFIG, s);

        let layers = model.net.layers();
        let mut s = Writer::default();
        s.u32(layers.len() as u32);
        for l in layers {
            s.u64(l.weights.rows() as u64);
            s.u64(l.weights.cols() as u64);
            s.u8(u8::from(l.plastic));
        }
        out.section(TAG_TOPOLOGY, s);

        let mut s = Writer::default();
        for l in layers {
            l.weights.shadow().iter().for_each(|&x| s.f64(x));
        }
        out.section(TAG_SHADOW, s);

        let mut s = Writer::default();
        for l in layers {
            l.weights.quantized().iter().for_each(|&q| s.0.extend_from_slice(&q.to_le_bytes()));
        }
        out.section(TAG_QUANTIZED, s);

        let mut s = Writer::default();
        s.u64(model.provenance.seed);
        s.u64(model.provenance.iteration);
        s.u64(model.provenance.rounding_seed);
        out.section(TAG_PROVENANCE, s);

        if let Some(t) = &self.training {
            out.section(TAG_TRAINING, write_training(t));
        }
        out.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let mut config = None;
        let mut topology = None;
        let mut shadow = None;
        let mut quantized = None;
        let mut provenance = None;
        let mut training = None;
        while !r.done() {
            let tag = r.u32()?;
            let len = r.len()?;
            let payload = r.take(len)?;
            let mut p = Reader::new(payload);
            match tag {
                TAG_CONFIG => config = Some(ModelConfig::from_settings(&Settings::parse(&p.text()?)?)?),
                TAG_TOPOLOGY => {
                    let n = p.u32()? as usize;
                    let mut t = Vec::with_capacity(n.min(64));
                    for _ in 0..n {
                        t.push((p.len()?, p.len()?, p.u8()? != 0));
                    }
                    topology = Some(t);
                }
                TAG_SHADOW => {
                    shadow = Some(
                        payload
                            .chunks_exact(8)
                            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                            .collect::<Vec<_>>(),
                    );
                    if payload.len() % 8 != 0 {
                        return Err(Error::Checkpoint("shadow section is not a whole number of f64".into()));
                    }
                }
                TAG_QUANTIZED => {
                    quantized = Some(
                        payload
                            .chunks_exact(2)
                            .map(|c| i16::from_le_bytes([c[0], c[1]]))
                            .collect::<Vec<_>>(),
                    );
                    if payload.len() % 2 != 0 {
                        return Err(Error::Checkpoint("quantized section is not a whole number of i16".into()));
                    }
                }
                TAG_PROVENANCE => {
                    provenance = Some(Provenance {
                        seed: p.u64()?,
                        iteration: p.u64()?,
                        rounding_seed: p.u64()?,
                    })
                }
                TAG_TRAINING => training = Some(read_training(&mut p)?),
                _ => {}
            }
        }
        let missing = |what: &str| Error::Checkpoint(format!("missing {what} section"));
        let config = config.ok_or_else(|| missing("config"))?;
        let topology = topology.ok_or_else(|| missing("topology"))?;
        let shadow = shadow.ok_or_else(|| missing("shadow weights"))?;
        let quantized = quantized.ok_or_else(|| missing("quantized weights"))?;
        let provenance = provenance.ok_or_else(|| missing("provenance"))?;
        let model = assemble(config, &topology, &shadow, &quantized, provenance)?;
        if let Some(t) = &training {
            if !t.state.adam.matches(&model.params()) {
                return Err(Error::Checkpoint("training state does not match the weights".into()));
            }
        }
        Ok(Self { model, training })
    }
}

fn assemble(
    config: ModelConfig,
    topology: &[(usize, usize, bool)],
    shadow: &[f64],
    quantized: &[i16],
    provenance: Provenance,
) -> Result<MetaModel> {
    let total: usize = topology.iter().map(|&(r, c, _)| r * c).sum();
    if shadow.len() != total || quantized.len() != total {
        return Err(Error::Checkpoint(format!(
            "weight sections hold {} and {} entries, topology needs {total}",
            shadow.len(),
            quantized.len()
        )));
    }
    let mut at = 0;
    let mut weights = Vec::new();
    for &(rows, cols, _) in topology {
        let n = rows * cols;
        weights.push(WeightMatrix::from_parts(
            rows,
            cols,
            shadow[at..at + n].to_vec(),
            quantized[at..at + n].to_vec(),
        )?);
        at += n;
    }
    let model = MetaModel::from_weights(config, weights, provenance)?;
    let plastic: Vec<bool> = topology.iter().map(|t| t.2).collect();
    let expected: Vec<bool> = model.net.layers().iter().map(|l| l.plastic).collect();
    if plastic != expected {
        return Err(Error::Checkpoint("plastic flags disagree with the configuration".into()));
    }
    Ok(model)
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    std::fs::write(path, ckpt.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

/// JSON form of the model (training state is not exported).
pub fn export_json(model: &MetaModel) -> String {
    let config: Map<String, Value> = model
        .config
        .to_settings()
        .iter()
        .map(|(k, v)| (k.to_string(), Value::String(v.to_string())))
        .collect();
    let layers: Vec<Value> = model
        .net
        .layers()
        .iter()
        .map(|l| {
            json!({
                "rows": l.weights.rows(),
                "cols": l.weights.cols(),
                "plastic": l.plastic,
                "shadow": l.weights.shadow(),
                "quantized": l.weights.quantized(),
            })
        })
        .collect();
    let doc = json!({
        "format": "soel-model",
        "version": VERSION,
        "config": config,
        "layers": layers,
        "provenance": {
            "seed": model.provenance.seed,
            "iteration": model.provenance.iteration,
            "rounding_seed": model.provenance.rounding_seed,
        },
    });
    serde_json::to_string_pretty(&doc).expect("JSON values serialize")
}

pub fn import_json(text: &str) -> Result<MetaModel> {
    let bad = |what: &str| Error::Checkpoint(format!("JSON model: {what}"));
    let doc: Value = serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("JSON model: {e}")))?;
    if doc["format"] != "soel-model" {
        return Err(bad("missing or wrong `format`"));
    }
    let cfg_obj = doc["config"].as_object().ok_or_else(|| bad("`config` must be an object"))?;
    let mut settings = Settings::new();
    for (k, v) in cfg_obj {
        settings.set(k, v.as_str().ok_or_else(|| bad("config values must be strings"))?);
    }
    settings.reject_unknown(ModelConfig::KEYS)?;
    let config = ModelConfig::from_settings(&settings)?;
    let layers = doc["layers"].as_array().ok_or_else(|| bad("`layers` must be an array"))?;
    let mut topology = Vec::new();
    let mut shadow = Vec::new();
    let mut quantized = Vec::new();
    for l in layers {
        let dim = |k: &str| l[k].as_u64().map(|x| x as usize).ok_or_else(|| bad("layer dims must be integers"));
        topology.push((
            dim("rows")?,
            dim("cols")?,
            l["plastic"].as_bool().ok_or_else(|| bad("`plastic` must be a bool"))?,
        ));
        for x in l["shadow"].as_array().ok_or_else(|| bad("`shadow` must be an array"))? {
            shadow.push(x.as_f64().ok_or_else(|| bad("shadow weights must be numbers"))?);
        }
        for x in l["quantized"].as_array().ok_or_else(|| bad("`quantized` must be an array"))? {
            let q = x
                .as_i64()
                .and_then(|q| i16::try_from(q).ok())
                .ok_or_else(|| bad("quantized weights must be 16-bit integers"))?;
            quantized.push(q);
        }
    }
    let p = &doc["provenance"];
    let field = |k: &str| p[k].as_u64().ok_or_else(|| bad("provenance fields must be integers"));
    let provenance = Provenance {
        seed: field("seed")?,
        iteration: field("iteration")?,
        rounding_seed: field("rounding_seed")?,
    };
    assemble(config, &topology, &shadow, &quantized, provenance)
}
