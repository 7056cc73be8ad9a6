//! Disjoint class partitions for meta-training, validation and testing.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use soel_core::RandomSource;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Partition {
    Train,
    Val,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Val, Partition::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Val => "val",
            Partition::Test => "test",
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Partition::Train),
            "val" | "validation" => Ok(Partition::Val),
            "test" => Ok(Partition::Test),
            _ => Err(Error::format("split file", format!("unknown partition `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetaSplit {
    pub train: Vec<u32>,
    pub val: Vec<u32>,
    pub test: Vec<u32>,
}

impl MetaSplit {
    pub fn new(train: Vec<u32>, val: Vec<u32>, test: Vec<u32>) -> Result<Self> {
        let s = Self { train, val, test };
        s.validate()?;
        Ok(s)
    }

    pub fn classes(&self, p: Partition) -> &[u32] {
        match p {
            Partition::Train => &self.train,
            Partition::Val => &self.val,
            Partition::Test => &self.test,
        }
    }

    pub fn all(&self) -> BTreeSet<u32> {
        self.train.iter().chain(&self.val).chain(&self.test).copied().collect()
    }

    /// Fails unless the three partitions are pairwise disjoint.
    pub fn validate(&self) -> Result<()> {
        let n = self.train.len() + self.val.len() + self.test.len();
        if self.all().len() != n {
            return Err(Error::format("meta-split", "partitions overlap or repeat a class"));
        }
        Ok(())
    }

    /// Shuffles `classes` with `rng` and cuts them by `ratios`
    /// (train, val, test). Train and val sizes are rounded to nearest and
    /// test takes the rest.
    pub fn by_ratio(classes: &[u32], ratios: [f64; 3], rng: &RandomSource) -> Result<Self> {
        if ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) || ratios.iter().sum::<f64>() <= 0.0 {
            return Err(Error::format("split ratio", format!("{ratios:?}")));
        }
        let total: f64 = ratios.iter().sum();
        let n = classes.len();
        let n_train = ((n as f64) * ratios[0] / total).round() as usize;
        let n_val = (((n as f64) * ratios[1] / total).round() as usize).min(n - n_train.min(n));
        let mut order = classes.to_vec();
        order.shuffle(&mut rng.rng());
        let train = order[..n_train.min(n)].to_vec();
        let val = order[train.len()..train.len() + n_val].to_vec();
        let test = order[train.len() + n_val..].to_vec();
        Self::new(train, val, test)
    }

    /// Plain-text form: one line per partition, `name id id id ...`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for p in Partition::ALL {
            out.push_str(p.as_str());
            for c in self.classes(p) {
                out.push(' ');
                out.push_str(&c.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut parts: [Option<Vec<u32>>; 3] = [None, None, None];
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut tok = line.split_whitespace();
            let p: Partition = tok.next().expect("nonempty line").parse()?;
            let ids = tok
                .map(|t| {
                    t.parse::<u32>()
                        .map_err(|_| Error::format("split file", format!("bad class id `{t}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            let slot = &mut parts[p as usize];
            if slot.is_some() {
                return Err(Error::format("split file", format!("partition `{p}` listed twice")));
            }
            *slot = Some(ids);
        }
        let [train, val, test] = parts;
        Self::new(train.unwrap_or_default(), val.unwrap_or_default(), test.unwrap_or_default())
    }
}
