//! Labeled samples grouped by class, plus manifest loading.
//!
//! A manifest is a text file with one `class_id path` pair per line (paths
//! relative to the manifest). An optional `split PATH` line names a split
//! file; otherwise classes are split by ratio.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use soel_core::{BinnedSample, RandomSource};

use crate::error::{Error, Result};
use crate::events::{bin_events, BinningConfig, EventStream};
use crate::split::{MetaSplit, Partition};

#[derive(Debug, Clone, PartialEq)]
pub struct MetaDataset {
    classes: BTreeMap<u32, Vec<BinnedSample>>,
    split: MetaSplit,
}

impl MetaDataset {
    /// Every sample must match the shape of the first one, and the split must
    /// cover exactly the classes present.
    pub fn new(classes: BTreeMap<u32, Vec<BinnedSample>>, split: MetaSplit) -> Result<Self> {
        split.validate()?;
        let listed = split.all();
        let present: Vec<u32> = classes.keys().copied().collect();
        if listed.iter().copied().collect::<Vec<_>>() != present {
            return Err(Error::format("meta-dataset", "split does not cover exactly the classes present"));
        }
        let mut shape = None;
        for s in classes.values().flatten() {
            let sh = (s.channels(), s.height(), s.width(), s.steps());
            if *shape.get_or_insert(sh) != sh {
                return Err(Error::format(
                    "meta-dataset",
                    format!("sample shape {sh:?} differs from {:?}", shape.unwrap()),
                ));
            }
        }
        Ok(Self { classes, split })
    }

    pub fn split(&self) -> &MetaSplit {
        &self.split
    }

    pub fn class(&self, id: u32) -> &[BinnedSample] {
        self.classes.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn classes(&self) -> impl Iterator<Item = (u32, &[BinnedSample])> {
        self.classes.iter().map(|(&k, v)| (k, v.as_slice()))
    }

    pub fn partition(&self, p: Partition) -> &[u32] {
        self.split.classes(p)
    }

    fn first(&self) -> Option<&BinnedSample> {
        self.classes.values().flatten().next()
    }

    /// Network inputs per step (0 for an empty dataset).
    pub fn inputs(&self) -> usize {
        self.first().map_or(0, BinnedSample::inputs)
    }

    pub fn steps(&self) -> usize {
        self.first().map_or(0, BinnedSample::steps)
    }

    /// Stable byte serialization, used for identity checks.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.split.to_text().into_bytes();
        for (id, samples) in &self.classes {
            out.extend_from_slice(&id.to_le_bytes());
            out.extend_from_slice(&(samples.len() as u64).to_le_bytes());
            for s in samples {
                out.extend_from_slice(&s.to_bytes());
            }
        }
        out
    }

    /// Loads a manifest of event files.
    pub fn from_manifest(path: &Path, binning: &BinningConfig, ratios: [f64; 3], rng: &RandomSource) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let mut classes: BTreeMap<u32, Vec<BinnedSample>> = BTreeMap::new();
        let mut split = None;
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (head, rest) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| Error::format("manifest", format!("line {}: expected `class_id path`", n + 1)))?;
            let file = dir.join(rest.trim());
            if head == "split" {
                let t = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
                split = Some(MetaSplit::parse(&t)?);
                continue;
            }
            let class: u32 = head
                .parse()
                .map_err(|_| Error::format("manifest", format!("line {}: bad class id `{head}`", n + 1)))?;
            let stream = EventStream::read(&file)?;
            classes.entry(class).or_default().push(bin_events(&stream, binning, class)?);
        }
        let split = match split {
            Some(s) => s,
            None => {
                let ids: Vec<u32> = classes.keys().copied().collect();
                MetaSplit::by_ratio(&ids, ratios, rng)?
            }
        };
        Self::new(classes, split)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_must_match_classes() {
        let mut classes = BTreeMap::new();
        classes.insert(0, vec![BinnedSample::empty(1, 2, 2, 3, 0)]);
        classes.insert(1, vec![BinnedSample::empty(1, 2, 2, 3, 1)]);
        assert!(MetaDataset::new(classes.clone(), MetaSplit::new(vec![0], vec![], vec![1]).unwrap()).is_ok());
        assert!(MetaDataset::new(classes.clone(), MetaSplit::new(vec![0], vec![], vec![]).unwrap()).is_err());
        classes.insert(2, vec![BinnedSample::empty(1, 2, 2, 4, 2)]);
        assert!(MetaDataset::new(classes, MetaSplit::new(vec![0, 2], vec![], vec![1]).unwrap()).is_err());
    }
}
