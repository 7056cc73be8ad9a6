//! N-way K-shot episode sampling.

use rand::seq::index::sample as sample_indices;
use soel_core::{BinnedSample, RandomSource};

use crate::dataset::MetaDataset;
use crate::error::{Error, Result};
use crate::split::Partition;

/// One few-shot task. Sample labels are output indices; `classes[i]` is the
/// dataset class mapped to output `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub way: usize,
    pub shot: usize,
    pub classes: Vec<u32>,
    /// `shot` samples per output, in output order.
    pub train: Vec<BinnedSample>,
    /// `queries` samples per output, in output order.
    pub test: Vec<BinnedSample>,
    /// `(class, sample index)` of every train and then test sample.
    pub provenance: Vec<(u32, usize)>,
}

/// Draws `way` classes of partition `part` without replacement, then `shot`
/// training and `queries` test samples per class, disjoint.
pub fn build_episode(ds: &MetaDataset, part: Partition, way: usize, shot: usize, queries: usize, rng: &RandomSource) -> Result<Episode> {
    let pool = ds.partition(part);
    if way == 0 || pool.len() < way {
        return Err(Error::Insufficient(format!(
            "{way}-way episode needs {way} classes, partition {part} has {}",
            pool.len()
        )));
    }
    let mut gen = rng.rng();
    let picked = sample_indices(&mut gen, pool.len(), way).into_vec();
    let classes: Vec<u32> = picked.iter().map(|&i| pool[i]).collect();
    let mut train = Vec::with_capacity(way * shot);
    let mut test = Vec::with_capacity(way * queries);
    let mut train_prov = Vec::new();
    let mut test_prov = Vec::new();
    for (out, &c) in classes.iter().enumerate() {
        let samples = ds.class(c);
        if samples.len() < shot + queries {
            return Err(Error::Insufficient(format!(
                "class {c} has {} samples, episode needs {}",
                samples.len(),
                shot + queries
            )));
        }
        let idx = sample_indices(&mut gen, samples.len(), shot + queries).into_vec();
        for (k, &i) in idx.iter().enumerate() {
            let s = samples[i].clone().with_label(out as u32);
            if k < shot {
                train.push(s);
                train_prov.push((c, i));
            } else {
                test.push(s);
                test_prov.push((c, i));
            }
        }
    }
    // output-major: all shots of output 0 first, and so on
    train_prov.extend(test_prov);
    Ok(Episode {
        way,
        shot,
        classes,
        train,
        test,
        provenance: train_prov,
    })
}
