//! A procedurally generated family of event-like classification tasks.
//!
//! Every class is a combination of `parts_per_class` parts drawn from a
//! shared dictionary. A part is a disc of pixels in the central region of
//! one polarity channel that fires with probability `rate` per step during
//! an interval of the sample. Samples perturb their class prototype:
//! each part is shifted in space and time, and peripheral distractor discs
//! with random timing are added. `jitter` in `[0, 1]` scales all three.

use std::collections::BTreeMap;

use rand::Rng;
use soel_core::{BinnedSample, RandomSource};

use crate::dataset::MetaDataset;
use crate::error::{Error, Result};
use crate::split::MetaSplit;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub classes: usize,
    pub samples_per_class: usize,
    pub channels: usize,
    pub grid: usize,
    pub steps: usize,
    /// Size of the shared part dictionary.
    pub parts: usize,
    pub parts_per_class: usize,
    /// Per-pixel, per-step firing probability inside an active disc.
    pub rate: f64,
    pub jitter: f64,
    /// Spatial shift of a part at full jitter, in pixels.
    pub max_shift: usize,
    /// Temporal shift of a part at full jitter, in steps.
    pub max_delay: usize,
    /// Distractor discs per sample at full jitter.
    pub max_distractors: usize,
    pub split: [f64; 3],
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            classes: 100,
            samples_per_class: 100,
            channels: 2,
            grid: soel_core::sample::GRID,
            steps: soel_core::sample::STEPS,
            parts: 24,
            parts_per_class: 4,
            rate: 0.25,
            jitter: 1.0,
            max_shift: 2,
            max_delay: 10,
            max_distractors: 6,
            split: [0.64, 0.16, 0.20],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Disc {
    channel: usize,
    cx: f64,
    cy: f64,
    radius: f64,
    onset: i64,
    duration: i64,
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::format("synthetic config", msg.to_string()));
        if self.classes == 0 || self.samples_per_class == 0 {
            return bad("classes and samples_per_class must be positive");
        }
        if self.grid < 16 || self.steps == 0 || !(1..=2).contains(&self.channels) {
            return bad("grid must be at least 16, steps positive, channels 1 or 2");
        }
        if self.parts_per_class == 0 || self.parts_per_class > self.parts {
            return bad("parts_per_class must be in 1..=parts");
        }
        if !(0.0..=1.0).contains(&self.rate) || !(0.0..=1.0).contains(&self.jitter) {
            return bad("rate and jitter must lie in [0, 1]");
        }
        Ok(())
    }

    fn dictionary(&self, rng: &RandomSource) -> Vec<Disc> {
        let mut g = rng.rng();
        let g_f = self.grid as f64;
        let lo = g_f * 0.3;
        let hi = g_f * 0.7;
        let steps = self.steps as i64;
        (0..self.parts)
            .map(|_| Disc {
                channel: g.random_range(0..self.channels),
                cx: g.random_range(lo..hi),
                cy: g.random_range(lo..hi),
                radius: g.random_range(1.5..2.8),
                onset: g.random_range(0..=steps * 3 / 10),
                duration: g.random_range(steps / 2..=steps * 7 / 10),
            })
            .collect()
    }

    fn compositions(&self, rng: &RandomSource) -> Vec<Vec<usize>> {
        let mut g = rng.rng();
        let mut seen = std::collections::BTreeSet::new();
        let mut out = Vec::with_capacity(self.classes);
        while out.len() < self.classes {
            let mut c = rand::seq::index::sample(&mut g, self.parts, self.parts_per_class).into_vec();
            c.sort_unstable();
            // distinct compositions as long as the dictionary allows it
            if seen.insert(c.clone()) || seen.len() >= binomial(self.parts, self.parts_per_class) {
                out.push(c);
            }
        }
        out
    }

    fn distractor(&self, g: &mut impl Rng) -> Disc {
        let g_f = self.grid as f64;
        let band = g_f * 0.18;
        // a point in the border band, on a random side
        let along = g.random_range(0.0..g_f);
        let across = g.random_range(0.0..band);
        let (cx, cy) = match g.random_range(0..4) {
            0 => (along, across),
            1 => (along, g_f - 1.0 - across),
            2 => (across, along),
            _ => (g_f - 1.0 - across, along),
        };
        let steps = self.steps as i64;
        let duration = g.random_range(steps / 5..=steps / 2);
        Disc {
            channel: g.random_range(0..self.channels),
            cx,
            cy,
            radius: g.random_range(1.5..2.8),
            onset: g.random_range(0..=steps - duration),
            duration,
        }
    }

    fn render(&self, discs: &[Disc], label: u32, g: &mut impl Rng) -> Result<BinnedSample> {
        let mut frames: Vec<Vec<u32>> = vec![Vec::new(); self.steps];
        let n = self.grid;
        for d in discs {
            let mut pixels = Vec::new();
            let r2 = d.radius * d.radius;
            for y in 0..n {
                for x in 0..n {
                    let (dx, dy) = (x as f64 - d.cx, y as f64 - d.cy);
                    if dx * dx + dy * dy <= r2 {
                        pixels.push(((d.channel * n + y) * n + x) as u32);
                    }
                }
            }
            let start = d.onset.max(0);
            let end = (d.onset + d.duration).min(self.steps as i64);
            for t in start..end {
                for &p in &pixels {
                    if g.random::<f64>() < self.rate {
                        frames[t as usize].push(p);
                    }
                }
            }
        }
        Ok(BinnedSample::from_frames(self.channels, n, n, frames, label)?)
    }

    /// Renders the noise-free firing pattern of a class at `rate` with the
    /// given stream; used for inspection.
    pub fn prototype_mask(&self, seed: u64, class: usize) -> Result<Vec<bool>> {
        self.validate()?;
        let root = RandomSource::new(seed, 0);
        let dict = self.dictionary(&root.substream(1));
        let comp = self.compositions(&root.substream(2));
        let c = comp
            .get(class)
            .ok_or_else(|| Error::format("synthetic class", format!("{class}")))?;
        let discs: Vec<Disc> = c.iter().map(|&k| dict[k]).collect();
        let full = SyntheticConfig { rate: 1.0, ..self.clone() };
        let s = full.render(&discs, 0, &mut root.rng())?;
        let mut mask = vec![false; s.inputs()];
        for (i, &c) in s.spike_counts().iter().enumerate() {
            mask[i] = c > 0;
        }
        Ok(mask)
    }
}

fn binomial(n: usize, k: usize) -> usize {
    let mut acc: u128 = 1;
    for i in 0..k as u128 {
        acc = acc * (n as u128 - i) / (i + 1);
    }
    acc.min(usize::MAX as u128) as usize
}

/// Generates the whole family and its meta-split. Sample `i` of class `c`
/// depends only on `(seed, c, i)` and the config.
pub fn generate_synthetic_family(cfg: &SyntheticConfig, seed: u64) -> Result<MetaDataset> {
    cfg.validate()?;
    let root = RandomSource::new(seed, 0);
    let dict = cfg.dictionary(&root.substream(1));
    let comp = cfg.compositions(&root.substream(2));
    let samples_src = root.substream(3);
    let shift = (cfg.max_shift as f64 * cfg.jitter).round() as i64;
    let delay = (cfg.max_delay as f64 * cfg.jitter).round() as i64;
    let distractors = (cfg.max_distractors as f64 * cfg.jitter).round() as usize;
    let mut classes = BTreeMap::new();
    for (c, parts) in comp.iter().enumerate() {
        let class_src = samples_src.substream(c as u64);
        let mut samples = Vec::with_capacity(cfg.samples_per_class);
        for i in 0..cfg.samples_per_class {
            let mut g = class_src.substream(i as u64).rng();
            let mut discs: Vec<Disc> = parts
                .iter()
                .map(|&k| {
                    let mut d = dict[k];
                    d.cx += g.random_range(-shift..=shift) as f64;
                    d.cy += g.random_range(-shift..=shift) as f64;
                    d.onset += g.random_range(-delay..=delay);
                    d
                })
                .collect();
            for _ in 0..distractors {
                discs.push(cfg.distractor(&mut g));
            }
            samples.push(cfg.render(&discs, c as u32, &mut g)?);
        }
        classes.insert(c as u32, samples);
    }
    let ids: Vec<u32> = (0..cfg.classes as u32).collect();
    let split = MetaSplit::by_ratio(&ids, cfg.split, &root.substream(4))?;
    MetaDataset::new(classes, split)
}
