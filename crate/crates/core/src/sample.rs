//! Binary spike tensors fed to the network, one frame per 1 ms step.

use crate::error::{check_dim, Error, Result};

/// Default spatial resolution after downscaling.
pub const GRID: usize = 32;
/// Default number of 1 ms steps per sample.
pub const STEPS: usize = 100;

/// A `channels x height x width x steps` binary tensor, stored sparsely as the
/// sorted list of active flat input indices for every step.
///
/// The flat index of cell `(c, y, x)` is `(c * height + y) * width + x`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinnedSample {
    channels: usize,
    height: usize,
    width: usize,
    frames: Vec<Vec<u32>>,
    label: u32,
}

impl BinnedSample {
    pub fn empty(channels: usize, height: usize, width: usize, steps: usize, label: u32) -> Self {
        Self {
            channels,
            height,
            width,
            frames: vec![Vec::new(); steps],
            label,
        }
    }

    /// Builds from per-step active index lists. Lists are sorted and
    /// de-duplicated; indices must be inside the tensor.
    pub fn from_frames(channels: usize, height: usize, width: usize, mut frames: Vec<Vec<u32>>, label: u32) -> Result<Self> {
        let inputs = channels * height * width;
        for frame in &mut frames {
            frame.sort_unstable();
            frame.dedup();
            if let Some(&last) = frame.last() {
                if last as usize >= inputs {
                    return Err(Error::DimensionMismatch {
                        context: "sample frame index",
                        expected: inputs,
                        got: last as usize + 1,
                    });
                }
            }
        }
        Ok(Self {
            channels,
            height,
            width,
            frames,
            label,
        })
    }

    /// Builds from a dense `[step][input]` boolean tensor.
    pub fn from_dense(channels: usize, height: usize, width: usize, dense: &[Vec<bool>], label: u32) -> Result<Self> {
        let inputs = channels * height * width;
        let mut frames = Vec::with_capacity(dense.len());
        for row in dense {
            check_dim("dense sample frame", inputs, row.len())?;
            frames.push(row.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i as u32).collect());
        }
        Ok(Self {
            channels,
            height,
            width,
            frames,
            label,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn steps(&self) -> usize {
        self.frames.len()
    }

    /// Number of network inputs (`channels * height * width`).
    pub fn inputs(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn label(&self) -> u32 {
        self.label
    }

    pub fn with_label(mut self, label: u32) -> Self {
        self.label = label;
        self
    }

    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    /// Active input indices at step `t` (sorted).
    pub fn active(&self, t: usize) -> &[u32] {
        &self.frames[t]
    }

    pub fn frames(&self) -> &[Vec<u32>] {
        &self.frames
    }

    pub fn get(&self, c: usize, y: usize, x: usize, t: usize) -> bool {
        let idx = self.index(c, y, x) as u32;
        self.frames[t].binary_search(&idx).is_ok()
    }

    /// Sets a cell to 1 (saturating).
    pub fn set(&mut self, c: usize, y: usize, x: usize, t: usize) {
        let idx = self.index(c, y, x) as u32;
        let frame = &mut self.frames[t];
        if let Err(pos) = frame.binary_search(&idx) {
            frame.insert(pos, idx);
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<bool>> {
        self.frames
            .iter()
            .map(|f| {
                let mut row = vec![false; self.inputs()];
                for &i in f {
                    row[i as usize] = true;
                }
                row
            })
            .collect()
    }

    /// Per-input spike counts over the whole sample.
    pub fn spike_counts(&self) -> Vec<u32> {
        let mut counts = vec![0u32; self.inputs()];
        for f in &self.frames {
            for &i in f {
                counts[i as usize] += 1;
            }
        }
        counts
    }

    pub fn total_spikes(&self) -> usize {
        self.frames.iter().map(Vec::len).sum()
    }

    /// Canonical byte encoding (dims, label, then each frame's indices).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for v in [self.channels, self.height, self.width, self.frames.len()] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.label.to_le_bytes());
        for f in &self.frames {
            out.extend_from_slice(&(f.len() as u32).to_le_bytes());
            for &i in f {
                out.extend_from_slice(&i.to_le_bytes());
            }
        }
        out
    }
}
