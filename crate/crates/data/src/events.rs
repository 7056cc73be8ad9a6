//! Raw event streams, their binary file format and binning into frames.
//!
//! File layout (little-endian): the 8-byte magic `SOELEVT1`, `u16` width,
//! `u16` height, `u64` event count, then one 9-byte record per event:
//! `u32` timestamp in microseconds, `u16` x, `u16` y, `u8` polarity.

use std::fs;
use std::path::Path;

use soel_core::BinnedSample;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SOELEVT1";
const HEADER: usize = 8 + 2 + 2 + 8;
const RECORD: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub t_us: u32,
    pub x: u16,
    pub y: u16,
    pub polarity: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    pub width: u16,
    pub height: u16,
    pub events: Vec<Event>,
}

impl EventStream {
    pub fn new(width: u16, height: u16, events: Vec<Event>) -> Result<Self> {
        let s = Self { width, height, events };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::format("event stream", "sensor dimensions must be positive"));
        }
        let mut last = 0;
        for (k, e) in self.events.iter().enumerate() {
            if e.t_us < last {
                return Err(Error::format("event stream", format!("timestamp decreases at event {k}")));
            }
            if e.x >= self.width || e.y >= self.height {
                return Err(Error::format(
                    "event stream",
                    format!("event {k} at ({}, {}) outside {}x{}", e.x, e.y, self.width, self.height),
                ));
            }
            if e.polarity > 1 {
                return Err(Error::format("event stream", format!("event {k} has polarity {}", e.polarity)));
            }
            last = e.t_us;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER + RECORD * self.events.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&(self.events.len() as u64).to_le_bytes());
        for e in &self.events {
            out.extend_from_slice(&e.t_us.to_le_bytes());
            out.extend_from_slice(&e.x.to_le_bytes());
            out.extend_from_slice(&e.y.to_le_bytes());
            out.push(e.polarity);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER || &bytes[..8] != MAGIC {
            return Err(Error::format("event file", "missing SOELEVT1 header"));
        }
        let width = u16::from_le_bytes([bytes[8], bytes[9]]);
        let height = u16::from_le_bytes([bytes[10], bytes[11]]);
        let count = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
        let body = &bytes[HEADER..];
        if (body.len() as u64) != count.saturating_mul(RECORD as u64) {
            return Err(Error::format(
                "event file",
                format!("header announces {count} events but body has {} bytes", body.len()),
            ));
        }
        let events = body
            .chunks_exact(RECORD)
            .map(|r| Event {
                t_us: u32::from_le_bytes([r[0], r[1], r[2], r[3]]),
                x: u16::from_le_bytes([r[4], r[5]]),
                y: u16::from_le_bytes([r[6], r[7]]),
                polarity: r[8],
            })
            .collect();
        Self::new(width, height, events)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinningConfig {
    /// Output frames are `grid x grid`.
    pub grid: usize,
    pub dt_us: u32,
    pub steps: usize,
    /// Merge both polarities into a single channel.
    pub merge_polarity: bool,
}

impl Default for BinningConfig {
    fn default() -> Self {
        Self {
            grid: soel_core::sample::GRID,
            dt_us: 1000,
            steps: soel_core::sample::STEPS,
            merge_polarity: false,
        }
    }
}

impl BinningConfig {
    pub fn channels(&self) -> usize {
        if self.merge_polarity {
            1
        } else {
            2
        }
    }
}

/// Bins `stream` into binary frames. Coordinates are scaled to the grid by
/// integer division (`x * grid / width`), so each output cell pools a block
/// of sensor pixels; a cell is 1 if at least one event lands in it. Polarity
/// `p` goes to channel `p` unless polarities are merged. Events at or after
/// `steps * dt` are dropped.
pub fn bin_events(stream: &EventStream, cfg: &BinningConfig, label: u32) -> Result<BinnedSample> {
    stream.validate()?;
    if cfg.dt_us == 0 || cfg.grid == 0 {
        return Err(Error::format("binning config", "grid and dt must be positive"));
    }
    let channels = cfg.channels();
    let mut sample = BinnedSample::empty(channels, cfg.grid, cfg.grid, cfg.steps, label);
    let (w, h) = (usize::from(stream.width), usize::from(stream.height));
    for e in &stream.events {
        let t = (e.t_us / cfg.dt_us) as usize;
        if t >= cfg.steps {
            break;
        }
        let x = usize::from(e.x) * cfg.grid / w;
        let y = usize::from(e.y) * cfg.grid / h;
        let c = if cfg.merge_polarity { 0 } else { usize::from(e.polarity) };
        sample.set(c, y, x, t);
    }
    Ok(sample)
}

/// Re-expresses a binned sample as events on a `width x height` sensor
/// equal to its grid, one event in the middle of every active cell's step.
pub fn sample_to_events(sample: &BinnedSample, dt_us: u32) -> Result<EventStream> {
    let (h, w) = (sample.height(), sample.width());
    let mut events = Vec::new();
    for t in 0..sample.steps() {
        for &idx in sample.active(t) {
            let idx = idx as usize;
            let c = idx / (h * w);
            let y = (idx / w) % h;
            let x = idx % w;
            events.push(Event {
                t_us: t as u32 * dt_us + dt_us / 2,
                x: x as u16,
                y: y as u16,
                polarity: c as u8,
            });
        }
    }
    EventStream::new(w as u16, h as u16, events)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(t_us: u32, x: u16, y: u16, polarity: u8) -> Event {
        Event { t_us, x, y, polarity }
    }

    #[test]
    fn empty_stream_bins_to_zero() {
        let s = EventStream::new(128, 128, vec![]).unwrap();
        let b = bin_events(&s, &BinningConfig::default(), 0).unwrap();
        assert_eq!((b.channels(), b.height(), b.width(), b.steps()), (2, 32, 32, 100));
        assert_eq!(b.total_spikes(), 0);
    }

    #[test]
    fn single_event_sets_one_cell() {
        let s = EventStream::new(32, 32, vec![ev(500, 3, 4, 1)]).unwrap();
        let b = bin_events(&s, &BinningConfig::default(), 0).unwrap();
        assert_eq!(b.total_spikes(), 1);
        assert!(b.get(1, 4, 3, 0));
    }

    #[test]
    fn repeated_events_saturate() {
        let events = (0..10).map(|k| ev(2000 + k * 50, 7, 7, 0)).collect();
        let s = EventStream::new(32, 32, events).unwrap();
        let b = bin_events(&s, &BinningConfig::default(), 0).unwrap();
        assert_eq!(b.total_spikes(), 1);
        assert!(b.get(0, 7, 7, 2));
    }

    #[test]
    fn downscales_and_drops_late_events() {
        let s = EventStream::new(128, 64, vec![ev(0, 127, 63, 0), ev(0, 4, 2, 0), ev(100_000, 0, 0, 0)]).unwrap();
        let b = bin_events(&s, &BinningConfig::default(), 0).unwrap();
        assert_eq!(b.total_spikes(), 2);
        assert!(b.get(0, 31, 31, 0));
        assert!(b.get(0, 1, 1, 0));
    }

    #[test]
    fn merged_polarity_uses_one_channel() {
        let cfg = BinningConfig {
            merge_polarity: true,
            ..BinningConfig::default()
        };
        let s = EventStream::new(32, 32, vec![ev(0, 1, 1, 0), ev(10, 1, 1, 1)]).unwrap();
        let b = bin_events(&s, &cfg, 0).unwrap();
        assert_eq!(b.inputs(), 1024);
        assert_eq!(b.total_spikes(), 1);
    }

    #[test]
    fn invalid_streams_rejected() {
        assert!(EventStream::new(32, 32, vec![ev(10, 0, 0, 0), ev(5, 0, 0, 0)]).is_err());
        assert!(EventStream::new(32, 32, vec![ev(0, 32, 0, 0)]).is_err());
        assert!(EventStream::new(32, 32, vec![ev(0, 0, 0, 2)]).is_err());
    }

    #[test]
    fn bytes_round_trip() {
        let s = EventStream::new(346, 260, vec![ev(0, 345, 259, 1), ev(77, 3, 4, 0)]).unwrap();
        let bytes = s.to_bytes();
        assert_eq!(bytes.len(), 20 + 2 * 9);
        assert_eq!(EventStream::from_bytes(&bytes).unwrap(), s);
        assert!(EventStream::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(EventStream::from_bytes(b"NOTMAGIC").is_err());
    }
}
