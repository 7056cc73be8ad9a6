use std::fs;

use soel_core::{BinnedSample, RandomSource};
use soel_data::{bin_events, sample_to_events, BinningConfig, Event, EventStream, MetaDataset, Partition};

fn tiny_sample(class: u32, k: usize) -> BinnedSample {
    let mut s = BinnedSample::empty(2, 32, 32, 100, class);
    for t in 0..100 {
        if (t + k) % 3 == 0 {
            s.set((t + class as usize) % 2, class as usize % 32, (t + k) % 32, t);
        }
    }
    s
}

#[test]
fn binning_a_rendered_sample_is_idempotent() {
    let s = tiny_sample(3, 1);
    let cfg = BinningConfig::default();
    let ev = sample_to_events(&s, cfg.dt_us).unwrap();
    let back = bin_events(&ev, &cfg, 3).unwrap();
    assert_eq!(back, s);
    let again = bin_events(&sample_to_events(&back, cfg.dt_us).unwrap(), &cfg, 3).unwrap();
    assert_eq!(again, back);
}

#[test]
fn loads_a_manifest_with_and_without_split() {
    let dir = tempfile::tempdir().unwrap();
    let mut lines = String::from("# class path\n");
    for class in 0..6u32 {
        for k in 0..3 {
            let name = format!("c{class}_{k}.evt");
            sample_to_events(&tiny_sample(class, k), 1000)
                .unwrap()
                .write(&dir.path().join(&name))
                .unwrap();
            lines.push_str(&format!("{class} {name}\n"));
        }
    }
    let manifest = dir.path().join("manifest.txt");
    fs::write(&manifest, &lines).unwrap();
    let cfg = BinningConfig::default();
    let ds = MetaDataset::from_manifest(&manifest, &cfg, [0.5, 0.17, 0.33], &RandomSource::new(1, 1)).unwrap();
    assert_eq!(ds.classes().count(), 6);
    assert_eq!(ds.class(4)[2], tiny_sample(4, 2));
    assert_eq!(ds.split().all().len(), 6);

    fs::write(dir.path().join("split.txt"), "train 0 1 2\nval 3\ntest 4 5\n").unwrap();
    fs::write(&manifest, format!("{lines}split split.txt\n")).unwrap();
    let ds = MetaDataset::from_manifest(&manifest, &cfg, [0.5, 0.17, 0.33], &RandomSource::new(1, 1)).unwrap();
    assert_eq!(ds.partition(Partition::Test), &[4, 5]);
}

#[test]
fn manifest_errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = BinningConfig::default();
    let rng = RandomSource::new(0, 0);
    assert!(MetaDataset::from_manifest(&dir.path().join("missing.txt"), &cfg, [0.6, 0.2, 0.2], &rng).is_err());
    let manifest = dir.path().join("m.txt");
    fs::write(&manifest, "zero nothing.evt\n").unwrap();
    assert!(MetaDataset::from_manifest(&manifest, &cfg, [0.6, 0.2, 0.2], &rng).is_err());
    fs::write(&manifest, "0 nothing.evt\n").unwrap();
    assert!(MetaDataset::from_manifest(&manifest, &cfg, [0.6, 0.2, 0.2], &rng).is_err());
}

#[test]
fn event_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let stream = EventStream::new(
        64,
        48,
        vec![
            Event {
                t_us: 0,
                x: 1,
                y: 2,
                polarity: 0,
            },
            Event {
                t_us: 5,
                x: 63,
                y: 47,
                polarity: 1,
            },
        ],
    )
    .unwrap();
    let path = dir.path().join("a.evt");
    stream.write(&path).unwrap();
    assert_eq!(EventStream::read(&path).unwrap(), stream);
}
