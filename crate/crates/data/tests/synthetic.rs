use soel_core::{BinnedSample, RandomSource};
use soel_data::{build_episode, generate_synthetic_family, knn_episode_accuracy, MetaDataset, Partition, SyntheticConfig};

fn dist(a: &BinnedSample, b: &BinnedSample) -> f64 {
    a.spike_counts()
        .iter()
        .zip(b.spike_counts())
        .map(|(&x, y)| (f64::from(x) - f64::from(y)).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn knn_accuracy(ds: &MetaDataset, episodes: u64) -> f64 {
    (0..episodes)
        .map(|i| {
            let ep = build_episode(ds, Partition::Test, 5, 1, 10, &RandomSource::new(3, i)).unwrap();
            knn_episode_accuracy(&ep, 1).unwrap()
        })
        .sum::<f64>()
        / episodes as f64
}

#[test]
fn default_family_splits_64_16_20() {
    let ds = generate_synthetic_family(&SyntheticConfig::default(), 1).unwrap();
    let s = ds.split();
    assert_eq!(
        (
            s.classes(Partition::Train).len(),
            s.classes(Partition::Val).len(),
            s.classes(Partition::Test).len()
        ),
        (64, 16, 20)
    );
    assert_eq!(ds.inputs(), 2 * 32 * 32);
    assert_eq!(ds.steps(), 100);
    assert!(ds.classes().all(|(_, v)| v.len() == 100));
}

#[test]
fn same_seed_gives_identical_bytes() {
    let cfg = SyntheticConfig {
        classes: 10,
        samples_per_class: 4,
        ..SyntheticConfig::default()
    };
    let a = generate_synthetic_family(&cfg, 77).unwrap().to_bytes();
    let b = generate_synthetic_family(&cfg, 77).unwrap().to_bytes();
    let c = generate_synthetic_family(&cfg, 78).unwrap().to_bytes();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn samples_are_closer_within_a_class() {
    let cfg = SyntheticConfig {
        classes: 12,
        samples_per_class: 6,
        jitter: 0.3,
        ..SyntheticConfig::default()
    };
    let ds = generate_synthetic_family(&cfg, 4).unwrap();
    let classes: Vec<&[BinnedSample]> = ds.classes().map(|(_, v)| v).collect();
    let (mut within, mut nw, mut across, mut na) = (0.0, 0, 0.0, 0);
    for (i, a) in classes.iter().enumerate() {
        for (j, b) in classes.iter().enumerate() {
            for (x, sa) in a.iter().enumerate() {
                for (y, sb) in b.iter().enumerate() {
                    if i == j && x < y {
                        within += dist(sa, sb);
                        nw += 1;
                    } else if i < j {
                        across += dist(sa, sb);
                        na += 1;
                    }
                }
            }
        }
    }
    assert!(within / f64::from(nw) < across / f64::from(na));
}

#[test]
fn knn_degrades_with_jitter() {
    let accs: Vec<f64> = [0.0, 0.5, 1.0]
        .into_iter()
        .map(|jitter| {
            let cfg = SyntheticConfig {
                jitter,
                ..SyntheticConfig::default()
            };
            knn_accuracy(&generate_synthetic_family(&cfg, 2).unwrap(), 40)
        })
        .collect();
    assert!(accs[0] > accs[1] && accs[1] > accs[2], "{accs:?}");
    assert!(accs[2] > 0.2);
}

#[test]
fn invalid_configs_are_rejected() {
    for cfg in [
        SyntheticConfig {
            classes: 0,
            ..SyntheticConfig::default()
        },
        SyntheticConfig {
            parts_per_class: 30,
            ..SyntheticConfig::default()
        },
        SyntheticConfig {
            jitter: 1.5,
            ..SyntheticConfig::default()
        },
    ] {
        assert!(generate_synthetic_family(&cfg, 0).is_err());
    }
}
