//! Few-shot task data: event ingestion, meta-splits, episodes, a synthetic
//! task family and the KNN baseline.

pub mod dataset;
pub mod episode;
pub mod error;
pub mod events;
pub mod knn;
pub mod split;
pub mod synthetic;

pub use dataset::MetaDataset;
pub use episode::{build_episode, Episode};
pub use error::{Error, Result};
pub use events::{bin_events, sample_to_events, BinningConfig, Event, EventStream};
pub use knn::{knn_episode_accuracy, knn_predict};
pub use split::{MetaSplit, Partition};
pub use synthetic::{generate_synthetic_family, SyntheticConfig};
