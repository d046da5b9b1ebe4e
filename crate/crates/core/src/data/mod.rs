//! Gait dataset types, ingestion, resampling and filtering.

pub mod io;
pub mod markers;
pub mod ops;
pub mod resample;
pub mod types;

pub use io::{export_dataset, ingest_dataset, load_canonical, DatasetFormat, DatasetSchema};
pub use markers::{derive_pelvis_lateral, MarkerTrace};
pub use ops::{ensemble_average, filter_speed_levels, DEFAULT_TREADMILL_LIMIT_KMH};
pub use resample::{resample_cycle, PeriodicCubic};
pub use types::*;
