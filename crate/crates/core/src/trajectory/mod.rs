//! Continuous joint trajectories: quintic splines through key events and
//! the gait patterns built from them.

pub mod export;
pub mod pattern;
pub mod spline;

pub use export::{events_csv, pattern_csv, plot_data_csv};
pub use pattern::{
    digest, generate_personalized, generate_standard, pick_random_pattern, random_subject, sample_pattern,
    ChannelTrajectory, GaitPattern, PatternKind, SampledSeries, SampledTrajectory,
};
pub use spline::{build_spline, QuinticSegment, TrajectorySpline};
