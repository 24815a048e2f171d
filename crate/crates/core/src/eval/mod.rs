//! Scoring and experiment drivers.

mod classification;
mod cv;
mod entities;
mod metrics;
mod timing;

pub use classification::{classification_report, ClassScores, ClassificationReport};
pub use cv::{run_cv_experiment, CvReport, FoldResult, ScoreRow, SummaryRow, Task, TaskConfig};
pub use entities::{
    match_entities, mode_report, optimal_matches, EntityEvaluator, EntityMatchReport, LabelCounts, LabelScores,
    MatchMode, ModeReport,
};
pub use metrics::{aggregate, prf, Average, Counts, Scores};
pub use timing::{benchmark_timing, hardware_descriptor, time_inference, TimingReport};
