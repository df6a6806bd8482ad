//! Evaluation: IS/DR/SS segmentation and per-segment MAE, closed-loop target
//! error and failure rate, generalization studies and fine-tuning.
//!
//! Segment boundaries come from a threshold rule on ground-truth ω
//! ([`SEGMENT_THRESHOLD`], [`SEGMENT_HOLD`]); absent segments are reported
//! as `None`, never as zero.

mod closed_loop;
mod report;
mod segment;
mod studies;

pub use closed_loop::{
    aggregate, closed_loop_suite, episode_table, write_trace_csv, EpisodeSummary, SuiteConfig, SuiteGrid, SuiteResult,
};
pub use report::{segment_cells, segment_columns, MeanStd, MetricsReport, SegmentReport, Table};
pub use segment::{
    accumulate_errors, mae_by_segment, segment, Segment, SegmentBounds, SegmentErrors, SegmentMae, SEGMENT_HOLD,
    SEGMENT_THRESHOLD,
};
pub use studies::{
    check_leakage, class_transfer_study, evaluate_segments, finetune_experiment, sequence_error_table, study_table,
    unseen_object_study, window_ablation, Ablation, FinetuneConfig, FinetuneResult, ModelSpec, StudyRow,
    ABLATION_WINDOWS,
};
