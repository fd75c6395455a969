//! Detection scoring, dataset tooling and the latency benchmark.

pub mod augment;
pub mod bench;
pub mod files;
pub mod metrics;
pub mod splits;

pub use augment::{augment, augment_copies, AffineParams, AugmentationSpec};
pub use bench::{run_bench, BenchReport, StageRow, Workload};
pub use files::{load_dirs, load_index, load_indexed, EvalFileError, IndexEntry};
pub use metrics::{
    average_precision, class_ap, coco_thresholds, iou, map_summary, match_detections, ClassRow,
    EvalRecord, MapSummary, MatchResult,
};
pub use splits::{plan_splits, Split, SplitPlan};
