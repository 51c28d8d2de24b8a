//! Evaluation and dataset tooling for grounded surgical action triplets:
//! the triplet schema and its component projections, RLE mask geometry,
//! dataset I/O, label/mask alignment, matching-based AP evaluation, paired
//! significance testing, and a reference implementation of the gated
//! anatomy fusion block.

pub mod alignment;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod mask;
pub mod schema;
pub mod stats;
pub mod synth;

pub use alignment::{
    align_frames, alignment_stats, AlignmentSummary, AmbiguityKind, AmbiguityReport,
    InstanceMaskFrame, TripletLabelFrame,
};
pub use dataset::{
    dataset_stats, read_ground_truth, read_predictions, validate_ground_truth, write_ground_truth,
    write_predictions, DetectionRecord, FrameKey, FrameRecord, GroundedInstance, Predictions,
    RecognitionRecord, StatsSummary,
};
pub use error::{Error, Result};
pub use eval::{
    average_precision, evaluate, match_frame, ApMethod, Averaging, EvalConfig, EvalReport, Mode,
};
pub use fusion::{run_fusion_checks, FusionCheckReport, FusionParams};
pub use mask::{box_iou, mask_iou, mask_to_bbox, rle_decode, rle_encode, BBox, Bitmap, RleMask};
pub use schema::{ClassKey, Component, TripletSchema};
pub use stats::{
    compare_methods, partition_frames, wilcoxon_one_sided, Comparison, WilcoxonResult,
};
