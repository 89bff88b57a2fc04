//! Bounding-box similarity metrics and label assignment for tiny objects.
//!
//! The centerpiece is SimD, an exponential similarity built from the center
//! offset and the shape difference of two boxes, each normalized by the
//! boxes' summed extent and by dataset-calibrated parameters `(m, n)`.
//! Alongside it live the baselines it is usually compared with (IoU, DotD,
//! NWD, RFD), a dense anchor generator, the calibration pass that computes
//! `(m, n)` from a training set, a threshold assigner with a low-quality
//! fallback, and metric-parameterized greedy NMS.
//!
//! ```
//! use boxsim_core::{simd_pair, CBox, NormMode, NormParams};
//!
//! let gt = CBox::new(10.0, 10.0, 8.0, 8.0).unwrap();
//! let anchor = CBox::new(12.0, 10.0, 8.0, 8.0).unwrap();
//! let s = simd_pair(&gt, &anchor, &NormParams::unit(), NormMode::Both).unwrap();
//! assert!((s - (-0.125f64).exp()).abs() < 1e-15);
//! ```

pub mod anchors;
pub mod assign;
pub mod calibration;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod nms;
pub mod sum;

pub use anchors::{build_grid, AnchorGrid, AnchorLevel, AnchorSpec};
pub use assign::{
    assign, match_stats, AnchorLabel, AssignmentResult, BucketStats, MatchTally, OverallStats,
    Thresholds,
};
pub use calibration::{accumulate_image, calibrate, CalibrationAccumulator, CalibrationOptions};
pub use dataset::{
    bucket_histogram, dotd_scale, load_coco, parse_coco, size_bucket, synth_dataset, write_coco,
    AnnotationSet, Category, GroundTruth, ImageRecord, IngestSummary, SizeBucket, SynthParams,
};
pub use error::{Error, Result};
pub use geometry::{CBox, MetricMatrix, NormMode, NormParams, EPS_NORM};
pub use metrics::{
    dotd, iou, nwd, rfd, rfdc, simd_components, simd_matrix, simd_pair, Metric, SimdComponents,
};
pub use nms::{greedy_suppress, priority_order, Detection};

/// Library version embedded in report headers.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
