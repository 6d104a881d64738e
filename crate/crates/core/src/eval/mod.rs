//! Synthetic robustness-versus-visibility evaluation.

pub mod hull;
pub mod metrics;
pub mod perturb;
pub mod plot;
pub mod sweep;

pub use hull::{clip_to_rect, convex_hull, polygon_area, visibility_fraction, visibility_in_rect, HullError, Rect};
pub use metrics::{pose_errors, reprojection_rms, ErrorTriple, Metric};
pub use perturb::perturb_by_reprojection;
pub use sweep::{
    bucket_index, generate_view, generate_views, peaks_in_camera_frame, run_sweep, summarise, write_outputs,
    EvalError, PredictorSource, SummaryRow, SweepConfig, SweepResult, TransformRanges, View, ViewResult,
};
