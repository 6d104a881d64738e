//! Camera pose estimation from keypoint heatmaps whose label frame is
//! scaled so that points outside the image still land on the heatmap.
//!
//! The crate covers the geometry of that scaling, heatmap and cost maps, a
//! binary heatmap format, PnP, a particle-filter tracker, a gradient-descent
//! tracker and a sweep measuring pose error against the visible fraction of
//! the object.

pub mod cli;
pub mod eval;
pub mod geometry;
pub mod heatmap;
pub mod oovh;
pub mod pnp;
pub mod predictor;
pub mod rng;
pub mod scene;
pub mod track;
pub mod tracker_opt;
pub mod tracker_pf;
