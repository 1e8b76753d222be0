//! SoftPQ: panoptic quality with a soft matching band for instance segmentation.
//!
//! The crate evaluates pairs of non-overlapping label images
//! ([`LabelGrid`]) and reports SoftPQ alongside PQ, F1, mAP, pixel IoU and
//! Dice. It also contains the synthetic perturbation generators and the
//! experiment runners used to study how those metrics respond to erosion,
//! dilation and over-segmentation.

pub mod batch;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod fixtures;
pub mod labelgrid;
pub mod metrics;
pub mod overlap;
pub mod perturb;

pub use error::{Error, Result};
pub use labelgrid::{LabelFormat, LabelGrid, LabelStats};
pub use metrics::{
    evaluate_all, panoptic_quality, penalty_weight, softpq, Mode, Penalty, ScoreReport,
    SoftPqConfig,
};
pub use overlap::{iou_pairs, joint_histogram, pixel_binary_scores, IouPairs, OverlapMatrix};
