//! Geometric core of monocular 3D lane detection.
//!
//! The crate is `no_std` (it needs `alloc`) and holds every pure algorithm:
//!
//! * [`geometry`] – pitch-only pinhole camera, image/ground homography and the
//!   closed-form virtual top-view ↔ ego transform.
//! * [`anchor`] – encoding of 3D lanes into the top-view anchor tensor and back.
//! * [`loss`] – evaluator of the anchor training loss.
//! * [`matcher`] – dense lane resampling, lane-to-lane cost and min-cost-flow assignment.
//! * [`metrics`] – precision/recall sweep, AP, maximum F-score, near/far errors.
//! * [`fixtures`] – deterministic synthetic scenes, depth/semantic rendering and
//!   occlusion labeling of lane points.
//!
//! File formats and the command line live in the `lane3d` companion crate.
#![no_std]

extern crate alloc;
#[cfg(any(feature = "std", test))]
extern crate std;

pub mod anchor;
pub mod fixtures;
pub mod flow;
pub mod geometry;
pub mod lane;
pub mod loss;
pub mod matcher;
pub mod metrics;
pub mod raster;

pub use anchor::{AnchorConfig, AnchorSet, AnchorTensor, CodecError, EncodeOutput};
pub use geometry::{CameraModel, EgoPoint, GeometryError, ImagePoint, Intrinsics, TopViewGrid, TopViewPoint};
pub use lane::{Lane3D, LaneCategory, LaneError};
pub use loss::{LossBreakdown, LossError};
pub use matcher::{DenseLane, EditPenalty, MatchConfig, MatchError, MatchReport};
pub use metrics::{EvalFrame, EvalReport, MetricsError};
pub use raster::Raster;
