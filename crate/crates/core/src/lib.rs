//! Robustness certification of point-cloud networks.
//!
//! The pipeline has three stages:
//!
//! 1. [`taylor`] turns a semantic transformation ([`transforms`]) over a box of
//!    parameters into sound affine bounds on every transformed coordinate.
//! 2. [`verifier`] propagates those bounds through a PointNet-style
//!    [`network`] with DeepPoly-style back-substitution, relaxing global max
//!    pooling with one of the strategies in [`maxpool`].
//! 3. Certification checks that the target logit beats every other logit on
//!    every cell of the (optionally split) parameter box.
//!
//! [`oracle`] holds the sampling and brute-force checks used to validate all
//! of the above.

pub mod error;
pub mod interval;
pub mod maxpool;
pub mod network;
pub mod oracle;
pub mod synth;
pub mod taylor;
pub mod transforms;
pub mod verifier;

pub use error::{Error, Result};
pub use interval::Interval;
pub use transforms::{parse_transform, ParamBox, Point3, PointCloud, Transform, TransformExt};
