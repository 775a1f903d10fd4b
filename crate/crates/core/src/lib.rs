//! Planning and simulation core for a robotic UV-curable resin extrusion
//! cell: g-code ingestion, cure-aware toolpath post-processing, UR5e
//! kinematics, extrusion scheduling, cure and bead-spread simulation, and
//! cell-level trajectory checks.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cell;
pub mod config;
pub mod cure_sim;
pub mod error;
pub mod extrusion;
pub mod gcode;
pub mod geometry;
pub mod job;
pub mod kinematics;
pub mod shapes;
pub mod toolpath;

pub use error::*;
pub use geometry::{compose, transform_point, Pose, Rotation, Vec3};
pub use toolpath::{ExtensionPolicy, Segment, Toolpath};
