//! Implicit keypoint representation: keypoints as spheres of a signed
//! distance field, learned by a sinusoidal MLP and recovered from its zero
//! level set by Marching Cubes and Hough voting; semantic labels from a
//! stacked unsigned distance field.

pub mod error;
pub mod extraction;
pub mod field;
pub mod geometry;
pub mod io;
pub mod isosurface;
pub mod metrics;
pub mod nn;
pub mod sampling;

pub use error::{Error, Result};
pub use geometry::{Aabb, KeypointSet, Point3, SphereField, TriangleMesh};
