//! Constructive approximation of frames by suborbits of bounded operators.
//!
//! The crate builds, for a given frame {f_k}, a generator φ and powers α(k)
//! such that {T^{α(k)}φ} is an ε-approximation of the frame, and checks every
//! estimate involved numerically on finite sections.

// Parameter guards are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approx_l2n;
pub mod approx_l2r;
pub mod approx_localized;
pub mod construction;
pub mod error;
pub mod family;
pub mod frame_algebra;
pub mod linalg;
pub mod operators;
pub mod scaled;
pub mod schedule;
pub mod verify_suite;
pub mod vector;

pub use error::{Error, Result};
pub use family::FrameFamily;
pub use scaled::ScaledVector;
pub use vector::{CoordinateVector, Element, SampledFunction, Vector};
