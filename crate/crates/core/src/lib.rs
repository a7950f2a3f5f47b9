//! Virtual kinematic chains for mobile manipulation.
//!
//! A mobile manipulator and the object it manipulates are consolidated into one
//! serial chain: the object's kinematic tree is re-rooted at the grasped link,
//! spliced onto the end effector through a virtual joint, and the robot base is
//! given three planar virtual joints. Whole-body motions are then planned on
//! that chain by penalty-based sequential convex trajectory optimization.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the command line
//! tool and the experiment harness live in the `vkc` crate.
#![cfg_attr(not(any(feature = "std", test)), no_std)]
// index loops mirror the matrix notation; `!(a < b)` deliberately catches NaN
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod geometry;
pub mod init;
pub mod kinematics;
pub mod math;
pub mod model;
pub mod qp;
pub mod tasks;
pub mod trajopt;

use alloc::string::String;
use alloc::vec::Vec;

pub use math::{Quat, Transform, Vec3};
pub use model::{Diagnostic, JointKind, JointRole, JointSpec, KinematicTree, LinkSpec, Shape, TreeParts};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid model: {}", model::describe(.0))]
    InvalidModel(Vec<Diagnostic>),
    #[error("unknown link \"{0}\"")]
    UnknownLink(String),
    #[error("unknown joint \"{0}\"")]
    UnknownJoint(String),
    #[error("link \"{tip}\" is not a descendant of \"{base}\"")]
    NotDescendant { base: String, tip: String },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("joint \"{0}\" is not an attachment joint")]
    NotVirtual(String),
    #[error("no path between start and goal cells")]
    NoPath,
    #[error("inverse kinematics did not converge (residual {residual:.3e})")]
    IkNoConvergence { residual: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Monotonic time source used to report planning time.
pub trait Clock {
    fn now_seconds(&self) -> f64;
}

/// A clock that never advances; planning times come out as zero.
#[derive(Clone, Copy, Debug, Default)]
pub struct NullClock;

impl Clock for NullClock {
    fn now_seconds(&self) -> f64 {
        0.0
    }
}

#[cfg(feature = "std")]
mod std_clock {
    /// Wall clock measured from construction.
    #[derive(Clone, Copy, Debug)]
    pub struct WallClock(std::time::Instant);

    impl WallClock {
        pub fn new() -> Self {
            WallClock(std::time::Instant::now())
        }
    }

    impl Default for WallClock {
        fn default() -> Self {
            Self::new()
        }
    }

    impl super::Clock for WallClock {
        fn now_seconds(&self) -> f64 {
            self.0.elapsed().as_secs_f64()
        }
    }
}

#[cfg(feature = "std")]
pub use std_clock::WallClock;
