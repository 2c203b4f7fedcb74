//! Simulation and numerical verification of Walsh semimartingales and Walsh
//! diffusions in the plane.
//!
//! The pipeline is: simulate a scalar driver (`drivers`), fold it by
//! Skorokhod reflection, unfold the folded path along random rays
//! (`unfolding`), then estimate local times (`localtime`), check the
//! change-of-variable formula (`calculus`), or build angularly dependent
//! diffusions by scale function and time change (`diffusion`).

pub mod batch;
pub mod calculus;
pub mod diffusion;
pub mod drivers;
pub mod error;
pub mod localtime;
pub mod measures;
pub mod quadrature;
pub mod rng;
pub mod stats;
pub mod unfolding;

pub use error::{Error, Result};
pub use measures::{AngleSet, AngularMoments, SpinningMeasure};
pub use rng::{Purpose, StreamFactory};

/// 2π.
pub const TAU: f64 = std::f64::consts::TAU;

/// Maps any finite angle into `[0, 2π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}
