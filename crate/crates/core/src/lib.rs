//! Drone-based linear antenna arrays: spacing optimization, beam steering by
//! repositioning, minimum-time quadrotor maneuvers and service-time
//! simulation.

pub mod control;
pub mod error;
pub mod geometry;
pub mod pattern;
pub mod placement;
pub mod qp;
pub mod quadrature;
pub mod quadrotor;
pub mod sim;
pub mod spacing_opt;

pub use error::{Error, Result};
pub use geometry::{Mat3, SphDirection, Vec3};
