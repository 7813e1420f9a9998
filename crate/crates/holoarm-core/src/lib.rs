//! Core simulation library for the HoLoArm platform: a quadrotor whose four
//! arms are passively compliant (two bending axes plus an axial slide per
//! arm), together with the control and benchmarking machinery built on top
//! of it.
//!
//! The crate is `no_std`-compatible (with `alloc`); everything that touches
//! files, terminals or clocks lives in the companion `holoarm-cli` crate.
//!
//! Modules follow the layering of the simulator:
//!
//! - [`dynamics`]: rigid-body vehicle, motor lag, thrust curve, RK4 stepping
//! - [`arm`]: lumped-parameter compliant arm model and deflected rotor poses
//! - [`fit`]: recovery traces and spring-damper identification
//! - [`contact`]: penalty ground/wall contact and drop-test impact metrics
//! - [`sim`]: the coupled body + arms + contact simulator
//! - [`pd`]: cascaded PD flight controller (classical baseline)
//! - [`rl`]: observation/action interface, policy network, training, evaluation
//! - [`scenarios`]: scripted benchmark experiments producing run artifacts

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod arm;
pub mod contact;
pub mod dynamics;
pub mod fit;
pub mod pd;
pub mod rl;
pub mod scenarios;
pub mod sim;

use nalgebra::{Matrix3, UnitQuaternion, Vector3};

/// 3D vector type used throughout.
pub type Vec3 = Vector3<f64>;

/// 3x3 matrix type.
pub type Mat3 = Matrix3<f64>;

/// Unit quaternion (body -> world rotation).
pub type Quat = UnitQuaternion<f64>;

/// Standard gravity [m/s^2].
pub const GRAVITY: f64 = 9.81;
