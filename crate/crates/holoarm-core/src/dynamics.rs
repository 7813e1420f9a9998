//! Rigid-body quadrotor dynamics: identified thrust curve, first-order motor
//! lag and Newton-Euler equations integrated with fixed-step RK4.
//!
//! Conventions: world frame is z-up, body frame is x-forward / z-up, the
//! attitude quaternion rotates body vectors into the world frame. Angular
//! velocity is expressed in the body frame.

use nalgebra::Quaternion;
#[cfg(not(feature = "std"))]
use num_traits::Float;
use thiserror::Error;

use crate::arm::{rotor_pose, ArmParams, ArmState};
use crate::{Quat, Vec3, GRAVITY};

/// Largest admissible integration step [s].
pub const MAX_DT: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("motor command {0} outside [0, 1]")]
    CommandOutOfRange(f64),
    #[error("time step {0} outside (0, 0.01]")]
    InvalidTimeStep(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid vehicle parameter {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
}

/// Identified vehicle constants plus frame geometry.
///
/// The defaults are the identified parameter set for the 9-inch-propeller
/// build: 970 g all-up mass, rotors at `[+-0.142, +-0.169, 0]` m, a 0.04 s
/// motor time constant and the thrust polynomial
/// `-0.137 + 4.247 w + 3.766 w^2` newtons over the normalized command
/// `w in [0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleParams {
    /// Total mass [kg].
    pub mass: f64,
    /// Rotor positions in the body frame [m].
    pub rotor_positions: [Vec3; 4],
    /// First-order motor lag time constant [s].
    pub motor_time_constant: f64,
    /// Thrust polynomial coefficients (c0, c1, c2): T = c0 + c1 w + c2 w^2 [N].
    pub thrust_coeffs: (f64, f64, f64),
    /// Reaction torque per newton of thrust about the rotor axis [m].
    pub yaw_torque_coeff: f64,
    /// Sign of the yaw reaction torque each rotor applies to the body.
    /// Alternating X-quad pattern: diagonal pairs co-rotate.
    pub yaw_signs: [f64; 4],
    /// Diagonal inertia (Ixx, Iyy, Izz) [kg m^2].
    pub inertia_diag: Vec3,
    /// Half extents of the nominal frame envelope (x, y, z) [m].
    pub frame_half_extents: Vec3,
    /// Gravitational acceleration [m/s^2].
    pub gravity: f64,
    /// Optional linear aerodynamic drag [N s/m]; 0 disables it.
    pub linear_drag: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 0.970,
            rotor_positions: [
                Vec3::new(0.142, 0.169, 0.0),
                Vec3::new(-0.142, 0.169, 0.0),
                Vec3::new(-0.142, -0.169, 0.0),
                Vec3::new(0.142, -0.169, 0.0),
            ],
            motor_time_constant: 0.04,
            thrust_coeffs: (-0.137, 4.247, 3.766),
            yaw_torque_coeff: 0.0136,
            yaw_signs: [1.0, -1.0, 1.0, -1.0],
            inertia_diag: Vec3::new(0.008154, 0.005226, 0.0012043),
            frame_half_extents: Vec3::new(0.229, 0.256, 0.026),
            gravity: GRAVITY,
            linear_drag: 0.0,
        }
    }
}

impl VehicleParams {
    /// Checks the structural invariants; returns the first violated one.
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let invalid = |name, value| Err(DynamicsError::InvalidParameter { name, value });
        if !(self.mass > 0.0) {
            return invalid("mass", self.mass);
        }
        if !(self.motor_time_constant > 0.0) {
            return invalid("motor_time_constant", self.motor_time_constant);
        }
        for (i, inertia) in self.inertia_diag.iter().enumerate() {
            if !(*inertia > 0.0) {
                let name = ["inertia_xx", "inertia_yy", "inertia_zz"][i];
                return invalid(name, *inertia);
            }
        }
        if !(self.gravity > 0.0) {
            return invalid("gravity", self.gravity);
        }
        // Hover feasibility: full-throttle thrust must beat the per-motor
        // share of the weight.
        let (c0, c1, c2) = self.thrust_coeffs;
        let max_thrust = c0 + c1 + c2;
        if max_thrust <= self.mass * self.gravity / 4.0 {
            return invalid("thrust_coeffs (max thrust)", max_thrust);
        }
        Ok(())
    }

    /// Per-motor thrust needed to hover [N].
    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity / 4.0
    }

    /// Normalized command at which one motor produces exactly the hover
    /// thrust, from the inverse of the thrust polynomial.
    pub fn hover_command(&self) -> f64 {
        self.command_for_thrust(self.hover_thrust())
    }

    /// Inverts the thrust curve; result clamped to [0, 1].
    pub fn command_for_thrust(&self, thrust: f64) -> f64 {
        let (c0, c1, c2) = self.thrust_coeffs;
        let disc = c1 * c1 - 4.0 * c2 * (c0 - thrust);
        if disc <= 0.0 {
            return 0.0;
        }
        let cmd = (-c1 + disc.sqrt()) / (2.0 * c2);
        cmd.clamp(0.0, 1.0)
    }
}

/// Commanded and lag-filtered normalized motor efforts, both in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MotorBank {
    pub commanded: [f64; 4],
    pub actual: [f64; 4],
}

impl MotorBank {
    /// Bank with both commanded and actual efforts at the given level.
    pub fn settled(effort: f64) -> Self {
        let e = effort.clamp(0.0, 1.0);
        Self {
            commanded: [e; 4],
            actual: [e; 4],
        }
    }
}

/// Thrust produced by one rotor at a normalized command.
///
/// The polynomial is clamped at zero (rotors cannot pull); commands outside
/// [0, 1] are a contract violation at this layer, not silently clamped.
pub fn motor_thrust(cmd: f64, params: &VehicleParams) -> Result<f64, DynamicsError> {
    if !cmd.is_finite() || !(0.0..=1.0).contains(&cmd) {
        return Err(DynamicsError::CommandOutOfRange(cmd));
    }
    let (c0, c1, c2) = params.thrust_coeffs;
    Ok((c0 + c1 * cmd + c2 * cmd * cmd).max(0.0))
}

/// Advances the lag filter exactly over `dt`: da/dt = (cmd - a) / tau has the
/// closed-form update a' = cmd + (a - cmd) exp(-dt/tau). Commands are stored
/// clamped to [0, 1].
pub fn motor_lag_step(
    bank: &MotorBank,
    commands: [f64; 4],
    dt: f64,
    params: &VehicleParams,
) -> Result<MotorBank, DynamicsError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(DynamicsError::InvalidTimeStep(dt));
    }
    let decay = (-dt / params.motor_time_constant).exp();
    let mut next = MotorBank::default();
    for i in 0..4 {
        let cmd = commands[i].clamp(0.0, 1.0);
        next.commanded[i] = cmd;
        next.actual[i] = (cmd + (bank.actual[i] - cmd) * decay).clamp(0.0, 1.0);
    }
    Ok(next)
}

/// Force and torque expressed in the body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyWrench {
    pub force: Vec3,
    pub torque: Vec3,
}

impl BodyWrench {
    pub fn zero() -> Self {
        Self {
            force: Vec3::zeros(),
            torque: Vec3::zeros(),
        }
    }

    pub fn add(&mut self, other: &BodyWrench) {
        self.force += other.force;
        self.torque += other.torque;
    }

    /// Wrench of a point force applied at a body-frame position.
    pub fn from_point_force(point: Vec3, force: Vec3) -> Self {
        Self {
            force,
            torque: point.cross(&force),
        }
    }
}

/// Aggregates rotor thrusts into a body wrench.
///
/// Application points and thrust directions follow the deflected arm poses,
/// so arm bending tilts thrust and shifts its lever arm. The yaw reaction
/// torque acts about each rotor's (deflected) axis.
pub fn body_wrench(
    bank: &MotorBank,
    arm_states: &[ArmState; 4],
    vehicle: &VehicleParams,
    arm_params: &ArmParams,
) -> Result<BodyWrench, DynamicsError> {
    let mut wrench = BodyWrench::zero();
    for i in 0..4 {
        let thrust = motor_thrust(bank.actual[i], vehicle)?;
        let (point, direction) = rotor_pose(i, &arm_states[i], vehicle, arm_params);
        let force = direction * thrust;
        wrench.force += force;
        wrench.torque += point.cross(&force);
        wrench.torque += direction * (vehicle.yaw_signs[i] * vehicle.yaw_torque_coeff * thrust);
    }
    Ok(wrench)
}

/// Position, attitude and velocities of the vehicle body.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidBodyState {
    /// Position in the world frame [m].
    pub position: Vec3,
    /// Body-to-world attitude, kept unit-norm.
    pub attitude: Quat,
    /// Velocity in the world frame [m/s].
    pub velocity: Vec3,
    /// Angular velocity in the body frame [rad/s].
    pub angular_velocity: Vec3,
}

impl Default for RigidBodyState {
    fn default() -> Self {
        Self {
            position: Vec3::zeros(),
            attitude: Quat::identity(),
            velocity: Vec3::zeros(),
            angular_velocity: Vec3::zeros(),
        }
    }
}

impl RigidBodyState {
    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.attitude.coords.iter().all(|v| v.is_finite())
            && self.velocity.iter().all(|v| v.is_finite())
            && self.angular_velocity.iter().all(|v| v.is_finite())
    }

    /// Tilt of the body z-axis away from world-up [rad].
    pub fn tilt_angle(&self) -> f64 {
        let body_z = self.attitude * Vec3::z();
        body_z.z.clamp(-1.0, 1.0).acos()
    }

    /// Angular momentum in the world frame [kg m^2/s].
    pub fn angular_momentum_world(&self, params: &VehicleParams) -> Vec3 {
        let momentum_body = params.inertia_diag.component_mul(&self.angular_velocity);
        self.attitude * momentum_body
    }
}

// Raw time derivative of the 13-dimensional body state. The quaternion part
// is integrated unconstrained and renormalized once per step.
#[derive(Clone, Copy)]
struct StateDerivative {
    position: Vec3,
    attitude: Quaternion<f64>,
    velocity: Vec3,
    angular_velocity: Vec3,
}

#[derive(Clone, Copy)]
struct RawState {
    position: Vec3,
    attitude: Quaternion<f64>,
    velocity: Vec3,
    angular_velocity: Vec3,
}

impl RawState {
    fn advanced(&self, d: &StateDerivative, dt: f64) -> RawState {
        RawState {
            position: self.position + d.position * dt,
            attitude: self.attitude + d.attitude * dt,
            velocity: self.velocity + d.velocity * dt,
            angular_velocity: self.angular_velocity + d.angular_velocity * dt,
        }
    }
}

fn derivative(state: &RawState, wrench: &BodyWrench, params: &VehicleParams) -> StateDerivative {
    // Normalize only for the rotation; the raw quaternion keeps integrating.
    let rotation = Quat::from_quaternion(state.attitude);
    let mut accel = (rotation * wrench.force) / params.mass;
    accel.z -= params.gravity;
    if params.linear_drag > 0.0 {
        accel -= state.velocity * (params.linear_drag / params.mass);
    }
    let omega = state.angular_velocity;
    let q_dot = state.attitude * Quaternion::from_parts(0.0, omega) * 0.5;
    let inertia = params.inertia_diag;
    let momentum = inertia.component_mul(&omega);
    let torque = wrench.torque - omega.cross(&momentum);
    let omega_dot = torque.component_div(&inertia);
    StateDerivative {
        position: state.velocity,
        attitude: q_dot,
        velocity: accel,
        angular_velocity: omega_dot,
    }
}

/// One RK4 step of the Newton-Euler equations under a body-frame wrench held
/// constant over the step. Gravity is applied in the world frame; the
/// attitude quaternion is renormalized after the step.
pub fn step(
    state: &RigidBodyState,
    wrench: &BodyWrench,
    params: &VehicleParams,
    dt: f64,
) -> Result<RigidBodyState, DynamicsError> {
    if !(dt > 0.0 && dt <= MAX_DT) || !dt.is_finite() {
        return Err(DynamicsError::InvalidTimeStep(dt));
    }
    if !state.is_finite() {
        return Err(DynamicsError::NonFinite("rigid body state"));
    }
    if !(wrench.force.iter().all(|v| v.is_finite()) && wrench.torque.iter().all(|v| v.is_finite()))
    {
        return Err(DynamicsError::NonFinite("body wrench"));
    }

    let y0 = RawState {
        position: state.position,
        attitude: *state.attitude.quaternion(),
        velocity: state.velocity,
        angular_velocity: state.angular_velocity,
    };
    let k1 = derivative(&y0, wrench, params);
    let k2 = derivative(&y0.advanced(&k1, dt / 2.0), wrench, params);
    let k3 = derivative(&y0.advanced(&k2, dt / 2.0), wrench, params);
    let k4 = derivative(&y0.advanced(&k3, dt), wrench, params);

    let sixth = dt / 6.0;
    let position = state.position + (k1.position + k2.position * 2.0 + k3.position * 2.0 + k4.position) * sixth;
    let attitude_raw = y0.attitude + (k1.attitude + k2.attitude * 2.0 + k3.attitude * 2.0 + k4.attitude) * sixth;
    let velocity = state.velocity + (k1.velocity + k2.velocity * 2.0 + k3.velocity * 2.0 + k4.velocity) * sixth;
    let angular_velocity = state.angular_velocity
        + (k1.angular_velocity
            + k2.angular_velocity * 2.0
            + k3.angular_velocity * 2.0
            + k4.angular_velocity)
            * sixth;

    let next = RigidBodyState {
        position,
        attitude: Quat::from_quaternion(attitude_raw),
        velocity,
        angular_velocity,
    };
    if !next.is_finite() {
        return Err(DynamicsError::NonFinite("integrated state"));
    }
    Ok(next)
}
