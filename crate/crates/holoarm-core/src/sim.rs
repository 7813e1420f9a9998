//! Coupled vehicle simulation: rigid-body dynamics, motor lag, compliant
//! arms and penalty contact advanced together on a fixed step.
//!
//! Contact and disturbance forces on arm-attached points are split by the
//! joint's free directions: components the joint constrains pass straight to
//! the body (acting at the joint pivot), while components along the free
//! bending/slide coordinates drive the arm and reach the body only through
//! the spring, damper and end-stop reactions. With the arms frozen (rigid
//! configuration) every point force transmits in full at its point.

use thiserror::Error;

use crate::arm::{
    arm_frame, arm_point, arm_point_velocity, arm_step, generalized_load, transmitted_generalized,
    ArmError, ArmFrame, ArmLoad, ArmParams, ArmState,
};
use crate::contact::{point_environment_force, ContactError, ContactParams};
use crate::dynamics::{
    body_wrench, motor_lag_step, step as body_step, BodyWrench, DynamicsError, MotorBank,
    RigidBodyState, VehicleParams,
};
use crate::Vec3;

/// A corridor narrower than the vehicle's guard span: two vertical walls at
/// `y = +-half_width(x)` spanning `x_start..x_end` at all heights. The first
/// `entry_taper` metres form a funnel mouth narrowing from
/// `entry_half_width` to `half_width`, so approaching hardware meets an
/// angled surface and is squeezed in gradually rather than materializing
/// inside a wall at the corridor boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapGeometry {
    pub x_start: f64,
    pub x_end: f64,
    /// Half-width of the straight throat [m].
    pub half_width: f64,
    /// Length of the tapered entry section [m] (zero for a plain slot).
    pub entry_taper: f64,
    /// Half-width at the funnel mouth [m].
    pub entry_half_width: f64,
}

impl GapGeometry {
    /// Wall half-width at `x` (throat width outside the taper).
    pub fn half_width_at(&self, x: f64) -> f64 {
        let into = x - self.x_start;
        if into < self.entry_taper && self.entry_taper > 0.0 {
            let t = into / self.entry_taper;
            self.entry_half_width + t * (self.half_width - self.entry_half_width)
        } else {
            self.half_width
        }
    }

    /// Wall slope `d half_width / dx` at `x` (negative in the taper).
    pub fn slope_at(&self, x: f64) -> f64 {
        let into = x - self.x_start;
        if into < self.entry_taper && self.entry_taper > 0.0 {
            (self.half_width - self.entry_half_width) / self.entry_taper
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let invalid = |name, value| Err(SimError::InvalidGap { name, value });
        if !(self.x_end > self.x_start) {
            return invalid("x_end", self.x_end);
        }
        if !(self.half_width > 0.0) {
            return invalid("half_width", self.half_width);
        }
        if !(self.entry_taper >= 0.0) || self.x_start + self.entry_taper > self.x_end {
            return invalid("entry_taper", self.entry_taper);
        }
        if !(self.entry_half_width >= self.half_width) {
            return invalid("entry_half_width", self.entry_half_width);
        }
        Ok(())
    }
}

/// Static world the vehicle can touch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Environment {
    /// Ground plane at z = 0.
    pub ground: bool,
    pub gap: Option<GapGeometry>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Arm(#[from] ArmError),
    #[error(transparent)]
    Contact(#[from] ContactError),
    #[error("disturbance references arm {0} but no contact point is attached to it")]
    UnmatchedTipForce(usize),
    #[error("invalid gap geometry {name}: {value}")]
    InvalidGap { name: &'static str, value: f64 },
    #[error("simulation diverged at t = {time} s")]
    Diverged { time: f64 },
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepInfo {
    /// Sum of contact normal-force magnitudes over all points [N].
    pub contact_normal: f64,
}

/// The full simulation state and its fixed configuration.
#[derive(Debug, Clone)]
pub struct CoupledSim {
    pub vehicle: VehicleParams,
    pub arm_params: ArmParams,
    pub contact: ContactParams,
    pub environment: Environment,
    /// With compliance off the arms are frozen rigid and all contact forces
    /// transmit directly.
    pub compliant: bool,
    pub body: RigidBodyState,
    pub motors: MotorBank,
    pub arms: [ArmState; 4],
    pub time: f64,
}

impl CoupledSim {
    pub fn new(
        vehicle: VehicleParams,
        arm_params: ArmParams,
        contact: ContactParams,
        environment: Environment,
        compliant: bool,
    ) -> Result<Self, SimError> {
        vehicle.validate()?;
        arm_params.validate()?;
        contact.validate()?;
        if let Some(gap) = &environment.gap {
            gap.validate()?;
        }
        Ok(Self {
            vehicle,
            arm_params,
            contact,
            environment,
            compliant,
            body: RigidBodyState::default(),
            motors: MotorBank::default(),
            arms: [ArmState::default(); 4],
            time: 0.0,
        })
    }

    fn arms_deflected(&self) -> bool {
        self.arms.iter().any(|a| *a != ArmState::default())
    }

    /// World z of the lowest contact point at the current state.
    pub fn lowest_contact_point_z(&self) -> f64 {
        let rot = self.body.attitude.to_rotation_matrix();
        self.contact
            .points
            .iter()
            .map(|point| {
                let p_b = match point.arm {
                    Some(j) if self.compliant => {
                        let frame = arm_frame(j, &self.arms[j], &self.vehicle, &self.arm_params);
                        arm_point(&frame, &self.arms[j], point.offset)
                    }
                    _ => point.offset,
                };
                (self.body.position + rot * p_b).z
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Advances the whole system by one step of `dt`.
    ///
    /// `tip_forces` are extra world-frame forces applied at the guard-tip
    /// contact point of the named arm (used for push disturbances); they are
    /// routed through the compliant joint exactly like contact forces.
    pub fn step(
        &mut self,
        commands: [f64; 4],
        dt: f64,
        tip_forces: &[(usize, Vec3)],
    ) -> Result<StepInfo, SimError> {
        self.motors = motor_lag_step(&self.motors, commands, dt, &self.vehicle)?;

        let rotor_arms = if self.compliant {
            self.arms
        } else {
            [ArmState::default(); 4]
        };
        let mut wrench = body_wrench(&self.motors, &rotor_arms, &self.vehicle, &self.arm_params)?;
        let mut info = StepInfo::default();

        let contact_possible = self.environment.ground || self.environment.gap.is_some();
        let arms_engaged = self.compliant && (self.arms_deflected() || !tip_forces.is_empty());
        if contact_possible || arms_engaged || !tip_forces.is_empty() {
            let frames: Option<[ArmFrame; 4]> = if self.compliant {
                Some(core::array::from_fn(|j| {
                    arm_frame(j, &self.arms[j], &self.vehicle, &self.arm_params)
                }))
            } else {
                None
            };
            let mut arm_loads = [ArmLoad::default(); 4];
            let rot = self.body.attitude.to_rotation_matrix();
            let rot_t = rot.inverse();
            let omega = self.body.angular_velocity;

            // First contact point attached to each arm (the guard tip in the
            // default set); disturbance forces land there.
            let mut tip_index = [None; 4];
            for (idx, p) in self.contact.points.iter().enumerate() {
                if let Some(j) = p.arm {
                    if j < 4 && tip_index[j].is_none() {
                        tip_index[j] = Some(idx);
                    }
                }
            }
            for (arm, _) in tip_forces {
                if *arm >= 4 || tip_index[*arm].is_none() {
                    return Err(SimError::UnmatchedTipForce(*arm));
                }
            }

            for (idx, point) in self.contact.points.iter().enumerate() {
                let attached = match point.arm {
                    Some(j) if self.compliant => Some(j),
                    _ => None,
                };
                let (p_b, arm_vel) = match attached {
                    Some(j) => {
                        let frame = &frames.as_ref().unwrap()[j];
                        let p = arm_point(frame, &self.arms[j], point.offset);
                        (p, arm_point_velocity(frame, &self.arms[j], p))
                    }
                    None => (point.offset, Vec3::zeros()),
                };
                let pos_w = self.body.position + rot * p_b;
                let vel_w = self.body.velocity + rot * (omega.cross(&p_b) + arm_vel);
                let (mut f_w, normal) =
                    point_environment_force(pos_w, vel_w, &self.environment, &self.contact);
                info.contact_normal += normal;
                for (arm, force) in tip_forces {
                    if tip_index[*arm] == Some(idx) {
                        f_w += *force;
                    }
                }
                if f_w == Vec3::zeros() {
                    continue;
                }
                let f_b = rot_t * f_w;
                match attached {
                    Some(j) => {
                        let frame = &frames.as_ref().unwrap()[j];
                        arm_loads[j].add(&generalized_load(frame, p_b, f_b));
                        // Constrained components act at the pivot; the free
                        // bending/slide components are withheld here and
                        // re-enter below via the joint reactions.
                        let axial = frame.slide_axis * frame.slide_axis.dot(&f_b);
                        let f_trans = f_b - axial;
                        let moment = (p_b - frame.pivot).cross(&f_b);
                        let m_trans = moment
                            - frame.lat_axis * moment.dot(&frame.lat_axis)
                            - frame.vert_axis * moment.dot(&frame.vert_axis);
                        wrench.force += f_trans;
                        wrench.torque += frame.pivot.cross(&f_trans) + m_trans;
                    }
                    None => {
                        wrench.add(&BodyWrench::from_point_force(p_b, f_b));
                    }
                }
            }

            if let Some(frames) = &frames {
                for j in 0..4 {
                    let g = transmitted_generalized(&self.arms[j], &arm_loads[j], &self.arm_params);
                    let f_ax = frames[j].slide_axis * (-g.force_ax);
                    wrench.force += f_ax;
                    wrench.torque += frames[j].pivot.cross(&f_ax)
                        + frames[j].lat_axis * g.torque_lat
                        + frames[j].vert_axis * g.torque_vert;
                    self.arms[j] = arm_step(&self.arms[j], &arm_loads[j], &self.arm_params, dt)?;
                }
            }
        }

        self.body = body_step(&self.body, &wrench, &self.vehicle, dt)?;
        self.time += dt;
        if !self.body.is_finite() || !self.arms.iter().all(|a| a.is_finite()) {
            return Err(SimError::Diverged { time: self.time });
        }
        Ok(info)
    }
}
