//! Cascaded position/attitude PD flight controller with feedforward and a
//! fixed allocation mixer, plus the `ControlPolicy` trait every controller
//! (hand-tuned or learned) implements.

use nalgebra::{Matrix4, Vector4};
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::dynamics::{DynamicsError, RigidBodyState, VehicleParams};
use crate::{Mat3, Vec3};

/// Instantaneous flight reference: where to be, how fast to move, and the
/// feedforward acceleration of the reference trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reference {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
}

impl Reference {
    pub fn hover(position: Vec3) -> Self {
        Self {
            position,
            velocity: Vec3::zeros(),
            acceleration: Vec3::zeros(),
        }
    }
}

/// A controller mapping vehicle state and reference to normalized rotor
/// commands at the control rate.
pub trait ControlPolicy {
    /// Clears internal state (action history, filters) before an episode.
    fn reset(&mut self);
    fn command(&mut self, state: &RigidBodyState, reference: &Reference) -> [f64; 4];
}

/// Gains of the cascaded controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdGains {
    /// Position loop proportional gain [1/s^2] and damping [1/s].
    pub kp_pos: f64,
    pub kd_pos: f64,
    /// Attitude loop proportional gain [1/s^2] and damping [1/s], applied
    /// through the inertia matrix.
    pub kp_att: f64,
    pub kd_att: f64,
    /// Maximum commanded tilt of the thrust axis from vertical [rad].
    pub max_tilt: f64,
}

impl Default for PdGains {
    fn default() -> Self {
        Self {
            kp_pos: 9.0,
            kd_pos: 5.4,
            kp_att: 150.0,
            kd_att: 20.0,
            max_tilt: 0.7,
        }
    }
}

/// Position PD with acceleration feedforward cascaded into an attitude PD,
/// mixed to per-rotor thrusts through the inverse allocation matrix and
/// inverted through the static thrust curve.
#[derive(Debug, Clone)]
pub struct PdController {
    vehicle: VehicleParams,
    gains: PdGains,
    inertia: Mat3,
    allocation_inv: Matrix4<f64>,
}

impl PdController {
    pub fn new(vehicle: VehicleParams, gains: PdGains) -> Result<Self, DynamicsError> {
        vehicle.validate()?;
        let mut allocation = Matrix4::zeros();
        for (i, rotor) in vehicle.rotor_positions.iter().enumerate() {
            allocation[(0, i)] = 1.0;
            allocation[(1, i)] = rotor.y;
            allocation[(2, i)] = -rotor.x;
            allocation[(3, i)] = vehicle.yaw_torque_coeff * vehicle.yaw_signs[i];
        }
        let allocation_inv = allocation
            .try_inverse()
            .ok_or(DynamicsError::InvalidParameter {
                name: "allocation matrix (rotor layout is singular)",
                value: 0.0,
            })?;
        let inertia = Mat3::from_diagonal(&vehicle.inertia_diag);
        Ok(Self {
            vehicle,
            gains,
            inertia,
            allocation_inv,
        })
    }

    pub fn with_default_gains(vehicle: VehicleParams) -> Result<Self, DynamicsError> {
        Self::new(vehicle, PdGains::default())
    }

    /// Desired world-frame specific force direction, tilt-clamped.
    fn thrust_axis(&self, f_des: Vec3) -> Vec3 {
        let norm = f_des.norm();
        if norm < 1e-9 {
            return Vec3::z();
        }
        let b3 = f_des / norm;
        let cos_max = self.gains.max_tilt.cos();
        if b3.z >= cos_max {
            return b3;
        }
        let horizontal = Vec3::new(b3.x, b3.y, 0.0);
        let h_norm = horizontal.norm();
        if h_norm < 1e-9 {
            // Demanded thrust points straight down; fall back to vertical.
            return Vec3::z();
        }
        horizontal * (self.gains.max_tilt.sin() / h_norm)
            + Vec3::new(0.0, 0.0, self.gains.max_tilt.cos())
    }
}

impl ControlPolicy for PdController {
    fn reset(&mut self) {}

    fn command(&mut self, state: &RigidBodyState, reference: &Reference) -> [f64; 4] {
        let g = &self.gains;
        let e_p = reference.position - state.position;
        let e_v = reference.velocity - state.velocity;
        let a_des = reference.acceleration
            + e_p * g.kp_pos
            + e_v * g.kd_pos
            + Vec3::new(0.0, 0.0, self.vehicle.gravity);
        let f_des = a_des * self.vehicle.mass;

        // Desired attitude: thrust axis plus zero yaw.
        let b3 = self.thrust_axis(f_des);
        let b2 = b3.cross(&Vec3::x()).normalize();
        let b1 = b2.cross(&b3);
        let r_des = Mat3::from_columns(&[b1, b2, b3]);

        let r = *state.attitude.to_rotation_matrix().matrix();
        let e_mat = r_des.transpose() * r - r.transpose() * r_des;
        // vee-map of the skew part: body-frame attitude error.
        let e_att = Vec3::new(e_mat[(2, 1)], e_mat[(0, 2)], e_mat[(1, 0)]) * 0.5;
        let omega = state.angular_velocity;
        let torque = self.inertia * (-e_att * g.kp_att - omega * g.kd_att)
            + omega.cross(&(self.inertia * omega));

        let body_z = r * Vec3::z();
        let collective = f_des.dot(&body_z).max(0.0);
        let thrusts =
            self.allocation_inv * Vector4::new(collective, torque.x, torque.y, torque.z);
        [
            self.vehicle.command_for_thrust(thrusts[0]),
            self.vehicle.command_for_thrust(thrusts[1]),
            self.vehicle.command_for_thrust(thrusts[2]),
            self.vehicle.command_for_thrust(thrusts[3]),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arm::ArmParams;
    use crate::contact::ContactParams;
    use crate::sim::{CoupledSim, Environment};
    use approx::assert_abs_diff_eq;

    fn controller() -> PdController {
        PdController::with_default_gains(VehicleParams::default()).unwrap()
    }

    #[test]
    fn allocation_matrix_inverts() {
        let c = controller();
        let v = VehicleParams::default();
        let mut allocation = Matrix4::zeros();
        for (i, rotor) in v.rotor_positions.iter().enumerate() {
            allocation[(0, i)] = 1.0;
            allocation[(1, i)] = rotor.y;
            allocation[(2, i)] = -rotor.x;
            allocation[(3, i)] = v.yaw_torque_coeff * v.yaw_signs[i];
        }
        let identity = allocation * c.allocation_inv;
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(identity[(i, j)], expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn hover_reference_yields_hover_command() {
        let mut c = controller();
        let state = RigidBodyState {
            position: Vec3::new(0.0, 0.0, 1.0),
            ..RigidBodyState::default()
        };
        let cmds = c.command(&state, &Reference::hover(Vec3::new(0.0, 0.0, 1.0)));
        let hover = VehicleParams::default().hover_command();
        for cmd in cmds {
            assert_abs_diff_eq!(cmd, hover, epsilon = 1e-9);
        }
    }

    /// Runs the closed loop at 100 Hz (4 dynamics substeps per control step)
    /// and returns (mean position error, max position error after the given
    /// settle time, max tilt).
    fn run_closed_loop(
        sim: &mut CoupledSim,
        policy: &mut dyn ControlPolicy,
        reference: impl Fn(f64) -> Reference,
        duration: f64,
        settle: f64,
    ) -> (f64, f64, f64) {
        let dt = 2.5e-3;
        let steps = (duration / (4.0 * dt)).round() as usize;
        let mut err_sum = 0.0;
        let mut err_max_settled: f64 = 0.0;
        let mut tilt_max: f64 = 0.0;
        for _ in 0..steps {
            let r = reference(sim.time);
            let cmd = policy.command(&sim.body, &r);
            for _ in 0..4 {
                sim.step(cmd, dt, &[]).unwrap();
            }
            let err = (reference(sim.time).position - sim.body.position).norm();
            err_sum += err;
            if sim.time >= settle {
                err_max_settled = err_max_settled.max(err);
            }
            tilt_max = tilt_max.max(sim.body.tilt_angle());
        }
        (err_sum / steps as f64, err_max_settled, tilt_max)
    }

    fn flight_sim() -> CoupledSim {
        CoupledSim::new(
            VehicleParams::default(),
            ArmParams::default(),
            ContactParams::default(),
            Environment::default(),
            true,
        )
        .unwrap()
    }

    #[test]
    fn hover_recovery_from_offset() {
        let mut sim = flight_sim();
        sim.body.position = Vec3::new(0.2, -0.2, 0.8);
        let target = Vec3::new(0.0, 0.0, 1.0);
        let mut c = controller();
        let (mean_err, settled_err, _) =
            run_closed_loop(&mut sim, &mut c, |_| Reference::hover(target), 5.0, 3.0);
        assert!(mean_err < 0.05, "mean error {mean_err}");
        assert!(settled_err < 0.005, "settled error {settled_err}");
    }

    #[test]
    fn hover_recovery_from_tilt_and_spin() {
        let mut sim = flight_sim();
        sim.body.position = Vec3::new(-0.3, 0.1, 1.2);
        sim.body.attitude = crate::Quat::from_axis_angle(&Vec3::x_axis(), 0.17);
        sim.body.angular_velocity = Vec3::new(0.5, -0.3, 0.2);
        sim.body.velocity = Vec3::new(0.3, 0.0, -0.2);
        let target = Vec3::new(0.0, 0.0, 1.0);
        let mut c = controller();
        let (_, settled_err, tilt_max) =
            run_closed_loop(&mut sim, &mut c, |_| Reference::hover(target), 6.0, 4.0);
        assert!(settled_err < 0.01, "settled error {settled_err}");
        assert!(tilt_max < PdGains::default().max_tilt + 0.2);
    }

    #[test]
    fn overshoot_is_damped() {
        let mut sim = flight_sim();
        sim.body.position = Vec3::new(0.3, 0.0, 1.0);
        let target = Vec3::new(0.0, 0.0, 1.0);
        let mut c = controller();
        let dt = 2.5e-3;
        let mut min_x: f64 = 0.3;
        for _ in 0..(5.0 / (4.0 * dt)) as usize {
            let cmd = c.command(&sim.body, &Reference::hover(target));
            for _ in 0..4 {
                sim.step(cmd, dt, &[]).unwrap();
            }
            min_x = min_x.min(sim.body.position.x);
        }
        assert!(min_x > -0.05, "overshoot to {min_x}");
    }

    #[test]
    fn circular_tracking_with_feedforward() {
        let mut sim = flight_sim();
        sim.body.position = Vec3::new(1.0, 0.0, 1.0);
        let omega = 2.0 * core::f64::consts::PI / 8.0;
        let reference = move |t: f64| Reference {
            position: Vec3::new((omega * t).cos(), (omega * t).sin(), 1.0),
            velocity: Vec3::new(-omega * (omega * t).sin(), omega * (omega * t).cos(), 0.0),
            acceleration: Vec3::new(
                -omega * omega * (omega * t).cos(),
                -omega * omega * (omega * t).sin(),
                0.0,
            ),
        };
        let mut c = controller();
        let (mean_err, settled_err, _) = run_closed_loop(&mut sim, &mut c, reference, 16.0, 4.0);
        assert!(mean_err < 0.10, "mean error {mean_err}");
        assert!(settled_err < 0.10, "settled error {settled_err}");
    }

    #[test]
    fn commands_are_deterministic() {
        let state = RigidBodyState {
            position: Vec3::new(0.3, -0.1, 0.9),
            velocity: Vec3::new(0.1, 0.2, -0.1),
            angular_velocity: Vec3::new(0.05, -0.02, 0.01),
            ..RigidBodyState::default()
        };
        let reference = Reference::hover(Vec3::new(0.0, 0.0, 1.0));
        let mut c1 = controller();
        let mut c2 = controller();
        assert_eq!(c1.command(&state, &reference), c2.command(&state, &reference));
    }

    #[test]
    fn commands_stay_in_range_under_extreme_errors() {
        let mut c = controller();
        let state = RigidBodyState {
            position: Vec3::new(50.0, -30.0, -20.0),
            velocity: Vec3::new(10.0, 10.0, -15.0),
            angular_velocity: Vec3::new(5.0, 5.0, 5.0),
            ..RigidBodyState::default()
        };
        let cmds = c.command(&state, &Reference::hover(Vec3::zeros()));
        for cmd in cmds {
            assert!((0.0..=1.0).contains(&cmd), "command {cmd}");
        }
    }
}
