//! Penalty contact: spring-damper normal forces with Coulomb-capped,
//! viscously regularized friction, evaluated at a fixed set of body- and
//! arm-attached contact points against the ground plane and optional gap
//! walls, plus the rigid-vs-compliant drop-test runner.

use alloc::vec::Vec;
#[cfg(not(feature = "std"))]
use num_traits::Float;
use thiserror::Error;

use crate::dynamics::VehicleParams;
use crate::sim::{CoupledSim, Environment, SimError};
use crate::Vec3;

/// Sliding speed below which friction ramps linearly instead of saturating
/// at the Coulomb cap [m/s].
const FRICTION_V_EPS: f64 = 0.01;

/// Total normal force above which a contact episode counts as active [N].
pub const CONTACT_FORCE_EPS: f64 = 0.01;

/// Quiet time that closes a contact episode [s].
pub const CONTACT_QUIET_CLOSE: f64 = 0.05;

/// Integration step for contact-resolved simulations [s].
pub const CONTACT_DT: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContactError {
    #[error("invalid contact parameter {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
}

/// A candidate contact point in the undeflected body frame. Points carrying
/// an arm index ride along with that arm's deflection and feed their loads
/// through the compliant joint; plain points are rigidly attached to the
/// body.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactPoint {
    pub offset: Vec3,
    pub arm: Option<usize>,
}

/// Penalty-contact constants and the contact point set.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactParams {
    /// Normal penalty stiffness [N/m].
    pub k_n: f64,
    /// Normal damping [N s/m].
    pub c_n: f64,
    /// Coulomb friction coefficient.
    pub mu: f64,
    /// Peak force above which an impact is flagged as breaking [N].
    pub failure_threshold: f64,
    pub points: Vec<ContactPoint>,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self {
            k_n: 2.0e4,
            c_n: 50.0,
            mu: 0.5,
            failure_threshold: 24.0,
            points: default_contact_points(&VehicleParams::default()),
        }
    }
}

impl ContactParams {
    pub fn validate(&self) -> Result<(), ContactError> {
        let invalid = |name, value| Err(ContactError::InvalidParameter { name, value });
        if !(self.k_n > 0.0) {
            return invalid("k_n", self.k_n);
        }
        if !(self.c_n >= 0.0) {
            return invalid("c_n", self.c_n);
        }
        if !(0.0..=2.0).contains(&self.mu) {
            return invalid("mu", self.mu);
        }
        if !(self.failure_threshold > 0.0) {
            return invalid("failure_threshold", self.failure_threshold);
        }
        Ok(())
    }
}

/// The default eight contact points: four rotor-guard tips (arm-attached,
/// extending the arm line out to the frame's lateral envelope and sitting
/// slightly below the body underside) and four corners of the central plate.
pub fn default_contact_points(vehicle: &VehicleParams) -> Vec<ContactPoint> {
    let mut points = Vec::with_capacity(8);
    let hz = vehicle.frame_half_extents.z;
    for (i, rotor) in vehicle.rotor_positions.iter().enumerate() {
        let radial = Vec3::new(rotor.x, rotor.y, 0.0).normalize();
        // Guard reaches the frame's lateral half extent in |y|.
        let reach = (vehicle.frame_half_extents.y - rotor.y.abs()) / radial.y.abs();
        let tip = rotor + radial * reach + Vec3::new(0.0, 0.0, -(hz + 0.004));
        points.push(ContactPoint {
            offset: tip,
            arm: Some(i),
        });
    }
    for (sx, sy) in [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)] {
        points.push(ContactPoint {
            offset: Vec3::new(0.10 * sx, 0.12 * sy, -hz),
            arm: None,
        });
    }
    points
}

/// Kelvin-Voigt normal force: spring plus damper, clamped non-adhesive.
pub fn contact_force(penetration: f64, penetration_rate: f64, params: &ContactParams) -> f64 {
    debug_assert!(penetration >= 0.0);
    (params.k_n * penetration + params.c_n * penetration_rate).max(0.0)
}

// Coulomb-capped friction opposing the tangential velocity, linear below
// FRICTION_V_EPS to stay well-posed at rest.
fn friction_force(tangential_velocity: Vec3, normal_force: f64, mu: f64) -> Vec3 {
    let speed = tangential_velocity.norm();
    if speed <= 0.0 || normal_force <= 0.0 || mu <= 0.0 {
        return Vec3::zeros();
    }
    let cap = mu * normal_force;
    let magnitude = if speed >= FRICTION_V_EPS {
        cap
    } else {
        cap * speed / FRICTION_V_EPS
    };
    -tangential_velocity * (magnitude / speed)
}

/// World-frame contact force on one point against the environment, plus the
/// normal-force magnitude (the part a scale under the vehicle would read,
/// for ground contacts).
pub fn point_environment_force(
    position: Vec3,
    velocity: Vec3,
    environment: &Environment,
    params: &ContactParams,
) -> (Vec3, f64) {
    let mut force = Vec3::zeros();
    let mut normal_total = 0.0;
    if environment.ground && position.z < 0.0 {
        let pen = -position.z;
        let pen_rate = -velocity.z;
        let fn_ = contact_force(pen, pen_rate, params);
        force += Vec3::new(0.0, 0.0, fn_);
        force += friction_force(Vec3::new(velocity.x, velocity.y, 0.0), fn_, params.mu);
        normal_total += fn_;
    }
    if let Some(gap) = &environment.gap {
        if position.x >= gap.x_start && position.x <= gap.x_end {
            let depth = position.y.abs() - gap.half_width_at(position.x);
            if depth > 0.0 {
                let side = position.y.signum();
                // Inward surface normal of the wall y = side * hw(x); in the
                // funnel it leans against the direction of travel.
                let slope = gap.slope_at(position.x);
                let scale = (1.0 + slope * slope).sqrt();
                let normal = Vec3::new(slope / scale, -side / scale, 0.0);
                let pen = depth / scale;
                let pen_rate = -velocity.dot(&normal);
                let fn_ = contact_force(pen, pen_rate, params);
                force += normal * fn_;
                let tangential = velocity - normal * velocity.dot(&normal);
                force += friction_force(tangential, fn_, params.mu);
                normal_total += fn_;
            }
        }
    }
    (force, normal_total)
}

/// Aggregate result of one contact episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpactEvent {
    pub peak_force: f64,
    pub contact_duration: f64,
    pub impulse: f64,
    pub broke: bool,
}

/// Drop-test configuration: the vehicle is released motors-off from
/// `height` (clearance of its lowest contact point above the ground).
#[derive(Debug, Clone)]
pub struct DropConfig {
    pub compliant: bool,
    pub height: f64,
    pub vehicle: VehicleParams,
    pub arm_params: crate::arm::ArmParams,
    pub contact: ContactParams,
}

/// Impact event plus the kinematic bookkeeping around it.
#[derive(Debug, Clone)]
pub struct DropOutcome {
    pub event: ImpactEvent,
    /// Downward speed when the first contact point touches [m/s].
    pub impact_speed: f64,
    /// Upward body speed at the end of the contact episode [m/s].
    pub rebound_speed: f64,
    /// Total ground normal force sampled while the episode is open.
    pub force_series: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DropError {
    #[error("drop height {0} must be positive")]
    InvalidHeight(f64),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("no contact within the simulation horizon")]
    NoContact,
}

/// Simulates one motors-off drop until the contact episode closes and
/// returns peak force, duration, impulse and the impact/rebound speeds.
pub fn drop_test(config: &DropConfig) -> Result<DropOutcome, DropError> {
    if !(config.height > 0.0) || !config.height.is_finite() {
        return Err(DropError::InvalidHeight(config.height));
    }
    let environment = Environment {
        ground: true,
        gap: None,
    };
    let mut sim = CoupledSim::new(
        config.vehicle.clone(),
        config.arm_params.clone(),
        config.contact.clone(),
        environment,
        config.compliant,
    )?;
    let lowest = sim.lowest_contact_point_z();
    sim.body.position.z = config.height - lowest;

    let dt = CONTACT_DT;
    let fall_time = (2.0 * config.height / config.vehicle.gravity).sqrt();
    let horizon = fall_time + 5.0;
    let mut started = false;
    let mut first_active = 0.0;
    let mut last_active = 0.0;
    let mut peak: f64 = 0.0;
    let mut impulse = 0.0;
    let mut prev_force = 0.0;
    let mut impact_speed = 0.0;
    let mut rebound_speed = 0.0;
    let mut series = Vec::new();

    while sim.time < horizon {
        let prev_vz = sim.body.velocity.z;
        let prev_clearance = sim.lowest_contact_point_z().max(0.0);
        let info = sim.step([0.0; 4], dt, &[])?;
        let force = info.contact_normal;
        let active = force > CONTACT_FORCE_EPS;
        if active {
            if !started {
                started = true;
                first_active = sim.time;
                // Free-fall closed form from the last pre-contact sample.
                impact_speed =
                    (prev_vz * prev_vz + 2.0 * config.vehicle.gravity * prev_clearance).sqrt();
                prev_force = 0.0;
            }
            impulse += 0.5 * (prev_force + force) * dt;
            last_active = sim.time;
            rebound_speed = sim.body.velocity.z;
            peak = peak.max(force);
        }
        prev_force = if active { force } else { 0.0 };
        if started && sim.time <= last_active + CONTACT_QUIET_CLOSE {
            series.push((sim.time, force));
        }
        if started && sim.time - last_active > CONTACT_QUIET_CLOSE {
            break;
        }
    }
    if !started {
        return Err(DropError::NoContact);
    }
    let duration = (last_active - first_active).max(dt);
    Ok(DropOutcome {
        event: ImpactEvent {
            peak_force: peak,
            contact_duration: duration,
            impulse,
            broke: peak > config.contact.failure_threshold,
        },
        impact_speed,
        rebound_speed,
        force_series: series,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arm::ArmParams;
    use crate::sim::GapGeometry;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn params() -> ContactParams {
        ContactParams::default()
    }

    #[test]
    fn normal_force_examples() {
        let mut p = params();
        p.k_n = 1e4;
        p.c_n = 10.0;
        assert_eq!(contact_force(0.0, 0.0, &p), 0.0);
        assert_abs_diff_eq!(contact_force(1e-3, 0.0, &p), 10.0, epsilon = 1e-12);
        // Separating fast: clamped non-adhesive.
        assert_eq!(contact_force(1e-3, -2.0, &p), 0.0);
    }

    #[test]
    fn normal_force_never_adhesive() {
        let p = params();
        for i in 0..100 {
            for j in -50..50 {
                let pen = i as f64 * 1e-4;
                let rate = j as f64 * 0.2;
                assert!(contact_force(pen, rate, &p) >= 0.0);
            }
        }
    }

    #[test]
    fn default_point_set_geometry() {
        let v = VehicleParams::default();
        let points = default_contact_points(&v);
        assert_eq!(points.len(), 8);
        for (i, p) in points.iter().take(4).enumerate() {
            assert_eq!(p.arm, Some(i));
            // Guard tips span the frame's lateral envelope.
            assert_relative_eq!(p.offset.y.abs(), v.frame_half_extents.y, max_relative = 1e-12);
            assert_abs_diff_eq!(p.offset.z, -0.030, epsilon = 1e-12);
        }
        for p in points.iter().skip(4) {
            assert_eq!(p.arm, None);
            assert_abs_diff_eq!(p.offset.z, -v.frame_half_extents.z, epsilon = 1e-15);
        }
        // Staging: guard tips sit below the plate corners.
        assert!(points[0].offset.z < points[4].offset.z);
    }

    #[test]
    fn params_validate() {
        assert!(params().validate().is_ok());
        let mut bad = params();
        bad.mu = 3.0;
        assert!(matches!(
            bad.validate(),
            Err(ContactError::InvalidParameter { name: "mu", .. })
        ));
    }

    fn drop_config(compliant: bool, height: f64) -> DropConfig {
        DropConfig {
            compliant,
            height,
            vehicle: VehicleParams::default(),
            arm_params: ArmParams::default(),
            contact: ContactParams::default(),
        }
    }

    #[test]
    fn drop_impact_speed_matches_free_fall() {
        for &h in &[0.5, 1.0] {
            let outcome = drop_test(&drop_config(false, h)).unwrap();
            let expected = (2.0 * 9.81 * h).sqrt();
            assert_relative_eq!(outcome.impact_speed, expected, max_relative = 0.005);
        }
    }

    #[test]
    fn drop_compliant_softer_and_longer_than_rigid() {
        let rigid = drop_test(&drop_config(false, 1.0)).unwrap();
        let compliant = drop_test(&drop_config(true, 1.0)).unwrap();
        assert!(
            compliant.event.peak_force < rigid.event.peak_force,
            "compliant {} vs rigid {}",
            compliant.event.peak_force,
            rigid.event.peak_force
        );
        assert!(
            compliant.event.contact_duration > rigid.event.contact_duration,
            "compliant {} vs rigid {}",
            compliant.event.contact_duration,
            rigid.event.contact_duration
        );
        let ratio = compliant.event.peak_force / rigid.event.peak_force;
        assert!((0.5..=0.9).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn drop_momentum_bookkeeping() {
        for compliant in [false, true] {
            let cfg = drop_config(compliant, 1.0);
            let outcome = drop_test(&cfg).unwrap();
            let m = cfg.vehicle.mass;
            let expected = m * (outcome.impact_speed + outcome.rebound_speed)
                + m * cfg.vehicle.gravity * outcome.event.contact_duration;
            assert_relative_eq!(outcome.event.impulse, expected, max_relative = 0.01);
            // Ignoring the weight during contact still balances within 2%.
            let approx_expected = m * (outcome.impact_speed + outcome.rebound_speed);
            assert_relative_eq!(outcome.event.impulse, approx_expected, max_relative = 0.02);
        }
    }

    #[test]
    fn drop_peak_monotone_in_height() {
        let mut last = 0.0;
        for &h in &[0.5, 1.0, 1.5] {
            let outcome = drop_test(&drop_config(false, h)).unwrap();
            assert!(outcome.event.peak_force >= last);
            last = outcome.event.peak_force;
        }
    }

    #[test]
    fn symmetric_squeeze_centers_and_bends_both_sides() {
        // Weightless vehicle parked inside a gap narrower than its guard
        // span: both side walls load the tips, the arms fold, and symmetry
        // keeps the body centered.
        let mut vehicle = VehicleParams::default();
        vehicle.gravity = 1e-12;
        let environment = Environment {
            ground: false,
            gap: Some(GapGeometry {
                x_start: -1.0,
                x_end: 1.0,
                half_width: 0.24,
                entry_taper: 0.0,
                entry_half_width: 0.24,
            }),
        };
        let mut sim = CoupledSim::new(
            vehicle,
            ArmParams::default(),
            ContactParams::default(),
            environment,
            true,
        )
        .unwrap();
        let mut max_fold = [0.0f64; 4];
        for _ in 0..5000 {
            sim.step([0.0; 4], 1e-4, &[]).unwrap();
            for (peak, arm) in max_fold.iter_mut().zip(&sim.arms) {
                *peak = peak.max(arm.beta_lat.abs());
            }
        }
        assert!(sim.body.position.y.abs() < 1e-6, "drifted {}", sim.body.position.y);
        assert!(sim.body.velocity.y.abs() < 1e-6);
        // Every arm folded laterally, mirrored across the gap.
        for peak in max_fold {
            assert!(peak > 1e-3, "fold {peak}");
        }
        assert_relative_eq!(sim.arms[0].beta_lat, -sim.arms[3].beta_lat, max_relative = 1e-6);
        assert_relative_eq!(sim.arms[1].beta_lat, -sim.arms[2].beta_lat, max_relative = 1e-6);
    }
}
