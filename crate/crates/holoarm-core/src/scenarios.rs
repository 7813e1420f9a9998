//! Benchmark scenarios: lemniscate tracking, payload carry, tip-push
//! disturbance rejection, narrow-gap traversal and the drop-test suite, each
//! runnable with any `ControlPolicy` and in rigid or compliant configuration.

use alloc::vec::Vec;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::arm::ArmParams;
use crate::contact::{drop_test, ContactParams, DropConfig, DropError, DropOutcome};
use crate::dynamics::{MotorBank, VehicleParams};
use crate::pd::{ControlPolicy, Reference};
use crate::sim::{CoupledSim, Environment, GapGeometry, SimError};
use crate::Vec3;

/// Control period shared by all closed-loop scenarios [s].
pub const CONTROL_DT: f64 = 0.01;

/// One record of a closed-loop run, sampled at the control rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlightSample {
    pub t: f64,
    pub position: Vec3,
    pub reference: Vec3,
    pub error: f64,
    pub tilt: f64,
    pub yaw_rate: f64,
    /// Largest bending deflection magnitude over the four arms [rad].
    pub max_fold: f64,
    pub commands: [f64; 4],
}

#[derive(Debug, Clone)]
struct RunRecord {
    samples: Vec<FlightSample>,
    crashed: bool,
}

/// Tilt beyond which a closed-loop run counts as crashed [rad].
const CRASH_TILT: f64 = 80.0 * core::f64::consts::PI / 180.0;
const CRASH_RANGE: f64 = 100.0;

/// Timed external push: a world-frame force on one arm's guard tip over
/// [t_on, t_off).
#[derive(Debug, Clone, Copy)]
struct TimedPush {
    arm: usize,
    force: Vec3,
    t_on: f64,
    t_off: f64,
}

fn run_closed_loop(
    sim: &mut CoupledSim,
    policy: &mut dyn ControlPolicy,
    reference: &dyn Fn(f64) -> Reference,
    duration: f64,
    substeps: usize,
    push: Option<TimedPush>,
) -> RunRecord {
    let dt = CONTROL_DT / substeps as f64;
    let steps = (duration / CONTROL_DT).round() as usize;
    let mut samples = Vec::with_capacity(steps);
    let mut crashed = false;
    policy.reset();
    'control: for _ in 0..steps {
        let r = reference(sim.time);
        let commands = policy.command(&sim.body, &r);
        for _ in 0..substeps {
            let forces_owned;
            let tip: &[(usize, Vec3)] = match &push {
                Some(p) if sim.time >= p.t_on && sim.time < p.t_off => {
                    forces_owned = [(p.arm, p.force)];
                    &forces_owned
                }
                _ => &[],
            };
            if sim.step(commands, dt, tip).is_err() {
                crashed = true;
                break 'control;
            }
        }
        let r_now = reference(sim.time);
        let max_fold = sim
            .arms
            .iter()
            .flat_map(|a| [a.beta_lat.abs(), a.beta_vert.abs()])
            .fold(0.0, f64::max);
        let tilt = sim.body.tilt_angle();
        samples.push(FlightSample {
            t: sim.time,
            position: sim.body.position,
            reference: r_now.position,
            error: (r_now.position - sim.body.position).norm(),
            tilt,
            yaw_rate: sim.body.angular_velocity.z,
            max_fold,
            commands,
        });
        if tilt > CRASH_TILT || sim.body.position.norm() > CRASH_RANGE {
            crashed = true;
            break;
        }
    }
    RunRecord { samples, crashed }
}

/// True when any single motor stays at the top of its range for longer than
/// `window` seconds contiguously.
fn sustained_saturation(samples: &[FlightSample], window: f64) -> bool {
    let limit = (window / CONTROL_DT) as usize;
    for motor in 0..4 {
        let mut run = 0usize;
        for s in samples {
            if s.commands[motor] >= 0.999 {
                run += 1;
                if run > limit {
                    return true;
                }
            } else {
                run = 0;
            }
        }
    }
    false
}

fn tracking_metrics(samples: &[FlightSample], score_after: f64) -> (f64, f64) {
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut max: f64 = 0.0;
    for s in samples.iter().filter(|s| s.t >= score_after) {
        sum += s.error;
        count += 1;
        max = max.max(s.error);
    }
    (sum / count.max(1) as f64, max)
}

/// Outcome of a trajectory-tracking run.
#[derive(Debug, Clone)]
pub struct TrackingOutcome {
    pub samples: Vec<FlightSample>,
    /// Mean/max position error over the scored window [m].
    pub mean_error: f64,
    pub max_error: f64,
    pub crashed: bool,
    pub saturated: bool,
}

// ---------------------------------------------------------------------------
// Lemniscate tracking.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct LemniscateConfig {
    /// Period of one figure-eight lap [s].
    pub period: f64,
    /// Half-span of the long (x) axis [m].
    pub amplitude: f64,
    pub altitude: f64,
    /// Laps flown in total and laps scored (the leading laps warm up).
    pub laps_total: usize,
    pub laps_scored: usize,
}

impl Default for LemniscateConfig {
    fn default() -> Self {
        Self {
            period: 10.0,
            amplitude: 2.0,
            altitude: 1.0,
            laps_total: 4,
            laps_scored: 3,
        }
    }
}

/// Figure-eight reference: x swings the long axis once per period, y twice.
pub fn lemniscate_reference(t: f64, config: &LemniscateConfig) -> Reference {
    let w = 2.0 * core::f64::consts::PI / config.period;
    let a = config.amplitude;
    let half = a / 2.0;
    Reference {
        position: Vec3::new(a * (w * t).sin(), half * (2.0 * w * t).sin(), config.altitude),
        velocity: Vec3::new(
            a * w * (w * t).cos(),
            half * 2.0 * w * (2.0 * w * t).cos(),
            0.0,
        ),
        acceleration: Vec3::new(
            -a * w * w * (w * t).sin(),
            -half * 4.0 * w * w * (2.0 * w * t).sin(),
            0.0,
        ),
    }
}

/// Flies the figure eight and scores the final laps.
pub fn run_lemniscate(
    policy: &mut dyn ControlPolicy,
    vehicle: VehicleParams,
    arm_params: ArmParams,
    config: &LemniscateConfig,
) -> Result<TrackingOutcome, SimError> {
    let mut sim = CoupledSim::new(
        vehicle,
        arm_params,
        ContactParams {
            points: Vec::new(),
            ..ContactParams::default()
        },
        Environment::default(),
        true,
    )?;
    sim.body.position = lemniscate_reference(0.0, config).position;
    sim.motors = MotorBank::settled(sim.vehicle.hover_command());
    let duration = config.period * config.laps_total as f64;
    let score_after = config.period * (config.laps_total - config.laps_scored) as f64;
    let reference = |t: f64| lemniscate_reference(t, config);
    let record = run_closed_loop(&mut sim, policy, &reference, duration, 4, None);
    let (mean_error, max_error) = tracking_metrics(&record.samples, score_after);
    let saturated = sustained_saturation(&record.samples, 0.5);
    Ok(TrackingOutcome {
        samples: record.samples,
        mean_error,
        max_error,
        crashed: record.crashed,
        saturated,
    })
}

// ---------------------------------------------------------------------------
// Payload carry.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct PayloadConfig {
    /// Attached point-mass [kg], rigidly mounted below the body origin.
    pub payload_mass: f64,
    pub mount_offset_below: f64,
    pub radius: f64,
    pub altitude: f64,
    pub period: f64,
    pub laps: usize,
    /// Hover time before the circle starts [s].
    pub warmup: f64,
}

impl Default for PayloadConfig {
    fn default() -> Self {
        Self {
            payload_mass: 0.55,
            mount_offset_below: 0.05,
            radius: 1.0,
            altitude: 0.9,
            period: 8.0,
            laps: 3,
            warmup: 3.0,
        }
    }
}

/// Adds the payload to the simulated plant (mass plus parallel-axis inertia
/// about the roll/pitch axes). The controller keeps flying the unloaded
/// model, which is the point of the experiment.
pub fn payload_vehicle(nominal: &VehicleParams, config: &PayloadConfig) -> VehicleParams {
    let mut v = nominal.clone();
    v.mass += config.payload_mass;
    let d2 = config.mount_offset_below * config.mount_offset_below;
    v.inertia_diag.x += config.payload_mass * d2;
    v.inertia_diag.y += config.payload_mass * d2;
    v
}

fn circle_reference(t: f64, config: &PayloadConfig) -> Reference {
    if t < config.warmup {
        return Reference::hover(Vec3::new(config.radius, 0.0, config.altitude));
    }
    let w = 2.0 * core::f64::consts::PI / config.period;
    let phase = w * (t - config.warmup);
    let r = config.radius;
    Reference {
        position: Vec3::new(r * phase.cos(), r * phase.sin(), config.altitude),
        velocity: Vec3::new(-r * w * phase.sin(), r * w * phase.cos(), 0.0),
        acceleration: Vec3::new(-r * w * w * phase.cos(), -r * w * w * phase.sin(), 0.0),
    }
}

/// Hovers, then flies laps of a circle while carrying an unmodelled payload.
pub fn run_payload_circle(
    policy: &mut dyn ControlPolicy,
    nominal: VehicleParams,
    arm_params: ArmParams,
    config: &PayloadConfig,
) -> Result<TrackingOutcome, SimError> {
    let mut sim = CoupledSim::new(
        payload_vehicle(&nominal, config),
        arm_params,
        ContactParams {
            points: Vec::new(),
            ..ContactParams::default()
        },
        Environment::default(),
        true,
    )?;
    sim.body.position = Vec3::new(config.radius, 0.0, config.altitude);
    let duration = config.warmup + config.period * config.laps as f64;
    let reference = |t: f64| circle_reference(t, config);
    let record = run_closed_loop(&mut sim, policy, &reference, duration, 4, None);
    let (mean_error, max_error) = tracking_metrics(&record.samples, config.warmup);
    let saturated = sustained_saturation(&record.samples, 0.5);
    Ok(TrackingOutcome {
        samples: record.samples,
        mean_error,
        max_error,
        crashed: record.crashed,
        saturated,
    })
}

// ---------------------------------------------------------------------------
// Tip-push disturbance rejection.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct DisturbanceConfig {
    /// Push magnitude [N] and duration [s], applied tangentially (about the
    /// yaw axis) at arm 0's guard tip.
    pub force: f64,
    pub push_duration: f64,
    /// Hover settle time before the push [s].
    pub settle: f64,
    /// Observation window after the push [s].
    pub aftermath: f64,
    /// Recovery thresholds: position error [m] and tilt [rad].
    pub recover_error: f64,
    pub recover_tilt: f64,
}

impl Default for DisturbanceConfig {
    fn default() -> Self {
        Self {
            force: 2.0,
            push_duration: 0.1,
            settle: 2.0,
            aftermath: 4.0,
            recover_error: 0.15,
            recover_tilt: 5.0 * core::f64::consts::PI / 180.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DisturbanceOutcome {
    pub samples: Vec<FlightSample>,
    /// Largest yaw-rate magnitude after the push begins [rad/s].
    pub peak_yaw_rate: f64,
    pub peak_error: f64,
    pub peak_fold: f64,
    /// Time from push end to sustained recovery, if reached.
    pub recovery_time: Option<f64>,
    pub crashed: bool,
}

/// Holds hover, delivers a tangential push at a guard tip, and reports how
/// the vehicle rides it out.
pub fn run_hover_disturbance(
    policy: &mut dyn ControlPolicy,
    vehicle: VehicleParams,
    arm_params: ArmParams,
    compliant: bool,
    config: &DisturbanceConfig,
) -> Result<DisturbanceOutcome, SimError> {
    let target = Vec3::new(0.0, 0.0, 1.0);
    let mut sim = CoupledSim::new(
        vehicle,
        arm_params,
        ContactParams::default(),
        Environment::default(),
        compliant,
    )?;
    sim.body.position = target;
    sim.motors = MotorBank::settled(sim.vehicle.hover_command());
    // Push direction: horizontal, perpendicular to the arm (pure yaw moment
    // about the vehicle center at level attitude).
    let rotor = sim.vehicle.rotor_positions[0];
    let radial = Vec3::new(rotor.x, rotor.y, 0.0).normalize();
    let tangent = Vec3::z().cross(&radial);
    let push = TimedPush {
        arm: 0,
        force: tangent * config.force,
        t_on: config.settle,
        t_off: config.settle + config.push_duration,
    };
    let duration = config.settle + config.push_duration + config.aftermath;
    let reference = move |_: f64| Reference::hover(target);
    let record = run_closed_loop(&mut sim, policy, &reference, duration, 20, Some(push));

    let push_end = push.t_off;
    let mut peak_yaw_rate: f64 = 0.0;
    let mut peak_error: f64 = 0.0;
    let mut peak_fold: f64 = 0.0;
    for s in record.samples.iter().filter(|s| s.t >= push.t_on) {
        peak_yaw_rate = peak_yaw_rate.max(s.yaw_rate.abs());
        peak_error = peak_error.max(s.error);
        peak_fold = peak_fold.max(s.max_fold);
    }
    // Recovered once error and tilt stay inside the thresholds for 1 s.
    let hold = (1.0 / CONTROL_DT) as usize;
    let after: Vec<&FlightSample> = record.samples.iter().filter(|s| s.t >= push_end).collect();
    let mut recovery_time = None;
    'outer: for i in 0..after.len() {
        if after[i].error < config.recover_error && after[i].tilt < config.recover_tilt {
            for j in i..(i + hold).min(after.len()) {
                if after[j].error >= config.recover_error || after[j].tilt >= config.recover_tilt {
                    continue 'outer;
                }
            }
            recovery_time = Some(after[i].t - push_end);
            break;
        }
    }
    Ok(DisturbanceOutcome {
        samples: record.samples,
        peak_yaw_rate,
        peak_error,
        peak_fold,
        recovery_time,
        crashed: record.crashed,
    })
}

// ---------------------------------------------------------------------------
// Narrow-gap traversal.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct GapConfig {
    /// Clear width of the corridor throat [m] (the guard span is 0.512 m).
    pub gap_width: f64,
    /// Corridor extent along x [m]. The corridor is longer than the
    /// fore-aft guard span so a rigid vehicle cannot ratchet tip pairs
    /// through one at a time.
    pub x_start: f64,
    pub x_end: f64,
    /// Funnel-mouth entry: taper length and mouth width [m].
    pub entry_taper: f64,
    pub entry_width: f64,
    pub altitude: f64,
    pub approach_speed: f64,
    /// Hover settle before the approach [s].
    pub settle: f64,
    /// Reference stop position past the gap [m].
    pub x_goal: f64,
    pub timeout: f64,
    /// Restabilization threshold [m] and deadline after crossing [s].
    pub recover_error: f64,
    pub recover_deadline: f64,
}

impl Default for GapConfig {
    fn default() -> Self {
        Self {
            gap_width: 0.48,
            x_start: 1.0,
            x_end: 2.0,
            entry_taper: 0.3,
            entry_width: 0.70,
            altitude: 1.0,
            approach_speed: 0.5,
            settle: 2.0,
            x_goal: 2.5,
            timeout: 14.0,
            recover_error: 0.15,
            recover_deadline: 3.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GapOutcome {
    pub samples: Vec<FlightSample>,
    /// Body center passed the middle of the corridor.
    pub traversed: bool,
    pub crossing_time: Option<f64>,
    /// Time from crossing to the tracking error re-entering the threshold.
    pub restabilize_time: Option<f64>,
    pub peak_fold: f64,
    pub crashed: bool,
}

/// Flies a straight corridor narrower than the guard span. Compliant arms
/// fold against the walls and let the vehicle squeeze through; rigid guards
/// wedge against the walls.
pub fn run_narrow_gap(
    policy: &mut dyn ControlPolicy,
    vehicle: VehicleParams,
    arm_params: ArmParams,
    compliant: bool,
    config: &GapConfig,
) -> Result<GapOutcome, SimError> {
    let gap = GapGeometry {
        x_start: config.x_start,
        x_end: config.x_end,
        half_width: config.gap_width / 2.0,
        entry_taper: config.entry_taper,
        entry_half_width: config.entry_width / 2.0,
    };
    let mut sim = CoupledSim::new(
        vehicle,
        arm_params,
        ContactParams::default(),
        Environment {
            ground: true,
            gap: Some(gap),
        },
        compliant,
    )?;
    sim.body.position = Vec3::new(0.0, 0.0, config.altitude);
    sim.motors = MotorBank::settled(sim.vehicle.hover_command());
    let cfg = *config;
    let reference = move |t: f64| {
        if t < cfg.settle {
            return Reference::hover(Vec3::new(0.0, 0.0, cfg.altitude));
        }
        let x = (cfg.approach_speed * (t - cfg.settle)).min(cfg.x_goal);
        let moving = x < cfg.x_goal;
        Reference {
            position: Vec3::new(x, 0.0, cfg.altitude),
            velocity: Vec3::new(if moving { cfg.approach_speed } else { 0.0 }, 0.0, 0.0),
            acceleration: Vec3::zeros(),
        }
    };
    let record = run_closed_loop(&mut sim, policy, &reference, config.timeout, 100, None);

    let mid = (config.x_start + config.x_end) / 2.0;
    let crossing = record.samples.iter().find(|s| s.position.x >= mid);
    let crossing_time = crossing.map(|s| s.t);
    let mut restabilize_time = None;
    if let Some(t_cross) = crossing_time {
        restabilize_time = record
            .samples
            .iter()
            .filter(|s| s.t >= t_cross && s.error < config.recover_error)
            .map(|s| s.t - t_cross)
            .next();
    }
    let peak_fold = record.samples.iter().map(|s| s.max_fold).fold(0.0, f64::max);
    Ok(GapOutcome {
        samples: record.samples,
        traversed: crossing_time.is_some(),
        crossing_time,
        restabilize_time,
        peak_fold,
        crashed: record.crashed,
    })
}

// ---------------------------------------------------------------------------
// Drop-test suite.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct DropSuiteConfig {
    pub heights: Vec<f64>,
    /// Mass of the bare drop frame [kg]; inertia scales with it.
    pub frame_mass: f64,
    pub vehicle: VehicleParams,
    pub arm_params: ArmParams,
    pub contact: ContactParams,
}

impl Default for DropSuiteConfig {
    fn default() -> Self {
        Self {
            heights: alloc::vec![1.0, 1.5, 3.0],
            frame_mass: 0.670,
            vehicle: VehicleParams::default(),
            arm_params: ArmParams::default(),
            contact: ContactParams::default(),
        }
    }
}

/// One height's rigid-vs-compliant comparison.
#[derive(Debug, Clone)]
pub struct DropPair {
    pub height: f64,
    pub rigid: DropOutcome,
    pub compliant: DropOutcome,
}

/// Drops the bare frame rigid and compliant from each height.
pub fn run_drop_suite(config: &DropSuiteConfig) -> Result<Vec<DropPair>, DropError> {
    let mut vehicle = config.vehicle.clone();
    let scale = config.frame_mass / vehicle.mass;
    vehicle.mass = config.frame_mass;
    vehicle.inertia_diag *= scale;
    let mut pairs = Vec::with_capacity(config.heights.len());
    for &height in &config.heights {
        let drop = |compliant: bool| {
            drop_test(&DropConfig {
                compliant,
                height,
                vehicle: vehicle.clone(),
                arm_params: config.arm_params.clone(),
                contact: config.contact.clone(),
            })
        };
        pairs.push(DropPair {
            height,
            rigid: drop(false)?,
            compliant: drop(true)?,
        });
    }
    Ok(pairs)
}
