//! Identification of the arm spring-damper constants from recovery
//! measurements: trace ingestion, recovery-time extraction, and a
//! deterministic two-phase bisection fit (damping ratio at a fixed natural
//! frequency, then natural frequency) whose re-simulated response matches
//! the target recovery time.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
#[cfg(not(feature = "std"))]
use num_traits::Float;
use thiserror::Error;

use crate::arm::{arm_step, ArmLoad, ArmParams, ArmState};

/// Recovery band for the bending channels [deg].
pub const ANGLE_THRESHOLD_DEG: f64 = 1.0;
/// Recovery band for the axial channel, as a fraction of the rest (peak)
/// displacement.
pub const AXIAL_THRESHOLD_FRACTION: f64 = 0.01;

/// Damping-ratio search range of the fit's first phase.
pub const ZETA_RANGE: (f64, f64) = (0.5, 1.2);

/// Which arm degree of freedom a measurement refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    /// Lateral bending; values in degrees.
    Lateral,
    /// Upward vertical bending; values in degrees.
    Up,
    /// Downward vertical bending; values in degrees (released downward).
    Down,
    /// Axial slide; values in millimeters.
    Axial,
}

impl Channel {
    pub fn name(&self) -> &'static str {
        match self {
            Channel::Lateral => "lateral",
            Channel::Up => "up",
            Channel::Down => "down",
            Channel::Axial => "axial",
        }
    }

    pub fn parse(s: &str) -> Option<Channel> {
        match s {
            "lateral" => Some(Channel::Lateral),
            "up" => Some(Channel::Up),
            "down" => Some(Channel::Down),
            "axial" => Some(Channel::Axial),
            _ => None,
        }
    }

    fn is_bending(&self) -> bool {
        !matches!(self, Channel::Axial)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("trace needs at least 2 samples, got {0}")]
    TraceTooShort(usize),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("peak deflection {peak} is not above the recovery threshold {threshold}")]
    PeakBelowThreshold { peak: f64, threshold: f64 },
    #[error("recovery-time target {0} must be positive")]
    NonPositiveTarget(f64),
    #[error("no parameters in the search range reach a recovery time of {0} s")]
    InfeasibleTarget(f64),
    #[error("release simulation failed: {0}")]
    Simulation(String),
}

/// A uniformly sampled deflection-vs-time measurement for one channel,
/// expressed as deviation from rest (0 = recovered).
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryTrace {
    pub timestamps: Vec<f64>,
    pub values: Vec<f64>,
    pub channel: Channel,
}

impl RecoveryTrace {
    pub fn validate(&self) -> Result<(), FitError> {
        if self.timestamps.len() < 2 || self.timestamps.len() != self.values.len() {
            return Err(FitError::TraceTooShort(self.timestamps.len()));
        }
        for i in 1..self.timestamps.len() {
            if self.timestamps[i] <= self.timestamps[i - 1] {
                return Err(FitError::Parse {
                    line: i + 2, // 1-based, after the header line
                    message: format!(
                        "timestamp {} not greater than previous {}",
                        self.timestamps[i],
                        self.timestamps[i - 1]
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Parses two-column CSV text (`t_s,value` header) into a validated trace.
pub fn parse_trace(text: &str, channel: Channel) -> Result<RecoveryTrace, FitError> {
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((idx, line)) => {
                if !line.trim().is_empty() {
                    break (idx, line.trim());
                }
            }
            None => {
                return Err(FitError::Parse {
                    line: 1,
                    message: String::from("empty file, expected header t_s,value"),
                })
            }
        }
    };
    if header.1 != "t_s,value" {
        return Err(FitError::Parse {
            line: header.0 + 1,
            message: format!("expected header 't_s,value', got '{}'", header.1),
        });
    }
    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split(',');
        let (t_str, v_str) = match (cols.next(), cols.next(), cols.next()) {
            (Some(a), Some(b), None) => (a.trim(), b.trim()),
            _ => {
                return Err(FitError::Parse {
                    line: line_no,
                    message: format!("expected 2 comma-separated columns, got '{line}'"),
                })
            }
        };
        let t: f64 = t_str.parse().map_err(|_| FitError::Parse {
            line: line_no,
            message: format!("invalid number '{t_str}'"),
        })?;
        let v: f64 = v_str.parse().map_err(|_| FitError::Parse {
            line: line_no,
            message: format!("invalid number '{v_str}'"),
        })?;
        if let Some(&prev) = timestamps.last() {
            if t <= prev {
                return Err(FitError::Parse {
                    line: line_no,
                    message: format!("timestamp {t} not greater than previous {prev}"),
                });
            }
        }
        timestamps.push(t);
        values.push(v);
    }
    let trace = RecoveryTrace {
        timestamps,
        values,
        channel,
    };
    if trace.timestamps.len() < 2 {
        return Err(FitError::TraceTooShort(trace.timestamps.len()));
    }
    Ok(trace)
}

/// Time from the trace's global extremum until |value| first re-enters the
/// threshold band, with the crossing linearly interpolated between samples.
/// `None` if the band is never reached; 0 if the extremum already sits
/// inside the band.
pub fn recovery_time(trace: &RecoveryTrace, threshold: f64) -> Result<Option<f64>, FitError> {
    if trace.timestamps.len() < 2 {
        return Err(FitError::TraceTooShort(trace.timestamps.len()));
    }
    let mut peak_idx = 0;
    for (i, v) in trace.values.iter().enumerate() {
        if v.abs() > trace.values[peak_idx].abs() {
            peak_idx = i;
        }
    }
    if trace.values[peak_idx].abs() <= threshold {
        return Ok(Some(0.0));
    }
    let t_peak = trace.timestamps[peak_idx];
    for i in (peak_idx + 1)..trace.values.len() {
        let cur = trace.values[i].abs();
        if cur <= threshold {
            let prev = trace.values[i - 1].abs();
            let t_prev = trace.timestamps[i - 1];
            let t_cur = trace.timestamps[i];
            let frac = if prev > cur { (prev - threshold) / (prev - cur) } else { 1.0 };
            return Ok(Some(t_prev + frac * (t_cur - t_prev) - t_peak));
        }
    }
    Ok(None)
}

/// One identification target: release amplitude (deg for bending channels,
/// mm for the axial channel) and the measured recovery time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitTarget {
    pub channel: Channel,
    pub peak: f64,
    pub recovery_s: f64,
}

/// The measured recovery benchmarks of the default platform.
pub fn reference_targets() -> [FitTarget; 4] {
    [
        FitTarget { channel: Channel::Lateral, peak: 32.0, recovery_s: 0.72 },
        FitTarget { channel: Channel::Up, peak: 28.0, recovery_s: 0.27 },
        FitTarget { channel: Channel::Down, peak: 19.0, recovery_s: 0.62 },
        FitTarget { channel: Channel::Axial, peak: 3.66, recovery_s: 0.75 },
    ]
}

/// Fitted stiffness/damping pair plus the search coordinates it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub k: f64,
    pub c: f64,
    pub omega_n: f64,
    pub zeta: f64,
    /// Recovery time of the re-simulated release with the fitted pair.
    pub achieved_s: f64,
}

fn threshold_for(target: &FitTarget) -> f64 {
    if target.channel.is_bending() {
        ANGLE_THRESHOLD_DEG
    } else {
        AXIAL_THRESHOLD_FRACTION * target.peak
    }
}

/// Display units (deg or mm) to SI (rad or m).
fn to_si(channel: Channel, value: f64) -> f64 {
    if channel.is_bending() {
        value.to_radians()
    } else {
        value * 1e-3
    }
}

fn from_si(channel: Channel, value: f64) -> f64 {
    if channel.is_bending() {
        value.to_degrees()
    } else {
        value * 1e3
    }
}

fn read_channel(channel: Channel, state: &ArmState) -> f64 {
    match channel {
        Channel::Lateral => state.beta_lat,
        Channel::Up | Channel::Down => state.beta_vert,
        Channel::Axial => state.s_ax,
    }
}

/// Joint parameters and initial state for a static release of one channel
/// from the target peak. Vertical candidates are applied to both the up and
/// the down side; the measured crossing happens before the trajectory
/// changes sign, so the channels decouple.
fn release_setup(target: &FitTarget, k: f64, c: f64, base: &ArmParams) -> (ArmParams, ArmState) {
    let mut params = base.clone();
    let mut state = ArmState::default();
    let peak_si = to_si(target.channel, target.peak);
    match target.channel {
        Channel::Lateral => {
            params.k_lat = k;
            params.c_lat = c;
            state.beta_lat = peak_si;
        }
        Channel::Up => {
            params.k_up = k;
            params.c_up = c;
            params.k_down = k;
            params.c_down = c;
            state.beta_vert = peak_si;
        }
        Channel::Down => {
            params.k_up = k;
            params.c_up = c;
            params.k_down = k;
            params.c_down = c;
            state.beta_vert = -peak_si;
        }
        Channel::Axial => {
            params.k_ax = k;
            params.c_ax = c;
            state.s_ax = peak_si.min(params.axial_travel_max);
        }
    }
    (params, state)
}

/// Simulates a release from the target peak with candidate constants and
/// returns the recovery time (None if the band is not reached within the
/// horizon).
pub fn simulate_release(
    target: &FitTarget,
    k: f64,
    c: f64,
    base: &ArmParams,
    horizon_s: f64,
    dt: f64,
) -> Option<f64> {
    let (params, mut state) = release_setup(target, k, c, base);
    let threshold_si = to_si(target.channel, threshold_for(target));
    let steps = (horizon_s / dt).ceil() as usize;
    let mut prev = read_channel(target.channel, &state).abs();
    for i in 0..steps {
        state = arm_step(&state, &ArmLoad::default(), &params, dt).ok()?;
        let cur = read_channel(target.channel, &state).abs();
        if cur <= threshold_si {
            let frac = if prev > cur {
                (prev - threshold_si) / (prev - cur)
            } else {
                1.0
            };
            return Some((i as f64 + frac) * dt);
        }
        prev = cur;
    }
    None
}

/// Samples the same release `simulate_release` scores, in the channel's
/// display units (degrees or millimeters), for plotting.
pub fn release_trace(
    target: &FitTarget,
    k: f64,
    c: f64,
    base: &ArmParams,
    horizon_s: f64,
    dt: f64,
) -> Result<Vec<(f64, f64)>, FitError> {
    let (params, mut state) = release_setup(target, k, c, base);
    let steps = (horizon_s / dt).ceil() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    out.push((0.0, from_si(target.channel, read_channel(target.channel, &state))));
    for i in 0..steps {
        state = arm_step(&state, &ArmLoad::default(), &params, dt)
            .map_err(|e| FitError::Simulation(e.to_string()))?;
        out.push((
            (i + 1) as f64 * dt,
            from_si(target.channel, read_channel(target.channel, &state)),
        ));
    }
    Ok(out)
}

/// Integration step used by the fit's release simulations [s].
pub const FIT_SIM_DT: f64 = 5e-4;

fn release_time(target: &FitTarget, omega_n: f64, zeta: f64, scale: f64, base: &ArmParams) -> Option<f64> {
    let k = scale * omega_n * omega_n;
    let c = 2.0 * zeta * omega_n * scale;
    let horizon = 20.0 * target.recovery_s;
    simulate_release(target, k, c, base, horizon, FIT_SIM_DT)
}

/// Identifies (k, c) for one channel by nested bisection.
///
/// Phase A holds the natural frequency at `5 / recovery_s` and bisects the
/// damping ratio over [0.5, 1.2] (recovery time is increasing in damping
/// there). If the target lies outside that bracket, phase B pins the damping
/// ratio at the nearer bound and bisects the natural frequency instead
/// (recovery time scales inversely with it).
pub fn fit_arm_params(target: &FitTarget, base: &ArmParams) -> Result<FitResult, FitError> {
    if !(target.recovery_s > 0.0) {
        return Err(FitError::NonPositiveTarget(target.recovery_s));
    }
    let threshold = threshold_for(target);
    if !(target.peak > threshold) {
        return Err(FitError::PeakBelowThreshold {
            peak: target.peak,
            threshold,
        });
    }
    let scale = if target.channel.is_bending() {
        base.i_eff
    } else {
        base.m_eff
    };
    let goal = target.recovery_s;
    let tol = 1e-3 * goal;
    let omega0 = 5.0 / goal;
    let time_at = |omega: f64, zeta: f64| release_time(target, omega, zeta, scale, base);
    let inf = f64::INFINITY;

    let t_lo = time_at(omega0, ZETA_RANGE.0).unwrap_or(inf);
    let t_hi = time_at(omega0, ZETA_RANGE.1).unwrap_or(inf);

    let finish = |omega_n: f64, zeta: f64, achieved: f64| FitResult {
        k: scale * omega_n * omega_n,
        c: 2.0 * zeta * omega_n * scale,
        omega_n,
        zeta,
        achieved_s: achieved,
    };

    if t_lo <= goal && goal <= t_hi {
        let (mut lo, mut hi) = ZETA_RANGE;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            let t = time_at(omega0, mid).unwrap_or(inf);
            if (t - goal).abs() <= tol {
                return Ok(finish(omega0, mid, t));
            }
            if t < goal {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let zeta = 0.5 * (lo + hi);
        let t = time_at(omega0, zeta).unwrap_or(inf);
        return Ok(finish(omega0, zeta, t));
    }

    // Phase B: damping pinned at the nearer bound, frequency bisected.
    // Recovery time decreases as omega_n grows.
    let zeta = if goal < t_lo { ZETA_RANGE.0 } else { ZETA_RANGE.1 };
    let (mut w_lo, mut w_hi) = (omega0 / 32.0, omega0 * 32.0);
    let t_at_w_lo = time_at(w_lo, zeta).unwrap_or(inf);
    let t_at_w_hi = time_at(w_hi, zeta).unwrap_or(inf);
    if !(t_at_w_hi <= goal && goal <= t_at_w_lo) {
        return Err(FitError::InfeasibleTarget(goal));
    }
    for _ in 0..80 {
        let mid = (w_lo * w_hi).sqrt();
        let t = time_at(mid, zeta).unwrap_or(inf);
        if (t - goal).abs() <= tol {
            return Ok(finish(mid, zeta, t));
        }
        if t > goal {
            w_lo = mid;
        } else {
            w_hi = mid;
        }
    }
    let omega = (w_lo * w_hi).sqrt();
    let t = time_at(omega, zeta).unwrap_or(inf);
    Ok(finish(omega, zeta, t))
}

/// Fits all four channels against the reference benchmarks and returns the
/// base parameter set with the identified constants installed.
pub fn fit_reference_params(base: &ArmParams) -> Result<ArmParams, FitError> {
    let mut params = base.clone();
    for target in reference_targets() {
        let fit = fit_arm_params(&target, base)?;
        match target.channel {
            Channel::Lateral => {
                params.k_lat = fit.k;
                params.c_lat = fit.c;
            }
            Channel::Up => {
                params.k_up = fit.k;
                params.c_up = fit.c;
            }
            Channel::Down => {
                params.k_down = fit.k;
                params.c_down = fit.c;
            }
            Channel::Axial => {
                params.k_ax = fit.k;
                params.c_ax = fit.c;
            }
        }
    }
    Ok(params)
}
