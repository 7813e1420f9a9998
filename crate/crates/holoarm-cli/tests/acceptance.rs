//! End-to-end acceptance gate for the workspace.
//!
//! Runs ten independent criteria covering physics sanity, hover equilibrium,
//! arm-parameter identification, the drop-test trend, hover-policy training,
//! trajectory tracking, the payload and narrow-gap tasks, run determinism,
//! and the policy-network gradient check. Each criterion prints exactly one
//! `PASS`/`FAIL` line; the process exits nonzero if any criterion fails.
//!
//! The long pole is the training criterion (a full PPO run); everything else
//! finishes in seconds.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use holoarm_cli::config::Config;
use holoarm_core::arm::{ArmParams, ArmState};
use holoarm_core::dynamics::{
    body_wrench, motor_lag_step, step, BodyWrench, MotorBank, RigidBodyState, VehicleParams,
};
use holoarm_core::fit::{
    fit_arm_params, reference_targets, simulate_release, FitResult, FitTarget, FIT_SIM_DT,
};
use holoarm_core::pd::{ControlPolicy, PdController, Reference};
use holoarm_core::rl::{
    evaluate, train, Activation, EnvConfig, HoverEnv, Mlp, MlpCache, PpoConfig,
};
use holoarm_core::scenarios::{
    run_drop_suite, run_lemniscate, run_narrow_gap, run_payload_circle,
};
use holoarm_core::{Vec3, GRAVITY};

type CriterionResult = Result<String, String>;

fn main() {
    let criteria: &[(&str, fn() -> CriterionResult)] = &[
        ("rigid-body integration", rigid_body_integration),
        ("hover equilibrium", hover_equilibrium),
        ("arm recovery fit round trip", arm_recovery_fit_round_trip),
        ("drop-test attenuation trend", drop_test_attenuation_trend),
        ("hover policy training", hover_policy_training),
        ("lemniscate tracking", lemniscate_tracking),
        ("payload circuit", payload_circuit),
        ("narrow-gap traversal", narrow_gap_traversal),
        ("run determinism", run_determinism),
        ("policy gradient check", policy_gradient_check),
    ];
    // Optional substring filters select criteria by title (useful when
    // iterating on one criterion); flag-style arguments are ignored.
    let mut filter: Vec<String> = std::env::args().skip(1).collect();
    filter.retain(|arg| !arg.starts_with('-'));
    let mut failures = 0usize;
    for (index, (title, criterion)) in criteria.iter().enumerate() {
        let number = index + 1;
        if !filter.is_empty() && !filter.iter().any(|f| title.contains(f.as_str())) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(criterion)).unwrap_or_else(|payload| {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panicked".to_string());
            Err(message)
        });
        match outcome {
            Ok(detail) => {
                println!("[acceptance] criterion {number} ({title}): PASS ({detail})");
            }
            Err(message) => {
                failures += 1;
                println!("[acceptance] criterion {number} ({title}): FAIL ({message})");
            }
        }
    }
    if failures > 0 {
        eprintln!("[acceptance] {failures} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}

fn ensure(condition: bool, message: String) -> Result<(), String> {
    if condition {
        Ok(())
    } else {
        Err(message)
    }
}

fn sim_err<E: std::fmt::Display>(error: E) -> String {
    error.to_string()
}

/// Criterion 1: free fall lands exactly where constant acceleration says,
/// the attitude quaternion stays unit-norm over 1e5 steps, and a torque-free
/// tumble conserves world-frame angular momentum.
fn rigid_body_integration() -> CriterionResult {
    let vehicle = VehicleParams::default();

    // Free fall from rest for 1 s: dz = -g/2.
    let mut state = RigidBodyState::default();
    let dt = 0.01;
    for _ in 0..100 {
        state = step(&state, &BodyWrench::zero(), &vehicle, dt).map_err(sim_err)?;
    }
    let dz = state.position.z;
    let expected = -GRAVITY / 2.0;
    ensure(
        (dz - expected).abs() < 1e-6,
        format!("free-fall dz {dz:.9} m, expected {expected:.9} m"),
    )?;

    // Torque-free tumble about all three axes. The momentum budget is scored
    // over the first second; the norm drift over the full 1e5 steps.
    let mut tumble = RigidBodyState {
        angular_velocity: Vec3::new(1.2, -0.8, 0.5),
        ..RigidBodyState::default()
    };
    let dt = 1e-3;
    let l0 = tumble.angular_momentum_world(&vehicle);
    let mut norm_drift: f64 = 0.0;
    let mut momentum_drift: f64 = 0.0;
    for i in 0..100_000 {
        tumble = step(&tumble, &BodyWrench::zero(), &vehicle, dt).map_err(sim_err)?;
        norm_drift = norm_drift.max((tumble.attitude.quaternion().norm() - 1.0).abs());
        if i < 1000 {
            let l = tumble.angular_momentum_world(&vehicle);
            momentum_drift = momentum_drift.max((l - l0).norm() / l0.norm());
        }
    }
    ensure(
        norm_drift < 1e-9,
        format!("quaternion norm drift {norm_drift:.3e}"),
    )?;
    ensure(
        momentum_drift < 1e-6,
        format!("angular momentum drift {momentum_drift:.3e} relative"),
    )?;
    Ok(format!(
        "free-fall dz {dz:.6} m, quaternion drift {norm_drift:.1e}, momentum drift {momentum_drift:.1e}"
    ))
}

/// Criterion 2: the per-motor hover command sits at the advertised level and,
/// once motor lag settles, leaves the vehicle with negligible net
/// acceleration.
fn hover_equilibrium() -> CriterionResult {
    let vehicle = VehicleParams::default();
    let arm_params = ArmParams::default();
    let command = vehicle.hover_command();
    ensure(
        (command - 0.429).abs() < 5e-4,
        format!("hover command {command:.6}, expected about 0.429"),
    )?;

    // Spin the motors up from rest for 2 s (50 time constants), then measure
    // the acceleration over one step of the resulting wrench.
    let mut bank = MotorBank::settled(0.0);
    let dt = 1e-3;
    for _ in 0..2000 {
        bank = motor_lag_step(&bank, [command; 4], dt, &vehicle).map_err(sim_err)?;
    }
    let arms: [ArmState; 4] = Default::default();
    let wrench = body_wrench(&bank, &arms, &vehicle, &arm_params).map_err(sim_err)?;
    let state = RigidBodyState {
        position: Vec3::new(0.0, 0.0, 1.0),
        ..RigidBodyState::default()
    };
    let next = step(&state, &wrench, &vehicle, dt).map_err(sim_err)?;
    let accel = ((next.velocity - state.velocity) / dt).norm();
    ensure(
        accel < 1e-4,
        format!("net acceleration {accel:.3e} m/s^2 at hover"),
    )?;
    Ok(format!(
        "hover command {command:.5}, settled net acceleration {accel:.1e} m/s^2"
    ))
}

/// Criterion 3: fitted spring/damper pairs reproduce every measured recovery
/// time within 10% on re-simulation, and a brute-force grid search confirms
/// the lateral fit up to one grid cell of objective resolution.
fn arm_recovery_fit_round_trip() -> CriterionResult {
    let base = ArmParams::default();
    let mut details = Vec::new();
    let mut lateral_fit: Option<(FitTarget, FitResult)> = None;
    for target in reference_targets() {
        let fit = fit_arm_params(&target, &base).map_err(sim_err)?;
        let horizon = 10.0 * target.recovery_s;
        let achieved = simulate_release(&target, fit.k, fit.c, &base, horizon, FIT_SIM_DT)
            .ok_or_else(|| format!("{}: release never recovers", target.channel.name()))?;
        let relative = (achieved - target.recovery_s).abs() / target.recovery_s;
        ensure(
            relative <= 0.10,
            format!(
                "{}: achieved {achieved:.4} s vs target {} s ({:.1}% off)",
                target.channel.name(),
                target.recovery_s,
                100.0 * relative
            ),
        )?;
        details.push(format!("{} {achieved:.3} s", target.channel.name()));
        if lateral_fit.is_none() {
            lateral_fit = Some((target, fit));
        }
    }

    // Independent oracle: exhaustive log-spaced (k, c) grid around the
    // fitted lateral pair. The bisection answer must match the target as
    // well as the best grid point does, up to the objective's variation
    // across one grid cell.
    let (target, fit) = lateral_fit.expect("reference targets are non-empty");
    let n = 61usize;
    let span = 10.0f64;
    let horizon = 10.0 * target.recovery_s;
    let dt = 1e-3;
    let coord = |idx: usize, center: f64| {
        center / span * (span * span).powf(idx as f64 / (n - 1) as f64)
    };
    let mut times = vec![f64::NAN; n * n];
    let mut best_err = f64::INFINITY;
    let mut best = (0usize, 0usize);
    for i in 0..n {
        for j in 0..n {
            let k = coord(i, fit.k);
            let c = coord(j, fit.c);
            let t = simulate_release(&target, k, c, &base, horizon, dt).unwrap_or(f64::INFINITY);
            times[i * n + j] = t;
            let err = (t - target.recovery_s).abs();
            if err < best_err {
                best_err = err;
                best = (i, j);
            }
        }
    }
    let (bi, bj) = best;
    let t_best = times[bi * n + bj];
    let mut cell_var: f64 = 0.0;
    for (di, dj) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
        let ni = bi as i64 + di;
        let nj = bj as i64 + dj;
        if ni >= 0 && ni < n as i64 && nj >= 0 && nj < n as i64 {
            let t_n = times[ni as usize * n + nj as usize];
            if t_n.is_finite() {
                cell_var = cell_var.max((t_n - t_best).abs());
            }
        }
    }
    let fit_time = simulate_release(&target, fit.k, fit.c, &base, horizon, dt)
        .ok_or_else(|| "fitted lateral release never recovers at grid resolution".to_string())?;
    let fit_err = (fit_time - target.recovery_s).abs();
    ensure(
        fit_err <= best_err + cell_var,
        format!("lateral fit error {fit_err:.5} s vs grid best {best_err:.5} s + cell {cell_var:.5} s"),
    )?;
    Ok(format!(
        "round trip {}; grid oracle within one cell ({fit_err:.4} s <= {best_err:.4} s + {cell_var:.4} s)",
        details.join(", ")
    ))
}

/// Criterion 4: across drop heights the compliant frame always sees a lower,
/// longer impact than the rigid one, the peak-force ratio stays in the
/// moderate-attenuation band, impact speeds match free fall, and peaks grow
/// with height.
fn drop_test_attenuation_trend() -> CriterionResult {
    let config = Config::load(None).map_err(sim_err)?;
    let pairs = run_drop_suite(&config.drop).map_err(sim_err)?;
    ensure(
        pairs.len() == 3,
        format!("expected 3 drop heights, got {}", pairs.len()),
    )?;
    let mut previous_rigid = 0.0f64;
    let mut previous_compliant = 0.0f64;
    let mut ratios = Vec::new();
    for pair in &pairs {
        let rigid = &pair.rigid.event;
        let compliant = &pair.compliant.event;
        let h = pair.height;
        ensure(
            compliant.peak_force < rigid.peak_force,
            format!(
                "h={h} m: compliant peak {:.1} N not below rigid {:.1} N",
                compliant.peak_force, rigid.peak_force
            ),
        )?;
        ensure(
            compliant.contact_duration > rigid.contact_duration,
            format!(
                "h={h} m: compliant contact {:.4} s not longer than rigid {:.4} s",
                compliant.contact_duration, rigid.contact_duration
            ),
        )?;
        let ratio = compliant.peak_force / rigid.peak_force;
        ensure(
            (0.5..=0.9).contains(&ratio),
            format!("h={h} m: peak-force ratio {ratio:.3} outside [0.5, 0.9]"),
        )?;
        let expected_speed = (2.0 * GRAVITY * h).sqrt();
        for (label, speed) in [
            ("rigid", pair.rigid.impact_speed),
            ("compliant", pair.compliant.impact_speed),
        ] {
            let relative = (speed - expected_speed).abs() / expected_speed;
            ensure(
                relative <= 0.005,
                format!(
                    "h={h} m {label}: impact speed {speed:.4} m/s vs free fall {expected_speed:.4} m/s"
                ),
            )?;
        }
        ensure(
            rigid.peak_force > previous_rigid && compliant.peak_force > previous_compliant,
            format!("h={h} m: peak force not monotone in height"),
        )?;
        previous_rigid = rigid.peak_force;
        previous_compliant = compliant.peak_force;
        ratios.push(format!("{ratio:.3}"));
    }
    Ok(format!(
        "peak ratios {} across heights, longer compliant contacts, speeds within 0.5% of free fall",
        ratios.join("/")
    ))
}

/// Mirror of the policy evaluation loop driven by the cascaded PD controller:
/// same randomized starts, same error accounting.
fn pd_hover_eval(
    env_config: &EnvConfig,
    episodes: usize,
    seed: u64,
) -> Result<(f64, usize), String> {
    let mut config = env_config.clone();
    config.domain_randomization = false;
    let mut env = HoverEnv::new(config).map_err(sim_err)?;
    let mut controller =
        PdController::with_default_gains(env.config.vehicle.clone()).map_err(sim_err)?;
    let reference = Reference::hover(env.config.target);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut crashes = 0usize;
    let mut err_sum = 0.0f64;
    let mut err_count = 0usize;
    for _ in 0..episodes {
        env.reset(&mut rng);
        controller.reset();
        loop {
            let action = controller.command(env.state(), &reference);
            let outcome = env.step(action).map_err(sim_err)?;
            err_sum += (env.config.target - env.state().position).norm();
            err_count += 1;
            if outcome.done {
                if outcome.crashed {
                    crashes += 1;
                }
                break;
            }
        }
    }
    Ok((err_sum / err_count.max(1) as f64, crashes))
}

/// Criterion 5: a full training run on the default seed stays inside the
/// step budget and produces a policy that hovers within 0.10 m with zero
/// crashes; the PD baseline independently clears the stricter 0.05 m bar on
/// the same episodes, separating simulator faults from training variance.
fn hover_policy_training() -> CriterionResult {
    let config = PpoConfig::default();
    let result = train(&config).map_err(sim_err)?;
    ensure(
        result.env_steps <= 2_000_000,
        format!("training consumed {} env steps (budget 2e6)", result.env_steps),
    )?;
    ensure(
        result.diverged_at_iter.is_none(),
        format!("training diverged at iteration {:?}", result.diverged_at_iter),
    )?;
    let eval = evaluate(&result.policy, &config.env, 20, 12345).map_err(sim_err)?;
    ensure(
        eval.crashes == 0,
        format!("trained policy crashed {} of {} episodes", eval.crashes, eval.episodes),
    )?;
    ensure(
        eval.mean_position_error < 0.10,
        format!("trained policy mean error {:.4} m (bar 0.10 m)", eval.mean_position_error),
    )?;
    let (pd_error, pd_crashes) = pd_hover_eval(&config.env, 20, 12345)?;
    ensure(
        pd_crashes == 0 && pd_error < 0.05,
        format!("pd baseline mean error {pd_error:.4} m with {pd_crashes} crashes (bar 0.05 m)"),
    )?;
    Ok(format!(
        "policy trained in {} steps, eval error {:.4} m with 0 crashes; pd baseline {:.4} m",
        result.env_steps, eval.mean_position_error, pd_error
    ))
}

/// Criterion 6: figure-eight tracking stays under the error ceilings at both
/// the slow and the aggressive period, scored over the final three laps.
/// The PD controller is used; it clears the hover criterion's baseline bar.
fn lemniscate_tracking() -> CriterionResult {
    let config = Config::load(None).map_err(sim_err)?;
    ensure(
        config.lemniscate.laps_scored >= 3,
        format!("only {} laps scored", config.lemniscate.laps_scored),
    )?;
    let mut controller =
        PdController::with_default_gains(config.vehicle.clone()).map_err(sim_err)?;
    let slow = run_lemniscate(
        &mut controller,
        config.vehicle.clone(),
        config.arm.clone(),
        &config.lemniscate,
    )
    .map_err(sim_err)?;
    ensure(!slow.crashed, "crashed at T=10 s".to_string())?;
    ensure(
        slow.mean_error <= 0.23,
        format!("mean error {:.4} m at T=10 s (ceiling 0.23 m)", slow.mean_error),
    )?;
    let mut fast_config = config.lemniscate.clone();
    fast_config.period = 5.5;
    let fast = run_lemniscate(
        &mut controller,
        config.vehicle.clone(),
        config.arm.clone(),
        &fast_config,
    )
    .map_err(sim_err)?;
    ensure(!fast.crashed, "crashed at T=5.5 s".to_string())?;
    ensure(
        fast.mean_error <= 0.52,
        format!("mean error {:.4} m at T=5.5 s (ceiling 0.52 m)", fast.mean_error),
    )?;
    Ok(format!(
        "mean error {:.3} m at T=10 s and {:.3} m at T=5.5 s over 3 scored laps",
        slow.mean_error, fast.mean_error
    ))
}

/// Criterion 7: the unmodelled 0.55 kg payload circuit completes all laps
/// without crashing and without sustained thrust saturation.
fn payload_circuit() -> CriterionResult {
    let config = Config::load(None).map_err(sim_err)?;
    ensure(
        config.payload.payload_mass == 0.55
            && config.payload.altitude == 0.9
            && config.payload.laps == 3,
        format!(
            "payload task drifted: {} kg at {} m for {} laps",
            config.payload.payload_mass, config.payload.altitude, config.payload.laps
        ),
    )?;
    let mut controller =
        PdController::with_default_gains(config.vehicle.clone()).map_err(sim_err)?;
    let outcome = run_payload_circle(
        &mut controller,
        config.vehicle.clone(),
        config.arm.clone(),
        &config.payload,
    )
    .map_err(sim_err)?;
    ensure(!outcome.crashed, "payload run crashed".to_string())?;
    ensure(
        !outcome.saturated,
        "payload run hit sustained thrust saturation".to_string(),
    )?;
    Ok(format!(
        "0.55 kg circle at 0.9 m: 3 laps, mean error {:.3} m, no crash, no sustained saturation",
        outcome.mean_error
    ))
}

/// Criterion 8: through the corridor narrower than the guard span, the
/// compliant frame folds through and re-stabilizes quickly; the rigid frame
/// never makes it across.
fn narrow_gap_traversal() -> CriterionResult {
    let config = Config::load(None).map_err(sim_err)?;
    ensure(
        config.gap.gap_width == 0.48,
        format!("gap width drifted to {} m", config.gap.gap_width),
    )?;
    let mut controller =
        PdController::with_default_gains(config.vehicle.clone()).map_err(sim_err)?;
    let compliant = run_narrow_gap(
        &mut controller,
        config.vehicle.clone(),
        config.arm.clone(),
        true,
        &config.gap,
    )
    .map_err(sim_err)?;
    ensure(
        compliant.traversed && !compliant.crashed,
        format!(
            "compliant run traversed={} crashed={}",
            compliant.traversed, compliant.crashed
        ),
    )?;
    let restabilize = compliant
        .restabilize_time
        .ok_or_else(|| "compliant run never re-stabilized".to_string())?;
    ensure(
        restabilize <= 3.0,
        format!("re-stabilization took {restabilize:.2} s (limit 3 s)"),
    )?;
    let rigid = run_narrow_gap(
        &mut controller,
        config.vehicle.clone(),
        config.arm.clone(),
        false,
        &config.gap,
    )
    .map_err(sim_err)?;
    ensure(
        !rigid.traversed,
        "rigid run traversed the gap despite the guard span".to_string(),
    )?;
    let crossing = compliant.crossing_time.unwrap_or(f64::NAN);
    Ok(format!(
        "compliant crosses in {crossing:.2} s and re-stabilizes in {restabilize:.2} s; rigid blocked"
    ))
}

fn compare_csvs(a: &Path, b: &Path) -> Result<usize, String> {
    let mut names: Vec<String> = std::fs::read_dir(a)
        .map_err(|e| format!("{}: {e}", a.display()))?
        .filter_map(|entry| entry.ok())
        .map(|entry| entry.file_name().to_string_lossy().into_owned())
        .filter(|name| name.ends_with(".csv"))
        .collect();
    names.sort();
    ensure(
        !names.is_empty(),
        format!("no csv files produced in {}", a.display()),
    )?;
    for name in &names {
        let bytes_a = std::fs::read(a.join(name)).map_err(|e| format!("{name}: {e}"))?;
        let bytes_b = std::fs::read(b.join(name)).map_err(|e| format!("{name}: {e}"))?;
        ensure(
            bytes_a == bytes_b,
            format!("{name} differs between repeated runs"),
        )?;
    }
    Ok(names.len())
}

/// Criterion 9: repeating a seeded run in a fresh process reproduces every
/// CSV byte for byte.
fn run_determinism() -> CriterionResult {
    let workdir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let exe = env!("CARGO_BIN_EXE_holoarm");
    let mut compared = 0usize;
    let runs: &[(&str, &[&str])] = &[
        ("fit", &["--seed", "7", "fit"]),
        (
            "disturbance",
            &["--seed", "7", "scenario", "--kind", "hover_disturbance"],
        ),
        ("drop", &["--seed", "7", "drop"]),
    ];
    for (label, args) in runs {
        let dir_a = workdir.path().join(format!("{label}_a"));
        let dir_b = workdir.path().join(format!("{label}_b"));
        for dir in [&dir_a, &dir_b] {
            let output = std::process::Command::new(exe)
                .args(*args)
                .arg("--out")
                .arg(dir)
                .output()
                .map_err(|e| format!("spawning {label} run: {e}"))?;
            ensure(
                output.status.success(),
                format!("{label} run exited with status {:?}", output.status.code()),
            )?;
        }
        compared += compare_csvs(&dir_a, &dir_b)?;
    }
    Ok(format!(
        "{compared} csv files byte-identical across repeated seeded runs in fresh processes"
    ))
}

/// Criterion 10: analytic gradients of the policy network match central
/// finite differences on randomized small architectures.
fn policy_gradient_check() -> CriterionResult {
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let mut checked = 0usize;
    for trial in 0..100 {
        let depth = 2 + (trial % 3);
        let mut sizes = Vec::new();
        for _ in 0..=depth {
            sizes.push(2 + (rng.gen::<u32>() % 5) as usize);
        }
        let output = if trial % 2 == 0 {
            Activation::Identity
        } else {
            Activation::Sigmoid
        };
        let net = Mlp::new(&sizes, output, &mut rng);
        let input: Vec<f64> = (0..sizes[0]).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let out_dim = *sizes.last().expect("sizes are non-empty");
        let pick = (rng.gen::<u32>() as usize) % out_dim;
        let mut cotangent = vec![0.0; out_dim];
        cotangent[pick] = 1.0;

        let mut cache = MlpCache::default();
        net.forward(&input, &mut cache);
        let mut analytic = vec![0.0; net.param_count()];
        net.backward(&cache, &cotangent, &mut analytic);

        let mut params = net.params_flat();
        let h = 1e-6;
        let mut probe = net.clone();
        for i in 0..params.len() {
            let saved = params[i];
            params[i] = saved + h;
            probe.set_params_flat(&params);
            probe.forward(&input, &mut cache);
            let f_plus = probe.output(&cache)[pick];
            params[i] = saved - h;
            probe.set_params_flat(&params);
            probe.forward(&input, &mut cache);
            let f_minus = probe.output(&cache)[pick];
            params[i] = saved;
            let numeric = (f_plus - f_minus) / (2.0 * h);
            let denom = analytic[i].abs().max(numeric.abs()).max(1.0);
            let relative = (analytic[i] - numeric).abs() / denom;
            ensure(
                relative < 1e-4,
                format!(
                    "trial {trial} parameter {i}: analytic {} vs numeric {numeric}",
                    analytic[i]
                ),
            )?;
            checked += 1;
        }
    }
    Ok(format!(
        "{checked} parameter derivatives across 100 random networks within 1e-4 relative"
    ))
}
