//! Subcommand implementations: each resolves the config, runs the requested
//! experiment, and writes CSV/SVG artifacts plus a manifest into `--out`.

use std::path::{Path, PathBuf};

use holoarm_core::dynamics::VehicleParams;
use holoarm_core::fit::{
    fit_arm_params, parse_trace, recovery_time, reference_targets, release_trace, Channel,
    FitResult, FitTarget, ANGLE_THRESHOLD_DEG, AXIAL_THRESHOLD_FRACTION, FIT_SIM_DT,
};
use holoarm_core::pd::{ControlPolicy, PdController};
use holoarm_core::rl::{evaluate, train, RlPolicy};
use holoarm_core::scenarios::{
    run_drop_suite, run_hover_disturbance, run_lemniscate, run_narrow_gap, run_payload_circle,
    FlightSample,
};
use holoarm_core::sim::GapGeometry;

use crate::artifacts::{
    load_checkpoint, read_text, save_checkpoint, save_plot, sig9, write_csv, write_manifest,
    PlotSpec, Series,
};
use crate::config::Config;
use crate::{Cli, CliError, Command};

fn contract(message: String) -> CliError {
    CliError::Contract(message)
}

/// Resolves config and seed (`--seed` > `HOLOARM_SEED` > config > default),
/// prepares the output directory and runs the subcommand.
pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    let mut config = Config::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.set_seed(seed);
    } else if let Ok(text) = std::env::var("HOLOARM_SEED") {
        let seed = text
            .trim()
            .parse()
            .map_err(|_| contract(format!("HOLOARM_SEED: invalid integer '{text}'")))?;
        config.set_seed(seed);
    }
    std::fs::create_dir_all(&cli.out)
        .map_err(|e| CliError::Io(format!("{}: {e}", cli.out.display())))?;
    let out = cli.out.as_path();
    match cli.command {
        Command::Fit { trace, channel } => run_fit(&config, out, trace, channel),
        Command::Train => run_train(&config, out),
        Command::Eval { policy, episodes } => run_eval(&config, out, &policy, episodes),
        Command::Scenario { kind, policy } => run_scenario(&config, out, &kind, policy),
        Command::Drop => run_drop(&config, out),
        Command::Report => run_report(&config, out),
    }
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

fn channel_units(channel: Channel) -> &'static str {
    match channel {
        Channel::Axial => "mm",
        _ => "deg",
    }
}

fn recovery_threshold(channel: Channel, peak: f64) -> f64 {
    match channel {
        Channel::Axial => AXIAL_THRESHOLD_FRACTION * peak,
        _ => ANGLE_THRESHOLD_DEG,
    }
}

fn config_keys(channel: Channel) -> (&'static str, &'static str) {
    match channel {
        Channel::Lateral => ("arm.k_lat", "arm.c_lat"),
        Channel::Up => ("arm.k_up", "arm.c_up"),
        Channel::Down => ("arm.k_down", "arm.c_down"),
        Channel::Axial => ("arm.k_ax", "arm.c_ax"),
    }
}

fn run_fit(
    config: &Config,
    out: &Path,
    trace: Option<PathBuf>,
    channel: Option<String>,
) -> Result<(), CliError> {
    let targets: Vec<FitTarget> = match (&trace, &channel) {
        (Some(path), Some(name)) => {
            let ch = Channel::parse(name).ok_or_else(|| {
                contract(format!(
                    "unknown channel '{name}' (expected lateral, up, down or axial)"
                ))
            })?;
            let text = read_text(path)?;
            let parsed = parse_trace(&text, ch)
                .map_err(|e| contract(format!("trace {}: {e}", path.display())))?;
            let peak = parsed.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let threshold = recovery_threshold(ch, peak);
            let recovery = recovery_time(&parsed, threshold)
                .map_err(|e| contract(format!("trace {}: {e}", path.display())))?
                .ok_or_else(|| {
                    contract(format!(
                        "trace {} never settles into the +-{threshold} {} recovery band",
                        path.display(),
                        channel_units(ch),
                    ))
                })?;
            vec![FitTarget {
                channel: ch,
                peak,
                recovery_s: recovery,
            }]
        }
        (None, None) => reference_targets().to_vec(),
        // clap's `requires` pairing makes these unreachable from the parser.
        _ => return Err(contract("--trace and --channel must be given together".into())),
    };

    let mut csv_rows = Vec::new();
    let mut cfg_lines = String::new();
    let mut fitted: Vec<(FitTarget, FitResult)> = Vec::new();
    for target in &targets {
        let fit = fit_arm_params(target, &config.arm)
            .map_err(|e| contract(format!("fit {}: {e}", target.channel.name())))?;
        csv_rows.push(format!(
            "{},{},{},{},{},{},{},{}",
            target.channel.name(),
            sig9(target.peak),
            sig9(target.recovery_s),
            sig9(fit.achieved_s),
            sig9(fit.k),
            sig9(fit.c),
            sig9(fit.omega_n),
            sig9(fit.zeta),
        ));
        let (k_key, c_key) = config_keys(target.channel);
        cfg_lines.push_str(&format!("{k_key} = {}\n{c_key} = {}\n", sig9(fit.k), sig9(fit.c)));
        fitted.push((target.clone(), fit));
    }
    write_csv(
        &out.join("fit.csv"),
        "channel,peak,target_recovery_s,achieved_recovery_s,k,c,omega_n,zeta",
        &csv_rows,
    )?;
    write_csv(&out.join("arm_fit.cfg"), "# fitted arm constants", &[cfg_lines.trim_end().into()])?;

    for (target, fit) in &fitted {
        let horizon = 2.0 * target.recovery_s.max(fit.achieved_s);
        let full = release_trace(target, fit.k, fit.c, &config.arm, horizon, FIT_SIM_DT)
            .map_err(|e| contract(format!("release replay {}: {e}", target.channel.name())))?;
        let stride = (full.len() / 800).max(1);
        let points: Vec<(f64, f64)> = full.iter().step_by(stride).copied().collect();
        let units = channel_units(target.channel);
        let threshold = recovery_threshold(target.channel, target.peak);
        save_plot(
            &out.join(format!("fit_{}.svg", target.channel.name())),
            &PlotSpec {
                title: &format!(
                    "{} release: {} {units} peak, recovery {} s",
                    target.channel.name(),
                    sig9(target.peak),
                    sig9(fit.achieved_s),
                ),
                x_label: "t [s]",
                y_label: &format!("deflection [{units}]"),
                series: &[Series {
                    label: "fitted release",
                    points: &points,
                }],
                threshold: Some((threshold, "recovery band")),
            },
        )?;
        println!(
            "fit {}: k = {}, c = {} (recovery {} s for target {} s)",
            target.channel.name(),
            sig9(fit.k),
            sig9(fit.c),
            sig9(fit.achieved_s),
            sig9(target.recovery_s),
        );
    }
    let detail: Vec<&str> = targets.iter().map(|t| t.channel.name()).collect();
    write_manifest(out, "fit", &detail.join(","), config.seed, &config.echo())
}

// ---------------------------------------------------------------------------
// train / eval
// ---------------------------------------------------------------------------

fn run_train(config: &Config, out: &Path) -> Result<(), CliError> {
    let result = train(&config.ppo).map_err(|e| contract(format!("training: {e}")))?;
    let rows: Vec<String> = result
        .log
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{}",
                r.iter,
                r.steps,
                sig9(r.mean_return),
                sig9(r.eval_err_m)
            )
        })
        .collect();
    write_csv(&out.join("train_log.csv"), "iter,steps,mean_return,eval_err_m", &rows)?;
    save_checkpoint(&out.join("policy.txt"), &result.policy)?;

    let curve: Vec<(f64, f64)> = result
        .log
        .iter()
        .map(|r| (r.steps as f64, r.eval_err_m))
        .collect();
    save_plot(
        &out.join("training_curve.svg"),
        &PlotSpec {
            title: "hover policy training",
            x_label: "environment steps",
            y_label: "evaluation position error [m]",
            series: &[Series {
                label: "eval error",
                points: &curve,
            }],
            threshold: Some((config.ppo.target_eval_err, "stop target")),
        },
    )?;
    write_manifest(out, "train", "ppo-hover", config.seed, &config.echo())?;

    if let Some(iter) = result.diverged_at_iter {
        return Err(contract(format!(
            "training diverged at iteration {iter}; artifacts hold the last finite policy"
        )));
    }
    let last = result.log.last();
    println!(
        "trained {} env steps; final eval err {} m",
        result.env_steps,
        last.map(|r| sig9(r.eval_err_m)).unwrap_or_else(|| "-".into()),
    );
    Ok(())
}

fn run_eval(config: &Config, out: &Path, policy: &Path, episodes: usize) -> Result<(), CliError> {
    if episodes == 0 {
        return Err(contract("eval needs at least one episode".into()));
    }
    let policy = load_checkpoint(policy)?;
    let report = evaluate(&policy, &config.ppo.env, episodes, config.seed)
        .map_err(|e| contract(format!("evaluation: {e}")))?;
    write_csv(
        &out.join("eval.csv"),
        "episodes,crashes,mean_position_error_m,mean_return",
        &[format!(
            "{},{},{},{}",
            report.episodes,
            report.crashes,
            sig9(report.mean_position_error),
            sig9(report.mean_return),
        )],
    )?;
    write_manifest(out, "eval", &format!("episodes {episodes}"), config.seed, &config.echo())?;
    println!(
        "eval: {} episodes, {} crashes, mean err {} m",
        report.episodes,
        report.crashes,
        sig9(report.mean_position_error),
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// scenarios
// ---------------------------------------------------------------------------

/// Which controller flies the closed-loop scenarios.
enum Controller {
    Cascaded,
    Learned(holoarm_core::rl::GaussianPolicy),
}

impl Controller {
    fn load(policy: Option<&Path>) -> Result<Controller, CliError> {
        match policy {
            Some(path) => Ok(Controller::Learned(load_checkpoint(path)?)),
            None => Ok(Controller::Cascaded),
        }
    }

    /// Fresh controller instance (learned controllers carry episode state).
    fn build(&self, vehicle: &VehicleParams) -> Result<Box<dyn ControlPolicy>, CliError> {
        match self {
            Controller::Cascaded => Ok(Box::new(
                PdController::with_default_gains(vehicle.clone())
                    .map_err(|e| contract(format!("controller: {e}")))?,
            )),
            Controller::Learned(policy) => Ok(Box::new(RlPolicy::new(policy.clone(), vehicle))),
        }
    }
}

/// Headline data a scenario hands back for `report.csv` and stdout.
struct ScenarioOutcome {
    name: &'static str,
    /// (metric, formatted value) pairs.
    metrics: Vec<(String, String)>,
    headline: String,
}

const SCENARIO_KINDS: [&str; 5] = [
    "lemniscate",
    "payload_circle",
    "hover_disturbance",
    "narrow_gap",
    "drop_suite",
];

fn flag(value: bool) -> &'static str {
    if value {
        "true"
    } else {
        "false"
    }
}

fn opt_s(value: Option<f64>) -> String {
    value.map(sig9).unwrap_or_default()
}

fn track_csv_rows(samples: &[FlightSample]) -> Vec<String> {
    samples
        .iter()
        .map(|s| {
            format!(
                "{},{},{},{},{},{},{},{}",
                sig9(s.t),
                sig9(s.position.x),
                sig9(s.position.y),
                sig9(s.position.z),
                sig9(s.reference.x),
                sig9(s.reference.y),
                sig9(s.reference.z),
                sig9(s.error),
            )
        })
        .collect()
}

const TRACK_HEADER: &str = "t_s,x_m,y_m,z_m,ref_x_m,ref_y_m,ref_z_m,err_m";

fn xy(samples: &[FlightSample]) -> Vec<(f64, f64)> {
    samples.iter().map(|s| (s.position.x, s.position.y)).collect()
}

fn scenario_lemniscate(
    config: &Config,
    controller: &Controller,
    out: &Path,
) -> Result<ScenarioOutcome, CliError> {
    let mut policy = controller.build(&config.vehicle)?;
    let outcome = run_lemniscate(
        policy.as_mut(),
        config.vehicle.clone(),
        config.arm.clone(),
        &config.lemniscate,
    )
    .map_err(|e| contract(format!("lemniscate: {e}")))?;
    write_csv(&out.join("lemniscate_track.csv"), TRACK_HEADER, &track_csv_rows(&outcome.samples))?;

    let flown = xy(&outcome.samples);
    let reference: Vec<(f64, f64)> = outcome
        .samples
        .iter()
        .map(|s| (s.reference.x, s.reference.y))
        .collect();
    save_plot(
        &out.join("lemniscate_xy.svg"),
        &PlotSpec {
            title: &format!("lemniscate tracking, period {} s", sig9(config.lemniscate.period)),
            x_label: "x [m]",
            y_label: "y [m]",
            series: &[
                Series { label: "flown", points: &flown },
                Series { label: "reference", points: &reference },
            ],
            threshold: None,
        },
    )?;
    write_csv(
        &out.join("lemniscate_summary.csv"),
        "mean_error_m,max_error_m,crashed,saturated",
        &[format!(
            "{},{},{},{}",
            sig9(outcome.mean_error),
            sig9(outcome.max_error),
            flag(outcome.crashed),
            flag(outcome.saturated),
        )],
    )?;
    Ok(ScenarioOutcome {
        name: "lemniscate",
        metrics: vec![
            ("mean_error_m".into(), sig9(outcome.mean_error)),
            ("max_error_m".into(), sig9(outcome.max_error)),
            ("crashed".into(), flag(outcome.crashed).into()),
        ],
        headline: format!(
            "lemniscate (T = {} s): mean err {} m, max {} m{}",
            sig9(config.lemniscate.period),
            sig9(outcome.mean_error),
            sig9(outcome.max_error),
            if outcome.crashed { " [CRASHED]" } else { "" },
        ),
    })
}

fn scenario_payload(
    config: &Config,
    controller: &Controller,
    out: &Path,
) -> Result<ScenarioOutcome, CliError> {
    let mut policy = controller.build(&config.vehicle)?;
    let outcome = run_payload_circle(
        policy.as_mut(),
        config.vehicle.clone(),
        config.arm.clone(),
        &config.payload,
    )
    .map_err(|e| contract(format!("payload circle: {e}")))?;
    write_csv(&out.join("payload_track.csv"), TRACK_HEADER, &track_csv_rows(&outcome.samples))?;

    let err_series: Vec<(f64, f64)> = outcome.samples.iter().map(|s| (s.t, s.error)).collect();
    save_plot(
        &out.join("payload_error.svg"),
        &PlotSpec {
            title: &format!("circle tracking with {} kg payload", sig9(config.payload.payload_mass)),
            x_label: "t [s]",
            y_label: "position error [m]",
            series: &[Series { label: "error", points: &err_series }],
            threshold: None,
        },
    )?;
    write_csv(
        &out.join("payload_summary.csv"),
        "payload_kg,mean_error_m,max_error_m,crashed,saturated",
        &[format!(
            "{},{},{},{},{}",
            sig9(config.payload.payload_mass),
            sig9(outcome.mean_error),
            sig9(outcome.max_error),
            flag(outcome.crashed),
            flag(outcome.saturated),
        )],
    )?;
    Ok(ScenarioOutcome {
        name: "payload_circle",
        metrics: vec![
            ("payload_kg".into(), sig9(config.payload.payload_mass)),
            ("mean_error_m".into(), sig9(outcome.mean_error)),
            ("crashed".into(), flag(outcome.crashed).into()),
            ("saturated".into(), flag(outcome.saturated).into()),
        ],
        headline: format!(
            "payload circle ({} kg): mean err {} m, saturated {}{}",
            sig9(config.payload.payload_mass),
            sig9(outcome.mean_error),
            flag(outcome.saturated),
            if outcome.crashed { " [CRASHED]" } else { "" },
        ),
    })
}

fn scenario_disturbance(
    config: &Config,
    controller: &Controller,
    out: &Path,
) -> Result<ScenarioOutcome, CliError> {
    let mut runs = Vec::new();
    for (label, compliant) in [("compliant", true), ("rigid", false)] {
        let mut policy = controller.build(&config.vehicle)?;
        let outcome = run_hover_disturbance(
            policy.as_mut(),
            config.vehicle.clone(),
            config.arm.clone(),
            compliant,
            &config.disturbance,
        )
        .map_err(|e| contract(format!("disturbance ({label}): {e}")))?;
        let rows: Vec<String> = outcome
            .samples
            .iter()
            .map(|s| {
                format!(
                    "{},{},{},{}",
                    sig9(s.t),
                    sig9(s.error),
                    sig9(s.yaw_rate),
                    sig9(s.max_fold)
                )
            })
            .collect();
        write_csv(
            &out.join(format!("disturbance_{label}.csv")),
            "t_s,err_m,yaw_rate_rad_s,max_fold_rad",
            &rows,
        )?;
        runs.push((label, outcome));
    }

    let yaw_series: Vec<Vec<(f64, f64)>> = runs
        .iter()
        .map(|(_, o)| o.samples.iter().map(|s| (s.t, s.yaw_rate)).collect())
        .collect();
    save_plot(
        &out.join("disturbance_yaw_rate.svg"),
        &PlotSpec {
            title: &format!("yaw rate under a {} N tip push", sig9(config.disturbance.force)),
            x_label: "t [s]",
            y_label: "yaw rate [rad/s]",
            series: &[
                Series { label: "compliant arms", points: &yaw_series[0] },
                Series { label: "rigid arms", points: &yaw_series[1] },
            ],
            threshold: None,
        },
    )?;

    let summary_rows: Vec<String> = runs
        .iter()
        .map(|(label, o)| {
            format!(
                "{label},{},{},{},{},{}",
                sig9(o.peak_yaw_rate),
                sig9(o.peak_error),
                sig9(o.peak_fold),
                opt_s(o.recovery_time),
                flag(o.crashed),
            )
        })
        .collect();
    write_csv(
        &out.join("disturbance_summary.csv"),
        "configuration,peak_yaw_rate_rad_s,peak_error_m,peak_fold_rad,recovery_s,crashed",
        &summary_rows,
    )?;

    let (compliant, rigid) = (&runs[0].1, &runs[1].1);
    let ratio = compliant.peak_yaw_rate / rigid.peak_yaw_rate;
    Ok(ScenarioOutcome {
        name: "hover_disturbance",
        metrics: vec![
            ("compliant_peak_yaw_rate_rad_s".into(), sig9(compliant.peak_yaw_rate)),
            ("rigid_peak_yaw_rate_rad_s".into(), sig9(rigid.peak_yaw_rate)),
            ("peak_yaw_rate_ratio".into(), sig9(ratio)),
            ("compliant_recovery_s".into(), opt_s(compliant.recovery_time)),
            ("rigid_recovery_s".into(), opt_s(rigid.recovery_time)),
        ],
        headline: format!(
            "disturbance: peak yaw rate {} (compliant) vs {} rad/s (rigid), ratio {}",
            sig9(compliant.peak_yaw_rate),
            sig9(rigid.peak_yaw_rate),
            sig9(ratio),
        ),
    })
}

fn scenario_gap(
    config: &Config,
    controller: &Controller,
    out: &Path,
) -> Result<ScenarioOutcome, CliError> {
    let mut runs = Vec::new();
    for (label, compliant) in [("compliant", true), ("rigid", false)] {
        let mut policy = controller.build(&config.vehicle)?;
        let outcome = run_narrow_gap(
            policy.as_mut(),
            config.vehicle.clone(),
            config.arm.clone(),
            compliant,
            &config.gap,
        )
        .map_err(|e| contract(format!("narrow gap ({label}): {e}")))?;
        let rows: Vec<String> = outcome
            .samples
            .iter()
            .map(|s| {
                format!(
                    "{},{},{},{},{}",
                    sig9(s.t),
                    sig9(s.position.x),
                    sig9(s.position.y),
                    sig9(s.error),
                    sig9(s.max_fold),
                )
            })
            .collect();
        write_csv(
            &out.join(format!("gap_{label}.csv")),
            "t_s,x_m,y_m,err_m,max_fold_rad",
            &rows,
        )?;
        runs.push((label, outcome));
    }

    // Wall outline from the same geometry the simulation collides with.
    let g = &config.gap;
    let geometry = GapGeometry {
        x_start: g.x_start,
        x_end: g.x_end,
        half_width: g.gap_width / 2.0,
        entry_taper: g.entry_taper,
        entry_half_width: g.entry_width / 2.0,
    };
    let wall: Vec<(f64, f64)> = (0..=60)
        .map(|i| {
            let x = g.x_start + (g.x_end - g.x_start) * i as f64 / 60.0;
            (x, geometry.half_width_at(x))
        })
        .collect();
    let wall_mirror: Vec<(f64, f64)> = wall.iter().map(|(x, y)| (*x, -y)).collect();
    let paths: Vec<Vec<(f64, f64)>> = runs.iter().map(|(_, o)| xy(&o.samples)).collect();
    save_plot(
        &out.join("gap_paths.svg"),
        &PlotSpec {
            title: &format!("narrow-gap traverse, {} m opening", sig9(g.gap_width)),
            x_label: "x [m]",
            y_label: "y [m]",
            series: &[
                Series { label: "compliant arms", points: &paths[0] },
                Series { label: "rigid arms", points: &paths[1] },
                Series { label: "wall (+y)", points: &wall },
                Series { label: "wall (-y)", points: &wall_mirror },
            ],
            threshold: None,
        },
    )?;

    let summary_rows: Vec<String> = runs
        .iter()
        .map(|(label, o)| {
            format!(
                "{label},{},{},{},{},{}",
                flag(o.traversed),
                opt_s(o.crossing_time),
                opt_s(o.restabilize_time),
                sig9(o.peak_fold),
                flag(o.crashed),
            )
        })
        .collect();
    write_csv(
        &out.join("gap_summary.csv"),
        "configuration,traversed,crossing_s,restabilize_s,peak_fold_rad,crashed",
        &summary_rows,
    )?;

    let (compliant, rigid) = (&runs[0].1, &runs[1].1);
    Ok(ScenarioOutcome {
        name: "narrow_gap",
        metrics: vec![
            ("compliant_traversed".into(), flag(compliant.traversed).into()),
            ("rigid_traversed".into(), flag(rigid.traversed).into()),
            ("compliant_restabilize_s".into(), opt_s(compliant.restabilize_time)),
            ("compliant_peak_fold_rad".into(), sig9(compliant.peak_fold)),
        ],
        headline: format!(
            "narrow gap: compliant traversed {} (restabilize {} s), rigid traversed {}",
            flag(compliant.traversed),
            opt_s(compliant.restabilize_time),
            flag(rigid.traversed),
        ),
    })
}

fn scenario_drop(config: &Config, out: &Path) -> Result<ScenarioOutcome, CliError> {
    let pairs = run_drop_suite(&config.drop).map_err(|e| contract(format!("drop suite: {e}")))?;

    let mut summary_rows = Vec::new();
    let mut metrics = Vec::new();
    let mut peaks_rigid = Vec::new();
    let mut peaks_compliant = Vec::new();
    for pair in &pairs {
        let cm = (pair.height * 100.0).round() as i64;
        for (label, outcome) in [("rigid", &pair.rigid), ("compliant", &pair.compliant)] {
            summary_rows.push(format!(
                "{label},{},{},{},{},{},{broke}",
                sig9(pair.height),
                sig9(outcome.impact_speed),
                sig9(outcome.event.peak_force),
                sig9(outcome.event.contact_duration),
                sig9(outcome.event.impulse),
                broke = flag(outcome.event.broke),
            ));
            let rows: Vec<String> = outcome
                .force_series
                .iter()
                .map(|(t, f)| format!("{},{}", sig9(*t), sig9(*f)))
                .collect();
            write_csv(
                &out.join(format!("drop_force_h{cm}_{label}.csv")),
                "t_s,force_n",
                &rows,
            )?;
        }
        let ratio = pair.compliant.event.peak_force / pair.rigid.event.peak_force;
        metrics.push((format!("h{cm}_peak_ratio"), sig9(ratio)));
        peaks_rigid.push((pair.height, pair.rigid.event.peak_force));
        peaks_compliant.push((pair.height, pair.compliant.event.peak_force));

        let rigid_series = &pair.rigid.force_series;
        let compliant_series = &pair.compliant.force_series;
        save_plot(
            &out.join(format!("drop_force_h{cm}.svg")),
            &PlotSpec {
                title: &format!("ground force, {} m drop", sig9(pair.height)),
                x_label: "t since contact [s]",
                y_label: "total normal force [N]",
                series: &[
                    Series { label: "rigid arms", points: rigid_series },
                    Series { label: "compliant arms", points: compliant_series },
                ],
                threshold: None,
            },
        )?;
    }
    write_csv(
        &out.join("drop_summary.csv"),
        "configuration,height_m,impact_speed_m_s,peak_force_n,contact_duration_s,impulse_n_s,broke",
        &summary_rows,
    )?;
    save_plot(
        &out.join("drop_peak_force.svg"),
        &PlotSpec {
            title: "peak impact force vs drop height",
            x_label: "drop height [m]",
            y_label: "peak force [N]",
            series: &[
                Series { label: "rigid arms", points: &peaks_rigid },
                Series { label: "compliant arms", points: &peaks_compliant },
            ],
            threshold: None,
        },
    )?;

    let headline = pairs
        .iter()
        .map(|p| {
            format!(
                "{} m: {} -> {} N",
                sig9(p.height),
                sig9(p.rigid.event.peak_force),
                sig9(p.compliant.event.peak_force),
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    Ok(ScenarioOutcome {
        name: "drop_suite",
        metrics,
        headline: format!("drop suite (rigid -> compliant peak): {headline}"),
    })
}

fn run_kind(
    kind: &str,
    config: &Config,
    controller: &Controller,
    out: &Path,
) -> Result<ScenarioOutcome, CliError> {
    match kind {
        "lemniscate" => scenario_lemniscate(config, controller, out),
        "payload_circle" => scenario_payload(config, controller, out),
        "hover_disturbance" => scenario_disturbance(config, controller, out),
        "narrow_gap" => scenario_gap(config, controller, out),
        "drop_suite" => scenario_drop(config, out),
        other => Err(contract(format!(
            "unknown scenario '{other}' (expected one of {} or all)",
            SCENARIO_KINDS.join(", "),
        ))),
    }
}

fn run_scenario(
    config: &Config,
    out: &Path,
    kind: &str,
    policy: Option<PathBuf>,
) -> Result<(), CliError> {
    let controller = Controller::load(policy.as_deref())?;
    let kinds: Vec<&str> = if kind == "all" {
        SCENARIO_KINDS.to_vec()
    } else {
        vec![kind]
    };
    for k in &kinds {
        let outcome = run_kind(k, config, &controller, out)?;
        println!("{}", outcome.headline);
    }
    write_manifest(out, "scenario", &kinds.join(","), config.seed, &config.echo())
}

fn run_drop(config: &Config, out: &Path) -> Result<(), CliError> {
    let outcome = scenario_drop(config, out)?;
    println!("{}", outcome.headline);
    write_manifest(out, "drop", "drop_suite", config.seed, &config.echo())
}

fn run_report(config: &Config, out: &Path) -> Result<(), CliError> {
    let controller = Controller::Cascaded;
    let mut rows = Vec::new();
    for kind in SCENARIO_KINDS {
        let outcome = run_kind(kind, config, &controller, out)?;
        println!("{}", outcome.headline);
        for (metric, value) in &outcome.metrics {
            rows.push(format!("{},{metric},{value}", outcome.name));
        }
    }
    write_csv(&out.join("report.csv"), "experiment,metric,value", &rows)?;
    write_manifest(out, "report", &SCENARIO_KINDS.join(","), config.seed, &config.echo())
}
