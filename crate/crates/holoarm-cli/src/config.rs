//! Flat key-value configuration: dotted namespaces, `#` comments, strict
//! unknown-key rejection, embedded defaults for every key, and a canonical
//! echo of the fully-resolved values (the bytes the manifest hashes).

use std::path::Path;

use holoarm_core::arm::ArmParams;
use holoarm_core::contact::{default_contact_points, ContactParams};
use holoarm_core::dynamics::VehicleParams;
use holoarm_core::rl::PpoConfig;
use holoarm_core::scenarios::{
    DisturbanceConfig, DropSuiteConfig, GapConfig, LemniscateConfig, PayloadConfig,
};

use crate::artifacts::{read_text, sig9};
use crate::CliError;

/// Every tunable the CLI exposes, fully resolved (defaults filled in).
#[derive(Debug, Clone)]
pub struct Config {
    pub seed: u64,
    pub vehicle: VehicleParams,
    pub arm: ArmParams,
    pub contact: ContactParams,
    pub ppo: PpoConfig,
    pub lemniscate: LemniscateConfig,
    pub payload: PayloadConfig,
    pub disturbance: DisturbanceConfig,
    pub gap: GapConfig,
    pub drop: DropSuiteConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 7,
            vehicle: VehicleParams::default(),
            arm: ArmParams::default(),
            contact: ContactParams::default(),
            ppo: PpoConfig::default(),
            lemniscate: LemniscateConfig::default(),
            payload: PayloadConfig::default(),
            disturbance: DisturbanceConfig::default(),
            gap: GapConfig::default(),
            drop: DropSuiteConfig::default(),
        }
    }
}

fn contract(message: String) -> CliError {
    CliError::Contract(message)
}

fn parse_f64(key: &str, value: &str) -> Result<f64, CliError> {
    value
        .parse()
        .map_err(|_| contract(format!("config key '{key}': invalid number '{value}'")))
}

fn parse_usize(key: &str, value: &str) -> Result<usize, CliError> {
    value
        .parse()
        .map_err(|_| contract(format!("config key '{key}': invalid integer '{value}'")))
}

fn parse_u64(key: &str, value: &str) -> Result<u64, CliError> {
    value
        .parse()
        .map_err(|_| contract(format!("config key '{key}': invalid integer '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(contract(format!(
            "config key '{key}': expected true/false, got '{value}'"
        ))),
    }
}

fn parse_f64_list(key: &str, value: &str) -> Result<Vec<f64>, CliError> {
    let items: Result<Vec<f64>, _> = value
        .split(',')
        .map(|s| parse_f64(key, s.trim()))
        .collect();
    let items = items?;
    if items.is_empty() {
        return Err(contract(format!("config key '{key}': empty list")));
    }
    Ok(items)
}

fn parse_usize_list(key: &str, value: &str) -> Result<Vec<usize>, CliError> {
    let items: Result<Vec<usize>, _> = value
        .split(',')
        .map(|s| parse_usize(key, s.trim()))
        .collect();
    let items = items?;
    if items.is_empty() {
        return Err(contract(format!("config key '{key}': empty list")));
    }
    Ok(items)
}

impl Config {
    /// Loads and resolves a config file on top of the defaults. A missing
    /// `path` of `None` just yields the defaults.
    pub fn load(path: Option<&Path>) -> Result<Config, CliError> {
        let mut config = Config::default();
        if let Some(path) = path {
            let text = read_text(path)?;
            config.apply_text(&text)?;
        }
        config.validate()?;
        Ok(config)
    }

    /// Applies `key = value` lines. Unknown keys and malformed lines are
    /// contract errors naming the offender.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(at) => &raw[..at],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                contract(format!("config line {}: expected 'key = value', got '{raw}'", idx + 1))
            })?;
            self.apply(key.trim(), value.trim())?;
        }
        Ok(())
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let f = |v: &mut f64, key: &str, value: &str| -> Result<(), CliError> {
            *v = parse_f64(key, value)?;
            Ok(())
        };
        match key {
            "seed" => self.seed = parse_u64(key, value)?,

            "vehicle.mass" => f(&mut self.vehicle.mass, key, value)?,
            "vehicle.motor_time_constant" => f(&mut self.vehicle.motor_time_constant, key, value)?,
            "vehicle.thrust_c0" => f(&mut self.vehicle.thrust_coeffs.0, key, value)?,
            "vehicle.thrust_c1" => f(&mut self.vehicle.thrust_coeffs.1, key, value)?,
            "vehicle.thrust_c2" => f(&mut self.vehicle.thrust_coeffs.2, key, value)?,
            "vehicle.yaw_torque_coeff" => f(&mut self.vehicle.yaw_torque_coeff, key, value)?,
            "vehicle.inertia_xx" => f(&mut self.vehicle.inertia_diag.x, key, value)?,
            "vehicle.inertia_yy" => f(&mut self.vehicle.inertia_diag.y, key, value)?,
            "vehicle.inertia_zz" => f(&mut self.vehicle.inertia_diag.z, key, value)?,
            "vehicle.gravity" => f(&mut self.vehicle.gravity, key, value)?,
            "vehicle.linear_drag" => f(&mut self.vehicle.linear_drag, key, value)?,

            "arm.k_lat" => f(&mut self.arm.k_lat, key, value)?,
            "arm.c_lat" => f(&mut self.arm.c_lat, key, value)?,
            "arm.k_up" => f(&mut self.arm.k_up, key, value)?,
            "arm.c_up" => f(&mut self.arm.c_up, key, value)?,
            "arm.k_down" => f(&mut self.arm.k_down, key, value)?,
            "arm.c_down" => f(&mut self.arm.c_down, key, value)?,
            "arm.k_ax" => f(&mut self.arm.k_ax, key, value)?,
            "arm.c_ax" => f(&mut self.arm.c_ax, key, value)?,
            "arm.i_eff" => f(&mut self.arm.i_eff, key, value)?,
            "arm.m_eff" => f(&mut self.arm.m_eff, key, value)?,
            "arm.axial_travel_max" => f(&mut self.arm.axial_travel_max, key, value)?,
            "arm.arm_length" => f(&mut self.arm.arm_length, key, value)?,
            "arm.bend_limit" => f(&mut self.arm.bend_limit, key, value)?,
            "arm.k_stop" => f(&mut self.arm.k_stop, key, value)?,
            "arm.c_stop" => f(&mut self.arm.c_stop, key, value)?,

            "contact.k_n" => f(&mut self.contact.k_n, key, value)?,
            "contact.c_n" => f(&mut self.contact.c_n, key, value)?,
            "contact.mu" => f(&mut self.contact.mu, key, value)?,
            "contact.failure_threshold" => f(&mut self.contact.failure_threshold, key, value)?,

            "rl.envs" => self.ppo.envs = parse_usize(key, value)?,
            "rl.horizon" => self.ppo.horizon = parse_usize(key, value)?,
            "rl.epochs" => self.ppo.epochs = parse_usize(key, value)?,
            "rl.minibatch" => self.ppo.minibatch = parse_usize(key, value)?,
            "rl.hidden" => self.ppo.hidden = parse_usize_list(key, value)?,
            "rl.gamma" => f(&mut self.ppo.gamma, key, value)?,
            "rl.lam" => f(&mut self.ppo.lam, key, value)?,
            "rl.clip" => f(&mut self.ppo.clip, key, value)?,
            "rl.learning_rate" => f(&mut self.ppo.learning_rate, key, value)?,
            "rl.max_grad_norm" => f(&mut self.ppo.max_grad_norm, key, value)?,
            "rl.log_std_init" => f(&mut self.ppo.log_std_init, key, value)?,
            "rl.max_env_steps" => self.ppo.max_env_steps = parse_usize(key, value)?,
            "rl.eval_episodes" => self.ppo.eval_episodes = parse_usize(key, value)?,
            "rl.target_eval_err" => f(&mut self.ppo.target_eval_err, key, value)?,
            "rl.episode_steps" => self.ppo.env.episode_steps = parse_usize(key, value)?,
            "rl.domain_randomization" => {
                self.ppo.env.domain_randomization = parse_bool(key, value)?
            }

            "lemniscate.period" => f(&mut self.lemniscate.period, key, value)?,
            "lemniscate.amplitude" => f(&mut self.lemniscate.amplitude, key, value)?,
            "lemniscate.altitude" => f(&mut self.lemniscate.altitude, key, value)?,
            "lemniscate.laps_total" => self.lemniscate.laps_total = parse_usize(key, value)?,
            "lemniscate.laps_scored" => self.lemniscate.laps_scored = parse_usize(key, value)?,

            "payload.mass" => f(&mut self.payload.payload_mass, key, value)?,
            "payload.mount_offset_below" => f(&mut self.payload.mount_offset_below, key, value)?,
            "payload.radius" => f(&mut self.payload.radius, key, value)?,
            "payload.altitude" => f(&mut self.payload.altitude, key, value)?,
            "payload.period" => f(&mut self.payload.period, key, value)?,
            "payload.laps" => self.payload.laps = parse_usize(key, value)?,
            "payload.warmup" => f(&mut self.payload.warmup, key, value)?,

            "disturbance.force" => f(&mut self.disturbance.force, key, value)?,
            "disturbance.push_duration" => f(&mut self.disturbance.push_duration, key, value)?,
            "disturbance.settle" => f(&mut self.disturbance.settle, key, value)?,
            "disturbance.aftermath" => f(&mut self.disturbance.aftermath, key, value)?,

            "gap.width" => f(&mut self.gap.gap_width, key, value)?,
            "gap.x_start" => f(&mut self.gap.x_start, key, value)?,
            "gap.x_end" => f(&mut self.gap.x_end, key, value)?,
            "gap.entry_taper" => f(&mut self.gap.entry_taper, key, value)?,
            "gap.entry_width" => f(&mut self.gap.entry_width, key, value)?,
            "gap.altitude" => f(&mut self.gap.altitude, key, value)?,
            "gap.approach_speed" => f(&mut self.gap.approach_speed, key, value)?,
            "gap.settle" => f(&mut self.gap.settle, key, value)?,
            "gap.timeout" => f(&mut self.gap.timeout, key, value)?,

            "drop.heights" => self.drop.heights = parse_f64_list(key, value)?,
            "drop.frame_mass" => f(&mut self.drop.frame_mass, key, value)?,

            _ => return Err(contract(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Cross-field resolution: the shared vehicle/arm/contact parameters are
    /// copied into every consumer, and contact points are re-derived from the
    /// (possibly overridden) vehicle geometry.
    fn resolve(&mut self) {
        self.contact.points = default_contact_points(&self.vehicle);
        self.ppo.seed = self.seed;
        self.ppo.env.vehicle = self.vehicle.clone();
        self.ppo.env.arm_params = self.arm.clone();
        self.drop.vehicle = self.vehicle.clone();
        self.drop.arm_params = self.arm.clone();
        self.drop.contact = self.contact.clone();
    }

    pub fn validate(&mut self) -> Result<(), CliError> {
        self.resolve();
        let named = |prefix: &str, name: &str, value: f64| {
            contract(format!("config key '{prefix}.{name}' out of range: {value}"))
        };
        self.vehicle
            .validate()
            .map_err(|e| match e {
                holoarm_core::dynamics::DynamicsError::InvalidParameter { name, value } => {
                    named("vehicle", name, value)
                }
                other => contract(other.to_string()),
            })?;
        self.arm.validate().map_err(|e| match e {
            holoarm_core::arm::ArmError::InvalidParameter { name, value } => {
                named("arm", name, value)
            }
            other => contract(other.to_string()),
        })?;
        self.contact.validate().map_err(|e| match e {
            holoarm_core::contact::ContactError::InvalidParameter { name, value } => {
                named("contact", name, value)
            }
        })?;
        self.ppo
            .validate()
            .map_err(|e| contract(format!("rl config: {e}")))?;

        let positive = [
            ("lemniscate.period", self.lemniscate.period),
            ("lemniscate.amplitude", self.lemniscate.amplitude),
            ("payload.radius", self.payload.radius),
            ("payload.period", self.payload.period),
            ("disturbance.push_duration", self.disturbance.push_duration),
            ("gap.width", self.gap.gap_width),
            ("gap.approach_speed", self.gap.approach_speed),
            ("gap.timeout", self.gap.timeout),
            ("drop.frame_mass", self.drop.frame_mass),
        ];
        for (key, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(contract(format!("config key '{key}' out of range: {value}")));
            }
        }
        let non_negative = [
            ("payload.mass", self.payload.payload_mass),
            ("disturbance.force", self.disturbance.force),
            ("disturbance.settle", self.disturbance.settle),
            ("gap.entry_taper", self.gap.entry_taper),
        ];
        for (key, value) in non_negative {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(contract(format!("config key '{key}' out of range: {value}")));
            }
        }
        if self.lemniscate.laps_scored == 0 || self.lemniscate.laps_scored > self.lemniscate.laps_total {
            return Err(contract(format!(
                "config key 'lemniscate.laps_scored' out of range: {} (laps_total {})",
                self.lemniscate.laps_scored, self.lemniscate.laps_total,
            )));
        }
        if !(self.gap.x_end > self.gap.x_start) {
            return Err(contract(format!(
                "config key 'gap.x_end' out of range: {} (must exceed gap.x_start {})",
                self.gap.x_end, self.gap.x_start,
            )));
        }
        if !(self.gap.entry_width >= self.gap.gap_width) {
            return Err(contract(format!(
                "config key 'gap.entry_width' out of range: {} (narrower than gap.width {})",
                self.gap.entry_width, self.gap.gap_width,
            )));
        }
        for &h in &self.drop.heights {
            if !(h > 0.0) || !h.is_finite() {
                return Err(contract(format!("config key 'drop.heights' out of range: {h}")));
            }
        }
        Ok(())
    }

    /// Overrides the seed (from `--seed` or `HOLOARM_SEED`) after loading.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.ppo.seed = seed;
    }

    /// Canonical echo of every resolved key, suitable for reloading and for
    /// hashing into the manifest.
    pub fn echo(&self) -> String {
        let mut out = String::with_capacity(2048);
        let mut kv = |key: &str, value: String| {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&value);
            out.push('\n');
        };
        let fmt_list = |values: &[f64]| {
            values.iter().map(|v| sig9(*v)).collect::<Vec<_>>().join(",")
        };
        kv("seed", self.seed.to_string());

        kv("vehicle.mass", sig9(self.vehicle.mass));
        kv("vehicle.motor_time_constant", sig9(self.vehicle.motor_time_constant));
        kv("vehicle.thrust_c0", sig9(self.vehicle.thrust_coeffs.0));
        kv("vehicle.thrust_c1", sig9(self.vehicle.thrust_coeffs.1));
        kv("vehicle.thrust_c2", sig9(self.vehicle.thrust_coeffs.2));
        kv("vehicle.yaw_torque_coeff", sig9(self.vehicle.yaw_torque_coeff));
        kv("vehicle.inertia_xx", sig9(self.vehicle.inertia_diag.x));
        kv("vehicle.inertia_yy", sig9(self.vehicle.inertia_diag.y));
        kv("vehicle.inertia_zz", sig9(self.vehicle.inertia_diag.z));
        kv("vehicle.gravity", sig9(self.vehicle.gravity));
        kv("vehicle.linear_drag", sig9(self.vehicle.linear_drag));

        kv("arm.k_lat", sig9(self.arm.k_lat));
        kv("arm.c_lat", sig9(self.arm.c_lat));
        kv("arm.k_up", sig9(self.arm.k_up));
        kv("arm.c_up", sig9(self.arm.c_up));
        kv("arm.k_down", sig9(self.arm.k_down));
        kv("arm.c_down", sig9(self.arm.c_down));
        kv("arm.k_ax", sig9(self.arm.k_ax));
        kv("arm.c_ax", sig9(self.arm.c_ax));
        kv("arm.i_eff", sig9(self.arm.i_eff));
        kv("arm.m_eff", sig9(self.arm.m_eff));
        kv("arm.axial_travel_max", sig9(self.arm.axial_travel_max));
        kv("arm.arm_length", sig9(self.arm.arm_length));
        kv("arm.bend_limit", sig9(self.arm.bend_limit));
        kv("arm.k_stop", sig9(self.arm.k_stop));
        kv("arm.c_stop", sig9(self.arm.c_stop));

        kv("contact.k_n", sig9(self.contact.k_n));
        kv("contact.c_n", sig9(self.contact.c_n));
        kv("contact.mu", sig9(self.contact.mu));
        kv("contact.failure_threshold", sig9(self.contact.failure_threshold));

        kv("rl.envs", self.ppo.envs.to_string());
        kv("rl.horizon", self.ppo.horizon.to_string());
        kv("rl.epochs", self.ppo.epochs.to_string());
        kv("rl.minibatch", self.ppo.minibatch.to_string());
        kv(
            "rl.hidden",
            self.ppo.hidden.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","),
        );
        kv("rl.gamma", sig9(self.ppo.gamma));
        kv("rl.lam", sig9(self.ppo.lam));
        kv("rl.clip", sig9(self.ppo.clip));
        kv("rl.learning_rate", sig9(self.ppo.learning_rate));
        kv("rl.max_grad_norm", sig9(self.ppo.max_grad_norm));
        kv("rl.log_std_init", sig9(self.ppo.log_std_init));
        kv("rl.max_env_steps", self.ppo.max_env_steps.to_string());
        kv("rl.eval_episodes", self.ppo.eval_episodes.to_string());
        kv("rl.target_eval_err", sig9(self.ppo.target_eval_err));
        kv("rl.episode_steps", self.ppo.env.episode_steps.to_string());
        kv(
            "rl.domain_randomization",
            self.ppo.env.domain_randomization.to_string(),
        );

        kv("lemniscate.period", sig9(self.lemniscate.period));
        kv("lemniscate.amplitude", sig9(self.lemniscate.amplitude));
        kv("lemniscate.altitude", sig9(self.lemniscate.altitude));
        kv("lemniscate.laps_total", self.lemniscate.laps_total.to_string());
        kv("lemniscate.laps_scored", self.lemniscate.laps_scored.to_string());

        kv("payload.mass", sig9(self.payload.payload_mass));
        kv("payload.mount_offset_below", sig9(self.payload.mount_offset_below));
        kv("payload.radius", sig9(self.payload.radius));
        kv("payload.altitude", sig9(self.payload.altitude));
        kv("payload.period", sig9(self.payload.period));
        kv("payload.laps", self.payload.laps.to_string());
        kv("payload.warmup", sig9(self.payload.warmup));

        kv("disturbance.force", sig9(self.disturbance.force));
        kv("disturbance.push_duration", sig9(self.disturbance.push_duration));
        kv("disturbance.settle", sig9(self.disturbance.settle));
        kv("disturbance.aftermath", sig9(self.disturbance.aftermath));

        kv("gap.width", sig9(self.gap.gap_width));
        kv("gap.x_start", sig9(self.gap.x_start));
        kv("gap.x_end", sig9(self.gap.x_end));
        kv("gap.entry_taper", sig9(self.gap.entry_taper));
        kv("gap.entry_width", sig9(self.gap.entry_width));
        kv("gap.altitude", sig9(self.gap.altitude));
        kv("gap.approach_speed", sig9(self.gap.approach_speed));
        kv("gap.settle", sig9(self.gap.settle));
        kv("gap.timeout", sig9(self.gap.timeout));

        kv("drop.heights", fmt_list(&self.drop.heights));
        kv("drop.frame_mass", sig9(self.drop.frame_mass));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_the_identified_vehicle() {
        let mut config = Config::default();
        config.validate().unwrap();
        assert_eq!(config.vehicle.mass, 0.970);
        assert_eq!(config.vehicle.motor_time_constant, 0.04);
        assert_eq!(config.seed, 7);
        assert_eq!(config.contact.points.len(), 8);
    }

    #[test]
    fn empty_text_resolves_to_defaults() {
        let mut config = Config::default();
        config.apply_text("# nothing here\n\n   \n").unwrap();
        config.validate().unwrap();
        assert_eq!(config.echo(), {
            let mut d = Config::default();
            d.validate().unwrap();
            d.echo()
        });
    }

    #[test]
    fn override_changes_only_that_key_in_the_echo() {
        let mut base = Config::default();
        base.validate().unwrap();
        let mut over = Config::default();
        over.apply_text("vehicle.mass = 1.2  # heavier build\n").unwrap();
        over.validate().unwrap();
        let base_echo = base.echo();
        let base_lines: Vec<&str> = base_echo.lines().map(str::trim).collect();
        let over_echo = over.echo();
        let over_lines: Vec<&str> = over_echo.lines().map(str::trim).collect();
        assert_eq!(base_lines.len(), over_lines.len());
        let diffs: Vec<(&str, &str)> = base_lines
            .iter()
            .zip(&over_lines)
            .filter(|(a, b)| a != b)
            .map(|(a, b)| (*a, *b))
            .collect();
        assert_eq!(diffs, vec![("vehicle.mass = 0.970000000", "vehicle.mass = 1.20000000")]);
    }

    #[test]
    fn echo_round_trips() {
        let mut config = Config::default();
        config
            .apply_text("seed = 42\narm.k_lat = 0.111\ndrop.heights = 0.5, 2.0\nrl.hidden = 32,16\n")
            .unwrap();
        config.validate().unwrap();
        let echo = config.echo();
        let mut reloaded = Config::default();
        reloaded.apply_text(&echo).unwrap();
        reloaded.validate().unwrap();
        assert_eq!(echo, reloaded.echo());
        assert_eq!(reloaded.seed, 42);
        assert_eq!(reloaded.drop.heights, vec![0.5, 2.0]);
        assert_eq!(reloaded.ppo.hidden, vec![32, 16]);
    }

    #[test]
    fn unknown_key_is_named() {
        let mut config = Config::default();
        let err = config.apply_text("vehicle.spin = 3\n").unwrap_err();
        assert!(matches!(&err, CliError::Contract(m) if m.contains("vehicle.spin")), "{err:?}");
    }

    #[test]
    fn negative_mass_error_names_the_key() {
        let mut config = Config::default();
        config.apply_text("vehicle.mass = -1\n").unwrap();
        let err = config.validate().unwrap_err();
        assert!(matches!(&err, CliError::Contract(m) if m.contains("vehicle.mass")), "{err:?}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let mut config = Config::default();
        let err = config.apply_text("vehicle.mass 1.0\n").unwrap_err();
        assert!(matches!(&err, CliError::Contract(m) if m.contains("line 1")), "{err:?}");
    }

    #[test]
    fn overrides_propagate_into_consumers() {
        let mut config = Config::default();
        config
            .apply_text("vehicle.mass = 1.1\nseed = 9\narm.k_lat = 0.2\n")
            .unwrap();
        config.validate().unwrap();
        assert_eq!(config.ppo.env.vehicle.mass, 1.1);
        assert_eq!(config.drop.vehicle.mass, 1.1);
        assert_eq!(config.drop.arm_params.k_lat, 0.2);
        assert_eq!(config.ppo.seed, 9);
    }
}
