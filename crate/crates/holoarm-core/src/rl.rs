//! Learning-based hover control: a small fully-connected policy/value pair
//! trained from scratch with PPO on the coupled simulator, plus the
//! evaluation harness. Everything is deterministic for a fixed seed: one
//! ChaCha8 stream drives environment resets, action sampling and minibatch
//! shuffling, and environments run sequentially.

use alloc::vec;
use alloc::vec::Vec;
#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::arm::ArmParams;
use crate::contact::ContactParams;
use crate::dynamics::{RigidBodyState, VehicleParams};
use crate::pd::{ControlPolicy, Reference};
use crate::sim::{CoupledSim, Environment};
use crate::Vec3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RlError {
    #[error("invalid rl parameter {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("environment stepped after episode end")]
    EpisodeOver,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

// ---------------------------------------------------------------------------
// Multilayer perceptron with manual backprop.
// ---------------------------------------------------------------------------

/// Output-layer activation; hidden layers are always tanh.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Sigmoid,
}

/// Fully-connected network, stored as row-major weight blocks per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    output: Activation,
    /// weights[l] has sizes[l+1] rows of sizes[l] columns.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// Forward-pass activations, reused across calls to avoid allocation.
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    /// activations[0] is the input, activations[L] the output.
    activations: Vec<Vec<f64>>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl Mlp {
    /// Xavier-uniform initialization with zero biases.
    pub fn new(sizes: &[usize], output: Activation, rng: &mut ChaCha8Rng) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output layers");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..sizes.len() - 1 {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = (0..fan_in * fan_out)
                .map(|_| rng.gen_range(-bound..bound))
                .collect();
            weights.push(w);
            biases.push(vec![0.0; fan_out]);
        }
        Self {
            sizes: sizes.to_vec(),
            output,
            weights,
            biases,
        }
    }

    /// All-zero network of the given shape; a deserialization target to be
    /// filled via [`Mlp::set_params_flat`].
    pub fn zeros(sizes: &[usize], output: Activation) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output layers");
        let weights = (0..sizes.len() - 1)
            .map(|l| vec![0.0; sizes[l] * sizes[l + 1]])
            .collect();
        let biases = (0..sizes.len() - 1).map(|l| vec![0.0; sizes[l + 1]]).collect();
        Self {
            sizes: sizes.to_vec(),
            output,
            weights,
            biases,
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    /// Scales the output layer's weights and sets its biases; used to start
    /// the policy near a known-good constant action.
    pub fn condition_output(&mut self, weight_scale: f64, bias: &[f64]) {
        let last = self.weights.len() - 1;
        for w in &mut self.weights[last] {
            *w *= weight_scale;
        }
        self.biases[last].copy_from_slice(bias);
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Parameters flattened layer by layer, weights before biases.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in 0..self.weights.len() {
            out.extend_from_slice(&self.weights[l]);
            out.extend_from_slice(&self.biases[l]);
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let mut at = 0;
        for l in 0..self.weights.len() {
            let wl = self.weights[l].len();
            self.weights[l].copy_from_slice(&flat[at..at + wl]);
            at += wl;
            let bl = self.biases[l].len();
            self.biases[l].copy_from_slice(&flat[at..at + bl]);
            at += bl;
        }
    }

    pub fn forward(&self, input: &[f64], cache: &mut MlpCache) {
        assert_eq!(input.len(), self.sizes[0]);
        let layers = self.weights.len();
        cache.activations.resize(layers + 1, Vec::new());
        cache.activations[0].clear();
        cache.activations[0].extend_from_slice(input);
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (head, tail) = cache.activations.split_at_mut(l + 1);
            let a_in = &head[l];
            let a_out = &mut tail[0];
            a_out.clear();
            a_out.reserve(n_out);
            for j in 0..n_out {
                let row = &self.weights[l][j * n_in..(j + 1) * n_in];
                let mut z = self.biases[l][j];
                for (w, a) in row.iter().zip(a_in) {
                    z += w * a;
                }
                let act = if l + 1 == layers {
                    match self.output {
                        Activation::Identity => z,
                        Activation::Sigmoid => sigmoid(z),
                    }
                } else {
                    z.tanh()
                };
                a_out.push(act);
            }
        }
    }

    pub fn output<'c>(&self, cache: &'c MlpCache) -> &'c [f64] {
        cache.activations.last().unwrap()
    }

    /// Accumulates d(cotangent . output)/d(params) into `grads` (flat, same
    /// layout as `params_flat`) for the cached forward pass.
    pub fn backward(&self, cache: &MlpCache, output_cotangent: &[f64], grads: &mut [f64]) {
        assert_eq!(grads.len(), self.param_count());
        let layers = self.weights.len();
        assert_eq!(output_cotangent.len(), self.sizes[layers]);

        // Offsets of each layer's block in the flat layout.
        let mut offsets = Vec::with_capacity(layers);
        let mut at = 0;
        for l in 0..layers {
            offsets.push(at);
            at += self.weights[l].len() + self.biases[l].len();
        }

        // delta = dL/dz for the current layer.
        let out = self.output(cache);
        let mut delta: Vec<f64> = output_cotangent
            .iter()
            .zip(out)
            .map(|(c, a)| {
                c * match self.output {
                    Activation::Identity => 1.0,
                    Activation::Sigmoid => a * (1.0 - a),
                }
            })
            .collect();

        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let a_in = &cache.activations[l];
            let base = offsets[l];
            for j in 0..n_out {
                let d = delta[j];
                let row = &mut grads[base + j * n_in..base + (j + 1) * n_in];
                for (g, a) in row.iter_mut().zip(a_in) {
                    *g += d * a;
                }
            }
            let bias_base = base + n_in * n_out;
            for j in 0..n_out {
                grads[bias_base + j] += delta[j];
            }
            if l > 0 {
                let mut prev = vec![0.0; n_in];
                for j in 0..n_out {
                    let d = delta[j];
                    let row = &self.weights[l][j * n_in..(j + 1) * n_in];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += w * d;
                    }
                }
                for (p, a) in prev.iter_mut().zip(a_in) {
                    *p *= 1.0 - a * a;
                }
                delta = prev;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Adam optimizer over a flat parameter vector.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, n: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    /// One descent step on `params` along `grads`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

// ---------------------------------------------------------------------------
// Gaussian policy.
// ---------------------------------------------------------------------------

pub const LOG_STD_MIN: f64 = -4.0;
pub const LOG_STD_MAX: f64 = 0.0;
const HALF_LOG_TAU: f64 = 0.918_938_533_204_672_8; // 0.5 ln(2 pi)

/// Diagonal-Gaussian stochastic policy: the network outputs the mean action
/// in (0, 1) per motor; the log standard deviations are free parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub net: Mlp,
    pub log_std: Vec<f64>,
}

impl GaussianPolicy {
    pub fn new(obs_dim: usize, hidden: &[usize], log_std_init: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(obs_dim);
        sizes.extend_from_slice(hidden);
        sizes.push(4);
        let net = Mlp::new(&sizes, Activation::Sigmoid, rng);
        Self {
            net,
            log_std: vec![log_std_init.clamp(LOG_STD_MIN, LOG_STD_MAX); 4],
        }
    }

    pub fn mean(&self, observation: &[f64], cache: &mut MlpCache) -> [f64; 4] {
        self.net.forward(observation, cache);
        let out = self.net.output(cache);
        [out[0], out[1], out[2], out[3]]
    }

    /// Samples an action and returns (action, log-probability).
    pub fn sample(
        &self,
        observation: &[f64],
        cache: &mut MlpCache,
        rng: &mut ChaCha8Rng,
    ) -> ([f64; 4], f64) {
        let mean = self.mean(observation, cache);
        let mut action = [0.0; 4];
        for k in 0..4 {
            let std = self.log_std[k].exp();
            action[k] = mean[k] + std * standard_normal(rng);
        }
        let logp = self.log_prob_of(&mean, &action);
        (action, logp)
    }

    pub fn log_prob(&self, observation: &[f64], action: &[f64; 4], cache: &mut MlpCache) -> f64 {
        let mean = self.mean(observation, cache);
        self.log_prob_of(&mean, action)
    }

    fn log_prob_of(&self, mean: &[f64; 4], action: &[f64; 4]) -> f64 {
        let mut logp = 0.0;
        for k in 0..4 {
            let std = self.log_std[k].exp();
            let z = (action[k] - mean[k]) / std;
            logp += -0.5 * z * z - self.log_std[k] - HALF_LOG_TAU;
        }
        logp
    }
}

/// Box-Muller standard normal from the deterministic stream.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * core::f64::consts::PI * u2).cos()
}

// ---------------------------------------------------------------------------
// Hover environment.
// ---------------------------------------------------------------------------

/// Number of past actions kept in the observation.
pub const ACTION_HISTORY: usize = 2;

/// Observation layout: position error (3), attitude matrix row-major (9),
/// world velocity (3), body angular velocity (3), last ACTION_HISTORY
/// actions most recent first (4 each).
pub const OBS_DIM: usize = 18 + 4 * ACTION_HISTORY;

#[derive(Debug, Clone)]
pub struct EnvConfig {
    pub target: Vec3,
    /// Control period [s] and dynamics substeps per control step.
    pub control_dt: f64,
    pub substeps: usize,
    pub episode_steps: usize,
    /// Start randomization: position offset ball radius [m], tilt [rad],
    /// velocity ball [m/s], angular velocity ball [rad/s].
    pub start_offset: f64,
    pub start_tilt: f64,
    pub start_velocity: f64,
    pub start_rate: f64,
    /// Randomize mass and thrust scale +-10%, arm stiffness +-20% per
    /// episode when enabled.
    pub domain_randomization: bool,
    pub vehicle: VehicleParams,
    pub arm_params: ArmParams,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            target: Vec3::new(0.0, 0.0, 1.0),
            control_dt: 0.01,
            substeps: 4,
            episode_steps: 500,
            start_offset: 0.3,
            start_tilt: 10.0 * core::f64::consts::PI / 180.0,
            start_velocity: 0.3,
            start_rate: 0.5,
            domain_randomization: true,
            vehicle: VehicleParams::default(),
            arm_params: ArmParams::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        let invalid = |name, value| Err(RlError::InvalidParameter { name, value });
        if !(self.control_dt > 0.0 && self.control_dt <= 0.1) {
            return invalid("control_dt", self.control_dt);
        }
        if self.substeps == 0 {
            return invalid("substeps", self.substeps as f64);
        }
        if self.episode_steps == 0 {
            return invalid("episode_steps", 0.0);
        }
        Ok(())
    }
}

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub crashed: bool,
}

/// Free-flight hover task: start near the target, hold it. Reward favors
/// small position error, low speeds and near-hover commands; leaving a 3 m
/// ball or exceeding 80 deg tilt crashes the episode.
#[derive(Debug)]
pub struct HoverEnv {
    pub config: EnvConfig,
    sim: CoupledSim,
    history: Vec<[f64; 4]>,
    hover_action: f64,
    steps: usize,
    done: bool,
}

pub const CRASH_RADIUS: f64 = 3.0;
pub const CRASH_TILT: f64 = 80.0 * core::f64::consts::PI / 180.0;
pub const CRASH_REWARD: f64 = -10.0;

impl HoverEnv {
    pub fn new(config: EnvConfig) -> Result<Self, RlError> {
        config.validate()?;
        let sim = CoupledSim::new(
            config.vehicle.clone(),
            config.arm_params.clone(),
            ContactParams {
                points: Vec::new(),
                ..ContactParams::default()
            },
            Environment::default(),
            true,
        )
        .map_err(|_| RlError::InvalidParameter {
            name: "vehicle/arm parameters",
            value: f64::NAN,
        })?;
        let hover_action = config.vehicle.hover_command();
        Ok(Self {
            config,
            sim,
            history: vec![[hover_action; 4]; ACTION_HISTORY],
            hover_action,
            steps: 0,
            done: false,
        })
    }

    pub fn hover_action(&self) -> f64 {
        self.hover_action
    }

    /// Starts a new randomized episode and returns the first observation.
    pub fn reset(&mut self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let c = &self.config;
        self.sim.vehicle = c.vehicle.clone();
        self.sim.arm_params = c.arm_params.clone();
        if c.domain_randomization {
            let mass_scale = rng.gen_range(0.9..1.1);
            let thrust_scale = rng.gen_range(0.9..1.1);
            let stiffness_scale = rng.gen_range(0.8..1.2);
            self.sim.vehicle.mass *= mass_scale;
            self.sim.vehicle.inertia_diag *= mass_scale;
            let (c0, c1, c2) = self.sim.vehicle.thrust_coeffs;
            self.sim.vehicle.thrust_coeffs =
                (c0 * thrust_scale, c1 * thrust_scale, c2 * thrust_scale);
            self.sim.arm_params.k_lat *= stiffness_scale;
            self.sim.arm_params.k_up *= stiffness_scale;
            self.sim.arm_params.k_down *= stiffness_scale;
            self.sim.arm_params.k_ax *= stiffness_scale;
        }
        self.sim.body = RigidBodyState {
            position: c.target + ball_sample(rng) * c.start_offset,
            attitude: crate::Quat::from_axis_angle(
                &random_unit_axis(rng),
                rng.gen_range(0.0..c.start_tilt),
            ),
            velocity: ball_sample(rng) * c.start_velocity,
            angular_velocity: ball_sample(rng) * c.start_rate,
        };
        self.sim.motors = crate::dynamics::MotorBank::settled(self.hover_action);
        self.sim.arms = Default::default();
        self.sim.time = 0.0;
        self.history = vec![[self.hover_action; 4]; ACTION_HISTORY];
        self.steps = 0;
        self.done = false;
        self.observation()
    }

    pub fn observation(&self) -> Vec<f64> {
        build_observation(&self.sim.body, self.config.target, &self.history)
    }

    pub fn state(&self) -> &RigidBodyState {
        &self.sim.body
    }

    /// Applies one control action (clamped to [0, 1]) for one control period.
    pub fn step(&mut self, action: [f64; 4]) -> Result<StepOutcome, RlError> {
        if self.done {
            return Err(RlError::EpisodeOver);
        }
        let applied = action.map(|a| {
            if a.is_finite() {
                a.clamp(0.0, 1.0)
            } else {
                self.hover_action
            }
        });
        let dt = self.config.control_dt / self.config.substeps as f64;
        let mut crashed = false;
        for _ in 0..self.config.substeps {
            if self.sim.step(applied, dt, &[]).is_err() {
                crashed = true;
                break;
            }
        }
        self.history.rotate_right(1);
        self.history[0] = applied;
        self.steps += 1;

        let body = &self.sim.body;
        let err = (self.config.target - body.position).norm();
        crashed = crashed || err > CRASH_RADIUS || body.tilt_angle() > CRASH_TILT;
        let reward = if crashed {
            CRASH_REWARD
        } else {
            let v2 = body.velocity.norm_squared();
            let w2 = body.angular_velocity.norm_squared();
            let a2: f64 = applied
                .iter()
                .map(|a| (a - self.hover_action) * (a - self.hover_action))
                .sum();
            // The linear error term keeps a non-vanishing gradient toward the
            // target once the policy is already close.
            2.0 - 2.0 * err * err - 0.5 * err - 0.05 * v2 - 0.01 * w2 - 0.2 * a2
        };
        self.done = crashed || self.steps >= self.config.episode_steps;
        Ok(StepOutcome {
            observation: self.observation(),
            reward,
            done: self.done,
            crashed,
        })
    }
}

/// Shared observation builder; `history` is ordered most recent first.
pub fn build_observation(state: &RigidBodyState, target: Vec3, history: &[[f64; 4]]) -> Vec<f64> {
    let mut obs = Vec::with_capacity(18 + 4 * history.len());
    let err = target - state.position;
    obs.extend_from_slice(&[err.x, err.y, err.z]);
    let r = state.attitude.to_rotation_matrix();
    let m = r.matrix();
    for row in 0..3 {
        for col in 0..3 {
            obs.push(m[(row, col)]);
        }
    }
    obs.extend_from_slice(&[state.velocity.x, state.velocity.y, state.velocity.z]);
    obs.extend_from_slice(&[
        state.angular_velocity.x,
        state.angular_velocity.y,
        state.angular_velocity.z,
    ]);
    for past in history {
        obs.extend_from_slice(past);
    }
    obs
}

/// Uniform sample from the unit ball.
fn ball_sample(rng: &mut ChaCha8Rng) -> Vec3 {
    let direction = random_unit_axis(rng);
    let radius = rng.gen::<f64>().cbrt();
    direction.into_inner() * radius
}

fn random_unit_axis(rng: &mut ChaCha8Rng) -> nalgebra::Unit<Vec3> {
    loop {
        let v = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return nalgebra::Unit::new_unchecked(v / n);
        }
    }
}

// ---------------------------------------------------------------------------
// PPO training.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct PpoConfig {
    pub seed: u64,
    pub env: EnvConfig,
    pub hidden: Vec<usize>,
    pub log_std_init: f64,
    pub envs: usize,
    pub horizon: usize,
    pub epochs: usize,
    pub minibatch: usize,
    pub gamma: f64,
    pub lam: f64,
    pub clip: f64,
    pub learning_rate: f64,
    pub max_grad_norm: f64,
    /// Total environment-step budget.
    pub max_env_steps: usize,
    pub eval_episodes: usize,
    /// Stop once the deterministic evaluation error drops below this [m].
    pub target_eval_err: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            env: EnvConfig::default(),
            hidden: vec![64, 64],
            log_std_init: -2.3,
            envs: 8,
            horizon: 256,
            epochs: 10,
            minibatch: 512,
            gamma: 0.99,
            lam: 0.95,
            clip: 0.2,
            learning_rate: 3e-4,
            max_grad_norm: 0.5,
            max_env_steps: 2_000_000,
            eval_episodes: 3,
            target_eval_err: 0.08,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        let invalid = |name, value| Err(RlError::InvalidParameter { name, value });
        self.env.validate()?;
        if self.envs == 0 {
            return invalid("envs", 0.0);
        }
        if self.horizon == 0 {
            return invalid("horizon", 0.0);
        }
        if self.epochs == 0 {
            return invalid("epochs", 0.0);
        }
        if self.minibatch == 0 {
            return invalid("minibatch", 0.0);
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return invalid("gamma", self.gamma);
        }
        if !(self.lam >= 0.0 && self.lam <= 1.0) {
            return invalid("lam", self.lam);
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return invalid("clip", self.clip);
        }
        if !(self.learning_rate > 0.0) {
            return invalid("learning_rate", self.learning_rate);
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainLogRow {
    pub iter: usize,
    /// Cumulative environment steps at the end of this iteration.
    pub steps: usize,
    /// Mean return of episodes finished during this iteration.
    pub mean_return: f64,
    /// Deterministic evaluation mean position error [m].
    pub eval_err_m: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub policy: GaussianPolicy,
    pub value: Mlp,
    pub log: Vec<TrainLogRow>,
    pub env_steps: usize,
    /// Set if optimization produced non-finite numbers; `policy` then holds
    /// the last finite iterate.
    pub diverged_at_iter: Option<usize>,
}

/// Generalized advantage estimation over one rollout segment.
///
/// `values` has one extra trailing element: the bootstrap value of the state
/// after the last step (ignored when that step ended an episode).
pub fn gae_advantages(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lam: f64,
) -> Vec<f64> {
    assert_eq!(values.len(), rewards.len() + 1);
    assert_eq!(dones.len(), rewards.len());
    let mut adv = vec![0.0; rewards.len()];
    let mut carry = 0.0;
    for t in (0..rewards.len()).rev() {
        let next_value = if dones[t] { 0.0 } else { values[t + 1] };
        let delta = rewards[t] + gamma * next_value - values[t];
        carry = delta + if dones[t] { 0.0 } else { gamma * lam * carry };
        adv[t] = carry;
    }
    adv
}

struct Rollout {
    observations: Vec<Vec<f64>>,
    actions: Vec<[f64; 4]>,
    log_probs: Vec<f64>,
    advantages: Vec<f64>,
    returns: Vec<f64>,
}

/// Trains the hover policy with clipped-surrogate PPO. Deterministic for a
/// fixed config; returns the log rows emitted once per iteration.
pub fn train(config: &PpoConfig) -> Result<TrainResult, RlError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let hover = config.env.vehicle.hover_command();
    let mut policy = GaussianPolicy::new(OBS_DIM, &config.hidden, config.log_std_init, &mut rng);
    // Start the policy mean at the hover command with small state coupling:
    // early exploration then happens around a stable operating point.
    let logit = (hover / (1.0 - hover)).ln();
    policy.net.condition_output(0.01, &[logit; 4]);
    let mut value_sizes = vec![OBS_DIM];
    value_sizes.extend_from_slice(&config.hidden);
    value_sizes.push(1);
    let mut value = Mlp::new(&value_sizes, Activation::Identity, &mut rng);

    let mut envs = Vec::with_capacity(config.envs);
    let mut observations = Vec::with_capacity(config.envs);
    for _ in 0..config.envs {
        let mut env = HoverEnv::new(config.env.clone())?;
        observations.push(env.reset(&mut rng));
        envs.push(env);
    }

    let n_policy = policy.net.param_count() + 4;
    let n_value = value.param_count();
    let mut opt_policy = Adam::new(config.learning_rate, n_policy);
    let mut opt_value = Adam::new(config.learning_rate, n_value);

    let mut log = Vec::new();
    let mut env_steps = 0usize;
    let mut iter = 0usize;
    let mut cache = MlpCache::default();
    let mut last_good = (policy.clone(), value.clone());

    while env_steps < config.max_env_steps {
        iter += 1;
        let mut rollout = Rollout {
            observations: Vec::new(),
            actions: Vec::new(),
            log_probs: Vec::new(),
            advantages: Vec::new(),
            returns: Vec::new(),
        };
        let mut finished_returns = Vec::new();

        for (env, obs_slot) in envs.iter_mut().zip(observations.iter_mut()) {
            let mut rewards = Vec::with_capacity(config.horizon);
            let mut dones = Vec::with_capacity(config.horizon);
            let mut values_seq = Vec::with_capacity(config.horizon + 1);
            let mut episode_return = 0.0;
            let base = rollout.observations.len();
            for _ in 0..config.horizon {
                let obs = obs_slot.clone();
                value.forward(&obs, &mut cache);
                values_seq.push(value.output(&cache)[0]);
                let (action, logp) = policy.sample(&obs, &mut cache, &mut rng);
                let outcome = env.step(action)?;
                episode_return += outcome.reward;
                rollout.observations.push(obs);
                rollout.actions.push(action);
                rollout.log_probs.push(logp);
                rewards.push(outcome.reward);
                dones.push(outcome.done);
                if outcome.done {
                    finished_returns.push(episode_return);
                    episode_return = 0.0;
                    *obs_slot = env.reset(&mut rng);
                } else {
                    *obs_slot = outcome.observation;
                }
            }
            value.forward(obs_slot, &mut cache);
            values_seq.push(value.output(&cache)[0]);
            let adv = gae_advantages(&rewards, &values_seq, &dones, config.gamma, config.lam);
            for (t, a) in adv.iter().enumerate() {
                rollout.advantages.push(*a);
                rollout.returns.push(a + values_seq[t]);
            }
            debug_assert_eq!(rollout.observations.len() - base, config.horizon);
        }
        env_steps += config.envs * config.horizon;

        // Normalize advantages over the whole batch.
        let n = rollout.advantages.len();
        let mean = rollout.advantages.iter().sum::<f64>() / n as f64;
        let var = rollout
            .advantages
            .iter()
            .map(|a| (a - mean) * (a - mean))
            .sum::<f64>()
            / n as f64;
        let std = var.sqrt().max(1e-8);
        for a in &mut rollout.advantages {
            *a = (*a - mean) / std;
        }

        let mut indices: Vec<usize> = (0..n).collect();
        let mut policy_params = policy.net.params_flat();
        policy_params.extend_from_slice(&policy.log_std);
        let mut value_params = value.params_flat();
        let mut policy_grads = vec![0.0; n_policy];
        let mut value_grads = vec![0.0; n_value];
        let net_params = policy.net.param_count();

        for _ in 0..config.epochs {
            shuffle(&mut indices, &mut rng);
            for chunk in indices.chunks(config.minibatch) {
                policy_grads.iter_mut().for_each(|g| *g = 0.0);
                value_grads.iter_mut().for_each(|g| *g = 0.0);
                let scale = 1.0 / chunk.len() as f64;
                for &idx in chunk {
                    let obs = &rollout.observations[idx];
                    let action = &rollout.actions[idx];
                    let advantage = rollout.advantages[idx];

                    policy.net.forward(obs, &mut cache);
                    let out = policy.net.output(&cache);
                    let mean_a = [out[0], out[1], out[2], out[3]];
                    let logp_new = policy.log_prob_of(&mean_a, action);
                    let ratio = (logp_new - rollout.log_probs[idx]).exp();
                    let clipped_out = (advantage >= 0.0 && ratio > 1.0 + config.clip)
                        || (advantage < 0.0 && ratio < 1.0 - config.clip);
                    if !clipped_out {
                        // d(-ratio*A)/d(logp_new) = -A*ratio.
                        let coeff = -advantage * ratio * scale;
                        let mut cot = [0.0; 4];
                        for k in 0..4 {
                            let std_k = policy.log_std[k].exp();
                            let z = (action[k] - mean_a[k]) / std_k;
                            // dlogp/dmean = z/std.
                            cot[k] = coeff * z / std_k;
                            // dlogp/dlog_std = z^2 - 1.
                            policy_grads[net_params + k] += coeff * (z * z - 1.0);
                        }
                        policy.net.backward(&cache, &cot, &mut policy_grads[..net_params]);
                    }

                    value.forward(obs, &mut cache);
                    let v = value.output(&cache)[0];
                    let cot_v = [(v - rollout.returns[idx]) * scale];
                    value.backward(&cache, &cot_v, &mut value_grads);
                }
                clip_grad_norm(&mut policy_grads, config.max_grad_norm);
                clip_grad_norm(&mut value_grads, config.max_grad_norm);
                opt_policy.step(&mut policy_params, &policy_grads);
                opt_value.step(&mut value_params, &value_grads);
                if !policy_params.iter().chain(&value_params).all(|p| p.is_finite()) {
                    let (p, v) = last_good;
                    return Ok(TrainResult {
                        policy: p,
                        value: v,
                        log,
                        env_steps,
                        diverged_at_iter: Some(iter),
                    });
                }
                policy.net.set_params_flat(&policy_params[..net_params]);
                for k in 0..4 {
                    policy_params[net_params + k] =
                        policy_params[net_params + k].clamp(LOG_STD_MIN, LOG_STD_MAX);
                    policy.log_std[k] = policy_params[net_params + k];
                }
                value.set_params_flat(&value_params);
            }
        }

        let mean_return = if finished_returns.is_empty() {
            f64::NAN
        } else {
            finished_returns.iter().sum::<f64>() / finished_returns.len() as f64
        };
        let eval = evaluate(
            &policy,
            &config.env,
            config.eval_episodes,
            config.seed ^ 0x5eed_0000 ^ iter as u64,
        )?;
        log.push(TrainLogRow {
            iter,
            steps: env_steps,
            mean_return,
            eval_err_m: eval.mean_position_error,
        });
        last_good = (policy.clone(), value.clone());
        if eval.crashes == 0 && eval.mean_position_error < config.target_eval_err {
            break;
        }
    }

    Ok(TrainResult {
        policy,
        value,
        log,
        env_steps,
        diverged_at_iter: None,
    })
}

fn shuffle(indices: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..indices.len()).rev() {
        let j = rng.gen_range(0..=i);
        indices.swap(i, j);
    }
}

fn clip_grad_norm(grads: &mut [f64], max_norm: f64) {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            *g *= scale;
        }
    }
}

// ---------------------------------------------------------------------------
// Evaluation.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub episodes: usize,
    pub crashes: usize,
    /// Mean over all steps of the position error norm [m].
    pub mean_position_error: f64,
    pub mean_return: f64,
}

/// Runs the deterministic (mean-action) policy on the nominal environment.
/// Start states are randomized from `seed`; dynamics are not randomized.
pub fn evaluate(
    policy: &GaussianPolicy,
    env_config: &EnvConfig,
    episodes: usize,
    seed: u64,
) -> Result<EvalReport, RlError> {
    let mut config = env_config.clone();
    config.domain_randomization = false;
    let mut env = HoverEnv::new(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cache = MlpCache::default();
    let mut crashes = 0;
    let mut err_sum = 0.0;
    let mut err_count = 0usize;
    let mut return_sum = 0.0;
    for _ in 0..episodes {
        let mut obs = env.reset(&mut rng);
        loop {
            let action = policy.mean(&obs, &mut cache);
            let outcome = env.step(action)?;
            let err = (env.config.target - env.state().position).norm();
            err_sum += err;
            err_count += 1;
            return_sum += outcome.reward;
            obs = outcome.observation;
            if outcome.done {
                if outcome.crashed {
                    crashes += 1;
                }
                break;
            }
        }
    }
    Ok(EvalReport {
        episodes,
        crashes,
        mean_position_error: err_sum / err_count.max(1) as f64,
        mean_return: return_sum / episodes.max(1) as f64,
    })
}

/// Adapter running the learned policy as a flight controller: builds the
/// hover observation against the current reference position and keeps the
/// action history.
#[derive(Debug, Clone)]
pub struct RlPolicy {
    pub policy: GaussianPolicy,
    history: Vec<[f64; 4]>,
    hover_action: f64,
    cache: MlpCache,
}

impl RlPolicy {
    pub fn new(policy: GaussianPolicy, vehicle: &VehicleParams) -> Self {
        let hover_action = vehicle.hover_command();
        Self {
            policy,
            history: vec![[hover_action; 4]; ACTION_HISTORY],
            hover_action,
            cache: MlpCache::default(),
        }
    }
}

impl ControlPolicy for RlPolicy {
    fn reset(&mut self) {
        self.history = vec![[self.hover_action; 4]; ACTION_HISTORY];
    }

    fn command(&mut self, state: &RigidBodyState, reference: &Reference) -> [f64; 4] {
        let obs = build_observation(state, reference.position, &self.history);
        let mean = self.policy.mean(&obs, &mut self.cache);
        let action = mean.map(|a| a.clamp(0.0, 1.0));
        self.history.rotate_right(1);
        self.history[0] = action;
        action
    }
}
