//! Morphing flight: rate-limited arm commands, blending of per-mode
//! controllers, and scenario evaluation.

use std::path::Path;

use crate::ccomb::{solve_weights, WeightVector, MODES};
use crate::dynamics::{ArmLengths, ArmProfile, QuadParams, RigidState, RotorSpeeds};
use crate::env::{power_metric, Env, EnvConfig, Reference, TelemetryRow};
use crate::error::{Error, Result};
use crate::net::{MlpSpec, NetParams};
use crate::policy::{mean_action, BetaParams};

/// Arm slew rate limit in m/s.
pub const DEFAULT_ARM_RATE: f64 = 0.1;

/// One trained actor per arm-length mode, in mode order.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyBank {
    actors: Vec<NetParams>,
}

impl PolicyBank {
    pub fn new(actors: Vec<NetParams>) -> Result<Self> {
        if actors.len() != MODES {
            return Err(Error::ShapeMismatch(format!("policy bank needs {MODES} actors, got {}", actors.len())));
        }
        if let Some(i) = actors.iter().position(|a| *a.spec() != MlpSpec::actor()) {
            return Err(Error::ShapeMismatch(format!("bank entry {i} is not an actor network")));
        }
        Ok(Self { actors })
    }

    pub fn actor(&self, mode: usize) -> &NetParams {
        &self.actors[mode]
    }

    pub fn actors(&self) -> &[NetParams] {
        &self.actors
    }
}

/// Deterministic rotor command of one actor.
pub fn policy_action(actor: &NetParams, s: &RigidState, n_max: f64) -> Result<RotorSpeeds> {
    let (alpha, beta, _) = actor.beta_params(&s.to_array())?;
    Ok(mean_action(&BetaParams::new(alpha, beta)?, n_max))
}

/// Weighted sum of the bank's mean actions; zero-weight entries are skipped.
pub fn cc_action(s: &RigidState, chi: &WeightVector, bank: &PolicyBank, n_max: f64) -> Result<RotorSpeeds> {
    let mut out = [0.0; 4];
    for (i, &w) in chi.0.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let u = policy_action(bank.actor(i), s, n_max)?;
        for j in 0..4 {
            out[j] += w * u.0[j];
        }
    }
    Ok(RotorSpeeds(out))
}

/// Arm motion for one interval toward `target` at `rate`.
pub fn ramp_profile(current: ArmLengths, target: ArmLengths, rate: f64) -> ArmProfile {
    let r = std::array::from_fn(|j| {
        let d = target.0[j] - current.0[j];
        if d > 0.0 {
            rate
        } else if d < 0.0 {
            -rate
        } else {
            0.0
        }
    });
    ArmProfile { start: current, end: target, rate: r }
}

/// Lengths after one `dt` interval of ramping and the realized per-arm rate:
/// `+-rate` while moving, `0` for arms already on target.
pub fn ramp_arm_lengths(current: ArmLengths, target: ArmLengths, dt: f64, rate: f64) -> Result<(ArmLengths, [f64; 4])> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::InvalidArgument(format!("arm rate must be > 0, got {rate}")));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
    }
    let profile = ramp_profile(current, target, rate);
    Ok((profile.at(dt).0, profile.rate))
}

/// Timed arm-length targets. Each command holds until the next one.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmCommandSchedule {
    commands: Vec<(f64, ArmLengths)>,
    rate: f64,
}

impl ArmCommandSchedule {
    pub fn new(commands: Vec<(f64, ArmLengths)>, rate: f64, p: &QuadParams) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::InvalidArgument(format!("arm rate must be > 0, got {rate}")));
        }
        for (k, (t, l)) in commands.iter().enumerate() {
            if !(t.is_finite() && *t >= 0.0) {
                return Err(Error::InvalidArgument(format!("command time {t} must be finite and >= 0")));
            }
            if k > 0 && *t <= commands[k - 1].0 {
                return Err(Error::InvalidArgument(format!("command times must increase strictly, {t} follows {}", commands[k - 1].0)));
            }
            l.check(p)?;
        }
        Ok(Self { commands, rate })
    }

    /// Arms held at `arms` for the whole flight.
    pub fn fixed(arms: ArmLengths, p: &QuadParams) -> Result<Self> {
        Self::new(vec![(0.0, arms)], DEFAULT_ARM_RATE, p)
    }

    /// Parses `t l1 l2 l3 l4` lines; `#` starts a comment.
    pub fn parse(text: &str, rate: f64, p: &QuadParams) -> Result<Self> {
        let mut commands = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::ScheduleSyntax { line: i + 1, reason: e.to_string() })?;
            if vals.len() != 5 {
                return Err(Error::ScheduleSyntax {
                    line: i + 1,
                    reason: format!("expected 5 fields (t l1 l2 l3 l4), found {}", vals.len()),
                });
            }
            commands.push((vals[0], ArmLengths([vals[1], vals[2], vals[3], vals[4]])));
        }
        Self::new(commands, rate, p)
    }

    pub fn load(path: &Path, rate: f64, p: &QuadParams) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, rate, p)
    }

    pub fn commands(&self) -> &[(f64, ArmLengths)] {
        &self.commands
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Arms at take-off: the command issued at `t = 0`, or all arms
    /// shortest when the schedule starts later.
    pub fn initial(&self, p: &QuadParams) -> ArmLengths {
        match self.commands.first() {
            Some((t, l)) if *t <= 0.0 => *l,
            _ => ArmLengths::uniform(p.l_min),
        }
    }

    /// Most recent command at time `t`.
    pub fn target_at(&self, t: f64) -> Option<ArmLengths> {
        self.commands.iter().take_while(|(tc, _)| *tc <= t + 1e-9).last().map(|(_, l)| *l)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub telemetry: Vec<TelemetryRow>,
    /// Undiscounted sum of per-step rewards.
    pub accumulated_reward: f64,
    pub power: [f64; 4],
    pub max_error: f64,
    pub mean_error: f64,
    pub crashed: bool,
    /// Weights active at each step.
    pub weights: Vec<WeightVector>,
}

impl ScenarioResult {
    pub fn steps(&self) -> usize {
        self.telemetry.len()
    }
}

/// Controller driving a scenario.
#[derive(Debug, Clone, Copy)]
pub enum Controller<'a> {
    /// Blend the bank with weights matching the current arm lengths.
    Blended(&'a PolicyBank),
    /// One actor regardless of the arm lengths.
    Single(&'a NetParams),
}

/// Runs one episode with the arms following `schedule`.
///
/// Blended weights are recomputed at every step on which the arm lengths
/// differ from those the current weights were solved for.
pub fn run_scenario(
    controller: Controller<'_>,
    schedule: &ArmCommandSchedule,
    cfg: &EnvConfig,
    reference: Box<dyn Reference>,
    seed: u64,
) -> Result<ScenarioResult> {
    let p = cfg.quad;
    let mut env = Env::with_reference(*cfg, schedule.initial(&p), reference)?;
    let mut state = env.reset(seed);
    let mut chi_arms: Option<ArmLengths> = None;
    let mut chi = WeightVector::indicator(0);
    let mut telemetry = Vec::with_capacity(cfg.reward.max_steps);
    let mut weights = Vec::with_capacity(cfg.reward.max_steps);
    let mut total = 0.0;
    let mut crashed = false;
    while !env.is_done() {
        let arms = env.arms();
        let target = schedule.target_at(env.time()).unwrap_or(arms);
        let n = match controller {
            Controller::Blended(bank) => {
                if chi_arms != Some(arms) {
                    chi = solve_weights(&p, &arms)?;
                    chi_arms = Some(arms);
                }
                cc_action(&state, &chi, bank, p.n_max)?
            }
            Controller::Single(actor) => policy_action(actor, &state, p.n_max)?,
        };
        let r = env.step_with_arms(n, ramp_profile(arms, target, schedule.rate()))?;
        total += r.reward;
        crashed = r.crashed;
        state = r.obs;
        weights.push(chi);
        telemetry.push(env.telemetry(n, r.reward));
    }
    summarize(telemetry, weights, total, crashed, cfg.dt)
}

/// One deterministic episode of a single actor with fixed arms.
pub fn evaluate_policy(
    actor: &NetParams,
    arms: ArmLengths,
    cfg: &EnvConfig,
    reference: Box<dyn Reference>,
    seed: u64,
) -> Result<ScenarioResult> {
    let schedule = ArmCommandSchedule::fixed(arms, &cfg.quad)?;
    run_scenario(Controller::Single(actor), &schedule, cfg, reference, seed)
}

fn summarize(
    telemetry: Vec<TelemetryRow>,
    weights: Vec<WeightVector>,
    accumulated_reward: f64,
    crashed: bool,
    dt: f64,
) -> Result<ScenarioResult> {
    let speeds: Vec<RotorSpeeds> = telemetry.iter().map(|r| r.speeds).collect();
    let power = power_metric(&speeds, dt)?;
    let errors: Vec<f64> = telemetry.iter().map(|r| (r.pos - r.pos_ref).norm()).collect();
    let max_error = errors.iter().copied().fold(0.0, f64::max);
    let mean_error = errors.iter().sum::<f64>() / errors.len().max(1) as f64;
    Ok(ScenarioResult {
        telemetry,
        accumulated_reward,
        power,
        max_error,
        mean_error,
        crashed,
        weights,
    })
}
