//! Episodic tracking environment around [`crate::dynamics`].

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{integrate_step, ArmLengths, ArmProfile, QuadParams, RigidState, RotorSpeeds};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefPoint {
    pub pos: Vector3<f64>,
    pub vel: Vector3<f64>,
    pub acc: Vector3<f64>,
}

/// A reference path with analytic derivatives over `[0, horizon]`.
pub trait Reference: Send + Sync {
    fn horizon(&self) -> f64;

    /// Evaluates the path without range checks.
    fn eval(&self, t: f64) -> RefPoint;

    fn point(&self, t: f64) -> Result<RefPoint> {
        if !(0.0..=self.horizon()).contains(&t) {
            return Err(Error::TimeOutOfRange(t));
        }
        Ok(self.eval(t))
    }
}

/// Figure-eight in the x-z plane, two laps in 20 s.
#[derive(Debug, Clone, Copy, Default)]
pub struct Figure8;

impl Reference for Figure8 {
    fn horizon(&self) -> f64 {
        20.0
    }

    fn eval(&self, t: f64) -> RefPoint {
        let w1 = PI / 5.0;
        let w2 = 2.0 * PI / 5.0;
        let (s1, c1) = (w1 * t).sin_cos();
        let (s2, c2) = (w2 * t).sin_cos();
        RefPoint {
            pos: Vector3::new(c1, 0.0, 0.5 * s2),
            vel: Vector3::new(-w1 * s1, 0.0, 0.5 * w2 * c2),
            acc: Vector3::new(-w1 * w1 * c1, 0.0, -0.5 * w2 * w2 * s2),
        }
    }
}

pub fn reference_point(t: f64) -> Result<RefPoint> {
    Figure8.point(t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardParams {
    pub c_pos: f64,
    pub c_att: f64,
    pub c_vel: f64,
    pub c_rate: f64,
    pub c_u: f64,
    /// Terminal position-error weight on a clean time-limit end.
    pub c_e: f64,
    /// Added on crash (negative).
    pub r_c: f64,
    /// Survival reward per step.
    pub r_t: f64,
    /// Crash distance (m).
    pub crash_distance: f64,
    /// Steps per episode.
    pub max_steps: usize,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            c_pos: 0.4,
            c_att: 0.02,
            c_vel: 0.03,
            c_rate: 0.05,
            c_u: 1e-4,
            c_e: 10.0,
            r_c: -150.0,
            r_t: 1.0,
            crash_distance: 5.0,
            max_steps: 200,
        }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<()> {
        let coeffs = [
            ("c_x_tilde", self.c_pos),
            ("c_varpi", self.c_att),
            ("c_x_tilde_dot", self.c_vel),
            ("c_varpi_dot", self.c_rate),
            ("c_u", self.c_u),
            ("c_e", self.c_e),
        ];
        for (key, v) in coeffs {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidValue {
                    key: key.into(),
                    reason: format!("must be finite and >= 0, got {v}"),
                });
            }
        }
        if !(self.crash_distance.is_finite() && self.crash_distance > 0.0) {
            return Err(Error::InvalidValue {
                key: "D".into(),
                reason: format!("must be > 0, got {}", self.crash_distance),
            });
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidValue {
                key: "T_e".into(),
                reason: "must be >= 1".into(),
            });
        }
        if !self.r_c.is_finite() || !self.r_t.is_finite() {
            return Err(Error::NonFinite("reward constants"));
        }
        Ok(())
    }
}

/// Per-step reward. A crash on the final step takes the crash branch.
pub fn reward_of(rp: &RewardParams, s: &RigidState, n: &RotorSpeeds, crashed: bool, timed_out: bool) -> f64 {
    let pos = s.pos_err.norm();
    let cost = rp.c_pos * pos
        + rp.c_att * s.att.norm()
        + rp.c_vel * s.vel_err.norm()
        + rp.c_rate * s.att_rate.norm()
        + rp.c_u * n.norm();
    let mut r = -cost + rp.r_t;
    if crashed {
        r += rp.r_c;
    } else if timed_out {
        r -= rp.c_e * pos;
    }
    r
}

/// Per-rotor time average of `(n / 100)^2` by the rectangle rule.
pub fn power_metric(log: &[RotorSpeeds], dt: f64) -> Result<[f64; 4]> {
    if log.is_empty() {
        return Err(Error::InvalidArgument("power metric needs a non-empty speed log".into()));
    }
    let horizon = dt * log.len() as f64;
    let mut p = [0.0; 4];
    for n in log {
        for (acc, x) in p.iter_mut().zip(n.0) {
            *acc += (x / 100.0).powi(2) * dt;
        }
    }
    Ok(p.map(|x| x / horizon))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvConfig {
    pub quad: QuadParams,
    pub reward: RewardParams,
    /// Control interval (s).
    pub dt: f64,
    pub substeps: usize,
    /// Half-width of the uniform initial position error (m).
    pub init_pos_scale: f64,
    /// Half-width of the uniform initial attitude (rad).
    pub init_att_scale: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            quad: QuadParams::default(),
            reward: RewardParams::default(),
            dt: 0.1,
            substeps: 10,
            init_pos_scale: 0.1,
            init_att_scale: 0.05,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.quad.validate()?;
        self.reward.validate()?;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidValue {
                key: "dt".into(),
                reason: format!("must be > 0, got {}", self.dt),
            });
        }
        if self.substeps == 0 {
            return Err(Error::InvalidValue {
                key: "substeps".into(),
                reason: "must be >= 1".into(),
            });
        }
        for (key, v) in [("init_pos_scale", self.init_pos_scale), ("init_att_scale", self.init_att_scale)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidValue {
                    key: key.into(),
                    reason: format!("must be >= 0, got {v}"),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub obs: RigidState,
    pub reward: f64,
    pub crashed: bool,
    pub timed_out: bool,
    pub done: bool,
}

/// One row of episode telemetry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TelemetryRow {
    pub t: f64,
    pub pos: Vector3<f64>,
    pub pos_ref: Vector3<f64>,
    pub att: Vector3<f64>,
    pub speeds: RotorSpeeds,
    pub arms: ArmLengths,
    pub reward: f64,
}

pub const TELEMETRY_HEADER: &str =
    "t,x,y,z,x_ref,y_ref,z_ref,phi,theta,psi,n1,n2,n3,n4,l1,l2,l3,l4,reward";

/// Writes telemetry as CSV with round-trippable 17-significant-digit values.
pub fn write_telemetry<W: Write>(out: &mut W, rows: &[TelemetryRow]) -> std::io::Result<()> {
    writeln!(out, "{TELEMETRY_HEADER}")?;
    for r in rows {
        let mut fields = Vec::with_capacity(19);
        fields.push(r.t);
        fields.extend(r.pos.iter());
        fields.extend(r.pos_ref.iter());
        fields.extend(r.att.iter());
        fields.extend(r.speeds.0);
        fields.extend(r.arms.0);
        fields.push(r.reward);
        let line: Vec<String> = fields.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

/// Mutable episode state: clock, flight state and current arm lengths.
pub struct Env {
    cfg: EnvConfig,
    reference: Box<dyn Reference>,
    state: RigidState,
    arms: ArmLengths,
    step: usize,
    done: bool,
}

impl Env {
    pub fn new(cfg: EnvConfig, arms: ArmLengths) -> Result<Self> {
        Self::with_reference(cfg, arms, Box::new(Figure8))
    }

    pub fn with_reference(cfg: EnvConfig, arms: ArmLengths, reference: Box<dyn Reference>) -> Result<Self> {
        cfg.validate()?;
        arms.check(&cfg.quad)?;
        let needed = cfg.dt * cfg.reward.max_steps as f64;
        if needed > reference.horizon() + 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "episode length {needed} s exceeds the reference horizon {} s",
                reference.horizon()
            )));
        }
        Ok(Self {
            cfg,
            reference,
            state: RigidState::default(),
            arms,
            step: 0,
            done: true,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn state(&self) -> &RigidState {
        &self.state
    }

    pub fn arms(&self) -> ArmLengths {
        self.arms
    }

    pub fn steps(&self) -> usize {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.cfg.dt
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn reference(&self) -> &dyn Reference {
        self.reference.as_ref()
    }

    /// Sets the arm lengths used from the next step on.
    pub fn set_arms(&mut self, arms: ArmLengths) -> Result<()> {
        arms.check(&self.cfg.quad)?;
        self.arms = arms;
        Ok(())
    }

    pub fn reset(&mut self, seed: u64) -> RigidState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |scale: f64| {
            if scale > 0.0 {
                rng.random_range(-scale..=scale)
            } else {
                0.0
            }
        };
        let (ps, asc) = (self.cfg.init_pos_scale, self.cfg.init_att_scale);
        self.state = RigidState {
            pos_err: Vector3::new(uniform(ps), uniform(ps), uniform(ps)),
            att: Vector3::new(uniform(asc), uniform(asc), uniform(asc)),
            vel_err: Vector3::zeros(),
            att_rate: Vector3::zeros(),
        };
        self.step = 0;
        self.done = false;
        self.state
    }

    /// Advances one control interval with the arms held fixed.
    pub fn step(&mut self, n: RotorSpeeds) -> Result<StepResult> {
        self.step_with_arms(n, ArmProfile::fixed(self.arms))
    }

    /// Advances one control interval while the arms follow `profile`.
    pub fn step_with_arms(&mut self, n: RotorSpeeds, profile: ArmProfile) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        profile.start.check(&self.cfg.quad)?;
        profile.end.check(&self.cfg.quad)?;
        let n = n.clamped(self.cfg.quad.n_max);
        let t0 = self.time();
        let reference = &self.reference;
        let ref_acc = |tau: f64| reference.eval(t0 + tau).acc;
        self.state = integrate_step(
            &self.cfg.quad,
            &self.state,
            &n,
            &profile,
            &ref_acc,
            self.cfg.dt,
            self.cfg.substeps,
        );
        self.arms = profile.at(self.cfg.dt).0;
        self.step += 1;

        let rp = &self.cfg.reward;
        let crashed = self.state.pos_err.norm() > rp.crash_distance;
        let timed_out = self.step >= rp.max_steps;
        let reward = reward_of(rp, &self.state, &n, crashed, timed_out);
        self.done = crashed || timed_out;
        Ok(StepResult {
            obs: self.state,
            reward,
            crashed,
            timed_out,
            done: self.done,
        })
    }

    /// Telemetry row describing the current state after a step.
    pub fn telemetry(&self, n: RotorSpeeds, reward: f64) -> TelemetryRow {
        let t = self.time();
        let r = self.reference.eval(t);
        TelemetryRow {
            t,
            pos: self.state.pos_err + r.pos,
            pos_ref: r.pos,
            att: self.state.att,
            speeds: n.clamped(self.cfg.quad.n_max),
            arms: self.arms,
            reward,
        }
    }
}
