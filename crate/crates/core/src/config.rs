//! Flat `key = value` run configuration with `#` comments.

use std::fmt::Write as _;
use std::path::Path;

use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::ppo::TrainConfig;
use crate::runtime::DEFAULT_ARM_RATE;

/// Everything a CLI run can be configured with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub train: TrainConfig,
    /// Arm slew rate limit (m/s).
    pub arm_rate: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: EnvConfig::default(),
            train: TrainConfig::default(),
            arm_rate: DEFAULT_ARM_RATE,
        }
    }
}

enum Value {
    Real(f64),
    Count(usize),
    Flag(bool),
}

/// Recognized keys, in dump order.
pub const KEYS: &[&str] = &[
    "m", "I_x0", "I_y0", "I_z0", "k_f", "k_m", "m_mot", "g", "l_min", "l_max", "n_max",
    "c_x_tilde", "c_varpi", "c_x_tilde_dot", "c_varpi_dot", "c_u", "c_e", "r_c", "r_t", "D", "T_e",
    "dt", "substeps", "init_pos_scale", "init_att_scale",
    "T", "N", "K", "minibatch", "c", "epsilon", "gamma", "lambda", "eta_a", "eta_c", "epsilon_adam",
    "grad_clip", "reward_scaling",
    "arm_rate",
];

impl RunConfig {
    fn get(&self, key: &str) -> Value {
        let (q, r, t) = (&self.env.quad, &self.env.reward, &self.train);
        match key {
            "m" => Value::Real(q.mass),
            "I_x0" => Value::Real(q.base_inertia[0]),
            "I_y0" => Value::Real(q.base_inertia[1]),
            "I_z0" => Value::Real(q.base_inertia[2]),
            "k_f" => Value::Real(q.k_f),
            "k_m" => Value::Real(q.k_m),
            "m_mot" => Value::Real(q.motor_mass),
            "g" => Value::Real(q.gravity),
            "l_min" => Value::Real(q.l_min),
            "l_max" => Value::Real(q.l_max),
            "n_max" => Value::Real(q.n_max),
            "c_x_tilde" => Value::Real(r.c_pos),
            "c_varpi" => Value::Real(r.c_att),
            "c_x_tilde_dot" => Value::Real(r.c_vel),
            "c_varpi_dot" => Value::Real(r.c_rate),
            "c_u" => Value::Real(r.c_u),
            "c_e" => Value::Real(r.c_e),
            "r_c" => Value::Real(r.r_c),
            "r_t" => Value::Real(r.r_t),
            "D" => Value::Real(r.crash_distance),
            "T_e" => Value::Count(r.max_steps),
            "dt" => Value::Real(self.env.dt),
            "substeps" => Value::Count(self.env.substeps),
            "init_pos_scale" => Value::Real(self.env.init_pos_scale),
            "init_att_scale" => Value::Real(self.env.init_att_scale),
            "T" => Value::Count(t.total_steps),
            "N" => Value::Count(t.buffer_size),
            "K" => Value::Count(t.epochs),
            "minibatch" => Value::Count(t.minibatch_size),
            "c" => Value::Real(t.entropy_coef),
            "epsilon" => Value::Real(t.clip_eps),
            "gamma" => Value::Real(t.gamma),
            "lambda" => Value::Real(t.lambda),
            "eta_a" => Value::Real(t.lr_actor),
            "eta_c" => Value::Real(t.lr_critic),
            "epsilon_adam" => Value::Real(t.adam_eps),
            "grad_clip" => Value::Real(t.grad_clip),
            "reward_scaling" => Value::Flag(t.reward_scaling),
            "arm_rate" => Value::Real(self.arm_rate),
            _ => unreachable!("key list and accessor table disagree on {key}"),
        }
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(Error::UnknownKey(key.into()));
        }
        let invalid = |reason: String| Error::InvalidValue { key: key.into(), reason };
        let parsed = match self.get(key) {
            Value::Real(_) => Value::Real(raw.parse().map_err(|_| invalid(format!("expected a number, got {raw:?}")))?),
            Value::Count(_) => Value::Count(raw.parse().map_err(|_| invalid(format!("expected a non-negative integer, got {raw:?}")))?),
            Value::Flag(_) => Value::Flag(raw.parse().map_err(|_| invalid(format!("expected true or false, got {raw:?}")))?),
        };
        let (q, r, t) = (&mut self.env.quad, &mut self.env.reward, &mut self.train);
        match (key, parsed) {
            ("m", Value::Real(v)) => q.mass = v,
            ("I_x0", Value::Real(v)) => q.base_inertia[0] = v,
            ("I_y0", Value::Real(v)) => q.base_inertia[1] = v,
            ("I_z0", Value::Real(v)) => q.base_inertia[2] = v,
            ("k_f", Value::Real(v)) => q.k_f = v,
            ("k_m", Value::Real(v)) => q.k_m = v,
            ("m_mot", Value::Real(v)) => q.motor_mass = v,
            ("g", Value::Real(v)) => q.gravity = v,
            ("l_min", Value::Real(v)) => q.l_min = v,
            ("l_max", Value::Real(v)) => q.l_max = v,
            ("n_max", Value::Real(v)) => q.n_max = v,
            ("c_x_tilde", Value::Real(v)) => r.c_pos = v,
            ("c_varpi", Value::Real(v)) => r.c_att = v,
            ("c_x_tilde_dot", Value::Real(v)) => r.c_vel = v,
            ("c_varpi_dot", Value::Real(v)) => r.c_rate = v,
            ("c_u", Value::Real(v)) => r.c_u = v,
            ("c_e", Value::Real(v)) => r.c_e = v,
            ("r_c", Value::Real(v)) => r.r_c = v,
            ("r_t", Value::Real(v)) => r.r_t = v,
            ("D", Value::Real(v)) => r.crash_distance = v,
            ("T_e", Value::Count(v)) => r.max_steps = v,
            ("dt", Value::Real(v)) => self.env.dt = v,
            ("substeps", Value::Count(v)) => self.env.substeps = v,
            ("init_pos_scale", Value::Real(v)) => self.env.init_pos_scale = v,
            ("init_att_scale", Value::Real(v)) => self.env.init_att_scale = v,
            ("T", Value::Count(v)) => t.total_steps = v,
            ("N", Value::Count(v)) => t.buffer_size = v,
            ("K", Value::Count(v)) => t.epochs = v,
            ("minibatch", Value::Count(v)) => t.minibatch_size = v,
            ("c", Value::Real(v)) => t.entropy_coef = v,
            ("epsilon", Value::Real(v)) => t.clip_eps = v,
            ("gamma", Value::Real(v)) => t.gamma = v,
            ("lambda", Value::Real(v)) => t.lambda = v,
            ("eta_a", Value::Real(v)) => t.lr_actor = v,
            ("eta_c", Value::Real(v)) => t.lr_critic = v,
            ("epsilon_adam", Value::Real(v)) => t.adam_eps = v,
            ("grad_clip", Value::Real(v)) => t.grad_clip = v,
            ("reward_scaling", Value::Flag(v)) => t.reward_scaling = v,
            ("arm_rate", Value::Real(v)) => self.arm_rate = v,
            _ => unreachable!("value kind mismatch for {key}"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.train.validate()?;
        if !(self.arm_rate.is_finite() && self.arm_rate > 0.0) {
            return Err(Error::InvalidValue {
                key: "arm_rate".into(),
                reason: format!("must be > 0, got {}", self.arm_rate),
            });
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of the defaults and validates.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `key = value` lines without validating.
    pub fn apply(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::ConfigSyntax {
                line: i + 1,
                reason: format!("expected `key = value`, got {line:?}"),
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Every key with its current value; parses back to `self`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = match self.get(key) {
                Value::Real(v) => writeln!(out, "{key} = {v:?}"),
                Value::Count(v) => writeln!(out, "{key} = {v}"),
                Value::Flag(v) => writeln!(out, "{key} = {v}"),
            };
        }
        out
    }
}
