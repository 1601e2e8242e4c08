//! Clipped-surrogate PPO with a Beta actor and a separate value network.

mod gae;
mod loss;
mod trainer;

pub use gae::{compute_gae, Advantages};
pub use loss::{actor_loss, critic_loss, normalize_advantages, ActorLoss};
pub use trainer::{train, EpisodeRecord, TrainOutcome, Trainer, UpdateStats, TRAIN_LOG_HEADER, write_train_log};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    /// Total environment steps.
    pub total_steps: usize,
    /// Replay buffer capacity; one update per full buffer.
    pub buffer_size: usize,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub entropy_coef: f64,
    pub clip_eps: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub adam_eps: f64,
    pub grad_clip: f64,
    pub reward_scaling: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_steps: 50_000_000,
            buffer_size: 2048,
            epochs: 10,
            minibatch_size: 64,
            entropy_coef: 0.01,
            clip_eps: 0.2,
            gamma: 0.99,
            lambda: 0.95,
            lr_actor: 3e-5,
            lr_critic: 3e-5,
            adam_eps: 1e-5,
            grad_clip: 0.5,
            reward_scaling: true,
        }
    }
}

impl TrainConfig {
    /// Budget that fits on one CPU core in about a minute: 3e5 steps with
    /// learning rates raised to 1e-3 so that hovering is learned in time.
    pub fn desk_scale() -> Self {
        Self {
            total_steps: 300_000,
            lr_actor: 1e-3,
            lr_critic: 1e-3,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: String| Err(Error::InvalidValue { key: key.into(), reason });
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma", format!("must lie in (0, 1), got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda", format!("must lie in [0, 1], got {}", self.lambda));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps.is_finite()) {
            return bad("epsilon", format!("must be > 0, got {}", self.clip_eps));
        }
        for (key, v) in [("T", self.total_steps), ("N", self.buffer_size), ("K", self.epochs), ("minibatch", self.minibatch_size)] {
            if v == 0 {
                return bad(key, "must be >= 1".into());
            }
        }
        if self.minibatch_size > self.buffer_size {
            return bad("minibatch", format!("exceeds buffer size {}", self.buffer_size));
        }
        for (key, v) in [
            ("eta_a", self.lr_actor),
            ("eta_c", self.lr_critic),
            ("epsilon_adam", self.adam_eps),
            ("grad_clip", self.grad_clip),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(key, format!("must be > 0, got {v}"));
            }
        }
        if !(self.entropy_coef.is_finite() && self.entropy_coef >= 0.0) {
            return bad("c", format!("must be >= 0, got {}", self.entropy_coef));
        }
        Ok(())
    }
}

/// One interaction record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub s: [f64; 12],
    pub a0: [f64; 4],
    pub logp_old: f64,
    pub r: f64,
    pub s_next: [f64; 12],
    /// Episode ended by leaving the crash ball.
    pub crashed: bool,
    /// Episode ended by the step limit.
    pub timed_out: bool,
}

impl Transition {
    pub fn done(&self) -> bool {
        self.crashed || self.timed_out
    }
}

/// Fixed-capacity rollout storage, emptied after every update.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: Vec::with_capacity(capacity),
        }
    }

    /// Stores `t`; returns whether the buffer is now full.
    ///
    /// # Panics
    ///
    /// If the buffer was already full.
    pub fn push(&mut self, t: Transition) -> bool {
        assert!(!self.is_full(), "replay buffer overflow; update before pushing");
        self.items.push(t);
        self.is_full()
    }

    pub fn is_full(&self) -> bool {
        self.items.len() >= self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn as_slice(&self) -> &[Transition] {
        &self.items
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }
}

/// Reward scaling by the running standard deviation of the discounted
/// return accumulator (no mean subtraction).
#[derive(Debug, Clone, PartialEq)]
pub struct RunningScale {
    gamma: f64,
    ret: f64,
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningScale {
    pub fn new(gamma: f64) -> Self {
        Self {
            gamma,
            ret: 0.0,
            count: 0,
            mean: 0.0,
            m2: 0.0,
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn std(&self) -> f64 {
        match self.count {
            0 => 1.0,
            1 => self.mean.abs(),
            n => (self.m2 / n as f64).sqrt(),
        }
    }

    /// Folds `r` into the return accumulator and returns the scaled reward.
    pub fn scale(&mut self, r: f64) -> f64 {
        self.ret = self.gamma * self.ret + r;
        self.count += 1;
        let delta = self.ret - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (self.ret - self.mean);
        let std = self.std();
        if std > 1e-8 {
            r / std
        } else {
            r
        }
    }

    /// Clears the return accumulator at an episode boundary.
    pub fn reset(&mut self) {
        self.ret = 0.0;
    }
}
