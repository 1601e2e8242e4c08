use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{actor_loss, compute_gae, critic_loss, normalize_advantages, ReplayBuffer, RunningScale, TrainConfig, Transition};
use crate::dynamics::ArmLengths;
use crate::env::{Env, EnvConfig};
use crate::error::{Error, Result};
use crate::net::{clip_grad_norm, AdamState, MlpSpec, NetParams};
use crate::policy::{self, ActionSample, BetaParams};

/// Mean losses over every minibatch of one update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    /// Global step count when the episode ended.
    pub step: usize,
    pub episode: usize,
    /// Undiscounted, unscaled sum of rewards.
    pub reward: f64,
    pub length: usize,
    pub crashed: bool,
    /// Statistics of the most recent update (zeros before the first).
    pub last_update: UpdateStats,
}

pub const TRAIN_LOG_HEADER: &str = "step,episode,accumulated_reward,actor_loss,critic_loss,entropy,lr";

pub fn write_train_log<W: Write>(out: &mut W, episodes: &[EpisodeRecord]) -> std::io::Result<()> {
    writeln!(out, "{TRAIN_LOG_HEADER}")?;
    for e in episodes {
        let u = &e.last_update;
        writeln!(
            out,
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            e.step, e.episode, e.reward, u.actor_loss, u.critic_loss, u.entropy, u.lr_actor
        )?;
    }
    Ok(())
}

/// Networks, optimizers and rollout state for one arm-length mode.
#[derive(Debug, Clone)]
pub struct Trainer {
    cfg: TrainConfig,
    n_max: f64,
    pub actor: NetParams,
    pub critic: NetParams,
    pub actor_adam: AdamState,
    pub critic_adam: AdamState,
    pub buffer: ReplayBuffer,
    pub scale: RunningScale,
    rng: ChaCha8Rng,
}

fn to_beta(alpha: Vec<f64>, beta: Vec<f64>) -> BetaParams {
    BetaParams { alpha, beta }
}

impl Trainer {
    pub fn new(cfg: TrainConfig, n_max: f64, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor = NetParams::init_orthogonal(MlpSpec::actor(), rng.random());
        let critic = NetParams::init_orthogonal(MlpSpec::critic(), rng.random());
        Ok(Self {
            actor_adam: AdamState::new(actor.len(), cfg.adam_eps),
            critic_adam: AdamState::new(critic.len(), cfg.adam_eps),
            actor,
            critic,
            buffer: ReplayBuffer::new(cfg.buffer_size),
            scale: RunningScale::new(cfg.gamma),
            cfg,
            n_max,
            rng,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn next_seed(&mut self) -> u64 {
        self.rng.random()
    }

    /// Samples a stochastic action for state `s`.
    pub fn act(&mut self, s: &[f64; 12]) -> Result<ActionSample> {
        let (alpha, beta, _) = self.actor.beta_params(s)?;
        Ok(policy::sample(&to_beta(alpha, beta), self.n_max, &mut self.rng))
    }

    /// PPO update over the full buffer; empties it afterwards.
    ///
    /// `progress` in `[0, 1]` drives the linear learning-rate decay.
    pub fn update(&mut self, progress: f64) -> Result<UpdateStats> {
        if !self.buffer.is_full() {
            return Err(Error::InvalidArgument(format!(
                "update needs a full buffer ({} of {})",
                self.buffer.len(),
                self.buffer.capacity()
            )));
        }
        let cfg = self.cfg;
        let frac = 1.0 - progress.clamp(0.0, 1.0);
        let lr_a = cfg.lr_actor * frac;
        let lr_c = cfg.lr_critic * frac;

        let batch: Vec<Transition> = self.buffer.as_slice().to_vec();
        let states: Vec<f64> = batch.iter().flat_map(|t| t.s).collect();
        let next_states: Vec<f64> = batch.iter().flat_map(|t| t.s_next).collect();
        let values = self.critic.forward_batch(&states, batch.len())?.raw().to_vec();
        let next_values = self.critic.forward_batch(&next_states, batch.len())?.raw().to_vec();
        let gae = compute_gae(&batch, &values, &next_values, cfg.gamma, cfg.lambda)?;

        let mut order: Vec<usize> = (0..batch.len()).collect();
        let mut stats = UpdateStats {
            lr_actor: lr_a,
            lr_critic: lr_c,
            ..Default::default()
        };
        let mut minibatches = 0usize;
        let mut actor_grad = vec![0.0; self.actor.len()];
        let mut critic_grad = vec![0.0; self.critic.len()];
        for _ in 0..cfg.epochs {
            order.shuffle(&mut self.rng);
            for idx in order.chunks(cfg.minibatch_size) {
                let rows = idx.len();
                let mut adv: Vec<f64> = idx.iter().map(|&i| gae.advantages[i]).collect();
                normalize_advantages(&mut adv);
                let x: Vec<f64> = idx.iter().flat_map(|&i| batch[i].s).collect();

                let cache = self.actor.forward_batch(&x, rows)?;
                let (alpha, beta) = self.actor.beta_params_batch(&cache)?;
                let params: Vec<BetaParams> = alpha
                    .chunks(4)
                    .zip(beta.chunks(4))
                    .map(|(a, b)| to_beta(a.to_vec(), b.to_vec()))
                    .collect();
                let actions: Vec<[f64; 4]> = idx.iter().map(|&i| batch[i].a0).collect();
                let logp_old: Vec<f64> = idx.iter().map(|&i| batch[i].logp_old).collect();
                let al = actor_loss(&params, &actions, &logp_old, &adv, cfg.clip_eps, cfg.entropy_coef)?;
                let out_grad: Vec<f64> = al.grads.iter().flat_map(|(ga, gb)| ga.iter().chain(gb).copied()).collect();
                actor_grad.iter_mut().for_each(|g| *g = 0.0);
                self.actor.backward_batch(&cache, &out_grad, &mut actor_grad)?;
                clip_grad_norm(&mut actor_grad, cfg.grad_clip);
                self.actor_adam.step(self.actor.as_mut_slice(), &actor_grad, lr_a);

                let vcache = self.critic.forward_batch(&x, rows)?;
                let targets: Vec<f64> = idx.iter().map(|&i| gae.targets[i]).collect();
                let (cl, cgrad) = critic_loss(vcache.raw(), &targets)?;
                critic_grad.iter_mut().for_each(|g| *g = 0.0);
                self.critic.backward_batch(&vcache, &cgrad, &mut critic_grad)?;
                clip_grad_norm(&mut critic_grad, cfg.grad_clip);
                self.critic_adam.step(self.critic.as_mut_slice(), &critic_grad, lr_c);

                stats.actor_loss += al.loss;
                stats.critic_loss += cl;
                stats.entropy += al.mean_entropy;
                stats.clip_fraction += al.clip_fraction;
                minibatches += 1;
            }
        }
        let m = minibatches as f64;
        stats.actor_loss /= m;
        stats.critic_loss /= m;
        stats.entropy /= m;
        stats.clip_fraction /= m;
        self.buffer.clear();
        Ok(stats)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub actor: NetParams,
    pub critic: NetParams,
    pub actor_adam: AdamState,
    pub critic_adam: AdamState,
    /// Completed episodes in order; a trailing partial episode is dropped.
    pub episodes: Vec<EpisodeRecord>,
    pub updates: Vec<UpdateStats>,
    pub steps: usize,
}

/// Trains one actor/critic pair with the arms fixed at `arms`.
pub fn train(env_cfg: &EnvConfig, arms: ArmLengths, cfg: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    let mut env = Env::new(*env_cfg, arms)?;
    let mut trainer = Trainer::new(*cfg, env_cfg.quad.n_max, seed)?;
    let total = cfg.total_steps;
    let mut steps = 0usize;
    let mut episodes = Vec::new();
    let mut updates = Vec::new();
    let mut last = UpdateStats::default();

    while steps < total {
        let mut s = env.reset(trainer.next_seed()).to_array();
        trainer.scale.reset();
        let mut ep_reward = 0.0;
        let mut length = 0;
        loop {
            let act = trainer.act(&s)?;
            let out = env.step(act.speeds)?;
            let s_next = out.obs.to_array();
            let r = if cfg.reward_scaling {
                trainer.scale.scale(out.reward)
            } else {
                out.reward
            };
            let full = trainer.buffer.push(Transition {
                s,
                a0: [act.a0[0], act.a0[1], act.a0[2], act.a0[3]],
                logp_old: act.log_prob,
                r,
                s_next,
                crashed: out.crashed,
                timed_out: out.timed_out,
            });
            steps += 1;
            length += 1;
            ep_reward += out.reward;
            s = s_next;
            if full {
                let progress = (steps - cfg.buffer_size) as f64 / total as f64;
                last = trainer.update(progress)?;
                updates.push(last);
            }
            if out.done {
                episodes.push(EpisodeRecord {
                    step: steps,
                    episode: episodes.len(),
                    reward: ep_reward,
                    length,
                    crashed: out.crashed,
                    last_update: last,
                });
                break;
            }
            if steps >= total {
                break;
            }
        }
    }

    Ok(TrainOutcome {
        actor: trainer.actor,
        critic: trainer.critic,
        actor_adam: trainer.actor_adam,
        critic_adam: trainer.critic_adam,
        episodes,
        updates,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TrainConfig {
        TrainConfig {
            total_steps: 256,
            buffer_size: 128,
            epochs: 2,
            minibatch_size: 32,
            ..Default::default()
        }
    }

    #[test]
    fn one_buffer_one_update() {
        let cfg = TrainConfig {
            total_steps: 128,
            ..small()
        };
        let out = train(&EnvConfig::default(), ArmLengths::uniform(0.15), &cfg, 1).unwrap();
        assert_eq!(out.updates.len(), 1);
        assert_eq!(out.steps, 128);
    }

    #[test]
    fn update_count_is_floor() {
        let cfg = TrainConfig {
            total_steps: 400,
            ..small()
        };
        let out = train(&EnvConfig::default(), ArmLengths::uniform(0.15), &cfg, 2).unwrap();
        assert_eq!(out.updates.len(), 3);
        assert_eq!(out.steps, 400);
        assert!(out.episodes.iter().all(|e| e.reward.is_finite()));
    }

    #[test]
    fn learning_rate_decay() {
        let mut t = Trainer::new(small(), 1000.0, 3).unwrap();
        let mut env = Env::new(EnvConfig::default(), ArmLengths::uniform(0.15)).unwrap();
        let mut s = env.reset(0).to_array();
        while !t.buffer.is_full() {
            let a = t.act(&s).unwrap();
            let out = env.step(a.speeds).unwrap();
            t.buffer.push(Transition {
                s,
                a0: [a.a0[0], a.a0[1], a.a0[2], a.a0[3]],
                logp_old: a.log_prob,
                r: out.reward,
                s_next: out.obs.to_array(),
                crashed: out.crashed,
                timed_out: out.timed_out,
            });
            s = if out.done { env.reset(1).to_array() } else { out.obs.to_array() };
        }
        let stats = t.update(0.5).unwrap();
        assert!((stats.lr_actor - 1.5e-5).abs() < 1e-20);
        assert!((stats.lr_critic - 1.5e-5).abs() < 1e-20);
        assert!(t.buffer.is_empty());
        assert!(t.update(0.0).is_err());
    }

    #[test]
    fn deterministic_training() {
        let a = train(&EnvConfig::default(), ArmLengths::uniform(0.2), &small(), 9).unwrap();
        let b = train(&EnvConfig::default(), ArmLengths::uniform(0.2), &small(), 9).unwrap();
        assert_eq!(a.actor.as_slice(), b.actor.as_slice());
        assert_eq!(a.critic.as_slice(), b.critic.as_slice());
        assert_eq!(a.episodes, b.episodes);
        let c = train(&EnvConfig::default(), ArmLengths::uniform(0.2), &small(), 10).unwrap();
        assert_ne!(a.actor.as_slice(), c.actor.as_slice());
    }
}
