//! Python bindings: dynamics, the tracking environment, weight solving,
//! training and policy evaluation.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use ccdrl_core::ccomb::{self, WeightVector, MODES};
use ccdrl_core::checkpoint::{load_bank, Checkpoint, CheckpointMeta};
use ccdrl_core::dynamics::{self, ArmLengths, ArmProfile, QuadParams, RigidState, RotorSpeeds};
use ccdrl_core::env::{self as cenv, EnvConfig, Figure8, Reference};
use ccdrl_core::net::NetParams;
use ccdrl_core::ppo::{self, TrainConfig};
use ccdrl_core::runtime::{self, ArmCommandSchedule, Controller, ScenarioResult};

fn err(e: ccdrl_core::Error) -> PyErr {
    PyValueError::new_err(format!("{}: {e}", e.kind()))
}

fn state_of(v: [f64; 12]) -> RigidState {
    RigidState::from_array(&v)
}

/// Equal rotor speed (rpm) balancing gravity.
#[pyfunction]
fn hover_speed() -> f64 {
    QuadParams::default().hover_speed()
}

/// Time derivative of the 12-state with fixed arms and no reference motion.
#[pyfunction]
fn state_derivative(state: [f64; 12], speeds: [f64; 4], arms: [f64; 4]) -> [f64; 12] {
    let p = QuadParams::default();
    dynamics::state_derivative(
        &p,
        &state_of(state),
        &RotorSpeeds(speeds),
        &ArmLengths(arms),
        &[0.0; 4],
        &Default::default(),
    )
}

/// One zero-order-hold step of `dt` seconds tracking the figure-8 from `t0`.
#[pyfunction]
#[pyo3(signature = (state, speeds, arms, t0 = 0.0, dt = 0.1, substeps = 10))]
fn integrate_step(state: [f64; 12], speeds: [f64; 4], arms: [f64; 4], t0: f64, dt: f64, substeps: usize) -> PyResult<[f64; 12]> {
    if !(dt > 0.0) || substeps == 0 {
        return Err(PyValueError::new_err("dt must be > 0 and substeps >= 1"));
    }
    let p = QuadParams::default();
    let arms = ArmLengths(arms);
    arms.check(&p).map_err(err)?;
    let acc = |tau: f64| Figure8.eval(t0 + tau).acc;
    let s = dynamics::integrate_step(&p, &state_of(state), &RotorSpeeds(speeds), &ArmProfile::fixed(arms), &acc, dt, substeps);
    Ok(s.to_array())
}

/// Per-step reward with the default coefficients.
#[pyfunction]
fn reward(state: [f64; 12], speeds: [f64; 4], crashed: bool, timed_out: bool) -> f64 {
    cenv::reward_of(&Default::default(), &state_of(state), &RotorSpeeds(speeds), crashed, timed_out)
}

#[pyclass]
struct Env {
    inner: cenv::Env,
}

#[pymethods]
impl Env {
    #[new]
    fn new(arms: [f64; 4]) -> PyResult<Self> {
        let inner = cenv::Env::new(EnvConfig::default(), ArmLengths(arms)).map_err(err)?;
        Ok(Self { inner })
    }

    fn reset(&mut self, seed: u64) -> [f64; 12] {
        self.inner.reset(seed).to_array()
    }

    /// Returns `(obs, reward, crashed, timed_out, done)`.
    fn step(&mut self, speeds: [f64; 4]) -> PyResult<([f64; 12], f64, bool, bool, bool)> {
        let r = self.inner.step(RotorSpeeds(speeds)).map_err(err)?;
        Ok((r.obs.to_array(), r.reward, r.crashed, r.timed_out, r.done))
    }

    #[getter]
    fn time(&self) -> f64 {
        self.inner.time()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps()
    }

    #[getter]
    fn done(&self) -> bool {
        self.inner.is_done()
    }
}

/// Optimal sparse vertex weights, indexed by mode.
#[pyfunction]
fn solve_weights(arms: [f64; 4]) -> PyResult<Vec<f64>> {
    let w = ccomb::solve_weights(&QuadParams::default(), &ArmLengths(arms)).map_err(err)?;
    Ok(w.0.to_vec())
}

/// Restarted SQP weights; returns `(weights, restarts)`.
#[pyfunction]
#[pyo3(signature = (arms, seed = 0))]
fn solve_weights_sqp(arms: [f64; 4], seed: u64) -> PyResult<(Vec<f64>, usize)> {
    let (w, stats) = ccomb::solve_weights_sqp(&QuadParams::default(), &ArmLengths(arms), seed).map_err(err)?;
    Ok((w.0.to_vec(), stats.restarts))
}

/// `(sum_violation, reconstruction_error, min_weight, support)`.
#[pyfunction]
fn verify_weights(weights: [f64; MODES], arms: [f64; 4]) -> (f64, f64, f64, usize) {
    let r = ccomb::verify_weights(&QuadParams::default(), &WeightVector(weights), &ArmLengths(arms));
    (r.sum_violation, r.reconstruction_error, r.min_weight, r.support)
}

/// A trained actor network.
#[pyclass]
struct Policy {
    actor: NetParams,
    arms: [f64; 4],
}

#[pymethods]
impl Policy {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let c = Checkpoint::load(&path).map_err(err)?;
        Ok(Self { actor: c.actor, arms: c.meta.arms.0 })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        let c = Checkpoint {
            actor: self.actor.clone(),
            actor_adam: None,
            critic: None,
            critic_adam: None,
            meta: CheckpointMeta { mode: None, arms: ArmLengths(self.arms), steps: 0, seed: 0 },
        };
        c.save(&path).map_err(err)
    }

    /// Beta parameters `(alpha, beta)` for a state.
    fn beta_params(&self, state: [f64; 12]) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let (a, b, _) = self.actor.beta_params(&state).map_err(err)?;
        Ok((a, b))
    }

    /// Deterministic rotor speeds (rpm) for a state.
    fn mean_action(&self, state: [f64; 12]) -> PyResult<[f64; 4]> {
        let n = runtime::policy_action(&self.actor, &state_of(state), QuadParams::default().n_max).map_err(err)?;
        Ok(n.0)
    }

    #[getter]
    fn arms(&self) -> [f64; 4] {
        self.arms
    }
}

#[pyclass(get_all)]
struct Scenario {
    steps: usize,
    crashed: bool,
    accumulated_reward: f64,
    power: [f64; 4],
    max_error: f64,
    mean_error: f64,
    rewards: Vec<f64>,
}

impl From<ScenarioResult> for Scenario {
    fn from(r: ScenarioResult) -> Self {
        Self {
            steps: r.steps(),
            crashed: r.crashed,
            accumulated_reward: r.accumulated_reward,
            power: r.power,
            max_error: r.max_error,
            mean_error: r.mean_error,
            rewards: r.telemetry.iter().map(|t| t.reward).collect(),
        }
    }
}

/// Trains a policy with fixed arms. Returns `(policy, episode_rewards)`.
#[pyfunction]
#[pyo3(signature = (arms, steps, seed = 0, lr = 1e-3))]
fn train(py: Python<'_>, arms: [f64; 4], steps: usize, seed: u64, lr: f64) -> PyResult<(Policy, Vec<f64>)> {
    let cfg = TrainConfig { total_steps: steps, lr_actor: lr, lr_critic: lr, ..TrainConfig::default() };
    let out = py
        .detach(|| ppo::train(&EnvConfig::default(), ArmLengths(arms), &cfg, seed))
        .map_err(err)?;
    let rewards = out.episodes.iter().map(|e| e.reward).collect();
    Ok((Policy { actor: out.actor, arms }, rewards))
}

/// One deterministic episode of `policy` with fixed arms.
#[pyfunction]
#[pyo3(signature = (policy, arms = None, seed = 0))]
fn evaluate(policy: &Policy, arms: Option<[f64; 4]>, seed: u64) -> PyResult<Scenario> {
    let arms = ArmLengths(arms.unwrap_or(policy.arms));
    let r = runtime::evaluate_policy(&policy.actor, arms, &EnvConfig::default(), Box::new(Figure8), seed).map_err(err)?;
    Ok(r.into())
}

/// Blended flight of a checkpoint bank directory along a schedule file.
#[pyfunction]
#[pyo3(signature = (bank_dir, schedule_path, seed = 0))]
fn run_scenario(bank_dir: PathBuf, schedule_path: PathBuf, seed: u64) -> PyResult<Scenario> {
    let cfg = EnvConfig::default();
    let bank = load_bank(&bank_dir).map_err(err)?;
    let schedule = ArmCommandSchedule::load(&schedule_path, runtime::DEFAULT_ARM_RATE, &cfg.quad).map_err(err)?;
    let r = runtime::run_scenario(Controller::Blended(&bank), &schedule, &cfg, Box::new(Figure8), seed).map_err(err)?;
    Ok(r.into())
}

#[pymodule]
fn ccdrl(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(hover_speed, m)?)?;
    m.add_function(wrap_pyfunction!(state_derivative, m)?)?;
    m.add_function(wrap_pyfunction!(integrate_step, m)?)?;
    m.add_function(wrap_pyfunction!(reward, m)?)?;
    m.add_function(wrap_pyfunction!(solve_weights, m)?)?;
    m.add_function(wrap_pyfunction!(solve_weights_sqp, m)?)?;
    m.add_function(wrap_pyfunction!(verify_weights, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_class::<Env>()?;
    m.add_class::<Policy>()?;
    m.add_class::<Scenario>()?;
    Ok(())
}
