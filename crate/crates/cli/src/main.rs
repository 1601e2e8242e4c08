use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};

use ccdrl_core::ccomb::{mode_label, solve_weights, solve_weights_sqp, verify_weights, VertexSet, MODES};
use ccdrl_core::checkpoint::{bank_file, load_bank, Checkpoint, CheckpointMeta};
use ccdrl_core::config::RunConfig;
use ccdrl_core::dynamics::ArmLengths;
use ccdrl_core::env::{write_telemetry, Figure8};
use ccdrl_core::ppo::{train, write_train_log};
use ccdrl_core::runtime::{evaluate_policy, run_scenario, ArmCommandSchedule, Controller, ScenarioResult};
use ccdrl_core::{Error, Result};

#[derive(Parser)]
#[command(name = "ccdrl", version, about = "Morphing-quadrotor flight control with blended per-mode policies")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train PPO policies for one mode, custom arm lengths, or all 16 modes.
    Train(TrainArgs),
    /// Sparse convex-combination weights for target arm lengths.
    SolveWeights(SolveArgs),
    /// Fly a morphing schedule with a full policy bank.
    RunScenario(ScenarioArgs),
    /// Deterministic episode of one checkpoint with fixed arms.
    Eval(EvalArgs),
    /// Print the effective configuration.
    PrintConfig(ConfigArg),
}

#[derive(Args)]
struct ConfigArg {
    /// `key = value` configuration file; missing keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Mode number 1..=16.
    #[arg(long, conflicts_with_all = ["arms", "all_modes"])]
    mode: Option<usize>,
    /// Four arm lengths in meters.
    #[arg(long, num_args = 4, value_names = ["L1", "L2", "L3", "L4"], conflicts_with = "all_modes")]
    arms: Option<Vec<f64>>,
    #[arg(long)]
    all_modes: bool,
    /// Worker threads for --all-modes.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    /// Overrides the configured total step count.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(num_args = 4, value_names = ["L1", "L2", "L3", "L4"], allow_negative_numbers = true)]
    lengths: Vec<f64>,
    /// Also run the restarted SQP solver and report its gap.
    #[arg(long)]
    sqp: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Directory holding mode_01.ckpt .. mode_16.ckpt.
    #[arg(long)]
    bank: PathBuf,
    #[arg(long)]
    schedule: PathBuf,
    /// Fly with this mode's policy alone instead of the blend.
    #[arg(long)]
    single: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Telemetry CSV path.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Arm lengths; defaults to those the checkpoint was trained with.
    #[arg(long, num_args = 4, value_names = ["L1", "L2", "L3", "L4"])]
    arms: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArg,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = match cli.cmd {
        Cmd::Train(a) => cmd_train(a),
        Cmd::SolveWeights(a) => cmd_solve(a),
        Cmd::RunScenario(a) => cmd_scenario(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::PrintConfig(a) => load_config(&a).map(|c| c.to_text()),
    };
    match out {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error[{}]: {}", e.kind(), e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}

fn load_config(a: &ConfigArg) -> Result<RunConfig> {
    match &a.config {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn arms_of(v: &[f64], cfg: &RunConfig) -> Result<ArmLengths> {
    let l: [f64; 4] = v
        .try_into()
        .map_err(|_| Error::InvalidArgument(format!("expected 4 arm lengths, got {}", v.len())))?;
    let l = ArmLengths(l);
    l.check(&cfg.env.quad)?;
    Ok(l)
}

fn mode_index(mode: usize) -> Result<usize> {
    if (1..=MODES).contains(&mode) {
        Ok(mode - 1)
    } else {
        Err(Error::InvalidArgument(format!("mode must be in 1..={MODES}, got {mode}")))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::Io { path: path.into(), source: e })
}

fn write_csv(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::Io { path: path.into(), source: e })
}

struct Job {
    mode: Option<usize>,
    arms: ArmLengths,
    stem: String,
}

fn cmd_train(a: TrainArgs) -> Result<String> {
    let mut cfg = load_config(&a.config)?;
    if let Some(t) = a.steps {
        cfg.train.total_steps = t;
    }
    cfg.validate()?;
    let vs = VertexSet::new(&cfg.env.quad);
    let jobs: Vec<Job> = if a.all_modes {
        (0..MODES)
            .map(|i| Job { mode: Some(i), arms: vs.vertex(i), stem: format!("mode_{:02}", i + 1) })
            .collect()
    } else if let Some(m) = a.mode {
        let i = mode_index(m)?;
        vec![Job { mode: Some(i), arms: vs.vertex(i), stem: format!("mode_{:02}", i + 1) }]
    } else if let Some(l) = &a.arms {
        vec![Job { mode: None, arms: arms_of(l, &cfg)?, stem: "custom".into() }]
    } else {
        return Err(Error::InvalidArgument("train needs --mode, --arms or --all-modes".into()));
    };
    if a.parallel == 0 {
        return Err(Error::InvalidArgument("--parallel must be >= 1".into()));
    }
    std::fs::create_dir_all(&a.out).map_err(|e| Error::Io { path: a.out.clone(), source: e })?;

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<String>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..a.parallel.min(jobs.len()) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = jobs.get(k) else { break };
                let r = train_one(job, &cfg, a.seed, &a.out);
                results.lock().expect("no worker panicked")[k] = Some(r);
            });
        }
    });
    let mut out = String::new();
    for r in results.into_inner().expect("no worker panicked") {
        out.push_str(&r.expect("every job ran")?);
    }
    Ok(out)
}

fn train_one(job: &Job, cfg: &RunConfig, seed: u64, dir: &Path) -> Result<String> {
    let outcome = train(&cfg.env, job.arms, &cfg.train, seed)?;
    let ckpt = Checkpoint {
        actor: outcome.actor,
        actor_adam: Some(outcome.actor_adam),
        critic: Some(outcome.critic),
        critic_adam: Some(outcome.critic_adam),
        meta: CheckpointMeta { mode: job.mode, arms: job.arms, steps: outcome.steps, seed },
    };
    ckpt.save(&dir.join(format!("{}.ckpt", job.stem)))?;
    write_csv(&dir.join(format!("{}_train.csv", job.stem)), |w| write_train_log(w, &outcome.episodes))?;
    let eval = evaluate_policy(&ckpt.actor, job.arms, &cfg.env, Box::new(Figure8), seed)?;
    let eps = &outcome.episodes;
    let mean = |s: &[ccdrl_core::ppo::EpisodeRecord]| s.iter().map(|e| e.reward).sum::<f64>() / s.len().max(1) as f64;
    let k = eps.len().min(10);
    Ok(format!(
        "{} steps={} episodes={} first10_reward={:.4} last10_reward={:.4} eval_reward={:.4} eval_crashed={}\n",
        job.stem,
        outcome.steps,
        eps.len(),
        mean(&eps[..k]),
        mean(&eps[eps.len() - k..]),
        eval.accumulated_reward,
        eval.crashed
    ))
}

fn cmd_solve(a: SolveArgs) -> Result<String> {
    let cfg = load_config(&a.config)?;
    let p = cfg.env.quad;
    let l = arms_of(&a.lengths, &cfg)?;
    let chi = solve_weights(&p, &l)?;
    let rep = verify_weights(&p, &chi, &l);
    let mut out = String::new();
    for (i, w) in chi.0.iter().enumerate() {
        out.push_str(&format!("mode {:2} {} {:.15}\n", i + 1, mode_label(i), w));
    }
    out.push_str(&format!("support {}\n", rep.support));
    out.push_str(&format!("objective {}\n", chi.objective()));
    out.push_str(&format!("sum_violation {:e}\n", rep.sum_violation));
    out.push_str(&format!("reconstruction_error {:e}\n", rep.reconstruction_error));
    out.push_str(&format!("min_weight {:e}\n", rep.min_weight));
    if a.sqp {
        let (w, stats) = solve_weights_sqp(&p, &l, a.seed)?;
        let r = verify_weights(&p, &w, &l);
        out.push_str(&format!("sqp_objective {}\n", w.objective()));
        out.push_str(&format!("sqp_gap {:e}\n", chi.objective() - w.objective()));
        out.push_str(&format!("sqp_support {}\n", r.support));
        out.push_str(&format!("sqp_restarts {}\n", stats.restarts));
        out.push_str(&format!("sqp_reconstruction_error {:e}\n", r.reconstruction_error));
    }
    Ok(out)
}

fn summary(res: &ScenarioResult, out: &Path) -> Result<String> {
    write_csv(out, |w| write_telemetry(w, &res.telemetry))?;
    let p = res.power;
    Ok(format!(
        "steps {}\ncrashed {}\naccumulated_reward {}\npower {} {} {} {}\nmax_error {}\nmean_error {}\n",
        res.steps(),
        res.crashed,
        res.accumulated_reward,
        p[0],
        p[1],
        p[2],
        p[3],
        res.max_error,
        res.mean_error
    ))
}

fn cmd_scenario(a: ScenarioArgs) -> Result<String> {
    let cfg = load_config(&a.config)?;
    let schedule = ArmCommandSchedule::load(&a.schedule, cfg.arm_rate, &cfg.env.quad)?;
    let res = match a.single {
        Some(m) => {
            let i = mode_index(m)?;
            let path = bank_file(&a.bank, i);
            if !path.is_file() {
                return Err(Error::MissingModes(vec![m]));
            }
            let actor = Checkpoint::load(&path)?.actor;
            run_scenario(Controller::Single(&actor), &schedule, &cfg.env, Box::new(Figure8), a.seed)?
        }
        None => {
            let bank = load_bank(&a.bank)?;
            run_scenario(Controller::Blended(&bank), &schedule, &cfg.env, Box::new(Figure8), a.seed)?
        }
    };
    summary(&res, &a.out)
}

fn cmd_eval(a: EvalArgs) -> Result<String> {
    let cfg = load_config(&a.config)?;
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let arms = match &a.arms {
        Some(l) => arms_of(l, &cfg)?,
        None => ckpt.meta.arms,
    };
    let res = evaluate_policy(&ckpt.actor, arms, &cfg.env, Box::new(Figure8), a.seed)?;
    match &a.out {
        Some(p) => summary(&res, p),
        None => Ok(format!(
            "steps {}\ncrashed {}\naccumulated_reward {}\n",
            res.steps(),
            res.crashed,
            res.accumulated_reward
        )),
    }
}
