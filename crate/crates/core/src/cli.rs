//! Experiment configuration and the `capo-lab` subcommands.
//!
//! Configs are INI files with three sections. Every key is optional and
//! falls back to [`ExperimentConfig::default`]; unknown sections or keys are
//! rejected.
//!
//! ```ini
//! [experiment]
//! name = chain
//! seeds = 0, 1, 2
//! iters = 1000
//!
//! [env]
//! kind = chain        ; bandit | chain | random
//! gamma = 0.99
//!
//! [algo]
//! clip = 50
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, Subcommand};
use ini::Ini;
use rayon::prelude::*;

use crate::baselines::{offpac_step, run_bandit_study, BanditAlgorithm, BanditStudySpec, StudyThresholds};
use crate::capo::{
    batch_capo_weights, batch_rate_constant, capo_one_step_improvement, capo_update, cyclic_rate_constant,
    fixed_lr_one_step_improvement, predicted_weight_delta, randomized_rate_constant, train, CoordinateBatch,
    CriticMode, EpsSchedule, Generator, StepRule, TrainConfig,
};
use crate::error::{Error, Result};
use crate::exact::{dot, optimal_values, perf_difference, policy_eval, values_and_advantages, visitation_from};
use crate::mdp::{make_bandit, make_chain, make_random_mdp, TabularMdp};
use crate::ncapo::{train_ncapo, NcapoConfig, NcapoMode, ReplaySettings};
use crate::policy::{Sign, SoftmaxTable, DEFAULT_CLIP};
use crate::rng::{stream_rng, Stream};
use crate::table::{fmt_f64, StateActionTable};

#[derive(Debug, Parser)]
#[command(name = "capo-lab", about = "Tabular CAPO experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// INI config file; built-in defaults are used when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for CSV files (overrides `experiment.out_dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Comma-separated seeds (overrides `experiment.seeds`).
    #[arg(long, global = true)]
    pub seeds: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Check the config and build its environment.
    Validate,
    /// On-policy CAPO / SPG bandit study.
    BanditStudy,
    /// CAPO on a random MDP with the rate bound checked at every iteration.
    RateCheck,
    /// Cyclic CAPO, Batch CAPO and Off-PAC on the Chain.
    ChainCompare,
    /// Neural CAPO on the Chain.
    NcapoChain,
    /// Closed-form oracles against direct recomputation.
    OracleSuite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    Bandit,
    Chain,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    Cyclic,
    Batch,
    Randomized,
    EpsGreedy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub kind: EnvKind,
    pub rewards: Vec<f64>,
    pub gamma: f64,
    pub chain_n: usize,
    pub step_reward: f64,
    pub goal_reward: f64,
    pub n_states: usize,
    pub n_actions: usize,
    pub mdp_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgoConfig {
    /// Bandit algorithm: `oncapo`, `oncapo_fixed`, `spg`, `is_spg`, `offcapo`.
    pub algorithm: String,
    pub generator: GeneratorKind,
    pub theta0: Option<Vec<f64>>,
    pub beta: f64,
    pub zeta: f64,
    pub eta: f64,
    pub clip: f64,
    pub lambda: f64,
    pub kappa: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay: usize,
    pub rollout_len: usize,
    pub rollouts_per_iter: usize,
    pub capacity: usize,
    pub hidden: usize,
    pub lr: f64,
    pub grad_steps: usize,
    pub batch_size: usize,
    pub tau_q: f64,
    pub tau_theta: f64,
    pub reverse_kl: bool,
    pub ncapo_mode: String,
    pub stuck_threshold: f64,
    pub converged_threshold: f64,
    pub curve_stride: usize,
    pub offpac_eta: f64,
    pub offpac_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub seeds: Vec<u64>,
    pub iters: usize,
    pub out_dir: PathBuf,
    pub env: EnvConfig,
    pub algo: AlgoConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "capo".into(),
            seeds: vec![0, 1, 2],
            iters: 1000,
            out_dir: PathBuf::from("out"),
            env: EnvConfig {
                kind: EnvKind::Chain,
                rewards: vec![1.0, 0.99, -1.0],
                gamma: 0.99,
                chain_n: 10,
                step_reward: 0.1,
                goal_reward: 100.0,
                n_states: 3,
                n_actions: 2,
                mdp_seed: 1,
            },
            algo: AlgoConfig {
                algorithm: "oncapo_fixed".into(),
                generator: GeneratorKind::Cyclic,
                theta0: None,
                beta: 0.2,
                zeta: 0.25,
                eta: 1.0,
                clip: DEFAULT_CLIP,
                lambda: 1.0,
                kappa: 0.1,
                eps_start: 0.5,
                eps_end: 0.1,
                eps_decay: 200,
                rollout_len: 20,
                rollouts_per_iter: 4,
                capacity: 6400,
                hidden: 256,
                lr: 0.001,
                grad_steps: 30,
                batch_size: 16,
                tau_q: 0.05,
                tau_theta: 1.0,
                reverse_kl: false,
                ncapo_mode: "exact_adv".into(),
                stuck_threshold: 0.99,
                converged_threshold: 0.99,
                curve_stride: 100,
                offpac_eta: 0.001,
                offpac_samples: 16,
            },
        }
    }
}

const EXPERIMENT_KEYS: &[&str] = &["name", "seeds", "iters", "out_dir"];
const ENV_KEYS: &[&str] = &[
    "kind", "rewards", "gamma", "chain_n", "step_reward", "goal_reward", "n_states", "n_actions", "mdp_seed",
];
const ALGO_KEYS: &[&str] = &[
    "algorithm",
    "generator",
    "theta0",
    "beta",
    "zeta",
    "eta",
    "clip",
    "lambda",
    "kappa",
    "eps_start",
    "eps_end",
    "eps_decay",
    "rollout_len",
    "rollouts_per_iter",
    "capacity",
    "hidden",
    "lr",
    "grad_steps",
    "batch_size",
    "tau_q",
    "tau_theta",
    "reverse_kl",
    "ncapo_mode",
    "stuck_threshold",
    "converged_threshold",
    "curve_stride",
    "offpac_eta",
    "offpac_samples",
];

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn parse_value<T: FromStr>(section: &str, key: &str, raw: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| config_err(format!("{section}.{key}: cannot parse {raw:?}")))
}

fn parse_list<T: FromStr>(section: &str, key: &str, raw: &str) -> Result<Vec<T>> {
    raw.split(',')
        .filter(|x| !x.trim().is_empty())
        .map(|x| parse_value(section, key, x))
        .collect()
}

/// Parses a comma-separated seed list.
pub fn parse_seeds(raw: &str) -> Result<Vec<u64>> {
    let seeds = parse_list("experiment", "seeds", raw)?;
    if seeds.is_empty() {
        return Err(config_err("seed list is empty"));
    }
    Ok(seeds)
}

impl ExperimentConfig {
    pub fn from_ini_str(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| config_err(format!("parse error: {e}")))?;
        let mut cfg = Self::default();
        for (section, props) in &ini {
            let Some(section) = section else {
                if let Some((k, _)) = props.iter().next() {
                    return Err(config_err(format!("key {k:?} outside a section")));
                }
                continue;
            };
            let allowed = match section {
                "experiment" => EXPERIMENT_KEYS,
                "env" => ENV_KEYS,
                "algo" => ALGO_KEYS,
                other => return Err(config_err(format!("unknown section [{other}]"))),
            };
            for (key, value) in props.iter() {
                if !allowed.contains(&key) {
                    return Err(config_err(format!("unknown key {section}.{key}")));
                }
                cfg.set(section, key, value)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::from_ini_str(&text)
    }

    fn set(&mut self, section: &str, key: &str, v: &str) -> Result<()> {
        let p = |v: &str| -> Result<f64> { parse_value(section, key, v) };
        let u = |v: &str| -> Result<usize> { parse_value(section, key, v) };
        let (e, a) = (&mut self.env, &mut self.algo);
        match (section, key) {
            ("experiment", "name") => self.name = v.trim().to_string(),
            ("experiment", "seeds") => self.seeds = parse_seeds(v)?,
            ("experiment", "iters") => self.iters = u(v)?,
            ("experiment", "out_dir") => self.out_dir = PathBuf::from(v.trim()),
            ("env", "kind") => {
                e.kind = match v.trim() {
                    "bandit" => EnvKind::Bandit,
                    "chain" => EnvKind::Chain,
                    "random" => EnvKind::Random,
                    other => return Err(config_err(format!("env.kind: unknown environment {other:?}"))),
                }
            }
            ("env", "rewards") => e.rewards = parse_list(section, key, v)?,
            ("env", "gamma") => e.gamma = p(v)?,
            ("env", "chain_n") => e.chain_n = u(v)?,
            ("env", "step_reward") => e.step_reward = p(v)?,
            ("env", "goal_reward") => e.goal_reward = p(v)?,
            ("env", "n_states") => e.n_states = u(v)?,
            ("env", "n_actions") => e.n_actions = u(v)?,
            ("env", "mdp_seed") => e.mdp_seed = parse_value(section, key, v)?,
            ("algo", "algorithm") => a.algorithm = v.trim().to_string(),
            ("algo", "generator") => {
                a.generator = match v.trim() {
                    "cyclic" => GeneratorKind::Cyclic,
                    "batch" => GeneratorKind::Batch,
                    "randomized" => GeneratorKind::Randomized,
                    "eps_greedy" => GeneratorKind::EpsGreedy,
                    other => return Err(config_err(format!("algo.generator: unknown generator {other:?}"))),
                }
            }
            ("algo", "theta0") => a.theta0 = Some(parse_list(section, key, v)?),
            ("algo", "beta") => a.beta = p(v)?,
            ("algo", "zeta") => a.zeta = p(v)?,
            ("algo", "eta") => a.eta = p(v)?,
            ("algo", "clip") => a.clip = p(v)?,
            ("algo", "lambda") => a.lambda = p(v)?,
            ("algo", "kappa") => a.kappa = p(v)?,
            ("algo", "eps_start") => a.eps_start = p(v)?,
            ("algo", "eps_end") => a.eps_end = p(v)?,
            ("algo", "eps_decay") => a.eps_decay = u(v)?,
            ("algo", "rollout_len") => a.rollout_len = u(v)?,
            ("algo", "rollouts_per_iter") => a.rollouts_per_iter = u(v)?,
            ("algo", "capacity") => a.capacity = u(v)?,
            ("algo", "hidden") => a.hidden = u(v)?,
            ("algo", "lr") => a.lr = p(v)?,
            ("algo", "grad_steps") => a.grad_steps = u(v)?,
            ("algo", "batch_size") => a.batch_size = u(v)?,
            ("algo", "tau_q") => a.tau_q = p(v)?,
            ("algo", "tau_theta") => a.tau_theta = p(v)?,
            ("algo", "reverse_kl") => a.reverse_kl = parse_value(section, key, v)?,
            ("algo", "ncapo_mode") => a.ncapo_mode = v.trim().to_string(),
            ("algo", "stuck_threshold") => a.stuck_threshold = p(v)?,
            ("algo", "converged_threshold") => a.converged_threshold = p(v)?,
            ("algo", "curve_stride") => a.curve_stride = u(v)?,
            ("algo", "offpac_eta") => a.offpac_eta = p(v)?,
            ("algo", "offpac_samples") => a.offpac_samples = u(v)?,
            _ => return Err(config_err(format!("unknown key {section}.{key}"))),
        }
        Ok(())
    }

    /// Range checks on every parameter.
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(config_err(msg)) };
        let (e, a) = (&self.env, &self.algo);
        check(!self.name.is_empty() && !self.name.contains(['/', '\\']), "experiment.name must be a plain file stem")?;
        check(!self.seeds.is_empty(), "experiment.seeds must not be empty")?;
        check(e.gamma > 0.0 && e.gamma < 1.0, "env.gamma must lie in (0, 1)")?;
        check(e.rewards.len() >= 2 && e.rewards.iter().all(|r| r.is_finite()), "env.rewards needs at least 2 finite entries")?;
        check(e.chain_n >= 3, "env.chain_n must be at least 3")?;
        check(e.n_states >= 2 && e.n_actions >= 2, "env.n_states and env.n_actions must be at least 2")?;
        check(a.eta > 0.0, "algo.eta must be positive")?;
        check(a.clip > 0.0, "algo.clip must be positive")?;
        check(a.lambda > 0.0 && a.lambda <= 1.0, "algo.lambda must lie in (0, 1]")?;
        check((0.0..=1.0).contains(&a.kappa), "algo.kappa must lie in [0, 1]")?;
        check((0.0..=1.0).contains(&a.eps_start) && (0.0..=1.0).contains(&a.eps_end), "algo.eps_* must lie in [0, 1]")?;
        check(a.rollout_len >= 1 && a.rollouts_per_iter >= 1 && a.capacity >= 1, "rollout settings must be positive")?;
        check(a.hidden >= 1 && a.batch_size >= 1 && a.lr > 0.0, "network settings must be positive")?;
        check((0.0..=1.0).contains(&a.tau_q) && (0.0..=1.0).contains(&a.tau_theta), "algo.tau_* must lie in [0, 1]")?;
        check(
            a.stuck_threshold > 0.0 && a.stuck_threshold < 1.0 && a.converged_threshold > 0.0 && a.converged_threshold < 1.0,
            "algo thresholds must lie in (0, 1)",
        )?;
        check(a.curve_stride >= 1, "algo.curve_stride must be positive")?;
        check(a.offpac_eta >= 0.0 && a.offpac_samples >= 1, "algo.offpac_* out of range")?;
        check(["exact_adv", "replay_retrace"].contains(&a.ncapo_mode.as_str()), "algo.ncapo_mode must be exact_adv or replay_retrace")?;
        self.bandit_algorithm()?;
        if let Some(t) = &a.theta0 {
            check(t.iter().all(|x| x.is_finite()), "algo.theta0 must be finite")?;
        }
        Ok(())
    }

    pub fn bandit_algorithm(&self) -> Result<BanditAlgorithm> {
        let a = &self.algo;
        Ok(match a.algorithm.as_str() {
            "oncapo" => BanditAlgorithm::OnCapo {
                beta: a.beta,
                zeta: a.zeta,
            },
            "oncapo_fixed" => BanditAlgorithm::OnCapoFixed { eta: a.eta },
            "spg" => BanditAlgorithm::Spg { eta: a.eta },
            "is_spg" => BanditAlgorithm::IsSpg { eta: a.eta },
            "offcapo" => BanditAlgorithm::OffCapo { clip: a.clip },
            other => return Err(config_err(format!("algo.algorithm: unknown algorithm {other:?}"))),
        })
    }

    /// Builds the configured environment.
    pub fn build_env(&self) -> Result<TabularMdp> {
        let e = &self.env;
        match e.kind {
            EnvKind::Bandit => make_bandit(&e.rewards, e.gamma),
            EnvKind::Chain => make_chain(e.chain_n, e.gamma, e.step_reward, e.goal_reward),
            EnvKind::Random => make_random_mdp(e.n_states, e.n_actions, e.gamma, e.mdp_seed),
        }
    }

    fn require_env(&self, kind: EnvKind, cmd: &str) -> Result<()> {
        if self.env.kind != kind {
            return Err(config_err(format!("{cmd} needs env.kind = {}", format!("{kind:?}").to_lowercase())));
        }
        Ok(())
    }

    fn csv_path(&self, out: &Path, seed: u64) -> PathBuf {
        out.join(format!("{}_{seed}.csv", self.name))
    }
}

/// Runs one parsed command line; returns the summary to print.
pub fn run(cli: &Cli) -> Result<String> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = &cli.seeds {
        cfg.seeds = parse_seeds(s)?;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    run_config(cli.command, &cfg)
}

/// Runs a subcommand against an already-loaded config.
pub fn run_config(command: Command, cfg: &ExperimentConfig) -> Result<String> {
    cfg.validate()?;
    if !matches!(command, Command::Validate | Command::OracleSuite) {
        fs::create_dir_all(&cfg.out_dir)?;
    }
    match command {
        Command::Validate => {
            let mdp = cfg.build_env()?;
            Ok(format!(
                "ok: {} ({} states, {} actions, gamma {}), {} seeds",
                cfg.name,
                mdp.n_states(),
                mdp.n_actions(),
                mdp.gamma(),
                cfg.seeds.len()
            ))
        }
        Command::BanditStudy => bandit_study(cfg),
        Command::RateCheck => rate_check(cfg),
        Command::ChainCompare => chain_compare(cfg),
        Command::NcapoChain => ncapo_chain(cfg),
        Command::OracleSuite => {
            let seed = cfg.seeds[0];
            let checks = oracle_suite(1000, seed)?;
            let mut out = String::new();
            for c in &checks {
                let _ = writeln!(out, "{} {}: worst error {:e}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.worst);
            }
            if checks.iter().all(|c| c.passed) {
                Ok(out.trim_end().to_string())
            } else {
                print!("{out}");
                Err(Error::Contract("oracle suite reported failures".into()))
            }
        }
    }
}

fn bandit_study(cfg: &ExperimentConfig) -> Result<String> {
    cfg.require_env(EnvKind::Bandit, "bandit-study")?;
    let a = &cfg.algo;
    let rewards = cfg.env.rewards.clone();
    let spec = BanditStudySpec {
        algorithm: cfg.bandit_algorithm()?,
        theta0: a.theta0.clone().unwrap_or_else(|| vec![0.0; rewards.len()]),
        rewards,
        seeds: cfg.seeds.clone(),
        n_iters: cfg.iters,
        thresholds: StudyThresholds {
            stuck: a.stuck_threshold,
            converged: a.converged_threshold,
        },
        curve_stride: a.curve_stride,
    };
    let study = run_bandit_study(&spec)?;
    for o in &study.outcomes {
        let single = crate::baselines::BanditStudy {
            outcomes: vec![o.clone()],
            curve: Vec::new(),
        };
        single.save_outcomes_csv(cfg.csv_path(&cfg.out_dir, o.seed))?;
    }
    study.save_curve_csv(cfg.out_dir.join(format!("{}_curve.csv", cfg.name)))?;
    let mean_final = study.outcomes.iter().map(|o| o.final_pi_star).sum::<f64>() / study.outcomes.len() as f64;
    Ok(format!(
        "bandit-study {}: seeds={} stuck_fraction={} converged_fraction={} mean_final_pi_star={}",
        spec.algorithm.name(),
        study.outcomes.len(),
        study.stuck_fraction(),
        study.converged_fraction(),
        mean_final
    ))
}

fn rate_check(cfg: &ExperimentConfig) -> Result<String> {
    cfg.require_env(EnvKind::Random, "rate-check")?;
    let mdp = cfg.build_env()?;
    let (ns, na, g) = (mdp.n_states(), mdp.n_actions(), mdp.gamma());
    let mu = mdp.start_dist().to_vec();
    let (generator, rule, bound_num, c, label) = match cfg.algo.generator {
        GeneratorKind::Cyclic => (
            Generator::cyclic(ns, na),
            StepRule::Capo { clip: cfg.algo.clip },
            (ns * na) as f64,
            cyclic_rate_constant(&mu, na, g)?,
            "cyclic",
        ),
        GeneratorKind::Batch => (Generator::batch(ns, na), StepRule::ExactLog, 1.0, batch_rate_constant(&mu, na, g)?, "batch"),
        GeneratorKind::Randomized => {
            let gen = Generator::randomized_uniform(ns, na);
            let d = vec![1.0 / (ns * na) as f64; ns * na];
            (gen, StepRule::Capo { clip: cfg.algo.clip }, 1.0, randomized_rate_constant(&mu, &d, g)?, "randomized")
        }
        GeneratorKind::EpsGreedy => return Err(config_err("rate-check supports cyclic, batch and randomized generators")),
    };
    let train_cfg = TrainConfig::new(cfg.iters);
    let runs: Vec<_> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut rng = stream_rng(seed, Stream::Coordinates);
            train(
                &mdp,
                SoftmaxTable::uniform(ns, na),
                &generator,
                &mut rule.clone(),
                &CriticMode::Exact,
                &train_cfg,
                &mut rng,
            )
        })
        .collect::<Result<_>>()?;
    let mut worst = 0.0f64;
    for (seed, h) in cfg.seeds.iter().zip(&runs) {
        let mut w = csv::Writer::from_path(cfg.csv_path(&cfg.out_dir, *seed))?;
        let mut header = vec!["m".to_string(), "v_mu".into(), "gap".into(), "bound".into()];
        header.extend((0..ns).map(|s| format!("v_s{s}")));
        w.write_record(&header)?;
        for r in &h.records {
            // The bound for the k-th iterate uses m = k + 1 (the initial policy is iterate 1).
            let bound = bound_num / (c * (r.m + 1) as f64);
            if r.m >= 1 {
                worst = worst.max(r.gap / bound);
            }
            let mut row = vec![r.m.to_string(), fmt_f64(r.v_mu), fmt_f64(r.gap), fmt_f64(bound)];
            row.extend(r.v.iter().map(|x| fmt_f64(*x)));
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    let summary = format!(
        "rate-check {label}: seeds={} iters={} c={:e} max_gap_over_bound={}",
        runs.len(),
        cfg.iters,
        c,
        worst
    );
    if worst > 1.0 && label != "randomized" {
        return Err(Error::Contract(format!("{summary}: bound violated")));
    }
    Ok(summary)
}

/// Values of `V(S1)` per iteration for the three chain learners.
fn chain_curves(cfg: &ExperimentConfig, mdp: &TabularMdp, seed: u64) -> Result<[Vec<f64>; 3]> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let start = |h: &crate::capo::History| -> Vec<f64> { h.records.iter().map(|r| r.v_mu).collect() };
    let mut rng = stream_rng(seed, Stream::Coordinates);
    let tcfg = TrainConfig::new(cfg.iters);
    let cyclic = train(
        mdp,
        SoftmaxTable::uniform(ns, na),
        &Generator::cyclic(ns, na),
        &mut StepRule::Capo { clip: cfg.algo.clip },
        &CriticMode::Exact,
        &tcfg,
        &mut rng,
    )?;
    let batch = train(
        mdp,
        SoftmaxTable::uniform(ns, na),
        &Generator::batch(ns, na),
        &mut StepRule::ExactLog,
        &CriticMode::Exact,
        &tcfg,
        &mut rng,
    )?;
    let offpac = offpac_curve(mdp, cfg.iters, cfg.algo.offpac_eta, cfg.algo.offpac_samples, seed)?;
    Ok([start(&cyclic), start(&batch), offpac])
}

/// Tabular Off-PAC with a fixed uniform behavior and exact `Q` of the current
/// policy; `samples` actor steps per iteration.
pub fn offpac_curve(mdp: &TabularMdp, iters: usize, eta: f64, samples: usize, seed: u64) -> Result<Vec<f64>> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let behavior = StateActionTable::uniform_policy(ns, na);
    let mut table = SoftmaxTable::uniform(ns, na);
    let mut rng = stream_rng(seed, Stream::Actions);
    let mut curve = Vec::with_capacity(iters + 1);
    let (v, mut q, _) = values_and_advantages(mdp, &table.policy()?)?;
    curve.push(dot(&v, mdp.start_dist()));
    for _ in 0..iters {
        for _ in 0..samples {
            offpac_step(&mut table, mdp, &behavior, &q, eta, &mut rng)?;
        }
        let (v, q_next, _) = values_and_advantages(mdp, &table.policy()?)?;
        q = q_next;
        curve.push(dot(&v, mdp.start_dist()));
    }
    Ok(curve)
}

fn chain_compare(cfg: &ExperimentConfig) -> Result<String> {
    cfg.require_env(EnvKind::Chain, "chain-compare")?;
    let mdp = cfg.build_env()?;
    let v_star = dot(&optimal_values(&mdp, 1e-10)?.v_star, mdp.start_dist());
    let curves: Vec<[Vec<f64>; 3]> = cfg
        .seeds
        .par_iter()
        .map(|&seed| chain_curves(cfg, &mdp, seed))
        .collect::<Result<_>>()?;
    for (seed, c) in cfg.seeds.iter().zip(&curves) {
        let mut w = csv::Writer::from_path(cfg.csv_path(&cfg.out_dir, *seed))?;
        w.write_record(["iteration", "cyclic_capo", "batch_capo", "offpac"])?;
        for (m, ((cyc, bat), off)) in c[0].iter().zip(&c[1]).zip(&c[2]).enumerate() {
            w.write_record([m.to_string(), fmt_f64(*cyc), fmt_f64(*bat), fmt_f64(*off)])?;
        }
        w.flush()?;
    }
    let n = curves.len() as f64;
    let frac = |k: usize| curves.iter().map(|c| c[k].last().unwrap() / v_star).sum::<f64>() / n;
    Ok(format!(
        "chain-compare: v_star={} final_fraction cyclic_capo={} batch_capo={} offpac={}",
        v_star,
        frac(0),
        frac(1),
        frac(2)
    ))
}

fn ncapo_settings(cfg: &ExperimentConfig, seed: u64) -> (NcapoMode, NcapoConfig) {
    let a = &cfg.algo;
    let mode = if a.ncapo_mode == "replay_retrace" {
        NcapoMode::ReplayRetrace(ReplaySettings {
            eps: EpsSchedule {
                start: a.eps_start,
                end: a.eps_end,
                decay_iters: a.eps_decay,
            },
            rollouts_per_iter: a.rollouts_per_iter,
            rollout_len: a.rollout_len,
            capacity: a.capacity,
            kappa: a.kappa,
            lambda: a.lambda,
            tau_q: a.tau_q,
            tau_theta: a.tau_theta,
        })
    } else {
        NcapoMode::ExactAdv
    };
    let ncfg = NcapoConfig {
        hidden: a.hidden,
        lr: a.lr,
        grad_steps: a.grad_steps,
        iters: cfg.iters,
        batch_size: a.batch_size,
        clip: a.clip,
        reverse_kl: a.reverse_kl,
        seed,
    };
    (mode, ncfg)
}

fn ncapo_chain(cfg: &ExperimentConfig) -> Result<String> {
    cfg.require_env(EnvKind::Chain, "ncapo-chain")?;
    let mdp = cfg.build_env()?;
    let v_star = dot(&optimal_values(&mdp, 1e-10)?.v_star, mdp.start_dist());
    let runs: Vec<_> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let (mode, ncfg) = ncapo_settings(cfg, seed);
            train_ncapo(&mdp, &mode, &ncfg)
        })
        .collect::<Result<_>>()?;
    let mut finals = Vec::new();
    for (seed, run) in cfg.seeds.iter().zip(&runs) {
        run.save_history_csv(cfg.csv_path(&cfg.out_dir, *seed))?;
        run.policy
            .save_csv(cfg.out_dir.join(format!("{}_{seed}_weights.csv", cfg.name)))?;
        finals.push(fmt_f64(run.final_value() / v_star));
    }
    Ok(format!(
        "ncapo-chain {}: v_star={} final_fraction=[{}]",
        cfg.algo.ncapo_mode,
        v_star,
        finals.join(", ")
    ))
}

/// One oracle comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheck {
    pub name: &'static str,
    pub passed: bool,
    pub worst: f64,
}

fn random_table<R: rand::Rng>(ns: usize, na: usize, scale: f64, rng: &mut R) -> SoftmaxTable {
    let data = (0..ns * na).map(|_| scale * (rng.random::<f64>() * 2.0 - 1.0)).collect();
    SoftmaxTable::from_theta(StateActionTable::from_vec(ns, na, data).expect("shape matches"))
}

/// Compares every closed-form one-step oracle with direct recomputation on
/// `n` random instances.
pub fn oracle_suite(n: usize, seed: u64) -> Result<Vec<OracleCheck>> {
    use rand::Rng;
    let mut rng = stream_rng(seed, Stream::Init);
    let mut worst = [0.0f64; 5];
    for i in 0..n {
        let ns = rng.random_range(2..=4);
        let na = rng.random_range(2..=4);
        let mdp = make_random_mdp(ns, na, 0.9, seed.wrapping_mul(1_000_003).wrapping_add(i as u64))?;
        let table = random_table(ns, na, 2.0, &mut rng);
        let pi = table.policy()?;
        let prof = policy_eval(&mdp, &pi)?;
        let (s, a) = (rng.random_range(0..ns), rng.random_range(0..na));
        let adv = prof.adv.get(s, a);
        let sign = if adv > 0.0 { Sign::Pos } else { Sign::Neg };
        let one = CoordinateBatch {
            iteration: 0,
            pairs: vec![(s, a)],
            sequential: false,
        };

        // Single-coordinate weight change.
        let mut t = table.clone();
        capo_update(&mut t, &one, &[sign], &mut StepRule::ExactLog)?;
        let delta = predicted_weight_delta(pi.row(s), a, sign)?;
        let direct = t.action_probs(s)?;
        for (x, y) in direct.iter().zip(delta.apply(pi.row(s))) {
            worst[0] = worst[0].max((x - y).abs());
        }

        // One-step improvement identity with exact visitation.
        let new_pi = t.policy()?;
        let new_v = policy_eval(&mdp, &new_pi)?.v;
        for s0 in 0..ns {
            let d = visitation_from(&mdp, &new_pi, s0)?[s];
            let pred = capo_one_step_improvement(d, pi.get(s, a), adv, 0.9);
            worst[1] = worst[1].max((new_v[s0] - prof.v[s0] - pred).abs());
        }

        // Fixed-step improvement.
        let eta = rng.random_range(0.05..3.0);
        let mut f = table.clone();
        capo_update(&mut f, &one, &[sign], &mut StepRule::Fixed { eta })?;
        let f_pi = f.policy()?;
        let f_v = policy_eval(&mdp, &f_pi)?.v;
        for s0 in 0..ns {
            let d = visitation_from(&mdp, &f_pi, s0)?[s];
            let pred = fixed_lr_one_step_improvement(d, pi.get(s, a), adv, eta, 0.9)?;
            worst[2] = worst[2].max((f_v[s0] - prof.v[s0] - pred).abs());
        }

        // Full-batch weights.
        let signs: Vec<Sign> = prof.adv.as_slice().iter().map(|x| Sign::of(*x, 0.0)).collect();
        let mut b = table.clone();
        let all = CoordinateBatch {
            iteration: 0,
            pairs: (0..ns).flat_map(|s| (0..na).map(move |a| (s, a))).collect(),
            sequential: false,
        };
        capo_update(&mut b, &all, &signs, &mut StepRule::ExactLog)?;
        for s in 0..ns {
            let w = batch_capo_weights(pi.row(s), &signs[s * na..(s + 1) * na])?;
            for (x, y) in b.action_probs(s)?.iter().zip(w) {
                worst[3] = worst[3].max((x - y).abs());
            }
        }

        // Performance difference.
        let other = random_table(ns, na, 2.0, &mut rng).policy()?;
        let pd = perf_difference(&mdp, &other, &pi, mdp.start_dist())?;
        let direct = dot(&policy_eval(&mdp, &other)?.v, mdp.start_dist()) - dot(&prof.v, mdp.start_dist());
        worst[4] = worst[4].max((pd - direct).abs());
    }
    let names = [
        ("weight_delta", 1e-12),
        ("one_step_improvement", 1e-9),
        ("fixed_lr_improvement", 1e-9),
        ("batch_weights", 1e-12),
        ("perf_difference", 1e-9),
    ];
    Ok(names
        .iter()
        .zip(worst)
        .map(|(&(name, tol), w)| OracleCheck {
            name,
            passed: w < tol,
            worst: w,
        })
        .collect())
}
