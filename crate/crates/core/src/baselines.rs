//! Comparison algorithms for the bandit and Chain studies: on-policy CAPO
//! with variable and fixed steps, stochastic policy gradient with and
//! without the importance-sampled reward estimate, and a tabular Off-PAC
//! actor.

use std::io;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exact::{dot, values_and_advantages, visitation};
use crate::mdp::TabularMdp;
use crate::policy::{capo_alpha_from_log, oncapo_alpha_from_log, softmax, OnCapoConfig, Sign, SoftmaxTable};
use crate::rng::{sample_index, stream_rng, Stream};
use crate::table::{fmt_f64, StateActionTable};

/// Exact advantages below this magnitude count as zero.
pub const EXACT_DEAD_ZONE: f64 = 1e-12;

/// Environment for on-policy sampling with an exact critic.
#[derive(Debug, Clone, Copy)]
pub enum OnPolicyEnv<'a> {
    /// Single-state bandit with closed-form advantages `r - pi^T r`.
    Bandit(&'a [f64]),
    /// General MDP; states are drawn from the current policy's visitation.
    Mdp(&'a TabularMdp),
}

impl OnPolicyEnv<'_> {
    pub fn n_states(&self) -> usize {
        match self {
            OnPolicyEnv::Bandit(_) => 1,
            OnPolicyEnv::Mdp(m) => m.n_states(),
        }
    }

    pub fn n_actions(&self) -> usize {
        match self {
            OnPolicyEnv::Bandit(r) => r.len(),
            OnPolicyEnv::Mdp(m) => m.n_actions(),
        }
    }

    /// Exact advantage table of the table's current policy.
    pub fn advantages(&self, table: &SoftmaxTable) -> Result<StateActionTable> {
        self.check(table)?;
        match self {
            OnPolicyEnv::Bandit(r) => {
                let pi = table.action_probs(0)?;
                let v = dot(&pi, r);
                StateActionTable::from_vec(1, r.len(), r.iter().map(|x| x - v).collect())
            }
            OnPolicyEnv::Mdp(m) => Ok(values_and_advantages(m, &table.policy()?)?.2),
        }
    }

    fn sample_state<R: Rng + ?Sized>(&self, table: &SoftmaxTable, rng: &mut R) -> Result<usize> {
        match self {
            OnPolicyEnv::Bandit(_) => Ok(0),
            OnPolicyEnv::Mdp(m) => {
                let d = visitation(m, &table.policy()?, m.start_dist())?;
                Ok(sample_index(&d, rng))
            }
        }
    }

    fn check(&self, table: &SoftmaxTable) -> Result<()> {
        if table.n_states() != self.n_states() || table.n_actions() != self.n_actions() {
            return Err(Error::InvalidPolicy("table shape does not match the environment".into()));
        }
        Ok(())
    }
}

/// The coordinate an on-policy step sampled and the sign it applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnPolicySample {
    pub state: usize,
    pub action: usize,
    pub sign: Sign,
}

fn sample_on_policy<R: Rng + ?Sized>(
    table: &SoftmaxTable,
    env: OnPolicyEnv<'_>,
    rng: &mut R,
) -> Result<(OnPolicySample, f64)> {
    let adv = env.advantages(table)?;
    let s = env.sample_state(table, rng)?;
    let log_pi = table.log_probs(s)?;
    let pi: Vec<f64> = log_pi.iter().map(|l| l.exp()).collect();
    let a = sample_index(&pi, rng);
    let sample = OnPolicySample {
        state: s,
        action: a,
        sign: Sign::of(adv.get(s, a), EXACT_DEAD_ZONE),
    };
    Ok((sample, log_pi[a]))
}

/// On-policy CAPO with the three-branch variable step.
pub fn oncapo_step<R: Rng + ?Sized>(
    table: &mut SoftmaxTable,
    env: OnPolicyEnv<'_>,
    cfg: &mut OnCapoConfig,
    rng: &mut R,
) -> Result<OnPolicySample> {
    let (smp, log_pi) = sample_on_policy(table, env, rng)?;
    cfg.record_visit(smp.state, smp.action);
    let alpha = oncapo_alpha_from_log(log_pi, smp.sign, cfg, smp.state, smp.action)?;
    table.add(smp.state, smp.action, alpha * smp.sign.as_f64());
    Ok(smp)
}

/// On-policy CAPO with a constant step `eta`.
pub fn oncapo_fixed_step<R: Rng + ?Sized>(
    table: &mut SoftmaxTable,
    env: OnPolicyEnv<'_>,
    eta: f64,
    rng: &mut R,
) -> Result<OnPolicySample> {
    if !(eta >= 0.0) {
        return Err(Error::InvalidParameter(format!("eta {eta} must be nonnegative")));
    }
    let (smp, _) = sample_on_policy(table, env, rng)?;
    table.add(smp.state, smp.action, eta * smp.sign.as_f64());
    Ok(smp)
}

/// Off-policy CAPO on a bandit: the coordinate is drawn from a fixed
/// behavior distribution and moved by `min(log(1/pi), clip)`.
pub fn offcapo_bandit_step<R: Rng + ?Sized>(
    table: &mut SoftmaxTable,
    rewards: &[f64],
    behavior: &[f64],
    clip: f64,
    rng: &mut R,
) -> Result<usize> {
    let adv = OnPolicyEnv::Bandit(rewards).advantages(table)?;
    let a = sample_index(behavior, rng);
    let sign = Sign::of(adv.get(0, a), EXACT_DEAD_ZONE);
    let alpha = capo_alpha_from_log(table.log_probs(0)?[a], clip);
    table.add(0, a, alpha * sign.as_f64());
    Ok(a)
}

fn check_bandit(theta: &[f64], rewards: &[f64], eta: f64) -> Result<()> {
    if rewards.len() < 2 || theta.len() != rewards.len() {
        return Err(Error::InvalidParameter("need K >= 2 and one parameter per arm".into()));
    }
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter(format!("eta {eta} must be positive")));
    }
    Ok(())
}

/// Vanilla SPG increment for sampled arm `a`:
/// `theta(a') += eta (1[a = a'] - pi(a')) r(a)`.
pub fn spg_increment(pi: &[f64], rewards: &[f64], eta: f64, a: usize) -> Vec<f64> {
    pi.iter()
        .enumerate()
        .map(|(b, p)| eta * (f64::from(u8::from(a == b)) - p) * rewards[a])
        .collect()
}

/// IS-SPG increment for sampled arm `a`:
/// `theta(a') += eta pi(a') (rhat(a') - pi^T rhat)` with
/// `rhat(a') = 1[a = a'] r(a') / pi(a')`.
pub fn is_spg_increment(pi: &[f64], rewards: &[f64], eta: f64, a: usize) -> Vec<f64> {
    let r_hat: Vec<f64> = (0..pi.len())
        .map(|b| if a == b { rewards[b] / pi[b] } else { 0.0 })
        .collect();
    let baseline = dot(pi, &r_hat);
    pi.iter().zip(&r_hat).map(|(p, rh)| eta * p * (rh - baseline)).collect()
}

fn pg_step<R: Rng + ?Sized>(
    theta: &mut [f64],
    rewards: &[f64],
    eta: f64,
    rng: &mut R,
    increment: fn(&[f64], &[f64], f64, usize) -> Vec<f64>,
) -> Result<usize> {
    check_bandit(theta, rewards, eta)?;
    let pi = softmax(theta)?;
    let a = sample_index(&pi, rng);
    for (t, d) in theta.iter_mut().zip(increment(&pi, rewards, eta, a)) {
        *t += d;
    }
    Ok(a)
}

/// One vanilla SPG step on a bandit; returns the sampled arm.
pub fn spg_step<R: Rng + ?Sized>(theta: &mut [f64], rewards: &[f64], eta: f64, rng: &mut R) -> Result<usize> {
    pg_step(theta, rewards, eta, rng, spg_increment)
}

/// One IS-SPG step on a bandit; returns the sampled arm.
pub fn is_spg_step<R: Rng + ?Sized>(theta: &mut [f64], rewards: &[f64], eta: f64, rng: &mut R) -> Result<usize> {
    pg_step(theta, rewards, eta, rng, is_spg_increment)
}

/// One Off-PAC actor step.
///
/// The state is drawn from the behavior policy's discounted visitation from
/// the MDP's start distribution, the action from `behavior(.|s)`, and the row
/// moves by `eta (pi/b) Q(s,a) (1[a = .] - pi(.|s))`.
pub fn offpac_step<R: Rng + ?Sized>(
    table: &mut SoftmaxTable,
    mdp: &TabularMdp,
    behavior: &StateActionTable,
    q: &StateActionTable,
    eta: f64,
    rng: &mut R,
) -> Result<(usize, usize)> {
    let d = visitation(mdp, behavior, mdp.start_dist())?;
    let s = sample_index(&d, rng);
    let a = sample_index(behavior.row(s), rng);
    let b = behavior.get(s, a);
    if !(b > 0.0) {
        return Err(Error::Contract(format!("behavior assigns zero probability to ({s}, {a})")));
    }
    let pi = table.action_probs(s)?;
    let scale = eta * pi[a] / b * q.get(s, a);
    for (k, p) in pi.iter().enumerate() {
        let grad = f64::from(u8::from(k == a)) - p;
        table.add(s, k, scale * grad);
    }
    Ok((s, a))
}

/// Bandit algorithms available to [`run_bandit_study`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BanditAlgorithm {
    OnCapo { beta: f64, zeta: f64 },
    OnCapoFixed { eta: f64 },
    Spg { eta: f64 },
    IsSpg { eta: f64 },
    /// Off-policy CAPO with uniform behavior.
    OffCapo { clip: f64 },
}

impl BanditAlgorithm {
    pub fn name(&self) -> &'static str {
        match self {
            BanditAlgorithm::OnCapo { .. } => "oncapo",
            BanditAlgorithm::OnCapoFixed { .. } => "oncapo_fixed",
            BanditAlgorithm::Spg { .. } => "spg",
            BanditAlgorithm::IsSpg { .. } => "is_spg",
            BanditAlgorithm::OffCapo { .. } => "offcapo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyThresholds {
    /// A run is stuck when a sub-optimal arm ends above this probability.
    pub stuck: f64,
    /// A run has converged when the optimal arm ends above this probability.
    pub converged: f64,
}

impl Default for StudyThresholds {
    fn default() -> Self {
        Self {
            stuck: 0.99,
            converged: 0.99,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BanditRunOutcome {
    pub seed: u64,
    pub final_pi_star: f64,
    pub max_pi_star: f64,
    /// First iteration at which `pi(a*)` exceeded the convergence threshold.
    pub first_converged: Option<usize>,
    pub stuck: bool,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub iteration: usize,
    pub mean_pi_star: f64,
    pub std_pi_star: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BanditStudy {
    pub outcomes: Vec<BanditRunOutcome>,
    pub curve: Vec<CurvePoint>,
}

impl BanditStudy {
    pub fn stuck_fraction(&self) -> f64 {
        self.fraction(|o| o.stuck)
    }

    pub fn converged_fraction(&self) -> f64 {
        self.fraction(|o| o.converged)
    }

    pub fn fraction(&self, pred: impl Fn(&BanditRunOutcome) -> bool) -> f64 {
        self.outcomes.iter().filter(|o| pred(o)).count() as f64 / self.outcomes.len() as f64
    }

    /// Columns `seed,final_pi_star,stuck,converged`.
    pub fn write_outcomes_csv<W: io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["seed", "final_pi_star", "stuck", "converged"])?;
        for o in &self.outcomes {
            w.write_record([
                o.seed.to_string(),
                fmt_f64(o.final_pi_star),
                o.stuck.to_string(),
                o.converged.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Columns `iteration,mean_pi_star,std_pi_star`.
    pub fn write_curve_csv<W: io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["iteration", "mean_pi_star", "std_pi_star"])?;
        for p in &self.curve {
            w.write_record([p.iteration.to_string(), fmt_f64(p.mean_pi_star), fmt_f64(p.std_pi_star)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_outcomes_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_outcomes_csv(std::fs::File::create(path)?)
    }

    pub fn save_curve_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_curve_csv(std::fs::File::create(path)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BanditStudySpec {
    pub algorithm: BanditAlgorithm,
    pub rewards: Vec<f64>,
    pub theta0: Vec<f64>,
    pub seeds: Vec<u64>,
    pub n_iters: usize,
    pub thresholds: StudyThresholds,
    /// Curve points are logged every `curve_stride` iterations and at the end.
    pub curve_stride: usize,
}

impl BanditStudySpec {
    pub fn new(algorithm: BanditAlgorithm, rewards: Vec<f64>, n_seeds: u64, n_iters: usize) -> Self {
        let k = rewards.len();
        Self {
            algorithm,
            rewards,
            theta0: vec![0.0; k],
            seeds: (0..n_seeds).collect(),
            n_iters,
            thresholds: StudyThresholds::default(),
            curve_stride: 100,
        }
    }

    pub fn with_theta0(mut self, theta0: Vec<f64>) -> Self {
        self.theta0 = theta0;
        self
    }

    fn validate(&self) -> Result<()> {
        let k = self.rewards.len();
        if k < 2 || self.theta0.len() != k {
            return Err(Error::InvalidParameter("need K >= 2 arms and one initial logit per arm".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidParameter("at least one seed is required".into()));
        }
        if self.curve_stride == 0 {
            return Err(Error::InvalidParameter("curve stride must be positive".into()));
        }
        match self.algorithm {
            BanditAlgorithm::OnCapo { beta, zeta } => {
                OnCapoConfig::new(beta, zeta, 1, k)?;
            }
            BanditAlgorithm::OnCapoFixed { eta } | BanditAlgorithm::Spg { eta } | BanditAlgorithm::IsSpg { eta } => {
                if !(eta > 0.0) {
                    return Err(Error::InvalidParameter(format!("eta {eta} must be positive")));
                }
            }
            BanditAlgorithm::OffCapo { clip } => {
                if !(clip > 0.0) {
                    return Err(Error::InvalidParameter(format!("clip {clip} must be positive")));
                }
            }
        }
        Ok(())
    }

    fn checkpoints(&self) -> Vec<usize> {
        let mut c: Vec<usize> = (0..=self.n_iters).step_by(self.curve_stride).collect();
        if c.last() != Some(&self.n_iters) {
            c.push(self.n_iters);
        }
        c
    }
}

fn best_arm(rewards: &[f64]) -> usize {
    let mut best = 0;
    for (a, r) in rewards.iter().enumerate() {
        if *r > rewards[best] {
            best = a;
        }
    }
    best
}

fn run_one(spec: &BanditStudySpec, seed: u64, checkpoints: &[usize]) -> Result<(BanditRunOutcome, Vec<f64>)> {
    let k = spec.rewards.len();
    let a_star = best_arm(&spec.rewards);
    let mut rng = stream_rng(seed, Stream::Actions);
    let mut table = SoftmaxTable::from_theta(StateActionTable::from_vec(1, k, spec.theta0.clone())?);
    let mut cfg = match spec.algorithm {
        BanditAlgorithm::OnCapo { beta, zeta } => Some(OnCapoConfig::new(beta, zeta, 1, k)?),
        _ => None,
    };
    let uniform = vec![1.0 / k as f64; k];
    let env = OnPolicyEnv::Bandit(&spec.rewards);

    let mut pi = table.action_probs(0)?;
    let mut max_pi_star = pi[a_star];
    let mut first_converged = (pi[a_star] > spec.thresholds.converged).then_some(0);
    let mut curve = Vec::with_capacity(checkpoints.len());
    let mut next_cp = checkpoints.iter().peekable();
    for m in 0..=spec.n_iters {
        if m > 0 {
            match &spec.algorithm {
                BanditAlgorithm::OnCapo { .. } => {
                    oncapo_step(&mut table, env, cfg.as_mut().unwrap(), &mut rng)?;
                }
                BanditAlgorithm::OnCapoFixed { eta } => {
                    oncapo_fixed_step(&mut table, env, *eta, &mut rng)?;
                }
                BanditAlgorithm::Spg { eta } | BanditAlgorithm::IsSpg { eta } => {
                    let mut theta = table.theta().row(0).to_vec();
                    if matches!(spec.algorithm, BanditAlgorithm::Spg { .. }) {
                        spg_step(&mut theta, &spec.rewards, *eta, &mut rng)?;
                    } else {
                        is_spg_step(&mut theta, &spec.rewards, *eta, &mut rng)?;
                    }
                    table.set_row(0, &theta);
                }
                BanditAlgorithm::OffCapo { clip } => {
                    offcapo_bandit_step(&mut table, &spec.rewards, &uniform, *clip, &mut rng)?;
                }
            }
            pi = table.action_probs(0)?;
            max_pi_star = max_pi_star.max(pi[a_star]);
            if first_converged.is_none() && pi[a_star] > spec.thresholds.converged {
                first_converged = Some(m);
            }
        }
        if next_cp.peek() == Some(&&m) {
            next_cp.next();
            curve.push(pi[a_star]);
        }
    }
    let stuck = pi
        .iter()
        .enumerate()
        .any(|(a, p)| a != a_star && *p > spec.thresholds.stuck);
    let outcome = BanditRunOutcome {
        seed,
        final_pi_star: pi[a_star],
        max_pi_star,
        first_converged,
        stuck,
        converged: pi[a_star] > spec.thresholds.converged,
        iterations: spec.n_iters,
    };
    Ok((outcome, curve))
}

/// Runs every seed of a bandit study; seeds run in parallel and results are
/// aggregated in seed order, so output does not depend on scheduling.
pub fn run_bandit_study(spec: &BanditStudySpec) -> Result<BanditStudy> {
    spec.validate()?;
    let checkpoints = spec.checkpoints();
    let runs: Vec<(BanditRunOutcome, Vec<f64>)> = spec
        .seeds
        .par_iter()
        .map(|&seed| run_one(spec, seed, &checkpoints))
        .collect::<Result<_>>()?;
    let n = runs.len() as f64;
    let curve = checkpoints
        .iter()
        .enumerate()
        .map(|(i, &iteration)| {
            let mean = runs.iter().map(|(_, c)| c[i]).sum::<f64>() / n;
            let var = if runs.len() > 1 {
                runs.iter().map(|(_, c)| (c[i] - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            CurvePoint {
                iteration,
                mean_pi_star: mean,
                std_pi_star: var.sqrt(),
            }
        })
        .collect();
    Ok(BanditStudy {
        outcomes: runs.into_iter().map(|(o, _)| o).collect(),
        curve,
    })
}
