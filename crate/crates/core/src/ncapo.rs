//! Neural CAPO at toy scale.
//!
//! A one-hidden-layer network maps a one-hot state to action logits. Each
//! iteration shifts the logits of the selected coordinates by the CAPO step
//! to form a target distribution, then regresses the network onto it by
//! gradient descent on a KL loss.

use std::io;
use std::path::Path;

use rand::Rng;

use crate::capo::{CoordinateBatch, EpsSchedule, Generator};
use crate::critic::{advantages_from_q, polyak, regress_on_rollout, retrace_targets, QEstimate, ReplayBuffer};
use crate::error::{Error, Result};
use crate::exact::{dot, values_and_advantages};
use crate::mdp::{sample_rollout, sample_start, TabularMdp};
use crate::policy::{capo_alpha_from_log, log_softmax, softmax, Sign, DEFAULT_CLIP};
use crate::rng::{stream_rng, Stream};
use crate::table::{fmt_f64, StateActionTable};

/// Exact advantages below this magnitude count as zero.
const EXACT_DEAD_ZONE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// `f(s) = W2 act(W1 e_s + b1) + b2` with `e_s` the one-hot encoding of `s`.
///
/// Parameters live in one flat vector laid out as `W1` (hidden x states,
/// row-major), `b1`, `W2` (actions x hidden, row-major), `b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpPolicy {
    n_states: usize,
    hidden: usize,
    n_actions: usize,
    activation: Activation,
    params: Vec<f64>,
}

struct Forward {
    pre: Vec<f64>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

impl MlpPolicy {
    /// Uniform initialisation in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn new<R: Rng + ?Sized>(
        n_states: usize,
        n_actions: usize,
        hidden: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if n_states == 0 || n_actions < 2 || hidden == 0 {
            return Err(Error::InvalidParameter(format!(
                "network shape {n_states}x{hidden}x{n_actions} is degenerate"
            )));
        }
        let mut net = Self {
            n_states,
            hidden,
            n_actions,
            activation,
            params: Vec::new(),
        };
        let layer = |n: usize, fan_in: usize, rng: &mut R| -> Vec<f64> {
            let bound = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| rng.random_range(-bound..bound)).collect()
        };
        net.params.extend(layer(hidden * n_states, n_states, rng));
        net.params.extend(layer(hidden, n_states, rng));
        net.params.extend(layer(n_actions * hidden, hidden, rng));
        net.params.extend(layer(n_actions, hidden, rng));
        Ok(net)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offsets(&self) -> [usize; 4] {
        let w1 = 0;
        let b1 = w1 + self.hidden * self.n_states;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.n_actions * self.hidden;
        [w1, b1, w2, b2]
    }

    fn forward(&self, s: usize) -> Forward {
        let [_, b1, w2, b2] = self.offsets();
        let p = &self.params;
        let pre: Vec<f64> = (0..self.hidden).map(|h| p[h * self.n_states + s] + p[b1 + h]).collect();
        let hidden: Vec<f64> = match self.activation {
            Activation::Relu => pre.iter().map(|x| x.max(0.0)).collect(),
            Activation::Identity => pre.clone(),
        };
        let logits = (0..self.n_actions)
            .map(|a| p[b2 + a] + dot(&p[w2 + a * self.hidden..w2 + (a + 1) * self.hidden], &hidden))
            .collect();
        Forward { pre, hidden, logits }
    }

    pub fn logits(&self, s: usize) -> Vec<f64> {
        self.forward(s).logits
    }

    pub fn action_probs(&self, s: usize) -> Result<Vec<f64>> {
        softmax(&self.logits(s))
    }

    pub fn policy(&self) -> Result<StateActionTable> {
        let mut t = StateActionTable::zeros(self.n_states, self.n_actions);
        for s in 0..self.n_states {
            t.row_mut(s).copy_from_slice(&self.action_probs(s)?);
        }
        Ok(t)
    }

    /// Accumulates `dL/dparams` given `dL/dlogits` at state `s`.
    fn backward(&self, s: usize, fwd: &Forward, dlogits: &[f64], grad: &mut [f64]) {
        let [_, b1, w2, b2] = self.offsets();
        let h_n = self.hidden;
        let mut dhidden = vec![0.0; h_n];
        for (a, g) in dlogits.iter().enumerate() {
            grad[b2 + a] += g;
            let row = w2 + a * h_n;
            for h in 0..h_n {
                grad[row + h] += g * fwd.hidden[h];
                dhidden[h] += g * self.params[row + h];
            }
        }
        for h in 0..h_n {
            let dpre = match self.activation {
                Activation::Relu if fwd.pre[h] <= 0.0 => 0.0,
                _ => dhidden[h],
            };
            grad[h * self.n_states + s] += dpre;
            grad[b1 + h] += dpre;
        }
    }

    /// `params -= lr * grad`.
    pub fn descend(&mut self, grad: &[f64], lr: f64) {
        for (p, g) in self.params.iter_mut().zip(grad) {
            *p -= lr * g;
        }
    }

    /// Columns `block,row,col,value` with blocks `w1`, `b1`, `w2`, `b2`.
    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["block", "row", "col", "value"])?;
        let [w1, b1, w2, b2] = self.offsets();
        let blocks = [
            ("w1", w1, self.hidden, self.n_states),
            ("b1", b1, self.hidden, 1),
            ("w2", w2, self.n_actions, self.hidden),
            ("b2", b2, self.n_actions, 1),
        ];
        for (name, start, rows, cols) in blocks {
            for r in 0..rows {
                for c in 0..cols {
                    let v = self.params[start + r * cols + c];
                    w.write_record([name.to_string(), r.to_string(), c.to_string(), fmt_f64(v)])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Shifted logits and target distributions for the states of one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct NcapoTarget {
    pub states: Vec<usize>,
    pub logits: Vec<Vec<f64>>,
    pub probs: Vec<Vec<f64>>,
}

/// Distinct states of a batch in first-appearance order.
pub fn batch_states(batch: &CoordinateBatch) -> Vec<usize> {
    let mut states = Vec::new();
    for &(s, _) in &batch.pairs {
        if !states.contains(&s) {
            states.push(s);
        }
    }
    states
}

/// `theta_hat(s,a) = f(s,a) + alpha(s,a) sign(A(s,a))` on the batch pairs,
/// with `alpha = min(log(1/pi), clip)` from the unshifted logits.
///
/// `f_values[i]` holds the logits of `states[i]`.
pub fn ncapo_target(
    states: &[usize],
    f_values: &[Vec<f64>],
    batch: &CoordinateBatch,
    signs: &[Sign],
    clip: f64,
) -> Result<NcapoTarget> {
    if batch.pairs.is_empty() {
        return Err(Error::Precondition("batch must not be empty".into()));
    }
    if signs.len() != batch.pairs.len() || f_values.len() != states.len() {
        return Err(Error::Contract("one sign per pair and one logit row per state required".into()));
    }
    let log_pi: Vec<Vec<f64>> = f_values.iter().map(|f| log_softmax(f)).collect::<Result<_>>()?;
    let mut logits = f_values.to_vec();
    for (&(s, a), sign) in batch.pairs.iter().zip(signs) {
        let i = states
            .iter()
            .position(|x| *x == s)
            .ok_or_else(|| Error::Contract(format!("batch state {s} has no logit row")))?;
        logits[i][a] += capo_alpha_from_log(log_pi[i][a], clip) * sign.as_f64();
    }
    let probs = logits.iter().map(|l| softmax(l)).collect::<Result<_>>()?;
    Ok(NcapoTarget {
        states: states.to_vec(),
        logits,
        probs,
    })
}

/// Builds the target for `batch` from the network's current logits.
pub fn network_target(policy: &MlpPolicy, batch: &CoordinateBatch, signs: &[Sign], clip: f64) -> Result<NcapoTarget> {
    let states = batch_states(batch);
    let f: Vec<Vec<f64>> = states.iter().map(|&s| policy.logits(s)).collect();
    ncapo_target(&states, &f, batch, signs, clip)
}

/// `sum_s KL` over the target states and its gradient in the parameters.
///
/// The forward direction is `KL(pi_theta || pi_target)`; `reverse` selects
/// `KL(pi_target || pi_theta)`.
pub fn kl_loss_and_grad(
    policy: &MlpPolicy,
    states: &[usize],
    targets: &NcapoTarget,
    reverse: bool,
) -> Result<(f64, Vec<f64>)> {
    if states != targets.states.as_slice() {
        return Err(Error::Contract("targets must cover exactly the given states".into()));
    }
    let mut grad = vec![0.0; policy.params.len()];
    let mut loss = 0.0;
    for (&s, t) in states.iter().zip(&targets.probs) {
        let fwd = policy.forward(s);
        let log_p = log_softmax(&fwd.logits)?;
        let p: Vec<f64> = log_p.iter().map(|l| l.exp()).collect();
        if t.len() != p.len() {
            return Err(Error::Contract("target row has the wrong length".into()));
        }
        let dlogits: Vec<f64> = if reverse {
            loss += t
                .iter()
                .zip(&log_p)
                .filter(|(tj, _)| **tj > 0.0)
                .map(|(tj, lp)| tj * (tj.ln() - lp))
                .sum::<f64>();
            p.iter().zip(t).map(|(pj, tj)| pj - tj).collect()
        } else {
            if let Some(j) = t.iter().zip(&p).position(|(tj, pj)| *tj <= 0.0 && *pj > 0.0) {
                return Err(Error::Domain(format!("infinite KL: target assigns zero to action {j} at state {s}")));
            }
            let ratio: Vec<f64> = log_p.iter().zip(t).map(|(lp, tj)| lp - tj.ln()).collect();
            let kl = dot(&p, &ratio);
            loss += kl;
            p.iter().zip(&ratio).map(|(pj, r)| pj * (r - kl)).collect()
        };
        policy.backward(s, &fwd, &dlogits, &mut grad);
    }
    Ok((loss, grad))
}

/// Hyper-parameters of the replay mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplaySettings {
    pub eps: EpsSchedule,
    pub rollouts_per_iter: usize,
    pub rollout_len: usize,
    pub capacity: usize,
    pub kappa: f64,
    pub lambda: f64,
    pub tau_q: f64,
    pub tau_theta: f64,
}

impl Default for ReplaySettings {
    fn default() -> Self {
        Self {
            eps: EpsSchedule {
                start: 0.5,
                end: 0.1,
                decay_iters: 200,
            },
            rollouts_per_iter: 4,
            rollout_len: 20,
            capacity: 6400,
            kappa: 0.1,
            lambda: 1.0,
            tau_q: 0.05,
            tau_theta: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NcapoMode {
    /// Exact advantages of the current network, coordinates from a cyclic
    /// generator over blocks of `batch_size` pairs.
    ExactAdv,
    /// Behavior and target networks, an epsilon-soft replay buffer and a
    /// Retrace critic with a polyak-averaged target table.
    ReplayRetrace(ReplaySettings),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NcapoConfig {
    pub hidden: usize,
    pub lr: f64,
    pub grad_steps: usize,
    pub iters: usize,
    pub batch_size: usize,
    pub clip: f64,
    pub reverse_kl: bool,
    pub seed: u64,
}

impl Default for NcapoConfig {
    fn default() -> Self {
        Self {
            hidden: 256,
            lr: 0.001,
            grad_steps: 30,
            iters: 1000,
            batch_size: 16,
            clip: DEFAULT_CLIP,
            reverse_kl: false,
            seed: 0,
        }
    }
}

impl NcapoConfig {
    fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter("hidden width and batch size must be positive".into()));
        }
        if !(self.lr > 0.0) || !(self.clip > 0.0) {
            return Err(Error::InvalidParameter("learning rate and clip must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NcapoRecord {
    pub iteration: usize,
    pub v_mu: f64,
    /// KL loss after the last gradient step of the iteration (0 for the initial record).
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NcapoRun {
    pub history: Vec<NcapoRecord>,
    pub policy: MlpPolicy,
}

impl NcapoRun {
    pub fn final_value(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.v_mu)
    }

    /// Columns `iteration,v_mu,loss`.
    pub fn write_history_csv<W: io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["iteration", "v_mu", "loss"])?;
        for r in &self.history {
            w.write_record([r.iteration.to_string(), fmt_f64(r.v_mu), fmt_f64(r.loss)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_history_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_history_csv(std::fs::File::create(path)?)
    }
}

fn value_at_start(mdp: &TabularMdp, net: &MlpPolicy) -> Result<f64> {
    let (v, _, _) = values_and_advantages(mdp, &net.policy()?)?;
    Ok(dot(&v, mdp.start_dist()))
}

/// Takes `steps` gradient steps toward fixed targets; returns the last loss.
fn fit_actor(net: &mut MlpPolicy, target: &NcapoTarget, cfg: &NcapoConfig) -> Result<f64> {
    let mut loss = 0.0;
    for _ in 0..cfg.grad_steps {
        let (l, g) = kl_loss_and_grad(net, &target.states, target, cfg.reverse_kl)?;
        net.descend(&g, cfg.lr);
        loss = l;
    }
    Ok(loss)
}

/// Trains a network policy on `mdp`; exact `V(mu)` is logged every iteration.
pub fn train_ncapo(mdp: &TabularMdp, mode: &NcapoMode, cfg: &NcapoConfig) -> Result<NcapoRun> {
    cfg.validate()?;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut init_rng = stream_rng(cfg.seed, Stream::Init);
    let mut net = MlpPolicy::new(ns, na, cfg.hidden, Activation::Relu, &mut init_rng)?;
    let mut history = Vec::with_capacity(cfg.iters + 1);
    history.push(NcapoRecord {
        iteration: 0,
        v_mu: value_at_start(mdp, &net)?,
        loss: 0.0,
    });
    match mode {
        NcapoMode::ExactAdv => {
            let order = (0..ns).flat_map(|s| (0..na).map(move |a| (s, a))).collect();
            let generator = Generator::cyclic_with_order(order, ns, na, cfg.batch_size.min(ns * na))?;
            let mut rng = stream_rng(cfg.seed, Stream::Coordinates);
            let dummy = crate::policy::SoftmaxTable::uniform(ns, na);
            for m in 0..cfg.iters {
                let batch = generator.next_batch(m, &dummy, mdp, &mut rng)?;
                let adv = values_and_advantages(mdp, &net.policy()?)?.2;
                let signs: Vec<Sign> = batch
                    .pairs
                    .iter()
                    .map(|&(s, a)| Sign::of(adv.get(s, a), EXACT_DEAD_ZONE))
                    .collect();
                let target = network_target(&net, &batch, &signs, cfg.clip)?;
                let loss = fit_actor(&mut net, &target, cfg)?;
                history.push(NcapoRecord {
                    iteration: m + 1,
                    v_mu: value_at_start(mdp, &net)?,
                    loss,
                });
            }
        }
        NcapoMode::ReplayRetrace(rs) => {
            let mut rng = stream_rng(cfg.seed, Stream::Rollouts);
            let mut behavior_net = net.clone();
            let mut buffer = ReplayBuffer::new(rs.capacity)?;
            let mut q = QEstimate::new(ns, na, rs.kappa, rs.lambda)?;
            let mut q_target = q.clone();
            let one_step = CoordinateBatch {
                iteration: 0,
                pairs: Vec::new(),
                sequential: true,
            };
            for m in 0..cfg.iters {
                let eps = rs.eps.at(m);
                let mut behavior = behavior_net.policy()?;
                for p in behavior.as_mut_slice() {
                    *p = (1.0 - eps) * *p + eps / na as f64;
                }
                for _ in 0..rs.rollouts_per_iter {
                    let start = sample_start(mdp, &mut rng);
                    buffer.push(sample_rollout(mdp, &behavior, start, rs.rollout_len, &mut rng)?);
                }
                let target_policy = net.policy()?;
                let mut loss = 0.0;
                for _ in 0..cfg.grad_steps {
                    let k = rng.random_range(0..buffer.len());
                    let rollout = buffer.iter().nth(k).expect("index within buffer");
                    let targets = retrace_targets(rollout, &q_target, &target_policy, mdp.gamma(), mdp.terminal_mask())?;
                    regress_on_rollout(&mut q, rollout, &targets)?;

                    let pi_b = behavior_net.policy()?;
                    let adv = advantages_from_q(&q.q, &pi_b);
                    let mut batch = one_step.clone();
                    batch.iteration = m;
                    batch.pairs = rollout.transitions().iter().map(|t| (t.state, t.action)).collect();
                    let signs: Vec<Sign> = batch
                        .pairs
                        .iter()
                        .map(|&(s, a)| Sign::of(adv.get(s, a), crate::critic::SIGN_DEAD_ZONE))
                        .collect();
                    let target = network_target(&behavior_net, &batch, &signs, cfg.clip)?;
                    let (l, g) = kl_loss_and_grad(&behavior_net, &target.states, &target, cfg.reverse_kl)?;
                    behavior_net.descend(&g, cfg.lr);
                    loss = l;
                }
                polyak(&mut q_target.q, &q.q, rs.tau_q);
                for (t, b) in net.params.iter_mut().zip(&behavior_net.params) {
                    *t = (1.0 - rs.tau_theta) * *t + rs.tau_theta * b;
                }
                history.push(NcapoRecord {
                    iteration: m + 1,
                    v_mu: value_at_start(mdp, &net)?,
                    loss,
                });
            }
        }
    }
    Ok(NcapoRun { history, policy: net })
}
