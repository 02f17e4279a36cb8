//! Sample-based off-policy evaluation: a FIFO replay buffer and a tabular
//! Retrace(lambda) critic.
//!
//! Retrace targets use the standard forward view with truncated traces
//! `c_i = lambda * min(1, pi(a_i|s_i) / b_i)` and a zero bootstrap at
//! terminal states.

use std::collections::VecDeque;
use std::path::Path;

use crate::error::{Error, Result};
use crate::exact::dot;
use crate::mdp::Rollout;
use crate::policy::Sign;
use crate::table::StateActionTable;

/// Advantage estimates smaller than this in magnitude get sign 0.
pub const SIGN_DEAD_ZONE: f64 = 1e-8;

/// Bounded buffer of rollouts; the oldest rollout is evicted first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    rollouts: VecDeque<Rollout>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidParameter("replay capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            rollouts: VecDeque::with_capacity(capacity.min(4096)),
        })
    }

    pub fn push(&mut self, rollout: Rollout) {
        if self.rollouts.len() == self.capacity {
            self.rollouts.pop_front();
        }
        self.rollouts.push_back(rollout);
    }

    pub fn len(&self) -> usize {
        self.rollouts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rollouts.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Rollouts from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Rollout> {
        self.rollouts.iter()
    }
}

/// Tabular Q estimate with its regression step size and trace parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct QEstimate {
    pub q: StateActionTable,
    kappa: f64,
    lambda: f64,
}

impl QEstimate {
    pub fn new(n_states: usize, n_actions: usize, kappa: f64, lambda: f64) -> Result<Self> {
        Self::from_table(StateActionTable::zeros(n_states, n_actions), kappa, lambda)
    }

    pub fn from_table(q: StateActionTable, kappa: f64, lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&kappa) {
            return Err(Error::InvalidParameter(format!("kappa {kappa} outside [0, 1]")));
        }
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::InvalidParameter(format!("lambda {lambda} outside (0, 1]")));
        }
        if q.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("q has a non-finite entry".into()));
        }
        Ok(Self { q, kappa, lambda })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.q.save_csv(path)
    }
}

/// `sum_a pi(a|s) q(s,a)`, or 0 at a terminal state.
fn expected_q(q: &StateActionTable, policy: &StateActionTable, terminal: &[bool], s: usize) -> f64 {
    if terminal[s] {
        0.0
    } else {
        dot(policy.row(s), q.row(s))
    }
}

/// Retrace targets for every step of `rollout`.
///
/// `terminal` marks states whose bootstrap value is 0.
pub fn retrace_targets(
    rollout: &Rollout,
    q: &QEstimate,
    target_policy: &StateActionTable,
    gamma: f64,
    terminal: &[bool],
) -> Result<Vec<f64>> {
    retrace_targets_with(rollout, &q.q, q.lambda, target_policy, gamma, terminal)
}

fn retrace_targets_with(
    rollout: &Rollout,
    q: &StateActionTable,
    lambda: f64,
    target_policy: &StateActionTable,
    gamma: f64,
    terminal: &[bool],
) -> Result<Vec<f64>> {
    let steps = rollout.transitions();
    if let Some(t) = steps.iter().find(|t| !(t.behavior_prob > 0.0)) {
        return Err(Error::Contract(format!("zero behavior probability at state {}", t.state)));
    }
    let mut targets = vec![0.0; steps.len()];
    // Backward recursion on G_t = target_t - q(s_t, a_t) = delta_t + gamma c_{t+1} G_{t+1}.
    let mut carry = 0.0;
    for (t, step) in steps.iter().enumerate().rev() {
        let q_sa = q.get(step.state, step.action);
        let delta = step.reward + gamma * expected_q(q, target_policy, terminal, step.next_state) - q_sa;
        let g = if t + 1 < steps.len() {
            let nxt = &steps[t + 1];
            let ratio = target_policy.get(nxt.state, nxt.action) / nxt.behavior_prob;
            delta + gamma * lambda * ratio.min(1.0) * carry
        } else {
            delta
        };
        carry = g;
        targets[t] = q_sa + g;
    }
    Ok(targets)
}

/// Regresses `q` onto Retrace targets for `n_sweeps` passes over the buffer.
///
/// Each sweep computes targets from the sweep-start table and moves every
/// visited entry by `kappa` times its mean residual over that sweep.
pub fn fit_q(
    buffer: &ReplayBuffer,
    q: &mut QEstimate,
    target_policy: &StateActionTable,
    gamma: f64,
    terminal: &[bool],
    n_sweeps: usize,
) -> Result<()> {
    if buffer.is_empty() {
        return Err(Error::Precondition("cannot fit q on an empty buffer".into()));
    }
    let (ns, na) = (q.q.n_states(), q.q.n_actions());
    let mut acc = Residuals::new(ns * na);
    for _ in 0..n_sweeps {
        acc.clear();
        for rollout in buffer.iter() {
            let targets = retrace_targets_with(rollout, &q.q, q.lambda, target_policy, gamma, terminal)?;
            acc.add(rollout, &targets, &q.q);
        }
        acc.apply(q);
    }
    Ok(())
}

/// One regression step of `q` on the given per-step targets of `rollout`,
/// moving each visited entry by `kappa` times its mean residual.
pub fn regress_on_rollout(q: &mut QEstimate, rollout: &Rollout, targets: &[f64]) -> Result<()> {
    if targets.len() != rollout.len() {
        return Err(Error::Contract("one target per rollout step required".into()));
    }
    let mut acc = Residuals::new(q.q.as_slice().len());
    acc.add(rollout, targets, &q.q);
    acc.apply(q);
    Ok(())
}

struct Residuals {
    sum: Vec<f64>,
    count: Vec<u32>,
}

impl Residuals {
    fn new(n: usize) -> Self {
        Self {
            sum: vec![0.0; n],
            count: vec![0; n],
        }
    }

    fn clear(&mut self) {
        self.sum.fill(0.0);
        self.count.fill(0);
    }

    fn add(&mut self, rollout: &Rollout, targets: &[f64], q: &StateActionTable) {
        let na = q.n_actions();
        for (step, target) in rollout.transitions().iter().zip(targets) {
            let k = step.state * na + step.action;
            self.sum[k] += target - q.as_slice()[k];
            self.count[k] += 1;
        }
    }

    fn apply(&self, q: &mut QEstimate) {
        let kappa = q.kappa;
        for (k, x) in q.q.as_mut_slice().iter_mut().enumerate() {
            if self.count[k] > 0 {
                *x += kappa * self.sum[k] / f64::from(self.count[k]);
            }
        }
    }
}

/// `q(s,a) - sum_b pi(b|s) q(s,b)`.
pub fn advantages_from_q(q: &StateActionTable, policy: &StateActionTable) -> StateActionTable {
    let mut adv = q.clone();
    for s in 0..q.n_states() {
        let v = dot(policy.row(s), q.row(s));
        for x in adv.row_mut(s) {
            *x -= v;
        }
    }
    adv
}

/// Row-major advantage signs with the [`SIGN_DEAD_ZONE`].
pub fn advantage_signs_from_q(q: &StateActionTable, policy: &StateActionTable) -> Vec<Sign> {
    advantages_from_q(q, policy)
        .as_slice()
        .iter()
        .map(|x| Sign::of(*x, SIGN_DEAD_ZONE))
        .collect()
}

/// Polyak averaging `target <- (1 - tau) target + tau source`.
pub fn polyak(target: &mut StateActionTable, source: &StateActionTable, tau: f64) {
    for (t, s) in target.as_mut_slice().iter_mut().zip(source.as_slice()) {
        *t = (1.0 - tau) * *t + tau * s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::values_and_advantages;
    use crate::mdp::{make_chain, sample_rollout, Transition};
    use crate::rng::{stream_rng, Stream};

    fn step(state: usize, action: usize, reward: f64, next_state: usize, b: f64) -> Transition {
        Transition {
            state,
            action,
            reward,
            next_state,
            behavior_prob: b,
        }
    }

    #[test]
    fn buffer_is_fifo() {
        let mut buf = ReplayBuffer::new(2).unwrap();
        for r in 0..4 {
            buf.push(Rollout::new(vec![step(0, 0, r as f64, 1, 1.0)]).unwrap());
            assert!(buf.len() <= 2);
        }
        let rewards: Vec<f64> = buf.iter().map(|r| r.transitions()[0].reward).collect();
        assert_eq!(rewards, vec![2.0, 3.0]);
        assert!(ReplayBuffer::new(0).is_err());
    }

    #[test]
    fn one_step_target_and_lambda_zero() {
        let q = QEstimate::from_table(StateActionTable::from_rows(&[vec![1.0, 2.0], vec![3.0, 5.0]]).unwrap(), 0.1, 1.0)
            .unwrap();
        let pi = StateActionTable::from_rows(&[vec![0.5, 0.5], vec![0.25, 0.75]]).unwrap();
        let roll = Rollout::new(vec![step(0, 1, 0.5, 1, 0.5)]).unwrap();
        let t = retrace_targets(&roll, &q, &pi, 0.9, &[false, false]).unwrap();
        assert!((t[0] - (0.5 + 0.9 * 4.5)).abs() < 1e-15);
        let t = retrace_targets(&roll, &q, &pi, 0.9, &[false, true]).unwrap();
        assert!((t[0] - 0.5).abs() < 1e-15);

        // lambda -> 0 cuts every trace: each target is its own one-step target.
        let q0 = QEstimate::from_table(q.q.clone(), 0.1, 1e-300).unwrap();
        let roll = Rollout::new(vec![step(0, 1, 0.5, 1, 0.5), step(1, 0, 1.0, 0, 0.2)]).unwrap();
        let t = retrace_targets(&roll, &q0, &pi, 0.9, &[false, false]).unwrap();
        assert!((t[0] - (0.5 + 0.9 * 4.5)).abs() < 1e-12);
        assert!((t[1] - (1.0 + 0.9 * 1.5)).abs() < 1e-12);
    }

    #[test]
    fn two_step_trace_by_hand() {
        let q = QEstimate::from_table(StateActionTable::from_rows(&[vec![1.0, 2.0], vec![3.0, 5.0]]).unwrap(), 0.1, 0.8)
            .unwrap();
        let pi = StateActionTable::from_rows(&[vec![0.5, 0.5], vec![0.25, 0.75]]).unwrap();
        let roll = Rollout::new(vec![step(0, 1, 0.5, 1, 0.5), step(1, 0, 1.0, 0, 0.2)]).unwrap();
        let g = 0.9;
        let d0 = 0.5 + g * 4.5 - 2.0;
        let d1 = 1.0 + g * 1.5 - 3.0;
        let c1 = 0.8 * (0.25f64 / 0.2).min(1.0);
        let t = retrace_targets(&roll, &q, &pi, g, &[false, false]).unwrap();
        assert!((t[0] - (2.0 + d0 + g * c1 * d1)).abs() < 1e-14);
        assert!((t[1] - (3.0 + d1)).abs() < 1e-14);
    }

    #[test]
    fn exact_q_is_a_fixed_point_on_deterministic_chain() {
        let mdp = make_chain(6, 0.95, 0.1, 100.0).unwrap();
        let pi = StateActionTable::from_rows(&vec![vec![0.3, 0.7]; 7]).unwrap();
        let (_, q_exact, _) = values_and_advantages(&mdp, &pi).unwrap();
        let q = QEstimate::from_table(q_exact.clone(), 0.1, 1.0).unwrap();
        let behavior = StateActionTable::uniform_policy(7, 2);
        let mut rng = stream_rng(3, Stream::Rollouts);
        for _ in 0..20 {
            let roll = sample_rollout(&mdp, &behavior, 1, 30, &mut rng).unwrap();
            let t = retrace_targets(&roll, &q, &pi, 0.95, mdp.terminal_mask()).unwrap();
            for (step, x) in roll.transitions().iter().zip(t) {
                assert!((x - q_exact.get(step.state, step.action)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn repeated_one_step_rollout_contracts_to_fixed_point() {
        // q(0,0) <- q + kappa (1 + 0.5 q - q): fixed point 2.
        let roll = Rollout::new(vec![step(0, 0, 1.0, 0, 1.0)]).unwrap();
        let mut buf = ReplayBuffer::new(4).unwrap();
        buf.push(roll);
        let pi = StateActionTable::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let mut q = QEstimate::new(1, 2, 0.5, 1.0).unwrap();
        fit_q(&buf, &mut q, &pi, 0.5, &[false], 200).unwrap();
        assert!((q.q.get(0, 0) - 2.0).abs() < 1e-12);
        assert_eq!(q.q.get(0, 1), 0.0);

        let mut frozen = QEstimate::new(1, 2, 0.0, 1.0).unwrap();
        fit_q(&buf, &mut frozen, &pi, 0.5, &[false], 10).unwrap();
        assert_eq!(frozen.q.get(0, 0), 0.0);
        assert!(fit_q(&ReplayBuffer::new(1).unwrap(), &mut frozen, &pi, 0.5, &[false], 1).is_err());
    }

    #[test]
    fn signs_from_q() {
        let uni = StateActionTable::uniform_policy(2, 2);
        let q = StateActionTable::from_rows(&[vec![1.0, 0.0], vec![4.0, 4.0]]).unwrap();
        assert_eq!(advantage_signs_from_q(&q, &uni), vec![Sign::Pos, Sign::Neg, Sign::Zero, Sign::Zero]);
        let adv = advantages_from_q(&q, &uni);
        for s in 0..2 {
            assert!(dot(uni.row(s), adv.row(s)).abs() < 1e-12);
        }
    }

    #[test]
    fn polyak_mixing() {
        let mut t = StateActionTable::filled(1, 2, 1.0);
        polyak(&mut t, &StateActionTable::filled(1, 2, 3.0), 0.05);
        assert!((t.get(0, 1) - 1.1).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(QEstimate::new(2, 2, 0.1, 0.0).is_err());
        assert!(QEstimate::new(2, 2, 1.5, 1.0).is_err());
    }
}
