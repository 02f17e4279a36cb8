//! Finite MDPs, the bandit, Chain and random environments, and trajectory sampling.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::rng::{sample_index, stream_rng, Stream};
use crate::table::StateActionTable;

/// Row-sum tolerance for transition rows and start distributions.
pub const DIST_TOL: f64 = 1e-12;
/// Row-sum tolerance for policies handed to the sampler.
pub const POLICY_TOL: f64 = 1e-9;

/// Chain action that collects the step reward and ends the episode.
pub const CHAIN_TERMINATE: usize = 0;
/// Chain action that moves one state to the right.
pub const CHAIN_RIGHT: usize = 1;

/// Finite discounted MDP with dense transitions `P(s'|s,a)` stored `[s][a][s']`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    reward: StateActionTable,
    gamma: f64,
    start_dist: Vec<f64>,
    terminal_mask: Vec<bool>,
}

impl TabularMdp {
    /// Builds and validates an MDP.
    pub fn new(
        transition: Vec<f64>,
        reward: StateActionTable,
        gamma: f64,
        start_dist: Vec<f64>,
        terminal_mask: Vec<bool>,
    ) -> Result<Self> {
        let n_states = reward.n_states();
        let n_actions = reward.n_actions();
        if transition.len() != n_states * n_actions * n_states {
            return Err(Error::InvalidEnvironment(format!(
                "transition tensor has {} entries, expected {}",
                transition.len(),
                n_states * n_actions * n_states
            )));
        }
        let mdp = Self {
            n_states,
            n_actions,
            transition,
            reward,
            gamma,
            start_dist,
            terminal_mask,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidEnvironment(msg));
        if self.n_states == 0 || self.n_actions == 0 {
            return bad("empty state or action space".into());
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma {} outside (0, 1)", self.gamma));
        }
        if self.start_dist.len() != self.n_states || self.terminal_mask.len() != self.n_states {
            return bad("start distribution or terminal mask has wrong length".into());
        }
        check_distribution(&self.start_dist, "start distribution")?;
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                check_distribution(self.next_dist(s, a), &format!("P(.|{s},{a})"))?;
                let r = self.reward(s, a);
                if !r.is_finite() {
                    return bad(format!("reward r({s},{a}) = {r} is not finite"));
                }
                if self.terminal_mask[s] && (self.next_dist(s, a)[s] != 1.0 || r != 0.0) {
                    return bad(format!("terminal state {s} must self-loop with zero reward"));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    #[inline]
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward.get(s, a)
    }

    pub fn reward_table(&self) -> &StateActionTable {
        &self.reward
    }

    /// `P(.|s,a)` as a slice over next states.
    #[inline]
    pub fn next_dist(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    pub fn start_dist(&self) -> &[f64] {
        &self.start_dist
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal_mask[s]
    }

    pub fn terminal_mask(&self) -> &[bool] {
        &self.terminal_mask
    }

    /// Returns a copy with a different start distribution.
    pub fn with_start_dist(&self, start_dist: Vec<f64>) -> Result<Self> {
        let mut out = self.clone();
        out.start_dist = start_dist;
        out.validate()?;
        Ok(out)
    }

    /// Uniform distribution over all states.
    pub fn uniform_dist(&self) -> Vec<f64> {
        vec![1.0 / self.n_states as f64; self.n_states]
    }
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidEnvironment(format!("{what} has a negative or non-finite entry")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > DIST_TOL {
        return Err(Error::InvalidEnvironment(format!("{what} sums to {total}")));
    }
    Ok(())
}

/// Deterministic single-state `K`-armed bandit.
///
/// State 0 is the start state; every arm moves to the absorbing zero-reward
/// state 1 and pays `rewards[a]`, so `V(start) = sum_a pi(a) r(a)` for any
/// discount.
pub fn make_bandit(rewards: &[f64], gamma: f64) -> Result<TabularMdp> {
    let k = rewards.len();
    if k < 2 {
        return Err(Error::InvalidEnvironment(format!("bandit needs at least 2 arms, got {k}")));
    }
    let mut transition = vec![0.0; 2 * k * 2];
    let mut reward = StateActionTable::zeros(2, k);
    for (a, r) in rewards.iter().enumerate() {
        transition[a * 2 + 1] = 1.0;
        transition[(k + a) * 2 + 1] = 1.0;
        reward.set(0, a, *r);
    }
    TabularMdp::new(transition, reward, gamma, vec![1.0, 0.0], vec![false, true])
}

/// Chain of states `S0..=Sn`.
///
/// The agent starts in `S1`. From `S1..S(n-1)`, [`CHAIN_TERMINATE`] pays
/// `step_reward` and moves to the absorbing sink `S0`; [`CHAIN_RIGHT`] moves
/// to the next state and pays 0, except `S(n-1) -> Sn` which pays
/// `goal_reward`. `S0` and `Sn` are absorbing.
pub fn make_chain(n: usize, gamma: f64, step_reward: f64, goal_reward: f64) -> Result<TabularMdp> {
    if n < 3 {
        return Err(Error::InvalidEnvironment(format!("chain needs n >= 3, got {n}")));
    }
    let n_states = n + 1;
    let n_actions = 2;
    let mut transition = vec![0.0; n_states * n_actions * n_states];
    let mut reward = StateActionTable::zeros(n_states, n_actions);
    let idx = |s: usize, a: usize, s2: usize| (s * n_actions + a) * n_states + s2;
    for s in 0..n_states {
        if s == 0 || s == n {
            for a in 0..n_actions {
                transition[idx(s, a, s)] = 1.0;
            }
            continue;
        }
        transition[idx(s, CHAIN_TERMINATE, 0)] = 1.0;
        reward.set(s, CHAIN_TERMINATE, step_reward);
        transition[idx(s, CHAIN_RIGHT, s + 1)] = 1.0;
        if s == n - 1 {
            reward.set(s, CHAIN_RIGHT, goal_reward);
        }
    }
    let mut start = vec![0.0; n_states];
    start[1] = 1.0;
    let mut terminal = vec![false; n_states];
    terminal[0] = true;
    terminal[n] = true;
    TabularMdp::new(transition, reward, gamma, start, terminal)
}

/// Random dense MDP for convergence checks: Dirichlet(1) transition rows,
/// rewards uniform in `[0, 1)`, uniform start distribution.
pub fn make_random_mdp(n_states: usize, n_actions: usize, gamma: f64, seed: u64) -> Result<TabularMdp> {
    if n_states < 2 || n_actions < 2 {
        return Err(Error::InvalidEnvironment(format!(
            "random MDP needs at least 2 states and 2 actions, got {n_states}x{n_actions}"
        )));
    }
    let mut rng = stream_rng(seed, Stream::Environment);
    let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        let row: Vec<f64> = (0..n_states)
            .map(|_| {
                let x: f64 = Exp1.sample(&mut rng);
                x.max(1e-12)
            })
            .collect();
        let total: f64 = row.iter().sum();
        let mut row: Vec<f64> = row.iter().map(|x| x / total).collect();
        // Push the rounding residue onto the largest entry.
        let residue = 1.0 - row.iter().sum::<f64>();
        let imax = (0..n_states).max_by(|&i, &j| row[i].total_cmp(&row[j])).unwrap_or(0);
        row[imax] += residue;
        transition.extend(row);
    }
    let rewards: Vec<f64> = (0..n_states * n_actions).map(|_| rng.random::<f64>()).collect();
    let reward = StateActionTable::from_vec(n_states, n_actions, rewards)?;
    TabularMdp::new(
        transition,
        reward,
        gamma,
        vec![1.0 / n_states as f64; n_states],
        vec![false; n_states],
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
    /// Probability the behavior policy assigned to `action` in `state`.
    pub behavior_prob: f64,
}

/// Finite trajectory; never empty and never continues past a terminal state.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    transitions: Vec<Transition>,
}

impl Rollout {
    pub fn new(transitions: Vec<Transition>) -> Result<Self> {
        if transitions.is_empty() {
            return Err(Error::Contract("rollout must hold at least one transition".into()));
        }
        if let Some(t) = transitions.iter().find(|t| !(t.behavior_prob > 0.0 && t.behavior_prob <= 1.0)) {
            return Err(Error::Contract(format!(
                "behavior probability {} at state {} is outside (0, 1]",
                t.behavior_prob, t.state
            )));
        }
        Ok(Self { transitions })
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

/// Samples one trajectory of at most `max_len` transitions following the
/// action distributions in `policy`, stopping on entry into a terminal state.
pub fn sample_rollout<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &StateActionTable,
    start_state: usize,
    max_len: usize,
    rng: &mut R,
) -> Result<Rollout> {
    if start_state >= mdp.n_states() {
        return Err(Error::Precondition(format!("start state {start_state} out of range")));
    }
    if max_len == 0 {
        return Err(Error::Precondition("max_len must be at least 1".into()));
    }
    if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
        return Err(Error::InvalidPolicy("policy shape does not match the MDP".into()));
    }
    policy.check_distribution_rows(POLICY_TOL)?;

    let mut transitions = Vec::with_capacity(max_len.min(1024));
    let mut s = start_state;
    loop {
        let probs = policy.row(s);
        let a = sample_index(probs, rng);
        let next = sample_index(mdp.next_dist(s, a), rng);
        transitions.push(Transition {
            state: s,
            action: a,
            reward: mdp.reward(s, a),
            next_state: next,
            behavior_prob: probs[a],
        });
        if mdp.is_terminal(next) || transitions.len() == max_len {
            break;
        }
        s = next;
    }
    Rollout::new(transitions)
}

/// Samples a start state from the MDP's start distribution.
pub fn sample_start<R: Rng + ?Sized>(mdp: &TabularMdp, rng: &mut R) -> usize {
    sample_index(mdp.start_dist(), rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bandit_shape_and_errors() {
        let m = make_bandit(&[1.0, 0.99, -1.0], 0.9).unwrap();
        assert_eq!((m.n_states(), m.n_actions()), (2, 3));
        assert!(m.is_terminal(1) && !m.is_terminal(0));
        assert!(matches!(make_bandit(&[1.0], 0.9), Err(Error::InvalidEnvironment(_))));
    }

    #[test]
    fn chain_layout() {
        let m = make_chain(10, 0.99, 0.1, 100.0).unwrap();
        assert_eq!(m.n_states(), 11);
        assert_eq!(m.start_dist()[1], 1.0);
        assert!(m.is_terminal(0) && m.is_terminal(10));
        assert_eq!(m.reward(3, CHAIN_TERMINATE), 0.1);
        assert_eq!(m.next_dist(3, CHAIN_TERMINATE)[0], 1.0);
        assert_eq!(m.next_dist(3, CHAIN_RIGHT)[4], 1.0);
        assert_eq!(m.reward(9, CHAIN_RIGHT), 100.0);
        assert_eq!(m.reward(8, CHAIN_RIGHT), 0.0);
        assert!(make_chain(2, 0.99, 0.1, 100.0).is_err());
    }

    #[test]
    fn random_mdp_is_deterministic_and_valid() {
        let a = make_random_mdp(3, 2, 0.9, 1).unwrap();
        let b = make_random_mdp(3, 2, 0.9, 1).unwrap();
        assert_eq!(a, b);
        assert!(a.validate().is_ok());
        assert_ne!(a, make_random_mdp(3, 2, 0.9, 2).unwrap());
        assert!(make_random_mdp(1, 2, 0.9, 0).is_err());
    }

    #[test]
    fn validation_rejects_bad_models() {
        let good = make_bandit(&[1.0, 0.0], 0.9).unwrap();
        let mut bad = good.clone();
        bad.gamma = 1.0;
        assert!(bad.validate().is_err());
        let mut bad = good.clone();
        bad.start_dist = vec![0.5, 0.6];
        assert!(bad.validate().is_err());
        let mut bad = good.clone();
        bad.transition[0] = 0.5;
        assert!(bad.validate().is_err());
        let mut bad = good;
        bad.reward.set(1, 0, 1.0);
        assert!(bad.validate().is_err(), "terminal states must pay zero");
    }

    #[test]
    fn rollout_right_policy_on_chain() {
        let m = make_chain(10, 0.99, 0.1, 100.0).unwrap();
        let mut pol = StateActionTable::zeros(11, 2);
        for s in 0..11 {
            pol.set(s, CHAIN_RIGHT, 1.0);
        }
        let mut rng = stream_rng(0, Stream::Rollouts);
        let ro = sample_rollout(&m, &pol, 1, 100, &mut rng).unwrap();
        let rewards: Vec<f64> = ro.transitions().iter().map(|t| t.reward).collect();
        let mut expected = vec![0.0; 8];
        expected.push(100.0);
        assert_eq!(rewards, expected);
        assert_eq!(ro.transitions().last().unwrap().next_state, 10);
        assert!(ro.transitions().iter().all(|t| t.behavior_prob == 1.0));
    }

    #[test]
    fn rollout_respects_max_len_and_policy_checks() {
        let m = make_random_mdp(3, 2, 0.9, 4).unwrap();
        let pol = StateActionTable::uniform_policy(3, 2);
        let mut rng = stream_rng(3, Stream::Rollouts);
        let ro = sample_rollout(&m, &pol, 0, 1, &mut rng).unwrap();
        assert_eq!(ro.len(), 1);
        let bad = StateActionTable::from_rows(&[vec![0.5, 0.4], vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert!(matches!(sample_rollout(&m, &bad, 0, 5, &mut rng), Err(Error::InvalidPolicy(_))));
        assert!(sample_rollout(&m, &pol, 3, 5, &mut rng).is_err());
        assert!(sample_rollout(&m, &pol, 0, 0, &mut rng).is_err());
    }

    #[test]
    fn rollout_contract() {
        assert!(Rollout::new(vec![]).is_err());
        let t = Transition { state: 0, action: 0, reward: 0.0, next_state: 0, behavior_prob: 0.0 };
        assert!(Rollout::new(vec![t]).is_err());
    }
}
