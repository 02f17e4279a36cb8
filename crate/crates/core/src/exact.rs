//! Exact evaluation of tabular policies by dense linear solves.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mdp::{TabularMdp, POLICY_TOL};
use crate::table::StateActionTable;

/// Sup-norm residual accepted from a direct solve.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-9;

/// Exact `V`, `Q`, `A` and discounted visitation of one policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueProfile {
    pub v: Vec<f64>,
    pub q: StateActionTable,
    pub adv: StateActionTable,
    /// `d^pi_mu` for the MDP's start distribution.
    pub visitation: Vec<f64>,
}

impl ValueProfile {
    /// `V(dist) = sum_s dist(s) V(s)`.
    pub fn value_at(&self, dist: &[f64]) -> f64 {
        dot(&self.v, dist)
    }
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn check_policy(mdp: &TabularMdp, policy: &StateActionTable) -> Result<()> {
    if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
        return Err(Error::InvalidPolicy(format!(
            "policy is {}x{}, MDP is {}x{}",
            policy.n_states(),
            policy.n_actions(),
            mdp.n_states(),
            mdp.n_actions()
        )));
    }
    policy.check_distribution_rows(POLICY_TOL)
}

/// `P_pi` as a dense state-to-state matrix and `r_pi` as a vector.
fn induced_chain(mdp: &TabularMdp, policy: &StateActionTable) -> (DMatrix<f64>, DVector<f64>) {
    let n = mdp.n_states();
    let mut p = DMatrix::zeros(n, n);
    let mut r = DVector::zeros(n);
    for s in 0..n {
        for (a, &pa) in policy.row(s).iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            r[s] += pa * mdp.reward(s, a);
            for (s2, &ps) in mdp.next_dist(s, a).iter().enumerate() {
                p[(s, s2)] += pa * ps;
            }
        }
    }
    (p, r)
}

fn solve_checked(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let x = a
        .clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::NumericalFailure("singular evaluation system".into()))?;
    let residual = (a * &x - b).amax();
    if !residual.is_finite() || residual > SOLVE_RESIDUAL_TOL * (1.0 + b.amax()) {
        return Err(Error::NumericalFailure(format!("linear solve residual {residual}")));
    }
    Ok(x)
}

/// Solves `(I - gamma P_pi) v = r_pi`.
pub fn state_values(mdp: &TabularMdp, policy: &StateActionTable) -> Result<Vec<f64>> {
    check_policy(mdp, policy)?;
    let n = mdp.n_states();
    let (p, r) = induced_chain(mdp, policy);
    let a = DMatrix::identity(n, n) - p * mdp.gamma();
    Ok(solve_checked(&a, &r)?.iter().copied().collect())
}

/// `Q(s,a) = r(s,a) + gamma sum_s' P(s'|s,a) v(s')`.
pub fn q_from_v(mdp: &TabularMdp, v: &[f64]) -> StateActionTable {
    let mut q = StateActionTable::zeros(mdp.n_states(), mdp.n_actions());
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            q.set(s, a, mdp.reward(s, a) + mdp.gamma() * dot(mdp.next_dist(s, a), v));
        }
    }
    q
}

/// `A(s,a) = Q(s,a) - V(s)`.
pub fn advantage(q: &StateActionTable, v: &[f64]) -> StateActionTable {
    let mut adv = q.clone();
    for (s, vs) in v.iter().enumerate() {
        for x in adv.row_mut(s) {
            *x -= vs;
        }
    }
    adv
}

/// `V`, `Q` and `A` without the visitation solve.
pub fn values_and_advantages(
    mdp: &TabularMdp,
    policy: &StateActionTable,
) -> Result<(Vec<f64>, StateActionTable, StateActionTable)> {
    let v = state_values(mdp, policy)?;
    let q = q_from_v(mdp, &v);
    let adv = advantage(&q, &v);
    Ok((v, q, adv))
}

/// Full exact evaluation; visitation uses the MDP's own start distribution.
pub fn policy_eval(mdp: &TabularMdp, policy: &StateActionTable) -> Result<ValueProfile> {
    let (v, q, adv) = values_and_advantages(mdp, policy)?;
    let visitation = visitation(mdp, policy, mdp.start_dist())?;
    Ok(ValueProfile { v, q, adv, visitation })
}

/// Discounted state visitation `d^pi_mu`, solving
/// `d^T = (1 - gamma) mu^T + gamma d^T P_pi`.
pub fn visitation(mdp: &TabularMdp, policy: &StateActionTable, start_dist: &[f64]) -> Result<Vec<f64>> {
    check_policy(mdp, policy)?;
    let n = mdp.n_states();
    if start_dist.len() != n {
        return Err(Error::Precondition("start distribution has wrong length".into()));
    }
    let total: f64 = start_dist.iter().sum();
    if start_dist.iter().any(|x| *x < 0.0) || (total - 1.0).abs() > 1e-10 {
        return Err(Error::Precondition(format!("start distribution sums to {total}")));
    }
    let (p, _) = induced_chain(mdp, policy);
    let a = DMatrix::identity(n, n) - p.transpose() * mdp.gamma();
    let b = DVector::from_iterator(n, start_dist.iter().map(|m| (1.0 - mdp.gamma()) * m));
    Ok(solve_checked(&a, &b)?.iter().copied().collect())
}

/// Visitation started from a single state, `d^pi_s`.
pub fn visitation_from(mdp: &TabularMdp, policy: &StateActionTable, state: usize) -> Result<Vec<f64>> {
    let mut start = vec![0.0; mdp.n_states()];
    start[state] = 1.0;
    visitation(mdp, policy, &start)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalValues {
    pub v_star: Vec<f64>,
    /// Greedy action per state, ties broken by the lowest index.
    pub greedy_actions: Vec<usize>,
    /// The greedy actions as a deterministic policy table.
    pub greedy: StateActionTable,
}

/// Value iteration until the Bellman residual drops below
/// `tol (1 - gamma) / gamma`, which bounds `||v - V*||_inf < tol`.
pub fn optimal_values(mdp: &TabularMdp, tol: f64) -> Result<OptimalValues> {
    if !(tol > 0.0) {
        return Err(Error::Precondition(format!("tolerance {tol} must be positive")));
    }
    let gamma = mdp.gamma();
    let threshold = tol * (1.0 - gamma) / gamma;
    let mut v = vec![0.0; mdp.n_states()];
    loop {
        let q = q_from_v(mdp, &v);
        let next: Vec<f64> = q
            .rows()
            .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let residual = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if residual < threshold {
            break;
        }
    }
    let q = q_from_v(mdp, &v);
    let greedy_actions: Vec<usize> = q
        .rows()
        .map(|row| {
            let mut best = 0;
            for (a, x) in row.iter().enumerate() {
                if *x > row[best] {
                    best = a;
                }
            }
            best
        })
        .collect();
    let mut greedy = StateActionTable::zeros(mdp.n_states(), mdp.n_actions());
    for (s, a) in greedy_actions.iter().enumerate() {
        greedy.set(s, *a, 1.0);
    }
    Ok(OptimalValues {
        v_star: v,
        greedy_actions,
        greedy,
    })
}

/// Performance difference
/// `(1 / (1 - gamma)) sum_s d^new_mu(s) sum_a pi_new(a|s) A^old(s,a)`,
/// which equals `V^new(mu) - V^old(mu)`.
pub fn perf_difference(
    mdp: &TabularMdp,
    pi_new: &StateActionTable,
    pi_old: &StateActionTable,
    start_dist: &[f64],
) -> Result<f64> {
    let d_new = visitation(mdp, pi_new, start_dist)?;
    let (_, _, adv_old) = values_and_advantages(mdp, pi_old)?;
    let inner: f64 = d_new
        .iter()
        .enumerate()
        .map(|(s, d)| d * dot(pi_new.row(s), adv_old.row(s)))
        .sum();
    Ok(inner / (1.0 - mdp.gamma()))
}
