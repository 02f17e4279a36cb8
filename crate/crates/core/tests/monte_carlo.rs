//! Exact evaluation checked against sampled returns.

#![allow(clippy::needless_range_loop)]

mod common;

use capo::exact::{optimal_values, policy_eval};
use capo::mdp::{make_bandit, make_random_mdp, sample_rollout};
use capo::rng::{stream_rng, Stream};
use capo::{StateActionTable, TabularMdp};
use common::{policy_of, random_logits, rng, to_table};

/// Mean and standard error of discounted returns from `start`.
fn sampled_value(mdp: &TabularMdp, pi: &StateActionTable, start: usize, episodes: usize, len: usize, seed: u64) -> (f64, f64) {
    let mut rng = stream_rng(seed, Stream::Rollouts);
    let returns: Vec<f64> = (0..episodes)
        .map(|_| {
            let r = sample_rollout(mdp, pi, start, len, &mut rng).unwrap();
            r.transitions()
                .iter()
                .enumerate()
                .map(|(t, tr)| mdp.gamma().powi(t as i32) * tr.reward)
                .sum()
        })
        .collect();
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn optimal_value_matches_greedy_rollouts() {
    let mdp = make_random_mdp(2, 2, 0.9, 7).unwrap();
    let opt = optimal_values(&mdp, 1e-12).unwrap();
    // 2 states x 2500 episodes x 200 steps = 10^6 transitions.
    for s in 0..2 {
        let (mean, se) = sampled_value(&mdp, &opt.greedy, s, 2500, 200, s as u64);
        assert!((mean - opt.v_star[s]).abs() < 5.0 * se + 1e-3, "state {s}: {mean} vs {}", opt.v_star[s]);
    }
}

#[test]
fn policy_eval_matches_sampled_returns() {
    let mdp = make_random_mdp(3, 2, 0.9, 21).unwrap();
    let pi = to_table(&policy_of(&random_logits(3, 2, 1.0, &mut rng(21))));
    let exact = policy_eval(&mdp, &pi).unwrap();
    for s in 0..3 {
        let (mean, se) = sampled_value(&mdp, &pi, s, 33_334, 150, 100 + s as u64);
        assert!((mean - exact.v[s]).abs() < 5.0 * se, "state {s}: {mean} vs {}", exact.v[s]);
    }
}

#[test]
fn bandit_value_is_expected_reward() {
    let rewards = [0.9, 0.8, 0.1];
    let mdp = make_bandit(&rewards, 0.9).unwrap();
    let pi = StateActionTable::from_rows(&[vec![0.5, 0.3, 0.2], vec![1.0 / 3.0; 3]]).unwrap();
    let exact = policy_eval(&mdp, &pi).unwrap();
    assert!((exact.v[0] - (0.45 + 0.24 + 0.02)).abs() < 1e-12);
    let (mean, se) = sampled_value(&mdp, &pi, 0, 100_000, 5, 3);
    assert!((mean - exact.v[0]).abs() < 5.0 * se);
}
