//! Reference computations written independently of the library: plain loops,
//! fixed-point iteration and Gaussian elimination instead of the crate's
//! solvers.

#![allow(dead_code, clippy::needless_range_loop)]

use std::io::Write;

use capo::TabularMdp;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

/// Writes straight to the process stderr so the line survives the test
/// harness's output capture.
pub fn report(line: &str) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
}

pub fn rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed ^ 0x5eed_cafe)
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

pub fn random_logits<R: Rng>(ns: usize, na: usize, scale: f64, rng: &mut R) -> Vec<Vec<f64>> {
    (0..ns)
        .map(|_| (0..na).map(|_| rng.random_range(-scale..scale)).collect())
        .collect()
}

pub fn policy_of(logits: &[Vec<f64>]) -> Vec<Vec<f64>> {
    logits.iter().map(|r| softmax(r)).collect()
}

pub fn to_table(rows: &[Vec<f64>]) -> capo::StateActionTable {
    capo::StateActionTable::from_rows(rows).unwrap()
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

fn p_pi(mdp: &TabularMdp, pi: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = mdp.n_states();
    let mut p = vec![vec![0.0; n]; n];
    for s in 0..n {
        for a in 0..mdp.n_actions() {
            for (s2, q) in mdp.next_dist(s, a).iter().enumerate() {
                p[s][s2] += pi[s][a] * q;
            }
        }
    }
    p
}

/// Reference `V^pi`, `Q^pi` and `A^pi` from `(I - gamma P_pi) V = r_pi`.
pub struct Eval {
    pub v: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub adv: Vec<Vec<f64>>,
}

pub fn evaluate(mdp: &TabularMdp, pi: &[Vec<f64>]) -> Eval {
    let (n, k, g) = (mdp.n_states(), mdp.n_actions(), mdp.gamma());
    let p = p_pi(mdp, pi);
    let a: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| f64::from(u8::from(i == j)) - g * p[i][j]).collect())
        .collect();
    let r: Vec<f64> = (0..n).map(|s| (0..k).map(|x| pi[s][x] * mdp.reward(s, x)).sum()).collect();
    let v = gauss_solve(a, r);
    let q: Vec<Vec<f64>> = (0..n)
        .map(|s| {
            (0..k)
                .map(|x| {
                    let next: f64 = mdp.next_dist(s, x).iter().zip(&v).map(|(p, v)| p * v).sum();
                    mdp.reward(s, x) + g * next
                })
                .collect()
        })
        .collect();
    let adv = q
        .iter()
        .zip(&v)
        .map(|(row, vs)| row.iter().map(|x| x - vs).collect())
        .collect();
    Eval { v, q, adv }
}

/// `d^pi_rho` by truncating `(1 - gamma) sum_t gamma^t rho^T P_pi^t`.
pub fn visitation(mdp: &TabularMdp, pi: &[Vec<f64>], rho: &[f64]) -> Vec<f64> {
    let n = mdp.n_states();
    let g = mdp.gamma();
    let p = p_pi(mdp, pi);
    let mut cur = rho.to_vec();
    let mut d = vec![0.0; n];
    let mut w = 1.0 - g;
    while w > 1e-17 {
        for s in 0..n {
            d[s] += w * cur[s];
        }
        let mut next = vec![0.0; n];
        for s in 0..n {
            for s2 in 0..n {
                next[s2] += cur[s] * p[s][s2];
            }
        }
        cur = next;
        w *= g;
    }
    d
}

pub fn one_hot(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

/// `V*` by value iteration to a residual far below test tolerances.
pub fn optimal_v(mdp: &TabularMdp) -> Vec<f64> {
    let (n, k, g) = (mdp.n_states(), mdp.n_actions(), mdp.gamma());
    let mut v = vec![0.0; n];
    loop {
        let next: Vec<f64> = (0..n)
            .map(|s| {
                (0..k)
                    .map(|a| mdp.reward(s, a) + g * mdp.next_dist(s, a).iter().zip(&v).map(|(p, x)| p * x).sum::<f64>())
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let diff = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if diff < 1e-13 {
            return v;
        }
    }
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}
