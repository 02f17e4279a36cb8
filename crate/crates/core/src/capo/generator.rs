use rand::Rng;

use crate::error::{Error, Result};
use crate::mdp::{sample_rollout, sample_start, TabularMdp};
use crate::policy::SoftmaxTable;
use crate::rng::sample_index;
use crate::table::StateActionTable;

/// Coordinates selected for one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateBatch {
    pub iteration: usize,
    pub pairs: Vec<(usize, usize)>,
    /// Apply pairs one at a time (behavior-driven batches may repeat pairs).
    pub sequential: bool,
}

/// Linear ε decay from `start` to `end` over `decay_iters`, then flat.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_iters: usize,
}

impl EpsSchedule {
    pub fn constant(eps: f64) -> Self {
        Self {
            start: eps,
            end: eps,
            decay_iters: 0,
        }
    }

    pub fn at(&self, m: usize) -> f64 {
        if m >= self.decay_iters {
            return self.end;
        }
        let frac = m as f64 / self.decay_iters as f64;
        self.start + (self.end - self.start) * frac
    }
}

/// ε-soft mixture `(1 - eps) pi + eps / |A|` of the current policy.
pub fn behavior_policy(table: &SoftmaxTable, eps: f64) -> Result<StateActionTable> {
    let mut b = table.policy()?;
    let uniform = eps / table.n_actions() as f64;
    for p in b.as_mut_slice() {
        *p = (1.0 - eps) * *p + uniform;
    }
    Ok(b)
}

/// Coordinate generators.
#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    /// Walks a fixed permutation of `S x A`, `block` pairs per iteration.
    Cyclic { order: Vec<(usize, usize)>, block: usize },
    /// One pair per iteration drawn from `d_gen` (row-major over `S x A`).
    Randomized { d_gen: Vec<f64>, n_actions: usize },
    /// Every pair, every iteration.
    Batch { n_states: usize, n_actions: usize },
    /// Pairs visited by an ε-soft rollout of the current policy.
    BehaviorEpsGreedy { schedule: EpsSchedule, rollout_len: usize },
}

impl Generator {
    /// Row-major cyclic order, one pair per iteration.
    pub fn cyclic(n_states: usize, n_actions: usize) -> Self {
        let order = (0..n_states)
            .flat_map(|s| (0..n_actions).map(move |a| (s, a)))
            .collect();
        Generator::Cyclic { order, block: 1 }
    }

    /// Cyclic generator over a caller-chosen permutation of `S x A`.
    pub fn cyclic_with_order(order: Vec<(usize, usize)>, n_states: usize, n_actions: usize, block: usize) -> Result<Self> {
        let mut seen = vec![false; n_states * n_actions];
        for &(s, a) in &order {
            if s >= n_states || a >= n_actions || std::mem::replace(&mut seen[s * n_actions + a], true) {
                return Err(Error::InvalidParameter(format!("cyclic order repeats or leaves range at ({s}, {a})")));
            }
        }
        if order.len() != n_states * n_actions {
            return Err(Error::InvalidParameter("cyclic order must cover every pair".into()));
        }
        if block == 0 || block > order.len() {
            return Err(Error::InvalidParameter(format!("cyclic block {block} outside 1..={}", order.len())));
        }
        Ok(Generator::Cyclic { order, block })
    }

    pub fn randomized(d_gen: &StateActionTable) -> Result<Self> {
        let total: f64 = d_gen.as_slice().iter().sum();
        if d_gen.as_slice().iter().any(|p| !(*p > 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(
                "d_gen must be a strictly positive distribution over S x A".into(),
            ));
        }
        Ok(Generator::Randomized {
            d_gen: d_gen.as_slice().to_vec(),
            n_actions: d_gen.n_actions(),
        })
    }

    pub fn randomized_uniform(n_states: usize, n_actions: usize) -> Self {
        let n = n_states * n_actions;
        Generator::Randomized {
            d_gen: vec![1.0 / n as f64; n],
            n_actions,
        }
    }

    pub fn batch(n_states: usize, n_actions: usize) -> Self {
        Generator::Batch { n_states, n_actions }
    }

    pub fn eps_greedy(schedule: EpsSchedule, rollout_len: usize) -> Result<Self> {
        if rollout_len == 0 {
            return Err(Error::InvalidParameter("rollout length must be positive".into()));
        }
        for eps in [schedule.start, schedule.end] {
            if !(0.0..=1.0).contains(&eps) {
                return Err(Error::InvalidParameter(format!("epsilon {eps} outside [0, 1]")));
            }
        }
        Ok(Generator::BehaviorEpsGreedy { schedule, rollout_len })
    }

    pub fn is_sequential(&self) -> bool {
        matches!(self, Generator::BehaviorEpsGreedy { .. })
    }

    /// Coordinates for iteration `m`.
    pub fn next_batch<R: Rng + ?Sized>(
        &self,
        m: usize,
        table: &SoftmaxTable,
        mdp: &TabularMdp,
        rng: &mut R,
    ) -> Result<CoordinateBatch> {
        let pairs = match self {
            Generator::Cyclic { order, block } => {
                (0..*block).map(|i| order[(m * block + i) % order.len()]).collect()
            }
            Generator::Randomized { d_gen, n_actions } => {
                let k = sample_index(d_gen, rng);
                vec![(k / n_actions, k % n_actions)]
            }
            Generator::Batch { n_states, n_actions } => (0..*n_states)
                .flat_map(|s| (0..*n_actions).map(move |a| (s, a)))
                .collect(),
            Generator::BehaviorEpsGreedy { schedule, rollout_len } => {
                let behavior = behavior_policy(table, schedule.at(m))?;
                let start = sample_start(mdp, rng);
                let rollout = sample_rollout(mdp, &behavior, start, *rollout_len, rng)?;
                rollout.transitions().iter().map(|t| (t.state, t.action)).collect()
            }
        };
        Ok(CoordinateBatch {
            iteration: m,
            pairs,
            sequential: self.is_sequential(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::make_random_mdp;
    use crate::rng::{stream_rng, Stream};

    #[test]
    fn cyclic_covers_each_pair_once_per_cycle() {
        let mdp = make_random_mdp(2, 2, 0.9, 0).unwrap();
        let t = SoftmaxTable::uniform(2, 2);
        let g = Generator::cyclic(2, 2);
        let mut rng = stream_rng(0, Stream::Coordinates);
        let mut seen: Vec<(usize, usize)> = (0..4)
            .map(|m| {
                let b = g.next_batch(m, &t, &mdp, &mut rng).unwrap();
                assert_eq!(b.pairs.len(), 1);
                b.pairs[0]
            })
            .collect();
        seen.sort();
        assert_eq!(seen, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
        assert_eq!(g.next_batch(4, &t, &mdp, &mut rng).unwrap().pairs, vec![(0, 0)]);
    }

    #[test]
    fn cyclic_order_validation() {
        assert!(Generator::cyclic_with_order(vec![(0, 1), (0, 0)], 1, 2, 1).is_ok());
        assert!(Generator::cyclic_with_order(vec![(0, 1), (0, 1)], 1, 2, 1).is_err());
        assert!(Generator::cyclic_with_order(vec![(0, 1)], 1, 2, 1).is_err());
        assert!(Generator::cyclic_with_order(vec![(0, 1), (0, 0)], 1, 2, 3).is_err());
    }

    #[test]
    fn batch_size() {
        let mdp = make_random_mdp(3, 2, 0.9, 0).unwrap();
        let t = SoftmaxTable::uniform(3, 2);
        let mut rng = stream_rng(0, Stream::Coordinates);
        let b = Generator::batch(3, 2).next_batch(0, &t, &mdp, &mut rng).unwrap();
        assert_eq!(b.pairs.len(), 6);
        assert!(!b.sequential);
    }

    #[test]
    fn randomized_requires_positive_support() {
        let mut d = StateActionTable::filled(2, 2, 0.25);
        assert!(Generator::randomized(&d).is_ok());
        d.set(0, 0, 0.0);
        d.set(0, 1, 0.5);
        assert!(Generator::randomized(&d).is_err());
    }

    #[test]
    fn eps_schedule_and_behavior_mixture() {
        let s = EpsSchedule { start: 0.3, end: 0.05, decay_iters: 100 };
        assert_eq!(s.at(0), 0.3);
        assert!((s.at(50) - 0.175).abs() < 1e-15);
        assert_eq!(s.at(1000), 0.05);
        let t = SoftmaxTable::from_theta(StateActionTable::from_rows(&[vec![0.0, 50.0]]).unwrap());
        let b = behavior_policy(&t, 0.1).unwrap();
        assert!((b.get(0, 0) - 0.05).abs() < 1e-12);
        assert!(Generator::eps_greedy(EpsSchedule::constant(1.5), 3).is_err());
        assert!(Generator::eps_greedy(EpsSchedule::constant(0.1), 0).is_err());
    }

    #[test]
    fn eps_greedy_batches_follow_rollouts() {
        let mdp = make_random_mdp(3, 2, 0.9, 2).unwrap();
        let t = SoftmaxTable::uniform(3, 2);
        let g = Generator::eps_greedy(EpsSchedule::constant(0.2), 7).unwrap();
        let mut rng = stream_rng(1, Stream::Coordinates);
        let b = g.next_batch(0, &t, &mdp, &mut rng).unwrap();
        assert_eq!(b.pairs.len(), 7);
        assert!(b.sequential);
    }
}
