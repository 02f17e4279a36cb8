use std::io;
use std::path::Path;

use rand::Rng;

use super::{behavior_policy, capo_update, CoordinateBatch, Generator, StepRule};
use crate::critic::{advantage_signs_from_q, fit_q, QEstimate, ReplayBuffer};
use crate::error::{Error, Result};
use crate::exact::{dot, optimal_values, values_and_advantages};
use crate::mdp::{sample_rollout, sample_start, TabularMdp};
use crate::policy::{Sign, SoftmaxTable};
use crate::table::{fmt_f64, StateActionTable};

/// Settings for the sample-based Retrace critic.
#[derive(Debug, Clone, PartialEq)]
pub struct RetraceSettings {
    pub rollouts_per_iter: usize,
    pub rollout_len: usize,
    pub capacity: usize,
    pub sweeps: usize,
    pub kappa: f64,
    pub lambda: f64,
    /// Uniform mixing weight of the data-collecting policy.
    pub eps: f64,
}

impl Default for RetraceSettings {
    fn default() -> Self {
        Self {
            rollouts_per_iter: 8,
            rollout_len: 20,
            capacity: 6400,
            sweeps: 10,
            kappa: 0.1,
            lambda: 1.0,
            eps: 0.1,
        }
    }
}

/// Source of the advantage signs fed to the update.
#[derive(Debug, Clone, PartialEq)]
pub enum CriticMode {
    Exact,
    Retrace(RetraceSettings),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub iters: usize,
    /// Distribution for `V(mu)` and the gap; the MDP's own start distribution if `None`.
    pub start_dist: Option<Vec<f64>>,
    /// Stop once the gap falls below this value.
    pub stop_below_gap: Option<f64>,
    /// Exact advantages below this magnitude count as zero.
    pub exact_dead_zone: f64,
    /// Value-iteration tolerance for `V*`.
    pub vstar_tol: f64,
}

impl TrainConfig {
    pub fn new(iters: usize) -> Self {
        Self {
            iters,
            start_dist: None,
            stop_below_gap: None,
            exact_dead_zone: 1e-12,
            vstar_tol: 1e-10,
        }
    }

    pub fn with_start_dist(mut self, mu: Vec<f64>) -> Self {
        self.start_dist = Some(mu);
        self
    }

    pub fn stop_below(mut self, gap: f64) -> Self {
        self.stop_below_gap = Some(gap);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRecord {
    pub m: usize,
    pub v_mu: f64,
    pub gap: f64,
    pub v: Vec<f64>,
}

/// Exact values of every iterate, starting with the initial policy.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    pub records: Vec<HistoryRecord>,
    pub v_star_mu: f64,
    pub final_policy: SoftmaxTable,
}

impl History {
    pub fn gaps(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.gap)
    }

    pub fn last(&self) -> &HistoryRecord {
        self.records.last().expect("history always holds the initial policy")
    }

    /// Columns `m,v_mu,gap,v_s0..`.
    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let n = self.records.first().map_or(0, |r| r.v.len());
        let mut header = vec!["m".to_string(), "v_mu".into(), "gap".into()];
        header.extend((0..n).map(|s| format!("v_s{s}")));
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.m.to_string(), fmt_f64(r.v_mu), fmt_f64(r.gap)];
            row.extend(r.v.iter().map(|x| fmt_f64(*x)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

fn exact_signs(adv: &StateActionTable, pairs: &[(usize, usize)], dead_zone: f64) -> Vec<Sign> {
    pairs.iter().map(|&(s, a)| Sign::of(adv.get(s, a), dead_zone)).collect()
}

/// Runs CAPO from `init` and logs exact values after every iteration.
///
/// Sequential (behavior-driven) batches re-evaluate the advantage before each
/// pair under the exact critic; the Retrace critic is refit once per iteration.
pub fn train<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    init: SoftmaxTable,
    generator: &Generator,
    rule: &mut StepRule,
    critic: &CriticMode,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<History> {
    if init.n_states() != mdp.n_states() || init.n_actions() != mdp.n_actions() {
        return Err(Error::InvalidPolicy("initial table does not match the MDP".into()));
    }
    let mu = cfg.start_dist.clone().unwrap_or_else(|| mdp.start_dist().to_vec());
    if mu.len() != mdp.n_states() {
        return Err(Error::Precondition("start distribution has wrong length".into()));
    }
    let v_star_mu = dot(&optimal_values(mdp, cfg.vstar_tol)?.v_star, &mu);

    let mut retrace = match critic {
        CriticMode::Exact => None,
        CriticMode::Retrace(rs) => Some((
            rs,
            ReplayBuffer::new(rs.capacity)?,
            QEstimate::new(mdp.n_states(), mdp.n_actions(), rs.kappa, rs.lambda)?,
        )),
    };

    let mut table = init;
    let (v, _, mut adv) = values_and_advantages(mdp, &table.policy()?)?;
    let record = |m: usize, v: Vec<f64>| {
        let v_mu = dot(&v, &mu);
        HistoryRecord {
            m,
            v_mu,
            gap: v_star_mu - v_mu,
            v,
        }
    };
    let mut records = Vec::with_capacity(cfg.iters + 1);
    records.push(record(0, v));

    for m in 0..cfg.iters {
        if cfg.stop_below_gap.is_some_and(|g| records.last().unwrap().gap < g) {
            break;
        }
        let batch = generator.next_batch(m, &table, mdp, rng)?;
        match &mut retrace {
            None if batch.sequential => {
                for (i, &pair) in batch.pairs.iter().enumerate() {
                    if i > 0 {
                        adv = values_and_advantages(mdp, &table.policy()?)?.2;
                    }
                    let one = CoordinateBatch {
                        iteration: m,
                        pairs: vec![pair],
                        sequential: true,
                    };
                    let signs = exact_signs(&adv, &one.pairs, cfg.exact_dead_zone);
                    capo_update(&mut table, &one, &signs, rule)?;
                }
            }
            None => {
                let signs = exact_signs(&adv, &batch.pairs, cfg.exact_dead_zone);
                capo_update(&mut table, &batch, &signs, rule)?;
            }
            Some((rs, buffer, q)) => {
                let pi = table.policy()?;
                let behavior = behavior_policy(&table, rs.eps)?;
                for _ in 0..rs.rollouts_per_iter {
                    let start = sample_start(mdp, rng);
                    buffer.push(sample_rollout(mdp, &behavior, start, rs.rollout_len, rng)?);
                }
                fit_q(buffer, q, &pi, mdp.gamma(), mdp.terminal_mask(), rs.sweeps)?;
                let all = advantage_signs_from_q(&q.q, &pi);
                let signs: Vec<Sign> = batch
                    .pairs
                    .iter()
                    .map(|&(s, a)| all[s * mdp.n_actions() + a])
                    .collect();
                capo_update(&mut table, &batch, &signs, rule)?;
            }
        }
        let (v, _, next_adv) = values_and_advantages(mdp, &table.policy()?)?;
        adv = next_adv;
        records.push(record(m + 1, v));
    }
    Ok(History {
        records,
        v_star_mu,
        final_policy: table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{make_chain, make_random_mdp};
    use crate::rng::{stream_rng, Stream};

    #[test]
    fn zero_iterations_logs_initial_policy() {
        let mdp = make_random_mdp(3, 2, 0.9, 1).unwrap();
        let mut rng = stream_rng(0, Stream::Coordinates);
        let h = train(
            &mdp,
            SoftmaxTable::uniform(3, 2),
            &Generator::cyclic(3, 2),
            &mut StepRule::capo(),
            &CriticMode::Exact,
            &TrainConfig::new(0),
            &mut rng,
        )
        .unwrap();
        assert_eq!(h.records.len(), 1);
        assert_eq!(h.records[0].m, 0);
        assert!(h.records[0].gap > 0.0);
    }

    #[test]
    fn cyclic_exact_is_monotone_and_solves_chain() {
        let mdp = make_chain(10, 0.99, 0.1, 100.0).unwrap();
        let mut rng = stream_rng(0, Stream::Coordinates);
        let h = train(
            &mdp,
            SoftmaxTable::uniform(11, 2),
            &Generator::cyclic(11, 2),
            &mut StepRule::capo(),
            &CriticMode::Exact,
            &TrainConfig::new(1000),
            &mut rng,
        )
        .unwrap();
        assert_eq!(h.records.len(), 1001);
        for w in h.records.windows(2) {
            for (a, b) in w[0].v.iter().zip(&w[1].v) {
                assert!(*b >= a - 1e-10);
            }
        }
        assert!(h.last().gap < 0.01 * h.v_star_mu);
    }

    #[test]
    fn early_stop_and_csv_schema() {
        let mdp = make_random_mdp(2, 2, 0.9, 4).unwrap();
        let mut rng = stream_rng(0, Stream::Coordinates);
        let h = train(
            &mdp,
            SoftmaxTable::uniform(2, 2),
            &Generator::batch(2, 2),
            &mut StepRule::ExactLog,
            &CriticMode::Exact,
            &TrainConfig::new(100_000).stop_below(1e-3),
            &mut rng,
        )
        .unwrap();
        assert!(h.records.len() < 100_001);
        assert!(h.last().gap < 1e-3);
        let mut out = Vec::new();
        h.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("m,v_mu,gap,v_s0,v_s1\n"));
        assert_eq!(text.lines().count(), h.records.len() + 1);
    }

    #[test]
    fn retrace_critic_improves_random_mdp() {
        let mdp = make_random_mdp(3, 2, 0.9, 8).unwrap();
        let mut rng = stream_rng(2, Stream::Rollouts);
        let h = train(
            &mdp,
            SoftmaxTable::uniform(3, 2),
            &Generator::cyclic(3, 2),
            &mut StepRule::capo(),
            &CriticMode::Retrace(RetraceSettings::default()),
            &TrainConfig::new(300),
            &mut rng,
        )
        .unwrap();
        assert!(h.last().gap < 0.5 * h.records[0].gap);
    }
}
