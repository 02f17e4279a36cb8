//! Tabular softmax policies and the CAPO step-size rules.

use crate::error::{Error, Result};
use crate::table::StateActionTable;

/// Default clip on `log(1 / pi)` for the CAPO step.
pub const DEFAULT_CLIP: f64 = 50.0;
/// Number of parameter updates between row re-centerings.
pub const RECENTER_EVERY: u64 = 10_000;

/// Sign of an advantage estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Neg,
    Zero,
    Pos,
}

impl Sign {
    /// Sign with a symmetric dead zone: `|x| < dead_zone` maps to `Zero`.
    pub fn of(x: f64, dead_zone: f64) -> Self {
        if x == 0.0 || x.abs() < dead_zone {
            Sign::Zero
        } else if x > 0.0 {
            Sign::Pos
        } else {
            Sign::Neg
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Sign::Neg => -1.0,
            Sign::Zero => 0.0,
            Sign::Pos => 1.0,
        }
    }
}

impl TryFrom<i8> for Sign {
    type Error = Error;

    fn try_from(v: i8) -> Result<Self> {
        match v {
            -1 => Ok(Sign::Neg),
            0 => Ok(Sign::Zero),
            1 => Ok(Sign::Pos),
            other => Err(Error::Contract(format!("advantage sign {other} not in {{-1, 0, 1}}"))),
        }
    }
}

/// Softmax policy `pi(a|s) = exp(theta(s,a)) / sum_a' exp(theta(s,a'))`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxTable {
    theta: StateActionTable,
    updates: u64,
}

impl SoftmaxTable {
    /// All-zero parameters, i.e. the uniform policy.
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self::from_theta(StateActionTable::zeros(n_states, n_actions))
    }

    pub fn from_theta(theta: StateActionTable) -> Self {
        Self { theta, updates: 0 }
    }

    pub fn theta(&self) -> &StateActionTable {
        &self.theta
    }

    pub fn n_states(&self) -> usize {
        self.theta.n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.theta.n_actions()
    }

    /// Action distribution at `s`, computed with the row maximum subtracted.
    /// Entries that underflow are floored at the smallest normal float so the
    /// output stays strictly positive.
    pub fn action_probs(&self, s: usize) -> Result<Vec<f64>> {
        softmax(self.theta.row(s))
    }

    /// `log pi(.|s)` via log-sum-exp; finite even where `pi` underflows.
    pub fn log_probs(&self, s: usize) -> Result<Vec<f64>> {
        log_softmax(self.theta.row(s))
    }

    /// The whole policy as a table of action distributions.
    pub fn policy(&self) -> Result<StateActionTable> {
        let mut out = StateActionTable::zeros(self.n_states(), self.n_actions());
        for s in 0..self.n_states() {
            out.row_mut(s).copy_from_slice(&self.action_probs(s)?);
        }
        Ok(out)
    }

    /// Adds `delta` to `theta(s,a)`. Every [`RECENTER_EVERY`] updates all rows
    /// are shifted so their maximum is zero, which leaves every probability
    /// unchanged and keeps the leading logits at full precision.
    pub fn add(&mut self, s: usize, a: usize, delta: f64) {
        self.theta.add(s, a, delta);
        self.updates += 1;
        if self.updates.is_multiple_of(RECENTER_EVERY) {
            self.recenter();
        }
    }

    pub fn recenter(&mut self) {
        for s in 0..self.n_states() {
            let row = self.theta.row_mut(s);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row.iter_mut().for_each(|x| *x -= max);
        }
    }

    pub fn set_row(&mut self, s: usize, values: &[f64]) {
        self.theta.row_mut(s).copy_from_slice(values);
    }
}

fn check_finite(row: &[f64]) -> Result<()> {
    match row.iter().find(|x| !x.is_finite()) {
        Some(x) => Err(Error::InvalidParameter(format!("non-finite softmax parameter {x}"))),
        None => Ok(()),
    }
}

/// Numerically stable softmax of one row.
pub fn softmax(row: &[f64]) -> Result<Vec<f64>> {
    check_finite(row)?;
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.iter().map(|e| (e / total).max(f64::MIN_POSITIVE)).collect())
}

pub fn log_softmax(row: &[f64]) -> Result<Vec<f64>> {
    check_finite(row)?;
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    Ok(row.iter().map(|x| x - lse).collect())
}

/// CAPO step size `min(log(1 / pi_sa), clip)`.
pub fn capo_alpha(pi_sa: f64, clip: f64) -> Result<f64> {
    if !(pi_sa > 0.0 && pi_sa < 1.0) {
        return Err(Error::Domain(format!("action probability {pi_sa} outside (0, 1)")));
    }
    if !(clip > 0.0) {
        return Err(Error::Domain(format!("clip {clip} must be positive")));
    }
    Ok((1.0 / pi_sa).ln().min(clip))
}

/// Same rule from `log pi_sa`, valid when `pi_sa` has under- or overflowed
/// to 0 or 1 in floating point.
pub(crate) fn capo_alpha_from_log(log_pi_sa: f64, clip: f64) -> f64 {
    (-log_pi_sa).max(0.0).min(clip)
}

/// Parameters and visit counts of on-policy CAPO.
#[derive(Debug, Clone, PartialEq)]
pub struct OnCapoConfig {
    beta: f64,
    zeta: f64,
    visit_counts: Vec<u64>,
    n_actions: usize,
}

impl OnCapoConfig {
    /// Requires `0 < beta <= 1/(|A|+1)` and `0 < zeta <= 1/|A|`.
    pub fn new(beta: f64, zeta: f64, n_states: usize, n_actions: usize) -> Result<Self> {
        let k = n_actions as f64;
        if !(beta > 0.0 && beta <= 1.0 / (k + 1.0)) {
            return Err(Error::Config(format!("beta {beta} outside (0, 1/(|A|+1)]")));
        }
        if !(zeta > 0.0 && zeta <= 1.0 / k) {
            return Err(Error::Config(format!("zeta {zeta} outside (0, 1/|A|]")));
        }
        Ok(Self {
            beta,
            zeta,
            visit_counts: vec![0; n_states * n_actions],
            n_actions,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn visits(&self, s: usize, a: usize) -> u64 {
        self.visit_counts[s * self.n_actions + a]
    }

    /// Counts one selection of `(s, a)`; callers do this before asking for α.
    pub fn record_visit(&mut self, s: usize, a: usize) {
        self.visit_counts[s * self.n_actions + a] += 1;
    }
}

/// On-policy CAPO step size.
///
/// - `A <= 0`: `log(1/pi)`
/// - `A > 0` and `pi < beta`: `log(beta/(1-beta) / pi)`
/// - otherwise: `zeta log((N+1)/N)`
pub fn oncapo_alpha(pi_sa: f64, adv_sign: Sign, cfg: &OnCapoConfig, s: usize, a: usize) -> Result<f64> {
    if !(pi_sa > 0.0 && pi_sa < 1.0) {
        return Err(Error::Domain(format!("action probability {pi_sa} outside (0, 1)")));
    }
    oncapo_alpha_from_log(pi_sa.ln(), adv_sign, cfg, s, a)
}

/// [`oncapo_alpha`] from `log pi_sa`, for probabilities that round to 0 or 1.
pub(crate) fn oncapo_alpha_from_log(
    log_pi_sa: f64,
    adv_sign: Sign,
    cfg: &OnCapoConfig,
    s: usize,
    a: usize,
) -> Result<f64> {
    match adv_sign {
        Sign::Neg | Sign::Zero => Ok((-log_pi_sa).max(0.0)),
        Sign::Pos if log_pi_sa < cfg.beta.ln() => Ok((cfg.beta / (1.0 - cfg.beta)).ln() - log_pi_sa),
        Sign::Pos => {
            let n = cfg.visits(s, a);
            if n == 0 {
                return Err(Error::Precondition(format!(
                    "visit count N({s},{a}) is zero; record the visit first"
                )));
            }
            let n = n as f64;
            Ok(cfg.zeta * ((n + 1.0) / n).ln())
        }
    }
}
